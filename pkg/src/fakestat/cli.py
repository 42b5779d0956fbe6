"""Command line front end.

Configs are flat ``key = value`` files; ``#`` starts a comment. Every
subcommand reads one config, applies ``--set`` overrides and writes CSV files
into ``--out``.

Exit codes: 0 success, 1 configuration or I/O error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .kernel import Constant, Fractional, Gamma, TimeGrid, build_resolvent, resolvent_residual
from .sde import (
    ConstantSigma,
    Normal,
    Point,
    SimConfig,
    TanhDegenerate,
    Trinomial,
    Uniform,
    assemble_covariance,
    ldl_factorize,
    simulate,
)
from .stabilizer import PrecisionError, build_stabilizer, stabilizer_series
from .stats import c_for_v0, confluence, empirical_autocov, fake_regime_targets, longrun_autocov, moments

COMMANDS = ("resolvent", "stabilizer", "simulate", "verify", "confluence", "autocov")
FLOAT_FMT = "%.12g"


class ConfigError(ValueError):
    """Invalid, unknown or missing configuration entries."""


def _floats(text: str) -> tuple[float, ...]:
    text = text.strip()
    return tuple(float(v) for v in text.split(",")) if text else ()


def _fmt_floats(values) -> str:
    return ",".join(repr(float(v)) for v in values)


# key -> (parser, formatter)
SCHEMA = {
    "kernel.type": (str.lower, str),
    "kernel.alpha": (float, repr),
    "kernel.rho": (float, repr),
    "kernel.b": (float, repr),
    "kernel.level": (float, repr),
    "lambda": (float, repr),
    "mu0": (float, repr),
    "c": (float, repr),
    "v0": (float, repr),
    "diffusion.type": (str.lower, str),
    "diffusion.sigma": (float, repr),
    "diffusion.kappa0": (float, repr),
    "diffusion.kappa1": (float, repr),
    "diffusion.kappa2": (float, repr),
    "init.type": (str.lower, str),
    "init.params": (_floats, _fmt_floats),
    "init2.type": (str.lower, str),
    "init2.params": (_floats, _fmt_floats),
    "T": (float, repr),
    "n": (int, str),
    "M": (int, str),
    "seed": (int, str),
    "stabilizer.rule": (str.lower, str),
    "paths": (int, str),
    "autocov.t": (float, repr),
    "autocov.lags": (_floats, _fmt_floats),
}
# Hurst exponent H enters as alpha = H + 1/2
ALIASES = {"kernel.H": ("kernel.alpha", lambda h: float(h) + 0.5)}


@dataclass
class RunSettings:
    values: dict = field(default_factory=dict)

    def get(self, key, default=None):
        return self.values.get(key, default)

    def require(self, key):
        if key not in self.values:
            raise ConfigError(f"missing required key {key!r}")
        return self.values[key]

    def set(self, key: str, raw: str) -> None:
        key = key.strip()
        raw = raw.strip()
        if key in ALIASES:
            target, conv = ALIASES[key]
            try:
                self.values[target] = conv(raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {raw!r}") from exc
            return
        if key not in SCHEMA:
            raise ConfigError(f"unknown key {key!r}")
        try:
            self.values[key] = SCHEMA[key][0](raw)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {raw!r}") from exc

    def dumps(self) -> str:
        return "".join(f"{k} = {SCHEMA[k][1](v)}\n" for k, v in sorted(self.values.items()))


def parse_config(text: str, overrides=()) -> RunSettings:
    """Parse flat ``key = value`` text; later entries and overrides win."""
    settings = RunSettings()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, raw = line.split("=", 1)
        settings.set(key, raw)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        settings.set(*item.split("=", 1))
    return settings


def load_config(path, overrides=()) -> RunSettings:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    return parse_config(text, overrides)


# -- model construction -------------------------------------------------------


def make_kernel(s: RunSettings):
    kind = s.require("kernel.type")
    if kind == "constant":
        return Constant(s.get("kernel.level", 1.0))
    if kind == "fractional":
        return Fractional(s.require("kernel.alpha"))
    if kind == "gamma":
        return Gamma(s.require("kernel.alpha"), s.require("kernel.rho"), s.get("kernel.b", 1.0))
    raise ConfigError(f"kernel.type must be constant, fractional or gamma, got {kind!r}")


def make_diffusion(s: RunSettings):
    kind = s.get("diffusion.type", "constant")
    if kind == "constant":
        return ConstantSigma(s.get("diffusion.sigma", 1.0))
    if kind == "trinomial":
        return Trinomial(s.require("diffusion.kappa0"), s.get("diffusion.kappa1", 0.0), s.get("diffusion.kappa2", 0.0))
    if kind == "tanh":
        return TanhDegenerate()
    raise ConfigError(f"diffusion.type must be constant, trinomial or tanh, got {kind!r}")


def resolve_c(s: RunSettings, diffusion) -> float:
    if "c" in s.values and "v0" in s.values:
        raise ConfigError("give either c or v0, not both")
    if "v0" in s.values:
        return c_for_v0(diffusion, s.values["v0"])
    return s.require("c")


def make_initial(kind: str, params, x_inf: float, v0: float):
    """Initial law; ``fake`` is Normal(x_inf, v0), the fake-stationary start."""
    params = tuple(params)
    if kind == "point":
        return Point(params[0] if params else x_inf)
    if kind == "normal":
        if len(params) not in (0, 2):
            raise ConfigError("normal initial law takes params mean,var")
        return Normal(*params) if params else Normal(x_inf, v0)
    if kind == "uniform":
        if len(params) != 2:
            raise ConfigError("uniform initial law takes params lo,hi")
        return Uniform(*params)
    if kind == "fake":
        return Normal(x_inf, v0) if v0 > 0 else Point(x_inf)
    raise ConfigError(f"initial law must be point, normal, uniform or fake, got {kind!r}")


@dataclass
class Model:
    settings: RunSettings
    kernel: object
    lam: float
    grid: TimeGrid
    diffusion: object
    mu0: float

    @property
    def c(self) -> float:
        # only the stabilizer and the simulations need c
        return resolve_c(self.settings, self.diffusion)

    @property
    def x_inf(self) -> float:
        return self.mu0 / self.lam

    def v0(self) -> float:
        try:
            return fake_regime_targets(self.diffusion, self.c).v0
        except ValueError:
            return 0.0

    def sim_config(self, which: str = "init") -> SimConfig:
        s = self.settings
        default = "fake" if which == "init" else "point"
        initial = make_initial(s.get(f"{which}.type", default), s.get(f"{which}.params", ()), self.x_inf, self.v0())
        return SimConfig(
            kernel=self.kernel,
            lam=self.lam,
            mu0=self.mu0,
            c=self.c,
            diffusion=self.diffusion,
            initial=initial,
            grid=self.grid,
            M=s.get("M", 1000),
            seed=s.get("seed", 0),
        )


def build_model(s: RunSettings) -> Model:
    try:
        diffusion = make_diffusion(s)
        return Model(
            settings=s,
            kernel=make_kernel(s),
            lam=s.require("lambda"),
            grid=TimeGrid(s.require("T"), s.require("n")),
            diffusion=diffusion,
            mu0=s.get("mu0", 0.0),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


# -- output --------------------------------------------------------------------


def write_csv(path: Path, columns: dict) -> None:
    data = np.column_stack([np.asarray(v, dtype=float) for v in columns.values()])
    np.savetxt(path, data, delimiter=",", fmt=FLOAT_FMT, header=",".join(columns), comments="")


def _series_or_nan(alpha, lam, c, t):
    out = np.full(t.size, np.nan)
    for i, ti in enumerate(t):
        try:
            out[i] = stabilizer_series(alpha, lam, c, ti)
        except PrecisionError:
            # later points only lose more digits
            break
    return out


# -- subcommands ------------------------------------------------------------------


def cmd_resolvent(model: Model, out: Path, args) -> int:
    table = build_resolvent(model.kernel, model.lam, model.grid)
    t = model.grid.points
    f = table.f_values.copy()
    if table.power < 0:
        f[0] = math.inf
    write_csv(out / "resolvent.csv", {"t": t, "R": table.r_values, "f": f})
    print(f"resolvent: residual={resolvent_residual(table):.3e} f_l2_sq={table.f_l2_sq:.12g} tail_a={table.tail_a:.12g}")
    return 0


def cmd_stabilizer(model: Model, out: Path, args) -> int:
    table = build_resolvent(model.kernel, model.lam, model.grid)
    stab = build_stabilizer(table, model.c, rule=model.settings.get("stabilizer.rule", "cell"))
    t = stab.nodes[1:]
    if isinstance(model.kernel, Fractional):
        series = _series_or_nan(model.kernel.alpha, model.lam, model.c, t)
    else:
        series = np.full(t.size, np.nan)
    write_csv(
        out / "stabilizer.csv",
        {
            "t": t,
            "sigma2_series": series,
            "sigma2_discrete": stab.sampled[1:],
            "asymptote": np.full(t.size, stab.asymptote),
        },
    )
    print(f"stabilizer: asymptote={stab.asymptote:.12g} last={stab.sampled[-1]:.12g}")
    return 0


def _run(model: Model, args, which: str = "init"):
    table = build_resolvent(model.kernel, model.lam, model.grid)
    stab = build_stabilizer(table, model.c)
    ens = simulate(model.sim_config(which), table, stab, threads=args.threads)
    return table, stab, ens


def _write_moments(out: Path, rep) -> None:
    write_csv(
        out / "moments.csv",
        {
            "t": rep.grid.points,
            "mean": rep.mean,
            "stddev": rep.stddev,
            "E_sigma2": rep.e_sigma2,
            "stderr_mean": rep.stderr_mean,
            "stderr_stddev": rep.stderr_stddev,
            "stderr_var": rep.stderr_var,
            "stderr_E_sigma2": rep.stderr_e_sigma2,
        },
    )


def cmd_simulate(model: Model, out: Path, args) -> int:
    table, stab, ens = _run(model, args)
    rep = moments(ens)
    _write_moments(out, rep)
    n_paths = min(model.settings.get("paths", 0), ens.values.shape[0])
    if n_paths > 0:
        cols = {"t": model.grid.points}
        cols.update({f"path_{i}": ens.values[i] for i in range(n_paths)})
        write_csv(out / "paths.csv", cols)
    print(f"simulate: M={ens.values.shape[0]} n={model.grid.n} clamped_radicands={ens.clamped_radicands}")
    return 0


def verify_checks(model: Model, table, ens, rep) -> list[tuple[str, bool, str]]:
    """Pass/fail list of the invariants that apply to this configuration."""
    cfg = ens.config
    init = cfg.initial
    band = 4.0
    checks = []
    mean_bound = abs(init.mean - cfg.x_inf) * np.abs(table.r_values) + band * rep.stderr_mean + 1e-12
    dev = np.abs(rep.mean - cfg.x_inf)
    checks.append(("mean_decay", bool(np.all(dev <= mean_bound)), f"max excess {np.max(dev - mean_bound):.3e}"))

    diffusion = cfg.diffusion
    if isinstance(diffusion, ConstantSigma):
        target = init.var * table.r_values**2 + cfg.c * diffusion.sigma**2 * (1 - table.r_values**2)
        z = np.abs(rep.stddev**2 - target) / np.maximum(rep.stderr_var, 1e-300)
        ok = np.all(np.abs(rep.stddev**2 - target) <= band * rep.stderr_var + 1e-12)
        checks.append(("gaussian_variance", bool(ok), f"max |z| {np.max(z[1:]):.2f}"))
    elif isinstance(diffusion, Trinomial):
        try:
            tg = fake_regime_targets(diffusion, cfg.c)
        except ValueError as exc:
            checks.append(("fake_targets", False, str(exc)))
            return checks
        fake_start = math.isclose(init.mean, cfg.x_inf) and math.isclose(init.var, tg.v0, rel_tol=1e-9)
        if fake_start:
            se_var = rep.stderr_var_robust
            z = np.abs(rep.stddev**2 - tg.v0) / se_var
            checks.append(("flat_variance", bool(np.all(z <= band)), f"max |z| {np.max(z):.2f}"))
            z = np.abs(rep.e_sigma2 - tg.sigma_bar0_sq) / rep.stderr_e_sigma2
            checks.append(("flat_e_sigma2", bool(np.all(z <= band)), f"max |z| {np.max(z):.2f}"))
    return checks


def cmd_verify(model: Model, out: Path, args) -> int:
    table, stab, ens = _run(model, args)
    rep = moments(ens)
    _write_moments(out, rep)
    checks = verify_checks(model, table, ens, rep)
    for name, ok, detail in checks:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return 0 if all(ok for _, ok, _ in checks) else 2


def cmd_confluence(model: Model, out: Path, args) -> int:
    table = build_resolvent(model.kernel, model.lam, model.grid)
    stab = build_stabilizer(table, model.c)
    factors = ldl_factorize(assemble_covariance(table))
    ens_a = simulate(model.sim_config("init"), table, stab, threads=args.threads, factors=factors)
    ens_b = simulate(model.sim_config("init2"), table, stab, threads=args.threads, factors=factors)
    gap = confluence(ens_a, ens_b)
    write_csv(out / "confluence.csv", {"t": model.grid.points, "gap": gap})
    ratio = gap[-1] / gap[0] if gap[0] > 0 else float("nan")
    print(f"confluence: gap(0)={gap[0]:.6g} gap(T)={gap[-1]:.6g} ratio={ratio:.4g}")
    return 0


def cmd_autocov(model: Model, out: Path, args) -> int:
    s = model.settings
    lags = np.asarray(s.get("autocov.lags", (0.0, 0.25, 0.5, 1.0)), dtype=float)
    t_base = s.get("autocov.t", model.grid.T - float(lags.max()))
    table, stab, ens = _run(model, args)
    emp, se = empirical_autocov(ens, t_base, lags)
    v0 = model.v0()
    theory = [longrun_autocov(table, v0, 1.0, float(lag), var_x0=ens.config.initial.var) for lag in lags]
    write_csv(out / "autocov.csv", {"lag": lags, "empirical": emp, "stderr": se, "theory": theory})
    print(f"autocov: t_base={t_base:g} max |z|={np.max(np.abs(emp - theory) / se):.2f}")
    return 0


HANDLERS = {
    "resolvent": cmd_resolvent,
    "stabilizer": cmd_stabilizer,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
    "confluence": cmd_confluence,
    "autocov": cmd_autocov,
}


class _Parser(argparse.ArgumentParser):
    # usage errors are configuration errors
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fakestat", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="flat key = value config file")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config entry")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--seed", type=int, default=None)
    return parser


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        overrides = list(args.set)
        if args.seed is not None:
            overrides.append(f"seed={args.seed}")
        settings = load_config(args.config, overrides)
        model = build_model(settings)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return HANDLERS[args.command](model, out, args)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (ArithmeticError, FloatingPointError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
