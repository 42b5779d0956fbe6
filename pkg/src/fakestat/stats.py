"""Monte Carlo estimators and theoretical targets for fake stationarity."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import integrate, special

from .kernel import Constant, Fractional, ResolventTable, TimeGrid
from .sde import ConstantSigma, PathEnsemble, TanhDegenerate, Trinomial

__all__ = [
    "FakeTargets",
    "MomentReport",
    "c_for_v0",
    "confluence",
    "empirical_autocov",
    "fake_regime_targets",
    "longrun_autocov",
    "moments",
]


@dataclass(frozen=True)
class FakeTargets:
    v0: float
    sigma_bar0_sq: float
    x_inf: float | None = None


def _sigma2_at_center(diffusion) -> float:
    if isinstance(diffusion, ConstantSigma):
        return diffusion.sigma**2
    if isinstance(diffusion, Trinomial):
        return diffusion.kappa0
    return 0.0


def fake_regime_targets(diffusion, c: float) -> FakeTargets:
    """Variance v0 and E sigma^2 level that the stabilized model keeps constant.

    For the trinomial coefficient v0 = c sigma^2(x_inf) / (1 - c kappa2) and
    sigma_bar0^2 = sigma^2(x_inf) / (1 - c kappa2).
    """
    x_inf = getattr(diffusion, "x_inf", None)
    if isinstance(diffusion, TanhDegenerate):
        return FakeTargets(0.0, 0.0, x_inf)
    kappa2 = diffusion.kappa2 if isinstance(diffusion, Trinomial) else 0.0
    if c * kappa2 >= 1:
        raise ValueError(f"c * kappa2 = {c * kappa2:g} must be < 1")
    s2 = _sigma2_at_center(diffusion) / (1 - c * kappa2)
    return FakeTargets(c * s2, s2, x_inf)


def c_for_v0(diffusion, v0: float) -> float:
    """Variance ratio c that makes ``v0`` the fake-stationary variance."""
    kappa2 = diffusion.kappa2 if isinstance(diffusion, Trinomial) else 0.0
    s2 = _sigma2_at_center(diffusion)
    if s2 <= 0:
        raise ValueError("sigma(x_inf) must be positive to target a variance")
    return v0 / (s2 + v0 * kappa2)


@dataclass(frozen=True)
class MomentReport:
    grid: TimeGrid
    mean: np.ndarray
    stddev: np.ndarray
    e_sigma2: np.ndarray
    stderr_mean: np.ndarray
    stderr_var: np.ndarray
    stderr_e_sigma2: np.ndarray
    targets: FakeTargets | None
    stderr_var_robust: np.ndarray | None = None

    @property
    def stderr_stddev(self) -> np.ndarray:
        # delta method on s = sqrt(var)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.stddev > 0, self.stderr_var / (2 * self.stddev), 0.0)


def moments(ens: PathEnsemble) -> MomentReport:
    """Per-time sample moments and their standard errors.

    ``stderr_var`` is the normal approximation s^2 sqrt(2 / (M - 1));
    ``stderr_var_robust`` uses the sample fourth central moment and stays valid
    for heavy-tailed marginals.
    """
    X = ens.values
    M = X.shape[0]
    if M < 2:
        raise ValueError("moments need at least two paths")
    cfg = ens.config
    mean = X.mean(axis=0)
    sd = X.std(axis=0, ddof=1)
    s2 = np.clip(cfg.diffusion.sigma2(X), 0.0, None)
    dev2 = (X - mean) ** 2
    m4 = np.mean(dev2 * dev2, axis=0)
    var_robust = np.clip(m4 - sd**4 * (M - 3) / (M - 1), 0.0, None) / M
    try:
        targets = fake_regime_targets(cfg.diffusion, cfg.c)
        targets = replace(targets, x_inf=cfg.x_inf)
    except ValueError:
        targets = None
    return MomentReport(
        grid=cfg.grid,
        mean=mean,
        stddev=sd,
        e_sigma2=s2.mean(axis=0),
        stderr_mean=sd / math.sqrt(M),
        stderr_var=sd**2 * math.sqrt(2.0 / (M - 1)),
        stderr_e_sigma2=s2.std(axis=0, ddof=1) / math.sqrt(M),
        targets=targets,
        stderr_var_robust=np.sqrt(var_robust),
    )


def _lag_product_integral(table: ResolventTable, s: float) -> float:
    """int_0^inf f(s + u) f(u) du."""
    spec = table.kernel
    if isinstance(spec, Constant):
        rate = table.lam * spec.level
        return 0.5 * rate * math.exp(-rate * s)
    f = table.density
    a = spec.alpha
    p = a - 1.0
    lead = table.lam * getattr(spec, "b", 1.0) / math.gamma(a)
    if s == 0.0:
        near_fun = lambda u: lead**2 if u <= 0 else float((u ** (-p) * f(u)) ** 2)
        wvar = (2 * p, 0.0)
    else:
        near_fun = lambda u: float(f(s) * lead) if u <= 0 else float(f(s + u) * u ** (-p) * f(u))
        wvar = (p, 0.0)
    # f decays on the time scale lam^(-1/alpha)
    scale = table.lam ** (-1.0 / a)
    near_end = scale
    near, _ = integrate.quad(near_fun, 0.0, near_end, weight="alg", wvar=wvar, limit=200)
    horizon = 400.0 * scale if isinstance(spec, Fractional) else near_end + 60.0 / spec.rho
    edges = np.geomspace(near_end, horizon, 14)
    far = sum(
        integrate.quad(lambda u: float(f(s + u) * f(u)), lo, hi, limit=200)[0] for lo, hi in zip(edges[:-1], edges[1:])
    )
    tail = 0.0
    if isinstance(spec, Fractional):
        # f(t) ~ a lam^-1 t^(-a-1) / Gamma(1-a) for large t
        amp = a / table.lam * float(special.rgamma(1 - a))
        tail = amp**2 * horizon ** (-2 * a - 1) / (2 * a + 1)
    return near + far + tail


def longrun_autocov(table: ResolventTable, v0: float, phi_inf: float = 1.0, s: float = 0.0, var_x0: float | None = None) -> float:
    """Limit autocovariance at lag s of the fake-stationary solution.

    a^2 phi_inf^2 Var(X0) + (1 - a^2 phi_inf^2) v0 / ||f||^2 int_0^inf f(s+u) f(u) du.
    """
    if s < 0:
        raise ValueError("lag must be non-negative")
    var_x0 = v0 if var_x0 is None else var_x0
    w = table.tail_a**2 * phi_inf**2
    return w * var_x0 + (1 - w) * v0 / table.f_l2_sq * _lag_product_integral(table, float(s))


def empirical_autocov(ens: PathEnsemble, t_base: float, lags) -> tuple[np.ndarray, np.ndarray]:
    """Sample covariance of (X_t, X_{t+s}) across paths, with standard errors."""
    grid = ens.config.grid
    X = ens.values
    M = X.shape[0]
    k0 = int(round(t_base / grid.delta))
    cov, se = [], []
    for s in np.atleast_1d(lags):
        k1 = k0 + int(round(s / grid.delta))
        if k1 > grid.n:
            raise ValueError(f"t_base + lag {s} exceeds the horizon")
        x = X[:, k0] - X[:, k0].mean()
        y = X[:, k1] - X[:, k1].mean()
        prod = x * y
        cov.append(prod.sum() / (M - 1))
        se.append(prod.std(ddof=1) / math.sqrt(M))
    return np.array(cov), np.array(se)


def _config_key(cfg):
    return replace(cfg, initial=None)


def confluence(ens_a: PathEnsemble, ens_b: PathEnsemble) -> np.ndarray:
    """Per-time L2 gap sqrt(mean_m (X^a_m(t_k) - X^b_m(t_k))^2) of coupled ensembles."""
    if _config_key(ens_a.config) != _config_key(ens_b.config):
        raise ValueError("ensembles must share every setting except the initial law")
    diff = ens_a.values - ens_b.values
    return np.sqrt(np.mean(diff * diff, axis=0))
