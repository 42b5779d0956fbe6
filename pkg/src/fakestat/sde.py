"""Semi-integrated Euler scheme for the stabilized scaled Volterra equation.

On the grid t_k = k Delta the scheme reads

    X_k = x_inf + (X_0 - x_inf) R(t_k)
          + (1/lam) sum_{l=1}^{k} stab(t_l) sigma(X_{l-1}) I_k^l,

with I_k^l = int_{t_{l-1}}^{t_l} f(t_k - s) dW_s. For each l the vector
(dW_l, I_l^l, ..., I_n^l) is centred Gaussian, and because f only depends on
t_k - s its covariance is the leading (n - l + 2) block of one master matrix

    C = Delta [[1, m^T], [m, Omega]],
    m_i = int_0^1 f(Delta (i + v)) dv,
    Omega_ij = int_0^1 f(Delta (i + v)) f(Delta (j + v)) dv.

A single LDL^T factorization of C therefore serves every step.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Union

import numpy as np

from .kernel import KernelSpec, ResolventTable, TimeGrid, unit_cell_rule
from .stabilizer import StabilizerFunction

__all__ = [
    "BLOCK_PATHS",
    "ConstantSigma",
    "GaussianIncrementFactors",
    "IndefiniteError",
    "Normal",
    "PathEnsemble",
    "Point",
    "SimConfig",
    "SimulationError",
    "TanhDegenerate",
    "Trinomial",
    "Uniform",
    "assemble_covariance",
    "ldl_factorize",
    "simulate",
]

# Paths are generated in blocks of this size; each block has its own RNG
# stream per step, so results do not depend on the number of threads.
BLOCK_PATHS = 4096
NEG_PIVOT_TOL = 1e-12


class IndefiniteError(ArithmeticError):
    """Raised when a covariance matrix has a clearly negative pivot."""


class SimulationError(ArithmeticError):
    """Raised when non-finite values appear during simulation."""


@dataclass(frozen=True)
class ConstantSigma:
    sigma: float

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")

    def sigma2(self, x: np.ndarray) -> np.ndarray:
        return np.full_like(x, self.sigma**2)


@dataclass(frozen=True)
class Trinomial:
    """sigma(x)^2 = kappa0 + kappa1 (x - x_inf) + kappa2 (x - x_inf)^2."""

    kappa0: float
    kappa1: float
    kappa2: float
    x_inf: float | None = None

    def __post_init__(self):
        if self.kappa0 < 0 or self.kappa2 < 0:
            raise ValueError("kappa0 and kappa2 must be non-negative")
        if self.kappa1**2 > 4 * self.kappa2 * self.kappa0 * (1 + 1e-12):
            raise ValueError("kappa1^2 <= 4 kappa0 kappa2 is required for a non-negative radicand")

    def sigma2(self, x: np.ndarray) -> np.ndarray:
        y = x - self.x_inf
        return self.kappa0 + self.kappa1 * y + self.kappa2 * y * y


@dataclass(frozen=True)
class TanhDegenerate:
    """sigma(x)^2 = tanh(x - x_inf) / 2, clamped to 0 below x_inf."""

    x_inf: float | None = None

    def sigma2(self, x: np.ndarray) -> np.ndarray:
        return 0.5 * np.tanh(x - self.x_inf)


DiffusionSpec = Union[ConstantSigma, Trinomial, TanhDegenerate]


@dataclass(frozen=True)
class Point:
    x0: float

    mean = property(lambda self: self.x0)
    var = property(lambda self: 0.0)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return np.full(size, float(self.x0))


@dataclass(frozen=True)
class Normal:
    mean: float
    var: float

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.mean + math.sqrt(self.var) * rng.standard_normal(size)


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    mean = property(lambda self: 0.5 * (self.lo + self.hi))
    var = property(lambda self: (self.hi - self.lo) ** 2 / 12.0)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size)


InitialLaw = Union[Point, Normal, Uniform]


@dataclass(frozen=True)
class SimConfig:
    kernel: KernelSpec
    lam: float
    mu0: float
    c: float
    diffusion: DiffusionSpec
    initial: InitialLaw
    grid: TimeGrid
    M: int
    seed: int = 0

    def __post_init__(self):
        if not self.lam > 0 or not self.c > 0:
            raise ValueError("lambda and c must be positive")
        if self.M < 1:
            raise ValueError("M must be positive")
        d = self.diffusion
        if getattr(d, "x_inf", 0.0) is None:
            object.__setattr__(self, "diffusion", replace(d, x_inf=self.x_inf))

    @property
    def x_inf(self) -> float:
        # constant mu: E X_t = x_inf + (E X_0 - x_inf) R(t) with x_inf = mu0 / lam
        return self.mu0 / self.lam


@dataclass(frozen=True)
class GaussianIncrementFactors:
    """Unit lower-triangular T and pivots D with C = T diag(D) T^T."""

    T: np.ndarray
    D: np.ndarray
    clamped: int = 0

    @property
    def L(self) -> np.ndarray:
        return self.T * np.sqrt(self.D)[None, :]

    def block(self, shift: int, n: int) -> np.ndarray:
        """Factor of the covariance of (dW_l, I_l^l, ..., I_n^l) for l = shift."""
        m = n - shift + 2
        return self.L[:m, :m]

    def reconstruct(self) -> np.ndarray:
        return (self.T * self.D[None, :]) @ self.T.T


def _f_matrix(table: ResolventTable, count: int):
    v, w = unit_cell_rule(table.power)
    d = table.grid.delta
    i = np.arange(count)
    F = table.density(d * (i[:, None] + v[None, :]))
    return F, w


def assemble_covariance(table: ResolventTable, grid: TimeGrid | None = None) -> np.ndarray:
    """Master covariance of (dW, I at offsets 0..n-1), size (n+1) x (n+1).

    Entries come from one quadrature rule on the unit cell, so C is the Gram
    matrix A diag(w) A^T of A = [1; F] and is positive semi-definite up to rounding.
    """
    grid = table.grid if grid is None else grid
    if grid != table.grid:
        raise ValueError("grid does not match the resolvent table")
    n, d = grid.n, grid.delta
    F, w = _f_matrix(table, n)
    A = np.vstack([np.ones((1, w.size)), F])
    C = d * (A * w[None, :]) @ A.T
    C = 0.5 * (C + C.T)
    C[0, 0] = d
    return C


def ldl_factorize(C: np.ndarray) -> GaussianIncrementFactors:
    """Unpivoted LDL^T of a symmetric positive semi-definite matrix.

    No pivoting is done because the leading blocks of the factor must be the
    factors of the leading blocks of C. Pivots in [-1e-12 |C|, 0] are set to 0
    together with their column; more negative pivots raise ``IndefiniteError``.
    """
    C = np.asarray(C, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValueError("C must be square")
    scale = float(np.max(np.abs(C))) if C.size else 0.0
    if scale and np.max(np.abs(C - C.T)) > 1e-12 * scale:
        raise ValueError("C is not symmetric")
    n = C.shape[0]
    T = np.eye(n)
    D = np.zeros(n)
    clamped = 0
    for j in range(n):
        tj = T[j, :j] * D[:j]
        v = C[j:, j] - T[j:, :j] @ tj
        d = v[0]
        if d < -NEG_PIVOT_TOL * scale:
            raise IndefiniteError(f"pivot {d:.3e} at index {j} is below -{NEG_PIVOT_TOL:g} |C|")
        if d <= 0.0:
            clamped += 1
            continue
        D[j] = d
        T[j + 1 :, j] = v[1:] / d
    return GaussianIncrementFactors(T=T, D=D, clamped=clamped)


@dataclass
class PathEnsemble:
    values: np.ndarray
    config: SimConfig
    clamped_radicands: int = 0
    factors: GaussianIncrementFactors | None = field(default=None, repr=False)

    @property
    def times(self) -> np.ndarray:
        return self.config.grid.points


def _streams(seed: int, block: int, n: int):
    x0 = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(0, block))))
    steps = [
        np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(1, block, l))))
        for l in range(1, n + 1)
    ]
    return x0, steps


def _simulate_block(cfg: SimConfig, block: int, size: int, table, sig, L):
    n = cfg.grid.n
    x0_rng, step_rngs = _streams(cfg.seed, block, n)
    x0 = cfg.initial.sample(x0_rng, size)
    X = np.empty((size, n + 1))
    X[:, 0] = x0
    drift = cfg.x_inf + (x0 - cfg.x_inf)[:, None] * table.r_values[None, :]
    acc = np.zeros((size, n + 1))
    clamped = 0
    lam = cfg.lam
    active = np.flatnonzero(np.any(L != 0.0, axis=0))
    for l in range(1, n + 1):
        m = n - l + 2
        # columns with a zero pivot carry no variance and are skipped
        cols = active[active < m]
        Z = step_rngs[l - 1].standard_normal((size, cols.size))
        incr = Z @ L[:m, cols].T
        s2 = cfg.diffusion.sigma2(X[:, l - 1])
        neg = s2 < 0
        if neg.any():
            clamped += int(neg.sum())
            s2 = np.where(neg, 0.0, s2)
        amp = sig[l - 1] / lam * np.sqrt(s2)
        acc[:, l:] += amp[:, None] * incr[:, 1:]
        X[:, l] = drift[:, l] + acc[:, l]
        if not np.all(np.isfinite(X[:, l])):
            bad = int(np.count_nonzero(~np.isfinite(X[:, l])))
            raise SimulationError(f"{bad} non-finite values at step {l} (t={l * cfg.grid.delta:.4g})")
    return X, clamped


def simulate(
    config: SimConfig,
    table: ResolventTable,
    stab: StabilizerFunction,
    threads: int = 1,
    factors: GaussianIncrementFactors | None = None,
) -> PathEnsemble:
    """Simulate ``config.M`` paths of the semi-integrated Euler scheme.

    Parameters
    ----------
    config : SimConfig
        Model, grid and Monte Carlo settings.
    table : ResolventTable
        Resolvent on ``config.grid``.
    stab : StabilizerFunction
        Squared stabilizer on the same grid (negative values are clamped to 0).
    threads : int
        Worker threads; the output does not depend on it.
    factors : GaussianIncrementFactors, optional
        Precomputed factorization of the master covariance.
    """
    if table.grid != config.grid or stab.grid != config.grid:
        raise ValueError("table, stabilizer and config must share one grid")
    if factors is None:
        factors = ldl_factorize(assemble_covariance(table))
    L = factors.L
    sig = stab.sigma()
    M = config.M
    blocks = [(b, min(BLOCK_PATHS, M - b * BLOCK_PATHS)) for b in range(math.ceil(M / BLOCK_PATHS))]
    run = lambda item: _simulate_block(config, item[0], item[1], table, sig, L)
    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, blocks))
    else:
        results = [run(item) for item in blocks]
    values = np.vstack([r[0] for r in results])
    clamped = sum(r[1] for r in results)
    return PathEnsemble(values=values, config=config, clamped_radicands=clamped, factors=factors)
