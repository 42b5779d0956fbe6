"""Stabilizer of the scaled Volterra equation.

With X0 of variance v0 and E sigma^2(X_t) held at sigma_bar0^2, the variance
stays constant when the squared stabilizer solves

    c lam^2 (1 - R(t)^2) = (f^2 * stab2)(t),        c = v0 / sigma_bar0^2.

Two routes are provided. For the fractional kernel the solution is the series
stab2(t) = 2 c lam t^(1-alpha) sum_k (-1)^k c_k lam^k t^(alpha k); for any
kernel the equation can be solved forward as a lower-triangular system on a
grid.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import mpmath
import numpy as np
from scipy import special

from .kernel import Fractional, KernelSpec, ResolventTable, TimeGrid, cell_averages

__all__ = [
    "PrecisionError",
    "StabilizerFunction",
    "build_stabilizer",
    "ck_coefficients",
    "ck_scaled",
    "stabilizer_asymptote",
    "stabilizer_discrete",
    "stabilizer_nodes",
    "stabilizer_series",
]

NEG_TOL = 1e-6
PIVOT_FLOOR = 1e-300
GROWTH_K = 10.0
EXTRA_DIGITS = 30
DIGITS_PER_TERM = 0.8


class PrecisionError(ArithmeticError):
    """Raised when the alternating series would lose too many digits."""


@lru_cache(maxsize=32)
def _ck_scaled_cached(alpha: float, count: int) -> tuple[float, ...]:
    # The triangular solve amplifies rounding by roughly 3-4x per step, so it
    # runs in extended precision with the digit budget growing with count.
    with mpmath.workdps(EXTRA_DIGITS + int(DIGITS_PER_TERM * count)):
        al = mpmath.mpf(alpha)
        a = [mpmath.rgamma(al * k + 1) for k in range(count)]
        b = [mpmath.rgamma(al * (k + 1)) for k in range(count)]
        ab = [mpmath.fsum(a[l] * b[k - l] for l in range(k + 1)) * mpmath.gamma(al * (k + 1)) for k in range(count)]
        bb = [mpmath.fsum(b[l] * b[k - l] for l in range(k + 1)) * mpmath.gamma(al * (k + 2) - 1) for k in range(count)]
        ct = []
        for k in range(count):
            acc = mpmath.fsum(bb[l] * ct[k - l] for l in range(1, k + 1))
            ct.append((ab[k] - acc) / bb[0])
        return tuple(float(x) for x in ct)


def ck_scaled(alpha: float, count: int) -> np.ndarray:
    """Scaled coefficients c_k Gamma(alpha(k-1) + 2), k = 0..count-1.

    In this variable the recurrence reads sum_l bb_l ct_{k-l} = ab_k with
    ab_k = (a*b)_k Gamma(alpha(k+1)) and bb_k = (b*b)_k Gamma(alpha(k+2) - 1),
    where a_k = 1/Gamma(alpha k + 1) and b_k = 1/Gamma(alpha(k+1)).
    """
    if not 0.5 < alpha < 2 or alpha == 1.0:
        raise ValueError(f"alpha must lie in (1/2, 2) minus {{1}}, got {alpha}")
    if count < 1:
        raise ValueError("count must be positive")
    ct = np.array(_ck_scaled_cached(float(alpha), int(count)))
    log_bound_a = math.log(4.0 * 2.0 ** (alpha + 2))
    k = np.arange(count)
    with np.errstate(divide="ignore"):
        if not np.all(np.isfinite(ct)) or np.any(np.log(np.abs(ct)) > math.log(10 * GROWTH_K) + k * log_bound_a):
            raise ArithmeticError("coefficient recurrence left its growth bound")
    return ct


def ck_coefficients(alpha: float, count: int) -> np.ndarray:
    """Series coefficients c_0..c_{count-1} of the fractional-kernel stabilizer."""
    ct = ck_scaled(alpha, count)
    k = np.arange(count)
    return ct * special.rgamma(alpha * (k - 1) + 2)


def _unit_series(alpha: float, x: np.ndarray, max_terms: int = 300, budget: float = 1e5):
    ct = ck_scaled(alpha, max_terms)
    k = np.arange(max_terms)
    log_g = special.gammaln(alpha * (k - 1) + 2)
    out = np.empty_like(x)
    for i, xi in enumerate(x):
        lx = math.log(xi)
        total = 0.0
        running = 0.0
        for kk in range(max_terms):
            mag = abs(ct[kk]) * math.exp(alpha * kk * lx - log_g[kk]) if ct[kk] != 0 else 0.0
            term = math.copysign(mag, ct[kk]) * (-1) ** kk
            total += term
            running = max(running, mag)
            if kk >= 10 and mag < 1e-14 * running:
                break
        else:
            raise PrecisionError(f"series did not settle within {max_terms} terms at x={xi}")
        if running > budget * max(abs(total), 1e-300):
            raise PrecisionError(f"cancellation too severe at x={xi}; use the discrete route")
        out[i] = 2.0 * xi ** (1 - alpha) * total
    return out


def stabilizer_series(alpha: float, lam: float, c: float, t, count: int = 300):
    """Squared stabilizer from the power series, fractional kernel.

    Uses stab2_{alpha,lam,c}(t) = c lam^(2 - 1/alpha) stab2_alpha(lam^(1/alpha) t).
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr <= 0):
        raise ValueError("stabilizer_series requires t > 0")
    if abs(alpha - 1.0) < 1e-12:
        out = np.full_like(t_arr, 2.0 * c * lam)
    else:
        x = lam ** (1 / alpha) * t_arr.ravel()
        out = c * lam ** (2 - 1 / alpha) * _unit_series(alpha, x, count).reshape(t_arr.shape)
    return out if out.ndim else float(out)


def stabilizer_asymptote(table: ResolventTable, c: float, phi_inf: float = 1.0) -> float:
    """Limit c lam^2 (1 - a^2 phi_inf^2) / ||f||^2 of the squared stabilizer."""
    if not table.f_l2_sq > 0:
        raise ZeroDivisionError("f has zero L2 norm")
    return c * table.lam**2 * (1 - table.tail_a**2 * phi_inf**2) / table.f_l2_sq


def _c0(alpha: float) -> float:
    return math.gamma(alpha) ** 2 / (math.gamma(2 * alpha - 1) * math.gamma(2 - alpha))


def _forward_solve(weights: np.ndarray, rhs: np.ndarray, first: float | None = None) -> np.ndarray:
    """Solve sum_{i<=k} weights[k-i] y_i = rhs_k for k = 1..n (lower-triangular Toeplitz)."""
    n = rhs.size
    if abs(weights[0]) < PIVOT_FLOOR:
        raise ZeroDivisionError("singular pivot in the first-kind solve")
    y = np.empty(n)
    start = 0
    if first is not None:
        y[0] = first
        start = 1
    for k in range(start, n):
        acc = np.dot(weights[k:0:-1], y[:k]) if k else 0.0
        y[k] = (rhs[k] - acc) / weights[0]
    return y


def stabilizer_discrete(table: ResolventTable, c: float, grid: TimeGrid | None = None, rule: str = "point") -> np.ndarray:
    """Squared stabilizer on the grid by a forward first-kind Volterra solve.

    Parameters
    ----------
    table : ResolventTable
        Resolvent sampled on the grid.
    c : float
        Variance ratio.
    grid : TimeGrid, optional
        Must match ``table.grid``.
    rule : {"point", "cell"}
        ``"point"``: c lam^2 (1 - R_k^2) = Delta sum_{j<k} f^2(t_k - t_j) stab2(t_{j+1}).
        For alpha > 1 the first value is seeded with 2 c lam c_0 t_1^(1-alpha).
        ``"cell"``: the weights are the exact cell integrals of f^2, which is
        the variance the simulation scheme actually produces. Entry k is then
        the constant value on the cell (t_{k-1}, t_k] and approximates
        stab2(t_k - Delta/2) to second order; see ``stabilizer_nodes``.

    Returns
    -------
    np.ndarray
        Length n + 1. Entries 1..n hold the solution; entry 0 is NaN when the
        stabilizer is singular at 0 and repeats entry 1 otherwise.
    """
    grid = table.grid if grid is None else grid
    if grid != table.grid:
        raise ValueError("grid does not match the resolvent table")
    d = grid.delta
    rhs = c * table.lam**2 * (1.0 - table.r_values[1:] ** 2)
    power = table.power
    first = None
    if rule == "point":
        weights = d * table.f_values[1:] ** 2
        # weights[m] multiplies stab2(t_{k-m}), m = 0..n-1, and equals Delta f^2((m+1) Delta)
        if power > 0 and isinstance(table.kernel, Fractional):
            first = 2 * c * table.lam * _c0(table.kernel.alpha) * d ** (-power)
    elif rule == "cell":
        weights = d * cell_averages(lambda u: table.density(u) ** 2, grid, beta=power)
    else:
        raise ValueError(f"unknown rule {rule!r}")
    y = _forward_solve(weights, rhs, first)
    if np.any(y < -NEG_TOL):
        warnings.warn(
            f"discrete stabilizer undershoots to {y.min():.3e}; grid may be too coarse near t=0",
            RuntimeWarning,
            stacklevel=2,
        )
    head = np.nan if power > 0 else y[0]
    return np.concatenate([[head], y])


def stabilizer_nodes(grid: TimeGrid, rule: str) -> np.ndarray:
    """Times at which ``stabilizer_discrete`` values are accurate, entries 1..n."""
    t = grid.points
    if rule == "cell":
        t = t.copy()
        t[1:] -= 0.5 * grid.delta
    return t


@dataclass(frozen=True)
class StabilizerFunction:
    """Squared stabilizer on a grid together with its limit.

    ``sampled[k]`` is the value used on the cell (t_{k-1}, t_k]; ``nodes``
    gives the times those values approximate.
    """

    c: float
    lam: float
    kernel: KernelSpec
    coeffs: np.ndarray | None
    sampled: np.ndarray
    asymptote: float
    grid: TimeGrid
    rule: str = "cell"

    @property
    def nodes(self) -> np.ndarray:
        return stabilizer_nodes(self.grid, self.rule)

    def sigma(self) -> np.ndarray:
        """Stabilizer values sqrt(max(stab2, 0)) at t_1..t_n."""
        return np.sqrt(np.clip(self.sampled[1:], 0.0, None))


def build_stabilizer(table: ResolventTable, c: float, rule: str = "cell", n_coeffs: int = 60) -> StabilizerFunction:
    """Bundle the discrete stabilizer, its asymptote and (fractional kernels) the series coefficients."""
    kernel = table.kernel
    coeffs = None
    if isinstance(kernel, Fractional) and kernel.alpha != 1.0:
        coeffs = ck_coefficients(kernel.alpha, n_coeffs)
    return StabilizerFunction(
        c=c,
        lam=table.lam,
        kernel=kernel,
        coeffs=coeffs,
        sampled=stabilizer_discrete(table, c, rule=rule),
        asymptote=stabilizer_asymptote(table, c),
        grid=table.grid,
        rule=rule,
    )
