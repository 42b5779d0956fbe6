"""Convolution kernels, their resolvents, and product-integration utilities.

For a kernel K and lambda > 0 the resolvent R solves R + lam K*R = 1 and its
density f = -R' solves f + lam K*f = lam K. Three kernels are supported:

* ``Constant(level)``: K = level, giving R(t) = exp(-lam level t).
* ``Fractional(alpha)``: K(t) = t^(alpha-1) / Gamma(alpha), R(t) = e_alpha(lam^(1/alpha) t).
* ``Gamma(b, alpha, rho)``: K(t) = b exp(-rho t) t^(alpha-1) / Gamma(alpha), with
  f = exp(-rho t) f_{alpha, lam b} and R = 1 - int_0^t f.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Union

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate, special
from scipy.signal import fftconvolve

from . import specfun

__all__ = [
    "AccuracyError",
    "Constant",
    "Fractional",
    "Gamma",
    "KernelSpec",
    "ResolventTable",
    "TimeGrid",
    "build_resolvent",
    "cell_averages",
    "check_f_identity",
    "convolve",
    "kernel_eval",
    "laplace_kernel",
    "resolvent_residual",
    "unit_cell_rule",
]


class AccuracyError(ArithmeticError):
    """Raised when a numerical self-check exceeds its tolerance."""


def _check_alpha(alpha: float) -> None:
    if not 0.5 < alpha < 1.5:
        raise ValueError(f"alpha must lie in (1/2, 3/2), got {alpha}")


@dataclass(frozen=True)
class Constant:
    level: float = 1.0

    def __post_init__(self):
        if not self.level > 0:
            raise ValueError("Constant kernel level must be positive")


@dataclass(frozen=True)
class Fractional:
    alpha: float

    def __post_init__(self):
        _check_alpha(self.alpha)


@dataclass(frozen=True)
class Gamma:
    alpha: float
    rho: float
    b: float = 1.0

    def __post_init__(self):
        _check_alpha(self.alpha)
        if not self.rho > 0 or not self.b > 0:
            raise ValueError("Gamma kernel needs rho > 0 and b > 0")


KernelSpec = Union[Constant, Fractional, Gamma]


def singular_power(spec: KernelSpec) -> float:
    """Exponent p with K(t) ~ C t^p as t -> 0 (also the exponent of f)."""
    return 0.0 if isinstance(spec, Constant) else spec.alpha - 1.0


@dataclass(frozen=True)
class TimeGrid:
    T: float
    n: int

    def __post_init__(self):
        if not self.T > 0 or int(self.n) != self.n or self.n < 1:
            raise ValueError("TimeGrid needs T > 0 and a positive integer n")
        object.__setattr__(self, "n", int(self.n))

    @property
    def delta(self) -> float:
        return self.T / self.n

    @property
    def points(self) -> np.ndarray:
        return np.arange(self.n + 1) * self.delta


def kernel_eval(spec: KernelSpec, t):
    """Evaluate K(t) for t > 0."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("kernel_eval requires t > 0")
    if isinstance(spec, Constant):
        out = np.full_like(t, spec.level)
    elif isinstance(spec, Fractional):
        out = t ** (spec.alpha - 1) / math.gamma(spec.alpha)
    else:
        out = spec.b * np.exp(-spec.rho * t) * t ** (spec.alpha - 1) / math.gamma(spec.alpha)
    return out if out.ndim else float(out)


def laplace_kernel(spec: KernelSpec, s: float) -> float:
    """Laplace transform of K at s > 0."""
    if not s > 0:
        raise ValueError("laplace_kernel requires s > 0")
    if isinstance(spec, Constant):
        return spec.level / s
    if isinstance(spec, Fractional):
        return s ** (-spec.alpha)
    return spec.b * (s + spec.rho) ** (-spec.alpha)


@lru_cache(maxsize=32)
def unit_cell_rule(beta: float = 0.0, order: int = 12, ratio: float = 0.25, floor: float = 1e-14):
    """Quadrature on [0, 1] for integrands behaving like v^beta or v^(2 beta) at 0.

    For beta == 0 this is a 16-point Gauss-Legendre rule. Otherwise the cell is
    split geometrically towards 0 and the innermost piece [0, floor] collapses
    to one node placed so that both v^beta and v^(2 beta) are integrated
    exactly there. Using the same nodes for every entry keeps Gram matrices
    assembled from the rule positive semi-definite.
    """
    if beta == 0.0:
        x, w = leggauss(16)
        return 0.5 * (x + 1), 0.5 * w
    if not beta > -0.5:
        raise ValueError("beta must exceed -1/2 so that v^(2 beta) is integrable")
    x, w = leggauss(order)
    nodes, weights = [], []
    hi = 1.0
    while hi > floor:
        lo = max(hi * ratio, floor)
        nodes.append(lo + (hi - lo) * 0.5 * (x + 1))
        weights.append((hi - lo) * 0.5 * w)
        hi = lo
    v_star = floor * ((beta + 1) / (2 * beta + 1)) ** (1 / beta)
    w_star = floor ** (beta + 1) / ((beta + 1) * v_star**beta)
    nodes.append(np.array([v_star]))
    weights.append(np.array([w_star]))
    nodes = np.concatenate(nodes)
    weights = np.concatenate(weights)
    order_idx = np.argsort(nodes)
    return nodes[order_idx], weights[order_idx]


def cell_averages(fun: Callable, grid: TimeGrid, count: int | None = None, beta: float = 0.0) -> np.ndarray:
    """Averages (1/Delta) int_{m Delta}^{(m+1) Delta} fun, for m = 0..count-1."""
    count = grid.n if count is None else count
    v, w = unit_cell_rule(beta)
    d = grid.delta
    out = np.empty(count)
    chunk = max(1, 200_000 // v.size)
    for m0 in range(0, count, chunk):
        m = np.arange(m0, min(count, m0 + chunk))
        vals = fun(d * (m[:, None] + v[None, :]))
        out[m] = vals @ w
    return out


@dataclass(frozen=True)
class ResolventTable:
    """Resolvent R and density f sampled on a grid.

    ``f_values[0]`` holds f(Delta/2) when f is singular at 0 (alpha < 1),
    0 when f vanishes there (alpha > 1), and f(0) otherwise.
    """

    grid: TimeGrid
    r_values: np.ndarray
    f_values: np.ndarray
    tail_a: float
    f_l2_sq: float
    lam: float
    kernel: KernelSpec
    _density: Callable = field(repr=False, compare=False, default=None)

    def density(self, t):
        """Evaluate f at arbitrary t > 0."""
        return self._density(np.asarray(t, dtype=float))

    @property
    def power(self) -> float:
        return singular_power(self.kernel)


def _effective(spec: KernelSpec, lam: float):
    """Returns (density, resolvent or None) callables for lam K."""
    if isinstance(spec, Constant):
        rate = lam * spec.level
        return (lambda t: rate * np.exp(-rate * t)), (lambda t: np.exp(-rate * t))
    if isinstance(spec, Fractional):
        a = spec.alpha
        scale = lam ** (1 / a)
        return (lambda t: specfun.f_fractional(a, lam, t)), (lambda t: specfun.e_alpha(a, scale * t))
    a, rho, lam_eff = spec.alpha, spec.rho, lam * spec.b
    return (lambda t: specfun.f_gamma(a, rho, lam_eff, t)), None


def _tail_a(spec: KernelSpec, lam: float) -> float:
    if isinstance(spec, Gamma):
        return 1.0 / (1.0 + lam * spec.b * spec.rho ** (-spec.alpha))
    return 0.0


def _f_l2_sq(spec: KernelSpec, lam: float, density: Callable) -> float:
    if isinstance(spec, Constant):
        return 0.5 * lam * spec.level
    a = spec.alpha
    if isinstance(spec, Fractional):
        # ||f_{a,lam}||^2 = lam^(1/a) ||f_{a,1}||^2; integrate the unit-scale density
        unit = lambda x: specfun.f_fractional(a, 1.0, x)
        scale = lam ** (1 / a)
        horizon = 400.0
    else:
        unit = density
        scale = 1.0
        horizon = 60.0 / spec.rho
    lead = 1.0 / math.gamma(a) if isinstance(spec, Fractional) else lam * spec.b / math.gamma(a)

    def regular(x):
        # t^(1-a) f(t) is bounded at 0 with limit equal to the leading series coefficient
        return lead**2 if x <= 0 else (x ** (1 - a) * unit(x)) ** 2

    near, _ = integrate.quad(
        regular, 0.0, 1.0, weight="alg", wvar=(2 * a - 2, 0.0), limit=200
    )
    edges = np.geomspace(1.0, horizon, 12)
    far = sum(integrate.quad(lambda x: unit(x) ** 2, lo, hi, limit=200)[0] for lo, hi in zip(edges[:-1], edges[1:]))
    tail = 0.0
    if isinstance(spec, Fractional):
        # f_{a,1}(x) ~ a x^(-a-1) / Gamma(1-a); residue terms are negligible here
        amp = a * float(special.rgamma(1 - a))
        tail = amp**2 * horizon ** (-2 * a - 1) / (2 * a + 1)
    return scale * (near + far + tail)


def build_resolvent(spec: KernelSpec, lam: float, grid: TimeGrid, residual_tol: float | None = None) -> ResolventTable:
    """Sample R and f for the kernel ``spec`` on ``grid``.

    Parameters
    ----------
    spec : KernelSpec
        Kernel variant.
    lam : float
        Mean-reversion speed lambda > 0.
    grid : TimeGrid
        Sampling grid.
    residual_tol : float, optional
        If given, raise ``AccuracyError`` when the discrete resolvent residual exceeds it.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    density, resolvent = _effective(spec, lam)
    t = grid.points
    power = singular_power(spec)
    f_values = np.empty_like(t)
    f_values[1:] = density(t[1:])
    if power < 0:
        f_values[0] = density(np.array(0.5 * grid.delta))
    elif power > 0:
        f_values[0] = 0.0
    else:
        scale = spec.level if isinstance(spec, Constant) else getattr(spec, "b", 1.0)
        f_values[0] = lam * scale

    if resolvent is not None:
        r_values = np.asarray(resolvent(t), dtype=float)
    else:
        masses = grid.delta * cell_averages(density, grid, beta=power)
        r_values = 1.0 - np.concatenate([[0.0], np.cumsum(masses)])
    r_values[0] = 1.0
    table = ResolventTable(
        grid=grid,
        r_values=r_values,
        f_values=f_values,
        tail_a=_tail_a(spec, lam),
        f_l2_sq=_f_l2_sq(spec, lam, density),
        lam=lam,
        kernel=spec,
        _density=density,
    )
    if residual_tol is not None:
        res = resolvent_residual(table)
        if res > residual_tol:
            raise AccuracyError(f"resolvent residual {res:.3e} exceeds {residual_tol:.3e}")
    return table


def _averages(x, grid: TimeGrid, power: float | None) -> np.ndarray:
    """Cell averages of a sampled function or a callable."""
    if callable(x):
        return cell_averages(x, grid, beta=0.0 if power is None else power)
    x = np.asarray(x, dtype=float)
    if x.shape != (grid.n + 1,):
        raise ValueError(f"sampled function must have length {grid.n + 1}, got {x.shape}")
    avg = 0.5 * (x[:-1] + x[1:])
    if power is not None and power < 0:
        # exact average of C t^power over the first cell, matched at t = Delta
        avg[0] = x[1] / (power + 1)
    elif power is not None and power > 0:
        # x(t) ~ x(0) + C t^power on the first cell
        avg[0] = x[0] + (x[1] - x[0]) / (power + 1)
    return avg


def convolve(f, g, grid: TimeGrid, f_power: float | None = None, g_power: float | None = None) -> np.ndarray:
    """Product-integration approximation of (f*g)(t_k) on the grid.

    Each of ``f`` and ``g`` is either an array of grid samples or a callable.
    The convolution is approximated cell by cell with cell averages,
    (f*g)(t_k) ~ Delta sum_{j<k} fbar_{k-j-1} gbar_j. For sampled input the
    power p refines the first-cell average: p < 0 means the function behaves
    like C t^p near 0, p > 0 means it behaves like x(0) + C t^p. For callables
    p is the exponent passed to ``unit_cell_rule``.
    """
    fa = _averages(f, grid, f_power)
    ga = _averages(g, grid, g_power)
    out = np.zeros(grid.n + 1)
    out[1:] = grid.delta * fftconvolve(fa, ga)[: grid.n]
    return out


def resolvent_residual(table: ResolventTable) -> float:
    """max_k |R(t_k) + lam (K*R)(t_k) - 1|."""
    spec = table.kernel
    k_fun = lambda t: kernel_eval(spec, t)
    p = singular_power(spec)
    conv = convolve(k_fun, table.r_values, table.grid, f_power=p, g_power=p + 1)
    return float(np.max(np.abs(table.r_values + table.lam * conv - 1.0)))


def check_f_identity(table: ResolventTable, spec: KernelSpec | None = None) -> float:
    """max_{k>=1} |f(t_k) + lam (K*f)(t_k) - lam K(t_k)|."""
    spec = table.kernel if spec is None else spec
    p = singular_power(spec)
    k_fun = lambda t: kernel_eval(spec, t)
    conv = convolve(k_fun, table.density, table.grid, f_power=p, g_power=p)
    t = table.grid.points[1:]
    lam = table.lam
    res = table.f_values[1:] + lam * conv[1:] - lam * kernel_eval(spec, t)
    return float(np.max(np.abs(res)))
