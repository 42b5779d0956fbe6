"""Special functions: Gamma, Beta, Mittag-Leffler and resolvent densities.

The Mittag-Leffler function E_alpha(z) = sum z^n / Gamma(alpha n + 1) is
evaluated on the negative real axis either by its power series or by the
representation

    e_alpha(t) = E_alpha(-t^alpha) = F_alpha(t) + G_alpha(t),

with F_alpha(t) = int_0^inf exp(-t u) H_alpha(u) du and G_alpha a finite sum
of residues (non-zero only for alpha > 1).

For the integral we substitute u = s^(1/alpha) and then
s + cos(alpha pi) = |sin(alpha pi)| tan(phi). This maps H_alpha(u) du onto
sign(sin(alpha pi)) / (alpha pi) dphi on [phi0, pi/2], so that

    F_alpha(t) = sign(sin(alpha pi)) / (alpha pi)
                 * int_{phi0}^{pi/2} exp(-t s(phi)^(1/alpha)) dphi.

The integrand is bounded and only mildly singular at the left end, which a
tanh-sinh rule handles to near machine precision.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import special

__all__ = [
    "ConvergenceError",
    "MLRegime",
    "QuadratureRule",
    "beta_fn",
    "default_rule",
    "e_alpha",
    "e_alpha_repr",
    "f_fractional",
    "f_gamma",
    "gamma_fn",
    "h_alpha",
    "ml_series",
    "mittag_leffler",
]

# Series is used only when |z| <= SERIES_Z_MAX and (-z)^(1/alpha) <= SERIES_X_MAX.
# The second guard bounds cancellation: sum |terms| ~ exp(x) / alpha.
SERIES_Z_MAX = 5.0
SERIES_X_MAX = 4.0
TAIL_THRESHOLD = 1.0e3
NEAR_ONE = 1.0e-6


class ConvergenceError(ArithmeticError):
    """Raised when a series or quadrature fails to reach the requested accuracy."""


class MLRegime(enum.Enum):
    SERIES = "Series"
    INTEGRAL_PLUS_RESIDUE = "IntegralPlusResidue"
    ASYMPTOTIC = "Asymptotic"


@dataclass(frozen=True)
class QuadratureRule:
    """Quadrature rule on (0, 1) for the angular form of F_alpha.

    Attributes
    ----------
    nodes : np.ndarray
        Strictly increasing nodes in (0, 1).
    weights : np.ndarray
        Positive weights, same length as ``nodes``.
    kind : str
        ``"TanhSinh"`` or ``"GaussLegendreComposite"``.
    """

    nodes: np.ndarray
    weights: np.ndarray
    kind: str

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if nodes.shape != weights.shape or nodes.ndim != 1:
            raise ValueError("nodes and weights must be 1-d arrays of equal length")
        if np.any(np.diff(nodes) <= 0) or nodes[0] <= 0 or nodes[-1] >= 1:
            raise ValueError("nodes must be strictly increasing in (0, 1)")
        if np.any(weights <= 0):
            raise ValueError("weights must be strictly positive")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def tanh_sinh(cls, h: float = 0.05, half_count: int = 120) -> "QuadratureRule":
        k = np.arange(-half_count, half_count + 1) * h
        arg = 0.5 * np.pi * np.sinh(k)
        with np.errstate(over="ignore"):
            nodes = 1.0 / (1.0 + np.exp(-2.0 * arg))
            weights = 0.5 * h * 0.5 * np.pi * np.cosh(k) / np.cosh(arg) ** 2
        keep = (nodes > 0) & (nodes < 1) & (weights > 0)
        nodes, weights = nodes[keep], weights[keep]
        _, first = np.unique(nodes, return_index=True)
        return cls(nodes[first], weights[first], "TanhSinh")

    @classmethod
    def gauss_legendre_composite(cls, panels: int = 8, order: int = 25) -> "QuadratureRule":
        x, w = leggauss(order)
        edges = np.linspace(0.0, 1.0, panels + 1)
        nodes, weights = [], []
        for a, b in zip(edges[:-1], edges[1:]):
            nodes.append(0.5 * (b - a) * x + 0.5 * (a + b))
            weights.append(0.5 * (b - a) * w)
        return cls(np.concatenate(nodes), np.concatenate(weights), "GaussLegendreComposite")


@lru_cache(maxsize=1)
def default_rule() -> QuadratureRule:
    return QuadratureRule.tanh_sinh()


def gamma_fn(x: float) -> float:
    """Gamma function for positive real arguments.

    Raises ``ValueError`` for x <= 0 and ``OverflowError`` beyond ~171.6.
    """
    x = float(x)
    if not x > 0:
        raise ValueError(f"gamma_fn requires x > 0, got {x}")
    return math.gamma(x)


def beta_fn(a: float, b: float) -> float:
    """Beta function B(a, b) = Gamma(a) Gamma(b) / Gamma(a + b)."""
    if not (a > 0 and b > 0):
        raise ValueError(f"beta_fn requires a, b > 0, got ({a}, {b})")
    return float(special.beta(a, b))


def _is_one(alpha: float) -> bool:
    return abs(alpha - 1.0) < NEAR_ONE


def _check_noninteger(alpha: float) -> None:
    if not 0 < alpha < 2 or alpha == 1.0:
        raise ValueError(f"alpha must lie in (0, 2) minus {{1}}, got {alpha}")


def h_alpha(alpha: float, u):
    """Spectral density H_alpha(u) of the alternate Mittag-Leffler function."""
    _check_noninteger(alpha)
    u = np.asarray(u, dtype=float)
    if np.any(u <= 0):
        raise ValueError("h_alpha requires u > 0")
    ua = u**alpha
    th = alpha * np.pi
    out = np.sin(th) / np.pi * u ** (alpha - 1) / (ua * ua + 2 * ua * np.cos(th) + 1)
    return out if out.ndim else float(out)


def ml_series(alpha: float, z: float, tol: float = 1e-15, max_terms: int = 400) -> float:
    """Power series of E_alpha(z).

    Stops once a term is below tol/10 while terms are decreasing.
    """
    total = 0.0
    prev = math.inf
    log_abs_z = math.log(abs(z)) if z != 0 else -math.inf
    sign = 1.0 if z >= 0 else -1.0
    for n in range(max_terms):
        if n == 0:
            term = 1.0
        else:
            mag = math.exp(n * log_abs_z - math.lgamma(alpha * n + 1)) if z != 0 else 0.0
            term = sign**n * mag
        total += term
        if abs(term) < tol / 10 and abs(term) <= prev and n > 0:
            return total
        prev = abs(term)
    raise ConvergenceError(f"Mittag-Leffler series did not converge for alpha={alpha}, z={z}")


def _regime_for(alpha: float, z: float) -> MLRegime:
    if z >= 0:
        return MLRegime.SERIES
    x = (-z) ** (1.0 / alpha)
    if -z <= SERIES_Z_MAX and x <= SERIES_X_MAX:
        return MLRegime.SERIES
    if x >= TAIL_THRESHOLD:
        return MLRegime.ASYMPTOTIC
    return MLRegime.INTEGRAL_PLUS_RESIDUE


def mittag_leffler(alpha: float, z: float, tol: float = 1e-12, regime: MLRegime | None = None) -> float:
    """Mittag-Leffler function E_alpha(z) for real z and alpha in (0, 2].

    Parameters
    ----------
    alpha : float
        Order in (0, 2].
    z : float
        Real argument.
    tol : float
        Absolute accuracy target.
    regime : MLRegime, optional
        Force a particular evaluation route instead of the automatic choice.
    """
    if not 0 < alpha <= 2:
        raise ValueError(f"alpha must lie in (0, 2], got {alpha}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    z = float(z)
    if regime is None:
        if _is_one(alpha):
            return math.exp(z)
        if alpha == 2.0:
            return math.cos(math.sqrt(-z)) if z <= 0 else math.cosh(math.sqrt(z))
        regime = _regime_for(alpha, z)
    if regime is MLRegime.SERIES:
        return ml_series(alpha, z, tol)
    if z > 0:
        raise ValueError("integral and asymptotic routes are only available for z <= 0")
    t = (-z) ** (1.0 / alpha)
    if regime is MLRegime.ASYMPTOTIC:
        return _e_alpha_asymptotic(alpha, t, tol)
    return float(e_alpha_repr(alpha, t))


def _e_alpha_asymptotic(alpha: float, t: float, tol: float) -> float:
    # e_alpha(t) ~ sum_{k>=1} (-1)^(k+1) t^(-alpha k) / Gamma(1 - alpha k) + G_alpha(t)
    total = float(_residue_sum(alpha, np.asarray(t)))
    prev = math.inf
    for k in range(1, 60):
        term = (-1) ** (k + 1) * t ** (-alpha * k) * float(special.rgamma(1 - alpha * k))
        mag = t ** (-alpha * k) * math.gamma(alpha * k) / math.pi
        if mag > prev:
            break
        total += term
        if mag < tol / 10:
            return total
        prev = mag
    raise ConvergenceError(f"asymptotic expansion not accurate enough at t={t}")


def _angular(alpha: float, rule: QuadratureRule):
    th = alpha * np.pi
    st, ct = np.sin(th), np.cos(th)
    ast = abs(st)
    phi0 = math.atan2(ct, ast)
    length = 0.5 * np.pi - phi0
    phi = phi0 + length * rule.nodes
    s = np.maximum(ast * np.tan(phi) - ct, 0.0)
    u = s ** (1.0 / alpha)
    scale = math.copysign(1.0, st) / (alpha * np.pi) * length
    return u, scale * rule.weights


def _residue_sum(alpha: float, t, derivative: int = 0):
    t = np.asarray(t, dtype=float)
    if alpha < 1:
        return np.zeros_like(t)
    out = np.zeros_like(t)
    for n in range(int(math.floor((alpha - 1) / 2)) + 1):
        th = (2 * n + 1) * np.pi / alpha
        out += np.exp(t * np.cos(th)) * np.cos(t * np.sin(th) + derivative * th)
    return 2.0 / alpha * out


def _laplace_moment(alpha: float, t, power: int, rule: QuadratureRule, chunk: int = 4096):
    # int_0^inf u^power exp(-t u) H_alpha(u) du for an array of t
    u, w = _angular(alpha, rule)
    wu = w * u**power if power else w
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.empty_like(t)
    for i in range(0, t.size, chunk):
        tt = t[i : i + chunk, None]
        out[i : i + chunk] = np.exp(-tt * u[None, :]) @ wu
    return out


def e_alpha_repr(alpha: float, t, rule: QuadratureRule | None = None):
    """Integral-plus-residue evaluation of e_alpha(t) = E_alpha(-t^alpha)."""
    _check_noninteger(alpha)
    rule = default_rule() if rule is None else rule
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("e_alpha_repr requires t >= 0")
    flat = t_arr.ravel()
    out = _laplace_moment(alpha, flat, 0, rule) + _residue_sum(alpha, flat)
    out = out.reshape(t_arr.shape)
    return out if out.ndim else float(out)


def _series_sum(alpha: float, z, beta: float, tol: float = 1e-17, max_terms: int = 400):
    # sum_k (-z)^k / Gamma(alpha k + beta), vectorised over z in [0, SERIES_Z_MAX]
    z = np.asarray(z, dtype=float)
    total = np.zeros_like(z)
    power = np.ones_like(z)
    prev = np.inf
    for k in range(max_terms):
        term = power * special.rgamma(alpha * k + beta)
        total += term if k % 2 == 0 else -term
        mag = float(np.max(np.abs(term), initial=0.0))
        if k > 2 and mag < tol * max(1.0, float(np.max(np.abs(total), initial=0.0))) and mag <= prev:
            return total
        prev = mag
        power = power * z
    raise ConvergenceError("vectorised Mittag-Leffler series did not converge")


def _split(alpha: float, x: np.ndarray) -> np.ndarray:
    return (x <= SERIES_X_MAX) & (x**alpha <= SERIES_Z_MAX)


def e_alpha(alpha: float, t, rule: QuadratureRule | None = None):
    """Vectorised e_alpha(t) = E_alpha(-t^alpha) for t >= 0 with regime switching."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("e_alpha requires t >= 0")
    if _is_one(alpha):
        return np.exp(-t_arr) if t_arr.ndim else math.exp(-float(t_arr))
    flat = t_arr.ravel()
    out = np.empty_like(flat)
    small = _split(alpha, flat)
    out[small] = _series_sum(alpha, flat[small] ** alpha, 1.0)
    if np.any(~small):
        out[~small] = e_alpha_repr(alpha, flat[~small], rule)
    out = out.reshape(t_arr.shape)
    return out if out.ndim else float(out)


def _f_unit(alpha: float, x: np.ndarray, rule: QuadratureRule | None) -> np.ndarray:
    # f_{alpha,1}(x) = -d/dx e_alpha(x), x > 0
    out = np.empty_like(x)
    small = _split(alpha, x)
    xs = x[small]
    out[small] = xs ** (alpha - 1) * _series_sum(alpha, xs**alpha, alpha)
    if np.any(~small):
        rule = default_rule() if rule is None else rule
        xl = x[~small]
        out[~small] = _laplace_moment(alpha, xl, 1, rule) - _residue_sum(alpha, xl, derivative=1)
    return out


def f_fractional(alpha: float, lam: float, t, rule: QuadratureRule | None = None):
    """Resolvent density f_{alpha,lambda}(t) of the fractional kernel.

    Uses the scaling f_{alpha,lambda}(t) = lambda^(1/alpha) f_{alpha,1}(lambda^(1/alpha) t).
    """
    if not 0.5 < alpha < 1.5:
        raise ValueError(f"alpha must lie in (1/2, 3/2), got {alpha}")
    if lam <= 0:
        raise ValueError("lambda must be positive")
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr <= 0):
        raise ValueError("f_fractional requires t > 0")
    if _is_one(alpha):
        out = lam * np.exp(-lam * t_arr)
    else:
        scale = lam ** (1.0 / alpha)
        out = scale * _f_unit(alpha, scale * t_arr.ravel(), rule).reshape(t_arr.shape)
    return out if out.ndim else float(out)


def f_gamma(alpha: float, rho: float, lam: float, t, rule: QuadratureRule | None = None):
    """Resolvent density of the Gamma kernel: exp(-rho t) f_{alpha,lambda}(t)."""
    if rho < 0:
        raise ValueError("rho must be non-negative")
    t_arr = np.asarray(t, dtype=float)
    out = np.exp(-rho * t_arr) * f_fractional(alpha, lam, t_arr, rule)
    return out if np.ndim(out) else float(out)
