"""Distribution primitives used by the power formulas.

Normal, central/noncentral t, F and scaled chi-square distributions plus
Owen's Q function

    Q_f(t, delta; a, b) = 1 / (Gamma(f/2) 2^(f/2-1))
                          * int_a^b Phi(t x / sqrt(f) - delta) x^(f-1) exp(-x^2/2) dx

The noncentral t CDF is defined through Owen's Q on (0, inf), so both share a
single quadrature code path. Degrees of freedom are positive reals throughout.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import DomainError

logger = logging.getLogger(__name__)

__all__ = [
    "OwensQArgs",
    "NoncentralTParams",
    "std_normal_cdf",
    "t_cdf_noncentral",
    "t_quantile",
    "t_quantile_array",
    "f_cdf",
    "f_quantile",
    "f_quantile_array",
    "scaled_chisq_cdf",
    "owens_q",
]

# Gauss-Legendre rule applied on every panel of the Owen's Q quadrature.
_GL_ORDER = 24
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(_GL_ORDER)

# Chi density mass outside sqrt(f) +/- 10 is below 1e-16 for every f.
_TAIL_SPAN = 10.0
_MAX_PANEL_WIDTH = 0.5
_MAX_PANELS = 4000
# Geometric refinement toward x = 0 when x^(f-1) is not a polynomial.
_ORIGIN_LAYERS = 48


def _require_finite(name: str, value: float) -> float:
    value = float(value)
    if math.isnan(value) or math.isinf(value):
        raise DomainError(f"{name} must be finite, got {value}")
    return value


def _require_df(name: str, value: float) -> float:
    value = _require_finite(name, value)
    if value <= 0:
        raise DomainError(f"{name} must be positive, got {value}")
    return value


def _require_not_nan(name: str, value: float) -> float:
    value = float(value)
    if math.isnan(value):
        raise DomainError(f"{name} must not be NaN")
    return value


@dataclass(frozen=True)
class OwensQArgs:
    """Arguments of Owen's Q function Q_f(t, delta; a, b)."""

    f: float
    t: float
    delta: float
    a: float = 0.0
    b: float = math.inf

    def __post_init__(self) -> None:
        _require_df("f", self.f)
        _require_not_nan("t", self.t)
        _require_finite("delta", self.delta)
        a = _require_finite("a", self.a)
        b = _require_not_nan("b", self.b)
        if a < 0:
            raise DomainError(f"lower limit a must be >= 0, got {a}")
        if a > b:
            raise DomainError(f"lower limit a={a} exceeds upper limit b={b}")


@dataclass(frozen=True)
class NoncentralTParams:
    """Degrees of freedom and noncentrality of a t(f, lambda) distribution."""

    f: float
    lam: float = 0.0

    def __post_init__(self) -> None:
        _require_df("f", self.f)
        _require_finite("lambda", self.lam)


# =============================================================================
# Normal / chi-square / F
# =============================================================================

def std_normal_cdf(x: float) -> float:
    """CDF of N(0, 1)."""
    return float(special.ndtr(_require_not_nan("x", x)))


def scaled_chisq_cdf(xi: float, f: float) -> float:
    """CDF of xi ~ chi2_f / f, i.e. the chi-square CDF at f * xi."""
    f = _require_df("f", f)
    xi = _require_not_nan("xi", xi)
    if xi < 0:
        raise DomainError(f"xi must be >= 0, got {xi}")
    if math.isinf(xi):
        return 1.0
    return float(special.gammainc(f / 2.0, f * xi / 2.0))


def f_cdf(x: float, f1: float, f2: float) -> float:
    """CDF of a central F(f1, f2) variate via the regularized incomplete beta."""
    f1 = _require_df("f1", f1)
    f2 = _require_df("f2", f2)
    x = _require_not_nan("x", x)
    if x < 0:
        raise DomainError(f"F CDF argument must be >= 0, got {x}")
    if x == 0:
        return 0.0
    if math.isinf(x):
        return 1.0
    return float(special.betainc(f1 / 2.0, f2 / 2.0, f1 * x / (f1 * x + f2)))


def f_quantile(p: float, f1: float, f2: float) -> float:
    """Inverse of ``f_cdf``; ``p = 1`` is rejected rather than mapped to infinity."""
    f1 = _require_df("f1", f1)
    f2 = _require_df("f2", f2)
    p = _require_not_nan("p", p)
    if p < 0 or p >= 1:
        raise DomainError(f"F quantile needs 0 <= p < 1, got {p}")
    if p == 0:
        return 0.0
    return float(special.fdtri(f1, f2, p))


def f_quantile_array(p: np.ndarray, f1: float, f2: float) -> np.ndarray:
    """Vectorized ``f_quantile`` for probabilities strictly inside (0, 1)."""
    f1 = _require_df("f1", f1)
    f2 = _require_df("f2", f2)
    p = np.asarray(p, dtype=float)
    if np.any(~(p > 0)) or np.any(~(p < 1)):
        raise DomainError("F quantile nodes must lie strictly inside (0, 1)")
    return special.fdtri(f1, f2, p)


# =============================================================================
# t distribution
# =============================================================================

def t_quantile(f: float, p: float) -> float:
    """The p-th percentile t_{f,p} of the central t distribution."""
    f = _require_df("f", f)
    p = _require_not_nan("p", p)
    if not 0 < p < 1:
        raise DomainError(f"t quantile needs 0 < p < 1, got {p}")
    if p == 0.5:
        return 0.0
    return float(special.stdtrit(f, p))


def t_cdf_noncentral(t: float, params: NoncentralTParams) -> float:
    """CDF of t(f, lambda) at ``t``, computed as Q_f(t, lambda; 0, inf)."""
    return owens_q(OwensQArgs(f=params.f, t=t, delta=params.lam))


# =============================================================================
# Owen's Q
# =============================================================================

def _log_chi_norm(f: float) -> float:
    return float(special.gammaln(f / 2.0) + (f / 2.0 - 1.0) * math.log(2.0))


def _chi_mass(f: float, a: float, b: float) -> float:
    upper = 1.0 if math.isinf(b) else float(special.gammainc(f / 2.0, b * b / 2.0))
    lower = float(special.gammainc(f / 2.0, a * a / 2.0))
    return max(upper - lower, 0.0)


def _panel_edges(lo: float, hi: float, f: float, slope: float) -> np.ndarray:
    width = _MAX_PANEL_WIDTH
    if slope > 0:
        width = min(width, 2.0 / slope)
    n_panels = min(_MAX_PANELS, max(1, math.ceil((hi - lo) / width)))
    edges = np.linspace(lo, hi, n_panels + 1)
    if lo == 0.0 and f != math.floor(f):
        # x^(f-1) is not smooth at the origin: grade the first panel geometrically
        first = edges[1]
        graded = first * np.exp2(-np.arange(_ORIGIN_LAYERS, 0, -1, dtype=float))
        edges = np.concatenate(([0.0], graded, edges[1:]))
    return edges


def owens_q(args: OwensQArgs) -> float:
    """Owen's Q function by composite Gauss-Legendre quadrature of its definition.

    The integration range is cut to [a, b] intersected with
    [sqrt(f) - 10, sqrt(f) + 10], outside of which the chi density carries
    negligible mass.
    """
    f, t, delta, a, b = args.f, args.t, args.delta, args.a, args.b
    if a == b:
        return 0.0
    if math.isinf(t):
        return _chi_mass(f, a, b) if t > 0 else 0.0

    root_f = math.sqrt(f)
    lo = max(a, root_f - _TAIL_SPAN, 0.0)
    hi = min(b, root_f + _TAIL_SPAN)
    if hi <= lo:
        return 0.0

    scale = t / root_f
    edges = _panel_edges(lo, hi, f, abs(scale))
    head = 0.0
    if edges[0] == 0.0 and f != math.floor(f):
        # innermost panel straddles the x^(f-1) pole: Phi is flat there, the chi mass is exact
        inner = float(edges[1])
        head = float(
            special.ndtr(0.5 * scale * inner - delta)
            * special.gammainc(f / 2.0, inner * inner / 2.0)
        )
        edges = edges[1:]
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    x = mid[:, None] + half[:, None] * _GL_NODES[None, :]
    w = half[:, None] * _GL_WEIGHTS[None, :]

    log_density = (f - 1.0) * np.log(x) - 0.5 * x * x - _log_chi_norm(f)
    integrand = special.ndtr(scale * x - delta) * np.exp(log_density)
    value = head + float(np.sum(w * integrand))
    return min(max(value, 0.0), 1.0)


def t_quantile_array(f: np.ndarray, p: float) -> np.ndarray:
    """Vectorized ``t_quantile`` over an array of positive degrees of freedom."""
    f = np.asarray(f, dtype=float)
    p = _require_not_nan("p", p)
    if not 0 < p < 1:
        raise DomainError(f"t quantile needs 0 < p < 1, got {p}")
    if np.any(~(f > 0)):
        raise DomainError("degrees of freedom must be positive")
    return special.stdtrit(f, p)
