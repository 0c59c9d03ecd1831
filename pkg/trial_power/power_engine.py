"""Exact power formulas for t tests and ANCOVA.

Superiority / noninferiority (NI) powers are noncentral t tail probabilities;
equivalence (TOST) powers are differences of Owen's Q functions. Designs with
random variance components (Welch's unequal-variance test, ANCOVA with random
covariates) mix a conditional power over an F distribution:

    P = int_0^inf Pc(x) dF_{f1,f2}(x) = int_0^1 Pc(F^-1(nu)) dnu

which ``integrate_f_mixture`` evaluates with graded composite Gauss-Legendre.

All significance levels are the one-sided level alpha/2.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Tuple

import numpy as np

from .distributions import (
    NoncentralTParams,
    OwensQArgs,
    f_quantile_array,
    owens_q,
    t_cdf_noncentral,
    t_quantile,
)
from .errors import AccuracyError, DomainError
from .settings import get_settings

logger = logging.getLogger(__name__)

__all__ = [
    "HypothesisFamily",
    "Margins",
    "KnownVarTest",
    "WelchDesign",
    "AncovaPowerInput",
    "MixtureEstimate",
    "PowerResult",
    "DEFAULT_MIXTURE_TOL",
    "integrate_f_mixture",
    "integrate_f_mixture_detail",
    "power_sup_ni_exact",
    "power_equivalence_known_var",
    "welch_kernel",
    "power_sup_ni_welch",
    "power_equivalence_welch",
    "power_sup_ni_ancova",
    "power_equivalence_ancova",
    "ancova_power_result",
    "welch_power_result",
]

DEFAULT_MIXTURE_TOL = 1e-7

_MIX_GL_ORDER = 16
_MIX_NODES, _MIX_WEIGHTS = np.polynomial.legendre.leggauss(_MIX_GL_ORDER)
_MIX_BASE_PANELS = 4
_MIX_BASE_DEPTH = 20
_MIX_MAX_LEVEL = 8
# Right-hand grading stops 2^-40 short of 1 so every node stays below 1.0 in float.
_MIX_RIGHT_EXPONENT = 40

# Owen's Q differences below this are rounding noise, not a real negative value.
_NEGATIVE_NOISE = 1e-12


class HypothesisFamily(str, Enum):
    """Hypothesis-test family of a power calculation."""

    SUPERIORITY_NI = "superiority_ni"
    EQUIVALENCE = "equivalence"


@dataclass(frozen=True)
class Margins:
    """Test margins.

    Superiority and NI tests reject for (tau - m0) / se > C, with ``m0 = 0``
    for superiority and ``m0 < 0`` allowed for NI. Equivalence (TOST) tests use
    ``lower`` and ``upper`` and need both one-sided tests significant.
    """

    kind: HypothesisFamily
    m0: float = 0.0
    lower: Optional[float] = None
    upper: Optional[float] = None

    def __post_init__(self) -> None:
        if not math.isfinite(self.m0):
            raise DomainError(f"margin M0 must be finite, got {self.m0}")
        if self.kind is HypothesisFamily.EQUIVALENCE:
            if self.lower is None or self.upper is None:
                raise DomainError("equivalence margins need both lower and upper")
            if not (math.isfinite(self.lower) and math.isfinite(self.upper)):
                raise DomainError(
                    f"equivalence margins must be finite, got ({self.lower}, {self.upper})"
                )
            if self.lower > self.upper:
                raise DomainError(
                    f"lower margin {self.lower} must not exceed upper margin {self.upper}"
                )

    @classmethod
    def superiority(cls) -> "Margins":
        return cls(HypothesisFamily.SUPERIORITY_NI, m0=0.0)

    @classmethod
    def noninferiority(cls, m0: float) -> "Margins":
        return cls(HypothesisFamily.SUPERIORITY_NI, m0=m0)

    @classmethod
    def equivalence(cls, lower: float, upper: float) -> "Margins":
        return cls(HypothesisFamily.EQUIVALENCE, lower=lower, upper=upper)

    def deltas(self, tau1: float, scale: float) -> Tuple[float, float]:
        """Standardized distances (delta1, delta2) of the margins from tau1."""
        return (self.upper - tau1) / scale, (self.lower - tau1) / scale

    def warn_if_outside(self, tau1: float) -> None:
        if self.kind is HypothesisFamily.EQUIVALENCE and not self.lower < tau1 < self.upper:
            logger.warning(
                "True effect %.6g lies outside the equivalence margins (%.6g, %.6g); "
                "power is computed as written and clamped at 0",
                tau1, self.lower, self.upper,
            )


def _check_alpha(alpha_one_sided: float) -> float:
    if not 0 < alpha_one_sided < 0.5:
        raise DomainError(
            f"one-sided significance level must lie in (0, 0.5), got {alpha_one_sided}"
        )
    return float(alpha_one_sided)


@dataclass(frozen=True)
class KnownVarTest:
    """A t test whose variance factor n^-1 V and df f are known in advance."""

    f: float
    tau1: float
    scaled_sd: float
    alpha_one_sided: float

    def __post_init__(self) -> None:
        if not self.f > 0:
            raise DomainError(f"degrees of freedom must be positive, got {self.f}")
        if not self.scaled_sd > 0 or math.isinf(self.scaled_sd):
            raise DomainError(f"sqrt(n^-1 V) must be positive and finite, got {self.scaled_sd}")
        if not math.isfinite(self.tau1):
            raise DomainError(f"effect tau1 must be finite, got {self.tau1}")
        _check_alpha(self.alpha_one_sided)

    @property
    def critical_value(self) -> float:
        return t_quantile(self.f, 1.0 - self.alpha_one_sided)


@dataclass(frozen=True)
class WelchDesign:
    """Two normal groups with possibly unequal variances."""

    n0: int
    n1: int
    sigma0: float
    sigma1: float

    def __post_init__(self) -> None:
        if int(self.n0) != self.n0 or int(self.n1) != self.n1:
            raise DomainError("group sizes must be integers")
        if self.n0 < 2 or self.n1 < 2:
            raise DomainError(f"each group needs at least 2 subjects, got ({self.n0}, {self.n1})")
        if not (self.sigma0 > 0 and self.sigma1 > 0):
            raise DomainError(f"group SDs must be positive, got ({self.sigma0}, {self.sigma1})")

    @property
    def n(self) -> int:
        return int(self.n0 + self.n1)

    @property
    def var_scale(self) -> float:
        """n^-1 V = sigma1^2 / n1 + sigma0^2 / n0."""
        return self.sigma1**2 / self.n1 + self.sigma0**2 / self.n0


@dataclass(frozen=True)
class AncovaPowerInput:
    """Inputs of the ANCOVA contrast power formulas."""

    f: int
    q: int
    sigma: float
    v_l: float
    tau1: float
    margins: Margins
    alpha_one_sided: float

    def __post_init__(self) -> None:
        if int(self.f) != self.f or self.f < 1:
            raise DomainError(f"error df must be an integer >= 1, got {self.f}")
        if int(self.q) != self.q or self.q < 0:
            raise DomainError(f"covariate count must be a nonnegative integer, got {self.q}")
        if not self.sigma > 0:
            raise DomainError(f"residual SD must be positive, got {self.sigma}")
        if not self.v_l > 0:
            raise DomainError(f"contrast variance factor V_l must be positive, got {self.v_l}")
        if not math.isfinite(self.tau1):
            raise DomainError(f"effect tau1 must be finite, got {self.tau1}")
        _check_alpha(self.alpha_one_sided)

    @property
    def f2(self) -> int:
        return int(self.f) + 1

    @property
    def critical_value(self) -> float:
        return t_quantile(self.f, 1.0 - self.alpha_one_sided)

    def contrast_sd(self, upsilon: float = 0.0) -> float:
        """sqrt(sigma^2 V_l (1 + q Upsilon / f2))."""
        return self.sigma * math.sqrt(self.v_l * (1.0 + self.q * upsilon / self.f2))


@dataclass(frozen=True)
class MixtureEstimate:
    value: float
    error_estimate: float
    nodes: int
    level: int


@dataclass(frozen=True)
class PowerResult:
    """Exact power of one test together with the intermediates that produced it."""

    power: float
    formula: str
    tau1: float
    critical_value: float
    f: float
    f2: Optional[float] = None
    v_l: Optional[float] = None
    noncentrality: Optional[float] = None
    delta1: Optional[float] = None
    delta2: Optional[float] = None
    r: Optional[float] = None
    quadrature: Optional[MixtureEstimate] = None
    label: str = ""
    is_bound: bool = False


# =============================================================================
# F-mixture integration
# =============================================================================

def _mixture_edges(level: int) -> np.ndarray:
    n_mid = _MIX_BASE_PANELS * 2**level
    depth = _MIX_BASE_DEPTH + 4 * level
    right_depth = min(depth, _MIX_RIGHT_EXPONENT - int(math.log2(n_mid)))
    h = 1.0 / n_mid
    left = h * np.exp2(-np.arange(depth, 0, -1, dtype=float))
    right = 1.0 - h * np.exp2(-np.arange(1, right_depth + 1, dtype=float))
    uniform = np.linspace(0.0, 1.0, n_mid + 1)[1:-1]
    return np.concatenate(([0.0], left, uniform, right, [1.0]))


def _mixture_rule(level: int) -> Tuple[np.ndarray, np.ndarray]:
    edges = _mixture_edges(level)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nu = (mid[:, None] + half[:, None] * _MIX_NODES[None, :]).ravel()
    w = (half[:, None] * _MIX_WEIGHTS[None, :]).ravel()
    return nu, w


def integrate_f_mixture_detail(
    pc: Callable[[float], float],
    f1: float,
    f2: float,
    tol: Optional[float] = None,
) -> MixtureEstimate:
    """Integrate ``pc`` against F(f1, f2) with refinement diagnostics.

    ``tol`` defaults to ``TRIAL_POWER_QUAD_TOL`` (``DEFAULT_MIXTURE_TOL`` when unset).
    """
    if tol is None:
        tol = get_settings().quad_tol
    if not tol > 0:
        raise DomainError(f"tolerance must be positive, got {tol}")
    previous: Optional[float] = None
    diff = math.inf
    value = math.nan
    for level in range(_MIX_MAX_LEVEL + 1):
        nu, w = _mixture_rule(level)
        x = f_quantile_array(nu, f1, f2)
        values = np.fromiter((pc(float(xi)) for xi in x), dtype=float, count=x.size)
        value = float(np.dot(w, values))
        if previous is not None:
            diff = abs(value - previous)
            logger.debug("F(%g, %g) mixture level %d: %.12f (diff %.2e)", f1, f2, level, value, diff)
            if diff < tol:
                return MixtureEstimate(value, diff, int(nu.size), level)
        previous = value
    raise AccuracyError(
        f"F({f1:g}, {f2:g}) mixture did not converge to {tol:.1e}", value, diff
    )


def integrate_f_mixture(
    pc: Callable[[float], float],
    f1: float,
    f2: float,
    tol: Optional[float] = None,
) -> float:
    """int_0^1 pc(F^-1_{f1,f2}(nu)) dnu, the expectation of pc over F(f1, f2)."""
    return integrate_f_mixture_detail(pc, f1, f2, tol).value


# =============================================================================
# Known variance factor
# =============================================================================

def _upper_tail(c: float, f: float, lam: float) -> float:
    return 1.0 - t_cdf_noncentral(c, NoncentralTParams(f=f, lam=lam))


def _warn_direction(tau1: float, m0: float) -> None:
    if tau1 < m0:
        logger.warning(
            "Effect %.6g lies below the margin %.6g; power is evaluated on |tau1 - M0|",
            tau1, m0,
        )


def _tost_owens_q(f: float, c: float, delta1: float, delta2: float) -> float:
    r = math.sqrt(f) * (delta1 - delta2) / (2.0 * c)
    if r <= 0:
        return 0.0
    value = owens_q(OwensQArgs(f=f, t=-c, delta=delta2, a=0.0, b=r)) - owens_q(
        OwensQArgs(f=f, t=c, delta=delta1, a=0.0, b=r)
    )
    if value < -_NEGATIVE_NOISE:
        logger.warning("Negative TOST power integrand %.3e clamped to 0", value)
    return max(value, 0.0)


def _require_equivalence(margins: Margins) -> None:
    if margins.kind is not HypothesisFamily.EQUIVALENCE:
        raise DomainError("equivalence power requested with non-equivalence margins")


def _require_sup_ni(margins: Margins) -> None:
    if margins.kind is not HypothesisFamily.SUPERIORITY_NI:
        raise DomainError("superiority/NI power requested with equivalence margins")


def power_sup_ni_exact(test: KnownVarTest, m0: float) -> float:
    """Pr[t(f, |tau1 - M0| / sqrt(n^-1 V)) > t_{f, 1-alpha/2}]."""
    if not math.isfinite(m0):
        raise DomainError(f"margin M0 must be finite, got {m0}")
    _warn_direction(test.tau1, m0)
    lam = abs(test.tau1 - m0) / test.scaled_sd
    return _upper_tail(test.critical_value, test.f, lam)


def power_equivalence_known_var(test: KnownVarTest, margins: Margins) -> float:
    """TOST power Q_f(-C, delta2; 0, R) - Q_f(C, delta1; 0, R), floored at 0."""
    _require_equivalence(margins)
    margins.warn_if_outside(test.tau1)
    delta1, delta2 = margins.deltas(test.tau1, test.scaled_sd)
    return _tost_owens_q(test.f, test.critical_value, delta1, delta2)


# =============================================================================
# Welch (unequal variances)
# =============================================================================

def welch_kernel(
    u: float, d: WelchDesign, alpha_one_sided: float
) -> Tuple[float, float, float]:
    """(h*(u), f(u), h(u)) for the variance ratio u = (s1^2/sigma1^2) / (s0^2/sigma0^2)."""
    if not u > 0 or math.isinf(u):
        raise DomainError(f"variance ratio u must be positive and finite, got {u}")
    alpha = _check_alpha(alpha_one_sided)
    a1 = u * d.sigma1**2 / d.n1
    a0 = d.sigma0**2 / d.n0
    spread = a1 + a0
    h_star = math.sqrt(
        (d.n - 2) * spread / (d.var_scale * ((d.n1 - 1) * u + d.n0 - 1))
    )
    f_u = spread**2 / (a1**2 / (d.n1 - 1) + a0**2 / (d.n0 - 1))
    h = t_quantile(f_u, 1.0 - alpha) * h_star
    return h_star, f_u, h


def power_sup_ni_welch(
    d: WelchDesign, tau1: float, m0: float, alpha_one_sided: float
) -> float:
    """Welch superiority/NI power mixed over u ~ F(n1 - 1, n0 - 1)."""
    return _welch_sup_ni_detail(d, tau1, m0, alpha_one_sided).value


def _welch_sup_ni_detail(
    d: WelchDesign, tau1: float, m0: float, alpha_one_sided: float
) -> MixtureEstimate:
    _check_alpha(alpha_one_sided)
    _warn_direction(tau1, m0)
    lam = abs(tau1 - m0) / math.sqrt(d.var_scale)
    df = d.n - 2

    def conditional(u: float) -> float:
        _, _, h = welch_kernel(u, d, alpha_one_sided)
        return _upper_tail(h, df, lam)

    return integrate_f_mixture_detail(conditional, d.n1 - 1, d.n0 - 1)


def power_equivalence_welch(
    d: WelchDesign, tau1: float, margins: Margins, alpha_one_sided: float
) -> float:
    """Welch TOST power mixed over u ~ F(n1 - 1, n0 - 1)."""
    return _welch_equivalence_detail(d, tau1, margins, alpha_one_sided).value


def _welch_equivalence_detail(
    d: WelchDesign, tau1: float, margins: Margins, alpha_one_sided: float
) -> MixtureEstimate:
    _require_equivalence(margins)
    _check_alpha(alpha_one_sided)
    margins.warn_if_outside(tau1)
    delta1, delta2 = margins.deltas(tau1, math.sqrt(d.var_scale))
    df = d.n - 2

    def conditional(u: float) -> float:
        _, _, h = welch_kernel(u, d, alpha_one_sided)
        return _tost_owens_q(df, h, delta1, delta2)

    return integrate_f_mixture_detail(conditional, d.n1 - 1, d.n0 - 1)


# =============================================================================
# ANCOVA
# =============================================================================

def _ancova_sup_ni_detail(inp: AncovaPowerInput) -> Tuple[float, Optional[MixtureEstimate]]:
    _require_sup_ni(inp.margins)
    m0 = inp.margins.m0
    if inp.q == 0:
        test = KnownVarTest(inp.f, inp.tau1, inp.contrast_sd(), inp.alpha_one_sided)
        return power_sup_ni_exact(test, m0), None

    _warn_direction(inp.tau1, m0)
    c = inp.critical_value
    gap = abs(inp.tau1 - m0)

    def conditional(upsilon: float) -> float:
        return _upper_tail(c, inp.f, gap / inp.contrast_sd(upsilon))

    estimate = integrate_f_mixture_detail(conditional, inp.q, inp.f2)
    return estimate.value, estimate


def _ancova_equivalence_detail(
    inp: AncovaPowerInput,
) -> Tuple[float, Optional[MixtureEstimate]]:
    _require_equivalence(inp.margins)
    if inp.q == 0:
        test = KnownVarTest(inp.f, inp.tau1, inp.contrast_sd(), inp.alpha_one_sided)
        return power_equivalence_known_var(test, inp.margins), None

    inp.margins.warn_if_outside(inp.tau1)
    c = inp.critical_value

    def conditional(upsilon: float) -> float:
        delta1, delta2 = inp.margins.deltas(inp.tau1, inp.contrast_sd(upsilon))
        return _tost_owens_q(inp.f, c, delta1, delta2)

    estimate = integrate_f_mixture_detail(conditional, inp.q, inp.f2)
    return estimate.value, estimate


def power_sup_ni_ancova(inp: AncovaPowerInput) -> float:
    """ANCOVA superiority/NI power mixed over Upsilon ~ F(q, f2)."""
    return _ancova_sup_ni_detail(inp)[0]


def power_equivalence_ancova(inp: AncovaPowerInput) -> float:
    """ANCOVA TOST power mixed over Upsilon ~ F(q, f2)."""
    return _ancova_equivalence_detail(inp)[0]


def ancova_power_result(inp: AncovaPowerInput, label: str = "") -> PowerResult:
    """Power plus intermediates, evaluated at the nominal Upsilon = 0 where they vary."""
    c = inp.critical_value
    sd = inp.contrast_sd()
    if inp.margins.kind is HypothesisFamily.EQUIVALENCE:
        power, estimate = _ancova_equivalence_detail(inp)
        delta1, delta2 = inp.margins.deltas(inp.tau1, sd)
        return PowerResult(
            power=power,
            formula="ancova_equivalence" if inp.q else "known_var_equivalence",
            tau1=inp.tau1,
            critical_value=c,
            f=inp.f,
            f2=inp.f2,
            v_l=inp.v_l,
            delta1=delta1,
            delta2=delta2,
            r=math.sqrt(inp.f) * (delta1 - delta2) / (2.0 * c),
            quadrature=estimate,
            label=label,
        )
    power, estimate = _ancova_sup_ni_detail(inp)
    return PowerResult(
        power=power,
        formula="ancova_sup_ni" if inp.q else "known_var_sup_ni",
        tau1=inp.tau1,
        critical_value=c,
        f=inp.f,
        f2=inp.f2,
        v_l=inp.v_l,
        noncentrality=abs(inp.tau1 - inp.margins.m0) / sd,
        quadrature=estimate,
        label=label,
    )


def welch_power_result(
    d: WelchDesign,
    tau1: float,
    margins: Margins,
    alpha_one_sided: float,
    label: str = "",
) -> PowerResult:
    """Welch power plus intermediates; the critical value reported is h(1)."""
    scale = math.sqrt(d.var_scale)
    _, _, h_one = welch_kernel(1.0, d, alpha_one_sided)
    if margins.kind is HypothesisFamily.EQUIVALENCE:
        estimate = _welch_equivalence_detail(d, tau1, margins, alpha_one_sided)
        delta1, delta2 = margins.deltas(tau1, scale)
        return PowerResult(
            power=estimate.value,
            formula="welch_equivalence",
            tau1=tau1,
            critical_value=h_one,
            f=d.n - 2,
            v_l=d.var_scale,
            delta1=delta1,
            delta2=delta2,
            r=math.sqrt(d.n - 2) * (delta1 - delta2) / (2.0 * h_one),
            quadrature=estimate,
            label=label,
        )
    estimate = _welch_sup_ni_detail(d, tau1, margins.m0, alpha_one_sided)
    return PowerResult(
        power=estimate.value,
        formula="welch_sup_ni",
        tau1=tau1,
        critical_value=h_one,
        f=d.n - 2,
        v_l=d.var_scale,
        noncentrality=abs(tau1 - margins.m0) / scale,
        quadrature=estimate,
        label=label,
    )
