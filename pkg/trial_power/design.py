"""Trial-design bookkeeping: strata, allocation, contrasts and plans.

A ``StratifiedDesign`` records n_sg subjects per stratum s and arm g, the
stratum coding (each stratum's r - 1 indicator values), the covariate count q
and the residual SD. Contrast variances, error df, multiplicity adjustment,
gold-standard NI plans and the sample-size search all work on top of it.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import DomainError, RankDeficiencyError, UnreachableTargetError
from .power_engine import (
    AncovaPowerInput,
    Margins,
    PowerResult,
    WelchDesign,
    ancova_power_result,
    welch_power_result,
)

logger = logging.getLogger(__name__)

__all__ = [
    "StratifiedDesign",
    "Contrast",
    "TestSpec",
    "Plan",
    "SampleSizeResult",
    "DEFAULT_CELL_CAP",
    "contrast_variance",
    "brute_force_contrast_variance",
    "error_df",
    "bonferroni",
    "gold_standard_overall",
    "gold_standard_plan",
    "allocation_pattern",
    "scale_design",
    "evaluate_test",
    "evaluate_plan",
    "solve_sample_size",
]

DEFAULT_CELL_CAP = 10**6
_CONTRAST_SUM_TOL = 1e-12


def _as_int_matrix(name: str, rows: Sequence[Sequence[float]]) -> Tuple[Tuple[int, ...], ...]:
    try:
        matrix = np.asarray(rows, dtype=float)
    except (TypeError, ValueError) as exc:
        raise DomainError(f"{name} must be a rectangular numeric table") from exc
    if matrix.ndim != 2 or matrix.size == 0:
        raise DomainError(f"{name} must be a non-empty 2-D table")
    if np.any(matrix != np.round(matrix)):
        raise DomainError(f"{name} must contain integers")
    return tuple(tuple(int(v) for v in row) for row in matrix)


@dataclass(frozen=True)
class StratifiedDesign:
    """K* = K + 1 arms randomized within h strata, with q covariates.

    ``cell_counts[s][g]`` is n_sg. ``stratum_coding[s]`` holds the r - 1
    indicator values z of stratum s; when omitted every stratum gets its own
    parameter (r = h) with the first stratum as reference.
    """

    cell_counts: Tuple[Tuple[int, ...], ...]
    q: int = 0
    sigma: float = 1.0
    stratum_coding: Optional[Tuple[Tuple[float, ...], ...]] = None
    strata_labels: Tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        counts = _as_int_matrix("cell_counts", self.cell_counts)
        object.__setattr__(self, "cell_counts", counts)
        if np.any(self.counts < 1):
            raise DomainError("every stratum x arm cell needs at least one subject")
        if self.k_arms < 2:
            raise DomainError(f"a design needs at least 2 arms, got {self.k_arms}")
        if int(self.q) != self.q or self.q < 0:
            raise DomainError(f"covariate count q must be a nonnegative integer, got {self.q}")
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise DomainError(f"residual SD sigma must be positive, got {self.sigma}")

        if self.stratum_coding is not None:
            coding = np.asarray(self.stratum_coding, dtype=float)
            if coding.ndim == 1 and coding.size == 0:
                coding = coding.reshape(self.h, 0)
            if coding.ndim != 2 or coding.shape[0] != self.h:
                raise DomainError(
                    f"stratum_coding needs one row per stratum ({self.h}), got shape {coding.shape}"
                )
            object.__setattr__(
                self, "stratum_coding", tuple(tuple(float(v) for v in row) for row in coding)
            )
        if self.r > self.h:
            raise DomainError(f"stratum parameters r={self.r} exceed strata count h={self.h}")
        if self.r == self.h and len({tuple(row) for row in self.coding}) != self.h:
            raise DomainError("stratum_coding rows must be distinct under full stratification")
        if self.strata_labels and len(self.strata_labels) != self.h:
            raise DomainError(f"strata_labels needs {self.h} entries")
        if self.f < 1:
            raise DomainError(
                f"error df f = n - q - r - K = {self.n} - {self.q} - {self.r} - {self.K} "
                f"= {self.f} must be >= 1"
            )

    @property
    def counts(self) -> np.ndarray:
        return np.asarray(self.cell_counts, dtype=float)

    @property
    def coding(self) -> np.ndarray:
        if self.stratum_coding is None:
            return np.eye(self.h)[:, 1:]
        return np.asarray(self.stratum_coding, dtype=float).reshape(self.h, -1)

    @property
    def h(self) -> int:
        return len(self.cell_counts)

    @property
    def k_arms(self) -> int:
        return len(self.cell_counts[0])

    @property
    def K(self) -> int:
        return self.k_arms - 1

    @property
    def r(self) -> int:
        return self.coding.shape[1] + 1

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def n_g(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    @property
    def f(self) -> int:
        return self.n - self.q - self.r - self.K


@dataclass(frozen=True)
class Contrast:
    """Coefficients l_0..l_K of a linear contrast of arm means; they sum to 0."""

    coeffs: Tuple[float, ...]

    def __post_init__(self) -> None:
        coeffs = tuple(float(v) for v in self.coeffs)
        object.__setattr__(self, "coeffs", coeffs)
        if len(coeffs) < 2:
            raise DomainError("a contrast needs at least two coefficients")
        if not all(math.isfinite(v) for v in coeffs):
            raise DomainError("contrast coefficients must be finite")
        total = math.fsum(coeffs)
        if abs(total) > _CONTRAST_SUM_TOL:
            raise DomainError(f"contrast coefficients must sum to 0, got sum {total:.3g}")
        if not any(coeffs):
            raise DomainError("contrast coefficients must not all be 0")

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.coeffs, dtype=float)

    def effect(self, mu: Sequence[float]) -> float:
        """tau1 = sum_g l_g mu_g."""
        if len(mu) != len(self.coeffs):
            raise DomainError(
                f"contrast has {len(self.coeffs)} coefficients but {len(mu)} arm means were given"
            )
        return math.fsum(l * m for l, m in zip(self.coeffs, mu))


@dataclass(frozen=True)
class TestSpec:
    """One hypothesis test of a plan: contrast, margins, level and assumed arm means."""

    __test__ = False

    contrast: Contrast
    margins: Margins
    alpha_one_sided: float
    mu: Tuple[float, ...]
    label: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "mu", tuple(float(v) for v in self.mu))
        if not 0 < self.alpha_one_sided < 0.5:
            raise DomainError(
                f"alpha_one_sided must lie in (0, 0.5), got {self.alpha_one_sided}"
            )
        if len(self.mu) != len(self.contrast.coeffs):
            raise DomainError(
                f"test '{self.label}': {len(self.mu)} arm means for "
                f"{len(self.contrast.coeffs)} contrast coefficients"
            )

    @property
    def tau1(self) -> float:
        return self.contrast.effect(self.mu)


AnyDesign = Union[StratifiedDesign, WelchDesign]


@dataclass(frozen=True)
class Plan:
    """A design evaluated under one or more tests."""

    design: AnyDesign
    tests: Tuple[TestSpec, ...]
    gold_standard: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "tests", tuple(self.tests))
        if not self.tests:
            raise DomainError("a plan needs at least one test")
        arms = self.design.k_arms if isinstance(self.design, StratifiedDesign) else 2
        for test in self.tests:
            if len(test.contrast.coeffs) != arms:
                raise DomainError(
                    f"test '{test.label}' has {len(test.contrast.coeffs)} coefficients "
                    f"for a {arms}-arm design"
                )
        if self.gold_standard and len(self.tests) != 2:
            raise DomainError("a gold-standard plan consists of exactly two tests")


@dataclass(frozen=True)
class SampleSizeResult:
    multiplier: int
    power: float
    design: AnyDesign


# =============================================================================
# Variance and degrees of freedom
# =============================================================================

def _first_dependent_indicator(s_zz: np.ndarray) -> List[str]:
    rank = 0
    for k in range(s_zz.shape[0]):
        new_rank = np.linalg.matrix_rank(s_zz[: k + 1, : k + 1])
        if new_rank == rank:
            return [f"z{k + 1}"]
        rank = new_rank
    return []


def contrast_variance(d: StratifiedDesign, c: Contrast) -> float:
    """V_l = sum_g l_g^2 / n_g + (sum_g l_g zbar_g)' S_zz^-1 (sum_g l_g zbar_g)."""
    if len(c.coeffs) != d.k_arms:
        raise DomainError(f"contrast has {len(c.coeffs)} coefficients for {d.k_arms} arms")
    l = c.array
    counts = d.counts
    n_g = d.n_g
    base = float(np.sum(l * l / n_g))
    z = d.coding
    if z.shape[1] == 0:
        return base

    zbar = (counts.T @ z) / n_g[:, None]
    s_zz = np.zeros((z.shape[1], z.shape[1]))
    for g in range(d.k_arms):
        centered = z - zbar[g]
        s_zz += centered.T @ (counts[:, g, None] * centered)
    if np.linalg.matrix_rank(s_zz) < z.shape[1]:
        raise RankDeficiencyError(
            "S_zz is singular: an indicator has no within-arm variation",
            _first_dependent_indicator(s_zz),
        )
    lz = l @ zbar
    return base + float(lz @ np.linalg.solve(s_zz, lz))


def brute_force_contrast_variance(d: StratifiedDesign, c: Contrast) -> float:
    """l'(X'X)^-1 l over the arm block of the explicit cell-means design matrix."""
    rows = []
    for s, z_s in enumerate(d.coding):
        for g in range(d.k_arms):
            dummy = np.zeros(d.k_arms)
            dummy[g] = 1.0
            row = np.concatenate((dummy, z_s))
            rows.extend([row] * d.cell_counts[s][g])
    x = np.asarray(rows)
    xtx = x.T @ x
    if np.linalg.matrix_rank(xtx) < xtx.shape[0]:
        raise RankDeficiencyError("design matrix is rank deficient")
    block = np.linalg.inv(xtx)[: d.k_arms, : d.k_arms]
    l = c.array
    return float(l @ block @ l)


def error_df(d: StratifiedDesign) -> Tuple[int, int]:
    """(f, f2) = (n - q - r - K, f + 1)."""
    f = d.f
    if f < 1:
        raise DomainError(f"error df must be >= 1, got {f}")
    return f, f + 1


# =============================================================================
# Multiplicity and gold-standard NI
# =============================================================================

def bonferroni(alpha_one_sided_family: float, m: int) -> float:
    """Split a one-sided family level equally over m tests."""
    if int(m) != m or m < 1:
        raise DomainError(f"number of tests must be a positive integer, got {m}")
    if not 0 < alpha_one_sided_family < 0.5:
        raise DomainError(f"family level must lie in (0, 0.5), got {alpha_one_sided_family}")
    return alpha_one_sided_family / m


def gold_standard_overall(p1: float, p2: float) -> float:
    """Lower bound P1 + P2 - 1 on the power of requiring both tests."""
    for name, p in (("p1", p1), ("p2", p2)):
        if not 0 <= p <= 1:
            raise DomainError(f"{name} must be a probability, got {p}")
    return max(p1 + p2 - 1.0, 0.0)


def gold_standard_plan(
    design: StratifiedDesign,
    mu: Sequence[float],
    retention: float = 0.5,
    alpha_one_sided: float = 0.025,
) -> Plan:
    """Three-arm plan: placebo (0), active control (1), experimental (2).

    Test 1 shows the active control beats placebo; test 2 shows the
    experimental arm keeps more than ``retention`` of the control's effect,
    mu2 - mu0 > retention * (mu1 - mu0).
    """
    if design.k_arms != 3:
        raise DomainError(f"a gold-standard plan needs 3 arms, got {design.k_arms}")
    if not 0 < retention < 1:
        raise DomainError(f"retention fraction must lie in (0, 1), got {retention}")
    tests = (
        TestSpec(
            Contrast((-1.0, 1.0, 0.0)),
            Margins.superiority(),
            alpha_one_sided,
            tuple(mu),
            label="active control vs placebo",
        ),
        TestSpec(
            Contrast((-(1.0 - retention), -retention, 1.0)),
            Margins.superiority(),
            alpha_one_sided,
            tuple(mu),
            label=f"experimental retains {retention:.0%} of control effect",
        ),
    )
    return Plan(design, tests, gold_standard=True)


# =============================================================================
# Evaluation
# =============================================================================

def evaluate_test(design: AnyDesign, test: TestSpec) -> PowerResult:
    """Dispatch one test to the matching exact power formula."""
    tau1 = test.tau1
    if isinstance(design, WelchDesign):
        if test.contrast.coeffs != (-1.0, 1.0):
            raise DomainError("two-sample designs take the contrast (-1, 1)")
        return welch_power_result(
            design, tau1, test.margins, test.alpha_one_sided, label=test.label
        )
    f, _ = error_df(design)
    inp = AncovaPowerInput(
        f=f,
        q=design.q,
        sigma=design.sigma,
        v_l=contrast_variance(design, test.contrast),
        tau1=tau1,
        margins=test.margins,
        alpha_one_sided=test.alpha_one_sided,
    )
    return ancova_power_result(inp, label=test.label)


def evaluate_plan(plan: Plan) -> List[PowerResult]:
    """Exact powers of every test, plus the P1 + P2 - 1 bound for gold-standard plans."""
    start = time.time()
    results = [evaluate_test(plan.design, test) for test in plan.tests]
    if plan.gold_standard:
        bound = gold_standard_overall(results[0].power, results[1].power)
        results.append(
            PowerResult(
                power=bound,
                formula="gold_standard_bound",
                tau1=math.nan,
                critical_value=math.nan,
                f=math.nan,
                label="overall (lower bound P1 + P2 - 1)",
                is_bound=True,
            )
        )
    logger.info("Evaluated %d tests in %.2fs", len(plan.tests), time.time() - start)
    return results


# =============================================================================
# Sample size
# =============================================================================

def allocation_pattern(design: AnyDesign) -> Tuple[int, ...]:
    """Smallest integer cell (or group) sizes with the design's allocation ratios."""
    if isinstance(design, WelchDesign):
        sizes = (int(design.n0), int(design.n1))
    else:
        sizes = tuple(v for row in design.cell_counts for v in row)
    divisor = math.gcd(*sizes)
    return tuple(v // divisor for v in sizes)


def scale_design(design: AnyDesign, multiplier: int) -> AnyDesign:
    """The design with n_sg = multiplier * pattern_sg, pattern from ``allocation_pattern``."""
    pattern = allocation_pattern(design)
    m = int(multiplier)
    if isinstance(design, WelchDesign):
        return replace(design, n0=pattern[0] * m, n1=pattern[1] * m)
    width = design.k_arms
    counts = tuple(
        tuple(v * m for v in pattern[row * width : (row + 1) * width])
        for row in range(design.h)
    )
    return replace(design, cell_counts=counts)


def _smallest_feasible_multiplier(design: AnyDesign) -> int:
    pattern = allocation_pattern(design)
    if isinstance(design, WelchDesign):
        return max(1, math.ceil(2 / min(pattern)))
    return max(1, math.ceil((1 + design.q + design.r + design.K) / sum(pattern)))


def solve_sample_size(
    design: AnyDesign,
    test: TestSpec,
    target_power: float,
    cap: int = DEFAULT_CELL_CAP,
) -> SampleSizeResult:
    """Smallest multiplier m with power(n_sg = m * pattern_sg) >= target.

    The pattern is the design's allocation reduced by the gcd of its cell
    sizes, so a design with 6 subjects in every cell searches over m * 1.
    Power is assumed nondecreasing in m: the search brackets by doubling and
    then bisects on the integers.
    """
    alpha = test.alpha_one_sided
    if not alpha < target_power < 1:
        raise DomainError(f"target power must lie in ({alpha}, 1), got {target_power}")
    cache: Dict[int, float] = {}

    def power_at(m: int) -> float:
        if m not in cache:
            cache[m] = evaluate_test(scale_design(design, m), test).power
            logger.debug("multiplier %d -> power %.6f", m, cache[m])
        return cache[m]

    lo = _smallest_feasible_multiplier(design)
    if lo > cap:
        raise DomainError(f"smallest feasible multiplier {lo} exceeds the cap {cap}")
    if power_at(lo) >= target_power:
        return SampleSizeResult(lo, power_at(lo), scale_design(design, lo))

    hi = lo
    while power_at(hi) < target_power:
        if hi >= cap:
            raise UnreachableTargetError(target_power, cap, power_at(hi))
        lo = hi
        hi = min(2 * hi, cap)

    while hi - lo > 1:
        mid = (lo + hi) // 2
        if power_at(mid) >= target_power:
            hi = mid
        else:
            lo = mid
    logger.info("Sample size: multiplier %d reaches power %.6f", hi, power_at(hi))
    return SampleSizeResult(hi, power_at(hi), scale_design(design, hi))
