"""Monte Carlo oracle for the exact power formulas.

Datasets follow the stratified ANCOVA outcome model

    y = mu_g + z' alpha + x' beta + eps,    eps ~ N(0, sigma^2)
    x = B z + e,                            e with unit variance

with exact per-cell counts. Each replication draws from its own stream,
child ``rep_index`` of ``SeedSequence(seed)``, so results do not depend on
how replications are split across worker processes.
"""
from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from functools import partial
from typing import Iterator, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.linalg import solve_triangular

from .design import StratifiedDesign, TestSpec
from .distributions import t_quantile, t_quantile_array
from .errors import DomainError, RankDeficiencyError
from .power_engine import HypothesisFamily, Margins, WelchDesign
from .settings import get_settings

logger = logging.getLogger(__name__)

__all__ = [
    "CovariateLaw",
    "SimModel",
    "SimDataset",
    "AncovaFit",
    "SimResult",
    "WelchSimModel",
    "simulate_dataset",
    "simulate_welch_dataset",
    "fit_ancova",
    "mc_power",
    "mc_power_welch",
]

BLOCK_SIZE = 2000


class CovariateLaw(str, Enum):
    NORMAL = "normal"
    UNIFORM = "uniform"


def _rep_rng(seed: int, rep_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(rep_index,)))


def _blocks(n_reps: int, size: int = BLOCK_SIZE) -> Iterator[Tuple[int, int]]:
    for start in range(0, n_reps, size):
        yield start, min(start + size, n_reps)


@dataclass(frozen=True)
class SimModel:
    """Data-generating model and replication controls for ``mc_power``."""

    design: StratifiedDesign
    mu: Tuple[float, ...]
    stratum_effects: Tuple[float, ...] = ()
    covariate_slopes: Tuple[float, ...] = ()
    covariate_means: Tuple[Tuple[float, ...], ...] = ()
    sigma: Optional[float] = None
    seed: int = 0
    n_reps: int = 10_000
    covariate_law: CovariateLaw = CovariateLaw.NORMAL

    def __post_init__(self) -> None:
        d = self.design
        object.__setattr__(self, "mu", tuple(float(v) for v in self.mu))
        if len(self.mu) != d.k_arms:
            raise DomainError(f"model needs {d.k_arms} arm means, got {len(self.mu)}")
        alpha = tuple(float(v) for v in self.stratum_effects) or (0.0,) * (d.r - 1)
        if len(alpha) != d.r - 1:
            raise DomainError(f"model needs {d.r - 1} stratum effects, got {len(alpha)}")
        object.__setattr__(self, "stratum_effects", alpha)
        beta = tuple(float(v) for v in self.covariate_slopes) or (0.0,) * d.q
        if len(beta) != d.q:
            raise DomainError(f"model needs {d.q} covariate slopes, got {len(beta)}")
        object.__setattr__(self, "covariate_slopes", beta)
        means = np.asarray(self.covariate_means, dtype=float)
        if means.size == 0:
            means = np.zeros((d.q, d.r - 1))
        if means.shape != (d.q, d.r - 1):
            raise DomainError(
                f"covariate_means must be {d.q} x {d.r - 1}, got shape {means.shape}"
            )
        object.__setattr__(self, "covariate_means", tuple(tuple(row) for row in means))
        if self.sigma is not None and not self.sigma >= 0:
            raise DomainError(f"simulation sigma must be >= 0, got {self.sigma}")
        if int(self.seed) != self.seed or self.seed < 0:
            raise DomainError(f"seed must be a nonnegative integer, got {self.seed}")
        if int(self.n_reps) != self.n_reps or self.n_reps < 1:
            raise DomainError(f"n_reps must be a positive integer, got {self.n_reps}")
        object.__setattr__(self, "covariate_law", CovariateLaw(self.covariate_law))

    @property
    def noise_sd(self) -> float:
        return self.design.sigma if self.sigma is None else float(self.sigma)

    @property
    def means_matrix(self) -> np.ndarray:
        return np.asarray(self.covariate_means, dtype=float).reshape(self.design.q, self.design.r - 1)


@dataclass(frozen=True)
class SimDataset:
    """One simulated trial, subjects ordered by stratum then arm."""

    group: np.ndarray
    stratum: np.ndarray
    z: np.ndarray
    x: np.ndarray
    y: np.ndarray

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({"group": self.group, "stratum": self.stratum})
        for k in range(self.z.shape[1]):
            frame[f"z{k + 1}"] = self.z[:, k]
        for j in range(self.x.shape[1]):
            frame[f"x{j + 1}"] = self.x[:, j]
        frame["y"] = self.y
        return frame


@dataclass(frozen=True)
class _Layout:
    group: np.ndarray
    stratum: np.ndarray
    z: np.ndarray
    fixed_columns: np.ndarray
    column_names: Tuple[str, ...]


def _layout(d: StratifiedDesign) -> _Layout:
    group, stratum = [], []
    for s, row in enumerate(d.cell_counts):
        for g, count in enumerate(row):
            group.extend([g] * count)
            stratum.extend([s] * count)
    group_arr = np.asarray(group, dtype=int)
    stratum_arr = np.asarray(stratum, dtype=int)
    z = d.coding[stratum_arr]
    dummies = np.eye(d.k_arms)[group_arr]
    names = tuple(f"arm{g}" for g in range(d.k_arms)) + tuple(
        f"z{k + 1}" for k in range(d.r - 1)
    ) + tuple(f"x{j + 1}" for j in range(d.q))
    return _Layout(group_arr, stratum_arr, z, np.hstack((dummies, z)), names)


def _draw_noise(
    rng: np.random.Generator, n: int, q: int, law: CovariateLaw
) -> Tuple[np.ndarray, np.ndarray]:
    if law is CovariateLaw.UNIFORM:
        bound = math.sqrt(3.0)
        covariate_noise = rng.uniform(-bound, bound, size=(n, q))
    else:
        covariate_noise = rng.standard_normal((n, q))
    return covariate_noise, rng.standard_normal(n)


def simulate_dataset(model: SimModel, rep_index: int) -> SimDataset:
    """Replication ``rep_index`` of the model; deterministic in (seed, rep_index)."""
    if int(rep_index) != rep_index or rep_index < 0:
        raise DomainError(f"rep_index must be a nonnegative integer, got {rep_index}")
    d = model.design
    layout = _layout(d)
    rng = _rep_rng(model.seed, int(rep_index))
    covariate_noise, eps = _draw_noise(rng, d.n, d.q, model.covariate_law)
    x = layout.z @ model.means_matrix.T + covariate_noise
    y = (
        np.asarray(model.mu)[layout.group]
        + layout.z @ np.asarray(model.stratum_effects)
        + x @ np.asarray(model.covariate_slopes)
        + model.noise_sd * eps
    )
    return SimDataset(layout.group, layout.stratum, layout.z, x, y)


# =============================================================================
# Least squares
# =============================================================================

@dataclass(frozen=True)
class AncovaFit:
    coef: np.ndarray
    column_names: Tuple[str, ...]
    s2: float
    df: int
    cov_unscaled: np.ndarray
    k_arms: int
    n_indicators: int

    @property
    def mu_hat(self) -> np.ndarray:
        return self.coef[: self.k_arms]

    @property
    def stratum_effects(self) -> np.ndarray:
        return self.coef[self.k_arms : self.k_arms + self.n_indicators]

    @property
    def slopes(self) -> np.ndarray:
        return self.coef[self.k_arms + self.n_indicators :]

    def contrast(self, coeffs: Sequence[float]) -> Tuple[float, float]:
        """(estimate, standard error) of sum_g l_g mu_hat_g."""
        l = np.zeros(self.coef.size)
        l[: self.k_arms] = coeffs
        return float(l @ self.coef), math.sqrt(self.s2 * float(l @ self.cov_unscaled @ l))


def fit_ancova(dataset: SimDataset, design: StratifiedDesign) -> AncovaFit:
    """OLS of y on arm dummies, stratum indicators and covariates via QR."""
    layout = _layout(design)
    x_mat = np.hstack((layout.fixed_columns, dataset.x))
    n, p = x_mat.shape
    q_mat, r_mat = np.linalg.qr(x_mat)
    diag = np.abs(np.diag(r_mat))
    tol = max(n, p) * np.finfo(float).eps * max(diag.max(), 1.0)
    collinear = [name for name, value in zip(layout.column_names, diag) if value <= tol]
    if collinear:
        raise RankDeficiencyError("least-squares design matrix is rank deficient", collinear)
    coef = solve_triangular(r_mat, q_mat.T @ dataset.y)
    resid = dataset.y - x_mat @ coef
    df = n - p
    r_inv = solve_triangular(r_mat, np.eye(p))
    return AncovaFit(
        coef=coef,
        column_names=layout.column_names,
        s2=float(resid @ resid) / df,
        df=df,
        cov_unscaled=r_inv @ r_inv.T,
        k_arms=design.k_arms,
        n_indicators=design.r - 1,
    )


# =============================================================================
# Rejection counting
# =============================================================================

@dataclass(frozen=True)
class SimResult:
    """Rejection counts of a Monte Carlo run."""

    labels: Tuple[str, ...]
    rejections: Tuple[int, ...]
    n_reps: int
    joint_rejections: Optional[int] = None
    elapsed: float = field(default=0.0, compare=False)

    @property
    def rates(self) -> Tuple[float, ...]:
        return tuple(count / self.n_reps for count in self.rejections)

    @property
    def mc_standard_errors(self) -> Tuple[float, ...]:
        return tuple(math.sqrt(p * (1.0 - p) / self.n_reps) for p in self.rates)

    @property
    def joint_rate(self) -> Optional[float]:
        if self.joint_rejections is None:
            return None
        return self.joint_rejections / self.n_reps

    @property
    def joint_standard_error(self) -> Optional[float]:
        rate = self.joint_rate
        return None if rate is None else math.sqrt(rate * (1.0 - rate) / self.n_reps)


def _reject(
    estimate: np.ndarray, se: np.ndarray, margins: Margins, critical: np.ndarray
) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        if margins.kind is HypothesisFamily.EQUIVALENCE:
            lower_t = (estimate - margins.lower) / se
            upper_t = (estimate - margins.upper) / se
            return (lower_t > critical) & (upper_t < -critical)
        return (estimate - margins.m0) / se > critical


def _ancova_block(model: SimModel, tests: Tuple[TestSpec, ...], bounds: Tuple[int, int]) -> np.ndarray:
    """Rejection counts [per test..., joint] for replications start..stop-1."""
    start, stop = bounds
    d = model.design
    layout = _layout(d)
    size = stop - start
    covariate_noise = np.empty((size, d.n, d.q))
    eps = np.empty((size, d.n))
    for i, rep in enumerate(range(start, stop)):
        covariate_noise[i], eps[i] = _draw_noise(
            _rep_rng(model.seed, rep), d.n, d.q, model.covariate_law
        )

    x = (layout.z @ model.means_matrix.T)[None, :, :] + covariate_noise
    fixed_mean = np.asarray(model.mu)[layout.group] + layout.z @ np.asarray(model.stratum_effects)
    y = fixed_mean[None, :] + x @ np.asarray(model.covariate_slopes) + model.noise_sd * eps

    fixed = np.broadcast_to(layout.fixed_columns, (size,) + layout.fixed_columns.shape)
    x_mat = np.concatenate((fixed, x), axis=2)
    q_mat, r_mat = np.linalg.qr(x_mat)
    qty = np.einsum("bnp,bn->bp", q_mat, y)
    coef = np.linalg.solve(r_mat, qty[..., None])[..., 0]
    resid = y - np.einsum("bnp,bp->bn", x_mat, coef)
    df = d.n - x_mat.shape[2]
    s2 = np.einsum("bn,bn->b", resid, resid) / df

    p = x_mat.shape[2]
    contrasts = np.zeros((len(tests), p))
    for t, test in enumerate(tests):
        contrasts[t, : d.k_arms] = test.contrast.array
    solved = np.linalg.solve(
        np.swapaxes(r_mat, 1, 2), np.broadcast_to(contrasts.T, (size, p, len(tests)))
    )
    se = np.sqrt(s2[:, None] * np.einsum("bpt,bpt->bt", solved, solved))
    estimate = coef @ contrasts.T

    decisions = np.column_stack(
        [
            _reject(estimate[:, t], se[:, t], test.margins, t_quantile(df, 1.0 - test.alpha_one_sided))
            for t, test in enumerate(tests)
        ]
    )
    return np.append(decisions.sum(axis=0), decisions.all(axis=1).sum()).astype(np.int64)


def _run_blocks(task, n_reps: int, workers: Optional[int]) -> np.ndarray:
    workers = get_settings().workers if workers is None else max(1, int(workers))
    blocks = list(_blocks(n_reps))
    if workers == 1 or len(blocks) == 1:
        partials = map(task, blocks)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(task, blocks))
    total = None
    for counts in partials:
        total = counts if total is None else total + counts
    return total


def mc_power(
    model: SimModel, tests: Sequence[TestSpec], workers: Optional[int] = None
) -> SimResult:
    """Empirical rejection rates of ``tests`` under ``model``.

    A test rejects when its one-sided statistic exceeds t_{df, 1 - alpha_one_sided};
    equivalence tests need both TOST statistics significant. With more than
    one test the joint rate (all tests significant together) is also kept.
    """
    tests = tuple(tests)
    if not tests:
        raise DomainError("mc_power needs at least one test")
    for test in tests:
        if len(test.contrast.coeffs) != model.design.k_arms:
            raise DomainError(f"test '{test.label}' does not match the {model.design.k_arms}-arm design")
    started = time.time()
    counts = _run_blocks(partial(_ancova_block, model, tests), model.n_reps, workers)
    elapsed = time.time() - started
    logger.info("Simulated %d replications in %.2fs", model.n_reps, elapsed)
    return SimResult(
        labels=tuple(test.label for test in tests),
        rejections=tuple(int(v) for v in counts[:-1]),
        n_reps=model.n_reps,
        joint_rejections=int(counts[-1]) if len(tests) > 1 else None,
        elapsed=elapsed,
    )


# =============================================================================
# Welch two-sample oracle
# =============================================================================

@dataclass(frozen=True)
class WelchSimModel:
    design: WelchDesign
    mu0: float
    mu1: float
    seed: int = 0
    n_reps: int = 10_000

    def __post_init__(self) -> None:
        if int(self.seed) != self.seed or self.seed < 0:
            raise DomainError(f"seed must be a nonnegative integer, got {self.seed}")
        if int(self.n_reps) != self.n_reps or self.n_reps < 1:
            raise DomainError(f"n_reps must be a positive integer, got {self.n_reps}")


def simulate_welch_dataset(model: WelchSimModel, rep_index: int) -> Tuple[np.ndarray, np.ndarray]:
    d = model.design
    rng = _rep_rng(model.seed, int(rep_index))
    y0 = model.mu0 + d.sigma0 * rng.standard_normal(d.n0)
    y1 = model.mu1 + d.sigma1 * rng.standard_normal(d.n1)
    return y0, y1


def _welch_block(
    model: WelchSimModel, margins: Margins, alpha_one_sided: float, bounds: Tuple[int, int]
) -> np.ndarray:
    start, stop = bounds
    d = model.design
    y0 = np.empty((stop - start, d.n0))
    y1 = np.empty((stop - start, d.n1))
    for i, rep in enumerate(range(start, stop)):
        y0[i], y1[i] = simulate_welch_dataset(model, rep)
    a0 = y0.var(axis=1, ddof=1) / d.n0
    a1 = y1.var(axis=1, ddof=1) / d.n1
    se = np.sqrt(a0 + a1)
    df = (a0 + a1) ** 2 / (a0**2 / (d.n0 - 1) + a1**2 / (d.n1 - 1))
    critical = t_quantile_array(df, 1.0 - alpha_one_sided)
    estimate = y1.mean(axis=1) - y0.mean(axis=1)
    decisions = _reject(estimate, se, margins, critical)
    return np.array([decisions.sum()], dtype=np.int64)


def mc_power_welch(
    model: WelchSimModel,
    margins: Margins,
    alpha_one_sided: float,
    workers: Optional[int] = None,
    label: str = "welch",
) -> SimResult:
    """Empirical rejection rate of the Welch (Satterthwaite df) test or TOST."""
    if not 0 < alpha_one_sided < 0.5:
        raise DomainError(f"alpha_one_sided must lie in (0, 0.5), got {alpha_one_sided}")
    started = time.time()
    task = partial(_welch_block, model, margins, alpha_one_sided)
    counts = _run_blocks(task, model.n_reps, workers)
    elapsed = time.time() - started
    logger.info("Simulated %d Welch replications in %.2fs", model.n_reps, elapsed)
    return SimResult((label,), (int(counts[0]),), model.n_reps, None, elapsed)
