"""Design documents: TOML schema, loading and conversion to domain objects.

A document has either a ``[design]`` table (stratified ANCOVA) or a
``[welch]`` table (two-sample, unequal variances), one or more ``[[tests]]``
and optional ``[plan]``, ``[simulation]`` and ``[output]`` tables::

    [design]
    arms = 3
    cell_counts = [[6, 6, 6], [6, 6, 6], [6, 6, 6], [6, 6, 6]]
    stratum_coding = [[0, 0], [1, 0], [0, 1], [1, 1]]
    covariates = 1
    sigma = 1.0

    [[tests]]
    label = "arm 1 vs control"
    contrast = [-1, 1, 0]
    family = "superiority"
    alpha_one_sided = 0.0125
    mu = [0.0, 0.6, 0.9]

Structural problems (syntax, unknown keys, wrong types, missing fields) raise
``ConfigError``; values outside the domain of the formulas raise
``DomainError`` from the domain constructors.
"""
from __future__ import annotations

import logging
import re
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, List, Literal, Optional, Sequence, Tuple, Union

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    PrivateAttr,
    ValidationError,
    model_validator,
)

from .design import Contrast, Plan, StratifiedDesign, TestSpec, bonferroni
from .errors import ConfigError, DomainError
from .power_engine import Margins, WelchDesign
from .simulation import CovariateLaw, SimModel, WelchSimModel

logger = logging.getLogger(__name__)

__all__ = [
    "DesignConfig",
    "load_config",
    "parse_config",
    "build_design",
    "build_tests",
    "build_plan",
    "build_sim_model",
]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DesignSection(_Section):
    arms: int
    cell_counts: List[List[int]]
    stratum_coding: Optional[List[List[float]]] = None
    strata_labels: Optional[List[str]] = None
    covariates: int = 0
    sigma: float


class WelchSection(_Section):
    n: List[int] = Field(..., min_length=2, max_length=2, description="[n0, n1]")
    sigma: List[float] = Field(..., min_length=2, max_length=2, description="[sigma0, sigma1]")


class TestSection(_Section):
    __test__ = False

    label: str = ""
    contrast: List[float]
    family: Literal["superiority", "noninferiority", "equivalence"]
    margin: Optional[float] = None
    lower_margin: Optional[float] = None
    upper_margin: Optional[float] = None
    alpha_one_sided: Optional[float] = None
    mu: List[float]

    @model_validator(mode="after")
    def _margins_match_family(self) -> "TestSection":
        if self.family == "noninferiority" and self.margin is None:
            raise ValueError("noninferiority tests need 'margin'")
        if self.family == "superiority" and self.margin not in (None, 0.0):
            raise ValueError("superiority tests use M0 = 0; use family = 'noninferiority'")
        if self.family == "equivalence" and (
            self.lower_margin is None or self.upper_margin is None
        ):
            raise ValueError("equivalence tests need 'lower_margin' and 'upper_margin'")
        if self.family != "equivalence" and (
            self.lower_margin is not None or self.upper_margin is not None
        ):
            raise ValueError("'lower_margin'/'upper_margin' only apply to equivalence tests")
        return self


class PlanSection(_Section):
    gold_standard: bool = False
    family_alpha_one_sided: Optional[float] = None
    adjustment: Optional[Literal["bonferroni"]] = None

    @model_validator(mode="after")
    def _adjustment_needs_level(self) -> "PlanSection":
        if (self.family_alpha_one_sided is None) != (self.adjustment is None):
            raise ValueError("'family_alpha_one_sided' and 'adjustment' go together")
        return self


class SimulationSection(_Section):
    seed: Optional[int] = None
    n_reps: Optional[int] = None
    stratum_effects: List[float] = Field(default_factory=list)
    covariate_slopes: List[float] = Field(default_factory=list)
    covariate_means: List[List[float]] = Field(default_factory=list)
    sigma: Optional[float] = None
    covariate_law: Literal["normal", "uniform"] = "normal"


class OutputSection(_Section):
    format: Literal["table", "records"] = "table"


class DesignConfig(_Section):
    design: Optional[DesignSection] = None
    welch: Optional[WelchSection] = None
    tests: List[TestSection] = Field(..., min_length=1)
    plan: PlanSection = Field(default_factory=PlanSection)
    simulation: Optional[SimulationSection] = None
    output: OutputSection = Field(default_factory=OutputSection)
    _source: str = PrivateAttr(default="")

    @model_validator(mode="after")
    def _one_design(self) -> "DesignConfig":
        if (self.design is None) == (self.welch is None):
            raise ValueError("exactly one of [design] or [welch] is required")
        for index, test in enumerate(self.tests):
            if test.alpha_one_sided is None and self.plan.family_alpha_one_sided is None:
                raise ValueError(
                    f"tests[{index}] has no 'alpha_one_sided' and the plan sets no family level"
                )
        return self


# =============================================================================
# Loading
# =============================================================================

_TOML_LINE = re.compile(r"line (\d+)")


def _locate(text: str, loc: Sequence[Union[str, int]]) -> Optional[int]:
    """Best-effort 1-based line of the key addressed by a pydantic error location."""
    if not loc or not isinstance(loc[0], str):
        return None
    lines = text.splitlines()
    section = loc[0]
    rest = list(loc[1:])
    index = rest.pop(0) if rest and isinstance(rest[0], int) else 0
    key = next((part for part in rest if isinstance(part, str)), None)

    header = re.compile(rf"^\s*\[\[?\s*{re.escape(section)}\s*\]\]?\s*(#.*)?$")
    headers = [i for i, line in enumerate(lines) if header.match(line)]
    if not headers:
        top = re.compile(rf"^\s*{re.escape(section)}\s*=")
        return next((i + 1 for i, line in enumerate(lines) if top.match(line)), None)
    start = headers[min(index, len(headers) - 1)]
    if key is None:
        return start + 1
    end = next(
        (i for i in range(start + 1, len(lines)) if lines[i].lstrip().startswith("[")),
        len(lines),
    )
    assignment = re.compile(rf"^\s*{re.escape(key)}\s*=")
    return next((i + 1 for i in range(start, end) if assignment.match(lines[i])), start + 1)


def parse_config(text: str) -> DesignConfig:
    """Parse and schema-check a TOML design document."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        match = _TOML_LINE.search(str(exc))
        raise ConfigError(f"invalid TOML: {exc}", int(match.group(1)) if match else None) from exc
    try:
        cfg = DesignConfig.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        where = ".".join(str(part) for part in first["loc"]) or "document"
        raise ConfigError(f"{where}: {first['msg']}", _locate(text, first["loc"])) from exc
    cfg._source = text
    return cfg


def load_config(path: Union[str, Path]) -> DesignConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    logger.debug("Loaded design document %s", path)
    return parse_config(text)


# =============================================================================
# Conversion to domain objects
# =============================================================================

# Message fragments that point a design error at the key that caused it.
_DESIGN_KEYS = (
    ("sigma", "sigma"),
    ("coding", "stratum_coding"),
    ("strata_labels", "strata_labels"),
    ("covariate", "covariates"),
    ("error df", "cell_counts"),
    ("cell", "cell_counts"),
    ("arms", "arms"),
)
_WELCH_KEYS = (("SDs", "sigma"), ("group", "n"))
_SIMULATION_KEYS = (
    ("stratum effects", "stratum_effects"),
    ("slopes", "covariate_slopes"),
    ("covariate_means", "covariate_means"),
    ("sigma", "sigma"),
    ("seed", "seed"),
    ("n_reps", "n_reps"),
)


@contextmanager
def _anchored(
    cfg: DesignConfig,
    loc: Sequence[Union[str, int]],
    keys: Sequence[Tuple[str, str]] = (),
) -> Iterator[None]:
    """Re-raise domain errors with the document line of ``loc`` (plus a key picked by message)."""
    try:
        yield
    except DomainError as exc:
        key = next((k for fragment, k in keys if fragment in str(exc)), None)
        where = list(loc) + ([key] if key else [])
        exc.at_line(_locate(cfg._source, where) if cfg._source else None)
        raise


def build_design(cfg: DesignConfig) -> Union[StratifiedDesign, WelchDesign]:
    if cfg.welch is not None:
        with _anchored(cfg, ("welch",), _WELCH_KEYS):
            return WelchDesign(
                n0=cfg.welch.n[0], n1=cfg.welch.n[1],
                sigma0=cfg.welch.sigma[0], sigma1=cfg.welch.sigma[1],
            )
    section = cfg.design
    for s, row in enumerate(section.cell_counts):
        if len(row) != section.arms:
            raise DomainError(
                f"cell_counts row {s} has {len(row)} cells for {section.arms} arms"
            ).at_line(_locate(cfg._source, ("design", "cell_counts")))
    with _anchored(cfg, ("design",), _DESIGN_KEYS):
        return StratifiedDesign(
            cell_counts=tuple(tuple(row) for row in section.cell_counts),
            q=section.covariates,
            sigma=section.sigma,
            stratum_coding=(
                None if section.stratum_coding is None
                else tuple(tuple(row) for row in section.stratum_coding)
            ),
            strata_labels=tuple(section.strata_labels or ()),
        )


def _margins(test: TestSection) -> Margins:
    if test.family == "equivalence":
        if test.lower_margin >= test.upper_margin:
            raise DomainError(
                f"test '{test.label}': lower_margin {test.lower_margin} must be below "
                f"upper_margin {test.upper_margin}"
            )
        return Margins.equivalence(test.lower_margin, test.upper_margin)
    if test.family == "noninferiority":
        return Margins.noninferiority(test.margin)
    return Margins.superiority()


def build_tests(cfg: DesignConfig) -> Tuple[TestSpec, ...]:
    family_alpha = None
    if cfg.plan.family_alpha_one_sided is not None:
        with _anchored(cfg, ("plan", "family_alpha_one_sided")):
            family_alpha = bonferroni(cfg.plan.family_alpha_one_sided, len(cfg.tests))
    tests = []
    for index, test in enumerate(cfg.tests):
        with _anchored(cfg, ("tests", index, "contrast")):
            contrast = Contrast(tuple(test.contrast))
        margin_key = "lower_margin" if test.family == "equivalence" else "margin"
        with _anchored(cfg, ("tests", index, margin_key)):
            margins = _margins(test)
        if test.alpha_one_sided is not None:
            alpha, alpha_loc = test.alpha_one_sided, ("tests", index, "alpha_one_sided")
        else:
            alpha, alpha_loc = family_alpha, ("plan", "family_alpha_one_sided")
        with _anchored(cfg, alpha_loc if not 0 < alpha < 0.5 else ("tests", index, "mu")):
            tests.append(
                TestSpec(
                    contrast=contrast,
                    margins=margins,
                    alpha_one_sided=alpha,
                    mu=tuple(test.mu),
                    label=test.label or f"test {index + 1}",
                )
            )
    return tuple(tests)


def build_plan(cfg: DesignConfig) -> Plan:
    design = build_design(cfg)
    tests = build_tests(cfg)
    arms = design.k_arms if isinstance(design, StratifiedDesign) else 2
    mismatched = next(
        (i for i, test in enumerate(tests) if len(test.contrast.coeffs) != arms), None
    )
    loc = ("plan",) if mismatched is None else ("tests", mismatched, "contrast")
    with _anchored(cfg, loc):
        return Plan(design, tests, gold_standard=cfg.plan.gold_standard)


def _shared_mu(tests: Sequence[TestSpec]) -> Tuple[float, ...]:
    mu = tests[0].mu
    if any(test.mu != mu for test in tests[1:]):
        raise DomainError("simulation needs all tests to share one 'mu' vector")
    return mu


def build_sim_model(
    cfg: DesignConfig,
    n_reps: Optional[int] = None,
    seed: Optional[int] = None,
    test: Optional[TestSpec] = None,
) -> Union[SimModel, WelchSimModel]:
    """Simulation model from the document, with CLI overrides for n_reps and seed.

    Two-sample documents are simulated per test, so ``test`` selects the arm
    means there.
    """
    section = cfg.simulation or SimulationSection()
    n_reps = n_reps if n_reps is not None else section.n_reps
    seed = seed if seed is not None else section.seed
    if n_reps is None or seed is None:
        raise ConfigError("simulation needs 'seed' and 'n_reps' ([simulation] or --reps/--seed)")
    design = build_design(cfg)
    tests = build_tests(cfg)
    if isinstance(design, WelchDesign):
        mu = (test or tests[0]).mu
        with _anchored(cfg, ("simulation",), _SIMULATION_KEYS):
            return WelchSimModel(design, mu0=mu[0], mu1=mu[1], seed=seed, n_reps=n_reps)
    mu = _shared_mu(tests)
    with _anchored(cfg, ("simulation",), _SIMULATION_KEYS):
        return SimModel(
            design=design,
            mu=mu,
            stratum_effects=tuple(section.stratum_effects),
            covariate_slopes=tuple(section.covariate_slopes),
            covariate_means=tuple(tuple(row) for row in section.covariate_means),
            sigma=section.sigma,
            seed=seed,
            n_reps=n_reps,
            covariate_law=CovariateLaw(section.covariate_law),
        )
