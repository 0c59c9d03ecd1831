"""Command-line interface: ``trial-power {power,samplesize,simulate,validate}``.

Each subcommand reads one TOML design document and prints a single report.
Failures print one ``error:`` line to stderr and exit with the code of their
failure class (2 config, 3 domain, 4 accuracy, 5 unreachable target); no
partial report is printed.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Union

from .config import DesignConfig, build_plan, build_sim_model, load_config
from .design import StratifiedDesign, contrast_variance, evaluate_plan, solve_sample_size
from .errors import EXIT_OK, PowerAnalysisError, exit_code_for
from .power_engine import WelchDesign
from .reports import OUTPUT_FORMATS, power_frame, render, sample_size_frame, simulation_frame
from .settings import configure_logging
from .simulation import SimResult, mc_power, mc_power_welch

logger = logging.getLogger(__name__)

__all__ = [
    "CommandOutcome",
    "run_power",
    "run_sample_size",
    "run_simulation",
    "run_validate",
    "cmd_power",
    "cmd_samplesize",
    "cmd_simulate",
    "cmd_validate",
    "build_parser",
    "main",
]

PathLike = Union[str, Path]


@dataclass(frozen=True)
class CommandOutcome:
    exit_code: int
    report: str

    @property
    def ok(self) -> bool:
        return self.exit_code == EXIT_OK


# ===========================================================================
# Report builders (config already loaded)
# ===========================================================================

def _format(cfg: DesignConfig, output_format: Optional[str]) -> str:
    return output_format or cfg.output.format


def run_power(cfg: DesignConfig, output_format: Optional[str] = None) -> str:
    """Exact power of every test in the plan."""
    results = evaluate_plan(build_plan(cfg))
    return render(power_frame(results), _format(cfg, output_format))


def run_sample_size(
    cfg: DesignConfig, target: float, output_format: Optional[str] = None
) -> str:
    """Smallest cell multiplier reaching ``target`` for each test."""
    plan = build_plan(cfg)
    solved = [solve_sample_size(plan.design, test, target) for test in plan.tests]
    frame = sample_size_frame([test.label for test in plan.tests], solved, target)
    return render(frame, _format(cfg, output_format))


def _welch_simulation(
    cfg: DesignConfig, n_reps: Optional[int], seed: Optional[int], workers: Optional[int]
) -> SimResult:
    plan = build_plan(cfg)
    parts = []
    for test in plan.tests:
        model = build_sim_model(cfg, n_reps=n_reps, seed=seed, test=test)
        parts.append(
            mc_power_welch(model, test.margins, test.alpha_one_sided, workers, label=test.label)
        )
    return SimResult(
        labels=tuple(part.labels[0] for part in parts),
        rejections=tuple(part.rejections[0] for part in parts),
        n_reps=parts[0].n_reps,
        elapsed=sum(part.elapsed for part in parts),
    )


def run_simulation(
    cfg: DesignConfig,
    n_reps: Optional[int] = None,
    seed: Optional[int] = None,
    workers: Optional[int] = None,
    output_format: Optional[str] = None,
) -> str:
    """Empirical power +/- MC standard error next to the exact power."""
    plan = build_plan(cfg)
    exact = [result.power for result in evaluate_plan(plan)[: len(plan.tests)]]
    if isinstance(plan.design, WelchDesign):
        result = _welch_simulation(cfg, n_reps, seed, workers)
    else:
        result = mc_power(build_sim_model(cfg, n_reps=n_reps, seed=seed), plan.tests, workers)
    return render(simulation_frame(result, exact), _format(cfg, output_format))


def run_validate(cfg: DesignConfig) -> str:
    """Build every domain object the document describes without computing power."""
    plan = build_plan(cfg)
    design = plan.design
    lines: List[str] = []
    if isinstance(design, StratifiedDesign):
        lines.append(
            f"design: {design.h} strata x {design.k_arms} arms, n = {design.n}, "
            f"q = {design.q}, r = {design.r}, f = {design.f}"
        )
        for test in plan.tests:
            lines.append(
                f"test '{test.label}': tau1 = {test.tau1:.6f}, "
                f"V_l = {contrast_variance(design, test.contrast):.6f}, "
                f"alpha/2 = {test.alpha_one_sided:g}"
            )
    else:
        lines.append(
            f"welch design: n0 = {design.n0}, n1 = {design.n1}, "
            f"sigma0 = {design.sigma0:g}, sigma1 = {design.sigma1:g}"
        )
        for test in plan.tests:
            lines.append(
                f"test '{test.label}': tau1 = {test.tau1:.6f}, alpha/2 = {test.alpha_one_sided:g}"
            )
    if cfg.simulation is not None:
        build_sim_model(cfg, n_reps=cfg.simulation.n_reps or 1, seed=cfg.simulation.seed or 0)
        lines.append("simulation model: ok")
    lines.append("ok")
    return "\n".join(lines)


# ===========================================================================
# Commands: load + run + map failures to exit codes
# ===========================================================================

def _run(config_path: PathLike, build) -> CommandOutcome:
    try:
        report = build(load_config(config_path))
    except PowerAnalysisError as exc:
        logger.debug("Command failed", exc_info=True)
        return CommandOutcome(exit_code_for(exc), f"error: {exc}")
    return CommandOutcome(EXIT_OK, report)


def cmd_power(config_path: PathLike, output_format: Optional[str] = None) -> CommandOutcome:
    return _run(config_path, lambda cfg: run_power(cfg, output_format))


def cmd_samplesize(
    config_path: PathLike, target: float, output_format: Optional[str] = None
) -> CommandOutcome:
    return _run(config_path, lambda cfg: run_sample_size(cfg, target, output_format))


def cmd_simulate(
    config_path: PathLike,
    n_reps: Optional[int] = None,
    seed: Optional[int] = None,
    workers: Optional[int] = None,
    output_format: Optional[str] = None,
) -> CommandOutcome:
    return _run(
        config_path, lambda cfg: run_simulation(cfg, n_reps, seed, workers, output_format)
    )


def cmd_validate(config_path: PathLike) -> CommandOutcome:
    return _run(config_path, run_validate)


# ===========================================================================
# Entry point
# ===========================================================================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trial-power",
        description="Exact power and sample size for t tests and stratified ANCOVA contrasts",
    )
    parser.add_argument("--verbose", action="store_true", help="Debug logging to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser, with_format: bool = True) -> None:
        p.add_argument("config", help="TOML design document")
        if with_format:
            p.add_argument("--format", choices=OUTPUT_FORMATS, default=None,
                           help="Output format (default: [output].format or 'table')")

    add_common(sub.add_parser("power", help="Exact power of every test"))

    samplesize = sub.add_parser("samplesize", help="Minimal cell multiplier for a target power")
    add_common(samplesize)
    samplesize.add_argument("--target", type=float, required=True, help="Target power")

    simulate = sub.add_parser("simulate", help="Monte Carlo check of the exact powers")
    add_common(simulate)
    simulate.add_argument("--reps", type=int, default=None, help="Replications")
    simulate.add_argument("--seed", type=int, default=None, help="Master seed")
    simulate.add_argument("--workers", type=int, default=None,
                          help="Worker processes (default: TRIAL_POWER_WORKERS or 1)")

    add_common(sub.add_parser("validate", help="Check a design document"), with_format=False)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)

    if args.command == "power":
        outcome = cmd_power(args.config, args.format)
    elif args.command == "samplesize":
        outcome = cmd_samplesize(args.config, args.target, args.format)
    elif args.command == "simulate":
        outcome = cmd_simulate(args.config, args.reps, args.seed, args.workers, args.format)
    else:
        outcome = cmd_validate(args.config)

    print(outcome.report, file=sys.stdout if outcome.ok else sys.stderr)
    return outcome.exit_code


if __name__ == "__main__":
    sys.exit(main())
