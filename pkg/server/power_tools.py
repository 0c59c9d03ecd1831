"""
Power Analysis Tools Module for MCP Server

Exposes the trial_power commands as MCP tools. Every tool takes the TOML
design document as text and returns the same report the ``trial-power`` CLI
prints; failures come back as an ``Error ...`` message instead of raising.
"""

import logging
import math
from typing import Callable, Optional

from trial_power.config import DesignConfig, parse_config
from trial_power.distributions import OwensQArgs, owens_q
from trial_power.main import run_power, run_sample_size, run_simulation, run_validate

logger = logging.getLogger(__name__)

# Simulations started from a chat session are capped to keep tool calls responsive.
MAX_TOOL_REPLICATIONS = 200_000


def _report(action: str, config_toml: str, build: Callable[[DesignConfig], str]) -> str:
    try:
        return build(parse_config(config_toml))
    except Exception as e:
        logger.exception("%s failed", action)
        return f"Error {action}: {str(e)}"


def register_power_tools(mcp):
    """Register power-analysis tools with the MCP server"""

    @mcp.tool()
    def exact_power_report(config_toml: str, output_format: str = "table") -> str:
        """
        Compute the exact power of every test in a trial design document.

        Handles superiority, noninferiority and equivalence (TOST) tests for
        stratified ANCOVA contrasts (random covariates) and for Welch's
        two-sample test with unequal variances. Gold-standard plans also get
        the lower bound P1 + P2 - 1 on the power of passing both tests.

        Parameters:
        config_toml (str): TOML design document ([design] or [welch], [[tests]], ...)
        output_format (str): "table" or "records" (JSON lines)

        Returns:
        str: One row per test with tau1, V_l, f, critical value C and power
        """
        return _report(
            "computing power", config_toml, lambda cfg: run_power(cfg, output_format)
        )

    @mcp.tool()
    def sample_size_report(
        config_toml: str, target_power: float, output_format: str = "table"
    ) -> str:
        """
        Find the smallest cell multiplier that reaches a target power.

        The design's cell counts fix the allocation ratios; every cell is
        scaled by the same integer multiplier.

        Parameters:
        config_toml (str): TOML design document
        target_power (float): Required power, strictly between alpha/2 and 1
        output_format (str): "table" or "records"

        Returns:
        str: Multiplier, resulting cell sizes, total n and achieved power per test
        """
        return _report(
            "solving sample size",
            config_toml,
            lambda cfg: run_sample_size(cfg, target_power, output_format),
        )

    @mcp.tool()
    def simulation_report(
        config_toml: str,
        n_reps: int = 10_000,
        seed: int = 2024,
        output_format: str = "table",
    ) -> str:
        """
        Check the exact powers by Monte Carlo simulation.

        Parameters:
        config_toml (str): TOML design document; [simulation] sets the outcome model
        n_reps (int): Replications (at most 200000 from this tool)
        seed (int): Master seed; identical (document, n_reps, seed) give identical output
        output_format (str): "table" or "records"

        Returns:
        str: Empirical rejection rate +/- MC standard error next to the exact power
        """
        if n_reps > MAX_TOOL_REPLICATIONS:
            return (
                f"Error running simulation: n_reps {n_reps} exceeds the tool limit "
                f"{MAX_TOOL_REPLICATIONS}; use the trial-power CLI for longer runs"
            )
        return _report(
            "running simulation",
            config_toml,
            lambda cfg: run_simulation(cfg, n_reps, seed, None, output_format),
        )

    @mcp.tool()
    def validate_design_config(config_toml: str) -> str:
        """
        Validate a design document without computing any power.

        Parameters:
        config_toml (str): TOML design document

        Returns:
        str: Design summary (n, q, r, f) and per-test tau1 and V_l, or the first error
        """
        return _report("validating design", config_toml, run_validate)

    @mcp.tool()
    def owens_q_value(
        f: float, t: float, delta: float, a: float = 0.0, b: Optional[float] = None
    ) -> str:
        """
        Evaluate Owen's Q function Q_f(t, delta; a, b).

        With a = 0 and b omitted (infinity) this is the CDF of the noncentral
        t distribution with f degrees of freedom and noncentrality delta at t.

        Parameters:
        f (float): Degrees of freedom, > 0
        t (float): Evaluation point
        delta (float): Noncentrality
        a (float): Lower integration limit, >= 0
        b (float): Upper integration limit (default: infinity)

        Returns:
        str: The value of Q to 10 decimals
        """
        try:
            args = OwensQArgs(f=f, t=t, delta=delta, a=a, b=math.inf if b is None else b)
            return f"Q_{f:g}({t:g}, {delta:g}; {a:g}, {args.b:g}) = {owens_q(args):.10f}"
        except Exception as e:
            logger.exception("Owen's Q evaluation failed")
            return f"Error evaluating Owen's Q: {str(e)}"
