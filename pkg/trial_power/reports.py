"""Tabular rendering of power, sample-size and simulation results.

Every report is first assembled into a pandas DataFrame rounded to six
decimals; the ``table`` and ``records`` formats are two renderings of that
same frame, so they always carry identical numbers.
"""
from __future__ import annotations

import math
from typing import List, Optional, Sequence

import pandas as pd

from .design import SampleSizeResult, allocation_pattern
from .errors import DomainError
from .power_engine import PowerResult
from .simulation import SimResult

__all__ = [
    "OUTPUT_FORMATS",
    "DECIMALS",
    "power_frame",
    "sample_size_frame",
    "simulation_frame",
    "render",
]

OUTPUT_FORMATS = ("table", "records")
DECIMALS = 6


def _round(frame: pd.DataFrame) -> pd.DataFrame:
    return frame.round(DECIMALS)


def power_frame(results: Sequence[PowerResult]) -> pd.DataFrame:
    """One row per test: tau1, V_l, f, C and exact power."""
    rows = [
        {
            "label": result.label,
            "formula": result.formula,
            "tau1": result.tau1,
            "V_l": math.nan if result.v_l is None else result.v_l,
            "f": result.f,
            "C": result.critical_value,
            "power": result.power,
        }
        for result in results
    ]
    return _round(pd.DataFrame(rows, columns=["label", "formula", "tau1", "V_l", "f", "C", "power"]))


def _cell_sizes(result: SampleSizeResult) -> str:
    sizes = [v * result.multiplier for v in allocation_pattern(result.design)]
    if len(set(sizes)) == 1:
        return str(sizes[0])
    return " ".join(str(v) for v in sizes)


def sample_size_frame(
    labels: Sequence[str], results: Sequence[SampleSizeResult], target: float
) -> pd.DataFrame:
    """Minimal multiplier, resulting cell sizes and achieved power per test."""
    rows = [
        {
            "label": label,
            "target": target,
            "multiplier": result.multiplier,
            "cells": _cell_sizes(result),
            "n": result.design.n,
            "power": result.power,
        }
        for label, result in zip(labels, results)
    ]
    return _round(pd.DataFrame(rows, columns=["label", "target", "multiplier", "cells", "n", "power"]))


def simulation_frame(
    result: SimResult, exact: Optional[Sequence[float]] = None
) -> pd.DataFrame:
    """Empirical rate and MC standard error per test, the joint rate last."""
    rows: List[dict] = []
    for i, label in enumerate(result.labels):
        rows.append(
            {
                "label": label,
                "rejections": result.rejections[i],
                "n_reps": result.n_reps,
                "rate": result.rates[i],
                "mc_se": result.mc_standard_errors[i],
                "exact_power": math.nan if exact is None else exact[i],
            }
        )
    if result.joint_rejections is not None:
        rows.append(
            {
                "label": "joint (all tests significant)",
                "rejections": result.joint_rejections,
                "n_reps": result.n_reps,
                "rate": result.joint_rate,
                "mc_se": result.joint_standard_error,
                "exact_power": math.nan,
            }
        )
    columns = ["label", "rejections", "n_reps", "rate", "mc_se", "exact_power"]
    return _round(pd.DataFrame(rows, columns=columns))


def render(frame: pd.DataFrame, output_format: str = "table") -> str:
    """Render a report frame as an aligned text table or as JSON lines."""
    if output_format == "table":
        return frame.to_string(
            index=False, float_format=lambda value: f"{value:.{DECIMALS}f}", na_rep="-"
        )
    if output_format == "records":
        return frame.to_json(orient="records", lines=True, double_precision=DECIMALS).rstrip("\n")
    raise DomainError(f"unknown output format {output_format!r}; use one of {OUTPUT_FORMATS}")
