"""End-to-end tests for the trial-power command line and design documents."""
import json
import re

import pytest

from trial_power.config import build_plan, build_sim_model, load_config, parse_config
from trial_power.errors import (
    EXIT_ACCURACY,
    EXIT_CONFIG,
    EXIT_DOMAIN,
    EXIT_OK,
    EXIT_UNREACHABLE,
    ConfigError,
)
from trial_power.main import cmd_power, cmd_simulate, cmd_validate, main

MINIMAL = """
[design]
arms = 2
cell_counts = [[10, 10], [10, 10]]
covariates = 0
sigma = 1.0

[[tests]]
label = "t"
contrast = [-1, 1]
family = "superiority"
alpha_one_sided = 0.025
mu = [0.0, 0.5]
"""


def write(tmp_path, text, name="design.toml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def records(text):
    return [json.loads(line) for line in text.strip().splitlines()]


# =============================================================================
# Bundled examples
# =============================================================================

def test_power_example1(config_dir, capsys):
    code = main(["power", str(config_dir / "example1.toml"), "--format", "records"])
    assert code == EXIT_OK
    rows = records(capsys.readouterr().out)
    assert [row["label"] for row in rows] == ["arm 2 vs control", "arm 1 vs control"]
    assert [row["power"] for row in rows] == pytest.approx([0.7863, 0.4139], abs=5e-5)
    assert rows[0]["V_l"] == pytest.approx(1 / 12, abs=1e-6)
    assert rows[0]["f"] == 66


def test_power_example2(config_dir):
    outcome = cmd_power(config_dir / "example2.toml", "records")
    assert outcome.ok
    assert [row["power"] for row in records(outcome.report)] == pytest.approx(
        [0.7914, 0.8672], abs=5e-5
    )


def test_power_example3_reports_bound(config_dir):
    rows = records(cmd_power(config_dir / "example3.toml", "records").report)
    assert len(rows) == 3
    assert [row["power"] for row in rows] == pytest.approx([0.9929, 0.8641, 0.8570], abs=5e-5)
    assert rows[2]["f"] is None


def test_table_and_records_carry_the_same_numbers(config_dir):
    table = cmd_power(config_dir / "example1.toml", "table").report
    rows = records(cmd_power(config_dir / "example1.toml", "records").report)
    for row in rows:
        assert f"{row['power']:.6f}" in table
        assert f"{row['C']:.6f}" in table


def test_welch_document(config_dir):
    rows = records(cmd_power(config_dir / "welch.toml", "records").report)
    assert [row["formula"] for row in rows] == ["welch_sup_ni", "welch_equivalence"]
    assert all(0.0 < row["power"] < 1.0 for row in rows)


def test_validate_bundled_documents(config_dir, capsys):
    for name in ("example1.toml", "example2.toml", "example3.toml", "welch.toml"):
        assert main(["validate", str(config_dir / name)]) == EXIT_OK
        assert capsys.readouterr().out.strip().endswith("ok")


def test_bundled_simulation_models(config_dir):
    model = build_sim_model(load_config(config_dir / "example1.toml"))
    assert model.n_reps == 1_000_000
    assert model.stratum_effects == (0.6, 0.3)
    assert model.covariate_means == ((0.2, 0.4),)


# =============================================================================
# Plans from documents
# =============================================================================

def test_family_level_is_split_over_tests(config_dir):
    plan = build_plan(load_config(config_dir / "example1.toml"))
    assert [test.alpha_one_sided for test in plan.tests] == [0.0125, 0.0125]


def test_gold_standard_flag(config_dir):
    assert build_plan(load_config(config_dir / "example3.toml")).gold_standard


# =============================================================================
# Sample size and simulation commands
# =============================================================================

def test_samplesize_command(tmp_path, capsys):
    path = write(tmp_path, MINIMAL)
    assert main(["samplesize", path, "--target", "0.8", "--format", "records"]) == EXIT_OK
    (row,) = records(capsys.readouterr().out)
    assert row["power"] >= 0.8
    assert row["n"] == 4 * row["multiplier"]


def test_samplesize_unreachable_exit_code(tmp_path, capsys):
    path = write(tmp_path, MINIMAL.replace("mu = [0.0, 0.5]", "mu = [0.0, 0.0001]"))
    assert main(["samplesize", path, "--target", "0.999"]) == EXIT_UNREACHABLE
    captured = capsys.readouterr()
    assert captured.out == ""
    assert captured.err.startswith("error: target power")


def test_simulate_is_deterministic(tmp_path):
    path = write(tmp_path, MINIMAL)
    first = cmd_simulate(path, n_reps=3_000, seed=5, output_format="records")
    second = cmd_simulate(path, n_reps=3_000, seed=5, output_format="records")
    assert first.ok
    assert first.report == second.report
    (row,) = records(first.report)
    assert row["n_reps"] == 3_000
    assert abs(row["rate"] - row["exact_power"]) <= 4 * row["mc_se"]


def test_simulate_needs_seed_and_reps(tmp_path, capsys):
    assert main(["simulate", write(tmp_path, MINIMAL)]) == EXIT_CONFIG
    assert "seed" in capsys.readouterr().err


def test_simulate_welch_document(config_dir):
    outcome = cmd_simulate(config_dir / "welch.toml", n_reps=2_000, seed=1, output_format="records")
    assert outcome.ok
    rows = records(outcome.report)
    assert [row["label"] for row in rows] == ["superiority", "equivalence"]


# =============================================================================
# Failure classes
# =============================================================================

@pytest.mark.parametrize(
    "text,code",
    [
        (MINIMAL.replace("sigma = 1.0", "sigma = 1.0\ncolour = 1"), EXIT_CONFIG),
        (MINIMAL.replace("arms = 2", "arms = "), EXIT_CONFIG),
        (MINIMAL.replace('family = "superiority"', 'family = "better"'), EXIT_CONFIG),
        (MINIMAL.replace("alpha_one_sided = 0.025\n", ""), EXIT_CONFIG),
        (MINIMAL.replace("contrast = [-1, 1]", "contrast = [1, 1]"), EXIT_DOMAIN),
        (MINIMAL.replace("sigma = 1.0", "sigma = -1.0"), EXIT_DOMAIN),
        (MINIMAL.replace("alpha_one_sided = 0.025", "alpha_one_sided = 0.7"), EXIT_DOMAIN),
        (
            MINIMAL.replace(
                'family = "superiority"',
                'family = "equivalence"\nlower_margin = 0.5\nupper_margin = 0.5',
            ),
            EXIT_DOMAIN,
        ),
    ],
)
def test_exit_codes(tmp_path, capsys, text, code):
    assert main(["power", write(tmp_path, text)]) == code
    captured = capsys.readouterr()
    assert captured.out == ""
    assert captured.err.startswith("error:")
    if code == EXIT_DOMAIN:
        assert re.match(r"error: line \d+: ", captured.err)


@pytest.mark.parametrize(
    "old,new,anchor",
    [
        ("sigma = 1.0", "sigma = -1.0", "sigma = -1.0"),
        ("contrast = [-1, 1]", "contrast = [1, 1]", "contrast = [1, 1]"),
        (
            'family = "superiority"',
            'family = "equivalence"\nlower_margin = 0.5\nupper_margin = 0.2',
            "lower_margin = 0.5",
        ),
    ],
)
def test_domain_errors_point_at_the_line(tmp_path, old, new, anchor):
    text = MINIMAL.replace(old, new)
    outcome = cmd_validate(write(tmp_path, text))
    assert outcome.exit_code == EXIT_DOMAIN
    expected_line = text.splitlines().index(anchor) + 1
    assert outcome.report.startswith(f"error: line {expected_line}: ")


def test_unconverged_quadrature_exit_code(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("TRIAL_POWER_QUAD_TOL", "1e-300")
    path = write(tmp_path, MINIMAL.replace("covariates = 0", "covariates = 1"))
    assert main(["power", path]) == EXIT_ACCURACY
    captured = capsys.readouterr()
    assert captured.out == ""
    assert "best estimate" in captured.err


def test_missing_file(tmp_path):
    outcome = cmd_power(tmp_path / "nope.toml")
    assert outcome.exit_code == EXIT_CONFIG


def test_schema_errors_point_at_the_line():
    text = MINIMAL.replace("sigma = 1.0", "sigma = 1.0\ncolour = 1")
    with pytest.raises(ConfigError) as excinfo:
        parse_config(text)
    expected_line = text.splitlines().index("colour = 1") + 1
    assert excinfo.value.line == expected_line
    assert str(excinfo.value).startswith(f"line {expected_line}: design.colour")


def test_toml_syntax_errors_point_at_the_line():
    with pytest.raises(ConfigError) as excinfo:
        parse_config(MINIMAL.replace("arms = 2", "arms = "))
    assert excinfo.value.line == 3


def test_exactly_one_design_table():
    with pytest.raises(ConfigError):
        parse_config(MINIMAL + "\n[welch]\nn = [10, 10]\nsigma = [1.0, 1.0]\n")
