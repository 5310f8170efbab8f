from __future__ import annotations

import csv
import io
import json
import math

import numpy as np
import pytest

from quansdam.boolean import SearchOracleSpec, reduce_main, bfseq
from quansdam.cli import EXIT_CONFIG, EXIT_OK, EXIT_TOLERANCE, EXPERIMENTS, main
from quansdam.config import ConfigError, Param, build_config, eval_number, read_raw

SUBCOMMANDS = sorted(EXPERIMENTS)


def _config(tmp_path, text, name="cfg.txt"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def _run(tmp_path, cmd, text="", *extra):
    out = tmp_path / f"{cmd}.out"
    args = [cmd, "--out", str(out), *extra]
    if text:
        args += ["--config", _config(tmp_path, text)]
    code = main(args)
    return code, (out.read_text() if out.exists() else "")


def _rows(text):
    r = list(csv.reader(io.StringIO(text)))
    return r[0], r[1:]


# config parsing ---------------------------------------------------------------

@pytest.mark.parametrize("text, value", [
    ("pi/64", math.pi / 64), ("2*pi", 2 * math.pi), ("-0.5", -0.5), ("1e-3", 1e-3),
    ("(1+2)**2", 9.0), ("pi", math.pi),
])
def test_eval_number(text, value):
    assert eval_number(text) == value


@pytest.mark.parametrize("text", ["__import__('os')", "pie", "1/0", "3 +", "abs(2)", "[1]"])
def test_eval_number_rejects(text):
    with pytest.raises(ConfigError):
        eval_number(text)


def test_read_raw_text_and_json_agree():
    a, _ = read_raw("# comment\nK = 8\n\ntheta=pi/4  # trailing\n")
    b, _ = read_raw('{"K": 8, "theta": "pi/4"}')
    schema = {"K": Param("int", 1), "theta": Param("float", 0.0)}
    assert build_config("x", schema, a, {}).parameters == build_config("x", schema, b, {}).parameters


@pytest.mark.parametrize("text, fragment", [
    ("K\n", "line 1"),
    ("K=1\nK=2\n", "duplicate"),
    ("=3\n", "missing key"),
    ("{not json", "invalid JSON"),
    ("[1, 2]", "expected key=value"),
])
def test_read_raw_errors(text, fragment):
    with pytest.raises(ConfigError, match=fragment):
        read_raw(text)


def test_build_config_reports_line_and_key():
    raw, where = read_raw("a=1\nb=1.5\n")
    with pytest.raises(ConfigError, match=r"line 2: key 'b': expected an integer"):
        build_config("x", {"a": Param("int"), "b": Param("int")}, raw, where)


def test_build_config_required_and_unknown():
    with pytest.raises(ConfigError, match="missing required key 'a'"):
        build_config("x", {"a": Param("int", required=True)}, {}, {})
    with pytest.raises(ConfigError, match="unknown key 'z'"):
        build_config("x", {"a": Param("int", 1)}, {"z": 1}, {"z": "line 1"})


def test_build_config_lists():
    cfg = build_config("x", {"ns": Param("ints", [1])}, {"ns": "1, 2,4"}, {})
    assert cfg["ns"] == [1, 2, 4]


# exit codes and diagnostics ----------------------------------------------------

def test_zero_steps_rejected(tmp_path, capsys):
    code, _ = _run(tmp_path, "reference-sweep", "K=0\n")
    assert code == EXIT_CONFIG
    assert "K must be ≥ 1" in capsys.readouterr().err


def test_unknown_key_rejected(tmp_path, capsys):
    code, _ = _run(tmp_path, "truncation", "levels=16\nbogus=2\n")
    assert code == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "line 2" in err and "'bogus'" in err


def test_missing_config_file(capsys):
    assert main(["truncation", "--config", "/nonexistent/cfg"]) == EXIT_CONFIG
    assert "cannot read config" in capsys.readouterr().err


def test_malformed_oracle_spec_names_token(tmp_path, capsys):
    code, _ = _run(tmp_path, "oracle-equiv", "spec=n=3,x0=1a\n")
    assert code == EXIT_CONFIG
    assert "'x0=1a'" in capsys.readouterr().err


def test_oracle_register_too_large(tmp_path, capsys):
    code, _ = _run(tmp_path, "oracle-equiv", "n=6\n")
    assert code == EXIT_CONFIG
    assert "n too large" in capsys.readouterr().err


def test_library_value_error_is_config_error(tmp_path, capsys):
    # a momentum index beyond the grid's Nyquist bound
    code, _ = _run(tmp_path, "phase-quansdam", "points=16\nk=9\n")
    assert code == EXIT_CONFIG
    assert "Nyquist" in capsys.readouterr().err


def test_tolerance_failure_exit_code(tmp_path, capsys):
    # far outside the small-tau regime the cubic defect law breaks down
    code, text = _run(tmp_path, "bch-scaling", "pairs=1\ntaus=6,4\n")
    assert code == EXIT_TOLERANCE
    assert text.startswith("pair,tau,n,")
    assert "tolerance failure" in capsys.readouterr().err


def test_stdout_when_no_out(capsys):
    assert main(["useq-defect", "--config", "/dev/null"]) == EXIT_OK
    assert capsys.readouterr().out.startswith("trial,a,")


# subcommand behaviour ------------------------------------------------------------

def test_reference_sweep_reaches_orthogonality(tmp_path):
    code, text = _run(tmp_path, "reference-sweep", "theta=pi/64\nK=32\n")
    assert code == EXIT_OK
    header, rows = _rows(text)
    assert header[0] == "k" and header[-1].startswith("deviation=")
    assert [int(r[0]) for r in rows] == list(range(33))
    assert abs(float(rows[-1][3])) <= 1e-10
    for k, r in enumerate(rows[:-1]):
        assert abs(float(r[1]) - math.cos(k * math.pi / 64)) <= 1e-12
        assert float(r[6]) <= 1e-12


def test_reference_sweep_json_summary(tmp_path):
    code, text = _run(tmp_path, "reference-sweep", '{"theta": "pi/64", "K": 32}', "--format", "json")
    assert code == EXIT_OK
    doc = json.loads(text)
    assert abs(doc["summary"]["average_rate"] + 1 / 32) <= 1e-12
    assert doc["rows"][-1]["delta_rho=|rho(k+1)|-|rho(k)|"] is None


def test_reference_sweep_past_quarter_turn_leaves_closed_form_blank(tmp_path):
    code, text = _run(tmp_path, "reference-sweep", "theta=pi/16\nK=12\n")
    assert code == EXIT_OK
    _, rows = _rows(text)
    assert rows[7][5] != "" and rows[8][5] == ""


def test_oracle_equiv_n3(tmp_path):
    code, text = _run(tmp_path, "oracle-equiv", "n=3\ntheta=pi/3\n")
    assert code == EXIT_OK
    doc = json.loads(text)
    assert [r["x0"] for r in doc["rows"]] == list(range(8))
    assert all(r["max_deviation"] <= 1e-12 for r in doc["rows"])


def test_oracle_equiv_zero_angle_is_identity(tmp_path):
    code, text = _run(tmp_path, "oracle-equiv", "n=1\ntheta=0\n", "--format", "csv")
    assert code == EXIT_OK
    _, rows = _rows(text)
    assert all(float(r[-1]) == 0 for r in rows)
    for x0 in (0, 1):
        assert np.array_equal(reduce_main(bfseq(SearchOracleSpec(1, x0), 0.0), 1), np.eye(2))


def test_oracle_equiv_single_spec(tmp_path):
    code, text = _run(tmp_path, "oracle-equiv", "spec=n=4,x0=11\n")
    assert code == EXIT_OK
    rows = json.loads(text)["rows"]
    assert [(r["n"], r["x0"]) for r in rows] == [(4, 11)]


def test_qsd_sweep_random_schedule(tmp_path):
    code, text = _run(tmp_path, "qsd-sweep", "n=2\nK=12\nqm=random\ninitial=random\n", "--format", "json")
    assert code == EXIT_OK
    doc = json.loads(text)
    assert abs(doc["summary"]["norm_split"] - 1) <= 1e-10
    assert len(doc["rows"]) == 13


def test_qsd_sweep_rejects_target_outside_register(tmp_path, capsys):
    code, _ = _run(tmp_path, "qsd-sweep", "n=2\ntarget=2\n")
    assert code == EXIT_CONFIG
    assert "target" in capsys.readouterr().err


def test_phase_quansdam_on_lattice_zero(tmp_path):
    code, text = _run(tmp_path, "phase-quansdam", "L=8\npoints=128\nstep=0.25\nsteps=4\n")
    assert code == EXIT_OK
    _, rows = _rows(text)
    by_shift = {float(r[1]): float(r[5]) for r in rows}
    assert by_shift[0.5] <= 1e-10 and by_shift[1.0] <= 1e-10
    assert by_shift[0.25] > 0.5


def test_phase_quansdam_box_growth(tmp_path):
    code, text = _run(tmp_path, "phase-quansdam", "sweep=box\np0_prime=0.3\n")
    assert code == EXIT_OK
    _, rows = _rows(text)
    mags = [float(r[2]) for r in rows]
    assert [float(r[0]) for r in rows] == [10, 20, 40, 80]
    assert all(b < a for a, b in zip(mags, mags[1:]))


def test_truncation_ground_state_first_row_zero(tmp_path):
    code, text = _run(tmp_path, "truncation", "state=eigen\neigen_index=0\nmax_terms=4\n")
    assert code == EXIT_OK
    _, rows = _rows(text)
    assert rows[0][0] == "1" and float(rows[0][1]) <= 1e-12


def test_truncation_curve_monotone(tmp_path):
    code, text = _run(tmp_path, "truncation", "displacement=2\nmax_terms=20\n", "--format", "json")
    assert code == EXIT_OK
    doc = json.loads(text)
    eps = [r[doc["columns"][1]] for r in doc["rows"]]
    assert all(b <= a for a, b in zip(eps, eps[1:]))
    assert doc["summary"]["minimal_terms"] is not None


def test_truncation_window_larger_than_basis(tmp_path):
    code, _ = _run(tmp_path, "truncation", "levels=8\nmax_terms=9\n")
    assert code == EXIT_CONFIG


def test_bch_commuting_defects_vanish(tmp_path):
    code, text = _run(tmp_path, "bch-scaling", "mode=commuting\npairs=3\n")
    assert code == EXIT_OK
    _, rows = _rows(text)
    assert all(float(r[3]) <= 1e-12 for r in rows)
    assert all(r[4] == "nan" for r in rows)


def test_bch_random_slope(tmp_path):
    code, text = _run(tmp_path, "bch-scaling", "mode=random\npairs=2\n")
    assert code == EXIT_OK
    _, rows = _rows(text)
    assert all(abs(float(r[4]) - 3) <= 0.3 for r in rows)


def test_bch_harmonic_exponent(tmp_path):
    code, text = _run(tmp_path, "bch-scaling", "mode=harmonic_trap\nns=1,2,4,8,16\n")
    assert code == EXIT_OK
    _, rows = _rows(text)
    assert [int(r[2]) for r in rows] == [1, 2, 4, 8, 16]
    assert abs(float(rows[0][4]) + 1) <= 0.2


def test_useq_diagonal_exact(tmp_path):
    code, text = _run(tmp_path, "useq-defect", "trials=3\n")
    assert code == EXIT_OK
    _, rows = _rows(text)
    assert len(rows) == 6 and all(float(r[6]) <= 1e-12 for r in rows)


def test_useq_oscillator_shrinks(tmp_path):
    code, text = _run(tmp_path, "useq-defect", "mode=harmonic_trap\nns=1,4\nlevels=16\n")
    assert code == EXIT_OK
    _, rows = _rows(text)
    assert float(rows[-1][2]) < float(rows[0][2])


def test_seed_flag_changes_random_output(tmp_path):
    _, a = _run(tmp_path, "gaussian-overlap-check", "pairs=2\n", "--seed", "1")
    _, b = _run(tmp_path, "gaussian-overlap-check", "pairs=2\n", "--seed", "2")
    assert a != b


def test_seed_flag_overrides_config(tmp_path):
    _, a = _run(tmp_path, "gaussian-overlap-check", "pairs=2\nseed=5\n")
    _, b = _run(tmp_path, "gaussian-overlap-check", "pairs=2\nseed=9\n", "--seed", "5")
    assert a == b


# determinism -----------------------------------------------------------------

@pytest.mark.parametrize("fmt", ["csv", "json"])
@pytest.mark.parametrize("cmd", SUBCOMMANDS)
def test_two_runs_byte_identical(tmp_path, cmd, fmt):
    first = tmp_path / "a.out"
    second = tmp_path / "b.out"
    for out in (first, second):
        assert main([cmd, "--out", str(out), "--format", fmt, "--seed", "7"]) == EXIT_OK
    assert first.read_bytes() == second.read_bytes()
    data = first.read_bytes()
    assert b"\r" not in data and data.endswith(b"\n")
