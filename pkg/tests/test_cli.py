import json
import subprocess
import sys

import pytest

from riskbandit.cli import (
    CURVE_HEADER,
    TRACE_HEADER,
    cmd_oracle,
    cmd_run,
    decay_so_far,
    fmt,
    main,
    parse_config,
    serialize_config,
)
from riskbandit.errors import AssumptionViolated, NonUniqueOptimum, ParseError, ValidationError

MINIMAL = {
    "arms": [{"family": "uniform", "a": 0.0, "b": 0.5}, {"family": "uniform", "a": 0.5, "b": 1.0}],
    "risk": {"kind": "cvar", "alpha": 0.5},
    "horizons": [10],
}


def doc(**changes):
    d = json.loads(json.dumps(MINIMAL))
    d.update(changes)
    return json.dumps(d, indent=2)


def write(tmp_path, text, name="exp.json"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


class TestParse:
    def test_defaults_and_oracle_constants(self):
        cfg = parse_config(doc())
        assert cfg.delta == 0.1 and cfg.replications == 100 and cfg.seed == 0
        assert cfg.spec.md_radius_variant == "sum"
        assert cfg.spec.bounds.m_alpha == pytest.approx(0.5)
        assert cfg.spec.bounds.M == 1.0
        assert (cfg.trace_path, cfg.curve_path) == ("trace.csv", "curve.csv")

    def test_explicit_constants_win(self):
        cfg = parse_config(doc(risk={"kind": "cvar", "alpha": 0.5, "constants": {"m_alpha": 3.0}}))
        assert cfg.spec.bounds.m_alpha == 3.0

    def test_bad_alpha_names_field(self):
        with pytest.raises(ValidationError) as err:
            parse_config(doc(risk={"kind": "cvar", "alpha": 1.2}))
        assert err.value.field == "risk.alpha"

    @pytest.mark.parametrize(
        "changes, field",
        [
            ({"horizons": [10, 10]}, "horizons"),
            ({"horizons": [1]}, "horizons[0]"),
            ({"replications": 0}, "replications"),
            ({"delta": 1.5}, "delta"),
            ({"seed": -3}, "seed"),
            ({"md_radius_variant": "minus"}, "md_radius_variant"),
            ({"risk": {"kind": "cvar", "alpha": 0.5, "constants": {"m_aplha": 1.0}}}, "risk.constants.m_aplha"),
            ({"risk": {"kind": "md", "gamma": 1.0, "p": 0.5}}, "risk.p"),
            ({"risk": {"kind": "shortfall", "loss": "cubic"}}, "risk.loss.kind"),
            ({"risk": {"kind": "var"}}, "risk.kind"),
            ({"arms": [{"family": "uniform", "a": 0.6, "b": 0.5}, {"family": "uniform", "a": 0, "b": 1}]}, "arms[0]"),
            ({"arms": [{"family": "uniform", "a": 0.0}]}, "arms"),
            ({"extra": 1}, "extra"),
            ({"outputs": {"trace": "t.csv", "plot": "p.png"}}, "outputs.plot"),
        ],
    )
    def test_validation_errors(self, changes, field):
        with pytest.raises(ValidationError) as err:
            parse_config(doc(**changes))
        assert err.value.field == field

    def test_parse_error_has_line(self):
        with pytest.raises(ParseError) as err:
            parse_config('{\n  "arms": [\n  ,\n}')
        assert err.value.line == 3

    def test_duplicate_keys_rejected(self):
        with pytest.raises(ParseError):
            parse_config('{"horizons": [10], "horizons": [20]}')

    def test_nan_rejected(self):
        with pytest.raises(ParseError):
            parse_config(doc().replace('"horizons"', '"delta": NaN, "horizons"'))

    @pytest.mark.parametrize(
        "risk",
        [
            {"kind": "cvar", "alpha": 0.25},
            {"kind": "md", "gamma": 0.5, "p": 2.0},
            {"kind": "shortfall", "loss": "exp_minus_one"},
            {"kind": "shortfall", "loss": {"kind": "piecewise_linear", "breakpoints": [0.0], "slopes": [0.5, 2.0]}},
            {"kind": "mean", "constants": {"M": 2.0}},
        ],
    )
    def test_round_trip(self, risk):
        cfg = parse_config(doc(risk=risk, seed=2**64 - 1, replications=3, delta=0.2))
        assert parse_config(serialize_config(cfg)) == cfg

    def test_discrete_arm_with_cvar(self):
        arms = [{"family": "scaled_bernoulli", "p": 0.3}, {"family": "uniform", "a": 0, "b": 1}]
        with pytest.raises(AssumptionViolated):
            parse_config(doc(arms=arms))


def test_number_format():
    assert fmt(0.1) == "0.1"
    assert fmt(1 / 3) == "0.333333333333"
    assert fmt(7) == "7"
    assert fmt(float("nan")) == "nan"
    assert fmt(1e-20) == "1e-20"


def test_decay_so_far():
    import numpy as np

    grid = np.array([10, 40, 160])
    out = decay_so_far(grid, 2.0 / np.sqrt(grid))
    assert np.isnan(out[0]) and np.isnan(out[1])
    assert out[2] == pytest.approx(-0.5)


class TestRun:
    def test_row_counts_and_headers(self, tmp_path):
        cfg = parse_config(doc(replications=2))
        assert cmd_run(cfg, tmp_path, stream=open("/dev/null", "w")) == 0
        trace = (tmp_path / "trace.csv").read_bytes().decode().split("\n")
        assert trace[0] == ",".join(TRACE_HEADER)
        assert len(trace) - 2 == 20  # header and trailing newline
        assert trace[1].split(",")[:3] == ["1", "1", "1"]
        curve = (tmp_path / "curve.csv").read_text().splitlines()
        assert curve[0] == ",".join(CURVE_HEADER) and len(curve) == 2

    def test_lf_line_endings(self, tmp_path):
        cmd_run(parse_config(doc(replications=2)), tmp_path, stream=open("/dev/null", "w"))
        assert b"\r" not in (tmp_path / "trace.csv").read_bytes()

    def test_byte_identical_reruns(self, tmp_path):
        cfg = parse_config(doc(replications=3, horizons=[10, 30]))
        sink = open("/dev/null", "w")
        cmd_run(cfg, tmp_path / "a", stream=sink)
        cmd_run(cfg, tmp_path / "b", threads=2, stream=sink)
        for name in ("trace.csv", "curve.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_output_in_subdirectory(self, tmp_path):
        cfg = parse_config(doc(replications=2, outputs={"trace": "deep/t.csv", "curve": "c.csv"}))
        cmd_run(cfg, tmp_path, stream=open("/dev/null", "w"))
        assert (tmp_path / "deep" / "t.csv").exists()
        assert not [p for p in tmp_path.rglob("*.tmp")]


class TestMain:
    def test_run_and_oracle(self, tmp_path, capsys):
        path = write(tmp_path, doc(replications=2))
        assert main(["run", "--config", path, "--out-dir", str(tmp_path / "out"), "--seed", "4"]) == 0
        assert (tmp_path / "out" / "curve.csv").exists()
        assert main(["oracle", "--config", path]) == 0
        out = capsys.readouterr().out
        assert "optimal arm k* = 1" in out and "0.875" in out and "m(alpha) = 0.5" in out

    def test_oracle_shortfall_constants(self, tmp_path, capsys):
        path = write(tmp_path, doc(risk={"kind": "shortfall", "loss": "exp_minus_one"}))
        assert main(["oracle", "--config", path]) == 0
        out = capsys.readouterr().out
        for name in ("M_G", "M_l", "m_l", "C_l"):
            assert f"{name} = " in out

    def test_tie_exits_nonzero(self, tmp_path, capsys):
        arms = [{"family": "uniform", "a": 0, "b": 1}, {"family": "uniform", "a": 0, "b": 1}]
        path = write(tmp_path, doc(arms=arms))
        assert main(["oracle", "--config", path]) != 0
        assert "NonUniqueOptimum" in capsys.readouterr().err

    def test_discrete_cvar_exits_nonzero(self, tmp_path, capsys):
        arms = [{"family": "deterministic", "c": 0.2}, {"family": "uniform", "a": 0, "b": 1}]
        path = write(tmp_path, doc(arms=arms))
        assert main(["oracle", "--config", path]) != 0
        assert "AssumptionViolated" in capsys.readouterr().err

    def test_invalid_output_path(self, tmp_path, capsys):
        path = write(tmp_path, doc(replications=2))
        blocker = tmp_path / "file"
        blocker.write_text("")
        assert main(["run", "--config", path, "--out-dir", str(blocker / "sub")]) != 0
        assert "I/O error" in capsys.readouterr().err

    def test_missing_config(self, tmp_path):
        assert main(["oracle", "--config", str(tmp_path / "nope.json")]) != 0

    def test_config_error(self, tmp_path, capsys):
        path = write(tmp_path, doc(risk={"kind": "cvar", "alpha": 1.2}))
        assert main(["oracle", "--config", path]) != 0
        assert "risk.alpha" in capsys.readouterr().err

    def test_threads_from_environment(self, tmp_path, monkeypatch):
        path = write(tmp_path, doc(replications=2))
        monkeypatch.setenv("RISKBANDIT_THREADS", "2")
        assert main(["run", "--config", path, "--out-dir", str(tmp_path / "o")]) == 0
        monkeypatch.setenv("RISKBANDIT_THREADS", "zero")
        assert main(["run", "--config", path, "--out-dir", str(tmp_path / "o")]) != 0

    def test_module_entry_point(self, tmp_path):
        path = write(tmp_path, doc())
        res = subprocess.run(
            [sys.executable, "-m", "riskbandit", "oracle", "--config", path],
            capture_output=True,
            text=True,
        )
        assert res.returncode == 0 and "optimal arm" in res.stdout
