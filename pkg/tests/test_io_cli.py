import json
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from wdl import acceptance, cli, io
from wdl.acceptance import CriterionResult
from wdl.errors import ConfigError, NoConvergence


# -- io -------------------------------------------------------------------------------

@given(st.floats(allow_nan=False))
def test_float_format_round_trips(x):
    assert float(io.format_value(x)) == x


def test_format_value_special_cases():
    assert io.format_value(True) == "true"
    assert io.format_value(float("nan")) == "nan"
    assert io.format_value(0.1) == "0.10000000000000001"
    assert io.format_value(3) == "3"


def test_csv_layout_and_round_trip(tmp_path):
    path = io.write_csv(tmp_path / "x.csv", ("a", "b"), [(1, 0.5), (2, 1e-20)], {"k": 2.0})
    text = path.read_text()
    assert text.splitlines()[:2] == ["# k=2", "a,b"]
    assert text.endswith("\n") and "\r" not in text
    manifest, header, rows = io.read_csv(path)
    assert manifest == {"k": "2"} and header == ["a", "b"]
    assert [float(v) for v in rows[1]] == [2.0, 1e-20]


def test_parse_scalar():
    assert io.parse_scalar("TRUE") is True
    assert io.parse_scalar("12") == 12
    assert io.parse_scalar("1e-3") == 1e-3
    assert io.parse_scalar(" Strip2D ") == "Strip2D"


def test_read_config(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("# comment\nk-min = 30\n\nGeometry=RadialDisk\n")
    assert io.read_config(cfg, allowed={"k_min", "geometry"}) == {"k_min": 30,
                                                                 "geometry": "RadialDisk"}
    with pytest.raises(ConfigError):
        io.read_config(cfg, allowed={"k_min"})
    cfg.write_text("no equals sign\n")
    with pytest.raises(ConfigError):
        io.read_config(cfg)


# -- cli ------------------------------------------------------------------------------

def run(tmp_path, *argv, sub="out"):
    out = tmp_path / sub
    code = cli.main([*argv, "--out-dir", str(out)])
    return code, out


def summary(out, command):
    return json.loads((out / f"{command}_summary.json").read_text())


def test_modes_default_range_writes_181_rows(tmp_path):
    code, out = run(tmp_path, "modes", "--family", "cap", "--nu", "0", "--m", "1")
    assert code == 0
    manifest, header, rows = io.read_csv(out / "modes.csv")
    assert len(rows) == 181
    assert manifest["k_min"] == "20" and "out_dir" not in manifest
    assert all(float(r[header.index("im_lambda")]) < 0 for r in rows)
    assert summary(out, "modes")["result"]["rows"] == 181


def test_outputs_are_byte_identical_across_runs(tmp_path):
    args = ("modes", "--family", "strip", "--k-min", "20", "--k-max", "30")
    _, a = run(tmp_path, *args, sub="a")
    _, b = run(tmp_path, *args, sub="b")
    assert (a / "modes.csv").read_bytes() == (b / "modes.csv").read_bytes()
    assert (a / "modes_summary.json").read_bytes() == (b / "modes_summary.json").read_bytes()


def test_flags_override_config_file(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("family=strip\nk_min=40\nk_max=45\n")
    code, out = run(tmp_path, "modes", "--config", str(cfg), "--k-max", "50")
    assert code == 0
    conf = summary(out, "modes")["config"]
    assert (conf["family"], conf["k_min"], conf["k_max"]) == ("strip", 40.0, 50.0)
    assert summary(out, "modes")["result"]["rows"] == 11


def test_config_errors_exit_2_and_leave_no_files(tmp_path, capsys):
    code, out = run(tmp_path, "modes", "--k-min", "abc")
    assert code == cli.EXIT_CONFIG
    assert json.loads(capsys.readouterr().err)["error"] == "config"
    assert not out.exists() or not any(out.iterdir())
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("colour=red\n")
    assert run(tmp_path, "modes", "--config", str(cfg))[0] == cli.EXIT_CONFIG
    assert run(tmp_path, "modes", "--family", "nope")[0] == cli.EXIT_CONFIG
    assert run(tmp_path, "spectrum", "--nx", "4")[0] == cli.EXIT_CONFIG


def test_domain_error_exits_2(tmp_path):
    code, _ = run(tmp_path, "modes", "--k-min", "1", "--k-max", "2", "--family", "infinite")
    assert code == cli.EXIT_CONFIG


def test_numerical_failure_removes_partial_output(tmp_path, monkeypatch, capsys):
    def broken(cfg, out):
        out.path("partial.csv").write_text("x\n")
        raise NoConvergence("synthetic failure")
    monkeypatch.setitem(cli.HANDLERS, "spectrum", broken)
    code, out = run(tmp_path, "spectrum")
    assert code == cli.EXIT_NUMERICAL
    assert not (out / "partial.csv").exists()
    assert json.loads(capsys.readouterr().err)["error"] == "numerical"


def test_all_exit_code_reflects_acceptance(tmp_path, monkeypatch):
    def fake(passed):
        res = CriterionResult(1, "fake", passed, {}, 0.0, 1.0)
        return lambda quick, seed, echo: [res]
    monkeypatch.setattr(acceptance, "run_all", fake(False))
    assert run(tmp_path, "all")[0] == cli.EXIT_ACCEPTANCE
    monkeypatch.setattr(acceptance, "run_all", fake(True))
    assert run(tmp_path, "all")[0] == cli.EXIT_OK


def test_undamped_evolution_conserves_energy(tmp_path):
    code, out = run(tmp_path, "evolve", "--a", "0", "--nx", "16", "--ny", "16", "--T", "2",
                    "--dt", "0.05")
    assert code == 0
    res = summary(out, "evolve")["result"]
    assert res["relative_drift"] < 1e-12
    assert res["steps"] == 40
    _, header, rows = io.read_csv(out / "trace.csv")
    assert header == ["t", "energy", "dissipation"] and len(rows) == 41


def test_spectrum_and_resolvent_commands(tmp_path):
    code, out = run(tmp_path, "spectrum", "--nx", "16", "--ny", "16")
    assert code == 0 and summary(out, "spectrum")["result"]["max_re"] < 0
    code, out = run(tmp_path, "resolvent", "--nx", "16", "--ny", "16", "--lambda-min", "5",
                    "--lambda-max", "10", "--lambda-steps", "51")
    assert code == 0
    _, header, rows = io.read_csv(out / "scan.csv")
    assert header == ["lambda", "norm"] and len(rows) == 51


def test_impedance_command_is_seeded(tmp_path):
    args = ("impedance", "--geometry", "Strip1D", "--nx", "32", "--k", "5", "--lambda-min", "2",
            "--lambda-max", "6", "--lambda-steps", "5", "--n-trials", "8", "--seed", "3")
    _, a = run(tmp_path, *args, sub="a")
    _, b = run(tmp_path, *args, sub="b")
    assert (a / "quotient.csv").read_bytes() == (b / "quotient.csv").read_bytes()
    assert summary(a, "impedance")["result"]["sup_quotient"] > 0


def test_qep_oracle_command(tmp_path):
    code, out = run(tmp_path, "qep-oracle", "--geometry", "Strip1D", "--k", "10", "--nx", "64")
    assert code == 0
    assert summary(out, "qep-oracle")["result"]["order"] == pytest.approx(2.0, abs=0.1)


def test_sharpness_command(tmp_path):
    code, out = run(tmp_path, "sharpness", "--family", "strip", "--k-min", "20", "--k-max", "120")
    assert code == 0
    res = summary(out, "sharpness")["result"]
    assert abs(res["exponent"] + 2) < 0.2 and res["flagged"] == 0
    _, header, rows = io.read_csv(out / "sharpness.csv")
    assert tuple(header) == cli.SHARPNESS_HEADER and len(rows) == 101


def test_summary_json_replaces_non_finite_numbers():
    assert cli._jsonable({"x": math.inf, "y": [1.0]}) == {"x": "inf", "y": [1.0]}
