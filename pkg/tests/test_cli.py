import csv
import io
import json

import pytest

from rsma_slipt.cli import build_parser, main


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "small.yaml"
    path.write_text(
        "led_positions: [[0.5, 2.5, 4.5], [2.5, 0.5, 4.5]]\n"
        "user_positions: [[1.0, 1.5, 1.7]]\n"
        "energy_threshold: 0.001\n"
        "led:\n  max_optical_power: 31.25\n"
    )
    return path


def test_parser_has_subcommands():
    p = build_parser()
    for cmd in ("solve", "sweep", "oracle"):
        assert p.parse_args([cmd] + (["--axis", "SNR"] if cmd == "sweep" else [])).command == cmd


def test_solve_json(small_config, tmp_path):
    out = tmp_path / "sol.json"
    assert main(["solve", "--config", str(small_config), "--scheme", "rsma,sdma", "--trace",
                 "--out", str(out), "--strict"]) == 0
    rows = json.loads(out.read_text())
    assert [r["scheme"] for r in rows] == ["rsma", "sdma"]
    assert rows[0]["status"] == "converged" and rows[0]["valid"]
    assert rows[0]["mmf_rate"] == pytest.approx(rows[1]["mmf_rate"], abs=1e-4)
    assert rows[0]["trace"][0].startswith("m=  0")


def test_sweep_csv(small_config, capsys):
    assert main(["sweep", "--config", str(small_config), "--axis", "SNR", "--grid", "0,20",
                 "--schemes", "sdma", "--workers", "1"]) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert [float(r["axis_value"]) for r in rows] == [0.0, 20.0]
    assert float(rows[1]["mmf_rate"]) >= float(rows[0]["mmf_rate"])


def test_oracle_csv(capsys):
    assert main(["oracle", "--n-leds", "2", "--n-users", "1", "--energy-threshold", "0.001",
                 "--resolution", "5", "--scheme", "sdma", "--strict"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "scheme,oracle_mmf,solver_mmf,margin,status"
    assert out[1].startswith("sdma,") and out[1].endswith(",ok")


def test_bad_input_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("bogus: 1\n")
    assert main(["solve", "--config", str(bad)]) == 2
    assert "error" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["sweep", "--axis", "nope"])
    with pytest.raises(SystemExit):
        main(["solve", "--scheme", "tdma"])
