import json
import subprocess
import sys

import pytest
from hypothesis import given
from hypothesis import strategies as st

from hbfsim import cli
from hbfsim.cli import EXIT_CONFIG, EXIT_OK, ParseError, parse_scenario, parse_scenario_text
from hbfsim.engine import UDP_FAST, ConfigError, Scenario
from hbfsim.presets import PRESETS, cdf_rows, emit_cdf, preset_configs, run_preset, seeds


def test_empty_file_gives_defaults(tmp_path):
    path = tmp_path / "empty.yaml"
    path.write_text("")
    sc = parse_scenario(path)
    assert sc == Scenario()
    assert sc.ue_count == 7 and sc.radius_m == 100.0 and sc.radio.numerology == 2


def test_nested_sections_and_traffic_names():
    sc, extras = parse_scenario_text(
        "name: demo\nout: results\nscheduler: PMRS\nn_layers: 4\nbf_scheme: SMBF\ntraffic: udp-fast\n"
        "radio:\n  bs_array: [4, 4]\nchannel:\n  n_clusters: 4\n"
    )
    assert sc.traffic == UDP_FAST and sc.radio.bs_array == (4, 4) and sc.channel.n_clusters == 4
    assert extras == {"name": "demo", "out": "results"}
    sc, _ = parse_scenario_text("traffic:\n  type: adaptive\n  max_window: 32\n")
    assert sc.traffic.type == "adaptive" and sc.traffic.max_window == 32


def test_tmrs_with_four_layers_is_rejected():
    with pytest.raises(ConfigError) as exc:
        parse_scenario_text("scheduler: TMRS\nn_layers: 4\n")
    assert set(exc.value.fields) >= {"scheduler", "n_layers"}


def test_unknown_key_is_named():
    with pytest.raises(ConfigError, match="bogus"):
        parse_scenario_text("ue_count: 3\nbogus: 1\n")
    with pytest.raises(ConfigError, match="radio.antenna"):
        parse_scenario_text("radio:\n  antenna: 1\n")
    with pytest.raises(ConfigError, match="traffic"):
        parse_scenario_text("traffic: carrier-pigeon\n")


def test_parse_error_reports_line():
    with pytest.raises(ParseError) as exc:
        parse_scenario_text("ue_count: 3\nradius_m: [1, 2\n")
    assert exc.value.line is not None and exc.value.line >= 2
    with pytest.raises(ParseError):
        parse_scenario_text("- 1\n- 2\n")


def test_validate_and_exit_codes(tmp_path, capsys):
    good = tmp_path / "good.yaml"
    good.write_text("ue_count: 2\n")
    assert cli.main(["validate", str(good)]) == EXIT_OK
    assert capsys.readouterr().out.startswith("ok ")
    bad = tmp_path / "bad.yaml"
    bad.write_text("scheduler: TMRS\nn_layers: 4\n")
    assert cli.main(["validate", str(bad)]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "n_layers" in err and "scheduler" in err
    assert cli.main(["validate", str(tmp_path / "missing.yaml")]) == EXIT_CONFIG


def test_simulate_writes_bundle(tmp_path, capsys):
    path = tmp_path / "s.yaml"
    path.write_text("ue_count: 2\nduration_s: 0.05\nwarmup_s: 0.01\n")
    out = tmp_path / "out"
    assert cli.main(["simulate", str(path), "--seed", "3", "--out", str(out)]) == EXIT_OK
    assert "seed 3" in capsys.readouterr().out
    for name in ("metrics.csv", "summary.csv", "manifest.json"):
        assert (out / name).exists()
    assert (out / "scenario" / "cdf_sinr_DL.csv").read_text().startswith("value,cdf\n")


def test_module_entry_point(tmp_path):
    path = tmp_path / "s.yaml"
    path.write_text("scheduler: TMRS\nn_layers: 4\n")
    proc = subprocess.run([sys.executable, "-m", "hbfsim", "validate", str(path)], capture_output=True, text=True)
    assert proc.returncode == EXIT_CONFIG


def test_emit_cdf_examples(tmp_path):
    p = emit_cdf([3, 1, 2], tmp_path / "a.csv")
    assert p.read_text() == "value,cdf\n1,0.333333333\n2,0.666666667\n3,1\n"
    assert emit_cdf([2.5], tmp_path / "b.csv").read_text() == "value,cdf\n2.5,1\n"
    assert emit_cdf([], tmp_path / "c.csv").read_text() == "value,cdf\n"


@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=200))
def test_cdf_rows_properties(xs):
    rows = cdf_rows(xs)
    assert [v for v, _ in rows] == sorted(xs)
    assert rows[-1][1] == 1.0
    assert cdf_rows([v for v, _ in rows]) == rows
    thin = cdf_rows(xs, 10)
    assert len(thin) <= 10 and thin[-1] == rows[-1]
    assert set(thin) <= set(rows)


def test_preset_rosters():
    assert set(PRESETS) == {"bf-comparison", "sched-comparison", "delay-retx", "throughput-delay", "apps"}
    bf = preset_configs("bf-comparison")
    assert len(bf) == 6
    assert all(c.scenario.rlc_mode == "UM" and not c.scenario.harq for c in bf)
    assert [c.name for c in preset_configs("sched-comparison")] == ["TMRS-1", "PMRS-1", "PMRS-4", "AMRS-4"]
    assert len(preset_configs("delay-retx")) == 8
    apps = preset_configs("apps")
    assert len(apps) == 9 and all(c.scenario.harq and c.scenario.rlc_mode == "AM" for c in apps)
    assert seeds(5, 3) == [5, 6, 7]
    with pytest.raises(KeyError):
        preset_configs("nope")


def test_preset_output_is_reproducible(tmp_path):
    a = run_preset("sched-comparison", 1, tmp_path / "a", 11, 0.04, 0.01, workers=1, cdf_points=50)
    b = run_preset("sched-comparison", 1, tmp_path / "b", 11, 0.04, 0.01, workers=1, cdf_points=50)
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*.csv"))
    assert len(files) == 2 + 4 * 6
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    doc = json.loads(a.bundle.manifest.read_text())
    assert doc["schema_version"] == 1 and doc["preset"] == "sched-comparison"
    assert [c["config_hash"] for c in doc["configs"]] == [c.scenario.config_hash() for c in b.configs]
    header = a.bundle.metrics.read_text().splitlines()[0].split(",")
    assert header[:4] == ["config", "run", "seed", "config_hash"]
    assert cli.main(["replay", str(a.bundle.manifest), "--out", str(tmp_path / "c"), "--workers", "1"]) == EXIT_OK
    for f in files:
        assert (tmp_path / "c" / f).read_bytes() == (tmp_path / "a" / f).read_bytes()
