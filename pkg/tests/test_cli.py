import json
import shutil
from pathlib import Path

import pytest

from smartoverlay.cli import main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture()
def cfg_dir(tmp_path):
    for f in CONFIGS.iterdir():
        shutil.copy(f, tmp_path / f.name)
    return tmp_path


def small_config(d, **agent):
    cfg = {
        "generator": {"base_rtt_ms": [[0, 400, 100, 120], [400, 0, 150, 180], [100, 150, 0, 500], [120, 180, 500, 0]],
                      "rounds": 40, "jitter_pct": 1.0},
        "trace_seed": 1,
        "pairs": [[0, 1], [1, 0]],
        "agent": {"seed": 2, **agent},
    }
    path = d / "small.json"
    path.write_text(json.dumps(cfg))
    return path


# --- generate ----------------------------------------------------------------------


def test_generate_summary_and_determinism(cfg_dir, capsys):
    spec = cfg_dir / "small_outage_spec.json"
    assert main(["generate", str(spec), "--seed", "4", "--out", str(cfg_dir / "a.csv")]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["rows"] == 30 * 6 and summary["lost_samples"] == summary["expected_outage_losses"] == 7
    assert len((cfg_dir / "a.csv").read_text().splitlines()) == 1 + 180
    main(["generate", str(spec), "--seed", "4", "--out", str(cfg_dir / "b.csv")])
    assert (cfg_dir / "a.csv").read_bytes() == (cfg_dir / "b.csv").read_bytes()


def test_generate_rejects_bad_spec(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"rounds": 3}')
    assert main(["generate", str(bad), "--out", str(tmp_path / "x.csv")]) == 2
    bad.write_text("{not json")
    assert main(["generate", str(bad), "--out", str(tmp_path / "x.csv")]) == 2


# --- import ------------------------------------------------------------------------


def test_import_prints_report(cfg_dir, capsys):
    log = cfg_dir / "ping.csv"
    log.write_text("timestamp,src,dst,rtt_ms,success\n0,tokyo,santiago,400,1\n130,tokyo,santiago,410,1\n")
    out = cfg_dir / "trace.csv"
    code = main(["import", str(log), "--topology", str(cfg_dir / "ring20_topology.json"), "--out", str(out)])
    assert code == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["rounds"] == 2 and rep["pairs_seen"] == 1 and rep["coverage_pct"] == 100.0
    assert out.read_text().startswith("round,src,dst,rtt_us,lost\n")


def test_import_unknown_node_exits_2(cfg_dir):
    log = cfg_dir / "ping.csv"
    log.write_text("timestamp,src,dst,rtt_ms,success\n0,tokyo,atlantis,400,1\n")
    code = main(["import", str(log), "--topology", str(cfg_dir / "ring20_topology.json"), "--out", str(cfg_dir / "t")])
    assert code == 2


# --- run ---------------------------------------------------------------------------


def test_run_writes_outputs_and_is_reproducible(tmp_path):
    cfg = small_config(tmp_path)
    assert main(["run", str(cfg), "--out-dir", str(tmp_path / "a")]) == 0
    assert main(["run", str(cfg), "--out-dir", str(tmp_path / "b")]) == 0
    for name in ("reports.ndjson", "outcomes.ndjson", "aggregate.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    agg = json.loads((tmp_path / "a" / "aggregate.json").read_text())
    for key in ("pct_nonoptimal_direct", "pct_nonoptimal_chosen", "avg_gap_direct", "avg_gap_chosen",
                "avg_2hop_gap", "hop_histogram", "n_evaluated"):
        assert key in agg
    assert len((tmp_path / "a" / "reports.ndjson").read_text().splitlines()) == 80


def test_run_seed_and_rounds_flags(tmp_path):
    cfg = small_config(tmp_path)
    assert main(["run", str(cfg), "--out-dir", str(tmp_path / "a"), "--rounds", "5", "--seed", "7"]) == 0
    assert len((tmp_path / "a" / "reports.ndjson").read_text().splitlines()) == 10


def test_run_uses_env_out_dir(tmp_path, monkeypatch):
    cfg = small_config(tmp_path)
    monkeypatch.setenv("SMARTOVERLAY_OUT", str(tmp_path / "envout"))
    assert main(["run", str(cfg)]) == 0
    assert (tmp_path / "envout" / "aggregate.json").exists()


def test_run_input_errors_exit_2(tmp_path):
    cfg = small_config(tmp_path)
    assert main(["run", str(cfg), "--rounds", "0", "--out-dir", str(tmp_path / "z")]) == 2
    assert main(["run", str(tmp_path / "missing.json")]) == 2
    assert main(["run"]) == 2
    assert main(["frobnicate"]) == 2


def test_run_nonconvergence_exits_3(tmp_path, capsys):
    cfg = small_config(tmp_path, max_iter=1, tol=1e-300)
    assert main(["run", str(cfg), "--out-dir", str(tmp_path / "n")]) == 3
    assert "did not converge" in capsys.readouterr().err


# --- report ------------------------------------------------------------------------


@pytest.fixture()
def reports_file(tmp_path):
    main(["run", str(small_config(tmp_path)), "--out-dir", str(tmp_path / "r")])
    return tmp_path / "r" / "reports.ndjson"


def test_report_hops(reports_file, capsys):
    assert main(["report", str(reports_file), "--figure", "hops"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "hops,percent"
    total = sum(float(l.split(",")[1]) for l in lines[1:])
    assert total == pytest.approx(100.0)


def test_report_gap_cdf_monotone(reports_file, capsys):
    assert main(["report", str(reports_file), "--figure", "gap"]) == 0
    rows = [l.split(",") for l in capsys.readouterr().out.splitlines()[1:]]
    for series in ("direct", "chosen"):
        cdf = [float(r[2]) for r in rows if r[0] == series]
        assert cdf == sorted(cdf) and cdf[-1] == 1.0


def test_report_timeseries(reports_file, capsys):
    assert main(["report", str(reports_file), "--figure", "timeseries:0-1"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 41 and all(len(l.split(",")) == 4 for l in lines)


@pytest.mark.parametrize("figure", ["timeseries:2-3", "timeseries:zz", "pie"])
def test_report_bad_figure_exits_2(reports_file, figure):
    assert main(["report", str(reports_file), "--figure", figure]) == 2


def test_report_garbage_file_exits_2(tmp_path):
    f = tmp_path / "r.ndjson"
    f.write_text('{"round": 1}\n')
    assert main(["report", str(f), "--figure", "hops"]) == 2
