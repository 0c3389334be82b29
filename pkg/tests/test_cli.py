from __future__ import annotations

import csv
import json
import math
from datetime import datetime, timezone

import pytest

from innercore import cli
from innercore.errors import InvariantViolation
from innercore.pipeline import RunConfig, read_table

from conftest import OCCURRENCES, PRINTED_SCORES

T0 = int(datetime(2022, 5, 8, tzinfo=timezone.utc).timestamp())
DAY = 86400


def addr(k):
    return f"0x{k:040x}"


def write_tx(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["from_address", "to_address", "value", "timestamp"])
        for s, d, v, t in rows:
            w.writerow([addr(s) if isinstance(s, int) else s, addr(d) if isinstance(d, int) else d, v, t])
    return str(path)


def ring(nodes, t, base_weight=1):
    """A directed ring over ``nodes`` on day offset ``t`` with distinct weights."""
    rows = []
    for k, v in enumerate(nodes):
        w = nodes[(k + 1) % len(nodes)]
        rows.append((v, w, str((base_weight + k) * 10 ** 18), T0 + t * DAY + 60 * k))
    rows.append((nodes[0], nodes[2], str(7 * 10 ** 18), T0 + t * DAY + 5))
    return rows


@pytest.fixture
def two_day_csv(tmp_path):
    rows = ring([1, 2, 3, 4, 5], 0) + ring([3, 4, 5, 6, 7, 8, 9, 10], 1)
    return write_tx(tmp_path / "two_day.csv", rows)


def run(argv):
    return cli.main([str(a) for a in argv])


# ----------------------------------------------------------------- ingest

def test_ingest_reports_one_line_per_day(tmp_path, capsys):
    rows = ring([1, 2, 3], 0) + ring([1, 2, 3], 1) + ring([2, 3, 4], 2)
    p = write_tx(tmp_path / "tx.csv", rows)
    assert run(["ingest", "-i", p, "-o", tmp_path / "out"]) == 0
    out = capsys.readouterr().out
    assert sum(1 for line in out.splitlines() if line.startswith("2022-05-")) == 3
    rep = json.loads((tmp_path / "out" / "ingest_report.json").read_text())
    assert rep["snapshots"] == 3
    assert (tmp_path / "out" / "graph.npz").exists()


def test_ingest_empty_csv_warns_and_succeeds(tmp_path, capsys):
    p = write_tx(tmp_path / "tx.csv", [])
    assert run(["ingest", "-i", p, "-o", tmp_path / "out"]) == 0
    assert "0 snapshot" in capsys.readouterr().out


def test_ingest_counts_malformed_row_under_tolerance(tmp_path):
    rows = ring(list(range(1, 30)), 0) + [("0xnothex", 2, "1", T0)]
    p = write_tx(tmp_path / "tx.csv", rows)
    assert run(["ingest", "-i", p, "-o", tmp_path / "out"]) == 0
    rep = json.loads((tmp_path / "out" / "ingest_report.json").read_text())
    assert rep["malformed"] == 1


def test_ingest_over_tolerance_exits_one(tmp_path, capsys):
    p = write_tx(tmp_path / "tx.csv", [(1, 2, "x", T0), (1, 2, "1", T0)])
    assert run(["ingest", "-i", p, "-o", tmp_path / "out"]) == 1
    assert "row" in capsys.readouterr().err


def test_missing_input_exits_one(tmp_path):
    assert run(["innercore", "-i", tmp_path / "absent.csv", "-o", tmp_path / "out"]) == 1


# ----------------------------------------------------------------- pipeline

def test_two_day_fixture_gives_expansion_five_decay_two(tmp_path, two_day_csv):
    out = tmp_path / "out"
    assert run(["pipeline", "-i", two_day_csv, "-o", out, "--epsilon", "1", "--no-timestamp"]) == 0
    rows = read_table(out / "series.csv")
    assert [(r["inner_size"], r["expansion"], r["decay"]) for r in rows] == [("5", "", ""), ("8", "5", "2")]
    for name in ("innercore.csv", "motifs.csv", "nfiaf.csv", "anomalies.json"):
        assert (out / name).exists()


def test_flat_series_has_empty_anomaly_report(tmp_path):
    rows = [r for t in range(10) for r in ring([1, 2, 3, 4, 5, 6], t)]
    p = write_tx(tmp_path / "tx.csv", rows)
    assert run(["pipeline", "-i", p, "-o", tmp_path / "out", "--epsilon", "1"]) == 0
    rep = json.loads((tmp_path / "out" / "anomalies.json").read_text())
    assert rep["pairs"] == [] and rep["motif_days"] == []


def test_outputs_echo_effective_config(tmp_path, two_day_csv):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"epsilon": 0.5, "window": 3}))
    out = tmp_path / "out"
    assert run(["pipeline", "--config", cfg, "-i", two_day_csv, "-o", out, "--epsilon", "1"]) == 0
    header = [ln for ln in (out / "series.csv").read_text().splitlines() if ln.startswith("# config:")][0]
    echoed = json.loads(header.split(":", 1)[1])
    assert echoed["epsilon"] == 1.0 and echoed["window"] == 3
    assert "# generated:" in (out / "series.csv").read_text()


def test_config_from_environment(tmp_path, two_day_csv, monkeypatch):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"epsilon": 1.0, "timestamp": False}))
    monkeypatch.setenv("INNERCORE_CONFIG", str(cfg))
    assert run(["pipeline", "-i", two_day_csv, "-o", tmp_path / "out"]) == 0
    assert "# generated:" not in (tmp_path / "out" / "series.csv").read_text()


def test_unknown_config_key_exits_one(tmp_path, two_day_csv):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"epsilonn": 1.0}))
    assert run(["pipeline", "--config", cfg, "-i", two_day_csv, "-o", tmp_path / "out"]) == 1


def test_config_round_trip(tmp_path):
    cfg = RunConfig(inputs=["a.csv"], epsilon=0.3, props=["S_in", "deg"])
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg.to_dict()))
    assert RunConfig.load(p).to_dict() == cfg.to_dict()


def test_json_output(tmp_path, two_day_csv):
    out = tmp_path / "out"
    assert run(["pipeline", "-i", two_day_csv, "-o", out, "--epsilon", "1", "--json"]) == 0
    doc = json.loads((out / "series.json").read_text())
    assert doc["rows"][1]["expansion"] == 5
    assert doc["config"]["epsilon"] == 1.0


def test_singular_covariance_exits_two_and_writes_nothing(tmp_path):
    # identical degree and strength rows make the covariance zero
    rows = [(1, 2, "1", T0), (2, 3, "1", T0), (3, 1, "1", T0)]
    p = write_tx(tmp_path / "tx.csv", rows)
    out = tmp_path / "out"
    assert run(["pipeline", "-i", p, "-o", out, "--decimals", "0"]) == 2
    assert not out.exists() or list(out.iterdir()) == []


def test_invariant_violation_exits_three(tmp_path, two_day_csv, monkeypatch):
    def boom(*a, **k):
        raise InvariantViolation("trace mismatch")

    monkeypatch.setattr(cli, "compute_cores", boom)
    assert run(["innercore", "-i", two_day_csv, "-o", tmp_path / "out"]) == 3


# ----------------------------------------------------------------- chained subcommands

def test_chained_subcommands_match_pipeline(tmp_path):
    rows = [r for t in range(12) for r in ring(list(range(1 + t % 3, 9 + t % 4)), t, base_weight=1 + t)]
    p = write_tx(tmp_path / "tx.csv", rows)
    full, step = tmp_path / "full", tmp_path / "step"
    common = ["--epsilon", "0.6", "--no-timestamp"]
    assert run(["pipeline", "-i", p, "-o", full, "--motif-days", "all", *common]) == 0
    assert run(["ingest", "-i", p, "-o", step]) == 0
    cache = step / "graph.npz"
    assert run(["innercore", "--cache", cache, "-o", step, *common]) == 0
    assert run(["series", "--cores", step / "innercore.csv", "-o", step, *common]) == 0
    assert run(["patterns", "--series", step / "series.csv", "-o", step, "--no-timestamp"]) == 0
    assert run(["motifs", "--cache", cache, "--cores", step / "innercore.csv", "-o", step, "--no-timestamp"]) == 0
    assert run(["rank", "--motifs", step / "motifs.csv", "-o", step, "--no-timestamp"]) == 0
    for name in ("innercore.csv", "series.csv", "motifs.csv", "nfiaf.csv"):
        assert read_table(full / name) == read_table(step / name), name
    assert read_table(full / "nfiaf.csv")
    runs = json.loads((step / "innercore_runs.json").read_text())
    assert len(runs) == 12


def test_motifs_for_selected_days(tmp_path, two_day_csv):
    out = tmp_path / "out"
    assert run(["motifs", "-i", two_day_csv, "-o", out, "--epsilon", "1", "--days", "2022-05-09"]) == 0
    assert {r["day"] for r in read_table(out / "motifs.csv")} == {"2022-05-09"}


def write_occurrences(path):
    roles = {"m4": "C4", "m5": "C5"}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["day", "center_role", "address", "count"])
        for m, per_node in OCCURRENCES.items():
            for v, series in per_node.items():
                for t, c in enumerate(series, start=1):
                    if c:
                        w.writerow([t, roles[m], f"0x{v:02x}", c])


def test_rank_stage_reproduces_worked_example(tmp_path):
    write_occurrences(tmp_path / "motifs.csv")
    labels = tmp_path / "labels.csv"
    labels.write_text("address,label\n0x02,exchange:demo\n")
    out = tmp_path / "out"
    assert run(["rank", "--motifs", tmp_path / "motifs.csv", "--labels", labels, "-o", out]) == 0
    rows = read_table(out / "nfiaf.csv")
    got = {({"C4": "m4", "C5": "m5"}[r["center_role"]], int(r["address"], 16), int(r["day"])): r for r in rows}
    assert set(got) == set(PRINTED_SCORES)
    for key, printed in PRINTED_SCORES.items():
        assert abs(float(got[key]["nf_iaf"]) - printed) <= 0.005
    assert float(got[("m4", 1, 1)]["nf"]) == 0.25
    assert float(got[("m5", 1, 1)]["iaf"]) == pytest.approx(math.log10(3), rel=1e-9)
    assert {r["label"] for r in rows if r["address"] == "0x02"} == {"exchange:demo"}


def test_bench_command_writes_reports(tmp_path, capsys):
    out = tmp_path / "bench"
    assert run(["bench", "--n", 300, "--m", 1500, "--reps", 2, "--seed", 4, "-o", out]) == 0
    rep = json.loads((out / "bench.json").read_text())
    assert rep["spec"]["seed"] == 4 and len(rep["results"]["innercore"]["samples"]) == 2
    assert (out / "bench.csv").read_text().startswith("algorithm,repetition,seconds")
    assert "innercore vs innermost alphacore" in capsys.readouterr().out


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["--version"])
    assert exc.value.code == 0
    assert capsys.readouterr().out.strip() == cli.__version__
