"""CLI surfaces: sim run/explore, lincheck, and the file outputs."""
import json

from bodega.cli import lincheck_main, sim_main


def test_sim_run_writes_outputs(tmp_path, capsys):
    trace = tmp_path / "trace.jsonl"
    metrics = tmp_path / "metrics.json"
    history = tmp_path / "history.jsonl"
    rc = sim_main(["run", "scenarios/geo5.json", "--seed", "5",
                   "--trace", str(trace), "--metrics", str(metrics),
                   "--history", str(history), "--check"])
    out = capsys.readouterr().out
    assert rc == 0
    assert "linearizable: yes" in out
    m = json.loads(metrics.read_text())
    assert m["reads"]["count"] > 0
    lines = history.read_text().strip().splitlines()
    assert lines and all(json.loads(l)["request_id"] for l in lines)
    assert trace.read_text().startswith('{"')


def test_sim_run_rejects_bad_scenario(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"nodes": 4, "rtt_ms": []}))
    rc = sim_main(["run", str(bad)])
    assert rc == 2
    assert "nodes" in capsys.readouterr().err


def test_lincheck_cli_verdicts(tmp_path, capsys):
    good = tmp_path / "good.jsonl"
    rows = [
        {"client": "c", "request_id": "w", "op": "put", "key": "x", "value": "1",
         "invoke": 0, "response": 5, "outcome": "ok"},
        {"client": "c", "request_id": "r", "op": "get", "key": "x", "value": "1",
         "invoke": 6, "response": 8, "outcome": "ok"},
    ]
    good.write_text("\n".join(json.dumps(r) for r in rows))
    assert lincheck_main([str(good)]) == 0
    assert "linearizable: yes" in capsys.readouterr().out

    bad = tmp_path / "bad.jsonl"
    rows[1]["value"] = None
    bad.write_text("\n".join(json.dumps(r) for r in rows))
    assert lincheck_main([str(bad)]) == 1
    out = capsys.readouterr().out
    assert "NO" in out and "no legal linearization" in out


def test_sim_explore_smoke_budgeted(capsys):
    rc = sim_main(["explore", "--nodes", "3", "--ballots", "3",
                   "--budget-runs", "40"])
    out = capsys.readouterr().out
    assert rc == 0
    assert "no violation" in out
