import json

import pytest

from pace.cli import main
from conftest import SMALL_PARAMS


@pytest.fixture(scope="module")
def small_config_file(tmp_path_factory):
    from dataclasses import asdict
    path = tmp_path_factory.mktemp("cfg") / "config.json"
    doc = {
        "policy": "round_robin",
        "graph_params": asdict(SMALL_PARAMS),
        "catalog_size": 45,
        "n_sessions": 8,
        "cold_start": 3,
        "trainees_per_archetype": 1,
        "exam_items": 9,
        "seed": 1,
    }
    path.write_text(json.dumps(doc))
    return path


def test_run_and_report(tmp_path, small_config_file, capsys):
    out = tmp_path / "results"
    rc = main(["run", "--config", str(small_config_file), "--out", str(out),
               "--figures"])
    assert rc == 0
    for name in ("metrics.csv", "series.csv", "summary.csv", "config.json"):
        assert (out / name).exists()
    for fig in ("coverage_progression.png", "gap_convergence.png",
                "coverage_summary.png"):
        assert (out / fig).exists()
    captured = capsys.readouterr().out
    assert "C@50" in captured

    rc = main(["report", "--results", str(out), "--out", str(tmp_path / "figs")])
    assert rc == 0
    assert (tmp_path / "figs" / "coverage_progression.png").exists()


def test_run_overrides(tmp_path, small_config_file, capsys):
    out = tmp_path / "rr"
    rc = main(["run", "--config", str(small_config_file), "--out", str(out),
               "--seed", "9", "--policy", "deficit_driven"])
    assert rc == 0
    config = json.loads((out / "config.json").read_text())
    assert config["seed"] == 9
    assert config["policy"] == "deficit_driven"


def test_generate_graph_roundtrip(tmp_path, capsys):
    from dataclasses import asdict
    params_path = tmp_path / "params.json"
    params_path.write_text(json.dumps(asdict(SMALL_PARAMS)))
    out = tmp_path / "graph.json"
    rc = main(["generate-graph", "--params", str(params_path),
               "--out", str(out)])
    assert rc == 0
    from pace.graph import load_graph
    graph = load_graph(out)
    assert len(graph) == SMALL_PARAMS.n_nodes


def test_replay_command(tmp_path, capsys):
    from dataclasses import asdict
    from pace.belief import Observation, Outcome, observation_to_json
    from pace.graph import generate_synthetic_graph, load_graph

    graph = generate_synthetic_graph(SMALL_PARAMS)
    graph_path = tmp_path / "graph.json"
    graph.save(graph_path)
    log_path = tmp_path / "obs.jsonl"
    nodes = graph.assessable_ids[:10]
    lines = [observation_to_json(Observation(node=n, outcome=Outcome.COMPLIANT,
                                             timestamp=float(i)))
             for i, n in enumerate(nodes)]
    log_path.write_text("\n".join(lines))
    snapshot = tmp_path / "beliefs.csv"
    rc = main(["replay", "--log", str(log_path), "--graph", str(graph_path),
               "--out", str(snapshot)])
    assert rc == 0
    assert "replayed 10 observations" in capsys.readouterr().out
    assert snapshot.exists()
