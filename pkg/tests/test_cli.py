import json

import numpy as np
import pytest
from typer.testing import CliRunner

from limset.strassen_core import GridFn
from run import app

cli = CliRunner()


@pytest.fixture(autouse=True)
def runs_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("LIMSET_RUNS_DIR", str(tmp_path / "runs"))
    monkeypatch.setenv("LIMSET_PLAIN_LOGS", "1")
    return tmp_path / "runs"


def write_config(tmp_path, doc: dict, name: str = "config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc), encoding="utf-8")
    return path


@pytest.fixture
def ramp_csv(tmp_path):
    path = tmp_path / "ramp.csv"
    path.write_text(GridFn.from_values(np.linspace(0.0, 1.0, 65)).to_csv(), encoding="utf-8")
    return path


def test_criteria_empty_queries(tmp_path):
    config = write_config(tmp_path, {"queries": []})
    out = tmp_path / "run"
    result = cli.invoke(app, ["criteria", "--config", str(config), "--out", str(out)])
    assert result.exit_code == 0, result.output
    payload = json.loads((out / "criteria.json").read_text())
    assert payload["results"] == []
    assert (out / "criteria.csv").read_text() == "id,type,status,label,value,lo,hi,epsilon_star\n"
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["exit_code"] == 0
    assert set(manifest["files"]) == {"criteria.json", "criteria.csv"}


def test_criteria_default_run_dir(tmp_path, runs_dir):
    config = write_config(tmp_path, {"queries": []})
    result = cli.invoke(app, ["criteria", "--config", str(config), "--quiet"])
    assert result.exit_code == 0, result.output
    run_dirs = list(runs_dir.iterdir())
    assert len(run_dirs) == 1
    assert (run_dirs[0] / "manifest.json").exists()


def test_criteria_malformed_json_reports_position(tmp_path):
    config = tmp_path / "broken.json"
    config.write_text('{"queries": [\n  {"type": "point", "x": [0.5, 0.0]\n]}', encoding="utf-8")
    result = cli.invoke(app, ["criteria", "--config", str(config)])
    assert result.exit_code == 1
    assert "malformed JSON" in result.output
    assert "line 3, column" in result.output


def test_criteria_unknown_field_is_reported(tmp_path):
    config = write_config(tmp_path, {"normalizer": {"family": "sqrt_2n_loglog", "bogus": 1}})
    result = cli.invoke(app, ["criteria", "--config", str(config)])
    assert result.exit_code == 1
    assert "normalizer.bogus" in result.output


def test_criteria_unknown_preset():
    result = cli.invoke(app, ["criteria", "--config", "no_such_preset"])
    assert result.exit_code == 1
    assert "neither a file nor a preset" in result.output


def test_criteria_unit_disk_sweep(tmp_path):
    queries = [{"type": "point", "id": f"r{r}", "x": [0.6 * r, 0.8 * r]} for r in (0.5, 0.9, 1.1, 1.5)]
    config = write_config(tmp_path, {"queries": queries})
    result = cli.invoke(app, ["criteria", "--config", str(config), "--out", str(tmp_path / "run"), "--json"])
    assert result.exit_code == 0, result.output
    payload = json.loads(result.stdout)
    assert payload["exit_code"] == 0
    assert [r["status"] for r in payload["results"]] == ["member", "member", "non_member", "non_member"]


def test_criteria_function_query_needs_one_source(tmp_path):
    query = {"type": "function", "coefficients": [0.5], "values": [[0.0], [0.5]]}
    config = write_config(tmp_path, {"queries": [query]})
    result = cli.invoke(app, ["criteria", "--config", str(config), "--out", str(tmp_path / "run")])
    assert result.exit_code == 1
    assert "exactly one of" in result.output


def test_tautstring_ramp(ramp_csv, tmp_path):
    output = tmp_path / "taut.csv"
    result = cli.invoke(app, ["tautstring", str(ramp_csv), "0.25", "--output", str(output)])
    assert result.exit_code == 0, result.output
    assert "I(g) = 1.0" in result.output
    assert "I(g_eps) = 0.5625" in result.output
    g_eps = GridFn.from_csv(output.read_text())
    np.testing.assert_allclose(g_eps.values[-1, 0], 0.75, atol=1e-9)


def test_tautstring_wide_tube_is_flat(ramp_csv):
    result = cli.invoke(app, ["tautstring", str(ramp_csv), "1.0", "--json"])
    assert result.exit_code == 0, result.output
    payload = json.loads(result.stdout)
    assert payload["energy_epsilon"] == 0.0
    assert payload["output"].endswith("ramp_taut.csv")


def test_tautstring_malformed_csv(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("t,f_1\n0.0,0.0\n0.5,abc\n1.0,1.0\n", encoding="utf-8")
    result = cli.invoke(app, ["tautstring", str(path), "0.1"])
    assert result.exit_code == 1
    assert "InputError" in result.output


def test_tautstring_rejects_vector_input(tmp_path):
    path = tmp_path / "vec.csv"
    path.write_text(GridFn.from_values(np.zeros((5, 2))).to_csv(), encoding="utf-8")
    result = cli.invoke(app, ["tautstring", str(path), "0.1"])
    assert result.exit_code == 1
    assert "scalar" in result.output


def test_example8_exact_identities_pass(tmp_path):
    out = tmp_path / "run"
    result = cli.invoke(
        app, ["example8", "--config", "example8_exact", "--k-max", "3", "--mode", "exact_log", "--out", str(out)]
    )
    assert result.exit_code == 0, result.output
    payload = json.loads((out / "example8.json").read_text())
    assert payload["passed"]
    assert payload["k_max"] == 3
    assert payload["q_mass"]["below_half"]
    assert "simulation" not in payload


def test_example8_invalid_star_names_rule(tmp_path):
    doc = {
        "model": {
            "kind": "example8",
            "star_set": {"segments": [{"sigma": 0.8, "z": [1.0, 0.0]}]},
        }
    }
    config = write_config(tmp_path, doc)
    result = cli.invoke(app, ["example8", "--config", str(config), "--out", str(tmp_path / "run")])
    assert result.exit_code == 1
    assert "normalization rule" in result.output


def test_example8_needs_example8_model(tmp_path):
    config = write_config(tmp_path, {})
    result = cli.invoke(app, ["example8", "--config", str(config), "--out", str(tmp_path / "run")])
    assert result.exit_code == 1
    assert "model.kind" in result.output


def test_simulate_rejects_exact_example8(tmp_path):
    result = cli.invoke(app, ["simulate", "--config", "example8_exact", "--out", str(tmp_path / "run")])
    assert result.exit_code == 1
    assert "cannot be sampled" in result.output


def test_simulate_bad_override(tmp_path):
    result = cli.invoke(app, ["simulate", "--n-max", "1", "--out", str(tmp_path / "run")])
    assert result.exit_code == 1
    assert "n_max" in result.output


def test_simulate_small_run_writes_report(tmp_path):
    out = tmp_path / "run"
    args = ["simulate", "--n-max", "5000", "--streams", "2", "--seed", "7", "--out", str(out), "--json"]
    result = cli.invoke(app, args)
    assert result.exit_code == 0, result.output
    payload = json.loads(result.stdout)
    assert payload["cluster"]["replicas"] == 2
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seeds"] == [7]
    assert manifest["config"]["simulation"]["n_max"] == 5000
    assert "cluster.csv" in manifest["files"]
    assert "cluster.svg" in manifest["files"]
    assert (out / "limset.log").exists()


def test_verify_filter_subset():
    result = cli.invoke(app, ["verify", "--filter", "strassen.line", "--json"])
    assert result.exit_code == 0, result.output
    payload = json.loads(result.stdout)
    assert [p["name"] for p in payload["properties"]] == ["strassen.line_closed_form"]
    assert payload["properties"][0]["passed"]


def test_verify_filter_matching_nothing():
    result = cli.invoke(app, ["verify", "--filter", "nothing-matches-this"])
    assert result.exit_code == 1
