import csv
import json

import numpy as np
import pytest

from entseer import cli, features


def run(*argv):
    return cli.main([str(a) for a in argv])


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def small_config(tmp_path):
    cfg = {
        "n_unitaries": 40,
        "n_states_mixing": 240,
        "states_per_partition": 20,
        "umap_partition": {"n_neighbors": 10, "min_dist": 0.3, "n_epochs": 100},
        "umap_certify": {"n_neighbors": 30, "min_dist": 0.6, "n_epochs": 100},
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


# -- configuration ---------------------------------------------------------------------------


def test_precedence_flags_over_env_over_file(tmp_path, monkeypatch):
    path = tmp_path / "c.json"
    path.write_text('{"master_seed": 1}')
    assert cli.load_config(str(path), {}).master_seed == 1
    monkeypatch.setenv(cli.SEED_ENV, "2")
    assert cli.load_config(str(path), {}).master_seed == 2
    assert cli.load_config(str(path), {"master_seed": 3}).master_seed == 3


@pytest.mark.parametrize("text", ['{"colour": 1}', "[1, 2]", "{bad json", '{"n_qubits": 0}', '{"mode": "weak"}',
                                  '{"partitions": ["33", "5"]}', '{"umap_partition": {"n_neighbors": 1}}'])
def test_bad_config_exits_2(tmp_path, text, capsys):
    path = tmp_path / "c.json"
    path.write_text(text)
    assert run("witness", "--target", "ghz", "--exact", "--n", "2", "--config", path, "--out", tmp_path) == 2
    assert "config error" in capsys.readouterr().err


def test_missing_config_file_exits_2(tmp_path):
    assert run("witness", "--target", "ghz", "--config", tmp_path / "nope.json", "--out", tmp_path) == 2


def test_bad_env_seed_exits_2(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.SEED_ENV, "seven")
    assert run("witness", "--target", "w", "--exact", "--n", "3", "--out", tmp_path) == 2


def test_parse_range():
    assert cli.parse_range("2..5") == [2, 3, 4, 5]
    assert cli.parse_range("3,5,7") == [3, 5, 7]
    with pytest.raises(ValueError):
        cli.parse_range("5..2")


# -- witness ------------------------------------------------------------------------------------


def test_witness_exact_table(tmp_path, capsys):
    assert run("witness", "--target", "ghz", "--exact", "--out", tmp_path) == 0
    rows = read_csv(tmp_path / "witness_ghz.csv")
    assert [int(r["n"]) for r in rows] == list(range(2, 8))
    assert all(abs(float(r["exact"]) + 0.5) < 1e-10 for r in rows)
    assert [int(r["settings_count"]) for r in rows] == [n + 1 for n in range(2, 8)]
    assert "n,target,exact,estimate,stderr,settings_count" in capsys.readouterr().out
    manifest = json.loads((tmp_path / "manifest_witness.json").read_text())
    assert manifest["seed"] == 0 and manifest["config"]["n_qubits"] == 6


def test_witness_estimate_with_shots(tmp_path):
    assert run("witness", "--target", "w", "--n", "3..4", "--shots", "20000", "--out", tmp_path) == 0
    for r in read_csv(tmp_path / "witness_w.csv"):
        assert abs(float(r["estimate"]) - float(r["exact"])) < 4 * float(r["stderr"]) + 1e-9
        assert int(r["settings_count"]) == 2 * int(r["n"]) - 1


def test_witness_seed_from_env_is_recorded(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.SEED_ENV, "42")
    assert run("witness", "--target", "ghz", "--n", "2", "--out", tmp_path) == 0
    assert json.loads((tmp_path / "manifest_witness.json").read_text())["seed"] == 42


# -- data generation ---------------------------------------------------------------------------


def test_gen_partition_data_is_reproducible(tmp_path, small_config):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert run("gen-partition-data", "--config", small_config, "--states-per-partition", 3, "--out", out) == 0
    assert (a / "partition_data.csv").read_bytes() == (b / "partition_data.csv").read_bytes()
    ds = features.load_dataset(a / "partition_data.csv", n_qubits=6)
    assert len(ds) == 33 and ds.X.shape[1] == 63


def test_seed_changes_generated_data(tmp_path, small_config):
    for seed in (0, 1):
        assert run("gen-partition-data", "--config", small_config, "--partitions", "6", "--states-per-partition", 2,
                   "--seed", seed, "--out", tmp_path / str(seed)) == 0
    assert (tmp_path / "0/partition_data.csv").read_bytes() != (tmp_path / "1/partition_data.csv").read_bytes()


def test_gen_mixing_data_fixed_state(tmp_path, small_config):
    assert run("gen-mixing-data", "--config", small_config, "--partition", "33", "--state", "ghz",
               "--n-states", 11, "--out", tmp_path) == 0
    ds = features.load_dataset(tmp_path / "mixing_33_ghz.csv")
    assert len(ds) == 11 and ds.p[0] == 0.0 and ds.p[-1] == 1.0


def test_missing_dataset_exits_3(tmp_path):
    assert run("classify", "--data", tmp_path / "none.csv", "--out", tmp_path) == 3


def test_corrupt_dataset_exits_3(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("# entseer-dataset v1 n_qubits=6 max_order=6 n_unitaries=5 source=x\nid,label\n0,6\n")
    assert run("train-partition", "--data", path, "--out", tmp_path) == 3


def test_classify_without_model_exits_3(tmp_path, small_config):
    assert run("gen-partition-data", "--config", small_config, "--states-per-partition", 1, "--out", tmp_path) == 0
    assert run("classify", "--data", tmp_path / "partition_data.csv", "--out", tmp_path,
               "--model-dir", tmp_path / "models") == 3


# -- end-to-end flows ---------------------------------------------------------------------------


def test_partition_flow(tmp_path, small_config):
    out = tmp_path / "run"
    assert run("train-partition", "--config", small_config, "--partitions", "6", "33", "222", "--out", out) == 0
    for name in ("partition_umap.npz", "partition_tree.json", "partition_embedding.csv", "partition_predictions.csv"):
        assert (out / name).exists()
    emb = read_csv(out / "partition_embedding.csv")
    assert len(emb) == 60 and set(emb[0]) == {"id", "label", "split", "x0", "x1"}
    manifest = json.loads((out / "manifest_train-partition.json").read_text())
    assert 0 <= manifest["results"]["test_accuracy"] <= 1
    assert run("gen-partition-data", "--config", small_config, "--partitions", "6", "33", "222",
               "--states-per-partition", 2, "--seed", 9, "--out", tmp_path / "new") == 0
    assert run("classify", "--config", small_config, "--data", tmp_path / "new/partition_data.csv",
               "--model-dir", out, "--out", tmp_path / "new") == 0
    preds = read_csv(tmp_path / "new/classify_predictions.csv")
    assert len(preds) == 6 and {p["predicted_label"] for p in preds} <= {"6", "33", "222"}
    assert run("plot", "--input", out / "partition_embedding.csv", "--out", out) == 0
    svg = next(out.glob("*.svg")).read_text()
    assert svg.startswith("<svg") or svg.startswith("<?xml")


def test_certification_flow(tmp_path, small_config):
    out = tmp_path / "run"
    assert run("train-certify", "--config", small_config, "--partition", "6", "--out", out) == 0
    for suffix in ("umap.npz", "logistic.json", "purity.json", "embedding.csv", "predictions.csv",
                   "purity_predictions.csv"):
        assert (out / f"certify_6_{suffix}").exists()
    assert run("certify", "--config", small_config, "--partition", "6", "--state", "ghz", "--p", "0.0", "1.0",
               "--model-dir", out, "--out", out) == 0
    rows = read_csv(out / "certify_6_results.csv")
    assert [r["true_label"] for r in rows] == ["NPT", "PPT"]
    assert rows[0]["predicted_label"] == "NPT"
    assert run("estimate-purity", "--config", small_config, "--partition", "6", "--data", out / "mixing_6.csv",
               "--model-dir", out, "--out", out) == 0
    est = read_csv(out / "purity_6.csv")
    assert len(est) == 240
    p_true = np.array([float(r["p_true"]) for r in est])
    p_est = np.array([float(r["p_est"]) for r in est])
    assert np.all((p_est >= 1 / 64 - 1e-12) & (p_est <= 1 + 1e-12))
    assert np.corrcoef(p_true, p_est)[0, 1] > 0.9
    assert run("plot", "--input", out / "certify_6_purity_predictions.csv", "--output", out / "purity.svg") == 0
    assert (out / "purity.svg").exists()
