import json

import numpy as np
import pytest

from mfnrefine.cli import main
from mfnrefine.io import load_model, save_graph
from mfnrefine.graph import ModelParams

from conftest import random_graph


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "tree.yaml").write_text("depth: 1\nclutter_fraction: 0.1\n")
    assert main(["generate", "--config", str(root / "tree.yaml"), "--n", "4", "--seed", "5", "--out", str(root / "data")]) == 0
    return root


def train_args(root, out, epochs="2"):
    return ["train", "--data", str(root / "data"), "--epochs", epochs, "--T", "3", "--lr", "0.01", "--out", str(out)]


class TestPipeline:
    def test_generate(self, data_dir):
        files = sorted((data_dir / "data").glob("graph_*.json"))
        assert [f.name for f in files] == [f"graph_{i:03d}.json" for i in range(4)]
        man = json.loads((data_dir / "data" / "manifest.json").read_text())
        assert man["command"] == "generate" and man["seed"] == 5
        assert len(man["config_hash"]) == 16 and len(man["outputs"]) == 4

    def test_train_infer_eval(self, data_dir, capsys):
        out = data_dir / "run"
        assert main(train_args(data_dir, out)) == 0
        for name in ("model.json", "checkpoint.json", "curves.jsonl", "manifest.json"):
            assert (out / name).exists()
        curves = [json.loads(l) for l in (out / "curves.jsonl").read_text().splitlines()]
        assert [c["epoch"] for c in curves] == [0, 1, 2]
        assert "optimizer" in json.loads((out / "checkpoint.json").read_text())
        load_model(out / "model.json")

        graph = data_dir / "data" / "graph_000.json"
        pred = data_dir / "pred.json"
        assert main(["infer", "--model", str(out / "model.json"), "--graph", str(graph), "--out", str(pred)]) == 0
        doc = json.loads(pred.read_text())
        assert len(doc["alpha"]) == len(doc["pairs"]) == len(doc["directed"])

        assert main(["eval", "--pred", str(pred), "--graph", str(graph)]) == 0
        rep = json.loads(capsys.readouterr().out)
        assert {"undirected", "centerline", "edge_metrics"} <= set(rep)

        assert main(["eval", "--pred", str(pred), "--graph", str(graph), "--pred", str(pred), "--graph", str(graph)]) == 0
        rep = json.loads(capsys.readouterr().out)
        assert rep["aggregate"]["f1"]["n"] == 2

    def test_fold_holdout(self, data_dir):
        out = data_dir / "fold"
        assert main(train_args(data_dir, out, "0") + ["--fold", "0"]) == 0
        man = json.loads((out / "manifest.json").read_text())
        assert man["config"]["fold"] == 0


class TestSmallTools:
    def test_oracle(self, tmp_path, capsys):
        g = random_graph(np.random.default_rng(0), 3)
        save_graph(g, tmp_path / "g.json")
        assert main(["oracle", "--graph", str(tmp_path / "g.json")]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["log_partition"] == pytest.approx(6 * np.log(2))

    def test_gradcheck(self, tmp_path, capsys):
        g = random_graph(np.random.default_rng(1), 5, L=3)
        save_graph(g, tmp_path / "g.json")
        assert main(["gradcheck", "--graph", str(tmp_path / "g.json"), "--T", "2"]) == 0
        assert json.loads(capsys.readouterr().out)["max_rel_error"] < 1e-5


class TestErrors:
    def test_missing_graph(self, tmp_path, capsys):
        assert main(["oracle", "--graph", str(tmp_path / "nope.json")]) == 1
        err = capsys.readouterr().err
        assert err.startswith("error:") and err.count("\n") == 1

    def test_oracle_too_large(self, tmp_path, capsys):
        save_graph(random_graph(np.random.default_rng(2), 12, L=4), tmp_path / "g.json")
        assert main(["oracle", "--graph", str(tmp_path / "g.json")]) == 1
        assert "OracleSizeError" in capsys.readouterr().err

    def test_empty_data_dir(self, tmp_path):
        assert main(["train", "--data", str(tmp_path), "--out", str(tmp_path / "o")]) == 1

    def test_bad_config(self, data_dir, tmp_path):
        (tmp_path / "bad.yaml").write_text("batch_nodes: 0\nbogus: 1\n")
        assert main(train_args(data_dir, tmp_path / "o") + ["--config", str(tmp_path / "bad.yaml")]) == 1

    def test_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["infer"])
        assert exc.value.code == 2

    def test_model_mismatch(self, tmp_path):
        (tmp_path / "m.json").write_text(json.dumps(ModelParams.zeros().to_dict() | {"a": [0.0]}))
        save_graph(random_graph(np.random.default_rng(3), 3), tmp_path / "g.json")
        assert main(["infer", "--model", str(tmp_path / "m.json"), "--graph", str(tmp_path / "g.json")]) == 1
