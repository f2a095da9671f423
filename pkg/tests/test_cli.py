import json
import logging
from pathlib import Path

import numpy as np
import pytest

from main import EXIT_COMPUTE, EXIT_DATA, EXIT_OK, EXIT_USAGE, main

SMOKE_CONFIG = Path(__file__).resolve().parent.parent / "configs" / "planted_smoke.cfg"


def write_csv(path, values, labels=None, header=True):
    values = np.asarray(values, dtype=float)
    lines = []
    if header:
        names = [f"f{j}" for j in range(values.shape[1])]
        lines.append(",".join(names + (["label"] if labels is not None else [])))
    for row, value in enumerate(values):
        cells = [repr(float(cell)) for cell in value]
        if labels is not None:
            cells.append(str(labels[row]))
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture
def separable_csv(tmp_path):
    rng = np.random.default_rng(0)
    values = rng.standard_normal((60, 3))
    labels = np.where(values[:, 1] > 0, "pos", "neg")
    return write_csv(tmp_path / "train.csv", values, labels)


class TestScoresCommand:
    """Test cases for the scores subcommand."""

    def test_identity_leverage_is_uniform(self, tmp_path, capsys):
        path = write_csv(tmp_path / "eye.csv", np.eye(4))
        code = main(["scores", "--data", str(path), "--label-col", "none"])
        assert code == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert payload["scheme"] == "leverage"
        assert payload["effective_rank"] == 4
        np.testing.assert_allclose(payload["probs"], [0.25] * 4, atol=1e-9)

    def test_uniform_without_data(self, tmp_path):
        out = tmp_path / "scores.json"
        assert main(["scores", "--scheme", "uniform", "--n-features", "5", "--out", str(out)]) == EXIT_OK
        payload = json.loads(out.read_text())
        assert payload["probs"] == [0.2] * 5
        assert payload["coherence"] == pytest.approx(1.0)

    def test_norm_scores(self, tmp_path, capsys):
        path = write_csv(tmp_path / "data.csv", [[3.0, 0.0], [4.0, 1.0]], labels=[0, 1])
        assert main(["scores", "--scheme", "norm", "--data", str(path)]) == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        np.testing.assert_allclose(payload["probs"], [25 / 26, 1 / 26])

    def test_all_zero_matrix_is_a_compute_error(self, tmp_path, capsys):
        path = write_csv(tmp_path / "zeros.csv", np.zeros((5, 3)), labels=[0, 1, 0, 1, 0])
        assert main(["scores", "--data", str(path)]) == EXIT_COMPUTE
        assert "less-trees: error:" in capsys.readouterr().err

    def test_rf_has_no_scores(self, tmp_path):
        path = write_csv(tmp_path / "data.csv", np.eye(3), labels=[0, 1, 0])
        assert main(["scores", "--scheme", "rf", "--data", str(path)]) == EXIT_USAGE


class TestTrainAndPredict:
    """Test cases for train and predict."""

    def test_round_trip(self, tmp_path, separable_csv, capsys):
        model = tmp_path / "model.json"
        code = main([
            "train", "--data", str(separable_csv), "--scheme", "leverage", "--k", "2",
            "--trees", "15", "--seed", "7", "--model", str(model),
        ])
        assert code == EXIT_OK
        out = capsys.readouterr().out
        assert "trained 15 leverage trees (k=2)" in out
        assert "training error 0.0000" in out

        predictions = tmp_path / "pred.txt"
        assert main(["predict", "--data", str(separable_csv), "--model", str(model), "--out", str(predictions)]) == EXIT_OK
        lines = predictions.read_text().splitlines()
        assert len(lines) == 60
        assert set(lines) <= {"neg", "pos"}
        assert "error: 0.000000 (60 rows)" in capsys.readouterr().err

    def test_same_seed_same_bytes(self, tmp_path, separable_csv):
        paths = [tmp_path / "a.json", tmp_path / "b.json"]
        for path in paths:
            args = ["train", "--data", str(separable_csv), "--scheme", "norm", "--k", "2",
                    "--trees", "5", "--seed", "3", "--out", str(path)]
            assert main(args) == EXIT_OK
        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_predict_unlabeled(self, tmp_path, separable_csv, capsys):
        model = tmp_path / "model.json"
        main(["train", "--data", str(separable_csv), "--scheme", "uniform", "--k", "3", "--trees", "3", "--model", str(model)])
        capsys.readouterr()
        unlabeled = write_csv(tmp_path / "new.csv", [[0.0, 2.0, 0.0], [0.0, -2.0, 0.0]])
        code = main(["predict", "--data", str(unlabeled), "--label-col", "none", "--model", str(model)])
        assert code == EXIT_OK
        captured = capsys.readouterr()
        assert captured.out.splitlines() == ["pos", "neg"]
        assert "error:" not in captured.err

    def test_rf_ignores_k(self, tmp_path, separable_csv, caplog):
        model = tmp_path / "rf.json"
        with caplog.at_level(logging.WARNING):
            code = main(["train", "--data", str(separable_csv), "--scheme", "rf", "--k", "2",
                         "--trees", "3", "--model", str(model)])
        assert code == EXIT_OK
        assert "ignored" in caplog.text
        assert json.loads(model.read_text())["k"] is None

    def test_scaled_model_predicts_raw_input(self, tmp_path, separable_csv, capsys):
        model = tmp_path / "scaled.json"
        main(["train", "--data", str(separable_csv), "--scheme", "leverage", "--k", "3", "--trees", "3",
              "--scale", "--model", str(model)])
        assert len(json.loads(model.read_text())["feature_scales"]) == 3
        capsys.readouterr()
        assert main(["predict", "--data", str(separable_csv), "--model", str(model)]) == EXIT_OK
        assert "error: 0.000000" in capsys.readouterr().err

    def test_k_larger_than_d(self, tmp_path, separable_csv):
        code = main(["train", "--data", str(separable_csv), "--k", "4", "--trees", "2", "--model", str(tmp_path / "m.json")])
        assert code == EXIT_USAGE

    def test_k_required(self, tmp_path, separable_csv):
        assert main(["train", "--data", str(separable_csv), "--model", str(tmp_path / "m.json")]) == EXIT_USAGE

    def test_missing_data_file(self, tmp_path):
        code = main(["train", "--data", str(tmp_path / "absent.csv"), "--k", "2", "--model", str(tmp_path / "m.json")])
        assert code == EXIT_DATA

    def test_flags_checked_before_loading(self, tmp_path):
        """A missing --k is a usage error even when the data file does not exist."""
        code = main(["train", "--data", str(tmp_path / "absent.csv"), "--model", str(tmp_path / "m.json")])
        assert code == EXIT_USAGE
        code = main(["train", "--data", str(tmp_path / "absent.csv"), "--k", "0", "--model", str(tmp_path / "m.json")])
        assert code == EXIT_USAGE

    def test_corrupted_model_is_a_data_error(self, tmp_path, separable_csv, capsys):
        model = tmp_path / "model.json"
        main(["train", "--data", str(separable_csv), "--scheme", "uniform", "--k", "3", "--trees", "2", "--model", str(model)])
        payload = json.loads(model.read_text())
        split = next(node for node in payload["trees"][0]["nodes"] if "left" in node)
        split["right"] = 999
        model.write_text(json.dumps(payload))
        assert main(["predict", "--data", str(separable_csv), "--model", str(model)]) == EXIT_DATA
        assert "less-trees: error:" in capsys.readouterr().err

    def test_feature_count_mismatch(self, tmp_path, separable_csv, capsys):
        model = tmp_path / "model.json"
        main(["train", "--data", str(separable_csv), "--scheme", "uniform", "--k", "2", "--trees", "2", "--model", str(model)])
        narrow = write_csv(tmp_path / "narrow.csv", np.zeros((2, 2)), labels=["pos", "neg"])
        assert main(["predict", "--data", str(narrow), "--model", str(model)]) == EXIT_DATA

    def test_malformed_csv(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,y\n1,x,0\n")
        code = main(["train", "--data", str(path), "--k", "1", "--model", str(tmp_path / "m.json")])
        assert code == EXIT_DATA


class TestUsage:
    """Test cases for argument errors."""

    def test_unknown_flag(self, capsys):
        assert main(["train", "--bogus"]) == EXIT_USAGE
        assert "usage:" in capsys.readouterr().err

    def test_missing_subcommand(self):
        assert main([]) == EXIT_USAGE

    def test_bad_scheme(self):
        assert main(["scores", "--scheme", "pca"]) == EXIT_USAGE


class TestBenchCommand:
    """Test cases for the bench subcommand."""

    def test_smoke_config(self, tmp_path, capsys):
        config = tmp_path / "smoke.cfg"
        config.write_text(
            "planted_n=200\nplanted_d=40\nplanted_informative=5\nk_values=7\ntrees=2\n"
            "repetitions=1\nepsilon_target=0.5\nmax_rank=5\n"
        )
        out = tmp_path / "results"
        assert main(["bench", "--config", str(config), "--out", str(out)]) == EXIT_OK
        header = (out / "curves.csv").read_text().splitlines()[0]
        assert header == "scheme,k,rep,tree_index,cum_time_s,test_error,cum_nodes"
        summary = json.loads((out / "summary.json").read_text())
        assert summary["n_features"] == 40
        assert len(summary["final_errors"]) == 4
        assert not (out / "failures.json").exists()
        assert "leverage k=7" in capsys.readouterr().out

    def test_flag_overrides(self, tmp_path):
        out = tmp_path / "results"
        code = main([
            "bench", "--config", str(SMOKE_CONFIG), "--scheme", "uniform", "--k", "3", "--trees", "2",
            "--repetitions", "2", "--max-rank", "3", "--out", str(out), "--seed", "1",
        ])
        assert code == EXIT_OK
        summary = json.loads((out / "summary.json").read_text())
        assert summary["config"]["schemes"] == ["uniform"]
        assert summary["k_values"] == [3]
        assert len((out / "curves.csv").read_text().splitlines()) == 1 + 2 * 2

    def test_bad_config_value(self, tmp_path):
        config = tmp_path / "bad.cfg"
        config.write_text("trees=0\n")
        assert main(["bench", "--config", str(config), "--out", str(tmp_path / "r")]) == EXIT_USAGE

    def test_missing_dataset(self, tmp_path):
        code = main(["bench", "--data", str(tmp_path / "absent.csv"), "--out", str(tmp_path / "r")])
        assert code == EXIT_DATA

    def test_tree_flags_override_config(self, tmp_path):
        out = tmp_path / "results"
        code = main([
            "bench", "--config", str(SMOKE_CONFIG), "--scheme", "uniform", "--trees", "2", "--repetitions", "1",
            "--max-depth", "1", "--min-split", "50", "--with-replacement", "--out", str(out),
        ])
        assert code == EXIT_OK
        config = json.loads((out / "summary.json").read_text())["config"]
        assert config["max_depth"] == 1
        assert config["min_samples_split"] == 50
        assert config["with_replacement"] is True
        rows = (out / "curves.csv").read_text().splitlines()[1:]
        first_tree_nodes = [int(row.split(",")[6]) for row in rows if row.split(",")[3] == "1"]
        assert first_tree_nodes and all(nodes <= 3 for nodes in first_tree_nodes)

    def test_config_values_kept_without_flags(self, tmp_path):
        config = tmp_path / "depth.cfg"
        config.write_text(SMOKE_CONFIG.read_text() + "max_depth=2\nwith_replacement=true\nmin_samples_split=4\n")
        out = tmp_path / "results"
        assert main(["bench", "--config", str(config), "--scheme", "norm", "--trees", "1", "--out", str(out)]) == EXIT_OK
        stored = json.loads((out / "summary.json").read_text())["config"]
        assert (stored["max_depth"], stored["with_replacement"], stored["min_samples_split"]) == (2, True, 4)

    def test_headerless_data(self, tmp_path):
        rng = np.random.default_rng(0)
        values = rng.standard_normal((40, 4))
        path = write_csv(tmp_path / "raw.csv", values, labels=(values[:, 0] > 0).astype(int), header=False)
        out = tmp_path / "results"
        code = main([
            "bench", "--config", str(SMOKE_CONFIG), "--data", str(path), "--no-header", "--scheme", "uniform",
            "--k", "2", "--trees", "1", "--out", str(out),
        ])
        assert code == EXIT_OK
        summary = json.loads((out / "summary.json").read_text())
        assert summary["n_train"] + summary["n_test"] == 40
        assert summary["config"]["has_header"] is False

    def test_libsvm_width(self, tmp_path):
        path = tmp_path / "data.libsvm"
        path.write_text("".join(f"{row % 2} 1:{row} 2:{row % 3}\n" for row in range(1, 31)))
        out = tmp_path / "results"
        code = main([
            "bench", "--config", str(SMOKE_CONFIG), "--data", str(path), "--format", "libsvm",
            "--n-features", "6", "--scheme", "uniform", "--k", "2", "--trees", "1", "--out", str(out),
        ])
        assert code == EXIT_OK
        assert json.loads((out / "summary.json").read_text())["n_features"] == 6
