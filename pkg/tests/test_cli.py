import json

import numpy as np
import pytest

from bayesrnn.cli import credible_interval, load_spec, main
from bayesrnn.errors import ConfigError


def tiny_spec(tmp_path, **overrides):
    spec = {
        "network": {"cell": "UBRU", "layers": 1, "hidden": 4},
        "train": {"lr": 0.05, "epochs": 2, "batch_size": 8},
        "task": {"kind": "delayed_cue", "T": 5, "gap": 0, "sizes": [16, 8, 8]},
        "seeds": [1],
        "out_dir": str(tmp_path / "out"),
    }
    spec.update(overrides)
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(spec))
    return path


class TestSpecValidation:
    def test_unknown_keys_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"task": {"kind": "delayed_cue"}, "seeds": [1],
                                    "out_dir": "o", "extra": 1}))
        with pytest.raises(ConfigError, match="unknown keys"):
            load_spec(str(path))

    def test_unknown_task_keys_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"task": {"kind": "delayed_cue", "noise": 1.0},
                                    "seeds": [1], "out_dir": "o"}))
        with pytest.raises(ConfigError):
            load_spec(str(path))

    def test_malformed_json_exit_2(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        assert main(["train", str(path)]) == 2

    def test_missing_seeds_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"task": {"kind": "delayed_cue"}, "out_dir": "o"}))
        with pytest.raises(ConfigError, match="seeds"):
            load_spec(str(path))


class TestOracleCheckCommand:
    def test_zero_trials_vacuous_pass(self, capsys):
        assert main(["oracle-check", "--trials", "0"]) == 0
        assert "models=0" in capsys.readouterr().out

    def test_small_run_passes(self, capsys):
        assert main(["oracle-check", "--trials", "40", "--tmax", "6",
                     "--seed", "1"]) == 0
        out = capsys.readouterr().out
        assert "max filter err" in out

    def test_negative_control(self, capsys):
        assert main(["oracle-check", "--trials", "10", "--tmax", "5",
                     "--seed", "1", "--inject-error", "1e-6"]) == 1
        assert "FAIL" in capsys.readouterr().err


class TestGradCheckCommand:
    def test_bru_passes(self, tmp_path, capsys):
        code = main(["grad-check", "--cell", "BRU", "--seed", "17",
                     "--out-dir", str(tmp_path)])
        assert code == 0
        assert (tmp_path / "gradreport.txt").exists()
        assert "OVERALL" in capsys.readouterr().out

    def test_impossible_tolerance_fails(self):
        assert main(["grad-check", "--cell", "LBRU", "--tol", "1e-12",
                     "--layers", "1", "--unidirectional"]) == 1

    def test_gru_single_layer(self):
        assert main(["grad-check", "--cell", "GRU", "--layers", "1",
                     "--unidirectional"]) == 0


class TestParamAuditCommand:
    def write_config(self, tmp_path, **kw):
        cfg = {"cell": "UBRU", "layers": 1, "hidden": 3, "input_dim": 2,
               "num_classes": 2}
        cfg.update(kw)
        path = tmp_path / "net.json"
        path.write_text(json.dumps(cfg))
        return str(path)

    def test_audit_parity_passes(self, tmp_path, capsys):
        path = self.write_config(tmp_path)
        assert main(["param-audit", "--config", path, "--assert-parity"]) == 0
        out = capsys.readouterr().out
        assert "UBRU=" in out and "Bi-GRU=" in out

    def test_audit_json_output(self, tmp_path, capsys):
        path = self.write_config(tmp_path)
        assert main(["param-audit", "--config", path, "--json"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["total"] > 0

    def test_malformed_config_exit_2(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{oops")
        assert main(["param-audit", "--config", str(path)]) == 2

    def test_unknown_config_keys_exit_2(self, tmp_path):
        path = self.write_config(tmp_path, cheese=1)
        assert main(["param-audit", "--config", path]) == 2


class TestTrainEvalCommands:
    def test_train_writes_outputs_and_is_deterministic(self, tmp_path, capsys):
        spec = tiny_spec(tmp_path)
        out = tmp_path / "out"
        assert main(["train", str(spec)]) == 0
        first = (out / "metrics.csv").read_bytes()
        assert (out / "checkpoint.json").exists()
        assert main(["train", str(spec)]) == 0
        assert (out / "metrics.csv").read_bytes() == first

    def test_eval_roundtrip(self, tmp_path, capsys):
        spec = tiny_spec(tmp_path)
        assert main(["train", str(spec)]) == 0
        ckpt = str(tmp_path / "out" / "checkpoint.json")
        assert main(["eval", "--checkpoint", ckpt, "--spec", str(spec)]) == 0
        out = capsys.readouterr().out
        assert "epoch,split,loss,accuracy,lr,seconds,seed" in out

    def test_eval_missing_checkpoint_exit_2(self, tmp_path):
        spec = tiny_spec(tmp_path)
        assert main(["eval", "--checkpoint", str(tmp_path / "nope.json"),
                     "--spec", str(spec)]) == 2

    def test_train_dump_data(self, tmp_path):
        spec = tiny_spec(tmp_path)
        assert main(["train", str(spec), "--dump-data"]) == 0
        assert (tmp_path / "out" / "train.jsonl").exists()


class TestCompareCommand:
    def test_single_seed_end_to_end(self, tmp_path, capsys):
        spec = tiny_spec(tmp_path, train={"lr": 0.05, "epochs": 1, "batch_size": 8})
        assert main(["compare", str(spec)]) == 0
        out_dir = tmp_path / "out"
        runs = (out_dir / "runs.csv").read_text().splitlines()
        summary = (out_dir / "summary.csv").read_text().splitlines()
        assert runs[0] == ("architecture,seed,param_count,test_loss,test_accuracy,"
                           "headline_correct,headline_total")
        assert len(runs) == 1 + 6          # one row per architecture
        assert len(summary) == 1 + 6
        names = [line.split(",")[0] for line in summary[1:]]
        assert names == ["Uni-GRU", "UBRU", "LBRU", "Bi-GRU", "Bi-LSTM", "Bi-LBRU"]
        for line in summary[1:]:
            half_width = float(line.split(",")[3])
            assert 0.0 < half_width < 0.5


class TestSweepConcurrency:
    def test_bru_threads_gives_identical_outputs(self, tmp_path, monkeypatch):
        spec = tiny_spec(tmp_path, train={"lr": 0.05, "epochs": 1, "batch_size": 8},
                         out_dir=str(tmp_path / "seq"))
        assert main(["compare", str(spec)]) == 0
        sequential = (tmp_path / "seq" / "summary.csv").read_bytes()

        monkeypatch.setenv("BRU_THREADS", "3")
        assert main(["compare", str(spec), "--out-dir", str(tmp_path / "par")]) == 0
        assert (tmp_path / "par" / "summary.csv").read_bytes() == sequential


class TestCredibleInterval:
    def test_symmetric_at_half(self):
        lo, hi = credible_interval(50, 100)
        assert lo < 0.5 < hi
        assert abs((0.5 - lo) - (hi - 0.5)) < 1e-6

    def test_tightens_with_data(self):
        lo1, hi1 = credible_interval(50, 100)
        lo2, hi2 = credible_interval(5000, 10000)
        assert (hi2 - lo2) < (hi1 - lo1)

    def test_extreme_counts(self):
        lo, hi = credible_interval(100, 100)
        assert hi <= 1.0 and lo > 0.9
