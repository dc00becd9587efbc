import numpy as np
import pytest

from bayesrnn import oracle
from bayesrnn.errors import ConfigError, DataError, DimensionError
from bayesrnn.tasks import (SequenceBatch, affected_positions,
                            batch_from_sequences, batched_forward_backward,
                            gaussian_likelihood_ratio, gen_delayed_cue_task,
                            gen_latent_feature_task, generate_dataset,
                            latent_oracle_accuracies, load_batch_jsonl,
                            save_batch_jsonl)
from bayesrnn.tensor import make_rng


class TestSequenceBatch:
    def test_shape_validation(self):
        with pytest.raises(DimensionError):
            SequenceBatch(np.zeros((3, 2)), np.zeros((3, 2)), np.ones((3, 2)))
        with pytest.raises(DimensionError):
            SequenceBatch(np.zeros((3, 2, 1)), np.zeros((2, 3)), np.ones((3, 2)))

    def test_padding_and_sentinel(self):
        seqs = [np.ones((2, 1)), np.ones((4, 1))]
        labels = [np.array([1, 1]), np.array([0, 1, 0, 1])]
        batch = batch_from_sequences(seqs, labels)
        assert batch.inputs.shape == (4, 2, 1)
        assert not batch.mask[2, 0] and batch.mask[3, 1]
        assert batch.targets[3, 0] == 0  # sentinel, masked out

    def test_label_length_mismatch(self):
        with pytest.raises(DataError):
            batch_from_sequences([np.ones((2, 1))], [np.array([1])])

    def test_select_columns(self):
        rng = make_rng(0)
        batch = SequenceBatch(rng.normal(size=(3, 4, 2)),
                              rng.integers(0, 2, (3, 4)), np.ones((3, 4), bool))
        sub = batch.select(np.array([2, 0]))
        np.testing.assert_array_equal(sub.inputs[:, 0], batch.inputs[:, 2])
        np.testing.assert_array_equal(sub.targets[:, 1], batch.targets[:, 0])


class TestBatchedForwardBackward:
    def test_matches_scalar_oracle(self):
        rng = make_rng(1)
        p, z = 0.35, rng.uniform(0, 1, size=5)
        lam = np.exp(rng.normal(size=(6, 7)))
        filt, smooth = batched_forward_backward(p, z, lam)
        for n in range(7):
            model = oracle.OracleModel(p=p, z=z, lam=lam[:, n])
            ef, es = oracle.forward_backward(model)
            np.testing.assert_allclose(filt[:, n], ef, atol=1e-12)
            np.testing.assert_allclose(smooth[:, n], es, atol=1e-12)


class TestLatentFeatureTask:
    def test_vanishing_noise_gives_perfect_ceiling(self):
        ds = gen_latent_feature_task(make_rng(2), T=8, F=1, noise=1e-3,
                                     sizes=(5, 5, 200))
        assert ds.metadata["oracle_smoothed_accuracy"] == 1.0

    def test_independent_gates_filtered_equals_smoothed(self):
        ds = gen_latent_feature_task(make_rng(3), T=10, F=1, noise=2.0, z=0.0,
                                     sizes=(5, 5, 500))
        assert abs(ds.metadata["oracle_filtered_accuracy"]
                   - ds.metadata["oracle_smoothed_accuracy"]) < 1e-12

    def test_persistent_chain_smoothing_strictly_helps(self):
        ds = gen_latent_feature_task(make_rng(4), T=20, F=1, noise=1.0, z=0.9,
                                     sizes=(2, 2, 10000))
        filt, smooth = latent_oracle_accuracies(ds.test, 0.5, np.full(19, 0.9), 1.0)
        assert smooth > filt

    def test_multifeature_classes(self):
        ds = gen_latent_feature_task(make_rng(5), T=6, F=2, noise=0.5,
                                     sizes=(10, 5, 5))
        assert ds.num_classes == 4
        assert ds.train.targets.max() <= 3
        assert ds.input_dim == 2

    def test_config_errors(self):
        with pytest.raises(ConfigError):
            gen_latent_feature_task(make_rng(0), F=4)
        with pytest.raises(ConfigError):
            gen_latent_feature_task(make_rng(0), noise=0.0)

    def test_likelihood_ratio_formula(self):
        x = np.array([0.0, 0.5, 1.0])
        lam = gaussian_likelihood_ratio(x, 1.0)
        np.testing.assert_allclose(lam, np.exp((1 - 2 * x) / 2.0))


class TestDelayedCueTask:
    def test_gap_zero_memoryless(self):
        ds = gen_delayed_cue_task(make_rng(6), T=5, gap=0, sizes=(10, 5, 5))
        np.testing.assert_array_equal(
            ds.train.targets, (ds.train.inputs[:, :, 0] > 0).astype(int))
        assert not affected_positions(5, 0).any()

    def test_labels_point_at_future_cue(self):
        ds = gen_delayed_cue_task(make_rng(7), T=8, gap=3, sizes=(20, 5, 5))
        bits = (ds.train.inputs[:, :, 0] > 0).astype(int)
        np.testing.assert_array_equal(ds.train.targets[:5], bits[3:])
        np.testing.assert_array_equal(ds.train.targets[5:], bits[5:])
        np.testing.assert_array_equal(affected_positions(8, 3),
                                      [1, 1, 1, 1, 1, 0, 0, 0])

    def test_gap_bounds(self):
        with pytest.raises(ConfigError):
            gen_delayed_cue_task(make_rng(0), T=5, gap=5)


class TestDispatchAndCaching:
    def test_generate_dataset_deterministic(self):
        spec = {"kind": "delayed_cue", "T": 6, "gap": 2, "sizes": [8, 4, 4]}
        a = generate_dataset(spec, seed=9)
        b = generate_dataset(spec, seed=9)
        assert a.train.inputs.tobytes() == b.train.inputs.tobytes()
        assert a.test.targets.tobytes() == b.test.targets.tobytes()

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            generate_dataset({"kind": "copy"}, seed=0)

    def test_jsonl_roundtrip(self, tmp_path):
        ds = gen_latent_feature_task(make_rng(10), T=4, F=1, noise=0.5,
                                     sizes=(6, 2, 2))
        path = tmp_path / "train.jsonl"
        save_batch_jsonl(path, ds.train)
        back = load_batch_jsonl(path)
        assert back.inputs.tobytes() == ds.train.inputs.tobytes()
        assert back.targets.tobytes() == ds.train.targets.tobytes()
        assert back.mask.tobytes() == ds.train.mask.tobytes()
        assert len(path.read_text().splitlines()) == 6
