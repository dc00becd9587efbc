import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from bayesrnn.errors import DataError
from bayesrnn.estimator import RecurrentSequenceClassifier, check_sequences


def sign_task(rng, n, tmin=4, tmax=8):
    """Label each step with the sign of its own input: learnable in a few epochs."""
    X, y = [], []
    for _ in range(n):
        T = int(rng.integers(tmin, tmax + 1))
        bits = rng.integers(0, 2, size=T)
        X.append((2.0 * bits - 1.0)[:, None])
        y.append(bits)
    return X, y


class TestValidation:
    def test_rejects_empty(self):
        with pytest.raises(DataError):
            check_sequences([])

    def test_rejects_ragged_features(self):
        with pytest.raises(DataError):
            check_sequences([np.ones((3, 2)), np.ones((3, 3))])

    def test_rejects_nonfinite(self):
        with pytest.raises(DataError):
            check_sequences([np.array([[np.nan]])])

    def test_rejects_label_mismatch(self):
        with pytest.raises(DataError):
            check_sequences([np.ones((3, 1))], [np.array([0, 1])])

    def test_rejects_float_labels(self):
        with pytest.raises(DataError):
            check_sequences([np.ones((2, 1))], [np.array([0.5, 1.0])])

    def test_promotes_1d_sequences(self):
        seqs, _ = check_sequences([np.array([1.0, 2.0, 3.0])])
        assert seqs[0].shape == (3, 1)


class TestSklearnContract:
    def test_get_set_params_roundtrip(self):
        est = RecurrentSequenceClassifier(cell="LBRU", hidden=5, epochs=2)
        params = est.get_params()
        assert params["cell"] == "LBRU" and params["hidden"] == 5
        est.set_params(hidden=9)
        assert est.get_params()["hidden"] == 9

    def test_clone(self):
        est = RecurrentSequenceClassifier(cell="GRU", hidden=3, seed=4)
        twin = clone(est)
        assert twin.get_params() == est.get_params()

    def test_not_fitted(self):
        with pytest.raises(NotFittedError):
            RecurrentSequenceClassifier().predict([np.ones((3, 1))])

    def test_fit_returns_self(self):
        rng = np.random.default_rng(0)
        X, y = sign_task(rng, 6)
        est = RecurrentSequenceClassifier(hidden=4, epochs=1, batch_size=4)
        assert est.fit(X, y) is est
        assert list(est.classes_) == [0, 1]


class TestFitPredict:
    def test_shapes_follow_input_lengths(self):
        rng = np.random.default_rng(1)
        X, y = sign_task(rng, 8)
        est = RecurrentSequenceClassifier(hidden=4, epochs=2, batch_size=4,
                                          seed=1).fit(X, y)
        preds = est.predict(X)
        probs = est.predict_proba(X)
        assert len(preds) == len(X)
        for x, p, pr in zip(X, preds, probs):
            assert p.shape == (x.shape[0],)
            assert pr.shape == (x.shape[0], 2)
            np.testing.assert_allclose(pr.sum(axis=1), 1.0, atol=1e-12)

    def test_learns_sign_task(self):
        rng = np.random.default_rng(2)
        X, y = sign_task(rng, 40)
        est = RecurrentSequenceClassifier(cell="GRU", hidden=8, epochs=10,
                                          batch_size=8, lr=0.05, seed=2).fit(X, y)
        Xt, yt = sign_task(rng, 20)
        assert est.score(Xt, yt) > 0.95

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(3)
        X, y = sign_task(rng, 10)
        a = RecurrentSequenceClassifier(hidden=4, epochs=2, seed=7).fit(X, y)
        b = RecurrentSequenceClassifier(hidden=4, epochs=2, seed=7).fit(X, y)
        for pa, pb in zip(a.predict(X), b.predict(X)):
            np.testing.assert_array_equal(pa, pb)
