import numpy as np
import pytest

from bayesrnn.errors import CapacityError, DomainError
from bayesrnn.oracle import (OracleModel, bayes_filter, enumerate_posteriors,
                             forward_backward, random_model, smoother_gap,
                             ubru_smoother_reference)
from bayesrnn.tensor import make_rng


class TestModelValidation:
    def test_prior_domain(self):
        with pytest.raises(DomainError):
            OracleModel(p=1.0, z=np.array([0.5]), lam=np.ones(2))

    def test_length_consistency(self):
        with pytest.raises(DomainError):
            OracleModel(p=0.5, z=np.array([0.5, 0.5]), lam=np.ones(2))

    def test_ratio_positive(self):
        with pytest.raises(DomainError):
            OracleModel(p=0.5, z=np.array([0.5]), lam=np.array([1.0, -1.0]))


class TestBayesFilter:
    def test_uninformative_observations_track_predictor(self):
        # lambda = 1 everywhere: the posterior equals the predictor at each step
        model = OracleModel(p=0.3, z=np.array([0.7, 0.2, 0.9]), lam=np.ones(4))
        h = bayes_filter(model)
        rho = [0.3]
        for t in range(1, 4):
            rho.append((1 - model.z[t - 1]) * 0.3 + model.z[t - 1] * rho[-1])
        np.testing.assert_allclose(h, rho, atol=1e-15)

    def test_persistent_gate_accumulates_evidence(self):
        for lam_const, direction in ((0.5, 1), (2.0, -1)):
            model = OracleModel(p=0.5, z=np.ones(7), lam=np.full(8, lam_const))
            h = bayes_filter(model)
            assert np.all(direction * np.diff(h) > 0)
            # lambda < 1 favours the feature: h -> 1; lambda > 1: h -> 0
            assert (h[-1] > 0.99) if lam_const < 1 else (h[-1] < 0.01)

    def test_t4_example_matches_enumeration(self):
        model = OracleModel(p=0.3, z=np.array([0.7, 0.2, 0.9]),
                            lam=np.array([0.5, 2.0, 1.0, 0.25]))
        filtered, _ = enumerate_posteriors(model)
        np.testing.assert_allclose(bayes_filter(model), filtered, atol=1e-12)


class TestEnumeration:
    def test_frozen_feature_constant_smoothed(self):
        model = OracleModel(p=0.4, z=np.ones(4),
                            lam=np.array([0.5, 2.0, 0.8, 1.5, 1.0]))
        _, smoothed = enumerate_posteriors(model)
        np.testing.assert_allclose(smoothed, smoothed[0], atol=1e-12)

    def test_independent_steps(self):
        model = OracleModel(p=0.25, z=np.zeros(3),
                            lam=np.array([0.5, 2.0, 1.0, 4.0]))
        filtered, smoothed = enumerate_posteriors(model)
        np.testing.assert_allclose(filtered, smoothed, atol=1e-12)
        expected = 1.0 / (1.0 + model.lam * (1 - 0.25) / 0.25)
        np.testing.assert_allclose(filtered, expected, atol=1e-12)

    def test_agrees_with_filter_on_random_models(self):
        rng = make_rng(21)
        for _ in range(50):
            model = random_model(rng, 6)
            filtered, _ = enumerate_posteriors(model)
            np.testing.assert_allclose(bayes_filter(model), filtered, atol=1e-12)

    def test_capacity_limit(self):
        with pytest.raises(CapacityError):
            enumerate_posteriors(OracleModel(p=0.5, z=np.full(12, 0.5),
                                             lam=np.ones(13)))


class TestForwardBackwardCrossOracle:
    def test_matches_enumeration_everywhere(self):
        rng = make_rng(22)
        for _ in range(50):
            model = random_model(rng, int(rng.integers(2, 9)))
            e_filt, e_smooth = enumerate_posteriors(model)
            f_filt, f_smooth = forward_backward(model)
            np.testing.assert_allclose(e_filt, f_filt, atol=1e-12)
            np.testing.assert_allclose(e_smooth, f_smooth, atol=1e-12)


class TestUbruSmoother:
    def test_closed_gates_disable_smoothing(self):
        model = OracleModel(p=0.4, z=np.zeros(5), lam=np.exp(make_rng(1).normal(size=6)))
        filtered = bayes_filter(model)
        np.testing.assert_array_equal(ubru_smoother_reference(model, filtered), filtered)

    def test_open_gates_broadcast_final_posterior(self):
        model = OracleModel(p=0.4, z=np.ones(5), lam=np.exp(make_rng(2).normal(size=6)))
        filtered = bayes_filter(model)
        hp = ubru_smoother_reference(model, filtered)
        np.testing.assert_allclose(hp, filtered[-1], atol=1e-15)

    def test_exact_for_mixed_binary_gates(self):
        rng = make_rng(23)
        for _ in range(50):
            model = random_model(rng, 6, binary_gates=True)
            filtered = bayes_filter(model)
            hp = ubru_smoother_reference(model, filtered)
            _, exact = enumerate_posteriors(model)
            np.testing.assert_allclose(hp, exact, atol=1e-12)

    def test_final_step_equals_filtered_exactly(self):
        rng = make_rng(24)
        model = random_model(rng, 7)
        filtered = bayes_filter(model)
        assert ubru_smoother_reference(model, filtered)[-1] == filtered[-1]

    def test_fractional_gap_measured_not_asserted(self):
        rng = make_rng(25)
        gaps = [smoother_gap(random_model(rng, 6)) for _ in range(20)]
        assert all(np.isfinite(g) for g in gaps)
        assert max(gaps) > 0.0  # the approximation really is approximate

    def test_posteriors_stay_in_unit_interval(self):
        rng = make_rng(26)
        for _ in range(20):
            model = random_model(rng, 8)
            filtered = bayes_filter(model)
            hp = ubru_smoother_reference(model, filtered)
            assert np.all((filtered > 0) & (filtered < 1))
            assert np.all((hp >= 0) & (hp <= 1))
