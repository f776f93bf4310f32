import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from privlr.dataio import Dataset
from privlr.pac_engine import (
    DomainError,
    NoiseProfile,
    PacEstimationConfig,
    PrivacyLevel,
    ProjectionBasis,
    add_noise,
    compute_projection,
    epsilon_to_psr,
    estimate_noise,
    measure_instability,
    mi_to_psr,
    noise_variances,
    pac_train,
    profile_from_instability,
    psr_to_epsilon,
    psr_to_mi,
    sample_noise,
)
from privlr.pac_engine.noise import Instability
from privlr.regression import Coefficients, FitSpec

from .conftest import make_linear

# (psr, epsilon, mi) rows of the PSR / DP / MI conversion table, delta = 1e-5
TABLE = [
    (0.52, 0.080023, 0.000800),
    (0.55, 0.200652, 0.005008),
    (0.65, 0.619023, 0.045700),
    (0.75, 1.098598, 0.130812),
    (0.85, 1.734589, 0.270438),
    (0.95, 2.944428, 0.494631),
    (0.98, 3.891810, 0.595108),
]


class TestConversions:
    @pytest.mark.parametrize("psr, eps, mi", TABLE)
    def test_table_rows_epsilon(self, psr, eps, mi):
        assert abs(psr_to_epsilon(psr, 1e-5) - eps) <= 5e-6

    @pytest.mark.parametrize("psr, eps, mi", TABLE)
    def test_table_rows_are_six_decimal_truncations(self, psr, eps, mi):
        # the reference values agree with the formulas cut (not rounded) to 6 decimals
        assert 0 <= psr_to_mi(psr) - mi < 1e-6
        assert 0 <= psr_to_epsilon(psr, 1e-5) - eps < 1e-6

    def test_mi_examples(self):
        assert psr_to_mi(0.75) == pytest.approx(0.130812, abs=5e-7)
        assert psr_to_mi(0.5 + 1e-9) < 1e-15

    def test_epsilon_hand_values(self):
        assert psr_to_epsilon(0.75, 0.0) == pytest.approx(math.log(3))
        assert psr_to_epsilon(0.98, 1e-5) == pytest.approx(math.log(0.99999 / 0.02 - 1))

    @settings(max_examples=200, deadline=None)
    @given(st.floats(0.5001, 0.9989), st.floats(1e-4, 1e-3))
    def test_monotone(self, p, dp):
        assert psr_to_mi(p + dp) > psr_to_mi(p)
        assert psr_to_epsilon(p + dp, 1e-5) > psr_to_epsilon(p, 1e-5)
        assert psr_to_epsilon(p, 1e-3) < psr_to_epsilon(p, 1e-6)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0.501, 0.999))
    def test_inversions(self, p):
        assert mi_to_psr(psr_to_mi(p)) == pytest.approx(p, abs=1e-9)
        assert epsilon_to_psr(psr_to_epsilon(p, 1e-5), 1e-5) == pytest.approx(p, abs=1e-12)

    @pytest.mark.parametrize("bad", [0.5, 1.0, 0.3, 1.2])
    def test_domain(self, bad):
        with pytest.raises(DomainError):
            psr_to_mi(bad)

    def test_epsilon_domain(self):
        with pytest.raises(DomainError):
            psr_to_epsilon(0.4, 0.5)
        with pytest.raises(DomainError):
            mi_to_psr(0.0)

    def test_privacy_level(self):
        lvl = PrivacyLevel.from_psr(0.85)
        assert lvl.prior == 0.5 and lvl.delta_equiv == 1e-5
        assert lvl.mi == pytest.approx(psr_to_mi(0.85))
        assert PrivacyLevel.from_mi(lvl.mi).psr == pytest.approx(0.85)
        assert PrivacyLevel.from_epsilon(lvl.epsilon_equiv).psr == pytest.approx(0.85)


class TestProjection:
    def test_rank_one_axis(self, rng):
        direction = np.array([0.0, 1.0, 0.0])
        samples = np.outer(rng.normal(size=20), direction) + np.array([1.0, 2.0, 3.0])
        basis = compute_projection(samples)
        assert abs(basis.v_t[0] @ direction) > 1 - 1e-8

    @settings(max_examples=30, deadline=None)
    @given(st.integers(2, 12), st.integers(1, 6), st.integers(0, 10_000))
    def test_orthogonal_and_reconstructs(self, k, p, seed):
        S = np.random.default_rng(seed).normal(size=(k, p))
        basis = compute_projection(S)
        np.testing.assert_allclose(basis.v_t @ basis.v_t.T, np.eye(p), atol=1e-8)
        C = S - S.mean(axis=0)
        U, s, _ = np.linalg.svd(C, full_matrices=False)
        r = s.shape[0]
        recon = U @ np.diag(basis.singular_values[:r]) @ basis.v_t[:r]
        assert np.linalg.norm(recon - C) < 1e-8

    def test_degenerate_identity(self):
        with pytest.warns(UserWarning, match="identity"):
            basis = compute_projection(np.ones((5, 3)))
        np.testing.assert_array_equal(basis.v_t, np.eye(3))

    def test_needs_two_samples(self):
        with pytest.raises(ValueError):
            compute_projection(np.ones((1, 3)))


def constant_mechanism(data):
    return Coefficients(np.full(data.d, 0.3), 1.0)


class TestNoiseFormula:
    def test_single_dimension_example(self):
        e = noise_variances(np.array([[4.0]]), 0.130812)
        assert e[0, 0] == pytest.approx(4.0 / (4 * 0.130812))
        assert e[0, 0] == pytest.approx(7.6446, abs=1e-4)

    def test_symmetric_example(self):
        np.testing.assert_allclose(noise_variances(np.array([[1.0, 1.0]]), 0.5), [[1.0, 1.0]])

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(1e-6, 1e3), min_size=1, max_size=8), st.floats(1e-4, 0.69))
    def test_budget_identity(self, v, mi):
        v = np.array(v)
        e = noise_variances(v, mi)
        assert np.sum(v / e) == pytest.approx(4 * mi, rel=1e-9)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(1e-6, 1e3), min_size=1, max_size=8), st.floats(1e-4, 0.3))
    def test_doubling_mi_halves(self, v, mi):
        v = np.array(v)
        assert np.array_equal(noise_variances(v, 2 * mi), noise_variances(v, mi) / 2)


def small_config(**kw):
    base = dict(mi_budget=0.130812, projection="identity", min_rounds=10, max_rounds=200)
    base.update(kw)
    return PacEstimationConfig(**base)


class TestEstimate:
    def test_constant_mechanism_zero_noise(self, rng):
        data = make_linear(rng, 12, 2)
        prof = estimate_noise(data, constant_mechanism, small_config())
        np.testing.assert_array_equal(prof.variances, 0.0)

    def test_budget_identity_per_instance(self, rng):
        data = make_linear(rng, 20, 3)
        prof = estimate_noise(data, FitSpec(), small_config(projection="svd"))
        v, e = prof.instance_mean_sq_dev, prof.instance_variances
        for vi, ei in zip(v, e):
            live = vi > 0
            assert np.sum(vi[live] / ei[live]) == pytest.approx(4 * prof.mi_budget, rel=1e-9)

    def test_released_profile_respects_budget(self, rng):
        data = make_linear(rng, 20, 3)
        prof = estimate_noise(data, FitSpec(), small_config())
        for vi in prof.instance_mean_sq_dev:
            live = vi > 0
            assert np.sum(vi[live] / prof.variances[live]) <= 4 * prof.mi_budget + 1e-9

    def test_deterministic(self, rng):
        data = make_linear(rng, 15, 2)
        a = estimate_noise(data, FitSpec("ridge", 1.0), small_config(projection="svd"), seed=5)
        b = estimate_noise(data, FitSpec("ridge", 1.0), small_config(projection="svd"), seed=5)
        assert a.variances.tobytes() == b.variances.tobytes()

    def test_convergence_bounds(self, rng):
        data = make_linear(rng, 10, 2)
        prof = estimate_noise(data, FitSpec(), small_config(min_rounds=7, max_rounds=9, convergence_threshold=1e-12))
        assert set(prof.rounds_per_instance) == {9}
        assert not prof.converged
        prof = estimate_noise(data, constant_mechanism, small_config(min_rounds=7))
        assert set(prof.rounds_per_instance) == {7}
        assert prof.converged

    def test_full_pair_mode(self, rng):
        data = make_linear(rng, 12, 2)
        prof = estimate_noise(data, FitSpec(), small_config(pair="full"))
        assert np.all(prof.variances > 0)

    def test_mechanism_failure(self, rng):
        data = make_linear(rng, 8, 2)

        def broken(d):
            raise ArithmeticError("boom")

        with pytest.raises(RuntimeError, match="boom"):
            estimate_noise(data, broken, small_config())

    def test_instance_cap(self, rng):
        data = make_linear(rng, 30, 2)
        prof = estimate_noise(data, FitSpec(), small_config(max_instances=5))
        assert len(prof.rounds_per_instance) == 5

    def test_paper_literal_uses_diagonal_of_projection(self):
        theta = 0.3
        v_t = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
        inst = Instability(ProjectionBasis(v_t, np.ones(2)), np.array([[4.0, 1.0]]), np.array([30]),
                           np.array([True]), np.array([0]))
        lit = profile_from_instability(inst, 0.5, "paper_literal")
        cov = profile_from_instability(inst, 0.5, "covariance_correct")
        np.testing.assert_allclose(cov.variances, [3.0, 1.5])
        np.testing.assert_allclose(lit.variances, [3.0 * math.cos(theta), 1.5 * math.cos(theta)])


def test_parallel_matches_serial(rng):
    data = make_linear(rng, 10, 2)
    a = estimate_noise(data, FitSpec(), small_config())
    b = estimate_noise(data, FitSpec(), small_config(n_jobs=2))
    assert a.variances.tobytes() == b.variances.tobytes()


class TestAddNoise:
    def test_zero_profile_identity(self):
        m = Coefficients([1.0, 2.0], 3.0)
        out = add_noise(m, NoiseProfile.zeros(3), seed=1)
        assert out.as_vector().tolist() == m.as_vector().tolist()

    @pytest.mark.parametrize("mode", ["covariance_correct", "paper_literal"])
    def test_monte_carlo_moments(self, mode):
        r = np.random.default_rng(0)
        q, _ = np.linalg.qr(r.normal(size=(3, 3)))
        variances = np.array([2.0, 0.5, 0.1])
        prof = NoiseProfile(variances, ProjectionBasis(q.T, np.ones(3)), 0.1, np.zeros(3), mode)
        draws = sample_noise(prof, np.random.default_rng(1), 100_000)
        if mode == "covariance_correct":
            draws = draws @ q  # back into the projected basis
        assert np.all(np.abs(draws.mean(axis=0)) < 4 * np.sqrt(variances / 1e5))
        np.testing.assert_allclose(draws.var(axis=0), variances, rtol=0.05)

    def test_trace_invariant_to_basis(self):
        r = np.random.default_rng(3)
        q, _ = np.linalg.qr(r.normal(size=(4, 4)))
        variances = np.array([1.0, 2.0, 3.0, 4.0])
        prof = NoiseProfile(variances, ProjectionBasis(q.T, np.ones(4)), 0.1, np.zeros(4))
        cov = q @ np.diag(variances) @ q.T  # covariance of V z
        assert np.trace(cov) == pytest.approx(variances.sum())
        draws = sample_noise(prof, np.random.default_rng(4), 100_000)
        np.testing.assert_allclose(np.cov(draws.T), cov, atol=0.06)

    def test_rejects_negative(self):
        prof = NoiseProfile(np.array([1.0, -1.0]), ProjectionBasis.identity(2), 0.1, np.zeros(2))
        with pytest.raises(ValueError):
            add_noise(Coefficients([0.0], 0.0), prof, 0)

    def test_dimension_check(self):
        with pytest.raises(ValueError):
            add_noise(Coefficients([0.0, 1.0], 0.0), NoiseProfile.zeros(2), 0)


def test_profile_json_round_trip(rng):
    data = make_linear(rng, 10, 2)
    prof = estimate_noise(data, FitSpec(), small_config(projection="svd"))
    obj = json.loads(json.dumps(prof.to_dict()))
    assert set(obj) >= {"variances", "v_t", "mi_budget", "mode", "converged", "rounds_per_instance"}
    back = NoiseProfile.from_dict(obj)
    np.testing.assert_array_equal(back.variances, prof.variances)
    np.testing.assert_array_equal(back.basis.v_t, prof.basis.v_t)


class TestPacTrain:
    def test_deterministic(self, rng):
        data = make_linear(rng, 20, 3)
        lvl = PrivacyLevel.from_psr(0.75)
        a = pac_train(data, FitSpec(), lvl, small_config(), seed=9)
        b = pac_train(data, FitSpec(), lvl, small_config(), seed=9)
        assert a.as_vector().tobytes() == b.as_vector().tobytes()

    def test_vanishing_noise_limit(self, rng):
        data = make_linear(rng, 40, 3)
        inst = measure_instability(data, FitSpec(), small_config())
        clean = FitSpec()(data).as_vector()
        dists = []
        for psr in (0.75, 0.95, 0.999, 0.99999):
            prof = profile_from_instability(inst, psr_to_mi(psr))
            noisy = pac_train(data, FitSpec(), PrivacyLevel.from_psr(psr), small_config(), seed=1, profile=prof)
            dists.append(np.linalg.norm(noisy.as_vector() - clean))
        assert dists[-1] < dists[0]
        assert all(a >= b for a, b in zip(
            [profile_from_instability(inst, psr_to_mi(p)).variances.sum() for p in (0.75, 0.95, 0.999)],
            [profile_from_instability(inst, psr_to_mi(p)).variances.sum() for p in (0.95, 0.999, 0.99999)],
        ))

    def test_instability_feeds_any_level(self, rng):
        data = make_linear(rng, 15, 2)
        cfg = small_config()
        inst = measure_instability(data, FitSpec(), cfg)
        direct = estimate_noise(data, FitSpec(), cfg)
        np.testing.assert_array_equal(profile_from_instability(inst, cfg.mi_budget).variances, direct.variances)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            PacEstimationConfig(sampling_rate=1.0)
        with pytest.raises(ValueError):
            PacEstimationConfig(min_rounds=1)
        with pytest.raises(ValueError):
            PacEstimationConfig(mode="other")
        with pytest.raises(ValueError):
            PacEstimationConfig(projection="pca")


def test_dataset_sized_estimation_uses_d_plus_one():
    data = Dataset(np.random.default_rng(0).normal(size=(12, 3)), np.arange(12.0))
    prof = estimate_noise(data, FitSpec(), small_config())
    assert prof.dim == 4
