"""
Tests for priors, resampling, summary statistics and random streams.
"""
import numpy as np
import pytest

from infoseek.core import DegenerateWeightsError, ParticleSet
from infoseek.particles import (
    Box,
    ResampleKind,
    RngStream,
    StreamFactory,
    cov_trace,
    draw_target_prior,
    draw_uniform_prior,
    kernel_bandwidth,
    kernel_period,
    kernel_resample,
    mmse_estimate,
    resample_schedule,
    systematic_indices,
    systematic_resample,
)


class TestRandomStreams:
    """Counter-based streams keyed by (seed, run, agent, purpose, time)."""

    def test_same_key_same_draws(self):
        a = RngStream(7, 0, 3, "measure").generator(5).random(4)
        b = StreamFactory(7, 0).rng(3, "measure", 5).random(4)
        assert np.array_equal(a, b)

    def test_every_key_component_matters(self):
        base = StreamFactory(7, 0).rng(3, "measure", 5).random()
        others = [
            StreamFactory(8, 0).rng(3, "measure", 5),
            StreamFactory(7, 1).rng(3, "measure", 5),
            StreamFactory(7, 0).rng(4, "measure", 5),
            StreamFactory(7, 0).rng(3, "predict", 5),
            StreamFactory(7, 0).rng(3, "measure", 6),
            StreamFactory(7, 0).rng(None, "measure", 5),
        ]
        for rng in others:
            assert rng.random() != base

    def test_shared_slot_differs_from_agent_zero(self):
        shared = RngStream(1, 0, None, "heading").key()
        agent0 = RngStream(1, 0, 0, "heading").key()
        assert shared[1] == 0
        assert agent0[1] == 1


class TestPriorsAndStatistics:
    def test_uniform_prior_in_box(self):
        rng = np.random.default_rng(0)
        p = draw_uniform_prior(4, Box([0.0, 0.0], [1.0, 1.0]), rng)
        assert p.J == 4
        assert np.allclose(p.weights, 0.25)
        assert np.all((p.samples >= 0.0) & (p.samples <= 1.0))

    def test_uniform_prior_mean(self):
        rng = np.random.default_rng(1)
        p = draw_uniform_prior(100000, Box.square(200), rng)
        assert np.all(np.abs(mmse_estimate(p)) < 2.0)

    def test_prior_errors(self):
        with pytest.raises(ValueError):
            Box([0.0, 0.0], [1.0, 0.0])
        with pytest.raises(ValueError):
            draw_uniform_prior(0, Box.square(1), np.random.default_rng(0))

    def test_target_prior(self):
        rng = np.random.default_rng(2)
        p = draw_target_prior(20000, Box.square(200), [0.0, 0.0], np.eye(2) * 0.1, rng)
        assert p.dim == 4
        assert np.all(np.abs(p.samples[:, :2]) <= 200.0)
        assert np.allclose(p.samples[:, 2:].var(axis=0), 0.1, rtol=0.05)

    def test_mmse_estimate(self):
        samples = np.array([[0.0, 0.0], [2.0, 0.0]])
        assert mmse_estimate(ParticleSet.equal_weights(samples)).tolist() == [1.0, 0.0]
        point = ParticleSet(samples, np.array([1.0, 0.0]))
        assert mmse_estimate(point).tolist() == [0.0, 0.0]

    def test_mmse_matches_weighted_sum(self):
        rng = np.random.default_rng(3)
        samples = rng.normal(size=(50, 3))
        weights = rng.random(50)
        weights /= weights.sum()
        expected = sum(w * x for w, x in zip(weights, samples))
        estimate = mmse_estimate(ParticleSet(samples, weights))
        assert np.allclose(estimate, expected, atol=1e-12)

    def test_cov_trace(self):
        same = ParticleSet.equal_weights(np.ones((5, 2)))
        assert cov_trace(same) == 0.0
        pair = ParticleSet.equal_weights(np.array([[-1.0, 0.0], [1.0, 0.0]]))
        assert cov_trace(pair) == pytest.approx(1.0)

    def test_cov_trace_two_pass_oracle(self):
        rng = np.random.default_rng(4)
        samples = rng.normal(size=(40, 4)) * [1.0, 3.0, 0.1, 0.1]
        weights = rng.random(40)
        weights /= weights.sum()
        p = ParticleSet(samples, weights)
        mean = weights @ samples
        cov = (samples - mean).T @ np.diag(weights) @ (samples - mean)
        assert cov_trace(p) == pytest.approx(np.trace(cov), abs=1e-10)
        assert cov_trace(p, dims=2) == pytest.approx(cov[0, 0] + cov[1, 1], abs=1e-10)

    def test_cov_trace_of_repeated_point_is_exactly_zero(self):
        weights = np.array([0.1, 0.2, 0.3, 0.4])
        p = ParticleSet(np.tile([3.0, -1.0, 0.7, 0.1], (4, 1)), weights)
        assert cov_trace(p) == 0.0
        assert cov_trace(ParticleSet.point_mass([3.0, -1.0], 20)) == 0.0
        assert cov_trace(ParticleSet.point_mass([1e6, -1e-3], 7)) == 0.0


class TestResampling:
    def test_systematic_degenerate_weights(self):
        p = ParticleSet(np.array([[0.0], [1.0], [2.0]]), np.array([1.0, 0.0, 0.0]))
        out = systematic_resample(p, np.random.default_rng(0))
        assert out.samples.ravel().tolist() == [0.0, 0.0, 0.0]
        assert np.allclose(out.weights, 1.0 / 3)

    def test_systematic_exact_multiples(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            idx = systematic_indices(np.array([0.25, 0.25, 0.5, 0.0]), rng)
            assert np.bincount(idx, minlength=4).tolist() == [1, 1, 2, 0]

    def test_systematic_copy_counts(self):
        weights = np.array([0.1, 0.35, 0.05, 0.5])
        rng = np.random.default_rng(6)
        for _ in range(200):
            counts = np.bincount(systematic_indices(weights, rng), minlength=4)
            expected = 4 * weights
            assert np.all(np.abs(counts - expected) < 1.0)

    def test_systematic_mean_unbiased(self):
        rng = np.random.default_rng(7)
        samples = rng.normal(size=(10, 1))
        p = ParticleSet.equal_weights(samples)
        means = [systematic_resample(p, rng).samples.mean() for _ in range(2000)]
        assert abs(np.mean(means) - samples.mean()) < 1e-9 + 3 * np.std(means)

    def test_systematic_all_zero(self):
        with pytest.raises(DegenerateWeightsError):
            systematic_indices(np.zeros(3), np.random.default_rng(0))

    def test_kernel_bandwidth(self):
        assert kernel_bandwidth(0.0, 1000, 50.0) == 0.0
        assert kernel_bandwidth(200.0, 1000, 50.0) == 50.0
        assert kernel_bandwidth(60.0, 1000, 50.0) == pytest.approx(10.0 * 30.0)
        assert kernel_bandwidth(60.0, 64, 50.0, exponent=0.5) == pytest.approx(240.0)

    def test_kernel_with_zero_spread(self):
        p = ParticleSet.point_mass([3.0, -1.0], 20)
        out = kernel_resample(p, 50.0, np.random.default_rng(0))
        assert np.array_equal(out.samples, p.samples)

    def test_zero_bandwidth_copies_like_systematic(self):
        """Common position, distinct velocities: copies are countable."""
        weights = np.array([0.1, 0.35, 0.05, 0.5])
        velocities = np.arange(4.0)[:, None] * [1.0, 0.0]
        samples = np.hstack([np.tile([3.0, -1.0], (4, 1)), velocities])
        p = ParticleSet(samples, weights)
        rng = np.random.default_rng(6)
        for _ in range(200):
            out = kernel_resample(p, 50.0, rng, dims=2)
            assert np.array_equal(out.samples[:, :2], samples[:, :2])
            counts = np.bincount(out.samples[:, 2].astype(int), minlength=4)
            assert np.all(np.abs(counts - 4 * weights) < 1.0)
        same = kernel_resample(p, 50.0, np.random.default_rng(9), dims=2)
        ref = systematic_resample(p, np.random.default_rng(9))
        assert np.array_equal(same.samples, ref.samples)

    def test_kernel_adds_bandwidth_variance(self):
        rng = np.random.default_rng(8)
        # T = 200 >= 2 * sigma0_2, so sigma_K^2 = sigma0_2 per axis
        samples = rng.normal(scale=10.0, size=(10000, 2))
        p = ParticleSet.equal_weights(samples)
        out = kernel_resample(p, 50.0, rng)
        expected = samples.var(axis=0) + 50.0
        assert np.allclose(out.samples.var(axis=0), expected, rtol=0.05)

    def test_kernel_leaves_velocity_alone(self):
        rng = np.random.default_rng(9)
        samples = np.hstack([rng.normal(size=(100, 2)), np.ones((100, 2))])
        out = kernel_resample(ParticleSet.equal_weights(samples), 50.0, rng, dims=2)
        assert np.all(out.samples[:, 2:] == 1.0)
        assert not np.array_equal(out.samples[:, :2], samples[:, :2])

    def test_same_stream_same_output(self):
        p = ParticleSet.equal_weights(np.random.default_rng(0).normal(size=(30, 2)))
        streams = StreamFactory(3, 0)
        a = kernel_resample(p, 50.0, streams.rng(2, "resample", 4))
        b = kernel_resample(p, 50.0, streams.rng(2, "resample", 4))
        assert np.array_equal(a.samples, b.samples)


class TestResampleSchedule:
    def test_schedule(self):
        assert resample_schedule(50.0, 40) is ResampleKind.KERNEL
        assert resample_schedule(50.0, 41) is ResampleKind.SYSTEMATIC
        assert resample_schedule(5000.0, 10) is ResampleKind.KERNEL
        assert resample_schedule(500.0, 20) is ResampleKind.KERNEL
        assert resample_schedule(500.0, 10) is ResampleKind.SYSTEMATIC

    def test_period_boundaries(self):
        assert kernel_period(79.9) == 40
        assert kernel_period(80.0) == 20
        assert kernel_period(999.9) == 20
        assert kernel_period(1000.0) == 10

    def test_negative_trace(self):
        with pytest.raises(ValueError):
            resample_schedule(-1.0, 1)
