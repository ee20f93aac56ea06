"""Tests for target distributions, interpolant sampling, and batch I/O."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from interpolant_lab.rng import stream_rng
from interpolant_lab.schedules import DesignedGaussianSchedule, trig_linear
from interpolant_lab.targets import (
    BimodalGmmTarget,
    GaussianTarget,
    GeneralGmmTarget,
    GrfSpec,
    SampleBatch,
    sample_interpolant,
    sample_target,
)


class TestGaussianTarget:
    def test_sample_variance_matches_eigenvalue(self):
        n = 100_000
        batch = sample_target(GaussianTarget([4.0]), n, seed=11)
        se = 4.0 * math.sqrt(2.0 / n)
        assert abs(batch.data.var() - 4.0) < 3.0 * se

    def test_explicit_basis_covariance(self):
        theta = 0.7
        u = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
        eigs = np.array([9.0, 1.0])
        tgt = GaussianTarget(eigs, basis=u)
        x = tgt.sample(200_000, stream_rng(3, "target"))
        cov = np.cov(x.T)
        assert_allclose(cov, u @ np.diag(eigs) @ u.T, atol=0.15)

    def test_score_rotates_with_basis(self):
        theta = 1.1
        u = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
        eigs = np.array([5.0, 0.5])
        plain = GaussianTarget(eigs)
        rotated = GaussianTarget(eigs, basis=u)
        sched = trig_linear()
        x = np.random.default_rng(5).standard_normal((40, 2))
        expected = plain.score(sched, 0.4, x @ u) @ u.T
        assert_allclose(rotated.score(sched, 0.4, x), expected, rtol=1e-12)

    def test_validation(self):
        with pytest.raises(ValueError, match="strictly positive"):
            GaussianTarget([1.0, -2.0])
        with pytest.raises(ValueError, match="non-increasing"):
            GaussianTarget([1.0, 2.0])
        with pytest.raises(ValueError, match="orthogonal"):
            GaussianTarget([2.0, 1.0], basis=np.array([[1.0, 0.2], [0.0, 1.0]]))

    def test_lam_min_max(self):
        tgt = GaussianTarget([7.0, 2.0, 0.3])
        assert (tgt.lam_max, tgt.lam_min) == (7.0, 0.3)


class TestBimodalTarget:
    def test_symmetric_mean_is_zero(self):
        n = 100_000
        batch = sample_target(BimodalGmmTarget(3.0, 0.5), n, seed=2)
        se = math.sqrt(10.0 / n)
        assert abs(batch.data.mean()) < 3.0 * se

    def test_mode_weights(self):
        tgt = BimodalGmmTarget(np.array([2.0, 2.0]), 0.3)
        x = tgt.sample(100_000, stream_rng(7, "target"))
        frac_plus = float(np.mean(x @ tgt.r > 0.0))
        assert abs(frac_plus - 0.3) < 0.01

    def test_unit_separation_preset(self):
        tgt = BimodalGmmTarget.with_unit_separation(1000, 0.3)
        assert tgt.dim == 1000
        assert_allclose(tgt.m_scale, math.sqrt(1000.0), rtol=1e-15)

    def test_logit_convention(self):
        tgt = BimodalGmmTarget(1.0, 0.3)
        p_back = math.exp(tgt.h) / (math.exp(tgt.h) + math.exp(-tgt.h))
        assert_allclose(p_back, 0.3, rtol=1e-12)

    def test_validation(self):
        with pytest.raises(ValueError, match="p must lie"):
            BimodalGmmTarget(1.0, 1.0)
        with pytest.raises(ValueError, match="finite"):
            BimodalGmmTarget(np.nan, 0.5)


class TestTanhIdentity:
    @pytest.mark.parametrize(
        "t,m,p", [(0.3, 1.0, 0.5), (0.6, 2.0, 0.3), (0.85, 3.0, 0.7)]
    )
    def test_conditional_mean_identity(self, t, m, p):
        # For trig schedules and d=1: E[I_t tanh(h + beta M I_t)] = beta M.
        n = 100_000
        tgt = BimodalGmmTarget(m, p)
        sched = trig_linear()
        batch = sample_interpolant(sched, tgt, t, n, seed=31)
        x = batch.data[:, 0]
        beta = sched.beta(t)
        g = x * np.tanh(tgt.h + beta * m * x)
        se = g.std() / math.sqrt(n)
        assert abs(g.mean() - beta * m) < 4.0 * se


class TestGeneralGmm:
    def test_reduces_to_bimodal_moments(self):
        r = np.array([1.5, -0.5, 2.0])
        p = 0.35
        general = GeneralGmmTarget(
            [p, 1.0 - p], [r, -r], [np.eye(3), np.eye(3)]
        )
        n = 200_000
        x = general.sample(n, stream_rng(13, "target"))
        mean_true = (2.0 * p - 1.0) * r
        cov_true = np.eye(3) + 4.0 * p * (1.0 - p) * np.outer(r, r)
        assert_allclose(x.mean(axis=0), mean_true, atol=0.03)
        assert_allclose(np.cov(x.T), cov_true, atol=0.08)

    def test_noise_covariance(self):
        c0 = np.array([[2.0, 0.6], [0.6, 1.0]])
        tgt = GeneralGmmTarget([1.0], [[0.0, 0.0]], [np.eye(2)], noise_cov=c0)
        z = tgt.sample_noise(200_000, stream_rng(17, "noise"))
        assert_allclose(np.cov(z.T), c0, atol=0.03)

    def test_validation(self):
        eye = np.eye(2)
        with pytest.raises(ValueError, match="sum to 1"):
            GeneralGmmTarget([0.5, 0.6], [[0, 0], [1, 1]], [eye, eye])
        with pytest.raises(ValueError, match="SPD"):
            GeneralGmmTarget([1.0], [[0, 0]], [np.array([[1.0, 2.0], [2.0, 1.0]])])
        with pytest.raises(ValueError, match="inconsistent"):
            GeneralGmmTarget([1.0], [[0, 0]], [np.eye(3)])


class TestGrf:
    def test_boundary_rows_vanish_exactly(self):
        spec = GrfSpec(16)
        batch = sample_target(spec, 50, seed=23)
        fields = batch.data.reshape(-1, 16, 16)
        assert np.all(fields[:, 0, :] == 0.0)
        assert np.all(fields[:, :, 0] == 0.0)

    def test_mode_coefficient_variance(self):
        spec = GrfSpec(32)
        n = 4000
        batch = sample_target(spec, n, seed=29)
        coeffs = spec.sine_basis().coeffs_from_fields(batch.data.reshape(-1, 32, 32))
        lam11 = spec.sigma_sq * (2.0 * math.pi**2 + spec.tau**2) ** (-spec.s)
        v = coeffs[:, 0, 0].var()
        se = lam11 * math.sqrt(2.0 / n)
        assert abs(v - lam11) < 3.0 * se

    def test_default_amplitude(self):
        spec = GrfSpec(32)
        assert_allclose(spec.sigma_sq, (4.0 * math.pi**2 + 1.0) ** 3, rtol=1e-15)

    def test_eigenvalue_layout_and_sorting(self):
        spec = GrfSpec(8)
        modes = spec.mode_eigenvalues()
        assert modes.shape == (7, 7)
        assert modes[0, 0] == modes.max()
        tgt = spec.to_gaussian_target()
        assert tgt.eigenvalues[0] == modes[0, 0]
        assert np.all(np.diff(tgt.eigenvalues) <= 0.0)

    def test_white_noise_endpoint_is_unit_variance_interior(self):
        spec = GrfSpec(16)
        z = spec.sample_noise(5000, stream_rng(31, "noise")).reshape(-1, 16, 16)
        assert np.all(z[:, 0, :] == 0.0)
        interior = z[:, 1:, 1:]
        assert abs(interior.var() - 1.0) < 0.01

    def test_validation(self):
        with pytest.raises(ValueError, match="n_grid"):
            GrfSpec(3)
        with pytest.raises(ValueError, match="tau"):
            GrfSpec(8, tau=0.0)
        with pytest.raises(ValueError, match="s must be"):
            GrfSpec(8, s=-1.0)


class TestSampleInterpolant:
    def test_t0_is_pure_noise(self):
        batch = sample_interpolant(trig_linear(), GaussianTarget([4.0, 2.0]), 0.0, 50_000, seed=3)
        assert_allclose(batch.data.var(axis=0), 1.0, atol=0.03)

    def test_t1_is_target(self):
        tgt = GaussianTarget([4.0, 2.0])
        batch = sample_interpolant(trig_linear(), tgt, 1.0, 50_000, seed=3)
        assert_allclose(batch.data.var(axis=0), [4.0, 2.0], rtol=0.05)

    def test_designed_schedule_variance_is_lambda_to_t(self):
        lam = 0.25
        tgt = GaussianTarget([lam])
        sched = DesignedGaussianSchedule(lam)
        for t in (0.25, 0.5, 0.75):
            batch = sample_interpolant(sched, tgt, t, 100_000, seed=7)
            v = batch.data.var()
            se = lam**t * math.sqrt(2.0 / batch.n)
            assert abs(v - lam**t) < 4.0 * se

    def test_reproducible_and_seed_sensitive(self):
        tgt = GaussianTarget([1.0])
        a = sample_interpolant(trig_linear(), tgt, 0.5, 100, seed=5)
        b = sample_interpolant(trig_linear(), tgt, 0.5, 100, seed=5)
        c = sample_interpolant(trig_linear(), tgt, 0.5, 100, seed=6)
        assert np.array_equal(a.data, b.data)
        assert not np.array_equal(a.data, c.data)


class TestSampleBatch:
    def test_binary_round_trip(self, tmp_path):
        data = np.random.default_rng(0).standard_normal((17, 5))
        batch = SampleBatch(data, t=0.375, seed=99)
        path = tmp_path / "batch.bin"
        batch.save(path)
        loaded = SampleBatch.load(path)
        assert np.array_equal(loaded.data, data)
        assert loaded.t == 0.375
        assert loaded.seed == 99

    def test_truncated_file_rejected(self, tmp_path):
        path = tmp_path / "bad.bin"
        batch = SampleBatch(np.zeros((4, 3)), t=0.0, seed=1)
        batch.save(path)
        raw = path.read_bytes()
        path.write_bytes(raw[:-8])
        with pytest.raises(ValueError, match="expected"):
            SampleBatch.load(path)

    def test_csv_export(self, tmp_path):
        data = np.array([[1.0, 2.0], [3.0, 1.0 / 3.0]])
        path = tmp_path / "batch.csv"
        SampleBatch(data, t=0.5, seed=0).to_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "x0,x1"
        back = np.loadtxt(path, delimiter=",", skiprows=1)
        assert np.array_equal(back, data)

    def test_csv_rejects_wide_batches(self, tmp_path):
        batch = SampleBatch(np.zeros((2, 5)), t=0.0, seed=0)
        with pytest.raises(ValueError, match="d <= 4"):
            batch.to_csv(tmp_path / "wide.csv")


@settings(max_examples=25, deadline=None)
@given(
    n=st.integers(min_value=1, max_value=40),
    d=st.integers(min_value=1, max_value=6),
    t=st.floats(min_value=0.0, max_value=1.0),
)
def test_batch_round_trip_property(tmp_path_factory, n, d, t):
    data = np.random.default_rng(n * 100 + d).standard_normal((n, d))
    path = tmp_path_factory.mktemp("batches") / "b.bin"
    SampleBatch(data, t=t, seed=d).save(path)
    loaded = SampleBatch.load(path)
    assert np.array_equal(loaded.data, data)
    assert loaded.t == t
