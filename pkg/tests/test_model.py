import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from timeblind.model import (
    TimeInterval,
    clock_eval,
    coordinate_stats,
    critical_point,
    equal_spikes,
    iter_batches,
    make_model,
    sample_batch,
    term_one,
)


def random_basis(d, k, seed=0):
    q, _ = np.linalg.qr(np.random.default_rng(seed).standard_normal((d, k)))
    return q


class TestMakeModel:
    def test_reference_synthetic_setting(self):
        m = make_model(1024, 10, np.linspace(1.0, 10.0, 10), 0.1)
        assert m.d == 1024 and m.k == 10 and m.axis_aligned
        np.testing.assert_allclose(m.S[:10], np.linspace(1.1, 10.1, 10))
        assert np.all(m.S[10:] == 0.1)

    def test_zero_spikes(self):
        m = make_model(4, 0, [], 1.0)
        np.testing.assert_array_equal(m.S, np.ones(4))

    @pytest.mark.parametrize(
        "args",
        [
            (4, 4, [1, 1, 1, 1], 1.0),
            (4, 5, [1] * 5, 1.0),
            (4, 1, [1.0], 0.0),
            (4, 1, [1.0], -0.5),
            (4, 2, [1.0], 1.0),
            (4, 1, [-1.0], 1.0),
        ],
    )
    def test_rejects_invalid(self, args):
        with pytest.raises(ValueError):
            make_model(*args)

    def test_explicit_basis(self):
        U = random_basis(6, 2)
        m = make_model(6, 2, [3.0, 1.0], 0.5, basis=U)
        assert not m.axis_aligned
        with pytest.raises(ValueError, match="orthonormal"):
            make_model(6, 2, [3.0, 1.0], 0.5, basis=U * 1.01)
        with pytest.raises(ValueError):
            make_model(6, 2, [3.0, 1.0], 0.5, basis=U[:, :1])

    def test_immutable(self):
        m = make_model(5, 2, [1.0, 2.0], 0.1)
        with pytest.raises(Exception):
            m.d = 6
        with pytest.raises(ValueError):
            m.lambdas[0] = 5.0

    def test_variance_classes(self):
        m = make_model(8, 3, [2.0, 5.0, 2.0], 0.5)
        vals, counts = m.variance_classes()
        np.testing.assert_array_equal(vals, [2.5, 5.5, 0.5])
        np.testing.assert_array_equal(counts, [2, 1, 5])
        z = np.arange(8.0)
        q = m.class_energies(z)[0]
        np.testing.assert_allclose(q, [0 + 4, 1, 9 + 16 + 25 + 36 + 49])

    def test_class_energies_explicit_basis(self):
        U = random_basis(7, 2, seed=3)
        m = make_model(7, 2, [4.0, 4.0], 0.2, basis=U)
        z = np.random.default_rng(1).standard_normal((3, 7))
        q = m.class_energies(z)
        np.testing.assert_allclose(q.sum(axis=1), (z * z).sum(axis=1))
        np.testing.assert_allclose(q[:, 0], ((z @ U) ** 2).sum(axis=1))


class TestSampling:
    def test_endpoints(self):
        m = make_model(5, 2, [3.0, 1.0], 0.2)
        b0 = sample_batch(m, 50, 0.0, seed=1)
        np.testing.assert_array_equal(b0.z, b0.eps)
        b1 = sample_batch(m, 50, 1.0, seed=1)
        np.testing.assert_array_equal(b1.z, b1.x)

    def test_derived_fields(self):
        m = make_model(5, 2, [3.0, 1.0], 0.2)
        b = sample_batch(m, 200, TimeInterval(), seed=4)
        np.testing.assert_allclose(b.z, (1 - b.t)[:, None] * b.eps + b.t[:, None] * b.x, rtol=0, atol=1e-15)
        np.testing.assert_array_equal(b.u, b.x - b.eps)
        assert np.all((b.t >= 0) & (b.t <= 1))

    def test_deterministic_and_chunk_invariant(self):
        m = make_model(6, 1, [2.0], 0.3)
        a = sample_batch(m, 10_000, TimeInterval(0.2, 0.7), seed=11)
        b = sample_batch(m, 10_000, TimeInterval(0.2, 0.7), seed=11)
        np.testing.assert_array_equal(a.z, b.z)
        streamed = np.concatenate([c.z for c in iter_batches(m, 10_000, TimeInterval(0.2, 0.7), 11)])
        np.testing.assert_array_equal(a.z, streamed)
        c = sample_batch(m, 10_000, TimeInterval(0.2, 0.7), seed=12)
        assert not np.array_equal(a.z, c.z)

    def test_residual_variance_at_half(self):
        m = make_model(100, 10, np.linspace(1, 10, 10), 0.1)
        b = sample_batch(m, 100_000, 0.5, seed=3)
        var = b.z[:, 10:].var(axis=0)
        assert np.all(np.abs(var - 0.275) < 0.005)

    def test_data_covariance_explicit_basis(self):
        U = random_basis(6, 2, seed=5)
        m = make_model(6, 2, [4.0, 1.0], 0.25, basis=U)
        x = m.sample_data(200_000, np.random.default_rng(0))
        target = U @ np.diag([4.0, 1.0]) @ U.T + 0.25 * np.eye(6)
        np.testing.assert_allclose(np.cov(x.T), target, atol=0.05)

    @pytest.mark.parametrize("sigma2,t", [(0.1, 0.3), (0.5, 0.8), (2.0, 0.05)])
    def test_clock_matches_empirical_variance(self, sigma2, t):
        m = make_model(40, 5, np.full(5, 3.0), sigma2)
        b = sample_batch(m, 100_000, t, seed=9)
        res = b.z[:, 5:]
        N = res.size
        value, _ = clock_eval(sigma2, t)
        emp = np.mean(res * res)
        assert abs(emp - value) < 3 * value * np.sqrt(2.0 / N)


class TestClock:
    def test_examples(self):
        assert clock_eval(0.1, 0.0) == (1.0, -2.0)
        v, dv = clock_eval(0.1, 1.0)
        assert v == pytest.approx(0.1, abs=1e-15) and dv == pytest.approx(0.2, abs=1e-15)
        v, dv = clock_eval(0.1, 0.5)
        assert v == pytest.approx(0.275, abs=1e-15) and dv == pytest.approx(-0.9, abs=1e-15)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(1e-3, 10.0), st.floats(1e-5, 1 - 1e-5))
    def test_derivative_is_finite_difference(self, sigma2, t):
        h = 1e-6
        fd = (clock_eval(sigma2, t + h)[0] - clock_eval(sigma2, t - h)[0]) / (2 * h)
        assert abs(fd - clock_eval(sigma2, t)[1]) < 1e-6

    @pytest.mark.parametrize("sigma2,expected,tol", [(0.1, 0.9090, 1e-4), (0.0064, 0.9937, 1e-4), (1.0, 0.5, 0)])
    def test_critical_point(self, sigma2, expected, tol):
        ts = critical_point(sigma2)
        assert abs(ts - expected) <= tol
        assert abs(clock_eval(sigma2, ts)[1]) < 1e-12

    @settings(max_examples=100, deadline=None)
    @given(st.floats(1e-3, 10.0))
    def test_clock_monotone_on_each_side(self, sigma2):
        ts = critical_point(sigma2)
        grid = np.linspace(0, 1, 2001)
        v, dv = clock_eval(sigma2, grid)
        assert np.all(dv[grid < ts] < 0) and np.all(dv[grid > ts] > 0)
        left = grid < ts
        assert np.all(np.diff(v[left]) < 0)
        assert np.all(np.diff(v[~left]) > 0)

    def test_critical_point_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            critical_point(0.0)


class TestCoordinateStats:
    def test_examples(self):
        _, r, a = coordinate_stats(np.array([1.0]), 0.5)
        assert r[0] == 0.5 and a[0] == 0.0
        _, r, a = coordinate_stats(np.array([0.1]), 0.0)
        assert r[0] == 1.0 and a[0] == -1.0
        _, r, a = coordinate_stats(np.array([10.01]), 0.9)
        assert r[0] == pytest.approx(8.1181, abs=1e-12)
        assert a[0] == pytest.approx((9.009 - 0.1) / 8.1181, abs=1e-12)
        assert a[0] == pytest.approx(1.0973, abs=5e-4)

    def test_slope_is_least_squares(self):
        # regression of u_i on z_i over 1e6 draws
        m = make_model(3, 1, [9.99], 0.01)
        S, r, alpha = coordinate_stats(m, 0.9)
        b = sample_batch(m, 1_000_000, 0.9, seed=2)
        for i in range(3):
            z, u = b.z[:, i], b.u[:, i]
            slope = np.dot(z, u) / np.dot(z, z)
            resid = u - slope * z
            se = np.sqrt(np.mean(resid**2) / np.dot(z, z))
            assert abs(slope - alpha[i]) < max(3 * se, 1e-12)
        assert abs(np.dot(b.z[:, 0], b.u[:, 0]) / np.dot(b.z[:, 0], b.z[:, 0]) - 1.0973) < 1e-2


class TestTermOne:
    def test_examples(self):
        assert term_one(make_model(4, 0, [], 1.0)) == 8.0
        assert term_one(make_model(4, 2, [9.99, 9.99], 0.01)) == pytest.approx(24.02, abs=1e-12)
        assert term_one(equal_spikes(1024, 64, 10.0, 0.01)) == pytest.approx(1673.6, abs=1e-9)

    def test_matches_monte_carlo(self):
        m = equal_spikes(1024, 64, 10.0, 0.01)
        sq = np.concatenate([(c.u**2).sum(axis=1) for c in iter_batches(m, 100_000, TimeInterval(), 5)])
        se = sq.std(ddof=1) / np.sqrt(sq.size)
        assert abs(sq.mean() - 1673.6) < 3 * se
        assert abs(sq.mean() / 1673.6 - 1) < 0.01
