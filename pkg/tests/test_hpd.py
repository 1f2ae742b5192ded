import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from riemdoa import hpd
from riemdoa.errors import (DimensionMismatch, EmptyInput, InvalidIndex, NoConvergence, NoConvergenceWarning,
                            NotCommuting, NotHermitian, NotPositiveDefinite)
from riemdoa.verify import random_commuting_set, random_hpd


def _invertible(rng, m):
    return rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m)) + 2 * np.eye(m)


@st.composite
def hpd_sets(draw, min_k=1, max_k=6):
    seed = draw(st.integers(0, 2 ** 32 - 1))
    m = draw(st.integers(2, 6))
    k = draw(st.integers(min_k, max_k))
    rng = np.random.default_rng(seed)
    return [random_hpd(rng, m, cond=10 ** rng.uniform(0, 3)) for _ in range(k)], rng


class TestValidation:
    def test_rejects_non_hermitian(self):
        with pytest.raises(NotHermitian):
            hpd.check_hpd(np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_rejects_indefinite(self):
        with pytest.raises(NotPositiveDefinite):
            hpd.check_hpd(np.diag([1.0, -1.0]))

    def test_loading_rescues_singular(self):
        g = hpd.check_hpd(np.zeros((2, 2)), loading=1e-3)
        assert np.allclose(g, 1e-3 * np.eye(2))

    def test_rejects_non_square(self):
        with pytest.raises(DimensionMismatch):
            hpd.check_hpd(np.ones((2, 3)))


class TestMatrixFunctions:
    def test_log_identity_is_zero(self):
        assert np.allclose(hpd.hpd_matrix_function(np.eye(4), "log"), 0)

    def test_sqrt_diagonal(self):
        assert np.allclose(hpd.hpd_matrix_function(np.diag([4.0, 9.0]), "sqrt"), np.diag([2.0, 3.0]))

    def test_inv_sqrt_whitens(self, rng):
        g = random_hpd(rng, 5)
        r = hpd.hpd_matrix_function(g, "inv_sqrt")
        assert np.allclose(r @ g @ r, np.eye(5), atol=1e-10)

    def test_exp_of_tangent_inverts_log(self, rng):
        g = random_hpd(rng, 4)
        assert np.allclose(hpd.hpd_matrix_function(hpd.logm(g), "exp_of_tangent"), g, atol=1e-10)

    def test_results_are_hermitian(self, rng):
        g = random_hpd(rng, 6, cond=1e6)
        for fn in ("sqrt", "inv_sqrt", "log"):
            out = hpd.hpd_matrix_function(g, fn)
            assert np.array_equal(out, out.conj().T)

    def test_log_of_indefinite_fails(self):
        with pytest.raises(NotPositiveDefinite):
            hpd.logm(np.diag([1.0, 0.0]))


class TestDistances:
    def test_zero_on_identical(self, rng):
        g = random_hpd(rng, 4)
        assert hpd.distance_riemann(g, g) == pytest.approx(0, abs=1e-12)
        assert hpd.distance_logeuclid(g, g) == pytest.approx(0, abs=1e-12)

    def test_diagonal_closed_form(self):
        a, b = np.array([1.0, 2.0, 5.0]), np.array([3.0, 0.5, 5.0])
        want = np.sqrt(np.sum(np.log(a / b) ** 2))
        assert hpd.distance_riemann(np.diag(a), np.diag(b)) == pytest.approx(want, rel=1e-12)
        assert hpd.distance_logeuclid(np.diag(a), np.diag(b)) == pytest.approx(want, rel=1e-12)

    def test_affine_invariance(self, rng):
        a, b = random_hpd(rng, 5), random_hpd(rng, 5)
        t = _invertible(rng, 5)
        got = hpd.distance_riemann(t.conj().T @ a @ t, t.conj().T @ b @ t)
        assert got == pytest.approx(hpd.distance_riemann(a, b), abs=1e-9)

    def test_logeuclid_matches_direct_logs(self, rng):
        a, b = random_hpd(rng, 4), random_hpd(rng, 4)
        from scipy.linalg import logm
        want = np.linalg.norm(logm(a) - logm(b))
        assert hpd.distance_logeuclid(a, b) == pytest.approx(want, rel=1e-9)

    def test_dimension_mismatch(self, rng):
        with pytest.raises(DimensionMismatch):
            hpd.distance_riemann(np.eye(2), np.eye(3))

    @given(hpd_sets(min_k=2, max_k=2))
    def test_symmetric(self, data):
        (a, b), _ = data
        assert hpd.distance_riemann(a, b) == pytest.approx(hpd.distance_riemann(b, a), rel=1e-9, abs=1e-12)


class TestLogExpMaps:
    def test_log_at_self_is_zero(self, rng):
        g = random_hpd(rng, 4)
        assert np.allclose(hpd.log_map(g, g), 0, atol=1e-12)

    def test_identity_base(self, rng):
        g = random_hpd(rng, 4)
        assert np.allclose(hpd.log_map(np.eye(4), g), hpd.logm(g), atol=1e-12)
        t = hpd.logm(g)
        assert np.allclose(hpd.exp_map(np.eye(4), t), g, atol=1e-10)

    def test_exp_of_zero(self, rng):
        g = random_hpd(rng, 3)
        assert np.allclose(hpd.exp_map(g, np.zeros((3, 3))), g, atol=1e-12)

    def test_norm_matches_distance(self, rng):
        a, b = random_hpd(rng, 5), random_hpd(rng, 5)
        isq = hpd.invsqrtm(a)
        got = np.linalg.norm(isq @ hpd.log_map(a, b) @ isq)
        assert got == pytest.approx(hpd.distance_riemann(a, b), abs=1e-9)

    @given(hpd_sets(min_k=2, max_k=2))
    def test_round_trip(self, data):
        (a, b), _ = data
        assert np.allclose(hpd.exp_map(a, hpd.log_map(a, b)), b, atol=1e-9 * np.linalg.norm(b))

    def test_round_trip_tangent(self, rng):
        a = random_hpd(rng, 4)
        x = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        t = hpd.hermitian_part(x)
        assert np.allclose(hpd.log_map(a, hpd.exp_map(a, t)), t, atol=1e-9)


class TestKarcherMean:
    def test_identical_copies(self, rng):
        g = random_hpd(rng, 4)
        assert np.allclose(hpd.karcher_mean([g] * 5), g, atol=1e-10)

    def test_two_point_midpoint(self, rng):
        a, b = random_hpd(rng, 5), random_hpd(rng, 5)
        sa, isa = hpd.sqrtm(a), hpd.invsqrtm(a)
        mid = sa @ hpd.sqrtm(isa @ b @ isa) @ sa
        assert np.linalg.norm(hpd.karcher_mean([a, b]) - mid) < 1e-8

    def test_matches_commuting_mean(self, rng):
        ms, _ = random_commuting_set(rng, 6, 5, cond=1e4)
        assert np.linalg.norm(hpd.karcher_mean(ms) - hpd.commuting_mean(ms)) < 1e-8

    def test_reports_iterations(self, rng):
        ms = [random_hpd(rng, 4) for _ in range(3)]
        _, info = hpd.karcher_mean(ms, return_info=True)
        assert info.converged and info.n_iter >= 1 and info.residual < 1e-9

    def test_empty_input(self):
        with pytest.raises(EmptyInput):
            hpd.karcher_mean([])

    def test_no_convergence_flag(self, rng):
        ms = [random_hpd(rng, 4, cond=1e4) for _ in range(4)]
        cfg = hpd.MeanConfig(tolerance=1e-15, max_iterations=1)
        with pytest.raises(NoConvergence) as exc:
            hpd.karcher_mean(ms, cfg, strict=True)
        assert exc.value.mean is not None and exc.value.n_iter == 1
        with warnings.catch_warnings(record=True) as w:
            warnings.simplefilter("always")
            g, info = hpd.karcher_mean(ms, cfg, return_info=True)
        assert not info.converged
        assert any(issubclass(x.category, NoConvergenceWarning) for x in w)
        hpd.check_hpd(g)

    def test_widely_spread_inputs_converge(self, rng):
        # the plain unit-step iteration oscillates on inputs like these
        ms = [random_hpd(rng, 6, cond=1e8) for _ in range(5)]
        _, info = hpd.karcher_mean(ms, return_info=True)
        assert info.converged

    def test_scale_equivariance(self, rng):
        ms = [random_hpd(rng, 4) for _ in range(3)]
        g = hpd.karcher_mean(ms)
        assert np.allclose(hpd.karcher_mean([1e6 * m for m in ms]), 1e6 * g, rtol=1e-8)

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            hpd.MeanConfig(tolerance=0)
        with pytest.raises(ValueError):
            hpd.MeanConfig(max_iterations=0)


class TestOtherMeans:
    def test_euclidean_simple(self):
        got = hpd.euclidean_mean([np.eye(2), 3 * np.eye(2)])
        assert np.allclose(got, 2 * np.eye(2))

    def test_log_euclidean_identical(self, rng):
        g = random_hpd(rng, 4)
        assert np.allclose(hpd.log_euclidean_mean([g, g, g]), g, atol=1e-10)

    def test_log_euclidean_commuting(self, rng):
        ms, _ = random_commuting_set(rng, 5, 4)
        assert np.linalg.norm(hpd.log_euclidean_mean(ms) - hpd.commuting_mean(ms)) < 1e-8

    def test_commuting_mean_diagonal(self):
        got = hpd.commuting_mean([np.diag([1.0, 4.0]), np.diag([4.0, 1.0])])
        assert np.allclose(got, 2 * np.eye(2))

    def test_commuting_mean_identical(self, rng):
        g = random_hpd(rng, 3)
        assert np.allclose(hpd.commuting_mean([g] * 4), g, atol=1e-10)

    def test_commuting_mean_eigenvalue_oracle(self, rng):
        ms, q = random_commuting_set(rng, 5, 3)
        eig = np.array([np.real(np.diag(q.conj().T @ m @ q)) for m in ms])
        want = np.exp(np.log(eig).mean(axis=0))
        got = np.real(np.diag(q.conj().T @ hpd.commuting_mean(ms) @ q))
        assert np.allclose(got, want, rtol=1e-10)

    def test_commuting_mean_rejects(self, rng):
        with pytest.raises(NotCommuting):
            hpd.commuting_mean([random_hpd(rng, 3), random_hpd(rng, 3)])


class TestMeanProperties:
    @given(hpd_sets(min_k=2))
    def test_loewner_order(self, data):
        ms, _ = data
        gap = hpd.euclidean_mean(ms) - hpd.karcher_mean(ms)
        assert np.linalg.eigvalsh(gap).min() >= -1e-8 * np.linalg.norm(gap, 2) - 1e-8

    @given(hpd_sets(min_k=2))
    def test_trace_chain(self, data):
        ms, _ = data
        tr = lambda g: np.real(np.trace(g))
        r = tr(hpd.karcher_mean(ms))
        assert r <= tr(hpd.log_euclidean_mean(ms)) * (1 + 1e-10) + 1e-8
        assert r <= tr(hpd.euclidean_mean(ms)) * (1 + 1e-10) + 1e-8

    @given(hpd_sets(min_k=2))
    def test_congruence_invariance(self, data):
        ms, rng = data
        t = _invertible(rng, ms[0].shape[0])
        lhs = hpd.karcher_mean([t.conj().T @ m @ t for m in ms])
        rhs = t.conj().T @ hpd.karcher_mean(ms) @ t
        assert np.linalg.norm(lhs - rhs) <= 1e-7 * np.linalg.norm(rhs)

    @given(hpd_sets(min_k=2))
    def test_permutation_invariance(self, data):
        ms, rng = data
        perm = [ms[i] for i in rng.permutation(len(ms))]
        for fn in (hpd.karcher_mean, hpd.euclidean_mean, hpd.log_euclidean_mean):
            a, b = fn(ms), fn(perm)
            assert np.linalg.norm(a - b) <= 1e-9 * np.linalg.norm(a)

    @given(st.integers(0, 2 ** 32 - 1))
    def test_common_eigenvector_eigenvalue(self, seed):
        rng = np.random.default_rng(seed)
        m = 5
        h = rng.standard_normal(m) + 1j * rng.standard_normal(m)
        lam0 = float(rng.uniform(0.5, 5))
        proj = np.eye(m) - np.outer(h, h.conj()) / np.vdot(h, h).real
        ms = []
        for _ in range(4):
            rest = proj @ random_hpd(rng, m) @ proj
            ms.append(hpd.hermitian_part(rest + lam0 * np.outer(h, h.conj()) / np.vdot(h, h).real))
        for fn in (hpd.karcher_mean, hpd.log_euclidean_mean, hpd.euclidean_mean):
            got = np.real(np.vdot(h, fn(ms) @ h))
            assert got == pytest.approx(np.vdot(h, h).real * lam0, rel=1e-8)


class TestStreaming:
    def test_first_update_returns_observation(self, rng):
        g = random_hpd(rng, 3)
        assert np.array_equal(hpd.streaming_riemannian_update(np.eye(3), g, 1), g)

    def test_constant_stream(self, rng):
        g = random_hpd(rng, 3)
        r = np.eye(3)
        for i in range(1, 6):
            r = hpd.streaming_riemannian_update(r, g, i)
        assert np.allclose(r, g, atol=1e-10)

    def test_commuting_stream_matches_closed_form(self, rng):
        ms, _ = random_commuting_set(rng, 4, 7)
        est = hpd.RecursiveRiemannianMean(4)
        for m in ms:
            est.update(m)
        assert np.linalg.norm(est.mean - hpd.commuting_mean(ms)) < 1e-8

    def test_invalid_index(self):
        with pytest.raises(InvalidIndex):
            hpd.streaming_riemannian_update(np.eye(2), np.eye(2), 0)

    def test_euclidean_first_and_constant(self, rng):
        z = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        zz = np.outer(z, z.conj())
        assert np.allclose(hpd.streaming_euclidean_update(np.zeros((3, 3)), zz, 1), zz)
        e = zz
        for n in range(2, 6):
            e = hpd.streaming_euclidean_update(e, zz, n)
        assert np.allclose(e, zz)

    def test_euclidean_matches_batch(self, rng):
        zs = rng.standard_normal((40, 4)) + 1j * rng.standard_normal((40, 4))
        est = hpd.RunningEuclideanMean()
        for z in zs:
            est.update_frame(z)
        batch = np.mean([np.outer(z, z.conj()) for z in zs], axis=0)
        assert np.linalg.norm(est.mean - batch) < 1e-12 * np.linalg.norm(batch) * 10

    def test_euclidean_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            hpd.streaming_euclidean_update(np.eye(2), np.eye(3), 2)


class TestSerialization:
    def test_round_trip(self, rng):
        g = random_hpd(rng, 4)
        d = hpd.to_json_dict(g)
        assert d["dim"] == 4 and len(d["re"]) == 4
        assert np.array_equal(hpd.loads(hpd.dumps(g)), g)

    def test_bad_dim(self):
        with pytest.raises(DimensionMismatch):
            hpd.from_json_dict({"dim": 3, "re": [[1.0]], "im": [[0.0]]})
