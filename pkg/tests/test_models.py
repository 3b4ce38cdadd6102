import numpy as np
import pytest

import semigrad as sg
from semigrad.errors import Degenerate, DimensionMismatch
from semigrad.models import (apply_coeff, apply_right_inverse,
                             axis_from_skew, check_directional_derivative,
                             make_flat_model, right_inverse, rotation_exp,
                             sample_directions, sample_points, skew_from_axis,
                             with_fd_derivatives)

from conftest import make_sine_noise_model


class TestRightInverse:
    def test_identity_X(self, bm1):
        assert np.allclose(right_inverse(bm1, np.array([0.3])), [[1.0]])

    def test_scaled_X(self):
        model = sg.make_bm_model(1, sigma=2.0)
        assert np.allclose(right_inverse(model, np.array([0.0])), [[0.5]])

    def test_sphere_XY_is_tangent_projection(self, sphere):
        rng = np.random.default_rng(1)
        for _ in range(100):
            x = rng.standard_normal(3)
            x /= np.linalg.norm(x)
            v = rng.standard_normal(3)
            v -= np.dot(v, x) * x
            Xm = sphere.X(x[None])[0]
            Ym = right_inverse(sphere, x)
            assert np.allclose(Xm @ (Ym @ v), v, atol=1e-10)

    def test_computed_inverse_matches_pseudo(self):
        model = make_flat_model(1, 2, X=lambda x: np.broadcast_to(
            np.array([[1.0, 1.0]]), x.shape[:-1] + (1, 2)), Z=lambda x: 0 * x)
        Y = right_inverse(model, np.array([0.0]))
        assert np.allclose(Y, [[0.5], [0.5]])

    def test_degenerate_raises(self):
        model = make_flat_model(2, 2, X=lambda x: np.zeros(x.shape[:-1] + (2, 2)),
                                Z=lambda x: 0 * x)
        model.Y = None
        with pytest.raises(Degenerate):
            right_inverse(model, np.array([0.0, 0.0]))


class TestBuiltinIdentities:
    def test_right_inverse_identity_all_builtins(self, bm1, ou, circle, sphere, so3):
        rng = np.random.default_rng(4)
        for model in (bm1, ou, circle, sphere, so3):
            pts = sample_points(model, 20, seed=3)
            dirs = sample_directions(model, pts, seed=5)
            xv = apply_coeff(model, pts, apply_right_inverse(model, pts, dirs))
            assert np.max(np.abs(xv - dirs)) < 1e-10

    def test_coefficient_inverse_pair_nonlinear(self):
        model = make_sine_noise_model()
        x = np.linspace(-2, 2, 9)[:, None]
        u = np.ones((9, 1))
        v = np.full((9, 1), 0.7)
        # DX(u)(Y v) + X DY(u)(v) = 0
        yu = apply_right_inverse(model, x, v)
        t1 = np.einsum("bnm,bm->bn", model.DX(x, u), yu)
        t2 = np.einsum("bnm,bm->bn", model.X(x), model.DY(x, u, v))
        assert np.max(np.abs(t1 + t2)) < 1e-6

    @pytest.mark.parametrize("n", [2, 3])
    def test_gradient_system_identity(self, n):
        model = sg.make_gradient_sphere_model(n)
        rng = np.random.default_rng(7)
        pts = rng.standard_normal((100, n))
        pts /= np.linalg.norm(pts, axis=-1, keepdims=True)
        cols = model.X(pts)
        acc = np.zeros_like(pts)
        for i in range(n):
            acc += model.DX(pts, cols[..., i])[..., i]
        covariant = model.geometry.project_tangent(pts, acc)
        assert np.max(np.abs(covariant)) < 1e-10

    def test_declared_derivatives_match_fd(self, sphere, ou):
        for model in (sphere, ou):
            pts = sample_points(model, 16, seed=2)
            dirs = sample_directions(model, pts, seed=3)
            for i in range(model.m):
                col = lambda x, _i=i: model.X(x)[..., _i]
                dcol = lambda x, v, _i=i: model.DX(x, v)[..., _i]
                err, ok = check_directional_derivative(col, dcol, pts, dirs)
                assert ok, f"DX column {i} off by {err}"
            err, ok = check_directional_derivative(model.Z, model.DZ, pts, dirs)
            assert ok, f"DZ off by {err}"


class TestSphereModels:
    def test_circle_projection_at_east_point(self, circle):
        Xm = circle.X(np.array([[1.0, 0.0]]))[0]
        assert np.allclose(Xm @ np.array([1.0, 0.0]), [0.0, 0.0], atol=1e-15)
        assert np.allclose(Xm @ np.array([0.0, 1.0]), [0.0, 1.0], atol=1e-15)

    def test_sphere_ricci_unit_tangent(self, sphere):
        rng = np.random.default_rng(11)
        for _ in range(10):
            x = rng.standard_normal(3)
            x /= np.linalg.norm(x)
            v = rng.standard_normal(3)
            v -= np.dot(v, x) * x
            ric = sphere.geometry.ricci(x[None], v[None], v[None])[0]
            assert abs(ric - np.dot(v, v)) < 1e-12

    def test_too_small_dimension(self):
        with pytest.raises(DimensionMismatch):
            sg.make_gradient_sphere_model(1)

    def test_geodesic_stays_on_sphere(self, sphere):
        x = np.array([1.0, 0.0, 0.0])
        v = np.array([0.0, 1.0, 0.0])
        for s in (0.1, 0.5, 2.0):
            p = sphere.geometry.geodesic(x, v, s)
            assert abs(np.linalg.norm(p) - 1) < 1e-14
            assert np.allclose(p, [np.cos(s), np.sin(s), 0.0])


class TestSO3Model:
    def test_left_invariance(self, so3):
        rng = np.random.default_rng(2)
        for _ in range(5):
            g = rotation_exp(rng.standard_normal(3))
            h = rotation_exp(rng.standard_normal(3))
            Xh = so3.X(h.reshape(1, 9))[0]        # (9, 3)
            Xgh = so3.X((g @ h).reshape(1, 9))[0]
            left = np.stack([(g @ Xh[:, i].reshape(3, 3)).reshape(-1)
                             for i in range(3)], axis=-1)
            assert np.allclose(Xgh, left, atol=1e-12)

    def test_ad_preserves_algebra_norm(self, so3):
        rng = np.random.default_rng(3)
        for _ in range(10):
            g = rotation_exp(rng.standard_normal(3)).reshape(-1)
            xi = rng.standard_normal(3)
            ad = so3.ad_inverse(g[None], xi)[0]
            assert abs(np.linalg.norm(ad) - np.linalg.norm(xi)) < 1e-10

    def test_exp_is_rotation(self):
        w = np.array([0.3, -1.2, 0.4])
        R = rotation_exp(w)
        assert np.allclose(R.T @ R, np.eye(3), atol=1e-14)
        assert abs(np.linalg.det(R) - 1) < 1e-12

    def test_skew_axis_round_trip(self):
        w = np.array([0.5, -0.2, 1.1])
        assert np.allclose(axis_from_skew(skew_from_axis(w)), w)

    def test_group_metric_normalizes_frame(self, so3):
        g = np.eye(3).reshape(1, 9)
        Xm = so3.X(g)
        for i in range(3):
            col = Xm[..., i]
            assert abs(so3.metric_dot(g, col, col)[0] - 1.0) < 1e-12

    def test_retract_polar(self, so3):
        g = (np.eye(3) + 0.05 * np.arange(9).reshape(3, 3) / 10).reshape(1, 9)
        r = so3.geometry.retract(g).reshape(3, 3)
        assert np.allclose(r.T @ r, np.eye(3), atol=1e-12)

    def test_invalid_scale(self):
        with pytest.raises(DimensionMismatch):
            sg.make_so3_model(0.0)


class TestSupport:
    def test_flat_model_validates_shapes(self):
        with pytest.raises(DimensionMismatch):
            make_flat_model(2, 1, X=lambda x: np.ones(x.shape[:-1] + (1, 1)),
                            Z=lambda x: 0 * x)

    def test_fd_fallback_close_and_flagged(self):
        exact = make_sine_noise_model()
        bare = make_flat_model(1, 1, X=exact.X, Z=exact.Z)
        fd = with_fd_derivatives(bare)
        assert fd.fd_derivatives
        x = np.array([[0.4]])
        v = np.array([[1.0]])
        assert np.allclose(fd.DX(x, v), exact.DX(x, v), atol=1e-7)
        assert np.allclose(fd.DZ(x, v), exact.DZ(x, v), atol=1e-7)

    def test_sampling_deterministic(self, sphere, bm1):
        for model in (sphere, bm1):
            a = sample_points(model, 8, seed=4)
            b = sample_points(model, 8, seed=4)
            assert np.array_equal(a, b)

    def test_observable_wrapper(self):
        obs = sg.as_observable(lambda x: x[..., 0])
        assert obs(np.array([[2.0]]))[0] == 2.0

    def test_registry_observable_gradients_match_fd(self):
        # declared df callbacks agree with central differences of f
        rng = np.random.default_rng(9)
        for sid in ("bm1d", "ou1d", "circle", "sphere3", "so3"):
            sc = sg.get_scenario(sid)
            model = sc.make()
            pts = sample_points(model, 8, seed=1)
            dirs = sample_directions(model, pts, seed=2)
            for obs in sc.observables.values():
                if obs.df is None:
                    continue
                dfn = lambda x, v, _o=obs: np.einsum("bn,bn->b", _o.df(x), v)
                err, ok = check_directional_derivative(obs.f, dfn, pts, dirs)
                assert ok, f"{sid}/{obs.name}: df off by {err}"
