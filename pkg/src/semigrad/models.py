"""Diffusion scenarios: coefficient fields, derivatives, and geometry.

All coefficient callbacks are batched: a point argument has shape (B, n)
and outputs carry the leading batch axis (X -> (B, n, m), drifts -> (B, n),
scalars -> (B,)).  Derivatives are directional: DX(x, v) is the derivative
of X at x in direction v, D2X(x, u, v) the second derivative, and so on.
Models built from non-vectorized user callbacks can be adapted with
``vectorize_pointwise``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .errors import Degenerate, DimensionMismatch, MissingDerivative, ZeroDirection

_RIGHT_INVERSE_COND_TOL = 1e-12


def make_dot(n):
    """Batched ambient dot product specialized for small fixed n."""
    if n == 1:
        return lambda a, b: a[..., 0] * b[..., 0]
    if n == 2:
        return lambda a, b: a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1]
    if n == 3:
        return lambda a, b: (a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1]
                             + a[..., 2] * b[..., 2])
    return lambda a, b: np.einsum("...n,...n->...", a, b)


@dataclass
class ManifoldGeometry:
    """Extrinsic description of a constraint manifold embedded in R^n.

    ``constraint`` returns residuals that vanish on the manifold;
    ``project_tangent`` is the orthogonal projection onto the tangent space;
    ``retract`` maps nearby ambient points back onto the manifold.  The
    optional callbacks extend the interface for curvature (``ricci``,
    ``ricci_op``), non-Euclidean metrics (``metric_dot``), group-specific
    integration steps (``step``), second-variation bookkeeping
    (``dproject``, ``transport_init``), geodesics, and quasi-random sampling.
    """

    constraint: Callable
    project_tangent: Callable
    retract: Callable
    ricci: Optional[Callable] = None          # (x, u, v) -> (B,)
    ricci_op: Optional[Callable] = None       # (x, w) -> (B, n)
    metric_dot: Optional[Callable] = None     # (x, u, v) -> (B,); None = ambient dot
    step: Optional[Callable] = None           # (x, dW, dt) -> (B, n)
    dproject: Optional[Callable] = None       # (x, u, z) -> (B, n)
    transport_init: Optional[Callable] = None  # (x, u, v) -> (B, n)
    geodesic: Optional[Callable] = None       # (x, v, s) -> point(s)
    sample: Optional[Callable] = None         # (count, seed) -> (count, n)


@dataclass
class DiffusionModel:
    """Coefficient bundle for one SDE scenario dx = X(x) dB + drift dt.

    Either the Ito drift ``Z`` or the Stratonovich drift ``A`` (with ``DX``)
    must be supplied.  ``Y`` is a right inverse of X on the tangent space;
    when omitted it is computed pointwise from X.  ``hess_h`` is the
    covariant derivative of the drift vector field for h-Brownian systems
    (zero when ``h`` is identically zero), used by the Hessian flow.
    """

    n: int
    m: int
    X: Callable
    A: Optional[Callable] = None
    Z: Optional[Callable] = None
    DX: Optional[Callable] = None       # (x, v) -> (B, n, m)
    D2X: Optional[Callable] = None      # (x, u, v) -> (B, n, m)
    DZ: Optional[Callable] = None       # (x, v) -> (B, n)
    D2Z: Optional[Callable] = None      # (x, u, v) -> (B, n)
    Y: Optional[Callable] = None        # x -> (B, m, n)
    DY: Optional[Callable] = None       # (x, u, v) -> (B, m)
    h: Optional[Callable] = None        # x -> (B,)
    grad_h: Optional[Callable] = None   # x -> (B, n)
    hess_h: Optional[Callable] = None   # (x, w) -> (B, n)
    geometry: Optional[ManifoldGeometry] = None
    kind: str = "custom"
    gradient_system: bool = False
    h_brownian: bool = False
    blow_up_radius: float = 1e8
    fd_derivatives: bool = False
    domain: tuple = (-2.0, 2.0)         # per-coordinate sampling box (flat models)
    # optional fused applications, avoiding per-step matrix construction:
    apply_X: Optional[Callable] = None   # (x, e) -> X(x) e
    apply_DX: Optional[Callable] = None  # (x, v, e) -> DX(x)(v) e
    apply_D2X: Optional[Callable] = None  # (x, u, v, e) -> D2X(x)(u, v) e
    apply_Y: Optional[Callable] = None   # (x, v) -> Y(x) v

    def right_inverse_at(self, x):
        return right_inverse(self, x)

    def metric_dot(self, x, u, v):
        """Riemannian inner product of two (tangent) vectors, batched."""
        if self.geometry is not None and self.geometry.metric_dot is not None:
            return self.geometry.metric_dot(x, u, v)
        return make_dot(self.n)(u, v)

    def require(self, *names):
        for name in names:
            if getattr(self, name) is None:
                raise MissingDerivative(f"model does not supply {name}")


@dataclass
class LieGroupModel(DiffusionModel):
    """Left-invariant system on a matrix group, states stored flattened.

    The frame at a group element g is the left translate of an orthonormal
    Lie-algebra basis scaled by ``noise_scale``; integration uses the exact
    exponential update g exp(scale * dB^a E_a + drift dt).
    """

    group_dim: int = 3
    mat_dim: int = 3
    noise_scale: float = 1.0
    algebra_basis: Optional[np.ndarray] = None  # (group_dim, mat_dim, mat_dim)
    algebra_drift: Optional[np.ndarray] = None  # (group_dim,)

    def ad_inverse(self, g_flat, v_alg):
        """Ad(g^-1) applied to algebra coordinates; for SO(3) this is g^T v."""
        g = g_flat.reshape(g_flat.shape[:-1] + (self.mat_dim, self.mat_dim))
        return np.einsum("...ji,j->...i", g, np.asarray(v_alg, dtype=float))


@dataclass(frozen=True)
class ScalarObservable:
    """A scalar test function with optional declared derivatives."""

    f: Callable                       # (B, n) -> (B,)
    df: Optional[Callable] = None     # (B, n) -> (B, n), ambient gradient
    hess: Optional[Callable] = None   # (x, u, v) -> (B,)
    bound: Optional[float] = None
    name: str = ""

    def __call__(self, x):
        return self.f(x)


def as_observable(f, name="") -> ScalarObservable:
    if isinstance(f, ScalarObservable):
        return f
    return ScalarObservable(f=f, name=name or getattr(f, "__name__", ""))


@dataclass(frozen=True)
class PotentialField:
    """Zero-order term V(t, x) with spatial derivative and declared bound."""

    V: Callable                      # (t, x) -> (B,)
    dV: Optional[Callable] = None    # (t, x) -> (B, n)
    upper_bound: float = np.inf
    name: str = ""


@dataclass(frozen=True)
class TimeDependentCoefficients:
    """Time-dependent coefficient callbacks (t, x[, v]) for the potential estimator."""

    X: Callable                       # (t, x) -> (B, n, m)
    Z: Callable                       # (t, x) -> (B, n)
    DX: Optional[Callable] = None     # (t, x, v) -> (B, n, m)
    DZ: Optional[Callable] = None     # (t, x, v) -> (B, n)
    Y: Optional[Callable] = None      # (t, x) -> (B, m, n)


def vectorize_pointwise(fn, out_shape=None):
    """Wrap a single-point callback so it accepts (B, n) batches (slow path)."""

    def wrapped(x, *args):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return np.asarray(fn(x, *args), dtype=float)
        rows = [np.asarray(fn(x[i], *(a[i] for a in args)), dtype=float)
                for i in range(x.shape[0])]
        return np.stack(rows, axis=0)

    return wrapped


def apply_coeff(model: DiffusionModel, x, e) -> np.ndarray:
    """X(x) applied to a noise vector, fused when the model provides it."""
    if model.apply_X is not None:
        return model.apply_X(x, e)
    return np.einsum("bnm,bm->bn", model.X(x), e)


def apply_right_inverse(model: DiffusionModel, x, v) -> np.ndarray:
    """Y(x) applied to a tangent vector, fused when the model provides it."""
    if model.apply_Y is not None:
        return model.apply_Y(x, v)
    if model.Y is None:
        raise MissingDerivative("model has no right inverse Y")
    return np.einsum("bmn,bn->bm", model.Y(x), v)


def right_inverse(model: DiffusionModel, x) -> np.ndarray:
    """Right inverse Y(x) of X(x): X Y = identity on the tangent space.

    Uses the declared Y when present; otherwise computes
    X^T (X X^T)^(-1) with a condition guard.
    """
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    xb = x[None, :] if squeeze else x
    if model.Y is not None:
        out = model.Y(xb)
    else:
        Xm = model.X(xb)  # (B, n, m)
        gram = np.einsum("bnm,bkm->bnk", Xm, Xm)  # X X^T, (B, n, n)
        # guard: smallest singular value of the Gram matrix
        svals = np.linalg.svd(gram, compute_uv=False)
        if np.any(svals[..., -1] <= _RIGHT_INVERSE_COND_TOL * svals[..., 0]):
            raise Degenerate("X(x) X(x)^T is singular beyond tolerance")
        out = np.einsum("bnm,bnk->bmk", Xm, np.linalg.inv(gram))
    return out[0] if squeeze else out


# ---------------------------------------------------------------------------
# flat models


def make_flat_model(n, m, X, Z=None, *, A=None, DX=None, D2X=None, DZ=None,
                    D2Z=None, Y=None, DY=None, h=None, grad_h=None, hess_h=None,
                    h_brownian=False, domain=(-2.0, 2.0), kind="flat") -> DiffusionModel:
    """Assemble a flat-space model from batched coefficient callbacks."""
    model = DiffusionModel(n=n, m=m, X=X, A=A, Z=Z, DX=DX, D2X=D2X, DZ=DZ,
                           D2Z=D2Z, Y=Y, DY=DY, h=h, grad_h=grad_h,
                           hess_h=hess_h, kind=kind, h_brownian=h_brownian,
                           domain=domain)
    probe = np.zeros((1, n))
    Xm = np.asarray(model.X(probe))
    if Xm.shape != (1, n, m):
        raise DimensionMismatch(f"X returns shape {Xm.shape}, expected (1, {n}, {m})")
    if model.Y is None:
        model.Y = lambda x, _model=model: _default_right_inverse(_model, x)
    return model


def _default_right_inverse(model, x):
    Xm = model.X(x)
    gram = np.einsum("bnm,bkm->bnk", Xm, Xm)
    return np.einsum("bnm,bnk->bmk", Xm, np.linalg.inv(gram))


def _const_matrix_field(mat):
    mat = np.asarray(mat, dtype=float)

    def fn(x):
        return np.broadcast_to(mat, x.shape[:-1] + mat.shape)

    return fn


def make_bm_model(n=1, sigma=1.0) -> DiffusionModel:
    """Standard Brownian motion dx = sigma dB on R^n (h-Brownian with h = 0)."""
    eye = sigma * np.eye(n)
    inv = np.eye(n) / sigma
    zeros_vec = lambda x: np.zeros_like(x)
    model = make_flat_model(
        n, n,
        X=_const_matrix_field(eye),
        Z=zeros_vec,
        DX=lambda x, v: np.zeros(x.shape + (n,)),
        D2X=lambda x, u, v: np.zeros(x.shape + (n,)),
        DZ=lambda x, v: np.zeros_like(v),
        D2Z=lambda x, u, v: np.zeros_like(u),
        Y=_const_matrix_field(inv),
        DY=lambda x, u, v: np.zeros_like(u),
        h=lambda x: np.zeros(x.shape[:-1]),
        grad_h=zeros_vec,
        hess_h=lambda x, w: np.zeros_like(w),
        h_brownian=True,
        kind="bm",
        domain=(-3.0, 3.0),
    )
    if sigma == 1.0:
        model.apply_X = lambda x, e: e
        model.apply_Y = lambda x, v: v
    else:
        model.apply_X = lambda x, e: sigma * e
        model.apply_Y = lambda x, v: v / sigma
    model.apply_DX = lambda x, v, e: 0.0
    model.apply_D2X = lambda x, u, v, e: 0.0
    return model


def make_ou_model(rate=1.0) -> DiffusionModel:
    """Ornstein-Uhlenbeck dx = -rate * x dt + dB on R^1, h = -rate x^2 / 2."""
    r = float(rate)
    model = make_flat_model(
        1, 1,
        X=_const_matrix_field(np.eye(1)),
        Z=lambda x: -r * x,
        DX=lambda x, v: np.zeros(x.shape + (1,)),
        D2X=lambda x, u, v: np.zeros(x.shape + (1,)),
        DZ=lambda x, v: -r * v,
        D2Z=lambda x, u, v: np.zeros_like(u),
        Y=_const_matrix_field(np.eye(1)),
        DY=lambda x, u, v: np.zeros_like(u),
        h=lambda x: -0.5 * r * np.einsum("...n,...n->...", x, x),
        grad_h=lambda x: -r * x,
        hess_h=lambda x, w: -r * w,
        h_brownian=True,
        kind="ou",
        domain=(-3.0, 3.0),
    )
    model.apply_X = lambda x, e: e
    model.apply_Y = lambda x, v: v
    model.apply_DX = lambda x, v, e: 0.0
    model.apply_D2X = lambda x, u, v, e: 0.0
    return model


# ---------------------------------------------------------------------------
# sphere gradient systems


def _sphere_geometry(n) -> ManifoldGeometry:
    dot = make_dot(n)

    def constraint(x):
        return (dot(x, x) - 1.0)[..., None]

    def project(x, v):
        return v - dot(x, v)[..., None] * x

    def retract(x):
        return x / np.sqrt(dot(x, x))[..., None]

    def ricci(x, u, v):
        return (n - 2) * dot(u, v)

    def ricci_op(x, w):
        return (n - 2) * w

    def dproject(x, u, z):
        # derivative of v -> (I - x x^T) v in base direction u
        return -u * dot(x, z)[..., None] - x * dot(u, z)[..., None]

    def transport_init(x, u, v):
        # s-derivative at 0 of the parallel field v(s) along the geodesic from x with speed u
        return -dot(u, v)[..., None] * x

    def geodesic(x, v, s):
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        speed = np.linalg.norm(v)
        if speed == 0:
            return x.copy()
        return np.cos(s * speed) * x + np.sin(s * speed) * v / speed

    def sample(count, seed):
        rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
        pts = rng.standard_normal((count, n))
        return pts / np.linalg.norm(pts, axis=-1, keepdims=True)

    return ManifoldGeometry(constraint=constraint, project_tangent=project,
                            retract=retract, ricci=ricci, ricci_op=ricci_op,
                            dproject=dproject, transport_init=transport_init,
                            geodesic=geodesic, sample=sample)


def make_gradient_sphere_model(n) -> DiffusionModel:
    """Gradient Brownian system on the unit sphere S^(n-1) in R^n.

    X(x) is the tangent projection I - x x^T with m = n; the Ito drift of
    the ambient process is -(n-1)/2 * x.  The covariant drift vanishes
    (h = 0), so the generator is half the sphere Laplacian.
    """
    if n < 2:
        raise DimensionMismatch("sphere models need ambient dimension n >= 2")
    c = 0.5 * (n - 1)

    def X(x):
        eye = np.broadcast_to(np.eye(n), x.shape[:-1] + (n, n))
        return eye - x[..., :, None] * x[..., None, :]

    def DX(x, v):
        return -(v[..., :, None] * x[..., None, :] + x[..., :, None] * v[..., None, :])

    def D2X(x, u, v):
        return -(v[..., :, None] * u[..., None, :] + u[..., :, None] * v[..., None, :])

    model = DiffusionModel(
        n=n, m=n,
        X=X,
        A=lambda x: np.zeros_like(x),
        Z=lambda x: -c * x,
        DX=DX,
        D2X=D2X,
        DZ=lambda x, v: -c * v,
        D2Z=lambda x, u, v: np.zeros_like(u),
        Y=X,  # projection is self-adjoint idempotent, so Y = X^T = X
        h=lambda x: np.zeros(x.shape[:-1]),
        grad_h=lambda x: np.zeros_like(x),
        hess_h=lambda x, w: np.zeros_like(w),
        geometry=_sphere_geometry(n),
        kind="gradient_sphere" if n > 2 else "circle",
        gradient_system=True,
        h_brownian=True,
    )

    dot = make_dot(n)

    model.apply_X = lambda x, e: e - dot(x, e)[..., None] * x
    model.apply_Y = model.apply_X
    model.apply_DX = lambda x, v, e: -v * dot(x, e)[..., None] - x * dot(v, e)[..., None]
    model.apply_D2X = lambda x, u, v, e: -u * dot(v, e)[..., None] - v * dot(u, e)[..., None]
    return model


# ---------------------------------------------------------------------------
# SO(3) left-invariant model


SO3_BASIS = np.array([
    [[0.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]],
    [[0.0, 0.0, 1.0], [0.0, 0.0, 0.0], [-1.0, 0.0, 0.0]],
    [[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]],
])


def skew_from_axis(w):
    """Axis coordinates (..., 3) -> skew matrices (..., 3, 3)."""
    w = np.asarray(w, dtype=float)
    return np.einsum("...a,aij->...ij", w, SO3_BASIS)


def axis_from_skew(S):
    """Skew matrices (..., 3, 3) -> axis coordinates (..., 3)."""
    return np.stack([S[..., 2, 1], S[..., 0, 2], S[..., 1, 0]], axis=-1)


def rotation_exp(w):
    """Rodrigues formula: axis coordinates (..., 3) -> rotation matrices."""
    w = np.asarray(w, dtype=float)
    theta = np.linalg.norm(w, axis=-1)
    S = skew_from_axis(w)
    S2 = S @ S
    eye = np.broadcast_to(np.eye(3), S.shape)
    small = theta < 1e-8
    th = np.where(small, 1.0, theta)
    a = np.where(small, 1.0 - theta ** 2 / 6.0, np.sin(th) / th)
    b = np.where(small, 0.5 - theta ** 2 / 24.0, (1.0 - np.cos(th)) / th ** 2)
    return eye + a[..., None, None] * S + b[..., None, None] * S2


def _so3_geometry(scale) -> ManifoldGeometry:
    s2 = 2.0 * scale * scale

    def constraint(g):
        G = g.reshape(g.shape[:-1] + (3, 3))
        res = np.einsum("...ji,...jk->...ik", G, G) - np.eye(3)
        return res.reshape(g.shape[:-1] + (9,))

    def project(g, v):
        G = g.reshape(g.shape[:-1] + (3, 3))
        V = v.reshape(v.shape[:-1] + (3, 3))
        body = np.einsum("...ji,...jk->...ik", G, V)
        body = 0.5 * (body - np.swapaxes(body, -1, -2))
        return (G @ body).reshape(v.shape)

    def retract(g):
        G = g.reshape(g.shape[:-1] + (3, 3))
        u, _, vt = np.linalg.svd(G)
        R = u @ vt
        det = np.linalg.det(R)
        u = u.copy()
        u[..., :, -1] *= np.sign(det)[..., None]
        return (u @ vt).reshape(g.shape)

    def metric_dot(g, u, v):
        return np.einsum("...k,...k->...", u, v) / s2

    def ricci(g, u, v):
        return 0.5 * scale * scale * metric_dot(g, u, v)

    def ricci_op(g, w):
        return 0.5 * scale * scale * w

    def geodesic(g, v, s):
        G = g.reshape(3, 3)
        V = v.reshape(3, 3)
        body = axis_from_skew(G.T @ V)
        return (G @ rotation_exp(s * body)).reshape(9)

    def sample(count, seed):
        rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
        w = rng.standard_normal((count, 3))
        return rotation_exp(w).reshape(count, 9)

    return ManifoldGeometry(constraint=constraint, project_tangent=project,
                            retract=retract, ricci=ricci, ricci_op=ricci_op,
                            metric_dot=metric_dot, geodesic=geodesic,
                            sample=sample)


def make_so3_model(noise_scale=1.0, algebra_drift=None) -> LieGroupModel:
    """Left-invariant Brownian system on SO(3) with the bi-invariant metric.

    States are rotation matrices flattened to R^9.  The frame at g maps the
    i-th noise coordinate to noise_scale * g E_i and integration applies the
    exact group exponential, so trajectories stay on SO(3) to rounding.
    """
    if not noise_scale > 0:
        raise DimensionMismatch("noise_scale must be positive")
    s = float(noise_scale)
    drift = np.zeros(3) if algebra_drift is None else np.asarray(algebra_drift, float)

    def X(g):
        G = g.reshape(g.shape[:-1] + (3, 3))
        cols = s * np.einsum("...ij,ajk->...aik", G, SO3_BASIS)
        cols = cols.reshape(g.shape[:-1] + (3, 9))
        return np.swapaxes(cols, -1, -2)

    def DX(g, v):
        return X(v)

    def Z(g):
        return -(s * s) * g

    def DZ(g, v):
        return -(s * s) * v

    def Y(g):
        G = g.reshape(g.shape[:-1] + (3, 3))
        rows = np.einsum("...ij,ajk->...aik", G, SO3_BASIS) / (2.0 * s)
        return rows.reshape(g.shape[:-1] + (3, 9))

    def step(g, dW, dt):
        body = s * dW + drift * dt
        G = g.reshape(g.shape[:-1] + (3, 3))
        out = G @ rotation_exp(body)
        return out.reshape(g.shape)

    def A(g):
        if not np.any(drift):
            return np.zeros_like(g)
        G = g.reshape(g.shape[:-1] + (3, 3))
        return (G @ skew_from_axis(drift)).reshape(g.shape)

    geometry = _so3_geometry(s)
    geometry.step = step
    model = LieGroupModel(
        n=9, m=3,
        X=X,
        A=A,
        Z=Z,
        DX=DX,
        D2X=lambda g, u, v: np.zeros(g.shape[:-1] + (9, 3)),
        DZ=DZ,
        D2Z=lambda g, u, v: np.zeros_like(u),
        Y=Y,
        h=lambda g: np.zeros(g.shape[:-1]),
        grad_h=lambda g: np.zeros_like(g),
        hess_h=lambda g, w: np.zeros_like(w),
        geometry=geometry,
        kind="lie_group",
        h_brownian=True,
        group_dim=3, mat_dim=3, noise_scale=s,
        algebra_basis=SO3_BASIS, algebra_drift=drift,
    )

    def apply_X(g, e):
        G = g.reshape(g.shape[:-1] + (3, 3))
        return s * (G @ skew_from_axis(e)).reshape(g.shape)

    def apply_Y(g, w):
        G = g.reshape(g.shape[:-1] + (3, 3))
        W = w.reshape(w.shape[:-1] + (3, 3))
        M = np.einsum("...ji,...jk->...ik", G, W)
        return axis_from_skew(0.5 * (M - np.swapaxes(M, -1, -2))) / s

    model.apply_X = apply_X
    model.apply_DX = lambda g, v, e: apply_X(v, e)
    model.apply_D2X = lambda g, u, v, e: 0.0
    model.apply_Y = apply_Y
    return model


# ---------------------------------------------------------------------------
# finite-difference fallbacks and derivative checks


def with_fd_derivatives(model: DiffusionModel, step=1e-5) -> DiffusionModel:
    """Fill missing DX / DZ / D2X / D2Z by central differences (flagged).

    Finite-difference coefficients bias derivative estimators; models built
    this way carry ``fd_derivatives=True`` and results report a warning.
    """
    out = replace(model)

    def d1(fn):
        def deriv(x, v, _fn=fn):
            return (_fn(x + step * v) - _fn(x - step * v)) / (2 * step)
        return deriv

    def d2(fn):
        def deriv(x, u, v, _fn=fn):
            fp = d1(_fn)
            return (fp(x + step * u, v) - fp(x - step * u, v)) / (2 * step)
        return deriv

    if out.DX is None:
        out.DX = d1(model.X)
    if out.DZ is None and model.Z is not None:
        out.DZ = d1(model.Z)
    if out.D2X is None:
        out.D2X = d2(model.X)
    if out.D2Z is None and model.Z is not None:
        out.D2Z = d2(model.Z)
    out.fd_derivatives = True
    return out


def check_directional_derivative(fn, dfn, points, directions, *, rel_tol=1e-5,
                                 step=1e-6):
    """Max relative error of a declared directional derivative vs central FD."""
    declared = dfn(points, directions)
    fd = (fn(points + step * directions) - fn(points - step * directions)) / (2 * step)
    scale = np.maximum(np.max(np.abs(fd)), 1.0)
    err = np.max(np.abs(declared - fd)) / scale
    return err, err <= rel_tol


def sample_points(model: DiffusionModel, count: int, seed: int = 0) -> np.ndarray:
    """Quasi-random evaluation points: on-manifold or in the declared box."""
    if model.geometry is not None and model.geometry.sample is not None:
        return model.geometry.sample(count, seed)
    from scipy.stats import qmc

    sampler = qmc.Halton(d=model.n, seed=seed)
    lo, hi = model.domain
    return lo + (hi - lo) * sampler.random(count)


def sample_directions(model: DiffusionModel, points: np.ndarray,
                      seed: int = 1) -> np.ndarray:
    """Unit directions at the given points, tangent for constrained models."""
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    v = rng.standard_normal(points.shape)
    if model.geometry is not None:
        v = model.geometry.project_tangent(points, v)
    norms = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(norms < 1e-12):
        raise ZeroDirection("degenerate sampled direction")
    return v / norms
