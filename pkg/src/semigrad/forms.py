"""Heat semigroups on differential forms for gradient h-Brownian systems.

Forms are extrinsic: a q-form is a callback on an ambient point and q
ambient (tangent) vectors.  Line integrals follow the Ito-sum-plus-
codifferential convention; the form semigroup wedges the noise-pairing
1-form with the line integral over the q input vectors.  Supported range:
q <= 2 in ambient dimension <= 3.

Wedge convention (pinned by the q = 1 reduction and the harmonic
fixed-point tests): for a 1-form a and a (q-1)-form b,
(a ^ b)(v_1..v_q) = sum_i (-1)^(i-1) a(v_i) b(v_1.. v_i-hat ..v_q),
with no factorial normalization.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import (DegreeMismatch, MissingCodifferential, NotClosed,
                     NotGradientSystem, UnsupportedDegree)
from .estimators import EstimatorResult, _as_point, _mc_scalar, _PathLoop
from .models import as_observable
from .paths import TimeGrid, noise_block
from .variation import first_variation_step

_MAX_DEGREE = 2
_MAX_DIM = 3


@dataclass(frozen=True)
class FormField:
    """A degree-q differential form with optional codifferential callback.

    ``eval(x, v_1, .., v_q)`` must be alternating in the vector arguments;
    ``codiff(x, v_1, .., v_(q-1))`` evaluates the (q-1)-form delta^h applied
    to the given vectors (for q = 1 it takes no vectors and returns the
    scalar field delta^h phi).
    """

    degree: int
    eval: Callable
    codiff: Optional[Callable] = None
    is_closed: bool = False
    bound: Optional[float] = None
    name: str = ""

    def __call__(self, x, *vectors):
        if len(vectors) != self.degree:
            raise DegreeMismatch(
                f"degree-{self.degree} form evaluated on {len(vectors)} vectors")
        return self.eval(x, *vectors)


# ---------------------------------------------------------------------------
# alternating-tensor algebra in a local orthonormal frame (dim <= 3, q <= 2)


@dataclass(frozen=True)
class AlternatingTensor:
    """Antisymmetric coefficient array over a local orthonormal frame."""

    degree: int
    components: np.ndarray  # shape (d,) * degree, antisymmetric

    def __post_init__(self):
        if self.degree >= 1 and self.components.ndim != self.degree:
            raise DegreeMismatch("component rank does not match the degree")

    def apply(self, *coord_vectors):
        """Evaluate on vectors given in the same frame coordinates."""
        if len(coord_vectors) != self.degree:
            raise DegreeMismatch("wrong number of vectors")
        out = self.components
        for v in coord_vectors:
            out = np.tensordot(out, v, axes=([0], [0]))
        return float(out)


def wedge(a: AlternatingTensor, b: AlternatingTensor) -> AlternatingTensor:
    """Shuffle-convention wedge product of two alternating tensors."""
    p, q = a.degree, b.degree
    if p == 0 or q == 0:
        return AlternatingTensor(p + q, a.components * b.components)
    d = a.components.shape[0]
    out = np.zeros((d,) * (p + q))
    idx = range(d)
    for comb in itertools.product(idx, repeat=p + q):
        total = 0.0
        for shuffle in itertools.combinations(range(p + q), p):
            rest = [i for i in range(p + q) if i not in shuffle]
            sign = _shuffle_sign(shuffle, rest)
            ia = tuple(comb[i] for i in shuffle)
            ib = tuple(comb[i] for i in rest)
            total += sign * a.components[ia] * b.components[ib]
        out[comb] = total
    return AlternatingTensor(p + q, out)


def _shuffle_sign(first, rest):
    perm = list(first) + list(rest)
    sign = 1
    seen = [False] * len(perm)
    for i in range(len(perm)):
        if seen[i]:
            continue
        j = i
        length = 0
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


def tangent_frame(model, x) -> np.ndarray:
    """Deterministic orthonormal tangent frame at x via Gram-Schmidt.

    Seeds are the ambient standard basis in lexicographic order; near-zero
    projections are dropped, so the frame has the manifold dimension.
    """
    x = np.asarray(x, dtype=float)
    geom = model.geometry
    frame = []
    for i in range(model.n):
        v = np.zeros(model.n)
        v[i] = 1.0
        if geom is not None:
            v = geom.project_tangent(x[None], v[None])[0]
        for u in frame:
            v = v - np.dot(u, v) * u
        norm = np.linalg.norm(v)
        if norm > 1e-8:
            frame.append(v / norm)
    return np.array(frame)


def as_alternating(form: FormField, model, x, frame=None) -> AlternatingTensor:
    """Components of a form at x over the orthonormal tangent frame."""
    if frame is None:
        frame = tangent_frame(model, x)
    d = len(frame)
    comps = np.zeros((d,) * form.degree)
    for comb in itertools.product(range(d), repeat=form.degree):
        comps[comb] = float(form.eval(x[None], *(frame[i][None] for i in comb))[0])
    return AlternatingTensor(form.degree, comps)


# ---------------------------------------------------------------------------
# line integrals along stored trajectories (per path, vectorized over steps)


def _require_codiff(form):
    if form.codiff is None:
        raise MissingCodifferential(f"form {form.name or form.degree} has no codifferential")


def line_integral_one_form(model, traj, noise, form: FormField) -> float:
    """Ito line integral of a 1-form: sum phi(X dB) - (1/2) sum delta^h phi dt."""
    if form.degree != 1:
        raise DegreeMismatch("line_integral_one_form needs a 1-form")
    _require_codiff(form)
    xs = traj.states[:-1]  # left endpoints
    Xm = model.X(xs)
    xdb = np.einsum("bnm,bm->bn", Xm, noise.increments)
    ito = float(np.sum(form.eval(xs, xdb)))
    corr = float(np.sum(form.codiff(xs))) * traj.grid.dt
    return ito - 0.5 * corr


def q_form_line_integral(model, traj, noise, form: FormField,
                         alpha_paths) -> float:
    """(q-1)-form line integral of a q-form applied to evolved directions.

    alpha_paths are the VariationPaths of the q-1 initial vectors; the noise
    slot carries weight 1/q and the codifferential term is evaluated on the
    same transported vectors.
    """
    q = form.degree
    if q < 1 or q > _MAX_DEGREE:
        raise UnsupportedDegree(f"supported degrees are 1..{_MAX_DEGREE}, got {q}")
    if len(alpha_paths) != q - 1:
        raise DegreeMismatch(f"degree-{q} line integral needs {q - 1} direction paths")
    if q > 1 and not model.gradient_system:
        raise NotGradientSystem("q-form line integrals need a gradient h-Brownian system")
    _require_codiff(form)
    xs = traj.states[:-1]
    Xm = model.X(xs)
    xdb = np.einsum("bnm,bm->bn", Xm, noise.increments)
    alphas = [p.vectors[:-1] for p in alpha_paths]
    ito = float(np.sum(form.eval(xs, xdb, *alphas))) / q
    corr = float(np.sum(form.codiff(xs, *alphas))) * traj.grid.dt
    return ito - 0.5 * corr


# ---------------------------------------------------------------------------
# form semigroup estimators


def _check_form_model(model, form, need_closed=True):
    if form.degree > _MAX_DEGREE or model.n > _MAX_DIM:
        raise UnsupportedDegree(
            f"form estimators support q <= {_MAX_DEGREE} in dimension <= {_MAX_DIM}")
    if need_closed and not form.is_closed:
        raise NotClosed("the form semigroup needs a closed form")
    if form.degree >= 2 and not model.gradient_system:
        raise NotGradientSystem("q >= 2 needs a gradient h-Brownian system")
    if form.degree == 1 and not (model.h_brownian or model.geometry is None):
        raise NotGradientSystem("the 1-form semigroup needs an h-Brownian system")


def one_form_semigroup(model, form: FormField, grid: TimeGrid, x0, v0, *,
                       n_paths, seed=0, threads=None) -> EstimatorResult:
    """Heat semigroup on a closed 1-form evaluated at (x0, v0)."""
    if form.degree != 1:
        raise DegreeMismatch("one_form_semigroup needs a 1-form")
    return q_form_semigroup(model, form, grid, x0, (v0,), n_paths=n_paths,
                            seed=seed, threads=threads)


def q_form_semigroup(model, form: FormField, grid: TimeGrid, x0, v0s, *,
                     n_paths, seed=0, threads=None) -> EstimatorResult:
    """Heat semigroup on a closed q-form evaluated on q tangent vectors.

    Per path: Psi(.) = sum_k <X(x_k) dB_k, v_k(.)> and the (q-1)-form line
    integral L(.); the estimate is the average of (Psi ^ L)(v0s) / t.
    """
    _check_form_model(model, form)
    q = form.degree
    if len(v0s) != q:
        raise DegreeMismatch(f"degree-{q} semigroup needs {q} vectors, got {len(v0s)}")
    _require_codiff(form)
    x0 = _as_point(model, x0)
    v0s = [_as_point(model, v) for v in v0s]
    loop = _PathLoop(model, grid)
    t = grid.t_end

    def block(lo, hi):
        B = hi - lo
        dWs = noise_block(grid, seed, lo, hi, model.m)
        x, alive = loop.start(x0, B)
        vs = [np.broadcast_to(v, (B, model.n)).copy() for v in v0s]
        psi = [np.zeros(B) for _ in range(q)]
        # line integral of the (q-1)-form over each complementary vector subset
        line = {tuple(c): np.zeros(B)
                for c in itertools.combinations(range(q), q - 1)}
        with np.errstate(over="ignore", invalid="ignore"):
            for k in range(grid.n_steps):
                dW = dWs[:, k]
                x1, x_dB = loop.step(x, dW)
                for i in range(q):
                    psi[i] += np.where(alive, model.metric_dot(x, x_dB, vs[i]), 0.0)
                for comb, acc in line.items():
                    args = [vs[i] for i in comb]
                    contrib = (form.eval(x, x_dB, *args) / q
                               - 0.5 * form.codiff(x, *args) * grid.dt)
                    acc += np.where(alive, contrib, 0.0)
                vs = [first_variation_step(model, x, x1, v, dW, grid.dt) for v in vs]
                x, alive = loop.advance(x, x1, alive)
        values = np.zeros(B)
        order = list(range(q))
        for i in order:
            rest = tuple(j for j in order if j != i)
            values += (-1.0) ** i * psi[i] * line[rest]
        return values / t, alive

    return _mc_scalar(model, grid, n_paths, seed, block, threads=threads,
                      metadata={"form": form.name, "degree": q})


def form_exterior_gradient(model, form: FormField, grid: TimeGrid, x0, v0s, *,
                           n_paths, seed=0, threads=None) -> EstimatorResult:
    """Exterior derivative of the (q-1)-form semigroup, d(P_t phi), on q vectors.

    Per path wedges Psi with the endpoint pullback phi(x_t)(v_t(.)); for
    q = 1 (phi a function) this reduces to the derivative-free gradient
    estimator.
    """
    q = form.degree + 1
    if q > _MAX_DEGREE + 1 or model.n > _MAX_DIM:
        raise UnsupportedDegree("degree out of the supported range")
    if q >= 2 and not model.gradient_system and model.geometry is not None:
        raise NotGradientSystem("form differentiation needs a gradient h-Brownian system")
    if len(v0s) != q:
        raise DegreeMismatch(f"expected {q} vectors, got {len(v0s)}")
    x0 = _as_point(model, x0)
    v0s = [_as_point(model, v) for v in v0s]
    loop = _PathLoop(model, grid)
    t = grid.t_end

    def block(lo, hi):
        B = hi - lo
        dWs = noise_block(grid, seed, lo, hi, model.m)
        x, alive = loop.start(x0, B)
        vs = [np.broadcast_to(v, (B, model.n)).copy() for v in v0s]
        psi = [np.zeros(B) for _ in range(q)]
        with np.errstate(over="ignore", invalid="ignore"):
            for k in range(grid.n_steps):
                dW = dWs[:, k]
                x1, x_dB = loop.step(x, dW)
                for i in range(q):
                    psi[i] += np.where(alive, model.metric_dot(x, x_dB, vs[i]), 0.0)
                vs = [first_variation_step(model, x, x1, v, dW, grid.dt) for v in vs]
                x, alive = loop.advance(x, x1, alive)
        values = np.zeros(B)
        for i in range(q):
            rest = [vs[j] for j in range(q) if j != i]
            endpoint = form.eval(x, *rest) if form.degree > 0 else form.eval(x)
            values += (-1.0) ** i * psi[i] * endpoint
        return values / t, alive

    return _mc_scalar(model, grid, n_paths, seed, block, threads=threads,
                      metadata={"form": form.name, "degree": q})


# ---------------------------------------------------------------------------
# built-in forms


def zero_form_from_observable(f) -> FormField:
    """Wrap a scalar observable as a degree-0 form (for d(P_t f) queries)."""
    obs = as_observable(f)
    return FormField(degree=0, eval=lambda x: obs(x), codiff=None,
                     is_closed=False, name=f"0form:{obs.name}")


def exact_one_form(f, *, minus_laplacian=None, name="") -> FormField:
    """The exact form df of a scalar observable, with delta^h df = -Lap^h f."""
    obs = as_observable(f)
    if obs.df is None:
        raise MissingCodifferential("exact_one_form needs the observable gradient df")

    def ev(x, v):
        return np.einsum("bn,bn->b", obs.df(x), v)

    codiff = None
    if minus_laplacian is not None:
        codiff = lambda x: minus_laplacian(x)
    return FormField(degree=1, eval=ev, codiff=codiff, is_closed=True,
                     name=name or f"d({obs.name})")


def angle_form_s1() -> FormField:
    """The harmonic angular 1-form on the unit circle in R^2."""

    def ev(x, v):
        return -x[..., 1] * v[..., 0] + x[..., 0] * v[..., 1]

    return FormField(degree=1, eval=ev, codiff=lambda x: np.zeros(x.shape[:-1]),
                     is_closed=True, bound=1.0, name="dtheta_s1")


def volume_form_s2() -> FormField:
    """The harmonic volume 2-form vol_x(u, v) = det[x, u, v] on S^2."""

    def ev(x, u, v):
        return np.einsum("bn,bn->b", x, np.cross(u, v))

    def codiff(x, u):
        return np.zeros(x.shape[:-1])

    return FormField(degree=2, eval=ev, codiff=codiff, is_closed=True,
                     bound=1.0, name="vol_s2")


def scaled_volume_form_s2(scalar, grad_scalar, name="f*vol_s2") -> FormField:
    """f * vol on S^2 with delta(f vol)(u) = <-x cross grad f, u>."""

    def ev(x, u, v):
        return scalar(x) * np.einsum("bn,bn->b", x, np.cross(u, v))

    def codiff(x, u):
        g = grad_scalar(x)
        return np.einsum("bn,bn->b", -np.cross(x, g), u)

    return FormField(degree=2, eval=ev, codiff=codiff, is_closed=True, name=name)
