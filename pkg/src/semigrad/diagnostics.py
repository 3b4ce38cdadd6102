"""Hypothesis functionals, moment bounds, and cross-checking oracles.

These routines back the estimators: pointwise quadratic forms H_p whose
upper bounds control variation-flow moments, empirical moment and
martingale checks, a common-random-number finite-difference oracle for
gradients, and the gradient / Sobolev inequality checks.  Suprema of
pointwise quantities are approximated over a sampled point cloud and the
coverage is reported, never silently assumed global.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import engine
from .errors import MissingDerivative, UnsupportedModel, ZeroDirection
from .estimators import EstimatorResult, _as_point, _mc_scalar, _PathLoop, bel_gradient
from .models import (apply_right_inverse, as_observable,
                     sample_directions, sample_points)
from .paths import TimeGrid, noise_block
from .variation import first_variation_step

HP_FORMS = ("rn_ito", "manifold", "section2_H2", "section3_H2")


@dataclass
class HpReport:
    """Sampled values of H_p(x)(v, v) / |v|^2 and their observed supremum."""

    p: float
    form_used: str
    samples: list = field(default_factory=list)  # (point, direction, value)
    sup_estimate: float = -np.inf


@dataclass
class BoundCheckReport:
    """Outcome of one inequality check: empirical value against a claimed bound."""

    name: str
    claimed_bound: float
    empirical: float
    margin: float
    passed: bool
    details: dict = field(default_factory=dict)


def evaluate_hp(model, p, x, v, form="rn_ito") -> float:
    """Pointwise H_p(x)(v, v) / |v|^2 in the requested printed form.

    "rn_ito" uses ambient DX / DZ; "manifold" uses the covariant versions
    (tangent-projected DX, Hess h drift derivative, Ricci term).  The
    section-specific H_2 variants coincide with the generic forms at the
    coefficient value p = 3.
    """
    if form not in HP_FORMS:
        raise ValueError(f"unknown H_p form {form!r}")
    x = np.atleast_1d(np.asarray(x, dtype=float))[None, :]
    v = np.atleast_1d(np.asarray(v, dtype=float))[None, :]
    coeff = 1.0 if form in ("section2_H2", "section3_H2") else p - 2.0
    covariant = form in ("manifold", "section3_H2")
    geom = model.geometry
    model.require("DX")

    if covariant:
        # all inner products in the model metric, directions metric-normalized
        norm_sq = float(model.metric_dot(x, v, v)[0])
        if norm_sq == 0:
            raise ZeroDirection("H_p needs a nonzero direction")
        v = v / np.sqrt(norm_sq)
        dx = model.DX(x, v)
        sq = 0.0
        quart = 0.0
        for i in range(model.m):
            col = dx[..., i]
            if geom is not None:
                col = geom.project_tangent(x, col)
            sq += float(model.metric_dot(x, col, col)[0])
            quart += float(model.metric_dot(x, col, v)[0]) ** 2
        if geom is not None:
            if geom.ricci is None:
                raise MissingDerivative("manifold H_p needs geometry.ricci")
            ric = float(geom.ricci(x, v, v)[0])
            if model.hess_h is None:
                raise MissingDerivative("manifold H_p needs hess_h (covariant drift derivative)")
            dz = model.hess_h(x, v)
        else:
            ric = 0.0
            model.require("DZ")
            dz = model.DZ(x, v)
        drift_term = 2.0 * float(model.metric_dot(x, dz, v)[0])
        return -ric + drift_term + sq + coeff * quart

    norm = np.linalg.norm(v)
    if norm == 0:
        raise ZeroDirection("H_p needs a nonzero direction")
    v = v / norm
    model.require("DZ")
    dx = model.DX(x, v)
    sq = float(np.sum(dx * dx))
    pair = np.einsum("bnm,bn->m", dx, v)
    quart = float(np.sum(pair * pair))
    drift_term = 2.0 * float(np.einsum("bn,bn->", model.DZ(x, v), v))
    return drift_term + sq + coeff * quart


def hp_report(model, p, form="rn_ito", *, n_samples=256, seed=0) -> HpReport:
    """Sample H_p over a quasi-random point cloud and report the supremum."""
    points = sample_points(model, n_samples, seed)
    dirs = sample_directions(model, points, seed + 1)
    report = HpReport(p=p, form_used=form)
    for x, v in zip(points, dirs):
        val = evaluate_hp(model, p, x, v, form=form)
        report.samples.append((x, v, val))
        report.sup_estimate = max(report.sup_estimate, val)
    return report


def variation_moment(model, grid: TimeGrid, x0, v0, p, *, n_paths, seed=0,
                     threads=None) -> EstimatorResult:
    """Monte Carlo E |v_t|^p of the first-variation flow."""
    model.require("DX", "DZ")
    x0 = _as_point(model, x0)
    v0 = _as_point(model, v0)
    loop = _PathLoop(model, grid)

    def block(lo, hi):
        B = hi - lo
        dWs = noise_block(grid, seed, lo, hi, model.m)
        x, alive = loop.start(x0, B)
        v = np.broadcast_to(v0, (B, model.n)).copy()
        with np.errstate(over="ignore", invalid="ignore"):
            for k in range(grid.n_steps):
                dW = dWs[:, k]
                x1, _ = loop.step(x, dW)
                v = first_variation_step(model, x, x1, v, dW, grid.dt)
                x, alive = loop.advance(x, x1, alive)
        vals = np.sqrt(model.metric_dot(x, v, v)) ** p
        return vals, alive

    return _mc_scalar(model, grid, n_paths, seed, block, threads=threads)


def moment_bound_check(model, grid: TimeGrid, x0, v0, p, *, n_paths, seed=0,
                       threads=None, n_hp_samples=128, slack=0.02) -> BoundCheckReport:
    """Compare E |v_t|^p against exp(c p t / 2) with c sampled from H_p.

    The constant k of the bound is taken as 1 (the flat-space value); the
    allowed slack covers the Euler discretization of the variation flow
    plus three standard errors.
    """
    form = "rn_ito" if model.geometry is None else "manifold"
    c = hp_report(model, p, form=form, n_samples=n_hp_samples, seed=seed).sup_estimate
    res = variation_moment(model, grid, x0, v0, p, n_paths=n_paths, seed=seed,
                           threads=threads)
    bound = float(np.exp(0.5 * c * p * grid.t_end))
    tol = bound * slack + 3.0 * res.std_error
    passed = res.mean <= bound + tol
    return BoundCheckReport(
        name=f"moment_bound_p{p}", claimed_bound=bound, empirical=res.mean,
        margin=bound - res.mean, passed=bool(passed),
        details={"c": c, "std_error": res.std_error, "form": form,
                 "n_hp_samples": n_hp_samples})


def martingale_mean_check(model, grid: TimeGrid, x0, v0, *, n_paths, seed=0,
                          threads=None) -> BoundCheckReport:
    """Check the gradient weight has mean zero and finite second moment.

    Reports the Monte Carlo mean of sum_k <Y(x_k) v_k, dB_k> (manifold
    models pair v with X dB in the metric), the integrability proxy
    integral E |Y v|^2 ds, and the blow-up fraction.
    """
    model.require("DX", "DZ")
    x0 = _as_point(model, x0)
    v0 = _as_point(model, v0)
    manifold = model.geometry is not None
    loop = _PathLoop(model, grid)

    def block(lo, hi):
        # workers may be forked processes: everything accumulated must be returned
        B = hi - lo
        dWs = noise_block(grid, seed, lo, hi, model.m)
        x, alive = loop.start(x0, B)
        v = np.broadcast_to(v0, (B, model.n)).copy()
        wsum = np.zeros(B)
        qsum = np.zeros(B)
        with np.errstate(over="ignore", invalid="ignore"):
            for k in range(grid.n_steps):
                dW = dWs[:, k]
                if manifold:
                    x1, x_dB = loop.step(x, dW)
                    wsum += np.where(alive, model.metric_dot(x, x_dB, v), 0.0)
                    qsum += np.where(alive, model.metric_dot(x, v, v), 0.0) * grid.dt
                else:
                    yv = apply_right_inverse(model, x, v)
                    wsum += np.where(alive, np.einsum("bm,bm->b", yv, dW), 0.0)
                    qsum += np.where(alive, np.einsum("bm,bm->b", yv, yv), 0.0) * grid.dt
                    x1, _ = loop.step(x, dW)
                v = first_variation_step(model, x, x1, v, dW, grid.dt)
                x, alive = loop.advance(x, x1, alive)
        return (engine.scalar_stats(wsum, alive),
                float(np.sum(qsum[alive])), int(np.sum(alive)))

    blocks = engine.map_blocks(
        n_paths, block, threads=threads,
        block_size=engine.default_block_size(grid.n_steps, model.m))
    from .estimators import _result_from_blocks

    res = _result_from_blocks([b[0] for b in blocks], seed, grid, {})
    q_total = sum(b[1] for b in blocks)
    q_count = sum(b[2] for b in blocks)
    tol = 3.0 * res.std_error
    passed = abs(res.mean) <= tol and res.valid
    details = {
        "std_error": res.std_error,
        "second_moment_integral": q_total / max(q_count, 1),
        "blowup_fraction": res.metadata.get("blowup_fraction", 0.0),
        "weight_variance": res.std_error ** 2 * max(res.n_paths - res.n_rejected, 1),
    }
    if not res.valid:
        details["warning"] = "blow-up fraction above 1%"
    return BoundCheckReport(name="martingale_mean", claimed_bound=tol,
                            empirical=res.mean, margin=tol - abs(res.mean),
                            passed=bool(passed), details=details)


def finite_difference_oracle(model, f, grid: TimeGrid, x0, v0, *, delta=1e-3,
                             n_paths, seed=0, threads=None) -> EstimatorResult:
    """Central difference of the semigroup value with common random numbers.

    Both perturbed starts reuse identical noise per path; manifold models
    perturb along the geodesic through x0 with velocity v0.
    """
    f = as_observable(f)
    x0 = _as_point(model, x0)
    v0 = _as_point(model, v0)
    if model.geometry is not None:
        if model.geometry.geodesic is None:
            raise UnsupportedModel("finite differences on manifolds need geometry.geodesic")
        x_plus = np.asarray(model.geometry.geodesic(x0, v0, delta), dtype=float)
        x_minus = np.asarray(model.geometry.geodesic(x0, v0, -delta), dtype=float)
    else:
        x_plus = x0 + delta * v0
        x_minus = x0 - delta * v0
    loop = _PathLoop(model, grid)

    def block(lo, hi):
        B = hi - lo
        dWs = noise_block(grid, seed, lo, hi, model.m)
        xp, alive_p = loop.start(x_plus, B)
        xm, alive_m = loop.start(x_minus, B)
        with np.errstate(over="ignore", invalid="ignore"):
            for k in range(grid.n_steps):
                dW = dWs[:, k]
                x1p, _ = loop.step(xp, dW)
                xp, alive_p = loop.advance(xp, x1p, alive_p)
                x1m, _ = loop.step(xm, dW)
                xm, alive_m = loop.advance(xm, x1m, alive_m)
        values = (f(xp) - f(xm)) / (2.0 * delta)
        return values, alive_p & alive_m

    meta = {"delta": delta}
    return _mc_scalar(model, grid, n_paths, seed, block, threads=threads,
                      metadata=meta)


def _exp_integral(alpha, t):
    """(exp(alpha t) - 1) / alpha, continuous at alpha = 0."""
    if abs(alpha) < 1e-12:
        return t
    return (np.exp(alpha * t) - 1.0) / alpha


def gronwall_gradient_bound(model, f, grid: TimeGrid, x0, v0, *, n_paths,
                            seed=0, threads=None, n_hp_samples=128,
                            sup_f=None) -> BoundCheckReport:
    """Check |gradient estimate| <= y_sup sqrt((e^(alpha t)-1)/alpha) / t * sup|f|.

    alpha is the sampled supremum of the p = 2 quadratic form (the Gronwall
    rate of E|v_t|^2) and y_sup the sampled ellipticity constant sup|Y|.
    As alpha -> 0 the bound degenerates to sup|f| / sqrt(t).
    """
    f = as_observable(f)
    alpha = hp_report(model, 2.0, form="rn_ito" if model.geometry is None else "manifold",
                      n_samples=n_hp_samples, seed=seed).sup_estimate
    points = sample_points(model, n_hp_samples, seed + 7)
    if model.geometry is None:
        y_ops = [float(np.linalg.norm(model.Y(p[None])[0], 2)) for p in points]
        y_sup = max(y_ops)
    else:
        y_sup = 1.0  # Y = X* is a partial isometry for the induced metric
    if sup_f is None:
        sup_f = f.bound if f.bound is not None else float(np.max(np.abs(f(points))))
    t = grid.t_end
    bound = y_sup * np.sqrt(_exp_integral(alpha, t)) / t * sup_f
    est = bel_gradient(model, f, grid, x0, v0, n_paths=n_paths, seed=seed,
                       threads=threads)
    empirical = abs(est.mean) - 3.0 * est.std_error
    passed = empirical <= bound
    return BoundCheckReport(name="gradient_sup_bound", claimed_bound=float(bound),
                            empirical=float(abs(est.mean)), margin=float(bound - empirical),
                            passed=bool(passed),
                            details={"alpha": alpha, "y_sup": y_sup, "sup_f": sup_f,
                                     "std_error": est.std_error})


def sobolev_norm_check(model, f, grid: TimeGrid, p, *, n_grid=16, n_paths,
                       seed=0, threads=None, slack=0.05) -> BoundCheckReport:
    """Check |P_t f|_(L^p) + |grad P_t f|_(L^p) <= (1 + k/t) |f|_(L^p).

    Compact built-ins only: the circle uses uniform-angle quadrature, the
    sphere uniform Monte Carlo quadrature.  k is estimated as the sampled
    sup of sqrt(integral_0^t E|v_s|^2 ds); p >= 2 or p = inf.
    """
    f = as_observable(f)
    if model.geometry is None or model.geometry.sample is None:
        raise UnsupportedModel("Sobolev check needs a compact built-in manifold")
    if not (p == np.inf or p >= 2):
        raise UnsupportedModel("Sobolev check supports p >= 2 or p = inf")
    if model.kind == "circle":
        angles = np.arange(n_grid) * (2 * np.pi / n_grid)
        points = np.stack([np.cos(angles), np.sin(angles)], axis=-1)
    else:
        points = model.geometry.sample(n_grid, seed + 3)

    # k^2 = sup_x int_0^t E |v_s|^2 ds, sampled at a few starting points
    k_sq = 0.0
    for x in points[: min(4, len(points))]:
        v = sample_directions(model, x[None], seed + 5)[0]
        k_sq = max(k_sq, _variation_l2_integral(model, grid, x, v,
                                                n_paths=max(2000, n_paths // 20),
                                                seed=seed, threads=threads))
    k = float(np.sqrt(k_sq))

    values = np.empty(len(points))
    grads = np.empty(len(points))
    for i, x in enumerate(points):
        values[i] = semigroup_at(model, f, grid, x, n_paths=n_paths, seed=seed,
                                 threads=threads)
        frame = _tangent_basis(model, x)
        comps = [bel_gradient(model, f, grid, x, tau, n_paths=n_paths, seed=seed,
                              threads=threads).mean for tau in frame]
        grads[i] = float(np.linalg.norm(comps))

    fvals = np.abs(f(points))
    if p == np.inf:
        lhs = float(np.max(np.abs(values)) + np.max(grads))
        fnorm = float(np.max(fvals))
    else:
        lhs = float(np.mean(np.abs(values) ** p) ** (1 / p)
                    + np.mean(grads ** p) ** (1 / p))
        fnorm = float(np.mean(fvals ** p) ** (1 / p))
    bound = (1.0 + k / grid.t_end) * fnorm
    passed = lhs <= bound * (1 + slack)
    return BoundCheckReport(name=f"sobolev_p{p}", claimed_bound=float(bound),
                            empirical=lhs, margin=float(bound - lhs),
                            passed=bool(passed),
                            details={"k": k, "n_grid": len(points),
                                     "f_norm": fnorm})


def semigroup_at(model, f, grid, x, *, n_paths, seed, threads=None) -> float:
    from .estimators import semigroup_value

    return semigroup_value(model, f, grid, x, n_paths=n_paths, seed=seed,
                           threads=threads).mean


def _tangent_basis(model, x):
    from .forms import tangent_frame

    if model.geometry is None:
        return list(np.eye(model.n))
    return list(tangent_frame(model, x))


def _variation_l2_integral(model, grid, x0, v0, *, n_paths, seed, threads=None):
    """Monte Carlo integral_0^t E |v_s|^2 ds along the flow."""
    loop = _PathLoop(model, grid)
    x0 = _as_point(model, x0)
    v0 = _as_point(model, v0)

    def block(lo, hi):
        B = hi - lo
        dWs = noise_block(grid, seed, lo, hi, model.m)
        x, alive = loop.start(x0, B)
        v = np.broadcast_to(v0, (B, model.n)).copy()
        qsum = np.zeros(B)
        with np.errstate(over="ignore", invalid="ignore"):
            for k in range(grid.n_steps):
                dW = dWs[:, k]
                qsum += np.where(alive, model.metric_dot(x, v, v), 0.0) * grid.dt
                x1, _ = loop.step(x, dW)
                v = first_variation_step(model, x, x1, v, dW, grid.dt)
                x, alive = loop.advance(x, x1, alive)
        return qsum, alive

    res = _mc_scalar(model, grid, n_paths, seed, block, threads=threads)
    return res.mean


def exact_form_residuals(model, f, codiff, grid: TimeGrid, x0, *, n_paths,
                         seed=0, threads=None):
    """Pathwise residual of the exact-form line-integral identity.

    For phi = df the line integral must telescope to f(x_t) - f(x_0) up to
    the Euler truncation error.  ``codiff`` is the scalar field
    delta^h(df) = -Lap^h f.  Returns (residuals, scales) per path where
    scale = 1 + max_k |x_k| is the reported path-dependent constant.
    """
    f = as_observable(f)
    if f.df is None:
        raise MissingDerivative("the exact-form identity needs df")
    loop = _PathLoop(model, grid)
    x0 = _as_point(model, x0)

    def block(lo, hi):
        B = hi - lo
        dWs = noise_block(grid, seed, lo, hi, model.m)
        x, alive = loop.start(x0, B)
        f0 = f(x)
        line = np.zeros(B)
        scale = np.linalg.norm(x, axis=-1)
        with np.errstate(over="ignore", invalid="ignore"):
            for k in range(grid.n_steps):
                dW = dWs[:, k]
                x1, x_dB = loop.step(x, dW)
                contrib = (np.einsum("bn,bn->b", f.df(x), x_dB)
                           - 0.5 * codiff(x) * grid.dt)
                line += np.where(alive, contrib, 0.0)
                x, alive = loop.advance(x, x1, alive)
                scale = np.maximum(scale, np.linalg.norm(x, axis=-1))
        resid = np.abs(line - (f(x) - f0))
        return resid, 1.0 + scale, alive

    blocks = engine.map_blocks(n_paths, block, threads=threads)
    residuals = np.concatenate([b[0][b[2]] for b in blocks])
    scales = np.concatenate([b[1][b[2]] for b in blocks])
    return residuals, scales


def constraint_violation(model, grid: TimeGrid, x0, *, n_paths, seed=0,
                         threads=None) -> float:
    """Max constraint residual over all steps of all paths."""
    if model.geometry is None:
        return 0.0
    loop = _PathLoop(model, grid)
    x0 = _as_point(model, x0)

    def block(lo, hi):
        B = hi - lo
        dWs = noise_block(grid, seed, lo, hi, model.m)
        x, alive = loop.start(x0, B)
        worst = 0.0
        with np.errstate(over="ignore", invalid="ignore"):
            for k in range(grid.n_steps):
                x1, _ = loop.step(x, dWs[:, k])
                x, alive = loop.advance(x, x1, alive)
                res = np.linalg.norm(model.geometry.constraint(x), axis=-1)
                if np.any(alive):
                    worst = max(worst, float(np.max(res[alive])))
        return worst

    return max(engine.map_blocks(n_paths, block, threads=threads))


def curvature_rho(model, x, *, n_dirs=64, seed=0) -> float:
    """inf over unit tangent v of Ric(v, v) - 2 <covariant drift deriv v, v>."""
    geom = model.geometry
    x = np.atleast_1d(np.asarray(x, dtype=float))
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    vals = []
    for _ in range(n_dirs):
        v = rng.standard_normal(model.n)
        if geom is not None:
            v = geom.project_tangent(x[None], v[None])[0]
        nv = np.linalg.norm(v)
        if nv < 1e-9:
            continue
        v = v / nv
        ric = float(geom.ricci(x[None], v[None], v[None])[0]) if geom is not None else 0.0
        if geom is not None and model.hess_h is not None:
            dz = model.hess_h(x[None], v[None])
        else:
            model.require("DZ")
            dz = model.DZ(x[None], v[None])
        vals.append(ric - 2.0 * float(np.einsum("bn,bn->", dz, v[None])))
    return min(vals)


def dist_rho(model, x, base) -> float:
    """Distance to a base point (geodesic for built-ins, Euclidean on flat)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    base = np.atleast_1d(np.asarray(base, dtype=float))
    if model.geometry is None:
        return float(np.linalg.norm(x - base))
    if model.kind in ("circle", "gradient_sphere"):
        c = float(np.clip(np.dot(x, base), -1.0, 1.0))
        return float(np.arccos(c))
    if model.kind == "lie_group":
        G = x.reshape(3, 3)
        H = base.reshape(3, 3)
        rel = G.T @ H
        c = float(np.clip((np.trace(rel) - 1.0) / 2.0, -1.0, 1.0))
        return float(np.arccos(c))
    raise UnsupportedModel(f"no distance defined for kind {model.kind!r}")
