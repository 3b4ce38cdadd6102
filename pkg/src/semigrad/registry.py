"""Scenario, observable, form, and oracle registries for the runner.

Each scenario bundles a model factory, default start point and directions,
named observables, named forms, and closed-form oracle values for the
estimator/observable pairs where one exists.  Everything is addressable by
a stable string id so experiments are reproducible from flat configs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import UnknownScenario
from .forms import angle_form_s1, exact_one_form, volume_form_s2
from .models import (DiffusionModel, ScalarObservable, make_bm_model,
                     make_gradient_sphere_model, make_ou_model, make_so3_model)


@dataclass
class Scenario:
    """One registered diffusion scenario."""

    id: str
    description: str
    make: Callable[[], DiffusionModel]
    x0: np.ndarray
    v0: np.ndarray
    u0: np.ndarray
    observables: dict = field(default_factory=dict)
    forms: dict = field(default_factory=dict)
    oracles: dict = field(default_factory=dict)  # (estimator, observable) -> fn(cfg)
    oracle_names: dict = field(default_factory=dict)

    def observable(self, name):
        if name not in self.observables:
            raise UnknownScenario(
                f"scenario {self.id!r} has no observable {name!r}; "
                f"known: {sorted(self.observables)}")
        return self.observables[name]

    def form(self, name):
        if name.startswith("exact:"):
            base = name.split(":", 1)[1]
            key = f"exact:{base}"
            if key in self.forms:
                return self.forms[key]
            raise UnknownScenario(f"scenario {self.id!r} has no exact form for {base!r}")
        if name not in self.forms:
            raise UnknownScenario(
                f"scenario {self.id!r} has no form {name!r}; known: {sorted(self.forms)}")
        return self.forms[name]


def _obs_sin():
    return ScalarObservable(
        f=lambda x: np.sin(x[..., 0]),
        df=lambda x: np.stack([np.cos(x[..., 0])], axis=-1),
        bound=1.0, name="sin")


def _obs_identity_1d():
    return ScalarObservable(
        f=lambda x: x[..., 0],
        df=lambda x: np.ones_like(x),
        name="x")


def _obs_square_1d():
    return ScalarObservable(
        f=lambda x: x[..., 0] ** 2,
        df=lambda x: 2.0 * x,
        name="x_sq")


def _obs_one(n):
    return ScalarObservable(
        f=lambda x: np.ones(x.shape[:-1]),
        df=lambda x: np.zeros_like(x),
        bound=1.0, name="one")


def _obs_coord(i, n, name):
    def df(x):
        out = np.zeros_like(x)
        out[..., i] = 1.0
        return out

    return ScalarObservable(f=lambda x: x[..., i], df=df, bound=1.0, name=name)


def _obs_ambient_sin(n):
    """sin of the first ambient coordinate (smooth bounded, no special symmetry)."""

    def df(x):
        out = np.zeros_like(x)
        out[..., 0] = np.cos(x[..., 0])
        return out

    return ScalarObservable(f=lambda x: np.sin(x[..., 0]), df=df, bound=1.0,
                            name="sin")


def _obs_trace():
    def f(g):
        return g[..., 0] + g[..., 4] + g[..., 8]

    def df(g):
        out = np.zeros_like(g)
        out[..., 0] = 1.0
        out[..., 4] = 1.0
        out[..., 8] = 1.0
        return out

    return ScalarObservable(f=f, df=df, bound=3.0, name="trace")


def _obs_trace_e1():
    # tr(E_1 g) = g[1,2] - g[2,1] in row-major flattening
    def f(g):
        return g[..., 5] - g[..., 7]

    def df(g):
        out = np.zeros_like(g)
        out[..., 5] = 1.0
        out[..., 7] = -1.0
        return out

    return ScalarObservable(f=f, df=df, bound=2.0, name="trace_e1")


_GRADIENT_ESTIMATORS = ("bel_gradient", "pathwise_gradient", "finite_difference",
                        "hessian_flow_gradient")


def _bm1d_scenario() -> Scenario:
    sc = Scenario(
        id="bm1d",
        description="standard Brownian motion on R, X = 1, Z = 0",
        make=lambda: make_bm_model(1),
        x0=np.array([0.0]), v0=np.array([1.0]), u0=np.array([1.0]))
    sc.observables = {
        "sin": _obs_sin(), "x": _obs_identity_1d(), "x_sq": _obs_square_1d(),
        "one": _obs_one(1)}
    sc.forms = {}

    def grad_sin(cfg):
        return float(np.exp(-cfg.t / 2) * np.cos(cfg.x0[0]) * cfg.v0[0])

    def value_sin(cfg):
        return float(np.exp(-cfg.t / 2) * np.sin(cfg.x0[0]))

    for est in _GRADIENT_ESTIMATORS:
        sc.oracles[(est, "sin")] = grad_sin
        sc.oracles[(est, "x")] = lambda cfg: float(cfg.v0[0])
        sc.oracles[(est, "x_sq")] = lambda cfg: float(2 * cfg.x0[0] * cfg.v0[0])
        sc.oracles[(est, "one")] = lambda cfg: 0.0
    sc.oracles[("semigroup_value", "sin")] = value_sin
    sc.oracles[("semigroup_value", "one")] = lambda cfg: 1.0
    sc.oracles[("semigroup_value", "x_sq")] = lambda cfg: float(cfg.x0[0] ** 2 + cfg.t)
    for variant in ("bel_hessian_weights", "bel_hessian_nested"):
        sc.oracles[(variant, "sin")] = lambda cfg: float(
            -np.exp(-cfg.t / 2) * np.sin(cfg.x0[0]) * cfg.u0[0] * cfg.v0[0])
        sc.oracles[(variant, "x_sq")] = lambda cfg: float(2 * cfg.u0[0] * cfg.v0[0])
        sc.oracles[(variant, "x")] = lambda cfg: 0.0
    sc.oracles[("score_gradient", "one")] = lambda cfg: float(
        (cfg.y[0] - cfg.x0[0]) / cfg.t * cfg.v0[0])

    def potential_sin(cfg):
        # constant potential factorizes out of the Feynman-Kac weight
        if cfg.potential and cfg.potential.startswith("const:"):
            c = float(cfg.potential.split(":")[1])
            return float(np.exp(c * cfg.t) * np.exp(-cfg.t / 2)
                         * np.cos(cfg.x0[0]) * cfg.v0[0])
        if cfg.potential and cfg.potential.startswith("ramp:"):
            a = float(cfg.potential.split(":")[1])
            return float(np.exp(a * cfg.t ** 2 / 2) * np.exp(-cfg.t / 2)
                         * np.cos(cfg.x0[0]) * cfg.v0[0])
        return grad_sin(cfg)

    sc.oracles[("potential_gradient", "sin")] = potential_sin
    return sc


def _ou1d_scenario() -> Scenario:
    sc = Scenario(
        id="ou1d",
        description="Ornstein-Uhlenbeck on R, dx = -x dt + dB",
        make=lambda: make_ou_model(1.0),
        x0=np.array([0.0]), v0=np.array([1.0]), u0=np.array([1.0]))
    sc.observables = {
        "sin": _obs_sin(), "x": _obs_identity_1d(), "x_sq": _obs_square_1d(),
        "one": _obs_one(1)}

    for est in _GRADIENT_ESTIMATORS:
        sc.oracles[(est, "x")] = lambda cfg: float(np.exp(-cfg.t) * cfg.v0[0])
        sc.oracles[(est, "x_sq")] = lambda cfg: float(
            2 * cfg.x0[0] * np.exp(-2 * cfg.t) * cfg.v0[0])
        sc.oracles[(est, "one")] = lambda cfg: 0.0
    sc.oracles[("semigroup_value", "x_sq")] = lambda cfg: float(
        cfg.x0[0] ** 2 * np.exp(-2 * cfg.t) + (1 - np.exp(-2 * cfg.t)) / 2)
    sc.oracles[("semigroup_value", "x")] = lambda cfg: float(cfg.x0[0] * np.exp(-cfg.t))
    for variant in ("bel_hessian_weights", "bel_hessian_nested"):
        sc.oracles[(variant, "x_sq")] = lambda cfg: float(
            2 * np.exp(-2 * cfg.t) * cfg.u0[0] * cfg.v0[0])
        sc.oracles[(variant, "x")] = lambda cfg: 0.0
    return sc


def _circle_scenario() -> Scenario:
    theta0 = 0.0
    x0 = np.array([np.cos(theta0), np.sin(theta0)])
    v0 = np.array([-np.sin(theta0), np.cos(theta0)])
    sc = Scenario(
        id="circle",
        description="gradient Brownian system on the unit circle in R^2",
        make=lambda: make_gradient_sphere_model(2),
        x0=x0, v0=v0, u0=v0.copy())
    # sin(theta) = x_2 and cos(theta) = x_1 on the embedded circle
    sc.observables = {
        "sin": _obs_coord(1, 2, "sin"), "cos": _obs_coord(0, 2, "cos"),
        "one": _obs_one(2)}
    sc.forms = {
        "dtheta_s1": angle_form_s1(),
        "exact:sin": exact_one_form(
            sc.observables["sin"],
            minus_laplacian=lambda x: x[..., 1],  # delta(d sin) = -Lap sin = sin
            name="d(sin)"),
    }

    def grad_sin(cfg):
        # P_t sin = e^(-t/2) sin; pairs with the tangent component of v0
        tang = float(-np.sin(_theta(cfg.x0)) * cfg.v0[0] + np.cos(_theta(cfg.x0)) * cfg.v0[1])
        return float(np.exp(-cfg.t / 2) * np.cos(_theta(cfg.x0)) * tang)

    for est in _GRADIENT_ESTIMATORS:
        sc.oracles[(est, "sin")] = grad_sin
        sc.oracles[(est, "one")] = lambda cfg: 0.0
    sc.oracles[("semigroup_value", "sin")] = lambda cfg: float(
        np.exp(-cfg.t / 2) * np.sin(_theta(cfg.x0)))
    # harmonic forms are semigroup fixed points: the oracle is dtheta(v0)
    sc.oracles[("one_form_semigroup", "dtheta_s1")] = lambda cfg: float(
        np.dot(_theta_tangent(cfg.x0), cfg.v0))
    sc.oracles[("one_form_semigroup", "exact:sin")] = grad_sin
    sc.oracles[("q_form_semigroup", "dtheta_s1")] = sc.oracles[("one_form_semigroup", "dtheta_s1")]
    sc.oracles[("form_exterior_gradient", "sin")] = grad_sin
    return sc


def _theta(x):
    return float(np.arctan2(x[1], x[0]))


def _theta_tangent(x):
    th = _theta(x)
    return np.array([-np.sin(th), np.cos(th)])


def _sphere3_scenario() -> Scenario:
    x0 = np.array([1.0, 0.0, 0.0])
    v0 = np.array([0.0, 0.0, 1.0])
    u0 = np.array([0.0, 1.0, 0.0])
    sc = Scenario(
        id="sphere3",
        description="gradient Brownian system on the unit sphere S^2 in R^3",
        make=lambda: make_gradient_sphere_model(3),
        x0=x0, v0=v0, u0=u0)
    sc.observables = {
        "height": _obs_coord(2, 3, "height"),
        "sin": _obs_ambient_sin(3),
        "one": _obs_one(3)}
    sc.forms = {"vol_s2": volume_form_s2()}

    def grad_height(cfg):
        # the height function is a degree-1 eigenfunction: P_t f = e^(-t) f
        return float(np.exp(-cfg.t) * cfg.v0[2])

    for est in _GRADIENT_ESTIMATORS:
        sc.oracles[(est, "height")] = grad_height
        sc.oracles[(est, "one")] = lambda cfg: 0.0
    sc.oracles[("semigroup_value", "height")] = lambda cfg: float(
        np.exp(-cfg.t) * cfg.x0[2])
    sc.oracles[("q_form_semigroup", "vol_s2")] = lambda cfg: float(
        np.dot(cfg.x0, np.cross(cfg.u0, cfg.v0)))
    return sc


def _so3_scenario() -> Scenario:
    x0 = np.eye(3).reshape(-1)
    v0 = np.array([1.0, 0.0, 0.0])  # algebra coordinates
    sc = Scenario(
        id="so3",
        description="left-invariant Brownian system on SO(3), bi-invariant metric",
        make=lambda: make_so3_model(1.0),
        x0=x0, v0=v0, u0=v0.copy())
    sc.observables = {
        "trace": _obs_trace(), "trace_e1": _obs_trace_e1(), "one": _obs_one(9)}

    def grad_trace(cfg):
        return 0.0  # d(trace) vanishes on skew directions at the identity

    def grad_trace_e1(cfg):
        # tr(E_1 g) is a Casimir eigenfunction: P_t f = e^(-t) f for unit scale
        v = _alg_direction(cfg.v0)
        return float(np.exp(-cfg.t) * (-2.0) * v[0])

    for est in ("bel_gradient", "lie_group_gradient", "finite_difference"):
        sc.oracles[(est, "trace")] = grad_trace
        sc.oracles[(est, "trace_e1")] = grad_trace_e1
        sc.oracles[(est, "one")] = lambda cfg: 0.0
    sc.oracles[("semigroup_value", "trace")] = lambda cfg: float(3.0 * np.exp(-cfg.t))
    return sc


def _alg_direction(v0):
    v0 = np.asarray(v0, dtype=float)
    if v0.shape == (9,):
        from .models import axis_from_skew

        return axis_from_skew(v0.reshape(3, 3))
    return v0


_SCENARIOS: dict[str, Scenario] = {}


def _register(builder):
    sc = builder()
    _SCENARIOS[sc.id] = sc


for _b in (_bm1d_scenario, _ou1d_scenario, _circle_scenario, _sphere3_scenario,
           _so3_scenario):
    _register(_b)


def scenario_ids():
    return sorted(_SCENARIOS)


def get_scenario(scenario_id: str) -> Scenario:
    try:
        return _SCENARIOS[scenario_id]
    except KeyError:
        raise UnknownScenario(
            f"unknown scenario {scenario_id!r}; known: {scenario_ids()}") from None


ESTIMATOR_IDS = (
    "semigroup_value",
    "pathwise_gradient",
    "bel_gradient",
    "bel_hessian_weights",
    "bel_hessian_nested",
    "potential_gradient",
    "hessian_flow_gradient",
    "score_gradient",
    "lie_group_gradient",
    "finite_difference",
    "one_form_semigroup",
    "q_form_semigroup",
    "form_exterior_gradient",
)
