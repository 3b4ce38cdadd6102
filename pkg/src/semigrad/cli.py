"""Config-driven experiment runner.

Subcommands: ``run`` (one experiment), ``suite`` (a manifest of experiments,
CSV + JSON reports), ``check`` (the diagnostic suite for a scenario), and
``list`` (registry contents).  Configs are flat key=value text or JSON; a
report echoes the config, the estimate, the analytic oracle when the
registry declares one, and a pass/fail verdict at the configured tolerance.

Exit codes: 0 pass, 2 tolerance failure, 1 error.
SEMIGRAD_THREADS caps the worker count; results do not depend on it.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np

from . import diagnostics, estimators, forms
from .errors import InvalidConfig, SemigradError, UnknownEstimator
from .models import PotentialField
from .paths import TimeGrid
from .registry import ESTIMATOR_IDS, get_scenario, scenario_ids

CSV_COLUMNS = ["scenario", "estimator", "t", "n_paths", "n_steps", "seed",
               "mean", "std_error", "oracle", "abs_error", "pass", "wall_ms"]

_DEFAULTS = dict(t=1.0, n_paths=200_000, n_steps=1000, seed=0,
                 tol_rel=0.02, tol_abs=0.01)


@dataclass
class ExperimentConfig:
    scenario: str
    estimator: str
    observable: str = ""
    form: str = ""
    t: float = 1.0
    n_paths: int = 200_000
    n_steps: int = 1000
    seed: int = 0
    x0: Optional[np.ndarray] = None
    v0: Optional[np.ndarray] = None
    u0: Optional[np.ndarray] = None
    y: Optional[np.ndarray] = None
    potential: str = ""
    bandwidth: float = 0.05
    kernel: str = "box"
    n_inner: int = 8
    delta: float = 1e-3
    tol_rel: float = 0.02
    tol_abs: float = 0.01
    out: str = ""
    format: str = "json"

    def validate(self):
        if self.t <= 0:
            raise InvalidConfig("t must be positive")
        if self.n_paths < 1:
            raise InvalidConfig("n_paths must be >= 1")
        if self.estimator not in ESTIMATOR_IDS:
            raise UnknownEstimator(
                f"unknown estimator {self.estimator!r}; known: {list(ESTIMATOR_IDS)}")
        get_scenario(self.scenario)

    def echo(self) -> dict:
        d = {}
        for key, val in asdict(self).items():
            if isinstance(val, np.ndarray):
                val = [float(x) for x in val]
            d[key] = val
        return d


@dataclass
class ReportRecord:
    config: dict
    mean: float
    std_error: float
    n_paths: int
    n_rejected: int
    seed: int
    oracle: Optional[float]
    abs_error: Optional[float]
    passed: Optional[bool]
    wall_ms: float
    metadata: dict = field(default_factory=dict)
    error: str = ""

    def csv_row(self):
        cfg = self.config
        return [cfg.get("scenario", ""), cfg.get("estimator", ""),
                cfg.get("t", ""), cfg.get("n_paths", ""), cfg.get("n_steps", ""),
                cfg.get("seed", ""),
                repr(self.mean) if self.mean is not None else "",
                repr(self.std_error) if self.std_error is not None else "",
                "" if self.oracle is None else repr(self.oracle),
                "" if self.abs_error is None else repr(self.abs_error),
                "" if self.passed is None else str(self.passed).lower(),
                f"{self.wall_ms:.1f}"]

    def to_json(self) -> dict:
        return {"config": self.config, "mean": self.mean,
                "std_error": self.std_error, "n_paths": self.n_paths,
                "n_rejected": self.n_rejected, "seed": self.seed,
                "oracle": self.oracle, "abs_error": self.abs_error,
                "pass": self.passed, "wall_ms": self.wall_ms,
                "metadata": _json_safe(self.metadata), "error": self.error}


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def _parse_vector(text) -> np.ndarray:
    if isinstance(text, (list, tuple)):
        return np.asarray(text, dtype=float)
    return np.asarray([float(p) for p in str(text).split(",")], dtype=float)


_VECTOR_KEYS = ("x0", "v0", "u0", "y")
_INT_KEYS = ("n_paths", "n_steps", "seed", "n_inner")
_FLOAT_KEYS = ("t", "bandwidth", "delta", "tol_rel", "tol_abs")
_ALIASES = {"f": "observable", "paths": "n_paths", "steps": "n_steps"}


def config_from_dict(raw: dict) -> ExperimentConfig:
    data = {}
    for key, val in raw.items():
        key = _ALIASES.get(key, key)
        if key in _VECTOR_KEYS:
            val = _parse_vector(val)
        elif key in _INT_KEYS:
            val = int(float(val))
        elif key in _FLOAT_KEYS:
            val = float(val)
        data[key] = val
    try:
        cfg = ExperimentConfig(**data)
    except TypeError as exc:
        raise InvalidConfig(str(exc)) from None
    cfg.validate()
    return cfg


def parse_config_text(text: str) -> ExperimentConfig:
    """Flat key=value lines (# comments allowed) or a JSON object."""
    stripped = text.strip()
    if stripped.startswith("{"):
        return config_from_dict(json.loads(stripped))
    raw = {}
    for line in stripped.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise InvalidConfig(f"expected key=value, got {line!r}")
        key, val = line.split("=", 1)
        raw[key.strip()] = val.strip()
    if not raw:
        raise InvalidConfig("empty config")
    return config_from_dict(raw)


def _build_potential(cfg: ExperimentConfig) -> PotentialField:
    text = cfg.potential or "const:0"
    kind, _, arg = text.partition(":")
    val = float(arg or 0.0)
    if kind == "const":
        return PotentialField(
            V=lambda t, x: np.full(x.shape[:-1], val),
            dV=lambda t, x: np.zeros_like(x),
            upper_bound=val, name=text)
    if kind == "ramp":
        return PotentialField(
            V=lambda t, x: np.full(x.shape[:-1], val * t),
            dV=lambda t, x: np.zeros_like(x),
            upper_bound=max(val * cfg.t, 0.0), name=text)
    raise InvalidConfig(f"unknown potential {text!r} (use const:<c> or ramp:<a>)")


def _run_estimator(cfg: ExperimentConfig):
    sc = get_scenario(cfg.scenario)
    model = sc.make()
    grid = TimeGrid(t_end=cfg.t, n_steps=cfg.n_steps)
    x0 = cfg.x0 if cfg.x0 is not None else sc.x0
    v0 = cfg.v0 if cfg.v0 is not None else sc.v0
    u0 = cfg.u0 if cfg.u0 is not None else sc.u0
    cfg.x0, cfg.v0, cfg.u0 = np.asarray(x0, float), np.asarray(v0, float), np.asarray(u0, float)
    kw = dict(n_paths=cfg.n_paths, seed=cfg.seed)
    est = cfg.estimator
    if est == "semigroup_value":
        return estimators.semigroup_value(model, sc.observable(cfg.observable),
                                          grid, x0, **kw)
    if est == "pathwise_gradient":
        return estimators.pathwise_gradient(model, sc.observable(cfg.observable),
                                            grid, x0, v0, **kw)
    if est == "bel_gradient":
        return estimators.bel_gradient(model, sc.observable(cfg.observable),
                                       grid, x0, v0, **kw)
    if est in ("bel_hessian_weights", "bel_hessian_nested"):
        variant = est.rsplit("_", 1)[1]
        return estimators.bel_hessian(model, sc.observable(cfg.observable),
                                      grid, x0, u0, v0, variant=variant,
                                      n_inner=cfg.n_inner, **kw)
    if est == "potential_gradient":
        return estimators.potential_gradient(model, sc.observable(cfg.observable),
                                             _build_potential(cfg), grid, x0, v0, **kw)
    if est == "hessian_flow_gradient":
        return estimators.hessian_flow_gradient(model, sc.observable(cfg.observable),
                                                grid, x0, v0, **kw)
    if est == "score_gradient":
        if cfg.y is None:
            raise InvalidConfig("score_gradient needs a target point y")
        bins = estimators.ConditionalBinSpec(target=np.asarray(cfg.y, float),
                                             bandwidth=cfg.bandwidth,
                                             kernel=cfg.kernel)
        return estimators.score_gradient(model, grid, x0, v0, bins, **kw)
    if est == "lie_group_gradient":
        return estimators.lie_group_gradient(model, sc.observable(cfg.observable),
                                             grid, v0, **kw)
    if est == "finite_difference":
        return diagnostics.finite_difference_oracle(model, sc.observable(cfg.observable),
                                                    grid, x0, v0, delta=cfg.delta, **kw)
    if est == "one_form_semigroup":
        return forms.one_form_semigroup(model, sc.form(cfg.form), grid, x0, v0, **kw)
    if est == "q_form_semigroup":
        form = sc.form(cfg.form)
        vectors = (v0,) if form.degree == 1 else (u0, v0)
        return forms.q_form_semigroup(model, form, grid, x0, vectors, **kw)
    if est == "form_exterior_gradient":
        if cfg.form:
            form = sc.form(cfg.form)
        else:
            form = forms.zero_form_from_observable(sc.observable(cfg.observable))
        vectors = (v0,) if form.degree == 0 else (u0, v0)
        return forms.form_exterior_gradient(model, form, grid, x0, vectors, **kw)
    raise UnknownEstimator(est)


def _oracle_for(cfg: ExperimentConfig) -> Optional[float]:
    sc = get_scenario(cfg.scenario)
    key = (cfg.estimator, cfg.form or cfg.observable)
    fn = sc.oracles.get(key)
    if fn is None:
        return None
    return float(fn(cfg))


def run_experiment(cfg: ExperimentConfig) -> ReportRecord:
    """Run one configured estimator and attach the registry oracle."""
    t0 = time.perf_counter()
    result = _run_estimator(cfg)
    wall_ms = (time.perf_counter() - t0) * 1e3
    oracle = _oracle_for(cfg)
    abs_error = None
    passed = None
    if oracle is not None:
        abs_error = abs(result.mean - oracle)
        tol = max(3.0 * result.std_error, cfg.tol_rel * abs(oracle), cfg.tol_abs)
        passed = bool(abs_error <= tol) and result.valid
    return ReportRecord(config=cfg.echo(), mean=result.mean,
                        std_error=result.std_error, n_paths=result.n_paths,
                        n_rejected=result.n_rejected, seed=result.seed,
                        oracle=oracle, abs_error=abs_error, passed=passed,
                        wall_ms=wall_ms, metadata=result.metadata)


def _error_record(raw_cfg: dict, exc: Exception) -> ReportRecord:
    return ReportRecord(config=dict(raw_cfg), mean=None, std_error=None,
                        n_paths=0, n_rejected=0, seed=raw_cfg.get("seed", 0),
                        oracle=None, abs_error=None, passed=None, wall_ms=0.0,
                        error=f"{type(exc).__name__}: {exc}")


def run_suite(manifest_path: str):
    """Run a JSON manifest (array of config objects); returns (records, had_error)."""
    with open(manifest_path) as fh:
        entries = json.load(fh)
    if not isinstance(entries, list):
        raise InvalidConfig("suite manifest must be a JSON array of configs")
    records = []
    had_error = False
    for raw in entries:
        try:
            cfg = config_from_dict(raw)
            records.append(run_experiment(cfg))
        except Exception as exc:  # noqa: BLE001 - suite aggregates failures
            had_error = True
            records.append(_error_record(raw, exc))
    return records, had_error


def records_to_csv(records) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(CSV_COLUMNS)
    for rec in records:
        writer.writerow(rec.csv_row())
    return buf.getvalue()


def list_scenarios() -> str:
    """Sorted registry listing with per-scenario oracle coverage."""
    lines = []
    for sid in scenario_ids():
        sc = get_scenario(sid)
        oracles = sorted({f"{est}({obs})" for est, obs in sc.oracles})
        oracle_text = ", ".join(oracles) if oracles else "none"
        lines.append(f"{sid}: {sc.description}")
        lines.append(f"  observables: {', '.join(sorted(sc.observables)) or 'none'}")
        lines.append(f"  forms: {', '.join(sorted(sc.forms)) or 'none'}")
        lines.append(f"  oracles: {oracle_text}")
    lines.append("estimators: " + ", ".join(ESTIMATOR_IDS))
    return "\n".join(lines)


def run_checks(scenario_id: str, *, n_paths=20_000, n_steps=400, t=1.0, seed=0):
    """Diagnostic suite for one scenario; returns a list of BoundCheckReports."""
    import numpy as _np

    from .models import apply_coeff, apply_right_inverse, sample_directions, sample_points

    sc = get_scenario(scenario_id)
    model = sc.make()
    grid = TimeGrid(t_end=t, n_steps=n_steps)
    v0 = sc.v0
    if model.kind == "lie_group":
        from .models import skew_from_axis

        v0 = skew_from_axis(sc.v0).reshape(-1)
    checks = []
    checks.append(diagnostics.martingale_mean_check(
        model, grid, sc.x0, v0, n_paths=n_paths, seed=seed))
    checks.append(diagnostics.moment_bound_check(
        model, grid, sc.x0, v0, p=2, n_paths=n_paths, seed=seed))
    pts = sample_points(model, 64, seed)
    dirs = sample_directions(model, pts, seed + 1)
    resid = float(_np.max(_np.abs(
        apply_coeff(model, pts, apply_right_inverse(model, pts, dirs)) - dirs)))
    checks.append(diagnostics.BoundCheckReport(
        name="right_inverse_identity", claimed_bound=1e-8, empirical=resid,
        margin=1e-8 - resid, passed=bool(resid <= 1e-8),
        details={"n_samples": 64}))
    if model.geometry is not None:
        worst = diagnostics.constraint_violation(model, grid, sc.x0,
                                                 n_paths=min(n_paths, 10_000), seed=seed)
        checks.append(diagnostics.BoundCheckReport(
            name="manifold_constraint", claimed_bound=1e-9, empirical=worst,
            margin=1e-9 - worst, passed=bool(worst <= 1e-9), details={}))
    else:
        obs = next(iter(sc.observables.values()))
        checks.append(diagnostics.gronwall_gradient_bound(
            model, obs, grid, sc.x0, v0, n_paths=n_paths, seed=seed))
    return checks


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="semigrad",
        description="Monte Carlo estimation of diffusion semigroup derivatives")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment")
    p_run.add_argument("--config", required=True, help="key=value or JSON config file")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--paths", type=int, default=None)
    p_run.add_argument("--steps", type=int, default=None)
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--format", choices=("csv", "json"), default=None)

    p_suite = sub.add_parser("suite", help="run a JSON manifest of experiments")
    p_suite.add_argument("manifest")
    p_suite.add_argument("--out", default=None, help="output stem (.csv and .json)")

    p_check = sub.add_parser("check", help="run the diagnostic suite for a scenario")
    p_check.add_argument("scenario")
    p_check.add_argument("--paths", type=int, default=20_000)
    p_check.add_argument("--steps", type=int, default=400)
    p_check.add_argument("--seed", type=int, default=0)
    p_check.add_argument("--out", default=None)

    sub.add_parser("list", help="list registered scenarios and estimators")

    args = parser.parse_args(argv)
    try:
        if args.command == "list":
            print(list_scenarios())
            return 0
        if args.command == "run":
            with open(args.config) as fh:
                cfg = parse_config_text(fh.read())
            if args.seed is not None:
                cfg.seed = args.seed
            if args.paths is not None:
                cfg.n_paths = args.paths
            if args.steps is not None:
                cfg.n_steps = args.steps
            if args.out is not None:
                cfg.out = args.out
            if args.format is not None:
                cfg.format = args.format
            record = run_experiment(cfg)
            _emit([record], cfg.out, cfg.format)
            if record.passed is None:
                return 0
            return 0 if record.passed else 2
        if args.command == "suite":
            records, had_error = run_suite(args.manifest)
            stem = args.out
            csv_text = records_to_csv(records)
            json_text = json.dumps([r.to_json() for r in records], indent=2)
            if stem:
                with open(stem + ".csv", "w") as fh:
                    fh.write(csv_text)
                with open(stem + ".json", "w") as fh:
                    fh.write(json_text)
            else:
                sys.stdout.write(csv_text)
            if had_error:
                return 1
            failed = [r for r in records if r.passed is False]
            return 2 if failed else 0
        if args.command == "check":
            checks = run_checks(args.scenario, n_paths=args.paths,
                                n_steps=args.steps, seed=args.seed)
            payload = []
            ok = True
            for chk in checks:
                status = "PASS" if chk.passed else "FAIL"
                print(f"CHECK {chk.name}: {status} "
                      f"(empirical={chk.empirical:.6g}, bound={chk.claimed_bound:.6g})")
                ok &= chk.passed
                payload.append({"name": chk.name, "passed": chk.passed,
                                "empirical": chk.empirical,
                                "bound": chk.claimed_bound,
                                "details": _json_safe(chk.details)})
            if args.out:
                with open(args.out, "w") as fh:
                    json.dump(payload, fh, indent=2)
            return 0 if ok else 2
    except SemigradError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def _emit(records, out, fmt):
    if fmt == "csv":
        text = records_to_csv(records)
    else:
        payload = [r.to_json() for r in records]
        text = json.dumps(payload[0] if len(payload) == 1 else payload, indent=2)
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        print(text)


if __name__ == "__main__":
    sys.exit(main())
