"""Driving noise and base SDE integration on a fixed time grid.

Noise is produced by a counter-based generator (Philox) keyed on
``(seed, path_index)`` so that every path is reproducible in isolation and
distinct paths use provably independent streams.  The integrator is
Euler-Maruyama in the ambient space, with a retraction step for
manifold-constrained models.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DimensionMismatch, MissingDerivative

_UINT64_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on [0, t_end] with points t_k = k * dt exactly."""

    t_end: float
    n_steps: int

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")

    @property
    def dt(self) -> float:
        return self.t_end / self.n_steps

    def times(self) -> np.ndarray:
        # k * dt elementwise, never a cumulative sum
        return np.arange(self.n_steps + 1) * self.dt


@dataclass(frozen=True)
class NoisePath:
    """Brownian increments for one path: shape (n_steps, m), each N(0, dt I)."""

    increments: np.ndarray
    seed: int
    path_index: int


@dataclass(eq=False)
class Trajectory:
    """Discretized solution path plus blow-up bookkeeping."""

    states: np.ndarray  # (n_steps + 1, n)
    grid: TimeGrid
    blew_up: bool = False
    blow_up_step: Optional[int] = None
    fk_weight: Optional[float] = None


def philox_rng(seed: int, path_index: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator for one (seed, path_index, stream) triple.

    ``path_index`` occupies the highest counter word and ``stream`` the next,
    so per-path streams and per-path sub-streams can never overlap.
    """
    counter = np.array([0, 0, stream, path_index], dtype=np.uint64)
    key = np.uint64(int(seed) & _UINT64_MASK)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def generate_noise(grid: TimeGrid, seed: int, path_index: int, m: int) -> NoisePath:
    """Draw the n_steps Brownian increments of one path.

    Deterministic in (seed, path_index); distinct path indices give
    independent streams.
    """
    if m < 1:
        raise DimensionMismatch(f"noise dimension m must be >= 1, got {m}")
    rng = philox_rng(seed, path_index)
    increments = rng.standard_normal((grid.n_steps, m)) * np.sqrt(grid.dt)
    return NoisePath(increments=increments, seed=seed, path_index=path_index)


class _NoiseSource:
    """One reusable Philox generator, counter-reset per (seed, path, stream).

    Resetting the state dict produces draws bit-identical to constructing a
    fresh Philox with the same key and counter, without the per-construction
    entropy cost.
    """

    def __init__(self):
        self._bg = np.random.Philox(key=np.uint64(0))
        self._gen = np.random.Generator(self._bg)

    def at(self, seed: int, path_index: int, stream: int = 0) -> np.random.Generator:
        self._bg.state = {
            "bit_generator": "Philox",
            "state": {
                "counter": np.array([0, 0, stream, path_index], dtype=np.uint64),
                "key": np.array([int(seed) & _UINT64_MASK, 0], dtype=np.uint64),
            },
            "buffer": np.zeros(4, dtype=np.uint64),
            "buffer_pos": 4,
            "has_uint32": 0,
            "uinteger": 0,
        }
        return self._gen


def noise_block(grid: TimeGrid, seed: int, lo: int, hi: int, m: int,
                stream: int = 0) -> np.ndarray:
    """Increments for paths lo..hi-1 stacked as (hi-lo, n_steps, m).

    Row i is bit-identical to ``generate_noise(grid, seed, lo + i, m)``.
    """
    out = np.empty((hi - lo, grid.n_steps, m))
    source = _NoiseSource()
    for i, p in enumerate(range(lo, hi)):
        source.at(seed, p, stream).standard_normal((grid.n_steps, m), out=out[i])
    out *= np.sqrt(grid.dt)
    return out


def stratonovich_to_ito_drift(model, x) -> np.ndarray:
    """Ito drift A(x) + 1/2 sum_i DX^i(x)(X^i(x)) of a Stratonovich model."""
    if model.DX is None:
        raise MissingDerivative("DX is required for the Stratonovich drift correction")
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    xb = x[None, :] if squeeze else x
    out = _strat_correction(model, xb)
    if model.A is not None:
        out = out + model.A(xb)
    return out[0] if squeeze else out


def _strat_correction(model, x) -> np.ndarray:
    """1/2 sum_i DX(x)(X^i(x)) e_i for batched x of shape (B, n)."""
    cols = model.X(x)  # (B, n, m)
    acc = np.zeros(x.shape)
    for i in range(model.m):
        acc += model.DX(x, cols[..., i])[..., i]
    return 0.5 * acc


def resolve_ito_drift(model):
    """Return a batched callable for the Ito drift of ``model``."""
    if model.Z is not None:
        return model.Z
    if model.A is None and model.DX is None:
        raise MissingDerivative("model supplies neither Z nor (A, DX)")
    if model.DX is None:
        raise MissingDerivative("DX is required to convert the Stratonovich drift")

    def drift(x):
        out = _strat_correction(model, x)
        if model.A is not None:
            out = out + model.A(x)
        return out

    return drift


def _ambient_step(model, drift, x, dW, dt):
    """One Euler step for a batch of states x: (B, n) with noise dW: (B, m)."""
    geom = model.geometry
    if geom is not None and geom.step is not None:
        return geom.step(x, dW, dt)
    Xm = model.X(x)
    x1 = x + np.einsum("bnm,bm->bn", Xm, dW) + drift(x) * dt
    if geom is not None:
        x1 = geom.retract(x1)
    return x1


def integrate_block(model, x0s: np.ndarray, grid: TimeGrid, dWs: np.ndarray):
    """Integrate a block of paths, returning all states and blow-up flags.

    Returns (states (B, K+1, n), alive (B,), blow_step (B,) with -1 for none).
    Used by per-path wrappers and path-storing diagnostics; estimators use
    fused loops instead to avoid storing whole blocks of states.
    """
    B, K, m = dWs.shape
    if m != model.m:
        raise DimensionMismatch(f"noise has m={m}, model expects m={model.m}")
    drift = resolve_ito_drift(model)
    states = np.empty((B, K + 1, model.n))
    states[:, 0] = x0s
    alive = np.ones(B, dtype=bool)
    blow_step = np.full(B, -1, dtype=int)
    x = x0s.copy()
    for k in range(K):
        x1 = _ambient_step(model, drift, x, dWs[:, k], grid.dt)
        bad = alive & ~(np.linalg.norm(x1, axis=-1) <= model.blow_up_radius)
        blow_step[bad] = k + 1
        alive &= ~bad
        x = np.where(alive[:, None], x1, x)
        states[:, k + 1] = x
    return states, alive, blow_step


def _integrate_single(model, x0, grid, noise) -> Trajectory:
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.shape != (model.n,):
        raise DimensionMismatch(f"x0 has shape {x0.shape}, expected ({model.n},)")
    states, alive, blow_step = integrate_block(model, x0[None, :], grid,
                                               noise.increments[None])
    blew = not alive[0]
    return Trajectory(states=states[0], grid=grid, blew_up=blew,
                      blow_up_step=int(blow_step[0]) if blew else None)


def integrate_ito(model, x0, grid: TimeGrid, noise: NoisePath) -> Trajectory:
    """Euler-Maruyama for dx = X(x) dB + Z(x) dt, retracting constrained models."""
    if model.Z is None and model.A is None:
        raise MissingDerivative("model supplies no drift (Z or A)")
    return _integrate_single(model, x0, grid, noise)


def integrate_stratonovich(model, x0, grid: TimeGrid, noise: NoisePath) -> Trajectory:
    """Integrate dx = X(x) o dB + A(x) dt via the Ito drift correction.

    When the model declares an analytic Ito drift Z consistent with (A, DX)
    it is used directly, so Ito and Stratonovich entry points produce
    bit-identical trajectories for the built-in models.
    """
    if model.Z is None and model.DX is None:
        raise MissingDerivative("Stratonovich integration needs DX for the drift correction")
    return _integrate_single(model, x0, grid, noise)
