"""Fixed-step integrators for the generative ODE and SDE.

Integration runs on a uniform time grid over ``[t_min, t_max]`` strictly
inside (0, 1), where drift and score oracles are finite.  The starting state
is pure scaled noise ``alpha(t_min) z``; the dropped target contribution is
bounded by ``beta(t_min) E||x1||`` and negligible at the default window.
"""

import struct
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DivergenceError
from .rng import stream_rng
from .targets import SampleBatch

_METHODS = ("euler", "heun", "rk4", "euler-maruyama")
_DIVERGENCE_NORM = 1e12


@dataclass
class IntegratorConfig:
    """Settings for a fixed-step integration run.

    Attributes:
        method: one of "euler", "heun", "rk4", "euler-maruyama".
        steps: number of uniform steps, at least 1.
        t_min: window start, in (0, t_max).
        t_max: window end, in (t_min, 1).
        store_trajectory: record every intermediate state when set.
    """

    method: str = "rk4"
    steps: int = 20
    t_min: float = 1e-3
    t_max: float = 1.0 - 1e-3
    store_trajectory: bool = False

    def __post_init__(self):
        if self.method not in _METHODS:
            raise ValueError(f"unknown integrator method '{self.method}', expected one of {_METHODS}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError(f"steps must be a positive integer, got {self.steps}")
        self.steps = int(self.steps)
        if not 0.0 < self.t_min < self.t_max < 1.0:
            raise ValueError(
                f"integration window must satisfy 0 < t_min < t_max < 1, got [{self.t_min}, {self.t_max}]"
            )


@dataclass
class Trajectory:
    """Recorded integration frames: step indices, times, and states."""

    steps: np.ndarray
    times: np.ndarray
    states: np.ndarray

    _HEADER = struct.Struct("<qqq")
    _FRAME = struct.Struct("<qd")

    def save(self, path):
        """Write frames as binary records (step index, time, state block)."""
        states = np.ascontiguousarray(self.states, dtype=np.float64)
        k, n, d = states.shape
        with open(path, "wb") as fh:
            fh.write(self._HEADER.pack(k, n, d))
            for i in range(k):
                fh.write(self._FRAME.pack(int(self.steps[i]), float(self.times[i])))
                fh.write(states[i].tobytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            raw = fh.read()
        k, n, d = cls._HEADER.unpack_from(raw, 0)
        offset = cls._HEADER.size
        frame_bytes = cls._FRAME.size + 8 * n * d
        expected = offset + k * frame_bytes
        if len(raw) != expected:
            raise ValueError(f"trajectory file has {len(raw)} bytes, expected {expected}")
        steps = np.empty(k, dtype=np.int64)
        times = np.empty(k)
        states = np.empty((k, n, d))
        for i in range(k):
            step, t = cls._FRAME.unpack_from(raw, offset)
            offset += cls._FRAME.size
            steps[i] = step
            times[i] = t
            states[i] = np.frombuffer(raw, dtype=np.float64, count=n * d, offset=offset).reshape(n, d)
            offset += 8 * n * d
        return cls(steps=steps, times=times, states=states)


def initial_state(schedule, target, n, seed, t_min=1e-3):
    """Draw the integration start state ``alpha(t_min) z``.

    Args:
        schedule: Schedule instance.
        target: target providing ``sample_noise`` (sets the base density).
        n: number of samples.
        seed: master seed; the draw uses the "integrate" stream.
        t_min: window start the state is anchored at.

    Returns:
        SampleBatch at time t_min.
    """
    rng = stream_rng(seed, "integrate")
    noise = target.sample_noise(int(n), rng)
    return SampleBatch(data=schedule.alpha(t_min) * noise, t=float(t_min), seed=int(seed))


def _check_state(state, step, t):
    norms = np.linalg.norm(state, axis=1)
    worst = float(np.max(norms)) if norms.size else 0.0
    if not np.isfinite(worst) or worst > _DIVERGENCE_NORM:
        raise DivergenceError(step=step, t=t, norm=worst)


def integrate_ode(drift, initial, config):
    """Push a sample batch through the deterministic transport ODE.

    Args:
        drift: DriftOracle evaluated as ``drift.fn(t, state)``.
        initial: SampleBatch anchored at ``config.t_min``.
        config: IntegratorConfig with a deterministic method.

    Returns:
        SampleBatch at ``config.t_max``; with ``store_trajectory`` set,
        a ``(SampleBatch, Trajectory)`` pair instead.

    Raises:
        DivergenceError: non-finite state or norm above the guard threshold.
        ValueError: stochastic method, or initial batch anchored elsewhere.
    """
    if config.method == "euler-maruyama":
        raise ValueError("integrate_ode requires a deterministic method; use integrate_sde for euler-maruyama")
    if abs(initial.t - config.t_min) > 1e-12:
        raise ValueError(f"initial batch is anchored at t={initial.t}, expected t_min={config.t_min}")
    state = initial.data.copy()
    dt = (config.t_max - config.t_min) / config.steps
    frames = [(0, config.t_min, state.copy())] if config.store_trajectory else None

    for step in range(config.steps):
        t = config.t_min + step * dt
        if config.method == "euler":
            state = state + dt * drift.fn(t, state)
        elif config.method == "heun":
            k1 = drift.fn(t, state)
            k2 = drift.fn(t + dt, state + dt * k1)
            state = state + 0.5 * dt * (k1 + k2)
        else:
            k1 = drift.fn(t, state)
            k2 = drift.fn(t + 0.5 * dt, state + 0.5 * dt * k1)
            k3 = drift.fn(t + 0.5 * dt, state + 0.5 * dt * k2)
            k4 = drift.fn(t + dt, state + dt * k3)
            state = state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        _check_state(state, step + 1, t + dt)
        if frames is not None:
            frames.append((step + 1, t + dt, state.copy()))

    result = SampleBatch(data=state, t=config.t_max, seed=initial.seed)
    if frames is None:
        return result
    trajectory = Trajectory(
        steps=np.array([f[0] for f in frames], dtype=np.int64),
        times=np.array([f[1] for f in frames]),
        states=np.stack([f[2] for f in frames]),
    )
    return result, trajectory


def integrate_sde(drift, score, epsilon, initial, config, seed):
    """Euler-Maruyama integration of the noise-augmented transport SDE.

    Each step adds ``dt (b + eps s)`` plus a Gaussian increment of variance
    ``2 eps dt``.  Increments come from a single seed-derived stream drawn
    in step order, so runs are reproducible; thread-parallel kernels only
    consume the pre-drawn arrays and cannot reorder them.

    Args:
        drift: DriftOracle.
        score: ScoreOracle for the same schedule and target.
        epsilon: callable t -> nonnegative diffusion scale.
        initial: SampleBatch anchored at ``config.t_min``.
        config: IntegratorConfig with method "euler-maruyama".
        seed: master seed for the Brownian increments ("em" stream).

    Returns:
        SampleBatch at ``config.t_max``; with ``store_trajectory`` set,
        a ``(SampleBatch, Trajectory)`` pair instead.

    Raises:
        ValueError: wrong method, or negative epsilon on the grid.
        DivergenceError: non-finite state or norm above the guard threshold.
    """
    if config.method != "euler-maruyama":
        raise ValueError(f"integrate_sde requires method 'euler-maruyama', got '{config.method}'")
    if abs(initial.t - config.t_min) > 1e-12:
        raise ValueError(f"initial batch is anchored at t={initial.t}, expected t_min={config.t_min}")
    dt = (config.t_max - config.t_min) / config.steps
    grid = config.t_min + dt * np.arange(config.steps)
    eps_values = np.asarray([float(epsilon(t)) for t in grid])
    if np.any(eps_values < 0.0) or not np.all(np.isfinite(eps_values)):
        raise ValueError("epsilon must be finite and nonnegative on the integration grid")

    state = initial.data.copy()
    rng = stream_rng(seed, "em")
    frames = [(0, config.t_min, state.copy())] if config.store_trajectory else None

    for step in range(config.steps):
        t = grid[step]
        eps = eps_values[step]
        noise = rng.standard_normal(state.shape)
        state = _kernels.em_update(
            state,
            drift.fn(t, state),
            score.fn(t, state),
            eps,
            np.sqrt(2.0 * eps * dt),
            dt,
            noise,
        )
        _check_state(state, step + 1, t + dt)
        if frames is not None:
            frames.append((step + 1, t + dt, state.copy()))

    result = SampleBatch(data=state, t=config.t_max, seed=initial.seed)
    if frames is None:
        return result
    trajectory = Trajectory(
        steps=np.array([f[0] for f in frames], dtype=np.int64),
        times=np.array([f[1] for f in frames]),
        states=np.stack([f[2] for f in frames]),
    )
    return result, trajectory
