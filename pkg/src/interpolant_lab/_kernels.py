"""Hot numerical kernels with a numba fast path and a pure-numpy fallback.

The numba path is used when numba imports cleanly and the environment
variable ``INTERPOLANT_LAB_DISABLE_NUMBA`` is unset (or "0").  Both paths
compute identical expressions, so switching the flag only changes speed.
``benchmarks/bench_kernels.py`` compares the two.
"""

import os

import numpy as np

try:
    import numba

    HAS_NUMBA = True
except ImportError:
    numba = None
    HAS_NUMBA = False

_DISABLED = os.environ.get("INTERPOLANT_LAB_DISABLE_NUMBA", "0") not in ("0", "")
USE_NUMBA = HAS_NUMBA and not _DISABLED


def _tanh_gate_outer_numpy(dots, h, beta, beta_dot, direction):
    gate = np.tanh(h + beta * dots)
    return beta_dot * gate[:, None] * direction[None, :]


def _em_update_numpy(state, drift_val, score_val, eps, noise_scale, dt, noise):
    return state + dt * (drift_val + eps * score_val) + noise_scale * noise


if USE_NUMBA:

    @numba.njit(parallel=True, cache=True)
    def _tanh_gate_outer_numba(dots, h, beta, beta_dot, direction):
        n = dots.shape[0]
        d = direction.shape[0]
        out = np.empty((n, d))
        for i in numba.prange(n):
            gate = beta_dot * np.tanh(h + beta * dots[i])
            for j in range(d):
                out[i, j] = gate * direction[j]
        return out

    @numba.njit(parallel=True, cache=True)
    def _em_update_numba(state, drift_val, score_val, eps, noise_scale, dt, noise):
        n, d = state.shape
        out = np.empty((n, d))
        for i in numba.prange(n):
            for j in range(d):
                out[i, j] = (
                    state[i, j]
                    + dt * (drift_val[i, j] + eps * score_val[i, j])
                    + noise_scale * noise[i, j]
                )
        return out

    def tanh_gate_outer(dots, h, beta, beta_dot, direction):
        return _tanh_gate_outer_numba(
            np.ascontiguousarray(dots),
            float(h),
            float(beta),
            float(beta_dot),
            np.ascontiguousarray(direction),
        )

    def em_update(state, drift_val, score_val, eps, noise_scale, dt, noise):
        return _em_update_numba(
            np.ascontiguousarray(state),
            np.ascontiguousarray(drift_val),
            np.ascontiguousarray(score_val),
            float(eps),
            float(noise_scale),
            float(dt),
            np.ascontiguousarray(noise),
        )

else:
    tanh_gate_outer = _tanh_gate_outer_numpy
    em_update = _em_update_numpy
