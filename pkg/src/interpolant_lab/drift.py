"""Velocity-field oracles for interpolant transport.

Every oracle packages a closed-form drift ``b(t, x)`` together with optional
Jacobian information and the schedule/target it was built for.  Evaluation is
vectorized over a sample batch: ``t`` is a scalar time and ``x`` has shape
``(n, d)``.  ``jacobian(t, x)`` takes a single state of shape ``(d,)`` and
returns the dense ``(d, d)`` matrix; ``jacobian_norm(t, x)`` takes a batch and
returns per-sample spectral norms of shape ``(n,)``.

Drifts here are gradients of a time-dependent potential, so their Jacobians
are symmetric and the spectral norm equals the largest eigenvalue magnitude.
Oracles without an analytic norm fall back to power iteration on
finite-difference Jacobian products.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import _kernels
from .rng import stream_rng
from .targets import BimodalGmmTarget, GaussianTarget, GeneralGmmTarget, SineBasis

_FD_SCALE = 1e-5
_POWER_ITERS = 20
_POWER_TOL = 1e-6


@dataclass
class DriftOracle:
    """Closed-form velocity field with optional derivative information.

    Attributes:
        fn: drift evaluation, (scalar t, (n, d) batch) -> (n, d) velocities.
        jacobian: optional (t, (d,) state) -> (d, d) matrix.
        jacobian_norm: optional (t, (n, d) batch) -> (n,) spectral norms.
        schedule: schedule the oracle was built for, if any.
        target: target distribution the oracle was built for, if any.
        label: short description used in reports.
        path_sampler: optional (t, n, rng) -> (n, d) draw from the marginal
            law the drift transports, for oracles whose path is not the
            stochastic interpolant (the constant-speed Gaussian path).
    """

    fn: Callable
    jacobian: Optional[Callable] = None
    jacobian_norm: Optional[Callable] = None
    schedule: object = None
    target: object = None
    label: str = ""
    path_sampler: Optional[Callable] = None

    def __call__(self, t, x):
        return self.fn(t, x)


@dataclass
class ScoreOracle:
    """Score of the time-t interpolant marginal, same batch conventions."""

    fn: Callable
    schedule: object = None
    target: object = None
    label: str = ""

    def __call__(self, t, x):
        return self.fn(t, x)


def _as_batch(x):
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        return arr[None, :], True
    if arr.ndim != 2:
        raise ValueError(f"drift input must be (n, d) or (d,), got shape {arr.shape}")
    return arr, False


def _restore_batch(values, was_single):
    return values[0] if was_single else values


def fd_jacobian(fn, t, x, scale=_FD_SCALE):
    """Dense central-difference Jacobian of a drift at one state.

    The step is ``scale * (1 + |x_i|)`` per coordinate, matching the
    tolerance contract used by the Jacobian consistency checks.
    """
    state = np.asarray(x, dtype=float)
    d = state.shape[0]
    jac = np.empty((d, d))
    for i in range(d):
        step = scale * (1.0 + abs(state[i]))
        hi = state.copy()
        lo = state.copy()
        hi[i] += step
        lo[i] -= step
        jac[:, i] = (fn(t, hi[None, :])[0] - fn(t, lo[None, :])[0]) / (2.0 * step)
    return jac


def fd_jacobian_norm(fn, t, x, iters=_POWER_ITERS, tol=_POWER_TOL):
    """Per-sample spectral norms via power iteration on FD Jacobian products.

    Jacobians of the drifts in this package are symmetric, so iterating
    ``v <- J v`` with central-difference products converges to the largest
    eigenvalue magnitude.  The probe direction is drawn from a fixed stream
    so the estimate is deterministic.

    Args:
        fn: drift evaluation with batch conventions.
        t: scalar time.
        x: batch of states, shape (n, d).
        iters: maximum power iterations.
        tol: relative change in the Rayleigh estimate that stops iteration.

    Returns:
        Array of shape (n,) with estimated spectral norms.
    """
    batch, was_single = _as_batch(x)
    n, d = batch.shape
    rng = stream_rng(0, "jacobian")
    vec = rng.standard_normal((n, d))
    vec /= np.linalg.norm(vec, axis=1, keepdims=True)
    steps = _FD_SCALE * (1.0 + np.linalg.norm(batch, axis=1, keepdims=True))
    norms = np.zeros(n)
    for _ in range(int(iters)):
        jv = (fn(t, batch + steps * vec) - fn(t, batch - steps * vec)) / (2.0 * steps)
        new_norms = np.linalg.norm(jv, axis=1)
        done = np.abs(new_norms - norms) <= tol * np.maximum(new_norms, 1.0)
        norms = new_norms
        if np.all(done):
            break
        safe = np.where(new_norms > 0.0, new_norms, 1.0)
        vec = jv / safe[:, None]
        vec[new_norms == 0.0] = rng.standard_normal((int(np.sum(new_norms == 0.0)), d))
    result = norms
    return result[0] if was_single else result


def _attach_fd_norm(oracle):
    oracle.jacobian_norm = lambda t, x: fd_jacobian_norm(oracle.fn, t, x)
    return oracle


def gaussian_drift(schedule, target):
    """Exact drift for a Gaussian target with known spectrum.

    Per eigendirection with variance lam the velocity is linear with
    coefficient ``(alpha alpha' + beta beta' lam) / (alpha^2 + beta^2 lam)``,
    assembled from the schedule's stable product primitives.

    Args:
        schedule: Schedule instance.
        target: GaussianTarget.

    Returns:
        DriftOracle with analytic Jacobian information.  For sine-basis
        targets the dense Jacobian is omitted (the matrix is diagonal in
        coefficient space and too large to materialize) but the spectral
        norm is still exact.
    """
    if not isinstance(target, GaussianTarget):
        raise ValueError("gaussian_drift requires a GaussianTarget")
    lam = target.eigenvalues

    def multiplier(t, values):
        aad = schedule.alpha_alpha_dot(t)
        bbd = schedule.beta_beta_dot(t)
        a2 = schedule.alpha_sq(t)
        b2 = schedule.beta_sq(t)
        return (aad + bbd * values) / (a2 + b2 * values)

    basis = target.basis
    if isinstance(basis, SineBasis):
        mode_lam = basis.mode_eigenvalues
        n_grid = basis.n_grid

        def fn(t, x):
            batch, single = _as_batch(x)
            coeffs = basis.coeffs_from_fields(batch.reshape(-1, n_grid, n_grid))
            fields = basis.fields_from_coeffs(multiplier(t, mode_lam)[None] * coeffs)
            return _restore_batch(fields.reshape(batch.shape), single)

        jac = None
    elif basis is None:

        def fn(t, x):
            batch, single = _as_batch(x)
            return _restore_batch(multiplier(t, lam)[None, :] * batch, single)

        def jac(t, x):
            return np.diag(multiplier(t, lam))

    else:

        def fn(t, x):
            batch, single = _as_batch(x)
            rotated = batch @ basis
            return _restore_batch((multiplier(t, lam)[None, :] * rotated) @ basis.T, single)

        def jac(t, x):
            return basis @ np.diag(multiplier(t, lam)) @ basis.T

    def jac_norm(t, x):
        batch, single = _as_batch(x)
        extremes = multiplier(t, np.array([target.lam_min, target.lam_max]))
        value = float(np.max(np.abs(extremes)))
        out = np.full(batch.shape[0], value)
        return _restore_batch(out, single)

    return DriftOracle(
        fn=fn,
        jacobian=jac,
        jacobian_norm=jac_norm,
        schedule=schedule,
        target=target,
        label=f"gaussian[{schedule.label}]",
    )


def gaussian_score(schedule, target):
    """Exact interpolant-marginal score for a Gaussian target.

    Per eigendirection the score is ``-x / (alpha^2 + beta^2 lam)``.
    """
    if not isinstance(target, GaussianTarget):
        raise ValueError("gaussian_score requires a GaussianTarget")

    def fn(t, x):
        batch, single = _as_batch(x)
        return _restore_batch(target.score(schedule, t, batch), single)

    return ScoreOracle(fn=fn, schedule=schedule, target=target, label=f"gaussian-score[{schedule.label}]")


def bimodal_drift(schedule, target):
    """Closed-form drift for the symmetric two-mode Gaussian mixture.

    Valid only for trigonometric schedules (alpha^2 + beta^2 = 1), where the
    time-t marginal is itself a two-mode mixture with unit covariance and the
    drift collapses to ``beta'(t) * tanh(h + beta <r, x>) * r``.

    Args:
        schedule: trigonometric Schedule instance.
        target: BimodalGmmTarget.

    Returns:
        DriftOracle with analytic rank-one Jacobian.
    """
    if not isinstance(target, BimodalGmmTarget):
        raise ValueError("bimodal_drift requires a BimodalGmmTarget")
    if not schedule.is_trig:
        raise ValueError(
            f"bimodal_drift requires a trigonometric schedule (alpha^2 + beta^2 = 1), got kind '{schedule.kind}'"
        )
    r = target.r
    h = target.h
    r_sq = float(np.dot(r, r))

    def fn(t, x):
        batch, single = _as_batch(x)
        out = _kernels.tanh_gate_outer(batch @ r, h, schedule.beta(t), schedule.beta_dot(t), r)
        return _restore_batch(out, single)

    def jac(t, x):
        state = np.asarray(x, dtype=float)
        sech_sq = 1.0 / np.cosh(h + schedule.beta(t) * float(state @ r)) ** 2
        return schedule.beta_beta_dot(t) * sech_sq * np.outer(r, r)

    def jac_norm(t, x):
        batch, single = _as_batch(x)
        sech_sq = 1.0 / np.cosh(h + schedule.beta(t) * (batch @ r)) ** 2
        out = np.abs(schedule.beta_beta_dot(t)) * r_sq * sech_sq
        return _restore_batch(out, single)

    return DriftOracle(
        fn=fn,
        jacobian=jac,
        jacobian_norm=jac_norm,
        schedule=schedule,
        target=target,
        label=f"bimodal[{schedule.label}]",
    )


def general_gmm_drift(schedule, target):
    """Exact drift for an arbitrary Gaussian mixture target.

    The time-t marginal is a mixture with means ``beta m_j`` and covariances
    ``beta^2 C_j + alpha^2 C0``; the drift averages per-mode linear terms
    under posterior responsibilities computed in the log domain, so widely
    separated modes stay finite.

    Args:
        schedule: Schedule instance.
        target: GeneralGmmTarget.

    Returns:
        DriftOracle.  The Jacobian is analytic for the symmetric isotropic
        two-mode case and finite-difference otherwise.
    """
    if not isinstance(target, GeneralGmmTarget):
        raise ValueError("general_gmm_drift requires a GeneralGmmTarget")
    weights = target.weights
    means = target.means
    covs = target.covs
    noise_cov = target.noise_cov
    n_modes, dim = means.shape
    log_weights = np.log(weights)

    def fn(t, x):
        batch, single = _as_batch(x)
        a2 = schedule.alpha_sq(t)
        b2 = schedule.beta_sq(t)
        aad = schedule.alpha_alpha_dot(t)
        bbd = schedule.beta_beta_dot(t)
        beta = schedule.beta(t)
        beta_dot = schedule.beta_dot(t)
        log_resp = np.empty((n_modes, batch.shape[0]))
        linear_terms = np.empty((n_modes, batch.shape[0], dim))
        for j in range(n_modes):
            cov_t = b2 * covs[j] + a2 * noise_cov
            chol = np.linalg.cholesky(cov_t)
            diff = batch - beta * means[j]
            solved = np.linalg.solve(chol, diff.T)
            quad = np.sum(solved**2, axis=0)
            log_det = 2.0 * np.sum(np.log(np.diag(chol)))
            log_resp[j] = log_weights[j] - 0.5 * (quad + log_det)
            flow_cov = bbd * covs[j] + aad * noise_cov
            linear_terms[j] = beta_dot * means[j] + (flow_cov @ np.linalg.solve(chol.T, solved)).T
        log_resp -= np.max(log_resp, axis=0, keepdims=True)
        resp = np.exp(log_resp)
        resp /= np.sum(resp, axis=0, keepdims=True)
        out = np.einsum("jn,jnd->nd", resp, linear_terms)
        return _restore_batch(out, single)

    oracle = DriftOracle(
        fn=fn,
        schedule=schedule,
        target=target,
        label=f"gmm[{schedule.label}]",
    )

    if _is_symmetric_isotropic(target):
        m1 = means[0]
        h = 0.5 * (log_weights[0] - log_weights[1])

        def jac(t, x):
            state = np.asarray(x, dtype=float)
            a2 = schedule.alpha_sq(t)
            b2 = schedule.beta_sq(t)
            scale_t = a2 + b2
            beta = schedule.beta(t)
            beta_dot = schedule.beta_dot(t)
            q = schedule.beta_beta_dot(t) + schedule.alpha_alpha_dot(t)
            arg = h + beta * float(state @ m1) / scale_t
            sech_sq = 1.0 / np.cosh(arg) ** 2
            gain = (beta_dot - q * beta / scale_t) * (beta / scale_t) * sech_sq
            return (q / scale_t) * np.eye(dim) + gain * np.outer(m1, m1)

        oracle.jacobian = jac
        _attach_fd_norm(oracle)
    else:
        _attach_fd_norm(oracle)
    return oracle


def _is_symmetric_isotropic(target):
    if target.weights.shape[0] != 2:
        return False
    eye = np.eye(target.means.shape[1])
    if not np.allclose(target.covs[0], eye, atol=1e-12):
        return False
    if not np.allclose(target.covs[1], eye, atol=1e-12):
        return False
    if not np.allclose(target.noise_cov, eye, atol=1e-12):
        return False
    return np.allclose(target.means[1], -target.means[0], atol=1e-12)


def ot_gaussian_drift(target_var, base_var):
    """Constant-speed transport drift between one-dimensional Gaussians.

    Moves ``N(0, base_var)`` to ``N(0, target_var)`` along the path whose
    standard deviation interpolates linearly, giving the linear drift
    ``b(t, x) = (sm - s0) / ((1 - t) s0 + t sm) * x`` with ``sm, s0`` the
    two standard deviations.

    Args:
        target_var: variance at t=1, positive.
        base_var: variance at t=0, positive.

    Returns:
        DriftOracle whose ``path_sampler`` draws from the transported
        marginal at time t (this path is not a stochastic interpolant).
    """
    if not np.isfinite(target_var) or target_var <= 0.0:
        raise ValueError(f"target variance must be positive, got {target_var}")
    if not np.isfinite(base_var) or base_var <= 0.0:
        raise ValueError(f"base variance must be positive, got {base_var}")
    s1 = float(np.sqrt(target_var))
    s0 = float(np.sqrt(base_var))

    def path_std(t):
        return (1.0 - t) * s0 + t * s1

    def fn(t, x):
        batch, single = _as_batch(x)
        return _restore_batch((s1 - s0) / path_std(t) * batch, single)

    def jac(t, x):
        return np.array([[(s1 - s0) / path_std(t)]])

    def jac_norm(t, x):
        batch, single = _as_batch(x)
        out = np.full(batch.shape[0], abs(s1 - s0) / path_std(t))
        return _restore_batch(out, single)

    def path_sampler(t, n, rng):
        return path_std(t) * rng.standard_normal((int(n), 1))

    return DriftOracle(
        fn=fn,
        jacobian=jac,
        jacobian_norm=jac_norm,
        label=f"ot-gaussian[{base_var:g}->{target_var:g}]",
        path_sampler=path_sampler,
    )


def matrix_schedule_drift(target):
    """Time-independent drift realizing a matrix-valued schedule.

    For a Gaussian target the per-direction flow ``lam^t`` is generated by
    the constant linear field ``(1/2) U diag(log lam) U^T x``.

    Args:
        target: GaussianTarget.

    Returns:
        DriftOracle with exact constant Jacobian information.
    """
    if not isinstance(target, GaussianTarget):
        raise ValueError("matrix_schedule_drift requires a GaussianTarget")
    mult = 0.5 * np.log(target.eigenvalues)
    basis = target.basis
    norm_value = float(np.max(np.abs(mult)))

    if isinstance(basis, SineBasis):
        mode_mult = 0.5 * np.log(basis.mode_eigenvalues)
        n_grid = basis.n_grid

        def fn(t, x):
            batch, single = _as_batch(x)
            coeffs = basis.coeffs_from_fields(batch.reshape(-1, n_grid, n_grid))
            fields = basis.fields_from_coeffs(mode_mult[None] * coeffs)
            return _restore_batch(fields.reshape(batch.shape), single)

        jac = None
    elif basis is None:

        def fn(t, x):
            batch, single = _as_batch(x)
            return _restore_batch(mult[None, :] * batch, single)

        def jac(t, x):
            return np.diag(mult)

    else:

        def fn(t, x):
            batch, single = _as_batch(x)
            return _restore_batch(((batch @ basis) * mult[None, :]) @ basis.T, single)

        def jac(t, x):
            return basis @ np.diag(mult) @ basis.T

    def jac_norm(t, x):
        batch, single = _as_batch(x)
        return _restore_batch(np.full(batch.shape[0], norm_value), single)

    return DriftOracle(
        fn=fn,
        jacobian=jac,
        jacobian_norm=jac_norm,
        target=target,
        label="matrix-schedule",
    )


def transfer_drift(reference, new_schedule):
    """Re-express a linear-schedule drift under a different schedule.

    The linear-schedule velocity field determines the velocity field of any
    other schedule for the same target.  Writing ``s = alpha + beta`` and the
    matched linear time ``t' = beta / s``, the transported drift is

        b(t, x) = (alpha' + beta') / s * x
                  + (alpha beta' - alpha' beta) / s * b_ref(t', x / s),

    which is the denoiser-form composition and stays finite wherever the
    schedule derivatives do.

    Args:
        reference: DriftOracle built for the linear schedule (checked via
            its schedule metadata).
        new_schedule: Schedule to transfer onto.

    Returns:
        DriftOracle for the new schedule.  The Jacobian is composed exactly
        when the reference provides one.
    """
    ref_schedule = getattr(reference, "schedule", None)
    if ref_schedule is None or getattr(ref_schedule, "kind", None) != "linear":
        raise ValueError("transfer_drift requires a reference drift built for the linear schedule")

    def coefficients(t):
        alpha = new_schedule.alpha(t)
        beta = new_schedule.beta(t)
        alpha_dot = new_schedule.alpha_dot(t)
        beta_dot = new_schedule.beta_dot(t)
        scale = alpha + beta
        shift = (alpha_dot + beta_dot) / scale
        gain = (alpha * beta_dot - alpha_dot * beta) / scale
        return scale, shift, gain, beta / scale

    def fn(t, x):
        batch, single = _as_batch(x)
        scale, shift, gain, t_ref = coefficients(t)
        out = shift * batch + gain * reference.fn(t_ref, batch / scale)
        return _restore_batch(out, single)

    oracle = DriftOracle(
        fn=fn,
        schedule=new_schedule,
        target=getattr(reference, "target", None),
        label=f"transfer[{new_schedule.label}]",
    )

    if reference.jacobian is not None:

        def jac(t, x):
            state = np.asarray(x, dtype=float)
            scale, shift, gain, t_ref = coefficients(t)
            inner = reference.jacobian(t_ref, state / scale)
            return shift * np.eye(state.shape[0]) + (gain / scale) * inner

        oracle.jacobian = jac
    _attach_fd_norm(oracle)
    return oracle


def score_from_drift(drift, schedule):
    """Convert a velocity field to the marginal score at interior times.

    Uses the identity ``b = (beta beta'/beta^2) x + (alpha^2 beta beta'/beta^2
    - alpha alpha') s`` built from the stable product primitives.  The
    conversion degenerates at the endpoints, so exact t=0 and t=1 raise.
    """

    def fn(t, x):
        t_val = float(t)
        if t_val <= 0.0 or t_val >= 1.0:
            raise ValueError(f"score conversion is defined on the open interval (0, 1), got t={t_val}")
        batch, single = _as_batch(x)
        b2 = schedule.beta_sq(t_val)
        bbd = schedule.beta_beta_dot(t_val)
        a2 = schedule.alpha_sq(t_val)
        aad = schedule.alpha_alpha_dot(t_val)
        ratio = bbd / b2
        gain = a2 * ratio - aad
        out = (drift.fn(t_val, batch) - ratio * batch) / gain
        return _restore_batch(out, single)

    return ScoreOracle(
        fn=fn,
        schedule=schedule,
        target=getattr(drift, "target", None),
        label=f"score-from-drift[{schedule.label}]",
    )


def drift_from_score(score, schedule):
    """Convert a marginal score back to the velocity field.

    Inverse of `score_from_drift`; shares its open-interval domain.
    """

    def fn(t, x):
        t_val = float(t)
        if t_val <= 0.0 or t_val >= 1.0:
            raise ValueError(f"score conversion is defined on the open interval (0, 1), got t={t_val}")
        batch, single = _as_batch(x)
        b2 = schedule.beta_sq(t_val)
        bbd = schedule.beta_beta_dot(t_val)
        a2 = schedule.alpha_sq(t_val)
        aad = schedule.alpha_alpha_dot(t_val)
        ratio = bbd / b2
        gain = a2 * ratio - aad
        out = ratio * batch + gain * score.fn(t_val, batch)
        return _restore_batch(out, single)

    return DriftOracle(
        fn=fn,
        schedule=schedule,
        target=getattr(score, "target", None),
        label=f"drift-from-score[{schedule.label}]",
    )


def optimal_epsilon(schedule):
    """Diffusion scale that cancels the score term in backward sampling.

    Returns the callable ``t -> (alpha^2 / beta^2) beta beta' - alpha alpha'``,
    which is positive on (0, 1) and typically diverges at t=0.

    Args:
        schedule: Schedule instance.

    Returns:
        Vectorized function of time.
    """

    def eps(t):
        a2 = schedule.alpha_sq(t)
        b2 = schedule.beta_sq(t)
        bbd = schedule.beta_beta_dot(t)
        aad = schedule.alpha_alpha_dot(t)
        with np.errstate(divide="ignore", invalid="ignore"):
            return a2 / b2 * bbd - aad

    return eps
