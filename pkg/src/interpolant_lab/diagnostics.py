"""Scalar functionals over schedules and drifts, plus field spectra.

Estimators share one structure: a deterministic quadrature over time paired
with Monte-Carlo averaging over interpolant states at each node.  All
Monte-Carlo draws come from seed-derived streams, so every estimate is
reproducible.  Accumulations use numpy reductions, which sum pairwise, so
results are stable across thread counts.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from .drift import fd_jacobian_norm, transfer_drift
from .rng import stream_rng
from .schedules import time_for_noise_ratio, trig_linear
from .targets import BimodalGmmTarget, GaussianTarget, sample_interpolant

_ETA_MIN = 1e-3
_ETA_MAX = 1e3


@dataclass
class LipReport:
    """Averaged squared Lipschitzness estimate with sampling metadata."""

    a2_estimate: float
    std_error: float
    t_grid_size: int
    mc_per_t: int
    sup_lipschitz: float

    def to_csv(self, path):
        """Write the report as a key,value block."""
        with open(path, "w") as fh:
            fh.write("key,value\n")
            fh.write(f"a2_estimate,{self.a2_estimate:.17g}\n")
            fh.write(f"std_error,{self.std_error:.17g}\n")
            fh.write(f"t_grid_size,{self.t_grid_size}\n")
            fh.write(f"mc_per_t,{self.mc_per_t}\n")
            fh.write(f"sup_lipschitz,{self.sup_lipschitz:.17g}\n")


@dataclass
class SpectrumReport:
    """Shell-binned spectral energy of square field samples."""

    k_bins: np.ndarray
    energy: np.ndarray
    sample_count: int

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("k,energy\n")
            for k, e in zip(self.k_bins, self.energy):
                fh.write(f"{int(k)},{e:.17g}\n")


def _midpoint_grid(size):
    return (np.arange(size) + 0.5) / size


def _norms_on_batch(drift, t, states):
    if drift.jacobian_norm is not None:
        return np.asarray(drift.jacobian_norm(t, states), dtype=float)
    return np.asarray(fd_jacobian_norm(drift.fn, t, states), dtype=float)


def avg_lip2(drift, schedule, target, t_grid_size=128, mc_per_t=1024, seed=0):
    """Estimate the time-averaged squared spectral norm of the drift Jacobian.

    Uses a midpoint rule in t; at each node the Jacobian norm is evaluated on
    interpolant samples and squared.  Nodes draw independent sample sets from
    seeds derived off the "lip" stream.

    Args:
        drift: DriftOracle (analytic norm used when present, finite
            differences otherwise).
        schedule: Schedule the drift was built for.
        target: target distribution.
        t_grid_size: number of midpoint nodes.
        mc_per_t: samples per node.
        seed: master seed.

    Returns:
        LipReport with the estimate, its Monte-Carlo standard error, and the
        largest norm seen at any probed (t, x).
    """
    nodes = _midpoint_grid(int(t_grid_size))
    node_seeds = stream_rng(seed, "lip").integers(0, 2**63 - 1, size=nodes.size)
    node_means = np.empty(nodes.size)
    node_vars = np.empty(nodes.size)
    sup_norm = 0.0
    for i, t in enumerate(nodes):
        batch = sample_interpolant(schedule, target, float(t), int(mc_per_t), int(node_seeds[i]))
        norms = _norms_on_batch(drift, float(t), batch.data)
        if not np.all(np.isfinite(norms)):
            raise ValueError(f"Jacobian norm probe returned non-finite values at t={t}")
        squared = norms**2
        node_means[i] = np.mean(squared)
        node_vars[i] = np.var(squared) / squared.size
        sup_norm = max(sup_norm, float(np.max(norms)))
    estimate = float(np.mean(node_means))
    std_error = float(np.sqrt(np.sum(node_vars)) / nodes.size)
    return LipReport(
        a2_estimate=estimate,
        std_error=std_error,
        t_grid_size=int(t_grid_size),
        mc_per_t=int(mc_per_t),
        sup_lipschitz=sup_norm,
    )


def kinetic_energy(drift, schedule, target, t_grid_size=128, mc_per_t=1024, seed=0):
    """Estimate the time-averaged squared drift magnitude along the path.

    Same estimator structure as `avg_lip2` over ``||b_t||^2``.  States come
    from the interpolant, except for oracles that carry their own
    ``path_sampler`` (transport paths that are not interpolants).

    Returns:
        Scalar estimate of the squared path length.
    """
    nodes = _midpoint_grid(int(t_grid_size))
    node_seeds = stream_rng(seed, "kinetic").integers(0, 2**63 - 1, size=nodes.size)
    node_means = np.empty(nodes.size)
    for i, t in enumerate(nodes):
        if drift.path_sampler is not None:
            rng = stream_rng(int(node_seeds[i]), "target")
            states = drift.path_sampler(float(t), int(mc_per_t), rng)
        else:
            states = sample_interpolant(schedule, target, float(t), int(mc_per_t), int(node_seeds[i])).data
        values = drift.fn(float(t), states)
        node_means[i] = np.mean(np.sum(values**2, axis=1))
    return float(np.mean(node_means))


def kl_star(schedule, true_score, estimated_score, target, t_quad_points=64, mc_per_t=4096, seed=0):
    """Estimate the optimal-diffusion KL functional of a score estimator.

    The time integral is evaluated in the noise-to-signal variable
    ``eta = alpha/beta`` (trapezoid in log eta on [1e-3, 1e3]), which removes
    the endpoint singularities of the t-form integrand.  The quadrature
    weight is the diffusion scale times |dt/deta|; all schedules see the
    same (x1, z) draws and the same eta grid, so estimates for different
    schedules of one target are directly comparable.

    Args:
        schedule: Schedule instance.
        true_score: ScoreOracle for the exact marginal score.
        estimated_score: ScoreOracle under evaluation.
        target: target distribution (supplies the common draws).
        t_quad_points: nodes on the log-eta grid.
        mc_per_t: Monte-Carlo samples shared across nodes.
        seed: master seed ("kl" stream).

    Returns:
        Scalar estimate of the functional.

    Raises:
        ValueError: non-finite integrand at some node (singularity), or a
            degenerate quadrature setup.
    """
    if int(t_quad_points) < 2:
        raise ValueError(f"t_quad_points must be at least 2, got {t_quad_points}")
    x1 = target.sample(int(mc_per_t), stream_rng(seed, "kl", 0))
    z = target.sample_noise(int(mc_per_t), stream_rng(seed, "kl", 1))
    log_eta = np.linspace(np.log(_ETA_MIN), np.log(_ETA_MAX), int(t_quad_points))
    eta = np.exp(log_eta)
    times = time_for_noise_ratio(schedule, eta)

    integrand = np.empty(eta.size)
    for i, t in enumerate(times):
        a2 = schedule.alpha_sq(t)
        b2 = schedule.beta_sq(t)
        aad = schedule.alpha_alpha_dot(t)
        bbd = schedule.beta_beta_dot(t)
        eps = (a2 / b2) * bbd - aad
        dt_deta = b2 * np.sqrt(a2 * b2) / (a2 * bbd - b2 * aad)
        states = np.sqrt(a2) * z + np.sqrt(b2) * x1
        diff = true_score.fn(float(t), states) - estimated_score.fn(float(t), states)
        mean_sq = float(np.mean(np.sum(diff**2, axis=1)))
        value = 2.0 * eps * dt_deta * mean_sq
        if not np.isfinite(value):
            raise ValueError(f"KL integrand is non-finite at t={t} (eta={eta[i]:.3g})")
        # integrating in log eta adds a factor eta to the integrand
        integrand[i] = value * eta[i]
    return float(trapezoid(integrand, log_eta))


def spectrum(samples, transform_kind="sine"):
    """Bin squared transform coefficients of square fields into |m| shells.

    Args:
        samples: SampleBatch whose rows are flattened N-by-N fields.
        transform_kind: "sine" (orthonormal type-I on the interior, for
            Dirichlet data; mode indices start at 1) or "fourier" (full-grid
            FFT with signed integer modes).

    Returns:
        SpectrumReport with mean shell energies; shell k collects modes with
        k <= |m|_2 < k+1, so the bins partition all coefficient mass and
        summing them recovers the mean squared coefficient norm exactly.

    Raises:
        ValueError: rows that are not square fields, or unknown transform.
    """
    data = samples.data
    n, d = data.shape
    n_grid = math.isqrt(d)
    if n_grid * n_grid != d:
        raise ValueError(f"spectrum requires square fields, got row length {d}")
    fields = data.reshape(n, n_grid, n_grid)

    if transform_kind == "sine":
        import scipy.fft

        coeffs = scipy.fft.dstn(fields[:, 1:, 1:], type=1, norm="ortho", axes=(1, 2))
        power = coeffs**2
        idx = np.arange(1, n_grid)
        mode_norm = np.sqrt(idx[:, None] ** 2 + idx[None, :] ** 2)
    elif transform_kind == "fourier":
        coeffs = np.fft.fft2(fields, norm="ortho", axes=(1, 2))
        power = np.abs(coeffs) ** 2
        idx = np.fft.fftfreq(n_grid) * n_grid
        mode_norm = np.sqrt(idx[:, None] ** 2 + idx[None, :] ** 2)
    else:
        raise ValueError(f"unknown transform kind '{transform_kind}', expected 'sine' or 'fourier'")

    shells = np.floor(mode_norm).astype(int)
    k_max = int(np.max(shells))
    mean_power = np.mean(power, axis=0)
    energy = np.zeros(k_max + 1)
    np.add.at(energy, shells.ravel(), mean_power.ravel())
    return SpectrumReport(k_bins=np.arange(k_max + 1), energy=energy, sample_count=n)


def g_function_for_optimizer(target, reference_drift=None, k=1, mc_samples=4096, seed=0):
    """Build the state-averaged stiffness profile used by the schedule solver.

    The profile is parametrized by the mixture point u, i.e. the state law
    ``sqrt(1-u^2) z + u x1``.  For trigonometric schedules the drift Jacobian
    factors as ``beta beta' * S(u, x)``; G reports moments of the
    time-factor-free part, ``G(u) = E[||S(u, I)||^{2k}]``, which is all the
    schedule solver needs (its output is invariant to constant rescalings
    of G).

    Dispatch:
        BimodalGmmTarget: closed one-dimensional sech form, Monte Carlo over
            projected scalars.
        GaussianTarget: analytic extreme-eigenvalue expression, no sampling.
        otherwise: requires ``reference_drift`` built at the linear schedule;
            the profile is measured through the transferred drift's Jacobian
            norms at matching mixture states (u is floored at 1e-6 where the
            time factor is divided out).

    Args:
        target: target distribution.
        reference_drift: linear-schedule DriftOracle for the general route.
        k: moment order (the solver pairs this with its 1/(2k) exponent).
        mc_samples: Monte-Carlo draws for the sampled routes.
        seed: master seed ("gfunction" stream).

    Returns:
        Vectorized callable u -> G(u) on [0, 1].
    """
    if int(k) < 1:
        raise ValueError(f"moment order k must be a positive integer, got {k}")
    k = int(k)

    if isinstance(target, BimodalGmmTarget):
        m_scale = target.m_scale
        h = target.h
        p = 1.0 / (1.0 + np.exp(-2.0 * h))
        rng = stream_rng(seed, "gfunction")
        z = rng.standard_normal(int(mc_samples))
        signs = np.where(rng.random(int(mc_samples)) < p, 1.0, -1.0)
        x1 = signs * m_scale + rng.standard_normal(int(mc_samples))

        def g_bimodal(u):
            arr = np.atleast_1d(np.asarray(u, dtype=float))
            alpha = np.sqrt(np.maximum(1.0 - arr**2, 0.0))
            args = h + arr[:, None] * m_scale * (alpha[:, None] * z[None, :] + arr[:, None] * x1[None, :])
            values = np.mean(1.0 / np.cosh(args) ** (4 * k), axis=1)
            return values[0] if np.ndim(u) == 0 else values

        return g_bimodal

    if isinstance(target, GaussianTarget):
        extremes = np.array([target.lam_min, target.lam_max])

        def g_gaussian(u):
            arr = np.atleast_1d(np.asarray(u, dtype=float))
            stripped = (extremes[None, :] - 1.0) / (1.0 + arr[:, None] ** 2 * (extremes[None, :] - 1.0))
            values = np.max(np.abs(stripped), axis=1) ** (2 * k)
            return values[0] if np.ndim(u) == 0 else values

        return g_gaussian

    if reference_drift is None:
        raise ValueError("targets without a closed form need reference_drift at the linear schedule")
    carrier = trig_linear()
    transferred = transfer_drift(reference_drift, carrier)
    base_seed = int(stream_rng(seed, "gfunction").integers(0, 2**63 - 1))

    def g_general(u):
        arr = np.atleast_1d(np.asarray(u, dtype=float))
        values = np.empty(arr.size)
        for i, point in enumerate(arr):
            point = max(float(point), 1e-6)
            batch = sample_interpolant(carrier, target, point, int(mc_samples), base_seed)
            norms = _norms_on_batch(transferred, point, batch.data)
            values[i] = np.mean((norms / point) ** (2 * k))
        return values[0] if np.ndim(u) == 0 else values

    return g_general
