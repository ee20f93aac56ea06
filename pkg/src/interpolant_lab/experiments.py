"""Desk-scale benches: mode-weight recovery, field spectra, KL invariance.

Each bench is a plain function over a small config dataclass.  Passing
``out_dir`` writes a results directory holding ``config.json`` with the
resolved configuration, ``results.csv`` with one row per configuration, and
per-configuration spectrum CSVs where applicable.
"""

import json
import os
from dataclasses import asdict, dataclass

import numpy as np

from .diagnostics import SpectrumReport, kl_star, spectrum
from .drift import ScoreOracle, bimodal_drift, gaussian_drift, gaussian_score
from .dynamics import IntegratorConfig, initial_state, integrate_ode
from .rng import stream_rng
from .schedules import ApproxMinLipGmmSchedule, DesignedGaussianSchedule, LinearSchedule, make_schedule, trig_linear
from .targets import BimodalGmmTarget, GaussianTarget, GrfSpec, SampleBatch, sample_target


@dataclass
class ModeWeightResult:
    """Outcome of one mode-weight recovery run."""

    schedule_label: str
    rk4_steps: int
    recovered_minor_weight: float
    em_iterations: int
    seed: int


@dataclass
class BimodalFit:
    """Two-component 1D Gaussian mixture fit.

    Unpacks as ``(weight1, mean1, var1, weight2, mean2, var2)``; the extra
    fields carry convergence information.  A fit with ``separation`` below 1
    is not trustworthy (the components overlap too much to identify).
    """

    weight1: float
    mean1: float
    var1: float
    weight2: float
    mean2: float
    var2: float
    em_iterations: int
    separation: float

    def __iter__(self):
        return iter((self.weight1, self.mean1, self.var1, self.weight2, self.mean2, self.var2))

    @property
    def minor_weight(self):
        return min(self.weight1, self.weight2)


def pca_project_1d(batch):
    """Project samples onto the top principal direction.

    The direction is found by power iteration on the centered sample
    covariance, applied matrix-free (tolerance 1e-8, at most 500 iterations).
    The sign is fixed so the ten largest-norm samples project positively on
    average.

    Args:
        batch: SampleBatch with at least two samples.

    Returns:
        Array of n projection values.

    Raises:
        ValueError: fewer than two samples, or zero sample covariance.
    """
    data = batch.data
    n = data.shape[0]
    if n < 2:
        raise ValueError(f"PCA projection needs at least 2 samples, got {n}")
    centered = data - np.mean(data, axis=0)
    scale = float(np.max(np.abs(centered)))
    if scale == 0.0:
        raise ValueError("sample covariance is degenerate (all samples identical)")

    def cov_apply(vec):
        return centered.T @ (centered @ vec) / (n - 1)

    rng = stream_rng(0, "pca")
    vec = rng.standard_normal(data.shape[1])
    vec /= np.linalg.norm(vec)
    eigval = 0.0
    for _ in range(500):
        image = cov_apply(vec)
        norm = np.linalg.norm(image)
        if norm == 0.0:
            raise ValueError("sample covariance is degenerate (zero action on probe)")
        new_vec = image / norm
        if abs(norm - eigval) <= 1e-8 * max(norm, 1.0):
            vec = new_vec
            break
        eigval = norm
        vec = new_vec

    projections = centered @ vec
    largest = np.argsort(np.linalg.norm(data, axis=1))[-10:]
    if np.mean(projections[largest]) < 0.0:
        projections = -projections
    return projections


def _kmeans_pp_init(values, rng):
    first = values[rng.integers(values.size)]
    sq_dist = (values - first) ** 2
    total = float(np.sum(sq_dist))
    if total == 0.0:
        raise ValueError("all values identical; cannot initialize two components")
    second = values[rng.choice(values.size, p=sq_dist / total)]
    return first, second


def fit_bimodal_1d(values, seed=0):
    """Fit a two-component 1D Gaussian mixture by EM.

    Initialization is k-means++ on the raw values; EM stops when the
    log-likelihood improves by less than 1e-8 or after 500 iterations.
    Component variances are floored at 1e-6.

    Args:
        values: sequence of at least 10 reals.
        seed: seed for the initialization draw ("em" stream).

    Returns:
        BimodalFit; check ``separation`` before trusting the weights.

    Raises:
        ValueError: fewer than 10 values, or all values identical.
    """
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size < 10:
        raise ValueError(f"mixture fit needs at least 10 values, got {arr.size}")
    rng = stream_rng(seed, "em")
    mu = np.array(_kmeans_pp_init(arr, rng))
    weights = np.array([0.5, 0.5])
    var = np.full(2, max(float(np.var(arr)), 1e-6))

    prev_loglik = -np.inf
    iterations = 0
    for iterations in range(1, 501):
        log_pdf = (
            -0.5 * (arr[:, None] - mu[None, :]) ** 2 / var[None, :]
            - 0.5 * np.log(2.0 * np.pi * var[None, :])
            + np.log(weights[None, :])
        )
        shift = np.max(log_pdf, axis=1, keepdims=True)
        post = np.exp(log_pdf - shift)
        norm = np.sum(post, axis=1, keepdims=True)
        post /= norm
        loglik = float(np.sum(shift.ravel() + np.log(norm.ravel())))

        counts = np.sum(post, axis=0)
        weights = counts / arr.size
        mu = post.T @ arr / counts
        var = np.sum(post * (arr[:, None] - mu[None, :]) ** 2, axis=0) / counts
        var = np.maximum(var, 1e-6)

        if loglik - prev_loglik < 1e-8 and np.isfinite(prev_loglik):
            break
        prev_loglik = loglik

    separation = float(abs(mu[0] - mu[1]) / np.sqrt(2.0 * (var[0] + var[1])))
    return BimodalFit(
        weight1=float(weights[0]),
        mean1=float(mu[0]),
        var1=float(var[0]),
        weight2=float(weights[1]),
        mean2=float(mu[1]),
        var2=float(var[1]),
        em_iterations=iterations,
        separation=separation,
    )


def sign_flip_fraction(trajectory, direction):
    """Fraction of samples whose projection on a direction goes positive
    and later turns negative along a recorded trajectory."""
    proj = trajectory.states @ np.asarray(direction, dtype=float)
    was_positive = np.zeros(proj.shape[1], dtype=bool)
    flipped = np.zeros(proj.shape[1], dtype=bool)
    for k in range(proj.shape[0]):
        flipped |= was_positive & (proj[k] < 0.0)
        was_positive |= proj[k] > 0.0
    return float(np.mean(flipped))


@dataclass
class GmmBenchConfig:
    """Configuration for the mode-weight recovery bench."""

    dim: int = 1000
    minor_weight: float = 0.3
    step_counts: tuple = (2, 3, 4)
    schedule_kinds: tuple = ("trig-linear", "approx-minlip-gmm")
    n_samples: int = 10000
    seed: int = 0
    t_min: float = 1e-3
    t_max: float = 1.0 - 1e-3
    chunk_size: int = 2500


def _bench_schedule(kind, dim):
    if kind == "trig-linear":
        return trig_linear()
    if kind == "approx-minlip-gmm":
        return ApproxMinLipGmmSchedule(float(np.sqrt(dim)))
    raise ValueError(f"unknown bench schedule kind '{kind}'")


def _integrate_chunked(drift, initial, config, chunk_size):
    output = np.empty_like(initial.data)
    for start in range(0, initial.data.shape[0], chunk_size):
        stop = min(start + chunk_size, initial.data.shape[0])
        piece = SampleBatch(data=initial.data[start:stop], t=initial.t, seed=initial.seed)
        output[start:stop] = integrate_ode(drift, piece, config).data
    return SampleBatch(data=output, t=config.t_max, seed=initial.seed)


def gmm_mode_weight_bench(config=None, out_dir=None):
    """Recover the minor mode weight of a high-dimensional bimodal target.

    For every (schedule, step count) pair: integrate scaled noise through the
    closed-form drift with a few RK4 steps, project the output to 1D by PCA,
    fit a two-component mixture, and record the smaller fitted weight.

    Args:
        config: GmmBenchConfig (defaults reproduce the headline table).
        out_dir: optional directory for config.json and results.csv.

    Returns:
        List of ModeWeightResult, one per (schedule, steps) pair.
    """
    config = config or GmmBenchConfig()
    target = BimodalGmmTarget(np.ones(config.dim), config.minor_weight)
    results = []
    run_seeds = stream_rng(config.seed, "bench").integers(0, 2**63 - 1, size=len(config.schedule_kinds))
    for kind, run_seed in zip(config.schedule_kinds, run_seeds):
        schedule = _bench_schedule(kind, config.dim)
        drift = bimodal_drift(schedule, target)
        initial = initial_state(schedule, target, config.n_samples, int(run_seed), t_min=config.t_min)
        for steps in config.step_counts:
            int_config = IntegratorConfig(
                method="rk4", steps=int(steps), t_min=config.t_min, t_max=config.t_max
            )
            final = _integrate_chunked(drift, initial, int_config, config.chunk_size)
            projections = pca_project_1d(final)
            fit = fit_bimodal_1d(projections, seed=int(run_seed))
            results.append(
                ModeWeightResult(
                    schedule_label=schedule.label,
                    rk4_steps=int(steps),
                    recovered_minor_weight=fit.minor_weight,
                    em_iterations=fit.em_iterations,
                    seed=config.seed,
                )
            )
    if out_dir is not None:
        _ensure_dir(out_dir)
        _write_config(out_dir, config)
        rows = [
            {
                "schedule": r.schedule_label,
                "rk4_steps": r.rk4_steps,
                "recovered_minor_weight": r.recovered_minor_weight,
                "em_iterations": r.em_iterations,
                "seed": r.seed,
            }
            for r in results
        ]
        _write_csv(os.path.join(out_dir, "results.csv"), rows)
    return results


@dataclass
class GrfBenchConfig:
    """Configuration for the random-field spectrum bench."""

    resolutions: tuple = (32, 64, 128)
    step_counts: tuple = (20,)
    schedule_kinds: tuple = ("linear", "designed")
    n_samples: int = 512
    seed: int = 0
    smoothness: float = 3.0
    tau: float = 1.0
    lambda_policy: str = "fixed"
    reference_resolution: int = 32


@dataclass
class GrfSpectrumRow:
    """Summary row: mean relative shell-energy error for one configuration."""

    resolution: int
    schedule_label: str
    rk4_steps: int
    mean_rel_error: float


def expected_shell_energy(spec):
    """Analytic shell sums of a GRF's mode eigenvalues."""
    idx = np.arange(1, spec.n_grid)
    shells = np.floor(np.sqrt(idx[:, None] ** 2 + idx[None, :] ** 2)).astype(int)
    energy = np.zeros(int(np.max(shells)) + 1)
    np.add.at(energy, shells.ravel(), spec.mode_eigenvalues().ravel())
    return energy


def mean_relative_spectrum_error(report, expected, k_max=16):
    """Mean of |observed - expected| / expected over shells k <= k_max."""
    limit = min(int(k_max), report.k_bins.size - 1, expected.size - 1)
    observed = report.energy[: limit + 1]
    reference = expected[: limit + 1]
    mask = reference > 0.0
    return float(np.mean(np.abs(observed[mask] - reference[mask]) / reference[mask]))


def _grf_lambda_star(config, resolution):
    if config.lambda_policy == "fixed":
        source = config.reference_resolution
    elif config.lambda_policy == "per-resolution":
        source = resolution
    else:
        raise ValueError(f"unknown lambda policy '{config.lambda_policy}', expected 'fixed' or 'per-resolution'")
    spec = GrfSpec(n_grid=int(source), s=config.smoothness, tau=config.tau)
    return float(np.min(spec.mode_eigenvalues()))


def grf_spectrum_bench(config=None, out_dir=None):
    """Compare generated and true field spectra across schedules and budgets.

    For each (resolution, schedule, step count): integrate white noise through
    the exact spectral drift with RK4 and bin the sine-transform energy of
    the output, alongside a spectrum of direct target samples.

    Args:
        config: GrfBenchConfig.  ``lambda_policy`` picks how the designed
            schedule's anchor eigenvalue is chosen: "fixed" reads it off the
            reference resolution so every resolution shares one schedule,
            "per-resolution" uses each grid's own smallest eigenvalue.
        out_dir: optional results directory (adds per-spectrum CSVs).

    Returns:
        (rows, reports): summary GrfSpectrumRow list and a dict holding the
        SpectrumReport for every configuration plus ("truth", N) entries.
    """
    config = config or GrfBenchConfig()
    rows = []
    reports = {}
    run_seeds = stream_rng(config.seed, "bench").integers(0, 2**63 - 1, size=len(config.resolutions))
    for resolution, run_seed in zip(config.resolutions, run_seeds):
        spec = GrfSpec(n_grid=int(resolution), s=config.smoothness, tau=config.tau)
        target = spec.to_gaussian_target()
        expected = expected_shell_energy(spec)
        truth = spectrum(sample_target(target, config.n_samples, int(run_seed)), transform_kind="sine")
        reports[("truth", int(resolution))] = truth
        for kind in config.schedule_kinds:
            if kind == "linear":
                schedule = LinearSchedule()
            elif kind == "designed":
                schedule = DesignedGaussianSchedule(_grf_lambda_star(config, int(resolution)))
            else:
                raise ValueError(f"unknown bench schedule kind '{kind}'")
            drift = gaussian_drift(schedule, target)
            for steps in config.step_counts:
                int_config = IntegratorConfig(method="rk4", steps=int(steps))
                initial = initial_state(schedule, target, config.n_samples, int(run_seed))
                final = integrate_ode(drift, initial, int_config)
                report = spectrum(final, transform_kind="sine")
                reports[(kind, int(resolution), int(steps))] = report
                rows.append(
                    GrfSpectrumRow(
                        resolution=int(resolution),
                        schedule_label=schedule.label,
                        rk4_steps=int(steps),
                        mean_rel_error=mean_relative_spectrum_error(report, expected),
                    )
                )
    if out_dir is not None:
        _ensure_dir(out_dir)
        _write_config(out_dir, config)
        _write_csv(
            os.path.join(out_dir, "results.csv"),
            [
                {
                    "resolution": r.resolution,
                    "schedule": r.schedule_label,
                    "rk4_steps": r.rk4_steps,
                    "mean_rel_error": r.mean_rel_error,
                }
                for r in rows
            ],
        )
        for key, report in reports.items():
            name = "_".join(str(part) for part in key)
            report.to_csv(os.path.join(out_dir, f"spectrum_{name}.csv"))
    return rows, reports


@dataclass
class KlBenchConfig:
    """Configuration for the KL-invariance bench."""

    variance: float = 1.0
    delta: float = 0.2
    schedule_kinds: tuple = ("linear", "trig-linear", "trig-quadratic")
    t_quad_points: int = 128
    mc_per_t: int = 32768
    budget_repeats: int = 8
    seed: int = 0


@dataclass
class KlBenchResult:
    """Per-schedule KL* estimates against the analytic reference."""

    schedule_labels: list
    estimates: np.ndarray
    budgets: np.ndarray
    analytic: float

    @property
    def pairwise_spread(self):
        return float((np.max(self.estimates) - np.min(self.estimates)) / np.mean(self.estimates))


def _eta_form_estimator(schedule, target, variance, delta):
    true = gaussian_score(schedule, target)

    def fn(t, x):
        beta = schedule.beta(t)
        eta = schedule.alpha(t) / beta
        return true.fn(t, x) + delta * (x / beta**2) / (variance + eta**2) ** 2

    return ScoreOracle(fn=fn, schedule=schedule, target=target)


def kl_invariance_bench(config=None, out_dir=None):
    """Estimate KL* for one noise-ratio-parametrized estimator family under
    several schedules.

    The estimator error is defined on the normalized state and mapped into
    each schedule, so all estimates target the same analytic value
    ``delta^2 / (2 variance^2)``.  The per-schedule budget is the standard
    deviation over repeated runs with fresh Monte-Carlo seeds plus a fixed
    quadrature allowance.

    Args:
        config: KlBenchConfig.
        out_dir: optional results directory.

    Returns:
        KlBenchResult.
    """
    config = config or KlBenchConfig()
    target = GaussianTarget(np.array([config.variance]))
    labels = []
    estimates = []
    budgets = []
    for kind in config.schedule_kinds:
        schedule = make_schedule(kind)
        labels.append(schedule.label)
        true = gaussian_score(schedule, target)
        est = _eta_form_estimator(schedule, target, config.variance, config.delta)
        value = kl_star(
            schedule,
            true,
            est,
            target,
            t_quad_points=config.t_quad_points,
            mc_per_t=config.mc_per_t,
            seed=config.seed,
        )
        repeats = [
            kl_star(
                schedule,
                true,
                est,
                target,
                t_quad_points=config.t_quad_points,
                mc_per_t=config.mc_per_t,
                seed=config.seed + 1 + rep,
            )
            for rep in range(config.budget_repeats)
        ]
        estimates.append(value)
        budgets.append(float(np.std(repeats)) + 2e-4)
    result = KlBenchResult(
        schedule_labels=labels,
        estimates=np.array(estimates),
        budgets=np.array(budgets),
        analytic=config.delta**2 / (2.0 * config.variance**2),
    )
    if out_dir is not None:
        _ensure_dir(out_dir)
        _write_config(out_dir, config)
        rows = [
            {"schedule": label, "kl_star": est, "error_budget": budget, "analytic": result.analytic}
            for label, est, budget in zip(result.schedule_labels, result.estimates, result.budgets)
        ]
        _write_csv(os.path.join(out_dir, "results.csv"), rows)
    return result


def _ensure_dir(path):
    os.makedirs(path, exist_ok=True)


def _write_config(out_dir, config):
    with open(os.path.join(out_dir, "config.json"), "w") as fh:
        json.dump(asdict(config), fh, indent=2, default=str)
        fh.write("\n")


def _format_cell(value):
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def _write_csv(path, rows):
    if not rows:
        raise ValueError("cannot write an empty results table")
    columns = list(rows[0].keys())
    with open(path, "w") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_format_cell(row[c]) for c in columns) + "\n")
