"""Command-line front end for schedules, audits, and benches.

Every subcommand resolves its settings from three layers (command-line flags
override config-file entries, which override built-in defaults), writes the
fully resolved configuration as ``config.json`` next to its outputs, and
emits CSV tables formatted with 17 significant digits.

Exit codes: 0 on success, 2 on a configuration error (the message names the
offending key), 1 on a runtime failure.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import _kernels
from .diagnostics import avg_lip2, g_function_for_optimizer, kinetic_energy
from .drift import (
    bimodal_drift,
    gaussian_drift,
    gaussian_score,
    general_gmm_drift,
    optimal_epsilon,
    transfer_drift,
)
from .dynamics import IntegratorConfig, initial_state, integrate_sde
from .experiments import (
    GmmBenchConfig,
    GrfBenchConfig,
    KlBenchConfig,
    gmm_mode_weight_bench,
    grf_spectrum_bench,
    kl_invariance_bench,
)
from .rng import stream_rng
from .schedules import (
    DesignedGaussianSchedule,
    LinearSchedule,
    make_schedule,
    solve_optimal_schedule,
    trig_power,
)
from .targets import BimodalGmmTarget, GaussianTarget, GeneralGmmTarget

_THREADS_ENV = "INTERPOLANT_LAB_THREADS"


class ConfigError(Exception):
    """Raised for bad or unknown configuration keys; exits with code 2."""


def _parse_int(key, text):
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"key '{key}' expects an integer, got {text!r}") from None


def _parse_float(key, text):
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"key '{key}' expects a number, got {text!r}") from None


def _parse_str(key, text):
    return text


def _parse_int_list(key, text):
    try:
        return tuple(int(part) for part in str(text).split(","))
    except ValueError:
        raise ConfigError(f"key '{key}' expects comma-separated integers, got {text!r}") from None


def _parse_str_list(key, text):
    return tuple(part.strip() for part in str(text).split(",") if part.strip())


_COMMON_KEYS = {
    "seed": (_parse_int, 0, "base random seed"),
    "threads": (_parse_int, None, f"worker threads; falls back to ${_THREADS_ENV}"),
    "out": (_parse_str, None, "output directory (default: runs/<subcommand>)"),
}

_SUBCOMMANDS = {
    "schedule": {
        "kind": (_parse_str, "linear", "schedule kind for the table"),
        "lambda-star": (_parse_float, None, "anchor eigenvalue for designed-gaussian"),
        "scale-m": (_parse_float, None, "mode scale for approx-minlip-gmm"),
        "kappa": (_parse_float, None, "dilation factor for dilated"),
        "power": (_parse_float, None, "exponent for a trig power-law schedule"),
        "grid": (_parse_int, 101, "number of table rows including both endpoints"),
        "optimize-variance": (_parse_float, None, "run the schedule optimizer for a 1D Gaussian with this variance instead of --kind"),
        "optimize-exponent": (_parse_int, 1, "moment exponent k for the optimizer objective"),
    },
    "drift-check": {
        "variance": (_parse_float, 4.0, "Gaussian target variance for the transfer audit"),
        "scale-m": (_parse_float, 2.0, "bimodal mode scale for the mixture audits"),
        "minor-weight": (_parse_float, 0.3, "bimodal minor mode weight"),
        "samples": (_parse_int, 200, "random (t, x) audit points per check"),
        "tolerance": (_parse_float, 1e-8, "pass threshold for transfer checks"),
    },
    "lip": {
        "kind": (_parse_str, "designed-gaussian", "schedule kind"),
        "lambda-star": (_parse_float, None, "anchor eigenvalue for designed-gaussian"),
        "scale-m": (_parse_float, None, "mode scale for approx-minlip-gmm"),
        "kappa": (_parse_float, None, "dilation factor for dilated"),
        "power": (_parse_float, None, "exponent for a trig power-law schedule"),
        "variance": (_parse_float, 4.0, "1D Gaussian target variance"),
        "t-grid": (_parse_int, 128, "midpoint time nodes"),
        "mc-per-t": (_parse_int, 1024, "Monte-Carlo draws per time node"),
    },
    "kl": {
        "variance": (_parse_float, 1.0, "1D Gaussian target variance"),
        "delta": (_parse_float, 0.2, "estimator error amplitude"),
        "schedules": (_parse_str_list, ("linear", "trig-linear", "trig-quadratic"), "schedule kinds to compare"),
        "quad-points": (_parse_int, 128, "quadrature nodes"),
        "mc-per-t": (_parse_int, 32768, "Monte-Carlo draws per node"),
        "repeats": (_parse_int, 8, "repeat runs for the error budget"),
    },
    "gmm-bench": {
        "dim": (_parse_int, 1000, "ambient dimension"),
        "minor-weight": (_parse_float, 0.3, "true minor mode weight"),
        "steps": (_parse_int_list, (2, 3, 4), "RK4 step counts"),
        "samples": (_parse_int, 10000, "noise samples per run"),
    },
    "grf-bench": {
        "resolutions": (_parse_int_list, (32, 64, 128), "grid resolutions"),
        "steps": (_parse_int_list, (20,), "RK4 step counts"),
        "samples": (_parse_int, 512, "field samples per configuration"),
        "lambda-policy": (_parse_str, "fixed", "designed-schedule anchor policy: fixed or per-resolution"),
        "reference-resolution": (_parse_int, 32, "anchor resolution for the fixed policy"),
    },
    "sde-check": {
        "variance": (_parse_float, 4.0, "1D Gaussian target variance"),
        "em-steps": (_parse_int, 400, "Euler-Maruyama steps"),
        "samples": (_parse_int, 100000, "sample paths"),
    },
}


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="interpolant-lab",
        description="Schedule design workbench: tables, audits, and benches.",
    )
    subparsers = parser.add_subparsers(dest="subcommand", metavar="subcommand")
    descriptions = {
        "schedule": "emit a (t, alpha, beta, alpha_dot, beta_dot, epsilon) table",
        "drift-check": "audit transfer formulas and Jacobian norms",
        "lip": "report averaged squared Lipschitz level and kinetic energy",
        "kl": "run the KL invariance bench",
        "gmm-bench": "run the mode-weight recovery bench",
        "grf-bench": "run the random-field spectrum bench",
        "sde-check": "audit the SDE terminal marginal law",
    }
    for name, keys in _SUBCOMMANDS.items():
        sub = subparsers.add_parser(name, help=descriptions[name], description=descriptions[name])
        sub.add_argument("--config", default=None, metavar="PATH", help="flat key=value config file")
        for key, (_, default, help_text) in {**_COMMON_KEYS, **keys}.items():
            shown = "none" if default is None else default
            if isinstance(shown, tuple):
                shown = ",".join(str(v) for v in shown)
            sub.add_argument(f"--{key}", default=None, metavar="V", help=f"{help_text} (default: {shown})")
    return parser


def _read_config_file(path):
    if not os.path.exists(path):
        raise ConfigError(f"key 'config' points to a missing file: {path}")
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"config file line {lineno} is not key=value: {line!r}")
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
    return values


def _resolve(subcommand, args, file_values):
    spec = {**_COMMON_KEYS, **_SUBCOMMANDS[subcommand]}
    for key in file_values:
        if key not in spec:
            raise ConfigError(f"unknown key '{key}' for subcommand '{subcommand}'")
    resolved = {}
    for key, (convert, default, _) in spec.items():
        flag_value = getattr(args, key.replace("-", "_"))
        if flag_value is not None:
            resolved[key] = convert(key, flag_value)
        elif key in file_values:
            resolved[key] = convert(key, file_values[key])
        else:
            resolved[key] = default
    return resolved


def _resolve_threads(value):
    if value is None:
        env = os.environ.get(_THREADS_ENV)
        if env is None:
            return None
        value = _parse_int(_THREADS_ENV, env)
    if value < 1:
        raise ConfigError(f"key 'threads' must be a positive integer, got {value}")
    if _kernels.HAS_NUMBA:
        import numba

        numba.set_num_threads(min(value, numba.config.NUMBA_NUM_THREADS))
    return value


def _format_cell(value):
    if isinstance(value, (float, np.floating)):
        return f"{value:.17g}"
    return str(value)


def _write_rows(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_format_cell(v) for v in row) + "\n")
    print(f"wrote {path}")


def _write_resolved_config(out_dir, subcommand, resolved):
    payload = {"subcommand": subcommand}
    for key, value in resolved.items():
        payload[key] = list(value) if isinstance(value, tuple) else value
    with open(os.path.join(out_dir, "config.json"), "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _schedule_from_config(config):
    params = {}
    for key, name in (
        ("lambda-star", "lambda_star"),
        ("scale-m", "scale_m"),
        ("kappa", "kappa"),
        ("power", "p"),
    ):
        if config.get(key) is not None:
            params[name] = config[key]
    kind = config["kind"]
    if kind == "trig-power":
        if "p" not in params:
            raise ConfigError("key 'power' is required for the trig-power kind")
        return trig_power(params.pop("p"))
    return make_schedule(kind, **params)


def _cmd_schedule(config, out_dir):
    if config["optimize-variance"] is not None:
        target = GaussianTarget(np.array([config["optimize-variance"]]))
        g_profile = g_function_for_optimizer(target, k=config["optimize-exponent"])
        schedule = solve_optimal_schedule(g_profile, k=config["optimize-exponent"])
    else:
        schedule = _schedule_from_config(config)
    grid = config["grid"]
    if grid < 2:
        raise ConfigError(f"key 'grid' must be at least 2, got {grid}")
    eps = optimal_epsilon(schedule)
    times = np.linspace(0.0, 1.0, grid)
    with np.errstate(divide="ignore", invalid="ignore"):
        columns = (
            times,
            np.asarray(schedule.alpha(times), dtype=float),
            np.asarray(schedule.beta(times), dtype=float),
            np.asarray(schedule.alpha_dot(times), dtype=float),
            np.asarray(schedule.beta_dot(times), dtype=float),
            np.asarray(eps(times), dtype=float),
        )
    rows = list(zip(*columns))
    _write_rows(
        os.path.join(out_dir, "schedule.csv"),
        ("t", "alpha", "beta", "alpha_dot", "beta_dot", "epsilon"),
        rows,
    )
    return 0


def _transfer_audit_points(rng, n, spread):
    times = rng.uniform(1e-3, 1.0 - 1e-3, size=n)
    states = rng.uniform(-spread, spread, size=(n, 1))
    return times, states


def _cmd_drift_check(config, out_dir):
    seed = config["seed"]
    variance = config["variance"]
    scale_m = config["scale-m"]
    minor = config["minor-weight"]
    n = config["samples"]
    tol = config["tolerance"]
    rng = stream_rng(seed, "bench")
    rows = []

    reference = gaussian_drift(LinearSchedule(), GaussianTarget(np.array([variance])))
    transferred = transfer_drift(reference, DesignedGaussianSchedule(variance))
    expected_slope = 0.5 * np.log(variance)
    times, states = _transfer_audit_points(rng, n, 3.0 * np.sqrt(variance))
    error = max(
        float(np.max(np.abs(transferred(t, x[None]) - expected_slope * x[None])))
        for t, x in zip(times, states)
    )
    rows.append(("designed-transfer", error, tol))

    r = np.array([scale_m])
    mixture = GeneralGmmTarget(
        weights=np.array([minor, 1.0 - minor]),
        means=np.stack([r, -r]),
        covs=np.stack([np.eye(1), np.eye(1)]),
    )
    reference = general_gmm_drift(LinearSchedule(), mixture)
    quad = trig_power(2.0)
    transferred = transfer_drift(reference, quad)
    closed = bimodal_drift(quad, BimodalGmmTarget(r, minor))
    times, states = _transfer_audit_points(rng, n, 3.0 * (scale_m + 1.0))
    error = max(
        float(np.max(np.abs(transferred(t, x[None]) - closed(t, x[None]))))
        for t, x in zip(times, states)
    )
    rows.append(("bimodal-transfer", error, tol))

    designed = gaussian_drift(DesignedGaussianSchedule(variance), GaussianTarget(np.array([variance])))
    times = np.linspace(1e-3, 1.0 - 1e-3, 128)
    probe = rng.standard_normal((16, 1))
    level = 0.5 * abs(np.log(variance))
    error = max(float(np.max(np.abs(designed.jacobian_norm(t, probe) - level))) for t in times)
    rows.append(("designed-jacobian-norm", error, 1e-10))

    bimodal = bimodal_drift(trig_power(1.0), BimodalGmmTarget(r, minor))
    times, states = _transfer_audit_points(rng, n // 4, 2.0 * scale_m)
    error = 0.0
    for t, x in zip(times, states):
        dense = bimodal.jacobian(t, x)
        top = float(np.max(np.abs(np.linalg.eigvalsh(dense))))
        error = max(error, abs(float(bimodal.jacobian_norm(t, x[None])[0]) - top))
    rows.append(("bimodal-jacobian-norm", error, 1e-8))

    table = [(name, err, bound, "pass" if err < bound else "fail") for name, err, bound in rows]
    _write_rows(
        os.path.join(out_dir, "results.csv"),
        ("check", "max_error", "tolerance", "status"),
        table,
    )
    return 0 if all(status == "pass" for *_, status in table) else 1


def _cmd_lip(config, out_dir):
    schedule = _schedule_from_config(config)
    target = GaussianTarget(np.array([config["variance"]]))
    drift = gaussian_drift(schedule, target)
    report = avg_lip2(
        drift,
        schedule,
        target,
        t_grid_size=config["t-grid"],
        mc_per_t=config["mc-per-t"],
        seed=config["seed"],
    )
    energy = kinetic_energy(
        drift,
        schedule,
        target,
        t_grid_size=config["t-grid"],
        mc_per_t=config["mc-per-t"],
        seed=config["seed"],
    )
    rows = [
        ("a2_estimate", report.a2_estimate),
        ("std_error", report.std_error),
        ("sup_lipschitz", report.sup_lipschitz),
        ("kinetic_energy", energy),
        ("t_grid_size", report.t_grid_size),
        ("mc_per_t", report.mc_per_t),
    ]
    _write_rows(os.path.join(out_dir, "results.csv"), ("key", "value"), rows)
    return 0


def _cmd_kl(config, out_dir):
    bench = KlBenchConfig(
        variance=config["variance"],
        delta=config["delta"],
        schedule_kinds=config["schedules"],
        t_quad_points=config["quad-points"],
        mc_per_t=config["mc-per-t"],
        budget_repeats=config["repeats"],
        seed=config["seed"],
    )
    result = kl_invariance_bench(bench, out_dir=out_dir)
    print(f"analytic {result.analytic:.17g} spread {result.pairwise_spread:.3e}")
    return 0


def _cmd_gmm_bench(config, out_dir):
    bench = GmmBenchConfig(
        dim=config["dim"],
        minor_weight=config["minor-weight"],
        step_counts=config["steps"],
        n_samples=config["samples"],
        seed=config["seed"],
    )
    results = gmm_mode_weight_bench(bench, out_dir=out_dir)
    for result in results:
        print(
            f"{result.schedule_label} steps={result.rk4_steps} "
            f"minor={result.recovered_minor_weight:.4f}"
        )
    return 0


def _cmd_grf_bench(config, out_dir):
    bench = GrfBenchConfig(
        resolutions=config["resolutions"],
        step_counts=config["steps"],
        n_samples=config["samples"],
        seed=config["seed"],
        lambda_policy=config["lambda-policy"],
        reference_resolution=config["reference-resolution"],
    )
    rows, _ = grf_spectrum_bench(bench, out_dir=out_dir)
    for row in rows:
        print(
            f"N={row.resolution} {row.schedule_label} steps={row.rk4_steps} "
            f"err={row.mean_rel_error:.4f}"
        )
    return 0


def _cmd_sde_check(config, out_dir):
    variance = config["variance"]
    schedule = LinearSchedule()
    target = GaussianTarget(np.array([variance]))
    drift = gaussian_drift(schedule, target)
    score = gaussian_score(schedule, target)
    eps = optimal_epsilon(schedule)
    int_config = IntegratorConfig(method="euler-maruyama", steps=config["em-steps"])
    init = initial_state(schedule, target, config["samples"], config["seed"])
    final = integrate_sde(drift, score, eps, init, int_config, config["seed"])
    observed = float(np.var(final.data))
    rows = [
        ("terminal_variance", observed),
        ("expected_variance", variance),
        ("abs_deviation", abs(observed - variance)),
        ("em_steps", config["em-steps"]),
        ("samples", config["samples"]),
    ]
    _write_rows(os.path.join(out_dir, "results.csv"), ("key", "value"), rows)
    return 0


_RUNNERS = {
    "schedule": _cmd_schedule,
    "drift-check": _cmd_drift_check,
    "lip": _cmd_lip,
    "kl": _cmd_kl,
    "gmm-bench": _cmd_gmm_bench,
    "grf-bench": _cmd_grf_bench,
    "sde-check": _cmd_sde_check,
}


def cli_main(argv=None):
    """Entry point; returns the process exit code."""
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.subcommand is None:
        parser.print_help()
        return 2
    try:
        file_values = _read_config_file(args.config) if args.config else {}
        resolved = _resolve(args.subcommand, args, file_values)
        resolved["threads"] = _resolve_threads(resolved["threads"])
        out_dir = resolved["out"] or os.path.join("runs", args.subcommand)
        os.makedirs(out_dir, exist_ok=True)
        _write_resolved_config(out_dir, args.subcommand, resolved)
        try:
            return _RUNNERS[args.subcommand](resolved, out_dir)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(cli_main())
