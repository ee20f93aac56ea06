"""End-to-end acceptance checks spanning every module of the workbench.

Each test prints one "criterion N: PASS/FAIL" line with the measured
values before asserting, so a verbose run documents the whole table
even when an individual criterion is red.  Run with ``pytest -s`` to
see the lines for passing criteria as well.
"""

import time

import numpy as np

from interpolant_lab.diagnostics import avg_lip2, g_function_for_optimizer
from interpolant_lab.drift import (
    bimodal_drift,
    gaussian_drift,
    gaussian_score,
    general_gmm_drift,
    optimal_epsilon,
    transfer_drift,
)
from interpolant_lab.dynamics import (
    IntegratorConfig,
    initial_state,
    integrate_ode,
    integrate_sde,
)
from interpolant_lab.experiments import (
    GrfBenchConfig,
    gmm_mode_weight_bench,
    grf_spectrum_bench,
    kl_invariance_bench,
)
from interpolant_lab.schedules import (
    DesignedGaussianSchedule,
    LinearSchedule,
    beltrami_invariant,
    solve_optimal_schedule,
    trig_linear,
    trig_power,
)
from interpolant_lab.targets import (
    BimodalGmmTarget,
    GaussianTarget,
    GeneralGmmTarget,
    sample_interpolant,
)


def _report(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})"
    print(line)
    return line


def test_criterion_1_few_step_mode_weights():
    """Recovered minor weights match the reference table within 0.06."""
    expected = {
        "trig-linear": {2: 0.00, 3: 0.03, 4: 0.09},
        "approx-minlip-gmm": {2: 0.42, 3: 0.26, 4: 0.27},
    }
    start = time.perf_counter()
    results = gmm_mode_weight_bench()
    elapsed = time.perf_counter() - start

    cells = []
    worst = 0.0
    for res in results:
        family = res.schedule_label.split("(")[0]
        target_value = expected[family][res.rk4_steps]
        dev = abs(res.recovered_minor_weight - target_value)
        worst = max(worst, dev)
        cells.append(
            f"{family}/{res.rk4_steps} steps: {res.recovered_minor_weight:.4f}"
            f" vs {target_value:.2f}"
        )
    ok = worst <= 0.06 and elapsed < 120.0
    detail = "; ".join(cells) + f"; worst dev {worst:.4f}, runtime {elapsed:.1f}s"
    line = _report(1, ok, detail)
    assert ok, line


def test_criterion_2_designed_lipschitz_constancy():
    """Designed-schedule drift slope is flat in time and small on average."""
    norm_times = (np.arange(128) + 0.5) / 128.0
    probe = np.zeros((1, 1))
    pieces = []
    flat_ok = True
    for lam in (1e-4, 1e-2, 0.5):
        schedule = DesignedGaussianSchedule(lam)
        target = GaussianTarget([lam])
        drift = gaussian_drift(schedule, target)
        level = 0.5 * abs(np.log(lam))
        norms = np.array([drift.jacobian_norm(t, probe)[0] for t in norm_times])
        norm_dev = float(np.max(np.abs(norms - level)))
        report = avg_lip2(drift, schedule, target, t_grid_size=128, mc_per_t=16)
        a2_dev = abs(report.a2_estimate - level**2)
        flat_ok = flat_ok and norm_dev < 1e-10 and a2_dev < 1e-6
        pieces.append(f"lam={lam:g}: norm dev {norm_dev:.2e}, a2 dev {a2_dev:.2e}")

    variance = 100.0
    target = GaussianTarget([variance])
    designed_a2 = 0.25 * np.log(variance) ** 2
    linear = LinearSchedule()
    linear_report = avg_lip2(
        gaussian_drift(linear, target), linear, target, t_grid_size=128, mc_per_t=16
    )
    ratio = linear_report.a2_estimate / designed_a2
    ratio_ok = ratio >= 10.0
    pieces.append(
        f"M=100 linear a2 {linear_report.a2_estimate:.4f} vs designed"
        f" {designed_a2:.4f}, ratio {ratio:.2f} (need >= 10)"
    )
    ok = flat_ok and ratio_ok
    line = _report(2, ok, "; ".join(pieces))
    assert ok, line


def test_criterion_3_transfer_formula_equivalence():
    """Transferred drifts match their closed forms at random probe points."""
    rng = np.random.default_rng(314)
    times = rng.uniform(1e-3, 1.0 - 1e-3, size=200)

    variance = 4.0
    gauss_target = GaussianTarget([variance])
    reference = gaussian_drift(LinearSchedule(), gauss_target)
    designed = transfer_drift(reference, DesignedGaussianSchedule(variance))
    slope = 0.5 * np.log(variance)
    sigma = np.sqrt(variance)
    states = rng.uniform(-3.0 * sigma, 3.0 * sigma, size=200)
    gauss_dev = max(
        abs(float(designed.fn(t, np.array([x]))[0]) - slope * x)
        for t, x in zip(times, states)
    )

    offset, weight = 2.0, 0.3
    general = GeneralGmmTarget(
        weights=[weight, 1.0 - weight],
        means=[[offset], [-offset]],
        covs=[np.eye(1), np.eye(1)],
    )
    reference = general_gmm_drift(LinearSchedule(), general)
    transferred = transfer_drift(reference, trig_power(2))
    closed = bimodal_drift(trig_power(2), BimodalGmmTarget([offset], weight))
    sigma = np.sqrt(1.0 + offset**2)
    states = rng.uniform(-3.0 * sigma, 3.0 * sigma, size=200)
    bimodal_dev = max(
        abs(float(transferred.fn(t, np.array([x]))[0]) - float(closed.fn(t, np.array([x]))[0]))
        for t, x in zip(times, states)
    )

    ok = gauss_dev < 1e-9 and bimodal_dev < 1e-8
    detail = (
        f"designed transfer dev {gauss_dev:.2e} (need < 1e-9); "
        f"bimodal transfer dev {bimodal_dev:.2e} (need < 1e-8)"
    )
    line = _report(3, ok, detail)
    assert ok, line


def test_criterion_4_kl_schedule_invariance():
    """Three schedules report the same closed-form KL within budget."""
    start = time.perf_counter()
    result = kl_invariance_bench()
    elapsed = time.perf_counter() - start

    budget_ok = bool(
        np.all(np.abs(result.estimates - result.analytic) <= 3.0 * result.budgets)
    )
    spread = result.pairwise_spread
    ok = (
        budget_ok
        and spread < 1e-2
        and abs(result.analytic - 0.02) < 1e-12
        and elapsed < 60.0
    )
    estimates = ", ".join(
        f"{label}: {value:.6f}"
        for label, value in zip(result.schedule_labels, result.estimates)
    )
    detail = (
        f"{estimates}; analytic {result.analytic:.6f}, spread {spread:.2e},"
        f" runtime {elapsed:.1f}s"
    )
    line = _report(4, ok, detail)
    assert ok, line


def test_criterion_5_sde_terminal_variance():
    """Noise-augmented sampling reproduces the target variance."""
    variance = 4.0
    schedule = LinearSchedule()
    target = GaussianTarget([variance])
    config = IntegratorConfig(method="euler-maruyama", steps=400)
    initial = initial_state(schedule, target, 100000, seed=0, t_min=config.t_min)
    terminal = integrate_sde(
        gaussian_drift(schedule, target),
        gaussian_score(schedule, target),
        optimal_epsilon(schedule),
        initial,
        config,
        seed=0,
    )
    observed = float(np.var(terminal.data))
    dev = abs(variance - observed)
    ok = dev < 0.15
    detail = f"terminal variance {observed:.4f} vs {variance:.1f}, |dev| {dev:.4f}"
    line = _report(5, ok, detail)
    assert ok, line


def test_criterion_6_rk4_step_halving():
    """Terminal ODE error shrinks by at least 8x when steps double."""
    lam = 0.01
    schedule = DesignedGaussianSchedule(lam)
    target = GaussianTarget([lam])
    drift = gaussian_drift(schedule, target)
    t_min, t_max = 1e-3, 1.0 - 1e-3
    initial = initial_state(schedule, target, 256, seed=0, t_min=t_min)
    factor = np.exp(0.5 * np.log(lam) * (t_max - t_min))
    exact = initial.data * factor

    errors = {}
    for steps in (20, 40):
        config = IntegratorConfig(method="rk4", steps=steps, t_min=t_min, t_max=t_max)
        terminal = integrate_ode(drift, initial, config)
        errors[steps] = float(np.max(np.linalg.norm(terminal.data - exact, axis=1)))
    ratio = errors[20] / errors[40]
    ok = ratio >= 8.0
    detail = (
        f"max norm error {errors[20]:.3e} at 20 steps, {errors[40]:.3e} at 40,"
        f" ratio {ratio:.2f} (need >= 8)"
    )
    line = _report(6, ok, detail)
    assert ok, line


def test_criterion_7_field_spectrum_quality():
    """Designed schedule resolves low shells accurately across resolutions."""
    rows, _ = grf_spectrum_bench(GrfBenchConfig())
    by_key = {
        (row.schedule_label.split("(")[0], row.resolution): row.mean_rel_error
        for row in rows
    }
    designed_64 = by_key[("designed-gaussian", 64)]
    linear_64 = by_key[("linear", 64)]
    designed_32 = by_key[("designed-gaussian", 32)]
    designed_128 = by_key[("designed-gaussian", 128)]
    growth = designed_128 / designed_32

    ok = designed_64 < 0.1 and designed_64 < linear_64 and growth <= 1.5
    detail = (
        f"designed N=64 error {designed_64:.4f} (linear {linear_64:.4f});"
        f" N=32 {designed_32:.4f}, N=128 {designed_128:.4f}, growth {growth:.2f}"
        f" (need <= 1.5)"
    )
    line = _report(7, ok, detail)
    assert ok, line


def test_criterion_8_optimizer_recovers_closed_form():
    """Variational solver reproduces the closed-form Gaussian schedule."""
    lam = 0.01
    g_function = g_function_for_optimizer(GaussianTarget([lam]))
    solved = solve_optimal_schedule(g_function, k=1, grid_size=4096)
    reference = DesignedGaussianSchedule(lam)

    eval_times = np.linspace(0.0, 1.0, 512)
    beta_dev = float(np.max(np.abs(solved.beta(eval_times) - reference.beta(eval_times))))

    invariant = beltrami_invariant(solved, g_function)
    residual = float(np.max(np.abs(invariant - invariant.mean())) / abs(invariant.mean()))

    ok = beta_dev < 1e-3 and residual < 1e-3
    detail = (
        f"max |beta dev| {beta_dev:.2e} (need < 1e-3);"
        f" relative stationarity residual {residual:.2e} (need < 1e-3)"
    )
    line = _report(8, ok, detail)
    assert ok, line


def test_criterion_9_interpolant_mean_identity():
    """E[I tanh(h + beta M I)] equals beta M for the bimodal interpolant."""
    rng = np.random.default_rng(2718)
    schedule = trig_linear()
    n = 100000
    pieces = []
    ok = True
    for case in range(10):
        t = float(rng.uniform(0.05, 0.95))
        m_scale = float(rng.uniform(0.5, 3.0))
        weight = float(rng.uniform(0.2, 0.8))
        target = BimodalGmmTarget([m_scale], weight)
        batch = sample_interpolant(schedule, target, t, n, seed=1000 + case)
        values = batch.data[:, 0]
        beta = float(schedule.beta(t))
        products = values * np.tanh(target.h + beta * m_scale * values)
        mean = float(np.mean(products))
        std_error = float(np.std(products, ddof=1) / np.sqrt(n))
        dev = abs(mean - beta * m_scale)
        ok = ok and dev < 4.0 * std_error
        pieces.append(f"case {case}: dev {dev:.2e} vs 4se {4.0 * std_error:.2e}")
    line = _report(9, ok, "; ".join(pieces))
    assert ok, line
