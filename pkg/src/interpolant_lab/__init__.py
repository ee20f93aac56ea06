"""Numerical workbench for stochastic-interpolant schedule design."""

from .diagnostics import (
    LipReport,
    SpectrumReport,
    avg_lip2,
    g_function_for_optimizer,
    kinetic_energy,
    kl_star,
    spectrum,
)
from .dynamics import (
    IntegratorConfig,
    Trajectory,
    initial_state,
    integrate_ode,
    integrate_sde,
)
from .experiments import (
    BimodalFit,
    GmmBenchConfig,
    GrfBenchConfig,
    KlBenchConfig,
    ModeWeightResult,
    fit_bimodal_1d,
    gmm_mode_weight_bench,
    grf_spectrum_bench,
    kl_invariance_bench,
    pca_project_1d,
)
from .drift import (
    DriftOracle,
    ScoreOracle,
    bimodal_drift,
    drift_from_score,
    gaussian_drift,
    gaussian_score,
    general_gmm_drift,
    matrix_schedule_drift,
    optimal_epsilon,
    ot_gaussian_drift,
    score_from_drift,
    transfer_drift,
)
from .schedules import (
    ApproxMinLipGmmSchedule,
    DesignedGaussianSchedule,
    DilatedSchedule,
    LinearSchedule,
    Schedule,
    TabulatedSchedule,
    TrigFromBetaSchedule,
    eval_schedule,
    euler_lagrange_residual,
    make_schedule,
    solve_optimal_schedule,
    time_for_noise_ratio,
    trig_linear,
    trig_power,
)
from .targets import (
    BimodalGmmTarget,
    GaussianTarget,
    GeneralGmmTarget,
    GrfSpec,
    SampleBatch,
    SineBasis,
    sample_interpolant,
    sample_target,
)

__version__ = "0.1.0"
