"""Interpolation schedules and the variational schedule optimizer.

A schedule is the pair of curves (alpha_t, beta_t) on [0,1] with
alpha(0) = beta(1) = 1 and alpha(1) = beta(0) = 0, beta strictly
increasing and alpha strictly decreasing in between. Most schedules here
are trigonometric, meaning alpha = sqrt(1 - beta^2); those expose exact
product and square primitives so downstream formulas avoid 0/0 and
catastrophic cancellation near the endpoints.

Evaluation is vectorized: every method accepts a scalar or an ndarray of
times and returns a matching scalar or ndarray. Endpoint derivative
singularities (for instance beta_dot -> inf as t -> 0 for square-root
type schedules) evaluate to the analytic, possibly infinite, value;
integrators are expected to restrict themselves to a clamped interior
window.
"""

import csv
import math
import os
import re

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.interpolate import PchipInterpolator

__all__ = [
    "Schedule",
    "LinearSchedule",
    "TrigFromBetaSchedule",
    "DesignedGaussianSchedule",
    "ApproxMinLipGmmSchedule",
    "DilatedSchedule",
    "TabulatedSchedule",
    "eval_schedule",
    "solve_optimal_schedule",
    "euler_lagrange_residual",
    "beltrami_invariant",
    "make_schedule",
    "trig_linear",
    "trig_power",
]


def _promote_time(t, lo=0.0, hi=1.0):
    """Validate t against [lo, hi] and return (1-d float array, was_scalar)."""
    arr = np.atleast_1d(np.asarray(t, dtype=float))
    if arr.size and (not np.all(np.isfinite(arr)) or arr.min() < lo or arr.max() > hi):
        raise ValueError(
            f"schedule time must lie in [{lo:g}, {hi:g}], got values in "
            f"[{arr.min():g}, {arr.max():g}]"
        )
    return arr, np.ndim(t) == 0


def _restore(out, was_scalar):
    return float(out[0]) if was_scalar else out


class Schedule:
    """Base class for interpolation schedules.

    Subclasses set ``kind``, ``is_trig`` and ``label`` and implement the
    vectorized internals ``_alpha``, ``_beta``, ``_alpha_dot``,
    ``_beta_dot`` plus, where a more stable form exists, the product and
    square primitives. Instances are immutable after construction and
    safe to share across threads.
    """

    kind = "base"
    is_trig = False
    label = "base"

    def _alpha(self, t):
        raise NotImplementedError

    def _beta(self, t):
        raise NotImplementedError

    def _alpha_dot(self, t):
        raise NotImplementedError

    def _beta_dot(self, t):
        raise NotImplementedError

    def _alpha_sq(self, t):
        return self._alpha(t) ** 2

    def _beta_sq(self, t):
        return self._beta(t) ** 2

    def _alpha_alpha_dot(self, t):
        return self._alpha(t) * self._alpha_dot(t)

    def _beta_beta_dot(self, t):
        return self._beta(t) * self._beta_dot(t)

    def alpha(self, t):
        arr, s = _promote_time(t)
        return _restore(self._alpha(arr), s)

    def beta(self, t):
        arr, s = _promote_time(t)
        return _restore(self._beta(arr), s)

    def alpha_dot(self, t):
        arr, s = _promote_time(t)
        return _restore(self._alpha_dot(arr), s)

    def beta_dot(self, t):
        arr, s = _promote_time(t)
        return _restore(self._beta_dot(arr), s)

    def alpha_sq(self, t):
        """alpha(t)^2 via the most cancellation-free form available."""
        arr, s = _promote_time(t)
        return _restore(self._alpha_sq(arr), s)

    def beta_sq(self, t):
        """beta(t)^2 via the most cancellation-free form available."""
        arr, s = _promote_time(t)
        return _restore(self._beta_sq(arr), s)

    def alpha_alpha_dot(self, t):
        """The product alpha * alpha_dot, finite wherever it is analytically."""
        arr, s = _promote_time(t)
        return _restore(self._alpha_alpha_dot(arr), s)

    def beta_beta_dot(self, t):
        """The product beta * beta_dot, finite wherever it is analytically."""
        arr, s = _promote_time(t)
        return _restore(self._beta_beta_dot(arr), s)

    def __repr__(self):
        return f"{type(self).__name__}({self.label!r})"


class LinearSchedule(Schedule):
    """alpha = 1 - t, beta = t."""

    kind = "linear"
    is_trig = False
    label = "linear"

    def _alpha(self, t):
        return 1.0 - t

    def _beta(self, t):
        return np.array(t, copy=True)

    def _alpha_dot(self, t):
        return np.full_like(t, -1.0)

    def _beta_dot(self, t):
        return np.ones_like(t)


class _TrigFromCurve(Schedule):
    """Trig family driven by a beta curve: alpha = sqrt(1 - beta^2).

    Subclasses implement ``_beta`` and ``_beta_dot``; everything else
    follows from alpha^2 = (1 - beta)(1 + beta) and alpha*alpha_dot =
    -beta*beta_dot.
    """

    is_trig = True

    def _alpha_sq(self, t):
        b = self._beta(t)
        return (1.0 - b) * (1.0 + b)

    def _alpha(self, t):
        return np.sqrt(self._alpha_sq(t))

    def _beta_beta_dot(self, t):
        return self._beta(t) * self._beta_dot(t)

    def _alpha_alpha_dot(self, t):
        return -self._beta_beta_dot(t)

    def _alpha_dot(self, t):
        with np.errstate(divide="ignore"):
            return -self._beta_beta_dot(t) / self._alpha(t)


class _TrigFromSquares(Schedule):
    """Trig family driven by stable beta^2 and beta*beta_dot primitives.

    Used by the square-root type schedules whose beta behaves like
    sqrt(t) near 0, so beta_dot(0) is genuinely infinite while the
    product beta*beta_dot stays finite.
    """

    is_trig = True

    def _beta(self, t):
        return np.sqrt(np.maximum(self._beta_sq(t), 0.0))

    def _alpha_sq(self, t):
        return 1.0 - self._beta_sq(t)

    def _alpha(self, t):
        return np.sqrt(np.maximum(self._alpha_sq(t), 0.0))

    def _alpha_alpha_dot(self, t):
        return -self._beta_beta_dot(t)

    def _beta_dot(self, t):
        with np.errstate(divide="ignore"):
            return self._beta_beta_dot(t) / self._beta(t)

    def _alpha_dot(self, t):
        with np.errstate(divide="ignore"):
            return -self._beta_beta_dot(t) / self._alpha(t)


class TrigFromBetaSchedule(_TrigFromCurve):
    """Trig schedule built from an explicit beta curve and its derivative.

    Args:
        beta_fn: vectorized map t -> beta(t) with beta(0)=0, beta(1)=1,
            strictly increasing.
        beta_dot_fn: vectorized derivative of beta_fn.
        label: short name used in reports and CSV output.
    """

    kind = "trig-from-beta"

    def __init__(self, beta_fn, beta_dot_fn, label="trig"):
        b0 = float(beta_fn(np.array([0.0]))[0])
        b1 = float(beta_fn(np.array([1.0]))[0])
        if abs(b0) > 1e-12 or abs(b1 - 1.0) > 1e-12:
            raise ValueError(
                f"beta curve must satisfy beta(0)=0 and beta(1)=1, got "
                f"beta(0)={b0:g}, beta(1)={b1:g}"
            )
        self._beta_fn = beta_fn
        self._beta_dot_fn = beta_dot_fn
        self.label = label

    def _beta(self, t):
        return np.asarray(self._beta_fn(t), dtype=float)

    def _beta_dot(self, t):
        return np.asarray(self._beta_dot_fn(t), dtype=float)


def trig_linear():
    """The trig schedule with beta = t, alpha = sqrt(1 - t^2)."""
    return TrigFromBetaSchedule(
        lambda t: np.array(t, copy=True), np.ones_like, label="trig-linear"
    )


def trig_power(p):
    """Trig schedule with beta = t^p for p >= 1."""
    p = float(p)
    if p < 1.0:
        raise ValueError(f"power must be >= 1 for a monotone curve with finite slope, got {p:g}")
    return TrigFromBetaSchedule(
        lambda t: t**p, lambda t: p * t ** (p - 1.0), label=f"trig-power-{p:g}"
    )


class DesignedGaussianSchedule(_TrigFromSquares):
    """Variance-geodesic schedule for a Gaussian target, driven by lambda_star.

    With l = log(lambda_star):
        beta^2  = expm1(l t) / expm1(l)
        alpha^2 = (expm1(l) - expm1(l t)) / expm1(l)
        beta*beta_dot = l e^{l t} / (2 expm1(l))
    so alpha^2 + beta^2 * lambda_star = lambda_star^t holds to roundoff.
    Near lambda_star = 1 the ratios are 0/0 and a second-order series in
    l takes over.
    """

    kind = "designed-gaussian"

    _SERIES_CUTOFF = 1e-6

    def __init__(self, lambda_star):
        lam = float(lambda_star)
        if not math.isfinite(lam) or lam <= 0.0:
            raise ValueError(f"lambda_star must be a positive finite number, got {lam!r}")
        self.lambda_star = lam
        self.log_lambda = math.log(lam)
        self._use_series = abs(lam - 1.0) < self._SERIES_CUTOFF
        self.label = f"designed-gaussian({lam:g})"

    def _beta_sq(self, t):
        l = self.log_lambda
        if self._use_series:
            num = 1.0 + l * t / 2.0 + (l * t) ** 2 / 6.0
            den = 1.0 + l / 2.0 + l**2 / 6.0
            return t * num / den
        return np.expm1(l * t) / math.expm1(l)

    def _alpha_sq(self, t):
        l = self.log_lambda
        if self._use_series:
            num = 1.0 + l * (1.0 + t) / 2.0 + l**2 * (1.0 + t + t**2) / 6.0
            den = 1.0 + l / 2.0 + l**2 / 6.0
            return (1.0 - t) * num / den
        e = math.expm1(l)
        return (e - np.expm1(l * t)) / e

    def _beta_beta_dot(self, t):
        l = self.log_lambda
        if self._use_series:
            num = 1.0 + l * t + (l * t) ** 2 / 2.0
            den = 1.0 + l / 2.0 + l**2 / 6.0
            return 0.5 * num / den
        return 0.5 * l * np.exp(l * t) / math.expm1(l)


class ApproxMinLipGmmSchedule(_TrigFromSquares):
    """Near-minimal-Lipschitz schedule for well-separated symmetric bimodal
    targets at scale M:

        beta(t) = (1/M) sqrt(-log(1 + (e^{-M^2} - 1) t))

    For large M the float64 value of expm1(-M^2) saturates at -1, which
    would send beta(1) to infinity, so the exact endpoints t=0 and t=1
    are pinned to their analytic values (0, 1). Derivative primitives at
    t=1 still return the analytic, possibly infinite, value.
    """

    kind = "approx-minlip-gmm"

    def __init__(self, scale_m):
        m = float(scale_m)
        if not math.isfinite(m) or m <= 0.0:
            raise ValueError(f"scale_m must be a positive finite number, got {m!r}")
        self.scale_m = m
        self._c = math.expm1(-(m**2))
        self.label = f"approx-minlip-gmm({m:g})"

    def _beta_sq(self, t):
        msq = self.scale_m**2
        with np.errstate(divide="ignore"):
            out = -np.log1p(self._c * t) / msq
        return np.where(t == 1.0, 1.0, out)

    def _alpha_sq(self, t):
        msq = self.scale_m**2
        with np.errstate(divide="ignore"):
            out = (msq + np.log1p(self._c * t)) / msq
        return np.where(t == 1.0, 0.0, out)

    def _beta_beta_dot(self, t):
        g = 1.0 + self._c * t
        with np.errstate(divide="ignore"):
            return -self._c / (2.0 * self.scale_m**2 * g)


class DilatedSchedule(_TrigFromCurve):
    """Piecewise-linear beta reaching kappa/M at t=1/2, then ramping to 1.

    beta has slope 2*kappa/M on [0, 1/2] and 2*(1 - kappa/M) on [1/2, 1];
    the derivative at the kink is the right-hand one. Requires
    0 < kappa < M so both slopes are positive.
    """

    kind = "dilated"

    def __init__(self, scale_m, kappa=1.0):
        m = float(scale_m)
        k = float(kappa)
        if not math.isfinite(m) or not math.isfinite(k) or not 0.0 < k < m:
            raise ValueError(
                f"dilated schedule requires 0 < kappa < scale_m, got kappa={k!r}, scale_m={m!r}"
            )
        self.scale_m = m
        self.kappa = k
        self.label = f"dilated(kappa={k:g}, M={m:g})"

    def _beta(self, t):
        r = self.kappa / self.scale_m
        return np.where(t < 0.5, 2.0 * r * t, r + (1.0 - r) * (2.0 * t - 1.0))

    def _beta_dot(self, t):
        r = self.kappa / self.scale_m
        return np.where(t < 0.5, 2.0 * r, 2.0 * (1.0 - r))


class TabulatedSchedule(_TrigFromCurve):
    """Trig schedule stored as matched (t, beta) grids.

    The monotone shape-preserving cubic interpolant of t as a function
    of beta is stored and inverted numerically (bisection to machine
    precision) to evaluate beta(t); the derivative is the analytic
    derivative of the interpolant, beta_dot = 1 / t'(beta). Storing the
    inverse direction keeps the representation accurate where the t-grid
    is sparse, which for optimizer output is near t = 1.

    Args:
        t_grid: strictly increasing times with t[0]=0, t[-1]=1 (within 1e-9).
        beta_grid: strictly increasing beta values with beta[0]=0,
            beta[-1]=1 (within 1e-9).
        label: short name used in reports and CSV output.
    """

    kind = "tabulated"

    _BISECT_ITERS = 64

    def __init__(self, t_grid, beta_grid, label="tabulated"):
        t_grid = np.asarray(t_grid, dtype=float).copy()
        beta_grid = np.asarray(beta_grid, dtype=float).copy()
        if t_grid.ndim != 1 or t_grid.shape != beta_grid.shape or t_grid.size < 4:
            raise ValueError(
                f"t_grid and beta_grid must be matching 1-d arrays of length >= 4, "
                f"got shapes {t_grid.shape} and {beta_grid.shape}"
            )
        if np.any(np.diff(t_grid) <= 0.0):
            raise ValueError("t_grid must be strictly increasing")
        if np.any(np.diff(beta_grid) <= 0.0):
            raise ValueError("beta_grid must be strictly increasing")
        for name, arr, lo, hi in (
            ("t_grid", t_grid, 0.0, 1.0),
            ("beta_grid", beta_grid, 0.0, 1.0),
        ):
            if abs(arr[0] - lo) > 1e-9 or abs(arr[-1] - hi) > 1e-9:
                raise ValueError(
                    f"{name} must run from {lo:g} to {hi:g} (within 1e-9), "
                    f"got endpoints {arr[0]:g}, {arr[-1]:g}"
                )
        t_grid[0], t_grid[-1] = 0.0, 1.0
        beta_grid[0], beta_grid[-1] = 0.0, 1.0
        self.t_grid = t_grid
        self.beta_grid = beta_grid
        self.label = label
        self._t_of_beta = PchipInterpolator(beta_grid, t_grid, extrapolate=False)
        self._dt_dbeta = self._t_of_beta.derivative()

    def _beta(self, t):
        lo = np.zeros_like(t)
        hi = np.ones_like(t)
        for _ in range(self._BISECT_ITERS):
            mid = 0.5 * (lo + hi)
            below = self._t_of_beta(mid) < t
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        out = 0.5 * (lo + hi)
        out = np.where(t == 0.0, 0.0, out)
        out = np.where(t == 1.0, 1.0, out)
        return out

    def _beta_dot(self, t):
        with np.errstate(divide="ignore"):
            return 1.0 / self._dt_dbeta(self._beta(t))

    def to_csv(self, path):
        """Write the (t, beta) grid as a two-column CSV with header t,beta."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "beta"])
            for ti, bi in zip(self.t_grid, self.beta_grid):
                writer.writerow([f"{ti:.17g}", f"{bi:.17g}"])

    @classmethod
    def from_csv(cls, path, label=None):
        """Load a schedule written by to_csv, validating monotonicity."""
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [h.strip() for h in header] != ["t", "beta"]:
                raise ValueError(
                    f"expected CSV header 't,beta' in {path}, got {header!r}"
                )
            rows = [(float(r[0]), float(r[1])) for r in reader if r]
        if len(rows) < 4:
            raise ValueError(f"schedule CSV {path} has {len(rows)} rows, need at least 4")
        t = np.array([r[0] for r in rows])
        b = np.array([r[1] for r in rows])
        return cls(t, b, label=label or os.path.basename(path))


def eval_schedule(schedule, t):
    """Evaluate a schedule at time(s) t.

    Args:
        schedule: any Schedule instance.
        t: scalar or array of times in [0, 1].

    Returns:
        Tuple (alpha, beta, alpha_dot, beta_dot), each matching the shape
        of t. Derivatives at endpoint singularities are the analytic
        (possibly infinite) values.
    """
    return (
        schedule.alpha(t),
        schedule.beta(t),
        schedule.alpha_dot(t),
        schedule.beta_dot(t),
    )


def _weight_on_grid(g_function, u, k, weight_mode):
    g = np.asarray(g_function(u), dtype=float)
    if g.shape != u.shape:
        raise ValueError(
            f"g_function must return one value per grid point, got shape {g.shape} for {u.shape}"
        )
    if not np.all(np.isfinite(g)) or np.any(g < 0.0):
        bad = u[~(np.isfinite(g) & (g >= 0.0))][0]
        raise ValueError(
            f"g_function must be finite and nonnegative on [0,1]; failed at u={bad:g}"
        )
    power = 1.0 / (2.0 * k)
    if weight_mode == "mixture":
        return u * g**power
    if weight_mode == "general":
        return g**power
    raise ValueError(f"weight_mode must be 'mixture' or 'general', got {weight_mode!r}")


def solve_optimal_schedule(g_function, k=1, grid_size=512, weight_mode="mixture"):
    """Solve the schedule variational problem for a given G function.

    Computes the cumulative integral of the weight w(u) on a uniform
    u-grid by composite Simpson, normalizes it to obtain t(beta), and
    returns the tabulated schedule (inverted by monotone interpolation
    at evaluation time). The weight is u * G(u)^(1/(2k)) under the
    mixture parametrization and G(u)^(1/(2k)) for the general form.

    Args:
        g_function: vectorized map u in [0,1] -> finite nonnegative G(u).
        k: positive integer exponent of the generalized objective.
        grid_size: number of uniform u-grid points (>= 8).
        weight_mode: "mixture" or "general".

    Returns:
        TabulatedSchedule with beta_grid equal to the u-grid.
    """
    k = int(k)
    if k < 1:
        raise ValueError(f"k must be a positive integer, got {k}")
    if grid_size < 8:
        raise ValueError(f"grid_size must be at least 8, got {grid_size}")
    u = np.linspace(0.0, 1.0, int(grid_size))
    w = _weight_on_grid(g_function, u, k, weight_mode)
    cum = cumulative_simpson(w, x=u, initial=0.0)
    total = cum[-1]
    if total <= 0.0 or np.any(np.diff(cum) <= 0.0):
        raise ValueError(
            "cumulative weight is not strictly increasing; G vanishes on part of "
            "[0,1] and the schedule would be degenerate"
        )
    t = cum / total
    return TabulatedSchedule(t, u, label=f"optimized(k={k}, {weight_mode})")


def beltrami_invariant(schedule, g_function, k=1, t_grid=None):
    """Evaluate beta_dot * beta * G(beta)^(1/(2k)) on a time grid.

    This combination is constant in t exactly when the schedule solves
    the mixture-parametrization variational problem for G.
    """
    if t_grid is None:
        t_grid = (np.arange(256) + 0.5) / 256.0
    t_grid = np.asarray(t_grid, dtype=float)
    b = schedule.beta(t_grid)
    bbd = schedule.beta_beta_dot(t_grid)
    g = np.asarray(g_function(b), dtype=float)
    if not np.all(np.isfinite(g)) or np.any(g < 0.0):
        raise ValueError("g_function must be finite and nonnegative on the schedule range")
    return bbd * g ** (1.0 / (2.0 * int(k)))


def euler_lagrange_residual(schedule, g_function, k=1, t_grid=None):
    """Optimality residuals of a schedule for the G-weighted objective.

    Returns the invariant beta_dot * beta * G(beta)^(1/(2k)) evaluated on
    t_grid and centered by its mean; an optimal schedule yields residuals
    near zero.

    Args:
        schedule: Schedule to test.
        g_function: the G function the schedule is supposed to optimize,
            in the mixture parametrization.
        k: positive integer exponent.
        t_grid: times to evaluate at; defaults to 256 midpoints of (0,1).

    Returns:
        Array of mean-centered residuals, same length as t_grid.
    """
    vals = beltrami_invariant(schedule, g_function, k=k, t_grid=t_grid)
    return vals - vals.mean()


def time_for_noise_ratio(schedule, eta, iters=200):
    """Invert the noise-to-signal ratio alpha/beta on (0, 1).

    The ratio is strictly decreasing from +inf at t=0 to 0 at t=1, so
    bisection converges unconditionally.

    Args:
        schedule: Schedule instance.
        eta: scalar or array of positive target ratios.
        iters: bisection iterations (default resolves t to ~1e-16).

    Returns:
        Times t with alpha(t)/beta(t) = eta, matching the shape of eta.
    """
    arr = np.atleast_1d(np.asarray(eta, dtype=float))
    if np.any(arr <= 0.0) or not np.all(np.isfinite(arr)):
        raise ValueError("noise ratio must be positive and finite")
    lo = np.zeros_like(arr)
    hi = np.ones_like(arr)
    for _ in range(int(iters)):
        mid = 0.5 * (lo + hi)
        with np.errstate(divide="ignore"):
            ratio = schedule.alpha(mid) / schedule.beta(mid)
        above = ratio > arr
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
    out = 0.5 * (lo + hi)
    return float(out[0]) if np.ndim(eta) == 0 else out


_KIND_BUILDERS = {
    "linear": lambda **kw: LinearSchedule(),
    "trig-linear": lambda **kw: trig_linear(),
    "trig-quadratic": lambda **kw: trig_power(2.0),
    "designed-gaussian": lambda lambda_star, **kw: DesignedGaussianSchedule(lambda_star),
    "approx-minlip-gmm": lambda scale_m, **kw: ApproxMinLipGmmSchedule(scale_m),
    "dilated": lambda scale_m, kappa=1.0, **kw: DilatedSchedule(scale_m, kappa=kappa),
    "tabulated": lambda path, **kw: TabulatedSchedule.from_csv(path),
}


def make_schedule(kind, **params):
    """Construct a schedule by its CLI-facing kind name.

    Args:
        kind: one of linear, trig-linear, trig-quadratic,
            designed-gaussian, approx-minlip-gmm, dilated, tabulated.
        **params: kind-specific parameters (lambda_star, scale_m, kappa,
            path).

    Returns:
        Schedule instance.
    """
    try:
        builder = _KIND_BUILDERS[kind]
    except KeyError:
        raise ValueError(
            f"unknown schedule kind {kind!r}; expected one of {sorted(_KIND_BUILDERS)}"
        ) from None
    try:
        return builder(**params)
    except TypeError as exc:
        names = re.findall(r"'(\w+)'", str(exc))
        detail = ", ".join(names) if names else str(exc)
        raise ValueError(f"schedule kind {kind!r} is missing a required parameter: {detail}") from exc
