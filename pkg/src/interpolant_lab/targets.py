"""Target distributions and interpolant sampling.

Four target families: Gaussians specified by their eigen-spectrum (in an
identity, explicit orthogonal, or 2D sine basis), symmetric bimodal
Gaussian mixtures, general Gaussian mixtures with arbitrary component
covariances, and the Dirichlet Gaussian random field on [0,1]^2.

Grid convention for the random field at resolution N: grid points
x_i = i/N for i = 0..N-1, sine modes 1 <= j,k <= N-1, so row 0 and
column 0 are the (only) boundary points present and every field sample
vanishes there exactly. Fields and coefficients are related by the
orthonormal DST-I on the interior (N-1) x (N-1) block; the white-noise
endpoint is the s=0 member of the same family, i.i.d. standard normal
per interior grid point and zero on the boundary.
"""

import math
import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.fft

from .rng import stream_rng

__all__ = [
    "SineBasis",
    "GaussianTarget",
    "BimodalGmmTarget",
    "GeneralGmmTarget",
    "GrfSpec",
    "SampleBatch",
    "sample_target",
    "sample_interpolant",
]


@dataclass(frozen=True)
class SineBasis:
    """Marker basis: Dirichlet-Laplacian sine eigenfunctions on an N x N grid.

    mode_eigenvalues holds the covariance eigenvalue for each sine mode
    (j, k) in natural mode layout, shape (N-1, N-1).
    """

    n_grid: int
    mode_eigenvalues: np.ndarray = field(repr=False)

    def coeffs_from_fields(self, fields):
        """Orthonormal DST-I coefficients of field batch (n, N, N) -> (n, N-1, N-1)."""
        return scipy.fft.dstn(fields[:, 1:, 1:], type=1, norm="ortho", axes=(1, 2))

    def fields_from_coeffs(self, coeffs):
        """Synthesize field batch (n, N, N) from coefficients (n, N-1, N-1)."""
        n = coeffs.shape[0]
        out = np.zeros((n, self.n_grid, self.n_grid))
        out[:, 1:, 1:] = scipy.fft.idstn(coeffs, type=1, norm="ortho", axes=(1, 2))
        return out


class GaussianTarget:
    """Centered Gaussian with covariance given by its eigen-decomposition.

    Args:
        eigenvalues: strictly positive variances in non-increasing order.
        basis: None for the identity basis, an explicit orthogonal matrix
            U (so the covariance is U diag(eigenvalues) U^T), or a
            SineBasis for 2D random fields.
    """

    def __init__(self, eigenvalues, basis=None):
        eigs = np.atleast_1d(np.asarray(eigenvalues, dtype=float))
        if eigs.ndim != 1 or eigs.size == 0:
            raise ValueError("eigenvalues must be a non-empty 1-d sequence")
        if np.any(eigs <= 0.0) or not np.all(np.isfinite(eigs)):
            raise ValueError("eigenvalues must be strictly positive and finite")
        if np.any(np.diff(eigs) > 0.0):
            raise ValueError("eigenvalues must be sorted in non-increasing order")
        self.eigenvalues = eigs
        if basis is None or isinstance(basis, SineBasis):
            self.basis = basis
        else:
            u = np.asarray(basis, dtype=float)
            if u.shape != (eigs.size, eigs.size):
                raise ValueError(
                    f"basis must be a {eigs.size}x{eigs.size} matrix, got shape {u.shape}"
                )
            if np.max(np.abs(u.T @ u - np.eye(eigs.size))) > 1e-10:
                raise ValueError("basis matrix is not orthogonal (U^T U != I beyond 1e-10)")
            self.basis = u
        if isinstance(basis, SineBasis):
            if eigs.size != (basis.n_grid - 1) ** 2:
                raise ValueError(
                    f"sine basis at resolution {basis.n_grid} needs "
                    f"{(basis.n_grid - 1) ** 2} eigenvalues, got {eigs.size}"
                )

    @property
    def dim(self):
        """Ambient sample dimension (N^2 for sine-basis fields)."""
        if isinstance(self.basis, SineBasis):
            return self.basis.n_grid**2
        return self.eigenvalues.size

    @property
    def lam_min(self):
        return float(self.eigenvalues[-1])

    @property
    def lam_max(self):
        return float(self.eigenvalues[0])

    def sample(self, n, rng):
        if isinstance(self.basis, SineBasis):
            m = self.basis.n_grid - 1
            xi = rng.standard_normal((n, m, m))
            coeffs = np.sqrt(self.basis.mode_eigenvalues) * xi
            return self.basis.fields_from_coeffs(coeffs).reshape(n, -1)
        x = np.sqrt(self.eigenvalues) * rng.standard_normal((n, self.eigenvalues.size))
        if self.basis is not None:
            x = x @ self.basis.T
        return x

    def sample_noise(self, n, rng):
        """Draw the unit-covariance noise endpoint in the same function space."""
        if isinstance(self.basis, SineBasis):
            m = self.basis.n_grid - 1
            return self.basis.fields_from_coeffs(rng.standard_normal((n, m, m))).reshape(n, -1)
        return rng.standard_normal((n, self.dim))

    def score(self, schedule, t, x):
        """Exact interpolant score at time t for batch x, per eigendirection."""
        a2 = schedule.alpha_sq(t)
        b2 = schedule.beta_sq(t)
        if isinstance(self.basis, SineBasis):
            n = x.shape[0]
            ng = self.basis.n_grid
            coeffs = self.basis.coeffs_from_fields(x.reshape(n, ng, ng))
            coeffs = -coeffs / (a2 + b2 * self.basis.mode_eigenvalues)
            return self.basis.fields_from_coeffs(coeffs).reshape(n, -1)
        denom = a2 + b2 * self.eigenvalues
        if self.basis is None:
            return -x / denom
        return -(x @ self.basis) / denom @ self.basis.T


class BimodalGmmTarget:
    """Symmetric two-mode mixture p N(r, I) + (1-p) N(-r, I).

    Args:
        r: separation vector (array) or scalar mean offset for d=1.
        p: weight of the +r mode, in (0, 1).
    """

    def __init__(self, r, p):
        r = np.atleast_1d(np.asarray(r, dtype=float))
        if r.ndim != 1 or r.size == 0 or not np.all(np.isfinite(r)):
            raise ValueError("r must be a finite vector or scalar")
        p = float(p)
        if not 0.0 < p < 1.0:
            raise ValueError(f"p must lie strictly inside (0, 1), got {p!r}")
        self.r = r
        self.p = p
        self.h = 0.5 * math.log(p / (1.0 - p))

    @classmethod
    def with_unit_separation(cls, d, p):
        """The all-ones separation preset in dimension d (so ||r|| = sqrt(d))."""
        return cls(np.ones(int(d)), p)

    @property
    def dim(self):
        return self.r.size

    @property
    def m_scale(self):
        """Effective 1D separation ||r||_2."""
        return float(np.linalg.norm(self.r))

    def sample(self, n, rng):
        signs = np.where(rng.random(n) < self.p, 1.0, -1.0)
        return signs[:, None] * self.r + rng.standard_normal((n, self.r.size))

    def sample_noise(self, n, rng):
        return rng.standard_normal((n, self.r.size))


class GeneralGmmTarget:
    """Gaussian mixture with arbitrary SPD component covariances.

    Args:
        weights: component probabilities summing to 1.
        means: (J, d) component means.
        covs: (J, d, d) SPD component covariances.
        noise_cov: optional SPD covariance of the noise endpoint z
            (defaults to the identity).
    """

    def __init__(self, weights, means, covs, noise_cov=None):
        w = np.asarray(weights, dtype=float)
        means = np.asarray(means, dtype=float)
        covs = np.asarray(covs, dtype=float)
        if means.ndim != 2:
            raise ValueError(f"means must be (J, d), got shape {means.shape}")
        j, d = means.shape
        if w.shape != (j,) or covs.shape != (j, d, d):
            raise ValueError(
                f"inconsistent mixture shapes: weights {w.shape}, means {means.shape}, "
                f"covs {covs.shape}"
            )
        if np.any(w < 0.0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("weights must be nonnegative and sum to 1")
        self.weights = w / w.sum()
        self.means = means
        self.covs = covs
        if noise_cov is None:
            noise_cov = np.eye(d)
        self.noise_cov = np.asarray(noise_cov, dtype=float)
        if self.noise_cov.shape != (d, d):
            raise ValueError(f"noise_cov must be {d}x{d}, got {self.noise_cov.shape}")
        try:
            self._cov_chols = np.linalg.cholesky(covs)
            self._noise_chol = np.linalg.cholesky(self.noise_cov)
        except np.linalg.LinAlgError as exc:
            raise ValueError(f"component and noise covariances must be SPD: {exc}") from exc

    @property
    def dim(self):
        return self.means.shape[1]

    @property
    def n_components(self):
        return self.means.shape[0]

    def sample(self, n, rng):
        comp = rng.choice(self.n_components, size=n, p=self.weights)
        xi = rng.standard_normal((n, self.dim))
        out = self.means[comp] + np.einsum("njk,nk->nj", self._cov_chols[comp], xi)
        return out

    def sample_noise(self, n, rng):
        return rng.standard_normal((n, self.dim)) @ self._noise_chol.T


class GrfSpec:
    """Gaussian random field N(0, sigma^2 (-Laplacian + tau^2)^(-s)) on [0,1]^2
    with homogeneous Dirichlet boundary, discretized spectrally at grid
    resolution N.

    Args:
        n_grid: grid points per dimension (N >= 4).
        s: smoothness exponent (s >= 0).
        tau: inverse length-scale mass (tau > 0).
        sigma_sq: amplitude; defaults to (4 pi^2 + tau^2)^s.
    """

    def __init__(self, n_grid, s=3.0, tau=1.0, sigma_sq=None):
        n_grid = int(n_grid)
        s = float(s)
        tau = float(tau)
        if n_grid < 4:
            raise ValueError(f"n_grid must be at least 4, got {n_grid}")
        if s < 0.0:
            raise ValueError(f"s must be nonnegative, got {s}")
        if tau <= 0.0:
            raise ValueError(f"tau must be positive, got {tau}")
        if sigma_sq is None:
            sigma_sq = (4.0 * math.pi**2 + tau**2) ** s
        sigma_sq = float(sigma_sq)
        if sigma_sq <= 0.0:
            raise ValueError(f"sigma_sq must be positive, got {sigma_sq}")
        self.n_grid = n_grid
        self.s = s
        self.tau = tau
        self.sigma_sq = sigma_sq

    @property
    def dim(self):
        return self.n_grid**2

    def mode_eigenvalues(self):
        """Covariance eigenvalues on sine modes, shape (N-1, N-1)."""
        j = np.arange(1, self.n_grid)
        jj, kk = np.meshgrid(j, j, indexing="ij")
        return self.sigma_sq * (math.pi**2 * (jj**2 + kk**2) + self.tau**2) ** (-self.s)

    def sine_basis(self):
        return SineBasis(self.n_grid, self.mode_eigenvalues())

    def to_gaussian_target(self):
        """View of this field as a GaussianTarget in the sine basis."""
        basis = self.sine_basis()
        eigs = np.sort(basis.mode_eigenvalues.ravel())[::-1]
        return GaussianTarget(eigs, basis=basis)

    def sample(self, n, rng):
        return self.to_gaussian_target().sample(n, rng)

    def sample_noise(self, n, rng):
        return self.to_gaussian_target().sample_noise(n, rng)


@dataclass
class SampleBatch:
    """Batch of n samples in d dimensions taken at interpolation time t.

    Binary layout: int64 n, int64 d, float64 t, uint64 seed, then the
    row-major float64 data block.
    """

    data: np.ndarray
    t: float
    seed: int

    _HEADER = struct.Struct("<qqdQ")

    def __post_init__(self):
        self.data = np.ascontiguousarray(np.asarray(self.data, dtype=float))
        if self.data.ndim != 2:
            raise ValueError(f"batch data must be 2-d (n, d), got shape {self.data.shape}")

    @property
    def n(self):
        return self.data.shape[0]

    @property
    def dim(self):
        return self.data.shape[1]

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self._HEADER.pack(self.n, self.dim, float(self.t), int(self.seed)))
            fh.write(self.data.astype("<f8").tobytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            raw = fh.read()
        if len(raw) < cls._HEADER.size:
            raise ValueError(f"batch file {path} is too short for its header")
        n, d, t, seed = cls._HEADER.unpack_from(raw)
        expected = cls._HEADER.size + 8 * n * d
        if len(raw) != expected:
            raise ValueError(
                f"batch file {path} has {len(raw)} bytes, expected {expected} for n={n}, d={d}"
            )
        data = np.frombuffer(raw, dtype="<f8", offset=cls._HEADER.size).reshape(n, d).copy()
        return cls(data, t, seed)

    def to_csv(self, path):
        """Write the data block as CSV (only for d <= 4)."""
        if self.dim > 4:
            raise ValueError(f"CSV export is limited to d <= 4, batch has d={self.dim}")
        header = ",".join(f"x{i}" for i in range(self.dim))
        np.savetxt(path, self.data, fmt="%.17g", delimiter=",", header=header, comments="")


def sample_target(target, n, seed):
    """Draw n i.i.d. samples from a target distribution.

    Args:
        target: GaussianTarget, BimodalGmmTarget, GeneralGmmTarget, or GrfSpec.
        n: number of samples (>= 1).
        seed: integer seed; the draw uses the dedicated target stream.

    Returns:
        SampleBatch at t=1 with shape (n, target.dim).
    """
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    rng = stream_rng(seed, "target")
    return SampleBatch(target.sample(int(n), rng), t=1.0, seed=seed)


def sample_interpolant(schedule, target, t, n, seed):
    """Draw n samples of the interpolant alpha_t z + beta_t x1.

    z is the target's noise endpoint (standard normal unless the target
    declares a noise covariance), drawn independently of x1.

    Args:
        schedule: Schedule supplying (alpha, beta) at time t.
        target: target distribution for x1.
        t: scalar time in [0, 1].
        n: number of samples.
        seed: integer seed; x1 and z use separate derived streams.

    Returns:
        SampleBatch at time t.
    """
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    t = float(t)
    alpha = schedule.alpha(t)
    beta = schedule.beta(t)
    x1 = target.sample(int(n), stream_rng(seed, "target"))
    z = target.sample_noise(int(n), stream_rng(seed, "noise"))
    return SampleBatch(alpha * z + beta * x1, t=t, seed=seed)
