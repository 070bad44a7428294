"""Sampling of Q-Gaussian processes and exact Wiener integrals of steps.

The driving noise is beta_t = sum_j sqrt(lambda_j) beta_j(t) e_j with
independent scalar factors beta_j sharing one temporal covariance R. Step
functions carry their U_0 coordinates in the orthonormal basis
{sqrt(lambda_j) e_j}, which makes every RKHS inner product a plain dot
product against rectangle increments of R and removes the lambdas from
all downstream formulas.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng as _rng
from .covariance import (CovarianceKernel, cholesky_psd, gram_matrix,
                         increment_gram, rectangle_increment)
from .errors import AlignmentError, KernelValidityError

TIME_TOL = 1e-9


@dataclass(frozen=True)
class QSpec:
    """Eigenvalues of the covariance operator Q, truncated to J modes."""

    lambdas: tuple
    J: int = 0

    def __post_init__(self):
        lam = tuple(float(v) for v in self.lambdas)
        object.__setattr__(self, "lambdas", lam)
        if self.J == 0:
            object.__setattr__(self, "J", len(lam))
        if self.J != len(lam):
            raise ValueError("J must match len(lambdas)")
        if any(v <= 0 for v in lam):
            raise ValueError("lambdas must be positive")
        if any(a < b for a, b in zip(lam, lam[1:])):
            raise ValueError("lambdas must be non-increasing")

    @property
    def trace(self):
        return float(sum(self.lambdas))


@dataclass
class StepFunction:
    """U_0-valued step function: value coeffs[i] on (breakpoints[i], breakpoints[i+1]].

    Coordinates are in the orthonormal basis of U_0 (see module docstring).
    """

    breakpoints: np.ndarray   # (M+1,) increasing, within [0, T]
    coeffs: np.ndarray        # (M, J)

    def __post_init__(self):
        self.breakpoints = np.asarray(self.breakpoints, dtype=float)
        self.coeffs = np.atleast_2d(np.asarray(self.coeffs, dtype=float))
        if self.breakpoints.ndim != 1 or len(self.breakpoints) != len(self.coeffs) + 1:
            raise ValueError("need one more breakpoint than coefficient row")
        if np.any(np.diff(self.breakpoints) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if self.breakpoints[0] < 0:
            raise ValueError("breakpoints must be nonnegative")
        if not np.all(np.isfinite(self.coeffs)):
            raise ValueError("coefficients must be finite")

    @property
    def J(self):
        return self.coeffs.shape[1]

    @property
    def T(self):
        return float(self.breakpoints[-1])

    def refine(self, partition):
        """Coefficient rows on a finer partition covering this one (exact)."""
        partition = np.asarray(partition, dtype=float)
        out = np.zeros((len(partition) - 1, self.J))
        mids = 0.5 * (partition[:-1] + partition[1:])
        idx = np.searchsorted(self.breakpoints, mids, side="left") - 1
        inside = (mids > self.breakpoints[0]) & (mids < self.breakpoints[-1] + TIME_TOL) \
            & (idx >= 0) & (idx < len(self.coeffs))
        out[inside] = self.coeffs[np.clip(idx[inside], 0, len(self.coeffs) - 1)]
        return out

    def truncate(self, tau):
        """The step function times the indicator of (0, tau]."""
        if tau <= self.breakpoints[0]:
            return StepFunction(np.array([0.0, max(tau, TIME_TOL)]),
                                np.zeros((1, self.J)))
        keep = self.breakpoints < tau - TIME_TOL
        k = int(np.sum(keep[1:]))
        bp = np.concatenate([self.breakpoints[:k + 1], [tau]])
        return StepFunction(bp, self.coeffs[:k + 1].copy())

    def l_r_norm(self, r):
        """The L^r([0,T]; U_0) norm (exact for the step structure)."""
        mags = np.sqrt(np.sum(self.coeffs ** 2, axis=1))
        if np.isinf(r):
            return float(mags.max()) if len(mags) else 0.0
        return float(np.sum(mags ** r * np.diff(self.breakpoints)) ** (1.0 / r))

    def scale(self, c):
        return StepFunction(self.breakpoints.copy(), c * self.coeffs)


def canonical_partition(step_functions, extra_times=()):
    """Sorted union of all breakpoints (and extra times), tolerance-merged."""
    pts = [np.asarray(extra_times, dtype=float)]
    pts += [sf.breakpoints for sf in step_functions]
    allpts = np.sort(np.unique(np.concatenate(pts)))
    merged = [allpts[0]]
    for t in allpts[1:]:
        if t - merged[-1] > TIME_TOL:
            merged.append(t)
    return np.asarray(merged)


@dataclass
class PathSample:
    """Monte-Carlo paths of the scalar factors beta_j on a time grid."""

    times: np.ndarray              # (n_times,)
    paths: np.ndarray              # (n_samples, J, n_times)
    seed: int
    meta: dict = field(default_factory=dict)

    def increments(self):
        return np.diff(self.paths, axis=-1)


def sample_paths(kernel: CovarianceKernel, times, q: QSpec, n_samples, seed) -> PathSample:
    """Draw i.i.d. paths of the scalar factors via Cholesky of [R(t_i, t_j)].

    Each factor index j gets its own counter-based substream, so paths are
    reproducible independently of J and of how many samples other modes
    consumed.
    """
    times = np.asarray(times, dtype=float)
    L = cholesky_psd(gram_matrix(kernel, times))
    paths = np.empty((n_samples, q.J, len(times)))
    for j in range(q.J):
        gen = _rng.substream(seed, _rng.PATHS, j)
        z = gen.standard_normal((len(times), n_samples))
        paths[:, j, :] = (L @ z).T
    return PathSample(times=times, paths=paths, seed=int(seed),
                      meta={"kernel": kernel.name, "J": q.J})


# ---------------------------------------------------------------------------
# inner products


def inner_H_U0(phi: StepFunction, psi: StepFunction, kernel: CovarianceKernel) -> float:
    """RKHS inner product of two U_0-valued step functions (exact)."""
    C = phi.coeffs @ psi.coeffs.T
    bp, bq = phi.breakpoints, psi.breakpoints
    T, S = np.meshgrid(bp, bq, indexing="ij")
    R = np.asarray(kernel.R(T, S), dtype=float)
    inc = R[1:, 1:] - R[1:, :-1] - R[:-1, 1:] + R[:-1, :-1]
    return float(np.sum(C * inc))


def norm_H_U0(phi: StepFunction, kernel: CovarianceKernel) -> float:
    v = inner_H_U0(phi, phi, kernel)
    if v < -1e-12:
        raise KernelValidityError(f"negative squared norm {v}")
    return float(np.sqrt(max(v, 0.0)))


def abs_inner_H_U0(phi: StepFunction, psi: StepFunction, kernel) -> float:
    """Same rectangle-increment sum with |values|, the |H| inner product.

    Only meaningful for kernels with nonnegative rectangle increments,
    which holds for all the builtins.
    """
    a = np.sqrt(np.sum(phi.coeffs ** 2, axis=1))
    b = np.sqrt(np.sum(psi.coeffs ** 2, axis=1))
    bp, bq = phi.breakpoints, psi.breakpoints
    T, S = np.meshgrid(bp, bq, indexing="ij")
    R = np.asarray(kernel.R(T, S), dtype=float)
    inc = R[1:, 1:] - R[1:, :-1] - R[:-1, 1:] + R[:-1, :-1]
    return float(np.outer(a, b).ravel() @ inc.ravel())


def norm_abs_H_U0(phi: StepFunction, kernel) -> float:
    return float(np.sqrt(max(abs_inner_H_U0(phi, phi, kernel), 0.0)))


@dataclass
class TwoParamStep:
    """A step function of two time variables valued in a flat tensor space."""

    breaks_a: np.ndarray     # (Ma+1,)
    breaks_b: np.ndarray     # (Mb+1,)
    coeffs: np.ndarray       # (Ma, Mb, dim)

    def __post_init__(self):
        self.breaks_a = np.asarray(self.breaks_a, dtype=float)
        self.breaks_b = np.asarray(self.breaks_b, dtype=float)
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape[:2] != (len(self.breaks_a) - 1, len(self.breaks_b) - 1):
            raise ValueError("coefficient block shape mismatch")


def _increments(kernel, breaks_a, breaks_b):
    T, S = np.meshgrid(breaks_a, breaks_b, indexing="ij")
    R = np.asarray(kernel.R(T, S), dtype=float)
    return R[1:, 1:] - R[1:, :-1] - R[:-1, 1:] + R[:-1, :-1]


def tensor_inner(Phi: TwoParamStep, Psi: TwoParamStep, kernel) -> float:
    """Inner product on the two-parameter RKHS tensor square (exact)."""
    inc_a = _increments(kernel, Phi.breaks_a, Psi.breaks_a)
    inc_b = _increments(kernel, Phi.breaks_b, Psi.breaks_b)
    return float(np.einsum("abv,cdv,ac,bd->", Phi.coeffs, Psi.coeffs, inc_a, inc_b,
                           optimize=True))


def tensor_abs_inner(Phi: TwoParamStep, Psi: TwoParamStep, kernel) -> float:
    na = np.sqrt(np.sum(Phi.coeffs ** 2, axis=-1))
    nb = np.sqrt(np.sum(Psi.coeffs ** 2, axis=-1))
    inc_a = _increments(kernel, Phi.breaks_a, Psi.breaks_a)
    inc_b = _increments(kernel, Phi.breaks_b, Psi.breaks_b)
    return float(np.einsum("ab,cd,ac,bd->", na, nb, inc_a, inc_b, optimize=True))


# ---------------------------------------------------------------------------
# Wiener integrals


def wiener_integral_exact(h: StepFunction, kernel, q: QSpec, n_samples, seed):
    """i.i.d. N(0, <h,h>_H) samples of the Wiener integral beta(h).

    The variance comes from the exact inner product; tiny negative values
    from rounding are clamped, anything worse raises.
    """
    if h.J != q.J:
        raise ValueError("step function and QSpec disagree on J")
    var = inner_H_U0(h, h, kernel)
    if var < -1e-12:
        raise KernelValidityError(f"computed variance {var} is negative")
    var = max(var, 0.0)
    gen = _rng.substream(seed, _rng.WIENER)
    return np.sqrt(var) * gen.standard_normal(int(n_samples))


def wiener_integral_path(h: StepFunction, paths: PathSample):
    """Riemann evaluation of beta(h) on sampled paths (exact for step h
    aligned with the path grid)."""
    idx = np.searchsorted(paths.times, h.breakpoints)
    idx = np.clip(idx, 0, len(paths.times) - 1)
    if np.any(np.abs(paths.times[idx] - h.breakpoints) > TIME_TOL):
        raise AlignmentError("step breakpoints must lie on the path grid")
    if h.J != paths.paths.shape[1]:
        raise AlignmentError("step function J does not match the paths")
    vals = paths.paths[:, :, idx]                       # (n, J, M+1)
    deltas = vals[:, :, 1:] - vals[:, :, :-1]           # (n, J, M)
    return np.einsum("njm,mj->n", deltas, h.coeffs)
