"""Irregularly sampled curves, their kernel recovery and the curve-space inner product.

A curve observed at times ``T_i`` with values ``v_i`` is represented by the
kernel expansion ``sum_k c_k k(., T_ik)`` whose coefficients solve the ridge
system ``(K_ii + eps I) c = v_i``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np
import scipy.linalg as sla

from .kernels import TimeKernel

DEFAULT_EPS_GRID = (1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1)
DEFAULT_GAMMA_GRID = (1.0, 2.0, 5.0, 7.0, 10.0, 20.0, 50.0)


class CurveError(ValueError):
    """Invalid curve data (ordering, range, non-finite values)."""


class NumericalError(RuntimeError):
    """A factorization failed even after jitter; signals corrupted inputs."""


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float).ravel()
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class ObservedCurve:
    """One subject's samples ``values[k]`` taken at ``times[k]``."""

    subject_id: Hashable
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = _frozen(self.times)
        v = _frozen(self.values)
        if t.size == 0:
            raise CurveError(f"subject {self.subject_id!r}: no observations")
        if t.size != v.size:
            raise CurveError(f"subject {self.subject_id!r}: {t.size} times but {v.size} values")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
            raise CurveError(f"subject {self.subject_id!r}: non-finite time or value")
        if t.min() < 0.0 or t.max() > 1.0:
            raise CurveError(f"subject {self.subject_id!r}: times must lie in [0, 1]")
        if np.any(np.diff(t) <= 0):
            raise CurveError(f"subject {self.subject_id!r}: times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @property
    def m(self) -> int:
        return self.times.size


@dataclass(frozen=True, eq=False)
class RecoveredCurve:
    """Kernel expansion ``sum_k coeffs[k] * kernel(., times[k])``."""

    times: np.ndarray
    coeffs: np.ndarray
    kernel: TimeKernel
    epsilon: float

    def __post_init__(self):
        object.__setattr__(self, "times", _frozen(self.times))
        object.__setattr__(self, "coeffs", _frozen(self.coeffs))
        if self.times.size != self.coeffs.size:
            raise CurveError("times and coeffs differ in length")

    def __call__(self, t):
        return evaluate(self, t)


@dataclass(frozen=True)
class SmoothingChoice:
    """Outcome of the smoothing GCV search for one variable."""

    kernel: TimeKernel
    epsilon: float
    gcv_score: float
    scores: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def gamma(self) -> float:
        return self.kernel.gamma


def _ridge_factor(k: np.ndarray, epsilon: float):
    m = k.shape[0]
    a = k + epsilon * np.eye(m)
    try:
        return sla.cho_factor(a, lower=True, check_finite=True)
    except np.linalg.LinAlgError:
        jitter = 1e-10 * np.trace(k) / m
        try:
            return sla.cho_factor(a + jitter * np.eye(m), lower=True)
        except np.linalg.LinAlgError as exc:
            raise NumericalError("ridge system is not positive definite") from exc
    except ValueError as exc:
        raise NumericalError(str(exc)) from exc


def recover(curve: ObservedCurve, kernel: TimeKernel, epsilon: float) -> RecoveredCurve:
    """Solve ``(K + epsilon I) c = values`` for the expansion coefficients."""
    if not epsilon > 0:
        raise CurveError(f"epsilon must be positive, got {epsilon!r}")
    k = kernel.cross(curve.times, curve.times)
    coeffs = sla.cho_solve(_ridge_factor(k, epsilon), curve.values)
    return RecoveredCurve(curve.times, coeffs, kernel, float(epsilon))


def recover_all(curves: Sequence[ObservedCurve], kernel: TimeKernel, epsilon: float) -> list[RecoveredCurve]:
    """Recover many curves, reusing factorizations for identical time sets."""
    if not epsilon > 0:
        raise CurveError(f"epsilon must be positive, got {epsilon!r}")
    cache = {}
    out = []
    for c in curves:
        key = c.times.tobytes()
        if key not in cache:
            cache[key] = _ridge_factor(kernel.cross(c.times, c.times), epsilon)
        out.append(RecoveredCurve(c.times, sla.cho_solve(cache[key], c.values), kernel, float(epsilon)))
    return out


def evaluate(rc: RecoveredCurve, t):
    """Value of the recovered curve at ``t`` (scalar or array)."""
    t_arr = np.asarray(t, dtype=float)
    vals = rc.kernel.cross(t_arr.ravel(), rc.times) @ rc.coeffs
    if t_arr.ndim == 0:
        return float(vals[0])
    return vals.reshape(t_arr.shape)


def _check_same_kernel(curves: Sequence[RecoveredCurve]) -> TimeKernel:
    kernel = curves[0].kernel
    for c in curves[1:]:
        if c.kernel != kernel:
            raise CurveError(f"curves use different kernels: {kernel} vs {c.kernel}")
    return kernel


def hx_inner(a: RecoveredCurve, b: RecoveredCurve) -> float:
    """Inner product of two recovered curves in the kernel's RKHS."""
    _check_same_kernel([a, b])
    return float(a.coeffs @ a.kernel.cross(a.times, b.times) @ b.coeffs)


def _coefficient_matrix(curves: Sequence[RecoveredCurve]):
    """Scatter each curve's coefficients onto the union of all anchor times."""
    union = np.unique(np.concatenate([c.times for c in curves]))
    a = np.zeros((len(curves), union.size))
    for i, c in enumerate(curves):
        a[i, np.searchsorted(union, c.times)] = c.coeffs
    return union, a


def hx_cross(a: Sequence[RecoveredCurve], b: Sequence[RecoveredCurve]) -> np.ndarray:
    """Matrix of inner products ``<a_i, b_j>``."""
    kernel = _check_same_kernel(list(a) + list(b))
    ua, ca = _coefficient_matrix(a)
    ub, cb = _coefficient_matrix(b)
    return ca @ kernel.cross(ua, ub) @ cb.T


def hx_self(curves: Sequence[RecoveredCurve]) -> np.ndarray:
    """Squared norms ``<c, c>`` of each curve."""
    return np.array([c.coeffs @ c.kernel.cross(c.times, c.times) @ c.coeffs for c in curves])


def hx_gram(curves: Sequence[RecoveredCurve]) -> np.ndarray:
    """Symmetric matrix of pairwise inner products."""
    kernel = _check_same_kernel(curves)
    u, c = _coefficient_matrix(curves)
    g = c @ kernel.cross(u, u) @ c.T
    return 0.5 * (g + g.T)


def evaluate_all(curves: Sequence[RecoveredCurve], grid) -> np.ndarray:
    """Matrix whose row i holds curve i evaluated on ``grid``."""
    kernel = _check_same_kernel(curves)
    u, c = _coefficient_matrix(curves)
    return c @ kernel.cross(u, np.asarray(grid, dtype=float))


def smoothing_gcv_score(curves: Sequence[ObservedCurve], kernel: TimeKernel, epsilon: float) -> float:
    """Summed per-curve GCV score of the ridge smoother ``S = K (K + eps I)^-1``.

    Returns ``inf`` when some curve has ``trace(S)/m >= 1``.
    """
    cache = {}
    total = 0.0
    for c in curves:
        key = c.times.tobytes()
        if key not in cache:
            k = kernel.cross(c.times, c.times)
            smoother = sla.cho_solve(_ridge_factor(k, epsilon), k).T
            cache[key] = smoother
        s = cache[key]
        m = c.m
        resid = c.values - s @ c.values
        ratio = 1.0 - np.trace(s) / m
        if not ratio > 0:
            return float("inf")
        total += (resid @ resid / m) / ratio**2
    return float(total)


def gcv_smoothing(
    curves: Sequence[ObservedCurve],
    family: str = "grb",
    eps_grid: Sequence[float] = DEFAULT_EPS_GRID,
    gamma_grid: Sequence[float] = DEFAULT_GAMMA_GRID,
) -> SmoothingChoice:
    """Pick ``(epsilon, gamma)`` on a grid by minimizing the summed GCV score.

    Ties go to the smaller epsilon, then the smaller gamma. For the
    Brownian kernel ``gamma_grid`` is ignored.
    """
    if len(eps_grid) == 0 or len(gamma_grid) == 0:
        raise CurveError("tuning grids must be nonempty")
    if any(not e > 0 for e in eps_grid) or any(not g > 0 for g in gamma_grid):
        raise CurveError("tuning grid values must be positive")
    kernels = [TimeKernel.bmc()] if family == "bmc" else [TimeKernel.grb(g) for g in sorted(set(gamma_grid))]
    scores = {}
    for eps in sorted(set(eps_grid)):
        for k in kernels:
            scores[(float(eps), k.gamma)] = smoothing_gcv_score(curves, k, eps)
    # dict order is (eps, gamma) ascending, so a strict < keeps the tie-break rule
    best = None
    for key, s in scores.items():
        if best is None or s < scores[best]:
            best = key
    eps, gamma = best
    kernel = TimeKernel.bmc() if family == "bmc" else TimeKernel.grb(gamma)
    return SmoothingChoice(kernel, eps, scores[best], scores)
