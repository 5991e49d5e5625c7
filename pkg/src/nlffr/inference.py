"""Pointwise confidence intervals and simultaneous confidence bands for predicted curves.

Eigenpairs of the estimated covariance operator come from ``G_X / n``; an
eigenvector ``a_j`` rescaled so that ``a_j' G_X a_j = 1`` gives the
coordinates of a unit-norm eigenfunction in the centered kernel sections.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .funcdata import ObservedCurve
from .regression import (
    FittedModel,
    d_vectors,
    predict_many,
    recover_covariates,
    training_responses,
    weights_from_d,
)

DEFAULT_EIG_TOL = 1e-10
# K_X entries lie in (0, 1], so eigenvalues of G_X / n below this are rounding noise
DEGENERATE_EIG = 1e-12
DEFAULT_N_PATHS = 10_000
PATH_CHUNK = 4096


class DegenerateCovariatesError(ValueError):
    """All eigenvalues of the centered Gram are zero: covariates are constant."""


@dataclass(frozen=True)
class EigenSystem:
    lambdas: np.ndarray  # retained eigenvalues, nonincreasing
    coord_vectors: np.ndarray  # column j is a_j
    all_lambdas: np.ndarray

    @property
    def n_components(self) -> int:
        return self.lambdas.size


@dataclass(frozen=True)
class ResidualModel:
    grid: np.ndarray
    residuals: np.ndarray  # n x len(grid), U_i(t)
    u_coeff_weights: np.ndarray  # row i: weights on training Y giving U_i
    u2_of_t: np.ndarray
    sigma_uu_grid: np.ndarray


@dataclass(frozen=True)
class BandResult:
    grid: np.ndarray
    center: np.ndarray
    pointwise_halfwidth: np.ndarray
    band_halfwidth: float
    alpha: float

    @property
    def pointwise(self) -> tuple[np.ndarray, np.ndarray]:
        return self.center - self.pointwise_halfwidth, self.center + self.pointwise_halfwidth

    @property
    def band(self) -> tuple[np.ndarray, np.ndarray]:
        return self.center - self.band_halfwidth, self.center + self.band_halfwidth


def eigen_system(model: FittedModel, tol: float = DEFAULT_EIG_TOL) -> EigenSystem:
    n = model.n
    vals, vecs = np.linalg.eigh(model.gx / n)
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    if not vals[0] > DEGENERATE_EIG:
        raise DegenerateCovariatesError("centered Gram has no positive eigenvalue")
    keep = vals > tol * vals[0]
    lam = vals[keep]
    # v' G v = n lambda for unit v
    a = vecs[:, keep] / np.sqrt(n * lam)
    return EigenSystem(lam, a, np.clip(vals, 0.0, None))


def phi_at(es: EigenSystem, j: int, d_x0: np.ndarray) -> float:
    """Estimated j-th eigenfunction (0-based) at a covariate with d-vector ``d_x0``."""
    if not 0 <= j < es.n_components:
        raise IndexError(f"component {j} out of range (J = {es.n_components})")
    return float(es.coord_vectors[:, j] @ d_x0)


def residual_model(model: FittedModel, grid) -> ResidualModel:
    """Training residuals U_i = Y_i - Y_hat(X_i) on ``grid`` and their second moments."""
    grid = np.asarray(grid, dtype=float)
    n = model.n
    yg = training_responses(model, grid)
    d = d_vectors(model, model.x_curves)
    _, w = weights_from_d(model, d)
    # U_i = Y_i - sum_k (w_ki + 1/n) Y_k
    coeff = np.eye(n) - (w.T + 1.0 / n)
    u = coeff @ yg
    sigma = u.T @ u / n
    sigma = 0.5 * (sigma + sigma.T)
    return ResidualModel(grid, u, coeff, np.diag(sigma).copy(), sigma)


def pointwise_sigma_from_d(model: FittedModel, es: EigenSystem, resid: ResidualModel, d_x0: np.ndarray) -> np.ndarray:
    """sigma_n3 on ``resid.grid`` for each column of ``d_x0`` (shape len(grid) x n0)."""
    d_x0 = np.asarray(d_x0, dtype=float)
    single = d_x0.ndim == 1
    d = d_x0[:, None] if single else d_x0
    phi = es.coord_vectors.T @ d  # J x n0
    lam = es.lambdas[:, None]
    series = np.sum(lam / (lam + model.epsilon_n) ** 2 * phi**2, axis=0)
    out = np.sqrt(np.outer(resid.u2_of_t, series) / model.n)
    return out[:, 0] if single else out


def pointwise_sigma(model: FittedModel, es: EigenSystem, resid: ResidualModel, x0: ObservedCurve, t=None):
    """sigma_n3(x0, t); ``t=None`` returns the whole residual grid."""
    d = d_vectors(model, recover_covariates(model, [x0]))[:, 0]
    sig = pointwise_sigma_from_d(model, es, resid, d)
    if t is None:
        return sig
    return np.interp(t, resid.grid, sig)


def _z(alpha: float) -> float:
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must be in (0, 1], got {alpha!r}")
    return float(stats.norm.ppf(1.0 - alpha / 2.0))


def pointwise_ci(model: FittedModel, es: EigenSystem, resid: ResidualModel, x0: ObservedCurve, alpha: float = 0.05):
    """(lower, upper) arrays on ``resid.grid``."""
    z = _z(alpha)
    center = predict_many(model, [x0], resid.grid)[0]
    half = z * pointwise_sigma(model, es, resid, x0)
    return center - half, center + half


def s_n_hat(model: FittedModel, x0: Optional[ObservedCurve] = None, w: Optional[np.ndarray] = None) -> float:
    """Scale of the band: Euclidean norm of the prediction weights."""
    if w is None:
        d = d_vectors(model, recover_covariates(model, [x0]))
        _, w = weights_from_d(model, d)
    return float(np.linalg.norm(w))


def gaussian_sqrt(cov: np.ndarray) -> np.ndarray:
    """Symmetric square root with negative eigenvalues clipped at zero."""
    vals, vecs = np.linalg.eigh(0.5 * (cov + cov.T))
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def sup_norm_samples(cov: np.ndarray, n_paths: int, seed=0) -> np.ndarray:
    """max_t |Z(t)| for ``n_paths`` centered Gaussian vectors with covariance ``cov``.

    Paths are drawn in fixed-size chunks, each from its own child seed, so the
    result does not depend on how chunks are scheduled.
    """
    root = gaussian_sqrt(cov)
    g = root.shape[0]
    n_chunks = -(-n_paths // PATH_CHUNK)
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = ss.spawn(n_chunks)
    out = np.empty(n_paths)
    for c, ss in enumerate(children):
        lo = c * PATH_CHUNK
        hi = min(lo + PATH_CHUNK, n_paths)
        z = np.random.default_rng(ss).standard_normal((hi - lo, g)) @ root
        out[lo:hi] = np.abs(z).max(axis=1)
    return out


def simulate_c_alpha(
    resid: ResidualModel | np.ndarray, alpha: float = 0.05, n_paths: int = DEFAULT_N_PATHS, seed=0, grid=None
) -> float:
    """Upper-alpha empirical quantile of sup_t |Z(t)| for Z ~ GP(0, Sigma_UU)."""
    cov = resid.sigma_uu_grid if isinstance(resid, ResidualModel) else np.asarray(resid, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ValueError("covariance must be square")
    if grid is not None and len(grid) != cov.shape[0]:
        raise ValueError("covariance does not match the grid")
    if n_paths < 100:
        raise ValueError("need at least 100 paths")
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must be in (0, 1), got {alpha!r}")
    return float(np.quantile(sup_norm_samples(cov, n_paths, seed), 1.0 - alpha))


def simultaneous_band(
    model: FittedModel,
    resid: ResidualModel,
    x0: ObservedCurve,
    alpha: float = 0.05,
    n_paths: int = DEFAULT_N_PATHS,
    seed=0,
    es: Optional[EigenSystem] = None,
    c_alpha: Optional[float] = None,
) -> BandResult:
    grid = resid.grid
    d = d_vectors(model, recover_covariates(model, [x0]))
    _, w = weights_from_d(model, d)
    yg = training_responses(model, grid)
    center = (w.T @ yg + yg.mean(axis=0))[0]
    if c_alpha is None:
        c_alpha = simulate_c_alpha(resid, alpha, n_paths, seed)
    half = s_n_hat(model, w=w[:, 0]) * c_alpha
    es = es if es is not None else eigen_system(model)
    pw = _z(alpha) * pointwise_sigma_from_d(model, es, resid, d[:, 0])
    return BandResult(grid, center, pw, float(half), float(alpha))


def bands_many(
    model: FittedModel,
    x0: Sequence[ObservedCurve],
    grid,
    alpha: float = 0.05,
    n_paths: int = DEFAULT_N_PATHS,
    seed=0,
) -> list[BandResult]:
    """Bands for many covariates sharing one residual model and one C(alpha)."""
    resid = residual_model(model, grid)
    es = eigen_system(model)
    c_alpha = simulate_c_alpha(resid, alpha, n_paths, seed)
    d = d_vectors(model, recover_covariates(model, x0))
    _, w = weights_from_d(model, d)
    yg = training_responses(model, resid.grid)
    centers = w.T @ yg + yg.mean(axis=0)
    pw = _z(alpha) * pointwise_sigma_from_d(model, es, resid, d)
    s = np.linalg.norm(w, axis=0)
    return [
        BandResult(resid.grid, centers[k], pw[:, k], float(s[k] * c_alpha), float(alpha)) for k in range(len(x0))
    ]
