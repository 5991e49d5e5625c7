"""Nonlinear function-on-function regression through a Gaussian kernel on curve space.

Training curves X_1..X_n, Y_1..Y_n are recovered in their RKHSs, the
second-layer Gram ``K_X[i, j] = exp(-gamma_x ||X_i - X_j||^2)`` is centered
to ``G_X = Q K_X Q`` and a new covariate ``x`` is mapped to

    y_hat(x) = sum_i w_i Y_i + mean(Y),   w = G_X (G_X + eps_x I)^-1 c_x,
    c_x = Q (K_X + eps_x I)^-1 d_x,       d_x[i] = k(X_i, x) - mean_l k(X_i, X_l).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as sla

from .funcdata import (
    DEFAULT_EPS_GRID,
    DEFAULT_GAMMA_GRID,
    CurveError,
    NumericalError,
    ObservedCurve,
    RecoveredCurve,
    SmoothingChoice,
    evaluate_all,
    gcv_smoothing,
    hx_cross,
    hx_gram,
    hx_self,
    recover_all,
    smoothing_gcv_score,
)
from .kernels import SecondLayerKernel, TimeKernel, squared_distances

DEFAULT_EPS_X_GRID = (1e-3, 1e-2, 1e-1, 1.0, 10.0)
# multiples of 1 / median pairwise squared distance between training covariates
DEFAULT_GAMMA_X_RELATIVE = (0.1, 0.25, 0.5, 1.0, 2.0, 4.0)


@dataclass
class FitConfig:
    """Kernel families and tuning for a fit.

    A fixed value (``x_eps``, ``eps_x``, ...) bypasses the corresponding GCV
    search. ``gamma_x_grid=None`` means a grid relative to the median squared
    distance between training covariates.
    """

    x_family: str = "grb"
    y_family: str = "grb"
    x_eps: Optional[float] = None
    x_gamma: Optional[float] = None
    y_eps: Optional[float] = None
    y_gamma: Optional[float] = None
    eps_x: Optional[float] = None
    gamma_x: Optional[float] = None
    x_eps_grid: Sequence[float] = DEFAULT_EPS_GRID
    x_gamma_grid: Sequence[float] = DEFAULT_GAMMA_GRID
    y_eps_grid: Sequence[float] = DEFAULT_EPS_GRID
    y_gamma_grid: Sequence[float] = DEFAULT_GAMMA_GRID
    eps_x_grid: Sequence[float] = DEFAULT_EPS_X_GRID
    gamma_x_grid: Optional[Sequence[float]] = None

    def __post_init__(self):
        for name in ("x_family", "y_family"):
            if getattr(self, name) not in ("grb", "bmc"):
                raise ValueError(f"{name} must be 'grb' or 'bmc'")
        for name in ("x_eps", "x_gamma", "y_eps", "y_gamma", "eps_x", "gamma_x"):
            v = getattr(self, name)
            if v is not None and not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive")
        for name in ("x_eps_grid", "x_gamma_grid", "y_eps_grid", "y_gamma_grid", "eps_x_grid", "gamma_x_grid"):
            g = getattr(self, name)
            if g is None:
                continue
            if len(g) == 0 or any(not (np.isfinite(v) and v > 0) for v in g):
                raise ValueError(f"{name} must be a nonempty list of positive numbers")


@dataclass(frozen=True)
class RegressionChoice:
    epsilon_x: float
    gamma_x: float
    score: float
    scores: dict = field(default_factory=dict, compare=False, repr=False)


@dataclass(frozen=True)
class PredictionWeights:
    c_x: np.ndarray
    d_x: np.ndarray
    w: np.ndarray


@dataclass(eq=False)
class FittedModel:
    subject_ids: list
    x_curves: list[RecoveredCurve]
    y_curves: list[RecoveredCurve]
    x_smoothing: SmoothingChoice
    y_smoothing: SmoothingChoice
    hx_gram: np.ndarray
    ky_inner: np.ndarray
    epsilon_x: float
    gamma_x: float
    report: dict = field(default_factory=dict)
    regression_scores: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        n = len(self.x_curves)
        self.kernel = SecondLayerKernel(self.gamma_x)
        self.kx = self.kernel.gram(self.hx_gram)
        q = centering(n)
        gx = q @ self.kx @ q
        self.gx = 0.5 * (gx + gx.T)
        eye = np.eye(n)
        self.gx_factor = sla.cho_factor(self.gx + self.epsilon_x * eye, lower=True)
        self.kx_factor = sla.cho_factor(self.kx + self.epsilon_x * eye, lower=True)
        self.kx_rowmean = self.kx.mean(axis=1)
        self._hx_diag = np.diag(self.hx_gram).copy()

    @property
    def n(self) -> int:
        return len(self.x_curves)

    @property
    def epsilon_n(self) -> float:
        """Operator-level ridge; the coordinate matrix of the covariance is G_X / n."""
        return self.epsilon_x / self.n


def centering(n: int) -> np.ndarray:
    return np.eye(n) - np.full((n, n), 1.0 / n)


def pair_curves(x: Sequence[ObservedCurve], y: Sequence[ObservedCurve]):
    """Order ``y`` to match ``x`` by subject id; raise on any unpaired subject."""
    xs = {c.subject_id: c for c in x}
    ys = {c.subject_id: c for c in y}
    if len(xs) != len(x) or len(ys) != len(y):
        raise CurveError("duplicate subject ids")
    missing = sorted(map(str, set(xs) ^ set(ys)))
    if missing:
        raise CurveError(f"unpaired subjects: {', '.join(missing)}")
    ids = [c.subject_id for c in x]
    return ids, [xs[i] for i in ids], [ys[i] for i in ids]


def _smoothing(curves, family, eps, gamma, eps_grid, gamma_grid) -> tuple[SmoothingChoice, str]:
    if eps is not None and (gamma is not None or family == "bmc"):
        kernel = TimeKernel.bmc() if family == "bmc" else TimeKernel.grb(gamma)
        return SmoothingChoice(kernel, float(eps), smoothing_gcv_score(curves, kernel, eps)), "fixed"
    eps_grid = [eps] if eps is not None else eps_grid
    gamma_grid = [gamma] if gamma is not None else gamma_grid
    return gcv_smoothing(curves, family, eps_grid, gamma_grid), "gcv"


def regression_fitted_weights(gx: np.ndarray, epsilon_x: float) -> np.ndarray:
    """Hat matrix H with row i giving the fitted-value weights of Y_hat(X_i)."""
    n = gx.shape[0]
    factor = sla.cho_factor(gx + epsilon_x * np.eye(n), lower=True)
    # (G + eps I)^-1 G is the transpose of G (G + eps I)^-1
    b = sla.cho_solve(factor, gx)
    return centering(n) @ b.T + np.full((n, n), 1.0 / n)


def regression_gcv_score(hx: np.ndarray, ky_inner: np.ndarray, epsilon_x: float, gamma_x: float) -> float:
    n = hx.shape[0]
    kx = SecondLayerKernel(gamma_x).gram(hx)
    q = centering(n)
    gx = q @ kx @ q
    gx = 0.5 * (gx + gx.T)
    h = regression_fitted_weights(gx, epsilon_x)
    resid = np.eye(n) - h
    rss = np.einsum("ij,jk,ik->", resid, ky_inner, resid)
    # trace(Q G (G + eps I)^-1 + 11^T / n) = trace(H)
    ratio = 1.0 - np.trace(h) / n
    if not ratio > 0:
        return float("inf")
    return float(rss / n / ratio**2)


def default_gamma_x_grid(hx: np.ndarray) -> list[float]:
    d = squared_distances(hx)
    off = d[~np.eye(d.shape[0], dtype=bool)]
    off = off[off > 0]
    scale = float(np.median(off)) if off.size else 1.0
    return [c / scale for c in DEFAULT_GAMMA_X_RELATIVE]


def gcv_regression(
    hx: np.ndarray,
    ky_inner: np.ndarray,
    eps_grid: Sequence[float] = DEFAULT_EPS_X_GRID,
    gamma_grid: Optional[Sequence[float]] = None,
) -> RegressionChoice:
    """Grid search of ``(eps_x, gamma_x)`` minimizing the regression GCV score.

    ``hx`` holds pairwise covariate inner products and ``ky_inner`` pairwise
    response inner products. Ties go to the smaller eps_x, then the smaller
    gamma_x.
    """
    if gamma_grid is None:
        gamma_grid = default_gamma_x_grid(hx)
    if len(eps_grid) == 0 or len(gamma_grid) == 0:
        raise ValueError("tuning grids must be nonempty")
    scores = {}
    for eps in sorted(set(float(e) for e in eps_grid)):
        for gamma in sorted(set(float(g) for g in gamma_grid)):
            scores[(eps, gamma)] = regression_gcv_score(hx, ky_inner, eps, gamma)
    best = None
    for key, s in scores.items():
        if best is None or s < scores[best]:
            best = key
    return RegressionChoice(best[0], best[1], scores[best], scores)


def fit(x: Sequence[ObservedCurve], y: Sequence[ObservedCurve], config: Optional[FitConfig] = None) -> FittedModel:
    """Recover all trajectories, tune and assemble the regression."""
    config = config or FitConfig()
    ids, x, y = pair_curves(x, y)
    if len(ids) < 2:
        raise CurveError("need at least two paired subjects")
    xs, x_prov = _smoothing(x, config.x_family, config.x_eps, config.x_gamma, config.x_eps_grid, config.x_gamma_grid)
    ys, y_prov = _smoothing(y, config.y_family, config.y_eps, config.y_gamma, config.y_eps_grid, config.y_gamma_grid)
    x_rec = recover_all(x, xs.kernel, xs.epsilon)
    y_rec = recover_all(y, ys.kernel, ys.epsilon)
    hx = hx_gram(x_rec)
    ky = hx_gram(y_rec)

    if config.eps_x is not None and config.gamma_x is not None:
        choice = RegressionChoice(
            config.eps_x, config.gamma_x, regression_gcv_score(hx, ky, config.eps_x, config.gamma_x)
        )
        r_prov = "fixed"
    else:
        eps_grid = [config.eps_x] if config.eps_x is not None else config.eps_x_grid
        gamma_grid = [config.gamma_x] if config.gamma_x is not None else config.gamma_x_grid
        choice = gcv_regression(hx, ky, eps_grid, gamma_grid)
        r_prov = "gcv"

    report = {
        "n": len(ids),
        "x_smoothing": {"provenance": x_prov, "kernel": xs.kernel.to_dict(), "epsilon": xs.epsilon, "gcv_score": xs.gcv_score},
        "y_smoothing": {"provenance": y_prov, "kernel": ys.kernel.to_dict(), "epsilon": ys.epsilon, "gcv_score": ys.gcv_score},
        "regression": {"provenance": r_prov, "epsilon_x": choice.epsilon_x, "gamma_x": choice.gamma_x, "gcv_score": choice.score},
    }
    try:
        return FittedModel(ids, x_rec, y_rec, xs, ys, hx, ky, choice.epsilon_x, choice.gamma_x, report, choice.scores)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("second-layer ridge system is not positive definite") from exc


def recover_covariates(model: FittedModel, x0: Sequence[ObservedCurve]) -> list[RecoveredCurve]:
    """Recover new covariates with the training covariate smoothing."""
    return recover_all(x0, model.x_smoothing.kernel, model.x_smoothing.epsilon)


def d_vectors(model: FittedModel, x0: Sequence[RecoveredCurve]) -> np.ndarray:
    """Columns are ``d_x`` for each recovered new covariate."""
    cross = hx_cross(model.x_curves, x0)  # n x n0
    self_inner = hx_self(x0)
    kvec = model.kernel(model._hx_diag[:, None], cross, self_inner[None, :])
    return kvec - model.kx_rowmean[:, None]


def weights_from_d(model: FittedModel, d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(c, w)`` for d-vectors stacked as columns (or a single vector)."""
    c = sla.cho_solve(model.kx_factor, d)
    c = c - c.mean(axis=0)
    w = model.gx @ sla.cho_solve(model.gx_factor, c)
    return c, w


def prediction_weights(model: FittedModel, x0: ObservedCurve) -> PredictionWeights:
    rc = recover_covariates(model, [x0])
    d = d_vectors(model, rc)[:, 0]
    c, w = weights_from_d(model, d)
    return PredictionWeights(c, d, w)


def _check_grid(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float).ravel()
    if grid.size == 0:
        raise ValueError("prediction grid is empty")
    if not np.all(np.isfinite(grid)):
        raise ValueError("prediction grid has non-finite values")
    return grid


def training_responses(model: FittedModel, grid) -> np.ndarray:
    """Recovered training responses on ``grid`` (n x len(grid))."""
    return evaluate_all(model.y_curves, _check_grid(grid))


def predict_many(model: FittedModel, x0: Sequence[ObservedCurve], grid) -> np.ndarray:
    """Predicted response curves, one row per new covariate."""
    grid = _check_grid(grid)
    d = d_vectors(model, recover_covariates(model, x0))
    _, w = weights_from_d(model, d)
    yg = training_responses(model, grid)
    return w.T @ yg + yg.mean(axis=0)


def predict(model: FittedModel, x0: ObservedCurve, grid) -> np.ndarray:
    return predict_many(model, [x0], grid)[0]


def ise(predicted, truth, grid) -> float:
    """Trapezoidal integral of the squared difference over ``grid``."""
    predicted = np.asarray(predicted, dtype=float)
    truth = np.asarray(truth, dtype=float)
    grid = np.asarray(grid, dtype=float)
    if not (predicted.shape == truth.shape == grid.shape) or grid.ndim != 1:
        raise ValueError("predicted, truth and grid must be 1-d and equally long")
    if grid.size < 2:
        raise ValueError("need at least two grid points")
    return float(np.trapezoid((predicted - truth) ** 2, grid))
