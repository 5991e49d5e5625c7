"""Synthetic covariate/response generators and the replicated experiment harness."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .funcdata import ObservedCurve
from .kernels import TimeKernel
from .regression import FitConfig, fit, ise, predict_many, training_responses

log = logging.getLogger(__name__)

MASTER_GRID = np.arange(1, 51) / 50.0
GRB_GAMMA = 7.0
GRB_B_ANCHORS = {1: 0.6, 2: 0.9, 3: 0.1}
N_BMC_TERMS = 100
SPARSE_M = 10
MAX_FAILURE_RATE = 0.05


def nu(j: int, t):
    """Brownian-motion eigenfunction sqrt(2) sin((j - 1/2) pi t)."""
    return np.sqrt(2.0) * np.sin((j - 0.5) * np.pi * np.asarray(t, dtype=float))


def rho(t):
    return sum(nu(j, t) for j in range(1, 6))


@dataclass(frozen=True, eq=False)
class GRBCovariate:
    """X(t) = sum_k a_k exp(-7 (t - t_k)^2)."""

    a: np.ndarray
    anchors: np.ndarray

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return TimeKernel.grb(GRB_GAMMA)(t[..., None], self.anchors) @ self.a

    def pairing(self, j: int) -> float:
        """<X, b_j> with b_j = k(., t_j); the reproducing property gives X(t_j)."""
        return float(self(GRB_B_ANCHORS[j]))


@dataclass(frozen=True, eq=False)
class BMCCovariate:
    """Truncated Karhunen-Loeve path X(t) = sum_j sqrt(2) a_j sin((j-1/2) pi t) / ((j-1/2) pi)."""

    a: np.ndarray
    pairing_kind: str = "l2"

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        freqs = (np.arange(1, self.a.size + 1) - 0.5) * np.pi
        return (np.sqrt(2.0) * np.sin(t[..., None] * freqs)) @ (self.a / freqs)

    def pairing(self, j: int) -> float:
        """<X, b_j> with b_1 = nu_1, b_3 = nu_3 and b_2 = 0."""
        if j == 2:
            return 0.0
        freq = (j - 0.5) * np.pi
        if self.pairing_kind == "l2":
            # int_0^1 X(t) nu_j(t) dt; the nu_j are L2-orthonormal
            return float(self.a[j - 1] / freq)
        # Cameron-Martin inner product int X'(t) nu_j'(t) dt
        return float(self.a[j - 1] * freq)


def gen_x_grb(rng: np.random.Generator, anchor_rng: Optional[np.random.Generator] = None) -> GRBCovariate:
    anchor_rng = anchor_rng if anchor_rng is not None else rng
    a = rng.standard_normal(5)
    anchors = anchor_rng.uniform(0.0, 1.0, 5)
    return GRBCovariate(a, anchors)


def gen_x_bmc(rng: np.random.Generator, pairing_kind: str = "l2") -> BMCCovariate:
    return BMCCovariate(rng.standard_normal(N_BMC_TERMS), pairing_kind)


def conditional_mean(model_id: int, x_fn, grid) -> np.ndarray:
    """E[Y | X = x_fn] on ``grid``."""
    if model_id == 1:
        scale = 1.0 / (1.0 + np.exp(x_fn.pairing(1))) + x_fn.pairing(2) ** 2
    elif model_id == 2:
        scale = np.cos(x_fn.pairing(3))
    else:
        raise ValueError(f"unknown model id {model_id!r}")
    return scale * rho(grid)


def brownian_path(rng: np.random.Generator, grid) -> np.ndarray:
    """Standard Brownian motion at increasing ``grid`` points (W(0) = 0)."""
    grid = np.asarray(grid, dtype=float)
    steps = np.diff(np.concatenate([[0.0], grid]))
    return np.cumsum(rng.standard_normal(grid.size) * np.sqrt(steps))


def gen_response(model_id: int, x_fn, sigma: float, rng: np.random.Generator, grid=MASTER_GRID) -> np.ndarray:
    return conditional_mean(model_id, x_fn, grid) + sigma * brownian_path(rng, grid)


def apply_design(values, design: str, rng: np.random.Generator, subject_id=0, grid=MASTER_GRID) -> ObservedCurve:
    values = np.asarray(values, dtype=float)
    if design == "dense":
        return ObservedCurve(subject_id, grid, values)
    if design == "sparse":
        keep = np.sort(rng.choice(grid.size, SPARSE_M, replace=False))
        return ObservedCurve(subject_id, grid[keep], values[keep])
    raise ValueError(f"unknown design {design!r}")


class ScenarioFailure(RuntimeError):
    """Too many replications failed to fit."""


@dataclass
class ScenarioConfig:
    model: int = 2
    x_generator: str = "grb"
    fit_kernel: str = "grb"
    sigma: float = 0.1
    design: str = "dense"
    n_train: int = 100
    n_test: int = 500
    n_reps: int = 50
    seed: int = 0
    coverage: bool = False
    alpha: float = 0.05
    n_paths: int = 10_000
    bmc_pairing: str = "l2"

    def __post_init__(self):
        errors = []
        if self.model not in (1, 2):
            errors.append("model: must be 1 or 2")
        if self.x_generator not in ("grb", "bmc"):
            errors.append("x_generator: must be 'grb' or 'bmc'")
        if self.fit_kernel not in ("grb", "bmc"):
            errors.append("fit_kernel: must be 'grb' or 'bmc'")
        if not (isinstance(self.sigma, (int, float)) and self.sigma > 0):
            errors.append("sigma: must be positive")
        if self.design not in ("dense", "sparse"):
            errors.append("design: must be 'dense' or 'sparse'")
        for name in ("n_train", "n_test", "n_reps"):
            v = getattr(self, name)
            if not (isinstance(v, int) and v > 0):
                errors.append(f"{name}: must be a positive integer")
        if self.n_train < 2:
            errors.append("n_train: need at least 2 training subjects")
        if not (isinstance(self.seed, int) and self.seed >= 0):
            errors.append("seed: must be a non-negative integer")
        if not 0 < self.alpha < 1:
            errors.append("alpha: must be in (0, 1)")
        if not (isinstance(self.n_paths, int) and self.n_paths >= 100):
            errors.append("n_paths: must be an integer >= 100")
        if self.bmc_pairing not in ("l2", "cm"):
            errors.append("bmc_pairing: must be 'l2' or 'cm'")
        if errors:
            raise ValueError("invalid scenario config: " + "; ".join(errors))

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError("invalid scenario config: unknown fields " + ", ".join(sorted(unknown)))
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ReplicationResult:
    rep: int
    ise_median: float = float("nan")
    failed: bool = False
    error: str = ""
    band_coverage: float = float("nan")
    pointwise_coverage: float = float("nan")
    epsilon_x: float = float("nan")
    gamma_x: float = float("nan")


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    replications: list[ReplicationResult] = field(default_factory=list)

    @property
    def ise_medians(self) -> np.ndarray:
        return np.array([r.ise_median for r in self.replications if not r.failed])

    @property
    def n_failed(self) -> int:
        return sum(r.failed for r in self.replications)

    @property
    def median(self) -> float:
        return float(np.median(np.sort(self.ise_medians)))

    @property
    def iqr(self) -> float:
        q1, q3 = np.percentile(np.sort(self.ise_medians), [25, 75])
        return float(q3 - q1)

    def _mean_of(self, attr: str) -> float:
        vals = np.sort([getattr(r, attr) for r in self.replications if not r.failed])
        return float(np.mean(vals)) if self.config.coverage and vals.size else float("nan")

    @property
    def band_coverage(self) -> float:
        return self._mean_of("band_coverage")

    @property
    def pointwise_coverage(self) -> float:
        return self._mean_of("pointwise_coverage")


def replication_streams(seed: int, rep: int) -> dict[str, np.random.Generator]:
    """Independent named generators for one replication."""
    names = ("x_coeffs", "anchors", "noise", "masks", "paths")
    children = np.random.SeedSequence(seed, spawn_key=(rep,)).spawn(len(names))
    return {name: np.random.default_rng(ss) for name, ss in zip(names, children)}


def generate_subjects(cfg: ScenarioConfig, n: int, streams: dict, grid=MASTER_GRID):
    """Covariate functions, observed X/Y curves and full noisy responses for ``n`` subjects."""
    x_fns, x_obs, y_obs, y_full = [], [], [], []
    for i in range(n):
        if cfg.x_generator == "grb":
            x = gen_x_grb(streams["x_coeffs"], streams["anchors"])
        else:
            x = gen_x_bmc(streams["x_coeffs"], cfg.bmc_pairing)
        y = gen_response(cfg.model, x, cfg.sigma, streams["noise"], grid)
        xv = x(grid)
        if cfg.design == "dense":
            keep = np.arange(grid.size)
        else:
            # the same random subset of the master grid for X_i and Y_i
            keep = np.sort(streams["masks"].choice(grid.size, SPARSE_M, replace=False))
        x_fns.append(x)
        x_obs.append(ObservedCurve(i, grid[keep], xv[keep]))
        y_obs.append(ObservedCurve(i, grid[keep], y[keep]))
        y_full.append(y)
    return x_fns, x_obs, y_obs, np.array(y_full)


def run_replication(cfg: ScenarioConfig, rep: int) -> ReplicationResult:
    from .inference import bands_many

    streams = replication_streams(cfg.seed, rep)
    x_fns, x_obs, y_obs, y_full = generate_subjects(cfg, cfg.n_train + cfg.n_test, streams)
    tr = slice(0, cfg.n_train)
    te = slice(cfg.n_train, None)
    try:
        model = fit(x_obs[tr], y_obs[tr], FitConfig(x_family=cfg.fit_kernel, y_family=cfg.fit_kernel))
        pred = predict_many(model, x_obs[te], MASTER_GRID)
    except (np.linalg.LinAlgError, ArithmeticError, ValueError, RuntimeError) as exc:
        log.warning("replication %d failed: %s", rep, exc)
        return ReplicationResult(rep, failed=True, error=str(exc))
    errs = np.array([ise(p, y, MASTER_GRID) for p, y in zip(pred, y_full[te])])
    out = ReplicationResult(rep, float(np.median(errs)), epsilon_x=model.epsilon_x, gamma_x=model.gamma_x)
    if cfg.coverage:
        bands = bands_many(model, x_obs[te], MASTER_GRID, cfg.alpha, cfg.n_paths, streams["paths"].integers(2**63))
        truth = [conditional_mean(cfg.model, x, MASTER_GRID) for x in x_fns[te]]
        out.band_coverage = float(np.mean([np.all(np.abs(b.center - m) <= b.band_halfwidth) for b, m in zip(bands, truth)]))
        out.pointwise_coverage = float(
            np.mean([np.mean(np.abs(b.center - m) <= b.pointwise_halfwidth) for b, m in zip(bands, truth)])
        )
    return out


def run_scenario(cfg: ScenarioConfig, threads: int = 1) -> ScenarioResult:
    """Run all replications; output is independent of ``threads``."""
    if threads <= 1:
        reps = [run_replication(cfg, r) for r in range(cfg.n_reps)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            reps = list(pool.map(lambda r: run_replication(cfg, r), range(cfg.n_reps)))
    reps.sort(key=lambda r: r.rep)
    result = ScenarioResult(cfg, reps)
    if result.n_failed > MAX_FAILURE_RATE * cfg.n_reps:
        raise ScenarioFailure(f"{result.n_failed} of {cfg.n_reps} replications failed", result)
    return result
