"""Time-domain kernels for the first-layer spaces and the Gaussian kernel on top of them."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

# Tolerance for negative squared distances produced by cancellation in aa - 2ab + bb.
NEG_DIST_TOL = 1e-10


def _dist_tol(self_sum):
    # cancellation error grows with the squared norms, so the tolerance scales once they exceed 1
    return NEG_DIST_TOL * np.maximum(1.0, np.abs(self_sum))


class KernelError(ValueError):
    """Raised for invalid kernel parameters or inconsistent inner products."""


@dataclass(frozen=True)
class TimeKernel:
    """Kernel on [0, 1] used to build the curve spaces.

    ``family="grb"`` is the Gaussian radial basis ``exp(-gamma (s - t)^2)``;
    ``family="bmc"`` is the Brownian motion covariance ``min(s, t)`` and
    ignores ``gamma``.
    """

    family: Literal["grb", "bmc"] = "grb"
    gamma: float = 7.0

    def __post_init__(self):
        if self.family not in ("grb", "bmc"):
            raise KernelError(f"unknown time kernel family {self.family!r}")
        if self.family == "grb" and not (np.isfinite(self.gamma) and self.gamma > 0):
            raise KernelError(f"GRB gamma must be positive, got {self.gamma!r}")
        if self.family == "bmc":
            # gamma is meaningless here; normalize so equal kernels compare equal
            object.__setattr__(self, "gamma", 0.0)

    @classmethod
    def grb(cls, gamma: float) -> "TimeKernel":
        return cls("grb", float(gamma))

    @classmethod
    def bmc(cls) -> "TimeKernel":
        return cls("bmc", 0.0)

    def __call__(self, s, t):
        """Evaluate the kernel elementwise with numpy broadcasting."""
        s = np.asarray(s, dtype=float)
        t = np.asarray(t, dtype=float)
        if self.family == "grb":
            return np.exp(-self.gamma * (s - t) ** 2)
        return np.minimum(s, t)

    def cross(self, s: Sequence[float], t: Sequence[float]) -> np.ndarray:
        """Matrix with entry (k, l) = k(s_k, t_l)."""
        s = np.asarray(s, dtype=float).reshape(-1, 1)
        t = np.asarray(t, dtype=float).reshape(1, -1)
        return self(s, t)

    def to_dict(self) -> dict:
        if self.family == "bmc":
            return {"family": "bmc"}
        return {"family": "grb", "gamma": self.gamma}

    @classmethod
    def from_dict(cls, d: dict) -> "TimeKernel":
        return cls(d["family"], float(d.get("gamma", 0.0)))


def time_kernel_eval(kernel: TimeKernel, s: float, t: float) -> float:
    return float(kernel(s, t))


def time_gram(kernel: TimeKernel, points: Sequence[float]) -> np.ndarray:
    """Gram matrix of ``kernel`` on ``points``; symmetric PSD."""
    points = np.asarray(points, dtype=float).ravel()
    if points.size == 0:
        raise KernelError("time_gram needs at least one point")
    return kernel.cross(points, points)


@dataclass(frozen=True)
class SecondLayerKernel:
    """Gaussian kernel on the curve space, ``exp(-gamma_x ||f - g||^2)``.

    Only the three inner products <f, f>, <f, g>, <g, g> are needed.
    """

    gamma_x: float

    def __post_init__(self):
        if not (np.isfinite(self.gamma_x) and self.gamma_x > 0):
            raise KernelError(f"gamma_x must be positive, got {self.gamma_x!r}")

    def sq_dist(self, aa, ab, bb) -> np.ndarray:
        # summing the self terms first keeps the result exactly symmetric in (aa, bb)
        self_sum = np.asarray(aa, dtype=float) + np.asarray(bb, dtype=float)
        d = self_sum - 2.0 * np.asarray(ab, dtype=float)
        if np.any(d < -_dist_tol(self_sum)):
            raise KernelError(
                f"inconsistent inner products: squared distance {float(np.min(d)):.3e} < 0"
            )
        return np.maximum(d, 0.0)

    def __call__(self, aa, ab, bb):
        return np.exp(-self.gamma_x * self.sq_dist(aa, ab, bb))

    def gram(self, inner: np.ndarray) -> np.ndarray:
        """Gram matrix from a square matrix of pairwise curve inner products."""
        diag = np.diag(inner)
        k = self(diag[:, None], inner, diag[None, :])
        return 0.5 * (k + k.T)


def second_layer_eval(kernel: SecondLayerKernel, aa: float, ab: float, bb: float) -> float:
    return float(kernel(aa, ab, bb))


def squared_distances(inner: np.ndarray) -> np.ndarray:
    """Pairwise squared curve-space distances from an inner-product matrix."""
    diag = np.diag(inner)
    self_sum = diag[:, None] + diag[None, :]
    d = self_sum - 2.0 * inner
    if np.any(d < -_dist_tol(self_sum)):
        raise KernelError(f"inconsistent inner products: squared distance {d.min():.3e} < 0")
    d = np.maximum(d, 0.0)
    return 0.5 * (d + d.T)
