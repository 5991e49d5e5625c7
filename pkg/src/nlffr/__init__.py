"""Nonlinear function-on-function regression via nested reproducing-kernel Hilbert spaces."""

from .funcdata import ObservedCurve, RecoveredCurve, evaluate, gcv_smoothing, hx_inner, recover
from .inference import (
    BandResult,
    EigenSystem,
    eigen_system,
    pointwise_ci,
    pointwise_sigma,
    residual_model,
    s_n_hat,
    simulate_c_alpha,
    simultaneous_band,
)
from .kernels import SecondLayerKernel, TimeKernel, time_gram
from .regression import FitConfig, FittedModel, fit, gcv_regression, ise, predict, predict_many

__all__ = [
    "BandResult",
    "EigenSystem",
    "FitConfig",
    "FittedModel",
    "ObservedCurve",
    "RecoveredCurve",
    "SecondLayerKernel",
    "TimeKernel",
    "eigen_system",
    "evaluate",
    "fit",
    "gcv_regression",
    "gcv_smoothing",
    "hx_inner",
    "ise",
    "pointwise_ci",
    "pointwise_sigma",
    "predict",
    "predict_many",
    "recover",
    "residual_model",
    "s_n_hat",
    "simulate_c_alpha",
    "simultaneous_band",
    "time_gram",
]
