"""Operating characteristics and optimal design of the headstarted Shiryaev-Roberts chart."""

from .metrics import ChartDesign, NumericsConfig, PerformanceReport, evaluate, sadd_of
from .model import ModelParams, Regime, kernel_cdf, kernel_density, score, xi
from .optimizer import DesignResult, SearchConfig, calibrate_threshold, optimize_design

__all__ = [
    "ChartDesign", "DesignResult", "ModelParams", "NumericsConfig", "PerformanceReport", "Regime",
    "SearchConfig", "calibrate_threshold", "evaluate", "kernel_cdf", "kernel_density",
    "optimize_design", "sadd_of", "score", "xi",
]
