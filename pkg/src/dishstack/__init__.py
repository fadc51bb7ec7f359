"""Stacked-dish detection, color classification and billing."""

from .config import AppConfig, CnnConfig, PipelineConfig, load_config
from .ellipses import Ellipse, FitResult, bottom_y, ellipse_point, fit_ellipse
from .pipeline import (Bill, BillLine, DetectionReport, NoDishTowerError,
                       detect_ellipses, evaluate_classifier, match_detections,
                       run_pipeline)
from .raster import Raster
from .stack_recon import ParamMatrix

__all__ = [
    "AppConfig", "CnnConfig", "PipelineConfig", "load_config",
    "Ellipse", "FitResult", "bottom_y", "ellipse_point", "fit_ellipse",
    "Bill", "BillLine", "DetectionReport", "NoDishTowerError",
    "detect_ellipses", "evaluate_classifier", "match_detections",
    "run_pipeline", "Raster", "ParamMatrix",
]

__version__ = "0.1.0"
