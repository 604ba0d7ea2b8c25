"""arclearn: length learning for planar sampled curves.

Two small regressors (a 1D-conv network and an LSTM baseline) are trained
to predict the arc length of planar curves from raw sampled coordinates,
using an additivity-enforcing loss over curve/sub-curve triples. The
geometry module supplies exact lengths by quadrature, datagen builds
reproducible sine-curve datasets, and evaluation measures the trained
models against the length axioms.
"""

from .estimator import CurveLengthRegressor
from .datagen import DatasetSplits, ExampleTriple, GenSpec, generate, load, save
from .geometry import (
    AnalyticSine,
    Isometry,
    analytic_length,
    apply_isometry,
    discretization_error,
    polyline_length,
    sample,
    split_at,
)
from .models import ModelKind, init_params, load_checkpoint, save_checkpoint
from .training import TrainConfig, TrainLog, train

__version__ = "0.1.0"

__all__ = [
    "CurveLengthRegressor",
    "GenSpec",
    "ExampleTriple",
    "DatasetSplits",
    "generate",
    "save",
    "load",
    "AnalyticSine",
    "Isometry",
    "analytic_length",
    "polyline_length",
    "discretization_error",
    "sample",
    "split_at",
    "apply_isometry",
    "ModelKind",
    "init_params",
    "save_checkpoint",
    "load_checkpoint",
    "TrainConfig",
    "TrainLog",
    "train",
    "__version__",
]
