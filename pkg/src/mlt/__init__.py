"""Most likely transformation models: likelihood-based distribution regression."""

from .basis import Bernstein, Concat, Covariates, Discrete, Kronecker, Linear, Support
from .data import Dataset, ResponseStatus, load_csv
from .distributions import ErrorDistribution
from .inference import confidence_band, predict, quantile, sample, wald
from .likelihood import Likelihood, TransformationModel
from .models import FitResult, ModelSpec, build, fit, fit_spec
from .optimizer import OptimizerConfig, maximize

__all__ = [
    "Bernstein", "Concat", "Covariates", "Discrete", "Kronecker", "Linear", "Support",
    "Dataset", "ResponseStatus", "load_csv", "ErrorDistribution",
    "confidence_band", "predict", "quantile", "sample", "wald",
    "Likelihood", "TransformationModel", "FitResult", "ModelSpec", "build", "fit", "fit_spec",
    "OptimizerConfig", "maximize",
]
__version__ = "0.1.0"
