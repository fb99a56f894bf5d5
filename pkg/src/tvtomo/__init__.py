"""TV-regularized tilt-series reconstruction with an error-free weight rule."""

__version__ = "0.1.0"

from .errors import (
    CapacityError,
    FormatError,
    NumericalError,
    TvTomoError,
    ValidationError,
)
from .grid import BallSpec, ProjectionStack, TiltGeometry, Volume, rasterize_ball, translate
from .tv import TvConfig, tv_gradient, tv_norm, tv_value
from .special import erfc, inv_erfc
from .projector import ForwardModel, adjoint, apply, apply_single, inner_with_projection
from .phantom import ObjectMask, Phantom, make_phantom
from .noise import NoiseModel, simulate_data, simulate_noise_only
from .rule import (
    LineMinInputs,
    ParamChoiceReport,
    SigmaEstimate,
    SminConfig,
    choose_lambda,
    compute_s_lambda,
    compute_smin,
    estimate_sigma,
    feature_significance,
    line_minimizer,
)
from .solver import SolveResult, SolverConfig, objective, solve
from .analysis import (
    ComponentSet,
    HitAnalysis,
    classify_hits,
    connected_components,
    hit_table,
    ideal_rule_sweep,
)
from .config import RunConfig, build_model, load_config, parse_config

__all__ = [
    "__version__",
    "TvTomoError",
    "ValidationError",
    "FormatError",
    "CapacityError",
    "NumericalError",
    "Volume",
    "TiltGeometry",
    "ProjectionStack",
    "BallSpec",
    "rasterize_ball",
    "translate",
    "TvConfig",
    "tv_norm",
    "tv_value",
    "tv_gradient",
    "erfc",
    "inv_erfc",
    "ForwardModel",
    "apply",
    "apply_single",
    "adjoint",
    "inner_with_projection",
    "Phantom",
    "ObjectMask",
    "make_phantom",
    "NoiseModel",
    "simulate_data",
    "simulate_noise_only",
    "LineMinInputs",
    "line_minimizer",
    "SigmaEstimate",
    "estimate_sigma",
    "compute_s_lambda",
    "SminConfig",
    "compute_smin",
    "ParamChoiceReport",
    "choose_lambda",
    "feature_significance",
    "SolverConfig",
    "SolveResult",
    "objective",
    "solve",
    "ComponentSet",
    "connected_components",
    "HitAnalysis",
    "classify_hits",
    "hit_table",
    "ideal_rule_sweep",
    "RunConfig",
    "parse_config",
    "load_config",
    "build_model",
]
