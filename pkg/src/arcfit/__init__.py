"""MAP segmentation of noisy series into chains of concave quadratic arcs.

The model: a signal evolves as connected arcs whose shape and length
follow explicit priors, observed through gaussian noise. Estimation is
an online Viterbi-style dynamic program over candidate breakpoints,
with immediate-future prediction and an offline two-scale residual
decomposition. The canonical signal is an expressive tempo curve
derived from note onsets.
"""

from .arc_model import (
    ArcParams,
    DataWindow,
    FittedArc,
    GaussianPrior,
    LogNormalPrior,
    PriorSet,
    eval_arc,
    fit_arc,
    neg_log_posterior,
    neg_log_posterior_gradient,
    regularization_coefficient,
)
from .multiscale import (
    DevianceReport,
    TwoLevelAnalysis,
    decompose,
    mean_barline_deviance,
    reconstruct,
)
from .optimizer import (
    MinimizeConfig,
    MinimizeResult,
    ObjectiveEvaluationError,
    OptimizationError,
    minimize,
    numeric_gradient,
)
from .segmenter import (
    Prediction,
    Segmentation,
    SegmenterState,
    ViterbiCell,
    brute_force_segment,
    fit_series,
)
from .tempo_io import (
    OnsetList,
    ParseError,
    SampleOutput,
    TempoSeries,
    read_onsets,
    read_segmentation,
    read_series,
    sample_model,
    tempo_from_onsets,
    write_plot_data,
    write_segmentation,
    write_series,
)

__version__ = "0.1.0"

__all__ = [
    "ArcParams",
    "DataWindow",
    "DevianceReport",
    "FittedArc",
    "GaussianPrior",
    "LogNormalPrior",
    "MinimizeConfig",
    "MinimizeResult",
    "ObjectiveEvaluationError",
    "OnsetList",
    "OptimizationError",
    "ParseError",
    "Prediction",
    "PriorSet",
    "SampleOutput",
    "Segmentation",
    "SegmenterState",
    "TempoSeries",
    "TwoLevelAnalysis",
    "ViterbiCell",
    "brute_force_segment",
    "decompose",
    "eval_arc",
    "fit_arc",
    "fit_series",
    "mean_barline_deviance",
    "minimize",
    "neg_log_posterior",
    "neg_log_posterior_gradient",
    "numeric_gradient",
    "read_onsets",
    "read_segmentation",
    "read_series",
    "reconstruct",
    "regularization_coefficient",
    "sample_model",
    "tempo_from_onsets",
    "write_plot_data",
    "write_segmentation",
    "write_series",
]
