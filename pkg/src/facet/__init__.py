"""Event-based eye tracking core: binning, causal event volumes, ellipse
modeling, detection losses, decoding, metrics, and a synthetic generator."""

from .accumulate import (
    AccumulationConfig,
    EptReport,
    Representation,
    accumulate_bin,
    accumulate_causal,
    accumulate_fast_causal,
    accumulate_volume,
    kernel,
    measure_ept,
    normalize_minmax,
    read_fcv1,
    write_fcv1,
)
from .decode import (
    DecodeError,
    DetectionFailed,
    EvalReport,
    decode_prediction,
    detect_classical,
    evaluate_centers,
    pixel_error,
    pn_metric,
)
from .ellipse import (
    EllipseParams,
    FitError,
    GaussianEllipse,
    RotationEncoding,
    SimilarityTransform,
    decode_rotation,
    ellipse_to_gaussian,
    encode_rotation,
    fit_ellipse,
    sample_boundary,
    transform_ellipse,
)
from .events import (
    BinningConfig,
    Event,
    EventBin,
    EventStream,
    FormatError,
    bin_fixed_count,
    bin_fixed_time,
    make_bins,
    read_events,
    write_events,
)
from .losses import (
    HeadPrediction,
    HeadTargets,
    LossWeights,
    angle_loss,
    focal_heatmap_loss,
    gwd_distance_sq,
    gwd_loss,
    gwd_loss_grad,
    make_targets,
    smooth_l1,
    total_loss,
    trig_loss,
    trig_loss_grad,
)
from .modelcost import CostReport, LayerSpec, complexity_model, layer_cost, network_cost
from .synth import Scenario, ScenarioError, ellipse_at, generate

__version__ = "0.1.0"
