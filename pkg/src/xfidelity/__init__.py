"""Attack-based faithfulness evaluation of saliency tools on face-forgery
detectors.

The core question the toolkit answers: when a saliency tool says a region
drives a detector's decision, does perturbing only that region actually
flip the decision?  The pipeline explains a real image, transfers the
segment ranking onto the paired fake image, and runs a query-efficient
NES attack restricted to the top segment.  Deletion/IAUC/IROF baselines
are included for comparison.
"""

__version__ = "0.1.0"

from .attack import AttackBudget, AttackResult, nes_attack, nes_gradient_estimate
from .errors import (
    DecodeError,
    ParameterError,
    RemoteProtocolError,
    RemoteTransportError,
    SurrogateFitError,
    UnsupportedFormatError,
    ValidationError,
    XFidelityError,
)
from .explainers import (
    LimeParams,
    RiseParams,
    SobolParams,
    fit_lime_surrogate,
    lime_explain,
    rise_explain,
    sobol_explain,
    sobol_total_order,
)
from .harness import (
    CallableTool,
    EvaluationReport,
    FileTool,
    HarnessConfig,
    LimeTool,
    PairEntry,
    PairManifest,
    PairRecord,
    RiseTool,
    SaliencyTool,
    SobolTool,
    ToolSummary,
    evaluate_dataset,
    load_manifest,
    parse_tool_spec,
    render_report,
    run_pair,
)
from .metrics import (
    MetricCurve,
    MetricPoint,
    ReplacementStrategy,
    deletion_eval,
    insertion_eval,
    irof_eval,
    replace_pixels,
    top_k_pixel_indices,
)
from .predictor import (
    ConstantDetector,
    CountingPredictor,
    EchoDetector,
    Label,
    LinearDetector,
    PlantedRegionDetector,
    Predictor,
    RemotePredictor,
    Verdict,
    make_linear_detector,
    make_planted_detector,
    parse_predictor_spec,
    predict_batch,
)
from .ranking import SegmentRanking, rank_segments, segment_importance
from .rng import RngStream, derive_seed
from .segmentation import (
    SegmentMap,
    SlicParams,
    connected_components,
    decode_segments,
    encode_segments,
    lab_to_rgb,
    rgb_to_lab,
    segment_indices,
    slic_segment,
)
from .tensor import (
    ImageTensor,
    SaliencyMap,
    bilinear_resize,
    decode_image,
    decode_saliency,
    encode_image,
    encode_saliency,
    gaussian_blur,
    per_channel_mean,
)

__all__ = [name for name in dir() if not name.startswith("_")]
