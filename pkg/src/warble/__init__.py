"""warble: mouth-tracked control of a physical syrinx model.

Video in, shape parameters out, sound back. The package splits into
vision (nostril tracking and mouth segmentation), the syrinx physical
model, the feature-to-control mapping layer, and the offline/streaming
engine front ends.
"""
from .errors import (
    BindError,
    ConfigError,
    ConfigParseError,
    DegeneratePair,
    EmptyCapture,
    EmptyRegion,
    EngineError,
    InitFailed,
    MalformedImage,
    MixedDimensions,
    NostrilsNotFound,
    NotFound,
    NumericalBlowup,
    RouteConflict,
    TooShort,
    TrackingLost,
)
from .errors import MouthClosed
from .mapping import (
    Calibration,
    ControlFrame,
    MapRoute,
    Router,
    apply_routes,
    calibrate_capture,
    normalize,
    validate_routes,
)
from .segment import (
    Blob,
    MouthFeatures,
    SegmentationThresholds,
    largest_component,
    segment_mouth,
    shape_features,
    vote_filter,
)
from .syrinx import (
    AirConfig,
    Coefficients,
    MembraneConfig,
    OPERATING_PRESSURE,
    Synth,
    SyrinxConfig,
    SyrinxControls,
    ValveState,
    derive_coefficients,
    estimate_pitch,
    find_onset,
    stability_scan,
    valve_step,
)
from .vision import (
    Frame,
    NostrilGeometry,
    NostrilPair,
    RotatedRegion,
    TrackState,
    VisionParams,
    analyze_frame,
    extract_region,
    find_nostril_minima,
    initialize,
    mouth_window,
    nostril_geometry,
    predict_center,
    project_and_smooth,
    track_step,
)
from .config import EngineConfig, default_config, load_config, save_config
from .frameio import load_frames, read_image, write_ppm
from .offline import run_offline, write_control_log
from .server import EngineServer
from .wavio import read_wav, samples_to_i16, write_wav

__version__ = "0.1.0"
