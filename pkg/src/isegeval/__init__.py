"""Evaluation harness for interactive volumetric segmentation algorithms.

Plans compatible (algorithm, task, prompt-config) experiments from
declared capability fingerprints, drives seeded prompt-simulation
sessions against external segmentation applications over a newline-JSON
TCP protocol, and computes per-iteration and convergence metrics in the
original image space.
"""

__version__ = "0.1.0"

from .errors import (
    ApplicationError,
    ConfigError,
    ConnectError,
    EmptyInput,
    HarnessError,
    InferenceTimeout,
    InsufficientSeries,
    IoError,
    MalformedFile,
    NativeSpaceViolation,
    NoCommonPrompt,
    OutOfCrop,
    ProtocolError,
    ProtocolVersionError,
    ShapeMismatch,
    UnsupportedDatatype,
)
from .metrics import (
    ConvergenceTarget,
    MetricSeries,
    SummaryRow,
    dice,
    median_curve,
    nauc,
    noi,
    nsd,
    quantile,
    summarize,
    surface_extract,
)
from .volume import (
    LabelMask,
    Volume,
    clip_normalize,
    connected_components,
    largest_component,
    point_to_relative,
    read_nifti,
    read_nifti_mask,
    remap_index,
    write_nifti,
)
