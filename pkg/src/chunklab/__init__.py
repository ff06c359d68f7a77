"""Desk-scale laboratory for learned sequence chunking.

Building blocks for hierarchical sequence models that learn where to place
chunk boundaries: a minimal reverse-mode tape over dense arrays, cosine and
sigmoid boundary scorers, chunk- and byte-level temporal-expansion
smoothing, compression-control and confidence-alignment losses, a
boundary-statistics toolkit with a circular-shift null, and a synthetic
change-point benchmark with an oracle backbone.
"""

from .chunker import (
    BoundaryMask,
    BoundaryScores,
    Confidence,
    CosineChunkerParams,
    SigmoidChunkerParams,
    confidences,
    cosine_scores,
    enforce_min_boundaries,
    equal_size_boundaries,
    sigmoid_scores,
    threshold_boundaries,
)
from .expansion import (
    ChunkStates,
    ExpandedStates,
    byte_smooth_expand,
    chunk_smooth_expand,
    fuse_confidence_ste,
    fuse_residual,
)
from .harness import ExperimentConfig, RunAborted, run_experiment, sweep, trace_eval
from .losses import CabLossConfig, RatioLossConfig, cab_loss, ratio_loss, total_loss
from .metrics import (
    MetricsReport,
    Trace,
    aggregate,
    boundary_mean_surprisal_bits,
    compression,
    compute_report,
    cusum_range,
    enrichment,
    enrichment_null,
    gap_entropy,
    runs_z,
)
from .optim import AdamWState, adamw_step
from .rng import SeededRng
from .synthetic import (
    EncoderParams,
    GeneratorInstance,
    SynthConfig,
    SynthSample,
    boundary_accuracy,
    encode,
    load_sample,
    oracle_subsample,
    sample,
    save_sample,
)
from .tape import DenseArray, NonFiniteError, Tape

__version__ = "0.1.0"
