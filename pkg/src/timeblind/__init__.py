"""Time-blind flow matching on spiked covariance models."""

__version__ = "0.1.0"

from ._backend import BACKEND
from .model import (
    InterpolantBatch,
    SpikedModel,
    TimeInterval,
    clock_eval,
    coordinate_stats,
    critical_point,
    equal_spikes,
    make_model,
    sample_batch,
    term_one,
)
