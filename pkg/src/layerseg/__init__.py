"""Smoothness-regularized layer segmentation toolkit."""

__version__ = "0.1.0"

from .backend import backend_name
from .errors import (DegenerateTestError, DomainError, PhantomConfigError,
                     ShapeMismatchError, TrainingDiverged, UndefinedMetricError,
                     VolumeFormatError)
from .fields import SampleId, Volume3D, mip_y, slice_xz, threshold
from .loss import (AveragingKernel, LossBreakdown, LossConfig, bce_map, conv_row,
                   loss_gradient, logit_gradient, sigmoid, smoothness_penalty,
                   total_loss)
from .metrics import (NormalHistogram, OverlapScores, SurfaceProfile,
                      extract_surfaces, normal_histogram, overlap_scores,
                      pooled_roughness, roughness, wilcoxon_signed_rank)
from .model import ConvModel
from .phantom import (LabeledSlice, LabeledVolume, PhantomConfig, gen_slice,
                      gen_volume, split_dataset, volume_slices)
from .train import TrainConfig, TrainRecord, optimize_logit_field, train

__all__ = [
    "AveragingKernel", "ConvModel", "DegenerateTestError", "DomainError",
    "LabeledSlice", "LabeledVolume", "LossBreakdown", "LossConfig",
    "NormalHistogram", "OverlapScores", "PhantomConfig", "PhantomConfigError",
    "SampleId", "ShapeMismatchError", "SurfaceProfile", "TrainConfig",
    "TrainRecord", "TrainingDiverged", "UndefinedMetricError", "Volume3D",
    "VolumeFormatError", "backend_name", "bce_map", "conv_row",
    "extract_surfaces", "gen_slice", "gen_volume", "logit_gradient",
    "loss_gradient", "mip_y", "normal_histogram", "optimize_logit_field",
    "overlap_scores", "pooled_roughness", "roughness", "sigmoid", "slice_xz",
    "smoothness_penalty", "split_dataset", "threshold", "total_loss", "train",
    "volume_slices",
]
