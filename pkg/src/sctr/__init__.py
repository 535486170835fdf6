"""Superpixel-guided continuous low-rank tensor completion (SCTR)."""

from .errors import FormatError, NumericalError
from .guide import GuideResult, guide_to_feature_image, halrtc_complete
from .metrics import MetricReport, psnr, ssim
from .model import AltfModel, BackboneConfig, estimate_iteration_cost
from .superpixel import PatchSpec, RankPolicy, estimate_patch_ranks, extract_patches, slic_segment
from .trainer import RunResult, TrainConfig, make_mask, sweep_granularity, train_ablation, train_sctr

__version__ = "0.1.0"

__all__ = [
    "AltfModel", "BackboneConfig", "FormatError", "GuideResult", "MetricReport", "NumericalError",
    "PatchSpec", "RankPolicy", "RunResult", "TrainConfig", "estimate_iteration_cost",
    "estimate_patch_ranks", "extract_patches", "guide_to_feature_image", "halrtc_complete",
    "make_mask", "psnr", "slic_segment", "ssim", "sweep_granularity", "train_ablation", "train_sctr",
]
