"""Online-fitted optical flow with relaxed steepest descent and
confidence-gated probability-map refinement."""

from .estimators import IntegrationRefiner, OnlineFlowEstimator
from .flo import colorize_flow, read_flo, write_flo
from .grids import (ConvKernel, bilinear_resize, bilinear_resize_backward,
                    box_sum, conv2d, conv2d_backward, reduce_mean, reduce_sum,
                    sigmoid)
from .integration import (HistoryState, IntegrationParams, IntegrationSample,
                          bce_loss, integrate, integration_bce,
                          train_integration)
from .metrics import (boundary_f, crop_to_bbox_pair, iou, mean_ssim, psnr)
from .motion import (FeatureConfig, MotionObjective, MotionParams,
                     extract_features, loss_and_gradient, predict_flow)
from .online import OnlineFlowConfig, OnlineFlowSession, run_batched, \
    run_streaming
from .optim import (AdamState, FrameCache, Objective, QuadraticObjective,
                    RsdStepRecord, StationaryPointError, adam_step, rsd_optimize,
                    rsd_step, sgd_step)
from .photometric import (PhotometricConfig, loss_and_grad_wrt_warped,
                          loss_gradient_wrt_flow, mask_to_bbox,
                          masked_photometric_loss, ssim_map)
from .presets import PRESET_NAMES, merge_object_maps, run_preset, strip_timing
from .sequence_io import load_sequence, write_image, write_mask
from .synthetic import (OccluderSpec, SequenceBundle, SyntheticSpec,
                        synthesize_sequence)
from .warping import warp, warp_backward, warp_chain

__version__ = "0.1.0"

__all__ = [
    "AdamState", "ConvKernel", "FeatureConfig", "FrameCache", "HistoryState",
    "IntegrationParams", "IntegrationRefiner", "IntegrationSample",
    "MotionObjective", "MotionParams", "Objective", "OccluderSpec",
    "OnlineFlowConfig", "OnlineFlowEstimator", "OnlineFlowSession",
    "PhotometricConfig", "PRESET_NAMES", "QuadraticObjective", "RsdStepRecord",
    "SequenceBundle", "StationaryPointError", "SyntheticSpec", "adam_step",
    "bce_loss", "bilinear_resize", "bilinear_resize_backward", "boundary_f",
    "box_sum", "colorize_flow", "conv2d", "conv2d_backward",
    "crop_to_bbox_pair", "extract_features", "integrate", "integration_bce",
    "iou", "load_sequence", "loss_and_grad_wrt_warped", "loss_and_gradient",
    "loss_gradient_wrt_flow", "mask_to_bbox", "masked_photometric_loss",
    "mean_ssim", "merge_object_maps", "predict_flow", "psnr", "read_flo",
    "reduce_mean", "reduce_sum", "rsd_optimize", "rsd_step", "run_batched",
    "run_preset", "run_streaming", "sgd_step", "sigmoid", "ssim_map",
    "strip_timing", "synthesize_sequence", "train_integration", "warp",
    "warp_backward", "warp_chain", "write_flo", "write_image", "write_mask",
]
