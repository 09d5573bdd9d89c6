"""Ring artifact reduction for fan-beam CT with an unrolled ISTA network.

The package covers scanner geometry and a matched Joseph projector, the
defective-detector corruption model, synthetic corpus generation, classical
stripe-correction baselines, the unrolled network with hand-written
gradients, and HU-domain image metrics.
"""
from .baselines import norm_correct, wavefft_correct
from .evaluate import MetricReport, evaluate
from .geometry import FanBeamGeometry, geometry_preset, ray_for, resolve_geometry
from .io import read_pgm, read_raster, write_raster
from .metrics import hu_metrics, hu_to_mu, mae, mu_to_hu, psnr, ssim
from .model import (UnrolledModel, estimate_im, estimate_ir, gradient_step, init_model,
                    modified_forward, proximal_step, unrolled_reconstruct)
from .physics import DetectorResponse, apply_corruption, make_ct_like, sample_response
from .projector import FanBeamProjector, back_project, fbp, forward_project
from .synthesis import CorruptionParams, TrainingSample, generate_corpus, generate_pair
from .train import TrainConfig, load_checkpoint, save_checkpoint, train

__version__ = "0.1.0"

__all__ = [
    "CorruptionParams", "DetectorResponse", "FanBeamGeometry", "FanBeamProjector",
    "MetricReport", "TrainConfig", "TrainingSample", "UnrolledModel", "apply_corruption",
    "back_project", "estimate_im", "estimate_ir", "evaluate", "fbp", "forward_project",
    "generate_corpus", "generate_pair", "geometry_preset", "gradient_step", "hu_metrics",
    "hu_to_mu", "init_model", "load_checkpoint", "mae", "make_ct_like", "modified_forward",
    "mu_to_hu", "norm_correct", "proximal_step", "psnr", "ray_for", "read_pgm",
    "read_raster", "resolve_geometry", "sample_response", "save_checkpoint", "ssim",
    "train", "unrolled_reconstruct", "wavefft_correct", "write_raster",
]
