"""Reversible textured binarization of color images."""

from .checkpoint import load_checkpoint, save_checkpoint
from .images import (PixelBuffer, center_crop_resize, from_tensor, load_image, render_binary,
                     render_plane, save_image, to_tensor)
from .losses import (LossBreakdown, color_continuity_loss, pixel_error, reconstruction_loss,
                     region_means, relative_intensity_loss, total_loss)
from .network import (ModelParams, NetworkConfig, backward, binarize, decode, down_discretize,
                      forward, init_params, pre_encode)
from .quantize import QuantSpec, dde_level_schedule, discretize_tanh, ste_gradient
from .synthgen import SynthConfig, generate_synthetic
from .trainer import TrainConfig, assemble_batch, train, train_step

__version__ = "0.1.0"
