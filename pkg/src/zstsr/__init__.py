"""Zero-shot temporal super-resolution of a single video."""
from .analysis import HeatMap, PatchSearchConfig, patch_nn_heatmap, render_heatmap
from .backprojection import (BackProjectionConfig, BackProjectionError, spatial_backproject,
                             temporal_backproject)
from .config import ConfigError, load_config
from .dataset import PairSampler, SamplerConfig, build_pyramid, crop_weights, sample_pair
from .kernels import BACKEND
from .metrics import MetricsReport, psnr, ssim
from .model import TsrNet, init, load_checkpoint, save_checkpoint, upsample
from .optim import LrSchedule, TrainConfig, TrainingError, train
from .pipeline import PipelineConfig, PipelineError, degrade, evaluate, run_tsr
from .resample import spatial_scale_bicubic, temporal_cubic_upsample, temporal_rect_downsample
from .volume import VideoVolume, VolumeError, load_any, read_volume, save_any, write_volume

__version__ = "0.1.0"
