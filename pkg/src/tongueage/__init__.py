"""Age regression on raw ultrasound tongue frames.

A self-contained numpy implementation: from-scratch CNN layers with
hand-written gradients, RMSprop training with on-the-fly augmentation, raw
recording ingestion, a synthetic desk-scale data generator, and activation
visualization.
"""

from .augment import AugmentConfig, random_augment, rotate
from .data import (
    Dataset,
    ParamFile,
    Recording,
    Sample,
    build_dataset,
    load_recording,
    mean_age_baseline,
    parse_age,
    sample_frames,
    split_dataset,
    synth_generate,
)
from .errors import ConfigError, FormatError, NumericsError, ParseError, ShapeError
from .model import (
    Model,
    build_paper_model,
    load_checkpoint,
    save_checkpoint,
)
from .optim import RmsPropState, mse_loss, rmsprop_step
from .trainer import TrainConfig, EpochMetrics, evaluate, run_ablation, train
from .viz import ActivationSet, export_curves, extract_activations, render_heatmap

__version__ = "0.1.0"

__all__ = [
    "AugmentConfig", "random_augment", "rotate",
    "Dataset", "ParamFile", "Recording", "Sample", "build_dataset",
    "load_recording", "mean_age_baseline", "parse_age", "sample_frames",
    "split_dataset", "synth_generate",
    "ConfigError", "FormatError", "NumericsError", "ParseError", "ShapeError",
    "Model", "build_paper_model", "load_checkpoint", "save_checkpoint",
    "RmsPropState", "mse_loss", "rmsprop_step",
    "TrainConfig", "EpochMetrics", "evaluate", "run_ablation", "train",
    "ActivationSet", "export_curves", "extract_activations", "render_heatmap",
]
