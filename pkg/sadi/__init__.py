"""
SADI (Surface-Aware Disparity Inpainting)

Fill holes in disparity maps with a two-stage generator whose attention
matches patches on disparity and surface normals, trained against a critic
that sees both. Includes a small autodiff engine, synthetic piecewise-planar
scenes, and pixel / distribution metrics for evaluation.

Requires: numpy, scipy
"""

__version__ = "0.3.0"

from .config import AttentionConfig, EvalConfig, LossWeights, TrainConfig
from .errors import (
    CheckpointError,
    ContractError,
    DimensionError,
    DomainError,
    ImageFormatError,
    SceneSpecError,
    TrainingDivergedError,
)
from .types import DisparityImage, HoleMask, NormalMap
from .normals import normals_from_disparity, normals_op, normals_to_rgb
from .losses import LossReport, critic_loss, generator_loss, l1_loss, vectorial_loss
from .attention import AttentionResult, surface_attention
from .metrics import MetricReport, evaluate_many, evaluate_pair
from .model import CriticParams, GeneratorParams, generate, inpaint, load_model, save_model
from .scenes import SceneSpec, SyntheticSceneStream, synth_mask, synth_scene
from .trainer import Trainer, TrainResult, run_ablation

__all__ = [
    "AttentionConfig",
    "EvalConfig",
    "LossWeights",
    "TrainConfig",
    "CheckpointError",
    "ContractError",
    "DimensionError",
    "DomainError",
    "ImageFormatError",
    "SceneSpecError",
    "TrainingDivergedError",
    "DisparityImage",
    "HoleMask",
    "NormalMap",
    "normals_from_disparity",
    "normals_op",
    "normals_to_rgb",
    "LossReport",
    "critic_loss",
    "generator_loss",
    "l1_loss",
    "vectorial_loss",
    "AttentionResult",
    "surface_attention",
    "MetricReport",
    "evaluate_many",
    "evaluate_pair",
    "CriticParams",
    "GeneratorParams",
    "generate",
    "inpaint",
    "load_model",
    "save_model",
    "SceneSpec",
    "SyntheticSceneStream",
    "synth_mask",
    "synth_scene",
    "Trainer",
    "TrainResult",
    "run_ablation",
]
