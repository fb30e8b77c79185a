"""
Configuration for training, attention and evaluation.

Each dataclass carries its defaults from ``sadi.constants``, a ``validate()``
that raises ValueError, and ``to_dict()`` for log headers and checkpoints.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional

from .constants import (
    ADAM_BETA1,
    ADAM_BETA2,
    ADAM_LR,
    ATTENTION_PATCH,
    ATTENTION_PROPAGATION_K,
    ATTENTION_SOFTMAX_SCALE,
    ATTENTION_STRIDE,
    DEFAULT_ALPHA,
    DEFAULT_BATCH_SIZE,
    DEFAULT_BETA,
    DEFAULT_HOLE_SIZE,
    DEFAULT_IMAGE_SIZE,
    DEFAULT_LAMBDA_GP,
    DEFAULT_N_CRITIC,
    DEFAULT_PHI,
    DEFAULT_WIDTH,
    DEPTH_BINS,
    LEAKY_SLOPE,
    SURFACE_BINS,
)

ATTENTION_MODES = ("argmax", "blend")
REGIONS = ("hole", "full")
VECTORIAL_REGIONS = ("full", "hole")
LOG_BASES = ("e", "2")
SURFACE_MODES = ("pooled", "per-component")


@dataclass
class LossWeights:
    """Weights of the composite generator and critic objectives.

    Attributes
    ----------
    beta : float
        Adversarial weight.
    phi : float
        L1 reconstruction weight.
    alpha : float
        Vectorial Loss weight; 0 reproduces the plain contextual-attention objective.
    lambda_gp : float
        Gradient-penalty coefficient.
    n_critic : int
        Critic updates per generator update.
    """

    beta: float = DEFAULT_BETA
    phi: float = DEFAULT_PHI
    alpha: float = DEFAULT_ALPHA
    lambda_gp: float = DEFAULT_LAMBDA_GP
    n_critic: int = DEFAULT_N_CRITIC

    def validate(self):
        for name in ("beta", "phi", "alpha", "lambda_gp"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value}")
        if self.phi <= 0:
            raise ValueError(f"phi must be positive, got {self.phi}")
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if self.lambda_gp < 0:
            raise ValueError(f"lambda_gp must be >= 0, got {self.lambda_gp}")
        if self.n_critic < 1:
            raise ValueError(f"n_critic must be positive, got {self.n_critic}")
        return self

    def to_dict(self) -> Dict[str, Any]:
        return {
            "beta": self.beta,
            "phi": self.phi,
            "alpha": self.alpha,
            "lambda_gp": self.lambda_gp,
            "n_critic": self.n_critic,
        }


@dataclass
class AttentionConfig:
    """Surface attention parameters.

    Attributes
    ----------
    patch : int
        Background patch side.
    k : int
        Score propagation window.
    softmax_scale : float
        Temperature multiplier applied to cosine scores.
    stride : int
        Background patch sampling stride.
    mode : str
        "argmax" transfers the best patch; "blend" mixes patches by score.
    use_normals : bool
        Match on disparity plus normals (4 channels) or disparity only.
    """

    patch: int = ATTENTION_PATCH
    k: int = ATTENTION_PROPAGATION_K
    softmax_scale: float = ATTENTION_SOFTMAX_SCALE
    stride: int = ATTENTION_STRIDE
    mode: str = "argmax"
    use_normals: bool = True

    def validate(self):
        if self.patch < 1 or self.patch % 2 == 0:
            raise ValueError(f"patch must be a positive odd int, got {self.patch}")
        if self.k < 1 or self.k % 2 == 0:
            raise ValueError(f"k must be a positive odd int, got {self.k}")
        if not self.softmax_scale > 0:
            raise ValueError(f"softmax_scale must be positive, got {self.softmax_scale}")
        if self.stride < 1:
            raise ValueError(f"stride must be positive, got {self.stride}")
        if self.mode not in ATTENTION_MODES:
            raise ValueError(f"mode must be one of {ATTENTION_MODES}, got {self.mode}")
        return self

    @property
    def radius(self) -> int:
        return self.patch // 2

    def to_dict(self) -> Dict[str, Any]:
        return {
            "patch": self.patch,
            "k": self.k,
            "softmax_scale": self.softmax_scale,
            "stride": self.stride,
            "mode": self.mode,
            "use_normals": self.use_normals,
        }


@dataclass
class TrainConfig:
    """Toy-scale adversarial training run.

    Attributes
    ----------
    image_size : int
        Side of the square training crops (multiple of 4).
    hole_size : int
        Side of the square hole.
    batch_size : int
        Samples per critic or generator update.
    steps : int
        Generator updates.
    lr, beta1, beta2 : float
        Adam hyper-parameters.
    weights : LossWeights
        Objective weights.
    attention : AttentionConfig
        Refinement-stage attention parameters.
    seed : int
        Seeds parameters, data and interpolation samples.
    vectorial_loss_on, surface_attention_on, surface_discrimination_on : bool
        Ablation switches.
    width : int
        Base channel count of generator and critic.
    leaky_slope : float
        Negative slope of every hidden activation.
    vectorial_region : str
        "full" applies the Vectorial Loss to the whole crop, "hole" to the hole only.
    disparity_scale : float or None
        Input normalisation; None estimates it from the first batch.
    log_every : int
        Generator steps between INFO progress lines.
    out_dir : str
        Where logs and checkpoints go.
    """

    image_size: int = DEFAULT_IMAGE_SIZE
    hole_size: int = DEFAULT_HOLE_SIZE
    batch_size: int = DEFAULT_BATCH_SIZE
    steps: int = 200
    lr: float = ADAM_LR
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    weights: LossWeights = field(default_factory=LossWeights)
    attention: AttentionConfig = field(default_factory=AttentionConfig)
    seed: int = 0
    vectorial_loss_on: bool = True
    surface_attention_on: bool = True
    surface_discrimination_on: bool = True
    width: int = DEFAULT_WIDTH
    leaky_slope: float = LEAKY_SLOPE
    vectorial_region: str = "full"
    disparity_scale: Optional[float] = None
    log_every: int = 10
    out_dir: str = "./sadi_runs"

    def validate(self):
        if self.image_size < 8 or self.image_size % 4 != 0:
            raise ValueError(f"image_size must be a multiple of 4 and >= 8, got {self.image_size}")
        if self.hole_size < 1:
            raise ValueError(f"hole_size must be positive, got {self.hole_size}")
        margin = self.attention.patch // 2
        if self.hole_size + 2 * margin > self.image_size:
            raise ValueError(
                f"hole_size {self.hole_size} leaves no margin of {margin} in image {self.image_size}"
            )
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be positive, got {self.batch_size}")
        if self.steps < 0:
            raise ValueError(f"steps must be >= 0, got {self.steps}")
        if not self.lr > 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError(f"Adam betas must lie in [0,1), got ({self.beta1}, {self.beta2})")
        if self.width < 1:
            raise ValueError(f"width must be positive, got {self.width}")
        if self.vectorial_region not in VECTORIAL_REGIONS:
            raise ValueError(f"vectorial_region must be one of {VECTORIAL_REGIONS}, got {self.vectorial_region}")
        if self.disparity_scale is not None and not self.disparity_scale > 0:
            raise ValueError(f"disparity_scale must be positive, got {self.disparity_scale}")
        if self.log_every < 1:
            raise ValueError(f"log_every must be positive, got {self.log_every}")
        self.weights.validate()
        self.attention.validate()
        return self

    def to_dict(self) -> Dict[str, Any]:
        """Nested dictionary for logging and checkpoint metadata."""
        return {
            "geometry": {
                "image_size": self.image_size,
                "hole_size": self.hole_size,
                "batch_size": self.batch_size,
            },
            "optimizer": {
                "steps": self.steps,
                "lr": self.lr,
                "beta1": self.beta1,
                "beta2": self.beta2,
            },
            "weights": self.weights.to_dict(),
            "attention": self.attention.to_dict(),
            "ablation": {
                "vectorial_loss_on": self.vectorial_loss_on,
                "surface_attention_on": self.surface_attention_on,
                "surface_discrimination_on": self.surface_discrimination_on,
            },
            "model": {
                "width": self.width,
                "leaky_slope": self.leaky_slope,
                "disparity_scale": self.disparity_scale,
            },
            "session": {
                "seed": self.seed,
                "vectorial_region": self.vectorial_region,
                "log_every": self.log_every,
                "out_dir": self.out_dir,
            },
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TrainConfig":
        """Inverse of ``to_dict``."""
        cfg = cls(
            weights=LossWeights(**data["weights"]),
            attention=AttentionConfig(**data["attention"]),
        )
        for section in ("geometry", "optimizer", "ablation", "model", "session"):
            for key, value in data.get(section, {}).items():
                setattr(cfg, key, value)
        return cfg


@dataclass
class EvalConfig:
    """Histogram and region settings for evaluation.

    ``depth_range`` of None spans the ground truth over the evaluated region.
    """

    depth_bins: int = DEPTH_BINS
    surface_bins: int = SURFACE_BINS
    region: str = "hole"
    log_base: str = "e"
    surface_mode: str = "pooled"
    depth_range: Optional[tuple] = None
    jobs: int = 1

    def validate(self):
        if self.depth_bins < 1 or self.surface_bins < 1:
            raise ValueError(f"bin counts must be positive, got {self.depth_bins}/{self.surface_bins}")
        if self.region not in REGIONS:
            raise ValueError(f"region must be one of {REGIONS}, got {self.region}")
        if self.log_base not in LOG_BASES:
            raise ValueError(f"log_base must be one of {LOG_BASES}, got {self.log_base}")
        if self.surface_mode not in SURFACE_MODES:
            raise ValueError(f"surface_mode must be one of {SURFACE_MODES}, got {self.surface_mode}")
        if self.depth_range is not None and not self.depth_range[0] < self.depth_range[1]:
            raise ValueError(f"depth_range must be ascending, got {self.depth_range}")
        if self.jobs < 1:
            raise ValueError(f"jobs must be positive, got {self.jobs}")
        return self

    def to_dict(self) -> Dict[str, Any]:
        return {
            "depth_bins": self.depth_bins,
            "surface_bins": self.surface_bins,
            "region": self.region,
            "log_base": self.log_base,
            "surface_mode": self.surface_mode,
            "depth_range": list(self.depth_range) if self.depth_range else None,
        }


def load_config_file(path) -> Dict[str, str]:
    """Parse a key=value file.

    ``#`` starts a comment, blank lines are skipped, and dashes in keys are
    read as underscores so flag spellings work too. Values stay strings.
    """
    values: Dict[str, str] = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
        key, value = line.split("=", 1)
        key = key.strip().replace("-", "_")
        if not key:
            raise ValueError(f"{path}:{lineno}: empty key")
        values[key] = value.strip()
    return values


def parse_bool(value: str) -> bool:
    lowered = str(value).strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {value!r}")
