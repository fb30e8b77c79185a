"""
Toy two-stage generator and surface-conditioned critic.

Generator: masked disparity ⊕ mask -> encoder (two stride-2 convs) ->
decoder (nearest upsample + conv) -> coarse disparity, pasted into the hole.
With surface attention on, the coarse result is refined by background patch
transfer and a 3x3 merge conv, then pasted again.

Critic: disparity (⊕ normals when surface discrimination is on) ->
four strided convs -> 1x1 head -> spatial mean + bias.

The network body sees disparity divided by ``scale``; outputs are scaled back
before pasting so background pixels stay bit-equal to the input.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from .attention import AttentionResult, surface_attention
from .autodiff import Tensor
from .autodiff import functional as F
from .checkpoint import load_checkpoint, save_checkpoint
from .config import AttentionConfig, TrainConfig
from .errors import ContractError, DimensionError
from .normals import normals_op
from .types import DisparityImage, HoleMask

logger = logging.getLogger(__name__)


@dataclass
class LayerSpec:
    """One 3x3 (or 1x1) convolution with bias."""
    name: str
    c_in: int
    c_out: int
    stride: int = 1
    activation: str = "leaky_relu"
    upsample: bool = False
    kernel: int = 3


def _init_layers(layers: List[LayerSpec], rng: np.random.Generator) -> Dict[str, Tensor]:
    """He-normal weights, zero biases."""
    tensors: Dict[str, Tensor] = {}
    for layer in layers:
        fan_in = layer.c_in * layer.kernel * layer.kernel
        w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(layer.c_out, layer.c_in, layer.kernel, layer.kernel))
        tensors[f"{layer.name}.weight"] = Tensor(w, requires_grad=True)
        tensors[f"{layer.name}.bias"] = Tensor(np.zeros(layer.c_out), requires_grad=True)
    return tensors


def _apply(layer: LayerSpec, tensors: Dict[str, Tensor], x: Tensor, slope: float) -> Tensor:
    if layer.upsample:
        x = F.upsample_nearest(x, 2)
    out = F.conv2d(x, tensors[f"{layer.name}.weight"], stride=layer.stride)
    bias = F.reshape(tensors[f"{layer.name}.bias"], (layer.c_out, 1, 1))
    out = F.add(out, F.expand(bias, out.shape))
    if layer.activation == "leaky_relu":
        out = F.leaky_relu(out, slope)
    return out


@dataclass
class _Params:
    layers: List[LayerSpec]
    tensors: Dict[str, Tensor]
    seed: int = 0
    leaky_slope: float = 0.2

    def parameters(self) -> List[Tensor]:
        return list(self.tensors.values())

    def state_dict(self, prefix: str = "") -> Dict[str, np.ndarray]:
        return {f"{prefix}{k}": t.data.copy() for k, t in self.tensors.items()}

    def load_state_dict(self, arrays: Dict[str, np.ndarray], prefix: str = ""):
        for key, t in self.tensors.items():
            name = f"{prefix}{key}"
            if name not in arrays:
                raise ContractError(f"checkpoint is missing tensor {name}")
            if arrays[name].shape != t.shape:
                raise DimensionError(f"{name}: checkpoint shape {arrays[name].shape} != model shape {t.shape}")
            t.data = np.array(arrays[name], dtype=np.float64)


@dataclass
class GeneratorParams(_Params):
    """Coarse encoder-decoder plus the refinement merge conv.

    Input has 2 channels (masked disparity, mask); output has 1.
    ``merge`` consumes the coarse disparity and the attention features.
    """

    merge: Optional[LayerSpec] = None

    @classmethod
    def create(cls, width: int = 8, seed: int = 0, attention_channels: int = 4,
               leaky_slope: float = 0.2) -> "GeneratorParams":
        w = width
        layers = [
            LayerSpec("enc1", 2, w),
            LayerSpec("enc2", w, 2 * w, stride=2),
            LayerSpec("enc3", 2 * w, 2 * w),
            LayerSpec("enc4", 2 * w, 2 * w, stride=2),
            LayerSpec("dec1", 2 * w, 2 * w, upsample=True),
            LayerSpec("dec2", 2 * w, w),
            LayerSpec("dec3", w, w, upsample=True),
            LayerSpec("dec4", w, 1, activation="linear"),
        ]
        rng = np.random.default_rng(seed)
        tensors = _init_layers(layers, rng)
        merge = LayerSpec("merge", 1 + attention_channels, 1, activation="linear")
        kernel = np.zeros((1, merge.c_in, 3, 3))
        kernel[0, 1, 1, 1] = 1.0  # start as a pass-through of the transferred disparity
        tensors["merge.weight"] = Tensor(kernel, requires_grad=True)
        tensors["merge.bias"] = Tensor(np.zeros(1), requires_grad=True)
        return cls(layers, tensors, seed, leaky_slope, merge)


@dataclass
class CriticParams(_Params):
    """Conv stack with a scalar head; ``in_channels`` is 4 with surface discrimination, else 1."""

    in_channels: int = 4

    @classmethod
    def create(cls, width: int = 8, seed: int = 0, surface: bool = True,
               leaky_slope: float = 0.2) -> "CriticParams":
        c = 4 if surface else 1
        w = width
        layers = [
            LayerSpec("conv1", c, w, stride=2),
            LayerSpec("conv2", w, 2 * w, stride=2),
            LayerSpec("conv3", 2 * w, 2 * w, stride=2),
            LayerSpec("conv4", 2 * w, 2 * w),
            LayerSpec("head", 2 * w, 1, activation="linear", kernel=1),
        ]
        rng = np.random.default_rng(seed + 1)
        tensors = _init_layers(layers, rng)
        tensors["out.bias"] = Tensor(np.zeros(()), requires_grad=True)
        return cls(layers, tensors, seed, leaky_slope, c)

    @classmethod
    def zeros(cls, width: int = 8, surface: bool = True) -> "CriticParams":
        params = cls.create(width, surface=surface)
        for t in params.tensors.values():
            t.data = np.zeros_like(t.data)
        return params


def critic_features(disparity: Tensor, scale: float = 1.0, surface: bool = True) -> Tensor:
    """[1,H,W] disparity -> scaled disparity, ⊕ its normals when ``surface``."""
    disp = F.mul(disparity, 1.0 / scale)
    if not surface:
        return disp
    return F.concat([disp, normals_op(disparity)], axis=0)


def critic_stack(params: CriticParams, features: Tensor) -> Tensor:
    """Score critic features; returns a scalar Tensor."""
    if features.ndim != 3 or features.shape[0] != params.in_channels:
        raise DimensionError(f"critic expects [{params.in_channels},H,W] features, got {features.shape}")
    x = features
    for layer in params.layers:
        x = _apply(layer, params.tensors, x, params.leaky_slope)
    return F.add(F.mean(x), params.tensors["out.bias"])


def critic_forward(params: CriticParams, disparity: Tensor, scale: float = 1.0) -> Tensor:
    """Critic score of a [1,H,W] disparity; normals are added when the critic takes 4 channels."""
    surface = params.in_channels == 4
    return critic_stack(params, critic_features(disparity, scale, surface))


def _split_input(masked: Tensor) -> Tuple[Tensor, np.ndarray]:
    if masked.ndim != 3 or masked.shape[0] != 2:
        raise DimensionError(f"generator input must be [2,H,W], got {masked.shape}")
    hole = masked.data[1]
    if not np.all((hole == 0) | (hole == 1)):
        raise ContractError("mask channel must be binary")
    if masked.shape[1] % 4 or masked.shape[2] % 4:
        raise DimensionError(f"generator needs H and W divisible by 4, got {masked.shape[1:]}")
    return F.narrow(masked, 0, 0, 1), hole.astype(bool)


def _paste(generated: Tensor, known: Tensor, hole: np.ndarray) -> Tensor:
    """generated inside the hole, ``known`` elsewhere."""
    m = hole[None].astype(np.float64)
    return F.add(F.mul(generated, Tensor.wrap(m)), F.mul(known, Tensor.wrap(1.0 - m)))


def coarse_stage(params: GeneratorParams, masked: Tensor, scale: float) -> Tensor:
    """First-stage disparity [1,H,W], pasted into the hole."""
    known, hole = _split_input(masked)
    x = F.concat([F.mul(known, 1.0 / scale), F.narrow(masked, 0, 1, 1)], axis=0)
    for layer in params.layers:
        x = _apply(layer, params.tensors, x, params.leaky_slope)
    return _paste(F.mul(x, scale), known, hole)


def refine(params: GeneratorParams, coarse: Tensor, known: Tensor, hole: np.ndarray,
           attention: AttentionConfig, scale: float) -> Tuple[Tensor, AttentionResult]:
    """Attention refinement of a coarse output; returns the pasted final output."""
    result = surface_attention(coarse, HoleMask(hole), attention)
    feats = result.features
    background = coarse.data[0][~hole]
    top = float(background.max()) if background.size else 1.0
    top = top if top > 0 else 1.0
    # attention disparity is relative to the background maximum; bring it to network units
    att_disp = F.mul(F.narrow(feats, 0, 0, 1), top / scale)
    parts = [F.mul(coarse, 1.0 / scale), att_disp]
    if feats.shape[0] > 1:
        parts.append(F.narrow(feats, 0, 1, feats.shape[0] - 1))
    merged = _apply(params.merge, params.tensors, F.concat(parts, axis=0), params.leaky_slope)
    return _paste(F.mul(merged, scale), known, hole), result


def generate(params: GeneratorParams, masked: Tensor, cfg: TrainConfig,
             scale: float = 1.0) -> Tuple[Tensor, Tensor]:
    """Run both stages.

    Parameters
    ----------
    masked : Tensor
        [2, H, W]: disparity with zeros in the hole, and the binary hole mask.
    cfg : TrainConfig
        ``surface_attention_on`` and ``attention`` select the refinement.
    scale : float
        Disparity normalisation of the network body.

    Returns
    -------
    (coarse, final)
        [1, H, W] disparities; final equals coarse without surface attention.
    """
    known, hole = _split_input(masked)
    coarse = coarse_stage(params, masked, scale)
    if not cfg.surface_attention_on or not hole.any():
        return coarse, coarse
    final, _ = refine(params, coarse, known, hole, cfg.attention, scale)
    return coarse, final


def masked_input(disparity: np.ndarray, hole: np.ndarray) -> Tensor:
    """[2, H, W] generator input: disparity zeroed in the hole, and the hole itself."""
    m = hole.astype(np.float64)
    return Tensor(np.stack([np.where(hole, 0.0, disparity), m]))


def inpaint(params: GeneratorParams, d: DisparityImage, hole: HoleMask, cfg: TrainConfig,
            scale: float = 1.0, return_attention: bool = False):
    """Fill the hole (and every invalid pixel) of ``d``.

    Background pixels are copied from ``d`` unchanged; filled pixels are
    clamped to be non-negative. Images whose sides are not multiples of 4 are
    edge-padded for the network and cropped back.

    Returns
    -------
    DisparityImage, or (DisparityImage, AttentionResult or None) with ``return_attention``.
    """
    if hole.shape != d.shape:
        raise DimensionError(f"hole {hole.shape} does not match disparity {d.shape}")
    fill = hole.values | ~d.valid
    if not fill.any():
        out = d.copy()
        return (out, None) if return_attention else out

    box = HoleMask(fill).bbox()
    if box[2] - box[0] > cfg.hole_size or box[3] - box[1] > cfg.hole_size:
        logger.warning(
            f"hole {box[2] - box[0]}x{box[3] - box[1]} exceeds the trained {cfg.hole_size}x{cfg.hole_size}; "
            "results may degrade"
        )

    h, w = d.shape
    pad = ((0, (-h) % 4), (0, (-w) % 4))
    values = np.pad(d.filled(0.0), pad, mode="edge")
    padded_hole = np.pad(fill, pad, mode="constant", constant_values=False)
    masked = masked_input(values, padded_hole)

    known, hole_arr = _split_input(masked)
    final = coarse_stage(params, masked, scale)
    attention = None
    if cfg.surface_attention_on:
        final, attention = refine(params, final, known, hole_arr, cfg.attention, scale)

    generated = final.data[0, :h, :w]
    result = DisparityImage(np.where(fill, np.maximum(generated, 0.0), d.values), np.ones((h, w), dtype=bool))
    logger.info(f"inpainted {int(fill.sum())} pixel(s)")
    return (result, attention) if return_attention else result


def save_model(path, generator: GeneratorParams, critic: CriticParams, cfg: TrainConfig,
               scale: float, extra: Optional[Dict] = None):
    """Checkpoint both networks with the run configuration and disparity scale."""
    tensors = generator.state_dict("generator.")
    tensors.update(critic.state_dict("critic."))
    metadata = {
        "config": cfg.to_dict(),
        "disparity_scale": scale,
        "critic_channels": critic.in_channels,
    }
    metadata.update(extra or {})
    return save_checkpoint(path, tensors, metadata)


def load_model(path) -> Tuple[GeneratorParams, CriticParams, TrainConfig, float]:
    """Rebuild networks and configuration from a checkpoint."""
    tensors, meta = load_checkpoint(path)
    cfg = TrainConfig.from_dict(meta["config"])
    channels = 4 if cfg.attention.use_normals else 1
    generator = GeneratorParams.create(cfg.width, cfg.seed, channels, cfg.leaky_slope)
    generator.load_state_dict(tensors, "generator.")
    critic = CriticParams.create(cfg.width, cfg.seed, meta.get("critic_channels", 4) == 4, cfg.leaky_slope)
    critic.load_state_dict(tensors, "critic.")
    return generator, critic, cfg, float(meta["disparity_scale"])
