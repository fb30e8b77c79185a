"""
Surface attention: fill the hole with background patches chosen by cosine
similarity over disparity and surface-normal features.

Pipeline for one image:

1. features = disparity (divided by the background maximum) ⊕ normals
2. every patch x patch window fully outside the hole becomes a kernel
3. each foreground pixel scores every kernel (cosine, scaled softmax)
4. scores are propagated left-right, then top-down, over a k window so
   neighbouring pixels agree on consistently shifted patches
5. the best kernel per pixel is written back with a transposed convolution,
   overlaps averaged

The foreground is the bounding box of the hole; only hole pixels are
replaced in the output.
"""

import logging
from dataclasses import dataclass
from typing import Iterator, Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .autodiff import Tensor
from .autodiff import functional as F
from .config import AttentionConfig
from .constants import EPS
from .errors import DimensionError, DomainError
from .normals import normals_op
from .types import HoleMask

logger = logging.getLogger(__name__)


@dataclass
class PatchSet:
    """Background patches usable as attention kernels.

    Attributes
    ----------
    kernels : np.ndarray
        [Q, C, patch, patch] feature windows, row-major by centre.
    centers : np.ndarray
        [Q, 2] (row, col) of each window centre.
    index : np.ndarray
        (H, W) patch id of the window centred at each pixel, -1 if none.
    """

    kernels: np.ndarray
    centers: np.ndarray
    index: np.ndarray

    def __len__(self) -> int:
        return self.kernels.shape[0]

    def __iter__(self) -> Iterator[Tuple[Tensor, Tuple[int, int]]]:
        for kernel, (i, j) in zip(self.kernels, self.centers):
            yield Tensor.wrap(kernel), (int(i), int(j))

    @property
    def patch(self) -> int:
        return self.kernels.shape[2]

    def shifted(self, di: int, dj: int) -> np.ndarray:
        """Id of the patch whose centre is each patch's centre moved by (di, dj); -1 if absent."""
        h, w = self.index.shape
        rows = self.centers[:, 0] + di
        cols = self.centers[:, 1] + dj
        inside = (rows >= 0) & (rows < h) & (cols >= 0) & (cols < w)
        out = np.full(len(self), -1, dtype=np.int64)
        out[inside] = self.index[rows[inside], cols[inside]]
        return out


@dataclass
class AttentionResult:
    """Output of one attention pass.

    Attributes
    ----------
    features : Tensor
        [C, H, W] features with hole pixels replaced by transferred patches.
    scores : np.ndarray
        [Hf*Wf, Q] propagated and renormalised score rows, row-major over the
        foreground box.
    raw_scores : np.ndarray
        [Hf*Wf, Q] cosine-softmax rows before propagation.
    argmax_index : np.ndarray
        (Hf, Wf) best patch per foreground pixel.
    transferred : Tensor or None
        [C, Hf, Wf] reconstructed foreground box.
    bbox : tuple or None
        (top, left, bottom, right) of the foreground box, exclusive ends.
    patches : PatchSet or None
    """

    features: Tensor
    scores: np.ndarray
    raw_scores: np.ndarray
    argmax_index: np.ndarray
    transferred: Optional[Tensor] = None
    bbox: Optional[Tuple[int, int, int, int]] = None
    patches: Optional[PatchSet] = None

    def max_score_map(self) -> np.ndarray:
        """(Hf, Wf) highest renormalised score per foreground pixel."""
        if self.bbox is None:
            return np.zeros((0, 0))
        t, l, b, r = self.bbox
        return self.scores.max(axis=1).reshape(b - t, r - l)

    def offsets(self) -> np.ndarray:
        """(Hf, Wf, 2) displacement from each foreground pixel to its matched patch centre."""
        if self.bbox is None:
            return np.zeros((0, 0, 2), dtype=np.int64)
        t, l, b, r = self.bbox
        rows, cols = np.mgrid[t:b, l:r]
        centers = self.patches.centers[self.argmax_index]
        return np.stack([centers[..., 0] - rows, centers[..., 1] - cols], axis=-1)


def extract_patches(features: Tensor, mask: HoleMask, cfg: AttentionConfig) -> PatchSet:
    """Every window fully inside the image and fully outside the hole.

    Raises
    ------
    DomainError
        When no such window exists.
    """
    if features.ndim != 3:
        raise DimensionError(f"features must be [C,H,W], got {features.shape}")
    c, h, w = features.shape
    if mask.shape != (h, w):
        raise DimensionError(f"mask {mask.shape} does not match features {(h, w)}")
    p, r = cfg.patch, cfg.patch // 2
    if h < p or w < p:
        raise DomainError(f"image {(h, w)} smaller than a {p}x{p} patch")

    covered = sliding_window_view(mask.values, (p, p)).any(axis=(2, 3))
    usable = np.zeros_like(covered)
    usable[::cfg.stride, ::cfg.stride] = ~covered[::cfg.stride, ::cfg.stride]
    ys, xs = np.nonzero(usable)
    if ys.size == 0:
        raise DomainError("hole covers image: no background patch available")

    windows = sliding_window_view(features.data, (p, p), axis=(1, 2))
    kernels = np.ascontiguousarray(np.transpose(windows[:, ys, xs], (1, 0, 2, 3)))
    centers = np.stack([ys + r, xs + r], axis=1).astype(np.int64)
    index = np.full((h, w), -1, dtype=np.int64)
    index[centers[:, 0], centers[:, 1]] = np.arange(len(ys))
    return PatchSet(kernels, centers, index)


def foreground_window(features: Tensor, bbox: Tuple[int, int, int, int], margin: int) -> Tensor:
    """The box grown by ``margin`` on every side: [C, Hf + 2m, Wf + 2m].

    Rows and columns beyond the image repeat its edge.
    """
    c, h, w = features.shape
    t, l, b, r = bbox
    rows = np.clip(np.arange(t - margin, b + margin), 0, h - 1)
    cols = np.clip(np.arange(l - margin, r + margin), 0, w - 1)
    ids = np.arange(c * h * w).reshape(c, h, w)
    return F.take(features, ids[:, rows][:, :, cols])


def attention_scores(fg_window: Tensor, patches: PatchSet, cfg: AttentionConfig) -> Tensor:
    """Softmax over patches of scaled cosine similarity, as [Q, Hf, Wf].

    ``fg_window`` is the foreground box with ``patch // 2`` pixels of
    surrounding context (see ``foreground_window``), so windows at the box
    edge are compared using the real neighbouring pixels.
    """
    if len(patches) == 0:
        raise DomainError("attention needs at least one background patch")
    if fg_window.ndim != 3 or fg_window.shape[0] != patches.kernels.shape[1]:
        raise DimensionError(
            f"foreground {fg_window.shape} does not match patches with {patches.kernels.shape[1]} channels"
        )
    k = patches.kernels
    p = patches.patch
    if fg_window.shape[1] < p or fg_window.shape[2] < p:
        raise DimensionError(f"foreground window {fg_window.shape[1:]} smaller than a {p}x{p} patch")
    norms = np.sqrt(np.sum(k * k, axis=(1, 2, 3)))
    unit = k / (norms + EPS)[:, None, None, None]

    dots = F.conv2d(fg_window, unit, pad=0)
    energy = F.conv2d(F.square(fg_window), np.ones((1, k.shape[1], p, p)), pad=0)
    denom = F.add(F.sqrt(energy, eps=EPS * EPS), EPS)
    cosine = F.div(dots, F.expand(denom, dots.shape))
    return F.softmax(F.mul(cosine, cfg.softmax_scale), axis=0)


def _shift_pass(scores: Tensor, patches: PatchSet, half: int, axis: int) -> Tensor:
    q, hf, wf = scores.shape
    rows = np.arange(hf)[None, :, None]
    cols = np.arange(wf)[None, None, :]
    total = None
    for o in range(-half, half + 1):
        if axis == 1:
            neighbor = patches.shifted(o, 0)
            r_, c_ = rows + o, cols + np.zeros_like(rows)
        else:
            neighbor = patches.shifted(0, o)
            r_, c_ = rows + np.zeros_like(cols), cols + o
        nb = neighbor[:, None, None]
        ok = (nb >= 0) & (r_ >= 0) & (r_ < hf) & (c_ >= 0) & (c_ < wf)
        flat = (nb * hf + r_) * wf + c_
        term = F.take(scores, np.where(ok, flat, -1))
        total = term if total is None else F.add(total, term)
    return total


def propagate_scores(scores: Tensor, patches: PatchSet, k: int) -> Tensor:
    """Sum each pixel's score for patch q with its neighbours' scores for q shifted alike.

    Runs a horizontal pass, then a vertical pass, over a window of ``k``.
    Shifted patches that do not exist contribute nothing. ``k == 1`` returns
    ``scores`` unchanged.
    """
    if k < 1 or k % 2 == 0:
        raise ValueError(f"k must be a positive odd int, got {k}")
    if k == 1:
        return scores
    half = k // 2
    return _shift_pass(_shift_pass(scores, patches, half, axis=2), patches, half, axis=1)


def transfer(scores: Tensor, patches: PatchSet, mode: str = "argmax",
             keep_border: bool = False) -> Tensor:
    """Write patches back at every foreground pixel and average overlaps.

    Parameters
    ----------
    scores : Tensor
        [Q, Hf, Wf]; rows are renormalised here.
    mode : {"argmax", "blend"}
        Best patch only, or all patches weighted by score.
    keep_border : bool
        Return the full [C, Hf+2r, Wf+2r] canvas instead of cropping to the box.
    """
    q, hf, wf = scores.shape
    p, r = patches.patch, patches.patch // 2
    if mode == "argmax":
        best = np.argmax(scores.data, axis=0)
        onehot = (np.arange(q)[:, None, None] == best[None]).astype(np.float64)
        weights: Tensor = Tensor.wrap(onehot)
    elif mode == "blend":
        weights = F.div(scores, F.expand(F.sum(scores, axis=0, keepdims=True), scores.shape))
    else:
        raise ValueError(f"mode must be 'argmax' or 'blend', got {mode}")

    if keep_border:
        pad, size = 0, None
    else:
        pad, size = r, (hf, wf)
    placed = F.transpose_conv2d(weights, patches.kernels, pad=pad, output_size=size)
    count = F.transpose_conv2d(np.ones((1, hf, wf)), np.ones((1, 1, p, p)), pad=pad, output_size=size)
    return F.div(placed, Tensor.wrap(np.broadcast_to(count.data, placed.shape).copy()))


def attention_features(coarse: Tensor, mask: HoleMask, use_normals: bool = True) -> Tensor:
    """Disparity divided by its background maximum, optionally ⊕ normals."""
    background = coarse.data[0][~mask.values]
    top = float(background.max()) if background.size else 1.0
    top = top if top > 0 else 1.0
    disp = F.mul(coarse, 1.0 / top)
    if not use_normals:
        return disp
    return F.concat([disp, normals_op(coarse)], axis=0)


def surface_attention(coarse: Tensor, mask: HoleMask, cfg: Optional[AttentionConfig] = None) -> AttentionResult:
    """Refine the hole of a first-stage disparity by background patch transfer.

    Parameters
    ----------
    coarse : Tensor
        [1, H, W] first-stage disparity.
    mask : HoleMask
    cfg : AttentionConfig

    Returns
    -------
    AttentionResult
        ``features`` is the refined [C, H, W] tensor (C = 4, or 1 without
        normals). Background pixels equal the input features exactly.
    """
    cfg = (cfg or AttentionConfig()).validate()
    if coarse.ndim != 3 or coarse.shape[0] != 1:
        raise DimensionError(f"coarse disparity must be [1,H,W], got {coarse.shape}")
    feats = attention_features(coarse, mask, cfg.use_normals)
    if mask.is_empty():
        return AttentionResult(feats, np.zeros((0, 0)), np.zeros((0, 0)), np.zeros((0, 0), dtype=np.int64))

    source = feats if cfg.mode == "blend" else feats.detach()
    patches = extract_patches(feats.detach(), mask, cfg)
    t, l, b, r = mask.bbox()
    fg = foreground_window(source, (t, l, b, r), patches.patch // 2)
    logger.debug(f"attention: {len(patches)} patches, foreground {b - t}x{r - l}")

    raw = attention_scores(fg, patches, cfg)
    propagated = propagate_scores(raw, patches, cfg.k)
    transferred = transfer(propagated, patches, cfg.mode)

    c, h, w = feats.shape
    ids = np.arange(c * h * w).reshape(c, h, w)[:, t:b, l:r]
    placed = F.scatter(transferred, ids, feats.shape)
    hole = np.broadcast_to(mask.as_float(), feats.shape)
    refined = F.add(F.mul(feats, Tensor.wrap(1.0 - hole)), F.mul(placed, Tensor.wrap(hole.copy())))

    rows = propagated.data.reshape(len(patches), -1).T
    return AttentionResult(
        features=refined,
        scores=rows / rows.sum(axis=1, keepdims=True),
        raw_scores=raw.data.reshape(len(patches), -1).T.copy(),
        argmax_index=np.argmax(propagated.data, axis=0),
        transferred=transferred,
        bbox=(t, l, b, r),
        patches=patches,
    )
