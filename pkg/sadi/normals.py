"""
Surface normals from disparity gradients.

Each pixel's normal is the cross product of the two tangent vectors
(1, 0, G_i) and (0, 1, G_j) built from central differences of the disparity,
normalised to unit length:

    n = (-G_i, -G_j, 1) / (sqrt(1 + G_i^2 + G_j^2) + eps)

i is the row axis. Borders use replicate padding. Normals stay in disparity
space; no camera intrinsics are involved.
"""

from typing import Optional, Tuple, Union

import numpy as np

from .autodiff import Graph, Tensor, current_graph
from .autodiff import functional as F
from .constants import CENTRAL_DIFFERENCE, EPS
from .errors import DimensionError
from .types import DisparityImage, NormalMap

ArrayLike = Union[DisparityImage, np.ndarray]


def _values(d: ArrayLike) -> np.ndarray:
    if isinstance(d, DisparityImage):
        values = d.filled(0.0)
    else:
        values = np.asarray(d, dtype=np.float64)
    if values.ndim != 2:
        raise DimensionError(f"disparity must be 2-D, got shape {values.shape}")
    if values.shape[0] < 3 or values.shape[1] < 3:
        raise DimensionError(f"normals need at least 3x3 pixels, got {values.shape}")
    return values


def gradient_kernels() -> Tuple[np.ndarray, np.ndarray]:
    """[1, 1, 3, 3] kernels for the row (i) and column (j) central differences."""
    ki = np.zeros((1, 1, 3, 3))
    kj = np.zeros((1, 1, 3, 3))
    ki[0, 0, :, 1] = CENTRAL_DIFFERENCE
    kj[0, 0, 1, :] = CENTRAL_DIFFERENCE
    return ki, kj


def disparity_gradients(d: ArrayLike) -> Tuple[np.ndarray, np.ndarray]:
    """Central-difference gradients (G_i, G_j), replicate-padded at the border."""
    p = np.pad(_values(d), 1, mode="edge")
    gi = (p[2:, 1:-1] - p[:-2, 1:-1]) / 2.0
    gj = (p[1:-1, 2:] - p[1:-1, :-2]) / 2.0
    return gi, gj


def normals_from_disparity(d: ArrayLike) -> NormalMap:
    """Unit normal per pixel (plain-array twin of ``normals_op``)."""
    gi, gj = disparity_gradients(d)
    denom = np.sqrt(gi * gi + gj * gj + 1.0) + EPS
    return NormalMap(np.stack([-gi / denom, -gj / denom, 1.0 / denom], axis=-1))


def normals_op(d: Tensor, graph: Optional[Graph] = None) -> Tensor:
    """Differentiable normals of a [1, H, W] disparity tensor -> [3, H, W].

    Realised as two fixed-kernel convolutions followed by elementwise
    normalisation; values are identical to ``normals_from_disparity``.
    """
    if graph is not None and current_graph() is not graph:
        with graph:
            return normals_op(d)
    if d.ndim != 3 or d.shape[0] != 1:
        raise DimensionError(f"normals_op expects [1,H,W], got {d.shape}")
    if d.shape[1] < 3 or d.shape[2] < 3:
        raise DimensionError(f"normals need at least 3x3 pixels, got {d.shape[1:]}")
    ki, kj = gradient_kernels()
    gi = F.conv2d(d, ki, padding="replicate")
    gj = F.conv2d(d, kj, padding="replicate")
    radicand = F.add(F.add(F.mul(gi, gi), F.mul(gj, gj)), 1.0)
    denom = F.add(F.sqrt(radicand), EPS)
    return F.concat([F.div(F.neg(gi), denom), F.div(F.neg(gj), denom), F.div(1.0, denom)], axis=0)


def surface_features(d: Tensor, scale: float = 1.0) -> Tensor:
    """Disparity (divided by ``scale``) concatenated with its normals: [4, H, W]."""
    n = normals_op(d)
    disp = d if scale == 1.0 else F.mul(d, 1.0 / scale)
    return F.concat([disp, n], axis=0)


def normals_to_rgb(normals: NormalMap) -> np.ndarray:
    """8-bit (H, W, 3) visualisation mapping each component from [-1, 1] to [0, 255]."""
    rgb = (np.clip(normals.vectors, -1.0, 1.0) + 1.0) * 0.5 * 255.0
    return np.round(rgb).astype(np.uint8)


def plane_normal(a: float, b: float) -> np.ndarray:
    """Analytic normal of the plane d = a*i + b*j + c."""
    return np.array([-a, -b, 1.0]) / np.sqrt(1.0 + a * a + b * b)
