"""
Image containers: disparity maps, surface-normal maps and hole masks.
"""

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .errors import DimensionError, DomainError


@dataclass
class DisparityImage:
    """H x W disparity values (pixels) with a per-pixel validity flag.

    Attributes
    ----------
    values : np.ndarray
        float64 (H, W); entries of invalid pixels are ignored.
    valid : np.ndarray
        bool (H, W); False marks unknown / shadowed pixels.
    """
    values: np.ndarray
    valid: Optional[np.ndarray] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DimensionError(f"disparity must be 2-D, got shape {self.values.shape}")
        if self.valid is None:
            self.valid = np.ones(self.values.shape, dtype=bool)
        else:
            self.valid = np.asarray(self.valid, dtype=bool)
            if self.valid.shape != self.values.shape:
                raise DimensionError(f"validity mask {self.valid.shape} != image {self.values.shape}")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    def check(self):
        """Raise if a valid pixel is negative or non-finite."""
        v = self.values[self.valid]
        if not np.all(np.isfinite(v)):
            raise DomainError("disparity has non-finite valid pixels")
        if np.any(v < 0):
            raise DomainError("disparity has negative valid pixels")
        return self

    def filled(self, fill: float = 0.0) -> np.ndarray:
        """Values with invalid pixels replaced by ``fill``."""
        return np.where(self.valid, self.values, fill)

    def copy(self) -> "DisparityImage":
        return DisparityImage(self.values.copy(), self.valid.copy())


@dataclass
class NormalMap:
    """H x W x 3 unit surface normals (n_x, n_y, n_z)."""
    vectors: np.ndarray

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 3 or self.vectors.shape[2] != 3:
            raise DimensionError(f"normal map must be (H, W, 3), got {self.vectors.shape}")

    @property
    def height(self) -> int:
        return self.vectors.shape[0]

    @property
    def width(self) -> int:
        return self.vectors.shape[1]

    def channels_first(self) -> np.ndarray:
        """(3, H, W) view used by the tensor ops."""
        return np.transpose(self.vectors, (2, 0, 1))


@dataclass
class HoleMask:
    """Binary H x W mask: True marks the hole (region to reconstruct)."""
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values).astype(bool)
        if self.values.ndim != 2:
            raise DimensionError(f"hole mask must be 2-D, got shape {self.values.shape}")

    @classmethod
    def empty(cls, shape) -> "HoleMask":
        return cls(np.zeros(shape, dtype=bool))

    @classmethod
    def full(cls, shape) -> "HoleMask":
        return cls(np.ones(shape, dtype=bool))

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    @property
    def area(self) -> int:
        return int(self.values.sum())

    def is_empty(self) -> bool:
        return not self.values.any()

    def as_float(self) -> np.ndarray:
        return self.values.astype(np.float64)

    def bbox(self) -> Optional[Tuple[int, int, int, int]]:
        """(top, left, bottom, right) with exclusive bottom/right, or None."""
        if self.is_empty():
            return None
        rows = np.flatnonzero(self.values.any(axis=1))
        cols = np.flatnonzero(self.values.any(axis=0))
        return int(rows[0]), int(cols[0]), int(rows[-1]) + 1, int(cols[-1]) + 1

    def union(self, other: "HoleMask") -> "HoleMask":
        return HoleMask(self.values | other.values)
