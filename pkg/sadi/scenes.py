"""
Synthetic piecewise-planar disparity scenes, hole masks and dataset streams.

A scene is a ground plane plus fronto-parallel boxes and slanted walls. Each
surface is a plane d = a*i + b*j + c over its rectangle; at every pixel the
nearest surface (largest disparity) wins. Planes have spatially constant
normals, so every region carries an exact ground-truth normal.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, List, Optional, Tuple, Union

import numpy as np

from .errors import SceneSpecError
from .normals import plane_normal
from .types import DisparityImage, HoleMask, NormalMap

logger = logging.getLogger(__name__)

Size = Union[int, Tuple[int, int]]


def _hw(size: Size) -> Tuple[int, int]:
    if isinstance(size, int):
        return size, size
    return int(size[0]), int(size[1])


@dataclass
class Box:
    """Fronto-parallel rectangle of constant disparity."""
    top: int
    left: int
    height: int
    width: int
    disparity: float


@dataclass
class Wall:
    """Rectangle whose disparity is linear in the column: d = intercept + slope * j."""
    top: int
    left: int
    height: int
    width: int
    intercept: float
    slope: float


@dataclass
class SceneSpec:
    """Parameters of one synthetic scene.

    Attributes
    ----------
    height, width : int
        Image size.
    ground_slope : float
        Ground-plane disparity change per row.
    ground_intercept : float
        Ground-plane disparity at pixel (0, 0).
    ground_slope_j : float
        Ground-plane disparity change per column.
    boxes, walls : list
        Occluders drawn over the ground, nearest wins.
    sigma : float
        Std. dev. of additive Gaussian noise (0 for oracle scenes).
    seed : int
        Noise seed.
    """

    height: int = 64
    width: int = 64
    ground_slope: float = 0.5
    ground_intercept: float = 10.0
    ground_slope_j: float = 0.0
    boxes: List[Box] = field(default_factory=list)
    walls: List[Wall] = field(default_factory=list)
    sigma: float = 0.0
    seed: int = 0

    def validate(self):
        if self.height < 3 or self.width < 3:
            raise SceneSpecError(f"scene must be at least 3x3, got {self.height}x{self.width}")
        if self.sigma < 0:
            raise SceneSpecError(f"sigma must be >= 0, got {self.sigma}")
        for r in list(self.boxes) + list(self.walls):
            if r.height < 1 or r.width < 1:
                raise SceneSpecError(f"empty rectangle {r}")
        return self

    def surfaces(self) -> List[Tuple[float, float, float, Optional[Tuple[int, int, int, int]]]]:
        """(a, b, c, rectangle) per surface; label = list position, the ground has no rectangle."""
        out: List[Tuple[float, float, float, Optional[Tuple[int, int, int, int]]]] = [
            (self.ground_slope, self.ground_slope_j, self.ground_intercept, None)
        ]
        for bx in self.boxes:
            out.append((0.0, 0.0, bx.disparity, (bx.top, bx.left, bx.height, bx.width)))
        for wl in self.walls:
            out.append((0.0, wl.slope, wl.intercept, (wl.top, wl.left, wl.height, wl.width)))
        return out


@dataclass
class Scene:
    """Rendered scene with analytic normals and per-pixel surface labels."""

    disparity: DisparityImage
    gt_normals: NormalMap
    labels: np.ndarray
    spec: SceneSpec

    def interior_mask(self) -> np.ndarray:
        """Pixels whose 3x3 neighbourhood lies on one surface, away from the image border."""
        lab = self.labels
        h, w = lab.shape
        inner = np.zeros((h, w), dtype=bool)
        centre = lab[1:-1, 1:-1]
        same = np.ones_like(centre, dtype=bool)
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                same &= lab[1 + di:h - 1 + di, 1 + dj:w - 1 + dj] == centre
        inner[1:-1, 1:-1] = same
        return inner


def synth_scene(spec: SceneSpec) -> Scene:
    """Compose a scene; larger disparity (nearer surface) wins at every pixel.

    Raises
    ------
    SceneSpecError
        If any composed disparity is negative.
    """
    spec.validate()
    h, w = spec.height, spec.width
    ii, jj = np.mgrid[0:h, 0:w].astype(np.float64)
    disparity = np.full((h, w), -np.inf)
    labels = np.zeros((h, w), dtype=np.int64)
    normals = np.zeros((h, w, 3))

    for label, (a, b, c, rect) in enumerate(spec.surfaces()):
        plane = a * ii + b * jj + c
        region = np.zeros((h, w), dtype=bool)
        if rect is None:
            region[:] = True
        else:
            top, left, rh, rw = rect
            region[max(top, 0):max(top + rh, 0), max(left, 0):max(left + rw, 0)] = True
        wins = region & (plane > disparity)
        disparity[wins] = plane[wins]
        labels[wins] = label
        normals[wins] = plane_normal(a, b)

    if np.any(disparity < 0):
        raise SceneSpecError(f"scene has negative disparity (min {disparity.min():.3f})")
    if spec.sigma > 0:
        rng = np.random.default_rng(spec.seed)
        disparity = np.clip(disparity + rng.normal(0.0, spec.sigma, size=(h, w)), 0.0, None)
    return Scene(DisparityImage(disparity), NormalMap(normals), labels, spec)


def random_scene_spec(rng: np.random.Generator, size: Size = 64, sigma: float = 0.0,
                      max_boxes: int = 2, max_walls: int = 1) -> SceneSpec:
    """Draw a plausible street-like scene: sloped ground, a few boxes and walls."""
    h, w = _hw(size)
    slope = float(rng.uniform(0.1, 0.5))
    slope_j = float(rng.uniform(-0.1, 0.1))
    intercept = float(rng.uniform(5.0, 15.0)) + abs(slope_j) * w
    ground_max = slope * (h - 1) + intercept + abs(slope_j) * (w - 1)

    boxes = []
    for _ in range(int(rng.integers(0, max_boxes + 1))):
        bh, bw = int(rng.integers(h // 8, h // 2)), int(rng.integers(w // 8, w // 2))
        boxes.append(Box(
            top=int(rng.integers(0, h - bh)), left=int(rng.integers(0, w - bw)),
            height=bh, width=bw,
            disparity=float(rng.uniform(intercept, ground_max + 10.0)),
        ))
    walls = []
    for _ in range(int(rng.integers(0, max_walls + 1))):
        wh, ww = int(rng.integers(h // 4, h // 2 + 1)), int(rng.integers(w // 4, w // 2 + 1))
        left = int(rng.integers(0, w - ww))
        wslope = float(rng.uniform(-0.4, 0.4))
        base = float(rng.uniform(intercept, ground_max))
        # lowest disparity over the wall equals base
        lowest = min(wslope * left, wslope * (left + ww - 1))
        walls.append(Wall(
            top=int(rng.integers(0, h - wh)), left=left, height=wh, width=ww,
            intercept=base - lowest, slope=wslope,
        ))
    return SceneSpec(
        height=h, width=w, ground_slope=slope, ground_intercept=intercept,
        ground_slope_j=slope_j, boxes=boxes, walls=walls, sigma=sigma,
        seed=int(rng.integers(0, 2**31 - 1)),
    )


def synth_mask(size: Size, hole: int, seed: Union[int, np.random.Generator, None] = None,
               margin: int = 1) -> HoleMask:
    """Square hole of side ``hole`` at a uniformly random position.

    The hole keeps at least ``margin`` pixels of background on every side.
    """
    h, w = _hw(size)
    if hole < 1:
        raise SceneSpecError(f"hole must be positive, got {hole}")
    if hole + 2 * margin > min(h, w):
        raise SceneSpecError(f"hole {hole} with margin {margin} does not fit in {h}x{w}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    top = int(rng.integers(margin, h - hole - margin + 1))
    left = int(rng.integers(margin, w - hole - margin + 1))
    values = np.zeros((h, w), dtype=bool)
    values[top:top + hole, left:left + hole] = True
    return HoleMask(values)


@dataclass
class Sample:
    """One training / evaluation example."""
    disparity: DisparityImage
    mask: HoleMask
    normals: Optional[NormalMap] = None


class SyntheticSceneStream:
    """Endless seeded stream of random scenes with random square holes.

    Parameters
    ----------
    size : int
        Image side.
    hole : int
        Hole side.
    seed : int
        Stream seed; two streams with the same arguments yield identical samples.
    sigma : float
        Scene noise.
    margin : int
        Background kept around the hole.
    """

    def __init__(self, size: int = 64, hole: int = 24, seed: int = 0,
                 sigma: float = 0.0, margin: int = 1):
        self.size = size
        self.hole = hole
        self.sigma = sigma
        self.margin = margin
        self.rng = np.random.default_rng(seed)

    def __iter__(self) -> Iterator[Sample]:
        return self

    def __next__(self) -> Sample:
        spec = random_scene_spec(self.rng, self.size, self.sigma)
        scene = synth_scene(spec)
        mask = synth_mask(self.size, self.hole, self.rng, self.margin)
        return Sample(scene.disparity, mask, scene.gt_normals)

    def batch(self, n: int) -> List[Sample]:
        return [next(self) for _ in range(n)]


class ManifestDataset:
    """Disparity files listed in a manifest, cycled in file order.

    Entries without a mask path get a seeded random square hole.
    """

    def __init__(self, manifest, hole: int = 24, seed: int = 0, margin: int = 1):
        from .imageio import read_manifest

        self.manifest = Path(manifest)
        self.entries = read_manifest(self.manifest)
        if not self.entries:
            raise SceneSpecError(f"manifest {manifest} lists no images")
        self.hole = hole
        self.margin = margin
        self.rng = np.random.default_rng(seed)
        self.position = 0
        logger.info(f"Loaded manifest {manifest} with {len(self.entries)} entries")

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, index: int) -> Sample:
        from .imageio import read_disparity, read_mask

        disp_path, mask_path = self.entries[index]
        disparity = read_disparity(disp_path)
        if mask_path is not None:
            mask = read_mask(mask_path)
        else:
            mask = synth_mask(disparity.shape, self.hole, self.rng, self.margin)
        return Sample(disparity, mask)

    def __iter__(self) -> Iterator[Sample]:
        return self

    def __next__(self) -> Sample:
        sample = self[self.position % len(self.entries)]
        self.position += 1
        return sample

    def batch(self, n: int) -> List[Sample]:
        return [next(self) for _ in range(n)]
