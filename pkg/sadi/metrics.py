"""
Evaluation metrics for inpainted disparity.

Pixel-wise: mean squared error and Vectorial Error (mean L1 distance of
surface normals). Distribution-wise: Jensen-Shannon and Kullback-Leibler
divergence, 1-D Wasserstein distance, histogram intersection and histogram
correlation, each computed on depth values and on normal components.

Requires: numpy, scipy
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import rel_entr
from scipy.stats import pearsonr

from .config import EvalConfig
from .constants import DISTANCE_METRICS, HIST_SMOOTHING, SURFACE_RANGE
from .errors import ContractError, DimensionError, DomainError
from .normals import normals_from_disparity
from .types import DisparityImage, HoleMask, NormalMap

logger = logging.getLogger(__name__)


@dataclass
class Histogram:
    """Uniformly binned empirical distribution.

    Attributes
    ----------
    edges : np.ndarray
        B + 1 strictly ascending bin edges.
    mass : np.ndarray
        B non-negative bin masses; they sum to 1 unless ``count`` is 0.
    count : int
        Number of samples binned.
    """

    edges: np.ndarray
    mass: np.ndarray
    count: int

    @property
    def bins(self) -> int:
        return self.mass.size

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)


def _region(region: Optional[HoleMask], shape) -> np.ndarray:
    if region is None:
        return np.ones(shape, dtype=bool)
    if region.shape != tuple(shape):
        raise DimensionError(f"region {region.shape} does not match image {tuple(shape)}")
    return region.values


def _selection(x: DisparityImage, y: DisparityImage, region: Optional[HoleMask]) -> np.ndarray:
    if x.shape != y.shape:
        raise DimensionError(f"images differ in shape: {x.shape} vs {y.shape}")
    sel = _region(region, x.shape) & x.valid & y.valid
    if not sel.any():
        raise DomainError("evaluation region is empty")
    return sel


def mse(x: DisparityImage, y: DisparityImage, region: Optional[HoleMask] = None) -> float:
    """Mean of (x - y)^2 over region pixels valid in both images."""
    sel = _selection(x, y, region)
    diff = x.values[sel] - y.values[sel]
    return float(np.mean(diff * diff))


def vectorial_error(xn: NormalMap, yn: NormalMap, region: Optional[HoleMask] = None) -> float:
    """Mean over region pixels of the summed absolute component differences."""
    if xn.vectors.shape != yn.vectors.shape:
        raise DimensionError(f"normal maps differ in shape: {xn.vectors.shape} vs {yn.vectors.shape}")
    sel = _region(region, xn.vectors.shape[:2])
    if not sel.any():
        raise DomainError("evaluation region is empty")
    return float(np.mean(np.abs(xn.vectors[sel] - yn.vectors[sel]).sum(axis=-1)))


def squared_error_map(gt: DisparityImage, gen: DisparityImage,
                      region: Optional[HoleMask] = None) -> np.ndarray:
    """(H, W) per-pixel squared error, zero outside the region."""
    if gt.shape != gen.shape:
        raise DimensionError(f"images differ in shape: {gt.shape} vs {gen.shape}")
    sel = _region(region, gt.shape) & gt.valid & gen.valid
    diff = np.where(sel, gt.values - gen.values, 0.0)
    return diff * diff


def histogram(values, bins: int, value_range: Tuple[float, float]) -> Histogram:
    """Uniform histogram; samples outside the range land in the end bins."""
    lo, hi = float(value_range[0]), float(value_range[1])
    if not lo < hi:
        raise ValueError(f"histogram range must be ascending, got ({lo}, {hi})")
    if bins < 1:
        raise ValueError(f"bins must be positive, got {bins}")
    values = np.asarray(values, dtype=np.float64).ravel()
    counts, edges = np.histogram(np.clip(values, lo, hi), bins=bins, range=(lo, hi))
    if values.size == 0:
        logger.warning("histogram of an empty sample set; all mass is zero")
        return Histogram(edges, np.zeros(bins), 0)
    return Histogram(edges, counts / values.size, int(values.size))


def _check_edges(p: Histogram, q: Histogram):
    if p.edges.shape != q.edges.shape or not np.array_equal(p.edges, q.edges):
        raise ContractError("histograms have different bin edges")


def _smoothed(mass: np.ndarray) -> np.ndarray:
    m = mass + HIST_SMOOTHING
    return m / m.sum()


def _log_scale(base: str) -> float:
    if base == "e":
        return 1.0
    if base == "2":
        return math.log(2.0)
    raise ValueError(f"log base must be 'e' or '2', got {base}")


def kl_divergence(p: Histogram, q: Histogram, base: str = "e") -> float:
    """KL(p || q) after adding the smoothing constant to every bin."""
    _check_edges(p, q)
    return float(np.sum(rel_entr(_smoothed(p.mass), _smoothed(q.mass)))) / _log_scale(base)


def js_divergence(p: Histogram, q: Histogram, base: str = "e") -> float:
    """Jensen-Shannon divergence; at most ln 2 (1 bit in base 2)."""
    _check_edges(p, q)
    m = Histogram(p.edges, 0.5 * (p.mass + q.mass), p.count + q.count)
    return 0.5 * kl_divergence(p, m, base) + 0.5 * kl_divergence(q, m, base)


def wasserstein_1d(p: Histogram, q: Histogram) -> float:
    """W1 between two binned distributions: sum of |CDF_p - CDF_q| times bin width."""
    _check_edges(p, q)
    cdf_gap = np.abs(np.cumsum(p.mass) - np.cumsum(q.mass))
    return float(np.sum(cdf_gap * p.widths))


def hist_intersection(p: Histogram, q: Histogram) -> float:
    _check_edges(p, q)
    return float(np.sum(np.minimum(p.mass, q.mass)))


def hist_correlation(p: Histogram, q: Histogram) -> float:
    """Pearson correlation of the two mass vectors.

    Raises
    ------
    DomainError
        If either mass vector is constant across bins.
    """
    _check_edges(p, q)
    if np.ptp(p.mass) == 0 or np.ptp(q.mass) == 0:
        raise DomainError("histogram correlation undefined for a constant mass vector")
    r = pearsonr(p.mass, q.mass)[0]
    return float(np.clip(r, -1.0, 1.0))


def distances(p: Histogram, q: Histogram, base: str = "e") -> Dict[str, Optional[float]]:
    """All five distribution metrics, keyed as in Table-2 reports."""
    try:
        corr: Optional[float] = hist_correlation(p, q)
    except DomainError as e:
        logger.warning(f"{e}; reported as undefined")
        corr = None
    return {
        "jensen_shannon": js_divergence(p, q, base),
        "kullback_leibler": kl_divergence(p, q, base),
        "wasserstein": wasserstein_1d(p, q),
        "hist_intersection": hist_intersection(p, q),
        "hist_correlation": corr,
    }


@dataclass
class MetricReport:
    """Scores of one generated image against its ground truth.

    ``depth`` and ``surface`` map each distance name to its value; a value of
    None marks an undefined histogram correlation.
    """

    mse: float
    ve: float
    depth: Dict[str, Optional[float]] = field(default_factory=dict)
    surface: Dict[str, Optional[float]] = field(default_factory=dict)
    pixels: int = 0
    depth_range: Optional[Tuple[float, float]] = None

    def to_dict(self) -> Dict:
        return {
            "mse": self.mse,
            "ve": self.ve,
            "depth": dict(self.depth),
            "surface": dict(self.surface),
            "pixels": self.pixels,
            "depth_range": list(self.depth_range) if self.depth_range else None,
        }

    @classmethod
    def mean(cls, reports: Sequence["MetricReport"]) -> "MetricReport":
        """Per-entry mean; undefined entries are skipped, all-undefined stays None."""
        if not reports:
            raise DomainError("mean of no reports")

        def avg(values):
            defined = [v for v in values if v is not None]
            return float(np.mean(defined)) if defined else None

        return cls(
            mse=avg([r.mse for r in reports]),
            ve=avg([r.ve for r in reports]),
            depth={k: avg([r.depth.get(k) for r in reports]) for k in DISTANCE_METRICS},
            surface={k: avg([r.surface.get(k) for r in reports]) for k in DISTANCE_METRICS},
            pixels=int(sum(r.pixels for r in reports)),
        )


def _depth_range(values: np.ndarray) -> Tuple[float, float]:
    lo, hi = float(values.min()), float(values.max())
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    return lo, hi


def _surface_distances(gt_n: np.ndarray, gen_n: np.ndarray, cfg: EvalConfig) -> Dict[str, Optional[float]]:
    if cfg.surface_mode == "pooled":
        p = histogram(gt_n.ravel(), cfg.surface_bins, SURFACE_RANGE)
        q = histogram(gen_n.ravel(), cfg.surface_bins, SURFACE_RANGE)
        return distances(p, q, cfg.log_base)
    per = [
        distances(histogram(gt_n[:, c], cfg.surface_bins, SURFACE_RANGE),
                  histogram(gen_n[:, c], cfg.surface_bins, SURFACE_RANGE), cfg.log_base)
        for c in range(3)
    ]
    out: Dict[str, Optional[float]] = {}
    for key in DISTANCE_METRICS:
        defined = [d[key] for d in per if d[key] is not None]
        out[key] = float(np.mean(defined)) if defined else None
    return out


def evaluate_pair(gt: DisparityImage, gen: DisparityImage, region: Optional[HoleMask] = None,
                  cfg: Optional[EvalConfig] = None) -> MetricReport:
    """MSE, VE and both histogram-distance rows for one image pair.

    Parameters
    ----------
    gt, gen : DisparityImage
    region : HoleMask, optional
        Pixels to evaluate (the hole). Ignored when ``cfg.region`` is "full".
    cfg : EvalConfig, optional
    """
    cfg = (cfg or EvalConfig()).validate()
    if cfg.region == "full" or region is None:
        region = HoleMask.full(gt.shape)
    sel = _selection(gt, gen, region)
    sel_mask = HoleMask(sel)

    gt_normals = normals_from_disparity(gt)
    gen_normals = normals_from_disparity(gen)
    gt_vals, gen_vals = gt.values[sel], gen.values[sel]
    depth_range = tuple(cfg.depth_range) if cfg.depth_range else _depth_range(gt_vals)

    depth = distances(
        histogram(gt_vals, cfg.depth_bins, depth_range),
        histogram(gen_vals, cfg.depth_bins, depth_range),
        cfg.log_base,
    )
    surface = _surface_distances(gt_normals.vectors[sel], gen_normals.vectors[sel], cfg)
    return MetricReport(
        mse=mse(gt, gen, sel_mask),
        ve=vectorial_error(gt_normals, gen_normals, sel_mask),
        depth=depth,
        surface=surface,
        pixels=int(sel.sum()),
        depth_range=(float(depth_range[0]), float(depth_range[1])),
    )


def evaluate_many(pairs: Sequence[Tuple[DisparityImage, DisparityImage, Optional[HoleMask]]],
                  cfg: Optional[EvalConfig] = None) -> Tuple[List[MetricReport], MetricReport]:
    """Evaluate image pairs on a thread pool; reports keep the input order.

    Returns the per-pair reports and their mean.
    """
    cfg = (cfg or EvalConfig()).validate()
    if not pairs:
        raise DomainError("no image pairs to evaluate")
    with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
        reports = list(pool.map(lambda pair: evaluate_pair(pair[0], pair[1], pair[2], cfg), pairs))
    logger.info(f"evaluated {len(reports)} pair(s)")
    return reports, MetricReport.mean(reports)
