"""
Training objectives.

Generator (per stage, summed over the coarse and final outputs):

    g = beta * adv + phi * L1(X, Y) + alpha * V

where V is the Vectorial Loss, the L1 distance between the surface normals of
the generated and the ground-truth disparity. The critic minimises the
WGAN-GP objective

    d = mean(critic(fake)) - mean(critic(real)) + lambda_gp * GP

with GP = (||grad critic(x_hat)|| - 1)^2 on random interpolates x_hat.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .autodiff import Graph, Tensor, current_graph
from .autodiff import functional as F
from .config import LossWeights
from .constants import EPS
from .errors import ContractError, DimensionError, DomainError
from .normals import normals_op
from .types import HoleMask

logger = logging.getLogger(__name__)

Critic = Callable[[Tensor], Tensor]
Batch = Union[Tensor, Sequence[Tensor]]
Region = Union[None, HoleMask, np.ndarray]


@dataclass
class LossReport:
    """Scalar loss terms of one update, as written to the training log."""

    g_total: float = 0.0
    g_adv: float = 0.0
    g_l1: float = 0.0
    g_vec: float = 0.0
    d_total: float = 0.0
    d_wasserstein_estimate: float = 0.0
    d_gp: float = 0.0

    def to_dict(self) -> Dict[str, float]:
        return {
            "g_total": self.g_total,
            "g_adv": self.g_adv,
            "g_l1": self.g_l1,
            "g_vec": self.g_vec,
            "d_total": self.d_total,
            "d_wasserstein_estimate": self.d_wasserstein_estimate,
            "d_gp": self.d_gp,
        }

    def is_finite(self) -> bool:
        return all(np.isfinite(v) for v in self.to_dict().values())


def _as_list(batch: Batch) -> List[Tensor]:
    return [batch] if isinstance(batch, Tensor) else list(batch)


def _region_array(region: Region) -> Optional[np.ndarray]:
    if region is None:
        return None
    if isinstance(region, HoleMask):
        return region.values
    return np.asarray(region, dtype=bool)


def l1_loss(x: Tensor, y: Tensor) -> Tensor:
    """Mean absolute difference over all elements."""
    return F.mean(F.abs(F.sub(x, y)))


def vectorial_loss(xn: Tensor, yn: Tensor, region: Region = None) -> Tensor:
    """Mean over pixels of the component-wise L1 distance of two normal maps.

    Parameters
    ----------
    xn, yn : Tensor
        [3, H, W] normal maps.
    region : HoleMask or bool array, optional
        Restrict the mean to these pixels (default: every pixel).
    """
    if xn.ndim != 3 or xn.shape[0] != 3:
        raise DimensionError(f"normal map must be [3,H,W], got {xn.shape}")
    if xn.shape != yn.shape:
        raise DimensionError(f"normal maps differ in shape: {xn.shape} vs {yn.shape}")
    diff = F.abs(F.sub(xn, yn))
    mask = _region_array(region)
    if mask is None:
        return F.mul(F.sum(diff), 1.0 / (xn.shape[1] * xn.shape[2]))
    if mask.shape != xn.shape[1:]:
        raise DimensionError(f"region {mask.shape} does not match normal map {xn.shape[1:]}")
    count = int(mask.sum())
    if count == 0:
        raise DomainError("vectorial_loss over an empty region")
    weight = Tensor.wrap(np.broadcast_to(mask, xn.shape).astype(np.float64))
    return F.mul(F.sum(F.mul(diff, weight)), 1.0 / count)


def disparity_features(d: Tensor) -> Tensor:
    """Default critic features: disparity concatenated with its normals."""
    return F.concat([d, normals_op(d)], axis=0)


def gradient_penalty(critic: Critic, real: Tensor, fake: Tensor, u: float,
                     graph: Optional[Graph] = None) -> Tensor:
    """(||grad_x critic(x_hat)||_2 - 1)^2 at x_hat = u * real + (1 - u) * fake.

    The inner gradient is produced by a recorded reverse pass, so the penalty
    stays differentiable with respect to the critic's parameters.
    """
    graph = graph or current_graph()
    if graph is None:
        raise ContractError("gradient_penalty needs an active graph")
    if real.shape != fake.shape:
        raise DimensionError(f"real {real.shape} and fake {fake.shape} differ")
    x_hat = Tensor(u * real.data + (1.0 - u) * fake.data, requires_grad=True)
    with graph:
        out = critic(x_hat)
        if out.size != 1:
            raise ContractError(f"critic must return a scalar, got shape {out.shape}")
        if out.requires_grad:
            (grad,) = graph.gradient(out, [x_hat], create_graph=True)
        else:
            grad = Tensor(np.zeros(x_hat.shape))
        # EPS squared under the root: a zero gradient has norm EPS
        norm = F.sqrt(F.sum(F.square(grad)), eps=EPS * EPS)
        return F.square(F.sub(norm, 1.0))


def _check_channels(batch: List[Tensor], channels: int):
    for t in batch:
        if t.ndim != 3 or t.shape[0] != channels:
            raise ContractError(f"critic input must be [{channels},H,W], got {t.shape}")


def critic_loss(critic: Critic, real_in: Batch, fake_in: Batch, weights: LossWeights,
                u: Union[None, float, Sequence[float]] = None,
                rng: Optional[np.random.Generator] = None,
                channels: int = 4,
                report: Optional[LossReport] = None) -> Tensor:
    """WGAN-GP critic objective over a batch of critic features.

    Parameters
    ----------
    critic : callable
        Features [C,H,W] -> scalar Tensor.
    real_in, fake_in : Tensor or sequence of Tensor
        Critic features of ground-truth and generated samples.
    u : float or sequence of float, optional
        Interpolation weight per sample; drawn uniformly from ``rng`` when absent.
    channels : int
        Expected feature channels (4 with surface discrimination).
    report : LossReport, optional
        Receives d_total, d_wasserstein_estimate and d_gp.
    """
    real, fake = _as_list(real_in), _as_list(fake_in)
    if len(real) != len(fake):
        raise DimensionError(f"batch sizes differ: {len(real)} real vs {len(fake)} fake")
    _check_channels(real, channels)
    _check_channels(fake, channels)
    if u is None:
        rng = rng or np.random.default_rng()
        u = rng.uniform(0.0, 1.0, size=len(real))
    us = np.broadcast_to(np.asarray(u, dtype=np.float64), (len(real),))

    graph = current_graph()
    own = graph is None
    if own:
        graph = Graph()
    with graph:
        n = len(real)
        score_real = F.mul(_total([critic(t) for t in real]), 1.0 / n)
        score_fake = F.mul(_total([critic(t) for t in fake]), 1.0 / n)
        gp = F.mul(_total([gradient_penalty(critic, r, f, float(ui), graph)
                           for r, f, ui in zip(real, fake, us)]), 1.0 / n)
        total = F.add(F.sub(score_fake, score_real), F.mul(gp, weights.lambda_gp))
    if report is not None:
        report.d_total = total.item()
        report.d_wasserstein_estimate = score_real.item() - score_fake.item()
        report.d_gp = gp.item()
    return total


def _total(terms: List[Tensor]) -> Tensor:
    acc = terms[0]
    for t in terms[1:]:
        acc = F.add(acc, t)
    return F.reshape(acc, ())


def generator_loss(critic: Critic, y: Batch, x: Batch, weights: LossWeights,
                   coarse: Optional[Batch] = None,
                   features: Callable[[Tensor], Tensor] = disparity_features,
                   vectorial_region: Union[Region, Sequence[Region]] = None,
                   ) -> Tuple[Tensor, LossReport]:
    """Composite generator objective.

    Parameters
    ----------
    critic : callable
        Features -> scalar Tensor.
    y : Tensor or sequence of Tensor
        Final generated disparity, [1,H,W] per sample.
    x : Tensor or sequence of Tensor
        Ground-truth disparity.
    weights : LossWeights
        beta, phi and alpha are used.
    coarse : Tensor or sequence of Tensor, optional
        First-stage output; when given its loss is added to the final one.
    features : callable
        Disparity -> critic features.
    vectorial_region : mask or per-sample masks, optional
        Restrict the Vectorial Loss to a region.

    Returns
    -------
    (Tensor, LossReport)
        Scalar total (mean over the batch) and its terms.
    """
    finals, truths = _as_list(y), _as_list(x)
    if len(finals) != len(truths):
        raise DimensionError(f"batch sizes differ: {len(finals)} generated vs {len(truths)} truth")
    stages = [finals] if coarse is None else [_as_list(coarse), finals]
    if isinstance(vectorial_region, (list, tuple)):
        regions = list(vectorial_region)
    else:
        regions = [vectorial_region] * len(truths)

    adv_terms, l1_terms, vec_terms = [], [], []
    for i, truth in enumerate(truths):
        truth_normals = normals_op(truth)
        for stage in stages:
            out = stage[i]
            if out.shape != truth.shape:
                raise DimensionError(f"generated {out.shape} and truth {truth.shape} differ")
            adv_terms.append(F.neg(F.reshape(critic(features(out)), ())))
            l1_terms.append(l1_loss(out, truth))
            vec_terms.append(vectorial_loss(normals_op(out), truth_normals, regions[i]))

    n = len(truths)
    g_adv = F.mul(_total(adv_terms), 1.0 / n)
    g_l1 = F.mul(_total(l1_terms), 1.0 / n)
    g_vec = F.mul(_total(vec_terms), 1.0 / n)
    total = F.add(F.add(F.mul(g_adv, weights.beta), F.mul(g_l1, weights.phi)),
                  F.mul(g_vec, weights.alpha))
    report = LossReport(
        g_total=total.item(),
        g_adv=g_adv.item(),
        g_l1=g_l1.item(),
        g_vec=g_vec.item(),
    )
    return total, report
