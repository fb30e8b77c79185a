"""
Alternating WGAN-GP training of the toy inpainting model.

Each generator step is preceded by ``n_critic`` critic steps, every one on a
fresh batch. A session writes three files into ``out_dir``:

    <session>_train_log.csv     one row per critic or generator update
    <session>_steps.jsonl       one JSON object per generator step
    <session>_summary.json      configuration, final losses, artifact paths
"""

import json
import logging
from dataclasses import dataclass, field, replace
from datetime import datetime
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .autodiff import Adam, Graph, Tensor
from .config import EvalConfig, TrainConfig
from .constants import ABLATION_ROWS, TRAIN_LOG_COLUMNS
from .errors import TrainingDivergedError
from .losses import LossReport, critic_loss, generator_loss
from .metrics import MetricReport, evaluate_many
from .model import (
    CriticParams,
    GeneratorParams,
    critic_features,
    critic_stack,
    generate,
    inpaint,
    masked_input,
    save_model,
)
from .report import write_csv, write_reports
from .scenes import Sample, SyntheticSceneStream

logger = logging.getLogger(__name__)


@dataclass
class TrainResult:
    """Outcome of a training session."""

    generator: GeneratorParams
    critic: CriticParams
    history: List[Dict] = field(default_factory=list)
    scale: float = 1.0
    paths: Dict[str, str] = field(default_factory=dict)

    def generator_rows(self) -> List[Dict]:
        return [r for r in self.history if r["phase"] == "generator"]

    def critic_rows(self) -> List[Dict]:
        return [r for r in self.history if r["phase"] == "critic"]


class Trainer:
    """Train generator and critic on a stream of (disparity, hole) samples.

    Parameters
    ----------
    config : TrainConfig
        Run configuration (validated here).
    dataset : iterator of Sample, optional
        Defaults to a SyntheticSceneStream seeded with ``config.seed``.
    verbose : bool
        INFO logging when True, WARNING otherwise.

    Example
    -------
    >>> cfg = TrainConfig(steps=20, image_size=32, hole_size=12)
    >>> result = Trainer(cfg).run()
    >>> result.generator_rows()[-1]["g_total"]
    """

    def __init__(self, config: TrainConfig, dataset: Optional[Iterator[Sample]] = None,
                 verbose: bool = False):
        self.config = config.validate()
        self._setup_logging(verbose)

        margin = max(1, config.attention.patch // 2)
        self.dataset = dataset if dataset is not None else SyntheticSceneStream(
            config.image_size, config.hole_size, seed=config.seed, margin=margin,
        )
        self.rng = np.random.default_rng(config.seed + 7919)

        channels = 4 if config.attention.use_normals else 1
        self.generator = GeneratorParams.create(config.width, config.seed, channels, config.leaky_slope)
        self.critic = CriticParams.create(config.width, config.seed, config.surface_discrimination_on,
                                          config.leaky_slope)
        self.opt_g = Adam(self.generator.parameters(), config.lr, config.beta1, config.beta2)
        self.opt_d = Adam(self.critic.parameters(), config.lr, config.beta1, config.beta2)

        # the Vectorial Loss is still reported when switched off, with zero weight
        self.weights = config.weights if config.vectorial_loss_on else replace(config.weights, alpha=0.0)
        self.scale = config.disparity_scale
        self.history: List[Dict] = []
        self.session_id = datetime.now().strftime("%Y%m%d_%H%M%S") + f"_seed{config.seed}"

        self.logger.info(f"Trainer initialized. Session: {self.session_id}")
        self.logger.info(
            f"Ablation: VL={config.vectorial_loss_on}, SA={config.surface_attention_on}, "
            f"SD={config.surface_discrimination_on}; critic input channels {self.critic.in_channels}"
        )

    def _setup_logging(self, verbose: bool):
        level = logging.INFO if verbose else logging.WARNING
        logging.basicConfig(
            level=level,
            format='%(asctime)s [%(levelname)s] %(message)s',
            datefmt='%Y-%m-%d %H:%M:%S',
        )
        self.logger = logging.getLogger(__name__)

    # ==================== Data ====================

    def _batch(self) -> List[Tuple[np.ndarray, np.ndarray]]:
        """(ground truth, hole) arrays; invalid pixels join the hole."""
        out = []
        for _ in range(self.config.batch_size):
            sample = next(self.dataset)
            gt = sample.disparity.filled(0.0)
            hole = sample.mask.values | ~sample.disparity.valid
            out.append((gt, hole))
        if self.scale is None:
            top = max(float(gt.max()) for gt, _ in out)
            self.scale = top if top > 0 else 1.0
            self.logger.info(f"Disparity scale estimated from first batch: {self.scale:.3f}")
        return out

    def _critic_fn(self):
        return lambda features: critic_stack(self.critic, features)

    def _features(self, d: Tensor) -> Tensor:
        return critic_features(d, self.scale, self.config.surface_discrimination_on)

    # ==================== Updates ====================

    def critic_step(self, step: int, critic_iter: int) -> LossReport:
        batch = self._batch()
        real, fake = [], []
        for gt, hole in batch:
            _, final = generate(self.generator, masked_input(gt, hole), self.config, self.scale)
            real.append(self._features(Tensor(gt[None])))
            fake.append(self._features(final.detach()))

        report = LossReport()
        self.opt_d.zero_grad()
        with Graph() as graph:
            loss = critic_loss(self._critic_fn(), real, fake, self.config.weights, rng=self.rng,
                               channels=self.critic.in_channels, report=report)
        self._check(report, step, "critic")
        graph.backward(loss, inputs=self.critic.parameters())
        self.opt_d.step()
        self._record(step, "critic", critic_iter, report)
        return report

    def generator_step(self, step: int) -> LossReport:
        batch = self._batch()
        self.opt_g.zero_grad()
        with Graph() as graph:
            coarse, final, truth, regions = [], [], [], []
            for gt, hole in batch:
                c, f = generate(self.generator, masked_input(gt, hole), self.config, self.scale)
                coarse.append(c)
                final.append(f)
                truth.append(Tensor(gt[None]))
                regions.append(hole if self.config.vectorial_region == "hole" else None)
            loss, report = generator_loss(
                self._critic_fn(), final, truth, self.weights,
                coarse=coarse if self.config.surface_attention_on else None,
                features=self._features,
                vectorial_region=regions,
            )
        self._check(report, step, "generator")
        graph.backward(loss, inputs=self.generator.parameters())
        self.opt_g.step()
        self._record(step, "generator", None, report)
        return report

    def _check(self, report: LossReport, step: int, phase: str):
        if not report.is_finite():
            self.logger.error(f"Non-finite {phase} loss at step {step}: {report.to_dict()}")
            raise TrainingDivergedError(step, phase, report.to_dict())

    def _record(self, step: int, phase: str, critic_iter: Optional[int], report: LossReport):
        values = report.to_dict()
        if phase == "critic":
            keep = ("d_total", "d_wasserstein_estimate", "d_gp")
        else:
            keep = ("g_total", "g_adv", "g_l1", "g_vec")
        row: Dict = {"step": step, "phase": phase, "critic_iter": "" if critic_iter is None else critic_iter}
        for col in TRAIN_LOG_COLUMNS[3:]:
            row[col] = values[col] if col in keep else ""
        self.history.append(row)

    # ==================== Session ====================

    def run(self, save: bool = True) -> TrainResult:
        """Train for ``config.steps`` generator steps.

        Parameters
        ----------
        save : bool
            Write the CSV log, JSONL log, summary and checkpoint to ``out_dir``.
        """
        cfg = self.config
        out_dir = Path(cfg.out_dir)
        paths: Dict[str, str] = {}
        if save:
            out_dir.mkdir(parents=True, exist_ok=True)
            paths = {
                "train_log": str(out_dir / f"{self.session_id}_train_log.csv"),
                "steps": str(out_dir / f"{self.session_id}_steps.jsonl"),
                "summary": str(out_dir / f"{self.session_id}_summary.json"),
                "checkpoint": str(out_dir / f"{self.session_id}_model.ckpt"),
            }

        self.logger.info("=" * 60)
        self.logger.info(f"Training for {cfg.steps} steps, n_critic={cfg.weights.n_critic}, batch={cfg.batch_size}")
        self.logger.info("=" * 60)

        last_d: Optional[LossReport] = None
        last_g: Optional[LossReport] = None
        for step in range(1, cfg.steps + 1):
            for i in range(cfg.weights.n_critic):
                last_d = self.critic_step(step, i)
            last_g = self.generator_step(step)
            if save:
                self._log_step(paths["steps"], step, last_g, last_d)
            if step % cfg.log_every == 0 or step == cfg.steps:
                self.logger.info(
                    f"step {step}/{cfg.steps}: g_total={last_g.g_total:.4f} g_l1={last_g.g_l1:.4f} "
                    f"g_vec={last_g.g_vec:.4f} d_total={last_d.d_total:.4f} W~{last_d.d_wasserstein_estimate:.4f}"
                )

        if self.scale is None:
            self.scale = 1.0
        result = TrainResult(self.generator, self.critic, list(self.history), self.scale, paths)
        if save:
            self.write_csv(paths["train_log"])
            save_model(paths["checkpoint"], self.generator, self.critic, cfg, self.scale,
                       {"session_id": self.session_id, "steps": cfg.steps})
            self._save_session_summary(paths, last_g, last_d)
        self.logger.info("Training complete.")
        return result

    def write_csv(self, path) -> Path:
        """Training log with the run configuration as leading comment lines."""
        body = [[str(row[c]) for c in TRAIN_LOG_COLUMNS] for row in self.history]
        path = write_csv(path, TRAIN_LOG_COLUMNS, body, header=self.config.to_dict())
        self.logger.info(f"Training log saved: {path}")
        return path

    def _log_step(self, log_file: str, step: int, g: LossReport, d: Optional[LossReport]):
        entry = {
            "session_id": self.session_id,
            "step": step,
            "timestamp": datetime.now().isoformat(),
            "generator": g.to_dict(),
            "critic": d.to_dict() if d is not None else None,
            "scale": self.scale,
        }
        with open(log_file, "a") as f:
            f.write(json.dumps(entry) + "\n")

    def _save_session_summary(self, paths: Dict[str, str], g: Optional[LossReport], d: Optional[LossReport]):
        summary = {
            "session_id": self.session_id,
            "timestamp": datetime.now().isoformat(),
            "config": self.config.to_dict(),
            "disparity_scale": self.scale,
            "final": {
                "generator": g.to_dict() if g else None,
                "critic": d.to_dict() if d else None,
            },
            "artifacts": paths,
        }
        with open(paths["summary"], "w") as f:
            json.dump(summary, f, indent=2)
        self.logger.info(f"Summary saved: {paths['summary']}")

    # ==================== Evaluation ====================

    def evaluate(self, samples: Sequence[Sample], eval_cfg: Optional[EvalConfig] = None
                 ) -> Tuple[List[MetricReport], MetricReport]:
        """Inpaint each sample and score it on its hole."""
        scale = self.scale if self.scale is not None else 1.0
        pairs = [
            (s.disparity, inpaint(self.generator, s.disparity, s.mask, self.config, scale), s.mask)
            for s in samples
        ]
        return evaluate_many(pairs, eval_cfg)


def held_out_samples(cfg: TrainConfig, n: int, seed: int) -> List[Sample]:
    """Evaluation scenes drawn from a stream that training never sees."""
    margin = max(1, cfg.attention.patch // 2)
    return SyntheticSceneStream(cfg.image_size, cfg.hole_size, seed=seed, margin=margin).batch(n)


def run_ablation(base: TrainConfig, seeds: Sequence[int] = (0, 1, 2), eval_samples: int = 8,
                 eval_cfg: Optional[EvalConfig] = None, out_dir=None,
                 verbose: bool = False) -> List[Tuple[str, MetricReport]]:
    """Train and evaluate the four ablation rows (CA, CA + VL, SA + VL, Proposal).

    Every row is trained once per seed and evaluated on the same held-out
    scenes; the row's report is the mean over seeds and scenes. When
    ``out_dir`` is given, pixel-error and distribution-distance tables are
    written there.
    """
    eval_cfg = (eval_cfg or EvalConfig()).validate()
    rows: List[Tuple[str, MetricReport]] = []
    for name, vl, sa, sd in ABLATION_ROWS:
        reports: List[MetricReport] = []
        for seed in seeds:
            cfg = replace(base, seed=seed, vectorial_loss_on=vl, surface_attention_on=sa,
                          surface_discrimination_on=sd)
            trainer = Trainer(cfg, verbose=verbose)
            trainer.run(save=False)
            per_pair, _ = trainer.evaluate(held_out_samples(cfg, eval_samples, 10_000 + seed), eval_cfg)
            reports.extend(per_pair)
        mean = MetricReport.mean(reports)
        logger.info(f"{name}: MSE={mean.mse:.4f} VE={mean.ve:.4f}")
        rows.append((name, mean))

    if out_dir is not None:
        header = {
            "train": base.to_dict(),
            "eval": eval_cfg.to_dict(),
            "seeds": ",".join(str(s) for s in seeds),
            "eval_samples": eval_samples,
        }
        write_reports(out_dir, rows, header)
    return rows
