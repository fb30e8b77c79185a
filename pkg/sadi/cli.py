"""
Command-line interface for surface-aware disparity inpainting.
"""

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional

from . import errors
from .config import (
    AttentionConfig,
    EvalConfig,
    LossWeights,
    TrainConfig,
    load_config_file,
    parse_bool,
)
from .constants import (
    ADAM_BETA1,
    ADAM_BETA2,
    ADAM_LR,
    ATTENTION_PATCH,
    ATTENTION_PROPAGATION_K,
    ATTENTION_SOFTMAX_SCALE,
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
    PGM_DEFAULT_SCALE,
    SURFACE_BINS,
)
from .imageio import (
    read_disparity,
    read_mask,
    write_disparity,
    write_manifest,
    write_mask,
    write_normals_pfm,
    write_pfm,
    write_ppm,
)
from .metrics import evaluate_many, squared_error_map
from .model import inpaint, load_model
from .normals import normals_from_disparity, normals_to_rgb
from .report import write_reports
from .scenes import ManifestDataset, SyntheticSceneStream
from .trainer import Trainer, run_ablation
from .types import HoleMask

logger = logging.getLogger(__name__)

SADI_ERRORS = (
    errors.DimensionError,
    errors.DomainError,
    errors.ContractError,
    errors.SceneSpecError,
    errors.ImageFormatError,
    errors.TrainingDivergedError,
    errors.CheckpointError,
)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_MISSING = 3


class ConfigFileError(ValueError):
    """Bad key or value in a --config file."""


def _setup_logging(verbose: bool, quiet: bool):
    if quiet:
        level = logging.WARNING
    elif verbose:
        level = logging.DEBUG
    else:
        level = logging.INFO
    logging.basicConfig(
        level=level,
        format='%(asctime)s [%(levelname)s] %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S',
    )


def _ensure_parent(path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _echo(args: argparse.Namespace) -> Dict[str, str]:
    """Flags of this invocation, for output headers."""
    header = {"command": args.command}
    for key, value in sorted(vars(args).items()):
        if key in ("command", "func"):
            continue
        if isinstance(value, (list, tuple)):
            value = " ".join(str(v) for v in value)
        header[key] = str(value)
    return header


# ==================== Parser ====================

def _common() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', type=str, metavar='FILE',
                        help='key=value file seeding flag values (flags win)')
    noise = common.add_mutually_exclusive_group()
    noise.add_argument('-v', '--verbose', action='store_true', help='Debug logging')
    noise.add_argument('-q', '--quiet', action='store_true', help='Warnings and errors only')
    return common


def _add_train_flags(p: argparse.ArgumentParser):
    p.add_argument('--steps', type=int, default=200, help='Generator updates (default: 200)')
    p.add_argument('--batch', dest='batch_size', type=int, default=DEFAULT_BATCH_SIZE,
                   help=f'Batch size (default: {DEFAULT_BATCH_SIZE})')
    p.add_argument('--size', dest='image_size', type=int, default=DEFAULT_IMAGE_SIZE,
                   help=f'Crop side, multiple of 4 (default: {DEFAULT_IMAGE_SIZE})')
    p.add_argument('--hole', dest='hole_size', type=int, default=DEFAULT_HOLE_SIZE,
                   help=f'Hole side (default: {DEFAULT_HOLE_SIZE})')
    p.add_argument('--alpha', type=float, default=DEFAULT_ALPHA, help='Vectorial Loss weight')
    p.add_argument('--beta', type=float, default=DEFAULT_BETA, help='Adversarial weight')
    p.add_argument('--phi', type=float, default=DEFAULT_PHI, help='L1 weight')
    p.add_argument('--lambda-gp', type=float, default=DEFAULT_LAMBDA_GP, help='Gradient-penalty weight')
    p.add_argument('--n-critic', type=int, default=DEFAULT_N_CRITIC, help='Critic updates per generator update')
    p.add_argument('--lr', type=float, default=ADAM_LR, help='Adam step size')
    p.add_argument('--beta1', type=float, default=ADAM_BETA1, help='Adam first-moment decay')
    p.add_argument('--beta2', type=float, default=ADAM_BETA2, help='Adam second-moment decay')
    p.add_argument('--width', type=int, default=DEFAULT_WIDTH, help='Base channel count')
    p.add_argument('--leaky-slope', type=float, default=LEAKY_SLOPE, help='LeakyReLU negative slope')
    p.add_argument('--no-vectorial-loss', dest='vectorial_loss_on', action='store_false',
                   help='Train without the Vectorial Loss')
    p.add_argument('--no-surface-attention', dest='surface_attention_on', action='store_false',
                   help='Skip the attention refinement stage')
    p.add_argument('--no-surface-discrimination', dest='surface_discrimination_on', action='store_false',
                   help='Critic sees disparity only')
    p.add_argument('--attention', dest='mode', choices=['argmax', 'blend'], default='argmax',
                   help='Patch transfer mode (default: argmax)')
    p.add_argument('--patch', type=int, default=ATTENTION_PATCH, help='Attention patch side')
    p.add_argument('--propagation-k', dest='k', type=int, default=ATTENTION_PROPAGATION_K,
                   help='Score propagation window')
    p.add_argument('--softmax-scale', type=float, default=ATTENTION_SOFTMAX_SCALE,
                   help='Cosine score temperature')
    p.add_argument('--no-attention-normals', dest='use_normals', action='store_false',
                   help='Match patches on disparity only')
    p.add_argument('--vectorial-region', choices=['full', 'hole'], default='full',
                   help='Where the Vectorial Loss is averaged (default: full)')
    p.add_argument('--disparity-scale', type=float, default=None,
                   help='Network input scale (default: max of the first batch)')
    p.add_argument('--log-every', type=int, default=10, help='Steps between progress lines')
    p.add_argument('--seed', type=int, default=0, help='Seed for parameters, data and sampling')


def _add_eval_flags(p: argparse.ArgumentParser):
    p.add_argument('--bins', dest='depth_bins', type=int, default=DEPTH_BINS,
                   help=f'Depth histogram bins (default: {DEPTH_BINS})')
    p.add_argument('--surface-bins', type=int, default=SURFACE_BINS,
                   help=f'Normal-component histogram bins (default: {SURFACE_BINS})')
    p.add_argument('--log-base', choices=['e', '2'], default='e', help='Logarithm of KL and JS')
    p.add_argument('--surface-mode', choices=['pooled', 'per-component'], default='pooled',
                   help='Pool normal components into one histogram or average per component')
    p.add_argument('--jobs', type=int, default=1, help='Image pairs evaluated in parallel')


def build_parser() -> Dict[str, argparse.ArgumentParser]:
    """Top-level parser under key "sadi" and one entry per subcommand."""
    common = _common()
    parser = argparse.ArgumentParser(
        prog='sadi',
        description="Surface-aware disparity inpainting: synthesis, training, inpainting and evaluation",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  sadi synth --n 16 --out data/              Synthetic scenes, masks and a manifest
  sadi normals --in d.pfm --out n.pfm        Surface normals of a disparity map
  sadi train --steps 200 --out runs/         Train the toy model (all surface terms on)
  sadi train --alpha 0 --out runs/           Same run without the Vectorial Loss
  sadi inpaint --ckpt m.ckpt --in d.pfm --mask m.pgm --out filled.pfm
  sadi eval --gt d.pfm --gen filled.pfm --mask m.pgm --out report/
  sadi ablation --steps 100 --seeds 0 1 2 --out ablation/

Exit codes: 0 ok, 1 processing error, 2 usage or configuration, 3 missing file.
        """
    )
    sub = parser.add_subparsers(dest='command', required=True)
    parsers = {"sadi": parser}

    p = sub.add_parser('synth', parents=[common], help='Generate synthetic scenes')
    p.add_argument('--n', type=int, default=8, help='Number of scenes (default: 8)')
    p.add_argument('--size', type=int, default=DEFAULT_IMAGE_SIZE, help='Image side')
    p.add_argument('--hole', type=int, default=DEFAULT_HOLE_SIZE, help='Hole side')
    p.add_argument('--sigma', type=float, default=0.0, help='Disparity noise std. dev.')
    p.add_argument('--margin', type=int, default=1, help='Background kept around each hole')
    p.add_argument('--format', choices=['pfm', 'pgm'], default='pfm', help='Disparity file format')
    p.add_argument('--scale', type=float, default=PGM_DEFAULT_SCALE, help='PGM quantisation scale')
    p.add_argument('--seed', type=int, default=0, help='Stream seed')
    p.add_argument('--out', type=str, required=True, help='Output directory')
    p.set_defaults(func=cmd_synth)
    parsers['synth'] = p

    p = sub.add_parser('normals', parents=[common], help='Surface normals of a disparity map')
    p.add_argument('--in', dest='input', type=str, required=True, help='Disparity file')
    p.add_argument('--out', type=str, required=True, help='Three-channel PFM output')
    p.add_argument('--visualize', type=str, metavar='PPM', help='Also write an RGB preview')
    p.set_defaults(func=cmd_normals)
    parsers['normals'] = p

    p = sub.add_parser('train', parents=[common], help='Train generator and critic')
    _add_train_flags(p)
    p.add_argument('--manifest', type=str, help='Train on files listed here instead of synthetic scenes')
    p.add_argument('--out', dest='out_dir', type=str, default='./sadi_runs', help='Run directory')
    p.set_defaults(func=cmd_train)
    parsers['train'] = p

    p = sub.add_parser('inpaint', parents=[common], help='Fill holes with a trained model')
    p.add_argument('--ckpt', type=str, required=True, help='Checkpoint from "sadi train"')
    p.add_argument('--in', dest='input', type=str, required=True, help='Disparity file')
    p.add_argument('--mask', type=str, help='Hole mask (default: invalid pixels only)')
    p.add_argument('--attention', choices=['argmax', 'blend'], help='Override the trained transfer mode')
    p.add_argument('--out', type=str, required=True, help='Filled disparity (.pfm or .pgm)')
    p.add_argument('--scale', type=float, default=PGM_DEFAULT_SCALE, help='PGM quantisation scale')
    p.add_argument('--scores', type=str, metavar='PFM', help='Write the max attention score map')
    p.add_argument('--error-map', type=str, metavar='PFM', help='Write the squared error against --gt')
    p.add_argument('--gt', type=str, help='Ground truth for --error-map')
    p.set_defaults(func=cmd_inpaint)
    parsers['inpaint'] = p

    p = sub.add_parser('eval', parents=[common], help='Pixel errors and distribution distances')
    p.add_argument('--gt', type=str, nargs='+', required=True, help='Ground-truth disparity files')
    p.add_argument('--gen', type=str, nargs='+', required=True, help='Generated disparity files')
    p.add_argument('--mask', type=str, nargs='*', default=[], help='Hole masks, one per pair')
    p.add_argument('--region', choices=['hole', 'full'], default='hole', help='Evaluated pixels')
    p.add_argument('--depth-range', type=float, nargs=2, metavar=('LO', 'HI'),
                   help='Fixed depth histogram range')
    p.add_argument('--name', type=str, default='generated', help='Row label in the tables')
    p.add_argument('--error-map', type=str, metavar='DIR', help='Write squared-error maps here')
    _add_eval_flags(p)
    p.add_argument('--out', type=str, required=True, help='Report directory')
    p.set_defaults(func=cmd_eval)
    parsers['eval'] = p

    p = sub.add_parser('ablation', parents=[common], help='Train and score the four ablation rows')
    _add_train_flags(p)
    p.add_argument('--seeds', type=int, nargs='+', default=[0, 1, 2], help='Training seeds')
    p.add_argument('--eval-samples', type=int, default=8, help='Held-out scenes per seed')
    _add_eval_flags(p)
    p.add_argument('--out', type=str, required=True, help='Report directory')
    p.set_defaults(func=cmd_ablation)
    parsers['ablation'] = p
    return parsers


def _apply_config_file(parser: argparse.ArgumentParser, path: str):
    """Seed ``parser`` defaults from a key=value file."""
    values = load_config_file(path)
    by_key: Dict[str, argparse.Action] = {}
    for action in parser._actions:
        if action.dest in ("help", "config"):
            continue
        by_key[action.dest] = action
        for option in action.option_strings:
            by_key[option.lstrip('-').replace('-', '_')] = action

    defaults = {}
    for key, raw in values.items():
        action = by_key.get(key)
        if action is None:
            raise ConfigFileError(f"{path}: unknown key '{key}'")
        try:
            if isinstance(action.const, bool):
                value = parse_bool(raw)
                # "no_x = true" under a flag spelling means the flag was given
                if key != action.dest:
                    value = action.const if value else action.default
            elif action.nargs in ('+', '*', 2):
                convert = action.type or str
                value = [convert(v) for v in raw.split()]
            else:
                value = action.type(raw) if action.type else raw
        except ValueError as e:
            raise ConfigFileError(f"{path}: bad value for '{key}': {e}") from None
        if action.choices is not None and value not in action.choices:
            raise ConfigFileError(f"{path}: '{key}' must be one of {list(action.choices)}, got {raw!r}")
        defaults[action.dest] = value
        action.required = False
    parser.set_defaults(**defaults)


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    parsers = build_parser()
    args = parsers["sadi"].parse_args(argv)
    if getattr(args, "config", None):
        _apply_config_file(parsers[args.command], args.config)
        args = parsers["sadi"].parse_args(argv)
    return args


# ==================== Subcommands ====================

def train_config_from_args(args: argparse.Namespace) -> TrainConfig:
    weights = LossWeights(beta=args.beta, phi=args.phi, alpha=args.alpha,
                          lambda_gp=args.lambda_gp, n_critic=args.n_critic)
    attention = AttentionConfig(patch=args.patch, k=args.k, softmax_scale=args.softmax_scale,
                                mode=args.mode, use_normals=args.use_normals)
    return TrainConfig(
        image_size=args.image_size, hole_size=args.hole_size, batch_size=args.batch_size,
        steps=args.steps, lr=args.lr, beta1=args.beta1, beta2=args.beta2,
        weights=weights, attention=attention, seed=args.seed,
        vectorial_loss_on=args.vectorial_loss_on,
        surface_attention_on=args.surface_attention_on,
        surface_discrimination_on=args.surface_discrimination_on,
        width=args.width, leaky_slope=args.leaky_slope,
        vectorial_region=args.vectorial_region, disparity_scale=args.disparity_scale,
        log_every=args.log_every, out_dir=getattr(args, "out_dir", "./sadi_runs"),
    ).validate()


def eval_config_from_args(args: argparse.Namespace) -> EvalConfig:
    depth_range = tuple(args.depth_range) if getattr(args, "depth_range", None) else None
    return EvalConfig(
        depth_bins=args.depth_bins, surface_bins=args.surface_bins,
        region=getattr(args, "region", "hole"), log_base=args.log_base,
        surface_mode=args.surface_mode, depth_range=depth_range, jobs=args.jobs,
    ).validate()


def cmd_synth(args: argparse.Namespace) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stream = SyntheticSceneStream(args.size, args.hole, seed=args.seed, sigma=args.sigma, margin=args.margin)
    entries = []
    for i in range(args.n):
        sample = next(stream)
        disp = out / f"scene_{i:03d}.{args.format}"
        mask = out / f"mask_{i:03d}.pgm"
        write_disparity(disp, sample.disparity, args.scale)
        write_mask(mask, sample.mask)
        write_normals_pfm(out / f"normals_{i:03d}.pfm", sample.normals)
        entries.append((disp, mask))
    manifest = write_manifest(out / "manifest.txt", entries, _echo(args))
    logger.info(f"Wrote {args.n} scene(s) and {manifest}")
    print(manifest)
    return EXIT_OK


def cmd_normals(args: argparse.Namespace) -> int:
    d = read_disparity(args.input)
    normals = normals_from_disparity(d)
    write_normals_pfm(_ensure_parent(args.out), normals)
    logger.info(f"Normals saved: {args.out}")
    if args.visualize:
        write_ppm(_ensure_parent(args.visualize), normals_to_rgb(normals))
        logger.info(f"Preview saved: {args.visualize}")
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    cfg = train_config_from_args(args)
    dataset = None
    if args.manifest:
        dataset = ManifestDataset(args.manifest, cfg.hole_size, cfg.seed, max(1, cfg.attention.radius))
    result = Trainer(cfg, dataset, verbose=not args.quiet).run()
    for name, path in result.paths.items():
        print(f"{name}: {path}")
    return EXIT_OK


def cmd_inpaint(args: argparse.Namespace) -> int:
    generator, _, cfg, scale = load_model(args.ckpt)
    if args.attention:
        cfg = replace(cfg, attention=replace(cfg.attention, mode=args.attention))
    d = read_disparity(args.input)
    hole = read_mask(args.mask) if args.mask else HoleMask.empty(d.shape)
    filled, attention = inpaint(generator, d, hole, cfg, scale, return_attention=True)
    write_disparity(_ensure_parent(args.out), filled, args.scale)
    logger.info(f"Inpainted disparity saved: {args.out}")

    if args.scores:
        if attention is None:
            logger.warning("No attention pass ran; score map not written")
        else:
            write_pfm(_ensure_parent(args.scores), attention.max_score_map())
    if args.error_map:
        if not args.gt:
            raise ValueError("--error-map needs --gt")
        gt = read_disparity(args.gt)
        region = hole.union(HoleMask(~d.valid))
        write_pfm(_ensure_parent(args.error_map), squared_error_map(gt, filled, region))
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = eval_config_from_args(args)
    if len(args.gt) != len(args.gen):
        raise ValueError(f"{len(args.gt)} --gt file(s) but {len(args.gen)} --gen file(s)")
    if args.mask and len(args.mask) != len(args.gt):
        raise ValueError(f"{len(args.mask)} --mask file(s) for {len(args.gt)} pair(s)")

    pairs = []
    for i, (gt_path, gen_path) in enumerate(zip(args.gt, args.gen)):
        mask = read_mask(args.mask[i]) if args.mask else None
        pairs.append((read_disparity(gt_path), read_disparity(gen_path), mask))
    reports, mean = evaluate_many(pairs, cfg)

    if args.error_map:
        out = Path(args.error_map)
        out.mkdir(parents=True, exist_ok=True)
        for i, (gt, gen, mask) in enumerate(pairs):
            region = None if cfg.region == "full" else mask
            write_pfm(out / f"error_{i:03d}.pfm", squared_error_map(gt, gen, region))

    paths = write_reports(args.out, [(args.name, mean)], _echo(args))
    for name, path in paths.items():
        print(path)
    logger.info(f"{args.name}: MSE={mean.mse:.4f} VE={mean.ve:.4f} over {len(reports)} pair(s)")
    return EXIT_OK


def cmd_ablation(args: argparse.Namespace) -> int:
    base = train_config_from_args(args)
    rows = run_ablation(base, args.seeds, args.eval_samples, eval_config_from_args(args),
                        out_dir=args.out, verbose=not args.quiet)
    for name, report in rows:
        print(f"{name}: MSE={report.mse:.4f} VE={report.ve:.4f}")
    return EXIT_OK


# ==================== Entry point ====================

def _fail(exc: BaseException, code: int) -> int:
    logger.debug("command failed", exc_info=exc)
    message = str(exc).replace("\n", " ")
    print(f"error: {type(exc).__name__}: {message}", file=sys.stderr)
    return code


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = parse_args(argv)
    except FileNotFoundError as e:
        return _fail(e, EXIT_MISSING)
    except ValueError as e:
        return _fail(e, EXIT_USAGE)

    _setup_logging(args.verbose, args.quiet)
    try:
        return args.func(args)
    except FileNotFoundError as e:
        return _fail(e, EXIT_MISSING)
    except SADI_ERRORS as e:
        return _fail(e, EXIT_ERROR)
    except ValueError as e:
        return _fail(e, EXIT_USAGE)


if __name__ == '__main__':
    sys.exit(main())
