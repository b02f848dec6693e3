"""
Command-line entry point.

    curvelight train     --data DIR --out PATH --variant plain|dsc [...]
    curvelight enhance   --model PATH --input FILE_OR_DIR --output FILE_OR_DIR [--downsample D] [--dump-maps DIR]
    curvelight eval      --pred DIR --gt DIR --out report.csv
    curvelight info      --model PATH [--flops WxH]
    curvelight gradcheck [--seed S]
    curvelight ablate    --grid "l,f,n;..." --data DIR --out DIR

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

import argparse
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import checkpoint, image_io, settings
from .analyzer import TrainingAnalyzer
from .curves import apply_curve_maps, set_range_checks
from .gradcheck import GRADIENT_TOLERANCE, run_gradient_suite, suite_passed
from .logger import Logger
from .metrics import evaluate_directories
from .network import NetworkFactory, estimate_curves, flops, layer_report
from .trainer import TrainConfig, load_dataset, train

CHANNEL_NAMES = "RGB"

# flag dest -> TrainConfig setting key
TRAIN_FLAGS = {
    "data": "data",
    "out": "out",
    "variant": "variant",
    "epochs": "epochs",
    "batch": "batch",
    "lr": "lr",
    "size": "size",
    "e": "e",
    "wcol": "wcol",
    "wtv": "wtv",
    "wspa": "wspa",
    "wexp": "wexp",
    "seed": "seed",
    "val_fraction": "val_fraction",
    "checkpoint_every": "checkpoint_every",
    "max_iterations": "max_iterations",
    "grad_clip": "grad_clip",
    "downsample": "downsample",
    "depth": "depth",
    "features": "features",
    "iterations": "iterations",
    "log": "log",
}


def parse_size(text: str) -> Tuple[int, int]:
    """'1200x900' -> (width, height)."""
    match = re.fullmatch(r"\s*(\d+)\s*[xX]\s*(\d+)\s*", text)
    if not match:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}")
    width, height = int(match.group(1)), int(match.group(2))
    if width < 1 or height < 1:
        raise argparse.ArgumentTypeError(f"size must be positive, got {text!r}")
    return width, height


def parse_grid(text: str) -> List[Tuple[int, int, int]]:
    """'7,32,8;7,32,1' -> [(7, 32, 8), (7, 32, 1)]."""
    grid = []
    for entry in filter(None, (part.strip() for part in text.split(";"))):
        match = re.fullmatch(r"(\d+)\s*,\s*(\d+)\s*,\s*(\d+)", entry)
        if not match:
            raise argparse.ArgumentTypeError(f"grid entries must be 'l,f,n', got {entry!r}")
        depth, features, iterations = (int(g) for g in match.groups())
        if depth < 3 or features < 1 or iterations < 1:
            raise argparse.ArgumentTypeError(f"need l >= 3, f >= 1, n >= 1, got {entry!r}")
        grid.append((depth, features, iterations))
    if not grid:
        raise argparse.ArgumentTypeError("grid is empty")
    return grid


def _add_training_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--epochs", type=int, help="Training epochs (default 100)")
    parser.add_argument("--batch", type=int, help="Batch size (default 8)")
    parser.add_argument("--lr", type=float, help="Adam learning rate (default 1e-4)")
    parser.add_argument("--size", type=int, help="Training images are resized to SIZE x SIZE (default 512)")
    parser.add_argument("--e", type=float, help="Well-exposedness level E (default 0.6)")
    parser.add_argument("--wcol", type=float, help="Color constancy weight (default 0.5)")
    parser.add_argument("--wtv", type=float, help="Illumination smoothness weight (default 20)")
    parser.add_argument("--wspa", type=float, help="Spatial consistency weight (default 1)")
    parser.add_argument("--wexp", type=float, help="Exposure control weight (default 1)")
    parser.add_argument("--seed", type=int, help="Seed for initialization, split and shuffling (default 0)")
    parser.add_argument("--val-fraction", dest="val_fraction", type=float, help="Validation share (default 0.2)")
    parser.add_argument("--max-iterations", dest="max_iterations", type=int, help="Stop after this many steps")
    parser.add_argument("--grad-clip", dest="grad_clip", type=float, help="Clip gradients to this global norm")
    parser.add_argument("--config", help="Flat 'key = value' settings file; flags override it")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="curvelight",
        description="Zero-reference low-light enhancement with pixel-wise curves.",
    )
    commands = parser.add_subparsers(dest="command", required=True)
    variants = NetworkFactory.get_available_variants()

    train_parser = commands.add_parser(
        "train",
        help="Train a curve estimation network",
        description="Train on an unlabeled image directory. Mix under- and over-exposed images: "
                    "training on low-light images only tends to over-enhance well-lit regions.",
    )
    train_parser.add_argument("--data", help="Directory of training images")
    train_parser.add_argument("--out", help="Checkpoint path (default curvelight.zdce)")
    train_parser.add_argument("--variant", choices=variants, help="Network variant (default plain)")
    _add_training_flags(train_parser)
    train_parser.add_argument("--checkpoint-every", dest="checkpoint_every", type=int,
                              help="Write a checkpoint every N epochs")
    train_parser.add_argument("--downsample", type=int, help="Estimate curves on inputs downsampled by D")
    train_parser.add_argument("--depth", type=int, help="Convolution layers l (default 7)")
    train_parser.add_argument("--features", type=int, help="Feature maps per layer f (default 32)")
    train_parser.add_argument("--iterations", type=int, help="Curve iterations n (default 8)")
    train_parser.add_argument("--log", help="Training log path (default: checkpoint path with .log)")
    train_parser.add_argument("--plot", help="Save a loss-curve plot to this PNG")
    train_parser.set_defaults(handler=cmd_train)

    enhance_parser = commands.add_parser("enhance", help="Enhance an image or a directory of images")
    enhance_parser.add_argument("--model", required=True, help="Checkpoint path")
    enhance_parser.add_argument("--input", required=True, help="Image file or directory")
    enhance_parser.add_argument("--output", required=True, help="Output file or directory")
    enhance_parser.add_argument("--downsample", type=int, help="Override the checkpoint's downsample factor")
    enhance_parser.add_argument("--dump-maps", dest="dump_maps", help="Write curve parameter maps as grayscale PNGs")
    enhance_parser.set_defaults(handler=cmd_enhance)

    eval_parser = commands.add_parser("eval", help="PSNR/SSIM/MAE of predictions against ground truth")
    eval_parser.add_argument("--pred", required=True, help="Directory of enhanced images")
    eval_parser.add_argument("--gt", required=True, help="Directory of reference images with the same names")
    eval_parser.add_argument("--out", required=True, help="CSV report path")
    eval_parser.set_defaults(handler=cmd_eval)

    info_parser = commands.add_parser("info", help="Describe a checkpoint")
    info_parser.add_argument("--model", required=True, help="Checkpoint path")
    info_parser.add_argument("--flops", type=parse_size, metavar="WxH", help="Report MACs for this input size")
    info_parser.set_defaults(handler=cmd_info)

    grad_parser = commands.add_parser("gradcheck", help="Finite-difference check of every backward rule")
    grad_parser.add_argument("--seed", type=int, default=0)
    grad_parser.add_argument("--corrupt", help=argparse.SUPPRESS)
    grad_parser.set_defaults(handler=cmd_gradcheck)

    ablate_parser = commands.add_parser("ablate", help="Train and compare l-f-n configurations")
    ablate_parser.add_argument("--grid", required=True, type=parse_grid, help='e.g. "7,32,8;7,32,1"')
    ablate_parser.add_argument("--data", required=True, help="Directory of training images")
    ablate_parser.add_argument("--out", required=True, help="Output directory for checkpoints and the table")
    ablate_parser.add_argument("--variant", choices=variants, default="plain")
    _add_training_flags(ablate_parser)
    ablate_parser.set_defaults(handler=cmd_ablate)

    return parser


def _train_config(args: argparse.Namespace, **overrides) -> TrainConfig:
    """Defaults < config file < command-line flags."""
    values = settings.read_config_file(args.config) if getattr(args, "config", None) else {}
    for dest, key in TRAIN_FLAGS.items():
        value = getattr(args, dest, None)
        if value is not None:
            values[key] = value
    values.update(overrides)
    return TrainConfig.from_mapping(values)


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _train_config(args)
    Logger.info(f"Training config: {cfg.to_dict()}", name=__name__)
    result = train(cfg)
    print(f"checkpoint: {result.checkpoint}")
    if not result.history.empty:
        analyzer = TrainingAnalyzer(output_prefix=Path(cfg.out).stem)
        summary = analyzer.get_summary_stats(result.history)
        print(f"iterations: {summary['iterations']}")
        print(f"total: {summary['total_first']:.6f} -> {summary['total_last']:.6f}")
        print(f"log: {cfg.training_log}")
        if args.plot:
            analyzer.plot_history(result.history, result.validation, args.plot)
    return 0


def _dump_maps(maps, stem: str, directory: Path) -> None:
    for group in range(maps.groups):
        data = maps.group(group).data[0]
        for channel, channel_name in enumerate(CHANNEL_NAMES):
            image_io.save_grayscale(data[channel], directory / f"{stem}_iter{group + 1}_{channel_name}.png")


def _enhance_file(model, source: Path, target: Path, downsample: Optional[int], dump_dir: Optional[Path]) -> None:
    batch = image_io.to_batch([image_io.load(source)])
    maps = estimate_curves(model, batch, downsample)
    enhanced = apply_curve_maps(batch, maps)
    image_io.save(image_io.from_batch(enhanced)[0], target)
    if dump_dir is not None:
        _dump_maps(maps, source.stem, dump_dir)


def cmd_enhance(args: argparse.Namespace) -> int:
    model = checkpoint.load(args.model)
    source, target = Path(args.input), Path(args.output)
    dump_dir = Path(args.dump_maps) if args.dump_maps else None
    if dump_dir is not None:
        dump_dir.mkdir(parents=True, exist_ok=True)

    if source.is_file():
        _enhance_file(model, source, target, args.downsample, dump_dir)
        print(f"enhanced: {target}")
        return 0

    files = image_io.list_images(source)
    target.mkdir(parents=True, exist_ok=True)
    Logger.info(f"Enhancing {len(files)} images from {source}", name=__name__)

    def run(path: Path) -> Optional[str]:
        try:
            _enhance_file(model, path, target / path.name, args.downsample, dump_dir)
            return None
        except (image_io.ImageIOError, ValueError, OSError) as e:
            Logger.warning(f"Failed to enhance {path.name}: {e}", name=__name__)
            return f"{path.name}: {e}"

    workers = settings.worker_count()
    if workers > 0:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            failures = [f for f in pool.map(run, files) if f]
    else:
        failures = [f for f in map(run, files) if f]

    print(f"enhanced: {len(files) - len(failures)}/{len(files)}")
    for failure in failures:
        print(f"failed: {failure}", file=sys.stderr)
    return 1 if failures else 0


def cmd_eval(args: argparse.Namespace) -> int:
    report, excluded = evaluate_directories(args.pred, args.gt)
    for name in excluded:
        print(f"excluded: {name}", file=sys.stderr)
    if not report.rows:
        print("error: no prediction/ground-truth pairs matched", file=sys.stderr)
        Logger.error("No prediction/ground-truth pairs matched", name=__name__)
        return 1
    report.to_csv(args.out)
    means = report.means()
    print(f"pairs: {len(report.rows)}")
    print(f"mean psnr: {means['psnr']:.4f}")
    print(f"mean ssim: {means['ssim']:.4f}")
    print(f"mean mae: {means['mae']:.4f}")
    return 0


def cmd_info(args: argparse.Namespace) -> int:
    model = checkpoint.load(args.model)
    print(f"variant: {model.variant.value}")
    print(f"iterations: {model.iterations}")
    print(f"downsample: {model.downsample_factor}")
    print(f"depth: {model.depth}")
    print(f"features: {model.features}")
    print(f"parameters: {model.param_count()}")
    for row in layer_report(model):
        print(f"  conv{row['layer']}: {row['in_channels']} -> {row['out_channels']}, {row['parameters']} parameters")
    if args.flops:
        width, height = args.flops
        macs = flops(model, height, width)
        print(f"flops: {macs} MACs ({macs / 1e9:.3f}G) at {width}x{height}")
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    results = run_gradient_suite(seed=args.seed, corrupt=args.corrupt)
    width = max(len(name) for name in results)
    for name, error in results.items():
        status = "ok" if error < GRADIENT_TOLERANCE else "FAIL"
        print(f"{name:<{width}}  {error:.3e}  {status}")
    passed = suite_passed(results)
    print(f"gradcheck {'passed' if passed else 'failed'} (tolerance {GRADIENT_TOLERANCE})")
    return 0 if passed else 1


def cmd_ablate(args: argparse.Namespace) -> int:
    base = _train_config(args, data=args.data)
    out_dir = Path(args.out)
    dataset = load_dataset(base.data_dir, base.train_size, base.val_fraction, base.seed)
    analyzer = TrainingAnalyzer(output_prefix=str(out_dir / "ablation"))

    rows = []
    for depth, features, iterations in args.grid:
        label = f"l{depth}-f{features}-n{iterations}"
        Logger.info(f"Ablation run {label}", name=__name__)
        cfg = TrainConfig.from_mapping(
            {"depth": depth, "features": features, "iterations": iterations,
             "out": str(out_dir / f"{label}.zdce")},
            base=base,
        )
        result = train(cfg, dataset)
        history = result.history
        row = {
            "config": label,
            "depth": depth,
            "features": features,
            "iterations": iterations,
            "parameters": result.model.param_count(),
            "steps": len(history),
            "final_total": float(analyzer.moving_average(history).iloc[-1]) if len(history) else float("nan"),
            "val_total": float(result.validation["val_total"].iloc[-1]) if len(result.validation) else float("nan"),
        }
        if len(dataset.validation):
            held_out = image_io.to_batch(list(dataset.validation))
            enhanced = apply_curve_maps(held_out, estimate_curves(result.model, held_out, cfg.downsample))
            row["val_mean_intensity"] = float(np.mean(enhanced.data))
        rows.append(row)
        print(f"{label}: parameters {row['parameters']}, final total {row['final_total']:.6f}")

    table = analyzer.save_ablation_table(rows, out_dir)
    print(f"table: {table}")
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    settings.load_environment()
    set_range_checks(settings.debug_enabled())
    parser = build_parser()
    args = parser.parse_args(argv)
    Logger.info(f"curvelight {args.command} started", name=__name__)
    try:
        return args.handler(args)
    except Exception as e:
        Logger.error(f"curvelight {args.command} failed: {e}", name=__name__)
        print(f"error: {e}", file=sys.stderr)
        return 1
