"""Main program entry: train | sample | eval-parzen | dump-latent"""
import argparse
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from artifacts import (MetricsWriter, write_latent_csv, write_matrix_csv, write_parzen_report,
                       write_pgm_grid)
from checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from config import RunConfig, parse_assignments
from data_io import load_dataset, load_idx, split_validation
from errors import ConfigError, FormatError, ValidationError
from eval_parzen import (ParzenModel, ParzenReport, default_bandwidth_grid, evaluate_loglik,
                         select_bandwidth)
from model_train import MetricsRow, PriorSpec, Trainer, generate_samples

EXIT_OK = 0
EXIT_IO = 1
EXIT_USAGE = 2


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key=value config file")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key (repeatable)")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--seed", type=int, help="seed for every random stream of this command")

    parser = argparse.ArgumentParser(prog="dsaae", description="MMD-AE / DS-AAE training and evaluation")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("train", parents=[common], help="train the configured variant")

    sample = sub.add_parser("sample", parents=[common], help="decode prior draws")
    sample.add_argument("--checkpoint", type=Path, required=True)
    sample.add_argument("--n", type=int)
    sample.add_argument("--grid-width", type=int)

    parzen = sub.add_parser("eval-parzen", parents=[common], help="Parzen log-likelihood of samples")
    parzen.add_argument("--checkpoint", type=Path, required=True)
    parzen.add_argument("--test-images", type=Path)
    parzen.add_argument("--test-labels", type=Path)
    parzen.add_argument("--n-samples", type=int)

    latent = sub.add_parser("dump-latent", parents=[common], help="write latent codes of hold-out data")
    latent.add_argument("--checkpoint", type=Path, required=True)
    latent.add_argument("--images", type=Path)
    latent.add_argument("--labels", type=Path)
    return parser


def _with_flags(config: RunConfig, args: argparse.Namespace, seed_keys: Sequence[str]) -> RunConfig:
    pairs = []
    if args.out is not None:
        pairs.append(("output.dir", str(args.out)))
    if args.seed is not None:
        pairs.extend((key, str(args.seed)) for key in seed_keys)
    return config.apply_overrides(pairs)


def _checkpoint_config(ckpt: Checkpoint, args: argparse.Namespace) -> RunConfig:
    config = ckpt.config.apply_overrides(parse_assignments(args.overrides))
    return _with_flags(config, args, ("sample.seed",)).validate()


# ── commands ─────────────────────────────────────────────────────

def cmd_train(args: argparse.Namespace) -> int:
    config = RunConfig.load(args.config, args.overrides)
    config = _with_flags(config, args, ("seed.weights", "seed.data", "seed.features", "seed.prior"))
    config = config.validate()
    verbose = config.output.verbose

    dataset = load_dataset(config.data, seed=config.seed.data)
    train_set, validation = split_validation(dataset, config.data.validation_fraction)
    if verbose:
        print(f"📊 {config.data.kind}: {len(train_set)} training / {len(validation)} validation "
              f"examples, {dataset.dim} dims")
    trainer = Trainer(config, input_dim=dataset.dim, verbose=verbose)

    out_dir = Path(config.output.dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.resolved").write_text(config.to_text(), encoding="utf-8")
    metrics_path = out_dir / "metrics.csv"
    if metrics_path.exists():
        metrics_path.unlink()
    writer = MetricsWriter(metrics_path, record_wall_time=config.output.record_wall_time)

    def checkpoint_every(row: MetricsRow, t: Trainer) -> None:
        if row.epoch % config.train.checkpoint_every == 0:
            path = save_checkpoint(out_dir / f"checkpoint_epoch{row.epoch}.npz", t.model, config,
                                   row.epoch, dataset.image_shape, t.adversary)
            if verbose:
                print(f"\n💾 checkpoint saved to {path}")

    rows = trainer.fit(train_set, callbacks=[writer, checkpoint_every])
    final = save_checkpoint(out_dir / "model.npz", trainer.model, config,
                            rows[-1].epoch if rows else 0, dataset.image_shape, trainer.adversary)
    if verbose:
        print(f"💾 metrics written to {metrics_path}")
        print(f"💾 final model saved to {final}")
    return EXIT_OK


def cmd_sample(args: argparse.Namespace) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    config = _checkpoint_config(ckpt, args)
    n = args.n if args.n is not None else config.sample.n
    grid_width = args.grid_width if args.grid_width is not None else config.sample.grid_width
    if n < 1 or grid_width < 1:
        raise ValidationError("--n and --grid-width must be >= 1")

    samples = generate_samples(ckpt.model.decoder, PriorSpec(ckpt.model.latent_dim), n, config.sample.seed)
    out_dir = Path(config.output.dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = write_matrix_csv(samples, out_dir / "samples.csv")
    print(f"💾 {n} samples written to {csv_path}")
    if len(ckpt.image_shape) == 2:
        pgm_path = write_pgm_grid(samples, ckpt.image_shape, grid_width, out_dir / "samples.pgm")
        print(f"💾 image grid written to {pgm_path}")
    return EXIT_OK


def cmd_eval_parzen(args: argparse.Namespace) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    pairs = []
    if args.test_images is not None:
        pairs.append(("data.test_images", str(args.test_images)))
    if args.test_labels is not None:
        pairs.append(("data.test_labels", str(args.test_labels)))
    if args.n_samples is not None:
        pairs.append(("eval.n_samples", str(args.n_samples)))
    args.overrides = list(args.overrides) + [f"{k}={v}" for k, v in pairs]
    config = _checkpoint_config(ckpt, args)
    verbose = config.output.verbose
    ev = config.eval

    dataset = load_dataset(config.data, seed=config.seed.data)
    _, validation = split_validation(dataset, config.data.validation_fraction)
    test = load_dataset(config.data, seed=config.seed.data, test=True)
    if test.dim != ckpt.model.input_dim:
        raise ValidationError(f"test data has {test.dim} dims, model expects {ckpt.model.input_dim}")

    samples = generate_samples(ckpt.model.decoder, PriorSpec(ckpt.model.latent_dim),
                               ev.n_samples, config.sample.seed)
    grid = default_bandwidth_grid(ev.grid_min, ev.grid_max, ev.grid_size)
    sigma = select_bandwidth(samples, validation.images, grid, ev.batch_size, verbose=verbose)
    mean, stderr = evaluate_loglik(ParzenModel(samples, sigma), test.images, ev.batch_size)
    report = ParzenReport(variant=ckpt.variant, n_samples=ev.n_samples, sigma=sigma,
                          mean_loglik=mean, stderr=stderr)

    out_dir = Path(config.output.dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    text_path, csv_path = write_parzen_report(report, out_dir)
    print(report.to_text())
    print(f"💾 report written to {text_path} and {csv_path}")
    return EXIT_OK


def cmd_dump_latent(args: argparse.Namespace) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    config = _checkpoint_config(ckpt, args)
    if args.images is not None:
        data = load_idx(args.images, args.labels, split="holdout")
    else:
        dataset = load_dataset(config.data, seed=config.seed.data)
        _, data = split_validation(dataset, config.data.validation_fraction)
    if data.dim != ckpt.model.input_dim:
        raise ValidationError(f"data has {data.dim} dims, model expects {ckpt.model.input_dim}")

    latent = ckpt.model.encode(data.images)
    out_dir = Path(config.output.dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = write_latent_csv(latent, out_dir / "latent.csv", data.labels)
    print(f"💾 {latent.shape[0]} latent codes ({latent.shape[1]} dims) written to {path}")
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "sample": cmd_sample,
    "eval-parzen": cmd_eval_parzen,
    "dump-latent": cmd_dump_latent,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, dispatch, and map errors to exit codes"""
    args = _build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ValidationError) as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, OSError) as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
