"""Command-line entry point: train on an OFF corpus, export blob + fixtures."""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import blob, fixtures, offio
from .train import TrainConfig, sample_pair, train


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pnlk-train", description=__doc__)
    parser.add_argument("--corpus", required=True, help="directory of .off meshes")
    parser.add_argument("--epochs", type=int, default=50)
    parser.add_argument("--pairs-per-epoch", type=int, default=16)
    parser.add_argument("--n-points", type=int, default=96)
    parser.add_argument("--twist-bound", type=float, default=0.8)
    parser.add_argument("--lr", type=float, default=1e-3)
    parser.add_argument("--lk-iterations", type=int, default=2)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default="toy_weights.blob", help="weight blob path")
    parser.add_argument("--fixtures", default=None, help="also export a fixture bundle here")
    parser.add_argument("--width", type=int, choices=(32, 64), default=32)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = TrainConfig(
        corpus_dir=args.corpus,
        epochs=args.epochs,
        pairs_per_epoch=args.pairs_per_epoch,
        n_points=args.n_points,
        twist_bound=args.twist_bound,
        learning_rate=args.lr,
        lk_iterations=args.lk_iterations,
        seed=args.seed,
        export_path=args.out,
        width_bits=args.width,
    )
    try:
        result = train(cfg)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(
        f"held-out loss: first epoch {result.eval_losses[0]:.4f}, "
        f"final {result.eval_losses[-1]:.4f}"
    )
    print(f"wrote {result.blob_path}")

    if args.fixtures:
        model = blob.load_blob_into_model(result.blob_path)
        clouds = offio.load_corpus(args.corpus)
        rng = np.random.default_rng(cfg.seed + 999)
        template, source, _ = sample_pair(clouds[0], cfg, rng)
        manifest = fixtures.export_fixtures(
            model, template, source, args.fixtures,
            blob_name=str(result.blob_path), jacobian_step=cfg.jacobian_step,
        )
        print(f"wrote {manifest}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
