"""End-to-end toy experiment on the synthetic corpus.

Generates data (unless --data-dir already holds it), optionally augments
the training split, encodes features, trains, scores the eval split and
prints the EER breakdown.  Everything runs through the same CLI entry
points as real experiments.
"""

import argparse
import sys
import time
from pathlib import Path

import yaml

from svdd.cli import main as svdd_main
from svdd.synthetic import make_split


def run(argv):
    code = svdd_main(argv)
    if code != 0:
        raise SystemExit(f"command {' '.join(argv)} failed with {code}")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("out_dir")
    parser.add_argument("--n-train", type=int, default=1600)
    parser.add_argument("--n-dev", type=int, default=400)
    parser.add_argument("--n-eval", type=int, default=400)
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--chain", default="none",
                        help="training augmentation chain")
    parser.add_argument("--lr", type=float, default=1e-2)
    parser.add_argument("--epochs", type=int, default=30)
    parser.add_argument("--batch-size", type=int, default=48)
    parser.add_argument("--target-dev-eer", type=float, default=0.05)
    parser.add_argument("--aggregation", default="sea",
                        choices=("weighted_sum", "attm", "sea"))
    args = parser.parse_args()

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifests = {}
    for name, prefix, count, offset in (("train", "tr", args.n_train, 0),
                                        ("dev", "dv", args.n_dev, 1),
                                        ("eval", "ev", args.n_eval, 2)):
        manifest = out / name / f"{prefix}manifest.tsv"
        if not manifest.exists():
            make_split(out / name, prefix, count, seed=args.seed + offset)
        manifests[name] = manifest

    train_manifest = manifests["train"]
    if args.chain != "none":
        aug_dir = out / "train_aug"
        run(["augment", str(train_manifest), "--chain", args.chain,
             "--out-dir", str(aug_dir), "--seed", str(args.seed)])
        train_manifest = aug_dir / "manifest.tsv"

    feat_dir = out / "features"
    config = out / "run.yaml"
    config.write_text(yaml.safe_dump({
        "paths": {"feature_dir": str(feat_dir), "out_dir": str(out)},
        "features": {"source": "svdf"},
        "aggregation": {"kind": args.aggregation},
        "optim": {"lr": args.lr, "lr_min": args.lr / 1000.0,
                  "batch_size": args.batch_size, "epochs": args.epochs,
                  "seed": args.seed},
    }))
    for manifest in (train_manifest, manifests["dev"], manifests["eval"]):
        run(["--config", str(config), "encode", str(manifest),
             "--out-dir", str(feat_dir)])

    ckpt = out / "model.ckpt"
    t0 = time.perf_counter()
    run(["--config", str(config), "train",
         "--train-manifest", str(train_manifest),
         "--dev-manifest", str(manifests["dev"]),
         "--out", str(ckpt), "--target-dev-eer", str(args.target_dev_eer)])
    print(f"training wall time: {time.perf_counter() - t0:.1f} s")

    scores = out / "eval_scores.txt"
    run(["--config", str(config), "score", str(manifests["eval"]),
         "--checkpoint", str(ckpt), "--out", str(scores)])
    run(["eval", str(manifests["eval"]), "--scores", str(scores)])
    run(["report", str(manifests["eval"]), "--systems", f"toy={scores}",
         "--out-dir", str(out / "report")])


if __name__ == "__main__":
    sys.exit(main())
