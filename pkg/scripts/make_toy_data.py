"""Generate the synthetic two-class corpus used by the toy experiments.

Writes train/dev/eval splits of 4-second WAVs with trial manifests; the
spoof class carries a planted narrowband artifact.
"""

import argparse
from pathlib import Path

from svdd.synthetic import SynthConfig, make_split


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("out_dir")
    parser.add_argument("--n-train", type=int, default=1600)
    parser.add_argument("--n-dev", type=int, default=400)
    parser.add_argument("--n-eval", type=int, default=400)
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--artifact-amp", type=float, default=0.25)
    args = parser.parse_args()

    cfg = SynthConfig(artifact_amp=args.artifact_amp)
    out = Path(args.out_dir)
    for name, prefix, count, offset in (("train", "tr", args.n_train, 0),
                                        ("dev", "dv", args.n_dev, 1),
                                        ("eval", "ev", args.n_eval, 2)):
        manifest = make_split(out / name, prefix, count,
                              seed=args.seed + offset, cfg=cfg)
        print(f"{name}: {count} utterances, manifest {manifest}")


if __name__ == "__main__":
    main()
