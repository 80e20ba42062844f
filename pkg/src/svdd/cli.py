"""Command-line surface: augment, encode, train, score, eval, ensemble,
report.

Exit codes: 0 success, 1 usage or configuration error, 2 data error
(missing or malformed files), 3 numeric error during training or
scoring.  The SVDD_CONFIG environment variable supplies a default
--config path.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from .audio import AudioFormatError, read_wav, write_wav
from .config import (
    ConfigError,
    RunConfig,
    dump_config,
    load_config,
    parse_chain,
)
from .evaluation import (
    EvaluationError,
    ScoreRecord,
    breakdown,
    compute_eer,
    ensemble,
    read_score_file,
    write_score_file,
)
from .features import (
    FeatureFormatError,
    crop_or_pad,
    toy_encode,
    write_feature_file,
)
from .manifest import ManifestEntry, ManifestError, read_manifest, write_manifest
from .pipeline import (
    FeatureProvider,
    build_model,
    manifest_examples,
    score_utterances,
    stack_dims,
)
from .rawboost import ParameterError, apply_chain, utterance_seed
from .training import (
    TrainingError,
    load_checkpoint,
    restore,
    save_checkpoint,
    train,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


class DataError(RuntimeError):
    pass


def _load_run_config(args) -> RunConfig:
    path = args.config or os.environ.get("SVDD_CONFIG")
    if path is None:
        return RunConfig()
    if not Path(path).exists():
        raise DataError(f"config file not found: {path}")
    return load_config(path)


def _map_records(entries, scores):
    missing = [e.utt_id for e in entries if e.utt_id not in scores]
    if missing:
        raise DataError(f"score file lacks {len(missing)} manifest "
                        f"utterances, e.g. {missing[:5]}")
    return [ScoreRecord(e.utt_id, scores[e.utt_id], e.label, e.attack,
                        e.dataset) for e in entries]


def _for_each(items, fn, jobs):
    if jobs <= 1:
        return [fn(item) for item in items]
    from concurrent.futures import ThreadPoolExecutor
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def cmd_augment(args):
    entries = read_manifest(args.manifest)
    chain = parse_chain(args.chain)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    failures = []

    def one(entry):
        src = Path(entry.path)
        dst = out_dir / f"{entry.utt_id}.wav"
        try:
            if chain is None:
                dst.write_bytes(src.read_bytes())
            else:
                rng = np.random.default_rng(
                    utterance_seed(args.seed, entry.utt_id))
                write_wav(dst, apply_chain(read_wav(src), chain, rng))
        except (OSError, AudioFormatError, ParameterError) as exc:
            failures.append(f"{entry.utt_id} ({src}): {exc}")
            return None
        return ManifestEntry(entry.utt_id, entry.dataset, entry.attack,
                             entry.label, str(dst))

    updated = _for_each(entries, one, args.jobs)
    if failures:
        for line in failures:
            print(f"error: {line}", file=sys.stderr)
        raise DataError(f"{len(failures)} of {len(entries)} files failed")
    write_manifest(updated, out_dir / "manifest.tsv")
    print(f"augmented {len(updated)} utterances -> {out_dir}")
    return EXIT_OK


def cmd_encode(args):
    cfg = _load_run_config(args)
    entries = read_manifest(args.manifest)
    out_dir = Path(args.out_dir or cfg.paths.feature_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    toy_cfg = cfg.features.toy_config()
    rng = np.random.default_rng(0)  # eval-mode crop ignores it

    def one(entry):
        w = crop_or_pad(read_wav(entry.path), cfg.features.duration, rng,
                        "eval")
        stack = toy_encode(w, toy_cfg, entry.utt_id)
        write_feature_file(stack, out_dir / f"{entry.utt_id}.svdf")
        return stack.data.shape

    shapes = _for_each(entries, one, args.jobs)
    unique = sorted(set(shapes))
    print(f"encoded {len(shapes)} utterances -> {out_dir}; "
          f"shapes {unique}")
    return EXIT_OK


def cmd_train(args):
    cfg = _load_run_config(args)
    train_entries = read_manifest(args.train_manifest
                                  or cfg.paths.train_manifest)
    dev_entries = read_manifest(args.dev_manifest or cfg.paths.dev_manifest)
    provider = FeatureProvider(cfg, train_entries + dev_entries,
                               augment_in_train=True)
    n_layers, feat_dim = stack_dims(cfg, provider,
                                    train_entries[0].utt_id)
    model = build_model(cfg, n_layers, feat_dim)
    result = train(manifest_examples(train_entries),
                   manifest_examples(dev_entries), provider, model,
                   cfg.optim.to_optim_config(), cfg.focal.to_params(),
                   target_dev_eer=args.target_dev_eer,
                   log=lambda msg: print(msg))
    out = Path(args.out or Path(cfg.paths.out_dir) / "model.ckpt")
    out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(result.checkpoint, out)
    print(f"best dev EER {result.checkpoint.dev_eer:.4f} at epoch "
          f"{result.checkpoint.epoch}; checkpoint -> {out}")
    return EXIT_OK


def cmd_score(args):
    cfg = _load_run_config(args)
    entries = read_manifest(args.manifest)
    provider = FeatureProvider(cfg, entries)
    n_layers, feat_dim = stack_dims(cfg, provider, entries[0].utt_id)
    model = build_model(cfg, n_layers, feat_dim)
    restore(model, load_checkpoint(args.checkpoint))
    scores = score_utterances(model, [e.utt_id for e in entries], provider,
                              jobs=args.jobs)
    write_score_file(scores, args.out)
    print(f"scored {len(scores)} utterances -> {args.out}")
    return EXIT_OK


def cmd_eval(args):
    entries = read_manifest(args.manifest)
    records = _map_records(entries, read_score_file(args.scores))
    result = compute_eer(records)
    print(f"EER {100.0 * result.eer:.4f}%")
    table = breakdown(records)
    labels = {"datasets": "dataset", "attacks": "attack", "pooled": "pooled"}
    for section in ("datasets", "attacks", "pooled"):
        for key, cell in table[section].items():
            shown = "absent" if cell is None else f"{100.0 * cell.eer:.4f}%"
            print(f"{labels[section]} {key}: {shown}")
    return EXIT_OK


def cmd_ensemble(args):
    members = [read_score_file(p) for p in args.scores]
    weights = args.weights
    if weights is not None and len(weights) != len(members):
        raise DataError(f"{len(members)} score files but "
                        f"{len(weights)} weights")
    write_score_file(ensemble(members, weights), args.out)
    print(f"ensembled {len(members)} members -> {args.out}")
    return EXIT_OK


def cmd_report(args):
    entries = read_manifest(args.manifest)
    breakdowns = {}
    for item in args.systems:
        if "=" not in item:
            raise DataError(f"system spec must be name=score_file, "
                            f"got {item!r}")
        name, _, path = item.partition("=")
        records = _map_records(entries, read_score_file(path))
        breakdowns[name] = breakdown(records)
    from .evaluation import emit_report
    paths = emit_report(breakdowns, args.out_dir)
    for kind, path in paths.items():
        print(f"{kind}: {path}")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="svdd",
                     description="Singing-voice deepfake detection pipeline")
    parser.add_argument("--config", help="YAML run configuration "
                        "(default: $SVDD_CONFIG)")
    parser.add_argument("--dump-config", action="store_true",
                        help="print the effective configuration and exit")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("augment", help="apply an augmentation chain",
                       parents=[], description="Apply a RawBoost chain "
                       "per utterance with a derived per-utterance seed.")
    p.add_argument("manifest")
    p.add_argument("--chain", default="none",
                   help="none | lnl | isd | ssi | series:a+b | parallel:a+b")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--jobs", type=int, default=1,
                   help="worker threads; 1 guarantees bit-determinism")
    p.set_defaults(fn=cmd_augment)

    p = sub.add_parser("encode", help="encode waveforms to feature files")
    p.add_argument("manifest")
    p.add_argument("--out-dir")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(fn=cmd_encode)

    p = sub.add_parser("train", help="train a detection model")
    p.add_argument("--train-manifest")
    p.add_argument("--dev-manifest")
    p.add_argument("--out", help="checkpoint path")
    p.add_argument("--target-dev-eer", type=float,
                   help="stop early when dev EER drops below this")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("score", help="score a manifest with a checkpoint")
    p.add_argument("manifest")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(fn=cmd_score)

    p = sub.add_parser("eval", help="EER breakdown of a score file")
    p.add_argument("manifest")
    p.add_argument("--scores", required=True)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("ensemble", help="weighted score-level average")
    p.add_argument("scores", nargs="+")
    p.add_argument("--weights", type=float, nargs="+")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_ensemble)

    p = sub.add_parser("report", help="CSV/JSON/SVG report for systems")
    p.add_argument("manifest")
    p.add_argument("--systems", nargs="+", required=True,
                   metavar="NAME=SCORES")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(fn=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.dump_config:
            print(dump_config(_load_run_config(args)), end="")
            return EXIT_OK
        if not getattr(args, "fn", None):
            parser.print_help()
            return EXIT_USAGE
        return args.fn(args)
    except (ConfigError, ParameterError, ValueError) as exc:
        if isinstance(exc, (ManifestError, EvaluationError,
                            FeatureFormatError, AudioFormatError)):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_DATA
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
