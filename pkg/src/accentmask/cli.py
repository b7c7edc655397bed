"""``accentmask`` command-line entry point.

Exit codes: 0 success, 1 validation or format error, 2 some rows failed.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, classifier, corpus, frontend, masking, metrics, pipeline, rng, saliency
from .errors import AccentMaskError, ValidationError
from .gridio import atomic_write

EXIT_OK, EXIT_INVALID, EXIT_PARTIAL = 0, 1, 2
SEED_ENV = "ACCENTMASK_SEED"

log = logging.getLogger("accentmask")


def resolve_seed(value: int | None) -> int:
    if value is not None:
        return value
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise ValidationError(f"{SEED_ENV}={env!r} is not an integer") from None
    return rng.DEFAULT_SEED


def _write_json(path, obj) -> None:
    atomic_write(Path(path), (json.dumps(obj, indent=2, ensure_ascii=False) + "\n").encode("utf-8"))


def _policy(args) -> masking.MaskPolicy:
    return masking.MaskPolicy(
        t_enter=args.t_enter, t_mid=args.t_mid, t_high=args.t_high,
        mid_band=(args.mid_lo, args.mid_hi), low_band=(args.low_lo, args.low_hi),
        granularity=args.granularity,
    )


def _target(value: str):
    if value in ("predicted", "label"):
        return value
    try:
        return int(value)
    except ValueError:
        raise argparse.ArgumentTypeError("target must be 'predicted', 'label' or a class index") from None


def _report_rows(result: pipeline.StageResult, what: str) -> int:
    for err in result.errors:
        print(f"error: {err['id']}: {err['error']}", file=sys.stderr)
    print(f"{what}: {len(result.rows)} rows written to {result.manifest}"
          + (f", {len(result.errors)} failed" if result.errors else ""))
    return EXIT_PARTIAL if result.errors else EXIT_OK


# -- subcommands ------------------------------------------------------------

def cmd_featurize(args) -> int:
    result = pipeline.featurize_corpus(args.manifest, args.out_dir, args.n_frames, args.jobs)
    return _report_rows(result, "featurize")


def _training_sets(args):
    manifest = Path(args.manifest)
    records = corpus.load_manifest(manifest)
    train_recs = [r for r in records if r.split == "train"]
    dev_recs = [r for r in records if r.split == "dev"]
    if not train_recs:
        raise ValidationError("manifest has no train-split records")
    vocab = sorted({r.accent for r in train_recs})
    unknown = sorted({r.accent for r in dev_recs} - set(vocab))
    if unknown:
        raise ValidationError(f"dev accents absent from the training labels: {unknown}")

    def load(recs):
        return [(pipeline.load_spectrogram(r, manifest.parent, args.n_frames, args.features), r.accent)
                for r in recs]

    return vocab, load(train_recs), load(dev_recs)


def cmd_train(args) -> int:
    seed = resolve_seed(args.seed)
    vocab, train_set, dev_set = _training_sets(args)
    shapes = {spec.shape for spec, _ in train_set + dev_set}
    if len(shapes) != 1:
        raise ValidationError(f"spectrograms have mixed shapes {sorted(shapes)}")
    (n_mels, n_frames), = shapes
    config = classifier.ClassifierConfig(n_classes=len(vocab), input_shape=(1, n_mels, n_frames))
    model = classifier.build(config, seed, vocab)
    opts = classifier.TrainOptions(epochs=args.epochs, batch=args.batch, lr=args.lr,
                                   specaugment=args.specaugment, seed=seed)
    report = classifier.train(model, train_set, opts, validation=dev_set or None)
    classifier.save_checkpoint(model, args.checkpoint)
    out = report.to_dict()
    if report.epochs:
        out["final_train_accuracy"] = report.epochs[-1].train_accuracy
        out["final_val_accuracy"] = report.epochs[-1].val_accuracy
    out.update(seed=seed, checkpoint=str(args.checkpoint), n_train=len(train_set), n_dev=len(dev_set))
    report_path = args.report or Path(args.checkpoint).with_suffix(".report.json")
    _write_json(report_path, out)
    for e in report.epochs:
        val = "-" if e.val_accuracy is None else f"{e.val_accuracy:.3f}"
        print(f"epoch {e.epoch}: loss {e.train_loss:.4f}  train_acc {e.train_accuracy:.3f}  val_acc {val}")
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(f"checkpoint: {args.checkpoint}\nreport: {report_path}")
    return EXIT_OK


def cmd_saliency(args) -> int:
    model = classifier.load_checkpoint(args.checkpoint)
    spec = frontend.read_spectrogram(args.spec)
    if args.target == "label":
        raise ValidationError("--target label needs a manifest; use 'predicted' or an index")
    sal = saliency.compute(model, spec, args.method, args.target)
    saliency.write_saliency(sal, args.out)
    print(f"target={sal.target} label={model.labels[sal.target]} method={sal.method} out={args.out}")
    return EXIT_OK


def cmd_mask(args) -> int:
    seed = resolve_seed(args.seed)
    policy = _policy(args)
    spec = frontend.read_spectrogram(args.spec)
    sal = saliency.read_saliency(args.smap)
    mask = masking.build_mask(sal, policy, seed, shape=spec.shape)
    frontend.write_spectrogram(masking.apply_mask(spec, mask), args.out)
    if args.mask_out:
        masking.write_mask(mask, args.mask_out)
    stats = masking.mask_stats((mask, sal), policy)
    stats.update(seed=seed, policy=policy.to_dict(), policy_hash=policy.hash())
    if args.stats_out:
        _write_json(args.stats_out, stats)
    print(json.dumps(stats, indent=2))
    return EXIT_OK


def cmd_augment(args) -> int:
    seed = resolve_seed(args.seed)
    model = classifier.load_checkpoint(args.checkpoint)
    result = pipeline.build_augmented_corpus(args.manifest, model, _policy(args), seed, args.out_dir,
                                             args.jobs, args.method, args.target)
    return _report_rows(result, "augment")


def _read_texts(path) -> dict[str, str]:
    texts = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                uid, text = str(row["id"]), row["text"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ValidationError(f"{path}:{lineno}: expected {{id, text}} ({exc})") from None
            if uid in texts:
                raise ValidationError(f"{path}:{lineno}: duplicate id {uid!r}")
            texts[uid] = text
    return texts


def cmd_score(args) -> int:
    ids, refs, hyps = metrics.pair_by_id(_read_texts(args.ref), _read_texts(args.hyp))
    w = metrics.wer(refs, hyps, args.lang, ids)
    c = metrics.cer(refs, hyps, args.lang, ids)
    width = max([len("id"), *map(len, ids)])
    print(f"{'id':<{width}}  {'ref_words':>9}  {'S':>4} {'I':>4} {'D':>4}  {'WER%':>7}  {'CER%':>7}")
    for wp, cp in zip(w.per_utterance, c.per_utterance):
        wr = "-" if wp.rate is None else f"{wp.rate:.1f}"
        cr = "-" if cp.rate is None else f"{cp.rate:.1f}"
        print(f"{wp.id:<{width}}  {len(wp.ref):>9}  {wp.substitutions:>4} {wp.insertions:>4} "
              f"{wp.deletions:>4}  {wr:>7}  {cr:>7}")
    print(f"corpus WER {w.rate:.2f}%  CER {c.rate:.2f}%  (normalization v{metrics.NORMALIZATION_VERSION}, {args.lang})")
    if args.out:
        _write_json(args.out, {
            "wer": w.rate, "cer": c.rate, "lang": args.lang,
            "normalization_version": metrics.NORMALIZATION_VERSION,
            "per_utt": [{"id": wp.id, "wer": wp.rate, "cer": cp.rate,
                         "S": wp.substitutions, "I": wp.insertions, "D": wp.deletions,
                         "ref_words": len(wp.ref), "ref_chars": len(cp.ref)}
                        for wp, cp in zip(w.per_utterance, c.per_utterance)],
        })
    return EXIT_OK


def cmd_stats(args) -> int:
    records = corpus.load_manifest(args.manifest)
    if args.holdout:
        _, test_only = corpus.split_holdout(records, args.holdout)
        held = {r.id for r in test_only}
        records = [r for r in records if r.id not in held]
    st = corpus.stats(records)
    print(st.render(total_label=args.total_label))
    if args.json:
        _write_json(args.json, st.to_dict())
    return EXIT_OK


# -- argument parsing -------------------------------------------------------

def _add_common(p: argparse.ArgumentParser, seed: bool = True, jobs: bool = False) -> None:
    if seed:
        p.add_argument("--seed", type=int, default=None,
                       help=f"global seed (default: ${SEED_ENV} if set, else {rng.DEFAULT_SEED})")
    if jobs:
        p.add_argument("--jobs", type=int, default=None,
                       help="worker threads for per-utterance work (default: one per logical core)")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")


def _add_policy(p: argparse.ArgumentParser) -> None:
    d = masking.MaskPolicy()
    g = p.add_argument_group("mask policy")
    g.add_argument("--t-enter", type=float, default=d.t_enter, help="saliency above which pixels become candidates")
    g.add_argument("--t-mid", type=float, default=d.t_mid, help="lower edge of the mid band")
    g.add_argument("--t-high", type=float, default=d.t_high, help="saliency at or above which pixels are always masked")
    g.add_argument("--mid-lo", type=float, default=d.mid_band[0], help="mid-band mask probability, lower bound")
    g.add_argument("--mid-hi", type=float, default=d.mid_band[1], help="mid-band mask probability, upper bound")
    g.add_argument("--low-lo", type=float, default=d.low_band[0], help="low-band mask probability, lower bound")
    g.add_argument("--low-hi", type=float, default=d.low_band[1], help="low-band mask probability, upper bound")
    g.add_argument("--granularity", choices=masking.GRANULARITIES, default=d.granularity,
                   help="draw the band probability once per pixel or once per utterance")


def _add_saliency_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--method", choices=saliency.METHODS, default="gradcam", help="saliency method")
    p.add_argument("--target", type=_target, default="predicted",
                   help="class to explain: 'predicted', 'label' (augment only) or an index")


class _HelpFormatter(argparse.HelpFormatter):
    """Appends ``(default: X)`` to optional flags that have a concrete default."""

    def __init__(self, prog):
        super().__init__(prog, width=88, max_help_position=32)

    def _get_help_string(self, action):
        text = action.help or ""
        if (action.option_strings and not action.required and action.default is not None
                and action.default is not argparse.SUPPRESS and "%(default)" not in text
                and not isinstance(action, (argparse._HelpAction, argparse._VersionAction))):
            text += " (default: %(default)s)"
        return text


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="accentmask", formatter_class=_HelpFormatter,
        description="Saliency-driven accent masking of log-mel spectrograms.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, fn, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text, formatter_class=_HelpFormatter)
        p.set_defaults(func=fn)
        return p

    p = add("featurize", cmd_featurize, "Write one SPEC log-mel file per manifest row.")
    p.add_argument("--manifest", required=True, type=Path, help="input JSONL manifest")
    p.add_argument("--out-dir", required=True, type=Path, help="directory for SPEC files and features.jsonl")
    p.add_argument("--n-frames", type=int, default=frontend.N_FRAMES, help="frames after pad/trim")
    _add_common(p, seed=False, jobs=True)

    p = add("train", cmd_train, "Train the CNN accent classifier.")
    p.add_argument("--manifest", required=True, type=Path,
                   help="manifest (rows with spec_path, or audio to featurize on the fly)")
    p.add_argument("--features", type=Path, default=None, help="directory of <id>.spec files")
    p.add_argument("--checkpoint", required=True, type=Path, help="output checkpoint path")
    p.add_argument("--report", type=Path, default=None,
                   help="report JSON path (default: next to the checkpoint)")
    p.add_argument("--epochs", type=int, default=10, help="training epochs")
    p.add_argument("--batch", type=int, default=8, help="mini-batch size")
    p.add_argument("--lr", type=float, default=1e-3, help="Adam learning rate")
    p.add_argument("--specaugment", action="store_true", help="apply SpecAugment to training inputs")
    p.add_argument("--n-frames", type=int, default=frontend.N_FRAMES,
                   help="frames when featurizing audio on the fly")
    _add_common(p)

    p = add("saliency", cmd_saliency, "Compute a saliency map (SMAP) for one spectrogram.")
    p.add_argument("--checkpoint", required=True, type=Path, help="classifier checkpoint")
    p.add_argument("--spec", required=True, type=Path, help="input SPEC file")
    p.add_argument("--out", required=True, type=Path, help="output SMAP file")
    _add_saliency_flags(p)
    _add_common(p, seed=False)

    p = add("mask", cmd_mask, "Mask a spectrogram with its saliency map.")
    p.add_argument("--spec", required=True, type=Path, help="input SPEC file")
    p.add_argument("--smap", required=True, type=Path, help="input SMAP file")
    p.add_argument("--out", required=True, type=Path, help="output masked SPEC file")
    p.add_argument("--mask-out", type=Path, default=None, help="also write the MASK file")
    p.add_argument("--stats-out", type=Path, default=None, help="also write mask statistics JSON")
    _add_policy(p)
    _add_common(p)

    p = add("augment", cmd_augment, "Build the augmented corpus (originals plus masked copies).")
    p.add_argument("--manifest", required=True, type=Path, help="input manifest")
    p.add_argument("--checkpoint", required=True, type=Path, help="classifier checkpoint")
    p.add_argument("--out-dir", required=True, type=Path, help="output directory")
    _add_saliency_flags(p)
    _add_policy(p)
    _add_common(p, jobs=True)

    p = add("score", cmd_score, "WER/CER of hypotheses against references.")
    p.add_argument("--ref", required=True, type=Path, help="reference JSONL with {id, text}")
    p.add_argument("--hyp", required=True, type=Path, help="hypothesis JSONL with {id, text}")
    p.add_argument("--lang", choices=("en", "fa"), default="en", help="text normalization language")
    p.add_argument("--out", type=Path, default=None, help="JSON report path")
    _add_common(p, seed=False)

    p = add("stats", cmd_stats, "Per-accent sample and hour totals.")
    p.add_argument("--manifest", required=True, type=Path, help="input manifest")
    p.add_argument("--holdout", nargs="*", default=[], help="accents excluded as test-only")
    p.add_argument("--total-label", default="Total", help="label of the totals row")
    p.add_argument("--json", type=Path, default=None, help="also write statistics JSON")
    _add_common(p, seed=False)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    if hasattr(args, "jobs"):
        if args.jobs is None:
            args.jobs = os.cpu_count() or 1
        elif args.jobs < 1:
            parser.error("--jobs must be >= 1")
    try:
        return args.func(args)
    except (AccentMaskError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
