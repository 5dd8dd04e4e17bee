"""``scene-ensemble`` command line.

Exit codes: 0 success, 1 data error, 2 usage error.
"""

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import data, evaluation, features
from .config import PRESETS, ConfigError, load_run_config
from .models import (
    BUILDERS, MODEL_NAMES, ContainerError, ensemble_predict, load_checkpoint, predict,
    save_checkpoint, train_model, write_log_csv,
)
from .nn import ShapeError

log = logging.getLogger("scene_ensemble")

EXIT_OK, EXIT_DATA, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


def _positive_int(text):
    v = int(text)
    if v <= 0:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return v


def _add_config_flags(p, train=False):
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--preset", choices=sorted(PRESETS), help="named defaults applied before --config")
    p.add_argument("--seed", type=int, help="run seed (fallback: $SCENE_ENSEMBLE_SEED)")
    p.add_argument("--jobs", type=_positive_int)
    if train:
        p.add_argument("--epochs", type=_positive_int)
        p.add_argument("--lr", type=float)
        p.add_argument("--batch-size", type=_positive_int)


def _run_config(args):
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if getattr(args, "jobs", None) is not None:
        over["jobs"] = args.jobs
    train = {}
    for flag, key in (("epochs", "epochs"), ("lr", "lr"), ("batch_size", "batch_size")):
        v = getattr(args, flag, None)
        if v is not None:
            train[key] = v
    if getattr(args, "balanced", False):
        train["balanced"] = True
    if train:
        over["train"] = train
    if getattr(args, "weights", None):
        over["weights"] = args.weights
    try:
        return load_run_config(args.config, args.preset, over)
    except ConfigError as exc:
        raise UsageError(str(exc)) from None


def _resolve_split(rows, seed):
    """Fill split tags when the index carries none (segment-level, stratified)."""
    if all(r.split != "unassigned" for r in rows):
        return rows
    segs = features.group_by_segment(rows)
    entries = [v[0].entry() for v in segs.values()]
    try:
        train, val, test = data.split_dataset(entries, seed)
    except data.SplitError as exc:
        raise DataError(str(exc)) from None
    tag = {e.path: e.split for e in train + val + test}
    return [replace(r, split=tag[r.segment]) for r in rows]


# ---------------------------------------------------------------- commands

def cmd_synth(args):
    ds = data.generate_synthetic_dataset(args.n_per_class, args.seed, duration=args.duration,
                                         sample_rate=args.sample_rate, fast=args.fast)
    manifest = data.export_dataset(ds, args.out)
    print(f"wrote {len(ds)} segments and {manifest}")
    return EXIT_OK


def cmd_features(args):
    cfg = _run_config(args)
    manifest = Path(args.manifest)
    try:
        entries = data.load_manifest(manifest)
    except (OSError, data.ManifestError) as exc:
        raise DataError(str(exc)) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg.write(out / "run_config.json")
    base = manifest.parent

    def work(entry):
        try:
            seg = data.read_wav(base / entry.path, label=entry.label, expected_rate=cfg.dsp.sample_rate)
            return features.extract_to_files(entry, seg, cfg.dsp, out, force=args.force), None
        except (OSError, ValueError) as exc:
            return None, f"{entry.path}: {exc}"

    with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
        results = list(pool.map(work, entries))
    rows, written, errors = [], 0, []
    for res, err in results:
        if err:
            errors.append(err)
            continue
        rows.extend(res[0])
        written += res[1]
    features.write_index(rows, out / features.INDEX_NAME)
    for e in errors:
        print(f"error: {e}", file=sys.stderr)
    print(f"{written} feature files written, {len(rows) - written} up to date, {len(errors)} failed")
    return EXIT_DATA if errors else EXIT_OK


def cmd_train(args):
    cfg = _run_config(args)
    feat_dir = Path(args.features)
    try:
        rows = _resolve_split(features.read_index(feat_dir), cfg.seed)
        tr = [r for r in rows if r.split == "train"]
        va = [r for r in rows if r.split == "val"]
        if not tr or not va:
            raise DataError("need non-empty train and val splits")
        first = features.read_feature_file(feat_dir / tr[0].file)
        n_frames, n_mfcc = first[1].shape
        builder = BUILDERS[args.model]
        if args.model == "cnn2d":
            model = builder(image_size=first[0].shape[0], seed=cfg.seed)
        else:
            model = builder(n_frames=n_frames, n_mfcc=n_mfcc, seed=cfg.seed)
        x_tr, y_tr = features.load_examples(tr, feat_dir, args.model)
        x_va, y_va = features.load_examples(va, feat_dir, args.model)
    except ShapeError as exc:
        raise DataError(f"features do not fit model {args.model}: {exc}") from None
    except (OSError, ValueError) as exc:
        raise DataError(str(exc)) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg.write(out / f"{args.model}_run_config.json")
    result = train_model(model, (x_tr, y_tr), (x_va, y_va), cfg.train)
    ckpt_path = out / f"{args.model}.sens"
    save_checkpoint(result.checkpoint, ckpt_path)
    write_log_csv(result.log, out / f"{args.model}_log.csv")
    best = result.log[result.best_epoch - 1]
    print(f"{args.model}: best epoch {result.best_epoch}, val macro-F1 {evaluation.fmt_pct(best['val_macro_f1'])}")
    print(f"checkpoint: {ckpt_path}")
    return EXIT_OK


def evaluate_segments(models, weights, segments):
    """Confusion matrix of the weighted ensemble (or a single model)."""
    cm = evaluation.ConfusionMatrix()
    for label, imgs, mfs in segments:
        posts = [predict(m, imgs if m.name == "cnn2d" else mfs) for m in models]
        if len(posts) == 1:
            p = posts[0]
        else:
            p = ensemble_predict(*posts, weights)
        cm.accumulate(label, int(np.argmax(p)))
    return cm


def cmd_evaluate(args):
    cfg = _run_config(args)
    if args.single:
        if len(args.checkpoints) < 1:
            raise UsageError("--single needs one checkpoint")
        paths = args.checkpoints[:1]
    elif len(args.checkpoints) != 3:
        raise UsageError("evaluate needs three checkpoints (2D CNN, 1D CNN, LSTM) unless --single is given")
    else:
        paths = args.checkpoints
    try:
        models = [load_checkpoint(p) for p in paths]
        names = [m.name for m in models]
        if not args.single and names != list(MODEL_NAMES):
            raise UsageError(f"checkpoints must be ordered {', '.join(MODEL_NAMES)}; got {', '.join(names)}")
        feat_dir = Path(args.features)
        rows = features.read_index(feat_dir)
        if args.split != "all":
            rows = [r for r in _resolve_split(rows, cfg.seed) if r.split == args.split]
        if not rows:
            raise DataError(f"no feature rows in split {args.split!r}")
        segments = features.load_segments(rows, feat_dir)
        cm = evaluate_segments(models, cfg.weights, segments)
    except ShapeError as exc:
        raise DataError(f"features do not fit checkpoint: {exc}") from None
    except (OSError, ContainerError, ValueError) as exc:
        raise DataError(str(exc)) from None
    report = evaluation.MetricReport.from_confusion(cm)
    report.metadata.update({
        "weights": list(cfg.weights.as_tuple()) if not args.single else [1.0, 0.0, 0.0],
        "checkpoints": [str(p) for p in paths],
        "segments": cm.total,
        "confusion": cm.counts.tolist(),
    })
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg.write(out / "run_config.json")
    for fmt, ext in (("text", "txt"), ("csv", "csv"), ("json", "json")):
        (out / f"report.{ext}").write_text(evaluation.render_report(report, fmt), encoding="utf-8")
    print(evaluation.render_report(report, args.format), end="")
    return EXIT_OK


def _load_matrix(path):
    text = Path(path).read_text(encoding="utf-8")
    try:
        m = np.array(json.loads(text), dtype=np.int64)
    except json.JSONDecodeError:
        m = np.loadtxt(path, dtype=np.int64, ndmin=2)
    if m.shape != (9, 9):
        raise DataError(f"{path}: expected a 9x9 matrix, got {m.shape}")
    return m


def cmd_oracle_check(args):
    counts = _load_matrix(args.matrix) if args.matrix else evaluation.REFERENCE_CONFUSION
    ok, failures = evaluation.oracle_check(counts)
    _, _, f1 = evaluation.per_class_f1(counts)
    if args.json:
        print(json.dumps({
            "pass": ok,
            "f1": dict(zip(evaluation.CLASS_NAMES, [round(float(v), 4) for v in f1])),
            "macro_f1": round(evaluation.macro_f1(f1), 4),
            "failures": failures,
        }, indent=2))
    else:
        for name, got, want in zip(evaluation.CLASS_NAMES, f1, evaluation.REFERENCE_F1):
            print(f"{name:<18} computed {evaluation.fmt_pct(got):>6}  reference {evaluation.fmt_pct(want):>6}")
        print(f"{'Macro F1':<18} computed {evaluation.fmt_pct(evaluation.macro_f1(f1)):>6}  "
              f"reference {evaluation.fmt_pct(evaluation.REFERENCE_MACRO_F1):>6}")
        for f in failures:
            print(f"FAIL {f['class']}: computed {f['computed']:.4f}, expected {f['expected']:.2f}")
        print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_DATA


# ---------------------------------------------------------------- parser

def build_parser():
    parser = argparse.ArgumentParser(prog="scene-ensemble", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate the synthetic nine-class corpus")
    p.add_argument("--n-per-class", type=_positive_int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--duration", type=float, default=10.0)
    p.add_argument("--sample-rate", type=_positive_int, default=16000)
    p.add_argument("--fast", action="store_true", help="one-second segments")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("features", help="extract spectrogram images and MFCCs")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true", help="rewrite existing feature files")
    _add_config_flags(p)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("train", help="train one classifier")
    p.add_argument("--model", required=True, choices=MODEL_NAMES)
    p.add_argument("--features", required=True, help="feature directory (with index.tsv)")
    p.add_argument("--out", required=True)
    p.add_argument("--balanced", action="store_true", help="class-balanced resampling")
    _add_config_flags(p, train=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate the weighted ensemble")
    p.add_argument("--checkpoints", nargs="+", required=True, help="2D CNN, 1D CNN, LSTM checkpoints")
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--weights", help="w1,w2,w3")
    p.add_argument("--single", action="store_true", help="evaluate only the first checkpoint")
    p.add_argument("--split", default="test", choices=["train", "val", "test", "all"])
    p.add_argument("--format", default="text", choices=["text", "csv", "json"])
    _add_config_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("oracle-check", help="recompute the reference F1 column from its confusion matrix")
    p.add_argument("--json", action="store_true")
    p.add_argument("--matrix", help="alternative 9x9 matrix (JSON or whitespace table)")
    p.set_defaults(func=cmd_oracle_check)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
