"""Command-line entry point: ``realign synth | init | train | eval <analysis>``.

Every command writes into a fresh output directory containing exactly one
``manifest.txt`` next to its RTF/CSV artifacts.  Options may also come from a
``--config`` file of ``key=value`` lines; explicit flags win over the file,
which wins over built-in defaults.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric degeneracy.
"""
from __future__ import annotations

import argparse
import csv
import sys
import time
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .data import datasets as dsio
from .data.datasets import DataError, average_repetitions, pool_across_subjects
from .data.rtf import RtfError
from .data.synth import synth_generate
from .evaluation import eeg_curves, fmri_layer_rdms, fmri_scores, layer_rdms, timepoints_ms, window_score
from .models import STAGES, EncodingHead, MiniCor
from .rsa.analyses import cross_subject_matrix, feature_profile, fmri_similarity, improvement_stats, variability
from .rsa.decoding import N_EPOCHS, eeg_decoding_rdms
from .rsa.rdm import feature_rdms, fmri_rdm
from .rsa.stats import stats_battery
from .trainer import CONTROL_MODES, AlignmentConfig, load_checkpoint, save_checkpoint, train_alignment

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
MANIFEST = "manifest.txt"


class UsageError(Exception):
    pass


class NumericDegeneracy(Exception):
    pass


# ---------------------------------------------------------------------------
# small helpers


def _prepare_out(path, force: bool) -> Path:
    out = Path(path)
    if out.exists() and not out.is_dir():
        raise UsageError(f"--out {out} exists and is not a directory")
    if out.exists() and any(out.iterdir()) and not force:
        raise UsageError(f"--out {out} is not empty (use --force to overwrite)")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[object]]) -> Path:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return str(v)


def _write_manifest(out: Path, args: argparse.Namespace, seeds: dict, inputs: Sequence, outputs: Sequence, start: float, extra=None) -> None:
    entries: dict[str, object] = {"command": _command_name(args), "version": f"realign-v{__version__}"}
    for k, v in sorted(vars(args).items()):
        if k.startswith("_") or k in ("func", "command", "eval_command"):
            continue
        entries[f"config.{k}"] = ",".join(map(str, v)) if isinstance(v, (list, tuple)) else v
    for k, v in seeds.items():
        entries[f"seed.{k}"] = v
    entries["inputs"] = ",".join(str(p) for p in inputs)
    entries["outputs"] = ",".join(Path(p).name for p in outputs)
    for k, v in (extra or {}).items():
        entries[k] = v
    entries["wall_clock_s"] = f"{time.perf_counter() - start:.3f}"
    dsio.write_manifest(out / MANIFEST, entries)


def _command_name(args) -> str:
    return " ".join(x for x in (args.command, getattr(args, "eval_command", None)) if x)


def _load_model(path, images: np.ndarray) -> MiniCor:
    path = Path(path)
    if not path.exists() or not path.with_suffix(".txt").exists():
        raise DataError(f"checkpoint {path} (or its .txt manifest) not found")
    model, _ = load_checkpoint(path)
    spec = model.spec
    expected = (spec.in_channels, spec.image_size, spec.image_size)
    if tuple(images.shape[1:]) != expected:
        raise DataError(f"checkpoint {path.name} expects images {expected}, data has {tuple(images.shape[1:])}")
    return model


def _subjects(root, requested) -> list[str]:
    available = dsio.subject_ids(root)
    if not available:
        raise DataError(f"no eeg_*.rtf files in {root}")
    if not requested:
        return available
    missing = [s for s in requested if s not in available]
    if missing:
        raise DataError(f"unknown subject(s) {missing}; available: {available}")
    return list(requested)


def _test_rdms(root, subject: str, seed: int, jobs: int, svm_epochs: int):
    _, test = dsio.load_eeg(root, subject)
    return test, eeg_decoding_rdms(test.eeg, seed=seed, subject=subject, jobs=jobs, n_epochs=svm_epochs)


# ---------------------------------------------------------------------------
# commands


def cmd_synth(args) -> list[Path]:
    out = _prepare_out(args.out, args.force)
    bundle = synth_generate(args.images, args.subjects, args.latents, args.seed, noise=args.noise, n_test=args.test_images)
    written = [out / "images.rtf", out / "labels_train.txt", out / "labels_test.txt"]
    dsio.save_images(out, bundle.train_images, bundle.test_images, bundle.fmri_images)
    first = bundle.subjects[0]
    dsio.save_labels(out, bundle.eeg_train[first], bundle.eeg_test[first])
    for s in bundle.subjects:
        dsio.save_eeg(out, bundle.eeg_train[s], bundle.eeg_test[s])
        written.append(out / f"eeg_{s}.rtf")
    for ds in bundle.fmri.values():
        dsio.save_fmri(out, ds)
        written.append(out / f"fmri_{ds.subject}.rtf")
    written.append(out / "fmri_categories.txt")
    dsio.save_features(out, bundle.features)
    written += [out / "features.rtf", out / "feature_names.txt"]
    extra = {"n_train": len(bundle.train_images), "n_test": len(bundle.test_images), "subjects": ",".join(bundle.subjects)}
    _write_manifest(out, args, {"data": args.seed}, [], written, args._start, extra)
    return written


def cmd_init(args) -> list[Path]:
    out = _prepare_out(args.out, args.force)
    ckpt = save_checkpoint(out / "checkpoint.rtf", MiniCor(seed=args.seed))
    written = [ckpt, ckpt.with_suffix(".txt")]
    _write_manifest(out, args, {"init": args.seed}, [], written, args._start)
    return written


def cmd_train(args) -> list[Path]:
    if bool(args.subject) == bool(args.across_subjects):
        raise UsageError("train: give exactly one of --subject or --across-subjects")
    root = Path(args.data)
    if args.across_subjects:
        subjects = _subjects(root, None)
        dataset = pool_across_subjects([average_repetitions(dsio.load_eeg(root, s)[0]) for s in subjects])
        pooling = "across_subject"
    else:
        subjects = _subjects(root, [args.subject])
        dataset = average_repetitions(dsio.load_eeg(root, args.subject)[0])
        pooling = "per_subject"
    try:
        config = AlignmentConfig(
            beta=args.beta,
            lr=args.lr,
            epochs=args.epochs,
            batch_size=args.batch,
            seed=args.seed,
            control=args.control,
            exclude_labels=tuple(args.exclude_label or ()),
            pooling=pooling,
            zscore=args.zscore,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    model = _load_model(args.init, dataset.images) if args.init else MiniCor(seed=args.init_seed)
    head = EncodingHead.for_backbone(model, dataset.channels * dataset.timepoints, seed=args.init_seed + 1)
    out = _prepare_out(args.out, args.force)
    report = train_alignment(model, head, dataset, config, out_dir=out)
    written = [out / "checkpoint.rtf", out / "checkpoint.txt", out / "report.csv"]
    seeds = {"train": args.seed, "init": args.init_seed}
    extra = {"subjects": ",".join(subjects), "n_train": report.n_train}
    if report.control_seed is not None:
        seeds["control_permutation"] = report.control_seed
    for k, v in report.filter_counts.items():
        extra[f"filter.{k}"] = v
    _write_manifest(out, args, seeds, [root] + ([args.init] if args.init else []), written, args._start, extra)
    return written


def cmd_eval_eeg(args) -> list[Path]:
    root = Path(args.data)
    subjects = _subjects(root, args.subject)
    images = dsio.load_eeg(root, subjects[0])[1].images
    models = {"model": _load_model(args.checkpoint, images)}
    if args.baseline:
        models["baseline"] = _load_model(args.baseline, images)
    rdms = {name: layer_rdms(m, images, model_id=name) for name, m in models.items()}
    out = _prepare_out(args.out, args.force)
    curve_rows, summary_rows, delta_rows = [], [], []
    for s in subjects:
        _, eeg = _test_rdms(root, s, args.seed, args.jobs, args.svm_epochs)
        ms = timepoints_ms(len(eeg))
        curves = {name: eeg_curves(r, eeg, s, name) for name, r in rdms.items()}
        for name, cs in curves.items():
            for layer, c in cs.items():
                curve_rows += [(name, s, layer, float(t), float(r)) for t, r in zip(ms, c.rho)]
            summary_rows.append((name, s, window_score(cs)))
        if args.baseline:
            for layer, imp in improvement_stats(curves["model"], curves["baseline"]).items():
                delta_rows.append((s, layer, float(ms[imp.peak_index]), imp.baseline, imp.aligned, imp.delta, imp.ratio))
    written = [
        _write_csv(out / "curves.csv", ("model", "subject", "layer", "timepoint_ms", "rho"), curve_rows),
        _write_csv(out / "summary.csv", ("model", "subject", "window_rho"), summary_rows),
    ]
    if args.baseline:
        header = ("subject", "layer", "peak_timepoint_ms", "baseline_rho", "model_rho", "delta", "ratio")
        written.append(_write_csv(out / "delta.csv", header, delta_rows))
    _write_manifest(out, args, {"decoding": args.seed}, [root, args.checkpoint] + ([args.baseline] if args.baseline else []), written, args._start)
    return written


def cmd_eval_fmri(args) -> list[Path]:
    root = Path(args.data)
    images, fmri = dsio.load_fmri(root)
    if not fmri:
        raise DataError(f"no fmri_*.rtf files in {root}")
    models = {"model": _load_model(args.checkpoint, images)}
    if args.baseline:
        models["baseline"] = _load_model(args.baseline, images)
    cats = fmri[0].categories
    out = _prepare_out(args.out, args.force)
    rows, scores = [], {}
    for name, m in models.items():
        by_cat = fmri_layer_rdms(m, images, cats)
        scores[name] = fmri_scores(by_cat, fmri)
        for ds in fmri:
            for cat, layer_set in by_cat.items():
                idx = ds.category_index(cat)
                for roi, patterns in ds.rois.items():
                    per_layer, best = fmri_similarity(layer_set, fmri_rdm(patterns[idx], roi, ds.subject))
                    rows += [(name, ds.subject, cat, roi, layer, rho) for layer, rho in per_layer.items()]
                    rows.append((name, ds.subject, cat, roi, "max", best))
    written = [_write_csv(out / "fmri.csv", ("model", "subject", "category", "roi", "layer", "rho"), rows)]
    if args.baseline:
        drows = [
            (*key, scores["baseline"][key], scores["model"][key], scores["model"][key] - scores["baseline"][key])
            for key in scores["model"]
        ]
        header = ("subject", "category", "roi", "baseline_rho", "model_rho", "delta")
        written.append(_write_csv(out / "fmri_delta.csv", header, drows))
    _write_manifest(out, args, {}, [root, args.checkpoint] + ([args.baseline] if args.baseline else []), written, args._start)
    return written


def cmd_eval_variability(args) -> list[Path]:
    if len(args.checkpoints) < 2:
        raise UsageError("variability needs at least two --checkpoints")
    root = Path(args.data)
    images = dsio.load_eeg(root, _subjects(root, None)[0])[1].images
    labels = list(args.labels) if args.labels else [Path(p).parent.name or str(p) for p in args.checkpoints]
    if len(labels) != len(args.checkpoints):
        raise UsageError("--labels must match --checkpoints in length")
    per_model = [layer_rdms(_load_model(p, images), images) for p in args.checkpoints]
    out = _prepare_out(args.out, args.force)
    rows, index_rows = [], []
    for layer in STAGES:
        v = variability([r[layer] for r in per_model], layer, labels)
        k = len(labels)
        rows += [(layer, labels[i], labels[j], v.values[i, j]) for i in range(k) for j in range(k) if i != j]
        index_rows.append((layer, v.index))
    written = [
        _write_csv(out / "variability.csv", ("layer", "model_a", "model_b", "dissimilarity"), rows),
        _write_csv(out / "variability_index.csv", ("layer", "index"), index_rows),
    ]
    _write_manifest(out, args, {}, [root, *args.checkpoints], written, args._start)
    return written


def cmd_eval_cross_subject(args) -> list[Path]:
    root = Path(args.data)
    subjects = _subjects(root, args.subjects)
    if len(args.checkpoints) != len(subjects):
        raise UsageError(f"cross-subject: {len(args.checkpoints)} checkpoints for {len(subjects)} subjects")
    images = dsio.load_eeg(root, subjects[0])[1].images
    model_rdms = [layer_rdms(_load_model(p, images), images) for p in args.checkpoints]
    base_rdms = layer_rdms(_load_model(args.baseline, images), images) if args.baseline else None
    cells = np.zeros((len(subjects), len(subjects)))
    base_row = np.zeros(len(subjects)) if base_rdms else None
    for j, s in enumerate(subjects):
        _, eeg = _test_rdms(root, s, args.seed, args.jobs, args.svm_epochs)
        for i, r in enumerate(model_rdms):
            cells[i, j] = window_score(eeg_curves(r, eeg))
        if base_rdms:
            base_row[j] = window_score(eeg_curves(base_rdms, eeg))
    res = cross_subject_matrix(cells, base_row)
    out = _prepare_out(args.out, args.force)
    rows = []
    for i, m in enumerate(subjects):
        for j, s in enumerate(subjects):
            sub = res.baseline_subtracted[i, j] if res.baseline_subtracted is not None else None
            rows.append((m, s, cells[i, j], sub, res.normalized[i, j]))
    t = res.test
    written = [
        _write_csv(out / "cross_subject.csv", ("model", "subject", "rho", "baseline_subtracted", "normalized"), rows),
        _write_csv(
            out / "cross_subject_test.csv",
            ("comparison", "n", "mean", "t", "df", "p", "d", "degenerate"),
            [("matched_vs_mismatched", t.n, t.mean, t.t, t.df, t.p, t.d, t.degenerate)],
        ),
    ]
    _write_manifest(out, args, {"decoding": args.seed}, [root, *args.checkpoints], written, args._start)
    if res.degenerate:
        raise NumericDegeneracy("cross-subject test is degenerate (zero variance of differences)")
    return written


def cmd_eval_features(args) -> list[Path]:
    root = Path(args.data)
    emb = dsio.load_features(args.features or root)
    images = dsio.load_eeg(root, _subjects(root, None)[0])[1].images
    if len(emb.values) != len(images):
        raise DataError(f"feature embedding has {len(emb.values)} rows for {len(images)} test images")
    if args.top < 1:
        raise UsageError("--top must be >= 1")
    feats = feature_rdms(emb)
    models = {"model": _load_model(args.checkpoint, images)}
    if args.baseline:
        models["baseline"] = _load_model(args.baseline, images)
    profiles = {name: feature_profile(layer_rdms(m, images, [args.layer])[args.layer], feats) for name, m in models.items()}
    out = _prepare_out(args.out, args.force)
    rows = [(name, args.layer, dim, pc.r2) for name, prof in profiles.items() for dim, pc in prof.items()]
    if args.baseline:
        deltas = [(dim, profiles["baseline"][dim].r2, profiles["model"][dim].r2) for dim in profiles["model"]]
        ranked = sorted(deltas, key=lambda x: (-(x[2] - x[1]), x[0]))[: args.top]
        top = [(k + 1, dim, b, m, m - b) for k, (dim, b, m) in enumerate(ranked)]
        top_header = ("rank", "dimension", "baseline_partial_r2", "model_partial_r2", "delta")
    else:
        ranked = sorted(profiles["model"].items(), key=lambda x: (-x[1].r2, x[0]))[: args.top]
        top = [(k + 1, dim, pc.r2) for k, (dim, pc) in enumerate(ranked)]
        top_header = ("rank", "dimension", "model_partial_r2")
    written = [
        _write_csv(out / "features.csv", ("model", "layer", "dimension", "partial_r2"), rows),
        _write_csv(out / "top.csv", top_header, top),
    ]
    _write_manifest(out, args, {}, [root, args.checkpoint], written, args._start)
    return written


def _sample_from(paths: Sequence[str], column: str, row_filter: str | None) -> np.ndarray:
    values = []
    for p in paths:
        with open(p, encoding="utf-8", newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows or column not in rows[0]:
            raise DataError(f"{p}: no column {column!r}")
        if row_filter:
            key, _, want = row_filter.partition("=")
            rows = [r for r in rows if r.get(key) == want]
            if not rows:
                raise DataError(f"{p}: no rows with {row_filter}")
        values.append(float(np.mean([float(r[column]) for r in rows])))
    return np.array(values)


def cmd_eval_stats(args) -> list[Path]:
    a = _sample_from(args.a, args.column, args.where)
    b = _sample_from(args.b, args.column, args.where) if args.b else None
    if b is not None and len(a) != len(b):
        raise UsageError(f"stats: paired sets need equal sizes, got {len(a)} and {len(b)}")
    t = stats_battery(a, b, mu0=args.mu0)
    out = _prepare_out(args.out, args.force)
    comparison = f"{args.label_a}_vs_{args.label_b}" if b is not None else f"{args.label_a}_vs_{args.mu0!r}"
    written = [
        _write_csv(
            out / "stats.csv",
            ("comparison", "n", "mean", "t", "df", "p", "d", "degenerate"),
            [(comparison, t.n, t.mean, t.t, t.df, t.p, t.d, t.degenerate)],
        )
    ]
    _write_manifest(out, args, {}, [*args.a, *(args.b or [])], written, args._start)
    if t.degenerate:
        raise NumericDegeneracy("stats: zero-variance sample; t and p are undefined")
    return written


# ---------------------------------------------------------------------------
# parser


def _common(p: argparse.ArgumentParser, out_required: bool = True) -> None:
    p.add_argument("--out", required=out_required, help="output directory (must be empty unless --force)")
    p.add_argument("--force", action="store_true", help="allow writing into a non-empty output directory")
    p.add_argument("--config", help="key=value file; explicit flags take precedence")


def _eval_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="dataset directory written by `realign synth`")
    p.add_argument("--seed", type=int, default=0, help="decoding fold seed")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes for decoding")
    p.add_argument("--svm-epochs", type=int, default=N_EPOCHS, help="decoder training epochs")
    _common(p)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="realign", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"realign {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset directory")
    p.add_argument("--images", type=int, default=32, help="training images (two per concept)")
    p.add_argument("--test-images", type=int, default=16)
    p.add_argument("--subjects", type=int, default=4)
    p.add_argument("--latents", type=int, default=4)
    p.add_argument("--noise", type=float, default=0.1, help="EEG trial noise sigma")
    p.add_argument("--seed", type=int, default=0)
    _common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("init", help="write an untrained (baseline) backbone checkpoint")
    p.add_argument("--seed", type=int, default=0)
    _common(p)
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("train", help="align a backbone to one subject's (or pooled) EEG")
    p.add_argument("--data", required=True)
    p.add_argument("--subject")
    p.add_argument("--across-subjects", action="store_true", help="pool all subjects as one super-subject")
    p.add_argument("--beta", type=float, default=100.0)
    p.add_argument("--lr", type=float, default=2e-5)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--control", choices=CONTROL_MODES, default="none")
    p.add_argument("--exclude-label", action="append", help="concept or category to drop (repeatable)")
    p.add_argument("--seed", type=int, default=0, help="shuffling and control-permutation seed")
    p.add_argument("--init", help="start from this checkpoint instead of a fresh backbone")
    p.add_argument("--init-seed", type=int, default=0, help="backbone/head initialisation seed")
    p.add_argument("--zscore", action="store_true", help="z-score EEG targets per channel")
    _common(p)
    p.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="RSA analyses on checkpoints").add_subparsers(dest="eval_command", required=True)

    p = ev.add_parser("eeg", help="per-layer EEG similarity time courses")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--baseline")
    p.add_argument("--subject", action="append", help="restrict to subject (repeatable)")
    _eval_common(p)
    p.set_defaults(func=cmd_eval_eeg)

    p = ev.add_parser("fmri", help="per-ROI fMRI similarity with max-over-layers")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--baseline")
    _eval_common(p)
    p.set_defaults(func=cmd_eval_fmri)

    p = ev.add_parser("variability", help="1 - Spearman between model instances per layer")
    p.add_argument("--checkpoints", nargs="+", required=True)
    p.add_argument("--labels", nargs="+")
    _eval_common(p)
    p.set_defaults(func=cmd_eval_variability)

    p = ev.add_parser("cross-subject", help="models x subjects RSA matrix and matched-vs-mismatched test")
    p.add_argument("--checkpoints", nargs="+", required=True, help="one per subject, same order as --subjects")
    p.add_argument("--subjects", nargs="+")
    p.add_argument("--baseline")
    _eval_common(p)
    p.set_defaults(func=cmd_eval_cross_subject)

    p = ev.add_parser("features", help="partial r^2 per feature dimension and top-k improvements")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--baseline")
    p.add_argument("--features", help="embedding CSV (default: the dataset's features.rtf)")
    p.add_argument("--layer", choices=STAGES, default="IT")
    p.add_argument("--top", type=int, default=3)
    _eval_common(p)
    p.set_defaults(func=cmd_eval_features)

    p = ev.add_parser("stats", help="t / p / d comparing two sets of run outputs")
    p.add_argument("--a", nargs="+", required=True, help="CSV files of the first model set")
    p.add_argument("--b", nargs="+", help="CSV files of the second set (paired); omit for a one-sample test")
    p.add_argument("--column", default="window_rho")
    p.add_argument("--where", help="row filter key=value, e.g. model=model")
    p.add_argument("--mu0", type=float, default=0.0)
    p.add_argument("--label-a", default="a")
    p.add_argument("--label-b", default="b")
    _common(p)
    p.set_defaults(func=cmd_eval_stats)
    return parser


def _leaf_parser(parser: argparse.ArgumentParser, path: Sequence[str]) -> argparse.ArgumentParser:
    p = parser
    for name in path:
        action = next(a for a in p._actions if isinstance(a, argparse._SubParsersAction))
        p = action.choices[name]
    return p


def _config_tokens(leaf: argparse.ArgumentParser, path) -> list[str]:
    """Translate a key=value file into flag tokens for ``leaf``."""
    try:
        entries = dsio.read_manifest(path)
    except (OSError, DataError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    by_dest = {a.dest: a for a in leaf._actions if a.option_strings}
    tokens: list[str] = []
    for key, value in entries.items():
        dest = key.replace("-", "_")
        action = by_dest.get(dest)
        if action is None or dest in ("config", "help"):
            raise UsageError(f"config {path}: unknown key {key!r}")
        flag = action.option_strings[-1]
        if isinstance(action, argparse._StoreTrueAction):
            if value.lower() in ("1", "true", "yes", "on"):
                tokens.append(flag)
        elif action.nargs == "+" or isinstance(action, argparse._AppendAction):
            items = [v for v in value.replace(",", " ").split() if v]
            if action.nargs == "+":
                tokens += [flag, *items]
            else:
                for v in items:
                    tokens += [flag, v]
        else:
            tokens += [flag, value]
    return tokens


def parse_args(argv: Sequence[str]) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        path = [args.command] + ([args.eval_command] if getattr(args, "eval_command", None) else [])
        rest = list(argv)
        for name in path:
            rest.remove(name)
        args = parser.parse_args(path + _config_tokens(_leaf_parser(parser, path), args.config) + rest)
    return args


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
    except SystemExit as exc:  # argparse usage errors and --help/--version
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"realign: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    args._start = time.perf_counter()
    try:
        for path in args.func(args):
            print(path)
    except UsageError as exc:
        print(f"realign: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, RtfError, FileNotFoundError) as exc:
        print(f"realign: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericDegeneracy as exc:
        print(f"realign: numeric degeneracy: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
