"""Dataset containers, pure transforms and the on-disk dataset directory."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .rtf import rtf_read, rtf_write


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class EegDataset:
    subject: str
    images: np.ndarray  # n x C x H x W
    eeg: np.ndarray  # n x reps x channels x timepoints
    concepts: tuple[str, ...]
    categories: tuple[str, ...]
    split: str
    provenance: tuple[str, ...] = ()

    def __post_init__(self):
        n = len(self.images)
        if self.eeg.ndim != 4:
            raise DataError(f"eeg must be n x reps x channels x timepoints, got shape {self.eeg.shape}")
        if self.eeg.shape[0] != n or len(self.concepts) != n or len(self.categories) != n:
            raise DataError(
                f"image/eeg/label counts disagree: {n} images, {self.eeg.shape[0]} eeg, "
                f"{len(self.concepts)} concepts, {len(self.categories)} categories"
            )

    @property
    def n_images(self) -> int:
        return len(self.images)

    @property
    def reps(self) -> int:
        return self.eeg.shape[1]

    @property
    def channels(self) -> int:
        return self.eeg.shape[2]

    @property
    def timepoints(self) -> int:
        return self.eeg.shape[3]

    def eeg_vectors(self) -> np.ndarray:
        """Repetition-averaged EEG flattened channel-major to n x (channels * timepoints)."""
        return self.eeg.mean(axis=1).reshape(self.n_images, -1)

    def derive(self, note: str, **changes) -> "EegDataset":
        return dataclasses.replace(self, provenance=self.provenance + (note,), **changes)


@dataclass(frozen=True)
class FmriDataset:
    subject: str
    rois: Mapping[str, np.ndarray]  # roi -> n_images x voxels
    categories: tuple[str, ...]  # per image: natural / shape / letter

    def __post_init__(self):
        n = len(self.categories)
        for roi, pat in self.rois.items():
            if pat.ndim != 2 or pat.shape[0] != n:
                raise DataError(f"ROI {roi}: expected {n} x voxels patterns, got {pat.shape}")

    def category_index(self, category: str) -> np.ndarray:
        return np.flatnonzero(np.asarray(self.categories) == category)


@dataclass(frozen=True)
class FeatureEmbedding:
    values: np.ndarray  # n_images x F
    names: tuple[str, ...]

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[1] != len(self.names):
            raise DataError(f"embedding shape {self.values.shape} does not match {len(self.names)} names")
        if self.values.shape[1] < 2:
            raise DataError("feature embedding needs at least 2 dimensions")
        if not np.all(np.isfinite(self.values)):
            raise DataError("feature embedding has missing or non-finite values")


# ---------------------------------------------------------------------------
# transforms


def average_repetitions(ds: EegDataset) -> EegDataset:
    if ds.reps < 1:
        raise DataError("no repetitions to average")
    return ds.derive(f"average_repetitions(reps={ds.reps})", eeg=ds.eeg.mean(axis=1, keepdims=True))


def pool_across_subjects(datasets: Sequence[EegDataset]) -> EegDataset:
    """Concatenate trials of all subjects on the repetition axis ("super-subject")."""
    if not datasets:
        raise DataError("no datasets to pool")
    ref = datasets[0]
    for ds in datasets[1:]:
        if ds.eeg.shape[0] != ref.eeg.shape[0] or ds.eeg.shape[2:] != ref.eeg.shape[2:]:
            raise DataError(f"cannot pool {ds.subject}: eeg shape {ds.eeg.shape} vs {ref.eeg.shape}")
        if ds.concepts != ref.concepts or not np.array_equal(ds.images, ref.images):
            raise DataError(f"cannot pool {ds.subject}: image sets differ")
    if len(datasets) == 1:
        return ref
    eeg = np.concatenate([ds.eeg for ds in datasets], axis=1)
    return ref.derive(
        f"pool_across_subjects(n={len(datasets)})", subject="pooled", eeg=eeg
    )


def filter_by_label(ds: EegDataset, excluded: Iterable[str]) -> tuple[EegDataset, dict[str, int]]:
    """Drop images whose concept or category is in ``excluded``; returns the dataset and counts."""
    excluded = set(excluded)
    if not excluded:
        return ds, {"kept": ds.n_images, "removed": 0}
    keep = np.array([c not in excluded and k not in excluded for c, k in zip(ds.concepts, ds.categories)])
    if not keep.any():
        raise DataError(f"filter_by_label: excluding {sorted(excluded)} leaves no images")
    idx = np.flatnonzero(keep)
    out = ds.derive(
        f"filter_by_label(exclude={','.join(sorted(excluded))})",
        images=ds.images[idx],
        eeg=ds.eeg[idx],
        concepts=tuple(ds.concepts[i] for i in idx),
        categories=tuple(ds.categories[i] for i in idx),
    )
    return out, {"kept": int(keep.sum()), "removed": int((~keep).sum())}


@dataclass
class SplitReport:
    counts: dict[str, int]
    overlap: set[str] = field(default_factory=set)

    @property
    def ok(self) -> bool:
        return not self.overlap


def split_integrity(splits: Mapping[str, Iterable[str]] | Sequence[EegDataset]) -> SplitReport:
    """Check that concept sets of different splits are disjoint; raise on overlap."""
    if isinstance(splits, Mapping):
        sets = {k: set(v) for k, v in splits.items()}
    else:
        sets = {}
        for ds in splits:
            sets.setdefault(ds.split, set()).update(ds.concepts)
    if len(sets) < 2:
        raise DataError("split_integrity: need at least two split tags")
    names = sorted(sets)
    overlap: set[str] = set()
    for i, a in enumerate(names):
        for b in names[i + 1 :]:
            overlap |= sets[a] & sets[b]
    if overlap:
        raise DataError(f"concepts shared between splits: {sorted(overlap)}")
    return SplitReport({k: len(v) for k, v in sets.items()})


# ---------------------------------------------------------------------------
# dataset directory


def write_manifest(path, entries: Mapping[str, object]) -> None:
    lines = [f"{k}={v}" for k, v in entries.items()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise DataError(f"{path}: malformed manifest line {line!r}")
        out[key.strip()] = value.strip()
    return out


def _write_labels(path, concepts, categories) -> None:
    Path(path).write_text(
        "".join(f"{c}\t{k}\n" for c, k in zip(concepts, categories)), encoding="utf-8"
    )


def _read_labels(path) -> tuple[tuple[str, ...], tuple[str, ...]]:
    rows = [line.split("\t") for line in Path(path).read_text(encoding="utf-8").splitlines() if line]
    return tuple(r[0] for r in rows), tuple(r[1] for r in rows)


def subject_ids(root) -> list[str]:
    return sorted(p.stem[len("eeg_"):] for p in Path(root).glob("eeg_*.rtf"))


def save_eeg(root, train: EegDataset, test: EegDataset) -> None:
    root = Path(root)
    rtf_write(root / f"eeg_{train.subject}.rtf", {"train": train.eeg, "test": test.eeg})


def load_eeg(root, subject: str) -> tuple[EegDataset, EegDataset]:
    root = Path(root)
    path = root / f"eeg_{subject}.rtf"
    if not path.exists():
        raise DataError(f"no EEG file for subject {subject!r} in {root}")
    eeg = rtf_read(path)
    images = rtf_read(root / "images.rtf")
    out = []
    for split in ("train", "test"):
        concepts, cats = _read_labels(root / f"labels_{split}.txt")
        out.append(
            EegDataset(subject, images[split], eeg[split], concepts, cats, split, (f"load({path.name})",))
        )
    return out[0], out[1]


def save_images(root, train_images, test_images, fmri_images) -> None:
    rtf_write(Path(root) / "images.rtf", {"train": train_images, "test": test_images, "fmri": fmri_images})


def save_labels(root, train: EegDataset, test: EegDataset) -> None:
    _write_labels(Path(root) / "labels_train.txt", train.concepts, train.categories)
    _write_labels(Path(root) / "labels_test.txt", test.concepts, test.categories)


def save_fmri(root, ds: FmriDataset) -> None:
    root = Path(root)
    rtf_write(root / f"fmri_{ds.subject}.rtf", dict(ds.rois))
    (root / "fmri_categories.txt").write_text("".join(f"{c}\n" for c in ds.categories), encoding="utf-8")


def load_fmri(root) -> tuple[np.ndarray, list[FmriDataset]]:
    root = Path(root)
    cats = tuple(
        line for line in (root / "fmri_categories.txt").read_text(encoding="utf-8").splitlines() if line
    )
    out = []
    for path in sorted(root.glob("fmri_*.rtf")):
        out.append(FmriDataset(path.stem[len("fmri_"):], rtf_read(path), cats))
    return rtf_read(root / "images.rtf")["fmri"], out


def save_features(root, emb: FeatureEmbedding) -> None:
    root = Path(root)
    rtf_write(root / "features.rtf", {"embedding": emb.values})
    (root / "feature_names.txt").write_text("".join(f"{n}\n" for n in emb.names), encoding="utf-8")


def load_features(path) -> FeatureEmbedding:
    """Load an embedding from a dataset directory or a CSV (header row of dimension names)."""
    path = Path(path)
    if path.is_dir():
        values = rtf_read(path / "features.rtf")["embedding"]
        names = tuple(n for n in (path / "feature_names.txt").read_text(encoding="utf-8").splitlines() if n)
        return FeatureEmbedding(values, names)
    lines = path.read_text(encoding="utf-8").splitlines()
    names = tuple(lines[0].split(","))
    values = np.array([[float(v) for v in line.split(",")] for line in lines[1:] if line])
    return FeatureEmbedding(values, names)
