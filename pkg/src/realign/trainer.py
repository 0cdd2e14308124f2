"""Alignment training: pseudo-labels, control variants, the Adam loop and checkpoints."""
from __future__ import annotations

import copy
import dataclasses
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import diffcore as dc
from .data.datasets import EegDataset, filter_by_label
from .data.rtf import rtf_read, rtf_write
from .diffcore import Tensor
from .losses import alignment_loss
from .models import STAGES, BackboneSpec, EncodingHead, MiniCor

CONTROL_MODES = ("none", "no_cont", "no_mse", "unpaired", "scrambled")
POOLING_MODES = ("per_subject", "across_subject")
BETA_GRID = (1.0, 10.0, 100.0, 1000.0)
LOSS_COLUMNS = ("L_A", "L_C", "L_MSE", "L_Cont", "L_G")


@dataclass(frozen=True)
class AlignmentConfig:
    beta: float = 100.0
    lr: float = 2e-5
    epochs: int = 30
    batch_size: int = 16
    seed: int = 0
    control: str = "none"
    exclude_labels: tuple[str, ...] = ()
    pooling: str = "per_subject"
    zscore: bool = False

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if self.lr <= 0:
            raise ValueError(f"learning rate must be > 0, got {self.lr}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 2:
            raise ValueError("batch size must be >= 2 (contrastive loss needs pairs)")
        if self.control not in CONTROL_MODES:
            raise ValueError(f"unknown control mode {self.control!r}; choose from {CONTROL_MODES}")
        if self.pooling not in POOLING_MODES:
            raise ValueError(f"unknown pooling mode {self.pooling!r}; choose from {POOLING_MODES}")

    def echo(self) -> dict[str, object]:
        d = dataclasses.asdict(self)
        d["exclude_labels"] = ",".join(self.exclude_labels)
        return d


@dataclass
class TrainReport:
    epochs: list[dict[str, float]]
    config: AlignmentConfig
    checkpoint: Path | None = None
    wall_clock: float = 0.0
    n_train: int = 0
    filter_counts: dict[str, int] = field(default_factory=dict)
    control_seed: int | None = None

    def final(self, key: str) -> float:
        return self.epochs[-1][key]


# ---------------------------------------------------------------------------


def pseudo_labels(teacher: MiniCor, images: np.ndarray, batch: int = 64) -> np.ndarray:
    """Argmax class of the frozen teacher for every image (first index on ties)."""
    out = [teacher.logits(images[i : i + batch]).argmax(axis=1) for i in range(0, len(images), batch)]
    return np.concatenate(out).astype(np.int64)


def derangement(n: int, rng: np.random.Generator) -> np.ndarray:
    """A random single-cycle permutation: no fixed points for n >= 2."""
    if n < 2:
        return np.arange(n)
    order = rng.permutation(n)
    perm = np.empty(n, dtype=np.int64)
    perm[order] = np.roll(order, -1)
    return perm


def apply_control(ds: EegDataset, mode: str, seed: int) -> EegDataset:
    """Unpaired: reassign EEG recordings across images.  Scrambled: permute time within each recording."""
    rng = np.random.default_rng([seed, 7])
    if mode == "unpaired":
        perm = derangement(ds.n_images, rng)
        return ds.derive(f"control(unpaired, seed={seed})", eeg=ds.eeg[perm])
    if mode == "scrambled":
        eeg = np.empty_like(ds.eeg)
        for i in range(ds.n_images):
            eeg[i] = ds.eeg[i][..., rng.permutation(ds.timepoints)]
        return ds.derive(f"control(scrambled, seed={seed})", eeg=eeg)
    raise ValueError(f"apply_control: unknown mode {mode!r} (expected 'unpaired' or 'scrambled')")


def zscore_channels(eeg_vectors: np.ndarray, channels: int) -> np.ndarray:
    n = len(eeg_vectors)
    x = eeg_vectors.reshape(n, channels, -1)
    mu = x.mean(axis=(0, 2), keepdims=True)
    sd = x.std(axis=(0, 2), keepdims=True)
    return ((x - mu) / np.where(sd > 0, sd, 1.0)).reshape(n, -1)


def expand_repetitions(ds: EegDataset) -> EegDataset:
    """One sample per (image, repetition): the pooled "super-subject" view without averaging."""
    n, reps = ds.n_images, ds.reps
    idx = np.repeat(np.arange(n), reps)
    return ds.derive(
        f"expand_repetitions(reps={reps})",
        images=ds.images[idx],
        eeg=ds.eeg.reshape(n * reps, 1, *ds.eeg.shape[2:]),
        concepts=tuple(ds.concepts[i] for i in idx),
        categories=tuple(ds.categories[i] for i in idx),
    )


def prepare_dataset(ds: EegDataset, config: AlignmentConfig) -> tuple[EegDataset, dict[str, int]]:
    counts: dict[str, int] = {}
    if config.pooling == "across_subject" and ds.reps > 1:
        ds = expand_repetitions(ds)
    if config.exclude_labels:
        ds, counts = filter_by_label(ds, config.exclude_labels)
    if config.control in ("unpaired", "scrambled"):
        ds = apply_control(ds, config.control, config.seed)
    return ds, counts


def train_alignment(
    model: MiniCor,
    head: EncodingHead,
    dataset: EegDataset,
    config: AlignmentConfig,
    teacher: MiniCor | None = None,
    out_dir=None,
    log=None,
) -> TrainReport:
    """Minimise L_C + beta * L_G with Adam; updates ``model`` and ``head`` in place.

    ``dataset`` must already be repetition-averaged, except in across-subject
    pooling where each repetition (one per pooled subject) becomes a sample.
    The teacher defaults to a frozen copy of ``model`` as passed in.
    """
    if dataset.reps != 1 and config.pooling != "across_subject":
        raise ValueError(f"train_alignment: expected repetition-averaged EEG, got {dataset.reps} reps")
    start = time.perf_counter()
    ds, counts = prepare_dataset(dataset, config)
    n = ds.n_images
    if config.batch_size > n:
        raise ValueError(f"batch size {config.batch_size} exceeds dataset size {n}")
    if head.out_dim != ds.channels * ds.timepoints:
        raise ValueError(f"head output {head.out_dim} != EEG dimension {ds.channels * ds.timepoints}")

    teacher = teacher if teacher is not None else copy.deepcopy(model)
    labels = pseudo_labels(teacher, ds.images)
    targets = ds.eeg_vectors()
    if config.zscore:
        targets = zscore_channels(targets, ds.channels)

    use_mse = config.control != "no_mse"
    use_cont = config.control != "no_cont"
    params = model.parameters() + head.parameters()
    opt = dc.Adam(params, config.lr)
    rng = np.random.default_rng([config.seed, 1])
    n_batches = n // config.batch_size
    history: list[dict[str, float]] = []
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        sums = dict.fromkeys(LOSS_COLUMNS, 0.0)
        for b in range(n_batches):
            idx = order[b * config.batch_size : (b + 1) * config.batch_size]
            feats = model.forward_features(Tensor(ds.images[idx]))
            generated = head.forward(feats)
            terms = alignment_loss(
                feats["logits"], labels[idx], generated, Tensor(targets[idx]), config.beta, use_mse, use_cont
            )
            dc.backward(terms.total)
            opt.step()
            for k, v in terms.as_dict().items():
                sums[k] += v
        row = {k: v / n_batches for k, v in sums.items()}
        history.append(row)
        if log is not None:
            log(epoch + 1, row)

    report = TrainReport(
        history,
        config,
        wall_clock=time.perf_counter() - start,
        n_train=n,
        filter_counts=counts,
        control_seed=config.seed if config.control in ("unpaired", "scrambled") else None,
    )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        report.checkpoint = save_checkpoint(out / "checkpoint.rtf", model, head)
        write_report_csv(out / "report.csv", report)
    return report


# ---------------------------------------------------------------------------
# checkpoints and report


def write_report_csv(path, report: TrainReport) -> None:
    lines = ["epoch," + ",".join(LOSS_COLUMNS)]
    for i, row in enumerate(report.epochs, 1):
        lines.append(f"{i}," + ",".join(repr(float(row[k])) for k in LOSS_COLUMNS))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_report_csv(path) -> list[dict[str, float]]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    header = lines[0].split(",")
    return [dict(zip(header, map(float, line.split(",")))) for line in lines[1:] if line]


def save_checkpoint(path, model: MiniCor, head: EncodingHead | None = None) -> Path:
    """Parameters to RTF (float64) plus a text manifest ``<path>.txt`` (spec, then name/shape/stage)."""
    path = Path(path)
    tensors = model.store.state_dict()
    stages = dict(model.store.stages)
    if head is not None:
        tensors.update(head.store.state_dict())
        stages.update(head.store.stages)
    rtf_write(path, tensors)
    s = model.spec
    lines = [
        f"spec.in_channels={s.in_channels}",
        f"spec.image_size={s.image_size}",
        f"spec.widths={','.join(map(str, s.widths))}",
        f"spec.times={','.join(map(str, s.times))}",
        f"spec.n_classes={s.n_classes}",
        f"spec.v1_kernel={s.v1_kernel}",
        f"spec.bottleneck_scale={s.bottleneck_scale}",
        f"head.out_dim={head.out_dim if head is not None else 0}",
    ]
    lines += [f"param\t{k}\t{'x'.join(map(str, v.shape))}\t{stages[k]}" for k, v in tensors.items()]
    path.with_suffix(".txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def load_checkpoint(path) -> tuple[MiniCor, EncodingHead | None]:
    path = Path(path)
    meta = {}
    for line in path.with_suffix(".txt").read_text(encoding="utf-8").splitlines():
        if line and not line.startswith("param\t"):
            k, _, v = line.partition("=")
            meta[k] = v
    ints = lambda v: tuple(int(x) for x in v.split(","))  # noqa: E731
    spec = BackboneSpec(
        in_channels=int(meta["spec.in_channels"]),
        image_size=int(meta["spec.image_size"]),
        widths=ints(meta["spec.widths"]),
        times=ints(meta["spec.times"]),
        n_classes=int(meta["spec.n_classes"]),
        v1_kernel=int(meta["spec.v1_kernel"]),
        bottleneck_scale=int(meta["spec.bottleneck_scale"]),
    )
    state = rtf_read(path)
    model = MiniCor(spec, seed=0, strict=False)
    model.store.load_state_dict({k: v for k, v in state.items() if k in model.store.params})
    head = None
    out_dim = int(meta.get("head.out_dim", 0))
    if out_dim:
        head = EncodingHead(spec.widths, out_dim)
        head.store.load_state_dict({k: v for k, v in state.items() if k in head.store.params})
    return model, head


def stage_gradient_norms(model: MiniCor) -> dict[str, float]:
    """Gradient L2 norm per backbone stage after a backward pass."""
    out = dict.fromkeys(STAGES, 0.0)
    for name, t in model.store.params.items():
        stage = model.store.stages[name]
        if stage in out and t.grad is not None:
            out[stage] += float((t.grad**2).sum())
    return {k: float(np.sqrt(v)) for k, v in out.items()}
