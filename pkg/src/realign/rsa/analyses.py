"""Model-brain comparisons built on RDMs."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .rdm import Rdm
from .stats import TTest, pearson, rank_average, spearman, ttest_paired

RIDGE = 1e-8


def rsa_compare(a: Rdm | np.ndarray, b: Rdm | np.ndarray) -> float:
    """Spearman rho between the strict upper triangles of two RDMs."""
    va = a.values if isinstance(a, Rdm) else np.asarray(a)
    vb = b.values if isinstance(b, Rdm) else np.asarray(b)
    if va.shape != vb.shape:
        raise ValueError(f"rsa_compare: RDM sizes differ, {va.shape[0]} vs {vb.shape[0]}")
    iu = np.triu_indices(va.shape[0], 1)
    return spearman(va[iu], vb[iu])


@dataclass
class SimilarityCurve:
    layer: str
    rho: np.ndarray  # per timepoint
    subject: str = ""
    model: str = ""

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=float)
        if np.any(np.abs(self.rho) > 1.0 + 1e-12):
            raise ValueError("SimilarityCurve: rho outside [-1, 1]")


def similarity_timecourses(
    layer_rdms: Mapping[str, Rdm], eeg_rdms: Sequence[Rdm], subject: str = "", model: str = ""
) -> tuple[dict[str, SimilarityCurve], SimilarityCurve]:
    """Per-layer RSA time courses plus their pointwise maximum (layer tag "max")."""
    if not layer_rdms:
        raise ValueError("similarity_timecourses: no model layers")
    curves = {
        layer: SimilarityCurve(layer, np.array([rsa_compare(rdm, e) for e in eeg_rdms]), subject, model)
        for layer, rdm in layer_rdms.items()
    }
    stacked = np.stack([c.rho for c in curves.values()])
    return curves, SimilarityCurve("max", stacked.max(axis=0), subject, model)


@dataclass(frozen=True)
class Improvement:
    layer: str
    peak_index: int
    baseline: float
    aligned: float
    delta: float
    ratio: float | None  # None when baseline <= 0 at the peak


def improvement_stats(
    aligned: Mapping[str, SimilarityCurve], baseline: Mapping[str, SimilarityCurve]
) -> dict[str, Improvement]:
    """Change at each layer's baseline peak (earliest timepoint on ties)."""
    if set(aligned) != set(baseline):
        raise ValueError("improvement_stats: layer sets differ")
    out = {}
    for layer, base in baseline.items():
        al = aligned[layer]
        if al.rho.shape != base.rho.shape:
            raise ValueError(f"improvement_stats: timepoint grids differ for layer {layer}")
        t = int(np.argmax(base.rho))  # first maximum
        b, a = float(base.rho[t]), float(al.rho[t])
        delta = a - b
        out[layer] = Improvement(layer, t, b, a, delta, delta / b if b > 0 else None)
    return out


def window_indices(timepoints_ms: np.ndarray, start_ms: float = 50.0, stop_ms: float = 200.0) -> np.ndarray:
    idx = np.flatnonzero((timepoints_ms >= start_ms) & (timepoints_ms <= stop_ms))
    if idx.size == 0:
        raise ValueError(f"empty time window {start_ms}-{stop_ms} ms")
    return idx


def window_mean(curves: Mapping[str, SimilarityCurve], window: np.ndarray, layers=None) -> float:
    """Mean rho over the given layers (default: all except "max") and window timepoints."""
    layers = [l for l in curves if l != "max"] if layers is None else list(layers)
    if len(window) == 0:
        raise ValueError("window_mean: empty window")
    return float(np.mean([curves[l].rho[window] for l in layers]))


@dataclass
class CrossSubjectResult:
    matrix: np.ndarray  # models x subjects
    baseline_subtracted: np.ndarray | None
    normalized: np.ndarray
    test: TTest

    @property
    def degenerate(self) -> bool:
        return self.test.degenerate


def cross_subject_matrix(
    cells: np.ndarray, baseline_row: np.ndarray | None = None
) -> CrossSubjectResult:
    """``cells[m, s]`` = window-mean RSA of model m (trained on subject m) with subject s.

    Adds the baseline-subtracted and column-max-normalised variants, and a
    paired t-test of matched (diagonal) against the mean mismatched value per subject.
    """
    m = np.asarray(cells, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 2:
        raise ValueError(f"cross_subject_matrix: need a square models x subjects matrix, got {m.shape}")
    if m.size == 0:
        raise ValueError("cross_subject_matrix: empty")
    k = m.shape[0]
    sub = None if baseline_row is None else m - np.asarray(baseline_row, dtype=float)[None, :]
    colmax = m.max(axis=0)
    normalized = m / np.where(colmax != 0, colmax, 1.0)[None, :]
    matched = np.diag(m)
    mismatched = (m.sum(axis=0) - matched) / (k - 1)
    return CrossSubjectResult(m, sub, normalized, ttest_paired(matched, mismatched))


@dataclass
class VariabilityMatrix:
    values: np.ndarray
    tag: str
    index: float  # mean over unordered pairs
    labels: tuple[str, ...] = field(default_factory=tuple)


def variability(rdms: Sequence[Rdm], tag: str = "", labels: Sequence[str] = ()) -> VariabilityMatrix:
    """1 - Spearman between every pair of instance RDMs; index = mean over unordered pairs."""
    if len(rdms) < 2:
        raise ValueError("variability: need at least 2 instances")
    k = len(rdms)
    v = np.zeros((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            v[i, j] = v[j, i] = 1.0 - rsa_compare(rdms[i], rdms[j])
    iu = np.triu_indices(k, 1)
    return VariabilityMatrix(v, tag, float(v[iu].mean()), tuple(labels))


@dataclass(frozen=True)
class PartialCorrelation:
    r: float
    r2: float
    ridge: bool = False


def _residualize(y: np.ndarray, design: np.ndarray) -> tuple[np.ndarray, bool]:
    """Least-squares residual of y on design (which includes the intercept)."""
    gram = design.T @ design
    ridge = np.linalg.matrix_rank(design) < design.shape[1]
    if ridge:
        gram = gram + RIDGE * np.eye(gram.shape[0])
    beta = np.linalg.solve(gram, design.T @ y)
    return y - design @ beta, bool(ridge)


def _explained_away(resid: np.ndarray, y: np.ndarray, tol: float = 1e-9) -> bool:
    # residual is rounding noise: the controls reproduce y exactly
    scale = np.linalg.norm(y - y.mean())
    return scale == 0 or np.linalg.norm(resid) <= tol * scale


def partial_spearman_r2(model: Rdm, target: Rdm, controls: Sequence[Rdm]) -> PartialCorrelation:
    """Partial rank correlation of model and target RDMs given control RDMs."""
    rdms = [model, target, *controls]
    n = model.n
    if any(r.n != n for r in rdms):
        raise ValueError("partial_spearman_r2: RDM sizes differ")
    ry = rank_average(model.upper())
    rx = rank_average(target.upper())
    design = np.column_stack([np.ones(len(ry))] + [rank_average(c.upper()) for c in controls])
    ey, r1 = _residualize(ry, design)
    ex, r2 = _residualize(rx, design)
    if _explained_away(ey, ry) or _explained_away(ex, rx):
        return PartialCorrelation(0.0, 0.0, r1 or r2)
    r = pearson(ey, ex)
    return PartialCorrelation(r, r * r, r1 or r2)


def feature_profile(model: Rdm, features: Sequence[Rdm]) -> dict[str, PartialCorrelation]:
    """Partial r^2 of the model RDM with each feature RDM controlling for all the others."""
    out = {}
    for k, f in enumerate(features):
        others = [g for j, g in enumerate(features) if j != k]
        out[f.tag] = partial_spearman_r2(model, f, others)
    return out


def fmri_similarity(layer_rdms: Mapping[str, Rdm], roi_rdm: Rdm) -> tuple[dict[str, float], float]:
    """Per-layer RSA with one ROI RDM and the max-over-layers reduction."""
    per_layer = {layer: rsa_compare(rdm, roi_rdm) for layer, rdm in layer_rdms.items()}
    return per_layer, max(per_layer.values())
