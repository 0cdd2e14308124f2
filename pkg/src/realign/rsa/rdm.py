"""Representational dissimilarity matrices."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..data.datasets import FeatureEmbedding

SOURCES = ("model", "eeg", "fmri", "feature")
_SYM_TOL = 1e-12
_RANGE_TOL = 1e-12


@dataclass(frozen=True)
class Rdm:
    values: np.ndarray
    source: str
    tag: str = ""  # layer, timepoint, ROI or dimension id
    subject: str = ""
    kind: str = "correlation"  # correlation | decoding | absdiff
    flags: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        v = self.values
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError(f"Rdm: values must be square, got {v.shape}")
        if self.source not in SOURCES:
            raise ValueError(f"Rdm: unknown source {self.source!r}")
        if v.shape[0] < 2:
            raise ValueError("Rdm: need at least 2 stimuli")
        if not np.all(np.isfinite(v)):
            raise ValueError("Rdm: non-finite entries")
        if np.max(np.abs(v - v.T)) >= _SYM_TOL:
            raise ValueError("Rdm: matrix is not symmetric")
        if np.any(np.diag(v) != 0):
            raise ValueError("Rdm: diagonal must be 0")
        hi = {"correlation": 2.0, "decoding": 1.0}.get(self.kind, np.inf)
        if v.min() < -_RANGE_TOL or v.max() > hi + _RANGE_TOL:
            raise ValueError(f"Rdm: {self.kind} entries outside [0, {hi}]")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def upper(self) -> np.ndarray:
        """Strict upper triangle, row-major."""
        return self.values[np.triu_indices(self.n, 1)]

    def subset(self, idx) -> "Rdm":
        idx = np.asarray(idx)
        return Rdm(self.values[np.ix_(idx, idx)], self.source, self.tag, self.subject, self.kind, self.flags)


def from_upper(upper, n: int) -> np.ndarray:
    m = np.zeros((n, n))
    iu = np.triu_indices(n, 1)
    m[iu] = upper
    m[(iu[1], iu[0])] = upper
    return m


def correlation_distance(patterns: np.ndarray) -> tuple[np.ndarray, bool]:
    """1 - Pearson between rows.  Constant rows correlate 0 with everything; returns (matrix, had_constant)."""
    x = np.asarray(patterns, dtype=float)
    xc = x - x.mean(axis=1, keepdims=True)
    norms = np.sqrt((xc * xc).sum(axis=1))
    const = norms == 0
    safe = np.where(const, 1.0, norms)
    u = xc / safe[:, None]
    r = np.clip(u @ u.T, -1.0, 1.0)
    r[const, :] = 0.0
    r[:, const] = 0.0
    d = 1.0 - r
    d = 0.5 * (d + d.T)
    np.fill_diagonal(d, 0.0)
    return d, bool(const.any())


def _pattern_rdm(features, source: str, tag: str, subject: str) -> Rdm:
    x = np.asarray(features, dtype=float)
    if x.ndim != 2:
        x = x.reshape(len(x), -1)
    if x.shape[0] < 3 or x.shape[1] < 2:
        raise ValueError(f"{source} RDM: need n >= 3 stimuli and >= 2 features, got {x.shape}")
    d, had_const = correlation_distance(x)
    return Rdm(d, source, tag, subject, "correlation", ("constant_row",) if had_const else ())


def model_rdm(features, tag: str = "", subject: str = "") -> Rdm:
    """Layer RDM from n x P (or n x ...) activations: 1 - Pearson of flattened rows."""
    return _pattern_rdm(features, "model", tag, subject)


def fmri_rdm(patterns, roi: str = "", subject: str = "") -> Rdm:
    """ROI RDM from n_images x voxels beta patterns."""
    return _pattern_rdm(patterns, "fmri", roi, subject)


def feature_rdms(embedding: FeatureEmbedding) -> list[Rdm]:
    """One |e_i - e_j| RDM per feature dimension, named after the dimension."""
    e = embedding.values
    if e.shape[0] < 3:
        raise ValueError("feature_rdms: need n >= 3 stimuli")
    out = []
    for f, name in enumerate(embedding.names):
        col = e[:, f]
        d = np.abs(col[:, None] - col[None, :])
        flags = ("constant_dimension",) if np.all(col == col[0]) else ()
        out.append(Rdm(d, "feature", name, "", "absdiff", flags))
    return out
