"""Glue between trained models and the RSA suite."""
from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from .data.datasets import FmriDataset
from .models import STAGES, MiniCor, extract_features
from .rsa.analyses import SimilarityCurve, fmri_similarity, similarity_timecourses, window_indices, window_mean
from .rsa.rdm import Rdm, fmri_rdm, model_rdm

SAMPLE_MS = 10.0
EVAL_WINDOW_MS = (50.0, 200.0)


def layer_rdms(model: MiniCor, images: np.ndarray, layers: Sequence[str] = STAGES, model_id: str = "") -> dict[str, Rdm]:
    feats = extract_features(model, images)
    return {layer: model_rdm(feats[layer], tag=layer, subject=model_id) for layer in layers}


def timepoints_ms(n_timepoints: int) -> np.ndarray:
    return np.arange(n_timepoints) * SAMPLE_MS


def eeg_curves(
    rdms: Mapping[str, Rdm], eeg_rdms: Sequence[Rdm], subject: str = "", model_id: str = ""
) -> dict[str, SimilarityCurve]:
    curves, best = similarity_timecourses(rdms, eeg_rdms, subject, model_id)
    curves["max"] = best
    return curves


def window_score(curves: Mapping[str, SimilarityCurve], window_ms=EVAL_WINDOW_MS) -> float:
    """Mean RSA over the four stages and the evaluation window."""
    n_t = len(next(iter(curves.values())).rho)
    return window_mean(curves, window_indices(timepoints_ms(n_t), *window_ms), layers=STAGES)


def fmri_scores(
    rdms_by_category: Mapping[str, Mapping[str, Rdm]], fmri: Sequence[FmriDataset]
) -> dict[tuple[str, str, str], float]:
    """(subject, category, roi) -> max-over-layers RSA."""
    out = {}
    for ds in fmri:
        for cat, layer_set in rdms_by_category.items():
            idx = ds.category_index(cat)
            for roi, patterns in ds.rois.items():
                _, best = fmri_similarity(layer_set, fmri_rdm(patterns[idx], roi, ds.subject))
                out[(ds.subject, cat, roi)] = best
    return out


def fmri_layer_rdms(model: MiniCor, images: np.ndarray, categories: Sequence[str]) -> dict[str, dict[str, Rdm]]:
    feats = extract_features(model, images)
    cats = np.asarray(categories)
    out = {}
    for cat in dict.fromkeys(categories):
        idx = np.flatnonzero(cats == cat)
        if len(idx) < 3:
            continue
        out[cat] = {layer: model_rdm(feats[layer][idx], tag=layer) for layer in STAGES}
    return out
