"""Pairwise EEG decoding RDMs.

For each unordered image pair and timepoint, a linear max-margin classifier
separates the single trials of the two images from their channel vectors.
Dissimilarity is the mean held-out accuracy over stratified folds.

The classifier minimises ``lam/2 |w|^2 + mean(hinge)`` with full-batch
Pegasos subgradient steps (step ``1/(lam t)``, projection onto the
``1/sqrt(lam)`` ball) and predicts with the averaged iterate.  A constant
feature is appended for the bias.  Features are z-scored with training-fold
statistics.  All pairs and folds of one timepoint are solved together as one
batched array problem.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .rdm import Rdm

N_FOLDS = 5
LAMBDA = 1e-2
N_EPOCHS = 200
MIN_TRIALS = 10


def pair_seed(seed: int, i: int, j: int) -> np.random.Generator:
    return np.random.default_rng([seed, i, j])


def fold_permutations(n_images: int, trials: int, seed: int) -> dict[tuple[int, int], tuple[np.ndarray, np.ndarray]]:
    """Per unordered pair (i < j): trial orders for image i and j.  Position k goes to fold k % N_FOLDS."""
    out = {}
    for i in range(n_images):
        for j in range(i + 1, n_images):
            rng = pair_seed(seed, i, j)
            out[(i, j)] = (rng.permutation(trials), rng.permutation(trials))
    return out


def _check(epochs: np.ndarray, folds: int) -> None:
    if epochs.ndim != 4:
        raise ValueError(f"decoding: epochs must be images x trials x channels x timepoints, got {epochs.shape}")
    trials = epochs.shape[1]
    if trials < folds:
        raise ValueError(f"decoding: {trials} trials per image is fewer than {folds} folds")
    if trials < MIN_TRIALS:
        raise ValueError(f"decoding: need >= {MIN_TRIALS} trials per image, got {trials}")
    if epochs.shape[0] < 2:
        raise ValueError("decoding: need at least 2 images")


def _pair_accuracies(
    samples: np.ndarray, trials: int, folds: int, lam: float, n_epochs: int
) -> np.ndarray:
    """samples: P x 2R x C, class -1 first then +1, already in fold order.  Returns P accuracies."""
    p, s, c = samples.shape
    y = np.concatenate([-np.ones(trials), np.ones(trials)])
    fold_of = np.tile(np.arange(trials) % folds, 2)
    train = fold_of[None, :] != np.arange(folds)[:, None]  # F x S
    test = ~train
    n_train = train.sum(axis=1).astype(float)  # F

    tw = train.astype(float)
    mu = np.einsum("fs,psc->pfc", tw, samples) / n_train[None, :, None]
    centred = samples[:, None, :, :] - mu[:, :, None, :]  # P x F x S x C
    var = np.einsum("fs,pfsc->pfc", tw, centred**2) / n_train[None, :, None]
    sd = np.sqrt(var)
    sd = np.where(sd > 0, sd, 1.0)
    z = np.concatenate([centred / sd[:, :, None, :], np.ones((p, folds, s, 1))], axis=3)

    yz = z * y[None, None, :, None]
    w = np.zeros((p, folds, c + 1))
    w_sum = np.zeros_like(w)
    radius = 1.0 / np.sqrt(lam)
    for t in range(1, n_epochs + 1):
        margins = np.matmul(yz, w[..., None])[..., 0]  # P x F x S
        active = (margins < 1.0) & train[None]
        g = np.matmul(active[:, :, None, :].astype(float), yz)[:, :, 0, :] / n_train[None, :, None]
        w = (1.0 - 1.0 / t) * w + g / (lam * t)
        norm = np.sqrt((w * w).sum(axis=2, keepdims=True))
        w = w * np.minimum(1.0, radius / np.where(norm > 0, norm, 1.0))
        w_sum += w
    w_avg = w_sum / n_epochs
    scores = np.matmul(z, w_avg[..., None])[..., 0]
    pred = np.where(scores >= 0, 1.0, -1.0)
    correct = (pred == y[None, None, :]) & test[None]
    acc_per_fold = correct.sum(axis=2) / test.sum(axis=1)[None, :]
    return acc_per_fold.mean(axis=1)


def decoding_matrix(
    epochs: np.ndarray,
    timepoint: int,
    seed: int = 0,
    folds: int = N_FOLDS,
    lam: float = LAMBDA,
    n_epochs: int = N_EPOCHS,
    perms=None,
) -> np.ndarray:
    """n x n decoding-accuracy matrix at one timepoint (diagonal 0)."""
    epochs = np.asarray(epochs, dtype=float)
    _check(epochs, folds)
    n, trials = epochs.shape[:2]
    if perms is None:
        perms = fold_permutations(n, trials, seed)
    pairs = list(perms)
    x = epochs[:, :, :, timepoint]  # n x R x C
    samples = np.stack([np.concatenate([x[i][pi], x[j][pj]]) for (i, j), (pi, pj) in perms.items()])
    acc = _pair_accuracies(samples, trials, folds, lam, n_epochs)
    m = np.zeros((n, n))
    for (i, j), a in zip(pairs, acc):
        m[i, j] = m[j, i] = a
    return m


def eeg_decoding_rdm(epochs: np.ndarray, timepoint: int, seed: int = 0, subject: str = "", **kw) -> Rdm:
    return Rdm(decoding_matrix(epochs, timepoint, seed, **kw), "eeg", f"t{timepoint}", subject, "decoding")


def _one_timepoint(args):
    epochs, t, seed, kw = args
    return decoding_matrix(epochs, t, seed, **kw)


def eeg_decoding_rdms(
    epochs: np.ndarray, seed: int = 0, subject: str = "", timepoints=None, jobs: int = 1, **kw
) -> list[Rdm]:
    """Decoding RDM at every timepoint.  Fold assignment per pair is shared across timepoints."""
    epochs = np.asarray(epochs, dtype=float)
    _check(epochs, kw.get("folds", N_FOLDS))
    ts = list(range(epochs.shape[3])) if timepoints is None else list(timepoints)
    perms = fold_permutations(epochs.shape[0], epochs.shape[1], seed)
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            mats = list(ex.map(_one_timepoint, [(epochs, t, seed, kw) for t in ts]))
    else:
        mats = [decoding_matrix(epochs, t, seed, perms=perms, **kw) for t in ts]
    return [Rdm(m, "eeg", f"t{t}", subject, "decoding") for t, m in zip(ts, mats)]
