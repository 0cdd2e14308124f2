"""Synthetic subjects with known ground truth.

Every image is rendered from a latent code ``z`` (brain-relevant) and a
nuisance code ``u`` (visible in pixels, absent from brain data).  Subjects
share the latents but differ in how they mix them into channels x time:

    eeg_trial(i) = scale * centre_t(smooth_t(M_s z_i)) + erp_s + noise_sigma * eps

where ``centre_t`` removes each channel's mean over the epoch, so stimulus
identity is carried by temporal shape rather than by per-channel offsets.

Synthetic fMRI ROIs read disjoint subsets of the latents, so a model that
moves toward the EEG latents should also move toward the fMRI RDMs.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .datasets import EegDataset, FeatureEmbedding, FmriDataset

CATEGORIES = ("animal", "food", "tool", "vehicle")
FMRI_CATEGORIES = ("natural", "shape", "letter")


def _rng(seed: int, *tags: int) -> np.random.Generator:
    return np.random.default_rng([seed, *tags])


def _smooth_patterns(rng: np.random.Generator, count: int, size: int, channels: int = 3) -> np.ndarray:
    """Random low-frequency colour gratings, unit RMS per pattern."""
    yy, xx = np.mgrid[0:size, 0:size] / size
    out = np.zeros((count, channels, size, size))
    for k in range(count):
        for _ in range(3):
            freq = rng.uniform(1.0, 4.0)
            theta = rng.uniform(0, np.pi)
            phase = rng.uniform(0, 2 * np.pi)
            wave = np.sin(2 * np.pi * freq * (np.cos(theta) * xx + np.sin(theta) * yy) + phase)
            out[k] += rng.normal(size=channels)[:, None, None] * wave
        out[k] /= np.sqrt((out[k] ** 2).mean())
    return out


def gaussian_kernel(width: float) -> np.ndarray:
    if width <= 0:
        return np.ones(1)
    half = int(np.ceil(3 * width))
    t = np.arange(-half, half + 1)
    k = np.exp(-0.5 * (t / width) ** 2)
    return k / k.sum()


def smooth_time(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Convolve the last axis with ``kernel`` (same length output, edges renormalised)."""
    if kernel.size == 1:
        return x.copy()
    flat = x.reshape(-1, x.shape[-1])
    ones = np.convolve(np.ones(x.shape[-1]), kernel, mode="same")
    out = np.stack([np.convolve(row, kernel, mode="same") for row in flat]) / ones
    return out.reshape(x.shape)


@dataclass
class SubjectModel:
    mixing: np.ndarray  # channels x timepoints x L
    erp: np.ndarray  # channels x timepoints
    noise: float


@dataclass
class SynthWorld:
    latent_dim: int
    seed: int
    latent_basis: np.ndarray  # L x 3 x H x W
    nuisance_basis: np.ndarray  # M x 3 x H x W
    latents: dict[str, np.ndarray]  # split -> n x L
    nuisance: dict[str, np.ndarray]  # split -> n x M
    subjects: dict[str, SubjectModel]
    kernel: np.ndarray
    signal_scale: float
    nuisance_scale: float
    sample_ms: float = 10.0
    roi_latents: dict[str, tuple[int, ...]] = field(default_factory=dict)

    def render(self, z: np.ndarray, u: np.ndarray, nuisance_gain: np.ndarray | float = 1.0) -> np.ndarray:
        g = np.broadcast_to(np.asarray(nuisance_gain, dtype=float), (len(z),))
        field_ = np.einsum("nk,kchw->nchw", z, self.latent_basis) + self.nuisance_scale * g[
            :, None, None, None
        ] * np.einsum("nm,mchw->nchw", u, self.nuisance_basis)
        return np.tanh(0.5 * field_)

    def clean_eeg(self, subject: str, z: np.ndarray) -> np.ndarray:
        sm = self.subjects[subject]
        sig = smooth_time(np.einsum("ctk,nk->nct", sm.mixing, z), self.kernel)
        # stimulus-specific part is zero-mean over the epoch in every channel:
        # identity lives in the temporal shape, not in a per-channel offset
        sig = sig - sig.mean(axis=-1, keepdims=True)
        return self.signal_scale * sig + sm.erp[None]


@dataclass
class SynthBundle:
    world: SynthWorld
    eeg_train: dict[str, EegDataset]
    eeg_test: dict[str, EegDataset]
    fmri_images: np.ndarray
    fmri: dict[str, FmriDataset]
    features: FeatureEmbedding

    @property
    def subjects(self) -> list[str]:
        return list(self.eeg_train)

    @property
    def train_images(self) -> np.ndarray:
        return next(iter(self.eeg_train.values())).images

    @property
    def test_images(self) -> np.ndarray:
        return next(iter(self.eeg_test.values())).images


def synth_generate(
    n_images: int = 32,
    n_subjects: int = 4,
    latents: int = 4,
    seed: int = 0,
    *,
    n_test: int = 16,
    noise: float = 0.1,
    n_nuisance: int = 4,
    nuisance_scale: float = 1.5,
    channels: int = 17,
    timepoints: int = 20,
    train_reps: int = 8,
    test_reps: int = 80,
    signal_scale: float = 0.05,
    erp_scale: float = 0.05,
    subject_spread: float = 0.6,
    smoothing: float = 1.0,
    image_size: int = 32,
    n_features: int = 49,
    fmri_counts: tuple[int, int, int] = (50, 40, 10),
    fmri_subjects: int = 3,
    rois: tuple[str, ...] = ("V1", "V4", "LOC"),
    voxels: int = 50,
    fmri_noise: float = 0.3,
) -> SynthBundle:
    """Generate images, per-subject EEG/fMRI and a feature embedding from ``seed`` alone."""
    if n_images < 8 or latents < 2:
        raise ValueError("synth_generate: need n_images >= 8 and latents >= 2")
    if n_images % 2:
        raise ValueError("synth_generate: n_images must be even (two images per training concept)")
    if not 0 < len(rois) <= latents:
        raise ValueError(f"synth_generate: need 1..{latents} ROIs to give each a disjoint latent subset")

    brng = _rng(seed, 0)
    latent_basis = _smooth_patterns(brng, latents, image_size)
    nuisance_basis = _smooth_patterns(brng, n_nuisance, image_size)

    # two images per training concept, one per test concept; concepts never shared
    lrng = _rng(seed, 1)
    n_train_concepts = n_images // 2
    centroids = lrng.normal(size=(n_train_concepts, latents))
    z_train = np.repeat(centroids, 2, axis=0) + 0.3 * lrng.normal(size=(n_images, latents))
    z_test = lrng.normal(size=(n_test, latents))
    u_train = lrng.normal(size=(n_images, n_nuisance))
    u_test = lrng.normal(size=(n_test, n_nuisance))
    train_concepts = tuple(f"train_c{c:03d}" for c in np.repeat(np.arange(n_train_concepts), 2))
    train_cats = tuple(CATEGORIES[c % len(CATEGORIES)] for c in np.repeat(np.arange(n_train_concepts), 2))
    test_concepts = tuple(f"test_c{c:03d}" for c in range(n_test))
    test_cats = tuple(CATEGORIES[c % len(CATEGORIES)] for c in range(n_test))

    kernel = gaussian_kernel(smoothing)
    t_ms = np.arange(timepoints) * 10.0
    subjects: dict[str, SubjectModel] = {}
    for s in range(n_subjects):
        srng = _rng(seed, 2, s)
        spatial = srng.normal(size=(channels, latents))
        gains = np.exp(subject_spread * srng.normal(size=latents))
        gains /= np.sqrt((gains**2).mean())
        peaks = 80.0 + 25.0 * np.arange(latents) + srng.normal(0, 10.0, size=latents)
        profile = np.exp(-0.5 * ((t_ms[:, None] - peaks[None]) / 30.0) ** 2)  # T x L
        mixing = spatial[:, None, :] * profile[None] * gains[None, None, :]
        erp = erp_scale * srng.normal(size=(channels, 1)) * np.exp(-0.5 * ((t_ms - 100.0) / 40.0) ** 2)[None]
        subjects[f"sub-{s + 1:02d}"] = SubjectModel(mixing, erp, noise)

    roi_latents = {roi: tuple(int(k) for k in part) for roi, part in zip(rois, np.array_split(np.arange(latents), len(rois)))}
    world = SynthWorld(
        latent_dim=latents,
        seed=seed,
        latent_basis=latent_basis,
        nuisance_basis=nuisance_basis,
        latents={"train": z_train, "test": z_test},
        nuisance={"train": u_train, "test": u_test},
        subjects=subjects,
        kernel=kernel,
        signal_scale=signal_scale,
        nuisance_scale=nuisance_scale,
        roi_latents=roi_latents,
    )
    train_images = world.render(z_train, u_train)
    test_images = world.render(z_test, u_test)

    eeg_train, eeg_test = {}, {}
    for s, name in enumerate(subjects):
        nrng = _rng(seed, 3, s)
        for split, z, reps, imgs, concepts, cats, store in (
            ("train", z_train, train_reps, train_images, train_concepts, train_cats, eeg_train),
            ("test", z_test, test_reps, test_images, test_concepts, test_cats, eeg_test),
        ):
            clean = world.clean_eeg(name, z)
            trials = clean[:, None] + noise * nrng.normal(size=(len(z), reps, channels, timepoints))
            store[name] = EegDataset(name, imgs, trials, concepts, cats, split, (f"synth(seed={seed})",))

    # fMRI: a separate image set, categories differ in nuisance content
    frng = _rng(seed, 4)
    fmri_cats = tuple(c for c, k in zip(FMRI_CATEGORIES, fmri_counts) for _ in range(k))
    n_fmri = len(fmri_cats)
    z_fmri = frng.normal(size=(n_fmri, latents))
    u_fmri = frng.normal(size=(n_fmri, n_nuisance))
    gain = np.array([{"natural": 1.0, "shape": 0.5, "letter": 0.0}[c] for c in fmri_cats])
    fmri_images = world.render(z_fmri, u_fmri, gain)
    fmri = {}
    for s in range(fmri_subjects):
        vrng = _rng(seed, 5, s)
        patterns = {}
        for roi, idx in roi_latents.items():
            w = vrng.normal(size=(voxels, len(idx)))
            offset = vrng.normal(1.0, 0.3, size=voxels)
            patterns[roi] = offset[None] + z_fmri[:, idx] @ w.T + fmri_noise * vrng.normal(size=(n_fmri, voxels))
        name = f"fmri-{s + 1:02d}"
        fmri[name] = FmriDataset(name, patterns, fmri_cats)

    drng = _rng(seed, 6)
    n_extra = max(0, n_features - latents - n_nuisance)
    values = np.concatenate([z_test, u_test, drng.normal(size=(n_test, n_extra))], axis=1)[:, :n_features]
    names = (
        [f"latent_{k}" for k in range(latents)]
        + [f"nuisance_{m}" for m in range(n_nuisance)]
        + [f"distractor_{d}" for d in range(n_extra)]
    )[:n_features]
    features = FeatureEmbedding(values, tuple(names))
    return SynthBundle(world, eeg_train, eeg_test, fmri_images, fmri, features)
