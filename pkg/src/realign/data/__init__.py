from .datasets import (
    DataError,
    EegDataset,
    FeatureEmbedding,
    FmriDataset,
    average_repetitions,
    filter_by_label,
    pool_across_subjects,
    split_integrity,
)
from .rtf import RtfError, rtf_read, rtf_write
from .synth import SynthBundle, SynthWorld, synth_generate

__all__ = [
    "DataError",
    "EegDataset",
    "FeatureEmbedding",
    "FmriDataset",
    "RtfError",
    "SynthBundle",
    "SynthWorld",
    "average_repetitions",
    "filter_by_label",
    "pool_across_subjects",
    "rtf_read",
    "rtf_write",
    "split_integrity",
    "synth_generate",
]
