from .analyses import (
    CrossSubjectResult,
    Improvement,
    PartialCorrelation,
    SimilarityCurve,
    VariabilityMatrix,
    cross_subject_matrix,
    feature_profile,
    fmri_similarity,
    improvement_stats,
    partial_spearman_r2,
    rsa_compare,
    similarity_timecourses,
    variability,
    window_indices,
    window_mean,
)
from .decoding import eeg_decoding_rdm, eeg_decoding_rdms
from .rdm import Rdm, feature_rdms, fmri_rdm, model_rdm
from .stats import TTest, spearman, stats_battery, ttest_1samp, ttest_paired

__all__ = [
    "CrossSubjectResult",
    "Improvement",
    "PartialCorrelation",
    "Rdm",
    "SimilarityCurve",
    "TTest",
    "VariabilityMatrix",
    "cross_subject_matrix",
    "eeg_decoding_rdm",
    "eeg_decoding_rdms",
    "feature_profile",
    "feature_rdms",
    "fmri_rdm",
    "fmri_similarity",
    "improvement_stats",
    "model_rdm",
    "partial_spearman_r2",
    "rsa_compare",
    "similarity_timecourses",
    "spearman",
    "stats_battery",
    "ttest_1samp",
    "ttest_paired",
    "variability",
    "window_indices",
    "window_mean",
]
