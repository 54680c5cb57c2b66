"""Topic-quality scores computed from posterior samples.

``variability`` is the per-topic sample standard deviation, across documents,
of the coefficient of variation cv_dk = std_dk / mean_dk of the collected
theta estimates. Topics that attach strongly to some documents and weakly to
others spread their cv widely and score high; topics spread evenly over the
corpus score low. ``mu_variability`` and ``sigma_variability`` are the same
cross-document dispersion applied to the raw mean and standard deviation.

``stability`` is the mean cosine similarity between each sampled topic-word
distribution and the per-topic mean of all samples, computed in two passes
over the on-disk sample store.

All standard deviations use the sample convention (divisor n-1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sampler import PhiSampleStore, PosteriorSummary


@dataclass
class TopicScoreVector:
    """One score per topic under a named metric."""

    metric_name: str
    scores: np.ndarray

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.scores.ndim != 1:
            raise ValueError("scores must be a one-dimensional vector")
        if not np.all(np.isfinite(self.scores)):
            raise ValueError(f"metric {self.metric_name!r} produced non-finite scores")


def _column_std(matrix: np.ndarray, metric_name: str) -> TopicScoreVector:
    if matrix.shape[0] < 2:
        raise ValueError("at least 2 documents required")
    std = np.std(matrix, axis=0, ddof=1)
    # exactly constant columns must score exactly 0, not rounding noise
    std[np.all(matrix == matrix[0], axis=0)] = 0.0
    return TopicScoreVector(metric_name, std)


def variability(summary: PosteriorSummary) -> TopicScoreVector:
    """Per-topic std across documents of cv_dk."""
    return _column_std(summary.cv, "variability")


def mu_variability(summary: PosteriorSummary) -> TopicScoreVector:
    """Per-topic std across documents of mean_dk."""
    return _column_std(summary.mean, "mu_variability")


def sigma_variability(summary: PosteriorSummary) -> TopicScoreVector:
    """Per-topic std across documents of std_dk."""
    return _column_std(summary.std, "sigma_variability")


def stability(store: PhiSampleStore) -> TopicScoreVector:
    """Mean cosine similarity of each phi sample to the per-topic mean phi.

    Pass 1 accumulates the mean; pass 2 averages cosines. Holds one K x V
    matrix in memory at a time.
    """
    if store.num_samples < 2:
        raise ValueError("stability needs at least 2 stored samples")

    mean_phi = np.zeros((store.num_topics, store.vocab_size), dtype=np.float64)
    for phi in store.iter_samples():
        mean_phi += phi
    mean_phi /= store.num_samples
    mean_norms = np.linalg.norm(mean_phi, axis=1)

    acc = np.zeros(store.num_topics, dtype=np.float64)
    for phi in store.iter_samples():
        dots = np.einsum("kv,kv->k", phi, mean_phi)
        acc += dots / (np.linalg.norm(phi, axis=1) * mean_norms)
    return TopicScoreVector("stability", acc / store.num_samples)
