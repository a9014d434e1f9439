"""Topic segmentation by dissimilarity peaks between adjacent sentences.

Adjacent-sentence dissimilarity is the negated Gaussian similarity of
their embeddings; strict local maxima above a threshold are subject
boundaries, and the runs between boundaries are the subject spans.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, TooFewSentences


@dataclass(frozen=True)
class DissimilaritySeries:
    scores: tuple[float, ...]
    sigma: float


@dataclass(frozen=True)
class SubjectSpan:
    span_id: int
    sentence_ids: tuple[int, ...]


def gaussian_similarity(u: np.ndarray, v: np.ndarray, sigma: float) -> float:
    """exp(-||u-v||^2 / (2 sigma^2)), in (0, 1]."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise DimensionMismatch(f"shapes {u.shape} and {v.shape} differ")
    d = u - v
    return math.exp(-float(d @ d) / (2.0 * sigma * sigma))


def dissimilarity_series(
    embeddings: Sequence[np.ndarray], sigma: float = 1.0
) -> DissimilaritySeries:
    """Negated adjacent-pair similarities; length is one less than the input."""
    if len(embeddings) < 2:
        raise TooFewSentences("need at least two sentences for a series")
    scores = tuple(
        -gaussian_similarity(embeddings[i], embeddings[i + 1], sigma)
        for i in range(len(embeddings) - 1)
    )
    return DissimilaritySeries(scores, sigma)


def default_theta(series: DissimilaritySeries) -> float:
    """mean + 0.5 * stddev of the scores."""
    scores = np.asarray(series.scores)
    return float(scores.mean() + 0.5 * scores.std())


def detect_boundaries(series: DissimilaritySeries, theta: float) -> list[int]:
    """Indices that are strict local maxima above theta.

    Boundary i separates sentence i from sentence i+1. Missing neighbors
    at the ends count as -inf.
    """
    scores = series.scores
    boundaries = []
    for i, s in enumerate(scores):
        if s <= theta:
            continue
        left = scores[i - 1] if i > 0 else -math.inf
        right = scores[i + 1] if i + 1 < len(scores) else -math.inf
        if s > left and s > right:
            boundaries.append(i)
    return boundaries


def spans_from_boundaries(n_sentences: int, boundaries: Sequence[int]) -> list[SubjectSpan]:
    spans = []
    start = 0
    for b in sorted(boundaries):
        spans.append(SubjectSpan(len(spans), tuple(range(start, b + 1))))
        start = b + 1
    spans.append(SubjectSpan(len(spans), tuple(range(start, n_sentences))))
    return spans


def segment(
    embeddings: Sequence[np.ndarray],
    sigma: float = 1.0,
    theta: Optional[float] = None,
) -> list[SubjectSpan]:
    """Partition sentences 0..L-1 into maximal runs between boundaries.

    theta defaults to mean + 0.5 * stddev of the dissimilarity scores.
    A single sentence yields one singleton span.
    """
    n = len(embeddings)
    if n == 0:
        raise TooFewSentences("cannot segment an empty document")
    if n == 1:
        return [SubjectSpan(0, (0,))]
    series = dissimilarity_series(embeddings, sigma)
    if theta is None:
        theta = default_theta(series)
    return spans_from_boundaries(n, detect_boundaries(series, theta))
