"""Latent-rule extraction: spectral clustering on the unnormalized Laplacian.

Each subject span becomes a fully connected similarity graph; the rows
of the k smallest-eigenvalue eigenvectors of L = D - W are clustered by
k-means, and every non-empty cluster of sentences is one latent rule.
The per-span rule sets are folded into an ordered universe that fixes
the index space for indicator vectors.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EigensolveFailure
from .segmentation import SubjectSpan, gaussian_similarity

KMEANS_RESTARTS = 5
KMEANS_MAX_ITER = 300
MERGE_COSINE = 0.95


def build_similarity_graph(embeddings: Sequence[np.ndarray], sigma: float = 1.0) -> np.ndarray:
    """Symmetric weight matrix with Gaussian similarities, zero diagonal."""
    n = len(embeddings)
    w = np.zeros((n, n), dtype=np.float64)
    for i in range(n):
        for j in range(i + 1, n):
            w[i, j] = w[j, i] = gaussian_similarity(embeddings[i], embeddings[j], sigma)
    return w


def laplacian(w: np.ndarray) -> np.ndarray:
    """L = D - W with D the diagonal of row sums."""
    w = np.asarray(w, dtype=np.float64)
    return np.diag(w.sum(axis=1)) - w


def choose_k(n: int) -> int:
    """Cluster count log2(n), rounded, clamped to [1, n]."""
    if n < 1:
        raise ValueError("need at least one vertex")
    return max(1, min(n, int(round(math.log2(n)))))


def _kmeans_pp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]), dtype=np.float64)
    centers[0] = x[rng.integers(n)]
    dist2 = ((x - centers[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = dist2.sum()
        if total <= 0.0:
            centers[c] = x[rng.integers(n)]
        else:
            centers[c] = x[rng.choice(n, p=dist2 / total)]
        dist2 = np.minimum(dist2, ((x - centers[c]) ** 2).sum(axis=1))
    return centers


def _lloyd(x: np.ndarray, centers: np.ndarray, max_iter: int) -> tuple[np.ndarray, float]:
    for _ in range(max_iter):
        d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = d2.argmin(axis=1)  # argmin ties go to the lowest index
        new_centers = centers.copy()
        for c in range(centers.shape[0]):
            members = x[labels == c]
            if len(members):
                new_centers[c] = members.mean(axis=0)
        if np.array_equal(new_centers, centers):
            break
        centers = new_centers
    d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    labels = d2.argmin(axis=1)
    inertia = float(d2[np.arange(len(x)), labels].sum())
    return labels, inertia


def kmeans(x: np.ndarray, k: int, seed: int = 0) -> np.ndarray:
    """Deterministic k-means: k-means++ init, best of 5 restarts by inertia."""
    x = np.asarray(x, dtype=np.float64)
    best_labels, best_inertia = None, math.inf
    for restart in range(KMEANS_RESTARTS):
        rng = np.random.default_rng(np.random.SeedSequence([seed, restart]))
        centers = _kmeans_pp_init(x, k, rng)
        labels, inertia = _lloyd(x, centers, KMEANS_MAX_ITER)
        if inertia < best_inertia:
            best_labels, best_inertia = labels, inertia
    return best_labels


def spectral_cluster(w: np.ndarray, k: int, seed: int = 0) -> list[tuple[int, ...]]:
    """Cluster graph vertices via the k smallest Laplacian eigenvectors.

    Returns the non-empty clusters as sorted vertex-index tuples.
    """
    n = w.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k={k} outside [1, {n}]")
    if k == 1 or n == 1:
        return [tuple(range(n))]
    lap = laplacian(w)
    try:
        _, eigvecs = np.linalg.eigh(lap)
    except np.linalg.LinAlgError as exc:
        raise EigensolveFailure(str(exc)) from exc
    u = eigvecs[:, :k]
    labels = kmeans(u, k, seed)
    clusters = []
    for c in range(k):
        members = tuple(int(i) for i in np.flatnonzero(labels == c))
        if members:
            clusters.append(members)
    return clusters


@dataclass(frozen=True)
class Rule:
    rule_id: str
    member_sentence_ids: tuple[int, ...]
    centroid: np.ndarray
    subject_span_id: int

    def __eq__(self, other):
        return isinstance(other, Rule) and self.rule_id == other.rule_id

    def __hash__(self):
        return hash(self.rule_id)


@dataclass(frozen=True)
class RuleSet:
    span_id: int
    rules: tuple[Rule, ...]


def _rule_id(member_ids: Sequence[int]) -> str:
    joined = ",".join(str(i) for i in sorted(member_ids))
    return hashlib.sha256(joined.encode("ascii")).hexdigest()[:16]


def extract_rules(
    span: SubjectSpan,
    embeddings: Sequence[np.ndarray],
    sigma: float = 1.0,
    seed: int = 0,
) -> RuleSet:
    """Extract the latent rules of one span; one rule per non-empty cluster.

    embeddings are the span's sentence embeddings in span order.
    """
    n = len(span.sentence_ids)
    if n == 0:
        raise ValueError("span has no sentences")
    if len(embeddings) != n:
        raise ValueError("one embedding per span sentence required")
    w = build_similarity_graph(embeddings, sigma)
    clusters = spectral_cluster(w, choose_k(n), seed)
    emb = np.asarray(embeddings, dtype=np.float64)
    rules = []
    seen = set()
    for cluster in clusters:
        member_ids = tuple(span.sentence_ids[v] for v in cluster)
        rid = _rule_id(member_ids)
        if rid in seen:
            continue
        seen.add(rid)
        rules.append(Rule(rid, member_ids, emb[list(cluster)].mean(axis=0), span.span_id))
    rules.sort(key=lambda r: r.member_sentence_ids[0])
    return RuleSet(span.span_id, tuple(rules))


@dataclass(frozen=True)
class Universe:
    """Ordered, deduplicated list of all rules; index = indicator position."""

    rules: tuple[Rule, ...]

    def __len__(self) -> int:
        return len(self.rules)

    def index_of(self, rule_id: str) -> int:
        return self._index[rule_id]

    def __post_init__(self):
        object.__setattr__(
            self, "_index", {r.rule_id: i for i, r in enumerate(self.rules)}
        )

    def indicator(self, indices: Sequence[int]) -> np.ndarray:
        vec = np.zeros(len(self.rules), dtype=np.float64)
        for i in indices:
            vec[i] = 1.0
        return vec


def _cosine(u: np.ndarray, v: np.ndarray) -> float:
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(u @ v / (nu * nv))


def build_universe(rule_sets: Sequence[RuleSet]) -> tuple[Universe, list[set[int]]]:
    """Fold per-span rule sets into (universe, per-subject index sets).

    Duplicate rule ids collapse to one entry; rules from different
    subjects whose centroids have cosine >= 0.95 merge into the earlier
    entry.
    """
    if not rule_sets:
        raise ValueError("need at least one rule set")
    universe_rules: list[Rule] = []
    by_id: dict[str, int] = {}
    subject_indices: list[set[int]] = []
    for rule_set in rule_sets:
        indices = set()
        for rule in rule_set.rules:
            if rule.rule_id in by_id:
                indices.add(by_id[rule.rule_id])
                continue
            merged = None
            for idx, existing in enumerate(universe_rules):
                if existing.subject_span_id != rule.subject_span_id and _cosine(
                    existing.centroid, rule.centroid
                ) >= MERGE_COSINE:
                    merged = idx
                    break
            if merged is None:
                universe_rules.append(rule)
                merged = len(universe_rules) - 1
            by_id[rule.rule_id] = merged
            indices.add(merged)
        subject_indices.append(indices)
    return Universe(tuple(universe_rules)), subject_indices
