"""Strategic-gram mining: n-gram extraction, clustering, and selection.

The pipeline runs over successful solutions only: extract word n-grams,
embed them, cluster near-duplicates under a leader heuristic, then keep the
clusters whose members appear in the most distinct solutions. The selected
clusters form an SGSet, the unit shipped to classification and metrics.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from . import lexicon
from .embeddings import EmbeddingProvider
from .textnorm import NORMALIZATION_VERSION, normalize

# Mining is restricted to 3..5-word grams; the built-in lexicon additionally
# carries shorter discourse cues and a few 6-word phrases, so the type itself
# admits 1..6 words.
MAX_GRAM_WORDS = 6
MINE_MAX_N = 5

SGSET_FILE_VERSION = 1

DEFAULT_TAU = 0.8
DEFAULT_QUANTILE = 0.20


@dataclass(frozen=True)
class Gram:
    """A normalized word n-gram. ``surface`` is derived from ``words``."""

    words: tuple[str, ...]
    surface: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        if not 1 <= len(self.words) <= MAX_GRAM_WORDS:
            raise ValueError(f"gram must have 1..{MAX_GRAM_WORDS} words, got {len(self.words)}")
        for w in self.words:
            if not w or any(c.isspace() for c in w):
                raise ValueError(f"gram words must be non-empty and space-free, got {w!r}")
        object.__setattr__(self, "surface", " ".join(self.words))

    @classmethod
    def from_surface(cls, surface: str) -> "Gram":
        norm = normalize(surface)
        if not norm:
            raise ValueError(f"gram surface is empty after normalization: {surface!r}")
        return cls(tuple(norm.split(" ")))

    def __len__(self) -> int:
        return len(self.words)


class GramStats(NamedTuple):
    total_count: int
    doc_frequency: int


def extract_ngrams(
    solutions: Sequence[str], n_min: int = 3, n_max: int = 5
) -> dict[Gram, GramStats]:
    """Count all word n-grams of lengths n_min..n_max across solutions.

    total_count sums every occurrence; doc_frequency counts distinct solutions
    containing the gram at least once. Texts are normalized first.
    """
    if not 1 <= n_min <= n_max <= MINE_MAX_N:
        raise ValueError(f"need 1 <= n_min <= n_max <= {MINE_MAX_N}, got [{n_min}, {n_max}]")
    if len(solutions) == 0:
        raise ValueError("cannot mine an empty corpus")
    totals: dict[Gram, int] = {}
    docs: dict[Gram, int] = {}
    for text in solutions:
        words = normalize(text).split()
        seen: set[Gram] = set()
        for n in range(n_min, n_max + 1):
            for i in range(len(words) - n + 1):
                gram = Gram(tuple(words[i : i + n]))
                totals[gram] = totals.get(gram, 0) + 1
                seen.add(gram)
        for gram in seen:
            docs[gram] = docs.get(gram, 0) + 1
    return {g: GramStats(totals[g], docs[g]) for g in totals}


@dataclass(frozen=True)
class SGCluster:
    """A group of near-duplicate grams; the first member is the leader."""

    id: int
    members: tuple[Gram, ...]
    cluster_df: int | None = None

    def __post_init__(self) -> None:
        if self.id < 0:
            raise ValueError(f"cluster id must be >= 0, got {self.id}")
        if not self.members:
            raise ValueError("cluster must have at least one member")
        if self.cluster_df is not None and self.cluster_df < 0:
            raise ValueError(f"cluster_df must be >= 0, got {self.cluster_df}")

    @property
    def leader(self) -> Gram:
        return self.members[0]


def cluster_grams(
    grams: Sequence[Gram],
    vectors: np.ndarray | Sequence[Sequence[float]],
    tau: float = DEFAULT_TAU,
    total_counts: Mapping[Gram, int] | None = None,
) -> list[SGCluster]:
    """Greedy leader clustering at cosine threshold tau.

    Grams are canonicalized to descending total_count order (ties broken by
    surface) before the scan, so the outcome is invariant to input order. Each
    gram joins the first existing cluster whose leader is within tau, else
    founds a new cluster. Cluster ids follow creation order.
    """
    if not -1.0 <= tau <= 1.0:
        raise ValueError(f"tau must be a cosine value in [-1, 1], got {tau}")
    mat = np.asarray(vectors, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[0] != len(grams):
        raise ValueError(
            f"need one vector per gram, got shape {mat.shape} for {len(grams)} grams"
        )
    if len(set(g.surface for g in grams)) != len(grams):
        raise ValueError("duplicate gram surfaces in clustering input")
    norms = np.linalg.norm(mat, axis=1)
    if np.any(norms == 0.0):
        raise ValueError("zero vector in clustering input")
    mat = mat / norms[:, None]

    def sort_key(idx: int) -> tuple[int, str]:
        count = 0 if total_counts is None else total_counts.get(grams[idx], 0)
        return (-count, grams[idx].surface)

    order = sorted(range(len(grams)), key=sort_key)
    leader_rows: list[int] = []
    member_lists: list[list[Gram]] = []
    for idx in order:
        placed = False
        for c, row in enumerate(leader_rows):
            if float(mat[idx] @ mat[row]) >= tau:
                member_lists[c].append(grams[idx])
                placed = True
                break
        if not placed:
            leader_rows.append(idx)
            member_lists.append([grams[idx]])
    return [SGCluster(id=c, members=tuple(ms)) for c, ms in enumerate(member_lists)]


@dataclass(frozen=True)
class SGSet:
    """A selected collection of strategic-gram clusters.

    Gram surfaces are unique across the whole set; files record the
    normalization rules they were built with.
    """

    clusters: tuple[SGCluster, ...]
    selection_quantile: float | None = None
    normalization_version: str = NORMALIZATION_VERSION

    def __post_init__(self) -> None:
        surfaces: set[str] = set()
        for cluster in self.clusters:
            for gram in cluster.members:
                if gram.surface in surfaces:
                    raise ValueError(f"duplicate gram surface across clusters: {gram.surface!r}")
                surfaces.add(gram.surface)
        if not surfaces:
            raise ValueError("SG set must contain at least one gram")
        ids = [c.id for c in self.clusters]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate cluster ids")

    @property
    def grams(self) -> tuple[Gram, ...]:
        return tuple(g for c in self.clusters for g in c.members)

    def cluster_of(self, gram: Gram) -> int:
        for cluster in self.clusters:
            if gram in cluster.members:
                return cluster.id
        raise KeyError(f"gram not in set: {gram.surface!r}")

    def save(self, path: str | Path) -> None:
        doc = {
            "version": SGSET_FILE_VERSION,
            "normalization_version": self.normalization_version,
            "selection_quantile": self.selection_quantile,
            "clusters": [
                {
                    "id": c.id,
                    "cluster_df": c.cluster_df,
                    "members": [g.surface for g in c.members],
                }
                for c in self.clusters
            ],
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, ensure_ascii=False, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "SGSet":
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        if not isinstance(doc, dict) or doc.get("version") != SGSET_FILE_VERSION:
            raise ValueError(f"unsupported SG set file version: {doc.get('version')!r}")
        clusters = tuple(
            SGCluster(
                id=int(c["id"]),
                members=tuple(Gram.from_surface(s) for s in c["members"]),
                cluster_df=None if c.get("cluster_df") is None else int(c["cluster_df"]),
            )
            for c in doc.get("clusters", ())
        )
        return cls(
            clusters=clusters,
            selection_quantile=doc.get("selection_quantile"),
            normalization_version=str(doc.get("normalization_version", "")),
        )


def _solution_gram_index(solutions: Sequence[str], lengths: set[int]) -> list[set[tuple[str, ...]]]:
    per_solution: list[set[tuple[str, ...]]] = []
    for text in solutions:
        words = normalize(text).split()
        present: set[tuple[str, ...]] = set()
        for n in lengths:
            for i in range(len(words) - n + 1):
                present.add(tuple(words[i : i + n]))
        per_solution.append(present)
    return per_solution


def score_and_select(
    clusters: Sequence[SGCluster],
    solutions: Sequence[str],
    quantile: float = DEFAULT_QUANTILE,
) -> SGSet:
    """Score clusters by document frequency and keep the top quantile.

    A solution counts toward a cluster when it contains at least one member
    gram as a contiguous word run. The top ceil(quantile * cluster_count)
    clusters by DF are retained; ties prefer more members, then lower id.
    """
    if not clusters:
        raise ValueError("no clusters to select from")
    if not 0.0 < quantile <= 1.0:
        raise ValueError(f"quantile must be in (0, 1], got {quantile}")
    if len(solutions) == 0:
        raise ValueError("cannot score clusters against an empty corpus")
    lengths = {len(g.words) for c in clusters for g in c.members}
    index = _solution_gram_index(solutions, lengths)
    scored = []
    for cluster in clusters:
        df = sum(1 for present in index if any(g.words in present for g in cluster.members))
        scored.append(SGCluster(id=cluster.id, members=cluster.members, cluster_df=df))
    keep = math.ceil(quantile * len(scored))
    scored.sort(key=lambda c: (-(c.cluster_df or 0), -len(c.members), c.id))
    return SGSet(clusters=tuple(scored[:keep]), selection_quantile=quantile)


def load_default_lexicon() -> SGSet:
    """The built-in lexicon as an SGSet of singleton clusters.

    Document frequencies are unavailable for curated entries, so cluster_df
    stays None and no selection quantile is recorded.
    """
    clusters = tuple(
        SGCluster(id=i, members=(Gram.from_surface(s),))
        for i, s in enumerate(sorted(lexicon.ENTRIES))
    )
    return SGSet(clusters=clusters, selection_quantile=None)


def mine_sgset(
    solutions: Sequence[str],
    provider: EmbeddingProvider,
    n_min: int = 3,
    n_max: int = 5,
    tau: float = DEFAULT_TAU,
    quantile: float = DEFAULT_QUANTILE,
) -> SGSet:
    """End-to-end mining: extract, embed, cluster, score, select."""
    stats = extract_ngrams(solutions, n_min=n_min, n_max=n_max)
    grams = sorted(stats, key=lambda g: g.surface)
    vectors = provider.embed([g.surface for g in grams])
    totals = {g: stats[g].total_count for g in grams}
    clusters = cluster_grams(grams, vectors, tau=tau, total_counts=totals)
    return score_and_select(clusters, solutions, quantile=quantile)
