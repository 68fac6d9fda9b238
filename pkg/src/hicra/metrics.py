"""Training-dynamics metrics over stepped trace windows.

Everything here reports in bits (stored token quantities are nats). Series are
step-indexed with explicit gap markers (value None) where a window has nothing
to measure, and serialize to plain CSV so any plotting tool can consume them.
"""

from __future__ import annotations

import csv
import math
import random
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Literal, Mapping, Sequence

import numpy as np

from .classify import TokenClassMask, match_word_ranges, token_spans
from .mining import Gram, SGCluster, SGSet
from .textnorm import normalize
from .traces import RolloutGroup, Trajectory

LN2 = math.log(2.0)

UNITS = ("bits", "nats", "ratio", "tokens", "fraction", "count")

TokenClass = Literal["planning", "execution", "all"]


@dataclass(frozen=True)
class MetricPoint:
    step: int
    value: float | None  # None marks a gap (nothing measurable at this step)


@dataclass(frozen=True)
class MetricSeries:
    """A named step series. Steps strictly increase; values are finite or gaps."""

    name: str
    unit: str
    points: tuple[MetricPoint, ...]
    lower_bound: bool = False  # set when any value is a truncated estimate

    def __post_init__(self) -> None:
        if self.unit not in UNITS:
            raise ValueError(f"unknown unit {self.unit!r}, expected one of {UNITS}")
        steps = [p.step for p in self.points]
        if any(a >= b for a, b in zip(steps, steps[1:])):
            raise ValueError(f"steps must be strictly increasing in series {self.name!r}")
        for p in self.points:
            if p.value is not None and not math.isfinite(p.value):
                raise ValueError(f"non-finite value at step {p.step} in series {self.name!r}")

    @property
    def steps(self) -> tuple[int, ...]:
        return tuple(p.step for p in self.points)

    def values(self, skip_gaps: bool = False) -> tuple[float | None, ...]:
        if skip_gaps:
            return tuple(p.value for p in self.points if p.value is not None)
        return tuple(p.value for p in self.points)


def write_series_csv(series: MetricSeries, path: str | Path) -> None:
    """Write step,value,unit,gap rows; gaps carry an empty value and gap=1."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "value", "unit", "gap"])
        for p in series.points:
            if p.value is None:
                writer.writerow([p.step, "", series.unit, 1])
            else:
                writer.writerow([p.step, repr(p.value), series.unit, 0])


def read_series_csv(path: str | Path, name: str | None = None) -> MetricSeries:
    """Inverse of write_series_csv; the series name defaults to the file stem."""
    path = Path(path)
    points: list[MetricPoint] = []
    unit = None
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["step", "value", "unit", "gap"]:
            raise ValueError(f"unexpected series CSV header in {path}: {header}")
        for row in reader:
            step, value, row_unit, gap = row
            unit = row_unit if unit is None else unit
            if row_unit != unit:
                raise ValueError(f"mixed units in {path}")
            points.append(MetricPoint(int(step), None if gap == "1" else float(value)))
    if unit is None:
        raise ValueError(f"empty series file {path}")
    return MetricSeries(name=name or path.stem, unit=unit, points=tuple(points))


@dataclass(frozen=True)
class StepWindow:
    """All trajectories sampled at one training step, with optional masks."""

    step: int
    trajectories: tuple[Trajectory, ...]
    masks: tuple[TokenClassMask, ...] | None = None

    def __post_init__(self) -> None:
        if self.masks is not None:
            if len(self.masks) != len(self.trajectories):
                raise ValueError("one mask per trajectory required")
            for traj, mask in zip(self.trajectories, self.masks):
                if len(mask) != len(traj.tokens):
                    raise ValueError(
                        f"mask length {len(mask)} does not match trajectory of {len(traj.tokens)} tokens"
                    )


def build_windows(
    trajectories: Sequence[Trajectory],
    masks: Sequence[TokenClassMask] | None = None,
) -> list[StepWindow]:
    """Group trajectories (and aligned masks) by step, sorted ascending."""
    if masks is not None and len(masks) != len(trajectories):
        raise ValueError("one mask per trajectory required")
    buckets: dict[int, list[int]] = {}
    for i, traj in enumerate(trajectories):
        buckets.setdefault(traj.step, []).append(i)
    windows = []
    for step in sorted(buckets):
        idx = buckets[step]
        windows.append(
            StepWindow(
                step=step,
                trajectories=tuple(trajectories[i] for i in idx),
                masks=None if masks is None else tuple(masks[i] for i in idx),
            )
        )
    return windows


def _needs_masks(window: StepWindow, token_class: str) -> None:
    if token_class not in ("planning", "execution", "all"):
        raise ValueError(f"token_class must be planning/execution/all, got {token_class!r}")
    if token_class != "all" and window.masks is None:
        raise ValueError(f"token_class {token_class!r} requires masks on step {window.step}")


def _iter_class_tokens(window: StepWindow, token_class: str):
    for t_idx, traj in enumerate(window.trajectories):
        for k, token in enumerate(traj.tokens):
            if token_class == "all":
                yield token
            else:
                planning = window.masks[t_idx].labels[k]  # type: ignore[index]
                if planning == (token_class == "planning"):
                    yield token


def token_entropy_bits(token) -> tuple[float, bool]:
    """Per-token entropy in bits, falling back to a truncated top-k estimate.

    Returns (value, truncated). The top-k sum -sum(p log p) over the recorded
    alternatives is a lower bound on the full distribution entropy.
    """
    if token.entropy is not None:
        return token.entropy / LN2, False
    if token.topk is not None:
        total = 0.0
        for _, lp in token.topk:
            p = math.exp(lp)
            if p > 0.0:
                total -= p * lp
        return total / LN2, True
    raise ValueError(f"token {token.text!r} has neither entropy nor topk")


def token_entropy_series(windows: Sequence[StepWindow], token_class: TokenClass = "all") -> MetricSeries:
    """Mean per-token entropy (bits) of the class tokens per window."""
    points = []
    any_truncated = False
    for window in windows:
        _needs_masks(window, token_class)
        values = []
        for token in _iter_class_tokens(window, token_class):
            value, truncated = token_entropy_bits(token)
            any_truncated = any_truncated or truncated
            values.append(value)
        points.append(MetricPoint(window.step, sum(values) / len(values) if values else None))
    return MetricSeries(
        name=f"token_entropy_{token_class}",
        unit="bits",
        points=tuple(points),
        lower_bound=any_truncated,
    )


def relative_perplexity_series(
    windows: Sequence[StepWindow], token_class: TokenClass = "all"
) -> MetricSeries:
    """Window perplexity exp(-mean logprob) normalized by the first window.

    The first point is exactly 1.0 by construction; windows without class
    tokens become gaps, except the first, which must define the baseline.
    """
    if not windows:
        raise ValueError("no windows given")
    raw: list[float | None] = []
    for window in windows:
        _needs_masks(window, token_class)
        logprobs = [t.logprob for t in _iter_class_tokens(window, token_class)]
        raw.append(math.exp(-sum(logprobs) / len(logprobs)) if logprobs else None)
    if raw[0] is None:
        raise ValueError("baseline undefined: first window has no tokens of the class")
    baseline = raw[0]
    points = tuple(
        MetricPoint(w.step, None if v is None else v / baseline) for w, v in zip(windows, raw)
    )
    return MetricSeries(name=f"relative_perplexity_{token_class}", unit="ratio", points=points)


def _entropy_bits(counts: Iterable[int]) -> float:
    total = sum(counts)
    return -sum((c / total) * math.log2(c / total) for c in counts if c)


def _window_match_keys(window: StepWindow, sgset: SGSet, key: str) -> list[object]:
    if key not in ("gram", "cluster"):
        raise ValueError(f"key must be 'gram' or 'cluster', got {key!r}")
    keys: list[object] = []
    for traj in window.trajectories:
        words = normalize(traj.full_text).split()
        for _, _, gram, cluster_id in match_word_ranges(words, sgset):
            keys.append(gram.surface if key == "gram" else cluster_id)
    return keys


def semantic_entropy(window: StepWindow, sgset: SGSet, key: str = "gram") -> float | None:
    """Shannon entropy (bits) of SG occurrence counts in the window.

    Counts non-overlapping matches across all trajectories, keyed by gram
    surface or by cluster id. No matches at all is a gap (None).
    """
    if not window.trajectories:
        raise ValueError("semantic entropy over an empty window")
    counts = Counter(_window_match_keys(window, sgset, key))
    if not counts:
        return None
    return _entropy_bits(counts.values())


def semantic_entropy_series(
    windows: Sequence[StepWindow], sgset: SGSet, key: str = "gram"
) -> MetricSeries:
    points = tuple(
        MetricPoint(w.step, semantic_entropy(w, sgset, key=key)) for w in windows
    )
    return MetricSeries(name=f"semantic_entropy_{key}", unit="bits", points=points)


def conditional_entropy(
    window: StepWindow, sgset: SGSet, w: int = 4, key: str = "gram"
) -> float | None:
    """H(continuation | SG) in bits over the window's SG occurrences.

    The continuation of an occurrence is the next ``w`` normalized words that
    fall outside every SG match in that trajectory; occurrences with fewer
    than ``w`` such words are skipped. Returns None when nothing qualifies.
    """
    if w < 1:
        raise ValueError(f"continuation length must be >= 1, got {w}")
    if key not in ("gram", "cluster"):
        raise ValueError(f"key must be 'gram' or 'cluster', got {key!r}")
    pairs: list[tuple[object, tuple[str, ...]]] = []
    for traj in window.trajectories:
        words = normalize(traj.full_text).split()
        ranges = match_word_ranges(words, sgset)
        inside = [False] * len(words)
        for start, end, _, _ in ranges:
            for i in range(start, end):
                inside[i] = True
        for start, end, gram, cluster_id in ranges:
            continuation = []
            for i in range(end, len(words)):
                if not inside[i]:
                    continuation.append(words[i])
                    if len(continuation) == w:
                        break
            if len(continuation) == w:
                x = gram.surface if key == "gram" else cluster_id
                pairs.append((x, tuple(continuation)))
    if not pairs:
        return None
    by_x: dict[object, Counter] = {}
    for x, y in pairs:
        by_x.setdefault(x, Counter())[y] += 1
    total = len(pairs)
    return sum(
        (sum(ys.values()) / total) * _entropy_bits(ys.values()) for ys in by_x.values()
    )


def accuracy_length_series(
    windows: Sequence[StepWindow],
) -> tuple[MetricSeries, MetricSeries]:
    """Mean correctness and mean token count per window (gaps when empty)."""
    acc = []
    length = []
    for window in windows:
        if window.trajectories:
            n = len(window.trajectories)
            acc.append(MetricPoint(window.step, sum(t.correct for t in window.trajectories) / n))
            length.append(MetricPoint(window.step, sum(len(t.tokens) for t in window.trajectories) / n))
        else:
            acc.append(MetricPoint(window.step, None))
            length.append(MetricPoint(window.step, None))
    return (
        MetricSeries(name="accuracy", unit="fraction", points=tuple(acc)),
        MetricSeries(name="mean_length", unit="tokens", points=tuple(length)),
    )


def pass_at_k(groups: Sequence[RolloutGroup], k: int) -> float:
    """Unbiased pass@k over rollout groups: mean of 1 - C(G-c, k)/C(G, k)."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not groups:
        raise ValueError("no rollout groups given")
    values = []
    for group in groups:
        g = group.size
        if g < k:
            raise ValueError(f"group ({group.problem_id!r}, {group.step}) has size {g} < k={k}")
        c = sum(1 for t in group.trajectories if t.correct)
        values.append(1.0 - math.comb(g - c, k) / math.comb(g, k))
    return sum(values) / len(values)


def entropy_overlap_stats(
    windows: Sequence[StepWindow], p: float = 0.2
) -> tuple[float, float]:
    """Overlap between planning tokens and the top-p token-entropy set.

    Pools every token in the given windows, thresholds entropy at the (1 - p)
    quantile, and returns (fraction of planning tokens that are in the top set,
    fraction of the top set that is planning). NaN for an empty denominator.
    """
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must be in (0, 1), got {p}")
    entropies: list[float] = []
    planning: list[bool] = []
    for window in windows:
        _needs_masks(window, "planning")
        for traj, mask in zip(window.trajectories, window.masks):  # type: ignore[arg-type]
            for token, flag in zip(traj.tokens, mask.labels):
                entropies.append(token_entropy_bits(token)[0])
                planning.append(flag)
    if not entropies:
        raise ValueError("no tokens in the given windows")
    values = np.asarray(entropies)
    flags = np.asarray(planning)
    threshold = float(np.quantile(values, 1.0 - p))
    top = values >= threshold
    n_planning = int(flags.sum())
    n_top = int(top.sum())
    frac_planning_in_top = float((top & flags).sum() / n_planning) if n_planning else math.nan
    frac_top_planning = float((top & flags).sum() / n_top) if n_top else math.nan
    return frac_planning_in_top, frac_top_planning


def sensitivity_drop(sgset: SGSet, rho: float, seed: int) -> SGSet:
    """Remove round(rho * gram_count) grams uniformly at random.

    Sampling is seeded and order-independent (grams are canonicalized by
    surface first). Clusters left empty are dropped; remaining cluster ids and
    metadata are preserved. rho = 0 returns an equal SG set.
    """
    if not 0.0 <= rho < 1.0:
        raise ValueError(f"rho must be in [0, 1), got {rho}")
    surfaces = sorted(g.surface for g in sgset.grams)
    n_remove = round(rho * len(surfaces))
    if n_remove >= len(surfaces):
        raise ValueError(f"dropping {n_remove} of {len(surfaces)} grams would empty the set")
    removed = set(random.Random(seed).sample(surfaces, n_remove))
    clusters = []
    for cluster in sgset.clusters:
        members = tuple(g for g in cluster.members if g.surface not in removed)
        if members:
            clusters.append(SGCluster(id=cluster.id, members=members, cluster_df=cluster.cluster_df))
    return SGSet(
        clusters=tuple(clusters),
        selection_quantile=sgset.selection_quantile,
        normalization_version=sgset.normalization_version,
    )
