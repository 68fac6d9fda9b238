"""Planning-token classification: SG occurrence matching and token labeling.

Matching happens on the normalized text at word granularity: greedy,
left-to-right, longest match first, non-overlapping. Spans are then mapped
back to the original text so they line up with token boundaries, and a token
is a planning token when its char span overlaps any match by one char or more.
"""

from __future__ import annotations

from dataclasses import dataclass

from .mining import Gram, SGSet
from .textnorm import (
    NORMALIZATION_VERSION,
    normalize_with_spans,
    word_core,
    word_spans,
    words_match,
)
from .traces import Trajectory


@dataclass(frozen=True)
class SGMatch:
    """One SG occurrence. ``char_span`` indexes the original trajectory text."""

    gram: Gram
    cluster_id: int
    char_span: tuple[int, int]


@dataclass(frozen=True)
class TokenClassMask:
    """Per-token planning labels for one trajectory."""

    labels: tuple[bool, ...]

    @property
    def planning_indices(self) -> tuple[int, ...]:
        return tuple(i for i, flag in enumerate(self.labels) if flag)

    def __len__(self) -> int:
        return len(self.labels)


def _word_key(word: str) -> str:
    core = word_core(word)
    return core if core else word


class _Matcher:
    """Grams indexed by first-word key, longest candidates first."""

    def __init__(self, sgset: SGSet):
        self.by_first: dict[str, list[tuple[Gram, int]]] = {}
        for cluster in sgset.clusters:
            for gram in cluster.members:
                self.by_first.setdefault(_word_key(gram.words[0]), []).append((gram, cluster.id))
        for candidates in self.by_first.values():
            candidates.sort(key=lambda gc: (-len(gc[0].words), -len(gc[0].surface), gc[0].surface))

    def match_words(self, words: list[str]) -> list[tuple[int, int, Gram, int]]:
        """Greedy scan; returns (start_word, end_word, gram, cluster_id) tuples."""
        out: list[tuple[int, int, Gram, int]] = []
        i = 0
        n = len(words)
        while i < n:
            matched = None
            for gram, cluster_id in self.by_first.get(_word_key(words[i]), ()):
                k = len(gram.words)
                if i + k <= n and all(
                    words_match(gw, words[i + j]) for j, gw in enumerate(gram.words)
                ):
                    matched = (i, i + k, gram, cluster_id)
                    break
            if matched is None:
                i += 1
            else:
                out.append(matched)
                i = matched[1]
        return out


def _check_version(sgset: SGSet) -> None:
    if sgset.normalization_version != NORMALIZATION_VERSION:
        raise ValueError(
            f"SG set was built with normalization {sgset.normalization_version!r}, "
            f"this build uses {NORMALIZATION_VERSION!r}"
        )


def match_word_ranges(words: list[str], sgset: SGSet) -> list[tuple[int, int, Gram, int]]:
    """Greedy SG matching over a pre-normalized word list (word-index spans)."""
    _check_version(sgset)
    return _Matcher(sgset).match_words(words)


def match_sgs(text: str, sgset: SGSet) -> list[SGMatch]:
    """Find non-overlapping SG occurrences in ``text``.

    Returns matches in left-to-right order with char spans into the original
    (unnormalized) text. Raises on a normalization version mismatch.
    """
    _check_version(sgset)
    norm, char_map = normalize_with_spans(text)
    spans = word_spans(norm)
    words = [norm[a:b] for a, b in spans]
    matches: list[SGMatch] = []
    for start_w, end_w, gram, cluster_id in _Matcher(sgset).match_words(words):
        norm_start = spans[start_w][0]
        norm_end = spans[end_w - 1][1]
        orig_start = char_map[norm_start][0]
        orig_end = char_map[norm_end - 1][1]
        matches.append(SGMatch(gram=gram, cluster_id=cluster_id, char_span=(orig_start, orig_end)))
    return matches


def token_spans(trajectory: Trajectory) -> list[tuple[int, int]]:
    """Char span of each token in full_text, from cumulative token lengths."""
    spans: list[tuple[int, int]] = []
    pos = 0
    for token in trajectory.tokens:
        spans.append((pos, pos + len(token.text)))
        pos += len(token.text)
    return spans


def label_tokens(trajectory: Trajectory, matches: list[SGMatch]) -> TokenClassMask:
    """Label a token as planning iff its span overlaps any match by >= 1 char."""
    starts = sorted(m.char_span for m in matches)
    labels = []
    m_idx = 0
    for tok_start, tok_end in token_spans(trajectory):
        # skip matches that end at or before this token
        while m_idx < len(starts) and starts[m_idx][1] <= tok_start:
            m_idx += 1
        planning = False
        for span in starts[m_idx:]:
            if span[0] >= tok_end:
                break
            if min(span[1], tok_end) - max(span[0], tok_start) >= 1:
                planning = True
                break
        labels.append(planning)
    return TokenClassMask(labels=tuple(labels))


def classify_trajectory(trajectory: Trajectory, sgset: SGSet) -> tuple[TokenClassMask, list[SGMatch]]:
    """Convenience wrapper: match SGs then label the trajectory's tokens."""
    matches = match_sgs(trajectory.full_text, sgset)
    return label_tokens(trajectory, matches), matches
