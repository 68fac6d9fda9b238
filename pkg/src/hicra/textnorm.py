"""Text normalization shared by gram mining and token classification.

Normalization is deliberately light: lowercase, collapse whitespace runs to a
single space, strip the ends. Punctuation stays attached to words ("wait," and
"hmm," are distinct lexicon surfaces), so word comparison strips leading and
trailing punctuation on the fly instead of rewriting the stored text.

Any change to these rules must bump NORMALIZATION_VERSION; SG set files record
the version they were built with and classification refuses a mismatch.
"""

from __future__ import annotations

NORMALIZATION_VERSION = "lower-ws-v1"


def normalize(text: str) -> str:
    """Lowercase `text` and collapse internal whitespace to single spaces."""
    return " ".join(text.lower().split())


def normalize_with_spans(text: str) -> tuple[str, list[tuple[int, int]]]:
    """Normalize `text` while tracking where each output char came from.

    Returns the normalized string and a per-character list of half-open
    (start, end) spans into the original text. A normalized span [i, j) maps
    back to original characters spans[i][0] .. spans[j-1][1].
    """
    chars: list[str] = []
    spans: list[tuple[int, int]] = []
    pending_ws: tuple[int, int] | None = None
    for i, ch in enumerate(text):
        if ch.isspace():
            if pending_ws is None:
                pending_ws = (i, i + 1)
            else:
                pending_ws = (pending_ws[0], i + 1)
            continue
        if pending_ws is not None:
            if chars:  # leading whitespace is dropped, not mapped
                chars.append(" ")
                spans.append(pending_ws)
            pending_ws = None
        low = ch.lower()
        # a few Unicode chars lowercase to multiple chars; map all to the source
        for out in low:
            chars.append(out)
            spans.append((i, i + 1))
    return "".join(chars), spans


def word_spans(normalized: str) -> list[tuple[int, int]]:
    """Half-open char spans of the space-separated words of a normalized string."""
    out: list[tuple[int, int]] = []
    start: int | None = None
    for i, ch in enumerate(normalized):
        if ch == " ":
            if start is not None:
                out.append((start, i))
                start = None
        elif start is None:
            start = i
    if start is not None:
        out.append((start, len(normalized)))
    return out


def word_core(word: str) -> str:
    """Strip leading/trailing non-alphanumeric chars for boundary comparison.

    Internal punctuation survives ("that's" stays "that's"), so a bare gram
    word never matches inside a contraction or hyphenation.
    """
    start = 0
    end = len(word)
    while start < end and not word[start].isalnum():
        start += 1
    while end > start and not word[end - 1].isalnum():
        end -= 1
    return word[start:end]


def words_match(gram_word: str, text_word: str) -> bool:
    """True when a gram word and a text word agree at word-boundary level."""
    if gram_word == text_word:
        return True
    core = word_core(gram_word)
    return bool(core) and core == word_core(text_word)
