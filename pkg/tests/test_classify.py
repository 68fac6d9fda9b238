import random

import pytest

from hicra.classify import (
    classify_trajectory,
    label_tokens,
    match_sgs,
    match_word_ranges,
)
from hicra.mining import SGSet
from hicra.textnorm import normalize, words_match

from conftest import make_gram, make_sgset, make_trajectory


def oracle_leftmost_longest(words, sgset):
    """Independent matcher: enumerate all candidates, then walk leftmost-longest.

    Candidate table built by brute force over every (position, gram) pair;
    ties at a position resolved by word count, then surface length, then
    surface order, mirroring the documented precedence.
    """
    candidates: dict[int, list] = {}
    for cluster in sgset.clusters:
        for gram in cluster.members:
            k = len(gram.words)
            for i in range(len(words) - k + 1):
                if all(words_match(gw, words[i + j]) for j, gw in enumerate(gram.words)):
                    candidates.setdefault(i, []).append((gram, cluster.id))
    out = []
    i = 0
    while i < len(words):
        if i in candidates:
            gram, cid = min(
                candidates[i],
                key=lambda gc: (-len(gc[0].words), -len(gc[0].surface), gc[0].surface),
            )
            out.append((i, i + len(gram.words), gram, cid))
            i += len(gram.words)
        else:
            i += 1
    return out


def test_two_disjoint_matches(verify_sgset):
    text = "wait, let me verify the result"
    matches = match_sgs(text, verify_sgset)
    assert [m.gram.surface for m in matches] == ["wait", "let me verify"]
    a, b = matches
    assert text[b.char_span[0]:b.char_span[1]] == "let me verify"
    assert text[a.char_span[0]:a.char_span[1]].startswith("wait")
    assert a.char_span[1] <= b.char_span[0]


def test_longest_match_wins():
    sgset = make_sgset(("let me", "let me verify"))
    matches = match_sgs("let me verify x", sgset)
    assert [m.gram.surface for m in matches] == ["let me verify"]


def test_no_occurrences():
    sgset = make_sgset(("absent phrase",))
    assert match_sgs("nothing to see here", sgset) == []


def test_spans_map_back_through_normalization(verify_sgset):
    text = "so...  LET me   Verify soon"
    matches = match_sgs(text, verify_sgset)
    assert len(matches) == 1
    start, end = matches[0].char_span
    assert text[start:end] == "LET me   Verify"
    assert normalize(text[start:end]) == "let me verify"


def test_mask_covers_matched_tokens(verify_sgset):
    traj = make_trajectory(["let", " me", " verify", " x"])
    mask, matches = classify_trajectory(traj, verify_sgset)
    assert [m.gram.surface for m in matches] == ["let me verify"]
    assert mask.labels == (True, True, True, False)
    assert mask.planning_indices == (0, 1, 2)


def test_partial_overlap_labels_planning(verify_sgset):
    traj = make_trajectory(["let", " me", " verify,", " done"])
    mask, _ = classify_trajectory(traj, verify_sgset)
    assert mask.labels == (True, True, True, False)


def test_empty_trajectory_empty_mask(verify_sgset):
    traj = make_trajectory([])
    mask, matches = classify_trajectory(traj, verify_sgset)
    assert mask.labels == ()
    assert matches == []


def test_version_mismatch_rejected(verify_sgset):
    stale = SGSet(
        clusters=verify_sgset.clusters,
        normalization_version="none",
    )
    with pytest.raises(ValueError, match="normalization"):
        match_sgs("wait", stale)


def test_cluster_ids_preserved():
    sgset = make_sgset(("first idea",), ("second idea",))
    matches = match_sgs("first idea then second idea", sgset)
    assert [(m.gram.surface, m.cluster_id) for m in matches] == [
        ("first idea", 0),
        ("second idea", 1),
    ]


def random_case(rng):
    vocab = ["wait", "wait,", "let", "me", "verify", "check", "the", "result",
             "so", "we", "try", "another", "case.", "then", "x"]
    words = [rng.choice(vocab) for _ in range(rng.randint(0, 30))]
    text = " ".join(words)[:200]
    surfaces = set()
    while len(surfaces) < rng.randint(1, 10):
        k = rng.randint(1, 4)
        surfaces.add(" ".join(rng.choice(vocab).strip(".,") or "x" for _ in range(k)))
    return text, make_sgset(*[(s,) for s in sorted(surfaces)])


def test_greedy_equals_oracle_on_random_cases():
    rng = random.Random(2024)
    for _ in range(500):
        text, sgset = random_case(rng)
        words = normalize(text).split()
        got = match_word_ranges(words, sgset)
        assert got == oracle_leftmost_longest(words, sgset)


def test_label_tokens_handles_unsorted_matches(verify_sgset):
    traj = make_trajectory(["wait", " then", " let", " me", " verify"])
    matches = list(reversed(match_sgs(traj.full_text, verify_sgset)))
    mask = label_tokens(traj, matches)
    assert mask.labels == (True, False, True, True, True)
