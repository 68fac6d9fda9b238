import math
import random

import numpy as np
import pytest

from hicra.embeddings import HashEmbedder, PrecomputedEmbedder
from hicra.mining import (
    Gram,
    SGCluster,
    SGSet,
    cluster_grams,
    extract_ngrams,
    load_default_lexicon,
    mine_sgset,
    score_and_select,
)
from hicra.textnorm import normalize

from conftest import make_gram


def oracle_ngrams(solutions, n_min, n_max):
    totals: dict[tuple[str, ...], int] = {}
    docs: dict[tuple[str, ...], set[int]] = {}
    for doc_id, text in enumerate(solutions):
        words = normalize(text).split()
        for n in range(n_min, n_max + 1):
            for i in range(len(words) - n + 1):
                key = tuple(words[i : i + n])
                totals[key] = totals.get(key, 0) + 1
                docs.setdefault(key, set()).add(doc_id)
    return {k: (totals[k], len(docs[k])) for k in totals}


def oracle_cluster_df(cluster, solutions):
    count = 0
    for text in solutions:
        words = normalize(text).split()
        windows = {
            tuple(words[i : i + n])
            for n in {len(g.words) for g in cluster.members}
            for i in range(len(words) - n + 1)
        }
        if any(g.words in windows for g in cluster.members):
            count += 1
    return count


def random_corpus(rng, size):
    vocab = ["we", "let", "us", "try", "another", "approach", "verify", "the",
             "result", "so", "add", "then", "factor", "case", "sum", "check"]
    phrases = [
        "let us try another approach",
        "we verify the result",
        "so we add the sum",
    ]
    corpus = []
    for _ in range(size):
        words = [rng.choice(vocab) for _ in range(rng.randint(3, 12))]
        if rng.random() < 0.6:
            insert_at = rng.randint(0, len(words))
            words[insert_at:insert_at] = rng.choice(phrases).split()
        corpus.append(" ".join(words))
    return corpus


def test_single_solution_trigram_enumeration():
    stats = extract_ngrams(["let us try a different approach"], n_min=3, n_max=3)
    expected = {
        ("let", "us", "try"),
        ("us", "try", "a"),
        ("try", "a", "different"),
        ("a", "different", "approach"),
    }
    assert {g.words for g in stats} == expected
    assert all(s == (1, 1) for s in stats.values())


def test_document_frequency_counts_distinct_solutions():
    stats = extract_ngrams(
        ["first so we add them", "later so we add again", "nothing here"],
        n_min=3,
        n_max=3,
    )
    assert stats[make_gram("so we add")].doc_frequency == 2


def test_short_solution_contributes_nothing():
    assert extract_ngrams(["too short"], n_min=3, n_max=5) == {}


def test_extract_ngrams_matches_oracle_on_random_corpora():
    rng = random.Random(7)
    for _ in range(10):
        corpus = random_corpus(rng, rng.randint(1, 50))
        n_min = rng.randint(1, 3)
        n_max = rng.randint(n_min, 5)
        stats = extract_ngrams(corpus, n_min=n_min, n_max=n_max)
        expected = oracle_ngrams(corpus, n_min, n_max)
        assert {g.words: tuple(s) for g, s in stats.items()} == expected


def test_hash_embedder_is_deterministic():
    emb = HashEmbedder()
    a, b = emb.embed(["let us try"]), emb.embed(["let us try"])
    assert np.array_equal(a, b)
    assert a.shape == (1, emb.dimension)
    assert abs(np.linalg.norm(a[0]) - 1.0) < 1e-12


def test_hash_embedder_distinct_texts_not_parallel():
    emb = HashEmbedder()
    vecs = emb.embed(["wait", "therefore"])
    assert float(vecs[0] @ vecs[1]) < 1.0 - 1e-6


def test_precomputed_embedder_missing_gram():
    emb = PrecomputedEmbedder({"wait": [1.0, 0.0]})
    with pytest.raises(ValueError, match="wait, what"):
        emb.embed(["wait, what"])


def test_identical_vectors_form_one_cluster():
    grams = [make_gram("need to find"), make_gram("need to determine")]
    vectors = [[1.0, 0.0], [1.0, 0.0]]
    clusters = cluster_grams(grams, vectors, tau=0.8)
    assert len(clusters) == 1
    assert len(clusters[0].members) == 2


def test_low_similarity_gives_singletons():
    grams = [make_gram("a b c"), make_gram("d e f"), make_gram("g h i")]
    vectors = np.eye(3)
    clusters = cluster_grams(grams, vectors, tau=0.8)
    assert [len(c.members) for c in clusters] == [1, 1, 1]


def test_two_group_geometry_clusters_exactly_two():
    # Two pairs with intra-cosine 0.95; cross-pair cosines 0.095..0.19.
    s = math.sqrt(1.0 - 0.95**2)
    a1 = [1.0, 0.0, 0.0]
    a2 = [0.95, s, 0.0]
    b1 = [0.1, 0.0, math.sqrt(1.0 - 0.01)]
    b2 = (0.95 * np.array(b1) + s * np.array([0.0, 1.0, 0.0])).tolist()
    grams = [make_gram(g) for g in ("aa one", "aa two", "bb one", "bb two")]
    clusters = cluster_grams(grams, [a1, a2, b1, b2], tau=0.8)
    assert len(clusters) == 2
    parts = sorted(tuple(sorted(g.surface[:2] for g in c.members)) for c in clusters)
    assert parts == [("aa", "aa"), ("bb", "bb")]


def test_cluster_df_counts_solutions_once():
    cluster = SGCluster(id=0, members=(make_gram("need to find"), make_gram("need to determine")))
    sgset = score_and_select([cluster], ["we need to find and need to determine x"], quantile=1.0)
    assert sgset.clusters[0].cluster_df == 1


def test_quantile_keeps_highest_df_clusters():
    solutions = [f"filler {' '.join(f'w{c}a w{c}b w{c}c' for c in range(df))}" for df in range(1, 11)]
    # cluster c appears in solutions df > c, so dfs are 10-c: distinct per cluster
    clusters = [SGCluster(id=c, members=(make_gram(f"w{c}a w{c}b w{c}c"),)) for c in range(10)]
    selected = score_and_select(clusters, solutions, quantile=0.2)
    assert len(selected.clusters) == 2
    assert sorted(c.id for c in selected.clusters) == [0, 1]
    assert sorted(c.cluster_df for c in selected.clusters) == [9, 10]


def test_df_fraction_case():
    members = (make_gram("try small cases"),)
    cluster = SGCluster(id=0, members=members)
    solutions = ["we try small cases here"] * 8 + ["unrelated text entirely"] * 2
    sgset = score_and_select([cluster], solutions, quantile=1.0)
    assert sgset.clusters[0].cluster_df == 8
    assert sgset.clusters[0].cluster_df / len(solutions) == 0.8


def test_score_and_select_matches_brute_force_oracle():
    rng = random.Random(11)
    for _ in range(8):
        corpus = random_corpus(rng, rng.randint(2, 50))
        stats = extract_ngrams(corpus, n_min=3, n_max=4)
        grams = sorted(stats, key=lambda g: g.surface)[:40]
        if not grams:
            continue
        emb = HashEmbedder()
        clusters = cluster_grams(
            grams, emb.embed([g.surface for g in grams]), tau=0.9,
            total_counts={g: stats[g].total_count for g in grams},
        )
        quantile = rng.choice([0.2, 0.5, 1.0])
        selected = score_and_select(clusters, corpus, quantile=quantile)

        expected_df = {c.id: oracle_cluster_df(c, corpus) for c in clusters}
        for c in selected.clusters:
            assert c.cluster_df == expected_df[c.id]
        keep = math.ceil(quantile * len(clusters))
        ranked = sorted(
            clusters, key=lambda c: (-expected_df[c.id], -len(c.members), c.id)
        )
        assert {c.id for c in selected.clusters} == {c.id for c in ranked[:keep]}


def test_sgset_round_trip(tmp_path):
    sgset = score_and_select(
        [SGCluster(id=0, members=(make_gram("check the result"),))],
        ["please check the result now"],
        quantile=1.0,
    )
    path = tmp_path / "sgset.json"
    sgset.save(path)
    assert SGSet.load(path) == sgset


def test_duplicate_surfaces_rejected():
    g = make_gram("a b c")
    with pytest.raises(ValueError, match="duplicate"):
        SGSet(clusters=(
            SGCluster(id=0, members=(g,)),
            SGCluster(id=1, members=(g,)),
        ))


def test_mine_sgset_end_to_end_deterministic():
    corpus = random_corpus(random.Random(3), 20)
    a = mine_sgset(corpus, HashEmbedder(), tau=0.9, quantile=0.3)
    b = mine_sgset(corpus, HashEmbedder(), tau=0.9, quantile=0.3)
    assert a == b
    assert len(a.clusters) >= 1


def test_default_lexicon_loads():
    lex = load_default_lexicon()
    assert len(lex.grams) > 100
    surfaces = {g.surface for g in lex.grams}
    assert "alternatively" in surfaces
