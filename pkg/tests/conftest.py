import json

import pytest

from hicra.mining import Gram, SGCluster, SGSet
from hicra.traces import TokenRecord, Trajectory


def make_gram(surface: str) -> Gram:
    return Gram(words=tuple(surface.split()))


def make_sgset(*cluster_surfaces: tuple[str, ...]) -> SGSet:
    clusters = tuple(
        SGCluster(id=i, members=tuple(make_gram(s) for s in surfaces))
        for i, surfaces in enumerate(cluster_surfaces)
    )
    return SGSet(clusters=clusters)


def make_trajectory(
    token_texts: list[str],
    problem_id: str = "p0",
    step: int = 0,
    reward: float = 0.0,
    correct: bool = False,
    logprob: float = -1.0,
    entropies: list[float] | None = None,
) -> Trajectory:
    tokens = tuple(
        TokenRecord(
            text=text,
            logprob=logprob,
            entropy=None if entropies is None else entropies[i],
        )
        for i, text in enumerate(token_texts)
    )
    return Trajectory(
        problem_id=problem_id,
        step=step,
        reward=reward,
        correct=correct,
        full_text="".join(token_texts),
        tokens=tokens,
    )


@pytest.fixture
def verify_sgset() -> SGSet:
    """Two clusters: a verification move and a backtracking move."""
    return make_sgset(("let me verify", "let me check"), ("wait",))


def write_jsonl(path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record) + "\n")
