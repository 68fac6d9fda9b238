"""Reasoning-trace data model and line-delimited JSON persistence.

A trace file is UTF-8 JSONL, one trajectory per line. Every record carries
``"v": 1``; unknown fields are ignored so downstream tools can annotate
records without breaking loaders. Token ``logprob`` and ``entropy`` values are
natural-log quantities (metrics convert to bits at the reporting boundary).
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

logger = logging.getLogger(__name__)

TRACE_VERSION = 1


class TraceParseError(ValueError):
    """A trace record failed validation. Carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


def _check_logprob(value: float, what: str) -> float:
    value = float(value)
    if not math.isfinite(value) or value > 0.0:
        raise ValueError(f"{what} must be finite and <= 0, got {value}")
    return value


@dataclass(frozen=True)
class TokenRecord:
    """One generated token with its sampling statistics.

    Args:
        text: exact surface text, including any leading whitespace.
        logprob: natural-log probability of the sampled token, <= 0.
        entropy: optional full-distribution entropy at this position, nats.
        topk: optional ((token, logprob), ...) alternatives sorted by logprob
            descending; used as a truncated entropy fallback.
    """

    text: str
    logprob: float
    entropy: float | None = None
    topk: tuple[tuple[str, float], ...] | None = None

    def __post_init__(self) -> None:
        _check_logprob(self.logprob, "token logprob")
        if self.entropy is not None:
            if not math.isfinite(self.entropy) or self.entropy < 0.0:
                raise ValueError(f"token entropy must be finite and >= 0, got {self.entropy}")
        if self.topk is not None:
            lps = [_check_logprob(lp, "topk logprob") for _, lp in self.topk]
            if any(a < b for a, b in zip(lps, lps[1:])):
                raise ValueError("topk must be sorted by logprob descending")


@dataclass(frozen=True)
class Trajectory:
    """A single rollout: token sequence plus outcome.

    Token texts must concatenate exactly to ``full_text``; this is what makes
    char-span bookkeeping between matches and tokens well defined.
    """

    problem_id: str
    step: int
    reward: float
    correct: bool
    full_text: str
    tokens: tuple[TokenRecord, ...]

    def __post_init__(self) -> None:
        if self.step < 0:
            raise ValueError(f"step must be >= 0, got {self.step}")
        if not math.isfinite(self.reward):
            raise ValueError(f"reward must be finite, got {self.reward}")
        joined = "".join(t.text for t in self.tokens)
        if joined != self.full_text:
            raise ValueError(
                "token texts do not concatenate to full_text "
                f"(got {len(joined)} chars, expected {len(self.full_text)})"
            )

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class RolloutGroup:
    """All trajectories sampled for one (problem_id, step) pair."""

    problem_id: str
    step: int
    trajectories: tuple[Trajectory, ...]

    def __post_init__(self) -> None:
        if len(self.trajectories) < 2:
            raise ValueError("a rollout group needs at least 2 trajectories")
        for t in self.trajectories:
            if (t.problem_id, t.step) != (self.problem_id, self.step):
                raise ValueError(
                    f"trajectory ({t.problem_id!r}, {t.step}) does not belong to "
                    f"group ({self.problem_id!r}, {self.step})"
                )

    @property
    def size(self) -> int:
        return len(self.trajectories)

    @property
    def rewards(self) -> tuple[float, ...]:
        return tuple(t.reward for t in self.trajectories)


@dataclass
class CorpusLoad:
    """Result of scanning a trace file in lenient mode."""

    trajectories: list[Trajectory] = field(default_factory=list)
    skipped: list[tuple[int, str]] = field(default_factory=list)


def _token_from_obj(obj: object) -> TokenRecord:
    if not isinstance(obj, dict):
        raise ValueError("token entry must be an object")
    if "text" not in obj or "logprob" not in obj:
        raise ValueError("token entry needs 'text' and 'logprob'")
    text = obj["text"]
    if not isinstance(text, str):
        raise ValueError("token text must be a string")
    topk = None
    if obj.get("topk") is not None:
        raw = obj["topk"]
        if not isinstance(raw, list):
            raise ValueError("token topk must be a list of [token, logprob] pairs")
        topk = tuple((str(tok), float(lp)) for tok, lp in raw)
    entropy = obj.get("entropy")
    return TokenRecord(
        text=text,
        logprob=float(obj["logprob"]),
        entropy=None if entropy is None else float(entropy),
        topk=topk,
    )


def trajectory_from_record(obj: object) -> Trajectory:
    """Build a Trajectory from a decoded JSON record, ignoring unknown fields."""
    if not isinstance(obj, dict):
        raise ValueError("record must be a JSON object")
    if obj.get("v") != TRACE_VERSION:
        raise ValueError(f"record version must be {TRACE_VERSION}, got {obj.get('v')!r}")
    missing = [k for k in ("problem_id", "step", "reward", "correct", "full_text", "tokens") if k not in obj]
    if missing:
        raise ValueError(f"record is missing fields: {', '.join(missing)}")
    if not isinstance(obj["tokens"], list):
        raise ValueError("'tokens' must be a list")
    return Trajectory(
        problem_id=str(obj["problem_id"]),
        step=int(obj["step"]),
        reward=float(obj["reward"]),
        correct=bool(obj["correct"]),
        full_text=str(obj["full_text"]),
        tokens=tuple(_token_from_obj(t) for t in obj["tokens"]),
    )


def trajectory_to_record(traj: Trajectory) -> dict:
    """Inverse of trajectory_from_record; floats survive round-trips bit-exactly."""
    tokens = []
    for t in traj.tokens:
        tok: dict = {"text": t.text, "logprob": t.logprob}
        if t.entropy is not None:
            tok["entropy"] = t.entropy
        if t.topk is not None:
            tok["topk"] = [[s, lp] for s, lp in t.topk]
        tokens.append(tok)
    return {
        "v": TRACE_VERSION,
        "problem_id": traj.problem_id,
        "step": traj.step,
        "reward": traj.reward,
        "correct": traj.correct,
        "full_text": traj.full_text,
        "tokens": tokens,
    }


def read_corpus(path: str | Path, strict: bool = True) -> CorpusLoad:
    """Scan a JSONL trace file.

    In strict mode the first malformed record aborts with TraceParseError; in
    lenient mode malformed records are collected in ``skipped`` instead.
    """
    result = CorpusLoad()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                result.trajectories.append(trajectory_from_record(obj))
            except (ValueError, TypeError, KeyError) as exc:
                if strict:
                    raise TraceParseError(line_no, str(exc)) from exc
                result.skipped.append((line_no, str(exc)))
    if result.skipped:
        logger.warning("skipped %d malformed trace records in %s", len(result.skipped), path)
    return result


def load_corpus(path: str | Path, strict: bool = True) -> list[Trajectory]:
    """Load trajectories from a JSONL trace file. See read_corpus for modes."""
    return read_corpus(path, strict=strict).trajectories


def save_corpus(trajectories: Iterable[Trajectory], path: str | Path) -> None:
    """Write trajectories as UTF-8 JSONL, one record per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for traj in trajectories:
            fh.write(json.dumps(trajectory_to_record(traj), ensure_ascii=False))
            fh.write("\n")


def group_rollouts(
    trajectories: Sequence[Trajectory],
) -> tuple[list[RolloutGroup], list[Trajectory]]:
    """Partition trajectories into rollout groups keyed by (problem_id, step).

    Groups keep file order, both across groups (first appearance) and within a
    group. Keys with a single trajectory cannot form a group; they are returned
    separately so callers can report them.
    """
    buckets: dict[tuple[str, int], list[Trajectory]] = {}
    for traj in trajectories:
        buckets.setdefault((traj.problem_id, traj.step), []).append(traj)
    groups: list[RolloutGroup] = []
    singletons: list[Trajectory] = []
    for (problem_id, step), members in buckets.items():
        if len(members) == 1:
            singletons.append(members[0])
        else:
            groups.append(RolloutGroup(problem_id, step, tuple(members)))
    return groups, singletons
