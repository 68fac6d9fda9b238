"""Client for the failure-mode judging protocol.

Failed solutions are sent to a chat-completions endpoint with a fixed
instruction prompt; the judge answers with a boxed letter that maps onto
four categories, aggregated downstream into planning-versus-others counts.
The prompt template is a frozen asset: requests must carry it byte for byte
with only the three substitution slots filled.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Mapping, Sequence

import requests

from .metrics import MetricPoint, MetricSeries

API_KEY_ENV_VAR = "HICRA_JUDGE_API_KEY"

CATEGORY_BY_CHOICE = {
    "A": "dummy",
    "B": "others",
    "C": "planning_strategy",
    "D": "acceptable",
}

_BOXED = re.compile(r"\\boxed\s*\{\s*([A-Za-z])\s*\}")


def _load_template() -> str:
    return resources.files("hicra").joinpath("data/error_prompt.txt").read_text(encoding="utf-8")


PROMPT_TEMPLATE = _load_template()


def render_prompt(problem: str, reference: str, student: str) -> str:
    """Fill the three slots of the instruction template, touching nothing else."""
    parts = PROMPT_TEMPLATE.split("{}")
    if len(parts) != 4:
        raise ValueError(f"template must have exactly 3 slots, found {len(parts) - 1}")
    return parts[0] + problem + parts[1] + reference + parts[2] + student + parts[3]


def parse_verdict(response: str) -> str:
    """Extract the judged letter; the last boxed occurrence wins."""
    matches = _BOXED.findall(response)
    if not matches:
        raise ValueError(f"unparseable verdict: no boxed letter in {response!r:.200}")
    letter = matches[-1].upper()
    if letter not in CATEGORY_BY_CHOICE:
        raise ValueError(f"unparseable verdict: letter {letter!r} outside A-D")
    return letter


@dataclass(frozen=True)
class ErrorVerdict:
    """One judged failure: the boxed letter and the full judge response."""

    choice: str
    raw_response: str

    def __post_init__(self) -> None:
        if self.choice not in CATEGORY_BY_CHOICE:
            raise ValueError(f"choice must be one of A-D, got {self.choice!r}")

    @property
    def category(self) -> str:
        return CATEGORY_BY_CHOICE[self.choice]


@dataclass(frozen=True)
class JudgeEndpoint:
    """Where and how to reach the judge; the key falls back to the environment."""

    url: str
    model: str
    api_key: str | None = None
    timeout: float = 60.0
    temperature: float = 0.0
    max_retries: int = 2
    backoff_seconds: float = 1.0
    concurrency: int = 4

    def resolved_api_key(self) -> str | None:
        return self.api_key or os.environ.get(API_KEY_ENV_VAR)


class JudgeRequestError(RuntimeError):
    """The endpoint could not be reached or answered with an error."""


class VerdictCache:
    """Write-through response cache keyed by request content hash."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self._data: dict[str, str] = {}
        if self.path is not None and self.path.exists():
            self._data = json.loads(self.path.read_text(encoding="utf-8"))

    @staticmethod
    def key(endpoint: JudgeEndpoint, prompt: str) -> str:
        payload = json.dumps(
            [endpoint.model, endpoint.temperature, prompt], ensure_ascii=False
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def get(self, key: str) -> str | None:
        return self._data.get(key)

    def put(self, key: str, raw: str) -> None:
        self._data[key] = raw
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text(
                json.dumps(self._data, ensure_ascii=False, indent=0), encoding="utf-8"
            )

    def __len__(self) -> int:
        return len(self._data)


def _request_once(
    endpoint: JudgeEndpoint, prompt: str, post: Callable
) -> str:
    headers = {"Content-Type": "application/json"}
    api_key = endpoint.resolved_api_key()
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    body = {
        "model": endpoint.model,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": endpoint.temperature,
    }
    try:
        response = post(endpoint.url, json=body, headers=headers, timeout=endpoint.timeout)
    except Exception as exc:
        raise JudgeRequestError(f"judge request failed: {exc}") from exc
    status = getattr(response, "status_code", 200)
    if status != 200:
        raise JudgeRequestError(f"judge endpoint returned HTTP {status}")
    try:
        return response.json()["choices"][0]["message"]["content"]
    except Exception as exc:
        raise JudgeRequestError(f"malformed judge response: {exc}") from exc


def _request_with_retries(endpoint: JudgeEndpoint, prompt: str, post: Callable) -> str:
    delay = endpoint.backoff_seconds
    for attempt in range(endpoint.max_retries + 1):
        try:
            return _request_once(endpoint, prompt, post)
        except JudgeRequestError:
            if attempt == endpoint.max_retries:
                raise
            if delay > 0.0:
                time.sleep(delay)
            delay *= 2.0
    raise AssertionError("unreachable")


def classify_failure(
    problem: str,
    reference: str,
    student: str,
    endpoint: JudgeEndpoint,
    cache: VerdictCache | None = None,
    post: Callable = requests.post,
) -> ErrorVerdict:
    """Judge one failed solution against its problem and reference answer."""
    prompt = render_prompt(problem, reference, student)
    raw = None
    key = None
    if cache is not None:
        key = VerdictCache.key(endpoint, prompt)
        raw = cache.get(key)
    if raw is None:
        raw = _request_with_retries(endpoint, prompt, post)
        if cache is not None and key is not None:
            cache.put(key, raw)
    return ErrorVerdict(choice=parse_verdict(raw), raw_response=raw)


def classify_failures(
    items: Sequence[tuple[str, str, str]],
    endpoint: JudgeEndpoint,
    cache: VerdictCache | None = None,
    post: Callable = requests.post,
) -> list[ErrorVerdict]:
    """Judge many (problem, reference, student) triples concurrently.

    Results preserve input order regardless of completion order; the first
    failure is re-raised after all workers finish.
    """
    if not items:
        return []
    with ThreadPoolExecutor(max_workers=max(1, endpoint.concurrency)) as pool:
        futures = [
            pool.submit(classify_failure, problem, reference, student, endpoint, cache, post)
            for problem, reference, student in items
        ]
        return [f.result() for f in futures]


def verdict_counts(verdicts: Sequence[ErrorVerdict]) -> dict[str, int]:
    """Counts for all four categories, including acceptable."""
    counts = {category: 0 for category in CATEGORY_BY_CHOICE.values()}
    for verdict in verdicts:
        counts[verdict.category] += 1
    return counts


def error_series(
    verdicts_by_step: Mapping[int, Sequence[ErrorVerdict]],
) -> tuple[MetricSeries, MetricSeries]:
    """Per-step counts of planning errors and of all other errors.

    Dummy verdicts count as others; acceptable verdicts are excluded
    entirely; a step with no verdicts becomes a gap in both series.
    """
    planning = []
    others = []
    for step in sorted(verdicts_by_step):
        verdicts = verdicts_by_step[step]
        if not verdicts:
            planning.append(MetricPoint(step, None))
            others.append(MetricPoint(step, None))
            continue
        counts = verdict_counts(verdicts)
        planning.append(MetricPoint(step, float(counts["planning_strategy"])))
        others.append(MetricPoint(step, float(counts["others"] + counts["dummy"])))
    return (
        MetricSeries(name="planning_strategy_errors", unit="count", points=tuple(planning)),
        MetricSeries(name="other_errors", unit="count", points=tuple(others)),
    )
