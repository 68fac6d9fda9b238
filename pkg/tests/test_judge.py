import threading
from pathlib import Path

import pytest

from hicra.judge import (
    API_KEY_ENV_VAR,
    ErrorVerdict,
    JudgeEndpoint,
    JudgeRequestError,
    VerdictCache,
    classify_failure,
    classify_failures,
    error_series,
    parse_verdict,
    render_prompt,
    verdict_counts,
)

GOLDEN = Path(__file__).parent / "data" / "judge_prompt_golden.txt"

PROBLEM = "Compute 2 + 3 * 4."
REFERENCE = "Multiplication binds tighter: 3 * 4 = 12, so the answer is 14."
STUDENT = "First 2 + 3 = 5, then 5 * 4 = 20. The answer is 20."


class StubResponse:
    def __init__(self, content, status=200):
        self.status_code = status
        self._content = content

    def json(self):
        return {"choices": [{"message": {"content": self._content}}]}


def stub_post(content, status=200, fail_times=0):
    """A fake transport; counts calls and can fail the first N of them."""
    state = {"calls": 0, "lock": threading.Lock()}

    def post(url, json=None, headers=None, timeout=None):
        with state["lock"]:
            state["calls"] += 1
            n = state["calls"]
        if n <= fail_times:
            return StubResponse("", status=503)
        body = content(n) if callable(content) else content
        return StubResponse(body, status=status)

    post.state = state
    return post


def endpoint(**overrides):
    defaults = dict(url="http://judge.test/v1/chat/completions", model="judge-1",
                    backoff_seconds=0.0)
    defaults.update(overrides)
    return JudgeEndpoint(**defaults)


def test_rendered_prompt_matches_golden_file():
    assert render_prompt(PROBLEM, REFERENCE, STUDENT) == GOLDEN.read_text(encoding="utf-8")


def test_braces_in_fills_survive_verbatim():
    rendered = render_prompt(PROBLEM, REFERENCE, "nested {} braces")
    assert "nested {} braces" in rendered
    assert rendered.count("{}") == 1


CANNED = [
    ("\\boxed{A}", "A"),
    ("\\boxed{B}", "B"),
    ("The answer is \\boxed{C}.", "C"),
    ("\\boxed{D} is my verdict", "D"),
    ("reasoning...\n\nFinal: \\boxed{C}", "C"),
    ("\\boxed{a}", "A"),
    ("\\boxed{ b }", "B"),
    ("\\boxed {C}", "C"),
    ("first guess \\boxed{A}, but actually \\boxed{B}", "B"),
    ("$\\boxed{C}$", "C"),
    ("**\\boxed{D}**", "D"),
    ("I think\n\\boxed{B}\nbecause of the strategy", "B"),
    ("\\boxed{C}\n\\boxed{C}", "C"),
    ("the student chose option B early, yet \\boxed{A}", "A"),
    ("…so the classification is \\boxed{ d }", "D"),
    ("\\boxed{B} trailing text \\boxed{C} more", "C"),
    ("some latex \\frac{1}{2} then \\boxed{A}", "A"),
    ("multi\nline\nanswer\n\\boxed{B}", "B"),
    ("\\boxed{C} -- planning issue", "C"),
    ("verdict:\t\\boxed{D}", "D"),
]


def test_canned_responses_parse_without_misparses():
    assert len(CANNED) == 20
    for raw, expected in CANNED:
        assert parse_verdict(raw) == expected


def test_unboxed_response_rejected():
    with pytest.raises(ValueError, match="unparseable verdict"):
        parse_verdict("The category is C.")


def test_letter_outside_taxonomy_rejected():
    with pytest.raises(ValueError, match="unparseable verdict"):
        parse_verdict("\\boxed{E}")


def test_category_mapping():
    assert ErrorVerdict("A", "").category == "dummy"
    assert ErrorVerdict("B", "").category == "others"
    assert ErrorVerdict("C", "").category == "planning_strategy"
    assert ErrorVerdict("D", "").category == "acceptable"


def test_classify_failure_happy_path():
    post = stub_post("\\boxed{C}")
    verdict = classify_failure(PROBLEM, REFERENCE, STUDENT, endpoint(), post=post)
    assert verdict.choice == "C"
    assert verdict.category == "planning_strategy"
    assert post.state["calls"] == 1


def test_http_error_retries_then_succeeds():
    post = stub_post("\\boxed{B}", fail_times=2)
    verdict = classify_failure(PROBLEM, REFERENCE, STUDENT, endpoint(max_retries=2), post=post)
    assert verdict.choice == "B"
    assert post.state["calls"] == 3


def test_retries_exhausted_raises():
    post = stub_post("\\boxed{B}", fail_times=5)
    with pytest.raises(JudgeRequestError, match="503"):
        classify_failure(PROBLEM, REFERENCE, STUDENT, endpoint(max_retries=1), post=post)
    assert post.state["calls"] == 2


def test_cache_short_circuits_transport(tmp_path):
    cache = VerdictCache(tmp_path / "cache.json")
    post = stub_post("\\boxed{D}")
    first = classify_failure(PROBLEM, REFERENCE, STUDENT, endpoint(), cache=cache, post=post)
    second = classify_failure(PROBLEM, REFERENCE, STUDENT, endpoint(), cache=cache, post=post)
    assert first == second
    assert post.state["calls"] == 1
    reloaded = VerdictCache(tmp_path / "cache.json")
    assert len(reloaded) == 1
    third = classify_failure(PROBLEM, REFERENCE, STUDENT, endpoint(), cache=reloaded, post=post)
    assert third.choice == "D"
    assert post.state["calls"] == 1


def test_bearer_header_from_environment(monkeypatch):
    monkeypatch.setenv(API_KEY_ENV_VAR, "sk-test")
    seen = {}

    def post(url, json=None, headers=None, timeout=None):
        seen.update(headers)
        return StubResponse("\\boxed{A}")

    classify_failure(PROBLEM, REFERENCE, STUDENT, endpoint(), post=post)
    assert seen["Authorization"] == "Bearer sk-test"


def test_batch_preserves_input_order():
    letters = ["A", "B", "C", "D", "C", "B"]
    items = [(f"p{i}", "ref", "student") for i in range(len(letters))]

    def post(url, json=None, headers=None, timeout=None):
        # recover the item index from the rendered prompt to answer distinctly
        prompt = json["messages"][0]["content"]
        idx = next(i for i in range(len(letters)) if f"p{i}" in prompt)
        return StubResponse(f"\\boxed{{{letters[idx]}}}")

    verdicts = classify_failures(items, endpoint(concurrency=4), post=post)
    assert [v.choice for v in verdicts] == letters


def test_verdict_counts():
    verdicts = [ErrorVerdict(c, "") for c in "CCBDA"]
    assert verdict_counts(verdicts) == {
        "planning_strategy": 2,
        "others": 1,
        "acceptable": 1,
        "dummy": 1,
    }


def test_error_series_counts_and_gaps():
    by_step = {
        0: [ErrorVerdict(c, "") for c in ("C", "C", "B", "D")],
        10: [],
        20: [ErrorVerdict("D", "")],
    }
    planning, others = error_series(by_step)
    assert planning.unit == "count" and others.unit == "count"
    assert [p.value for p in planning.points] == [2, None, 0]
    assert [p.value for p in others.points] == [1, None, 0]


def test_dummy_counts_as_other_error():
    planning, others = error_series({0: [ErrorVerdict("A", "")]})
    assert planning.points[0].value == 0
    assert others.points[0].value == 1
