"""Tabular two-level environment and policy-gradient trainer.

The environment factors a task into one strategy choice (the planning token)
followed by a fixed-length execution suffix; reward is 1 only when the
strategy is acceptable for the task and every execution symbol is correct.
A softmax table is trained with group-relative credit so desk-scale runs
reproduce the consolidation-then-exploration shape seen in full-scale
training, and serve as the testbed for comparing credit-assignment schemes.
"""

from __future__ import annotations

import math
from collections import Counter, deque
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from . import credit
from .classify import TokenClassMask
from .metrics import MetricPoint, MetricSeries
from .traces import RolloutGroup, TokenRecord, Trajectory

LN2 = math.log(2.0)

DEFAULT_EXEC_BIAS = 1.0
DEFAULT_ENTROPY_COEF = 0.01
# Calibrated defaults: long enough for execution to consolidate inside the
# first third of training under the biased init, short enough to stay cheap.
DEFAULT_STEPS = 9000
DEFAULT_STRATEGIES_PER_TASK = 6

SEM_WINDOW_ROLLOUTS = 50  # strategy-usage window behind the diversity series
PROBE_MIN_POINTS = 30
REWARD_MA_WINDOW = 25

METHODS = ("grpo", "hicra", "entropy_reg")


class SimulationDiverged(RuntimeError):
    """Raised when a logit goes non-finite during training."""


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def _entropy_nats(probs: np.ndarray, axis: int = -1) -> np.ndarray:
    logp = np.log(np.where(probs > 0.0, probs, 1.0))
    return -(probs * logp).sum(axis=axis)


@dataclass(frozen=True)
class EnvSpec:
    """Environment definition: strategy sets and the correct execution path."""

    num_tasks: int
    num_strategies: int
    strategies_per_task: tuple[frozenset[int], ...]
    exec_len: int
    exec_branching: int
    correct_exec: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        if self.num_tasks < 1:
            raise ValueError(f"need at least one task, got {self.num_tasks}")
        if self.num_strategies < 2:
            raise ValueError(f"need at least 2 strategies, got {self.num_strategies}")
        if self.exec_branching < 2:
            raise ValueError(f"need at least 2 execution symbols, got {self.exec_branching}")
        if self.exec_len < 0:
            raise ValueError(f"execution length must be >= 0, got {self.exec_len}")
        if len(self.strategies_per_task) != self.num_tasks:
            raise ValueError("one strategy set per task required")
        for task, strategies in enumerate(self.strategies_per_task):
            if not strategies:
                raise ValueError(f"task {task} has no correct strategy")
            if any(not 0 <= s < self.num_strategies for s in strategies):
                raise ValueError(f"task {task} names an out-of-range strategy")
        if len(self.correct_exec) != self.num_tasks:
            raise ValueError("one correct execution row per task required")
        for task, row in enumerate(self.correct_exec):
            if len(row) != self.exec_len:
                raise ValueError(f"task {task} execution row has length {len(row)}")
            if any(not 0 <= x < self.exec_branching for x in row):
                raise ValueError(f"task {task} names an out-of-range execution symbol")

    @classmethod
    def random(
        cls,
        num_tasks: int = 8,
        num_strategies: int = 8,
        exec_len: int = 4,
        exec_branching: int = 4,
        correct_strategies: int = DEFAULT_STRATEGIES_PER_TASK,
        seed: int = 0,
    ) -> "EnvSpec":
        """Draw per-task strategy sets of a fixed size and an execution path."""
        if not 1 <= correct_strategies <= num_strategies:
            raise ValueError(
                f"correct_strategies must be in [1, {num_strategies}], got {correct_strategies}"
            )
        rng = np.random.default_rng(seed)
        strategies = tuple(
            frozenset(rng.choice(num_strategies, size=correct_strategies, replace=False).tolist())
            for _ in range(num_tasks)
        )
        correct = tuple(
            tuple(int(x) for x in rng.integers(0, exec_branching, size=exec_len))
            for _ in range(num_tasks)
        )
        return cls(
            num_tasks=num_tasks,
            num_strategies=num_strategies,
            strategies_per_task=strategies,
            exec_len=exec_len,
            exec_branching=exec_branching,
            correct_exec=correct,
        )

    def strategy_mask(self, task: int) -> np.ndarray:
        mask = np.zeros(self.num_strategies, dtype=bool)
        mask[list(self.strategies_per_task[task])] = True
        return mask


@dataclass
class PolicyTable:
    """Softmax policy: planning logits [T, P] and execution logits [T, L, E]."""

    planning: np.ndarray
    execution: np.ndarray

    def __post_init__(self) -> None:
        self.planning = np.asarray(self.planning, dtype=np.float64)
        self.execution = np.asarray(self.execution, dtype=np.float64)
        if self.planning.ndim != 2:
            raise ValueError("planning logits must be a [tasks, strategies] matrix")
        if self.execution.ndim != 3 or self.execution.shape[0] != self.planning.shape[0]:
            raise ValueError("execution logits must be a [tasks, steps, symbols] tensor")
        if not (np.isfinite(self.planning).all() and np.isfinite(self.execution).all()):
            raise ValueError("policy logits must be finite")

    @classmethod
    def initial(cls, env: EnvSpec, exec_bias: float = DEFAULT_EXEC_BIAS, seed: int = 0) -> "PolicyTable":
        """Uniform planning; execution biased toward one random wrong symbol.

        The bias makes execution the bottleneck at the start of training;
        exec_bias = 0 removes it and leaves every row uniform.
        """
        rng = np.random.default_rng((seed, 0))
        planning = np.zeros((env.num_tasks, env.num_strategies))
        execution = np.zeros((env.num_tasks, env.exec_len, env.exec_branching))
        if exec_bias != 0.0:
            for task in range(env.num_tasks):
                for pos in range(env.exec_len):
                    correct = env.correct_exec[task][pos]
                    wrong = int(rng.integers(env.exec_branching - 1))
                    if wrong >= correct:
                        wrong += 1
                    execution[task, pos, wrong] += exec_bias
        return cls(planning=planning, execution=execution)

    def planning_probs(self, task: int) -> np.ndarray:
        return _softmax(self.planning[task])

    def exec_probs(self, task: int) -> np.ndarray:
        return _softmax(self.execution[task])

    def copy(self) -> "PolicyTable":
        return PolicyTable(planning=self.planning.copy(), execution=self.execution.copy())


def _sample_indices(cumulative: np.ndarray, draws: np.ndarray) -> np.ndarray:
    # side="right" skips zero-width buckets, so zero-probability symbols are
    # unreachable even when a draw lands exactly on a bucket boundary.
    return np.searchsorted(cumulative, draws, side="right")


def _sample_group(
    env: EnvSpec, policy: PolicyTable, task: int, group_size: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Sample a rollout group; returns (strategies, execs, rewards, logprobs, entropies)."""
    p_plan = policy.planning_probs(task)
    cum_plan = np.cumsum(p_plan)
    cum_plan[-1] = 1.0
    strategies = _sample_indices(cum_plan, rng.random(group_size))

    p_exec = policy.exec_probs(task)
    execs = np.empty((group_size, env.exec_len), dtype=np.int64)
    if env.exec_len:
        cum_exec = np.cumsum(p_exec, axis=1)
        cum_exec[:, -1] = 1.0
        draws = rng.random((group_size, env.exec_len))
        for pos in range(env.exec_len):
            execs[:, pos] = _sample_indices(cum_exec[pos], draws[:, pos])

    strategy_ok = env.strategy_mask(task)[strategies]
    exec_ok = (execs == np.asarray(env.correct_exec[task])).all(axis=1)
    rewards = (strategy_ok & exec_ok).astype(np.float64)

    logprobs = np.empty((group_size, env.exec_len + 1))
    logprobs[:, 0] = np.log(p_plan[strategies])
    if env.exec_len:
        logprobs[:, 1:] = np.log(p_exec[np.arange(env.exec_len), execs])

    entropies = np.empty((group_size, env.exec_len + 1))
    entropies[:, 0] = _entropy_nats(p_plan)
    if env.exec_len:
        entropies[:, 1:] = _entropy_nats(p_exec, axis=1)

    return strategies, execs, rewards, logprobs, entropies


def rollout(
    env: EnvSpec,
    policy: PolicyTable,
    task: int,
    group_size: int,
    seed: int | tuple[int, ...],
    step: int = 0,
) -> RolloutGroup:
    """Sample a group of trajectories for one task, with exact token stats.

    Token texts render the sampled symbols ("S3", " E1" ...); logprobs and
    entropies are the exact policy values at each position. The first token
    is the planning token, all others are execution.
    """
    if not 0 <= task < env.num_tasks:
        raise ValueError(f"task must be in [0, {env.num_tasks}), got {task}")
    if group_size < 2:
        raise ValueError(f"group size must be >= 2, got {group_size}")
    rng = np.random.default_rng(seed)
    strategies, execs, rewards, logprobs, entropies = _sample_group(
        env, policy, task, group_size, rng
    )
    problem_id = f"task{task}"
    trajectories = []
    for i in range(group_size):
        texts = [f"S{strategies[i]}"] + [f" E{execs[i, pos]}" for pos in range(env.exec_len)]
        tokens = tuple(
            TokenRecord(
                text=texts[t],
                logprob=float(logprobs[i, t]),
                entropy=float(entropies[i, t]),
            )
            for t in range(env.exec_len + 1)
        )
        trajectories.append(
            Trajectory(
                problem_id=problem_id,
                step=step,
                reward=float(rewards[i]),
                correct=bool(rewards[i]),
                full_text="".join(texts),
                tokens=tokens,
            )
        )
    return RolloutGroup(problem_id=problem_id, step=step, trajectories=tuple(trajectories))


def planning_mask(env: EnvSpec) -> TokenClassMask:
    """The constant per-trajectory mask: planning head, execution tail."""
    return TokenClassMask(labels=(True,) + (False,) * env.exec_len)


@dataclass(frozen=True)
class TrainConfig:
    """Trainer settings; alpha only applies to hicra, the coefficient to entropy_reg."""

    method: str
    steps: int = DEFAULT_STEPS
    group_size: int = 8
    learning_rate: float = 0.5
    alpha: float = credit.DEFAULT_ALPHA
    entropy_coefficient: float = DEFAULT_ENTROPY_COEF
    clip: tuple[float, float] | None = None
    seed: int = 0
    filter_degenerate: bool = False
    update_epochs: int = 1

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.steps < 1:
            raise ValueError(f"steps must be positive, got {self.steps}")
        if self.group_size < 2:
            raise ValueError(f"group size must be >= 2, got {self.group_size}")
        if not self.learning_rate >= 0.0:
            raise ValueError(f"learning rate must be >= 0, got {self.learning_rate}")
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError(f"alpha must be in [0, 1), got {self.alpha}")
        if self.entropy_coefficient < 0.0:
            raise ValueError(f"entropy coefficient must be >= 0, got {self.entropy_coefficient}")
        if self.update_epochs < 1:
            raise ValueError(f"update epochs must be >= 1, got {self.update_epochs}")
        if self.clip is not None:
            low, high = self.clip
            if not (low > 0.0 and high > 0.0):
                raise ValueError(f"clip epsilons must be positive, got {self.clip}")


def surrogate_value(
    policy: PolicyTable,
    task: int,
    strategies: np.ndarray,
    execs: np.ndarray,
    token_advantages: np.ndarray,
) -> float:
    """Sum over trajectories and tokens of advantage times log-likelihood."""
    p_plan = policy.planning_probs(task)
    total = float(np.dot(token_advantages[:, 0], np.log(p_plan[strategies])))
    if execs.shape[1]:
        p_exec = policy.exec_probs(task)
        logp = np.log(p_exec[np.arange(execs.shape[1]), execs])
        total += float((token_advantages[:, 1:] * logp).sum())
    return total


def _weighted_logprob_gradient(
    probs: np.ndarray, actions: np.ndarray, weights: np.ndarray
) -> np.ndarray:
    """Gradient of sum_i w_i * log p(a_i) wrt the logits behind one softmax row."""
    grad = -weights.sum() * probs
    np.add.at(grad, actions, weights)
    return grad


def surrogate_gradient(
    policy: PolicyTable,
    task: int,
    strategies: np.ndarray,
    execs: np.ndarray,
    token_advantages: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic gradient of surrogate_value wrt the task's logits.

    Returns (planning gradient [P], execution gradient [L, E]); rows for
    other tasks are identically zero and omitted.
    """
    p_plan = policy.planning_probs(task)
    grad_plan = _weighted_logprob_gradient(p_plan, strategies, token_advantages[:, 0])
    exec_len = execs.shape[1]
    grad_exec = np.zeros((exec_len, policy.execution.shape[2]))
    if exec_len:
        p_exec = policy.exec_probs(task)
        for pos in range(exec_len):
            grad_exec[pos] = _weighted_logprob_gradient(
                p_exec[pos], execs[:, pos], token_advantages[:, pos + 1]
            )
    return grad_plan, grad_exec


def entropy_bonus_gradient(policy: PolicyTable, task: int) -> tuple[np.ndarray, np.ndarray]:
    """Gradient of the summed policy entropy (nats) at the task's contexts.

    Per softmax row, dH/dz_k = -p_k (ln p_k + H).
    """
    def row_grad(probs: np.ndarray) -> np.ndarray:
        logp = np.log(np.where(probs > 0.0, probs, 1.0))
        entropy = -(probs * logp).sum(axis=-1, keepdims=True)
        return -probs * (logp + entropy)

    grad_plan = row_grad(policy.planning_probs(task))
    if policy.execution.shape[1]:
        grad_exec = row_grad(policy.exec_probs(task))
    else:
        grad_exec = np.zeros((0, policy.execution.shape[2]))
    return grad_plan, grad_exec


def _token_advantages(
    rewards: np.ndarray, n_tokens: int, method: str, alpha: float, mask: TokenClassMask
) -> tuple[np.ndarray, bool]:
    """Group-relative advantages broadcast per token, amplified for hicra."""
    scalars = credit.grpo_advantages(rewards.tolist())
    adv = credit.AdvantageArray.raw(scalars, [n_tokens] * len(scalars))
    # alpha = 0 must reproduce the plain path bit for bit, so skip amplification.
    if method == "hicra" and alpha > 0.0:
        adv = credit.hicra_advantages(adv, [mask] * len(scalars), alpha)
    degenerate = all(s == 0.0 for s in scalars)
    return np.asarray(adv.token_values, dtype=np.float64), degenerate


def _clip_weights(
    token_advantages: np.ndarray,
    ratios: np.ndarray,
    clip: tuple[float, float] | None,
) -> np.ndarray:
    """Per-token gradient weights of the (optionally clipped) ratio surrogate."""
    weights = token_advantages * ratios
    if clip is not None:
        low, high = clip
        dead = ((token_advantages > 0.0) & (ratios > 1.0 + high)) | (
            (token_advantages < 0.0) & (ratios < 1.0 - low)
        )
        weights = np.where(dead, 0.0, weights)
    return weights


def train(
    env: EnvSpec,
    config: TrainConfig,
    policy: PolicyTable | None = None,
) -> tuple[dict[str, MetricSeries], PolicyTable]:
    """Run group-relative policy-gradient training, logging per-step series.

    Each step samples one task uniformly, rolls out a group, converts rewards
    to advantages per the configured method, and applies the summed
    advantage-weighted log-likelihood gradient (plus an entropy bonus for
    entropy_reg). Logged series: reward_mean, exec_entropy and
    planning_entropy (policy entropy in bits, averaged over all contexts),
    semantic_entropy over the strategy usage of the last 50 rollouts,
    semantic_entropy_success over the successful subset, mean_length, and
    vanishing_advantage_fraction.
    """
    if policy is None:
        policy = PolicyTable.initial(env, seed=config.seed)
    else:
        policy = policy.copy()
    if policy.planning.shape != (env.num_tasks, env.num_strategies) or policy.execution.shape != (
        env.num_tasks,
        env.exec_len,
        env.exec_branching,
    ):
        raise ValueError("policy shape does not match the environment")

    n_tokens = env.exec_len + 1
    mask = planning_mask(env)
    task_rng = np.random.default_rng((config.seed, 1))
    exec_positions = np.arange(env.exec_len)

    recent_all: deque[int] = deque(maxlen=SEM_WINDOW_ROLLOUTS)
    recent_success: deque[int] = deque(maxlen=SEM_WINDOW_ROLLOUTS)

    log: dict[str, list[float | None]] = {
        "reward_mean": [],
        "exec_entropy": [],
        "planning_entropy": [],
        "semantic_entropy": [],
        "semantic_entropy_success": [],
        "mean_length": [],
        "vanishing_advantage_fraction": [],
    }

    def window_entropy(window: deque[int]) -> float | None:
        if not window:
            return None
        counts = Counter(window)
        total = len(window)
        return -sum((c / total) * math.log2(c / total) for c in counts.values())

    for step in range(config.steps):
        task = int(task_rng.integers(env.num_tasks))
        rng = np.random.default_rng((config.seed, 2, step))
        strategies, execs, rewards, logprobs, _ = _sample_group(
            env, policy, task, config.group_size, rng
        )

        token_adv, degenerate = _token_advantages(
            rewards, n_tokens, config.method, config.alpha, mask
        )

        if not (degenerate and config.filter_degenerate):
            old_logprobs = logprobs
            for _ in range(config.update_epochs):
                p_plan = policy.planning_probs(task)
                p_exec = policy.exec_probs(task)
                new_logprobs = np.empty_like(old_logprobs)
                new_logprobs[:, 0] = np.log(p_plan[strategies])
                if env.exec_len:
                    new_logprobs[:, 1:] = np.log(p_exec[exec_positions, execs])
                ratios = np.exp(new_logprobs - old_logprobs)
                weights = _clip_weights(token_adv, ratios, config.clip)

                grad_plan = _weighted_logprob_gradient(p_plan, strategies, weights[:, 0])
                grad_exec = np.zeros((env.exec_len, env.exec_branching))
                for pos in range(env.exec_len):
                    grad_exec[pos] = _weighted_logprob_gradient(
                        p_exec[pos], execs[:, pos], weights[:, pos + 1]
                    )

                if config.method == "entropy_reg" and config.entropy_coefficient > 0.0:
                    bonus_plan, bonus_exec = entropy_bonus_gradient(policy, task)
                    scale = config.entropy_coefficient * config.group_size
                    grad_plan += scale * bonus_plan
                    grad_exec += scale * bonus_exec

                policy.planning[task] += config.learning_rate * grad_plan
                if env.exec_len:
                    policy.execution[task] += config.learning_rate * grad_exec

            if not (
                np.isfinite(policy.planning[task]).all()
                and np.isfinite(policy.execution[task]).all()
            ):
                raise SimulationDiverged(
                    f"non-finite logits at step {step}, task {task}, "
                    f"method {config.method}, seed {config.seed}"
                )

        for i in range(config.group_size):
            recent_all.append(int(strategies[i]))
            if rewards[i] > 0.0:
                recent_success.append(int(strategies[i]))

        plan_probs = _softmax(policy.planning)
        log["reward_mean"].append(float(rewards.mean()))
        log["planning_entropy"].append(float(_entropy_nats(plan_probs).mean() / LN2))
        if env.exec_len:
            exec_probs = _softmax(policy.execution)
            log["exec_entropy"].append(float(_entropy_nats(exec_probs).mean() / LN2))
        else:
            log["exec_entropy"].append(None)
        log["semantic_entropy"].append(window_entropy(recent_all))
        log["semantic_entropy_success"].append(window_entropy(recent_success))
        log["mean_length"].append(float(n_tokens))
        log["vanishing_advantage_fraction"].append(1.0 if degenerate else 0.0)

    units = {
        "reward_mean": "fraction",
        "exec_entropy": "bits",
        "planning_entropy": "bits",
        "semantic_entropy": "bits",
        "semantic_entropy_success": "bits",
        "mean_length": "tokens",
        "vanishing_advantage_fraction": "fraction",
    }
    series = {
        name: MetricSeries(
            name=name,
            unit=units[name],
            points=tuple(MetricPoint(step, value) for step, value in enumerate(values)),
        )
        for name, values in log.items()
    }
    return series, policy


def _moving_average(values: Sequence[float], index: int, window: int) -> float:
    start = max(0, index - window + 1)
    chunk = values[start : index + 1]
    return sum(chunk) / len(chunk)


def two_phase_probe(
    series: Mapping[str, MetricSeries],
) -> tuple[bool, bool, int | None]:
    """Detect the consolidation-then-exploration signature in a series bundle.

    Phase 1: execution policy entropy falls below half its initial value
    within the first third of training. Phase 2: strategy diversity (the
    success-window semantic entropy when present) peaks after the phase-1
    crossover while the smoothed reward is still rising. Without a crossover
    the start of training is the reference point, so phase 2 remains
    decidable when execution is trivial and the entropy series is all gaps.
    """
    exec_series = series["exec_entropy"]
    reward_series = series["reward_mean"]
    sem_key = (
        "semantic_entropy_success" if "semantic_entropy_success" in series else "semantic_entropy"
    )
    sem_series = series[sem_key]
    for s in (exec_series, reward_series, sem_series):
        if len(s.points) < PROBE_MIN_POINTS:
            raise ValueError(f"series {s.name!r} too short: {len(s.points)} < {PROBE_MIN_POINTS}")
    if not (exec_series.steps == reward_series.steps == sem_series.steps):
        raise ValueError("series in a probe bundle must share one step grid")

    rewards = [p.value for p in reward_series.points]
    if any(v is None for v in rewards):
        raise ValueError("reward series must have no gaps")

    exec_values = [p.value for p in exec_series.points]
    initial = next((v for v in exec_values if v is not None), None)
    crossover_idx = None
    if initial is not None:
        threshold = 0.5 * initial
        for i, v in enumerate(exec_values):
            if v is not None and v < threshold:
                crossover_idx = i
                break
    phase1 = crossover_idx is not None and crossover_idx < len(exec_values) / 3

    reference_idx = crossover_idx if crossover_idx is not None else 0
    best_idx = None
    best = -math.inf
    for i, p in enumerate(sem_series.points):
        if p.value is not None and p.value > best:
            best = p.value
            best_idx = i
    phase2 = (
        best_idx is not None
        and best_idx > reference_idx
        and _moving_average(rewards, best_idx, REWARD_MA_WINDOW)
        > _moving_average(rewards, reference_idx, REWARD_MA_WINDOW)
    )

    crossover_step = exec_series.points[crossover_idx].step if crossover_idx is not None else None
    return phase1, phase2, crossover_step


def final_reward(series: Mapping[str, MetricSeries], window: int = 100) -> float:
    """Mean reward over the last ``window`` logged steps."""
    values = series["reward_mean"].values(skip_gaps=True)
    if not values:
        raise ValueError("reward series is empty")
    return sum(values[-window:]) / len(values[-window:])


def last_third_mean(series: MetricSeries) -> float:
    """Mean over the final third of a series, ignoring gaps."""
    points = series.points[2 * len(series.points) // 3 :]
    values = [p.value for p in points if p.value is not None]
    if not values:
        raise ValueError(f"series {series.name!r} has no values in its last third")
    return sum(values) / len(values)
