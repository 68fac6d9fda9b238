"""Credit assignment: group-relative advantages, hierarchy-aware amplification,
and the KL-regularized target distribution they approximate.

Conventions: a rollout group's advantage is reward minus the group mean (no
variance scaling unless explicitly requested). Planning tokens get their
advantage amplified by ``a + alpha * |a|``, which preserves sign and leaves
execution tokens untouched. All KL quantities use natural log.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .classify import TokenClassMask

DEFAULT_ALPHA = 0.2

# Asymmetric PPO-style clip range; the wider upside is the clip-higher setting.
DEFAULT_CLIP_EPS_LOW = 0.2
DEFAULT_CLIP_EPS_HIGH = 0.28


def grpo_advantages(rewards: Sequence[float], normalize_std: bool = False) -> list[float]:
    """Group-relative advantages: reward minus the group mean reward.

    Args:
        rewards: one reward per trajectory in the group, at least 2.
        normalize_std: optionally divide by the population std (off by default;
            mean subtraction alone is the reference behavior). A zero-spread
            group yields all-zero advantages either way.
    """
    if len(rewards) < 2:
        raise ValueError(f"a rollout group needs >= 2 rewards, got {len(rewards)}")
    values = [float(r) for r in rewards]
    if not all(math.isfinite(v) for v in values):
        raise ValueError("rewards must be finite")
    if len(set(values)) == 1:
        # zero-spread group: exactly zero, no float residue from the mean
        return [0.0] * len(values)
    mean = math.fsum(values) / len(values)
    adv = [v - mean for v in values]
    if normalize_std:
        std = math.sqrt(math.fsum(a * a for a in adv) / len(adv))
        if std > 0.0:
            adv = [a / std for a in adv]
    return adv


@dataclass(frozen=True)
class AdvantageArray:
    """Per-trajectory scalar advantages broadcast to per-token values.

    ``kind`` is "raw" straight out of group normalization (every token of a
    trajectory carries the scalar) or "hicra" after planning amplification.
    """

    kind: Literal["raw", "hicra"]
    trajectory_values: tuple[float, ...]
    token_values: tuple[tuple[float, ...], ...]
    alpha: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("raw", "hicra"):
            raise ValueError(f"kind must be 'raw' or 'hicra', got {self.kind!r}")
        if len(self.trajectory_values) != len(self.token_values):
            raise ValueError("trajectory_values and token_values lengths differ")
        if self.kind == "raw":
            if self.alpha is not None:
                raise ValueError("raw advantages carry no alpha")
            for scalar, row in zip(self.trajectory_values, self.token_values):
                if any(v != scalar for v in row):
                    raise ValueError("raw token advantages must equal the trajectory scalar")
        elif self.alpha is None:
            raise ValueError("hicra advantages must record their alpha")

    @classmethod
    def raw(cls, scalars: Sequence[float], token_counts: Sequence[int]) -> "AdvantageArray":
        """Broadcast group-relative scalars over each trajectory's tokens."""
        if len(scalars) != len(token_counts):
            raise ValueError("scalars and token_counts lengths differ")
        return cls(
            kind="raw",
            trajectory_values=tuple(float(s) for s in scalars),
            token_values=tuple(
                tuple([float(s)] * int(n)) for s, n in zip(scalars, token_counts)
            ),
        )


def hicra_advantages(
    advantages: AdvantageArray,
    masks: Sequence[TokenClassMask],
    alpha: float = DEFAULT_ALPHA,
) -> AdvantageArray:
    """Amplify planning-token advantages: ``a + alpha * |a|`` where masked.

    Positive advantages grow by (1 + alpha), negative ones shrink in magnitude
    by (1 - alpha); execution tokens pass through unchanged, so the sign of
    every token's advantage is preserved.
    """
    if advantages.kind != "raw":
        raise ValueError(f"expected raw advantages, got kind {advantages.kind!r}")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    if len(masks) != len(advantages.token_values):
        raise ValueError("one mask per trajectory required")
    rows = []
    for row, mask in zip(advantages.token_values, masks):
        if len(mask.labels) != len(row):
            raise ValueError(
                f"mask length {len(mask.labels)} does not match token count {len(row)}"
            )
        rows.append(
            tuple(a + alpha * abs(a) if planning else a for a, planning in zip(row, mask.labels))
        )
    return AdvantageArray(
        kind="hicra",
        trajectory_values=advantages.trajectory_values,
        token_values=tuple(rows),
        alpha=alpha,
    )


@dataclass(frozen=True)
class TargetDistribution:
    """The exponentially tilted policy a KL-regularized step aims at."""

    probabilities: tuple[float, ...]
    beta: float
    log_partition: float


def _check_simplex(probs: np.ndarray, what: str, tol: float = 1e-9) -> None:
    if np.any(probs < 0.0) or not np.all(np.isfinite(probs)):
        raise ValueError(f"{what} must be finite and non-negative")
    total = float(probs.sum())
    if abs(total - 1.0) > tol:
        raise ValueError(f"{what} must sum to 1 within {tol}, got {total}")


def target_distribution(
    pi_old: Sequence[float], advantages: Sequence[float], beta: float
) -> TargetDistribution:
    """Tilt pi_old by exp(advantage / beta) and renormalize.

    Computed with the max advantage subtracted before exponentiation, so large
    advantage-to-beta ratios stay finite; the log partition is reported for
    the unshifted weights.
    """
    if beta <= 0.0:
        raise ValueError(f"beta must be positive, got {beta}")
    pi = np.asarray(pi_old, dtype=np.float64)
    adv = np.asarray(advantages, dtype=np.float64)
    if pi.shape != adv.shape or pi.ndim != 1 or pi.size == 0:
        raise ValueError(f"pi_old and advantages must be equal-length 1-d, got {pi.shape} and {adv.shape}")
    if not np.all(np.isfinite(adv)):
        raise ValueError("advantages must be finite")
    _check_simplex(pi, "pi_old")
    shift = float(adv.max())
    weights = pi * np.exp((adv - shift) / beta)
    total = float(weights.sum())
    if total <= 0.0:
        raise ValueError("target distribution has zero mass (pi_old zero wherever advantage is finite)")
    probs = weights / total
    return TargetDistribution(
        probabilities=tuple(float(p) for p in probs),
        beta=float(beta),
        log_partition=math.log(total) + shift / beta,
    )


def kl_objective(
    pi_theta: Sequence[float],
    pi_old: Sequence[float],
    advantages: Sequence[float],
    beta: float,
) -> float:
    """Expected advantage under pi_theta minus beta times KL(pi_theta || pi_old).

    Natural-log KL. Terms with pi_theta == 0 contribute nothing; positive mass
    where pi_old has none is a support violation and raises. beta == 0 is the
    pure expected-advantage degenerate case.
    """
    if beta < 0.0:
        raise ValueError(f"beta must be non-negative, got {beta}")
    p = np.asarray(pi_theta, dtype=np.float64)
    q = np.asarray(pi_old, dtype=np.float64)
    adv = np.asarray(advantages, dtype=np.float64)
    if not (p.shape == q.shape == adv.shape) or p.ndim != 1:
        raise ValueError("pi_theta, pi_old and advantages must be equal-length 1-d")
    _check_simplex(p, "pi_theta")
    _check_simplex(q, "pi_old")
    if np.any((p > 0.0) & (q == 0.0)):
        raise ValueError("support violation: pi_theta places mass where pi_old has none")
    active = p > 0.0
    gain = float(p @ adv)
    kl = float(np.sum(p[active] * (np.log(p[active]) - np.log(q[active]))))
    return gain - beta * kl


def _simplex_grid(n_actions: int, step: float) -> np.ndarray:
    """All grid points with coordinates in multiples of ``step`` summing to 1."""
    ticks = int(round(1.0 / step))
    if abs(ticks * step - 1.0) > 1e-12:
        raise ValueError(f"grid step {step} must divide 1 evenly")
    if n_actions == 2:
        a = np.arange(ticks + 1, dtype=np.float64)
        grid = np.stack([a, ticks - a], axis=1)
    elif n_actions == 3:
        a, b = np.meshgrid(np.arange(ticks + 1), np.arange(ticks + 1), indexing="ij")
        keep = (a + b) <= ticks
        grid = np.stack([a[keep], b[keep], ticks - a[keep] - b[keep]], axis=1).astype(np.float64)
    else:
        raise ValueError(f"grid oracle supports 2 or 3 actions, got {n_actions}")
    return grid / ticks


def optimal_target_check(
    pi_old: Sequence[float],
    advantages: Sequence[float],
    beta: float,
    grid_step: float = 1e-3,
) -> float:
    """Objective gap between the closed-form target and a simplex-grid sweep.

    Returns kl_objective(target) minus the best grid value; a correct target
    makes this non-negative up to float error. pi_old must be strictly
    positive so every grid point is feasible.
    """
    pi = np.asarray(pi_old, dtype=np.float64)
    adv = np.asarray(advantages, dtype=np.float64)
    if np.any(pi <= 0.0):
        raise ValueError("grid check needs strictly positive pi_old")
    target = target_distribution(pi_old, advantages, beta)
    best = kl_objective(target.probabilities, pi_old, advantages, beta)
    grid = _simplex_grid(pi.size, grid_step)
    # vectorized kl_objective over grid rows; 0 * log 0 handled explicitly
    plogp = np.where(grid > 0.0, grid * np.log(np.where(grid > 0.0, grid, 1.0)), 0.0).sum(axis=1)
    values = grid @ (adv + beta * np.log(pi)) - beta * plogp
    return best - float(values.max())


def policy_gradient(
    score_vectors: Sequence[np.ndarray],
    advantages: AdvantageArray,
) -> np.ndarray:
    """Mean over all tokens of advantage times score vector.

    Args:
        score_vectors: per trajectory, an (n_tokens, n_params) array of
            grad-log-prob rows aligned with the advantage tokens.
        advantages: raw or hicra advantage array of matching shape.
    """
    if len(score_vectors) != len(advantages.token_values):
        raise ValueError("one score matrix per trajectory required")
    total = None
    count = 0
    for scores, row in zip(score_vectors, advantages.token_values):
        mat = np.asarray(scores, dtype=np.float64)
        if mat.ndim != 2 or mat.shape[0] != len(row):
            raise ValueError(
                f"score matrix shape {mat.shape} does not match {len(row)} tokens"
            )
        weighted = mat.T @ np.asarray(row, dtype=np.float64)
        total = weighted if total is None else total + weighted
        count += len(row)
    if total is None or count == 0:
        raise ValueError("no tokens to average over")
    return total / count


def clipped_surrogate(
    ratios: Sequence[float] | np.ndarray,
    advantages: Sequence[float] | np.ndarray,
    eps_low: float = DEFAULT_CLIP_EPS_LOW,
    eps_high: float = DEFAULT_CLIP_EPS_HIGH,
) -> float:
    """Mean clipped PPO surrogate with an asymmetric trust region.

    min(r * a, clip(r, 1 - eps_low, 1 + eps_high) * a); with importance
    ratios at exactly 1 (single on-policy update) clipping is inert.
    """
    if eps_low <= 0.0 or eps_high <= 0.0 or eps_low >= 1.0:
        raise ValueError(f"need 0 < eps_low < 1 and eps_high > 0, got {eps_low}, {eps_high}")
    r = np.asarray(ratios, dtype=np.float64)
    a = np.asarray(advantages, dtype=np.float64)
    if r.shape != a.shape or r.size == 0:
        raise ValueError(f"ratios and advantages must match and be non-empty, got {r.shape}, {a.shape}")
    if np.any(r < 0.0) or not np.all(np.isfinite(r)):
        raise ValueError("ratios must be finite and non-negative")
    clipped = np.clip(r, 1.0 - eps_low, 1.0 + eps_high)
    return float(np.mean(np.minimum(r * a, clipped * a)))
