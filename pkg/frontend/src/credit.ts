/**
 * Group-relative credit shaping with the same contracts as the core engine:
 * advantages are rewards minus the group mean, and planning tokens get
 * `a + alpha * |a|`, which preserves sign and leaves execution tokens alone.
 * Numerics must agree with the core within 1e-12 on any shared fixture.
 */

import { BoundaryError, pyFloat } from "./errors.js";

/** Compensated (Neumaier) summation; plain += drifts past 1e-12 on long groups. */
function fsum(values: number[]): number {
  let sum = 0;
  let comp = 0;
  for (const v of values) {
    const t = sum + v;
    if (Math.abs(sum) >= Math.abs(v)) {
      comp += sum - t + v;
    } else {
      comp += v - t + sum;
    }
    sum = t;
  }
  return sum + comp;
}

/**
 * Group-relative advantages: reward minus the group mean reward.
 * A zero-spread group yields exact zeros, with or without std normalization.
 */
export function grpoAdvantages(rewards: number[], normalizeStd = false): number[] {
  if (rewards.length < 2) {
    throw new BoundaryError(
      "ValueError",
      `a rollout group needs >= 2 rewards, got ${rewards.length}`,
    );
  }
  if (!rewards.every((r) => Number.isFinite(r))) {
    throw new BoundaryError("ValueError", "rewards must be finite");
  }
  if (rewards.every((r) => r === rewards[0])) {
    return rewards.map(() => 0.0);
  }
  const mean = fsum(rewards) / rewards.length;
  let adv = rewards.map((r) => r - mean);
  if (normalizeStd) {
    const std = Math.sqrt(fsum(adv.map((a) => a * a)) / adv.length);
    if (std > 0) {
      adv = adv.map((a) => a / std);
    }
  }
  return adv;
}

export type Mask = ArrayLike<number | boolean>;

/**
 * Per-token advantages for one rollout group: GRPO baseline, then planning
 * amplification where the mask is set. `alpha === 0` skips amplification and
 * returns the plain GRPO broadcast; otherwise alpha must lie in (0, 1).
 */
export function boundHicra(rewards: number[], masks: Mask[], alpha: number): number[][] {
  if (masks.length !== rewards.length) {
    throw new BoundaryError("ValueError", "one mask per trajectory required");
  }
  const scalars = grpoAdvantages(rewards);
  if (alpha === 0) {
    return masks.map((mask, i) => Array.from({ length: mask.length }, () => scalars[i]));
  }
  if (!(alpha > 0 && alpha < 1)) {
    throw new BoundaryError("ValueError", `alpha must be in (0, 1), got ${pyFloat(alpha)}`);
  }
  return masks.map((mask, i) => {
    const a = scalars[i];
    const row = new Array<number>(mask.length);
    for (let t = 0; t < mask.length; t++) {
      row[t] = mask[t] ? a + alpha * Math.abs(a) : a;
    }
    return row;
  });
}
