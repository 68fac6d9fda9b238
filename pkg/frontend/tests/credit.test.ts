import { readFileSync } from "node:fs";
import path from "node:path";
import { fileURLToPath } from "node:url";

import { describe, expect, it } from "vitest";

import { BoundaryError, boundHicra, grpoAdvantages } from "../src/index.js";

const here = path.dirname(fileURLToPath(import.meta.url));
const fixtures = path.join(here, "fixtures");

interface AdvantageRow {
  problem_id: string;
  step: number;
  rewards: number[];
  advantages: number[];
  token_advantages: number[][];
  alpha: number | null;
}

interface TraceRow {
  problem_id: string;
  step: number;
  planning_mask: number[];
}

function readJsonl<T>(name: string): T[] {
  return readFileSync(path.join(fixtures, name), "utf-8")
    .trim()
    .split("\n")
    .map((line) => JSON.parse(line) as T);
}

/** Masks per rollout group, keyed like the core's grouping, in corpus order. */
function masksByGroup(): Map<string, number[][]> {
  const out = new Map<string, number[][]>();
  for (const row of readJsonl<TraceRow>("classified.jsonl")) {
    const key = JSON.stringify([row.problem_id, row.step]);
    let bucket = out.get(key);
    if (bucket === undefined) {
      bucket = [];
      out.set(key, bucket);
    }
    bucket.push(row.planning_mask);
  }
  return out;
}

function maxAbsDiff(a: number[], b: number[]): number {
  expect(a).toHaveLength(b.length);
  let worst = 0;
  for (let i = 0; i < a.length; i++) {
    worst = Math.max(worst, Math.abs(a[i] - b[i]));
  }
  return worst;
}

describe("grpoAdvantages", () => {
  it("subtracts the group mean", () => {
    expect(grpoAdvantages([1, 0])).toEqual([0.5, -0.5]);
  });

  it("yields exact zeros on a zero-spread group", () => {
    const adv = grpoAdvantages([0.7, 0.7, 0.7]);
    expect(adv).toEqual([0, 0, 0]);
    adv.forEach((a) => expect(Object.is(a, 0)).toBe(true));
  });

  it("rejects a group of one with the core's message", () => {
    expect(() => grpoAdvantages([1])).toThrowError("a rollout group needs >= 2 rewards, got 1");
  });

  it("rejects non-finite rewards", () => {
    expect(() => grpoAdvantages([1, NaN])).toThrowError("rewards must be finite");
  });
});

describe("boundHicra", () => {
  it("composes baseline and amplification on the worked example", () => {
    const out = boundHicra([1, 0], [[1, 0], [1, 0]], 0.2);
    const expected = [
      [0.6, 0.5],
      [-0.4, -0.5],
    ];
    out.forEach((row, i) => {
      expect(maxAbsDiff(row, expected[i])).toBeLessThan(1e-12);
    });
  });

  it("equals the plain GRPO broadcast at alpha 0", () => {
    const rewards = [1, 0, 0.25];
    const masks = [
      [1, 1, 0],
      [0, 1],
      [1, 0, 1, 0],
    ];
    const scalars = grpoAdvantages(rewards);
    const out = boundHicra(rewards, masks, 0);
    out.forEach((row, i) => {
      expect(row).toEqual(masks[i].map(() => scalars[i]));
    });
  });

  it("rejects alpha outside (0, 1) with the core's message", () => {
    const args: [number[], number[][]] = [
      [1, 0],
      [[1], [1]],
    ];
    expect(() => boundHicra(...args, 1.5)).toThrowError("alpha must be in (0, 1), got 1.5");
    expect(() => boundHicra(...args, -0.1)).toThrowError("alpha must be in (0, 1), got -0.1");
    expect(() => boundHicra(...args, 1)).toThrowError("alpha must be in (0, 1), got 1.0");
    let caught: unknown;
    try {
      boundHicra(...args, 1.5);
    } catch (err) {
      caught = err;
    }
    expect((caught as BoundaryError).code).toBe("ValueError");
  });

  it("requires one mask per trajectory", () => {
    expect(() => boundHicra([1, 0], [[1]], 0.2)).toThrowError("one mask per trajectory required");
  });
});

describe("parity with core CLI output", () => {
  const masks = masksByGroup();

  it("matches amplified token advantages within 1e-12", () => {
    const rows = readJsonl<AdvantageRow>("advantages_alpha02.jsonl");
    expect(rows.length).toBeGreaterThanOrEqual(3);
    for (const row of rows) {
      expect(row.alpha).toBe(0.2);
      const groupMasks = masks.get(JSON.stringify([row.problem_id, row.step]));
      expect(groupMasks).toBeDefined();
      const out = boundHicra(row.rewards, groupMasks!, row.alpha!);
      expect(maxAbsDiff(grpoAdvantages(row.rewards), row.advantages)).toBeLessThanOrEqual(1e-12);
      out.forEach((tokenRow, i) => {
        expect(maxAbsDiff(tokenRow, row.token_advantages[i])).toBeLessThanOrEqual(1e-12);
      });
    }
  });

  it("matches raw broadcast advantages within 1e-12 when alpha is absent", () => {
    const rows = readJsonl<AdvantageRow>("advantages_grpo.jsonl");
    for (const row of rows) {
      expect(row.alpha).toBeNull();
      const scalars = grpoAdvantages(row.rewards);
      row.token_advantages.forEach((tokenRow, i) => {
        const broadcast = tokenRow.map(() => scalars[i]);
        expect(maxAbsDiff(broadcast, tokenRow)).toBeLessThanOrEqual(1e-12);
      });
    }
  });
});
