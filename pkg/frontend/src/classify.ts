/**
 * Planning-token classification over caller-supplied token arrays.
 *
 * Matching runs on the normalized text at word granularity: greedy, left to
 * right, longest match first, non-overlapping; spans map back to the original
 * text. A token is a planning token when its span overlaps a match by at
 * least one code point. Mirrors the core classifier exactly, so masks and
 * spans computed here are interchangeable with CLI classify output.
 */

import { BoundaryError } from "./errors.js";
import { Gram, SgSet, checkNormalization, loadSgset } from "./sgset.js";
import {
  Span,
  codePoints,
  normalizeWithSpans,
  wordCore,
  wordSpans,
  wordsMatch,
} from "./textnorm.js";

export interface MatchSpan {
  surface: string;
  clusterId: number;
  /** Half-open code-point span into the original (unnormalized) text. */
  start: number;
  end: number;
}

export interface ClassifyResult {
  /** One 0/1 planning flag per input token. */
  mask: number[];
  matches: MatchSpan[];
}

function wordKey(word: string): string {
  const core = wordCore(word);
  return core.length > 0 ? core : word;
}

type Candidate = [gram: Gram, clusterId: number];

/** Grams indexed by first-word key, longest candidates first. */
class Matcher {
  private byFirst = new Map<string, Candidate[]>();

  constructor(sgset: SgSet) {
    for (const cluster of sgset.clusters) {
      for (const gram of cluster.members) {
        const key = wordKey(gram.words[0]);
        let bucket = this.byFirst.get(key);
        if (bucket === undefined) {
          bucket = [];
          this.byFirst.set(key, bucket);
        }
        bucket.push([gram, cluster.id]);
      }
    }
    for (const bucket of this.byFirst.values()) {
      bucket.sort((a, b) => {
        if (a[0].words.length !== b[0].words.length) return b[0].words.length - a[0].words.length;
        const alen = codePoints(a[0].surface).length;
        const blen = codePoints(b[0].surface).length;
        if (alen !== blen) return blen - alen;
        return a[0].surface < b[0].surface ? -1 : a[0].surface > b[0].surface ? 1 : 0;
      });
    }
  }

  /** Greedy scan; returns [startWord, endWord, gram, clusterId] tuples. */
  matchWords(words: string[]): Array<[number, number, Gram, number]> {
    const out: Array<[number, number, Gram, number]> = [];
    let i = 0;
    const n = words.length;
    while (i < n) {
      let matched: [number, number, Gram, number] | null = null;
      for (const [gram, clusterId] of this.byFirst.get(wordKey(words[i])) ?? []) {
        const k = gram.words.length;
        if (i + k <= n && gram.words.every((gw, j) => wordsMatch(gw, words[i + j]))) {
          matched = [i, i + k, gram, clusterId];
          break;
        }
      }
      if (matched === null) {
        i += 1;
      } else {
        out.push(matched);
        i = matched[1];
      }
    }
    return out;
  }
}

/**
 * Find non-overlapping SG occurrences in `text`, left to right, with spans
 * into the original text. Rejects a normalization version mismatch.
 */
export function matchSgs(text: string, sgset: SgSet): MatchSpan[] {
  checkNormalization(sgset);
  const { norm, spans: charMap } = normalizeWithSpans(text);
  const spans = wordSpans(norm);
  const normChars = codePoints(norm);
  const words = spans.map(([a, b]) => normChars.slice(a, b).join(""));
  const matches: MatchSpan[] = [];
  for (const [startW, endW, gram, clusterId] of new Matcher(sgset).matchWords(words)) {
    const normStart = spans[startW][0];
    const normEnd = spans[endW - 1][1];
    matches.push({
      surface: gram.surface,
      clusterId,
      start: charMap[normStart][0],
      end: charMap[normEnd - 1][1],
    });
  }
  return matches;
}

/** Code-point span of each token in the concatenated text. */
export function tokenSpans(tokenTexts: string[]): Span[] {
  const spans: Span[] = [];
  let pos = 0;
  for (const text of tokenTexts) {
    const len = codePoints(text).length;
    spans.push([pos, pos + len]);
    pos += len;
  }
  return spans;
}

/** Label a token as planning iff its span overlaps any match by >= 1 point. */
export function labelTokens(tokenTexts: string[], matches: MatchSpan[]): number[] {
  const sorted = matches
    .map((m): Span => [m.start, m.end])
    .sort((a, b) => a[0] - b[0] || a[1] - b[1]);
  const mask: number[] = [];
  let mIdx = 0;
  for (const [tokStart, tokEnd] of tokenSpans(tokenTexts)) {
    while (mIdx < sorted.length && sorted[mIdx][1] <= tokStart) mIdx += 1;
    let planning = 0;
    for (let j = mIdx; j < sorted.length; j++) {
      const [s, e] = sorted[j];
      if (s >= tokEnd) break;
      if (Math.min(e, tokEnd) - Math.max(s, tokStart) >= 1) {
        planning = 1;
        break;
      }
    }
    mask.push(planning);
  }
  return mask;
}

/**
 * Classify trajectories given as token-text arrays against an sgset file.
 *
 * Array in, array out: one ClassifyResult per trajectory, mask aligned with
 * the input tokens. The sgset is read once per call; no state survives it.
 */
export function boundClassify(trajectories: string[][], sgsetPath: string): ClassifyResult[] {
  const sgset = loadSgset(sgsetPath);
  checkNormalization(sgset);
  return trajectories.map((tokenTexts) => {
    if (!Array.isArray(tokenTexts)) {
      throw new BoundaryError("ValueError", "each trajectory must be an array of token texts");
    }
    const matches = matchSgs(tokenTexts.join(""), sgset);
    return { mask: labelTokens(tokenTexts, matches), matches };
  });
}
