/**
 * Text normalization mirroring the core: lowercase, collapse whitespace runs
 * to a single space, strip the ends. Punctuation stays attached to words, so
 * word comparison strips leading/trailing punctuation on the fly.
 *
 * All offsets here count Unicode code points, not UTF-16 units, because that
 * is how the core indexes strings; spans stay exchangeable across the
 * boundary. NORMALIZATION_VERSION must track the core's constant.
 */

export const NORMALIZATION_VERSION = "lower-ws-v1";

export type Span = [start: number, end: number];

// The core's whitespace set (str.isspace): ASCII controls incl. FS..US, NEL,
// NBSP, and the Unicode space separators. Deliberately not \s, which differs.
// Spelled as code points so no raw control chars live in this file.
const SPACE_CODES: Array<number | [number, number]> = [
  [0x09, 0x0d],
  [0x1c, 0x1f],
  0x20,
  0x85,
  0xa0,
  0x1680,
  [0x2000, 0x200a],
  0x2028,
  0x2029,
  0x202f,
  0x205f,
  0x3000,
];

const SPACE = new Set<number>();
for (const entry of SPACE_CODES) {
  if (typeof entry === "number") {
    SPACE.add(entry);
  } else {
    for (let cp = entry[0]; cp <= entry[1]; cp++) SPACE.add(cp);
  }
}

function isSpace(ch: string): boolean {
  const cp = ch.codePointAt(0);
  return cp !== undefined && SPACE.has(cp);
}

const ALNUM = /^[\p{L}\p{N}]$/u;

/** Split into code points; `.length` on the result counts like the core. */
export function codePoints(text: string): string[] {
  return Array.from(text);
}

/** Lowercase `text` and collapse internal whitespace to single spaces. */
export function normalize(text: string): string {
  return codePoints(text.toLowerCase())
    .map((ch) => (isSpace(ch) ? " " : ch))
    .join("")
    .split(" ")
    .filter((w) => w.length > 0)
    .join(" ");
}

export interface NormalizedSpans {
  norm: string;
  /** One entry per normalized code point: its half-open source span. */
  spans: Span[];
}

/**
 * Normalize while tracking where each output code point came from.
 * A normalized span [i, j) maps back to spans[i][0] .. spans[j-1][1].
 */
export function normalizeWithSpans(text: string): NormalizedSpans {
  const source = codePoints(text);
  const chars: string[] = [];
  const spans: Span[] = [];
  let pendingWs: Span | null = null;
  for (let i = 0; i < source.length; i++) {
    const ch = source[i];
    if (isSpace(ch)) {
      pendingWs = pendingWs === null ? [i, i + 1] : [pendingWs[0], i + 1];
      continue;
    }
    if (pendingWs !== null) {
      if (chars.length > 0) {
        // leading whitespace is dropped, not mapped
        chars.push(" ");
        spans.push(pendingWs);
      }
      pendingWs = null;
    }
    for (const out of codePoints(ch.toLowerCase())) {
      chars.push(out);
      spans.push([i, i + 1]);
    }
  }
  return { norm: chars.join(""), spans };
}

/** Half-open spans of the space-separated words of a normalized string. */
export function wordSpans(normalized: string): Span[] {
  const out: Span[] = [];
  const source = codePoints(normalized);
  let start: number | null = null;
  for (let i = 0; i < source.length; i++) {
    if (source[i] === " ") {
      if (start !== null) {
        out.push([start, i]);
        start = null;
      }
    } else if (start === null) {
      start = i;
    }
  }
  if (start !== null) {
    out.push([start, source.length]);
  }
  return out;
}

/** Strip leading/trailing non-alphanumeric code points of a word. */
export function wordCore(word: string): string {
  const source = codePoints(word);
  let start = 0;
  let end = source.length;
  while (start < end && !ALNUM.test(source[start])) start += 1;
  while (end > start && !ALNUM.test(source[end - 1])) end -= 1;
  return source.slice(start, end).join("");
}

/** True when a gram word and a text word agree at word-boundary level. */
export function wordsMatch(gramWord: string, textWord: string): boolean {
  if (gramWord === textWord) return true;
  const core = wordCore(gramWord);
  return core.length > 0 && core === wordCore(textWord);
}
