/**
 * Strategic-gram set loading. Reads the sgset.json documents the core CLI
 * mines; the file format is the interchange contract, so version checks here
 * must reject exactly what the core rejects, with the same messages.
 */

import { readFileSync } from "node:fs";

import { BoundaryError, pyRepr } from "./errors.js";
import { NORMALIZATION_VERSION, normalize } from "./textnorm.js";

export const SGSET_FILE_VERSION = 1;
const MAX_GRAM_WORDS = 6;

export interface Gram {
  words: string[];
  surface: string;
}

export interface SgCluster {
  id: number;
  members: Gram[];
  clusterDf: number | null;
}

export interface SgSet {
  clusters: SgCluster[];
  selectionQuantile: number | null;
  normalizationVersion: string;
}

export function gramFromSurface(surface: string): Gram {
  const norm = normalize(surface);
  if (norm.length === 0) {
    throw new BoundaryError(
      "ValueError",
      `gram surface is empty after normalization: ${pyRepr(surface)}`,
    );
  }
  const words = norm.split(" ");
  if (words.length < 1 || words.length > MAX_GRAM_WORDS) {
    throw new BoundaryError(
      "ValueError",
      `gram must have 1..${MAX_GRAM_WORDS} words, got ${words.length}`,
    );
  }
  return { words, surface: words.join(" ") };
}

/** Parse an already-deserialized sgset document. */
export function parseSgset(doc: unknown): SgSet {
  const d = doc as Record<string, unknown> | null;
  if (d === null || typeof d !== "object" || Array.isArray(d) || d["version"] !== SGSET_FILE_VERSION) {
    const version = d !== null && typeof d === "object" && !Array.isArray(d) ? d["version"] : undefined;
    throw new BoundaryError(
      "ValueError",
      `unsupported SG set file version: ${pyRepr(version)}`,
    );
  }
  const rawClusters = (d["clusters"] ?? []) as Array<Record<string, unknown>>;
  const clusters: SgCluster[] = rawClusters.map((c) => ({
    id: Number(c["id"]),
    members: (c["members"] as string[]).map(gramFromSurface),
    clusterDf: c["cluster_df"] === null || c["cluster_df"] === undefined ? null : Number(c["cluster_df"]),
  }));
  return {
    clusters,
    selectionQuantile:
      d["selection_quantile"] === null || d["selection_quantile"] === undefined
        ? null
        : Number(d["selection_quantile"]),
    normalizationVersion: String(d["normalization_version"] ?? ""),
  };
}

export function loadSgset(path: string): SgSet {
  return parseSgset(JSON.parse(readFileSync(path, "utf-8")));
}

/** Reject an sgset built under different normalization rules. */
export function checkNormalization(sgset: SgSet): void {
  if (sgset.normalizationVersion !== NORMALIZATION_VERSION) {
    throw new BoundaryError(
      "ValueError",
      `SG set was built with normalization ${pyRepr(sgset.normalizationVersion)}, ` +
        `this build uses ${pyRepr(NORMALIZATION_VERSION)}`,
    );
  }
}
