/**
 * The embedding-table TSV wire format consumed by the detector:
 *
 *   dim<TAB><E>
 *   <label><TAB>f1<TAB>...<TAB>fE
 *
 * Floats carry 17 significant digits so float64 values round-trip
 * exactly. Labels are stored normalized (trimmed, lowercased).
 */

import { readFileSync, writeFileSync } from "node:fs";

import { Embedder, normalizeLabel } from "./embedder.js";

export function formatFloat(v: number): string {
  // strip the trailing-zero noise toPrecision leaves on short values
  const fixed = v.toPrecision(17);
  return fixed.includes("e") ? fixed : fixed.replace(/(\.\d*?)0+$/, "$1").replace(/\.$/, ".0");
}

export function buildRows(embedder: Embedder, labels: string[]): string[] {
  const seen = new Set<string>();
  const rows: string[] = [];
  for (const raw of labels) {
    const label = normalizeLabel(raw);
    if (label.length === 0) {
      throw new Error(`label '${raw}' is empty after normalization`);
    }
    if (seen.has(label)) {
      throw new Error(`duplicate label '${label}' after normalization`);
    }
    seen.add(label);
    const vec = embedder.embed(label);
    rows.push(label + "\t" + Array.from(vec, formatFloat).join("\t"));
  }
  return rows;
}

export function exportTable(embedder: Embedder, labels: string[], outPath: string): void {
  if (labels.length === 0) {
    throw new Error("no labels to export");
  }
  const lines = [`dim\t${embedder.dim}`, ...buildRows(embedder, labels)];
  writeFileSync(outPath, lines.join("\n") + "\n", "utf8");
}

export interface ParsedTable {
  dim: number;
  /** verbatim data lines, in file order */
  lines: string[];
  labels: Set<string>;
}

export function readTable(path: string): ParsedTable {
  const text = readFileSync(path, "utf8");
  const lines = text.split("\n").filter((line, i) => line.length > 0 || i === 0);
  const header = lines[0]?.split("\t") ?? [];
  if (header.length !== 2 || header[0] !== "dim") {
    throw new Error(`${path}: first line must be 'dim<TAB><E>'`);
  }
  const dim = Number(header[1]);
  if (!Number.isInteger(dim) || dim < 1) {
    throw new Error(`${path}: bad dimension '${header[1]}'`);
  }
  const labels = new Set<string>();
  for (const line of lines.slice(1)) {
    const fields = line.split("\t");
    if (fields.length !== dim + 1) {
      throw new Error(`${path}: row with ${fields.length} fields, expected ${dim + 1}`);
    }
    labels.add(normalizeLabel(fields[0]));
  }
  return { dim, lines: lines.slice(1), labels };
}

/** Append rows for labels missing from the table; existing rows stay
 * byte-identical. Returns the number of rows added. */
export function extendTable(embedder: Embedder, tablePath: string, labels: string[]): number {
  const table = readTable(tablePath);
  if (table.dim !== embedder.dim) {
    throw new Error(
      `${tablePath} has dimension ${table.dim}, but model '${embedder.family}' produces ${embedder.dim}`);
  }
  const fresh = labels.map(normalizeLabel).filter((label) => !table.labels.has(label));
  const unique = [...new Set(fresh)];
  if (unique.length === 0) {
    return 0;
  }
  const lines = [`dim\t${table.dim}`, ...table.lines, ...buildRows(embedder, unique)];
  writeFileSync(tablePath, lines.join("\n") + "\n", "utf8");
  return unique.length;
}
