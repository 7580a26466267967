/**
 * Batch export: JSONL in, EMB1 + ids + manifest out.
 *
 * Document-side inputs are corpus records {id, sentence, context}; the
 * sentence and its context are encoded jointly as one vector. Query-side
 * inputs are {qid, text}. Row order always equals input line order.
 *
 * When the output directory ends up holding both sides, a reference-scores
 * CSV (first query against the first ten documents) is written so the
 * consuming engine can verify dot-product parity after reloading the files.
 */

import { createHash } from "node:crypto";
import { existsSync, mkdirSync, readFileSync, writeFileSync } from "node:fs";
import { join } from "node:path";

import { Encoder, EncoderSide, loadEncoder } from "./encoder.js";
import { readEmb1, writeEmb1 } from "./emb1.js";

export class InputError extends Error {}

export interface ExportManifest {
  model: string;
  side: EncoderSide;
  dim: number;
  count: number;
  vectors_sha256: string;
  ids_sha256: string;
}

export interface ExportResult {
  manifest: ExportManifest;
  vectorsPath: string;
  idsPath: string;
  manifestPath: string;
  referenceScoresPath: string | null;
}

interface InputRecord {
  id: string;
  text: string;
}

export function readInputRecords(path: string, side: EncoderSide): InputRecord[] {
  const lines = readFileSync(path, "utf-8").split("\n");
  const records: InputRecord[] = [];
  const seen = new Set<string>();
  lines.forEach((line, index) => {
    if (!line.trim()) {
      return;
    }
    let obj: Record<string, unknown>;
    try {
      obj = JSON.parse(line);
    } catch (error) {
      throw new InputError(`${path}:${index + 1}: invalid JSON (${(error as Error).message})`);
    }
    let id: unknown;
    let text: string;
    if (side === "document") {
      id = obj.id;
      const sentence = obj.sentence;
      if (typeof sentence !== "string") {
        throw new InputError(`${path}:${index + 1}: missing or non-string field 'sentence'`);
      }
      const context = obj.context;
      if (context != null && typeof context !== "string") {
        throw new InputError(`${path}:${index + 1}: field 'context' must be string or null`);
      }
      text = context ? `${sentence}\n${context}` : sentence;
    } else {
      id = obj.qid;
      if (typeof obj.text !== "string") {
        throw new InputError(`${path}:${index + 1}: missing or non-string field 'text'`);
      }
      text = obj.text;
    }
    if (typeof id !== "string" || !id) {
      throw new InputError(`${path}:${index + 1}: missing id field`);
    }
    if (seen.has(id)) {
      throw new InputError(`${path}:${index + 1}: duplicate id ${JSON.stringify(id)}`);
    }
    seen.add(id);
    records.push({ id, text });
  });
  if (records.length === 0) {
    throw new InputError(`${path}: empty input`);
  }
  return records;
}

function sha256(path: string): string {
  return createHash("sha256").update(readFileSync(path)).digest("hex");
}

function dot(a: Float32Array, b: Float32Array): number {
  let total = 0;
  for (let i = 0; i < a.length; i++) {
    total += a[i] * b[i];
  }
  return total;
}

/** Present once both sides are exported into the same directory. */
export function writeReferenceScores(outDir: string): string | null {
  const queryVec = join(outDir, "query.emb");
  const docVec = join(outDir, "document.emb");
  if (!existsSync(queryVec) || !existsSync(docVec)) {
    return null;
  }
  const queries = readEmb1(queryVec, join(outDir, "query.ids"));
  const docs = readEmb1(docVec, join(outDir, "document.ids"));
  if (queries.dim !== docs.dim) {
    throw new InputError(`query dim ${queries.dim} != document dim ${docs.dim}`);
  }
  const lines = ["qid,doc_id,dot"];
  const nDocs = Math.min(10, docs.count);
  for (let j = 0; j < nDocs; j++) {
    const value = dot(queries.rows[0], docs.rows[j]);
    lines.push(`${queries.ids[0]},${docs.ids[j]},${value.toPrecision(17)}`);
  }
  const path = join(outDir, "reference_scores.csv");
  writeFileSync(path, lines.join("\n") + "\n", { encoding: "utf-8" });
  return path;
}

export function runExport(opts: {
  input: string;
  side: EncoderSide;
  model: string;
  out: string;
}): ExportResult {
  const encoder: Encoder = loadEncoder(opts.model);
  const records = readInputRecords(opts.input, opts.side);
  mkdirSync(opts.out, { recursive: true });

  const rows = encoder.encode(records.map((r) => r.text), opts.side);
  const ids = records.map((r) => r.id);
  const vectorsPath = join(opts.out, `${opts.side}.emb`);
  const idsPath = join(opts.out, `${opts.side}.ids`);
  writeEmb1(vectorsPath, idsPath, ids, rows);

  const manifest: ExportManifest = {
    model: encoder.id,
    side: opts.side,
    dim: encoder.dim,
    count: ids.length,
    vectors_sha256: sha256(vectorsPath),
    ids_sha256: sha256(idsPath),
  };
  const manifestPath = join(opts.out, `manifest_${opts.side}.json`);
  writeFileSync(manifestPath, JSON.stringify(manifest, Object.keys(manifest).sort(), 2) + "\n", {
    encoding: "utf-8",
  });

  const referenceScoresPath = writeReferenceScores(opts.out);
  return { manifest, vectorsPath, idsPath, manifestPath, referenceScoresPath };
}
