/**
 * EMB1 embedding file grammar.
 *
 * 4-byte magic "EMB1", u32 LE vector count, u32 LE dimension, then
 * count*dim float32 LE values row-major. The ids sidecar holds one UTF-8 id
 * per LF-terminated line, row-aligned with the vectors.
 */

import { readFileSync, writeFileSync } from "node:fs";

export const EMB_MAGIC = "EMB1";
const HEADER_BYTES = 12;

export class FormatError extends Error {}

export function writeEmb1(vecPath: string, idsPath: string, ids: string[], rows: Float32Array[]): void {
  if (ids.length !== rows.length) {
    throw new FormatError(`ids (${ids.length}) and rows (${rows.length}) must align`);
  }
  const dim = rows.length > 0 ? rows[0].length : 0;
  const buffer = Buffer.alloc(HEADER_BYTES + 4 * ids.length * dim);
  buffer.write(EMB_MAGIC, 0, "ascii");
  buffer.writeUInt32LE(ids.length, 4);
  buffer.writeUInt32LE(dim, 8);
  let offset = HEADER_BYTES;
  for (const row of rows) {
    if (row.length !== dim) {
      throw new FormatError(`row dimension ${row.length} differs from ${dim}`);
    }
    for (const value of row) {
      buffer.writeFloatLE(value, offset);
      offset += 4;
    }
  }
  writeFileSync(vecPath, buffer);
  writeFileSync(idsPath, ids.map((id) => id + "\n").join(""), { encoding: "utf-8" });
}

export interface Emb1File {
  count: number;
  dim: number;
  ids: string[];
  rows: Float32Array[];
}

export function readEmb1(vecPath: string, idsPath: string): Emb1File {
  const data = readFileSync(vecPath);
  if (data.length < HEADER_BYTES) {
    throw new FormatError(`${vecPath}: truncated header`);
  }
  const magic = data.toString("ascii", 0, 4);
  if (magic !== EMB_MAGIC) {
    throw new FormatError(`${vecPath}: bad magic ${JSON.stringify(magic)}`);
  }
  const count = data.readUInt32LE(4);
  const dim = data.readUInt32LE(8);
  const expected = HEADER_BYTES + 4 * count * dim;
  if (data.length !== expected) {
    throw new FormatError(
      `${vecPath}: payload size mismatch, expected ${expected} bytes for ${count}x${dim}, found ${data.length}`,
    );
  }
  const rows: Float32Array[] = [];
  for (let i = 0; i < count; i++) {
    const row = new Float32Array(dim);
    for (let j = 0; j < dim; j++) {
      row[j] = data.readFloatLE(HEADER_BYTES + 4 * (i * dim + j));
    }
    rows.push(row);
  }
  const text = readFileSync(idsPath, "utf-8");
  const lines = text.split("\n");
  if (lines.length > 0 && lines[lines.length - 1] === "") {
    lines.pop();
  }
  if (lines.length !== count) {
    throw new FormatError(`${idsPath}: ${lines.length} ids for ${count} vectors`);
  }
  return { count, dim, ids: lines, rows };
}
