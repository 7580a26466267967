import { describe, expect, it } from "vitest";

import { EncoderLoadError, loadEncoder } from "../src/encoder.js";

describe("mock encoder", () => {
  it("is deterministic per (side, text)", () => {
    const enc = loadEncoder("mock:32");
    const [a] = enc.encode(["the same sentence"], "query");
    const [b] = enc.encode(["the same sentence"], "query");
    expect(Array.from(a)).toEqual(Array.from(b));
  });

  it("identical input text twice gives identical rows", () => {
    const enc = loadEncoder("mock:16");
    const rows = enc.encode(["twice", "twice"], "document");
    expect(Array.from(rows[0])).toEqual(Array.from(rows[1]));
  });

  it("query and document towers differ", () => {
    const enc = loadEncoder("mock:32");
    const [q] = enc.encode(["shared text"], "query");
    const [d] = enc.encode(["shared text"], "document");
    expect(Array.from(q)).not.toEqual(Array.from(d));
  });

  it("produces unit-norm vectors of the requested dimension", () => {
    const enc = loadEncoder("mock:64");
    expect(enc.dim).toBe(64);
    const [vec] = enc.encode(["normalize me"], "query");
    expect(vec.length).toBe(64);
    let norm = 0;
    for (const v of vec) norm += v * v;
    expect(Math.sqrt(norm)).toBeCloseTo(1.0, 5);
  });

  it("different texts get different vectors", () => {
    const enc = loadEncoder("mock:32");
    const rows = enc.encode(["alpha", "beta"], "query");
    expect(Array.from(rows[0])).not.toEqual(Array.from(rows[1]));
  });

  it("rejects unknown identifiers", () => {
    expect(() => loadEncoder("notreal")).toThrow(EncoderLoadError);
    expect(() => loadEncoder("mock:0")).toThrow(EncoderLoadError);
  });
});
