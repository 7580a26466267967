#!/usr/bin/env node
/**
 * export --input x.jsonl --side query|document --model mock:64 --out dir/
 *
 * Writes <side>.emb, <side>.ids, manifest_<side>.json under --out; once both
 * sides exist there, also writes reference_scores.csv. Prints the manifest
 * path on stdout. Exit codes: 0 success, 1 usage error, 2 data error.
 */

import { parseArgs } from "node:util";

import { EncoderLoadError } from "./encoder.js";
import { InputError, runExport } from "./exporter.js";

function usage(): string {
  return "usage: hybridir-export export --input FILE --side query|document --model ID --out DIR";
}

export function main(argv: string[]): number {
  if (argv[0] !== "export") {
    process.stderr.write(usage() + "\n");
    return 1;
  }
  let values: Record<string, string | undefined>;
  try {
    ({ values } = parseArgs({
      args: argv.slice(1),
      options: {
        input: { type: "string" },
        side: { type: "string" },
        model: { type: "string" },
        out: { type: "string" },
      },
    }));
  } catch (error) {
    process.stderr.write(`${(error as Error).message}\n${usage()}\n`);
    return 1;
  }
  const { input, side, model, out } = values;
  if (!input || !side || !model || !out) {
    process.stderr.write(usage() + "\n");
    return 1;
  }
  if (side !== "query" && side !== "document") {
    process.stderr.write(`--side must be 'query' or 'document', got ${side}\n`);
    return 1;
  }
  try {
    const result = runExport({ input, side, model, out });
    process.stderr.write(
      `encoded ${result.manifest.count} ${side} vectors (dim ${result.manifest.dim}) with ${result.manifest.model}\n`,
    );
    if (result.referenceScoresPath) {
      process.stderr.write(`reference scores: ${result.referenceScoresPath}\n`);
    }
    process.stdout.write(result.manifestPath + "\n");
    return 0;
  } catch (error) {
    if (error instanceof EncoderLoadError || error instanceof InputError) {
      process.stderr.write(`error: ${error.message}\n`);
      return 2;
    }
    if ((error as NodeJS.ErrnoException).code === "ENOENT") {
      process.stderr.write(`error: ${(error as Error).message}\n`);
      return 2;
    }
    throw error;
  }
}

const invokedDirectly =
  process.argv[1] !== undefined && import.meta.url.endsWith(process.argv[1].split("/").pop()!);
if (invokedDirectly) {
  process.exit(main(process.argv.slice(2)));
}
