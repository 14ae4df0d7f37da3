#!/usr/bin/env node
/**
 * embed-export: write scene-label embedding tables for the detector.
 *
 *   embed-export export --model bert --labels "home,office" --out scenes.tsv
 *   embed-export export --model gpt2 --labels labels.txt --out scenes.tsv
 *   embed-export extend --table scenes.tsv --labels "downtown,apartment"
 *
 * --labels takes a comma-separated list or a path to a file with one
 * label per line.
 */

import { existsSync, readFileSync } from "node:fs";

import yargs from "yargs";
import { hideBin } from "yargs/helpers";

import { MODEL_DIMS, makeEmbedder } from "./embedder.js";
import { exportTable, extendTable, readTable } from "./table.js";

function parseLabels(spec: string): string[] {
  const raw = existsSync(spec)
    ? readFileSync(spec, "utf8").split("\n")
    : spec.split(",");
  return raw.map((s) => s.trim()).filter((s) => s.length > 0);
}

function familyForDim(dim: number): string {
  for (const [family, d] of Object.entries(MODEL_DIMS)) {
    if (d === dim) {
      return family;
    }
  }
  throw new Error(`no model family produces dimension ${dim}`);
}

async function main(): Promise<void> {
  await yargs(hideBin(process.argv))
    .command(
      "export",
      "embed labels and write a fresh table",
      (y) =>
        y
          .option("model", { choices: Object.keys(MODEL_DIMS), demandOption: true })
          .option("labels", { type: "string", demandOption: true })
          .option("out", { type: "string", demandOption: true }),
      (argv) => {
        const labels = parseLabels(argv.labels);
        exportTable(makeEmbedder(argv.model as string), labels, argv.out);
        console.log(JSON.stringify({ out: argv.out, labels: labels.length, dim: MODEL_DIMS[argv.model as string] }));
      })
    .command(
      "extend",
      "append embeddings for labels missing from an existing table",
      (y) =>
        y
          .option("table", { type: "string", demandOption: true })
          .option("labels", { type: "string", demandOption: true })
          .option("model", { choices: Object.keys(MODEL_DIMS), type: "string" }),
      (argv) => {
        const family = argv.model ?? familyForDim(readTable(argv.table).dim);
        const added = extendTable(makeEmbedder(family), argv.table, parseLabels(argv.labels));
        console.log(JSON.stringify({ table: argv.table, added }));
      })
    .demandCommand(1)
    .strict()
    .fail((msg, err) => {
      console.error(`error: ${err?.message ?? msg}`);
      process.exit(1);
    })
    .parseAsync();
}

main().catch((err) => {
  console.error(`error: ${err.message}`);
  process.exit(1);
});
