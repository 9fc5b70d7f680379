/**
 * Thin command-line front end.
 *
 *   train    --dataset <dir> --out <dir> [--epochs N] [--batch N] [--lr F]
 *            [--width N] [--seed N]   train on the manifest's train split
 *            (falls back to all converged records when no split labels exist)
 *   predict  --model <dir> --objective 1|2 --vf F --rmin F --grid-size N --out <file>
 *   evaluate --model <dir> --dataset <dir> [--split test]   metrics vs ground truth
 */
import * as fs from "node:fs";
import * as path from "node:path";

import { loadRecords } from "./data";
import { writeDgrid } from "./dgrid";
import { evaluate } from "./metrics";
import { predictGrid } from "./predict";
import { historyCsv, loadModel, saveModel, train } from "./train";

function parseArgs(argv: string[]): Map<string, string> {
  const out = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    if (!key.startsWith("--") || i + 1 >= argv.length) {
      throw new Error(`bad argument ${key}`);
    }
    out.set(key.slice(2), argv[i + 1]);
  }
  return out;
}

function req(args: Map<string, string>, key: string): string {
  const v = args.get(key);
  if (v === undefined) throw new Error(`missing --${key}`);
  return v;
}

async function cmdTrain(args: Map<string, string>): Promise<void> {
  const datasetDir = req(args, "dataset");
  const outDir = req(args, "out");
  let trainRecords = loadRecords(datasetDir, "train");
  let valRecords = loadRecords(datasetDir, "val");
  if (trainRecords.length === 0) {
    trainRecords = loadRecords(datasetDir);
    valRecords = [];
  }
  const result = await train(
    trainRecords,
    valRecords,
    {
      epochs: args.has("epochs") ? Number(args.get("epochs")) : undefined,
      batchSize: args.has("batch") ? Number(args.get("batch")) : undefined,
      learningRate: args.has("lr") ? Number(args.get("lr")) : undefined,
      baseWidth: args.has("width") ? Number(args.get("width")) : undefined,
      seed: args.has("seed") ? Number(args.get("seed")) : undefined,
    },
    (s) =>
      console.error(
        `epoch ${s.epoch}: train_mse=${s.trainMse.toExponential(3)} train_dsc=${s.trainDsc.toFixed(4)}` +
          (s.valMse !== null ? ` val_mse=${s.valMse.toExponential(3)}` : ""),
      ),
  );
  await saveModel(result.model, outDir);
  fs.writeFileSync(path.join(outDir, "history.csv"), historyCsv(result.history));
  fs.writeFileSync(
    path.join(outDir, "train_meta.json"),
    JSON.stringify({ gridSize: result.gridSize, records: trainRecords.length }),
  );
  const last = result.history[result.history.length - 1];
  console.log(`final train_mse=${last.trainMse} train_dsc=${last.trainDsc}`);
}

async function cmdPredict(args: Map<string, string>): Promise<void> {
  const model = await loadModel(req(args, "model"));
  const gridSize = Number(req(args, "grid-size"));
  const grid = predictGrid(
    model,
    {
      objectiveId: Number(req(args, "objective")),
      vf: Number(req(args, "vf")),
      rmin: Number(req(args, "rmin")),
    },
    gridSize,
  );
  writeDgrid(req(args, "out"), grid);
  console.log(`volume=${grid.data.reduce((a, b) => a + b, 0) / grid.data.length}`);
}

async function cmdEvaluate(args: Map<string, string>): Promise<void> {
  const model = await loadModel(req(args, "model"));
  const records = loadRecords(req(args, "dataset"), args.get("split"));
  if (records.length === 0) throw new Error("no records in requested split");
  const gridSize = records[0].grid.resolution[0];
  const pred = records.map((r) =>
    predictGrid(model, { objectiveId: r.objectiveId, vf: r.vf, rmin: r.rmin }, gridSize),
  );
  const truth = records.map((r) => r.grid);
  console.log(JSON.stringify(evaluate(pred, truth)));
}

export async function main(argv: string[]): Promise<number> {
  const [command, ...rest] = argv;
  try {
    const args = parseArgs(rest);
    if (command === "train") await cmdTrain(args);
    else if (command === "predict") await cmdPredict(args);
    else if (command === "evaluate") await cmdEvaluate(args);
    else throw new Error(`unknown command ${command ?? "(none)"}`);
    return 0;
  } catch (err) {
    console.error(`error: ${err instanceof Error ? err.message : err}`);
    return 2;
  }
}

if (process.argv[1] && process.argv[1].endsWith("cli.ts")) {
  main(process.argv.slice(2)).then((code) => process.exit(code));
}
