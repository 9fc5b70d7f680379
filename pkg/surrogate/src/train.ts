/**
 * Training loop: Adam on mean-squared voxel error, with per-epoch MSE and
 * Dice tracked on the train and validation splits.
 */
import * as fs from "node:fs";
import * as path from "node:path";

import * as tf from "@tensorflow/tfjs";

import { LoadedRecord, TensorDataset, toTensors, volumeToGrid } from "./data";
import { DensityGrid } from "./dgrid";
import { dice, mse } from "./metrics";
import { buildResUNet, ModelConfig } from "./model";

export interface TrainConfig {
  batchSize: number;
  learningRate: number;
  epochs: number;
  seed: number;
  baseWidth: number;
}

export const DEFAULT_TRAIN: TrainConfig = {
  batchSize: 128,
  learningRate: 0.001,
  epochs: 150,
  seed: 0,
  baseWidth: 16,
};

export interface EpochStats {
  epoch: number;
  trainMse: number;
  trainDsc: number;
  valMse: number | null;
  valDsc: number | null;
}

export interface TrainResult {
  model: tf.LayersModel;
  history: EpochStats[];
  gridSize: number;
}

/** Deterministic per-epoch shuffling driven by a small LCG. */
function shuffled(n: number, rng: () => number): number[] {
  const idx = Array.from({ length: n }, (_, i) => i);
  for (let i = n - 1; i > 0; i--) {
    const j = Math.floor(rng() * (i + 1));
    [idx[i], idx[j]] = [idx[j], idx[i]];
  }
  return idx;
}

function lcg(seed: number): () => number {
  let state = (seed >>> 0) || 1;
  return () => {
    state = (1664525 * state + 1013904223) >>> 0;
    return state / 2 ** 32;
  };
}

function predictionsOf(model: tf.LayersModel, xs: tf.Tensor, gridSize: number): DensityGrid[] {
  const out = model.predict(xs, { batchSize: 8 }) as tf.Tensor;
  const flat = out.dataSync() as Float32Array;
  const batch = out.shape[0]!;
  out.dispose();
  const n = gridSize ** 3;
  const grids: DensityGrid[] = [];
  for (let i = 0; i < batch; i++) {
    grids.push(volumeToGrid(flat.subarray(i * n, (i + 1) * n) as Float32Array, gridSize));
  }
  return grids;
}

function gridsOf(ys: tf.Tensor, gridSize: number): DensityGrid[] {
  const flat = ys.dataSync() as Float32Array;
  const n = gridSize ** 3;
  const grids: DensityGrid[] = [];
  for (let i = 0; i < ys.shape[0]!; i++) {
    grids.push(volumeToGrid(flat.subarray(i * n, (i + 1) * n) as Float32Array, gridSize));
  }
  return grids;
}

export async function train(
  trainRecords: LoadedRecord[],
  valRecords: LoadedRecord[],
  config: Partial<TrainConfig> = {},
  onEpoch?: (stats: EpochStats) => void,
): Promise<TrainResult> {
  const cfg = { ...DEFAULT_TRAIN, ...config };
  if (trainRecords.length === 0) throw new Error("empty training split");

  const trainSet = toTensors(trainRecords);
  const valSet = valRecords.length ? toTensors(valRecords) : null;
  const modelCfg: ModelConfig = {
    gridSize: trainSet.gridSize,
    baseWidth: cfg.baseWidth,
    inputChannels: 3,
  };
  // seed weight init (tfjs default initializers draw from Math.random)
  const nativeRandom = Math.random;
  Math.random = lcg(cfg.seed * 7919 + 17);
  let model: tf.LayersModel;
  try {
    model = buildResUNet(modelCfg);
  } finally {
    Math.random = nativeRandom;
  }
  const optimizer = tf.train.adam(cfg.learningRate);
  const lossFn = (yTrue: tf.Tensor, yPred: tf.Tensor) => tf.losses.meanSquaredError(yTrue, yPred);

  const rng = lcg(cfg.seed);
  const n = trainRecords.length;
  const truthTrain = gridsOf(trainSet.ys, trainSet.gridSize);
  const truthVal = valSet ? gridsOf(valSet.ys, valSet.gridSize) : null;
  const history: EpochStats[] = [];

  for (let epoch = 1; epoch <= cfg.epochs; epoch++) {
    const order = shuffled(n, rng);
    for (let start = 0; start < n; start += cfg.batchSize) {
      const batchIdx = order.slice(start, start + cfg.batchSize);
      const sel = tf.tensor1d(batchIdx, "int32");
      const bx = tf.gather(trainSet.xs, sel);
      const by = tf.gather(trainSet.ys, sel);
      optimizer.minimize(
        () => lossFn(by, model.apply(bx, { training: true }) as tf.Tensor) as tf.Scalar,
      );
      sel.dispose();
      bx.dispose();
      by.dispose();
    }
    const predTrain = predictionsOf(model, trainSet.xs, trainSet.gridSize);
    const stats: EpochStats = {
      epoch,
      trainMse: mse(predTrain, truthTrain),
      trainDsc: dice(predTrain, truthTrain),
      valMse: null,
      valDsc: null,
    };
    if (valSet && truthVal) {
      const predVal = predictionsOf(model, valSet.xs, valSet.gridSize);
      stats.valMse = mse(predVal, truthVal);
      stats.valDsc = dice(predVal, truthVal);
    }
    history.push(stats);
    onEpoch?.(stats);
    await tf.nextFrame();
  }
  trainSet.xs.dispose();
  trainSet.ys.dispose();
  valSet?.xs.dispose();
  valSet?.ys.dispose();
  return { model, history, gridSize: trainSet.gridSize };
}

export function historyCsv(history: EpochStats[]): string {
  const lines = ["epoch,train_mse,val_mse,train_dsc,val_dsc"];
  for (const h of history) {
    lines.push(
      [h.epoch, h.trainMse, h.valMse ?? "", h.trainDsc, h.valDsc ?? ""].join(","),
    );
  }
  return lines.join("\n") + "\n";
}

export async function saveModel(model: tf.LayersModel, dir: string): Promise<void> {
  fs.mkdirSync(dir, { recursive: true });
  await model.save(
    tf.io.withSaveHandler(async (artifacts) => {
      const weightData = artifacts.weightData as ArrayBuffer;
      fs.writeFileSync(path.join(dir, "weights.bin"), Buffer.from(weightData));
      fs.writeFileSync(
        path.join(dir, "model.json"),
        JSON.stringify({
          modelTopology: artifacts.modelTopology,
          weightSpecs: artifacts.weightSpecs,
        }),
      );
      return { modelArtifactsInfo: { dateSaved: new Date(), modelTopologyType: "JSON" } };
    }),
  );
}

export async function loadModel(dir: string): Promise<tf.LayersModel> {
  const meta = JSON.parse(fs.readFileSync(path.join(dir, "model.json"), "utf-8"));
  const weightData = fs.readFileSync(path.join(dir, "weights.bin"));
  return tf.loadLayersModel(
    tf.io.fromMemory({
      modelTopology: meta.modelTopology,
      weightSpecs: meta.weightSpecs,
      weightData: weightData.buffer.slice(
        weightData.byteOffset,
        weightData.byteOffset + weightData.byteLength,
      ),
    }),
  );
}
