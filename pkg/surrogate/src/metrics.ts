/**
 * Evaluation metrics between predicted and reference voxel grids.
 *
 * Definitions mirror the optimization engine's evaluator exactly: MSE is the
 * mean squared density error over datapoints and voxels; DSC is the mean Dice
 * coefficient of the solid sets after binarizing both grids at a threshold
 * (empty-vs-empty counts as 1); volume deviation is the absolute difference
 * in mean density, in percent.
 */
import { DensityGrid, relativeDensity } from "./dgrid";

function checkPairs(pred: DensityGrid[], truth: DensityGrid[]): void {
  if (pred.length !== truth.length || pred.length === 0) {
    throw new Error(`mismatched grid lists: ${pred.length} vs ${truth.length}`);
  }
  for (let i = 0; i < pred.length; i++) {
    const a = pred[i].resolution;
    const b = truth[i].resolution;
    if (a[0] !== b[0] || a[1] !== b[1] || a[2] !== b[2]) {
      throw new Error(`resolution mismatch at record ${i}`);
    }
  }
}

export function mse(pred: DensityGrid[], truth: DensityGrid[]): number {
  checkPairs(pred, truth);
  let total = 0;
  for (let i = 0; i < pred.length; i++) {
    const p = pred[i].data;
    const t = truth[i].data;
    let sum = 0;
    for (let v = 0; v < p.length; v++) {
      const d = p[v] - t[v];
      sum += d * d;
    }
    total += sum / p.length;
  }
  return total / pred.length;
}

export function dice(pred: DensityGrid[], truth: DensityGrid[], threshold = 0.5): number {
  checkPairs(pred, truth);
  let total = 0;
  for (let i = 0; i < pred.length; i++) {
    const p = pred[i].data;
    const t = truth[i].data;
    let np = 0;
    let nt = 0;
    let inter = 0;
    for (let v = 0; v < p.length; v++) {
      const a = p[v] >= threshold;
      const b = t[v] >= threshold;
      if (a) np++;
      if (b) nt++;
      if (a && b) inter++;
    }
    total += np + nt === 0 ? 1 : (2 * inter) / (np + nt);
  }
  return total / pred.length;
}

export interface VolumeDeviation {
  meanPct: number;
  maxPct: number;
  argmax: number;
}

export function volumeDeviation(pred: DensityGrid[], truth: DensityGrid[]): VolumeDeviation {
  checkPairs(pred, truth);
  let sum = 0;
  let max = -1;
  let argmax = 0;
  for (let i = 0; i < pred.length; i++) {
    const dev = Math.abs(relativeDensity(pred[i]) - relativeDensity(truth[i])) * 100;
    sum += dev;
    if (dev > max) {
      max = dev;
      argmax = i;
    }
  }
  return { meanPct: sum / pred.length, maxPct: max, argmax };
}

export interface EvalReport {
  mse: number;
  dsc: number;
  volume_deviation_mean_pct: number;
  volume_deviation_max_pct: number;
}

export function evaluate(pred: DensityGrid[], truth: DensityGrid[], threshold = 0.5): EvalReport {
  const vd = volumeDeviation(pred, truth);
  return {
    mse: mse(pred, truth),
    dsc: dice(pred, truth, threshold),
    volume_deviation_mean_pct: vd.meanPct,
    volume_deviation_max_pct: vd.maxPct,
  };
}
