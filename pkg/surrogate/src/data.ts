/**
 * Dataset assembly: turn sweep records into training tensors.
 *
 * Each record's scalar parameters become three constant-valued volumes
 * (objective id 1|2, volume fraction, filter radius), stacked as channels;
 * the target is the optimized density grid. Values are fed raw.
 */
import * as path from "node:path";

import * as tf from "@tensorflow/tfjs";

import { DensityGrid, Manifest, readDgrid, readManifest, RecordMeta } from "./dgrid";

export interface RecordInput {
  objectiveId: number;
  vf: number;
  rmin: number;
}

export interface LoadedRecord extends RecordInput {
  grid: DensityGrid;
  split?: string;
}

export function encodeInputs(meta: RecordInput, gridSize: number): Float32Array {
  if (meta.objectiveId !== 1 && meta.objectiveId !== 2) {
    throw new Error(`objective id must be 1 or 2, got ${meta.objectiveId}`);
  }
  if (!(meta.vf > 0 && meta.vf < 1)) throw new Error(`volume fraction out of range: ${meta.vf}`);
  if (!(meta.rmin >= 1)) throw new Error(`filter radius out of range: ${meta.rmin}`);
  const n = gridSize ** 3;
  const out = new Float32Array(3 * n);
  // channel-last layout [x, y, z, c]
  for (let v = 0; v < n; v++) {
    out[3 * v] = meta.objectiveId;
    out[3 * v + 1] = meta.vf;
    out[3 * v + 2] = meta.rmin;
  }
  return out;
}

export function loadRecords(datasetDir: string, split?: string): LoadedRecord[] {
  const manifest: Manifest = readManifest(path.join(datasetDir, "manifest.json"));
  const out: LoadedRecord[] = [];
  for (const rec of manifest.records) {
    if (!rec.converged || !rec.file) continue;
    if (split && rec.split !== split) continue;
    out.push({
      objectiveId: rec.objective_id,
      vf: rec.vf,
      rmin: rec.rmin,
      split: rec.split,
      grid: readDgrid(path.join(datasetDir, rec.file)),
    });
  }
  return out;
}

export interface TensorDataset {
  xs: tf.Tensor5D;
  ys: tf.Tensor5D;
  gridSize: number;
}

export function toTensors(records: LoadedRecord[]): TensorDataset {
  if (records.length === 0) throw new Error("no records to convert");
  const s = records[0].grid.resolution[0];
  for (const r of records) {
    const [ex, ey, ez] = r.grid.resolution;
    if (ex !== s || ey !== s || ez !== s) {
      throw new Error(`expected uniform cubic grids of edge ${s}, got ${r.grid.resolution}`);
    }
  }
  const n = s ** 3;
  const xsData = new Float32Array(records.length * 3 * n);
  const ysData = new Float32Array(records.length * n);
  records.forEach((rec, i) => {
    xsData.set(encodeInputs(rec, s), i * 3 * n);
    // dgrid data is x-fastest; tensor layout is [x][y][z][c] with z fastest,
    // so transpose the flat order on the way in
    const g = rec.grid.data;
    for (let z = 0; z < s; z++) {
      for (let y = 0; y < s; y++) {
        for (let x = 0; x < s; x++) {
          ysData[i * n + (x * s + y) * s + z] = g[x + s * (y + s * z)];
        }
      }
    }
  });
  const xs = tf.tensor5d(xsData, [records.length, s, s, s, 3]);
  const ys = tf.tensor5d(ysData, [records.length, s, s, s, 1]);
  return { xs, ys, gridSize: s };
}

/** Convert one model output volume back to an x-fastest dgrid. */
export function volumeToGrid(
  volume: Float32Array,
  gridSize: number,
  cellLengths: [number, number, number] = [1, 1, 1],
): DensityGrid {
  const s = gridSize;
  const n = s ** 3;
  if (volume.length !== n) throw new Error(`expected ${n} voxels, got ${volume.length}`);
  const data = new Float32Array(n);
  for (let z = 0; z < s; z++) {
    for (let y = 0; y < s; y++) {
      for (let x = 0; x < s; x++) {
        let v = volume[(x * s + y) * s + z];
        if (v < 0) v = 0;
        if (v > 1) v = 1;
        data[x + s * (y + s * z)] = v;
      }
    }
  }
  return { resolution: [s, s, s], cellLengths, data };
}
