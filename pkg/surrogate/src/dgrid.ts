/**
 * Binary density-grid format shared with the optimization engine.
 *
 * Layout: magic "DGRD" (4 bytes), format version u32 LE, resolution
 * e_x,e_y,e_z as u32 LE, cell lengths L_x,L_y,L_z as f64 LE, then
 * e_x*e_y*e_z densities as f32 LE with x varying fastest.
 */
import * as fs from "node:fs";

export const DGRID_MAGIC = "DGRD";
export const DGRID_VERSION = 1;
const HEADER_BYTES = 4 + 4 + 12 + 24;

export interface DensityGrid {
  resolution: [number, number, number];
  cellLengths: [number, number, number];
  /** x-fastest voxel densities in [0, 1] */
  data: Float32Array;
}

export function numVoxels(grid: DensityGrid): number {
  const [ex, ey, ez] = grid.resolution;
  return ex * ey * ez;
}

export function relativeDensity(grid: DensityGrid): number {
  let sum = 0;
  for (let i = 0; i < grid.data.length; i++) sum += grid.data[i];
  return sum / grid.data.length;
}

export function encodeDgrid(grid: DensityGrid): Buffer {
  const n = numVoxels(grid);
  if (grid.data.length !== n) {
    throw new Error(`grid data length ${grid.data.length} != ${n}`);
  }
  const buf = Buffer.alloc(HEADER_BYTES + 4 * n);
  buf.write(DGRID_MAGIC, 0, "ascii");
  buf.writeUInt32LE(DGRID_VERSION, 4);
  buf.writeUInt32LE(grid.resolution[0], 8);
  buf.writeUInt32LE(grid.resolution[1], 12);
  buf.writeUInt32LE(grid.resolution[2], 16);
  buf.writeDoubleLE(grid.cellLengths[0], 20);
  buf.writeDoubleLE(grid.cellLengths[1], 28);
  buf.writeDoubleLE(grid.cellLengths[2], 36);
  for (let i = 0; i < n; i++) buf.writeFloatLE(grid.data[i], HEADER_BYTES + 4 * i);
  return buf;
}

export function decodeDgrid(buf: Buffer): DensityGrid {
  if (buf.length < HEADER_BYTES) throw new Error("dgrid: truncated header");
  if (buf.toString("ascii", 0, 4) !== DGRID_MAGIC) throw new Error("dgrid: bad magic");
  const version = buf.readUInt32LE(4);
  if (version !== DGRID_VERSION) throw new Error(`dgrid: unsupported version ${version}`);
  const resolution: [number, number, number] = [
    buf.readUInt32LE(8),
    buf.readUInt32LE(12),
    buf.readUInt32LE(16),
  ];
  const cellLengths: [number, number, number] = [
    buf.readDoubleLE(20),
    buf.readDoubleLE(28),
    buf.readDoubleLE(36),
  ];
  const n = resolution[0] * resolution[1] * resolution[2];
  if (buf.length !== HEADER_BYTES + 4 * n) {
    throw new Error(`dgrid: expected ${HEADER_BYTES + 4 * n} bytes, got ${buf.length}`);
  }
  const data = new Float32Array(n);
  for (let i = 0; i < n; i++) data[i] = buf.readFloatLE(HEADER_BYTES + 4 * i);
  return { resolution, cellLengths, data };
}

export function readDgrid(path: string): DensityGrid {
  return decodeDgrid(fs.readFileSync(path));
}

export function writeDgrid(path: string, grid: DensityGrid): void {
  fs.writeFileSync(path, encodeDgrid(grid));
}

/** Sidecar record metadata written next to each dgrid by the sweep driver. */
export interface RecordMeta {
  objective_id: number;
  vf: number;
  rmin: number;
  converged: boolean;
  file?: string;
  sidecar?: string;
  split?: string;
}

export interface Manifest {
  format_version: number;
  resolution: number[];
  records: RecordMeta[];
  [key: string]: unknown;
}

export function readManifest(path: string): Manifest {
  return JSON.parse(fs.readFileSync(path, "utf-8")) as Manifest;
}
