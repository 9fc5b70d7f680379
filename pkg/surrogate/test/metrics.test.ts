import { execFileSync } from "node:child_process";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

import { describe, expect, it } from "vitest";

import { DensityGrid, writeDgrid } from "../src/dgrid";
import { dice, evaluate, mse, volumeDeviation } from "../src/metrics";

function grid(edge: number, fill: (i: number) => number): DensityGrid {
  const n = edge ** 3;
  const data = new Float32Array(n);
  for (let i = 0; i < n; i++) data[i] = fill(i);
  return { resolution: [edge, edge, edge], cellLengths: [1, 1, 1], data };
}

describe("metric definitions", () => {
  it("mse identity and extremes", () => {
    const a = grid(4, (i) => i % 2);
    expect(mse([a], [a])).toBe(0);
    const ones = grid(4, () => 1);
    const zeros = grid(4, () => 0);
    expect(mse([ones], [zeros])).toBe(1);
  });

  it("mse single flipped voxel of 32^3 is exactly 1/32768", () => {
    const truth = grid(32, () => 0);
    const pred = grid(32, (i) => (i === 12345 ? 1 : 0));
    expect(mse([pred], [truth])).toBe(1 / 32768);
  });

  it("dice identity, disjoint, half overlap", () => {
    const a = grid(10, (i) => (i < 200 ? 1 : 0));
    const sub = grid(10, (i) => (i < 100 ? 1 : 0));
    const other = grid(10, (i) => (i >= 200 && i < 400 ? 1 : 0));
    expect(dice([a], [a])).toBe(1);
    expect(dice([other], [a])).toBe(0);
    expect(dice([sub], [a])).toBeCloseTo(2 / 3, 15);
  });

  it("dice of empty sets is one", () => {
    const z = grid(4, () => 0);
    expect(dice([z], [z])).toBe(1);
  });

  it("volume deviation mean/max", () => {
    const t = grid(4, () => 0.5);
    const p1 = grid(4, () => 0.5);
    const p2 = grid(4, () => 0.52);
    const vd = volumeDeviation([p1, p2], [t, t]);
    // inputs are f32-quantized, so tolerances sit at f32 resolution scaled by 100
    expect(vd.meanPct).toBeCloseTo(1.0, 4);
    expect(vd.maxPct).toBeCloseTo(2.0, 4);
    expect(vd.argmax).toBe(1);
  });

  it("rejects mismatched shapes", () => {
    expect(() => mse([grid(4, () => 0)], [grid(5, () => 0)])).toThrow(/mismatch/);
    expect(() => mse([], [])).toThrow(/mismatch/);
  });
});

describe("parity with the optimization engine evaluator", () => {
  function writeRecordDir(dir: string, grids: DensityGrid[]): void {
    fs.mkdirSync(dir, { recursive: true });
    const records = grids.map((g, i) => {
      const stem = `rec_obj1_vf0.3000_rmin1.${i}000`;
      writeDgrid(path.join(dir, `${stem}.dgrid`), g);
      fs.writeFileSync(
        path.join(dir, `${stem}.json`),
        JSON.stringify({
          objective_id: 1, vf: 0.3, rmin: 1 + i / 10, objective_value: 1,
          achieved_volume: 0.3, converged: true, iterations: 1, trace: [],
        }),
      );
      return {
        objective_id: 1, vf: 0.3, rmin: 1 + i / 10, status: "ok", converged: true,
        objective_value: 1, achieved_volume: 0.3, iterations: 1,
        file: `${stem}.dgrid`, sidecar: `${stem}.json`,
      };
    });
    fs.writeFileSync(
      path.join(dir, "manifest.json"),
      JSON.stringify({
        format_version: 1,
        resolution: grids[0].resolution,
        records_per_objective: { "1": grids.length },
        converged: grids.length, discarded: 0, errors: 0, records,
      }),
    );
  }

  it("agrees with cmd evaluate to 1e-9 on five shared pairs", () => {
    const base = fs.mkdtempSync(path.join(os.tmpdir(), "parity-"));
    let state = 77;
    const rand = () => {
      state = (1664525 * state + 1013904223) >>> 0;
      return state / 2 ** 32;
    };
    const preds: DensityGrid[] = [];
    const truths: DensityGrid[] = [];
    for (let k = 0; k < 5; k++) {
      preds.push(grid(8, () => rand()));
      truths.push(grid(8, () => (rand() > 0.5 ? 1 : 0)));
    }
    writeRecordDir(path.join(base, "pred"), preds);
    writeRecordDir(path.join(base, "truth"), truths);
    const stdout = execFileSync(
      "python3",
      [
        "-m", "gyrox.cli", "evaluate",
        "--pred-dir", path.join(base, "pred"),
        "--truth-dir", path.join(base, "truth"),
      ],
      { cwd: path.join(__dirname, "..", ".."), encoding: "utf-8" },
    );
    const engine = JSON.parse(stdout);
    const ours = evaluate(preds, truths);
    expect(Math.abs(engine.mse - ours.mse)).toBeLessThan(1e-9);
    expect(Math.abs(engine.dsc - ours.dsc)).toBeLessThan(1e-9);
    expect(
      Math.abs(engine.volume_deviation_mean_pct - ours.volume_deviation_mean_pct),
    ).toBeLessThan(1e-9);
    expect(
      Math.abs(engine.volume_deviation_max_pct - ours.volume_deviation_max_pct),
    ).toBeLessThan(1e-9);
  });
});
