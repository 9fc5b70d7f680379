import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

import { describe, expect, it } from "vitest";

import { main } from "../src/cli";
import { DensityGrid, readDgrid, writeDgrid } from "../src/dgrid";

function writeDataset(dir: string, edge: number, count: number): void {
  fs.mkdirSync(dir, { recursive: true });
  const records = [];
  for (let i = 0; i < count; i++) {
    const n = edge ** 3;
    const data = new Float32Array(n);
    for (let v = 0; v < n; v++) data[v] = (v + i) % 3 === 0 ? 1 : 0;
    const grid: DensityGrid = { resolution: [edge, edge, edge], cellLengths: [1, 1, 1], data };
    const stem = `rec_obj1_vf0.3${i}00_rmin1.5000`;
    writeDgrid(path.join(dir, `${stem}.dgrid`), grid);
    fs.writeFileSync(
      path.join(dir, `${stem}.json`),
      JSON.stringify({ objective_id: 1, vf: 0.3 + i / 100, rmin: 1.5, converged: true }),
    );
    records.push({
      objective_id: 1,
      vf: 0.3 + i / 100,
      rmin: 1.5,
      converged: true,
      file: `${stem}.dgrid`,
      sidecar: `${stem}.json`,
      split: i === count - 1 ? "test" : "train",
    });
  }
  fs.writeFileSync(
    path.join(dir, "manifest.json"),
    JSON.stringify({ format_version: 1, resolution: [edge, edge, edge], records }),
  );
}

describe("surrogate cli", () => {
  it("train, predict, evaluate round trip", async () => {
    const base = fs.mkdtempSync(path.join(os.tmpdir(), "sgcli-"));
    const dataset = path.join(base, "ds");
    const modelDir = path.join(base, "model");
    writeDataset(dataset, 16, 3);
    const trainCode = await main([
      "train", "--dataset", dataset, "--out", modelDir,
      "--epochs", "2", "--batch", "2", "--width", "2", "--seed", "1",
    ]);
    expect(trainCode).toBe(0);
    expect(fs.existsSync(path.join(modelDir, "model.json"))).toBe(true);
    expect(fs.existsSync(path.join(modelDir, "weights.bin"))).toBe(true);
    const history = fs.readFileSync(path.join(modelDir, "history.csv"), "utf-8");
    expect(history.split("\n")[0]).toBe("epoch,train_mse,val_mse,train_dsc,val_dsc");
    expect(history.trim().split("\n").length).toBe(3);

    const out = path.join(base, "pred.dgrid");
    const predCode = await main([
      "predict", "--model", modelDir, "--objective", "1", "--vf", "0.35",
      "--rmin", "1.5", "--grid-size", "16", "--out", out,
    ]);
    expect(predCode).toBe(0);
    const grid = readDgrid(out);
    expect(grid.resolution).toEqual([16, 16, 16]);
    for (const v of grid.data) {
      expect(v).toBeGreaterThanOrEqual(0);
      expect(v).toBeLessThanOrEqual(1);
    }

    const evalCode = await main(["evaluate", "--model", modelDir, "--dataset", dataset, "--split", "test"]);
    expect(evalCode).toBe(0);
  }, 600_000);

  it("reports usage errors with exit code 2", async () => {
    expect(await main(["bogus"])).toBe(2);
    expect(await main(["predict", "--model"])).toBe(2);
  });
});
