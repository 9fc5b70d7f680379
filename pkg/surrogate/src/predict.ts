/** Inference: parameters in, density grid out. */
import * as tf from "@tensorflow/tfjs";

import { encodeInputs, RecordInput, volumeToGrid } from "./data";
import { DensityGrid } from "./dgrid";

export function predictGrid(
  model: tf.LayersModel,
  meta: RecordInput,
  gridSize: number,
): DensityGrid {
  const xs = tf.tensor5d(encodeInputs(meta, gridSize), [1, gridSize, gridSize, gridSize, 3]);
  const out = model.predict(xs) as tf.Tensor;
  const flat = out.dataSync() as Float32Array;
  xs.dispose();
  out.dispose();
  return volumeToGrid(flat.slice(0, gridSize ** 3), gridSize);
}
