/**
 * 3D residual U-Net mapping three constant-valued parameter channels
 * (objective id, volume fraction, filter radius) to a voxel density grid.
 *
 * Encoder: four residual blocks, the first at full resolution and the rest
 * downsampling by stride-2 convolution; a bridge block at the coarsest
 * scale; decoder: four blocks of transpose-conv upsampling, skip
 * concatenation with the matching encoder feature, and a residual block.
 * Head: 1x1x1 convolution with sigmoid, keeping densities in [0, 1].
 * Residual block = (BN, ReLU, Conv) twice plus a projected shortcut.
 */
import * as tf from "@tensorflow/tfjs";

/**
 * Nearest-neighbor 2x upsampling for rank-5 volumes, built from reshape+tile
 * (which both have gradients; tfjs lacks a trainable 3D transpose conv).
 */
class NearestUpsample3d extends tf.layers.Layer {
  static className = "NearestUpsample3d";

  computeOutputShape(inputShape: tf.Shape | tf.Shape[]): tf.Shape {
    const [b, x, y, z, c] = inputShape as tf.Shape;
    return [b, (x as number) * 2, (y as number) * 2, (z as number) * 2, c];
  }

  call(inputs: tf.Tensor | tf.Tensor[]): tf.Tensor {
    return tf.tidy(() => {
      let t = Array.isArray(inputs) ? inputs[0] : inputs;
      const [, x, y, z, c] = t.shape as number[];
      // one axis at a time, keeping every tile at rank 4 (its gradient cap)
      t = t
        .reshape([-1, x, 1, y * z * c])
        .tile([1, 1, 2, 1])
        .reshape([-1, y, 1, z * c])
        .tile([1, 1, 2, 1])
        .reshape([-1, z, 1, c])
        .tile([1, 1, 2, 1])
        .reshape([-1, 2 * x, 2 * y, 2 * z, c]);
      return t;
    });
  }

  getConfig(): tf.serialization.ConfigDict {
    return super.getConfig();
  }
}
tf.serialization.registerClass(NearestUpsample3d);

export interface ModelConfig {
  /** cube edge length of the input/output grids */
  gridSize: number;
  /** channel width of the first encoder block; doubles per downsampling */
  baseWidth: number;
  inputChannels: number;
}

export const DEFAULT_MODEL: ModelConfig = { gridSize: 32, baseWidth: 16, inputChannels: 3 };

/**
 * Channel-wise batch norm for rank-5 volumes. The stock layer only handles
 * rank <= 4, and per-channel statistics are layout-agnostic, so the volume is
 * flattened to rank 4 around it.
 */
function batchNorm3d(x: tf.SymbolicTensor, size: number, channels: number, name: string): tf.SymbolicTensor {
  let y = tf.layers
    .reshape({ targetShape: [size * size, size, channels], name: `${name}_fold` })
    .apply(x) as tf.SymbolicTensor;
  y = tf.layers.batchNormalization({ axis: -1, name }).apply(y) as tf.SymbolicTensor;
  return tf.layers
    .reshape({ targetShape: [size, size, size, channels], name: `${name}_unfold` })
    .apply(y) as tf.SymbolicTensor;
}

function residualBlock(
  input: tf.SymbolicTensor,
  filters: number,
  stride: number,
  inSize: number,
  name: string,
): tf.SymbolicTensor {
  const inChannels = input.shape[input.shape.length - 1] as number;
  const outSize = stride === 1 ? inSize : inSize / stride;
  let x = batchNorm3d(input, inSize, inChannels, `${name}_bn1`);
  x = tf.layers.reLU({ name: `${name}_relu1` }).apply(x) as tf.SymbolicTensor;
  x = tf.layers
    .conv3d({ filters, kernelSize: 3, strides: stride, padding: "same", name: `${name}_conv1` })
    .apply(x) as tf.SymbolicTensor;
  x = batchNorm3d(x, outSize, filters, `${name}_bn2`);
  x = tf.layers.reLU({ name: `${name}_relu2` }).apply(x) as tf.SymbolicTensor;
  x = tf.layers
    .conv3d({ filters, kernelSize: 3, strides: 1, padding: "same", name: `${name}_conv2` })
    .apply(x) as tf.SymbolicTensor;
  const shortcut = tf.layers
    .conv3d({ filters, kernelSize: 1, strides: stride, padding: "same", name: `${name}_proj` })
    .apply(input) as tf.SymbolicTensor;
  return tf.layers.add({ name: `${name}_add` }).apply([x, shortcut]) as tf.SymbolicTensor;
}

export function buildResUNet(config: ModelConfig = DEFAULT_MODEL): tf.LayersModel {
  const { gridSize: s, baseWidth: w, inputChannels } = config;
  if (s % 16 !== 0) {
    throw new Error(`grid size ${s} must be a multiple of 16 (four stride-2 stages)`);
  }
  const input = tf.input({ shape: [s, s, s, inputChannels], name: "params" });

  const e1 = residualBlock(input, w, 1, s, "enc1"); // s
  const e2 = residualBlock(e1, 2 * w, 2, s, "enc2"); // s/2
  const e3 = residualBlock(e2, 4 * w, 2, s / 2, "enc3"); // s/4
  const e4 = residualBlock(e3, 8 * w, 2, s / 4, "enc4"); // s/8
  const bridge = residualBlock(e4, 16 * w, 2, s / 8, "bridge"); // s/16

  const up = (
    x: tf.SymbolicTensor,
    skip: tf.SymbolicTensor,
    filters: number,
    outSize: number,
    name: string,
  ) => {
    const u = new NearestUpsample3d({ name: `${name}_up` }).apply(x) as tf.SymbolicTensor;
    const cat = tf.layers.concatenate({ name: `${name}_cat` }).apply([u, skip]) as tf.SymbolicTensor;
    return residualBlock(cat, filters, 1, outSize, name);
  };

  const d4 = up(bridge, e4, 8 * w, s / 8, "dec4"); // s/8
  const d3 = up(d4, e3, 4 * w, s / 4, "dec3"); // s/4
  const d2 = up(d3, e2, 2 * w, s / 2, "dec2"); // s/2
  const d1 = up(d2, e1, w, s, "dec1"); // s

  const head = tf.layers
    .conv3d({ filters: 1, kernelSize: 1, activation: "sigmoid", name: "density" })
    .apply(d1) as tf.SymbolicTensor;

  return tf.model({ inputs: input, outputs: head, name: "resunet3d" });
}
