/**
 * Encoder/bottleneck/decoder feature extractor with skip connections.
 *
 * Four 2x downsampling steps and four mirrored upsampling steps; every
 * scale runs two 3x3 same-padded relu convolutions.  The last decoder
 * block is forced to `featureChannels` maps (128 by default): those
 * full-resolution activations are the exported pixel features, and a
 * 1x1 sigmoid convolution on top of them provides the change-probability
 * head used for pre-training.
 */

import * as tf from '@tensorflow/tfjs';

export const DOWNSAMPLE_FACTOR = 16; // 2^4

export interface ExtractorConfig {
  patchSize: number;
  featureChannels: number;
  baseChannels: number;
  inChannels: number;
  learningRate: number;
  momentum: number;
  weightDecay: number;
  augmentRotation: boolean;
  augmentFlip: boolean;
  seed: number;
}

export function defaultConfig(overrides: Partial<ExtractorConfig> = {}): ExtractorConfig {
  const cfg: ExtractorConfig = {
    patchSize: 112,
    featureChannels: 128,
    baseChannels: 16,
    inChannels: 2,
    learningRate: 0.001,
    momentum: 0.9,
    weightDecay: 0.0005,
    augmentRotation: true,
    augmentFlip: true,
    seed: 0,
    ...overrides,
  };
  if (cfg.patchSize % DOWNSAMPLE_FACTOR !== 0) {
    throw new Error(
      `patchSize ${cfg.patchSize} must be divisible by ${DOWNSAMPLE_FACTOR}`,
    );
  }
  return cfg;
}

export interface Network {
  /** Full-resolution feature maps (the exported representation). */
  features: tf.LayersModel;
  /** Features plus the 1x1 sigmoid head, for cross-entropy pre-training. */
  head: tf.LayersModel;
  config: ExtractorConfig;
}

export function buildNetwork(config: ExtractorConfig): Network {
  let seedCounter = config.seed;
  const conv = (x: tf.SymbolicTensor, filters: number, name: string) =>
    tf.layers
      .conv2d({
        filters,
        kernelSize: 3,
        padding: 'same',
        activation: 'relu',
        kernelInitializer: tf.initializers.glorotUniform({ seed: seedCounter++ }),
        name,
      })
      .apply(x) as tf.SymbolicTensor;

  const block = (x: tf.SymbolicTensor, filters: number, name: string) =>
    conv(conv(x, filters, `${name}_a`), filters, `${name}_b`);

  const input = tf.input({ shape: [null, null, config.inChannels] as unknown as number[] });
  const b = config.baseChannels;

  const enc1 = block(input, b, 'enc1');
  const enc2 = block(pool(enc1), 2 * b, 'enc2');
  const enc3 = block(pool(enc2), 4 * b, 'enc3');
  const enc4 = block(pool(enc3), 8 * b, 'enc4');
  const bottleneck = block(pool(enc4), 16 * b, 'bottleneck');

  const dec4 = block(merge(bottleneck, enc4), 8 * b, 'dec4');
  const dec3 = block(merge(dec4, enc3), 4 * b, 'dec3');
  const dec2 = block(merge(dec3, enc2), 2 * b, 'dec2');
  const features = block(merge(dec2, enc1), config.featureChannels, 'features');

  const headOut = tf.layers
    .conv2d({
      filters: 1,
      kernelSize: 1,
      activation: 'sigmoid',
      kernelInitializer: tf.initializers.glorotUniform({ seed: seedCounter++ }),
      name: 'head',
    })
    .apply(features) as tf.SymbolicTensor;

  return {
    features: tf.model({ inputs: input, outputs: features, name: 'extractor' }),
    head: tf.model({ inputs: input, outputs: headOut, name: 'extractor_head' }),
    config,
  };
}

function pool(x: tf.SymbolicTensor): tf.SymbolicTensor {
  return tf.layers.maxPooling2d({ poolSize: 2 }).apply(x) as tf.SymbolicTensor;
}

function merge(below: tf.SymbolicTensor, skip: tf.SymbolicTensor): tf.SymbolicTensor {
  const up = tf.layers.upSampling2d({ size: [2, 2] }).apply(below) as tf.SymbolicTensor;
  return tf.layers.concatenate().apply([up, skip]) as tf.SymbolicTensor;
}

// ---------------------------------------------------------------------------
// Weight (de)serialization: JSON with base64 float32 payloads
// ---------------------------------------------------------------------------

interface WeightEntry {
  name: string;
  shape: number[];
  data: string;
}

export function saveWeights(net: Network, path: string): void {
  const fs = require('fs') as typeof import('fs');
  const entries: WeightEntry[] = net.head.weights.map((w, i) => {
    const values = net.head.getWeights()[i].dataSync() as Float32Array;
    return {
      name: w.name,
      shape: w.shape as number[],
      data: Buffer.from(values.buffer, values.byteOffset, values.byteLength).toString('base64'),
    };
  });
  fs.writeFileSync(path, JSON.stringify({ config: net.config, weights: entries }, null, 1));
}

export function loadWeights(path: string): Network {
  const fs = require('fs') as typeof import('fs');
  const payload = JSON.parse(fs.readFileSync(path, 'utf8')) as {
    config: ExtractorConfig;
    weights: WeightEntry[];
  };
  const net = buildNetwork(defaultConfig(payload.config));
  const tensors = payload.weights.map((entry) => {
    const buf = Buffer.from(entry.data, 'base64');
    const values = new Float32Array(buf.buffer, buf.byteOffset, buf.byteLength / 4);
    return tf.tensor(Float32Array.from(values), entry.shape);
  });
  net.head.setWeights(tensors);
  tensors.forEach((t) => t.dispose());
  return net;
}
