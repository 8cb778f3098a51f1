/**
 * Feature-map export: stack a co-registered pair, reflect-pad to the
 * network's downsampling multiple, run the feature model, crop back, and
 * write a DNHG float32 raster the detection engine pools directly.
 */

import * as tf from '@tensorflow/tfjs';

import { Raster, makeRaster, readRaster, toUnitFloats, writeRaster } from './raster';
import { DOWNSAMPLE_FACTOR, Network, loadWeights } from './unet';

function padTo(value: number, multiple: number): number {
  return Math.ceil(value / multiple) * multiple;
}

export function extractFeatures(net: Network, t1: Raster, t2: Raster): Raster {
  if (t1.height !== t2.height || t1.width !== t2.width || t1.channels !== t2.channels) {
    throw new Error(
      `pair shapes differ: ${t1.height}x${t1.width}x${t1.channels} vs ` +
      `${t2.height}x${t2.width}x${t2.channels}`,
    );
  }
  if (2 * t1.channels !== net.config.inChannels) {
    throw new Error(
      `network expects ${net.config.inChannels} stacked channels, ` +
      `pair provides ${2 * t1.channels}`,
    );
  }
  const h = t1.height;
  const w = t1.width;
  const data = tf.tidy(() => {
    const a = tf.tensor3d(toUnitFloats(t1), [h, w, t1.channels]);
    const b = tf.tensor3d(toUnitFloats(t2), [h, w, t2.channels]);
    let x = tf.concat3d([a, b], 2);
    const padH = padTo(h, DOWNSAMPLE_FACTOR) - h;
    const padW = padTo(w, DOWNSAMPLE_FACTOR) - w;
    if (padH > 0 || padW > 0) {
      // reflect padding needs pad < dim; tiny inputs fall back to zeros
      if (padH < h && padW < w) {
        x = tf.mirrorPad(x, [[0, padH], [0, padW], [0, 0]], 'reflect');
      } else {
        x = tf.pad(x, [[0, padH], [0, padW], [0, 0]]);
      }
    }
    const batched = tf.expandDims(x, 0) as tf.Tensor4D;
    const full = net.features.predict(batched) as tf.Tensor4D;
    const cropped = tf.slice(full, [0, 0, 0, 0], [1, h, w, net.config.featureChannels]);
    return cropped.dataSync() as Float32Array;
  });
  return makeRaster(h, w, net.config.featureChannels, 'float32', Float32Array.from(data));
}

export function extractToFile(
  t1Path: string,
  t2Path: string,
  weightsPath: string,
  outPath: string,
): Raster {
  const net = loadWeights(weightsPath);
  const features = extractFeatures(net, readRaster(t1Path), readRaster(t2Path));
  writeRaster(features, outPath);
  return features;
}
