/**
 * Patch dataset: (t1, t2, label) triples on disk, channel-concatenated
 * inputs in memory, and seeded rotation/flip augmentation.
 */

import * as fs from 'fs';
import * as path from 'path';
import * as tf from '@tensorflow/tfjs';

import { Rng, randInt } from './prng';
import { Raster, readRaster, toUnitFloats } from './raster';

export interface PatchTriple {
  /** patchSize x patchSize x (2 * image channels), values in [0, 1] */
  input: tf.Tensor3D;
  /** patchSize x patchSize x 1, values in {0, 1} */
  label: tf.Tensor3D;
}

function stackPair(t1: Raster, t2: Raster): tf.Tensor3D {
  if (t1.height !== t2.height || t1.width !== t2.width || t1.channels !== t2.channels) {
    throw new Error('patch pair shapes differ');
  }
  const a = tf.tensor3d(toUnitFloats(t1), [t1.height, t1.width, t1.channels]);
  const b = tf.tensor3d(toUnitFloats(t2), [t2.height, t2.width, t2.channels]);
  const stacked = tf.concat3d([a, b], 2);
  a.dispose();
  b.dispose();
  return stacked;
}

export function loadTriple(t1Path: string, t2Path: string, labelPath: string): PatchTriple {
  const t1 = readRaster(t1Path);
  const t2 = readRaster(t2Path);
  const label = readRaster(labelPath);
  if (label.height !== t1.height || label.width !== t1.width || label.channels !== 1) {
    throw new Error(`label shape mismatch for ${labelPath}`);
  }
  const values = new Float32Array(label.data.length);
  for (let i = 0; i < values.length; i++) values[i] = label.data[i] >= 128 ? 1 : 0;
  return {
    input: stackPair(t1, t2),
    label: tf.tensor3d(values, [label.height, label.width, 1]),
  };
}

/** Find stem_{t1,t2,label}.{dnhg,pgm} triples under a directory. */
export function loadPatchDir(dir: string): PatchTriple[] {
  const files = fs.readdirSync(dir).sort();
  const stems = new Set<string>();
  for (const f of files) {
    const m = f.match(/^(.*)_t1\.(dnhg|pgm)$/);
    if (m) stems.add(m[1]);
  }
  const find = (stem: string, part: string): string => {
    for (const ext of ['dnhg', 'pgm']) {
      const candidate = path.join(dir, `${stem}_${part}.${ext}`);
      if (fs.existsSync(candidate)) return candidate;
    }
    throw new Error(`missing ${stem}_${part} next to ${stem}_t1 in ${dir}`);
  };
  const triples: PatchTriple[] = [];
  for (const stem of Array.from(stems).sort()) {
    triples.push(loadTriple(find(stem, 't1'), find(stem, 't2'), find(stem, 'label')));
  }
  if (triples.length === 0) throw new Error(`no patch triples found in ${dir}`);
  return triples;
}

function rot90(x: tf.Tensor3D): tf.Tensor3D {
  return tf.reverse3d(tf.transpose(x, [1, 0, 2]), 1);
}

/** Same random rotation/flips applied to the input and its label. */
export function augment(
  triple: PatchTriple,
  rng: Rng,
  rotation: boolean,
  flip: boolean,
): PatchTriple {
  return tf.tidy(() => {
    let input = triple.input;
    let label = triple.label;
    if (rotation) {
      const k = randInt(rng, 4);
      for (let i = 0; i < k; i++) {
        input = rot90(input);
        label = rot90(label);
      }
    }
    if (flip) {
      if (rng() < 0.5) {
        input = tf.reverse3d(input, 0);
        label = tf.reverse3d(label, 0);
      }
      if (rng() < 0.5) {
        input = tf.reverse3d(input, 1);
        label = tf.reverse3d(label, 1);
      }
    }
    return { input: input.clone(), label: label.clone() };
  });
}
