/**
 * Synthetic training patches: blocky base values, one re-valued rectangle
 * per patch as the change, independent noise on each epoch.  Written as
 * DNHG uint8 triples (stem_t1 / stem_t2 / stem_label).
 */

import * as path from 'path';
import * as fs from 'fs';

import { Rng, mulberry32, randInt } from './prng';
import { makeRaster, writeRaster } from './raster';

function blockyBase(size: number, rng: Rng): Float32Array {
  const grid = 4;
  const cell = Math.ceil(size / grid);
  const values: number[] = [];
  for (let i = 0; i < grid * grid; i++) values.push(0.1 + 0.8 * rng());
  const out = new Float32Array(size * size);
  for (let y = 0; y < size; y++) {
    for (let x = 0; x < size; x++) {
      const gy = Math.floor(y / cell);
      const gx = Math.floor(x / cell);
      out[y * size + x] = values[gy * grid + gx];
    }
  }
  return out;
}

function gaussian(rng: Rng): number {
  // Box-Muller
  const u = Math.max(rng(), 1e-12);
  const v = rng();
  return Math.sqrt(-2 * Math.log(u)) * Math.cos(2 * Math.PI * v);
}

function quantize(values: Float32Array): Uint8Array {
  const out = new Uint8Array(values.length);
  for (let i = 0; i < values.length; i++) {
    out[i] = Math.round(Math.min(1, Math.max(0, values[i])) * 255);
  }
  return out;
}

export function makePatches(
  dir: string,
  count: number,
  size: number,
  noiseSigma: number,
  seed: number,
): void {
  fs.mkdirSync(dir, { recursive: true });
  const rng = mulberry32(seed);
  for (let p = 0; p < count; p++) {
    const base = blockyBase(size, rng);
    const label = new Uint8Array(size * size);
    const rectH = Math.max(4, randInt(rng, size >> 2) + (size >> 3));
    const rectW = Math.max(4, randInt(rng, size >> 2) + (size >> 3));
    const y0 = randInt(rng, size - rectH + 1);
    const x0 = randInt(rng, size - rectW + 1);
    const base2 = Float32Array.from(base);
    for (let y = y0; y < y0 + rectH; y++) {
      for (let x = x0; x < x0 + rectW; x++) {
        base2[y * size + x] = (base2[y * size + x] + 0.5) % 1.0;
        label[y * size + x] = 255;
      }
    }
    const t1 = new Float32Array(size * size);
    const t2 = new Float32Array(size * size);
    for (let i = 0; i < size * size; i++) {
      t1[i] = base[i] + noiseSigma * gaussian(rng);
      t2[i] = base2[i] + noiseSigma * gaussian(rng);
    }
    const stem = path.join(dir, `patch${String(p).padStart(2, '0')}`);
    writeRaster(makeRaster(size, size, 1, 'uint8', quantize(t1)), `${stem}_t1.dnhg`);
    writeRaster(makeRaster(size, size, 1, 'uint8', quantize(t2)), `${stem}_t2.dnhg`);
    writeRaster(makeRaster(size, size, 1, 'uint8', label), `${stem}_label.dnhg`);
  }
}
