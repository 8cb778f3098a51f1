import * as fs from 'fs';
import * as os from 'os';
import * as path from 'path';

import { describe, expect, it } from 'vitest';

import { extractFeatures, extractToFile } from '../src/extract';
import { mulberry32 } from '../src/prng';
import { makeRaster, readRaster, writeRaster } from '../src/raster';
import { buildNetwork, defaultConfig, loadWeights, saveWeights } from '../src/unet';

function randomPair(dir: string, h: number, w: number, seed: number): [string, string] {
  const rng = mulberry32(seed);
  const paths: string[] = [];
  for (const name of ['t1.dnhg', 't2.dnhg']) {
    const data = new Uint8Array(h * w);
    for (let i = 0; i < data.length; i++) data[i] = Math.floor(rng() * 256);
    const file = path.join(dir, name);
    writeRaster(makeRaster(h, w, 1, 'uint8', data), file);
    paths.push(file);
  }
  return [paths[0], paths[1]];
}

const TINY = defaultConfig({
  patchSize: 32,
  baseChannels: 2,
  featureChannels: 128,
  inChannels: 2,
  seed: 7,
});

describe('feature extraction', () => {
  it('emits a full-resolution raster with 128 channels on a 64x64 pair', () => {
    const dir = fs.mkdtempSync(path.join(os.tmpdir(), 'extract-'));
    const [t1, t2] = randomPair(dir, 64, 64, 0);
    const weights = path.join(dir, 'weights.json');
    saveWeights(buildNetwork(TINY), weights);
    const out = path.join(dir, 'features.dnhg');
    const features = extractToFile(t1, t2, weights, out);
    expect([features.height, features.width, features.channels]).toEqual([64, 64, 128]);
    const back = readRaster(out);
    expect(back.dtype).toBe('float32');
    expect([back.height, back.width, back.channels]).toEqual([64, 64, 128]);
    for (let i = 0; i < back.data.length; i += 997) {
      expect(Number.isFinite(back.data[i])).toBe(true);
    }
  }, 240_000);

  it('is deterministic in evaluation mode: identical bytes twice', () => {
    const dir = fs.mkdtempSync(path.join(os.tmpdir(), 'extract-'));
    const [t1, t2] = randomPair(dir, 48, 48, 1);
    const weights = path.join(dir, 'weights.json');
    saveWeights(buildNetwork(TINY), weights);
    const outA = path.join(dir, 'a.dnhg');
    const outB = path.join(dir, 'b.dnhg');
    extractToFile(t1, t2, weights, outA);
    extractToFile(t1, t2, weights, outB);
    expect(fs.readFileSync(outA).equals(fs.readFileSync(outB))).toBe(true);
  }, 240_000);

  it('pads free-size inputs and crops back', () => {
    const net = buildNetwork(TINY);
    const rng = mulberry32(2);
    const make = () => {
      const data = new Uint8Array(50 * 37);
      for (let i = 0; i < data.length; i++) data[i] = Math.floor(rng() * 256);
      return makeRaster(50, 37, 1, 'uint8', data);
    };
    const features = extractFeatures(net, make(), make());
    expect([features.height, features.width, features.channels]).toEqual([50, 37, 128]);
  }, 240_000);

  it('round-trips weights through the JSON file', () => {
    const dir = fs.mkdtempSync(path.join(os.tmpdir(), 'weights-'));
    const net = buildNetwork(TINY);
    const file = path.join(dir, 'w.json');
    saveWeights(net, file);
    const back = loadWeights(file);
    const a = net.head.getWeights();
    const b = back.head.getWeights();
    expect(b.length).toBe(a.length);
    for (let i = 0; i < a.length; i++) {
      expect(Array.from(b[i].dataSync())).toEqual(Array.from(a[i].dataSync()));
    }
  }, 240_000);

  it('rejects mismatched pairs', () => {
    const net = buildNetwork(TINY);
    const a = makeRaster(32, 32, 1, 'uint8', new Uint8Array(32 * 32));
    const b = makeRaster(16, 32, 1, 'uint8', new Uint8Array(16 * 32));
    expect(() => extractFeatures(net, a, b)).toThrow(/shapes differ/);
  });
});
