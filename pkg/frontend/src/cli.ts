/**
 * CLI: `synth-patches` for a toy dataset, `pretrain` for weights,
 * `extract` for DNHG feature-map export.
 */

import { extractToFile } from './extract';
import { makePatches } from './synth';
import { pretrain } from './train';
import { defaultConfig } from './unet';

type Flags = Record<string, string>;

function parseFlags(argv: string[]): Flags {
  const flags: Flags = {};
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (!arg.startsWith('--')) throw new Error(`unexpected argument ${arg}`);
    const key = arg.slice(2);
    if (i + 1 >= argv.length) throw new Error(`flag --${key} needs a value`);
    flags[key] = argv[++i];
  }
  return flags;
}

function need(flags: Flags, key: string): string {
  const value = flags[key];
  if (value === undefined) throw new Error(`missing required flag --${key}`);
  return value;
}

function num(flags: Flags, key: string, fallback: number): number {
  return flags[key] === undefined ? fallback : Number(flags[key]);
}

function main(argv: string[]): number {
  const [command, ...rest] = argv;
  if (!command) {
    console.error('usage: cli.js <synth-patches|pretrain|extract> [flags]');
    return 2;
  }
  const flags = parseFlags(rest);

  if (command === 'synth-patches') {
    makePatches(
      need(flags, 'out'),
      num(flags, 'count', 8),
      num(flags, 'size', 32),
      num(flags, 'noise', 0.02),
      num(flags, 'seed', 0),
    );
    console.log(`wrote ${num(flags, 'count', 8)} patch triples to ${flags['out']}`);
    return 0;
  }

  if (command === 'pretrain') {
    const config = defaultConfig({
      patchSize: num(flags, 'patch-size', 112),
      featureChannels: num(flags, 'feature-channels', 128),
      baseChannels: num(flags, 'base-channels', 16),
      inChannels: num(flags, 'in-channels', 2),
      learningRate: num(flags, 'lr', 0.001),
      momentum: num(flags, 'momentum', 0.9),
      weightDecay: num(flags, 'weight-decay', 0.0005),
      augmentRotation: flags['augment'] !== 'false',
      augmentFlip: flags['augment'] !== 'false',
      seed: num(flags, 'seed', 0),
    });
    const { losses } = pretrain(
      need(flags, 'patches'),
      config,
      num(flags, 'steps', 200),
      need(flags, 'out'),
      flags['loss-curve'],
    );
    console.log(
      `loss ${losses[0].toFixed(6)} -> ${losses[losses.length - 1].toFixed(6)} ` +
      `over ${losses.length} steps; weights in ${flags['out']}`,
    );
    return 0;
  }

  if (command === 'extract') {
    const features = extractToFile(
      need(flags, 't1'),
      need(flags, 't2'),
      need(flags, 'weights'),
      need(flags, 'out'),
    );
    console.log(
      `wrote ${features.height}x${features.width}x${features.channels} ` +
      `float32 raster to ${flags['out']}`,
    );
    return 0;
  }

  console.error(`unknown command ${command}`);
  return 2;
}

try {
  process.exitCode = main(process.argv.slice(2));
} catch (err) {
  console.error(`error: ${err instanceof Error ? err.message : err}`);
  process.exitCode = 1;
}
