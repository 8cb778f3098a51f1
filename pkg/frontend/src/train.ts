/**
 * Pre-training: pixel-wise cross-entropy between the sigmoid head and the
 * binary label patches, SGD with momentum, optional rotation/flip
 * augmentation, explicit L2 weight penalty.  Identical seeds give
 * identical loss curves.
 */

import * as fs from 'fs';
import * as tf from '@tensorflow/tfjs';

import { PatchTriple, augment, loadPatchDir } from './data';
import { mulberry32 } from './prng';
import { ExtractorConfig, Network, buildNetwork, saveWeights } from './unet';

const EPS = 1e-7;

/** Mean over pixels of -[y ln a + (1 - y) ln(1 - a)]. */
export function crossEntropy(pred: tf.Tensor, target: tf.Tensor): tf.Scalar {
  return tf.tidy(() => {
    const a = tf.clipByValue(pred, EPS, 1 - EPS);
    const term = tf.add(
      tf.mul(target, tf.log(a)),
      tf.mul(tf.sub(1, target), tf.log(tf.sub(1, a))),
    );
    return tf.neg(tf.mean(term)) as tf.Scalar;
  });
}

function weightPenalty(net: Network, weightDecay: number): tf.Scalar {
  return tf.tidy(() => {
    let total = tf.scalar(0);
    for (const w of net.head.getWeights()) {
      total = tf.add(total, tf.sum(tf.square(w)));
    }
    return tf.mul(0.5 * weightDecay, total) as tf.Scalar;
  });
}

export interface PretrainResult {
  net: Network;
  losses: number[];
}

export function pretrain(
  patchDir: string,
  config: ExtractorConfig,
  steps: number,
  weightsOut?: string,
  lossCurveOut?: string,
): PretrainResult {
  const triples = loadPatchDir(patchDir);
  const net = buildNetwork(config);
  const optimizer = tf.train.momentum(config.learningRate, config.momentum);
  const rng = mulberry32(config.seed ^ 0x5eed);
  const losses: number[] = [];

  for (let step = 0; step < steps; step++) {
    const batch = tf.tidy(() => {
      const augmented = triples.map((t) =>
        config.augmentRotation || config.augmentFlip
          ? augment(t, rng, config.augmentRotation, config.augmentFlip)
          : t,
      );
      return {
        inputs: tf.stack(augmented.map((t) => t.input)) as tf.Tensor4D,
        labels: tf.stack(augmented.map((t) => t.label)) as tf.Tensor4D,
      };
    });
    const loss = optimizer.minimize(
      () => {
        const pred = net.head.apply(batch.inputs, { training: true }) as tf.Tensor4D;
        return tf.add(
          crossEntropy(pred, batch.labels),
          weightPenalty(net, config.weightDecay),
        ) as tf.Scalar;
      },
      true,
    ) as tf.Scalar;
    losses.push(loss.dataSync()[0]);
    loss.dispose();
    batch.inputs.dispose();
    batch.labels.dispose();
    if (!Number.isFinite(losses[losses.length - 1])) {
      throw new Error(`loss became non-finite at step ${step}`);
    }
  }

  optimizer.dispose();
  triples.forEach((t) => {
    t.input.dispose();
    t.label.dispose();
  });
  if (weightsOut) saveWeights(net, weightsOut);
  if (lossCurveOut) {
    fs.writeFileSync(lossCurveOut, losses.map((v) => v.toPrecision(17)).join('\n') + '\n');
  }
  return { net, losses };
}
