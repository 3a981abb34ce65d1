#!/usr/bin/env node
/**
 * Builds and saves a small seeded conv model so the exporter can be
 * demonstrated (and round-trip tested) without downloading anything.
 */

import * as tf from '@tensorflow/tfjs'

import { saveModelToDir } from './model'

export function buildDemoModel(seed = 7): tf.LayersModel {
  const init = tf.initializers.glorotUniform({ seed })
  const model = tf.sequential({
    layers: [
      tf.layers.conv2d({
        inputShape: [16, 16, 1],
        filters: 4,
        kernelSize: 3,
        padding: 'same',
        activation: 'relu',
        kernelInitializer: init,
        name: 'conv_a',
      }),
      tf.layers.maxPooling2d({ poolSize: 2 }),
      tf.layers.conv2d({
        filters: 6,
        kernelSize: 3,
        padding: 'same',
        activation: 'relu',
        kernelInitializer: init,
        name: 'conv_b',
      }),
      tf.layers.maxPooling2d({ poolSize: 2 }),
      tf.layers.flatten(),
      tf.layers.dense({ units: 3, kernelInitializer: init, name: 'head' }),
    ],
  })
  return model
}

if (require.main === module) {
  const dir = process.argv[2]
  if (!dir) {
    console.error('usage: demo-model OUT_DIR')
    process.exit(2)
  }
  saveModelToDir(buildDemoModel(), dir).then(
    () => console.log(`saved demo model to ${dir}`),
    (err) => {
      console.error(`error: ${err.message ?? err}`)
      process.exit(1)
    },
  )
}
