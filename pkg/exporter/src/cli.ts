#!/usr/bin/env node
/**
 * Command-line entry: export-features --model DIR --out DIR [options]
 */

import { parseArgs } from 'node:util'

import { exportFeatures } from './export'

async function main(): Promise<number> {
  const { values } = parseArgs({
    options: {
      model: { type: 'string' },
      out: { type: 'string' },
      batch: { type: 'string', default: '256' },
      layers: { type: 'string' },
      data: { type: 'string' },
      labels: { type: 'string' },
      seed: { type: 'string', default: '0' },
      help: { type: 'boolean', default: false },
    },
  })
  if (values.help || !values.model || !values.out) {
    console.log(
      'usage: export-features --model DIR --out DIR [--batch 256] ' +
        '[--layers SUBSTR] [--data X.npy --labels Y.npy] [--seed 0]',
    )
    return values.help ? 0 : 2
  }
  const result = await exportFeatures({
    modelPath: values.model,
    outDir: values.out,
    batchSize: Number(values.batch),
    layerFilter: values.layers,
    dataPath: values.data,
    labelsPath: values.labels,
    seed: Number(values.seed),
  })
  console.log(
    `wrote ${result.manifest.num_layers} layer tensors ` +
      `(batch ${result.manifest.batch_size}) to ${result.outDir}`,
  )
  return 0
}

main().then(
  (code) => process.exit(code),
  (err) => {
    console.error(`error: ${err.message ?? err}`)
    process.exit(1)
  },
)
