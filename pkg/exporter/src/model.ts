/**
 * Directory-based save/load for tf.LayersModel without tfjs-node: a plain
 * model.json + weights.bin pair handled through tf.io memory handlers.
 */

import * as tf from '@tensorflow/tfjs'
import { mkdirSync, readFileSync, writeFileSync } from 'node:fs'
import { join } from 'node:path'

export class ModelLoadFailure extends Error {}

export async function saveModelToDir(model: tf.LayersModel, dir: string): Promise<void> {
  mkdirSync(dir, { recursive: true })
  await model.save(
    tf.io.withSaveHandler(async (artifacts) => {
      const weightData = artifacts.weightData as ArrayBuffer
      writeFileSync(join(dir, 'weights.bin'), Buffer.from(weightData))
      const modelJson = {
        modelTopology: artifacts.modelTopology,
        format: 'layers-model',
        generatedBy: 'feature-dump-exporter',
        convertedBy: null,
        weightsManifest: [{ paths: ['weights.bin'], weights: artifacts.weightSpecs }],
      }
      writeFileSync(join(dir, 'model.json'), JSON.stringify(modelJson, null, 2))
      return { modelArtifactsInfo: { dateSaved: new Date(), modelTopologyType: 'JSON' } }
    }),
  )
}

export async function loadModelFromDir(dir: string): Promise<tf.LayersModel> {
  let modelJson: any
  try {
    modelJson = JSON.parse(readFileSync(join(dir, 'model.json'), 'utf8'))
  } catch (err) {
    throw new ModelLoadFailure(`cannot read model.json in ${dir}: ${err}`)
  }
  try {
    const groups = modelJson.weightsManifest ?? []
    const specs = groups.flatMap((g: any) => g.weights)
    const buffers = groups.flatMap((g: any) =>
      g.paths.map((p: string) => readFileSync(join(dir, p))),
    )
    const blob = Buffer.concat(buffers)
    const weightData = blob.buffer.slice(blob.byteOffset, blob.byteOffset + blob.byteLength)
    return await tf.loadLayersModel(
      tf.io.fromMemory({
        modelTopology: modelJson.modelTopology,
        weightSpecs: specs,
        weightData,
      }),
    )
  } catch (err) {
    throw new ModelLoadFailure(`cannot reconstruct model from ${dir}: ${err}`)
  }
}
