/**
 * Feature-map export: run a sample batch through every conv layer of a
 * saved TensorFlow.js model and write the activations (plus labels) as an
 * NPY + manifest dump the analysis pipeline ingests directly.
 */

import * as tf from '@tensorflow/tfjs'
import { mkdirSync, writeFileSync } from 'node:fs'
import { join } from 'node:path'

import { DumpManifest, LayerEntry, sha256Hex, writeManifest } from './manifest'
import { loadModelFromDir } from './model'
import { encodeNpy, decodeNpy } from './npy'
import { readFileSync } from 'node:fs'

export class LayerResolutionFailure extends Error {}

export interface ExportSpec {
  /** directory holding model.json + weights */
  modelPath: string
  outDir: string
  /** samples taken from the batch (default 256, minimum 2) */
  batchSize?: number
  /** keep only conv layers whose name contains this substring */
  layerFilter?: string
  /** NPY file of inputs, shape (n, h, w, c) float32; synthetic when absent */
  dataPath?: string
  /** NPY file of int64 labels, required with dataPath */
  labelsPath?: string
  /** seed for the synthetic batch */
  seed?: number
}

const CONV_CLASSES = new Set(['Conv2D', 'DepthwiseConv2D', 'SeparableConv2D'])

export function convLayers(model: tf.LayersModel, filter?: string): tf.layers.Layer[] {
  const layers = model.layers.filter((l) => CONV_CLASSES.has(l.getClassName()))
  const matched = filter ? layers.filter((l) => l.name.includes(filter)) : layers
  if (matched.length === 0) {
    const names = model.layers.map((l) => `${l.name}(${l.getClassName()})`).join(', ')
    throw new LayerResolutionFailure(
      `no conv layers${filter ? ` matching "${filter}"` : ''} in: ${names}`,
    )
  }
  return matched
}

/** mulberry32: tiny seeded PRNG, good enough for a reproducible demo batch */
function makeRng(seed: number): () => number {
  let a = seed >>> 0
  return () => {
    a = (a + 0x6d2b79f5) | 0
    let t = Math.imul(a ^ (a >>> 15), 1 | a)
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296
  }
}

function syntheticBatch(
  model: tf.LayersModel,
  n: number,
  seed: number,
): { images: tf.Tensor4D; labels: BigInt64Array } {
  const inputShape = model.inputs[0].shape // [null, h, w, c]
  const [, h, w, c] = inputShape as number[]
  const rng = makeRng(seed)
  const pixels = new Float32Array(n * h * w * c)
  for (let i = 0; i < pixels.length; i++) pixels[i] = rng() * 2 - 1
  const outUnits = (model.outputs[0].shape.at(-1) as number) ?? 2
  const labels = new BigInt64Array(n)
  for (let i = 0; i < n; i++) labels[i] = BigInt(Math.floor(rng() * outUnits))
  return { images: tf.tensor4d(pixels, [n, h, w, c]), labels }
}

function loadBatch(
  spec: ExportSpec,
  n: number,
): { images: tf.Tensor4D; labels: BigInt64Array } {
  const imagesNpy = decodeNpy(readFileSync(spec.dataPath!))
  if (imagesNpy.shape.length !== 4) {
    throw new Error(`input tensor must be (n, h, w, c), got (${imagesNpy.shape})`)
  }
  const labelsNpy = decodeNpy(readFileSync(spec.labelsPath!))
  if (labelsNpy.dtype !== '<i8' || labelsNpy.shape.length !== 1) {
    throw new Error('labels must be a 1-D int64 tensor')
  }
  const total = imagesNpy.shape[0]
  if (labelsNpy.shape[0] !== total) {
    throw new Error(`${total} inputs but ${labelsNpy.shape[0]} labels`)
  }
  const take = Math.min(n, total)
  const [, h, w, c] = imagesNpy.shape
  const sampleValues = Float32Array.from(
    (imagesNpy.data as Float32Array | Float64Array).subarray(0, take * h * w * c),
  )
  return {
    images: tf.tensor4d(sampleValues, [take, h, w, c]),
    labels: (labelsNpy.data as BigInt64Array).slice(0, take),
  }
}

export interface ExportResult {
  outDir: string
  manifest: DumpManifest
}

export async function exportFeatures(spec: ExportSpec): Promise<ExportResult> {
  const batchSize = spec.batchSize ?? 256
  if (batchSize < 2) throw new Error('batch size must be at least 2')
  if (!!spec.dataPath !== !!spec.labelsPath) {
    throw new Error('dataPath and labelsPath must be given together')
  }

  const model = await loadModelFromDir(spec.modelPath)
  const layers = convLayers(model, spec.layerFilter)
  const { images, labels } = spec.dataPath
    ? loadBatch(spec, batchSize)
    : syntheticBatch(model, batchSize, spec.seed ?? 0)
  const n = images.shape[0]

  // one forward pass capturing every conv layer's output (NHWC)
  const tap = tf.model({ inputs: model.inputs, outputs: layers.map((l) => l.output as tf.SymbolicTensor) })
  const outputs = tf.tidy(() => {
    const outs = tap.predict(images) as tf.Tensor | tf.Tensor[]
    const list = Array.isArray(outs) ? outs : [outs]
    return list.map((t) => tf.transpose(t as tf.Tensor4D, [0, 3, 1, 2])) // NCHW
  })

  mkdirSync(spec.outDir, { recursive: true })
  const entries: LayerEntry[] = []
  for (let i = 0; i < outputs.length; i++) {
    const t = outputs[i]
    const [, filters, height, width] = t.shape as number[]
    const file = `layer${String(i + 1).padStart(2, '0')}.npy`
    const payload = encodeNpy({
      dtype: '<f4',
      shape: [n, filters, height, width],
      data: t.dataSync() as Float32Array,
    })
    writeFileSync(join(spec.outDir, file), payload)
    entries.push({
      layer_id: i + 1,
      num_filters: filters,
      height,
      width,
      file,
      sha256: sha256Hex(payload),
    })
    t.dispose()
  }
  images.dispose()

  const labelsPayload = encodeNpy({ dtype: '<i8', shape: [n], data: labels })
  writeFileSync(join(spec.outDir, 'labels.npy'), labelsPayload)

  const manifest: DumpManifest = {
    format_version: 1,
    source: 'external',
    batch_size: n,
    num_layers: entries.length,
    labels_file: 'labels.npy',
    labels_sha256: sha256Hex(labelsPayload),
    layers: entries,
  }
  writeManifest(spec.outDir, manifest)
  return { outDir: spec.outDir, manifest }
}
