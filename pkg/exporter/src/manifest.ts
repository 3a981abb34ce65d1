/**
 * Feature-dump manifest: the JSON index the analysis side validates
 * against, including per-file SHA-256 checksums that guard against silent
 * truncation across the language boundary.
 */

import { createHash } from 'node:crypto'
import { writeFileSync } from 'node:fs'
import { join } from 'node:path'

export interface LayerEntry {
  layer_id: number
  num_filters: number
  height: number
  width: number
  file: string
  sha256: string
}

export interface DumpManifest {
  format_version: number
  source: string
  batch_size: number
  num_layers: number
  labels_file: string
  labels_sha256: string
  layers: LayerEntry[]
}

export function sha256Hex(payload: Buffer): string {
  return createHash('sha256').update(payload).digest('hex')
}

export function writeManifest(outDir: string, manifest: DumpManifest): string {
  const path = join(outDir, 'manifest.json')
  writeFileSync(path, JSON.stringify(manifest, null, 2) + '\n')
  return path
}
