/**
 * Minimal NPY v1.0 codec: little-endian float32 / int64, C order.
 *
 * The writer mirrors the reference container layout (magic, version 1.0,
 * space-padded header ending in \n, 64-byte aligned payload) so files are
 * loadable by any standard reader.
 */

const MAGIC = Buffer.from('\x93NUMPY', 'latin1')

export type NpyDtype = '<f4' | '<f8' | '<i8'

export interface NpyArray {
  dtype: NpyDtype
  shape: number[]
  /** flat C-order payload */
  data: Float32Array | Float64Array | BigInt64Array
}

function shapeTuple(shape: number[]): string {
  if (shape.length === 0) return '()'
  if (shape.length === 1) return `(${shape[0]},)`
  return `(${shape.join(', ')})`
}

export function encodeNpy(arr: NpyArray): Buffer {
  const header = `{'descr': '${arr.dtype}', 'fortran_order': False, 'shape': ${shapeTuple(
    arr.shape,
  )}, }`
  // magic(6) + version(2) + headerLen(2) + header padded to a 64-byte boundary
  const unpadded = MAGIC.length + 2 + 2 + header.length + 1
  const padding = (64 - (unpadded % 64)) % 64
  const headerBuf = Buffer.from(header + ' '.repeat(padding) + '\n', 'latin1')

  const count = arr.shape.reduce((a, b) => a * b, 1)
  if (count !== arr.data.length) {
    throw new Error(`shape ${shapeTuple(arr.shape)} does not match ${arr.data.length} values`)
  }
  const itemSize = arr.dtype === '<f4' ? 4 : 8
  const payload = Buffer.alloc(count * itemSize)
  const view = new DataView(payload.buffer, payload.byteOffset, payload.byteLength)
  if (arr.dtype === '<f4') {
    const data = arr.data as Float32Array
    for (let i = 0; i < count; i++) view.setFloat32(i * 4, data[i], true)
  } else if (arr.dtype === '<f8') {
    const data = arr.data as Float64Array
    for (let i = 0; i < count; i++) view.setFloat64(i * 8, data[i], true)
  } else {
    const data = arr.data as BigInt64Array
    for (let i = 0; i < count; i++) view.setBigInt64(i * 8, data[i], true)
  }

  const lenField = Buffer.alloc(4)
  lenField.writeUInt8(1, 0) // major version
  lenField.writeUInt8(0, 1) // minor version
  lenField.writeUInt16LE(headerBuf.length, 2)
  return Buffer.concat([MAGIC, lenField, headerBuf, payload])
}

export function decodeNpy(buf: Buffer): NpyArray {
  if (!buf.subarray(0, 6).equals(MAGIC)) {
    throw new Error('not an NPY file')
  }
  const major = buf.readUInt8(6)
  if (major !== 1) {
    throw new Error(`unsupported NPY version ${major}.${buf.readUInt8(7)}`)
  }
  const headerLen = buf.readUInt16LE(8)
  const header = buf.subarray(10, 10 + headerLen).toString('latin1')
  const descr = /'descr':\s*'([^']+)'/.exec(header)?.[1]
  const fortran = /'fortran_order':\s*(True|False)/.exec(header)?.[1]
  const shapeText = /'shape':\s*\(([^)]*)\)/.exec(header)?.[1]
  if (!descr || !fortran || shapeText === undefined) {
    throw new Error(`unparseable NPY header: ${header}`)
  }
  if (fortran === 'True') throw new Error('Fortran-order tensors are not supported')
  if (descr !== '<f4' && descr !== '<f8' && descr !== '<i8') {
    throw new Error(`unsupported dtype ${descr}`)
  }
  const shape = shapeText
    .split(',')
    .map((s) => s.trim())
    .filter((s) => s.length > 0)
    .map(Number)
  const count = shape.reduce((a, b) => a * b, 1)
  const itemSize = descr === '<f4' ? 4 : 8
  const start = 10 + headerLen
  if (buf.length < start + count * itemSize) {
    throw new Error(`truncated NPY payload: ${buf.length - start} of ${count * itemSize} bytes`)
  }
  const view = new DataView(buf.buffer, buf.byteOffset + start, count * itemSize)
  let data: NpyArray['data']
  if (descr === '<f4') {
    const out = new Float32Array(count)
    for (let i = 0; i < count; i++) out[i] = view.getFloat32(i * 4, true)
    data = out
  } else if (descr === '<f8') {
    const out = new Float64Array(count)
    for (let i = 0; i < count; i++) out[i] = view.getFloat64(i * 8, true)
    data = out
  } else {
    const out = new BigInt64Array(count)
    for (let i = 0; i < count; i++) out[i] = view.getBigInt64(i * 8, true)
    data = out
  }
  return { dtype: descr, shape, data }
}
