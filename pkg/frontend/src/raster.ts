/**
 * DNHG raster I/O (the exchange format with the detection engine) plus
 * read-only PGM/PPM support for viewable inputs.
 *
 * DNHG layout: bytes 0-3 "DNHG", then five little-endian uint32s
 * (version=1, height, width, channels, dtype code), then the payload
 * row-major pixel-major with no padding or trailing bytes.
 */

import * as fs from 'fs';

export type RasterDtype = 'float32' | 'uint8' | 'uint32';

export interface Raster {
  height: number;
  width: number;
  channels: number;
  dtype: RasterDtype;
  data: Float32Array | Uint8Array | Uint32Array;
}

const MAGIC = 'DNHG';
const VERSION = 1;
const HEADER_BYTES = 24;

const CODE_BY_DTYPE: Record<RasterDtype, number> = { float32: 0, uint8: 1, uint32: 2 };
const DTYPE_BY_CODE: RasterDtype[] = ['float32', 'uint8', 'uint32'];
const BYTES_PER: Record<RasterDtype, number> = { float32: 4, uint8: 1, uint32: 4 };

export function makeRaster(
  height: number,
  width: number,
  channels: number,
  dtype: RasterDtype,
  data: Float32Array | Uint8Array | Uint32Array,
): Raster {
  if (height < 1 || width < 1 || channels < 1) {
    throw new Error(`raster dimensions must be >= 1, got ${height}x${width}x${channels}`);
  }
  if (data.length !== height * width * channels) {
    throw new Error(
      `payload length ${data.length} does not match ${height}x${width}x${channels}`,
    );
  }
  return { height, width, channels, dtype, data };
}

function readDnhg(buf: Buffer): Raster {
  if (buf.length < HEADER_BYTES) {
    throw new Error(`truncated header: ${buf.length} bytes`);
  }
  if (buf.toString('latin1', 0, 4) !== MAGIC) {
    throw new Error(`bad magic ${JSON.stringify(buf.toString('latin1', 0, 4))}`);
  }
  const version = buf.readUInt32LE(4);
  if (version !== VERSION) throw new Error(`unsupported version ${version}`);
  const height = buf.readUInt32LE(8);
  const width = buf.readUInt32LE(12);
  const channels = buf.readUInt32LE(16);
  const code = buf.readUInt32LE(20);
  const dtype = DTYPE_BY_CODE[code];
  if (dtype === undefined) throw new Error(`unsupported dtype code ${code}`);
  const count = height * width * channels;
  const expected = count * BYTES_PER[dtype];
  const payload = buf.subarray(HEADER_BYTES);
  if (payload.length < expected) {
    throw new Error(`truncated payload: ${payload.length} bytes < ${expected}`);
  }
  if (payload.length > expected) {
    throw new Error(`trailing bytes after payload: ${payload.length - expected}`);
  }
  // copy so alignment is safe regardless of the Buffer's byte offset
  const bytes = Uint8Array.prototype.slice.call(payload);
  let data: Raster['data'];
  if (dtype === 'float32') data = new Float32Array(bytes.buffer);
  else if (dtype === 'uint32') data = new Uint32Array(bytes.buffer);
  else data = new Uint8Array(bytes.buffer);
  return makeRaster(height, width, channels, dtype, data);
}

function readPnm(buf: Buffer): Raster {
  const magic = buf.toString('latin1', 0, 2);
  const channels = magic === 'P5' ? 1 : 3;
  let pos = 2;
  const fields: number[] = [];
  while (fields.length < 3) {
    while (pos < buf.length && /\s/.test(String.fromCharCode(buf[pos]))) pos++;
    if (buf[pos] === 0x23) {
      while (pos < buf.length && buf[pos] !== 0x0a) pos++;
      continue;
    }
    let start = pos;
    while (pos < buf.length && !/\s/.test(String.fromCharCode(buf[pos]))) pos++;
    fields.push(parseInt(buf.toString('latin1', start, pos), 10));
  }
  pos++; // single whitespace after maxval
  const [width, height, maxval] = fields;
  if (maxval !== 255) throw new Error(`maxval ${maxval} unsupported, expected 255`);
  const count = width * height * channels;
  if (buf.length - pos < count) throw new Error('truncated payload');
  return makeRaster(height, width, channels, 'uint8',
    Uint8Array.prototype.slice.call(buf.subarray(pos, pos + count)));
}

export function readRaster(path: string): Raster {
  const buf = fs.readFileSync(path);
  const head = buf.toString('latin1', 0, 4);
  if (head === MAGIC) return readDnhg(buf);
  if (head.startsWith('P5') || head.startsWith('P6')) return readPnm(buf);
  throw new Error(`bad magic ${JSON.stringify(head)} in ${path}`);
}

export function writeRaster(r: Raster, path: string): void {
  const header = Buffer.alloc(HEADER_BYTES);
  header.write(MAGIC, 0, 'latin1');
  header.writeUInt32LE(VERSION, 4);
  header.writeUInt32LE(r.height, 8);
  header.writeUInt32LE(r.width, 12);
  header.writeUInt32LE(r.channels, 16);
  header.writeUInt32LE(CODE_BY_DTYPE[r.dtype], 20);
  const payload = Buffer.from(r.data.buffer, r.data.byteOffset, r.data.byteLength);
  fs.writeFileSync(path, Buffer.concat([header, payload]));
}

/** Values scaled to [0, 1] float32 (uint8 divided by 255). */
export function toUnitFloats(r: Raster): Float32Array {
  if (r.dtype === 'float32') return r.data as Float32Array;
  const out = new Float32Array(r.data.length);
  const scale = r.dtype === 'uint8' ? 1 / 255 : 1;
  for (let i = 0; i < r.data.length; i++) out[i] = (r.data[i] as number) * scale;
  return out;
}
