// SALM saliency container, identical to the core reader's expectations:
//
//   bytes 0..3   magic "SALM"
//   byte  4      version (0x01 = float32 saliency payload)
//   bytes 5..8   height, u32 little-endian
//   bytes 9..12  width, u32 little-endian
//   bytes 13..   height*width binary32 little-endian values, no trailer

const MAGIC = Buffer.from('SALM', 'ascii');
const VERSION_SALIENCY = 0x01;
const HEADER_SIZE = 13;

export function encodeSaliency(h: number, w: number, values: Float32Array): Buffer {
  if (!Number.isInteger(h) || !Number.isInteger(w) || h < 1 || w < 1) {
    throw new Error('saliency dimensions must be positive integers');
  }
  if (values.length !== h * w) {
    throw new Error(`saliency payload must hold ${h * w} values, got ${values.length}`);
  }
  for (const v of values) {
    if (!Number.isFinite(v)) throw new Error('saliency values must be finite');
  }
  const buf = Buffer.alloc(HEADER_SIZE + values.length * 4);
  MAGIC.copy(buf, 0);
  buf.writeUInt8(VERSION_SALIENCY, 4);
  buf.writeUInt32LE(h, 5);
  buf.writeUInt32LE(w, 9);
  for (let i = 0; i < values.length; i++) {
    buf.writeFloatLE(values[i], HEADER_SIZE + i * 4);
  }
  return buf;
}

export function decodeSaliency(buf: Buffer): { h: number; w: number; values: Float32Array } {
  if (buf.length < HEADER_SIZE || !buf.subarray(0, 4).equals(MAGIC)) {
    throw new Error('not a SALM payload');
  }
  if (buf.readUInt8(4) !== VERSION_SALIENCY) {
    throw new Error(`unsupported SALM version ${buf.readUInt8(4)}`);
  }
  const h = buf.readUInt32LE(5);
  const w = buf.readUInt32LE(9);
  if (buf.length !== HEADER_SIZE + h * w * 4) {
    throw new Error(`SALM payload holds ${buf.length - HEADER_SIZE} bytes, expected ${h * w * 4}`);
  }
  const values = new Float32Array(h * w);
  for (let i = 0; i < values.length; i++) {
    values[i] = buf.readFloatLE(HEADER_SIZE + i * 4);
  }
  return { h, w, values };
}
