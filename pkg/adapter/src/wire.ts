// Predictor wire protocol codec.
//
// One request or response is a single JSON object; over TCP each object is
// followed by one newline, over HTTP the object is the POST body.
//
//   request:  {"id": u64, "images": [{"h": H, "w": W, "c": 3,
//              "b64": base64 of H*W*3 binary32 little-endian row-major RGB}]}
//   response: {"id": u64, "probs_fake": [f64, ...]}
//   error:    {"id": u64, "error": "message"}
//
// Unknown fields are ignored. Pixel payloads are checked for finiteness
// only: gradient probes may sit slightly outside [0, 1] and the protocol
// carries them verbatim.

export class DecodeError extends Error {}

export interface WireImage {
  h: number;
  w: number;
  // h*w*3 row-major RGB values promoted to f64
  data: Float64Array;
}

// ids are JSON integers; this implementation accepts the exactly
// representable range (up to 2^53 - 1)
function checkId(value: unknown): number {
  if (typeof value !== 'number' || !Number.isSafeInteger(value) || value < 0) {
    throw new DecodeError("'id' must be an unsigned integer");
  }
  return value;
}

function parseObject(data: string | Buffer): Record<string, unknown> {
  const text = typeof data === 'string' ? data : data.toString('utf-8');
  let obj: unknown;
  try {
    obj = JSON.parse(text);
  } catch (exc) {
    throw new DecodeError(`payload is not valid JSON: ${(exc as Error).message}`);
  }
  if (obj === null || typeof obj !== 'object' || Array.isArray(obj)) {
    throw new DecodeError('payload must be a JSON object');
  }
  return obj as Record<string, unknown>;
}

const BASE64_RE = /^[A-Za-z0-9+/]*={0,2}$/;

function decodeBase64Strict(s: string, pos: number): Buffer {
  if (!BASE64_RE.test(s) || s.length % 4 !== 0) {
    throw new DecodeError(`images[${pos}].b64 is not valid base64`);
  }
  const padding = s.endsWith('==') ? 2 : s.endsWith('=') ? 1 : 0;
  const buf = Buffer.from(s, 'base64');
  if (buf.length !== (s.length / 4) * 3 - padding) {
    throw new DecodeError(`images[${pos}].b64 is not valid base64`);
  }
  return buf;
}

export function decodeRequest(data: string | Buffer): { id: number; images: WireImage[] } {
  const obj = parseObject(data);
  if (!('id' in obj) || !('images' in obj)) {
    throw new DecodeError("request must carry 'id' and 'images'");
  }
  const id = checkId(obj.id);
  const rawImages = obj.images;
  if (!Array.isArray(rawImages)) {
    throw new DecodeError("'images' must be an array");
  }
  const images: WireImage[] = [];
  for (let pos = 0; pos < rawImages.length; pos++) {
    const entry = rawImages[pos];
    if (entry === null || typeof entry !== 'object' || Array.isArray(entry)) {
      throw new DecodeError(`images[${pos}] must be an object`);
    }
    const rec = entry as Record<string, unknown>;
    for (const field of ['h', 'w', 'c', 'b64']) {
      if (!(field in rec)) {
        throw new DecodeError(`images[${pos}] missing field '${field}'`);
      }
    }
    const { h, w, c } = rec;
    for (const [name, v] of [['h', h], ['w', w], ['c', c]] as const) {
      if (typeof v !== 'number' || !Number.isInteger(v) || v < 1) {
        throw new DecodeError(`images[${pos}].${name} must be a positive integer`);
      }
    }
    if (c !== 3) {
      throw new DecodeError(`images[${pos}].c must be 3, got ${c}`);
    }
    if (typeof rec.b64 !== 'string') {
      throw new DecodeError(`images[${pos}].b64 must be a string`);
    }
    const payload = decodeBase64Strict(rec.b64, pos);
    const expected = (h as number) * (w as number) * 3 * 4;
    if (payload.length !== expected) {
      throw new DecodeError(
        `images[${pos}] payload holds ${payload.length} bytes, expected ${expected}`
      );
    }
    // copy into an aligned buffer before the f32 view
    const aligned = new ArrayBuffer(payload.length);
    new Uint8Array(aligned).set(payload);
    const f32 = new Float32Array(aligned);
    const values = new Float64Array(f32.length);
    for (let i = 0; i < f32.length; i++) {
      if (!Number.isFinite(f32[i])) {
        throw new DecodeError(`images[${pos}] carries non-finite values`);
      }
      values[i] = f32[i];
    }
    images.push({ h: h as number, w: w as number, data: values });
  }
  return { id, images };
}

// Integer-valued probabilities print with a trailing ".0" so replies match
// the shared golden vectors byte for byte regardless of implementation
// language; everything else uses the shortest round-trip form.
export function formatProb(v: number): string {
  if (!Number.isFinite(v)) throw new Error('probabilities must be finite');
  return Number.isInteger(v) ? v.toFixed(1) : String(v);
}

export function encodeResponse(id: number, probsFake: number[]): Buffer {
  checkId(id);
  const body = probsFake.map(formatProb).join(',');
  return Buffer.from(`{"id":${id},"probs_fake":[${body}]}`, 'utf-8');
}

export function encodeErrorResponse(id: number, message: string): Buffer {
  checkId(id);
  return Buffer.from(`{"id":${id},"error":${JSON.stringify(message)}}`, 'utf-8');
}

// Pull the request id out of a possibly-malformed payload; 0 if the payload
// does not even parse that far. Lets error replies echo the id.
export function bestEffortId(data: string | Buffer): number {
  try {
    const obj = parseObject(data);
    return checkId(obj.id);
  } catch {
    return 0;
  }
}
