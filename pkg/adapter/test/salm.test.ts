import { execFileSync } from 'child_process';
import * as fs from 'fs';
import * as os from 'os';
import * as path from 'path';
import { describe, expect, it } from 'vitest';
import { decodeSaliency, encodeSaliency } from '../src/salm';

describe('SALM codec', () => {
  it('writes byte-identical files to the core encoder', () => {
    const ref = fs.readFileSync(path.join(__dirname, 'fixtures', 'ref_2x3.salm'));
    const ours = encodeSaliency(2, 3, Float32Array.from([0.0, 0.5, -1.25, 3.75, 0.1, 2.0]));
    expect(ours.equals(ref)).toBe(true);
  });

  it('round trips bitwise', () => {
    const values = Float32Array.from({ length: 20 }, (_, i) => Math.fround(Math.sin(i) * 3));
    const decoded = decodeSaliency(encodeSaliency(4, 5, values));
    expect(decoded.h).toBe(4);
    expect(decoded.w).toBe(5);
    expect(Array.from(decoded.values)).toEqual(Array.from(values));
  });

  it('rejects bad shapes and non-finite values', () => {
    expect(() => encodeSaliency(0, 3, new Float32Array(0))).toThrowError('positive');
    expect(() => encodeSaliency(2, 2, new Float32Array(3))).toThrowError('must hold 4');
    expect(() => encodeSaliency(1, 1, Float32Array.from([NaN]))).toThrowError('finite');
  });

  it('rejects foreign payloads', () => {
    expect(() => decodeSaliency(Buffer.from('PNG..............'))).toThrowError('not a SALM');
    const truncated = encodeSaliency(2, 2, new Float32Array(4)).subarray(0, 20);
    expect(() => decodeSaliency(Buffer.from(truncated))).toThrowError('expected 16');
  });

  it('is decoded by the core package with matching dimensions', () => {
    const file = path.join(fs.mkdtempSync(path.join(os.tmpdir(), 'salm-')), 'map.salm');
    const values = Float32Array.from({ length: 6 * 9 }, (_, i) => i / 10);
    fs.writeFileSync(file, encodeSaliency(6, 9, values));
    const out = execFileSync(
      'python3',
      [
        '-c',
        'import sys; from xfidelity.tensor import decode_saliency\n' +
          'm = decode_saliency(open(sys.argv[1], "rb").read())\n' +
          'print(m.height, m.width, float(m.data[13]))',
        file,
      ],
      { encoding: 'utf-8' }
    );
    // the stored values are float32, so compare at float32 precision
    expect(out.trim()).toBe(`6 9 ${Math.fround(13 / 10)}`);
  });
});
