import * as fs from 'fs';
import { PNG } from 'pngjs';
import { WireImage } from './wire';

// 8-bit PNG -> float RGB in [0, 1]; alpha is dropped
export function loadPng(path: string): WireImage {
  const png = PNG.sync.read(fs.readFileSync(path));
  const { height: h, width: w } = png;
  const data = new Float64Array(h * w * 3);
  for (let p = 0; p < h * w; p++) {
    data[p * 3] = png.data[p * 4] / 255;
    data[p * 3 + 1] = png.data[p * 4 + 1] / 255;
    data[p * 3 + 2] = png.data[p * 4 + 2] / 255;
  }
  return { h, w, data };
}
