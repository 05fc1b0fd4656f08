// Saliency export for the tiny conv stub.
//
// Grad-CAM: weight each post-ReLU conv activation map by the spatial mean
// of the class-score gradient with respect to that map, sum, ReLU, upsample
// to the input resolution. With a global average pool head the gradient of
// the logit with respect to activation map k is headWeights[k] / (hp * wp)
// at every position, so the channel weights fall out in closed form; the
// class score is the logit for a predicted Fake and its negation for a
// predicted Real.
//
// XRAI-style export: gradient-times-input pixel attribution, averaged over
// the cells of a regular grid so each segment carries one score.

import { encodeSaliency } from './salm';
import { TinyConvModel, ConvForward } from './models';
import { WireImage } from './wire';

export type SaliencyTool = 'gradcam' | 'xrai';

// align-corners bilinear: source and destination corners coincide
export function bilinearUpsample(
  src: Float64Array,
  sh: number,
  sw: number,
  dh: number,
  dw: number
): Float64Array {
  const out = new Float64Array(dh * dw);
  const rowScale = dh > 1 ? (sh - 1) / (dh - 1) : 0;
  const colScale = dw > 1 ? (sw - 1) / (dw - 1) : 0;
  for (let y = 0; y < dh; y++) {
    const fy = y * rowScale;
    const y0 = Math.min(Math.floor(fy), sh - 1);
    const y1 = Math.min(y0 + 1, sh - 1);
    const ty = fy - y0;
    for (let x = 0; x < dw; x++) {
      const fx = x * colScale;
      const x0 = Math.min(Math.floor(fx), sw - 1);
      const x1 = Math.min(x0 + 1, sw - 1);
      const tx = fx - x0;
      const top = src[y0 * sw + x0] * (1 - tx) + src[y0 * sw + x1] * tx;
      const bottom = src[y1 * sw + x0] * (1 - tx) + src[y1 * sw + x1] * tx;
      out[y * dw + x] = top * (1 - ty) + bottom * ty;
    }
  }
  return out;
}

function classSign(fwd: ConvForward): number {
  return fwd.prob >= 0.5 ? 1 : -1;
}

export function gradCam(model: TinyConvModel, img: WireImage): Float32Array {
  const fwd = model.forward(img);
  const { hp, wp, act } = fwd;
  const sign = classSign(fwd);
  const area = hp * wp;
  const cam = new Float64Array(area);
  for (let k = 0; k < model.channels; k++) {
    const alpha = (sign * model.headWeights[k]) / area;
    for (let p = 0; p < area; p++) {
      cam[p] += alpha * act[k * area + p];
    }
  }
  for (let p = 0; p < area; p++) {
    if (cam[p] < 0) cam[p] = 0;
  }
  const up = bilinearUpsample(cam, hp, wp, img.h, img.w);
  let peak = 0;
  for (const v of up) {
    if (v > peak) peak = v;
  }
  const out = new Float32Array(up.length);
  if (peak > 0) {
    for (let p = 0; p < up.length; p++) out[p] = up[p] / peak;
  }
  return out;
}

// exact gradient of the class score with respect to every input value,
// h*w*3 row-major
export function inputGradient(model: TinyConvModel, img: WireImage): Float64Array {
  const fwd = model.forward(img);
  const { hp, wp, convPre } = fwd;
  const sign = classSign(fwd);
  const area = hp * wp;
  const grad = new Float64Array(img.h * img.w * 3);
  for (let k = 0; k < model.channels; k++) {
    const dAct = (sign * model.headWeights[k]) / area;
    for (let i = 0; i < hp; i++) {
      for (let j = 0; j < wp; j++) {
        if (convPre[(k * hp + i) * wp + j] <= 0) continue;
        for (let u = 0; u < 3; u++) {
          for (let v = 0; v < 3; v++) {
            const px = ((i + u) * img.w + (j + v)) * 3;
            const kw = ((k * 3 + u) * 3 + v) * 3;
            grad[px] += dAct * model.kernels[kw];
            grad[px + 1] += dAct * model.kernels[kw + 1];
            grad[px + 2] += dAct * model.kernels[kw + 2];
          }
        }
      }
    }
  }
  return grad;
}

export function xraiSaliency(model: TinyConvModel, img: WireImage, grid: number): Float32Array {
  if (!Number.isInteger(grid) || grid < 1) {
    throw new Error('grid must be a positive integer');
  }
  const grad = inputGradient(model, img);
  const { h, w, data } = img;
  // pixel attribution: gradient times input, summed over channels
  const attr = new Float64Array(h * w);
  for (let p = 0; p < h * w; p++) {
    attr[p] = grad[p * 3] * data[p * 3] + grad[p * 3 + 1] * data[p * 3 + 1] + grad[p * 3 + 2] * data[p * 3 + 2];
  }
  const rows = Math.min(grid, h);
  const cols = Math.min(grid, w);
  const sums = new Float64Array(rows * cols);
  const counts = new Float64Array(rows * cols);
  const cellOf = (y: number, x: number) =>
    Math.min(Math.floor((y * rows) / h), rows - 1) * cols + Math.min(Math.floor((x * cols) / w), cols - 1);
  for (let y = 0; y < h; y++) {
    for (let x = 0; x < w; x++) {
      const c = cellOf(y, x);
      sums[c] += attr[y * w + x];
      counts[c] += 1;
    }
  }
  const out = new Float32Array(h * w);
  for (let y = 0; y < h; y++) {
    for (let x = 0; x < w; x++) {
      const c = cellOf(y, x);
      out[y * w + x] = sums[c] / counts[c];
    }
  }
  return out;
}

export function exportSaliency(
  model: TinyConvModel,
  tool: SaliencyTool,
  img: WireImage,
  grid = 4
): Buffer {
  const map = tool === 'gradcam' ? gradCam(model, img) : xraiSaliency(model, img, grid);
  return encodeSaliency(img.h, img.w, map);
}
