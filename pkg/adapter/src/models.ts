// The models the adapter ships: protocol test models (echo, constant) and
// a tiny seeded convolutional stub that stands in for a real detector.
// Real checkpoints are user-supplied; wiring one up means implementing
// ServedModel and registering a spec prefix in parseModelSpec.

import { RngStream } from './rng';
import { WireImage } from './wire';

export interface ServedModel {
  describe(): string;
  // one probability of "fake" in [0, 1] per image, deterministic
  predict(images: WireImage[]): number[];
}

function clip01(v: number): number {
  return v < 0 ? 0 : v > 1 ? 1 : v;
}

export class EchoModel implements ServedModel {
  constructor(readonly channel: number) {
    if (channel !== 0 && channel !== 1 && channel !== 2) {
      throw new Error('channel index must be 0, 1 or 2');
    }
  }

  describe(): string {
    return `echo(channel=${this.channel})`;
  }

  predict(images: WireImage[]): number[] {
    return images.map(img => {
      let sum = 0;
      const n = img.h * img.w;
      for (let p = 0; p < n; p++) {
        sum += img.data[p * 3 + this.channel];
      }
      return clip01(sum / n);
    });
  }
}

export class ConstantModel implements ServedModel {
  constructor(readonly p: number) {
    if (!Number.isFinite(p) || p < 0 || p > 1) {
      throw new Error('constant probability must lie in [0, 1]');
    }
  }

  describe(): string {
    return `constant(${this.p})`;
  }

  predict(images: WireImage[]): number[] {
    return images.map(() => this.p);
  }
}

export interface ConvForward {
  hp: number;
  wp: number;
  // channels * hp * wp, pre-activation then post-ReLU
  convPre: Float64Array;
  act: Float64Array;
  gap: Float64Array;
  logit: number;
  prob: number;
}

// conv3x3 (valid) -> ReLU -> global average pool -> linear -> sigmoid
export class TinyConvModel implements ServedModel {
  readonly channels: number;

  constructor(
    // channels * 3 * 3 * 3, indexed [k][ku][kv][cin]
    readonly kernels: Float64Array,
    readonly convBias: Float64Array,
    readonly headWeights: Float64Array,
    readonly headBias: number,
    readonly label: string
  ) {
    this.channels = convBias.length;
    if (kernels.length !== this.channels * 27 || headWeights.length !== this.channels) {
      throw new Error('inconsistent tinyconv weight shapes');
    }
  }

  static seeded(seed: number, channels = 4): TinyConvModel {
    const rng = new RngStream(seed);
    const scale = (u: number) => u - 0.5;
    const kernels = Float64Array.from(rng.uniform(channels * 27), scale);
    const convBias = Float64Array.from(rng.uniform(channels), scale);
    const headWeights = Float64Array.from(rng.uniform(channels), u => (u - 0.5) * 4);
    const headBias = scale(rng.uniform(1)[0]);
    return new TinyConvModel(kernels, convBias, headWeights, headBias, `tinyconv(seed=${seed})`);
  }

  // constant-output stub: zero head weights, logit never depends on the input
  static constantStub(seed = 7, channels = 4): TinyConvModel {
    const base = TinyConvModel.seeded(seed, channels);
    return new TinyConvModel(
      base.kernels,
      base.convBias,
      new Float64Array(channels),
      base.headBias,
      'tinyconv(zero-head)'
    );
  }

  describe(): string {
    return this.label;
  }

  forward(img: WireImage): ConvForward {
    const { h, w, data } = img;
    if (h < 3 || w < 3) {
      throw new Error(`tinyconv needs at least a 3x3 image, got ${h}x${w}`);
    }
    const hp = h - 2;
    const wp = w - 2;
    const K = this.channels;
    const convPre = new Float64Array(K * hp * wp);
    const act = new Float64Array(K * hp * wp);
    const gap = new Float64Array(K);
    for (let k = 0; k < K; k++) {
      for (let i = 0; i < hp; i++) {
        for (let j = 0; j < wp; j++) {
          let acc = this.convBias[k];
          for (let u = 0; u < 3; u++) {
            for (let v = 0; v < 3; v++) {
              const px = ((i + u) * w + (j + v)) * 3;
              const kw = ((k * 3 + u) * 3 + v) * 3;
              acc +=
                data[px] * this.kernels[kw] +
                data[px + 1] * this.kernels[kw + 1] +
                data[px + 2] * this.kernels[kw + 2];
            }
          }
          const at = (k * hp + i) * wp + j;
          convPre[at] = acc;
          act[at] = acc > 0 ? acc : 0;
          gap[k] += act[at];
        }
      }
      gap[k] /= hp * wp;
    }
    let logit = this.headBias;
    for (let k = 0; k < K; k++) logit += this.headWeights[k] * gap[k];
    const prob = 1 / (1 + Math.exp(-logit));
    return { hp, wp, convPre, act, gap, logit, prob };
  }

  predict(images: WireImage[]): number[] {
    return images.map(img => this.forward(img).prob);
  }
}

// Specs: echo[:channel] | constant:<p> | tinyconv[:seed|:zero]
export function parseModelSpec(spec: string): ServedModel {
  const [head, ...rest] = spec.split(':');
  if (head === 'echo') {
    if (rest.length > 1) throw new Error(`bad echo spec '${spec}'`);
    const channel = rest.length ? Number(rest[0]) : 0;
    if (!Number.isInteger(channel)) throw new Error(`bad echo channel '${rest[0]}'`);
    return new EchoModel(channel);
  }
  if (head === 'constant') {
    if (rest.length !== 1) throw new Error(`constant spec needs a probability: '${spec}'`);
    const p = Number(rest[0]);
    if (!Number.isFinite(p)) throw new Error(`bad constant probability '${rest[0]}'`);
    return new ConstantModel(p);
  }
  if (head === 'tinyconv') {
    if (rest.length === 0) return TinyConvModel.seeded(7);
    if (rest.length === 1 && rest[0] === 'zero') return TinyConvModel.constantStub();
    const seed = Number(rest[0]);
    if (rest.length !== 1 || !Number.isInteger(seed)) {
      throw new Error(`bad tinyconv spec '${spec}'`);
    }
    return TinyConvModel.seeded(seed);
  }
  throw new Error(`unknown model spec '${spec}' (expected echo, constant or tinyconv)`);
}
