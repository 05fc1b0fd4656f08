// Counter-based splitmix64 stream, bit-compatible with the core package:
// draw i of a stream is finalize(seed + (i+1)*GAMMA) in wrapping u64
// arithmetic, so identical (seed, counter) states replay identical values
// in either language.

const MASK64 = (1n << 64n) - 1n;
const GAMMA = 0x9e3779b97f4a7c15n;
const MIX1 = 0xbf58476d1ce4e5b9n;
const MIX2 = 0x94d049bb133111ebn;
const INV53 = Math.pow(2, -53);

function finalize(z: bigint): bigint {
  z = ((z ^ (z >> 30n)) * MIX1) & MASK64;
  z = ((z ^ (z >> 27n)) * MIX2) & MASK64;
  return (z ^ (z >> 31n)) & MASK64;
}

export function splitmix64Word(seed: bigint, index: bigint): bigint {
  return finalize((seed + (index + 1n) * GAMMA) & MASK64);
}

export class RngStream {
  seed: bigint;
  counter: bigint;

  constructor(seed: number | bigint, counter: number | bigint = 0n) {
    this.seed = BigInt(seed) & MASK64;
    this.counter = BigInt(counter);
    if (this.counter < 0n) throw new Error('counter must be non-negative');
  }

  private word(): bigint {
    this.counter += 1n;
    return splitmix64Word(this.seed, this.counter - 1n);
  }

  // doubles uniform on [0, 1), one u64 word per draw
  uniform(n: number): Float64Array {
    const out = new Float64Array(n);
    for (let i = 0; i < n; i++) {
      out[i] = Number(this.word() >> 11n) * INV53;
    }
    return out;
  }
}
