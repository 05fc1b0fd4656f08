import { ChildProcess, execFileSync, spawn } from 'child_process';
import * as fs from 'fs';
import * as os from 'os';
import * as path from 'path';
import { PNG } from 'pngjs';
import { afterAll, beforeAll, describe, expect, it } from 'vitest';
import { main } from '../src/cli';
import { decodeSaliency } from '../src/salm';

const root = path.join(__dirname, '..');
const cliJs = path.join(root, 'dist', 'cli.js');

function writePng(file: string, h: number, w: number, red: (y: number, x: number) => number) {
  const png = new PNG({ width: w, height: h });
  for (let y = 0; y < h; y++) {
    for (let x = 0; x < w; x++) {
      const at = (y * w + x) * 4;
      png.data[at] = Math.round(red(y, x) * 255);
      png.data[at + 1] = 40;
      png.data[at + 2] = 40;
      png.data[at + 3] = 255;
    }
  }
  fs.writeFileSync(file, PNG.sync.write(png));
}

describe('export-saliency command', () => {
  const dir = fs.mkdtempSync(path.join(os.tmpdir(), 'adapter-cli-'));
  const image = path.join(dir, 'face.png');

  beforeAll(() => {
    writePng(image, 16, 16, (y, x) => (y >= 4 && y < 8 && x >= 4 && x < 8 ? 0.9 : 0.1));
  });

  it('writes a SALM file the core package decodes at image resolution', () => {
    const out = path.join(dir, 'cam.salm');
    expect(main(['export-saliency', '--tool', 'gradcam', '--image', image, '--out', out])).toBe(0);
    const decoded = decodeSaliency(fs.readFileSync(out));
    expect(decoded.h).toBe(16);
    expect(decoded.w).toBe(16);

    const report = execFileSync(
      'python3',
      [
        '-c',
        'import sys; from xfidelity.tensor import decode_saliency\n' +
          'm = decode_saliency(open(sys.argv[1], "rb").read())\n' +
          'print(m.height, m.width)',
        out,
      ],
      { encoding: 'utf-8' }
    );
    expect(report.trim()).toBe('16 16');
  });

  it('supports the xrai tool and custom grids', () => {
    const out = path.join(dir, 'xrai.salm');
    expect(
      main(['export-saliency', '--tool', 'xrai', '--grid', '8', '--model', 'tinyconv:4', '--image', image, '--out', out])
    ).toBe(0);
    const decoded = decodeSaliency(fs.readFileSync(out));
    expect(decoded.h).toBe(16);
    // grid 8 on 16x16 gives 2x2 cells, so pixel pairs within a cell agree
    expect(decoded.values[0]).toBe(decoded.values[1]);
  });

  it('rejects models without conv internals and bad tools', () => {
    const out = path.join(dir, 'x.salm');
    expect(main(['export-saliency', '--tool', 'gradcam', '--model', 'echo', '--image', image, '--out', out])).toBe(1);
    expect(main(['export-saliency', '--tool', 'sobol', '--image', image, '--out', out])).toBe(1);
    expect(main(['export-saliency', '--tool', 'gradcam', '--image', path.join(dir, 'missing.png'), '--out', out])).toBe(1);
  });

  it('prints usage for unknown commands', () => {
    expect(main(['frobnicate'])).toBe(1);
    expect(main([])).toBe(1);
  });
});

describe('serve command', () => {
  let child: ChildProcess;
  let base = '';

  beforeAll(async () => {
    if (!fs.existsSync(cliJs)) {
      execFileSync('npx', ['tsc'], { cwd: root });
    }
    child = spawn('node', [cliJs, 'serve', '--model', 'echo', '--addr', '127.0.0.1:0']);
    base = await new Promise<string>((resolve, reject) => {
      let err = '';
      child.stderr!.on('data', (chunk: Buffer) => {
        err += chunk.toString();
        const m = err.match(/serving .* on (http:\/\/[\d.]+:\d+)/);
        if (m) resolve(m[1]);
      });
      child.on('exit', code => reject(new Error(`serve exited early (${code}): ${err}`)));
    });
  }, 15000);

  afterAll(() => {
    child.kill();
  });

  it('serves golden vectors from the spawned process', async () => {
    const vectors = JSON.parse(
      fs.readFileSync(path.join(root, '..', 'tests', 'golden', 'wire_vectors.json'), 'utf-8')
    );
    const c = vectors.cases.find((x: any) => x.name === 'echo-black-single');
    const res = await fetch(`${base}/predict`, { method: 'POST', body: c.request });
    expect(await res.text()).toBe(c.response);
  });
});
