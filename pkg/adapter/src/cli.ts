#!/usr/bin/env node
import * as fs from 'fs';
import { parseArgs } from 'util';
import { exportSaliency, SaliencyTool } from './gradcam';
import { parseModelSpec, TinyConvModel } from './models';
import { loadPng } from './png';
import { createHttpServer, createTcpServer, DEFAULT_BATCH_LIMIT } from './serve';

const USAGE = `usage:
  adapter serve --model <spec> --addr <host:port> [--tcp] [--batch-limit N]
  adapter export-saliency --tool gradcam|xrai --image <png> --out <salm>
                          [--model <spec>] [--grid N]

model specs: echo[:channel] | constant:<p> | tinyconv[:seed|:zero]`;

function parseAddr(addr: string): { host: string; port: number } {
  const cut = addr.lastIndexOf(':');
  const port = Number(addr.slice(cut + 1));
  if (cut <= 0 || !Number.isInteger(port) || port < 0 || port > 65535) {
    throw new Error(`bad address '${addr}', expected host:port`);
  }
  return { host: addr.slice(0, cut), port };
}

function cmdServe(argv: string[]): number {
  const { values } = parseArgs({
    args: argv,
    options: {
      model: { type: 'string', default: 'echo' },
      addr: { type: 'string' },
      tcp: { type: 'boolean', default: false },
      'batch-limit': { type: 'string', default: String(DEFAULT_BATCH_LIMIT) },
    },
  });
  if (!values.addr) throw new Error('serve needs --addr host:port');
  const batchLimit = Number(values['batch-limit']);
  if (!Number.isInteger(batchLimit) || batchLimit < 1) {
    throw new Error(`bad --batch-limit '${values['batch-limit']}'`);
  }
  const model = parseModelSpec(values.model as string);
  const { host, port } = parseAddr(values.addr);
  const server = values.tcp ? createTcpServer(model, batchLimit) : createHttpServer(model, batchLimit);
  server.listen(port, host, () => {
    const bound = server.address();
    const at = typeof bound === 'object' && bound ? `${bound.address}:${bound.port}` : values.addr;
    console.error(`serving ${model.describe()} on ${values.tcp ? 'tcp' : 'http'}://${at}`);
  });
  return 0;
}

function cmdExportSaliency(argv: string[]): number {
  const { values } = parseArgs({
    args: argv,
    options: {
      tool: { type: 'string' },
      image: { type: 'string' },
      out: { type: 'string' },
      model: { type: 'string', default: 'tinyconv' },
      grid: { type: 'string', default: '4' },
    },
  });
  if (values.tool !== 'gradcam' && values.tool !== 'xrai') {
    throw new Error(`--tool must be gradcam or xrai, got '${values.tool}'`);
  }
  if (!values.image || !values.out) {
    throw new Error('export-saliency needs --image and --out');
  }
  const grid = Number(values.grid);
  if (!Number.isInteger(grid) || grid < 1) throw new Error(`bad --grid '${values.grid}'`);
  const model = parseModelSpec(values.model as string);
  if (!(model instanceof TinyConvModel)) {
    throw new Error('saliency export needs a conv model; use a tinyconv spec');
  }
  const img = loadPng(values.image);
  fs.writeFileSync(values.out, exportSaliency(model, values.tool as SaliencyTool, img, grid));
  console.error(`wrote ${values.tool} saliency for ${img.h}x${img.w} image to ${values.out}`);
  return 0;
}

export function main(argv: string[]): number {
  const [command, ...rest] = argv;
  try {
    if (command === 'serve') return cmdServe(rest);
    if (command === 'export-saliency') return cmdExportSaliency(rest);
    console.error(USAGE);
    return command === undefined || command === '--help' ? (command ? 0 : 1) : 1;
  } catch (exc) {
    console.error(`error: ${(exc as Error).message}`);
    return 1;
  }
}

if (require.main === module) {
  const code = main(process.argv.slice(2));
  if (code !== 0) process.exit(code);
}
