import * as http from 'http';
import * as net from 'net';
import { ServedModel } from './models';
import { bestEffortId, decodeRequest, encodeErrorResponse, encodeResponse } from './wire';

export const DEFAULT_BATCH_LIMIT = 32;

// One request in, one reply out. Any failure, malformed bytes or a model
// that throws, becomes an error reply carrying whatever id could be
// salvaged; the caller keeps the connection alive either way.
export function handleRequest(
  model: ServedModel,
  raw: string | Buffer,
  batchLimit = DEFAULT_BATCH_LIMIT
): Buffer {
  try {
    const { id, images } = decodeRequest(raw);
    const probs: number[] = [];
    // inference runs in chunks of at most batchLimit images
    for (let at = 0; at < images.length; at += batchLimit) {
      probs.push(...model.predict(images.slice(at, at + batchLimit)));
    }
    return encodeResponse(id, probs);
  } catch (exc) {
    return encodeErrorResponse(bestEffortId(raw), (exc as Error).message);
  }
}

// POST /predict with the request object as body; error replies ride
// status 200 so HTTP and TCP transports carry identical payloads
export function createHttpServer(model: ServedModel, batchLimit = DEFAULT_BATCH_LIMIT): http.Server {
  return http.createServer((req, res) => {
    if (req.method !== 'POST' || (req.url !== '/predict' && req.url !== '/')) {
      res.writeHead(404, { 'content-type': 'application/json' });
      res.end('{"detail":"POST /predict"}');
      return;
    }
    const chunks: Buffer[] = [];
    req.on('data', c => chunks.push(c));
    req.on('end', () => {
      const reply = handleRequest(model, Buffer.concat(chunks), batchLimit);
      res.writeHead(200, { 'content-type': 'application/json' });
      res.end(reply);
    });
  });
}

// newline-delimited request/reply objects over a persistent socket
export function createTcpServer(model: ServedModel, batchLimit = DEFAULT_BATCH_LIMIT): net.Server {
  return net.createServer(socket => {
    let pending = Buffer.alloc(0);
    socket.on('data', chunk => {
      pending = Buffer.concat([pending, Buffer.isBuffer(chunk) ? chunk : Buffer.from(chunk)]);
      let nl: number;
      while ((nl = pending.indexOf(0x0a)) >= 0) {
        const line = pending.subarray(0, nl);
        pending = pending.subarray(nl + 1);
        socket.write(Buffer.concat([handleRequest(model, line, batchLimit), Buffer.from('\n')]));
      }
    });
    socket.on('error', () => socket.destroy());
  });
}
