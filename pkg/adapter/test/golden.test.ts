// Shared conformance suite: the adapter must produce byte-identical replies
// to the golden request/response vectors used by the core package.

import * as fs from 'fs';
import * as path from 'path';
import { describe, expect, it } from 'vitest';
import { parseModelSpec } from '../src/models';
import { handleRequest } from '../src/serve';

interface GoldenCase {
  name: string;
  model: string;
  request: string;
  response: string;
}

interface GoldenErrorCase {
  name: string;
  request: string;
  expect_id: number;
}

const vectors = JSON.parse(
  fs.readFileSync(path.join(__dirname, '..', '..', 'tests', 'golden', 'wire_vectors.json'), 'utf-8')
);

describe('golden request/response vectors', () => {
  for (const c of vectors.cases as GoldenCase[]) {
    it(`replies byte-exactly for ${c.name}`, () => {
      const reply = handleRequest(parseModelSpec(c.model), c.request);
      expect(reply.toString('utf-8')).toBe(c.response);
    });
  }

  for (const c of vectors.tolerant_cases as GoldenCase[]) {
    it(`ignores unknown fields for ${c.name}`, () => {
      const reply = handleRequest(parseModelSpec(c.model), c.request);
      expect(reply.toString('utf-8')).toBe(c.response);
    });
  }

  for (const c of vectors.error_cases as GoldenErrorCase[]) {
    it(`answers ${c.name} with an error echoing id ${c.expect_id}`, () => {
      const reply = JSON.parse(handleRequest(parseModelSpec('echo'), c.request).toString('utf-8'));
      expect(reply.id).toBe(c.expect_id);
      expect(typeof reply.error).toBe('string');
      expect(reply.error.length).toBeGreaterThan(0);
      expect(reply).not.toHaveProperty('probs_fake');
    });
  }
});
