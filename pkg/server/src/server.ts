/**
 * HTTP surface of the reference model server.
 *
 * Routes (JSON over HTTP):
 *   POST /predict     {"instances": [[token, ...], ...]} -> {"probs": [[p, ...], ...]}
 *   POST /conditional {"observed": {"<index>": token}, "n", "count", "seed"}
 *                     -> {"completions": [[token, ...], ...]}
 *   GET  /meta        -> {"label_count": int, "pad_token": token}
 *
 * Handling is stateless: a response depends only on its request, so retries
 * and replays are safe. Malformed requests get a 400 with a machine-readable
 * {"error": {"message": ...}} body.
 */

import { createServer, type IncomingMessage, type Server, type ServerResponse } from "node:http";
import {
  BigramCompleter,
  StubCompleter,
  StubPredictor,
  TokenWeightClassifier,
  type Completer,
  type Predictor,
} from "./models.js";

export type Mode = "stub" | "classifier" | "classifier+lm";

export interface ServerConfig {
  mode: Mode;
  pad: string;
  labelCount: number;
  modelPath?: string;
  corpusPath?: string;
}

class BadRequest extends Error {}

function buildBackends(config: ServerConfig): { predictor: Predictor; completer: Completer } {
  if (config.mode === "stub") {
    return {
      predictor: new StubPredictor(config.labelCount),
      completer: new StubCompleter(config.pad),
    };
  }
  if (!config.modelPath) throw new Error(`${config.mode} mode needs --model <path>`);
  const predictor = TokenWeightClassifier.load(config.modelPath);
  if (config.mode === "classifier") {
    return { predictor, completer: new StubCompleter(config.pad) };
  }
  if (!config.corpusPath) throw new Error("classifier+lm mode needs --corpus <path>");
  return { predictor, completer: BigramCompleter.load(config.corpusPath) };
}

function readBody(request: IncomingMessage): Promise<string> {
  return new Promise((resolve, reject) => {
    const chunks: Buffer[] = [];
    let size = 0;
    request.on("data", (chunk: Buffer) => {
      size += chunk.length;
      if (size > 64 * 1024 * 1024) {
        reject(new BadRequest("request body too large"));
        request.destroy();
        return;
      }
      chunks.push(chunk);
    });
    request.on("end", () => resolve(Buffer.concat(chunks).toString("utf-8")));
    request.on("error", reject);
  });
}

function parseInstances(payload: unknown): string[][] {
  if (typeof payload !== "object" || payload === null) throw new BadRequest("body must be a JSON object");
  const instances = (payload as { instances?: unknown }).instances;
  if (!Array.isArray(instances)) throw new BadRequest('"instances" must be an array');
  return instances.map((row, i) => {
    if (!Array.isArray(row) || row.length === 0) {
      throw new BadRequest(`instance ${i} must be a non-empty array of tokens`);
    }
    return row.map(String);
  });
}

interface ConditionalRequest {
  observed: Map<number, string>;
  n: number;
  count: number;
  seed: number;
}

function parseConditional(payload: unknown): ConditionalRequest {
  if (typeof payload !== "object" || payload === null) throw new BadRequest("body must be a JSON object");
  const body = payload as { observed?: unknown; n?: unknown; count?: unknown; seed?: unknown };
  const n = body.n;
  if (typeof n !== "number" || !Number.isInteger(n) || n < 1) {
    throw new BadRequest('"n" must be a positive integer');
  }
  const count = body.count;
  if (typeof count !== "number" || !Number.isInteger(count) || count < 1) {
    throw new BadRequest('"count" must be a positive integer');
  }
  const seed = body.seed;
  if (typeof seed !== "number" || !Number.isInteger(seed)) {
    throw new BadRequest('"seed" must be an integer');
  }
  if (typeof body.observed !== "object" || body.observed === null || Array.isArray(body.observed)) {
    throw new BadRequest('"observed" must be an object mapping indices to tokens');
  }
  const observed = new Map<number, string>();
  for (const [key, value] of Object.entries(body.observed as Record<string, unknown>)) {
    const index = Number(key);
    if (!Number.isInteger(index) || index < 0 || index >= n) {
      throw new BadRequest(`observed index ${key} outside [0, ${n})`);
    }
    observed.set(index, String(value));
  }
  return { observed, n, count, seed };
}

function sendJson(response: ServerResponse, status: number, payload: unknown): void {
  const body = JSON.stringify(payload);
  response.writeHead(status, {
    "content-type": "application/json",
    "content-length": Buffer.byteLength(body),
  });
  response.end(body);
}

export function createModelServer(config: ServerConfig): Server {
  const { predictor, completer } = buildBackends(config);

  return createServer(async (request, response) => {
    try {
      const url = request.url ?? "/";
      if (request.method === "GET" && url === "/meta") {
        sendJson(response, 200, { label_count: predictor.labelCount, pad_token: config.pad });
        return;
      }
      if (request.method === "POST" && url === "/predict") {
        const payload = parseJson(await readBody(request));
        const instances = parseInstances(payload);
        sendJson(response, 200, { probs: instances.map((tokens) => predictor.predict(tokens)) });
        return;
      }
      if (request.method === "POST" && url === "/conditional") {
        const payload = parseJson(await readBody(request));
        const { observed, n, count, seed } = parseConditional(payload);
        sendJson(response, 200, { completions: completer.complete(observed, n, count, seed) });
        return;
      }
      sendJson(response, 404, { error: { message: `no route ${request.method} ${url}` } });
    } catch (error) {
      if (error instanceof BadRequest || error instanceof SyntaxError) {
        sendJson(response, 400, { error: { message: String((error as Error).message) } });
      } else {
        sendJson(response, 500, { error: { message: String(error) } });
      }
    }
  });
}

function parseJson(text: string): unknown {
  try {
    return JSON.parse(text);
  } catch {
    throw new BadRequest("body is not valid JSON");
  }
}
