/**
 * The wire protocol, and nothing else:
 *
 *   POST /embed  {"texts": [string, ...]}
 *     -> 200 {"vectors": [[number, ...], ...], "dim": n}
 *     -> 400 {"error": ...} on malformed input
 *     -> 413 {"error": ...} on oversize batches or texts (never silent
 *        truncation: dropping bytes would silently delete perturbations)
 *     -> 500 {"error": ...} on model failure
 *
 *   POST /echo   {"texts": [...]} -> 200 {"texts": [...]} verbatim
 *
 * Text passes through byte-faithfully: requests are decoded as UTF-8 and
 * handed to the model with no normalization, trimming, or stripping. The
 * /echo endpoint exists so clients can verify exactly that.
 */

import { createServer as createHttpServer, IncomingMessage, Server, ServerResponse } from "node:http";

import { ServerConfig } from "./config";
import { createModel, EmbeddingModel } from "./models";

interface EmbedRequest {
  texts: string[];
}

function send(res: ServerResponse, status: number, body: unknown): void {
  const data = Buffer.from(JSON.stringify(body), "utf8");
  res.writeHead(status, {
    "Content-Type": "application/json; charset=utf-8",
    "Content-Length": data.length,
  });
  res.end(data);
}

function readBody(req: IncomingMessage): Promise<Buffer> {
  return new Promise((resolve, reject) => {
    const chunks: Buffer[] = [];
    req.on("data", (chunk) => chunks.push(chunk));
    req.on("end", () => resolve(Buffer.concat(chunks)));
    req.on("error", reject);
  });
}

function parseTexts(raw: Buffer): EmbedRequest | string {
  let payload: unknown;
  try {
    payload = JSON.parse(raw.toString("utf8"));
  } catch {
    return "body is not valid JSON";
  }
  if (typeof payload !== "object" || payload === null || !("texts" in payload)) {
    return 'body must be an object with a "texts" array';
  }
  const texts = (payload as { texts: unknown }).texts;
  if (!Array.isArray(texts) || texts.some((t) => typeof t !== "string")) {
    return '"texts" must be an array of strings';
  }
  return { texts: texts as string[] };
}

export function createServer(config: ServerConfig): Server {
  const model: EmbeddingModel = createModel(config.model);

  return createHttpServer(async (req, res) => {
    if (req.method !== "POST" || (req.url !== "/embed" && req.url !== "/echo")) {
      send(res, 404, { error: `no route for ${req.method} ${req.url}` });
      return;
    }
    const parsed = parseTexts(await readBody(req));
    if (typeof parsed === "string") {
      send(res, 400, { error: parsed });
      return;
    }
    const { texts } = parsed;

    if (req.url === "/echo") {
      send(res, 200, { texts });
      return;
    }

    if (texts.length === 0) {
      send(res, 400, { error: "texts must be non-empty" });
      return;
    }
    if (texts.some((t) => t.length === 0)) {
      send(res, 400, { error: "texts must not contain empty strings" });
      return;
    }
    if (texts.length > config.maxBatchSize) {
      send(res, 413, {
        error: `batch of ${texts.length} exceeds the limit of ${config.maxBatchSize}`,
      });
      return;
    }
    const oversize = texts.findIndex((t) => t.length > config.maxTextLength);
    if (oversize !== -1) {
      send(res, 413, {
        error:
          `text ${oversize} has ${texts[oversize].length} code units, ` +
          `limit is ${config.maxTextLength}; refusing rather than truncating`,
      });
      return;
    }

    try {
      const vectors = texts.map((t) => model.embed(t));
      send(res, 200, { vectors, dim: model.dim });
    } catch (err) {
      send(res, 500, {
        error: `model failure: ${err instanceof Error ? err.message : String(err)}`,
      });
    }
  });
}
