/**
 * Embedding backends.
 *
 * Two deterministic models ship by default:
 *  - "trigram-512": hashed byte-trigram counts over the raw UTF-8 bytes,
 *    L2-normalized. Byte-faithful: every inserted code point moves the
 *    vector, which is what a byte-level code embedder looks like to the
 *    attack tooling.
 *  - "folding-512": identical, except Unicode format-category characters
 *    are folded away first — the behavior of tokenizers that map
 *    invisible characters to UNK. Clients probing this model must
 *    conclude it is not attackable.
 *
 * Wrapping a real transformer checkpoint is an extension point: implement
 * EmbeddingModel and register it. Keep it normalization-free.
 */

const MASK64 = (1n << 64n) - 1n;

/** Pinned 64-bit mixer; wraparound arithmetic on 64-bit lanes. */
export function splitmix64(x: bigint): bigint {
  let z = (x + 0x9e3779b97f4a7c15n) & MASK64;
  z = ((z ^ (z >> 30n)) * 0xbf58476d1ce4e5b9n) & MASK64;
  z = ((z ^ (z >> 27n)) * 0x94d049bb133111ebn) & MASK64;
  return (z ^ (z >> 31n)) & MASK64;
}

export interface EmbeddingModel {
  readonly id: string;
  readonly dim: number;
  embed(text: string): number[];
}

export class TrigramModel implements EmbeddingModel {
  readonly id: string;
  readonly dim: number;
  private readonly seed: bigint;

  constructor(dim = 512, seed = 0x5afe_c0de_d00d_feedn, id = "trigram-512") {
    this.dim = dim;
    this.seed = seed;
    this.id = id;
  }

  embed(text: string): number[] {
    const bytes = Buffer.from(text, "utf8");
    const counts = new Float64Array(this.dim);
    const bucket = (gram: bigint) =>
      Number(splitmix64(gram ^ this.seed) % BigInt(this.dim));
    if (bytes.length < 3) {
      let gram = 0n;
      for (const b of bytes) gram = (gram << 8n) | BigInt(b);
      counts[bucket(gram)] += 1;
    } else {
      for (let i = 0; i + 3 <= bytes.length; i++) {
        const gram =
          (BigInt(bytes[i]) << 16n) |
          (BigInt(bytes[i + 1]) << 8n) |
          BigInt(bytes[i + 2]);
        counts[bucket(gram)] += 1;
      }
    }
    let sumSquares = 0;
    for (const c of counts) sumSquares += c * c;
    const norm = Math.sqrt(sumSquares);
    return Array.from(counts, (c) => c / norm);
  }
}

const FORMAT_CHARS = /\p{Cf}/gu;

export class FoldingTrigramModel implements EmbeddingModel {
  readonly id = "folding-512";
  readonly dim: number;
  private readonly inner: TrigramModel;

  constructor(dim = 512) {
    this.dim = dim;
    this.inner = new TrigramModel(dim, 0x5afe_c0de_d00d_feedn, this.id);
  }

  embed(text: string): number[] {
    const folded = text.replace(FORMAT_CHARS, "");
    // folding may consume the whole input; embed a stand-in token the way
    // UNK-only sequences still embed in real models
    return this.inner.embed(folded.length > 0 ? folded : " ");
  }
}

export function createModel(modelId: string): EmbeddingModel {
  switch (modelId) {
    case "trigram-512":
      return new TrigramModel();
    case "folding-512":
      return new FoldingTrigramModel();
    default:
      throw new Error(
        `unknown model "${modelId}" (available: trigram-512, folding-512)`
      );
  }
}
