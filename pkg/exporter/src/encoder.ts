/**
 * Deterministic feature encoders behind a model-tag registry.
 *
 * This sandboxed build cannot download model checkpoints, so the shipped
 * encoder family is `hash/<dim>`: a seeded random-projection encoder that
 * is a pure function of its input bytes. Identical inputs produce
 * bit-identical float32 features on every run and platform, which is what
 * the bundle pipeline actually requires of an encoder; a checkpoint-backed
 * encoder slots in as another registry entry.
 *
 * Text path: casefold, split into alphanumeric tokens, sum one seeded
 * gaussian vector per token occurrence. Image path: byte histogram plus a
 * length bucket, each weighted into seeded gaussian vectors.
 */

const FNV_OFFSET = 0xcbf29ce484222325n;
const FNV_PRIME = 0x100000001b3n;
const MASK64 = 0xffffffffffffffffn;

export function fnv1a64(text: string): bigint {
  let hash = FNV_OFFSET;
  const bytes = Buffer.from(text, "utf-8");
  for (const b of bytes) {
    hash ^= BigInt(b);
    hash = (hash * FNV_PRIME) & MASK64;
  }
  return hash;
}

function splitmix64(state: bigint): [bigint, bigint] {
  state = (state + 0x9e3779b97f4a7c15n) & MASK64;
  let z = state;
  z = ((z ^ (z >> 30n)) * 0xbf58476d1ce4e5b9n) & MASK64;
  z = ((z ^ (z >> 27n)) * 0x94d049bb133111ebn) & MASK64;
  z = z ^ (z >> 31n);
  return [state, z];
}

/** Uniform double in (0, 1) from the top 53 bits. */
function toUnit(x: bigint): number {
  return (Number(x >> 11n) + 1) / 9007199254740993; // 2^53 + 1 keeps it off 0 and 1
}

/**
 * Seeded standard-gaussian vector for a token; deterministic in
 * (seed string, dim). Box-Muller over a splitmix64 stream.
 */
export function gaussianVector(seed: string, dim: number): Float64Array {
  const out = new Float64Array(dim);
  let state = fnv1a64(seed);
  let z: bigint;
  for (let i = 0; i < dim; i += 2) {
    [state, z] = splitmix64(state);
    const u1 = toUnit(z);
    [state, z] = splitmix64(state);
    const u2 = toUnit(z);
    const r = Math.sqrt(-2.0 * Math.log(u1));
    out[i] = r * Math.cos(2.0 * Math.PI * u2);
    if (i + 1 < dim) out[i + 1] = r * Math.sin(2.0 * Math.PI * u2);
  }
  return out;
}

export interface Encoder {
  readonly dim: number;
  /** model tag plus preprocessing hash, recorded in every bundle */
  readonly encoderTag: string;
  encodeText(text: string): Float64Array;
  encodeImage(bytes: Buffer): Float64Array;
}

const PREPROCESSING = "casefold-alnum-tokens|byte-histogram-log2len|v1";

class HashEncoder implements Encoder {
  readonly dim: number;
  readonly encoderTag: string;
  private readonly salt: string;

  constructor(dim: number) {
    if (!Number.isInteger(dim) || dim < 2) {
      throw new Error(`hash encoder dimension must be an integer >= 2, got ${dim}`);
    }
    this.dim = dim;
    this.salt = `hash/${dim}`;
    const preprocHash = fnv1a64(PREPROCESSING).toString(16).padStart(16, "0").slice(0, 8);
    this.encoderTag = `hash/${dim}+${preprocHash}`;
  }

  encodeText(text: string): Float64Array {
    const tokens = text.toLowerCase().split(/[^a-z0-9]+/).filter((t) => t.length > 0);
    const acc = new Float64Array(this.dim);
    if (tokens.length === 0) throw new Error("cannot encode empty text");
    for (const token of tokens) {
      const vec = gaussianVector(`${this.salt}|tok|${token}`, this.dim);
      for (let i = 0; i < this.dim; i++) acc[i] += vec[i];
    }
    return acc;
  }

  encodeImage(bytes: Buffer): Float64Array {
    const hist = new Float64Array(256);
    for (const b of bytes) hist[b] += 1;
    const acc = new Float64Array(this.dim);
    for (let v = 0; v < 256; v++) {
      if (hist[v] === 0) continue;
      const vec = gaussianVector(`${this.salt}|byte|${v}`, this.dim);
      const w = hist[v] / bytes.length;
      for (let i = 0; i < this.dim; i++) acc[i] += w * vec[i];
    }
    const bucket = bytes.length === 0 ? 0 : Math.floor(Math.log2(bytes.length));
    const lenVec = gaussianVector(`${this.salt}|len|${bucket}`, this.dim);
    for (let i = 0; i < this.dim; i++) acc[i] += 0.25 * lenVec[i];
    return acc;
  }
}

export function resolveEncoder(modelTag: string): Encoder {
  const hashMatch = /^hash\/(\d+)$/.exec(modelTag);
  if (hashMatch) {
    return new HashEncoder(Number(hashMatch[1]));
  }
  throw new Error(
    `unknown model tag ${modelTag!}; supported: hash/<dim> (e.g. hash/512)`,
  );
}

/** Unit-normalize in float64, then narrow to float32 storage. */
export function normalizeRow(row: Float64Array): Float64Array {
  let ss = 0;
  for (const v of row) ss += v * v;
  const norm = Math.sqrt(ss);
  if (norm < 1e-12) throw new Error("cannot normalize a near-zero feature row");
  const out = new Float64Array(row.length);
  for (let i = 0; i < row.length; i++) out[i] = row[i] / norm;
  return out;
}
