/**
 * CODR bundle files: a float32 feature matrix plus aligned JSON metadata.
 *
 * Layout (little-endian, no padding):
 *   bytes 0-3   magic ASCII "CODR"
 *   bytes 4-7   version u32 = 1
 *   bytes 8-11  rows u32
 *   bytes 12-15 dim u32
 *   bytes 16-23 metadata_len u64
 *   ...         metadata_len bytes UTF-8 JSON
 *   ...         rows * dim * 4 bytes float32, row-major
 *
 * Metadata JSON is canonical (sorted keys, compact separators, raw UTF-8)
 * and records are canonically ordered before writing, so a consumer that
 * re-serializes an unchanged bundle reproduces the file byte for byte.
 */

import { promises as fs } from "node:fs";
import { dirname, join } from "node:path";
import { randomBytes } from "node:crypto";

export const MAGIC = "CODR";
export const VERSION = 1;
const HEADER_LEN = 24;

export type Family =
  | "class_name"
  | "attribute"
  | "analogous_class"
  | "synonym"
  | "one_to_one";

export const FAMILY_ORDER: Record<Family, number> = {
  class_name: 0,
  attribute: 1,
  analogous_class: 2,
  synonym: 3,
  one_to_one: 4,
};

export interface TextRecord {
  id: number;
  text: string;
  family: Family;
  class_id: number;
  pair_class_id: number | null;
  template_id: string;
}

export interface ImageRecord {
  id: number;
  label_class_id: number | null;
  source_path: string;
}

export type BundleKind = "text" | "image" | "coder";

export interface Bundle {
  kind: BundleKind;
  classNames: string[];
  encoderTag: string;
  normalized: boolean;
  records: TextRecord[] | ImageRecord[];
  /** rows * dim float32 values, row-major */
  features: Float32Array;
  dim: number;
}

/** JSON with recursively sorted keys and no whitespace. */
export function canonicalJson(value: unknown): string {
  if (value === null || typeof value !== "object") {
    return JSON.stringify(value);
  }
  if (Array.isArray(value)) {
    return "[" + value.map(canonicalJson).join(",") + "]";
  }
  const obj = value as Record<string, unknown>;
  const keys = Object.keys(obj).sort();
  return "{" + keys.map((k) => JSON.stringify(k) + ":" + canonicalJson(obj[k])).join(",") + "}";
}

function textSortKey(r: TextRecord): [number, number, number] {
  return [r.class_id, FAMILY_ORDER[r.family], r.id];
}

/** Canonical row order: text by (class_id, family, id); image/coder by id. */
export function canonicalOrder(bundle: Bundle): number[] {
  const indices = bundle.records.map((_, i) => i);
  if (bundle.kind === "text") {
    const records = bundle.records as TextRecord[];
    indices.sort((a, b) => {
      const ka = textSortKey(records[a]);
      const kb = textSortKey(records[b]);
      for (let i = 0; i < 3; i++) {
        if (ka[i] !== kb[i]) return ka[i] - kb[i];
      }
      return 0;
    });
  } else {
    const records = bundle.records as ImageRecord[];
    indices.sort((a, b) => records[a].id - records[b].id);
  }
  return indices;
}

function metadataJson(bundle: Bundle, order: number[]): Buffer {
  const records = order.map((i) => {
    const rec = bundle.records[i];
    if (bundle.kind === "text") {
      const t = rec as TextRecord;
      return {
        id: t.id,
        text: t.text,
        family: t.family,
        class_id: t.class_id,
        pair_class_id: t.pair_class_id,
        template_id: t.template_id,
      };
    }
    const m = rec as ImageRecord;
    return { id: m.id, label_class_id: m.label_class_id, source_path: m.source_path };
  });
  const doc = {
    kind: bundle.kind,
    class_names: bundle.classNames,
    encoder_tag: bundle.encoderTag,
    normalized: bundle.normalized,
    records,
  };
  return Buffer.from(canonicalJson(doc), "utf-8");
}

export function validateBundle(bundle: Bundle): void {
  const rows = bundle.records.length;
  if (bundle.dim < 1) throw new Error("feature dimension must be >= 1");
  if (bundle.features.length !== rows * bundle.dim) {
    throw new Error(
      `feature buffer holds ${bundle.features.length} values, expected ${rows * bundle.dim}`,
    );
  }
  for (const v of bundle.features) {
    if (!Number.isFinite(v)) throw new Error("feature matrix contains NaN or Inf");
  }
  const ids = new Set<number>();
  for (const rec of bundle.records) {
    if (ids.has(rec.id)) throw new Error(`duplicate record id ${rec.id}`);
    ids.add(rec.id);
  }
  if (bundle.kind === "text") {
    for (const rec of bundle.records as TextRecord[]) {
      if (!rec.text) throw new Error(`text record ${rec.id} has empty text`);
      if (rec.class_id < 0 || rec.class_id >= bundle.classNames.length) {
        throw new Error(`record ${rec.id} class_id ${rec.class_id} out of range`);
      }
      if ((rec.family === "one_to_one") !== (rec.pair_class_id !== null)) {
        throw new Error(`record ${rec.id} pair_class_id inconsistent with family`);
      }
    }
  } else {
    for (const rec of bundle.records as ImageRecord[]) {
      if (
        rec.label_class_id !== null &&
        (rec.label_class_id < 0 || rec.label_class_id >= bundle.classNames.length)
      ) {
        throw new Error(`record ${rec.id} label ${rec.label_class_id} out of range`);
      }
    }
  }
}

export function encodeBundle(bundle: Bundle): Buffer {
  validateBundle(bundle);
  const order = canonicalOrder(bundle);
  const meta = metadataJson(bundle, order);
  const rows = bundle.records.length;

  const header = Buffer.alloc(HEADER_LEN);
  header.write(MAGIC, 0, "ascii");
  header.writeUInt32LE(VERSION, 4);
  header.writeUInt32LE(rows, 8);
  header.writeUInt32LE(bundle.dim, 12);
  header.writeBigUInt64LE(BigInt(meta.length), 16);

  const payload = Buffer.alloc(rows * bundle.dim * 4);
  for (let out = 0; out < rows; out++) {
    const src = order[out];
    for (let k = 0; k < bundle.dim; k++) {
      payload.writeFloatLE(bundle.features[src * bundle.dim + k], (out * bundle.dim + k) * 4);
    }
  }
  return Buffer.concat([header, meta, payload]);
}

/** Atomic write: temp file in the target directory, then rename. */
export async function writeBundle(bundle: Bundle, path: string): Promise<void> {
  const blob = encodeBundle(bundle);
  const tmp = join(dirname(path) || ".", `.${randomBytes(6).toString("hex")}.tmp`);
  await fs.writeFile(tmp, blob);
  try {
    await fs.rename(tmp, path);
  } catch (err) {
    await fs.unlink(tmp).catch(() => undefined);
    throw err;
  }
}

export function decodeBundle(blob: Buffer): Bundle {
  if (blob.length < HEADER_LEN) throw new Error("file too short for header");
  if (blob.toString("ascii", 0, 4) !== MAGIC) {
    throw new Error(`bad magic ${blob.toString("ascii", 0, 4)}`);
  }
  const version = blob.readUInt32LE(4);
  if (version !== VERSION) throw new Error(`unsupported bundle version ${version}`);
  const rows = blob.readUInt32LE(8);
  const dim = blob.readUInt32LE(12);
  const metaLen = Number(blob.readBigUInt64LE(16));
  if (blob.length < HEADER_LEN + metaLen) throw new Error("metadata section truncated");
  const meta = JSON.parse(blob.toString("utf-8", HEADER_LEN, HEADER_LEN + metaLen));

  const expected = rows * dim * 4;
  const payload = blob.subarray(HEADER_LEN + metaLen);
  if (payload.length < expected) throw new Error("payload truncated");
  if (payload.length > expected) throw new Error("trailing bytes after payload");
  if (!Array.isArray(meta.records) || meta.records.length !== rows) {
    throw new Error(`metadata lists ${meta.records?.length} records, header declares ${rows}`);
  }

  const features = new Float32Array(rows * dim);
  for (let i = 0; i < features.length; i++) {
    features[i] = payload.readFloatLE(i * 4);
  }
  return {
    kind: meta.kind,
    classNames: meta.class_names ?? [],
    encoderTag: meta.encoder_tag ?? "",
    normalized: Boolean(meta.normalized),
    records: meta.records,
    features,
    dim,
  };
}

export async function readBundle(path: string): Promise<Bundle> {
  return decodeBundle(await fs.readFile(path));
}
