#!/usr/bin/env node
/**
 * Encode a text set or a labeled image folder into a CODR bundle.
 *
 *   coder-export --model hash/512 --texts texts.json --out texts.codr
 *   coder-export --model hash/512 --images imgs/ --labels labels.tsv \
 *                [--classes classes.txt] --out imgs.codr
 *
 * texts.json is the generator's export: {"class_names": [...], "records":
 * [...]}. labels.tsv maps image paths (relative to the folder) to class
 * ids, one `path<TAB>class_id` per line; every image file in the folder
 * must be labeled. Features are unit-normalized unless --no-normalize.
 */

import { promises as fs } from "node:fs";
import { join } from "node:path";
import process from "node:process";

import { Encoder, normalizeRow, resolveEncoder } from "./encoder.js";
import { Bundle, ImageRecord, TextRecord, writeBundle } from "./format.js";

interface Args {
  model: string;
  texts?: string;
  images?: string;
  labels?: string;
  classes?: string;
  out: string;
  normalize: boolean;
}

export function parseArgs(argv: string[]): Args {
  const args: Partial<Args> = { normalize: true };
  for (let i = 0; i < argv.length; i++) {
    const flag = argv[i];
    const next = () => {
      if (i + 1 >= argv.length) throw new Error(`${flag} needs a value`);
      return argv[++i];
    };
    switch (flag) {
      case "--model":
        args.model = next();
        break;
      case "--texts":
        args.texts = next();
        break;
      case "--images":
        args.images = next();
        break;
      case "--labels":
        args.labels = next();
        break;
      case "--classes":
        args.classes = next();
        break;
      case "--out":
        args.out = next();
        break;
      case "--no-normalize":
        args.normalize = false;
        break;
      default:
        throw new Error(`unknown flag ${flag}`);
    }
  }
  if (!args.model) throw new Error("--model is required");
  if (!args.out) throw new Error("--out is required");
  if (!args.texts === !args.images) {
    throw new Error("exactly one of --texts or --images is required");
  }
  if (args.images && !args.labels) throw new Error("--images requires --labels");
  return args as Args;
}

function packRows(rows: Float64Array[], dim: number, normalize: boolean): Float32Array {
  const out = new Float32Array(rows.length * dim);
  rows.forEach((row, r) => {
    const v = normalize ? normalizeRow(row) : row;
    for (let k = 0; k < dim; k++) out[r * dim + k] = v[k];
  });
  return out;
}

async function exportTexts(args: Args, encoder: Encoder): Promise<Bundle> {
  const doc = JSON.parse(await fs.readFile(args.texts!, "utf-8"));
  const records: TextRecord[] = (doc.records ?? []).map((r: Record<string, unknown>) => ({
    id: Number(r.id),
    text: String(r.text ?? ""),
    family: r.family,
    class_id: Number(r.class_id),
    pair_class_id: r.pair_class_id === null || r.pair_class_id === undefined
      ? null
      : Number(r.pair_class_id),
    template_id: String(r.template_id ?? ""),
  }));
  if (records.length === 0) throw new Error("text set has no records");
  for (const rec of records) {
    if (!rec.text) throw new Error(`record ${rec.id} has empty text`);
  }
  const rows = records.map((r) => encoder.encodeText(r.text));
  return {
    kind: "text",
    classNames: doc.class_names ?? [],
    encoderTag: encoder.encoderTag,
    normalized: args.normalize,
    records,
    features: packRows(rows, encoder.dim, args.normalize),
    dim: encoder.dim,
  };
}

const IMAGE_EXTENSIONS = new Set([".png", ".jpg", ".jpeg", ".bmp", ".gif", ".webp", ".tif", ".tiff"]);

function isImageName(name: string): boolean {
  const dot = name.lastIndexOf(".");
  return dot >= 0 && IMAGE_EXTENSIONS.has(name.slice(dot).toLowerCase());
}

async function readLabels(path: string): Promise<Map<string, number>> {
  const out = new Map<string, number>();
  const text = await fs.readFile(path, "utf-8");
  text.split("\n").forEach((line, lineno) => {
    const trimmed = line.trim();
    if (!trimmed || trimmed.startsWith("#")) return;
    const tab = trimmed.indexOf("\t");
    if (tab < 0) throw new Error(`${path}:${lineno + 1}: expected path<TAB>class_id`);
    const classId = Number(trimmed.slice(tab + 1).trim());
    if (!Number.isInteger(classId) || classId < 0) {
      throw new Error(`${path}:${lineno + 1}: bad class id ${trimmed.slice(tab + 1)}`);
    }
    out.set(trimmed.slice(0, tab), classId);
  });
  return out;
}

async function exportImages(args: Args, encoder: Encoder): Promise<Bundle> {
  const labels = await readLabels(args.labels!);
  const names = (await fs.readdir(args.images!)).filter(isImageName).sort();
  if (names.length === 0) throw new Error(`no image files in ${args.images}`);

  const records: ImageRecord[] = [];
  const rows: Float64Array[] = [];
  for (const name of names) {
    const label = labels.get(name);
    if (label === undefined) {
      throw new Error(`image ${name} has no entry in ${args.labels}`);
    }
    const bytes = await fs.readFile(join(args.images!, name));
    rows.push(encoder.encodeImage(bytes));
    records.push({ id: records.length, label_class_id: label, source_path: name });
  }
  for (const labeled of labels.keys()) {
    if (!names.includes(labeled)) {
      throw new Error(`label entry ${labeled} has no matching image file`);
    }
  }

  let classNames: string[];
  if (args.classes) {
    classNames = (await fs.readFile(args.classes, "utf-8"))
      .split("\n").map((l) => l.trim()).filter((l) => l.length > 0);
  } else {
    const maxId = Math.max(...records.map((r) => r.label_class_id ?? 0));
    classNames = Array.from({ length: maxId + 1 }, (_, i) => `class_${i}`);
  }
  return {
    kind: "image",
    classNames,
    encoderTag: encoder.encoderTag,
    normalized: args.normalize,
    records,
    features: packRows(rows, encoder.dim, args.normalize),
    dim: encoder.dim,
  };
}

export async function run(argv: string[]): Promise<number> {
  const args = parseArgs(argv);
  const encoder = resolveEncoder(args.model);
  const bundle = args.texts
    ? await exportTexts(args, encoder)
    : await exportImages(args, encoder);
  await writeBundle(bundle, args.out);
  console.log(
    `wrote ${bundle.records.length} x ${bundle.dim} ${bundle.kind} bundle to ${args.out} ` +
    `(encoder ${bundle.encoderTag})`,
  );
  return 0;
}

const isMain = process.argv[1] !== undefined &&
  import.meta.url.endsWith(process.argv[1].split("/").pop() ?? "");
if (isMain) {
  run(process.argv.slice(2)).then(
    (code) => process.exit(code),
    (err) => {
      console.error(`error: ${err instanceof Error ? err.message : err}`);
      process.exit(1);
    },
  );
}
