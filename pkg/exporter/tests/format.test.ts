import { mkdtemp, readFile } from "node:fs/promises";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import {
  Bundle,
  TextRecord,
  canonicalJson,
  decodeBundle,
  encodeBundle,
  readBundle,
  writeBundle,
} from "../src/format.js";

function textBundle(overrides: Partial<Bundle> = {}): Bundle {
  const records: TextRecord[] = [
    { id: 1, text: "a photo of a dog", family: "class_name", class_id: 1, pair_class_id: null, template_id: "t" },
    { id: 0, text: "a photo of a cat", family: "class_name", class_id: 0, pair_class_id: null, template_id: "t" },
    { id: 2, text: "a photo of a cat, which has fur", family: "attribute", class_id: 0, pair_class_id: null, template_id: "t" },
  ];
  return {
    kind: "text",
    classNames: ["cat", "dog"],
    encoderTag: "hash/4+deадbeef".replace("ад", "ad"),
    normalized: false,
    records,
    features: new Float32Array([1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12]),
    dim: 4,
    ...overrides,
  };
}

describe("canonicalJson", () => {
  it("sorts keys recursively and uses compact separators", () => {
    expect(canonicalJson({ b: 1, a: { d: null, c: [1, "x"] } })).toBe(
      '{"a":{"c":[1,"x"],"d":null},"b":1}',
    );
  });

  it("keeps unicode raw", () => {
    expect(canonicalJson({ k: "naïve" })).toBe('{"k":"naïve"}');
  });
});

describe("encode/decode", () => {
  it("round-trips and canonically orders text records", () => {
    const bundle = textBundle();
    const decoded = decodeBundle(encodeBundle(bundle));
    const records = decoded.records as TextRecord[];
    // (class_id, family, id): cat class_name, cat attribute, dog class_name
    expect(records.map((r) => r.id)).toEqual([0, 2, 1]);
    // feature rows follow their records
    expect(Array.from(decoded.features.slice(0, 4))).toEqual([5, 6, 7, 8]);
    expect(decoded.classNames).toEqual(["cat", "dog"]);
  });

  it("re-encoding a decoded bundle is byte-identical", () => {
    const first = encodeBundle(textBundle());
    const second = encodeBundle(decodeBundle(first));
    expect(second.equals(first)).toBe(true);
  });

  it("rejects NaN features", () => {
    const bundle = textBundle();
    bundle.features[3] = Number.NaN;
    expect(() => encodeBundle(bundle)).toThrow(/NaN/);
  });

  it("rejects duplicate record ids", () => {
    const bundle = textBundle();
    (bundle.records as TextRecord[])[1].id = 1;
    expect(() => encodeBundle(bundle)).toThrow(/duplicate/);
  });

  it("rejects empty text", () => {
    const bundle = textBundle();
    (bundle.records as TextRecord[])[0].text = "";
    expect(() => encodeBundle(bundle)).toThrow(/empty text/);
  });

  it("rejects bad magic on decode", () => {
    const blob = encodeBundle(textBundle());
    blob.write("XXXX", 0, "ascii");
    expect(() => decodeBundle(blob)).toThrow(/magic/);
  });

  it("rejects truncated payload", () => {
    const blob = encodeBundle(textBundle());
    expect(() => decodeBundle(blob.subarray(0, blob.length - 4))).toThrow(/truncated/);
  });
});

describe("writeBundle", () => {
  it("writes a readable file", async () => {
    const dir = await mkdtemp(join(tmpdir(), "codr-"));
    const path = join(dir, "t.codr");
    await writeBundle(textBundle(), path);
    const loaded = await readBundle(path);
    expect(loaded.kind).toBe("text");
    expect((await readFile(path)).subarray(0, 4).toString("ascii")).toBe("CODR");
  });
});
