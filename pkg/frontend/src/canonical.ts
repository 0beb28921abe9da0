/**
 * Canonical sg2vid.graph/1 serialization, byte-compatible with the server.
 *
 * The server emits sorted keys, no whitespace, integers bare, and every
 * float as fixed 6-decimal with round-half-even of the exact double value.
 * Half-even on the exact value matters: dyadic rationals like 2^-7
 * (0.0078125) are ties at the 7th decimal and naive toFixed rounds them the
 * other way. We decompose the double via its bits and round with BigInt
 * arithmetic, so local documents replayed through the server compare
 * byte-identical.
 */

import type { GraphDocument, GraphFrame, NodeDoc } from "./graph";

const MILLION = 1_000_000n;

/** Fixed 6-decimal rendering of a finite double, round-half-even, exact. */
export function formatFixed6(value: number): string {
  if (!Number.isFinite(value)) {
    throw new Error(`non-finite float ${value} cannot be serialized`);
  }
  if (value === 0) {
    // Folds -0 into 0, matching the server's normalization.
    return "0.000000";
  }
  const negative = value < 0;
  const magnitude = Math.abs(value);

  const view = new DataView(new ArrayBuffer(8));
  view.setFloat64(0, magnitude);
  const bits = view.getBigUint64(0);
  const exponentBits = Number((bits >> 52n) & 0x7ffn);
  const fractionBits = bits & 0xf_ffff_ffff_ffffn;
  let mantissa: bigint;
  let exponent: number;
  if (exponentBits === 0) {
    mantissa = fractionBits;
    exponent = -1074;
  } else {
    mantissa = fractionBits | (1n << 52n);
    exponent = exponentBits - 1075;
  }

  // magnitude = mantissa * 2^exponent exactly; scale by 10^6 and round.
  let numerator: bigint;
  let denominator: bigint;
  if (exponent >= 0) {
    numerator = mantissa * MILLION * (1n << BigInt(exponent));
    denominator = 1n;
  } else {
    numerator = mantissa * MILLION;
    denominator = 1n << BigInt(-exponent);
  }
  let scaled = numerator / denominator;
  const remainder = numerator % denominator;
  const doubled = remainder * 2n;
  if (doubled > denominator || (doubled === denominator && (scaled & 1n) === 1n)) {
    scaled += 1n;
  }

  const whole = scaled / MILLION;
  const frac = (scaled % MILLION).toString().padStart(6, "0");
  return `${negative ? "-" : ""}${whole.toString()}.${frac}`;
}

/** String escaping identical to Python's json.dumps (ensure_ascii). */
export function escapeJsonString(s: string): string {
  let out = '"';
  for (let i = 0; i < s.length; i++) {
    const code = s.charCodeAt(i);
    const ch = s[i];
    if (ch === '"') out += '\\"';
    else if (ch === "\\") out += "\\\\";
    else if (ch === "\n") out += "\\n";
    else if (ch === "\r") out += "\\r";
    else if (ch === "\t") out += "\\t";
    else if (ch === "\b") out += "\\b";
    else if (ch === "\f") out += "\\f";
    else if (code < 0x20 || code > 0x7e) {
      out += "\\u" + code.toString(16).padStart(4, "0");
    } else out += ch;
  }
  return out + '"';
}

function nodeText(node: NodeDoc): string {
  // Keys in sorted order: centroid, class_id, depth, flow, id, spread.
  return (
    "{" +
    `"centroid":[${formatFixed6(node.centroid[0])},${formatFixed6(node.centroid[1])}],` +
    `"class_id":${node.class_id},` +
    `"depth":${formatFixed6(node.depth)},` +
    `"flow":[${formatFixed6(node.flow[0])},${formatFixed6(node.flow[1])}],` +
    `"id":${node.id},` +
    `"spread":[${formatFixed6(node.spread[0])},${formatFixed6(node.spread[1])}]` +
    "}"
  );
}

function frameText(frame: GraphFrame): string {
  const nodes = [...frame.nodes].sort((a, b) => a.id - b.id).map(nodeText);
  const edges = frame.edges
    .map(([a, b]) => (a < b ? [a, b] : [b, a]))
    .sort((x, y) => x[0] - y[0] || x[1] - y[1])
    .map(([a, b]) => `[${a},${b}]`);
  return (
    "{" +
    `"edges":[${edges.join(",")}],` +
    `"frame_index":${frame.frame_index},` +
    `"nodes":[${nodes.join(",")}]` +
    "}"
  );
}

/** Canonical text of a whole document; matches the server byte for byte. */
export function canonicalGraphText(doc: GraphDocument): string {
  const classNames = doc.class_names.map(escapeJsonString).join(",");
  const graphs = doc.graphs.map(frameText).join(",");
  return (
    "{" +
    `"class_names":[${classNames}],` +
    `"graphs":[${graphs}],` +
    `"image_size":[${doc.image_size[0]},${doc.image_size[1]}],` +
    `"version":${escapeJsonString(doc.version)}` +
    "}"
  );
}
