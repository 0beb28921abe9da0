/**
 * Graph document types, validation, and edit-op application.
 *
 * Edit semantics mirror the server exactly (same lerp formula, same bounds,
 * same error conditions), so a locally edited document and the server's
 * replay of the same op list serialize to identical bytes. The editor never
 * submits a document or op the validator here rejects.
 */

export interface NodeDoc {
  id: number;
  class_id: number;
  centroid: [number, number]; // (cy, cx) fractions
  spread: [number, number]; // (h, w) fractions
  flow: [number, number]; // (fy, fx) fractions, may be negative
  depth: number;
}

export interface GraphFrame {
  frame_index: number;
  nodes: NodeDoc[];
  edges: [number, number][];
}

export interface GraphDocument {
  version: string;
  image_size: [number, number];
  class_names: string[];
  graphs: GraphFrame[];
}

export type OpKind = "set_attr" | "add_node" | "remove_node" | "interpolate_attr";

export interface EditOp {
  op_kind: OpKind;
  node_id?: number;
  frames?: [number, number]; // inclusive
  attr?: string;
  value?: number | [number, number];
  node?: NodeDoc;
}

export const GRAPH_SCHEMA_VERSION = "sg2vid.graph/1";

const ATTR_BOUNDS: Record<string, [number, number]> = {
  centroid: [0, 1],
  spread: [0, 1],
  flow: [-1, 1],
  depth: [0, 1],
};

const ATTR_COMPONENTS: Record<string, string[]> = {
  centroid: ["cy", "cx"],
  spread: ["h", "w"],
  flow: ["fy", "fx"],
  depth: [],
};

export class GraphError extends Error {}

export function attrBounds(attr: string): [number, number] {
  const base = attr.split(".")[0];
  const bounds = ATTR_BOUNDS[base];
  if (!bounds) throw new GraphError(`unknown attribute ${attr}`);
  return bounds;
}

function splitAttr(attr: string): [keyof NodeDoc, number | null] {
  const [base, comp] = attr.split(".");
  const components = ATTR_COMPONENTS[base];
  if (components === undefined) throw new GraphError(`unknown attribute ${attr}`);
  if (!comp) return [base as keyof NodeDoc, null];
  const idx = components.indexOf(comp);
  if (idx < 0) throw new GraphError(`unknown attribute component ${attr}`);
  return [base as keyof NodeDoc, idx];
}

export function cloneDocument(doc: GraphDocument): GraphDocument {
  return structuredClone(doc);
}

export function validateDocument(doc: GraphDocument): void {
  if (doc.version !== GRAPH_SCHEMA_VERSION) {
    throw new GraphError(`unsupported version ${doc.version}`);
  }
  doc.graphs.forEach((frame, i) => {
    if (frame.frame_index !== i) {
      throw new GraphError(`graphs[${i}] has frame_index ${frame.frame_index}`);
    }
    const ids = new Set<number>();
    for (const node of frame.nodes) {
      if (ids.has(node.id)) throw new GraphError(`frame ${i}: duplicate node id ${node.id}`);
      ids.add(node.id);
      if (node.class_id < 0 || node.class_id >= doc.class_names.length) {
        throw new GraphError(`frame ${i}: node ${node.id} class out of range`);
      }
      for (const [attr, [lo, hi]] of Object.entries(ATTR_BOUNDS)) {
        const value = node[attr as keyof NodeDoc];
        const parts = Array.isArray(value) ? value : [value as number];
        for (const v of parts) {
          if (!(v >= lo && v <= hi)) {
            throw new GraphError(`frame ${i}: node ${node.id} ${attr}=${v} outside [${lo}, ${hi}]`);
          }
        }
      }
    }
    const seen = new Set<string>();
    for (const [a, b] of frame.edges) {
      if (a === b) throw new GraphError(`frame ${i}: self-edge on ${a}`);
      if (!ids.has(a) || !ids.has(b)) {
        throw new GraphError(`frame ${i}: edge [${a}, ${b}] references a missing node`);
      }
      const key = `${Math.min(a, b)}-${Math.max(a, b)}`;
      if (seen.has(key)) throw new GraphError(`frame ${i}: duplicate edge [${a}, ${b}]`);
      seen.add(key);
    }
  });
}

function frameRange(doc: GraphDocument, frames: [number, number] | undefined): number[] {
  if (!frames) return doc.graphs.map((_, i) => i);
  const [start, end] = frames;
  if (start > end) throw new GraphError(`frame range (${start}, ${end}) is empty`);
  if (start < 0 || end >= doc.graphs.length) {
    throw new GraphError(`frame range (${start}, ${end}) outside sequence`);
  }
  const out = [];
  for (let f = start; f <= end; f++) out.push(f);
  return out;
}

function nodeIn(frame: GraphFrame, nodeId: number): NodeDoc {
  const node = frame.nodes.find((n) => n.id === nodeId);
  if (!node) {
    throw new GraphError(`unknown node id ${nodeId} at frame ${frame.frame_index}`);
  }
  return node;
}

function setAttr(node: NodeDoc, attr: string, value: number | [number, number]): void {
  const [base, comp] = splitAttr(attr);
  const [lo, hi] = attrBounds(attr);
  const check = (v: number) => {
    if (!(v >= lo && v <= hi)) throw new GraphError(`${attr}=${v} outside [${lo}, ${hi}]`);
  };
  if (base === "depth") {
    const v = value as number;
    check(v);
    node.depth = v;
  } else if (comp === null) {
    const pair = value as [number, number];
    pair.forEach(check);
    (node[base] as [number, number]) = [pair[0], pair[1]];
  } else {
    const v = value as number;
    check(v);
    (node[base] as [number, number])[comp] = v;
  }
}

function getAttr(node: NodeDoc, attr: string): number | [number, number] {
  const [base, comp] = splitAttr(attr);
  if (base === "depth") return node.depth;
  const pair = node[base] as [number, number];
  return comp === null ? [pair[0], pair[1]] : pair[comp];
}

/** Identical arithmetic to the server: a + (b - a) * t in float64. */
function lerp(a: number, b: number, t: number): number {
  return a + (b - a) * t;
}

export function applyEdit(doc: GraphDocument, op: EditOp): GraphDocument {
  const out = cloneDocument(doc);
  switch (op.op_kind) {
    case "set_attr": {
      if (op.attr === undefined || op.node_id === undefined) {
        throw new GraphError("set_attr requires node_id and attr");
      }
      for (const f of frameRange(out, op.frames)) {
        setAttr(nodeIn(out.graphs[f], op.node_id), op.attr, op.value!);
      }
      return out;
    }
    case "add_node": {
      if (!op.node) throw new GraphError("add_node requires a node");
      for (const f of frameRange(out, op.frames)) {
        const frame = out.graphs[f];
        if (frame.nodes.some((n) => n.id === op.node!.id)) {
          throw new GraphError(`node id ${op.node.id} already present at frame ${f}`);
        }
        frame.nodes.push(structuredClone(op.node));
      }
      return out;
    }
    case "remove_node": {
      if (op.node_id === undefined) throw new GraphError("remove_node requires node_id");
      for (const f of frameRange(out, op.frames)) {
        const frame = out.graphs[f];
        nodeIn(frame, op.node_id);
        frame.nodes = frame.nodes.filter((n) => n.id !== op.node_id);
        frame.edges = frame.edges.filter(([a, b]) => a !== op.node_id && b !== op.node_id);
      }
      return out;
    }
    case "interpolate_attr": {
      if (!op.frames || op.attr === undefined || op.node_id === undefined) {
        throw new GraphError("interpolate_attr requires node_id, attr and frames");
      }
      const [start, end] = op.frames;
      if (start >= end) throw new GraphError(`start ${start} must precede end ${end}`);
      frameRange(out, op.frames);
      const v0 = getAttr(nodeIn(out.graphs[start], op.node_id), op.attr);
      const v1 = getAttr(nodeIn(out.graphs[end], op.node_id), op.attr);
      for (let f = start + 1; f < end; f++) {
        const frame = out.graphs[f];
        const node = frame.nodes.find((n) => n.id === op.node_id);
        if (!node) throw new GraphError(`node ${op.node_id} missing at intermediate frame ${f}`);
        const t = (f - start) / (end - start);
        if (Array.isArray(v0)) {
          const pair = v1 as [number, number];
          setAttr(node, op.attr, [lerp(v0[0], pair[0], t), lerp(v0[1], pair[1], t)]);
        } else {
          setAttr(node, op.attr, lerp(v0, v1 as number, t));
        }
      }
      return out;
    }
    default:
      throw new GraphError(`unknown op kind ${(op as EditOp).op_kind}`);
  }
}

export function applyEdits(doc: GraphDocument, ops: EditOp[]): GraphDocument {
  let current = doc;
  for (const op of ops) current = applyEdit(current, op);
  return current;
}
