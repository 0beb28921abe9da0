/**
 * Pure layout mapping from graph attributes to canvas geometry. Kept free
 * of DOM so the node-placement contract is unit-testable: positions are
 * centroid fractions times the canvas size, sizes are spread fractions.
 */

import type { GraphFrame, NodeDoc } from "./graph";

export interface NodeLayout {
  nodeId: number;
  classId: number;
  cx: number; // canvas px
  cy: number;
  width: number;
  height: number;
}

export interface EdgeLayout {
  from: [number, number];
  to: [number, number];
}

export function layoutNode(node: NodeDoc, canvasSize: number): NodeLayout {
  return {
    nodeId: node.id,
    classId: node.class_id,
    cx: node.centroid[1] * canvasSize,
    cy: node.centroid[0] * canvasSize,
    width: node.spread[1] * canvasSize,
    height: node.spread[0] * canvasSize,
  };
}

export function layoutFrame(frame: GraphFrame, canvasSize: number): {
  nodes: NodeLayout[];
  edges: EdgeLayout[];
} {
  const nodes = frame.nodes.map((n) => layoutNode(n, canvasSize));
  const byId = new Map(nodes.map((n) => [n.nodeId, n]));
  const edges: EdgeLayout[] = [];
  for (const [a, b] of frame.edges) {
    const na = byId.get(a);
    const nb = byId.get(b);
    if (na && nb) edges.push({ from: [na.cx, na.cy], to: [nb.cx, nb.cy] });
  }
  return { nodes, edges };
}

/** Stable class colors matching the synthetic palette's hue spacing. */
export function classColor(classId: number, classCount: number): string {
  if (classId === 0) return "#999";
  const hue = ((classId - 1) / Math.max(classCount - 1, 1)) * 360;
  return `hsl(${hue}, 75%, 55%)`;
}
