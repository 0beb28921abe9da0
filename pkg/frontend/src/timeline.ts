/**
 * Timeline strip: one selectable cell per frame, each drawing its graph as
 * colored rectangles/ellipses at node centroids. Rendering is a pure
 * function of (document, selection): re-render always clears and redraws.
 */

import { classColor, layoutFrame } from "./layout";
import type { GraphDocument } from "./graph";

export interface TimelineCallbacks {
  onSelectFrame(frame: number): void;
  onSelectNode(frame: number, nodeId: number | null): void;
}

export const CELL_SIZE = 96;

export function renderTimeline(
  container: HTMLElement,
  doc: GraphDocument,
  selectedFrame: number,
  selectedNode: number | null,
  callbacks: TimelineCallbacks,
): void {
  container.textContent = "";
  container.classList.add("timeline");
  doc.graphs.forEach((frame, f) => {
    const cell = document.createElement("div");
    cell.className = "timeline-cell" + (f === selectedFrame ? " selected" : "");
    cell.dataset.frame = String(f);

    const label = document.createElement("div");
    label.className = "timeline-label";
    label.textContent = `frame ${f}`;
    cell.appendChild(label);

    const canvas = document.createElement("canvas");
    canvas.width = CELL_SIZE;
    canvas.height = CELL_SIZE;
    drawFrame(canvas, doc, f, selectedNode);
    cell.appendChild(canvas);

    cell.addEventListener("click", () => callbacks.onSelectFrame(f));
    canvas.addEventListener("click", (event) => {
      const rect = canvas.getBoundingClientRect();
      const x = event.offsetX * (CELL_SIZE / rect.width);
      const y = event.offsetY * (CELL_SIZE / rect.height);
      callbacks.onSelectNode(f, hitTest(doc, f, x, y));
      event.stopPropagation();
    });
    container.appendChild(cell);
  });
}

export function drawFrame(
  canvas: HTMLCanvasElement,
  doc: GraphDocument,
  frameIndex: number,
  selectedNode: number | null,
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.fillStyle = "#1d1f24";
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  const { nodes, edges } = layoutFrame(doc.graphs[frameIndex], canvas.width);
  ctx.strokeStyle = "#667";
  ctx.lineWidth = 1;
  for (const edge of edges) {
    ctx.beginPath();
    ctx.moveTo(edge.from[0], edge.from[1]);
    ctx.lineTo(edge.to[0], edge.to[1]);
    ctx.stroke();
  }
  for (const node of nodes) {
    ctx.fillStyle = classColor(node.classId, doc.class_names.length);
    ctx.beginPath();
    ctx.ellipse(node.cx, node.cy, Math.max(node.width / 2, 2),
                Math.max(node.height / 2, 2), 0, 0, Math.PI * 2);
    ctx.fill();
    if (node.nodeId === selectedNode) {
      ctx.strokeStyle = "#fff";
      ctx.lineWidth = 2;
      ctx.stroke();
    }
  }
}

/** Topmost node whose painted extent covers the canvas point. */
export function hitTest(
  doc: GraphDocument,
  frameIndex: number,
  x: number,
  y: number,
  canvasSize: number = CELL_SIZE,
): number | null {
  const { nodes } = layoutFrame(doc.graphs[frameIndex], canvasSize);
  for (let i = nodes.length - 1; i >= 0; i--) {
    const n = nodes[i];
    const rx = Math.max(n.width / 2, 2);
    const ry = Math.max(n.height / 2, 2);
    const dx = (x - n.cx) / rx;
    const dy = (y - n.cy) / ry;
    if (dx * dx + dy * dy <= 1) return n.nodeId;
  }
  return null;
}
