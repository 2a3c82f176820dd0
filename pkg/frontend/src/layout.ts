/**
 * Depth-based tree layout, pure data in and out.
 *
 * Columns are depths, rows come from a leaf-first sweep: each leaf claims
 * the next free row, each interior node centers on its children. Branch
 * children therefore diverge vertically while chains stay on one row.
 */

import type { NodeDoc, TreeDoc } from "./api";

export interface PlacedNode {
  id: number;
  depth: number;
  row: number;
  x: number;
  y: number;
}

export interface PlacedEdge {
  from: number;
  to: number;
  label: string | null;
}

export interface TreeLayout {
  nodes: PlacedNode[];
  edges: PlacedEdge[];
  width: number;
  height: number;
}

export const CELL_W = 168;
export const CELL_H = 128;

/** What the connecting edge should say: the removed element, or the override. */
export function edgeLabel(child: NodeDoc): string | null {
  if (child.step && child.step.status === "accepted") return child.step.element;
  if (child.directive) {
    const el = child.directive.element;
    return el ? `${child.directive.action} ${el}` : child.directive.action;
  }
  return null;
}

export function layoutTree(doc: TreeDoc, cellW = CELL_W, cellH = CELL_H): TreeLayout {
  const byId = new Map<number, NodeDoc>(doc.nodes.map((n) => [n.id, n]));
  const rows = new Map<number, number>();
  const depths = new Map<number, number>();
  let nextRow = 0;

  const place = (id: number, depth: number): number => {
    const node = byId.get(id);
    if (!node) throw new Error(`edge to unknown node ${id}`);
    depths.set(id, depth);
    if (node.children.length === 0) {
      rows.set(id, nextRow);
      return nextRow++;
    }
    const childRows = node.children.map((c) => place(c, depth + 1));
    const row = (childRows[0] + childRows[childRows.length - 1]) / 2;
    rows.set(id, row);
    return row;
  };
  place(doc.root, 0);

  const nodes: PlacedNode[] = doc.nodes.map((n) => {
    const depth = depths.get(n.id) ?? 0;
    const row = rows.get(n.id) ?? 0;
    return { id: n.id, depth, row, x: depth * cellW, y: row * cellH };
  });
  const edges: PlacedEdge[] = [];
  for (const n of doc.nodes) {
    for (const child of n.children) {
      const target = byId.get(child);
      edges.push({ from: n.id, to: child, label: target ? edgeLabel(target) : null });
    }
  }
  const width = (Math.max(0, ...nodes.map((n) => n.depth)) + 1) * cellW;
  const height = (Math.max(0, ...nodes.map((n) => n.row)) + 1) * cellH;
  return { nodes, edges, width, height };
}

/** Root-to-node chain of ids, for the scrubber and path readouts. */
export function pathTo(doc: TreeDoc, nodeId: number): number[] {
  const byId = new Map<number, NodeDoc>(doc.nodes.map((n) => [n.id, n]));
  const path: number[] = [];
  let cur: number | null = nodeId;
  while (cur !== null) {
    const node: NodeDoc | undefined = byId.get(cur);
    if (!node) throw new Error(`unknown node ${cur}`);
    path.push(cur);
    cur = node.parent;
  }
  return path.reverse();
}
