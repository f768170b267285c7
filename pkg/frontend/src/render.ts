/** SVG rendering of the juxtaposed trees: layered left-to-right layout,
 * per-category document stripes, and uncertainty-coded dashed edges. */

import type { TreeNode, TreePayload } from "./api";

const SVG_NS = "http://www.w3.org/2000/svg";

/** First-level category colors, keyed by category index so assignment is
 * stable across re-layouts. */
const PALETTE = [
  "#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#b07aa1",
  "#76b7b2", "#edc948", "#ff9da7", "#9c755f", "#bab0ac",
];
const UNCATEGORIZED = "#999999";

export function colorForCategory(cat: number | undefined): string {
  if (cat === undefined || cat < 0) return UNCATEGORIZED;
  return PALETTE[cat % PALETTE.length];
}

/** Dash period (dash + gap, px) for an edge, monotone in overall uncertainty.
 * Zero means a solid line; the four nonzero levels are one per quartile. */
export function dashPeriod(overall: number): number {
  if (overall <= 0) return 0;
  if (overall < 0.25) return 4;
  if (overall < 0.5) return 8;
  if (overall < 0.75) return 13;
  return 19;
}

export function dashArray(overall: number): string | null {
  const period = dashPeriod(overall);
  if (period === 0) return null;
  const dash = Math.round(period * 0.6 * 10) / 10;
  return `${dash} ${Math.round((period - dash) * 10) / 10}`;
}

interface PlacedNode {
  node: TreeNode;
  depth: number;
  y: number;
  docCount: number;
  collapsed: boolean;
  categoryCounts: Map<number, number>;
}

export function docsUnder(node: TreeNode): string[] {
  const out: string[] = [];
  const stack = [node];
  while (stack.length) {
    const n = stack.pop()!;
    if (n.docs) out.push(...n.docs);
    stack.push(...n.children);
  }
  return out;
}

function indexTree(root: TreeNode): Map<number, TreeNode> {
  const byId = new Map<number, TreeNode>();
  const stack = [root];
  while (stack.length) {
    const n = stack.pop()!;
    byId.set(n.id, n);
    stack.push(...n.children);
  }
  return byId;
}

export interface RenderOptions {
  width?: number;
  columnGap?: number;
  rowGap?: number;
  barWidth?: number;
  selected?: number | null;
  highlighted?: Set<number>;
}

/** Compute positions for the visible cut of the tree, honoring the
 * server-provided child ordering. */
function placeNodes(payload: TreePayload, rowGap: number): PlacedNode[] {
  const byId = indexTree(payload.tree);
  const visible = new Set(payload.layout.visible);
  const collapsed = new Set(payload.layout.collapsed);
  if (!visible.size) visible.add(payload.tree.id);
  const placed: PlacedNode[] = [];
  let nextRow = 0;

  const walk = (nid: number, depth: number): number => {
    const node = byId.get(nid);
    if (!node) return 0;
    const order = payload.layout.order[String(nid)] ?? node.children.map((c) => c.id);
    const shownChildren = collapsed.has(nid)
      ? []
      : order.filter((c) => visible.has(c));
    let y: number;
    if (!shownChildren.length) {
      y = nextRow * rowGap;
      nextRow += 1;
    } else {
      const ys = shownChildren.map((c) => walk(c, depth + 1));
      y = ys.reduce((a, b) => a + b, 0) / ys.length;
    }
    const docs = docsUnder(node);
    const counts = new Map<number, number>();
    for (const d of docs) {
      const cat = payload.categories[d] ?? -1;
      counts.set(cat, (counts.get(cat) ?? 0) + 1);
    }
    placed.push({
      node,
      depth,
      y,
      docCount: docs.length,
      collapsed: collapsed.has(nid),
      categoryCounts: counts,
    });
    return y;
  };

  walk(payload.tree.id, 0);
  return placed;
}

function el(doc: Document, tag: string, attrs: Record<string, string>): Element {
  const e = doc.createElementNS(SVG_NS, tag);
  for (const [k, v] of Object.entries(attrs)) e.setAttribute(k, v);
  return e;
}

/** Render one tree panel into a fresh <svg>. Bars encode document counts,
 * split into category stripes; edges dash-code the child's uncertainty. */
export function renderTreePanel(
  doc: Document,
  payload: TreePayload,
  which: string,
  opts: RenderOptions = {},
): SVGSVGElement {
  const columnGap = opts.columnGap ?? 150;
  const rowGap = opts.rowGap ?? 34;
  const barWidth = opts.barWidth ?? 12;
  const placed = placeNodes(payload, rowGap);
  const maxDocs = Math.max(1, ...placed.map((p) => p.docCount));
  const maxBar = rowGap - 6;
  const minBar = 6;
  const pos = new Map<number, PlacedNode>();
  for (const p of placed) pos.set(p.node.id, p);

  const maxDepth = Math.max(0, ...placed.map((p) => p.depth));
  const height = Math.max(...placed.map((p) => p.y), 0) + rowGap + 20;
  const svg = el(doc, "svg", {
    width: String((maxDepth + 1) * columnGap + 140),
    height: String(height),
    "data-tree": which,
  }) as SVGSVGElement;

  const edges = el(doc, "g", { class: "edges" });
  const nodes = el(doc, "g", { class: "nodes" });
  svg.appendChild(edges);
  svg.appendChild(nodes);

  for (const p of placed) {
    const x = p.depth * columnGap + 20;
    const yMid = p.y + rowGap / 2;
    const barH = Math.max(minBar, (p.docCount / maxDocs) * maxBar);

    const parentId = findParent(payload.tree, p.node.id);
    if (parentId !== null && pos.has(parentId)) {
      const pp = pos.get(parentId)!;
      const px = pp.depth * columnGap + 20 + barWidth;
      const pyMid = pp.y + rowGap / 2;
      const overall = p.node.uncertainty?.overall ?? 0;
      const attrs: Record<string, string> = {
        d: `M ${px} ${pyMid} C ${(px + x) / 2} ${pyMid}, ${(px + x) / 2} ${yMid}, ${x} ${yMid}`,
        fill: "none",
        stroke: "#555",
        "stroke-width": "1.5",
        "data-edge-to": String(p.node.id),
        "data-uncertainty": overall.toFixed(4),
      };
      const dashes = dashArray(overall);
      if (dashes) attrs["stroke-dasharray"] = dashes;
      edges.appendChild(el(doc, "path", attrs));
    }

    const g = el(doc, "g", {
      class: "node",
      "data-node-id": String(p.node.id),
      "data-collapsed": p.collapsed ? "true" : "false",
      "data-doc-count": String(p.docCount),
      transform: `translate(${x} ${yMid - barH / 2})`,
    });
    if (opts.selected === p.node.id) g.setAttribute("data-selected", "true");
    if (opts.highlighted?.has(p.node.id)) g.setAttribute("data-highlighted", "true");

    // Stripes: one segment per category, heights proportional to doc counts.
    const cats = [...p.categoryCounts.entries()].sort((a, b) => a[0] - b[0]);
    const total = cats.reduce((acc, [, c]) => acc + c, 0);
    let offset = 0;
    if (!total) {
      g.appendChild(
        el(doc, "rect", {
          x: "0", y: "0", width: String(barWidth), height: String(barH),
          fill: UNCATEGORIZED, "data-category": "-1", "data-count": "0",
        }),
      );
    }
    for (const [cat, count] of cats) {
      const h = (count / total) * barH;
      g.appendChild(
        el(doc, "rect", {
          x: "0",
          y: offset.toFixed(2),
          width: String(barWidth),
          height: h.toFixed(2),
          fill: colorForCategory(cat),
          "data-category": String(cat),
          "data-count": String(count),
        }),
      );
      offset += h;
    }

    // Glyph: circle for internal, square for leaf, plus-marked circle when
    // children are collapsed away.
    const cx = barWidth + 7;
    const cy = barH / 2;
    if (p.collapsed) {
      g.appendChild(el(doc, "circle", {
        cx: String(cx), cy: String(cy), r: "5",
        fill: "#fff", stroke: "#333", class: "glyph glyph-collapsed",
      }));
      g.appendChild(el(doc, "path", {
        d: `M ${cx - 3} ${cy} H ${cx + 3} M ${cx} ${cy - 3} V ${cy + 3}`,
        stroke: "#333", class: "glyph-plus",
      }));
    } else if (!p.node.children.length) {
      g.appendChild(el(doc, "rect", {
        x: String(cx - 4), y: String(cy - 4), width: "8", height: "8",
        fill: "#333", class: "glyph glyph-leaf",
      }));
    } else {
      g.appendChild(el(doc, "circle", {
        cx: String(cx), cy: String(cy), r: "4",
        fill: "#333", class: "glyph glyph-internal",
      }));
    }

    const label = el(doc, "text", {
      x: String(barWidth + 16),
      y: String(cy + 4),
      "font-size": "11",
      class: "label",
    });
    label.textContent = p.node.label || `#${p.node.id}`;
    g.appendChild(label);
    nodes.appendChild(g);
  }

  return svg;
}

function findParent(root: TreeNode, target: number): number | null {
  const stack: TreeNode[] = [root];
  while (stack.length) {
    const n = stack.pop()!;
    for (const c of n.children) {
      if (c.id === target) return n.id;
      stack.push(c);
    }
  }
  return null;
}

/** True when `maybeAncestor` is an ancestor of `nid` (or the same node). */
export function isAncestorOrSelf(
  root: TreeNode,
  maybeAncestor: number,
  nid: number,
): boolean {
  if (maybeAncestor === nid) return true;
  const byId = indexTree(root);
  const start = byId.get(maybeAncestor);
  if (!start) return false;
  const stack = [...start.children];
  while (stack.length) {
    const n = stack.pop()!;
    if (n.id === nid) return true;
    stack.push(...n.children);
  }
  return false;
}
