import type { TreeNode, TreePayload } from "../src/api";

/** A small two-level tree: root 0 -> {1: leafy internal, 4: leaf}, where node
 * 1 has leaves 2 and 3. Uncertainty values cover all four quartiles plus an
 * exact zero. */
export function fixturePayload(): TreePayload {
  const tree: TreeNode = {
    id: 0,
    label: "root",
    uncertainty: { model: 0, knowledge: 0, structure: 0, overall: 0 },
    children: [
      {
        id: 1,
        label: "left",
        uncertainty: { model: 0.1, knowledge: 0.1, structure: 0.1, overall: 0.1 },
        children: [
          {
            id: 2,
            label: "a",
            docs: ["d1", "d2", "d3"],
            uncertainty: { model: 0.3, knowledge: 0.3, structure: 0.3, overall: 0.3 },
            children: [],
          },
          {
            id: 3,
            label: "b",
            docs: ["d4"],
            uncertainty: { model: 0.6, knowledge: 0.6, structure: 0.6, overall: 0.6 },
            children: [],
          },
        ],
      },
      {
        id: 4,
        label: "right",
        docs: ["d5", "d6"],
        uncertainty: { model: 0.9, knowledge: 0.9, structure: 0.9, overall: 0.9 },
        children: [],
      },
    ],
  };
  return {
    version: 1,
    tree,
    layout: {
      order: { "0": [1, 4], "1": [2, 3] },
      visible: [0, 1, 2, 3, 4],
      collapsed: [],
    },
    categories: { d1: 0, d2: 0, d3: 0, d4: 1, d5: 1, d6: 1 },
  };
}

/** Same shape but with node 1 collapsed (its children hidden). */
export function collapsedPayload(): TreePayload {
  const p = fixturePayload();
  p.layout.visible = [0, 1, 4];
  p.layout.collapsed = [1];
  return p;
}

/** Root with one node whose docs split 3:1 across two categories. */
export function stripePayload(): TreePayload {
  const tree: TreeNode = {
    id: 0,
    label: "root",
    children: [
      {
        id: 1,
        label: "mixed",
        docs: ["a", "b", "c", "x"],
        children: [],
      },
    ],
  };
  return {
    version: 1,
    tree,
    layout: { order: { "0": [1] }, visible: [0, 1], collapsed: [] },
    categories: { a: 0, b: 0, c: 0, x: 1 },
  };
}
