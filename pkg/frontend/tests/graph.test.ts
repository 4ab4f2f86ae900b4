import { describe, expect, it } from "vitest";

import { layoutGraph, topologicalDepths } from "../src/graph";
import type { DagTask } from "../src/types";

const diamond: DagTask[] = [
  { task_id: "a", kind: "k", upstream: [] },
  { task_id: "b", kind: "k", upstream: ["a"] },
  { task_id: "c", kind: "k", upstream: ["a"] },
  { task_id: "d", kind: "k", upstream: ["b", "c"] },
];

describe("layered graph layout", () => {
  it("assigns rows by topological depth", () => {
    const depths = topologicalDepths(diamond);
    expect(depths.get("a")).toBe(0);
    expect(depths.get("b")).toBe(1);
    expect(depths.get("c")).toBe(1);
    expect(depths.get("d")).toBe(2);
  });

  it("orders a row alphabetically", () => {
    const layout = layoutGraph(diamond);
    const middleRow = layout.nodes.filter((n) => n.row === 1).sort((a, b) => a.col - b.col);
    expect(middleRow.map((n) => n.task_id)).toEqual(["b", "c"]);
  });

  it("is deterministic regardless of input order", () => {
    const reversed = [...diamond].reverse();
    expect(layoutGraph(reversed)).toEqual(layoutGraph(diamond));
  });

  it("draws one edge per upstream reference", () => {
    const layout = layoutGraph(diamond);
    expect(layout.edges.map((e) => `${e.from}->${e.to}`).sort()).toEqual([
      "a->b",
      "a->c",
      "b->d",
      "c->d",
    ]);
  });

  it("edges run from an upstream row to a deeper row", () => {
    const layout = layoutGraph(diamond);
    for (const edge of layout.edges) {
      expect(edge.y2).toBeGreaterThan(edge.y1);
    }
  });
});
