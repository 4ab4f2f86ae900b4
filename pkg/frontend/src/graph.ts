/**
 * Layered DAG drawing: tasks are placed by topological depth (row) and,
 * within a row, alphabetically (column). Same graph in, same pixels out —
 * layouts are deterministic so screenshots are comparable.
 */

import type { DagTask } from "./types";

export interface NodePlacement {
  task_id: string;
  row: number; // topological depth
  col: number; // alphabetic index within the row
  x: number;
  y: number;
}

export interface EdgePlacement {
  from: string;
  to: string;
  x1: number;
  y1: number;
  x2: number;
  y2: number;
}

export interface GraphLayout {
  nodes: NodePlacement[];
  edges: EdgePlacement[];
  width: number;
  height: number;
}

export const NODE_W = 168;
export const NODE_H = 40;
export const GAP_X = 28;
export const GAP_Y = 44;

export function topologicalDepths(tasks: DagTask[]): Map<string, number> {
  const upstream = new Map(tasks.map((t) => [t.task_id, t.upstream]));
  const depths = new Map<string, number>();

  const depthOf = (taskId: string, trail: Set<string>): number => {
    const known = depths.get(taskId);
    if (known !== undefined) return known;
    if (trail.has(taskId)) return 0; // defensive: server never sends cycles
    trail.add(taskId);
    const ups = upstream.get(taskId) ?? [];
    const depth = ups.length === 0 ? 0 : 1 + Math.max(...ups.map((u) => depthOf(u, trail)));
    depths.set(taskId, depth);
    return depth;
  };

  for (const task of tasks) depthOf(task.task_id, new Set());
  return depths;
}

export function layoutGraph(tasks: DagTask[]): GraphLayout {
  const depths = topologicalDepths(tasks);
  const rows = new Map<number, string[]>();
  for (const task of tasks) {
    const depth = depths.get(task.task_id) ?? 0;
    const row = rows.get(depth) ?? [];
    row.push(task.task_id);
    rows.set(depth, row);
  }

  const nodes: NodePlacement[] = [];
  const position = new Map<string, { x: number; y: number }>();
  const maxCols = Math.max(1, ...[...rows.values()].map((r) => r.length));
  for (const [row, ids] of [...rows.entries()].sort((a, b) => a[0] - b[0])) {
    ids.sort();
    const rowWidth = ids.length * NODE_W + (ids.length - 1) * GAP_X;
    const fullWidth = maxCols * NODE_W + (maxCols - 1) * GAP_X;
    const offset = (fullWidth - rowWidth) / 2;
    ids.forEach((taskId, col) => {
      const x = offset + col * (NODE_W + GAP_X);
      const y = row * (NODE_H + GAP_Y);
      nodes.push({ task_id: taskId, row, col, x, y });
      position.set(taskId, { x, y });
    });
  }

  const edges: EdgePlacement[] = [];
  for (const task of [...tasks].sort((a, b) => a.task_id.localeCompare(b.task_id))) {
    const to = position.get(task.task_id);
    if (!to) continue;
    for (const up of [...task.upstream].sort()) {
      const from = position.get(up);
      if (!from) continue;
      edges.push({
        from: up,
        to: task.task_id,
        x1: from.x + NODE_W / 2,
        y1: from.y + NODE_H,
        x2: to.x + NODE_W / 2,
        y2: to.y,
      });
    }
  }

  const width = maxCols * NODE_W + (maxCols - 1) * GAP_X;
  const height = rows.size * NODE_H + (rows.size - 1) * GAP_Y;
  return { nodes, edges, width, height };
}
