"""Seeded random DAG generation shared by engine tests and the acceptance suite."""

from __future__ import annotations

import random

from surveyflow import DagSpec, TaskSpec


def build_random_dag(rnd: random.Random, n_tasks: int, dag_id: str = "random", kind: str = "compute") -> DagSpec:
    """Random acyclic graph: each task may depend on a few earlier tasks."""
    tasks = []
    for i in range(n_tasks):
        if i == 0:
            upstream: tuple[str, ...] = ()
        else:
            k = rnd.randint(0, min(i, 3))
            upstream = tuple(sorted(rnd.sample([f"t{j:02d}" for j in range(i)], k)))
        tasks.append(
            TaskSpec(
                task_id=f"t{i:02d}",
                kind=kind,
                params={"salt": str(rnd.randint(0, 10**9))},
                upstream=upstream,
            )
        )
    return DagSpec(dag_id, 1, tuple(tasks))


def inject_back_edge(rnd: random.Random, spec: DagSpec) -> DagSpec | None:
    """Add an edge from a task to one of its ancestors (guaranteed cycle), or None."""
    ancestors: dict[str, set[str]] = {}
    by_id = {t.task_id: t for t in spec.tasks}
    for task in spec.tasks:
        acc: set[str] = set()
        frontier = list(task.upstream)
        while frontier:
            dep = frontier.pop()
            if dep not in acc:
                acc.add(dep)
                frontier.extend(by_id[dep].upstream)
        ancestors[task.task_id] = acc

    candidates = [(tid, anc) for tid, ancs in ancestors.items() for anc in ancs]
    if not candidates:
        return None
    descendant, ancestor = rnd.choice(sorted(candidates))
    mutated = tuple(
        TaskSpec(t.task_id, t.kind, params=t.params, upstream=t.upstream + (descendant,))
        if t.task_id == ancestor
        else t
        for t in spec.tasks
    )
    return DagSpec(spec.dag_id, spec.version, mutated)
