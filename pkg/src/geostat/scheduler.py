"""Sequential-task-flow runtime.

Tasks are submitted in program order together with the tile ids they read and
write. :func:`build_dag` turns the stream into a dependency graph using
last-writer tracking per tile, and :func:`execute` runs the graph on a pool of
worker threads with per-worker deques and work stealing. Because every tile's
writers are totally ordered by the graph, results do not depend on the number
of workers or on the scheduling interleaving.
"""

from __future__ import annotations

import csv
import os
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Hashable, Iterable

from threadpoolctl import threadpool_limits


@dataclass(eq=False)
class Task:
    kernel: Callable[[], object]
    reads: frozenset
    writes: frozenset
    seq: int
    name: str = "task"


@dataclass
class TaskGraph:
    tasks: list[Task]
    edges: set[tuple[int, int]] = field(default_factory=set)

    def __len__(self) -> int:
        return len(self.tasks)

    def successors(self) -> list[list[int]]:
        succ = [[] for _ in self.tasks]
        for i, j in sorted(self.edges):
            succ[i].append(j)
        return succ

    def predecessors(self) -> list[list[int]]:
        pred = [[] for _ in self.tasks]
        for i, j in sorted(self.edges):
            pred[j].append(i)
        return pred

    def critical_path(self) -> int:
        """Number of tasks on the longest dependency chain."""
        depth = [1] * len(self.tasks)
        pred = self.predecessors()
        for j in range(len(self.tasks)):
            for i in pred[j]:
                depth[j] = max(depth[j], depth[i] + 1)
        return max(depth, default=0)


@dataclass(frozen=True)
class TraceRecord:
    task_id: int
    kernel: str
    begin_ns: int
    end_ns: int
    worker: int


def build_dag(stream: Iterable[Task]) -> TaskGraph:
    """Infer dependency edges from read/write sets.

    An edge ``i -> j`` is added for read-after-write, write-after-write and
    write-after-read hazards on a shared tile. Only the most recent writer and
    the readers since then are tracked, so some transitive edges are omitted;
    the transitive closure equals that of the full pairwise rule.
    """
    tasks = list(stream)
    for k, t in enumerate(tasks):
        if t.seq != k:
            raise ValueError("task seq numbers must be 0, 1, 2, ... in submission order")
    edges: set[tuple[int, int]] = set()
    last_writer: dict[Hashable, int] = {}
    readers: dict[Hashable, list[int]] = {}
    for t in tasks:
        j = t.seq
        for tile in t.reads | t.writes:
            w = last_writer.get(tile)
            if w is not None:
                edges.add((w, j))
        for tile in t.writes:
            for r in readers.pop(tile, ()):
                if r != j:
                    edges.add((r, j))
        for tile in t.writes:
            last_writer[tile] = j
        for tile in t.reads - t.writes:
            readers.setdefault(tile, []).append(j)
    return TaskGraph(tasks, edges)


def default_workers() -> int:
    env = os.environ.get("GEOSTAT_WORKERS")
    if env:
        n = int(env)
        if n < 1:
            raise ValueError(f"GEOSTAT_WORKERS must be >= 1, got {env!r}")
        return n
    return os.cpu_count() or 1


class _Pool:
    """One execution of a task graph; not reusable."""

    def __init__(self, graph: TaskGraph, workers: int, trace: list | None):
        self.graph = graph
        self.workers = workers
        self.trace = trace
        self.succ = graph.successors()
        self.missing = [0] * len(graph.tasks)
        for _, j in graph.edges:
            self.missing[j] += 1
        self.deques = [deque() for _ in range(workers)]
        self.cond = threading.Condition()
        self.remaining = len(graph.tasks)
        self.running = 0
        self.error: BaseException | None = None
        ready = [t.seq for t in graph.tasks if self.missing[t.seq] == 0]
        for k, tid in enumerate(ready):
            self.deques[k % workers].append(tid)

    def _next(self, w: int) -> int | None:
        # caller holds the lock
        own = self.deques[w]
        if own:
            return own.popleft()
        for k in range(1, self.workers):
            victim = self.deques[(w + k) % self.workers]
            if victim:
                return victim.pop()
        return None

    def _worker(self, w: int):
        tasks = self.graph.tasks
        while True:
            with self.cond:
                while True:
                    if self.error is not None or self.remaining == 0:
                        return
                    tid = self._next(w)
                    if tid is not None:
                        break
                    if self.running == 0:
                        # nothing queued and nothing in flight: graph exhausted
                        return
                    self.cond.wait()
                self.running += 1
            task = tasks[tid]
            begin = time.perf_counter_ns()
            try:
                task.kernel()
            except BaseException as exc:  # noqa: BLE001 - surfaced to caller
                with self.cond:
                    self.running -= 1
                    if self.error is None:
                        self.error = exc
                    self.cond.notify_all()
                return
            end = time.perf_counter_ns()
            with self.cond:
                self.running -= 1
                self.remaining -= 1
                if self.trace is not None:
                    self.trace.append(TraceRecord(tid, task.name, begin, end, w))
                woke = 0
                for j in self.succ[tid]:
                    self.missing[j] -= 1
                    if self.missing[j] == 0:
                        self.deques[w].append(j)
                        woke += 1
                if woke or self.remaining == 0:
                    self.cond.notify_all()

    def run(self):
        if self.workers == 1:
            self._worker(0)
        else:
            threads = [threading.Thread(target=self._worker, args=(w,), daemon=True)
                       for w in range(self.workers)]
            for t in threads:
                t.start()
            for t in threads:
                t.join()
        if self.error is not None:
            raise self.error


def execute(graph: TaskGraph, workers: int | None = None, trace: list | None = None) -> None:
    """Run every task of ``graph`` once, respecting its edges.

    Parameters
    ----------
    graph : TaskGraph
    workers : int, optional
        Size of the worker pool; defaults to ``GEOSTAT_WORKERS`` or the host
        core count.
    trace : list, optional
        If given, one :class:`TraceRecord` per completed task is appended.

    Raises
    ------
    BaseException
        The first exception raised by a kernel. Tasks not yet started when
        it occurred are skipped; running tasks are allowed to finish.
    """
    if workers is None:
        workers = default_workers()
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    if not graph.tasks:
        return
    # Tile kernels call BLAS; one BLAS thread per worker keeps results
    # independent of the worker count.
    with threadpool_limits(limits=1, user_api="blas"):
        _Pool(graph, workers, trace).run()


def write_trace_csv(trace: Iterable[TraceRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["task_id", "kernel", "begin_ns", "end_ns", "worker"])
        for rec in sorted(trace, key=lambda r: r.begin_ns):
            writer.writerow([rec.task_id, rec.kernel, rec.begin_ns, rec.end_ns, rec.worker])
