import itertools
import threading

import numpy as np
import pytest

from geostat import TileMatrix
from geostat.errors import NotPositiveDefinite
from geostat.scheduler import Task, TaskGraph, build_dag, default_workers, execute, write_trace_csv
from geostat.tilealg import TaskStream, cholesky_tasks, tile_cholesky
from oracles import random_spd


def _tasks(spec):
    """spec: list of (reads, writes) -> Task list with no-op kernels."""
    return [Task(lambda: None, frozenset(r), frozenset(w), k) for k, (r, w) in enumerate(spec)]


def _closure(n, edges):
    reach = [[False] * n for _ in range(n)]
    for i, j in edges:
        reach[i][j] = True
    for k in range(n):
        for i in range(n):
            if reach[i][k]:
                for j in range(n):
                    if reach[k][j]:
                        reach[i][j] = True
    return reach


def _pairwise_edges(tasks):
    edges = set()
    for a, b in itertools.combinations(tasks, 2):
        if a.writes & (b.reads | b.writes) or a.reads & b.writes:
            edges.add((a.seq, b.seq))
    return edges


def test_disjoint_tiles_no_edge():
    g = build_dag(_tasks([({"a"}, {"b"}), ({"c"}, {"d"})]))
    assert g.edges == set()


def test_raw_edge():
    g = build_dag(_tasks([((), {"t"}), ({"t"}, ())]))
    assert g.edges == {(0, 1)}


def test_war_and_waw_edges():
    g = build_dag(_tasks([({"t"}, ()), ({"t"}, ()), ((), {"t"}), ((), {"t"})]))
    assert {(0, 2), (1, 2), (2, 3)} <= g.edges
    assert (0, 1) not in g.edges


def test_bad_seq_rejected():
    t = _tasks([((), {"a"})])
    t[0].seq = 3
    with pytest.raises(ValueError):
        build_dag(t)


def test_closure_equals_pairwise_rule_random():
    rng = np.random.default_rng(0)
    for _ in range(30):
        spec = []
        for _ in range(25):
            spec.append((set(rng.choice(6, rng.integers(0, 3), replace=False)),
                         set(rng.choice(6, rng.integers(0, 3), replace=False))))
        tasks = _tasks(spec)
        g = build_dag(tasks)
        assert all(i < j for i, j in g.edges)
        assert _closure(25, g.edges) == _closure(25, _pairwise_edges(tasks))


def _longest_chain_brute(n, edges):
    succ = {i: [j for a, j in edges if a == i] for i in range(n)}

    def longest(i):
        return 1 + max((longest(j) for j in succ[i]), default=0)

    return max(longest(i) for i in range(n))


def test_cholesky_3x3_critical_path():
    a = TileMatrix.from_dense(np.eye(3), 1, symmetric=True)
    s = TaskStream()
    cholesky_tasks(s, a)
    g = s.graph()
    assert len(g) == 10
    assert g.critical_path() == 7
    assert _longest_chain_brute(len(g), _pairwise_edges(g.tasks)) == 7


def test_empty_graph():
    execute(TaskGraph([]), workers=4)


@pytest.mark.parametrize("workers", [1, 3, 8])
def test_chain_runs_in_order(workers):
    order = []
    tasks = [Task(lambda k=k: order.append(k), frozenset(), frozenset({"x"}), k) for k in range(50)]
    execute(build_dag(tasks), workers=workers)
    assert order == list(range(50))


def test_every_task_runs_once():
    counts = [0] * 200
    lock = threading.Lock()

    def bump(k):
        with lock:
            counts[k] += 1

    rng = np.random.default_rng(1)
    tasks = [Task(lambda k=k: bump(k), frozenset({int(rng.integers(20))}),
                  frozenset({int(rng.integers(20))}), k) for k in range(200)]
    execute(build_dag(tasks), workers=6)
    assert counts == [1] * 200


def _check_linear_extension(graph, trace):
    assert sorted(r.task_id for r in trace) == list(range(len(graph)))
    rec = {r.task_id: r for r in trace}
    for i, j in graph.edges:
        assert rec[i].end_ns <= rec[j].begin_ns


@pytest.mark.parametrize("workers", [1, 2, 8])
def test_cholesky_bitwise_and_linear_extension(workers):
    a = random_spd(np.random.default_rng(5), 256)
    ref = tile_cholesky(TileMatrix.from_dense(a, 32, symmetric=True), workers=1).to_dense()
    s = TaskStream()
    t = TileMatrix.from_dense(a, 32, symmetric=True)
    cholesky_tasks(s, t)
    g = s.graph()
    trace = []
    execute(g, workers=workers, trace=trace)
    assert np.array_equal(t.to_dense(), ref)
    _check_linear_extension(g, trace)
    assert {r.worker for r in trace} <= set(range(workers))


def test_first_error_wins_and_later_tasks_skipped():
    ran = []

    def boom():
        raise NotPositiveDefinite(3)

    tasks = [
        Task(lambda: ran.append(0), frozenset(), frozenset({"a"}), 0),
        Task(boom, frozenset({"a"}), frozenset({"b"}), 1),
        Task(lambda: ran.append(2), frozenset({"b"}), frozenset({"c"}), 2),
    ]
    for w in (1, 4):
        ran.clear()
        with pytest.raises(NotPositiveDefinite):
            execute(build_dag(tasks), workers=w)
        assert ran == [0]


def test_invalid_workers():
    with pytest.raises(ValueError):
        execute(build_dag(_tasks([((), {"a"})])), workers=0)


def test_default_workers_env(monkeypatch):
    monkeypatch.setenv("GEOSTAT_WORKERS", "3")
    assert default_workers() == 3
    monkeypatch.setenv("GEOSTAT_WORKERS", "0")
    with pytest.raises(ValueError):
        default_workers()
    monkeypatch.delenv("GEOSTAT_WORKERS")
    assert default_workers() >= 1


def test_trace_csv(tmp_path):
    a = TileMatrix.from_dense(np.eye(8), 2, symmetric=True)
    trace = []
    tile_cholesky(a, workers=2, trace=trace)
    path = tmp_path / "trace.csv"
    write_trace_csv(trace, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "task_id,kernel,begin_ns,end_ns,worker"
    assert len(lines) == 1 + len(trace) == 1 + 20
