"""Tile-layout dense linear algebra.

A :class:`TileMatrix` stores a matrix as a grid of ``nb x nb`` blocks (edge
tiles may be ragged). Symmetric matrices keep only their lower tiles. A tile
slot holding ``None`` is a structurally zero tile: kernels that would only
read zeros from it are never submitted.

Every composition (Cholesky, triangular solve / multiply, matrix multiply)
is written as a sequential stream of per-tile kernel calls with read/write
hints, appended to a :class:`TaskStream` and executed by
:mod:`geostat.scheduler`. The ``*_tasks`` functions only submit work, so
several compositions can share one stream and one dependency graph.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.linalg import blas, lapack

from geostat import scheduler
from geostat.errors import DomainError, NotPositiveDefinite

DEFAULT_NB = 128

_ids = itertools.count()


# --------------------------------------------------------------------------
# per-tile kernels


def potrf_tile(a: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of a symmetric positive definite tile."""
    c, info = lapack.dpotrf(a, lower=1, clean=1, overwrite_a=0)
    if info > 0:
        raise NotPositiveDefinite(info - 1)
    if info < 0:
        raise ValueError(f"dpotrf: illegal argument {-info}")
    return c


def trsm_tile(l: np.ndarray, b: np.ndarray, side: str = "left", trans: bool = False) -> np.ndarray:
    """Triangular solve with lower-triangular ``l``.

    ``side="left"`` returns ``op(l)^-1 b``, ``side="right"`` returns
    ``b op(l)^-1``, where ``op`` transposes when ``trans`` is set.
    """
    if side not in ("left", "right"):
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    k = b.shape[0] if side == "left" else b.shape[1]
    if l.shape != (k, k):
        raise ValueError(f"trsm shape mismatch: {l.shape} vs {b.shape} ({side})")
    return blas.dtrsm(1.0, l, b, side=int(side == "right"), lower=1, trans_a=int(trans))


def trmm_tile(l: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Return ``l @ b`` for lower-triangular ``l`` (upper part of ``l`` ignored)."""
    if l.shape[1] != b.shape[0]:
        raise ValueError(f"trmm shape mismatch: {l.shape} vs {b.shape}")
    return blas.dtrmm(1.0, l, b, side=0, lower=1)


def syrk_tile(a: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Symmetric rank-k update ``c - a a^T`` (full symmetric result)."""
    if c.shape != (a.shape[0], a.shape[0]):
        raise ValueError(f"syrk shape mismatch: {a.shape} vs {c.shape}")
    out = c - a @ a.T
    return np.asfortranarray(out)


def gemm_tile(a: np.ndarray, b: np.ndarray, c: np.ndarray | None = None, *,
              trans_a: bool = False, trans_b: bool = True, alpha: float = -1.0) -> np.ndarray:
    """General multiply-accumulate ``c + alpha op(a) op(b)``.

    The defaults give the Cholesky trailing update ``c - a b^T``. A missing
    ``c`` is treated as zero.
    """
    opa = a.T if trans_a else a
    opb = b.T if trans_b else b
    if opa.shape[1] != opb.shape[0] or (c is not None and c.shape != (opa.shape[0], opb.shape[1])):
        raise ValueError(
            f"gemm shape mismatch: {opa.shape} x {opb.shape} -> {None if c is None else c.shape}"
        )
    prod = opa @ opb
    if alpha != 1.0:
        prod *= alpha
    if c is not None:
        prod += c
    return np.asfortranarray(prod)


# --------------------------------------------------------------------------
# layout


def _ntiles(order: int, nb: int) -> int:
    return -(-order // nb)


class TileMatrix:
    """Matrix stored as a grid of dense tiles.

    Attributes
    ----------
    rows, cols : int
        Matrix order.
    nb : int
        Tile edge length.
    symmetric : bool
        If true the matrix is symmetric and only tiles ``(i, j)`` with
        ``i >= j`` are stored and read.
    tiles : list of list
        ``tiles[i][j]`` is a Fortran-ordered ndarray or ``None`` (zero tile).
    """

    def __init__(self, rows: int, cols: int, nb: int, symmetric: bool = False):
        if nb < 1:
            raise ValueError(f"tile size must be >= 1, got {nb}")
        if rows < 0 or cols < 0:
            raise ValueError("matrix order must be nonnegative")
        if symmetric and rows != cols:
            raise ValueError("symmetric tile matrices must be square")
        self.rows = rows
        self.cols = cols
        self.nb = nb
        self.symmetric = symmetric
        self.mt = _ntiles(rows, nb)
        self.nt = _ntiles(cols, nb)
        self.tiles: list[list[np.ndarray | None]] = [[None] * self.nt for _ in range(self.mt)]
        self.uid = next(_ids)

    # construction -------------------------------------------------------

    @classmethod
    def empty(cls, rows: int, cols: int, nb: int) -> "TileMatrix":
        m = cls(rows, cols, nb)
        for i in range(m.mt):
            for j in range(m.nt):
                m.tiles[i][j] = np.empty(m.tile_shape(i, j), order="F")
        return m

    @classmethod
    def empty_symmetric(cls, n: int, nb: int, super_tile: int | None = None) -> "TileMatrix":
        """Symmetric lower-stored matrix; with ``super_tile`` only tiles inside
        the diagonal super tiles are allocated."""
        m = cls(n, n, nb, symmetric=True)
        for i in range(m.mt):
            for j in range(i + 1):
                if super_tile is None or i // super_tile == j // super_tile:
                    m.tiles[i][j] = np.empty(m.tile_shape(i, j), order="F")
        return m

    @classmethod
    def from_dense(cls, a, nb: int = DEFAULT_NB, symmetric: bool = False) -> "TileMatrix":
        a = np.asarray(a, dtype=float)
        if a.ndim == 1:
            a = a[:, None]
        m = cls(a.shape[0], a.shape[1], nb, symmetric=symmetric)
        for i in range(m.mt):
            for j in range(m.nt):
                if symmetric and j > i:
                    continue
                m.tiles[i][j] = np.array(a[m.row_slice(i), m.col_slice(j)], order="F")
        return m

    def copy(self) -> "TileMatrix":
        m = TileMatrix(self.rows, self.cols, self.nb, self.symmetric)
        m.tiles = [[None if t is None else t.copy(order="F") for t in row] for row in self.tiles]
        if isinstance(self, TileVector):
            m.__class__ = TileVector
        return m

    # geometry -----------------------------------------------------------

    def row_slice(self, i: int) -> slice:
        return slice(i * self.nb, min((i + 1) * self.nb, self.rows))

    def col_slice(self, j: int) -> slice:
        return slice(j * self.nb, min((j + 1) * self.nb, self.cols))

    def tile_shape(self, i: int, j: int) -> tuple[int, int]:
        r, c = self.row_slice(i), self.col_slice(j)
        return (r.stop - r.start, c.stop - c.start)

    def key(self, i: int, j: int) -> tuple[int, int, int]:
        """Scheduler handle of tile ``(i, j)``."""
        return (self.uid, i, j)

    def stored(self, i: int, j: int) -> bool:
        return not (self.symmetric and j > i)

    def allocated(self):
        """Indices of all non-zero (allocated) stored tiles, row-major."""
        return [(i, j) for i in range(self.mt) for j in range(self.nt)
                if self.stored(i, j) and self.tiles[i][j] is not None]

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    def to_dense(self, lower_only: bool = False) -> np.ndarray:
        """Assemble into an ndarray; a symmetric matrix is mirrored unless
        ``lower_only`` is set."""
        out = np.zeros((self.rows, self.cols))
        for i, j in self.allocated():
            out[self.row_slice(i), self.col_slice(j)] = self.tiles[i][j]
        if self.symmetric:
            low = np.tril(out)
            out = low if lower_only else low + np.tril(out, -1).T
        return out

    def __repr__(self) -> str:
        kind = "symmetric" if self.symmetric else "general"
        return f"TileMatrix({self.rows}x{self.cols}, nb={self.nb}, {kind})"


class TileVector(TileMatrix):
    """A column vector blocked conformally with a ``nb``-tiled matrix."""

    def __init__(self, length: int, nb: int):
        super().__init__(length, 1, nb)

    @classmethod
    def from_array(cls, z, nb: int = DEFAULT_NB) -> "TileVector":
        z = np.asarray(z, dtype=float).reshape(-1)
        v = cls(z.shape[0], nb)
        for i in range(v.mt):
            v.tiles[i][0] = np.array(z[v.row_slice(i)][:, None], order="F")
        return v

    @property
    def length(self) -> int:
        return self.rows

    def to_array(self) -> np.ndarray:
        return self.to_dense().reshape(-1)


def as_tiles(b, nb: int) -> TileMatrix:
    if isinstance(b, TileMatrix):
        return b
    b = np.asarray(b, dtype=float)
    if b.ndim == 1:
        return TileVector.from_array(b, nb)
    return TileMatrix.from_dense(b, nb)


# --------------------------------------------------------------------------
# task streams


class TaskStream:
    """Collects tasks in submission order, then runs them as one graph."""

    def __init__(self):
        self.tasks: list[scheduler.Task] = []

    def submit(self, kernel, reads=(), writes=(), name: str = "task") -> None:
        self.tasks.append(
            scheduler.Task(kernel, frozenset(reads), frozenset(writes), len(self.tasks), name)
        )

    def __len__(self) -> int:
        return len(self.tasks)

    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for t in self.tasks:
            out[t.name] = out.get(t.name, 0) + 1
        return out

    def graph(self) -> scheduler.TaskGraph:
        return scheduler.build_dag(self.tasks)

    def run(self, workers: int | None = None, trace: list | None = None) -> None:
        scheduler.execute(self.graph(), workers, trace)
        self.tasks = []


def cholesky_tasks(stream: TaskStream, a: TileMatrix, lo: int = 0, hi: int | None = None) -> None:
    """Right-looking tile Cholesky of the diagonal block ``[lo, hi)`` in tiles.

    Zero tiles are skipped; a trailing update that would write into a zero
    tile from two non-zero operands allocates it (fill-in).
    """
    if not a.symmetric:
        raise ValueError("tile Cholesky needs a symmetric lower-stored matrix")
    hi = a.mt if hi is None else hi
    t = a.tiles

    for k in range(lo, hi):
        def potrf(k=k):
            try:
                t[k][k] = potrf_tile(t[k][k])
            except NotPositiveDefinite as exc:
                raise NotPositiveDefinite(k * a.nb + exc.pivot) from None

        stream.submit(potrf, reads=(), writes=(a.key(k, k),), name="potrf")
        for i in range(k + 1, hi):
            if t[i][k] is None:
                continue

            def trsm(i=i, k=k):
                t[i][k] = trsm_tile(t[k][k], t[i][k], side="right", trans=True)

            stream.submit(trsm, reads=(a.key(k, k),), writes=(a.key(i, k),), name="trsm")
        for i in range(k + 1, hi):
            if t[i][k] is None:
                continue

            def syrk(i=i, k=k):
                t[i][i] = syrk_tile(t[i][k], t[i][i])

            stream.submit(syrk, reads=(a.key(i, k),), writes=(a.key(i, i),), name="syrk")
            for j in range(k + 1, i):
                if t[j][k] is None:
                    continue
                if t[i][j] is None:
                    t[i][j] = np.zeros(a.tile_shape(i, j), order="F")

                def gemm(i=i, j=j, k=k):
                    t[i][j] = gemm_tile(t[i][k], t[j][k], t[i][j])

                stream.submit(gemm, reads=(a.key(i, k), a.key(j, k)), writes=(a.key(i, j),),
                              name="gemm")


def trsm_tasks(stream: TaskStream, l: TileMatrix, b: TileMatrix, trans: bool = False) -> None:
    """Solve ``L X = B`` (or ``L^T X = B``) in place of ``b``."""
    _check_conformal(l, b)
    p = l.mt
    lt, bt = l.tiles, b.tiles
    order = range(p - 1, -1, -1) if trans else range(p)
    for k in order:
        for c in range(b.nt):
            def diag(k=k, c=c):
                bt[k][c] = trsm_tile(lt[k][k], bt[k][c], side="left", trans=trans)

            stream.submit(diag, reads=(l.key(k, k),), writes=(b.key(k, c),), name="trsm")
        others = range(k) if trans else range(k + 1, p)
        for i in others:
            # forward: B_i -= L_ik X_k ; backward: B_i -= L_ki^T X_k
            lk = (k, i) if trans else (i, k)
            if lt[lk[0]][lk[1]] is None:
                continue
            for c in range(b.nt):
                def upd(i=i, k=k, c=c, lk=lk):
                    bt[i][c] = gemm_tile(lt[lk[0]][lk[1]], bt[k][c], bt[i][c],
                                         trans_a=trans, trans_b=False)

                stream.submit(upd, reads=(l.key(*lk), b.key(k, c)), writes=(b.key(i, c),),
                              name="gemm")


def trmm_tasks(stream: TaskStream, l: TileMatrix, b: TileMatrix) -> None:
    """Overwrite ``b`` with ``L b`` for the lower factor ``L``."""
    _check_conformal(l, b)
    lt, bt = l.tiles, b.tiles
    # bottom-up so every X_j (j < i) is still unmodified when B_i reads it
    for i in range(l.mt - 1, -1, -1):
        for c in range(b.nt):
            def diag(i=i, c=c):
                bt[i][c] = trmm_tile(lt[i][i], bt[i][c])

            stream.submit(diag, reads=(l.key(i, i),), writes=(b.key(i, c),), name="trmm")
            for j in range(i):
                if lt[i][j] is None:
                    continue

                def upd(i=i, j=j, c=c):
                    bt[i][c] = gemm_tile(lt[i][j], bt[j][c], bt[i][c], trans_b=False, alpha=1.0)

                stream.submit(upd, reads=(l.key(i, j), b.key(j, c)), writes=(b.key(i, c),),
                              name="gemm")


def gemm_tasks(stream: TaskStream, a: TileMatrix, b: TileMatrix, c: TileMatrix,
               alpha: float = 1.0, beta: float = 0.0) -> None:
    """``c <- alpha a b + beta c`` for general tile matrices with equal nb."""
    if a.symmetric or b.symmetric:
        raise ValueError("gemm expects general (non-symmetric) tile matrices")
    if a.cols != b.rows or c.shape != (a.rows, b.cols) or len({a.nb, b.nb, c.nb}) != 1:
        raise ValueError(f"gemm shape mismatch: {a.shape} x {b.shape} -> {c.shape}")
    at, bt, ct = a.tiles, b.tiles, c.tiles
    for i in range(c.mt):
        for j in range(c.nt):
            def scale(i=i, j=j):
                ct[i][j] = (np.zeros(c.tile_shape(i, j), order="F") if beta == 0.0
                            else np.asfortranarray(beta * ct[i][j]))

            stream.submit(scale, writes=(c.key(i, j),), name="scale")
            for k in range(a.nt):
                if at[i][k] is None or bt[k][j] is None:
                    continue

                def acc(i=i, j=j, k=k):
                    ct[i][j] = gemm_tile(at[i][k], bt[k][j], ct[i][j], trans_b=False, alpha=alpha)

                stream.submit(acc, reads=(a.key(i, k), b.key(k, j)), writes=(c.key(i, j),),
                              name="gemm")


def _check_conformal(l: TileMatrix, b: TileMatrix):
    if not l.symmetric:
        raise ValueError("triangular operand must be a lower-stored tile matrix")
    if l.rows != b.rows or l.nb != b.nb:
        raise ValueError(f"shape mismatch: L {l.shape} nb={l.nb} vs B {b.shape} nb={b.nb}")


# --------------------------------------------------------------------------
# compositions


def tile_cholesky(a: TileMatrix, workers: int | None = None, trace: list | None = None,
                  inplace: bool = True) -> TileMatrix:
    """Factor ``a = L L^T``; returns ``L`` (the same object when ``inplace``).

    Raises
    ------
    NotPositiveDefinite
        With the global index of the failing pivot.
    """
    if not inplace:
        a = a.copy()
    s = TaskStream()
    cholesky_tasks(s, a)
    s.run(workers, trace)
    return a


def tile_trsm(l: TileMatrix, b, trans: bool = False, workers: int | None = None) -> TileMatrix:
    """Return ``L^-1 B`` (``L^-T B`` with ``trans``); ``b`` is not modified."""
    x = as_tiles(b, l.nb).copy()
    s = TaskStream()
    trsm_tasks(s, l, x, trans)
    s.run(workers)
    return x


def tile_trmm(l: TileMatrix, b, workers: int | None = None) -> TileMatrix:
    """Return ``L B`` for the lower factor ``L``; ``b`` is not modified."""
    x = as_tiles(b, l.nb).copy()
    s = TaskStream()
    trmm_tasks(s, l, x)
    s.run(workers)
    return x


def tile_gemm(a, b, nb: int | None = None, workers: int | None = None) -> TileMatrix:
    """Return the tile product ``A B``."""
    if nb is None:
        nb = a.nb if isinstance(a, TileMatrix) else DEFAULT_NB
    a = as_tiles(a, nb)
    b = as_tiles(b, nb)
    c = TileMatrix(a.rows, b.cols, nb)
    s = TaskStream()
    gemm_tasks(s, a, b, c)
    s.run(workers)
    if b.cols == 1:
        c.__class__ = TileVector
    return c


def posv_tasks(stream: TaskStream, a: TileMatrix, b: TileMatrix) -> None:
    cholesky_tasks(stream, a)
    trsm_tasks(stream, a, b, trans=False)
    trsm_tasks(stream, a, b, trans=True)


def tile_posv(a: TileMatrix, b, workers: int | None = None, inplace: bool = False):
    """Solve ``A X = B`` for symmetric positive definite ``A``.

    Returns ``(X, L)``; ``a`` is factored in place only if ``inplace``.
    """
    if not inplace:
        a = a.copy()
    x = as_tiles(b, a.nb).copy()
    s = TaskStream()
    posv_tasks(s, a, x)
    s.run(workers)
    return x, a


def log_det_from_factor(l: TileMatrix) -> float:
    """``log|A| = 2 sum(log diag(L))`` for a Cholesky factor ``L`` of ``A``."""
    total = 0.0
    for k in range(min(l.mt, l.nt)):
        d = np.diag(l.tiles[k][k])
        if np.any(~(d > 0)):
            raise DomainError("factor diagonal must be strictly positive")
        total += float(np.sum(np.log(d)))
    return 2.0 * total


# standard flop counts used for rate reporting
def cholesky_flops(n: int) -> float:
    return n ** 3 / 3.0


def trsm_flops(n: int, nrhs: int) -> float:
    return float(n) * n * nrhs


def gemm_flops(m: int, n: int, k: int) -> float:
    return 2.0 * m * n * k


def gflops(flops: float, seconds: float) -> float:
    return flops / seconds / 1e9 if seconds > 0 else math.inf
