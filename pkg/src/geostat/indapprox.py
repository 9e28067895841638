"""Independent-blocks (IND) approximation.

Covariance tiles outside diagonal super tiles of ``s x s`` tiles are dropped,
so the model treats each super block of locations as independent of the
others. The factorization then reduces to one tile Cholesky per super block
and never touches the dropped tiles.
"""

from __future__ import annotations

from geostat import tilealg
from geostat.tilealg import TaskStream, TileMatrix


def _check_s(s: int) -> int:
    s = int(s)
    if s < 1:
        raise ValueError(f"super-tile size must be >= 1, got {s}")
    return s


def super_blocks(p: int, s: int) -> list[tuple[int, int]]:
    """Tile ranges ``[lo, hi)`` of the diagonal super blocks of a p x p grid."""
    s = _check_s(s)
    return [(lo, min(lo + s, p)) for lo in range(0, p, s)]


def ind_mask(a: TileMatrix, s: int) -> TileMatrix:
    """Copy of ``a`` keeping tile ``(i, j)`` only if ``i // s == j // s``."""
    s = _check_s(s)
    if a.rows != a.cols:
        raise ValueError("IND masking needs a square tile matrix")
    out = a.copy()
    for i in range(out.mt):
        for j in range(out.nt):
            if i // s != j // s:
                out.tiles[i][j] = None
    return out


def _check_masked(a: TileMatrix, s: int):
    for i, j in a.allocated():
        if i // s != j // s:
            raise ValueError(f"tile ({i}, {j}) lies outside the diagonal super tiles (s={s})")


def ind_cholesky_tasks(stream: TaskStream, a: TileMatrix, s: int) -> None:
    """Submit one independent tile Cholesky per diagonal super block."""
    s = _check_s(s)
    _check_masked(a, s)
    for lo, hi in super_blocks(a.mt, s):
        tilealg.cholesky_tasks(stream, a, lo, hi)


def ind_cholesky(a: TileMatrix, s: int, workers: int | None = None, trace: list | None = None,
                 inplace: bool = True) -> TileMatrix:
    """Factor a block-diagonal (IND-masked) matrix block by block.

    Raises
    ------
    ValueError
        If ``a`` has a non-zero tile outside the super blocks.
    NotPositiveDefinite
        If some diagonal block is not positive definite.
    """
    if not inplace:
        a = a.copy()
    stream = TaskStream()
    ind_cholesky_tasks(stream, a, s)
    stream.run(workers, trace)
    return a


def ind_log_likelihood(problem, theta, s: int | None = None) -> float:
    """Log-likelihood under the IND model with super-tile size ``s``.

    ``s`` defaults to ``problem.super_tile``.
    """
    from dataclasses import replace

    from geostat.likelihood import log_likelihood

    s = problem.super_tile if s is None else s
    if s is None:
        raise ValueError("no super-tile size given")
    return log_likelihood(replace(problem, super_tile=_check_s(s)), theta)
