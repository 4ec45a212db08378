"""Pixel neighborhood graph, spectral similarity weights and the auto sparsity weight."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from hsunmix.hyperdata import Cube

_OFFSETS = {
    4: ((-1, 0), (0, -1), (0, 1), (1, 0)),
    8: ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)),
}


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class NeighborGraph:
    """Grid adjacency with normalized similarity weights.

    ``index`` is ``N x K`` (K = connectivity); missing neighbors at image
    borders are padded with ``-1`` and carry weight ``0`` in ``rho``. Each
    row of ``rho`` with at least one neighbor sums to one.
    """

    index: np.ndarray
    rho: np.ndarray
    rows: int
    cols: int
    connectivity: int

    @property
    def n_nodes(self) -> int:
        return self.index.shape[0]

    def neighbors(self, k: int) -> list[int]:
        row = self.index[k]
        return [int(j) for j in row[row >= 0]]

    def weights(self, k: int) -> list[float]:
        row = self.index[k]
        return [float(w) for w in self.rho[k][row >= 0]]


def grid_neighbors(rows: int, cols: int, connectivity: int = 4) -> np.ndarray:
    """``N x K`` neighbor index table for a row-major grid, ``-1`` where out of bounds."""
    if connectivity not in _OFFSETS:
        raise GraphError(f"connectivity must be 4 or 8, got {connectivity}")
    r, c = np.divmod(np.arange(rows * cols), cols)
    cols_out = []
    for dr, dc in _OFFSETS[connectivity]:
        rr, cc = r + dr, c + dc
        ok = (rr >= 0) & (rr < rows) & (cc >= 0) & (cc < cols)
        cols_out.append(np.where(ok, rr * cols + cc, -1))
    return np.stack(cols_out, axis=1)


def theta(y_k, y_j) -> float:
    """Cosine similarity between two spectra."""
    y_k = np.asarray(y_k, float)
    y_j = np.asarray(y_j, float)
    nk, nj = np.linalg.norm(y_k), np.linalg.norm(y_j)
    if nk == 0 or nj == 0:
        raise GraphError("theta undefined for a zero-norm spectrum")
    return float(np.clip(y_k @ y_j / (nk * nj), -1.0, 1.0))


def similarity_weights(thetas) -> np.ndarray:
    """Normalize one node's neighbor similarities into convex weights.

    Negative similarities are clamped to zero first. If nothing positive is
    left the node falls back to uniform weights.
    """
    t = np.maximum(np.asarray(thetas, float), 0.0)
    total = t.sum()
    if t.size == 0:
        return t
    if total <= 0:
        return np.full(t.size, 1.0 / t.size)
    return t / total


def build_graph(cube: Cube, connectivity: int = 4) -> NeighborGraph:
    """4- or 8-connected pixel graph with weights from observed-spectrum similarity."""
    Y = cube.data
    norms = np.linalg.norm(Y, axis=0)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise GraphError(f"zero-norm spectrum at pixel {int(zero[0])}")
    index = grid_neighbors(cube.rows, cube.cols, connectivity)
    valid = index >= 0
    Yn = Y / norms
    safe = np.where(valid, index, 0)
    # cosine of pixel k with each of its neighbors: (N, K)
    th = np.einsum("ln,lnk->nk", Yn, Yn[:, safe])
    th = np.where(valid, np.clip(th, 0.0, 1.0), 0.0)
    total = th.sum(axis=1, keepdims=True)
    n_valid = valid.sum(axis=1, keepdims=True)
    uniform = np.where(valid, 1.0 / np.maximum(n_valid, 1), 0.0)
    rho = np.where(total > 0, th / np.where(total > 0, total, 1.0), uniform)
    index.flags.writeable = False
    rho.flags.writeable = False
    return NeighborGraph(index, rho, cube.rows, cube.cols, connectivity)


def hoyer_sparseness(v) -> float:
    """``(sqrt(n) - |v|_1 / |v|_2) / (sqrt(n) - 1)``, in [0, 1]."""
    v = np.asarray(v, float)
    n = v.size
    if n < 2:
        raise GraphError("sparseness needs at least two entries")
    l2 = np.linalg.norm(v)
    if l2 == 0:
        raise GraphError("sparseness undefined for a zero vector")
    return float((np.sqrt(n) - np.abs(v).sum() / l2) / (np.sqrt(n) - 1))


def auto_lambda(cube: Cube) -> float:
    """Sparsity weight from the mean band sparseness, scaled by ``sqrt(L)``.

    Sums the sparseness of every band image (a length-N vector) and divides
    by ``sqrt(L)``.
    """
    Y = cube.data
    L, N = Y.shape
    if N < 2:
        raise GraphError("auto lambda needs at least two pixels")
    l2 = np.linalg.norm(Y, axis=1)
    zero = np.flatnonzero(l2 == 0)
    if zero.size:
        raise GraphError(f"zero-norm band {int(zero[0])}")
    terms = (np.sqrt(N) - np.abs(Y).sum(axis=1) / l2) / (np.sqrt(N) - 1)
    return float(terms.sum() / np.sqrt(L))
