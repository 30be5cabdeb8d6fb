"""Areal adjacency structures.

Units are stored 0-based internally; the edge-list text format and anything
user-facing is 1-based.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable

import numpy as np

from .errors import AdjacencyParseError, GraphError

__all__ = [
    "AreaGraph",
    "build_laplacian",
    "is_connected",
    "generate_random_connected",
    "generate_grid_queen",
    "read_adjacency",
    "write_adjacency",
    "load_adjacency",
]


@dataclass(frozen=True, eq=False)
class AreaGraph:
    """Binary, symmetric adjacency over ``n`` spatial units.

    Parameters
    ----------
    n : int
        Number of units.
    edges : iterable of (int, int)
        Unordered neighbor pairs, 0-based. Either orientation is accepted and
        duplicates collapse.
    """

    n: int
    edges: frozenset = field(default_factory=frozenset)

    def __init__(self, n: int, edges: Iterable[tuple[int, int]] = ()):
        n = int(n)
        if n < 1:
            raise GraphError(f"a map needs at least one unit, got n={n}")
        canon = set()
        for i, j in edges:
            i, j = int(i), int(j)
            if i == j:
                raise GraphError(f"self-loop on unit {i + 1}")
            if not (0 <= i < n and 0 <= j < n):
                raise GraphError(f"edge ({i + 1}, {j + 1}) outside units 1..{n}")
            canon.add((i, j) if i < j else (j, i))
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "edges", frozenset(canon))

    def __eq__(self, other):
        if not isinstance(other, AreaGraph):
            return NotImplemented
        return self.n == other.n and self.edges == other.edges

    def __hash__(self):
        return hash((self.n, self.edges))

    def __repr__(self):
        return f"AreaGraph(n={self.n}, edges={len(self.edges)})"

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def degree(self) -> np.ndarray:
        """Neighbor counts per unit (int64)."""
        deg = np.zeros(self.n, dtype=np.int64)
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        deg.setflags(write=False)
        return deg

    @cached_property
    def csr(self) -> tuple[np.ndarray, np.ndarray]:
        """``(indptr, indices)`` neighbor lists, each row sorted ascending."""
        nbrs = [[] for _ in range(self.n)]
        for i, j in self.edges:
            nbrs[i].append(j)
            nbrs[j].append(i)
        indptr = np.zeros(self.n + 1, dtype=np.int64)
        for i, row in enumerate(nbrs):
            row.sort()
            indptr[i + 1] = indptr[i] + len(row)
        indices = np.fromiter((j for row in nbrs for j in row), dtype=np.int64,
                              count=int(indptr[-1]))
        indptr.setflags(write=False)
        indices.setflags(write=False)
        return indptr, indices

    def neighbors(self, i: int) -> np.ndarray:
        indptr, indices = self.csr
        return indices[indptr[i]:indptr[i + 1]]

    def edge_array(self) -> np.ndarray:
        """Edges as a sorted ``(E, 2)`` int array with ``i < j`` per row."""
        if not self.edges:
            return np.zeros((0, 2), dtype=np.int64)
        return np.array(sorted(self.edges), dtype=np.int64)

    def adjacency_matrix(self) -> np.ndarray:
        W = np.zeros((self.n, self.n), dtype=np.int64)
        for i, j in self.edges:
            W[i, j] = W[j, i] = 1
        return W


def build_laplacian(g: AreaGraph) -> np.ndarray:
    """Graph Laplacian ``diag(degree) - W`` as an int64 matrix."""
    L = -g.adjacency_matrix()
    L[np.diag_indices(g.n)] = g.degree
    return L


def is_connected(g: AreaGraph) -> bool:
    """Breadth-first reachability from unit 0."""
    indptr, indices = g.csr
    seen = np.zeros(g.n, dtype=bool)
    seen[0] = True
    queue = deque([0])
    count = 1
    while queue:
        i = queue.popleft()
        for j in indices[indptr[i]:indptr[i + 1]]:
            if not seen[j]:
                seen[j] = True
                count += 1
                queue.append(j)
    return count == g.n


def generate_random_connected(n: int, seed) -> AreaGraph:
    """Uniform random spanning tree of the complete graph on ``n`` units.

    Uses Wilson's loop-erased random walk. On the complete graph each walk
    step moves to a uniformly chosen other unit. The result is a tree, so the
    mean degree is exactly ``2 (n - 1) / n``.

    Parameters
    ----------
    n : int
        Number of units, at least 1.
    seed : int, SeedSequence or Generator
        Anything accepted by :func:`numpy.random.default_rng`.
    """
    if n < 1:
        raise GraphError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    if n == 1:
        return AreaGraph(1)
    in_tree = np.zeros(n, dtype=bool)
    nxt = np.full(n, -1, dtype=np.int64)
    root = int(rng.integers(n))
    in_tree[root] = True
    for start in rng.permutation(n):
        start = int(start)
        u = start
        # overwriting nxt[u] on revisits performs the loop erasure
        while not in_tree[u]:
            v = int(rng.integers(n - 1))
            if v >= u:
                v += 1
            nxt[u] = v
            u = v
        u = start
        while not in_tree[u]:
            in_tree[u] = True
            u = int(nxt[u])
    return AreaGraph(n, ((i, int(nxt[i])) for i in range(n) if i != root))


def generate_grid_queen(rows: int, cols: int) -> AreaGraph:
    """Lattice with 8-neighborhood (shared border or vertex); unit = r * cols + c."""
    if rows < 1 or cols < 1:
        raise GraphError(f"grid dimensions must be >= 1, got {rows}x{cols}")
    edges = []
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            for dr, dc in ((0, 1), (1, -1), (1, 0), (1, 1)):
                rr, cc = r + dr, c + dc
                if 0 <= rr < rows and 0 <= cc < cols:
                    edges.append((i, rr * cols + cc))
    return AreaGraph(rows * cols, edges)


def read_adjacency(source: str) -> AreaGraph:
    """Parse edge-list text.

    The first non-comment line must be ``n <count>``; every later line is a
    whitespace-separated ``i j`` pair of 1-based unit indices. ``#`` starts a
    comment. Duplicate and reversed pairs collapse.

    Raises
    ------
    AdjacencyParseError
        Malformed line, bad header or index outside ``1..n``.
    GraphError
        Self-loop.
    """
    n = None
    edges = []
    for lineno, raw in enumerate(source.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if n is None:
            if len(parts) != 2 or parts[0] != "n":
                raise AdjacencyParseError("expected header 'n <count>'", lineno)
            try:
                n = int(parts[1])
            except ValueError:
                raise AdjacencyParseError(f"bad unit count {parts[1]!r}", lineno) from None
            if n < 1:
                raise AdjacencyParseError(f"unit count must be >= 1, got {n}", lineno)
            continue
        if len(parts) != 2:
            raise AdjacencyParseError(f"expected 'i j', got {line!r}", lineno)
        try:
            i, j = int(parts[0]), int(parts[1])
        except ValueError:
            raise AdjacencyParseError(f"non-integer index in {line!r}", lineno) from None
        for k in (i, j):
            if not 1 <= k <= n:
                raise AdjacencyParseError(f"unit {k} outside 1..{n}", lineno)
        if i == j:
            raise GraphError(f"line {lineno}: self-loop on unit {i}")
        edges.append((i - 1, j - 1))
    if n is None:
        raise AdjacencyParseError("empty adjacency file; missing 'n <count>' header")
    return AreaGraph(n, edges)


def load_adjacency(path) -> AreaGraph:
    with open(path, encoding="utf-8") as fh:
        return read_adjacency(fh.read())


def write_adjacency(g: AreaGraph, path=None) -> str:
    """Serialize to edge-list text (1-based, sorted); optionally write ``path``."""
    lines = [f"n {g.n}"]
    lines.extend(f"{i + 1} {j + 1}" for i, j in sorted(g.edges))
    text = "\n".join(lines) + "\n"
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text
