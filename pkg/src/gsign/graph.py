"""Undirected graph construction and the combinatorial Laplacian.

Graphs are stored densely: every experiment here has at most a few hundred
nodes, so the adjacency matrix is the natural representation.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.sparse.csgraph import connected_components

__all__ = [
    "Graph",
    "GraphError",
    "build_laplacian",
    "knn_geographic_graph",
    "random_sensor_graph",
    "load_edge_list",
    "save_edge_list",
    "load_coords",
    "save_coords",
]

SENSOR_NEIGHBORS = 6
MAX_CONNECT_ATTEMPTS = 100


class GraphError(ValueError):
    """Raised for malformed graphs or failed graph construction."""


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected graph with a dense symmetric weight matrix.

    Parameters
    ----------
    adjacency : ndarray, shape (n, n)
        Symmetric, nonnegative, zero diagonal. Unweighted graphs use weight 1.
    coords : ndarray, shape (n, 2), optional
        Node positions used for geometric construction and plotting.
    """

    adjacency: np.ndarray
    coords: np.ndarray | None = None

    def __post_init__(self):
        A = np.array(self.adjacency, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise GraphError(f"adjacency must be square, got shape {A.shape}")
        if not np.all(np.isfinite(A)):
            raise GraphError("adjacency has nonfinite weights")
        if np.any(A < 0):
            raise GraphError("edge weights must be nonnegative")
        if np.any(np.diag(A) != 0):
            raise GraphError("self-loops are not allowed")
        if not np.array_equal(A, A.T):
            raise GraphError("adjacency must be symmetric (undirected graph)")
        A.setflags(write=False)
        object.__setattr__(self, "adjacency", A)
        if self.coords is not None:
            c = np.array(self.coords, dtype=float)
            if c.shape != (A.shape[0], 2):
                raise GraphError(f"coords must have shape ({A.shape[0]}, 2), got {c.shape}")
            c.setflags(write=False)
            object.__setattr__(self, "coords", c)

    @property
    def n_nodes(self) -> int:
        return self.adjacency.shape[0]

    @property
    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)

    def edges(self) -> list[tuple[int, int, float]]:
        """Edges as ``(i, j, weight)`` with ``i < j``, in lexicographic order."""
        i, j = np.nonzero(np.triu(self.adjacency, k=1))
        return [(int(a), int(b), float(self.adjacency[a, b])) for a, b in zip(i, j)]

    def n_components(self) -> int:
        return int(connected_components(self.adjacency > 0, directed=False)[0])

    @classmethod
    def from_edges(cls, n_nodes, edges, coords=None) -> "Graph":
        """Build from ``(i, j, weight)`` triples; each undirected edge may be
        listed once or in both directions (with equal weights)."""
        if n_nodes < 1:
            raise GraphError("graph must have at least one node")
        A = np.zeros((n_nodes, n_nodes))
        seen = {}
        for i, j, w in edges:
            i, j, w = int(i), int(j), float(w)
            if not (0 <= i < n_nodes and 0 <= j < n_nodes):
                raise GraphError(f"edge ({i}, {j}) out of range for {n_nodes} nodes")
            if i == j:
                raise GraphError(f"self-loop at node {i}")
            key = (min(i, j), max(i, j))
            if key in seen and seen[key] != w:
                raise GraphError(f"conflicting weights for edge {key}: {seen[key]} vs {w}")
            seen[key] = w
            A[i, j] = A[j, i] = w
        return cls(A, coords)


def build_laplacian(g: Graph) -> np.ndarray:
    """Combinatorial Laplacian ``L = D - A`` with weighted degrees."""
    if g.n_nodes < 1:
        raise GraphError("graph must have at least one node")
    A = g.adjacency
    L = np.diag(A.sum(axis=1)) - A
    L.setflags(write=False)
    return L


def _knn_adjacency(coords: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Symmetrized k-NN mask and pairwise distances. Ties go to the lower index."""
    n = coords.shape[0]
    diff = coords[:, None, :] - coords[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    order_dist = dist.copy()
    np.fill_diagonal(order_dist, np.inf)
    # stable sort keeps increasing node index among equal distances
    nbrs = np.argsort(order_dist, axis=1, kind="stable")[:, :k]
    mask = np.zeros((n, n), dtype=bool)
    mask[np.repeat(np.arange(n), k), nbrs.ravel()] = True
    return mask | mask.T, dist


def _check_coords(coords) -> np.ndarray:
    c = np.asarray(coords, dtype=float)
    if c.ndim != 2 or c.shape[1] != 2:
        raise GraphError(f"coords must be an (n, 2) array, got shape {c.shape}")
    if not np.all(np.isfinite(c)):
        raise GraphError("coordinates must be finite")
    return c


def knn_geographic_graph(coords, k: int) -> Graph:
    """Unweighted graph joining every node to its ``k`` nearest neighbors.

    A pair is connected if either endpoint selects the other.
    """
    c = _check_coords(coords)
    n = c.shape[0]
    if k < 1 or k >= n:
        raise GraphError(f"k must satisfy 1 <= k < n_nodes ({n}), got {k}")
    mask, _ = _knn_adjacency(c, k)
    return Graph(mask.astype(float), c)


def random_sensor_graph(n: int, seed: int, k: int = SENSOR_NEIGHBORS) -> Graph:
    """Random geometric sensor network in the unit square.

    Nodes are uniform in ``[0, 1]^2`` and joined to their ``k`` nearest
    neighbors (symmetrized) with Gaussian kernel weights
    ``exp(-d^2 / (2 sigma^2))``, ``sigma`` being the mean k-NN distance.
    Placement is redrawn until the graph is connected.
    """
    if n < 2:
        raise GraphError("a sensor graph needs at least 2 nodes")
    k = min(k, n - 1)
    rng = np.random.default_rng(seed)
    for _ in range(MAX_CONNECT_ATTEMPTS):
        coords = rng.random((n, 2))
        mask, dist = _knn_adjacency(coords, k)
        sigma = np.mean(np.sort(dist + np.diag(np.full(n, np.inf)), axis=1)[:, :k])
        if sigma == 0:
            continue
        W = np.where(mask, np.exp(-dist**2 / (2 * sigma**2)), 0.0)
        g = Graph(W, coords)
        if g.n_components() == 1:
            return g
    raise GraphError(
        f"no connected sensor graph with n={n} after {MAX_CONNECT_ATTEMPTS} placements"
    )


def load_edge_list(path, n_nodes: int | None = None, coords=None) -> Graph:
    """Read whitespace-separated ``i j weight`` lines (0-based, ``#`` comments).

    The weight column is optional and defaults to 1.
    """
    edges = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            try:
                if len(parts) == 2:
                    edges.append((int(parts[0]), int(parts[1]), 1.0))
                elif len(parts) == 3:
                    edges.append((int(parts[0]), int(parts[1]), float(parts[2])))
                else:
                    raise ValueError("expected 'i j [weight]'")
            except ValueError as exc:
                raise GraphError(f"{path}:{lineno}: {exc}") from None
    if n_nodes is None:
        if coords is not None:
            n_nodes = len(coords)
        else:
            n_nodes = 1 + max((max(i, j) for i, j, _ in edges), default=-1)
    return Graph.from_edges(n_nodes, edges, coords)


def save_edge_list(g: Graph, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"# {g.n_nodes} nodes, undirected, i j weight\n")
        for i, j, w in g.edges():
            fh.write(f"{i} {j} {w:.17g}\n")


def load_coords(path) -> np.ndarray:
    """Read a ``node,x,y`` or ``node,lat,lon`` CSV into an ``(n, 2)`` array."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip().lower() for h in next(reader)]
        if header not in (["node", "x", "y"], ["node", "lat", "lon"]):
            raise GraphError(f"{path}: header must be node,x,y or node,lat,lon, got {header}")
        rows = {}
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            try:
                rows[int(row[0])] = (float(row[1]), float(row[2]))
            except (ValueError, IndexError):
                raise GraphError(f"{path}:{lineno}: malformed row {row}") from None
    n = len(rows)
    if sorted(rows) != list(range(n)):
        raise GraphError(f"{path}: node ids must be exactly 0..{n - 1}")
    return _check_coords([rows[i] for i in range(n)])


def save_coords(coords, path, names=("x", "y")) -> None:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node", *names])
        for i, (a, b) in enumerate(np.asarray(coords, dtype=float)):
            w.writerow([i, f"{a:.17g}", f"{b:.17g}"])
