"""Communication graphs and their arc-incidence algebra.

A network of N nodes with E undirected edges is represented by :class:`Graph`.
Every edge contributes two directed arcs, so the arc set has size 2E.  The
arc matrices ``m_plus`` / ``m_minus`` (one column per arc, +-1 entries) tie
the per-node iterates to the per-arc consensus variables:

    0.5 * m_plus @ m_plus.T  == D + W   (signless Laplacian)
    0.5 * m_minus @ m_minus.T == D - W  (standard Laplacian)

with D the degree diagonal and W the adjacency matrix.  Only the base
(dimension-1) matrices are stored; the lift to n-dimensional node variables
is a Kronecker product with the identity and leaves all singular values
unchanged, so solvers apply the base matrices blockwise instead.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .noise import keyed_uniforms

# Domain tag separating graph-sampling randomness from every other consumer
# of the keyed RNG (see noise.keyed_uniforms).
_GRAPH_DOMAIN = 3

DEFAULT_MAX_RETRIES = 10_000


class GraphConnectivityError(RuntimeError):
    """Raised when rejection sampling fails to produce a connected graph."""


@dataclass(frozen=True)
class Graph:
    """Undirected, connected, simple graph on nodes 0..n_nodes-1.

    ``edges`` must be canonical: each pair (i, j) with i < j, sorted
    lexicographically, no duplicates.  Use :meth:`from_edges` to normalize
    arbitrary edge lists.
    """

    n_nodes: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if self.n_nodes < 2:
            raise ValueError(f"need at least 2 nodes, got {self.n_nodes}")
        prev = None
        for i, j in self.edges:
            if not (0 <= i < j < self.n_nodes):
                raise ValueError(f"edge ({i}, {j}) is not canonical (need 0 <= i < j < N)")
            if prev is not None and (i, j) <= prev:
                raise ValueError("edges must be sorted and unique")
            prev = (i, j)
        if not self._connected():
            raise ValueError("graph is not connected")

    @classmethod
    def from_edges(cls, n_nodes: int, edges) -> "Graph":
        canon = sorted({(min(i, j), max(i, j)) for i, j in edges})
        for i, j in canon:
            if i == j:
                raise ValueError(f"self-loop at node {i}")
        return cls(n_nodes=n_nodes, edges=tuple(canon))

    def _connected(self) -> bool:
        parent = list(range(self.n_nodes))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for i, j in self.edges:
            parent[find(i)] = find(j)
        root = find(0)
        return all(find(v) == root for v in range(self.n_nodes))

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_arcs(self) -> int:
        return 2 * len(self.edges)

    @cached_property
    def arcs(self) -> tuple[tuple[int, int], ...]:
        """Canonical arc order: edges in sorted order, (i, j) then (j, i)."""
        out = []
        for i, j in self.edges:
            out.append((i, j))
            out.append((j, i))
        return tuple(out)

    @cached_property
    def neighbors(self) -> tuple[tuple[int, ...], ...]:
        nbrs: list[list[int]] = [[] for _ in range(self.n_nodes)]
        for i, j in self.edges:
            nbrs[i].append(j)
            nbrs[j].append(i)
        return tuple(tuple(sorted(v)) for v in nbrs)

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.array([len(v) for v in self.neighbors], dtype=np.int64)

    @property
    def max_degree(self) -> int:
        return int(self.degrees.max())


@dataclass(frozen=True, eq=False)
class ArcMatrices:
    """Base (dimension-1) arc matrices of a graph, one column per arc.

    For arc q = (i, j): ``m_plus[:, q]`` has +1 at rows i and j,
    ``m_minus[:, q]`` has +1 at row i and -1 at row j.
    """

    m_plus: np.ndarray   # (N, 2E)
    m_minus: np.ndarray  # (N, 2E)
    arcs: tuple[tuple[int, int], ...]

    @property
    def n_nodes(self) -> int:
        return self.m_plus.shape[0]

    @property
    def n_arcs(self) -> int:
        return self.m_plus.shape[1]

    @cached_property
    def signless_laplacian(self) -> np.ndarray:
        """D + W, equal to 0.5 * m_plus @ m_plus.T."""
        return 0.5 * (self.m_plus @ self.m_plus.T)

    @cached_property
    def laplacian(self) -> np.ndarray:
        """D - W, equal to 0.5 * m_minus @ m_minus.T."""
        return 0.5 * (self.m_minus @ self.m_minus.T)

    def apply_mplus_t(self, x_nodes: np.ndarray) -> np.ndarray:
        """Blockwise m_plus.T @ x for node-major stacked variables.

        ``x_nodes`` has shape (..., N, n); the result has shape (..., 2E, n)
        and equals the lifted (Kronecker) matrix applied to the stack.
        """
        return np.matmul(self.m_plus.T, x_nodes)

    def apply_mminus_t(self, x_nodes: np.ndarray) -> np.ndarray:
        return np.matmul(self.m_minus.T, x_nodes)

    def apply_mplus(self, z_arcs: np.ndarray) -> np.ndarray:
        """Blockwise m_plus @ z for arc-major stacked variables (..., 2E, n)."""
        return np.matmul(self.m_plus, z_arcs)

    def apply_mminus(self, z_arcs: np.ndarray) -> np.ndarray:
        return np.matmul(self.m_minus, z_arcs)


@dataclass(frozen=True)
class SpectralSummary:
    """Singular values of the arc matrices plus degree data.

    Values refer to the base matrices; the n-dimensional lift shares them.
    ``l_max`` is the largest signless-Laplacian eigenvalue and satisfies
    ``l_max == 0.5 * sigma_max_mplus**2``.
    """

    sigma_max_mplus: float
    sigma_max_mminus: float
    sigma_min_nz_mminus: float
    l_max: float
    max_degree: int


def gen_connected_graph(
    n_nodes: int,
    rho: float,
    seed: int,
    max_retries: int = DEFAULT_MAX_RETRIES,
) -> Graph:
    """Sample a connected graph with connectivity ratio ``rho``.

    The edge count is E = round(rho * N(N-1)/2) (half away from zero); an
    E-subset of all possible edges is drawn uniformly and resampled until
    connected.  Deterministic in ``seed``: attempt t consumes the keyed
    uniform substream (seed, graph-domain, t).

    Raises ValueError when E < N-1 (connectivity impossible) and
    GraphConnectivityError when ``max_retries`` samples are all disconnected.
    """
    if n_nodes < 2:
        raise ValueError(f"need at least 2 nodes, got {n_nodes}")
    if not (0.0 < rho <= 1.0):
        raise ValueError(f"rho must lie in (0, 1], got {rho}")
    e_complete = n_nodes * (n_nodes - 1) // 2
    n_edges = int(np.floor(rho * e_complete + 0.5))
    if n_edges < n_nodes - 1:
        raise ValueError(
            f"rho={rho} gives {n_edges} edges; a connected graph on "
            f"{n_nodes} nodes needs at least {n_nodes - 1}"
        )

    all_edges = [(i, j) for i in range(n_nodes) for j in range(i + 1, n_nodes)]
    for attempt in range(max_retries):
        chosen = _sample_edge_subset(all_edges, n_edges, seed, attempt)
        g = Graph.from_edges(n_nodes, chosen) if _is_connected(n_nodes, chosen) else None
        if g is not None:
            return g
    raise GraphConnectivityError(
        f"no connected graph in {max_retries} samples "
        f"(N={n_nodes}, rho={rho}, E={n_edges}, seed={seed})"
    )


def _sample_edge_subset(all_edges, n_edges, seed, attempt):
    """Uniform E-subset via a partial Fisher-Yates shuffle."""
    m = len(all_edges)
    u = keyed_uniforms(seed, (_GRAPH_DOMAIN, attempt), n_edges)
    idx = list(range(m))
    for t in range(n_edges):
        r = t + int(u[t] * (m - t))
        idx[t], idx[r] = idx[r], idx[t]
    return [all_edges[k] for k in idx[:n_edges]]


def _is_connected(n_nodes, edges) -> bool:
    parent = list(range(n_nodes))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j in edges:
        parent[find(i)] = find(j)
    root = find(0)
    return all(find(v) == root for v in range(n_nodes))


def build_arc_matrices(g: Graph) -> ArcMatrices:
    """Assemble the base arc matrices in the canonical arc order."""
    n, a = g.n_nodes, g.n_arcs
    m_plus = np.zeros((n, a))
    m_minus = np.zeros((n, a))
    for q, (i, j) in enumerate(g.arcs):
        m_plus[i, q] = 1.0
        m_plus[j, q] = 1.0
        m_minus[i, q] = 1.0
        m_minus[j, q] = -1.0
    return ArcMatrices(m_plus=m_plus, m_minus=m_minus, arcs=g.arcs)


def spectral_summary(am: ArcMatrices) -> SpectralSummary:
    """Singular values via eigendecomposition of the 0.5*M*M.T Gram forms.

    sigma = sqrt(2 * eigenvalue); the smallest nonzero singular value of
    m_minus is the smallest sigma strictly above 1e-9 * sigma_max.  Gram
    eigenvalues carry solver noise of order N * eps * lambda_max, which the
    square root would inflate past that filter, so eigenvalues below the
    noise floor are zeroed first.
    """
    q_eig = np.linalg.eigvalsh(am.signless_laplacian)
    l_eig = np.linalg.eigvalsh(am.laplacian)
    l_max = float(q_eig[-1])
    noise_floor = am.n_nodes * np.finfo(float).eps * max(float(l_eig[-1]), 1.0)
    l_eig = np.where(l_eig > noise_floor, l_eig, 0.0)
    sigma_max_mplus = float(np.sqrt(2.0 * max(l_max, 0.0)))
    sigma_max_mminus = float(np.sqrt(2.0 * max(float(l_eig[-1]), 0.0)))
    sigmas_minus = np.sqrt(2.0 * np.clip(l_eig, 0.0, None))
    nz = sigmas_minus[sigmas_minus > 1e-9 * sigma_max_mminus]
    if nz.size == 0:
        raise ValueError("m_minus has no nonzero singular value (graph has no edges?)")
    max_degree = int(np.rint(np.diag(am.signless_laplacian)).max())
    return SpectralSummary(
        sigma_max_mplus=sigma_max_mplus,
        sigma_max_mminus=sigma_max_mminus,
        sigma_min_nz_mminus=float(nz.min()),
        l_max=l_max,
        max_degree=max_degree,
    )


def check_laplacian_bound(s: SpectralSummary) -> bool:
    """Largest signless-Laplacian eigenvalue vs. twice the max degree.

    The bound holds for every graph; the tiny slack only absorbs eigensolver
    roundoff in tight cases (complete graphs hit equality).
    """
    return s.l_max <= 2.0 * s.max_degree + 1e-9 * max(1.0, s.l_max)


def write_edge_list(g: Graph, path) -> None:
    """Write the `N E` header plus one 0-based `i j` line per edge."""
    lines = [f"{g.n_nodes} {g.n_edges}"]
    lines += [f"{i} {j}" for i, j in g.edges]
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def read_edge_list(path) -> Graph:
    text = Path(path).read_text(encoding="ascii").split()
    if len(text) < 2:
        raise ValueError(f"{path}: missing header")
    n_nodes, n_edges = int(text[0]), int(text[1])
    nums = text[2:]
    if len(nums) != 2 * n_edges:
        raise ValueError(f"{path}: expected {2 * n_edges} node indices, got {len(nums)}")
    edges = [(int(nums[2 * k]), int(nums[2 * k + 1])) for k in range(n_edges)]
    return Graph.from_edges(n_nodes, edges)
