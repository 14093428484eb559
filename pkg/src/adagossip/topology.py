"""Communication graphs and their uniform doubly stochastic mixing matrices.

Every constructor assigns ``1 / (degree + 1)`` to each edge and to the
self-loop, so rows and columns sum to one and ``W`` is symmetric by
construction.
"""

from __future__ import annotations

import warnings
from collections import deque
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "TopologyError",
    "MixingMatrix",
    "build_ring",
    "build_torus",
    "build_dyck",
    "build_fully_connected",
    "spectral_gap",
    "parse_topology",
    "DYCK_LCF",
]

# LCF notation of the Dyck graph: [5, -5, 13, -13]^8 on a 32-cycle.
DYCK_LCF = (5, -5, 13, -13)

KINDS = ("ring", "dyck", "torus", "fully_connected")
_TOL = 1e-12


class TopologyError(ValueError):
    """Raised for graphs that cannot carry a valid mixing matrix."""


@dataclass(frozen=True)
class MixingMatrix:
    """Symmetric doubly stochastic gossip weights with self-loops.

    Attributes:
        n: number of agents.
        w: ``n x n`` weight matrix, ``w[i, j] > 0`` iff ``j`` is a neighbor of ``i``
            (self included).
        kind: one of ``ring``, ``dyck``, ``torus``, ``fully_connected``.
        edges: undirected edge set ``{(i, j): i < j}`` of the declared graph.
    """

    n: int
    w: np.ndarray
    kind: str
    edges: frozenset = field(repr=False)
    neighbors: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        w = np.array(self.w, dtype=np.float64)
        w.setflags(write=False)
        object.__setattr__(self, "w", w)
        self._validate()
        # N(i) including i itself, ascending; the fixed order keeps sums reproducible.
        nbrs = tuple(tuple(int(j) for j in np.flatnonzero(w[i] > 0)) for i in range(self.n))
        object.__setattr__(self, "neighbors", nbrs)

    def _validate(self) -> None:
        w, n = self.w, self.n
        if self.kind not in KINDS:
            raise TopologyError(f"unknown topology kind {self.kind!r}")
        if w.shape != (n, n):
            raise TopologyError(f"weight matrix has shape {w.shape}, expected ({n}, {n})")
        if np.any(w < 0) or np.any(w > 1):
            raise TopologyError("weights must lie in [0, 1]")
        if not np.array_equal(w, w.T):
            raise TopologyError("mixing matrix is not symmetric")
        if np.any(np.abs(w.sum(axis=1) - 1.0) > _TOL) or np.any(np.abs(w.sum(axis=0) - 1.0) > _TOL):
            raise TopologyError("mixing matrix is not doubly stochastic")
        if np.any(np.diag(w) <= 0):
            raise TopologyError("every agent needs a self-loop")
        for i, j in zip(*np.nonzero(w)):
            if i != j and (min(i, j), max(i, j)) not in self.edges:
                raise TopologyError(f"nonzero weight on ({i}, {j}) which is not an edge of the {self.kind} graph")
        if not _is_connected(n, self.edges):
            raise TopologyError(f"{self.kind} graph on {n} nodes is disconnected")

    def out_degree(self, i: int = 0) -> int:
        """Number of neighbors of agent ``i`` excluding itself."""
        return len(self.neighbors[i]) - 1


def _adjacency(n: int, edges) -> list[list[int]]:
    adj: list[list[int]] = [[] for _ in range(n)]
    for i, j in edges:
        adj[i].append(j)
        adj[j].append(i)
    return adj


def _is_connected(n: int, edges) -> bool:
    adj = _adjacency(n, edges)
    seen = {0}
    queue = deque([0])
    while queue:
        v = queue.popleft()
        for u in adj[v]:
            if u not in seen:
                seen.add(u)
                queue.append(u)
    return len(seen) == n


def _uniform(n: int, edges: set[tuple[int, int]], kind: str) -> MixingMatrix:
    """Weights 1/(deg+1) on every edge and self-loop; requires a regular graph."""
    adj = _adjacency(n, edges)
    degrees = {len(a) for a in adj}
    if len(degrees) != 1:
        raise TopologyError(f"{kind} graph is not regular (degrees {sorted(degrees)})")
    weight = 1.0 / (degrees.pop() + 1)
    w = np.zeros((n, n))
    np.fill_diagonal(w, weight)
    for i, j in edges:
        w[i, j] = w[j, i] = weight
    return MixingMatrix(n=n, w=w, kind=kind, edges=frozenset(edges))


def _edge(i: int, j: int) -> tuple[int, int]:
    return (i, j) if i < j else (j, i)


def build_ring(n: int) -> MixingMatrix:
    """Undirected ring, each agent mixing itself and its two neighbors at 1/3."""
    if n < 3:
        raise TopologyError(f"ring needs n >= 3 (predecessor equals successor below that), got {n}")
    return _uniform(n, {_edge(i, (i + 1) % n) for i in range(n)}, "ring")


def build_torus(rows: int, cols: int) -> MixingMatrix:
    """2-D wraparound grid; node ``r * cols + c`` has four neighbors, weight 1/5."""
    if rows < 3 or cols < 3:
        raise TopologyError(f"torus needs both dimensions >= 3, got {rows}x{cols}")
    edges = set()
    for r in range(rows):
        for c in range(cols):
            v = r * cols + c
            edges.add(_edge(v, r * cols + (c + 1) % cols))
            edges.add(_edge(v, ((r + 1) % rows) * cols + c))
    return _uniform(rows * cols, edges, "torus")


def build_dyck() -> MixingMatrix:
    """The 32-node cubic Dyck graph from its LCF code, weight 1/4."""
    n = 32
    edges = {_edge(i, (i + 1) % n) for i in range(n)}
    for i in range(n):
        edges.add(_edge(i, (i + DYCK_LCF[i % len(DYCK_LCF)]) % n))
    return _uniform(n, edges, "dyck")


def build_fully_connected(n: int) -> MixingMatrix:
    if n < 1:
        raise TopologyError(f"need at least one agent, got {n}")
    edges = {(i, j) for i in range(n) for j in range(i + 1, n)}
    if n == 1:
        return MixingMatrix(n=1, w=np.ones((1, 1)), kind="fully_connected", edges=frozenset())
    return _uniform(n, edges, "fully_connected")


def spectral_gap(w) -> float:
    """Return ``1 - |lambda_2|`` of a mixing matrix.

    Accepts a :class:`MixingMatrix` or a raw symmetric array. A disconnected
    weight pattern has ``|lambda_2| = 1``; that case returns 0.0 and warns.
    """
    mat = w.w if isinstance(w, MixingMatrix) else np.asarray(w, dtype=np.float64)
    if mat.shape[0] == 1:
        return 1.0
    mags = np.sort(np.abs(np.linalg.eigvalsh(mat)))[::-1]
    gap = 1.0 - mags[1]
    if gap <= 1e-12:
        warnings.warn("mixing matrix is disconnected: spectral gap is zero", RuntimeWarning, stacklevel=2)
        return 0.0
    return float(gap)


def parse_topology(text: str, agents: int | None = None) -> MixingMatrix:
    """Build a mixing matrix from a CLI string: ``ring``, ``dyck32``, ``torus:RxC``, ``full``."""
    text = text.strip().lower()
    if text == "ring":
        if agents is None:
            raise TopologyError("ring topology needs an agent count")
        return build_ring(agents)
    if text == "full":
        if agents is None:
            raise TopologyError("full topology needs an agent count")
        return build_fully_connected(agents)
    if text in ("dyck", "dyck32"):
        if agents not in (None, 32):
            raise TopologyError(f"the Dyck graph has 32 agents, got agents={agents}")
        return build_dyck()
    if text.startswith("torus"):
        _, _, dims = text.partition(":")
        if not dims:
            raise TopologyError("torus needs dimensions, e.g. torus:4x8")
        try:
            rows, cols = (int(v) for v in dims.split("x"))
        except ValueError:
            raise TopologyError(f"cannot parse torus dimensions {dims!r}") from None
        if agents is not None and agents != rows * cols:
            raise TopologyError(f"torus:{rows}x{cols} has {rows * cols} agents, got agents={agents}")
        return build_torus(rows, cols)
    raise TopologyError(f"unknown topology {text!r}; expected ring, dyck32, torus:RxC or full")
