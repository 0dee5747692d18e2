"""Immutable CSR graph storage, degree analytics, k-hop queries and splitting."""

from __future__ import annotations

import os
from collections.abc import Iterable
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ._sampling import gather_segments

DEGREE_MODES = ("out", "in", "total")


class GraphError(ValueError):
    """Raised when a graph cannot be constructed from the given edges."""


class GraphConfigError(ValueError):
    """Raised when a query needs adjacency the graph was built without."""


class EdgeListError(ValueError):
    """Malformed edge-list file."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Graph:
    """Compressed-sparse-row adjacency.

    ``out_targets[out_offsets[v]:out_offsets[v + 1]]`` are the out-neighbors
    of ``v`` sorted ascending. The in-adjacency mirror is optional.
    """

    node_count: int
    out_offsets: np.ndarray
    out_targets: np.ndarray
    in_offsets: np.ndarray | None = None
    in_targets: np.ndarray | None = None
    symmetrized: bool = False

    @property
    def edge_count(self) -> int:
        return int(self.out_targets.size)

    @property
    def has_in_adjacency(self) -> bool:
        return self.in_offsets is not None

    def neighbors(self, v: int) -> np.ndarray:
        return self.out_targets[self.out_offsets[v] : self.out_offsets[v + 1]]

    def out_degree(self) -> np.ndarray:
        return np.diff(self.out_offsets)

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        src = np.repeat(np.arange(self.node_count, dtype=np.int64), self.out_degree())
        return src, self.out_targets

    @cached_property
    def _edge_keys(self) -> np.ndarray:
        src, dst = self.edges()
        # sorted because CSR is sorted by (src, dst)
        return src * np.int64(max(self.node_count, 1)) + dst

    def has_edges(self, src, dst) -> np.ndarray:
        """Vectorized membership test for edges ``src[i] -> dst[i]``."""
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        keys = src * np.int64(max(self.node_count, 1)) + dst
        if self._edge_keys.size == 0:
            return np.zeros(keys.shape, dtype=bool)
        pos = np.minimum(np.searchsorted(self._edge_keys, keys), self._edge_keys.size - 1)
        return self._edge_keys[pos] == keys

    @cached_property
    def sampling_csr(self) -> tuple[np.ndarray, np.ndarray]:
        """CSR with duplicate edges collapsed; samplers draw from distinct neighbors."""
        keys = self._edge_keys
        if keys.size < 2 or np.all(keys[1:] != keys[:-1]):
            return self.out_offsets, self.out_targets
        keep = np.r_[True, keys[1:] != keys[:-1]]
        src, dst = self.edges()
        counts = np.bincount(src[keep], minlength=self.node_count)
        offsets = np.zeros(self.node_count + 1, dtype=np.int64)
        np.cumsum(counts, out=offsets[1:])
        return _readonly(offsets), _readonly(dst[keep].copy())

    @cached_property
    def distinct_degree(self) -> np.ndarray:
        """Number of distinct out-neighbors per node."""
        return _readonly(np.diff(self.sampling_csr[0]))

    def gather(self, nodes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Distinct neighbors of ``nodes``, as ``(segment, neighbor)`` arrays."""
        offsets, targets = self.sampling_csr
        return gather_segments(offsets, targets, nodes)


def _as_edge_array(edges) -> np.ndarray:
    arr = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges)
    if arr.size == 0:
        return np.empty((0, 2), dtype=np.int64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise GraphError(f"edges must be (u, v) pairs, got shape {arr.shape}")
    return arr.astype(np.int64, copy=False)


def _csr(keys_src: np.ndarray, keys_dst: np.ndarray, n: int):
    order = np.lexsort((keys_dst, keys_src))
    counts = np.bincount(keys_src, minlength=n)
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    return offsets, keys_dst[order].copy()


def build_graph(
    edges,
    node_count: int,
    symmetrize: bool = False,
    build_in_adjacency: bool = False,
) -> Graph:
    """Build a CSR graph.

    Duplicate edges are kept. With ``symmetrize``, a reversed copy of every
    edge whose reverse is missing from the input is added before
    construction (self-loops are their own reverse).
    """
    if node_count < 0:
        raise GraphError(f"node_count must be non-negative, got {node_count}")
    arr = _as_edge_array(edges)
    u, v = arr[:, 0], arr[:, 1]
    bad = (u < 0) | (u >= node_count) | (v < 0) | (v >= node_count)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise GraphError(
            f"edge #{i} ({int(u[i])}, {int(v[i])}) out of range for node_count={node_count}"
        )
    if symmetrize and u.size:
        width = np.int64(node_count)
        missing = ~np.isin(v * width + u, u * width + v)
        u, v = np.concatenate([u, v[missing]]), np.concatenate([v, u[missing]])
    out_offsets, out_targets = _csr(u, v, node_count)
    in_offsets = in_targets = None
    if build_in_adjacency:
        in_offsets, in_targets = _csr(v, u, node_count)
        _readonly(in_offsets)
        _readonly(in_targets)
    return Graph(
        node_count=int(node_count),
        out_offsets=_readonly(out_offsets),
        out_targets=_readonly(out_targets),
        in_offsets=in_offsets,
        in_targets=in_targets,
        symmetrized=bool(symmetrize),
    )


@dataclass(frozen=True)
class DegreeVector:
    degrees: np.ndarray
    mode: str


def total_degree(g: Graph, mode: str = "total") -> DegreeVector:
    """Per-node degree; ``total`` counts in- and out-edges."""
    if mode not in DEGREE_MODES:
        raise ValueError(f"unknown degree mode {mode!r}")
    out = g.out_degree()
    if mode == "out":
        return DegreeVector(out, mode)
    if not (g.has_in_adjacency or g.symmetrized):
        raise GraphConfigError(
            f"degree mode {mode!r} needs in-adjacency or a symmetrized graph"
        )
    if g.has_in_adjacency:
        indeg = np.diff(g.in_offsets)
    else:
        indeg = np.bincount(g.out_targets, minlength=g.node_count)
    if mode == "in":
        return DegreeVector(indeg, mode)
    return DegreeVector(out + indeg, mode)


@dataclass(frozen=True, eq=False)
class SplitResult:
    """Dense/sparse partition of a graph.

    ``dense_ids[i]`` is the original id of local node ``i`` in the dense
    subgraph; ``dense_local[v]`` maps back (``-1`` when ``v`` is sparse).
    Likewise for the sparse side.
    """

    theta: int
    dense_nodes: np.ndarray
    sparse_nodes: np.ndarray
    dense_subgraph: Graph
    sparse_subgraph: Graph
    dense_local: np.ndarray
    sparse_local: np.ndarray
    cross_edges: int

    @property
    def dense_ids(self) -> np.ndarray:
        return self.dense_nodes

    @property
    def sparse_ids(self) -> np.ndarray:
        return self.sparse_nodes


def induced_subgraph(g: Graph, nodes: np.ndarray) -> tuple[Graph, np.ndarray]:
    """Node-induced subgraph with contiguous local ids.

    Returns the subgraph and the original-to-local map (``-1`` outside).
    """
    nodes = np.asarray(nodes, dtype=np.int64)
    local = np.full(g.node_count, -1, dtype=np.int64)
    local[nodes] = np.arange(nodes.size, dtype=np.int64)
    src, dst = g.edges()
    keep = (local[src] >= 0) & (local[dst] >= 0)
    sub = build_graph(
        np.stack([local[src[keep]], local[dst[keep]]], axis=1),
        nodes.size,
        build_in_adjacency=g.has_in_adjacency,
    )
    sub = Graph(
        node_count=sub.node_count,
        out_offsets=sub.out_offsets,
        out_targets=sub.out_targets,
        in_offsets=sub.in_offsets,
        in_targets=sub.in_targets,
        symmetrized=g.symmetrized,
    )
    return sub, local


def split_by_degree(g: Graph, theta: int) -> SplitResult:
    """Partition nodes into ``deg > theta`` (dense) and the rest (sparse).

    Degree is total degree. Edges crossing the partition belong to neither
    subgraph; their number is reported as ``cross_edges``.
    """
    deg = total_degree(g, "total").degrees
    dense_mask = deg > theta
    dense = np.flatnonzero(dense_mask)
    sparse = np.flatnonzero(~dense_mask)
    dsub, dlocal = induced_subgraph(g, dense)
    ssub, slocal = induced_subgraph(g, sparse)
    cross = g.edge_count - dsub.edge_count - ssub.edge_count
    return SplitResult(
        theta=int(theta),
        dense_nodes=dense,
        sparse_nodes=sparse,
        dense_subgraph=dsub,
        sparse_subgraph=ssub,
        dense_local=dlocal,
        sparse_local=slocal,
        cross_edges=int(cross),
    )


def k_hop(g: Graph, v: int, k: int) -> set[int]:
    """Nodes within ``k`` out-edge hops of ``v`` (``v`` included)."""
    if not 0 <= v < g.node_count:
        raise IndexError(f"node {v} out of range for node_count={g.node_count}")
    if k < 0:
        raise ValueError(f"k must be non-negative, got {k}")
    seen = np.zeros(g.node_count, dtype=bool)
    seen[v] = True
    frontier = np.array([v], dtype=np.int64)
    for _ in range(k):
        _, nbrs = gather_segments(g.out_offsets, g.out_targets, frontier)
        nbrs = np.unique(nbrs)
        frontier = nbrs[~seen[nbrs]]
        if frontier.size == 0:
            break
        seen[frontier] = True
    return set(np.flatnonzero(seen).tolist())


# -- synthetic generators ---------------------------------------------------


def erdos_renyi(n: int, p: float, seed: int = 0) -> Graph:
    """G(n, p): each unordered pair is an edge independently with prob. ``p``."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    rng = np.random.default_rng(seed)
    pairs = n * (n - 1) // 2
    m = int(rng.binomial(pairs, p)) if pairs else 0
    idx = np.sort(rng.choice(pairs, size=m, replace=False)) if m else np.empty(0, np.int64)
    # row i of the strict upper triangle holds pairs (i, i+1..n-1)
    row_len = np.arange(n - 1, -1, -1, dtype=np.int64)
    row_start = np.concatenate([[0], np.cumsum(row_len)[:-1]])
    i = np.searchsorted(row_start, idx, side="right") - 1
    j = i + 1 + (idx - row_start[i])
    return build_graph(np.stack([i, j], axis=1), n, symmetrize=True)


def preferential_attachment(n: int, m: int, seed: int = 0) -> Graph:
    """Barabasi-Albert growth: each new node links to ``m`` distinct nodes
    chosen proportionally to current degree, starting from a star on
    ``m + 1`` nodes."""
    if n < 1 or m < 1:
        raise ValueError(f"need n >= 1 and m >= 1, got n={n}, m={m}")
    if m >= n:
        raise ValueError(f"m must be smaller than n, got n={n}, m={m}")
    rng = np.random.default_rng(seed)
    edges = [(0, t) for t in range(1, m + 1)]
    repeated = [0] * m + list(range(1, m + 1))
    for source in range(m + 1, n):
        targets: set[int] = set()
        while len(targets) < m:
            draws = rng.integers(0, len(repeated), size=m - len(targets))
            targets.update(repeated[d] for d in draws)
        for t in sorted(targets):
            edges.append((source, t))
            repeated.append(t)
        repeated.extend([source] * m)
    return build_graph(edges, n, symmetrize=True)


def generate_synthetic(model: str, seed: int = 0, **params) -> Graph:
    """Dispatch on ``model`` (``erdos-renyi``/``er`` or
    ``preferential-attachment``/``ba``)."""
    key = model.lower()
    if key in ("erdos-renyi", "er"):
        return erdos_renyi(int(params["n"]), float(params["p"]), seed)
    if key in ("preferential-attachment", "ba"):
        return preferential_attachment(int(params["n"]), int(params["m"]), seed)
    raise ValueError(f"unknown graph model {model!r}")


# -- edge-list files --------------------------------------------------------


def read_edge_list(
    path: str | os.PathLike, node_count: int | None = None, symmetrize: bool = True
) -> Graph:
    """Parse ``u v`` lines; ``#`` lines are comments except ``# nodes=N``."""
    header_n = None
    pairs: list[tuple[int, int]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("nodes="):
                    try:
                        header_n = int(body[len("nodes=") :])
                    except ValueError:
                        raise EdgeListError(f"{path}:{lineno}: bad header {line!r}") from None
                continue
            parts = line.split()
            if len(parts) != 2:
                raise EdgeListError(f"{path}:{lineno}: expected 'u v', got {line!r}")
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise EdgeListError(f"{path}:{lineno}: non-integer id in {line!r}") from None
            if u < 0 or v < 0:
                raise EdgeListError(f"{path}:{lineno}: negative id in {line!r}")
            pairs.append((u, v))
    if node_count is None:
        node_count = header_n
    if node_count is None:
        node_count = 1 + max((max(p) for p in pairs), default=-1)
    try:
        return build_graph(pairs, node_count, symmetrize=symmetrize)
    except GraphError as exc:
        raise EdgeListError(f"{path}: {exc}") from None


def write_edge_list(path: str | os.PathLike, g: Graph) -> None:
    """Write ``g`` with a ``# nodes=N`` header.

    Symmetrized graphs are written once per undirected pair (``u <= v``).
    """
    src, dst = g.edges()
    if g.symmetrized:
        keep = src <= dst
        src, dst = src[keep], dst[keep]
    lines: Iterable[str] = (f"{a} {b}\n" for a, b in zip(src.tolist(), dst.tolist()))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# nodes={g.node_count}\n")
        fh.writelines(lines)
