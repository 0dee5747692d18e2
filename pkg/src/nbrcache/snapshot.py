"""Static/dynamic neighborhood snapshots and their mixing rules.

A snapshot maps nodes to sampled neighbor lists. Every entry is tagged with
where it came from: the long-lived static view or a fresh dynamic sample.
Mixing two snapshots with weight ``a`` means picking ``round(a * N)``
nodes from one side and the rest from the other; counts use round-half-up.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from ._sampling import round_half_up
from .graph import Graph, k_hop

STATIC = 0
DYNAMIC = 1


@dataclass
class Snapshot:
    neighbors: dict[int, np.ndarray] = field(default_factory=dict)
    provenance: dict[int, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        for v, nb in self.neighbors.items():
            nb = np.asarray(nb, dtype=np.int64)
            if np.unique(nb).size != nb.size:
                raise ValueError(f"duplicate neighbors for node {v}")
            self.neighbors[v] = nb
            tags = self.provenance.get(v)
            tags = np.full(nb.size, STATIC, np.uint8) if tags is None else np.asarray(tags, np.uint8)
            if tags.size != nb.size:
                raise ValueError(f"provenance length mismatch for node {v}")
            self.provenance[v] = tags
        extra = set(self.provenance) - set(self.neighbors)
        if extra:
            raise ValueError(f"provenance for unknown nodes {sorted(extra)[:5]}")

    @classmethod
    def tagged(cls, neighbors: Mapping[int, Iterable[int]], tag: int) -> "Snapshot":
        nb = {int(v): np.asarray(list(e) if not isinstance(e, np.ndarray) else e, dtype=np.int64)
              for v, e in neighbors.items()}
        return cls(nb, {v: np.full(e.size, tag, np.uint8) for v, e in nb.items()})

    @classmethod
    def sample(cls, g: Graph, nodes, k: int, seed=0, tag: int = DYNAMIC) -> "Snapshot":
        """Up to ``k`` uniform distinct neighbors for each of ``nodes``."""
        rng = np.random.default_rng(seed)
        out = {}
        for v in np.unique(np.asarray(nodes, dtype=np.int64)).tolist():
            nb = np.unique(g.neighbors(v))
            out[v] = np.sort(rng.choice(nb, size=min(k, nb.size), replace=False))
        return cls.tagged(out, tag)

    def __len__(self) -> int:
        return len(self.neighbors)

    def __contains__(self, v) -> bool:
        return v in self.neighbors

    def nodes(self) -> list[int]:
        return sorted(self.neighbors)

    def subset(self, nodes: Iterable[int]) -> "Snapshot":
        return Snapshot({v: self.neighbors[v] for v in nodes},
                        {v: self.provenance[v] for v in nodes})

    def tag_counts(self) -> dict[int, int]:
        """Entries per provenance tag."""
        counts = {STATIC: 0, DYNAMIC: 0}
        for tags in self.provenance.values():
            for t, c in zip(*np.unique(tags, return_counts=True)):
                counts[int(t)] += int(c)
        return counts

    def node_tags(self) -> dict[int, int]:
        """Node counts by the tag of their first entry (nodes with no entries
        are skipped)."""
        counts = {STATIC: 0, DYNAMIC: 0}
        for tags in self.provenance.values():
            if tags.size:
                counts[int(tags[0])] += 1
        return counts

    def is_valid(self, g: Graph) -> bool:
        for v, nb in self.neighbors.items():
            if nb.size and not g.has_edges(np.full(nb.size, v), nb).all():
                return False
        return True


@dataclass(frozen=True)
class MixWeights:
    alpha: float
    beta: float | None = None

    def __post_init__(self):
        for name in ("alpha", "beta"):
            val = getattr(self, name)
            if val is not None and not 0 <= val <= 1:
                raise ValueError(f"{name} must lie in [0, 1], got {val}")

    def normalized(self) -> float:
        """The weight of the first term, after forcing ``alpha + beta == 1``."""
        if self.beta is not None and abs(self.alpha + self.beta - 1) > 1e-12:
            warnings.warn(
                f"mix weights alpha={self.alpha}, beta={self.beta} do not sum to 1; "
                f"using beta={1 - self.alpha}",
                stacklevel=2,
            )
        return self.alpha


@dataclass(frozen=True)
class HierarchyParams:
    """Per-level mixing weights; ``alphas[0]`` drives level 1 and
    ``betas[i]`` drives level ``i + 1`` (``betas[0]`` is unused)."""

    levels: int
    alphas: Sequence[float]
    betas: Sequence[float]

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError(f"levels must be >= 1, got {self.levels}")
        if len(self.alphas) != self.levels or len(self.betas) != self.levels:
            raise ValueError("alphas and betas must each have one entry per level")
        for w in list(self.alphas) + list(self.betas):
            if not 0 <= w <= 1:
                raise ValueError(f"mix weights must lie in [0, 1], got {w}")


def _pick(rng: np.random.Generator, keys: list[int], n: int) -> list[int]:
    if n <= 0:
        return []
    return sorted(rng.choice(np.asarray(keys, dtype=np.int64), size=n, replace=False).tolist())


def combine_snapshot(static: Snapshot, dynamic: Snapshot, alpha, target_size: int,
                     seed=0) -> Snapshot:
    """Mix two snapshots node-wise.

    ``round(alpha * N)`` nodes come from ``static`` and the rest from
    ``dynamic``. Dynamic nodes are chosen first, so a node present in both
    keeps its dynamic neighborhood and static picks come from the remaining
    keys.
    """
    if isinstance(alpha, MixWeights):
        alpha = alpha.normalized()
    if not 0 <= alpha <= 1:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    n = int(target_size)
    if n < 0:
        raise ValueError(f"target size must be non-negative, got {n}")
    n_static = round_half_up(alpha, n)
    n_dynamic = n - n_static
    dyn_keys = dynamic.nodes()
    if n_dynamic > len(dyn_keys):
        raise ValueError(f"need {n_dynamic} dynamic nodes, snapshot has {len(dyn_keys)}")
    rng = np.random.default_rng(seed)
    dyn = _pick(rng, dyn_keys, n_dynamic)
    taken = set(dyn)
    st_keys = [v for v in static.nodes() if v not in taken]
    if n_static > len(st_keys):
        raise ValueError(
            f"need {n_static} static nodes outside the dynamic picks, only {len(st_keys)} available"
        )
    st = _pick(rng, st_keys, n_static)
    nb = {v: static.neighbors[v] for v in st}
    tags = {v: np.full(static.neighbors[v].size, STATIC, np.uint8) for v in st}
    for v in dyn:
        nb[v] = dynamic.neighbors[v]
        tags[v] = np.full(dynamic.neighbors[v].size, DYNAMIC, np.uint8)
    return Snapshot(dict(sorted(nb.items())), tags)


def _mix(current: Snapshot, incoming: Snapshot, weight: float, rng) -> Snapshot:
    """Replace ``round(weight * |current|)`` nodes of ``current`` by nodes of
    ``incoming``, keeping the size where sources allow. Tags travel with
    their entries."""
    if weight == 0:
        return current
    n = len(current)
    n_in = min(round_half_up(weight, n), len(incoming))
    new = _pick(rng, incoming.nodes(), n_in)
    taken = set(new)
    keep_keys = [v for v in current.nodes() if v not in taken]
    keep = _pick(rng, keep_keys, min(n - n_in, len(keep_keys)))
    nb, tags = {}, {}
    for v in keep:
        nb[v], tags[v] = current.neighbors[v], current.provenance[v]
    for v in new:
        nb[v], tags[v] = incoming.neighbors[v], incoming.provenance[v]
    return Snapshot(dict(sorted(nb.items())), tags)


def hierarchical_update(levels: Sequence[Snapshot], dynamic: Snapshot, params: HierarchyParams,
                        seed=0) -> list[Snapshot]:
    """One bottom-up pass over a stack of cache levels.

    Level 1 absorbs ``dynamic`` with weight ``alphas[0]``; each higher level
    absorbs a subsample of the freshly updated level below it with weight
    ``betas[i]``. A zero weight leaves its level untouched.
    """
    if len(levels) != params.levels:
        raise ValueError(f"expected {params.levels} levels, got {len(levels)}")
    rng = np.random.default_rng(seed)
    out = [_mix(levels[0], dynamic, params.alphas[0], rng)]
    for i in range(1, params.levels):
        out.append(_mix(levels[i], out[i - 1], params.betas[i], rng))
    return out


def _weight_vector(n: int, weights) -> np.ndarray:
    w = np.ones(n)
    if isinstance(weights, Mapping):
        for v, x in weights.items():
            w[int(v)] = float(x)
    elif weights is not None:
        w = np.asarray(weights, dtype=float)
        if w.shape != (n,):
            raise ValueError(f"weights must have shape ({n},), got {w.shape}")
    if (w < 0).any() or not np.isfinite(w).all():
        raise ValueError("weights must be finite and non-negative")
    if w.sum() == 0:
        raise ValueError("all importance weights are zero")
    return w


def select_weighted(n: int, weights, budget: int, rng: np.random.Generator) -> np.ndarray:
    """Up to ``budget`` distinct nodes drawn with probability proportional to
    weight (missing weights count as 1)."""
    if budget < 0:
        raise ValueError(f"budget must be non-negative, got {budget}")
    w = _weight_vector(n, weights)
    size = min(int(budget), int(np.count_nonzero(w)))
    return np.sort(rng.choice(n, size=size, replace=False, p=w / w.sum()))


def weighted_snapshot(g: Graph, weights, alpha: float, k: int, budget: int, per_node: int,
                      seed=0, cache=None) -> Snapshot:
    """Importance-weighted snapshot.

    Nodes are selected by :func:`select_weighted`. Each selected node gets
    ``min(per_node, |N_k(v) - {v}|)`` distinct neighbors within ``k`` hops,
    ``round(alpha * m)`` of them static and the rest dynamic. Static picks
    come from the node's cached entries when a cache is attached, otherwise
    from the same candidate pool.
    """
    if not 0 <= alpha <= 1:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    if per_node < 0:
        raise ValueError(f"per_node must be non-negative, got {per_node}")
    rng = np.random.default_rng(seed)
    chosen = select_weighted(g.node_count, weights, budget, rng)
    nb, tags = {}, {}
    for v in chosen.tolist():
        cand = np.array(sorted(k_hop(g, v, k) - {v}), dtype=np.int64)
        m = min(per_node, cand.size)
        pool = cand
        if cache is not None:
            pool = np.intersect1d(cache.layers[0].row(v), cand)
        n_st = min(round_half_up(alpha, m), pool.size)
        st = rng.choice(pool, size=n_st, replace=False) if n_st else np.empty(0, np.int64)
        rest = np.setdiff1d(cand, st)
        dy = rng.choice(rest, size=m - n_st, replace=False) if m > n_st else np.empty(0, np.int64)
        nb[v] = np.concatenate([st, dy]).astype(np.int64)
        tags[v] = np.r_[np.full(st.size, STATIC, np.uint8), np.full(dy.size, DYNAMIC, np.uint8)]
    return Snapshot(nb, tags)


# -- cost / quality ---------------------------------------------------------

Scorer = Callable[[Snapshot], float]


def sampling_cost(snap: Snapshot) -> int:
    """Total number of sampled neighbor entries."""
    return int(sum(nb.size for nb in snap.neighbors.values()))


def size_scorer(snap: Snapshot) -> float:
    return float(sampling_cost(snap))


def degree_sum_scorer(g: Graph) -> Scorer:
    """Quality = sum of base-graph degrees of the snapshot's nodes."""
    deg = g.distinct_degree

    def score(snap: Snapshot) -> float:
        nodes = np.fromiter(snap.neighbors, dtype=np.int64, count=len(snap))
        return float(deg[nodes].sum()) if nodes.size else 0.0

    return score


@dataclass(frozen=True)
class CostQualityParams:
    lam: float = 0.0
    scorer: Scorer = size_scorer

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError(f"lambda must be non-negative, got {self.lam}")


def objective(snap: Snapshot, params: CostQualityParams) -> float:
    """Sampling cost minus ``lam`` times quality; lower is better."""
    q = params.scorer(snap)
    if q < 0:
        raise ValueError(f"quality scorer returned a negative value {q}")
    return sampling_cost(snap) - params.lam * q


def best_of_k(generate: Callable[[np.random.Generator], Snapshot], k: int,
              params: CostQualityParams, seed=0) -> tuple[Snapshot, float]:
    """Draw ``k`` candidate snapshots and keep the one with the lowest
    objective (first one wins ties)."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    rng = np.random.default_rng(seed)
    best, best_val = None, None
    for _ in range(k):
        snap = generate(rng)
        val = objective(snap, params)
        if best_val is None or val < best_val:
            best, best_val = snap, val
    return best, best_val
