"""Layered amplified neighbor cache.

Each layer keeps, for every node, up to ``ceil(fanout * amp_rate)`` distinct
neighbors drawn from the base graph, stored as a fixed-width row of an
``(n, capacity)`` array padded with ``-1``. Entries carry the batch counter at
which they were inserted; partial refresh evicts the oldest ones.
"""

from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass

import numpy as np

from ._sampling import ceil_rate, choose_per_segment, pair_keys
from .graph import Graph
from .storage import TieredStore

_BIG = np.iinfo(np.int64).max


class CacheConfigError(ValueError):
    pass


class CacheStateError(RuntimeError):
    pass


def _as_rng(rng) -> np.random.Generator | None:
    if rng is None or isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def _rank_in_segment(seg: np.ndarray) -> np.ndarray:
    """Position of each element within its run of equal (sorted) ``seg`` values."""
    n = seg.size
    if n == 0:
        return np.empty(0, dtype=np.int64)
    first = np.r_[True, seg[1:] != seg[:-1]]
    starts = np.maximum.accumulate(np.where(first, np.arange(n), 0))
    return np.arange(n) - starts


@dataclass
class CacheLayer:
    fanout: int
    capacity: int
    entries: np.ndarray
    epochs: np.ndarray
    sizes: np.ndarray
    generation: int = 0

    @classmethod
    def empty(cls, node_count: int, fanout: int, capacity: int) -> "CacheLayer":
        return cls(
            fanout=fanout,
            capacity=capacity,
            entries=np.full((node_count, capacity), -1, dtype=np.int64),
            epochs=np.zeros((node_count, capacity), dtype=np.int64),
            sizes=np.zeros(node_count, dtype=np.int64),
        )

    def copy(self) -> "CacheLayer":
        return CacheLayer(
            self.fanout, self.capacity, self.entries.copy(), self.epochs.copy(),
            self.sizes.copy(), self.generation,
        )

    def row(self, v: int) -> np.ndarray:
        return self.entries[v, : self.sizes[v]]

    def valid_mask(self, rows: np.ndarray) -> np.ndarray:
        return np.arange(self.capacity) < self.sizes[rows, None]


@dataclass(frozen=True)
class CachedNeighborhood:
    node: int
    entries: np.ndarray
    capacity: int
    insertion_epoch: np.ndarray


class LayeredCache:
    """Per-layer, per-node amplified neighbor lists.

    With ``unified=True`` a single layer of capacity
    ``ceil(max(fanouts) * amp_rate)`` serves every sampling layer.
    ``node_ids`` maps local ids to the ids written to the I/O log, for caches
    that serve a subgraph.
    """

    def __init__(
        self,
        graph: Graph,
        fanouts,
        amp_rate: float = 2.0,
        *,
        rng=None,
        store: TieredStore | None = None,
        node_ids: np.ndarray | None = None,
        unified: bool = False,
    ):
        fanouts = tuple(int(f) for f in fanouts)
        if amp_rate < 1:
            raise CacheConfigError(f"amp_rate must be >= 1, got {amp_rate}")
        if any(f < 0 for f in fanouts):
            raise CacheConfigError(f"fanouts must be non-negative, got {fanouts}")
        self.graph = graph
        self.fanouts = fanouts
        self.amp_rate = amp_rate
        self.unified = unified
        self.rng = _as_rng(rng) or np.random.default_rng()
        self.store = store
        self.node_ids = node_ids
        self.t = 0
        self.initialized = False
        n = graph.node_count
        if unified:
            f = max(fanouts, default=0)
            self.layers = [CacheLayer.empty(n, f, ceil_rate(amp_rate, f))]
        else:
            self.layers = [CacheLayer.empty(n, f, ceil_rate(amp_rate, f)) for f in fanouts]

    def layer_index(self, l: int) -> int:
        """Storage layer serving sampling layer ``l`` (0-based)."""
        return 0 if self.unified else l

    @property
    def capacities(self) -> list[int]:
        return [layer.capacity for layer in self.layers]

    @property
    def generation(self) -> int:
        return self.layers[0].generation if self.layers else 0

    def live_entries(self) -> int:
        return int(sum(int(layer.sizes.sum()) for layer in self.layers))

    def neighborhood(self, layer: int, v: int) -> CachedNeighborhood:
        lay = self.layers[layer]
        k = lay.sizes[v]
        return CachedNeighborhood(
            node=int(v), entries=lay.entries[v, :k].copy(), capacity=lay.capacity,
            insertion_epoch=lay.epochs[v, :k].copy(),
        )

    def advance(self, t: int) -> None:
        self.t = max(self.t, int(t))

    def copy(self) -> "LayeredCache":
        """Independent layer arrays; graph, rng and store are shared."""
        new = object.__new__(LayeredCache)
        new.__dict__.update(self.__dict__)
        new.layers = [layer.copy() for layer in self.layers]
        return new

    def global_ids(self, local: np.ndarray) -> np.ndarray:
        return local if self.node_ids is None else self.node_ids[local]

    def charge(self, op: str, tag: str, local_nodes: np.ndarray, batch: int) -> None:
        if self.store is not None and local_nodes.size:
            self.store.charge(op, tag, self.global_ids(local_nodes), batch)


# -- fill / refresh ---------------------------------------------------------


def _fill(cache: LayeredCache, li: int, nodes: np.ndarray, rng, tag: str, batch: int) -> int:
    """Resample rows ``nodes`` of layer ``li`` to ``min(deg, capacity)`` entries."""
    g, lay = cache.graph, cache.layers[li]
    take = np.minimum(g.distinct_degree[nodes], lay.capacity)
    seg, nbr = g.gather(nodes)
    mask = choose_per_segment(seg, take, rng)
    seg, nbr = seg[mask], nbr[mask]
    lay.entries[nodes] = -1
    lay.entries[nodes[seg], _rank_in_segment(seg)] = nbr
    lay.epochs[nodes] = 0
    lay.epochs[nodes[seg], _rank_in_segment(seg)] = batch
    lay.sizes[nodes] = take
    cache.charge("disk_read", tag, nodes[seg], batch)
    return int(nbr.size)


def init_cache(
    g: Graph,
    fanouts,
    amp_rate: float = 2.0,
    seed=0,
    *,
    store: TieredStore | None = None,
    node_ids: np.ndarray | None = None,
    unified: bool = False,
) -> LayeredCache:
    """Pre-sample every node of every layer from ``g``.

    Each sampled entry is charged as one disk read tagged ``init``.
    """
    cache = LayeredCache(
        g, fanouts, amp_rate, rng=seed, store=store, node_ids=node_ids, unified=unified
    )
    nodes = np.arange(g.node_count, dtype=np.int64)
    for li in range(len(cache.layers)):
        _fill(cache, li, nodes, cache.rng, "init", cache.t)
    cache.initialized = True
    return cache


def _require_init(cache: LayeredCache) -> None:
    if not cache.initialized:
        raise CacheStateError("cache has not been initialized")


def _check_graph(cache: LayeredCache, g: Graph | None) -> None:
    if g is not None and g is not cache.graph:
        if g.node_count != cache.graph.node_count or g.edge_count != cache.graph.edge_count:
            raise CacheConfigError("cache was built over a different graph")


def refresh_cache_full(cache: LayeredCache, g: Graph | None = None, rng=None) -> int:
    """Resample every layer to capacity; returns the number of entries inserted."""
    _require_init(cache)
    _check_graph(cache, g)
    rng = _as_rng(rng) or cache.rng
    nodes = np.arange(cache.graph.node_count, dtype=np.int64)
    inserted = 0
    for li, lay in enumerate(cache.layers):
        inserted += _fill(cache, li, nodes, rng, "refresh", cache.t)
        lay.generation += 1
    return inserted


def refresh_cache_partial(
    cache: LayeredCache, layer: int, gamma: float, g: Graph | None = None, rng=None
) -> int:
    """Replace ``ceil(gamma * size)`` entries per node in one layer.

    Victims are the oldest entries (ties broken by ascending neighbor id).
    Replacements are drawn uniformly from neighbors that are not retained,
    so an evicted neighbor may come back. Returns the number replaced.
    """
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    _require_init(cache)
    _check_graph(cache, g)
    rng = _as_rng(rng) or cache.rng
    lay, graph, batch = cache.layers[layer], cache.graph, cache.t
    n_new_all = ceil_rate(gamma, lay.sizes)
    rows = np.flatnonzero(n_new_all > 0)
    if rows.size == 0:
        return 0
    n_new, sizes, cap = n_new_all[rows], lay.sizes[rows], lay.capacity
    valid = lay.valid_mask(rows)
    ent, ep = lay.entries[rows], lay.epochs[rows]
    order = np.lexsort((np.where(valid, ent, _BIG), np.where(valid, ep, _BIG)))
    ent = np.take_along_axis(ent, order, axis=1)
    ep = np.take_along_axis(ep, order, axis=1)
    col = np.arange(cap)
    keep = (col >= n_new[:, None]) & (col < sizes[:, None])
    r_seg, r_col = np.nonzero(keep)
    r_val = ent[r_seg, r_col]

    seg, nbr = graph.gather(rows)
    width = graph.node_count
    fresh_ok = ~np.isin(pair_keys(seg, nbr, width), pair_keys(r_seg, r_val, width))
    seg, nbr = seg[fresh_ok], nbr[fresh_ok]
    pick = choose_per_segment(seg, n_new, rng)
    n_seg, n_val = seg[pick], nbr[pick]

    new_ent = np.full((rows.size, cap), -1, dtype=np.int64)
    new_ep = np.zeros((rows.size, cap), dtype=np.int64)
    new_ent[r_seg, r_col - n_new[r_seg]] = r_val
    new_ep[r_seg, r_col - n_new[r_seg]] = ep[r_seg, r_col]
    dest = (sizes - n_new)[n_seg] + _rank_in_segment(n_seg)
    new_ent[n_seg, dest] = n_val
    new_ep[n_seg, dest] = batch
    lay.entries[rows] = new_ent
    lay.epochs[rows] = new_ep
    lay.generation += 1
    cache.charge("disk_read", "refresh", rows[n_seg], batch)
    return int(n_val.size)


# -- sampling ---------------------------------------------------------------


def _cache_draw(cache: LayeredCache, layer: int, rows: np.ndarray, fanout: int, rng, batch: int):
    """Uniform ``min(fanout, size)`` subset of each cached row.

    Returns ``(seg, src, resident)``; ``seg`` indexes ``rows``. One cache
    access is charged per row looked up.
    """
    lay = cache.layers[layer]
    resident = int(lay.sizes[rows].sum())
    if rows.size == 0 or fanout <= 0 or lay.capacity == 0:
        return np.empty(0, np.int64), np.empty(0, np.int64), resident
    valid = lay.valid_mask(rows)
    keys = np.where(valid, rng.random((rows.size, lay.capacity)), 2.0)
    order = np.argsort(keys, axis=1, kind="stable")
    take = np.minimum(lay.sizes[rows], fanout)
    chosen = np.arange(lay.capacity) < take[:, None]
    picked = np.take_along_axis(lay.entries[rows], order, axis=1)
    seg, _ = np.nonzero(chosen)
    src = picked[chosen]
    cache.charge("cache_access", "sample", rows, batch)
    return seg, src, resident


def _as_rows(seeds) -> np.ndarray:
    return np.unique(np.asarray(list(seeds) if not isinstance(seeds, np.ndarray) else seeds,
                                dtype=np.int64))


def _to_map(rows: np.ndarray, seg: np.ndarray, src: np.ndarray) -> dict[int, np.ndarray]:
    out = {int(v): np.empty(0, dtype=np.int64) for v in rows}
    if seg.size:
        order = np.argsort(seg, kind="stable")
        seg, src = seg[order], src[order]
        bounds = np.searchsorted(seg, np.arange(rows.size + 1))
        for i, v in enumerate(rows.tolist()):
            out[v] = src[bounds[i] : bounds[i + 1]]
    return out


def sample_from_cache(
    cache: LayeredCache, layer: int, seeds, fanout: int, rng=None, batch: int | None = None
) -> dict[int, np.ndarray]:
    """Sample up to ``fanout`` neighbors per seed from cached entries only."""
    _require_init(cache)
    rows = _as_rows(seeds)
    rng = _as_rng(rng) or cache.rng
    seg, src, _ = _cache_draw(cache, layer, rows, fanout, rng, cache.t if batch is None else batch)
    return _to_map(rows, seg, src)


def _disk_draw(g: Graph, rows: np.ndarray, k, rng, exclude: np.ndarray | None = None):
    """Uniform ``min(k, available)`` distinct neighbors per row from the graph."""
    seg, nbr = g.gather(rows)
    if exclude is not None and exclude.size:
        ok = ~np.isin(pair_keys(seg, nbr, g.node_count), exclude)
        seg, nbr = seg[ok], nbr[ok]
    mask = choose_per_segment(seg, k, rng)
    return seg[mask], nbr[mask]


def _mixed_draw(
    cache: LayeredCache, layer: int, rows: np.ndarray, fanout: int, delta: float, rng, batch: int
):
    """Blend fresh disk samples with cached entries for each row.

    ``ceil(delta * fanout)`` neighbors come from disk, the rest from the
    cache without repeating a disk pick; any shortfall is backfilled from
    disk. Returns ``(seg, src, resident, disk_mask)``.
    """
    n_disk = ceil_rate(delta, fanout)
    if n_disk == 0 or rows.size == 0 or fanout <= 0:
        seg, src, resident = _cache_draw(cache, layer, rows, fanout, rng, batch)
        return seg, src, resident, np.zeros(seg.size, dtype=bool)
    g, lay = cache.graph, cache.layers[layer]
    width = g.node_count
    deg = g.distinct_degree[rows]
    want = np.minimum(deg, fanout)

    d_seg, d_val = _disk_draw(g, rows, np.minimum(deg, n_disk), rng)
    got = np.bincount(d_seg, minlength=rows.size)

    valid = lay.valid_mask(rows)
    c_seg, c_col = np.nonzero(valid)
    c_val = lay.entries[rows][c_seg, c_col]
    ok = ~np.isin(pair_keys(c_seg, c_val, width), pair_keys(d_seg, d_val, width))
    c_seg, c_val = c_seg[ok], c_val[ok]
    pick = choose_per_segment(c_seg, np.maximum(fanout - got, 0), rng)
    c_seg, c_val = c_seg[pick], c_val[pick]
    got = got + np.bincount(c_seg, minlength=rows.size)

    short = want - got
    b_seg = b_val = np.empty(0, dtype=np.int64)
    if (short > 0).any():
        taken = np.concatenate([pair_keys(d_seg, d_val, width), pair_keys(c_seg, c_val, width)])
        b_seg, b_val = _disk_draw(g, rows, np.maximum(short, 0), rng, exclude=taken)

    disk_seg = np.concatenate([d_seg, b_seg])
    cache.charge("disk_read", "fetch", rows[disk_seg], batch)
    cache.charge("cache_access", "sample", rows[c_seg], batch)
    seg = np.concatenate([disk_seg, c_seg])
    src = np.concatenate([d_val, b_val, c_val])
    from_disk = np.r_[np.ones(disk_seg.size, bool), np.zeros(c_seg.size, bool)]
    order = np.argsort(seg, kind="stable")
    # fetched neighbors are transient; only cache rows count as resident
    resident = int(lay.sizes[rows].sum())
    return seg[order], src[order], resident, from_disk[order]


def fetch_mixed(
    cache: LayeredCache,
    layer: int,
    seeds,
    fanout: int,
    delta: float,
    g: Graph | None = None,
    rng=None,
    batch: int | None = None,
) -> dict[int, np.ndarray]:
    """Per seed, ``ceil(delta * fanout)`` disk samples plus cached entries.

    Disk picks are charged as disk reads tagged ``fetch``, cache picks as
    cache accesses. The cache itself is not modified.
    """
    if not 0.0 <= delta <= 1.0:
        raise ValueError(f"delta must lie in [0, 1], got {delta}")
    _require_init(cache)
    _check_graph(cache, g)
    rows = _as_rows(seeds)
    rng = _as_rng(rng) or cache.rng
    seg, src, _, _ = _mixed_draw(
        cache, layer, rows, fanout, delta, rng, cache.t if batch is None else batch
    )
    return _to_map(rows, seg, src)


def write_back(cache: LayeredCache, layer: int, rows: np.ndarray, seg, src, batch: int) -> int:
    """Insert disk-fetched neighbors into the cache, evicting oldest entries."""
    lay = cache.layers[layer]
    inserted = 0
    for i in np.unique(seg).tolist():
        v = int(rows[i])
        k = int(lay.sizes[v])
        ent = list(lay.entries[v, :k])
        ep = list(lay.epochs[v, :k])
        for u in src[seg == i].tolist():
            if u in ent or lay.capacity == 0:
                continue
            if len(ent) >= lay.capacity:
                victim = min(range(len(ent)), key=lambda j: (ep[j], ent[j]))
                del ent[victim], ep[victim]
            ent.append(u)
            ep.append(batch)
            inserted += 1
        lay.entries[v] = -1
        lay.entries[v, : len(ent)] = ent
        lay.epochs[v] = 0
        lay.epochs[v, : len(ep)] = ep
        lay.sizes[v] = len(ent)
    return inserted


# -- shared cache -----------------------------------------------------------


class SharedCache:
    """One cache generation served to many consumers.

    Refreshes build a private copy and publish it with a single reference
    swap, so a reader that grabbed :attr:`current` always sees one complete
    generation. Batch tickets are handed out from a shared counter so the
    refresh schedule is global, not per consumer.
    """

    def __init__(self, cache: LayeredCache, rho: float = 0.0):
        _require_init(cache)
        if not 0.0 <= rho <= 1.0:
            raise ValueError(f"rho must lie in [0, 1], got {rho}")
        self._current = cache
        self.rho = rho
        self._refresh_lock = threading.Lock()
        self._ticket_lock = threading.Lock()
        self._tickets = itertools.count()
        self.refreshes = 0

    @property
    def current(self) -> LayeredCache:
        return self._current

    @property
    def generation(self) -> int:
        return self._current.generation

    def next_batch(self) -> int:
        with self._ticket_lock:
            return next(self._tickets)


def shared_refresh(
    shared: SharedCache,
    rho: float | None = None,
    g: Graph | None = None,
    rng=None,
    *,
    batch: int | None = None,
    full: bool = False,
) -> int:
    """Refresh a proportion ``rho`` of every layer (or all of it with
    ``full``) and publish the result atomically. Returns the generation
    readers will now see."""
    rho = shared.rho if rho is None else rho
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho must lie in [0, 1], got {rho}")
    if rho == 0 and not full:
        return shared.generation
    with shared._refresh_lock:
        old = shared._current
        _check_graph(old, g)
        new = old.copy()
        if batch is not None:
            new.advance(batch)
        if full:
            refresh_cache_full(new, rng=rng)
        else:
            for li in range(len(new.layers)):
                refresh_cache_partial(new, li, rho, rng=rng)
        gen = old.generation + 1
        for lay in new.layers:
            lay.generation = gen
        shared._current = new
        shared.refreshes += 1
        return gen
