"""Multi-layer block samplers.

Sampling walks layers ``l = L .. 1``: the seeds are the destination nodes of
layer ``L``, and the distinct sampled neighbors of layer ``l`` become the
destination nodes of layer ``l - 1``. Blocks are returned in that order.

Each strategy decides where layer draws come from (the graph itself, the
amplified cache, or a blend) and when the cache is refreshed. All refresh
schedules key off the batch counter: a refresh happens whenever
``t % period == 0``, including ``t = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Mapping

import numpy as np

from ._sampling import choose_per_segment
from .cache import (
    LayeredCache,
    SharedCache,
    _cache_draw,
    _mixed_draw,
    init_cache,
    refresh_cache_full,
    refresh_cache_partial,
    shared_refresh,
    write_back,
)
from .graph import Graph, SplitResult, split_by_degree
from .storage import TieredStore


class SamplerConfigError(ValueError):
    pass


class UnknownStrategyError(SamplerConfigError):
    pass


class FanoutMismatchError(SamplerConfigError):
    pass


class Strategy(str, Enum):
    FBL = "FBL"
    FCR = "FCR"
    FCR_SC = "FCR_SC"
    OTF_REFRESH_ONLY = "OTF_REFRESH_ONLY"
    OTF_FETCH_ONLY = "OTF_FETCH_ONLY"
    OTF_PR_PF = "OTF_PR_PF"
    OTF_PR_FF = "OTF_PR_FF"
    OTF_SC = "OTF_SC"

    @classmethod
    def parse(cls, name: str) -> "Strategy":
        key = str(name).strip().upper().replace("-", "_")
        try:
            return cls(key)
        except ValueError:
            raise UnknownStrategyError(f"unknown strategy {name!r}") from None


REQUIRED_PARAMS: dict[Strategy, tuple[str, ...]] = {
    Strategy.FBL: (),
    Strategy.FCR: ("amp_rate", "period"),
    Strategy.FCR_SC: ("amp_rate", "period"),
    Strategy.OTF_REFRESH_ONLY: ("amp_rate", "refresh_rate", "period"),
    Strategy.OTF_FETCH_ONLY: ("amp_rate", "fetch_rate", "fetch_period"),
    Strategy.OTF_PR_PF: ("amp_rate", "refresh_rate", "fetch_rate", "period"),
    Strategy.OTF_PR_FF: ("amp_rate", "refresh_rate", "period"),
    Strategy.OTF_SC: ("amp_rate", "shared_rho", "period"),
}

DEFAULTS = {
    "amp_rate": 2.0,
    "refresh_rate": 0.15,
    "fetch_rate": 0.3,
    "period": 50,
    "fetch_period": 50,
}

SHARED = (Strategy.FCR_SC, Strategy.OTF_SC)


@dataclass(frozen=True)
class SamplerStrategy:
    """A strategy kind with exactly the parameters that kind uses."""

    kind: Strategy
    params: Mapping[str, float] = field(default_factory=dict)
    write_back: bool = False

    def __post_init__(self):
        kind = Strategy.parse(self.kind) if not isinstance(self.kind, Strategy) else self.kind
        object.__setattr__(self, "kind", kind)
        need = set(REQUIRED_PARAMS[kind])
        have = set(self.params)
        if need != have:
            missing, extra = sorted(need - have), sorted(have - need)
            raise SamplerConfigError(
                f"{kind.value} takes parameters {sorted(need)}; missing {missing}, extra {extra}"
            )
        p = dict(self.params)
        if "amp_rate" in p and not p["amp_rate"] >= 1:
            raise SamplerConfigError(f"amp_rate must be >= 1, got {p['amp_rate']}")
        for key in ("refresh_rate", "fetch_rate", "shared_rho"):
            if key in p and not 0 <= p[key] <= 1:
                raise SamplerConfigError(f"{key} must lie in [0, 1], got {p[key]}")
        for key in ("period", "fetch_period"):
            if key in p:
                if int(p[key]) != p[key] or p[key] < 1:
                    raise SamplerConfigError(f"{key} must be an integer >= 1, got {p[key]}")
                p[key] = int(p[key])
        object.__setattr__(self, "params", p)

    @classmethod
    def from_config(cls, kind, config: Mapping[str, object] | None = None) -> "SamplerStrategy":
        """Pick the keys ``kind`` needs from a flat config, filling defaults.

        ``shared_rho`` falls back to ``refresh_rate``.
        """
        kind = Strategy.parse(kind) if not isinstance(kind, Strategy) else kind
        config = dict(config or {})
        params = {}
        for key in REQUIRED_PARAMS[kind]:
            if key in config and config[key] is not None:
                params[key] = config[key]
            elif key == "shared_rho":
                params[key] = config.get("refresh_rate", DEFAULTS["refresh_rate"])
            else:
                params[key] = DEFAULTS[key]
            params[key] = float(params[key]) if "rate" in key or "rho" in key else params[key]
        return cls(kind, params, bool(config.get("write_back", False)))

    @property
    def needs_cache(self) -> bool:
        return self.kind is not Strategy.FBL

    @property
    def shared(self) -> bool:
        return self.kind in SHARED

    def __getattr__(self, name):
        params = object.__getattribute__(self, "params")
        if name in params:
            return params[name]
        raise AttributeError(name)


@dataclass(frozen=True)
class Block:
    """One layer of sampled edges ``edge_src -> edge_dst``.

    ``dst`` is the sorted set of nodes expanded at this layer and
    ``frontier`` the sorted distinct sources, which feed the next layer.
    """

    layer: int
    fanout: int
    dst: np.ndarray
    edge_src: np.ndarray
    edge_dst: np.ndarray
    frontier: np.ndarray

    @property
    def edge_count(self) -> int:
        return int(self.edge_src.size)


@dataclass(frozen=True)
class SampledBlocks:
    seeds: np.ndarray
    blocks: list[Block]
    batch: int
    resident_entries: int = 0
    generation: int | None = None

    @property
    def edge_count(self) -> int:
        return sum(b.edge_count for b in self.blocks)


@dataclass
class BatchContext:
    """Per-consumer sampling state: batch counter, RNG and store."""

    t: int = 0
    rng: np.random.Generator = field(default_factory=np.random.default_rng)
    store: TieredStore | None = None
    node_ids: np.ndarray | None = None

    @classmethod
    def seeded(cls, seed: int = 0, consumer: int = 0, **kwargs) -> "BatchContext":
        return cls(rng=np.random.default_rng([seed, 1, consumer]), **kwargs)

    def charger(self, batch: int) -> Callable[[str, str, np.ndarray], None]:
        def charge(op, tag, local):
            if self.store is not None and local.size:
                nodes = local if self.node_ids is None else self.node_ids[local]
                self.store.charge(op, tag, nodes, batch)

        return charge


# -- layer expansion --------------------------------------------------------

Draw = Callable[[int, np.ndarray, int], tuple[np.ndarray, np.ndarray, int]]


def _seed_array(seeds, node_count: int) -> np.ndarray:
    arr = np.unique(np.asarray(seeds, dtype=np.int64).ravel())
    if arr.size and (arr[0] < 0 or arr[-1] >= node_count):
        bad = arr[0] if arr[0] < 0 else arr[-1]
        raise IndexError(f"seed {bad} out of range for graph with {node_count} nodes")
    return arr


def _expand(seeds: np.ndarray, fanouts, draw: Draw, batch: int, generation=None) -> SampledBlocks:
    frontier = seeds
    blocks = []
    resident = 0
    for l in range(len(fanouts), 0, -1):
        f = int(fanouts[l - 1])
        seg, src, res = draw(l, frontier, f)
        resident += res
        dst = frontier[seg]
        order = np.lexsort((src, dst))
        nxt = np.unique(src)
        blocks.append(Block(l, f, frontier, src[order], dst[order], nxt))
        frontier = nxt
    return SampledBlocks(seeds, blocks, batch, resident, generation)


def _fbl_draw(g: Graph, rng, charge) -> Draw:
    def draw(l, frontier, f):
        if f <= 0 or frontier.size == 0:
            return np.empty(0, np.int64), np.empty(0, np.int64), 0
        deg = g.distinct_degree[frontier]
        seg, nbr = g.gather(frontier)
        mask = choose_per_segment(seg, np.minimum(deg, f), rng)
        charge("disk_read", "sample", frontier[seg[mask]])
        return seg[mask], nbr[mask], int(deg.sum())

    return draw


def _cache_layer_draw(cache: LayeredCache, rng, batch: int) -> Draw:
    def draw(l, frontier, f):
        return _cache_draw(cache, cache.layer_index(l - 1), frontier, f, rng, batch)

    return draw


def _mixed_layer_draw(cache: LayeredCache, delta: float, rng, batch: int, wb: bool) -> Draw:
    def draw(l, frontier, f):
        li = cache.layer_index(l - 1)
        seg, src, res, disk = _mixed_draw(cache, li, frontier, f, delta, rng, batch)
        if wb and disk.any():
            write_back(cache, li, frontier, seg[disk], src[disk], batch)
        return seg, src, res

    return draw


def _check_cache(g: Graph, fanouts, cache: LayeredCache) -> None:
    if tuple(int(f) for f in fanouts) != cache.fanouts:
        raise FanoutMismatchError(
            f"cache was built for fanouts {list(cache.fanouts)}, got {list(fanouts)}"
        )
    if cache.graph.node_count != g.node_count:
        raise FanoutMismatchError("cache was built over a different graph")


def _check_period(name: str, value) -> int:
    if int(value) != value or value < 1:
        raise SamplerConfigError(f"{name} must be an integer >= 1, got {value}")
    return int(value)


def _check_rate(name: str, value) -> float:
    if not 0 <= value <= 1:
        raise SamplerConfigError(f"{name} must lie in [0, 1], got {value}")
    return float(value)


def _partial_all(cache: LayeredCache, gamma: float) -> None:
    for li in range(len(cache.layers)):
        refresh_cache_partial(cache, li, gamma)


# -- strategies -------------------------------------------------------------


def sample_blocks_fbl(g: Graph, seeds, fanouts, ctx: BatchContext) -> SampledBlocks:
    """Sample every layer straight from the graph; one disk read per edge."""
    t = ctx.t
    out = _expand(_seed_array(seeds, g.node_count), fanouts, _fbl_draw(g, ctx.rng, ctx.charger(t)), t)
    ctx.t += 1
    return out


def sample_blocks_fcr(g: Graph, seeds, fanouts, cache: LayeredCache, T: int, ctx: BatchContext):
    """Full cache refresh every ``T`` batches; sampling served by the cache."""
    _check_cache(g, fanouts, cache)
    T = _check_period("period", T)
    t = ctx.t
    cache.advance(t)
    if t % T == 0:
        refresh_cache_full(cache)
    out = _expand(_seed_array(seeds, g.node_count), fanouts, _cache_layer_draw(cache, ctx.rng, t), t,
                  cache.generation)
    ctx.t += 1
    return out


def sample_blocks_otf_refresh(g: Graph, seeds, fanouts, cache: LayeredCache, gamma: float, T: int,
                              ctx: BatchContext) -> SampledBlocks:
    """Partial refresh of every layer every ``T`` batches; cache-only sampling."""
    _check_cache(g, fanouts, cache)
    gamma, T = _check_rate("refresh_rate", gamma), _check_period("period", T)
    t = ctx.t
    cache.advance(t)
    if t % T == 0:
        _partial_all(cache, gamma)
    out = _expand(_seed_array(seeds, g.node_count), fanouts, _cache_layer_draw(cache, ctx.rng, t), t,
                  cache.generation)
    ctx.t += 1
    return out


def sample_blocks_otf_fetch(g: Graph, seeds, fanouts, cache: LayeredCache, delta: float,
                            T_fetch: int, ctx: BatchContext, write_back: bool = False):
    """Blend disk and cache draws every ``T_fetch`` batches, cache-only otherwise."""
    _check_cache(g, fanouts, cache)
    delta, T_fetch = _check_rate("fetch_rate", delta), _check_period("fetch_period", T_fetch)
    t = ctx.t
    cache.advance(t)
    if t % T_fetch == 0:
        draw = _mixed_layer_draw(cache, delta, ctx.rng, t, write_back)
    else:
        draw = _cache_layer_draw(cache, ctx.rng, t)
    out = _expand(_seed_array(seeds, g.node_count), fanouts, draw, t, cache.generation)
    ctx.t += 1
    return out


def sample_blocks_otf_pr_pf(g: Graph, seeds, fanouts, cache: LayeredCache, gamma: float,
                            delta: float, T: int, ctx: BatchContext, write_back: bool = False):
    """Partial refresh every ``T`` batches plus a disk/cache blend every batch."""
    _check_cache(g, fanouts, cache)
    gamma, delta = _check_rate("refresh_rate", gamma), _check_rate("fetch_rate", delta)
    T = _check_period("period", T)
    t = ctx.t
    cache.advance(t)
    if t % T == 0:
        _partial_all(cache, gamma)
    draw = _mixed_layer_draw(cache, delta, ctx.rng, t, write_back)
    out = _expand(_seed_array(seeds, g.node_count), fanouts, draw, t, cache.generation)
    ctx.t += 1
    return out


def sample_blocks_otf_pr_ff(g: Graph, seeds, fanouts, cache: LayeredCache, gamma: float, T: int,
                            ctx: BatchContext) -> SampledBlocks:
    """Partial refresh every ``T`` batches; each seed's whole cached list is
    fetched and uniformly cut down to the fanout. Never reads disk outside
    refresh batches."""
    return sample_blocks_otf_refresh(g, seeds, fanouts, cache, gamma, T, ctx)


def sample_blocks_shared(strategy: SamplerStrategy, shared: SharedCache, seeds, fanouts,
                         ctx: BatchContext) -> SampledBlocks:
    """One batch against a cache shared by several consumers.

    The refresh schedule follows a ticket drawn from the shared counter, so
    it is global across consumers. The batch reads one published generation
    from start to finish.
    """
    if strategy.kind not in SHARED:
        raise SamplerConfigError(f"{strategy.kind.value} is not a shared-cache strategy")
    g = shared.current.graph
    _check_cache(g, fanouts, shared.current)
    ticket = shared.next_batch()
    if ticket % strategy.period == 0:
        if strategy.kind is Strategy.FCR_SC:
            shared_refresh(shared, batch=ticket, full=True)
        else:
            shared_refresh(shared, strategy.shared_rho, batch=ticket)
    cache = shared.current
    out = _expand(_seed_array(seeds, g.node_count), fanouts, _cache_layer_draw(cache, ctx.rng, ticket),
                  ticket, cache.generation)
    ctx.t += 1
    return out


# -- stateful front ends ----------------------------------------------------


def build_cache(g: Graph, strategy: SamplerStrategy, fanouts, seed: int = 0, store=None,
                node_ids=None, unified: bool = False) -> LayeredCache:
    return init_cache(g, fanouts, strategy.amp_rate, seed=[seed, 0], store=store,
                      node_ids=node_ids, unified=unified)


def build_shared(g: Graph, strategy: SamplerStrategy, fanouts, seed: int = 0, store=None,
                 node_ids=None, unified: bool = True) -> SharedCache:
    """Initialize one shared cache.

    By default a single neighbor list of capacity
    ``ceil(max(fanouts) * amp_rate)`` per node serves every layer; pass
    ``unified=False`` for one list per layer.
    """
    cache = build_cache(g, strategy, fanouts, seed, store, node_ids, unified)
    rho = strategy.params.get("shared_rho", 1.0)
    return SharedCache(cache, rho)


class Sampler:
    """A strategy bound to a graph, a cache and a batch counter."""

    def __init__(
        self,
        g: Graph,
        strategy: SamplerStrategy,
        fanouts,
        *,
        seed: int = 0,
        store: TieredStore | None = None,
        consumer: int = 0,
        cache: LayeredCache | None = None,
        shared: SharedCache | None = None,
        node_ids: np.ndarray | None = None,
    ):
        self.graph = g
        self.strategy = strategy
        self.fanouts = tuple(int(f) for f in fanouts)
        if any(f < 0 for f in self.fanouts):
            raise SamplerConfigError(f"fanouts must be non-negative, got {list(fanouts)}")
        self.ctx = BatchContext.seeded(seed, consumer, store=store, node_ids=node_ids)
        self.cache = None
        self.shared = None
        if strategy.shared:
            self.shared = shared or build_shared(g, strategy, self.fanouts, seed, store, node_ids)
            _check_cache(g, self.fanouts, self.shared.current)
        elif strategy.needs_cache:
            self.cache = cache or build_cache(g, strategy, self.fanouts, seed, store, node_ids)
            _check_cache(g, self.fanouts, self.cache)

    @property
    def t(self) -> int:
        return self.ctx.t

    def live_cache(self) -> LayeredCache | None:
        return self.shared.current if self.shared is not None else self.cache

    def sample(self, seeds) -> SampledBlocks:
        s, g, f, ctx = self.strategy, self.graph, self.fanouts, self.ctx
        k = s.kind
        if k is Strategy.FBL:
            return sample_blocks_fbl(g, seeds, f, ctx)
        if k in SHARED:
            return sample_blocks_shared(s, self.shared, seeds, f, ctx)
        if k is Strategy.FCR:
            return sample_blocks_fcr(g, seeds, f, self.cache, s.period, ctx)
        if k is Strategy.OTF_REFRESH_ONLY:
            return sample_blocks_otf_refresh(g, seeds, f, self.cache, s.refresh_rate, s.period, ctx)
        if k is Strategy.OTF_PR_FF:
            return sample_blocks_otf_pr_ff(g, seeds, f, self.cache, s.refresh_rate, s.period, ctx)
        if k is Strategy.OTF_FETCH_ONLY:
            return sample_blocks_otf_fetch(g, seeds, f, self.cache, s.fetch_rate, s.fetch_period,
                                           ctx, s.write_back)
        return sample_blocks_otf_pr_pf(g, seeds, f, self.cache, s.refresh_rate, s.fetch_rate,
                                       s.period, ctx, s.write_back)


def _to_global(sb: SampledBlocks, ids: np.ndarray) -> SampledBlocks:
    blocks = [
        Block(b.layer, b.fanout, ids[b.dst], ids[b.edge_src], ids[b.edge_dst], ids[b.frontier])
        for b in sb.blocks
    ]
    return SampledBlocks(ids[sb.seeds], blocks, sb.batch, sb.resident_entries, sb.generation)


def _merge(seeds: np.ndarray, parts: list[SampledBlocks], fanouts, batch: int) -> SampledBlocks:
    blocks = []
    for i, l in enumerate(range(len(fanouts), 0, -1)):
        pieces = [p.blocks[i] for p in parts]
        src = np.concatenate([b.edge_src for b in pieces] or [np.empty(0, np.int64)])
        dst = np.concatenate([b.edge_dst for b in pieces] or [np.empty(0, np.int64)])
        order = np.lexsort((src, dst))
        blocks.append(Block(
            l, int(fanouts[l - 1]),
            np.unique(np.concatenate([b.dst for b in pieces] or [np.empty(0, np.int64)])),
            src[order], dst[order], np.unique(src),
        ))
    resident = sum(p.resident_entries for p in parts)
    gens = [p.generation for p in parts if p.generation is not None]
    return SampledBlocks(seeds, blocks, batch, resident, gens[0] if gens else None)


class DualSampler:
    """Dense nodes go through a caching strategy, sparse nodes through FBL.

    The graph is split once by total degree; each half only ever sees its
    own induced subgraph, so edges crossing the split are never sampled.
    Output ids are global.
    """

    def __init__(
        self,
        g: Graph,
        theta: int,
        dense_strategy: SamplerStrategy,
        fanouts,
        *,
        seed: int = 0,
        store: TieredStore | None = None,
        consumer: int = 0,
        split: SplitResult | None = None,
        shared: SharedCache | None = None,
    ):
        if dense_strategy.kind is Strategy.FBL:
            raise SamplerConfigError("dense strategy of a dual pipeline must use a cache")
        self.graph = g
        self.split = split or split_by_degree(g, theta)
        self.fanouts = tuple(int(f) for f in fanouts)
        sp = self.split
        self.dense = Sampler(
            sp.dense_subgraph, dense_strategy, self.fanouts, seed=seed, store=store,
            consumer=consumer, node_ids=sp.dense_ids, shared=shared,
        )
        self.sparse = Sampler(
            sp.sparse_subgraph, SamplerStrategy(Strategy.FBL), self.fanouts, seed=seed,
            store=store, consumer=consumer, node_ids=sp.sparse_ids,
        )
        self.t = 0

    def live_cache(self) -> LayeredCache | None:
        return self.dense.live_cache()

    def sample(self, seeds) -> SampledBlocks:
        seeds = _seed_array(seeds, self.graph.node_count)
        sp = self.split
        d_local = sp.dense_local[seeds]
        s_local = sp.sparse_local[seeds]
        d = _to_global(self.dense.sample(d_local[d_local >= 0]), sp.dense_ids)
        # the FBL half tags its charges with the dense half's batch index
        self.sparse.ctx.t = d.batch
        s = _to_global(self.sparse.sample(s_local[s_local >= 0]), sp.sparse_ids)
        self.t += 1
        return _merge(seeds, [d, s], self.fanouts, d.batch)


def sample_blocks_dual(g: Graph, theta: int, dense_strategy: SamplerStrategy, seeds, fanouts,
                       ctx: BatchContext, seed: int = 0) -> SampledBlocks:
    """One-shot dual-pipeline batch; build a :class:`DualSampler` for runs."""
    ds = DualSampler(g, theta, dense_strategy, fanouts, seed=seed, store=ctx.store)
    ds.dense.ctx.t = ds.sparse.ctx.t = ctx.t
    ds.dense.ctx.rng = ds.sparse.ctx.rng = ctx.rng
    out = ds.sample(seeds)
    ctx.t += 1
    return out


def make_sampler(g: Graph, strategy: SamplerStrategy, fanouts, *, theta: int | None = None,
                 **kwargs):
    """A :class:`Sampler`, or a :class:`DualSampler` when ``theta`` is given."""
    if theta is None:
        return Sampler(g, strategy, fanouts, **kwargs)
    return DualSampler(g, theta, strategy, fanouts, **kwargs)

