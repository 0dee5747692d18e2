"""Benchmark runs over simulated I/O.

A run draws fresh uniform seed nodes for every batch, feeds them to one or
more samplers that share a :class:`TieredStore`, and reports per-batch
counters read back from the store's I/O log.
"""

from __future__ import annotations

import csv
import json
import os
import threading
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .graph import Graph, generate_synthetic, read_edge_list
from .persist import load_cache
from .samplers import (
    DualSampler,
    Sampler,
    SamplerStrategy,
    Strategy,
    build_shared,
)
from .storage import OPS, LatencyModel, TieredStore

SCHEMA = "gss-report-v1"
ROW_FIELDS = (
    "strategy", "fanouts", "batch", "disk_reads", "disk_writes", "cache_hits",
    "cache_misses", "sim_time", "cache_entries",
)
COUNTERS = ("disk_reads", "disk_writes", "cache_hits", "cache_misses")


class InvariantError(AssertionError):
    pass


def _parse_bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off", ""):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def parse_fanouts(v) -> tuple[int, ...]:
    if isinstance(v, (list, tuple)):
        out = tuple(int(x) for x in v)
    else:
        s = str(v).strip()
        out = tuple(int(x) for x in s.split(",")) if s else ()
    if not out:
        raise ValueError("at least one fanout is required")
    if any(f < 0 for f in out):
        raise ValueError(f"fanouts must be non-negative, got {list(out)}")
    return out


@dataclass
class RunConfig:
    strategy: str = "FBL"
    fanouts: tuple[int, ...] = (5, 5, 5)
    amp_rate: float = 2.0
    refresh_rate: float = 0.15
    fetch_rate: float = 0.3
    period: int = 50
    fetch_period: int = 50
    shared_rho: float | None = None
    threshold: int | None = None
    seed: int = 0
    write_back: bool = False
    graph: str = "er:2000:0.01"
    batches: int = 200
    batch_size: int = 64
    consumers: int = 1
    dim: int = 128
    shared_layout: str = "unified"
    cache_in: str | None = None
    validate: bool = False

    def __post_init__(self):
        self.fanouts = parse_fanouts(self.fanouts)
        for name, conv in (("amp_rate", float), ("refresh_rate", float), ("fetch_rate", float),
                           ("period", int), ("fetch_period", int), ("seed", int),
                           ("batches", int), ("batch_size", int), ("consumers", int),
                           ("dim", int)):
            setattr(self, name, conv(getattr(self, name)))
        if self.shared_rho is not None:
            self.shared_rho = float(self.shared_rho)
        if self.threshold is not None:
            self.threshold = int(self.threshold)
        self.write_back = _parse_bool(self.write_back)
        self.validate = _parse_bool(self.validate)
        if self.batches < 1:
            raise ValueError(f"batches must be >= 1, got {self.batches}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.consumers < 1:
            raise ValueError(f"consumers must be >= 1, got {self.consumers}")
        if self.shared_layout not in ("unified", "per_layer"):
            raise ValueError(f"shared_layout must be unified or per_layer, got {self.shared_layout!r}")

    @classmethod
    def from_mapping(cls, values: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**{k: v for k, v in values.items() if v is not None})

    def sampler_strategy(self) -> SamplerStrategy:
        return SamplerStrategy.from_config(self.strategy, asdict(self))


def read_config_file(path: str | os.PathLike) -> dict[str, str]:
    """``key=value`` lines; blank lines and ``#`` comments are skipped."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
            key, val = line.split("=", 1)
            out[key.strip().replace("-", "_")] = val.strip()
    return out


def load_graph(source: str, seed: int = 0) -> Graph:
    """A graph from an edge-list path or ``er:n:p[:seed]`` / ``ba:n:m[:seed]``."""
    head = source.split(":", 1)[0].lower()
    if head in ("er", "ba") and ":" in source:
        parts = source.split(":")
        if len(parts) not in (3, 4):
            raise ValueError(f"synthetic source must be {head}:n:param[:seed], got {source!r}")
        gseed = int(parts[3]) if len(parts) == 4 else seed
        if head == "er":
            return generate_synthetic("er", gseed, n=int(parts[1]), p=float(parts[2]))
        return generate_synthetic("ba", gseed, n=int(parts[1]), m=int(parts[2]))
    return read_edge_list(source)


def batch_seeds(n: int, size: int, seed: int, b: int) -> np.ndarray:
    """Seed nodes of global batch ``b``, independent of strategy and consumer."""
    rng = np.random.default_rng([seed, 2, b])
    return np.sort(rng.choice(n, size=min(size, n), replace=False))


@dataclass
class BenchReport:
    rows: list[dict]
    summary: dict
    store: TieredStore | None = field(default=None, repr=False)

    def write_csv(self, path: str | os.PathLike) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=ROW_FIELDS, lineterminator="\n")
            w.writeheader()
            for row in self.rows:
                w.writerow({**row, "sim_time": repr(row["sim_time"])})

    def write_json(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(self.summary, sort_keys=True, indent=2))
            fh.write("\n")


def reduction(base: float, cur: float) -> float:
    """Percentage saved relative to ``base``."""
    if base == 0:
        return 0.0
    return (base - cur) / base * 100.0


def _check_blocks(g: Graph, sb) -> None:
    prev = sb.seeds
    for blk in sb.blocks:
        if not np.array_equal(blk.dst, prev):
            raise InvariantError(f"frontier chain broken at layer {blk.layer}")
        if blk.edge_src.size:
            if not g.has_edges(blk.edge_dst, blk.edge_src).all():
                raise InvariantError(f"sampled a non-edge at layer {blk.layer}")
            counts = np.unique(blk.edge_dst, return_counts=True)[1]
            if counts.max() > blk.fanout:
                raise InvariantError(f"fanout cap exceeded at layer {blk.layer}")
        prev = blk.frontier


def _make_samplers(cfg: RunConfig, g: Graph, store: TieredStore):
    strat = cfg.sampler_strategy()
    n = cfg.consumers
    kw = dict(seed=cfg.seed, store=store)
    if cfg.threshold is not None:
        if strat.kind is Strategy.FBL:
            return [Sampler(g, strat, cfg.fanouts, consumer=i, **kw) for i in range(n)]
        shared = None
        first = DualSampler(g, cfg.threshold, strat, cfg.fanouts, consumer=0, **kw)
        if strat.shared:
            shared = first.dense.shared
        return [first] + [
            DualSampler(g, cfg.threshold, strat, cfg.fanouts, consumer=i, split=first.split,
                        shared=shared, **kw)
            for i in range(1, n)
        ]
    if strat.shared:
        shared = build_shared(g, strat, cfg.fanouts, cfg.seed, store,
                              unified=cfg.shared_layout == "unified")
        return [Sampler(g, strat, cfg.fanouts, consumer=i, shared=shared, **kw) for i in range(n)]
    cache = None
    if cfg.cache_in and strat.needs_cache:
        with open(cfg.cache_in, "rb") as fh:
            cache = load_cache(fh.read(), g, store=store, seed=[cfg.seed, 0])
    return [
        Sampler(g, strat, cfg.fanouts, consumer=i, cache=cache if i == 0 else None, **kw)
        for i in range(n)
    ]


def _run_batches(cfg: RunConfig, g: Graph, samplers, store: TieredStore) -> list[tuple]:
    """Run every batch, consumer ``b % N`` handling global batch ``b``.

    Consumers are real threads, but a turnstile admits batches in global
    order so the log, and hence the report, is reproducible.
    """
    n = len(samplers)
    marks: dict[int, tuple[int, int, int]] = {}
    cond = threading.Condition()
    state = {"next": 0, "error": None}

    def run_one(b: int) -> None:
        seeds = batch_seeds(g.node_count, cfg.batch_size, cfg.seed, b)
        start = len(store)
        sb = samplers[b % n].sample(seeds)
        if cfg.validate:
            _check_blocks(g, sb)
        marks[b] = (start, len(store), sb.resident_entries)

    def worker(i: int) -> None:
        for b in range(i, cfg.batches, n):
            with cond:
                cond.wait_for(lambda: state["next"] == b or state["error"] is not None)
                if state["error"] is not None:
                    return
                try:
                    run_one(b)
                except BaseException as exc:  # surfaced by the caller
                    state["error"] = exc
                state["next"] += 1
                cond.notify_all()

    if n == 1:
        for b in range(cfg.batches):
            run_one(b)
    else:
        threads = [threading.Thread(target=worker, args=(i,), daemon=True) for i in range(n)]
        for th in threads:
            th.start()
        for th in threads:
            th.join()
        if state["error"] is not None:
            raise state["error"]
    return [marks[b] for b in range(cfg.batches)]


def run_bench(cfg: RunConfig, graph: Graph | None = None, baseline: dict | None = None,
              latency: LatencyModel | None = None) -> BenchReport:
    g = graph if graph is not None else load_graph(cfg.graph, cfg.seed)
    if g.node_count == 0:
        raise ValueError("graph has no nodes")
    store = TieredStore(g.node_count, dim=cfg.dim, latency=latency, seed=cfg.seed)
    samplers = _make_samplers(cfg, g, store)
    marks = _run_batches(cfg, g, samplers, store)

    log = store.log_arrays()
    op, times = log["op"], log["time"]
    is_miss = (op == 0) & (log["tag"] == 5)
    strategy = cfg.sampler_strategy().kind.value
    if cfg.threshold is not None and strategy != "FBL":
        strategy = f"DUAL_{strategy}"
    fan = ",".join(str(f) for f in cfg.fanouts)
    rows = []
    for b, (start, end, resident) in enumerate(marks):
        lo = 0 if b == 0 else start
        sl = slice(lo, end)
        o = op[sl]
        rows.append({
            "strategy": strategy,
            "fanouts": fan,
            "batch": b,
            "disk_reads": int((o == 0).sum()),
            "disk_writes": int((o == 1).sum()),
            "cache_hits": int((o == 2).sum()),
            "cache_misses": int(is_miss[sl].sum()),
            "sim_time": float(np.add.accumulate(np.r_[0.0, times[sl]])[-1]),
            "cache_entries": int(resident),
        })
    if marks[-1][1] != op.size:
        raise InvariantError("log entries outside any batch")
    totals = {k: sum(r[k] for r in rows) for k in COUNTERS}
    for k in COUNTERS:
        if totals[k] != getattr(store, k):
            raise InvariantError(f"{k}: report {totals[k]} != store {getattr(store, k)}")
    fold = float(np.add.accumulate(np.r_[0.0, times])[-1])
    if fold != store.clock:
        raise InvariantError(f"clock {store.clock!r} != log time {fold!r}")
    totals["sim_time"] = store.clock
    mean_entries = float(np.mean([r["cache_entries"] for r in rows]))
    summary = {
        "schema": SCHEMA,
        "strategy": strategy,
        "fanouts": list(cfg.fanouts),
        "batches": cfg.batches,
        "batch_size": cfg.batch_size,
        "consumers": cfg.consumers,
        "seed": cfg.seed,
        "graph": {"source": cfg.graph, "nodes": g.node_count, "edges": g.edge_count},
        "totals": totals,
        "mean_sim_time": store.clock / cfg.batches,
        "mean_cache_entries": mean_entries,
        "memory_proxy": mean_entries * (1 + cfg.dim),
        "log_entries": int(op.size),
        "ops": {name: int((op == i).sum()) for i, name in enumerate(OPS)},
    }
    if baseline is not None:
        summary["baseline"] = baseline.get("strategy")
        summary["reductions"] = compare(baseline, summary)
    return BenchReport(rows, summary, store)


def compare(base: dict, cur: dict) -> dict[str, float]:
    """Reduction percentages of ``cur`` against ``base`` summaries."""
    out = {k: reduction(base["totals"][k], cur["totals"][k])
           for k in ("disk_reads", "sim_time")}
    out["memory_proxy"] = reduction(base["memory_proxy"], cur["memory_proxy"])
    return out


def load_summary(path: str | os.PathLike) -> dict:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if data.get("schema") != SCHEMA:
        raise ValueError(f"{path} is not a {SCHEMA} summary")
    return data
