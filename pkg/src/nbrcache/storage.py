"""Simulated disk / cache / memory tiers.

Latencies are charged to a virtual clock and never slept. Every charge is
appended to a columnar I/O log, which is the single source of truth for
benchmark counters.
"""

from __future__ import annotations

import csv
import os
import threading
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

OPS = ("disk_read", "disk_write", "cache_access")
TAGS = ("init", "refresh", "fetch", "sample", "buffer", "miss", "pattern")
PATTERNS = ("k_h_sampling", "k_h_retrieval", "k_h_resampling")

_OP_CODE = {name: i for i, name in enumerate(OPS)}
_TAG_CODE = {name: i for i, name in enumerate(TAGS)}

SCALE_ENV = "GSS_SIM_SCALE"


@dataclass(frozen=True)
class LatencyModel:
    disk_read: float = 5.0011
    disk_write: float = 1.0045
    cache_access: float = 0.0146
    scale: float = 1e-3

    def __post_init__(self):
        if min(self.disk_read, self.disk_write, self.cache_access) < 0:
            raise ValueError("latencies must be non-negative")
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")

    @classmethod
    def from_env(cls, **kwargs) -> "LatencyModel":
        """Default model, with ``scale`` overridden by ``$GSS_SIM_SCALE``."""
        env = os.environ.get(SCALE_ENV)
        if env is not None and "scale" not in kwargs:
            kwargs["scale"] = float(env)
        return cls(**kwargs)

    def cost(self, op: str) -> float:
        return getattr(self, op) * self.scale


class IOLogEntry(NamedTuple):
    op: str
    tag: str
    node: int
    batch: int
    time: float


class TieredStore:
    """Disk with per-node payloads, an LRU buffer, a clock and an I/O log.

    Payloads are ``dim`` pseudo-random bytes per node, derived from
    ``(seed, node)`` so they are reproducible. Charges are serialized by an
    internal lock, so several samplers may share one store.
    """

    def __init__(
        self,
        node_count: int,
        dim: int = 128,
        capacity: int = 1024,
        latency: LatencyModel | None = None,
        seed: int = 0,
    ):
        if capacity < 1:
            raise ValueError(f"buffer capacity must be >= 1, got {capacity}")
        self.node_count = int(node_count)
        self.dim = int(dim)
        self.capacity = int(capacity)
        self.latency = latency if latency is not None else LatencyModel.from_env()
        self.seed = seed
        self.clock = 0.0
        self.disk_reads = 0
        self.disk_writes = 0
        self.cache_hits = 0
        self.cache_misses = 0
        self.buffer: OrderedDict[int, bytes] = OrderedDict()
        self._written: dict[int, bytes] = {}
        self._cost = np.array([self.latency.cost(op) for op in OPS])
        self._chunks: list[tuple[int, int, np.ndarray, int]] = []
        self._lock = threading.RLock()

    # -- charging -------------------------------------------------------

    def charge(self, op: str, tag: str, nodes, batch: int = 0) -> float:
        """Charge one ``op`` per entry of ``nodes``; returns the time charged."""
        nodes = np.atleast_1d(np.asarray(nodes, dtype=np.int64))
        if nodes.size == 0:
            return 0.0
        code, tcode = _OP_CODE[op], _TAG_CODE[tag]
        unit = self._cost[code]
        charged = np.full(nodes.size, unit)
        with self._lock:
            # sequential left fold so the clock equals the in-order log sum
            acc = np.add.accumulate(np.concatenate(([self.clock], charged)))
            self.clock = float(acc[-1])
            self._chunks.append((code, tcode, nodes.copy(), int(batch)))
            n = int(nodes.size)
            if code == 0:
                self.disk_reads += n
                if tag == "miss":
                    self.cache_misses += n
            elif code == 1:
                self.disk_writes += n
            else:
                self.cache_hits += n
        return float(np.add.accumulate(charged)[-1])

    # -- log --------------------------------------------------------------

    def log_arrays(self) -> dict[str, np.ndarray]:
        """The log as columns: op/tag codes, node, batch, time."""
        with self._lock:
            chunks = list(self._chunks)
        if not chunks:
            empty = np.empty(0, dtype=np.int64)
            return {"op": empty, "tag": empty, "node": empty, "batch": empty,
                    "time": np.empty(0)}
        sizes = np.array([c[2].size for c in chunks])
        op = np.repeat([c[0] for c in chunks], sizes)
        return {
            "op": op,
            "tag": np.repeat([c[1] for c in chunks], sizes),
            "node": np.concatenate([c[2] for c in chunks]),
            "batch": np.repeat([c[3] for c in chunks], sizes),
            "time": self._cost[op],
        }

    def get_log(self) -> list[IOLogEntry]:
        cols = self.log_arrays()
        return [
            IOLogEntry(OPS[o], TAGS[t], n, b, tm)
            for o, t, n, b, tm in zip(
                cols["op"].tolist(), cols["tag"].tolist(), cols["node"].tolist(),
                cols["batch"].tolist(), cols["time"].tolist(),
            )
        ]

    def __len__(self) -> int:
        with self._lock:
            return sum(c[2].size for c in self._chunks)

    def counters(self) -> dict[str, int]:
        return {
            "disk_reads": self.disk_reads,
            "disk_writes": self.disk_writes,
            "cache_hits": self.cache_hits,
            "cache_misses": self.cache_misses,
        }

    def export_log_csv(self, path: str | os.PathLike) -> None:
        cols = self.log_arrays()
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["op", "tag", "node", "batch", "time"])
            for o, t, n, b, tm in zip(
                cols["op"].tolist(), cols["tag"].tolist(), cols["node"].tolist(),
                cols["batch"].tolist(), cols["time"].tolist(),
            ):
                w.writerow([OPS[o], TAGS[t], n, b, repr(tm)])

    # -- buffer manager -------------------------------------------------

    def _check_node(self, v: int) -> int:
        v = int(v)
        if not 0 <= v < self.node_count:
            raise LookupError(f"node {v} is not on disk (node_count={self.node_count})")
        return v

    def payload(self, v: int) -> bytes:
        """Disk payload of ``v`` (no charge)."""
        v = self._check_node(v)
        if v in self._written:
            return self._written[v]
        return np.random.default_rng([self.seed, v]).bytes(self.dim)

    def _insert(self, v: int, data: bytes) -> None:
        self.buffer[v] = data
        self.buffer.move_to_end(v)
        while len(self.buffer) > self.capacity:
            self.buffer.popitem(last=False)

    def buffer_load(self, nodes, batch: int = 0) -> None:
        """Read ``nodes`` from disk into the buffer (resident ones are only touched)."""
        with self._lock:
            for v in np.atleast_1d(np.asarray(nodes, dtype=np.int64)).tolist():
                v = self._check_node(v)
                if v in self.buffer:
                    self.buffer.move_to_end(v)
                    continue
                self.charge("disk_read", "buffer", v, batch)
                self._insert(v, self.payload(v))

    def buffer_get(self, v: int, batch: int = 0) -> bytes:
        """Return the payload of ``v``, reading through to disk on a miss."""
        with self._lock:
            v = self._check_node(v)
            if v in self.buffer:
                self.buffer.move_to_end(v)
                self.charge("cache_access", "buffer", v, batch)
                return self.buffer[v]
            self.charge("disk_read", "miss", v, batch)
            data = self.payload(v)
            self._insert(v, data)
            return data

    def buffer_store(self, v: int, data: bytes, batch: int = 0) -> None:
        """Write ``data`` through the buffer to disk."""
        with self._lock:
            v = self._check_node(v)
            if len(data) != self.dim:
                raise ValueError(f"payload must be {self.dim} bytes, got {len(data)}")
            data = bytes(data)
            self._written[v] = data
            self._insert(v, data)
            self.charge("disk_write", "buffer", v, batch)


def charge_pattern(store: TieredStore, pattern: str, count: int, batch: int = 0) -> None:
    """Charge ``count`` repetitions of an access pattern.

    Sampling and resampling each cost one disk read plus one disk write;
    retrieval is a cache access only.
    """
    if pattern not in PATTERNS:
        raise ValueError(f"unknown access pattern {pattern!r}")
    if count < 0:
        raise ValueError(f"count must be non-negative, got {count}")
    if count == 0:
        return
    nodes = np.full(count, -1, dtype=np.int64)
    if pattern == "k_h_retrieval":
        store.charge("cache_access", "pattern", nodes, batch)
    else:
        store.charge("disk_read", "pattern", nodes, batch)
        store.charge("disk_write", "pattern", nodes, batch)


# -- I/O cost optimizer ----------------------------------------------------


@dataclass
class IOPlan:
    """An ordered list of ``("read" | "write", node)`` operations.

    ``deferred`` holds reads postponed to a later batched pass; they are not
    part of the current estimate.
    """

    ops: list[tuple[str, int]] = field(default_factory=list)
    deferred: list[int] = field(default_factory=list)

    @property
    def reads(self) -> int:
        return sum(1 for kind, _ in self.ops if kind == "read")

    @property
    def writes(self) -> int:
        return sum(1 for kind, _ in self.ops if kind == "write")


@dataclass(frozen=True)
class IOCostOptimizer:
    read_cost: float = 5.0011
    write_cost: float = 1.0045
    load_factor: float = 0.0
    read_ceiling: int = 64

    def __post_init__(self):
        if not (self.read_cost > 0 and self.write_cost > 0):
            raise ValueError("read_cost and write_cost must be positive")
        if self.load_factor < 0:
            raise ValueError("load_factor must be non-negative")

    def estimate(self, reads: int, writes: int) -> float:
        return reads * self.read_cost + writes * self.write_cost

    def adjust(self, load: float) -> "IOCostOptimizer":
        """Costs scaled by ``1 + load``."""
        if load < 0:
            raise ValueError(f"load must be non-negative, got {load}")
        k = 1.0 + load
        return replace(
            self, read_cost=self.read_cost * k, write_cost=self.write_cost * k,
            load_factor=load,
        )

    def plan_cost(self, plan: IOPlan) -> float:
        return self.estimate(plan.reads, plan.writes)

    def optimize(self, plan: IOPlan, context: str) -> IOPlan:
        """Rewrite ``plan`` for ``high_load`` or ``low_cost``.

        ``high_load`` keeps at most ``read_ceiling`` immediate reads and
        defers the rest. ``low_cost`` drops repeated reads of a node and
        moves writes after reads. Neither rewrite raises the estimate.
        """
        if context == "high_load":
            ops, deferred, seen = [], list(plan.deferred), 0
            for kind, node in plan.ops:
                if kind == "read":
                    if seen >= self.read_ceiling:
                        deferred.append(node)
                        continue
                    seen += 1
                ops.append((kind, node))
            return IOPlan(ops, deferred)
        if context == "low_cost":
            read_nodes: dict[int, None] = {}
            writes = []
            for kind, node in plan.ops:
                if kind == "read":
                    read_nodes.setdefault(node, None)
                else:
                    writes.append((kind, node))
            return IOPlan([("read", n) for n in read_nodes] + writes, list(plan.deferred))
        raise ValueError(f"unknown optimization context {context!r}")
