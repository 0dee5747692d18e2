"""Versioned binary dumps of caches and snapshots.

Layout (little-endian)::

    b"GSSC1"  u8 kind (0 = cache, 1 = snapshot)
    cache:    u8 unified, f64 amp_rate, i64 t, u32 L, L x u32 fanout,
              u32 layers, then per layer:
                u32 capacity, u64 generation, u32 node_count,
                per node: u32 m, m x i64 entry, m x i64 epoch
    snapshot: u32 node_count, per node:
                i64 node, u32 m, m x i64 neighbor, m x u8 provenance
"""

from __future__ import annotations

import io
import struct

import numpy as np

from .cache import CacheLayer, LayeredCache
from .graph import Graph
from .snapshot import Snapshot

MAGIC = b"GSSC1"
KIND_CACHE = 0
KIND_SNAPSHOT = 1


class DumpFormatError(ValueError):
    pass


class _Reader:
    def __init__(self, data: bytes):
        self.buf = memoryview(data)
        self.pos = 0

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.buf):
            raise DumpFormatError("truncated dump")
        out = struct.unpack_from(fmt, self.buf, self.pos)
        self.pos += size
        return out if len(out) > 1 else out[0]

    def array(self, dtype, count: int) -> np.ndarray:
        size = np.dtype(dtype).itemsize * count
        if self.pos + size > len(self.buf):
            raise DumpFormatError("truncated dump")
        out = np.frombuffer(self.buf, dtype=dtype, count=count, offset=self.pos).copy()
        self.pos += size
        return out


def _header(data: bytes, kind: int) -> _Reader:
    if data[: len(MAGIC)] != MAGIC:
        raise DumpFormatError("not a GSSC1 dump")
    r = _Reader(data)
    r.pos = len(MAGIC)
    got = r.take("<B")
    if got != kind:
        raise DumpFormatError(f"dump holds kind {got}, expected {kind}")
    return r


def dump_cache(cache: LayeredCache) -> bytes:
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(struct.pack("<BBdqI", KIND_CACHE, int(cache.unified), cache.amp_rate, cache.t,
                          len(cache.fanouts)))
    out.write(np.asarray(cache.fanouts, dtype="<u4").tobytes())
    out.write(struct.pack("<I", len(cache.layers)))
    for lay in cache.layers:
        n = lay.sizes.size
        out.write(struct.pack("<IQI", lay.capacity, lay.generation, n))
        for v in range(n):
            k = int(lay.sizes[v])
            out.write(struct.pack("<I", k))
            out.write(lay.entries[v, :k].astype("<i8").tobytes())
            out.write(lay.epochs[v, :k].astype("<i8").tobytes())
    return out.getvalue()


def load_cache(data: bytes, graph: Graph, *, store=None, node_ids=None, seed=0) -> LayeredCache:
    """Rebuild a cache over ``graph`` from :func:`dump_cache` output."""
    r = _header(data, KIND_CACHE)
    unified, amp, t, nf = r.take("<BdqI")
    fanouts = r.array("<u4", nf).astype(int).tolist()
    cache = LayeredCache(graph, fanouts, amp, rng=seed, store=store, node_ids=node_ids,
                         unified=bool(unified))
    n_layers = r.take("<I")
    if n_layers != len(cache.layers):
        raise DumpFormatError(f"dump has {n_layers} layers, expected {len(cache.layers)}")
    for li in range(n_layers):
        cap, gen, n = r.take("<IQI")
        if n != graph.node_count:
            raise DumpFormatError(f"dump covers {n} nodes, graph has {graph.node_count}")
        lay = CacheLayer.empty(n, cache.layers[li].fanout, cap)
        lay.generation = gen
        for v in range(n):
            k = r.take("<I")
            if k > cap:
                raise DumpFormatError(f"node {v} holds {k} entries, capacity {cap}")
            lay.entries[v, :k] = r.array("<i8", k)
            lay.epochs[v, :k] = r.array("<i8", k)
            lay.sizes[v] = k
        cache.layers[li] = lay
    cache.t = t
    cache.initialized = True
    return cache


def dump_snapshot(snap: Snapshot) -> bytes:
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(struct.pack("<BI", KIND_SNAPSHOT, len(snap)))
    for v in snap.nodes():
        nb = snap.neighbors[v]
        out.write(struct.pack("<qI", v, nb.size))
        out.write(nb.astype("<i8").tobytes())
        out.write(snap.provenance[v].astype("u1").tobytes())
    return out.getvalue()


def load_snapshot(data: bytes) -> Snapshot:
    r = _header(data, KIND_SNAPSHOT)
    n = r.take("<I")
    nb, tags = {}, {}
    for _ in range(n):
        v, m = r.take("<qI")
        nb[v] = r.array("<i8", m).astype(np.int64)
        tags[v] = r.array("u1", m)
    return Snapshot(nb, tags)
