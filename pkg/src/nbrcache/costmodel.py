"""Analytic batch-time and storage models."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .graph import Graph, total_degree


@dataclass(frozen=True)
class CostParams:
    """Batch size ``s_b``, cached portion ``s_c``, refresh rate ``alpha`` and
    processing speeds of memory (``v_m``) and cache (``v_c``)."""

    s_b: float
    s_c: float
    alpha: float
    v_m: float
    v_c: float

    def __post_init__(self):
        if not self.s_b > 0:
            raise ValueError(f"batch size must be positive, got {self.s_b}")
        if not 0 <= self.s_c <= self.s_b:
            raise ValueError(f"cache size must lie in [0, batch size], got {self.s_c}")
        if not 0 <= self.alpha <= 1:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not (self.v_m > 0 and self.v_c > 0):
            raise ValueError("processing speeds must be positive")


def t_disk_memory(s_b: float, v_m: float) -> float:
    """Batch time when everything streams from disk through memory."""
    if not s_b > 0 or not v_m > 0:
        raise ValueError("batch size and memory speed must be positive")
    return s_b / v_m


def t_disk_cache_memory(s_b: float, s_c: float, alpha: float, v_m: float, v_c: float) -> float:
    """Batch time when a portion ``s_c`` is served from a cache that is
    refreshed at rate ``alpha``."""
    p = CostParams(s_b, s_c, alpha, v_m, v_c)
    return (p.s_b - p.s_c) / p.v_m + (1 - p.alpha) * p.s_c / p.v_c


def evaluate(p: CostParams) -> dict[str, float]:
    dm = t_disk_memory(p.s_b, p.v_m)
    dcm = t_disk_cache_memory(p.s_b, p.s_c, p.alpha, p.v_m, p.v_c)
    return {"t_disk_memory": dm, "t_disk_cache_memory": dcm, "ratio": dcm / dm}


@dataclass(frozen=True)
class StorageEstimate:
    theta: int
    sparse_edges: int
    resampled_edges: int

    @property
    def total(self) -> int:
        return self.sparse_edges + self.resampled_edges


def storage_estimate(g: Graph, theta: int, dense_cap: int = 15) -> StorageEstimate:
    """Edges kept when sparse nodes store their full adjacency and dense
    nodes (total degree above ``theta``) keep at most ``dense_cap``."""
    if dense_cap < 0:
        raise ValueError(f"dense_cap must be non-negative, got {dense_cap}")
    deg = total_degree(g).degrees
    dense = deg > theta
    out = g.out_degree()
    return StorageEstimate(
        int(theta),
        int(out[~dense].sum()),
        int(np.minimum(deg[dense], dense_cap).sum()),
    )


@dataclass(frozen=True)
class Sweep:
    estimates: list[StorageEstimate]
    argmin: int

    @property
    def best(self) -> StorageEstimate:
        return self.estimates[self.argmin]


def sweep_threshold(g: Graph, thetas: Sequence[int], dense_cap: int = 15) -> Sweep:
    """One estimate per threshold; ``argmin`` is the first minimal total."""
    if len(thetas) == 0:
        raise ValueError("no thresholds given")
    ests = [storage_estimate(g, int(t), dense_cap) for t in thetas]
    return Sweep(ests, int(np.argmin([e.total for e in ests])))


def write_sweep_csv(path: str | os.PathLike, sweep: Sweep) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["theta", "sparse_edges", "resampled_edges", "total"])
        for e in sweep.estimates:
            w.writerow([e.theta, e.sparse_edges, e.resampled_edges, e.total])


def compression_ratio(original: int, optimized: int) -> float:
    """Percentage of ``original`` saved by ``optimized``."""
    if original <= 0:
        raise ValueError(f"original size must be positive, got {original}")
    if optimized < 0:
        raise ValueError(f"optimized size must be non-negative, got {optimized}")
    return 100.0 * (original - optimized) / original


def format_ratio(pct: float) -> str:
    return f"{pct:.2f}%"
