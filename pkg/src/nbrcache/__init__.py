"""Cache-aware multi-layer neighbor sampling over a simulated storage stack."""

from .cache import (
    CacheConfigError,
    CacheStateError,
    LayeredCache,
    SharedCache,
    fetch_mixed,
    init_cache,
    refresh_cache_full,
    refresh_cache_partial,
    sample_from_cache,
    shared_refresh,
)
from .graph import Graph, build_graph, erdos_renyi, preferential_attachment, split_by_degree
from .samplers import DualSampler, Sampler, SamplerStrategy, Strategy
from .storage import LatencyModel, TieredStore

__version__ = "0.1.0"

__all__ = [
    "CacheConfigError",
    "CacheStateError",
    "DualSampler",
    "Graph",
    "LatencyModel",
    "LayeredCache",
    "Sampler",
    "SamplerStrategy",
    "SharedCache",
    "Strategy",
    "TieredStore",
    "build_graph",
    "erdos_renyi",
    "fetch_mixed",
    "init_cache",
    "preferential_attachment",
    "refresh_cache_full",
    "refresh_cache_partial",
    "sample_from_cache",
    "shared_refresh",
    "split_by_degree",
]
