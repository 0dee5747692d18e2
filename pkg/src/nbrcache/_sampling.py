"""Vectorized without-replacement sampling over ragged segments.

Every sampler in the package reduces to one primitive: given a flat array of
candidates grouped into contiguous segments (one segment per frontier node),
pick ``k[s]`` candidates uniformly without replacement from segment ``s``.
Assigning an i.i.d. uniform key to every candidate and keeping the ``k``
smallest keys per segment yields a uniform ``k``-subset.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np


def _rate(rate) -> Fraction:
    # str() round-trips the shortest decimal, so 0.15 -> 3/20 exactly
    return Fraction(str(rate)) if isinstance(rate, float) else Fraction(rate)


def ceil_rate(rate, counts):
    """``ceil(rate * counts)`` evaluated on the decimal value of ``rate``.

    Plain float arithmetic gets this wrong at exact boundaries
    (``0.15 * 20 == 3.0000000000000004``). ``counts`` may be an int or an
    integer array.
    """
    fr = _rate(rate)
    if np.isscalar(counts):
        return int(-((-fr.numerator * int(counts)) // fr.denominator))
    counts = np.asarray(counts, dtype=np.int64)
    uniq, inv = np.unique(counts, return_inverse=True)
    table = np.array(
        [-((-fr.numerator * int(c)) // fr.denominator) for c in uniq], dtype=np.int64
    )
    return table[inv].reshape(counts.shape)


def round_half_up(rate, n: int) -> int:
    """``floor(rate * n + 1/2)`` with exact decimal semantics."""
    fr = _rate(rate) * int(n) + Fraction(1, 2)
    return int(fr.numerator // fr.denominator)


def gather_segments(offsets: np.ndarray, targets: np.ndarray, nodes: np.ndarray):
    """Concatenate CSR rows ``nodes``.

    Returns ``(seg, values)`` where ``seg[i]`` is the position in ``nodes`` of
    the row that ``values[i]`` came from.
    """
    nodes = np.asarray(nodes, dtype=np.int64)
    starts = offsets[nodes]
    lens = offsets[nodes + 1] - starts
    total = int(lens.sum())
    seg = np.repeat(np.arange(nodes.size, dtype=np.int64), lens)
    if total == 0:
        return seg, np.empty(0, dtype=np.int64)
    before = np.cumsum(lens) - lens
    pos = np.arange(total, dtype=np.int64) - np.repeat(before - starts, lens)
    return seg, targets[pos]


def choose_per_segment(seg: np.ndarray, k, rng: np.random.Generator) -> np.ndarray:
    """Boolean mask picking up to ``k[s]`` uniform candidates per segment.

    ``seg`` must be non-decreasing. ``k`` is indexed by segment id (or is a
    scalar). The mask keeps candidates in their original order.
    """
    n = seg.size
    mask = np.zeros(n, dtype=bool)
    if n == 0:
        return mask
    keys = rng.random(n)
    order = np.lexsort((keys, seg))
    sseg = seg[order]
    first = np.r_[True, sseg[1:] != sseg[:-1]]
    starts = np.maximum.accumulate(np.where(first, np.arange(n), 0))
    rank = np.arange(n) - starts
    limit = k[sseg] if not np.isscalar(k) else k
    mask[order[rank < limit]] = True
    return mask


def pair_keys(seg: np.ndarray, values: np.ndarray, width: int) -> np.ndarray:
    """Encode (segment, value) pairs as single int64 keys for set tests."""
    return seg.astype(np.int64) * np.int64(width) + values.astype(np.int64)
