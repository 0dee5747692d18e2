"""Slow, obviously-correct reference implementations used by the tests.

Nothing here imports the package's sampling or counting helpers; they work
from plain Python sets, dicts and integer arithmetic.
"""

from __future__ import annotations

from collections import Counter, deque


def adjacency(edges, n, symmetrize=False):
    adj = {v: set() for v in range(n)}
    for u, v in edges:
        adj[u].add(v)
        if symmetrize:
            adj[v].add(u)
    return adj


def graph_adjacency(g):
    """Neighbor sets from a Graph, scanning its CSR arrays element by element."""
    adj = {}
    offs = g.out_offsets.tolist()
    tg = g.out_targets.tolist()
    for v in range(g.node_count):
        adj[v] = set(tg[offs[v] : offs[v + 1]])
    return adj


def total_degrees(edges_list, n):
    """In + out degree from a list of directed (u, v) pairs."""
    deg = [0] * n
    for u, v in edges_list:
        deg[u] += 1
        deg[v] += 1
    return deg


def degree_filter(g, theta):
    edges = list(zip(*[a.tolist() for a in g.edges()]))
    deg = total_degrees(edges, g.node_count)
    dense = {v for v in range(g.node_count) if deg[v] > theta}
    return dense, set(range(g.node_count)) - dense, deg


def bfs_hops(adj, v, k):
    seen = {v}
    q = deque([(v, 0)])
    while q:
        u, d = q.popleft()
        if d == k:
            continue
        for w in adj[u]:
            if w not in seen:
                seen.add(w)
                q.append((w, d + 1))
    return seen


def ceil_frac(num, den, count):
    """ceil(num/den * count) in integers."""
    return -((-num * count) // den)


def storage_oracle(g, theta, cap):
    edges = list(zip(*[a.tolist() for a in g.edges()]))
    deg = total_degrees(edges, g.node_count)
    outdeg = Counter(u for u, _ in edges)
    sparse = sum(outdeg[v] for v in range(g.node_count) if deg[v] <= theta)
    resampled = sum(min(deg[v], cap) for v in range(g.node_count) if deg[v] > theta)
    return sparse, resampled


def round_half_up_frac(num, den, n):
    """floor(num/den * n + 1/2)."""
    return (2 * num * n + den) // (2 * den)


def fold(values):
    acc = 0.0
    for x in values:
        acc = acc + x
    return acc


def block_violations(adj, sb):
    """Problems in a SampledBlocks against neighbor sets ``adj``: non-edges,
    fanout overruns, broken frontier chaining, duplicate edges."""
    problems = []
    prev = sorted(set(sb.seeds.tolist()))
    for blk in sb.blocks:
        if sorted(blk.dst.tolist()) != prev:
            problems.append(("chain", blk.layer))
        per_dst = Counter()
        pairs = list(zip(blk.edge_src.tolist(), blk.edge_dst.tolist()))
        if len(pairs) != len(set(pairs)):
            problems.append(("duplicate", blk.layer))
        for s, d in pairs:
            if s not in adj[d]:
                problems.append(("edge", blk.layer, s, d))
            if d not in set(prev):
                problems.append(("dst", blk.layer, d))
            per_dst[d] += 1
        if per_dst and max(per_dst.values()) > blk.fanout:
            problems.append(("fanout", blk.layer))
        nxt = sorted({s for s, _ in pairs})
        if blk.frontier.tolist() != nxt:
            problems.append(("frontier", blk.layer))
        prev = nxt
    return problems
