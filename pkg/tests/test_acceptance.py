"""Acceptance suite: twelve numbered criteria, one verdict line each.

Verdicts are printed as they are decided (visible with ``-s``) and repeated
in the terminal summary.
"""

import functools
import itertools
import json
import operator
import shutil
import threading
import time
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest

from nbrcache.bench import RunConfig, batch_seeds, run_bench
from nbrcache.cache import (
    SharedCache,
    init_cache,
    refresh_cache_full,
    refresh_cache_partial,
    sample_from_cache,
)
from nbrcache.cli import main
from nbrcache.costmodel import compression_ratio, sweep_threshold, t_disk_cache_memory, t_disk_memory
from nbrcache.graph import build_graph, erdos_renyi, preferential_attachment, split_by_degree
from nbrcache.samplers import (
    BatchContext,
    DualSampler,
    Sampler,
    SamplerStrategy,
    Strategy,
    build_cache,
    sample_blocks_fbl,
)
from nbrcache.storage import OPS, LatencyModel, TieredStore

import oracles
from conftest import degree20_graph

RESULTS: list[str] = []


def verdict(n: int, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    RESULTS.append(line)
    print(line, flush=True)
    assert ok, line


# -- shared workload ----------------------------------------------------------

WORKLOAD = dict(graph="er:2000:0.01:7", seed=7, batches=200, batch_size=64, amp_rate=2.0,
                period=50, refresh_rate=0.15)
CACHING = [s.value for s in Strategy if s is not Strategy.FBL]
SHARED_CONSUMERS = 4


def _run(strategy: str, fanouts: str) -> dict:
    consumers = SHARED_CONSUMERS if strategy.endswith("_SC") else 1
    t0 = time.perf_counter()
    rep = run_bench(RunConfig(strategy=strategy, fanouts=fanouts, consumers=consumers, **WORKLOAD))
    elapsed = time.perf_counter() - t0
    log = rep.store.log_arrays()
    op, times = log["op"], log["time"]
    reads = times[op == 0]
    # independent left fold and per-op counts from the raw log
    fold = functools.reduce(operator.add, times.tolist(), 0.0)
    counts = {name: int((op == i).sum()) for i, name in enumerate(OPS)}
    rows = {k: sum(r[k] for r in rep.rows) for k in ("disk_reads", "disk_writes", "cache_hits")}
    return {
        "summary": rep.summary,
        "elapsed": elapsed,
        "read_time": float(reads.sum()),
        "reconciled": (
            fold == rep.summary["totals"]["sim_time"] == rep.store.clock
            and rows == {"disk_reads": counts["disk_read"], "disk_writes": counts["disk_write"],
                         "cache_hits": counts["cache_access"]}
            and rows == {k: getattr(rep.store, k) for k in rows}
        ),
    }


@pytest.fixture(scope="module")
def runs():
    cache: dict[tuple[str, str], dict] = {}

    def get(strategy: str, fanouts: str) -> dict:
        key = (strategy, fanouts)
        if key not in cache:
            cache[key] = _run(strategy, fanouts)
        return cache[key]

    return get, cache


# -- 1 ------------------------------------------------------------------------

def test_criterion_01_strategy_ordering(runs):
    get, _ = runs
    r = {s: get(s, "5,5,5") for s in ("FBL", "FCR", "OTF_REFRESH_ONLY", "OTF_SC")}
    t = {s: v["read_time"] for s, v in r.items()}
    gap = 0.05 * t["FBL"]
    elapsed = sum(v["elapsed"] for v in r.values())
    ok = (
        t["FBL"] - t["FCR"] >= gap
        and t["FCR"] - t["OTF_REFRESH_ONLY"] >= gap
        and t["OTF_REFRESH_ONLY"] - t["OTF_SC"] >= gap
        and elapsed < 30
    )
    verdict(1, ok, "disk-read time " + " > ".join(f"{s}={t[s]:.3f}" for s in t)
            + f" (min gap {gap:.3f}, {elapsed:.1f}s)")


# -- 2 ------------------------------------------------------------------------

def test_criterion_02_cache_footprint(runs):
    get, _ = runs
    red = {}
    below = True
    for fan in ("5,5,5", "20,20,20"):
        base = get("FBL", fan)["summary"]["memory_proxy"]
        for s in CACHING:
            cur = get(s, fan)["summary"]["memory_proxy"]
            below &= cur < base
            red[s, fan] = (base - cur) / base * 100
    larger_small = all(red[s, "5,5,5"] > red[s, "20,20,20"] for s in CACHING)
    worst20 = min(red[s, "20,20,20"] for s in CACHING)
    verdict(2, below and larger_small,
            f"proxy below FBL at both fanouts={below}; [5,5,5] savings exceed [20,20,20]="
            f"{larger_small} (min [5,5,5] {min(red[s, '5,5,5'] for s in CACHING):.2f}%, "
            f"min [20,20,20] {worst20:.4f}%)")


# -- 3 ------------------------------------------------------------------------

def test_criterion_03_cost_model():
    from test_costmodel import monotonicity_violations

    t0 = time.perf_counter()
    exact = t_disk_cache_memory(100, 40, 0.25, 1, 10) == 63.0 and t_disk_memory(100, 1) == 100.0
    bounds = all(
        t_disk_cache_memory(s_b, 0, a, vm, vc) == t_disk_memory(s_b, vm)
        and t_disk_cache_memory(s_b, s_c, 1.0, vm, vc) == (s_b - s_c) / vm
        for s_b, s_c, a, vm, vc in [(100, 40, 0.3, 1, 10), (7, 2, 0.9, 3, 0.5), (1e6, 5e5, 0.0, 0.1, 1e3)]
    )
    bad = monotonicity_violations()
    elapsed = time.perf_counter() - t0
    verdict(3, exact and bounds and bad == 0 and elapsed < 1,
            f"exact={exact} boundaries={bounds} grid violations={bad} ({elapsed:.3f}s)")


# -- 4 ------------------------------------------------------------------------

def test_criterion_04_refresh_fraction():
    rng = np.random.default_rng(404)
    gammas = [0, 0.15, 0.5, 1]
    violations = 0
    trials = 0
    for trial in range(1000):
        gamma = gammas[trial % 4]
        size = trial // 4 % 10 + 1
        # node 0 has degree >= size; the rest of the graph is random
        n = int(rng.integers(size + 2, size + 30))
        hub = [(0, int(v)) for v in rng.choice(np.arange(1, n), int(rng.integers(size, n)), replace=False)]
        extra = [tuple(map(int, e)) for e in rng.integers(0, n, (int(rng.integers(0, 3 * n)), 2))]
        g = build_graph(hub + extra, n, symmetrize=True)
        c = init_cache(g, [size], 1.0, seed=int(rng.integers(1 << 31)))
        lay = c.layers[0]
        prior = {v: set(lay.row(v).tolist()) for v in range(n)}
        sizes = lay.sizes.copy()
        c.advance(1)
        replaced = refresh_cache_partial(c, 0, gamma)
        fr = Fraction(str(gamma))
        want_total = 0
        for v in range(n):
            k = int(sizes[v])
            fresh = lay.epochs[v, :k] == 1
            want = oracles.ceil_frac(fr.numerator, fr.denominator, k)
            want_total += want
            row = lay.entries[v, :k].tolist()
            kept = set(np.asarray(row)[~fresh].tolist())
            if (lay.sizes[v] != k or int(fresh.sum()) != want or not kept <= prior[v]
                    or len(set(row)) != k or not set(row) <= set(g.neighbors(v).tolist())):
                violations += 1
        if lay.sizes[0] != size or replaced != want_total:
            violations += 1
        trials += 1
    verdict(4, violations == 0, f"{trials} trials, {violations} violations")


# -- 5 ------------------------------------------------------------------------

def test_criterion_05_uniformity():
    g = degree20_graph()
    trials = 10000
    worst = {}

    ctx = BatchContext.seeded(55)
    fbl = Counter()
    for _ in range(trials):
        fbl.update(sample_blocks_fbl(g, [0], [5], ctx).blocks[0].edge_src.tolist())
    worst["fbl"] = max(abs(fbl[u] / trials - 5 / 20) for u in range(1, 21))

    # within one cached row: each of the 6 entries drawn with probability 2/6
    c = init_cache(g, [3], 2.0, seed=5)
    row = c.layers[0].row(0).tolist()
    rng = np.random.default_rng(5)
    within = Counter()
    for _ in range(trials):
        within.update(sample_from_cache(c, 0, [0], 2, rng=rng)[0].tolist())
    worst["cache_row"] = max(abs(within[u] / trials - 2 / 6) for u in row)

    # across refreshed caches: each of the 20 neighbors with probability 2/20
    across = Counter()
    for _ in range(trials):
        refresh_cache_full(c)
        across.update(sample_from_cache(c, 0, [0], 2, rng=rng)[0].tolist())
    worst["cache_graph"] = max(abs(across[u] / trials - 2 / 20) for u in range(1, 21))

    verdict(5, max(worst.values()) <= 0.05,
            "max deviation " + ", ".join(f"{k}={v:.4f}" for k, v in worst.items()))


# -- 6 ------------------------------------------------------------------------

def _random_instance(rng):
    n = int(rng.integers(10, 250))
    gseed = int(rng.integers(1 << 31))
    if rng.random() < 0.5:
        g = erdos_renyi(n, float(rng.uniform(0.01, 0.3)), seed=gseed)
    else:
        g = preferential_attachment(n, int(rng.integers(1, 5)), seed=gseed)
    kind = Strategy(rng.choice([s.value for s in Strategy]))
    fanouts = [int(f) for f in rng.integers(0, 9, int(rng.integers(1, 4)))]
    config = {
        "amp_rate": float(rng.choice([1.0, 1.5, 2.0, 3.0])),
        "refresh_rate": float(rng.choice([0.0, 0.15, 0.5, 1.0])),
        "fetch_rate": float(rng.choice([0.0, 0.3, 0.7, 1.0])),
        "period": int(rng.integers(1, 5)),
        "fetch_period": int(rng.integers(1, 5)),
        "write_back": bool(rng.random() < 0.3),
    }
    theta = int(rng.integers(0, 20)) if kind is not Strategy.FBL and rng.random() < 0.3 else None
    return g, SamplerStrategy.from_config(kind, config), fanouts, theta


def test_criterion_06_block_validity():
    rng = np.random.default_rng(606)
    violations = 0
    for i in range(500):
        g, strat, fanouts, theta = _random_instance(rng)
        adj = oracles.graph_adjacency(g)
        if theta is None:
            sampler = Sampler(g, strat, fanouts, seed=i)
        else:
            sampler = DualSampler(g, theta, strat, fanouts, seed=i)
            dense, _, _ = oracles.degree_filter(g, theta)
            adj = {d: {s for s in nb if (s in dense) == (d in dense)} for d, nb in adj.items()}
        for _ in range(3):
            seeds = rng.choice(g.node_count, int(rng.integers(1, min(20, g.node_count) + 1)), replace=False)
            if oracles.block_violations(adj, sampler.sample(seeds)):
                violations += 1
    verdict(6, violations == 0, f"500 instances x 3 batches, {violations} violations")


# -- 7 ------------------------------------------------------------------------

def test_criterion_07_partition_laws():
    rng = np.random.default_rng(707)
    violations = 0
    for _ in range(200):
        n = int(rng.integers(1, 120))
        m = int(rng.integers(0, 4 * n))
        edges = [tuple(map(int, e)) for e in rng.integers(0, n, (m, 2))]
        sym = bool(rng.random() < 0.5)
        g = build_graph(edges, n, symmetrize=sym, build_in_adjacency=not sym)
        _, _, deg = oracles.degree_filter(g, 0)
        theta = int(rng.integers(-1, max(deg) + 2))
        dense, sparse, deg = oracles.degree_filter(g, theta)
        sp = split_by_degree(g, theta)
        d_ids, s_ids = sp.dense_ids.tolist(), sp.sparse_ids.tolist()
        src, dst = (a.tolist() for a in g.edges())
        pairs = list(zip(src, dst))

        def lifted(sub, ids):
            a, b = sub.edges()
            return Counter((ids[x], ids[y]) for x, y in zip(a.tolist(), b.tolist()))

        ok = (
            set(d_ids) == dense and set(s_ids) == sparse
            and len(d_ids) + len(s_ids) == n and not set(d_ids) & set(s_ids)
            and all(deg[v] > theta for v in d_ids) and all(deg[v] <= theta for v in s_ids)
            and lifted(sp.dense_subgraph, d_ids) == Counter(p for p in pairs if p[0] in dense and p[1] in dense)
            and lifted(sp.sparse_subgraph, s_ids) == Counter(p for p in pairs if p[0] in sparse and p[1] in sparse)
            and sp.cross_edges == sum((u in dense) != (v in dense) for u, v in pairs)
            and all(sp.dense_local[v] == i for i, v in enumerate(d_ids))
            and all(sp.sparse_local[v] == i for i, v in enumerate(s_ids))
        )
        violations += not ok
    verdict(7, violations == 0, f"200 (graph, theta) pairs, {violations} violations")


# -- 8 ------------------------------------------------------------------------

def test_criterion_08_sweep_shape():
    g = preferential_attachment(5000, 5, seed=1)
    t0 = time.perf_counter()
    sw = sweep_threshold(g, list(range(5, 101, 5)), 15)
    elapsed = time.perf_counter() - t0
    sp = [e.sparse_edges for e in sw.estimates]
    rs = [e.resampled_edges for e in sw.estimates]
    tot = [e.total for e in sw.estimates]
    best = int(np.argmin(tot))
    ok = (
        all(a <= b for a, b in zip(sp, sp[1:]))
        and all(a >= b for a, b in zip(rs, rs[1:]))
        and 0 < best < len(tot) - 1
        and tot[best] < min(tot[0], tot[-1])
        and tot.count(tot[best]) == 1
        and elapsed < 10
    )
    verdict(8, ok, f"argmin theta={sw.estimates[best].theta} total={tot[best]} "
                   f"(ends {tot[0]}, {tot[-1]}; {elapsed:.2f}s)")


# -- 9 ------------------------------------------------------------------------

def test_criterion_09_latency_and_reconciliation(runs):
    s = TieredStore(3, latency=LatencyModel(scale=1.0))
    singles = [s.charge(op, "sample", [0]) for op in OPS]
    consts = singles == [5.0011, 1.0045, 0.0146] and [e.time for e in s.get_log()] == singles

    _, done = runs
    extra = RunConfig(strategy="OTF_PR_PF", fanouts="4,4", graph="er:300:0.03:1", batches=20,
                      batch_size=16, seed=3, period=4, fetch_period=3, write_back=True)
    rep = run_bench(extra, latency=LatencyModel(scale=1.0))
    log = rep.store.get_log()
    small_ok = (
        oracles.fold(e.time for e in log) == rep.store.clock == rep.summary["totals"]["sim_time"]
        and sum(r["disk_writes"] for r in rep.rows) == sum(e.op == "disk_write" for e in log)
        and sum(r["cache_misses"] for r in rep.rows)
        == sum(e.op == "disk_read" and e.tag == "miss" for e in log)
    )
    bad = [k for k, v in done.items() if not v["reconciled"]]
    verdict(9, consts and small_ok and not bad,
            f"constants={consts}; {len(done) + 1} bench runs reconciled, mismatches={bad}")


# -- 10 -----------------------------------------------------------------------

def test_criterion_10_compression_ratios():
    cases = [((1_166_243, 552_228), 52.65), ((123_718_280, 20_449_813), 83.47),
             ((5_416_271, 556_904), 89.72)]
    got = [compression_ratio(*args) for args, _ in cases]
    ok = all(abs(g - want) <= 0.01 for g, (_, want) in zip(got, cases))
    verdict(10, ok, ", ".join(f"{g:.4f}" for g in got))


# -- 11 -----------------------------------------------------------------------

class _RecordingShared(SharedCache):
    """Keeps every generation ever published."""

    def __init__(self, cache, rho):
        self.published = {}
        super().__init__(cache, rho)

    @property
    def _current(self):
        return self.__dict__["_cur"]

    @_current.setter
    def _current(self, cache):
        self.published[cache.generation] = cache
        self.__dict__["_cur"] = cache


def _shared_run(g, kind, layout, consumers, batches=100):
    fanouts = [5, 5, 5]
    strat = SamplerStrategy.from_config(kind, {"period": 10, "refresh_rate": 0.15})
    store = TieredStore(g.node_count)
    shared = _RecordingShared(build_cache(g, strat, fanouts, 7, store, unified=layout == "unified"),
                              strat.params.get("shared_rho", 1.0))
    samplers = [Sampler(g, strat, fanouts, seed=7, consumer=i, store=store, shared=shared)
                for i in range(consumers)]
    jobs = itertools.count()
    lock = threading.Lock()
    out, errors = [], []

    def worker(s):
        try:
            while True:
                with lock:
                    b = next(jobs)
                if b >= batches:
                    return
                sb = s.sample(batch_seeds(g.node_count, 64, 7, b))
                with lock:
                    out.append(sb)
        except BaseException as exc:
            errors.append(exc)

    threads = [threading.Thread(target=worker, args=(s,)) for s in samplers]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    if errors:
        raise errors[0]
    log = store.log_arrays()
    refresh_reads = int(((log["op"] == 0) & (log["tag"] == 1)).sum())
    return shared, out, refresh_reads


def _torn(shared, results):
    bad = 0
    for gen, cache in shared.published.items():
        bad += any(lay.generation != gen for lay in cache.layers)
    for sb in results:
        cache = shared.published.get(sb.generation)
        if cache is None:
            bad += 1
            continue
        for blk in sb.blocks:
            lay = cache.layers[cache.layer_index(blk.layer - 1)]
            for s, d in zip(blk.edge_src.tolist(), blk.edge_dst.tolist()):
                if s not in lay.row(d):
                    bad += 1
                    break
    return bad


def test_criterion_11_shared_consistency():
    g = erdos_renyi(2000, 0.01, seed=7)
    details = []
    ok = True
    for kind, layout in [("OTF_SC", "unified"), ("OTF_SC", "per_layer"), ("FCR_SC", "per_layer")]:
        shared8, res8, reads8 = _shared_run(g, kind, layout, 8)
        shared1, res1, reads1 = _shared_run(g, kind, layout, 1)
        torn = _torn(shared8, res8) + _torn(shared1, res1)
        good = (torn == 0 and len(res8) == 100 and reads8 == reads1 > 0
                and shared8.refreshes == shared1.refreshes == 10)
        ok &= good
        details.append(f"{kind}/{layout}: torn={torn} refresh reads {reads8} vs {reads1}")
    verdict(11, ok, "; ".join(details))


# -- 12 -----------------------------------------------------------------------

def test_criterion_12_cli_determinism(tmp_path, capsys):
    d = tmp_path / "run"

    def invoke():
        # identical invocations: same paths, fresh directory each time
        if d.exists():
            shutil.rmtree(d)
        d.mkdir()
        produced = {}
        small = ["--graph", "er:400:0.02:3", "--batches", "15", "--batch-size", "16", "--seed", "5"]
        calls = {
            "gen_er": ["gen", "er", "300", "0.02", "--seed", "4", "--out", d / "er.txt"],
            "gen_ba": ["gen", "ba", "300", "3", "--seed", "4", "--out", d / "ba.txt"],
            "fbl": ["bench", "--strategy", "FBL", *small, "--out", d / "fbl.csv", "--log", d / "fbl_log.csv"],
            "otf": ["bench", "--strategy", "OTF_PR_PF", "--fanouts", "4,4", *small,
                    "--baseline", d / "fbl.json", "--out", d / "otf.csv"],
            "sc": ["bench", "--strategy", "OTF_SC", "--consumers", "4", *small, "--out", d / "sc.csv"],
            "dual": ["bench", "--strategy", "FCR", "--threshold", "8", *small, "--json", d / "dual.json"],
            "file": ["bench", "--strategy", "OTF_FETCH_ONLY", "--graph", d / "ba.txt", "--batches", "10",
                     "--out", d / "file.csv"],
            "sweep": ["sweep", "--graph", d / "ba.txt", "--thetas", "2:40:2", "--out", d / "sweep.csv"],
            "cost": ["costmodel", "100", "40", "0.25", "1", "10"],
            "split": ["split", "--graph", d / "er.txt", "--theta", "6"],
        }
        for name, argv in calls.items():
            code = main([str(a) for a in argv])
            produced[name + ":exit"] = code
            produced[name + ":stdout"] = capsys.readouterr().out
        for p in sorted(d.iterdir()):
            produced[p.name] = p.read_bytes()
        return produced

    a, b = invoke(), invoke()
    files = [k for k in a if "." in k and ":" not in k]
    csv_json = [k for k in files if k.endswith((".csv", ".json"))]
    exits_ok = all(v == 0 for k, v in a.items() if k.endswith(":exit"))
    same = a == b
    parsed = all(json.loads(a[k]) for k in files if k.endswith(".json"))
    verdict(12, same and exits_ok and parsed and len(csv_json) >= 8,
            f"{len(files)} files ({len(csv_json)} CSV/JSON) and stdout byte-identical={same}")
