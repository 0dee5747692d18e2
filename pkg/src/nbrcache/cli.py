"""Command-line entry point.

Exit codes: 0 success, 2 usage error or unknown strategy, 3 unreadable or
malformed graph data, 4 internal invariant violation, 5 configuration
mismatch (e.g. a cache built for other fanouts).
"""

from __future__ import annotations

import argparse
import json
import sys

from . import costmodel
from .bench import (
    InvariantError,
    RunConfig,
    load_graph,
    load_summary,
    read_config_file,
    run_bench,
)
from .cache import CacheConfigError
from .graph import EdgeListError, GraphConfigError, GraphError, split_by_degree, write_edge_list
from .persist import DumpFormatError
from .samplers import FanoutMismatchError, SamplerConfigError, UnknownStrategyError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_INVARIANT = 4
EXIT_CONFIG = 5


class UsageError(Exception):
    pass


RUN_KEYS = (
    "strategy", "fanouts", "amp_rate", "refresh_rate", "fetch_rate", "period",
    "fetch_period", "shared_rho", "threshold", "seed", "write_back", "graph", "batches",
    "batch_size", "consumers", "dim", "shared_layout", "cache_in", "validate",
)


def _cmd_gen(args) -> int:
    model = args.model.lower()
    params = {"n": int(args.n)}
    if model in ("er", "erdos-renyi"):
        params["p"] = float(args.param)
    else:
        params["m"] = int(args.param)
    from .graph import generate_synthetic

    g = generate_synthetic(model, args.seed, **params)
    write_edge_list(args.out, g)
    print(f"wrote {args.out}: {g.node_count} nodes, {g.edge_count} directed edges")
    return EXIT_OK


def _cmd_bench(args) -> int:
    values = read_config_file(args.config) if args.config else {}
    for key in RUN_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            values[key] = val
    cfg = RunConfig.from_mapping(values)
    baseline = load_summary(args.baseline) if args.baseline else None
    report = run_bench(cfg, baseline=baseline)
    if args.out:
        report.write_csv(args.out)
        json_path = args.json or _json_path(args.out)
        report.write_json(json_path)
    elif args.json:
        report.write_json(args.json)
    if args.log:
        report.store.export_log_csv(args.log)
    s = report.summary
    t = s["totals"]
    print(f"{s['strategy']} fanouts={s['fanouts']} batches={s['batches']} "
          f"disk_reads={t['disk_reads']} cache_hits={t['cache_hits']} sim_time={t['sim_time']:.6f}")
    if "reductions" in s:
        red = s["reductions"]
        print(f"vs {s['baseline']}: sim_time {red['sim_time']:.2f}%  "
              f"disk_reads {red['disk_reads']:.2f}%  memory {red['memory_proxy']:.2f}%")
    return EXIT_OK


def _json_path(csv_path: str) -> str:
    return csv_path[:-4] + ".json" if csv_path.endswith(".csv") else csv_path + ".json"


def _thetas(text: str) -> list[int]:
    text = text.strip()
    if not text:
        raise UsageError("empty theta list")
    if ":" in text:
        parts = [int(x) for x in text.split(":")]
        if len(parts) != 3 or parts[2] <= 0:
            raise UsageError(f"range must be start:stop:step, got {text!r}")
        out = list(range(parts[0], parts[1] + 1, parts[2]))
    else:
        out = [int(x) for x in text.split(",") if x.strip()]
    if not out:
        raise UsageError("empty theta list")
    return out


def _cmd_sweep(args) -> int:
    thetas = _thetas(args.thetas)
    g = load_graph(args.graph, args.seed)
    sweep = costmodel.sweep_threshold(g, thetas, args.cap)
    if args.out:
        costmodel.write_sweep_csv(args.out, sweep)
    else:
        print("theta,sparse_edges,resampled_edges,total")
        for e in sweep.estimates:
            print(f"{e.theta},{e.sparse_edges},{e.resampled_edges},{e.total}")
    print(f"argmin theta={sweep.best.theta} total={sweep.best.total}")
    return EXIT_OK


def _cmd_costmodel(args) -> int:
    p = costmodel.CostParams(args.s_b, args.s_c, args.alpha, args.v_m, args.v_c)
    res = costmodel.evaluate(p)
    print(f"disk-memory: {res['t_disk_memory']}")
    print(f"disk-cache-memory: {res['t_disk_cache_memory']}")
    print(f"ratio: {res['ratio']}")
    print(json.dumps(res, sort_keys=True))
    return EXIT_OK


def _cmd_split(args) -> int:
    g = load_graph(args.graph, args.seed)
    sp = split_by_degree(g, args.theta)
    out = {
        "theta": sp.theta,
        "dense_nodes": int(sp.dense_nodes.size),
        "sparse_nodes": int(sp.sparse_nodes.size),
        "dense_edges": sp.dense_subgraph.edge_count,
        "sparse_edges": sp.sparse_subgraph.edge_count,
        "cross_edges": sp.cross_edges,
    }
    print(json.dumps(out, sort_keys=True))
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="nbrcache", description="Cache-aware neighbor sampling benchmarks.")
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    gen = sub.add_parser("gen", help="generate a synthetic edge list")
    gen.add_argument("model", choices=["er", "ba", "erdos-renyi", "preferential-attachment"])
    gen.add_argument("n", type=int)
    gen.add_argument("param", help="edge probability (er) or edges per new node (ba)")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", "-o", required=True)
    gen.set_defaults(func=_cmd_gen)

    b = sub.add_parser("bench", help="run a sampling strategy and report simulated I/O")
    b.add_argument("--config", help="key=value file; flags override it")
    b.add_argument("--strategy")
    b.add_argument("--fanouts")
    b.add_argument("--amp-rate", dest="amp_rate", type=float)
    b.add_argument("--refresh-rate", dest="refresh_rate", type=float)
    b.add_argument("--fetch-rate", dest="fetch_rate", type=float)
    b.add_argument("--period", type=int)
    b.add_argument("--fetch-period", dest="fetch_period", type=int)
    b.add_argument("--shared-rho", dest="shared_rho", type=float)
    b.add_argument("--threshold", type=int)
    b.add_argument("--seed", type=int)
    b.add_argument("--write-back", dest="write_back", action="store_const", const=True)
    b.add_argument("--graph", help="edge-list path, er:n:p[:seed] or ba:n:m[:seed]")
    b.add_argument("--batches", type=int)
    b.add_argument("--batch-size", dest="batch_size", type=int)
    b.add_argument("--consumers", type=int)
    b.add_argument("--dim", type=int)
    b.add_argument("--shared-layout", dest="shared_layout", choices=["unified", "per_layer"])
    b.add_argument("--cache-in", dest="cache_in", help="start from a saved cache dump")
    b.add_argument("--validate", action="store_const", const=True,
                   help="check every block against the graph")
    b.add_argument("--out", "-o", help="per-batch CSV; the JSON summary goes next to it")
    b.add_argument("--json", help="JSON summary path")
    b.add_argument("--baseline", help="JSON summary of a run to compare against")
    b.add_argument("--log", help="export the raw I/O log as CSV")
    b.set_defaults(func=_cmd_bench)

    s = sub.add_parser("sweep", help="storage estimate over degree thresholds")
    s.add_argument("--graph", required=True)
    s.add_argument("--thetas", required=True, help="comma list or start:stop:step")
    s.add_argument("--cap", type=int, default=15)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", "-o")
    s.set_defaults(func=_cmd_sweep)

    c = sub.add_parser("costmodel", help="batch-time models")
    c.add_argument("s_b", type=float, help="batch size")
    c.add_argument("s_c", type=float, help="cached portion")
    c.add_argument("alpha", type=float, help="cache refresh rate")
    c.add_argument("v_m", type=float, help="memory speed")
    c.add_argument("v_c", type=float, help="cache speed")
    c.set_defaults(func=_cmd_costmodel)

    sp = sub.add_parser("split", help="dense/sparse split statistics")
    sp.add_argument("--graph", required=True)
    sp.add_argument("--theta", type=int, required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=_cmd_split)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except UnknownStrategyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FanoutMismatchError, CacheConfigError, GraphConfigError, DumpFormatError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantError as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (EdgeListError, GraphError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (SamplerConfigError, ValueError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
