"""Command-line entry point: ``rankptron {run,sweep,compare,gen-data,inspect}``."""

import argparse
import dataclasses
import sys
import typing
from pathlib import Path

import numpy as np

from . import __version__
from .datasets import (
    RandomStream,
    RandomStreamConfig,
    SeparableStream,
    dump_svmlight_ranking,
    load_svmlight_ranking,
)
from .harness import (
    ExperimentConfig,
    audit_report,
    compare_runs,
    load_model,
    read_trace_csv,
    run_experiment,
    sweep_eta,
)


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes"):
        return True
    if low in ("0", "false", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected true/false, got {text!r}")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value file; flags given here override it")
    types = typing.get_type_hints(ExperimentConfig)
    for f in dataclasses.fields(ExperimentConfig):
        typ = types[f.name]
        p.add_argument("--" + f.name.replace("_", "-"), dest=f.name, default=argparse.SUPPRESS,
                       type=_bool if typ is bool else typ, metavar=typ.__name__.upper(),
                       help=f"(default: {f.default!r})")


def _config(args) -> ExperimentConfig:
    values = {}
    if args.config:
        values.update(ExperimentConfig.from_file(args.config).to_dict())
    names = {f.name for f in dataclasses.fields(ExperimentConfig)}
    values.update({k: v for k, v in vars(args).items() if k in names})
    return ExperimentConfig.from_dict(values)


def cmd_run(args) -> int:
    result = run_experiment(_config(args))
    tr = result.trace
    print(f"rounds={len(tr)} avg_ndcg@{tr.report_k}={tr.avg_ndcg[-1]:.6f} "
          f"avg_ap={tr.avg_ap[-1]:.6f} cumulative_rml={tr.cumulative_rml[-1]:.6f} "
          f"updates={int(tr.updated.sum())}" if len(tr) else "rounds=0")
    sys.stdout.write(audit_report(result))
    if args.strict and not result.passed:
        print("error: bound audit failed", file=sys.stderr)
        return 3
    return 0


def cmd_sweep(args) -> int:
    etas = [float(x) for x in args.etas.split(",") if x.strip()]
    res = sweep_eta(_config(args), etas, metric=args.metric,
                    window=args.window or None, workers=args.workers)
    text = res.table()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    print(f"best eta = {res.best.eta!r}")
    return 0


def cmd_compare(args) -> int:
    tables = []
    for item in args.traces:
        name, sep, path = item.partition("=")
        tables.append(read_trace_csv(path, name) if sep else read_trace_csv(item))
    text = compare_runs(tables, args.out or None)
    if not args.out:
        sys.stdout.write(text)
    return 0


def cmd_gen_data(args) -> int:
    cfg = _config(args)
    if args.kind == "separable":
        source = SeparableStream(cfg.stream_config())
    else:
        source = RandomStream(RandomStreamConfig(cfg.m, cfg.d, cfg.grades, cfg.seed))
    it = iter(source)
    dump_svmlight_ranking([next(it) for _ in range(args.queries)], args.out)
    print(f"wrote {args.queries} queries to {args.out}")
    return 0


def cmd_inspect(args) -> int:
    path = Path(args.path)
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
    if first.startswith("rankmodel"):
        w = load_model(path).w
        print(f"model d={w.shape[0]} norm={np.linalg.norm(w):.12g}")
    elif first.startswith("iteration,"):
        tb = read_trace_csv(path)
        key, ndcg = tb.column("avg_ndcg")
        _, ap = tb.column("avg_ap")
        print(f"trace rounds={len(ndcg)} final {key}={ndcg[-1]:.12g} final avg_ap={ap[-1]:.12g}")
    else:
        data = load_svmlight_ranking(path)
        st = data.stats
        hist = " ".join(f"{g}:{c}" for g, c in sorted(st.grade_histogram.items()))
        print(f"queries={len(data.instances)} d={data.n_features} max_m={st.max_m} "
              f"r_x={st.r_x:.12g} grades {hist}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rankptron", description="Online perceptron ranking experiments.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one experiment")
    _add_config_flags(p)
    p.add_argument("--strict", action="store_true", help="exit 3 when a bound audit fails")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run one experiment per learning rate")
    _add_config_flags(p)
    p.add_argument("--etas", required=True, help="comma-separated learning rates")
    p.add_argument("--metric", choices=("ndcg", "ap"), default="ndcg")
    p.add_argument("--window", type=int, default=10,
                   help="select by mean of the last WINDOW rounds; 0 = final time average")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="write the summary table here")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="merge trace CSVs into one wide CSV")
    p.add_argument("traces", nargs="+", help="trace CSV paths, optionally NAME=PATH")
    p.add_argument("--out", help="output CSV (stdout if omitted)")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("gen-data", help="write a synthetic stream as an SVMlight ranking file")
    _add_config_flags(p)
    p.add_argument("--kind", choices=("separable", "random"), default="separable")
    p.add_argument("--queries", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("inspect", help="summarize a ranking file, trace CSV or model file")
    p.add_argument("path")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
