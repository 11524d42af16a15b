"""Command-line entry point: ``linkexclude <command> [flags]``.

Exit codes: 0 ok, 2 usage or input error, 3 leak found and fixed,
4 leak detected with ``audit --check-only``.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .audit import LEAKED_AND_FIXED, leakage_check
from .config import ConfigError, RunConfig, format_value, parse_bool, write_manifest
from .estimator import LinkPredictor, resolve_policy
from .gnn import load_checkpoint, save_checkpoint
from .graph import GraphFormatError, load_edge_list, load_features, save_edge_list, save_features
from .metrics import LeakageError, evaluate, format_report, stratified_eval
from .sampling import load_split, save_split
from .synthetic import KINDS, make_synthetic
from .theory import degree_change_profile, delta_sweep, sweep_csv, verify_theorem

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_USAGE, EXIT_FIXED, EXIT_LEAK = 0, 2, 3, 4
DEFAULT_BUCKETS = "min_eq:1,min_lt:5"


class UsageError(Exception):
    pass


def _manifest_path(out: Path) -> Path:
    return out / "manifest.txt" if out.is_dir() else out.with_name(out.name + ".manifest")


def _features_for(graph_path: str, features_path: str | None) -> np.ndarray:
    """Explicit features file, else ``features.txt`` beside the graph."""
    path = Path(features_path) if features_path else Path(graph_path).with_name("features.txt")
    if not path.exists():
        raise UsageError(f"feature file not found: {path}")
    return load_features(path)


def _load_inputs(graph_path: str, splits_path: str, features_path: str | None = None, need_features=True):
    if not graph_path:
        raise UsageError("--graph is required")
    if not splits_path:
        raise UsageError("--splits is required")
    if not Path(graph_path).exists():
        raise UsageError(f"graph file not found: {graph_path}")
    if not Path(splits_path).is_dir():
        raise UsageError(f"splits directory not found: {splits_path}")
    g = load_edge_list(graph_path)
    split = load_split(splits_path)
    if need_features:
        X = _features_for(graph_path, features_path)
        g = g.with_features(X)
    return g, split


def _config_from_args(args, require_graph: bool = True) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {k: v for k, v in vars(args).items() if k in RunConfig.__dataclass_fields__}
    cfg = cfg.updated(overrides)
    return cfg.validate(require_graph)


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


# -- commands -----------------------------------------------------------------


def cmd_train(args) -> int:
    cfg = _config_from_args(args)
    g, split = _load_inputs(cfg.graph, cfg.splits, cfg.features)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    _write(out / "config.txt", cfg.to_text())

    model = LinkPredictor(**cfg.model_params()).fit(g, split)
    save_checkpoint(out / "best.ckpt", model.params_)
    save_checkpoint(out / "last.ckpt", model.last_params_)

    keys = sorted({k for rec in model.history_ for k in rec})
    keys.remove("epoch")
    lines = [",".join(["epoch"] + keys)]
    for rec in model.history_:
        lines.append(",".join([str(rec["epoch"])] + [f"{rec.get(k, math.nan):.6f}" for k in keys]))
    _write(out / "history.csv", "\n".join(lines) + "\n")

    g_test, report = leakage_check(g, split, cfg.keep_valid)
    result = model.evaluate(g_test, split, ks=cfg.ks, sanitize=False)
    buckets = stratified_eval(result, split.train_graph(g), DEFAULT_BUCKETS.split(","), cfg.ks)
    _write(out / "metrics.csv", format_report(result.metrics, len(result.ranks), buckets, result.leakage))

    policy = model.policy_
    write_manifest(
        out / "manifest.txt",
        "train",
        {
            **{f"config.{k}": v for k, v in vars(cfg).items()},
            "resolved.policy": str(policy),
            "resolved.delta": policy.delta if policy.kind == "lowdeg" else None,
            "resolved.rate": policy.rate if policy.kind == "random" else None,
            "best_epoch": model.best_epoch_,
            "audit.verdict": report.verdict,
        },
    )
    print(format_report(result.metrics, len(result.ranks), None, result.leakage), end="")
    return EXIT_OK


def cmd_audit(args) -> int:
    if not args.graph or not args.splits:
        raise UsageError("audit needs --graph and --splits")
    g, split = _load_inputs(args.graph, args.splits, need_features=False)
    g_infer, report = leakage_check(g, split, args.keep_valid)
    leaked = report.verdict == LEAKED_AND_FIXED
    print(report.to_text(), end="")
    if args.check_only:
        return EXIT_LEAK if leaked else EXIT_OK
    if not args.out:
        raise UsageError("audit needs --out unless --check-only is given")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_edge_list(out, g_infer.edges, g_infer.num_nodes)
    _write(out.with_name(out.name + ".report"), report.to_text())
    write_manifest(
        _manifest_path(out),
        "audit",
        {"graph": args.graph, "splits": args.splits, "keep_valid": args.keep_valid, "verdict": report.verdict},
    )
    return EXIT_FIXED if leaked else EXIT_OK


def cmd_eval(args) -> int:
    g, split = _load_inputs(args.graph, args.splits, args.features)
    params = load_checkpoint(args.checkpoint)
    ks = tuple(int(k) for k in args.ks.split(","))
    if args.allow_leakage:
        g_eval, verdict = g, "unchecked"
    else:
        g_eval, report = leakage_check(g, split, args.keep_valid)
        verdict = report.verdict
    result = evaluate(params, g_eval, split, args.mode, ks, allow_leakage=args.allow_leakage, seed=args.seed)
    buckets = stratified_eval(result, split.train_graph(g), [b for b in args.buckets.split(",") if b], ks)
    # an explicit opt-in always poisons the report, leaky or not
    flagged = result.leakage or args.allow_leakage
    text = format_report(result.metrics, len(result.ranks), buckets, flagged)
    print(text, end="")
    if args.out:
        out = Path(args.out)
        _write(out, text)
        write_manifest(
            _manifest_path(out),
            "eval",
            {
                "checkpoint": args.checkpoint,
                "graph": args.graph,
                "splits": args.splits,
                "mode": args.mode,
                "ks": ks,
                "keep_valid": args.keep_valid,
                "allow_leakage": args.allow_leakage,
                "audit.verdict": verdict,
                "seed": args.seed,
            },
        )
    return EXIT_OK


def cmd_degree_profile(args) -> int:
    g, split = _load_inputs(args.graph, args.splits, need_features=False)
    g_train = split.train_graph(g)
    policy = resolve_policy(args.policy, g_train, split, args.delta, args.rate)
    profile = degree_change_profile(g_train, split, policy, args.batch_size, args.hops, args.epochs, args.seed)
    out = Path(args.out)
    _write(out, profile.to_csv())
    write_manifest(
        _manifest_path(out),
        "degree-profile",
        {
            "graph": args.graph,
            "splits": args.splits,
            "policy": str(policy),
            "batch_size": args.batch_size,
            "hops": args.hops,
            "epochs": args.epochs,
            "seed": args.seed,
            "spearman": profile.spearman(),
        },
    )
    return EXIT_OK


def parse_degrees(text: str) -> list[int]:
    """``"2:20"`` (inclusive range) or ``"2,5,10"``."""
    if ":" in text:
        lo, hi = (int(x) for x in text.split(":", 1))
        return list(range(lo, hi + 1))
    return [int(x) for x in text.split(",") if x.strip()]


THEOREM_HEADER = "arch,layers,degree,trials,discarded,empirical,closed_form,stderr"


def cmd_verify_theorem(args) -> int:
    degrees = parse_degrees(args.degrees)
    layers = [int(x) for x in args.layers.split(",")]
    if not degrees or min(degrees) < 2:
        raise UsageError("--degrees must all be >= 2")
    if not layers or min(layers) < 1:
        raise UsageError("--layers must all be >= 1")
    rows = [THEOREM_HEADER]
    for m in verify_theorem(degrees, layers, args.trials, args.seed, args.arch):
        rows.append(
            f"{m.arch},{m.layers},{m.degree},{m.trials},{m.discarded},"
            f"{m.empirical:.6f},{m.closed_form:.6f},{m.stderr:.6f}"
        )
    text = "\n".join(rows) + "\n"
    print(text, end="")
    if args.out:
        out = Path(args.out)
        _write(out, text)
        write_manifest(
            _manifest_path(out),
            "verify-theorem",
            {"degrees": args.degrees, "layers": args.layers, "trials": args.trials, "seed": args.seed, "arch": args.arch},
        )
    return EXIT_OK


def parse_deltas(text: str, avg_degree: float) -> list[float]:
    """Comma list of numbers, ``inf``, ``avg`` or ``<c>avg`` (multiples of the average degree)."""
    out = []
    for tok in (t.strip().lower() for t in text.split(",")):
        if not tok:
            continue
        if tok.endswith("avg"):
            mult = tok[:-3].rstrip("*")
            out.append((float(mult) if mult else 1.0) * avg_degree)
        else:
            out.append(float(tok))
    return out


def cmd_sweep_delta(args) -> int:
    cfg = _config_from_args(args)
    g, split = _load_inputs(cfg.graph, cfg.splits, cfg.features)
    g_train = split.train_graph(g)
    avg = 2.0 * g_train.num_edges / g_train.num_nodes
    try:
        deltas = sorted(parse_deltas(args.deltas, avg))
        seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    rows = delta_sweep(g, split, cfg.model_params(), deltas, seeds, args.metric)
    out = Path(cfg.out)
    text = sweep_csv(rows, seeds)
    print(text, end="")
    _write(out, text)
    write_manifest(
        _manifest_path(out),
        "sweep-delta",
        {
            **{f"config.{k}": v for k, v in vars(cfg).items()},
            "deltas": args.deltas,
            "resolved.deltas": ",".join(format_value(d) for d in deltas),
            "seeds": args.seeds,
            "metric": args.metric,
        },
    )
    return EXIT_OK


def _parse_size_params(items) -> dict:
    size = {}
    for item in items or []:
        if "=" not in item:
            raise UsageError(f"--param expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        size[key.strip().replace("-", "_")] = float(value) if "." in value or "e" in value else int(value)
    return size


def cmd_gen_synthetic(args) -> int:
    size = _parse_size_params(args.param)
    if args.n is not None:
        size["n"] = args.n
    g, split = make_synthetic(args.kind, seed=args.seed, n_neg=args.n_neg, **size)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_edge_list(out / "graph.tsv", g.edges, g.num_nodes)
    save_features(out / "features.txt", g.features)
    save_split(out / "splits", split)
    write_manifest(
        out / "manifest.txt",
        "gen-synthetic",
        {"kind": args.kind, "seed": args.seed, "n_neg": args.n_neg, **{f"size.{k}": v for k, v in size.items()}},
    )
    print(f"nodes={g.num_nodes}\nedges={g.num_edges}\ntrain={len(split.train)}\nvalid={len(split.valid)}\ntest={len(split.test)}")
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def _bool_arg(text: str) -> bool:
    try:
        return parse_bool(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


RUN_FLAGS = [
    ("graph", str, "edge-list file holding every known edge"),
    ("splits", str, "split directory (train/valid/test.tsv plus negatives)"),
    ("features", str, "feature file (default: features.txt beside --graph)"),
    ("arch", str, "encoder: gcn or sage"),
    ("layers", int, "number of GNN layers"),
    ("hidden-dim", int, "hidden width"),
    ("out-dim", int, "embedding width"),
    ("policy", str, "target exclusion: none, all, random or lowdeg"),
    ("delta", float, "lowdeg threshold (default: rounded average train degree)"),
    ("rate", float, "random exclusion rate (default: matched to lowdeg)"),
    ("batch-size", int, "positive targets per mini-batch"),
    ("hops", int, "message-graph hops (default: --layers)"),
    ("negs-per-pos", int, "training negatives per positive"),
    ("epochs", int, "training epochs"),
    ("lr", float, "SGD learning rate"),
    ("momentum", float, "SGD momentum"),
    ("add-self-loops", _bool_arg, "add self-loops before aggregation"),
    ("seed", int, "random seed"),
    ("eval-mode", str, "fixed or exhaustive negatives"),
    ("ks", str, "comma-separated Hits@K cut-offs"),
    ("keep-valid", _bool_arg, "keep validation edges in the test-time graph"),
    ("out", str, "output path"),
]


def _run_parent(out_help: str) -> argparse.ArgumentParser:
    defaults = RunConfig()
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--config", help="key = value config file; flags override it (default: none)")
    for name, conv, text in RUN_FLAGS:
        dest = name.replace("-", "_")
        default = format_value(getattr(defaults, dest))
        help_text = out_help if name == "out" else text
        if "(default:" not in help_text:
            help_text = f"{help_text} (default: {default})"
        parent.add_argument(f"--{name}", dest=dest, type=conv, default=argparse.SUPPRESS, help=help_text)
    return parent


class _DefaultsFormatter(argparse.ArgumentDefaultsHelpFormatter):
    """Appends defaults unless the help already states one or the flag is required."""

    def _get_help_string(self, action):
        text = action.help or ""
        if "(default" in text or action.required:
            return text
        return super()._get_help_string(action)


def build_parser() -> argparse.ArgumentParser:
    fmt = _DefaultsFormatter
    parser = argparse.ArgumentParser(prog="linkexclude", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[_run_parent("run directory")], help="train and evaluate one model")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("audit", formatter_class=fmt, help="remove leaked test/valid edges from a graph")
    p.add_argument("--graph", required=True, help="edge-list file to audit")
    p.add_argument("--splits", required=True, help="split directory")
    p.add_argument("--keep-valid", type=_bool_arg, default=False, help="keep validation edges (true|false)")
    p.add_argument("--out", default=None, help="sanitized edge-list output")
    p.add_argument("--check-only", action="store_true", help="only report; exit 4 on leakage, write nothing")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("eval", formatter_class=fmt, help="evaluate a checkpoint on the test split")
    p.add_argument("--checkpoint", required=True, help="checkpoint file")
    p.add_argument("--graph", required=True, help="edge-list file")
    p.add_argument("--splits", required=True, help="split directory")
    p.add_argument("--features", default=None, help="feature file (default: features.txt beside --graph)")
    p.add_argument("--mode", choices=("fixed", "exhaustive"), default="fixed", help="negative protocol")
    p.add_argument("--ks", default="1,10,50", help="Hits@K cut-offs")
    p.add_argument("--keep-valid", type=_bool_arg, default=True, help="keep validation edges at test time")
    p.add_argument("--buckets", default=DEFAULT_BUCKETS, help="degree-bucket predicates")
    p.add_argument(
        "--allow-leakage", action="store_true", help="evaluate on --graph as given, even with test edges; flags the report"
    )
    p.add_argument("--seed", type=int, default=0, help="seed for exhaustive-pool subsampling")
    p.add_argument("--out", default=None, help="report CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("degree-profile", formatter_class=fmt, help="relative degree change per degree bucket")
    p.add_argument("--graph", required=True, help="edge-list file")
    p.add_argument("--splits", required=True, help="split directory")
    p.add_argument("--policy", choices=("none", "all", "random", "lowdeg"), default="all", help="exclusion policy")
    p.add_argument("--delta", type=float, default=None, help="lowdeg threshold")
    p.add_argument("--rate", type=float, default=None, help="random exclusion rate")
    p.add_argument("--batch-size", type=int, default=512, help="targets per batch")
    p.add_argument("--hops", type=int, default=1, help="message-graph hops")
    p.add_argument("--epochs", type=int, default=1, help="epochs to profile")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--out", default="profile.csv", help="CSV: degree_lo,degree_hi,mean_change,count")
    p.set_defaults(func=cmd_degree_profile)

    p = sub.add_parser("verify-theorem", formatter_class=fmt, help="influence drop vs degree, empirical and closed form")
    p.add_argument("--degrees", default="2:20", help="inclusive range lo:hi or comma list")
    p.add_argument("--layers", default="1,2", help="comma-separated layer counts")
    p.add_argument("--trials", type=int, default=200, help="random initialisations per cell")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--arch", choices=("gcn", "sage"), default="gcn", help="encoder")
    p.add_argument("--out", default=None, help=f"CSV: {THEOREM_HEADER}")
    p.set_defaults(func=cmd_verify_theorem)

    p = sub.add_parser(
        "sweep-delta", parents=[_run_parent("CSV: delta,mean,std,seed_<s>...")], help="train across lowdeg thresholds"
    )
    p.add_argument("--deltas", default="0,1,2,avg,2avg,inf", help="thresholds; avg is the average train degree (default: %(default)s)")
    p.add_argument("--seeds", default="0,1,2", help="comma-separated seeds (default: %(default)s)")
    p.add_argument("--metric", default="mrr", help="test metric to tabulate (default: %(default)s)")
    p.set_defaults(func=cmd_sweep_delta)

    p = sub.add_parser("gen-synthetic", formatter_class=fmt, help="write a seeded benchmark graph and split")
    p.add_argument("--kind", choices=KINDS + ("sparse-bipartite-ish",), required=True, help="generator")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--n", type=int, default=None, help="node count (default: per-kind)")
    p.add_argument("--n-neg", type=int, default=100, help="fixed negatives per valid/test positive")
    p.add_argument("--param", action="append", metavar="KEY=VALUE", help="extra generator size parameter")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_gen_synthetic)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return EXIT_USAGE
    except (UsageError, GraphFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except LeakageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_LEAK
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
