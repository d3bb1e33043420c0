"""Command line entry point: ``fimnet <command> [options]``.

Commands read a flat ``key = value`` config file (``--config``); command
line flags override it.  Every command is deterministic given its inputs
and the global seed.

Exit codes: 0 success, 1 validation error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from .cascade import (
    CascadeFormatError,
    cascades_load,
    cascades_save,
    simulate_cascades,
    split_cascades,
)
from .fim import local_error
from .graph import GraphFormatError, KroneckerSpec, graph_load, graph_save, kronecker_generate
from .influence import (
    InfluenceQuery,
    estimate_influence,
    ground_truth_spread,
    ie_mae,
    time_window_bound,
)
from .train import (
    TrainConfig,
    eval_bce,
    f1_score,
    infer_edges,
    loss_history_save,
    model_load,
    model_save,
    train,
)

log = logging.getLogger("fimnet")

EXIT_OK, EXIT_VALIDATION, EXIT_IO = 0, 1, 2

DEFAULTS = {
    "seed": "0",
    "kron_seed": "0.9,0.5,0.5,0.3",
    "kron_power": "7",
    "target_edges": "512",
    "rate_low": "0.0",
    "rate_high": "0.1",
    "n_cascades": "2000",
    "horizon": "10",
    "eps": "1.0",
    "batch_size": "16",
    "learning_rate": "0.005",
    "optimizer": "adam",
    "momentum": "0.0",
    "storage": "auto",
    "threshold": "0.01",
    "split": "0.8,0.1,0.1",
    "eta": "0.1",
    "delta": "0.05",
    "use_threshold": "true",
    "estimate_on": "graph",
    "gt_resamples": "1000",
    "sweep_thresholds": "0,0.001,0.005,0.01,0.02,0.05,0.1,0.2",
}


class ConfigError(ValueError):
    pass


def read_config(path):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    cfg = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep or not key.strip():
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            cfg[key.strip()] = value.strip()
    return cfg


class Settings:
    """Config values layered as defaults < file < command line."""

    def __init__(self, args):
        self.values = dict(DEFAULTS)
        if args.config:
            self.values.update(read_config(args.config))
        for kv in args.set or ():
            key, sep, value = kv.partition("=")
            if not sep:
                raise ConfigError(f"--set expects key=value, got {kv!r}")
            self.values[key.strip()] = value.strip()
        if args.seed is not None:
            self.values["seed"] = str(args.seed)
        self.out = Path(args.out or self.values.get("out", "."))
        self.workers = max(1, int(args.workers or self.values.get("workers", 1)))

    def get(self, key, cast=str, default=None):
        raw = self.values.get(key)
        if raw is None or raw == "":
            return default
        try:
            if cast is bool:
                if raw.lower() in ("1", "true", "yes", "on"):
                    return True
                if raw.lower() in ("0", "false", "no", "off"):
                    return False
                raise ValueError(raw)
            return cast(raw)
        except ValueError:
            raise ConfigError(f"config key {key!r}: cannot parse {raw!r}")

    def floats(self, key):
        raw = self.get(key)
        try:
            return [float(x) for x in raw.split(",") if x.strip()]
        except (ValueError, AttributeError):
            raise ConfigError(f"config key {key!r}: expected comma-separated numbers")

    def path(self, key, default_name=None):
        raw = self.get(key)
        if raw:
            return Path(raw)
        return self.out / default_name if default_name else None

    @property
    def seed(self):
        return self.get("seed", int, 0)


def _fmt(x):
    return repr(float(x))


def _write_text(path, lines):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")


def _train_config(s, horizon):
    passes = s.get("passes", int)
    return TrainConfig(
        eps=s.get("eps", float),
        horizon=horizon,
        batch_size=s.get("batch_size", int),
        learning_rate=s.get("learning_rate", float),
        passes=passes,
        init_sigma=s.get("init_sigma", float),
        rng_seed=s.seed,
        threshold=s.get("threshold", float),
        momentum=s.get("momentum", float),
        optimizer=s.get("optimizer"),
        storage=s.get("storage"),
    )


def cmd_generate(s, args):
    seed = s.floats("kron_seed")
    if len(seed) != 4:
        raise ConfigError("kron_seed needs four comma-separated entries")
    spec = KroneckerSpec(
        seed=((seed[0], seed[1]), (seed[2], seed[3])),
        power=s.get("kron_power", int),
        target_edges=s.get("target_edges", int),
        rate_low=s.get("rate_low", float),
        rate_high=s.get("rate_high", float),
    )
    graph = kronecker_generate(spec, s.seed)
    graph_path = s.path("graph", "graph.txt")
    graph_path.parent.mkdir(parents=True, exist_ok=True)
    graph_save(graph, graph_path)
    log.info("wrote %s (n=%d, m=%d)", graph_path, graph.n, graph.m)
    count = s.get("n_cascades", int)
    if count < 0:
        raise ConfigError("n_cascades must be >= 0")
    if count == 0:
        return
    sources = np.flatnonzero(graph.out_degree() > 0)
    if sources.size == 0:
        sources = np.arange(graph.n)
    rng = np.random.default_rng(s.seed)
    picks = rng.choice(sources, size=count)
    horizon = s.get("horizon", float)
    cascades = simulate_cascades(
        graph, [[int(p)] for p in picks], horizon, rng_seed=s.seed, workers=s.workers
    )
    casc_path = s.path("cascades", "cascades.txt")
    cascades_save(cascades, casc_path, n=graph.n, horizon=horizon)
    log.info("wrote %s (%d cascades)", casc_path, count)


def _load_cascades(s):
    path = s.path("cascades", "cascades.txt")
    return cascades_load(path)


def cmd_train(s, args):
    cascades = _load_cascades(s)
    fractions = s.floats("split")
    train_set, val_set, test_set = split_cascades(cascades, fractions, rng_seed=s.seed)
    config = _train_config(s, cascades[0].horizon)
    model = train(train_set, config)
    model_path = s.path("model", "model.txt")
    model_path.parent.mkdir(parents=True, exist_ok=True)
    model_save(model, model_path)
    loss_history_save(model.loss_history, s.out / "loss.csv")
    report = [
        f"train_cascades={len(train_set)}",
        f"val_cascades={len(val_set)}",
        f"test_cascades={len(test_set)}",
        f"train_bce={_fmt(eval_bce(model, train_set, config.eps))}",
        f"val_bce={_fmt(eval_bce(model, val_set, config.eps))}",
        f"test_bce={_fmt(eval_bce(model, test_set, config.eps))}",
    ]
    _write_text(s.out / "report.txt", report)
    print("\n".join(report))


def cmd_infer(s, args):
    model = model_load(s.path("model", "model.txt"))
    threshold = s.get("threshold", float)
    edges = sorted(infer_edges(model, threshold))
    A = model.params
    lines = [f"n {model.n}"] + [f"{u} {v} {_fmt(A[u, v])}" for u, v in edges]
    _write_text(s.out / "edges.txt", lines)
    truth_path = s.path("truth")
    if truth_path is None:
        print(f"edges={len(edges)}")
        return
    truth = graph_load(truth_path).edge_set()
    p, r, f = f1_score(edges, truth)
    metrics = [f"threshold={_fmt(threshold)}", f"edges={len(edges)}",
               f"precision={_fmt(p)}", f"recall={_fmt(r)}", f"f1={_fmt(f)}"]
    _write_text(s.out / "metrics.txt", metrics)
    print("\n".join(metrics))
    if args.sweep:
        with open(s.out / "sweep.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["threshold", "precision", "recall", "f1"])
            for th in s.floats("sweep_thresholds"):
                p, r, f = f1_score(infer_edges(model, th), truth)
                w.writerow([_fmt(th), _fmt(p), _fmt(r), _fmt(f)])


def parse_queries(path, n):
    """Read ``S=<ids> T=<real> eta=<real> delta=<real>`` lines."""
    queries = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            fields = {}
            for part in line.split():
                k, sep, v = part.partition("=")
                if not sep:
                    raise ConfigError(f"{path}:{lineno}: malformed field {part!r}")
                fields[k] = v
            try:
                seeds = [int(x) for x in fields["S"].split(",") if x]
                q = InfluenceQuery(
                    seeds=seeds,
                    horizon=float(fields["T"]),
                    eta=float(fields.get("eta", DEFAULTS["eta"])),
                    delta=float(fields.get("delta", DEFAULTS["delta"])),
                )
            except KeyError as e:
                raise ConfigError(f"{path}:{lineno}: missing field {e.args[0]}")
            except ValueError as e:
                raise ConfigError(f"{path}:{lineno}: {e}")
            bad = [u for u in q.seeds if not 0 <= u < n]
            if bad:
                raise ConfigError(f"{path}:{lineno}: unknown node(s) {bad}")
            queries.append(q)
    return queries


def _estimation_graph(s):
    if s.get("estimate_on") == "model":
        model = model_load(s.path("model", "model.txt"))
        threshold = s.get("threshold", float) if s.get("use_threshold", bool) else 0.0
        return model.to_graph(threshold)
    return graph_load(s.path("graph", "graph.txt"))


def cmd_estimate(s, args):
    graph = _estimation_graph(s)
    queries = parse_queries(s.path("queries", "queries.txt"), graph.n)
    gt_path = s.path("gt_cascades")
    gt = cascades_load(gt_path) if gt_path else None
    rows, errors = [], []
    for i, q in enumerate(queries):
        q = InfluenceQuery(q.seeds, q.horizon, q.eta, q.delta, rng_seed=s.seed + i)
        est = estimate_influence(graph, q, workers=s.workers)
        row = [i, est.theta, _fmt(est.mean_spread)]
        if gt is not None:
            truth = ground_truth_spread(
                gt, q.seeds, resamples=s.get("gt_resamples", int), rng_seed=s.seed + i
            ).mean_spread
            errors.append((est.mean_spread, truth))
            row += [_fmt(truth), _fmt(abs(est.mean_spread - truth))]
        rows.append(row)
    header = ["query_index", "theta", "mean_spread"]
    if gt is not None:
        header += ["ground_truth", "abs_error"]
    s.out.mkdir(parents=True, exist_ok=True)
    with open(s.out / "spread.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    if errors:
        mae = ie_mae(*zip(*errors))
        print(f"ie_mae={_fmt(mae)}")
    print(f"queries={len(rows)}")


def cmd_errorbound(s, args):
    lines = []
    if args.gamma is not None:
        if args.eps is None:
            raise ConfigError("--gamma needs --eps")
        gammas = [float(g) for g in args.gamma.split(",")]
        xi = local_error(np.asarray(gammas), args.eps)
        for g, x in zip(gammas, xi):
            lines.append(f"eps={_fmt(args.eps)} gamma={_fmt(g)} local_error={_fmt(x)}")
    if args.eps_err is not None:
        if args.c is None or args.t_star is None:
            raise ConfigError("--eps-err needs --c and --t-star")
        lo, hi = time_window_bound(args.eps_err, args.c, args.t_star)
        lines.append(
            f"eps_err={_fmt(args.eps_err)} c={_fmt(args.c)} t_star={_fmt(args.t_star)} "
            f"lower={_fmt(lo)} upper={_fmt(hi)}"
        )
    if not lines:
        raise ConfigError("errorbound needs --eps/--gamma or --eps-err/--c/--t-star")
    print("\n".join(lines))


def cmd_eval(s, args):
    model = model_load(s.path("model", "model.txt"))
    cascades = _load_cascades(s)
    eps = s.get("eps", float)
    lines = [f"cascades={len(cascades)}", f"eps={_fmt(eps)}",
             f"bce={_fmt(eval_bce(model, cascades, eps))}"]
    truth_path = s.path("truth")
    if truth_path is not None:
        threshold = s.get("threshold", float)
        p, r, f = f1_score(infer_edges(model, threshold), graph_load(truth_path).edge_set())
        lines += [f"precision={_fmt(p)}", f"recall={_fmt(r)}", f"f1={_fmt(f)}"]
    _write_text(s.out / "eval.txt", lines)
    print("\n".join(lines))


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "infer": cmd_infer,
    "estimate": cmd_estimate,
    "errorbound": cmd_errorbound,
    "eval": cmd_eval,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file")
    common.add_argument("--seed", type=int, help="global random seed")
    common.add_argument("--workers", type=int, help="maximum worker processes")
    common.add_argument("--out", help="output directory")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="fimnet", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="Kronecker graph and cascades")
    sub.add_parser("train", parents=[common], help="learn rates from cascades")
    p = sub.add_parser("infer", parents=[common], help="threshold a model into edges")
    p.add_argument("--sweep", action="store_true", help="write sweep.csv of F1 per threshold")
    sub.add_parser("estimate", parents=[common], help="influence of seed sets")
    p = sub.add_parser("errorbound", parents=[common], help="evaluate the error formulas")
    p.add_argument("--eps", type=float)
    p.add_argument("--gamma", help="comma-separated rates")
    p.add_argument("--eps-err", type=float)
    p.add_argument("--c", type=float)
    p.add_argument("--t-star", type=float)
    sub.add_parser("eval", parents=[common], help="held-out loss and edge metrics")
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse uses 2 for usage errors; keep 2 for I/O failures
        return EXIT_OK if e.code in (0, None) else EXIT_VALIDATION
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(message)s",
    )
    try:
        settings = Settings(args)
        COMMANDS[args.command](settings, args)
    except (GraphFormatError, CascadeFormatError, ConfigError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, OverflowError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
