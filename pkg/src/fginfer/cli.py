"""Command-line entry point: ``fginfer {gen,infer,train,eval,permaudit,gradcheck,bounds}``."""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import generators as gen
from .bp import BpConfig, decode_map, map_bounds, run_bp
from .metrics import compute_metrics

log = logging.getLogger("fginfer")


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("FG_THREADS", "1")))
    except ValueError:
        raise CliError("FG_THREADS must be an integer") from None


def _pmap(fn, items):
    n = _workers()
    if n == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def _jsonable(x):
    if isinstance(x, float) and math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.generic):
        return _jsonable(x.item())
    return x


def _dump(doc, path) -> None:
    text = json.dumps(_jsonable(doc), indent=1, sort_keys=True) + "\n"
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _load(path):
    items = gen.ensure_labels(gen.load_dataset(path))
    if not items:
        raise CliError(f"no .uai files found in {path}")
    return items


# ---- models ------------------------------------------------------------------

def _fenbp_model(args, init="zero"):
    from .fenbp import FeNbpConfig, FeNbpModel

    cfg = FeNbpConfig(iterations=args.iters or 10, mode=args.mode, graph_norm=args.graph_norm,
                      init_damping=args.init_damping)
    model = FeNbpModel(cfg, init=init, seed=args.seed)
    if getattr(args, "ckpt", None) and init == "zero":
        model.load(args.ckpt)
    return model


def _fegnn_model(args, init="zero"):
    from .fegnn import FeGnnConfig, FeGnnModel

    cfg = FeGnnConfig(hidden_dim=args.hidden_dim, cardinality=args.cardinality, layers=args.iters or 10)
    model = FeGnnModel(cfg, init=init, seed=args.seed)
    if init == "zero":
        if not getattr(args, "ckpt", None):
            raise CliError("fegnn needs --ckpt")
        model.load(args.ckpt)
    return model


def _predict(algo, args, graphs, labels):
    """Marginal estimates (or None) and MAP estimates for every graph."""
    from .search import SearchConfig, beam_search, best_first_search

    if algo == "exact":
        return [list(l.marginals) for l in labels], [l.map_assignment for l in labels]
    if algo == "bp":
        cfg = BpConfig(mode=args.mode, damping=args.damping, max_iters=args.iters or 200)
        res = _pmap(lambda g: run_bp(g, cfg), graphs)
        return [r.beliefs.variable_beliefs for r in res], [decode_map(r.beliefs) for r in res]
    if algo == "fenbp":
        from .fenbp import fenbp_forward

        model = _fenbp_model(args)
        res = _pmap(lambda g: fenbp_forward(g, model), graphs)
        return [r.beliefs.variable_beliefs for r in res], [decode_map(r.beliefs) for r in res]
    if algo == "fegnn":
        from .fegnn import fegnn_marginals_batch

        model = _fegnn_model(args)
        marg = fegnn_marginals_batch(graphs, model)
        return marg, [decode_map(m) for m in marg]
    if algo in ("beam", "bestfirst"):
        cfg = SearchConfig(cache_size=args.cache_size, seed=args.seed)
        fn = beam_search if algo == "beam" else best_first_search
        return None, [r.assignment for r in _pmap(lambda g: fn(g, cfg), graphs)]
    raise CliError(f"unknown algorithm {algo!r}")


def _metric_doc(algo, dataset, args, graphs, labels, marginals, maps, config):
    use_marg = marginals if (marginals is not None and getattr(args, "mode", "sum") == "sum") else None
    m = compute_metrics(graphs, labels, use_marg, maps)
    return {
        "algo": algo,
        "dataset": str(dataset),
        "kl": m.kl,
        "rmse": m.rmse,
        "uai_score": m.uai_score,
        "per_instance": m.per_instance,
        "seed": args.seed,
        "config": config,
    }


# ---- commands ----------------------------------------------------------------

def cmd_gen(args):
    spec = gen.DatasetSpec(args.family, args.n, args.count, args.seed, args.sigma_b, args.sigma_j)
    items = gen.generate(spec, label=not args.no_label)
    paths = gen.save_dataset(spec, items, args.out)
    _dump({"written": len(paths), "out": str(args.out)}, None)


def cmd_infer(args):
    items = _load(args.input)
    graphs = [x.graph for x in items]
    labels = [x.label for x in items]
    marginals, maps = _predict(args.algo, args, graphs, labels)
    config = {"mode": args.mode, "damping": args.damping, "iters": args.iters, "cache_size": args.cache_size,
              "ckpt": args.ckpt}
    _dump(_metric_doc(args.algo, args.input, args, graphs, labels, marginals, maps, config), args.metrics)
    if args.pred_out:
        _dump({"marginals": [[list(map(float, v)) for v in ms] for ms in marginals] if marginals else None,
               "map": [list(map(int, x)) for x in maps]}, args.pred_out)


def cmd_train(args):
    train_items = _load(args.train)
    if args.val:
        val_items = _load(args.val)
    else:
        train_items, val_items = gen.train_test_split(train_items, seed=args.seed)
    if args.model == "fenbp":
        from .fenbp import fenbp_train_map, fenbp_train_marginals

        model = _fenbp_model(args, init="train")
        if args.mode == "max":
            tr = [(x.graph, x.label.map_log_score) for x in train_items]
            va = [(x.graph, x.label.map_log_score) for x in val_items]
            model, hist = fenbp_train_map(model, tr, va, epochs=args.epochs, lr=args.lr,
                                          early_stop_window=args.early_stop, batch_size=args.batch_size, seed=args.seed)
        else:
            tr = [(x.graph, x.label.marginals) for x in train_items]
            va = [(x.graph, x.label.marginals) for x in val_items]
            model, hist = fenbp_train_marginals(model, tr, va, epochs=args.epochs, lr=args.lr,
                                                early_stop_window=args.early_stop, batch_size=args.batch_size,
                                                seed=args.seed)
    else:
        from .fegnn import fegnn_train

        model = _fegnn_model(args, init="random")
        tr = [(x.graph, x.label.marginals) for x in train_items]
        va = [(x.graph, x.label.marginals) for x in val_items]
        model, hist = fegnn_train(model, tr, va, epochs=args.epochs, lr=args.lr, early_stop_window=args.early_stop,
                                  batch_size=args.batch_size, seed=args.seed)
    model.save(args.ckpt)
    _dump({"ckpt": str(args.ckpt), "model": model.describe(), "history": hist}, args.history)


def cmd_eval(args):
    items = _load(args.input)
    graphs = [x.graph for x in items]
    labels = [x.label for x in items]
    if args.pred:
        doc = json.loads(Path(args.pred).read_text())
        marginals = doc.get("marginals")
        if marginals is not None:
            marginals = [[np.asarray(v) for v in ms] for ms in marginals]
        maps = [tuple(x) for x in doc["map"]] if doc.get("map") is not None else None
        algo, config = "pred", {"pred": str(args.pred)}
    else:
        if not args.model:
            raise CliError("eval needs --model with --ckpt, or --pred")
        marginals, maps = _predict(args.model, args, graphs, labels)
        algo, config = args.model, {"mode": args.mode, "iters": args.iters, "ckpt": args.ckpt}
    _dump(_metric_doc(algo, args.input, args, graphs, labels, marginals, maps, config), args.metrics)


def cmd_permaudit(args):
    from .audit import audit_equivariance

    rng = np.random.default_rng(args.seed)
    if args.input:
        graphs = [x.graph for x in gen.load_dataset(args.input)]
    else:
        max_card = 2 if args.algo == "fegnn" else 3
        graphs = [gen.random_graph(rng, n_vars=6, n_factors=6, max_card=max_card) for _ in range(args.count)]
    model = None
    if args.algo == "fenbp":
        model = _fenbp_model(args) if args.ckpt else _fenbp_model(args, init="random")
    elif args.algo == "fegnn":
        model = _fegnn_model(args) if args.ckpt else _fegnn_model(args, init="random")
    bp_cfg = BpConfig(mode=args.mode, damping=args.damping, max_iters=args.iters or 200)
    report = audit_equivariance(args.algo, graphs, tolerance=args.tol, model=model, bp_config=bp_cfg,
                                n_witnesses=args.witnesses, seed=args.seed)
    _dump(report.as_dict(), args.report)
    if not report.passed:
        raise SystemExit(3)


def cmd_gradcheck(args):
    from .gradcheck_programs import PROGRAMS

    if args.model not in PROGRAMS:
        raise CliError(f"unknown gradcheck program {args.model!r}")
    results = []
    for k in range(args.instances):
        err, details = PROGRAMS[args.model](args.seed + k)
        results.append({"seed": args.seed + k, "max_rel_error": err, **details})
    worst = max(r["max_rel_error"] for r in results)
    _dump({"program": args.model, "max_rel_error": worst, "passed": worst < 1e-4, "instances": results}, None)


def cmd_bounds(args):
    items = _load(args.input)
    rows = []
    for k, x in enumerate(items):
        if args.algo == "fenbp":
            from .fenbp import fenbp_forward

            r = fenbp_forward(x.graph, _fenbp_model(args))
        else:
            r = run_bp(x.graph, BpConfig(mode=args.mode, damping=args.damping, max_iters=args.iters or 200))
        lower, upper = map_bounds(x.graph, r, x.label.log_Z)
        p_star = float(np.exp(x.label.map_log_score - x.label.log_Z))
        rows.append({"index": k, "lower": lower, "upper": upper, "p_map": p_star,
                     "sandwich": lower <= p_star + 1e-10 and p_star <= upper + 1e-10})
    _dump({"algo": args.algo, "mode": args.mode, "dataset": str(args.input), "seed": args.seed,
           "all_hold": all(r["sandwich"] for r in rows), "per_instance": rows}, args.out)


# ---- parser ------------------------------------------------------------------

def _model_flags(p):
    p.add_argument("--mode", choices=["sum", "max"], default="sum")
    p.add_argument("--iters", type=int, default=None, help="BP iteration cap or model depth T")
    p.add_argument("--damping", type=float, default=0.0)
    p.add_argument("--ckpt", default=None)
    p.add_argument("--graph-norm", action="store_true")
    p.add_argument("--init-damping", type=float, default=0.5)
    p.add_argument("--hidden-dim", type=int, default=5)
    p.add_argument("--cardinality", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fginfer", description="Factor-graph inference toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a labelled synthetic dataset")
    g.add_argument("--family", choices=["ising", "asym"], required=True)
    g.add_argument("--n", type=int, default=3)
    g.add_argument("--count", type=int, default=100)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--sigma-b", type=float, default=0.25)
    g.add_argument("--sigma-j", type=float, default=1.0)
    g.add_argument("--no-label", action="store_true")
    g.set_defaults(func=cmd_gen)

    i = sub.add_parser("infer", help="run an inference algorithm on a dataset and score it")
    i.add_argument("--algo", choices=["exact", "bp", "fenbp", "fegnn", "beam", "bestfirst"], required=True)
    i.add_argument("--in", dest="input", required=True)
    i.add_argument("--metrics", default=None)
    i.add_argument("--pred-out", default=None)
    i.add_argument("--cache-size", type=int, default=10)
    _model_flags(i)
    i.set_defaults(func=cmd_infer)

    t = sub.add_parser("train", help="train FE-NBP or FE-GNN")
    t.add_argument("--model", choices=["fenbp", "fegnn"], required=True)
    t.add_argument("--train", required=True)
    t.add_argument("--val", default=None, help="defaults to a seeded 70/30 split of --train")
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--epochs", type=int, default=50)
    t.add_argument("--early-stop", type=int, default=5)
    t.add_argument("--batch-size", type=int, default=32)
    t.add_argument("--history", default=None)
    _model_flags(t)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="score a trained model or a predictions file")
    e.add_argument("--model", choices=["fenbp", "fegnn"], default=None)
    e.add_argument("--pred", default=None)
    e.add_argument("--in", dest="input", required=True)
    e.add_argument("--metrics", default=None)
    _model_flags(e)
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("permaudit", help="check equivariance under random witnesses")
    a.add_argument("--algo", choices=["bp", "fenbp", "fegnn"], required=True)
    a.add_argument("--tol", type=float, default=None)
    a.add_argument("--count", type=int, default=50)
    a.add_argument("--witnesses", type=int, default=10)
    a.add_argument("--in", dest="input", default=None)
    a.add_argument("--report", default=None)
    _model_flags(a)
    a.set_defaults(func=cmd_permaudit)

    c = sub.add_parser("gradcheck", help="finite-difference check of a training loss")
    c.add_argument("--model", choices=["fenbp", "fenbp-map", "fegnn"], required=True)
    c.add_argument("--instances", type=int, default=3)
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=cmd_gradcheck)

    b = sub.add_parser("bounds", help="MAP probability bounds from message-passing output")
    b.add_argument("--in", dest="input", required=True)
    b.add_argument("--algo", choices=["bp", "fenbp"], default="bp")
    b.add_argument("--out", default=None)
    _model_flags(b)
    b.set_defaults(func=cmd_bounds)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
        args.func(args)
    except SystemExit as e:
        return int(e.code or 0)
    except Exception as e:  # every failure becomes a JSON error on stderr
        sys.stderr.write(json.dumps({"error": type(e).__name__, "message": str(e)}) + "\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
