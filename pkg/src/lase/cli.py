"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 validation/data error, 3 numerical
failure (divergence or a tolerance breach in a check command).  Output files
are written atomically (temp file + rename) so reruns are all-or-nothing.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile

import numpy as np

from . import graph as graphmod
from . import kernels, layers, sampling, training

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _atomic_write(path, text):
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_json(path, obj):
    _atomic_write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _load_graph_args(args):
    manifest = getattr(args, "manifest", None)
    return graphmod.load_graph(args.nodes, args.links, manifest_path=manifest)


def _load_split(path):
    with open(path, "r", encoding="utf-8") as fh:
        d = json.load(fh)
    return graphmod.Split(tuple(d["train"]), tuple(d["val"]), tuple(d["test"]))


def _split_dict(split):
    return {"train": list(split.train), "val": list(split.val),
            "test": list(split.test)}


def build_parser():
    p = _Parser(prog="lase", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def add_graph_flags(sp, required=True):
        sp.add_argument("--nodes", required=required)
        sp.add_argument("--links", required=required)
        sp.add_argument("--manifest", default=None)

    sp = sub.add_parser("synth", help="generate a synthetic labelled graph")
    sp.add_argument("--kind", choices=graphmod.SYNTH_KINDS, required=True)
    sp.add_argument("--n", type=int, default=600)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--nodes", required=True)
    sp.add_argument("--links", required=True)
    sp.add_argument("--manifest", default=None)
    sp.add_argument("--split", default=None, help="write the split JSON here")

    sp = sub.add_parser("train", help="train a model from a config JSON")
    add_graph_flags(sp)
    sp.add_argument("--config", required=True)
    sp.add_argument("--split", default=None)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--out", required=True, help="output path prefix")

    sp = sub.add_parser("eval", help="evaluate a checkpoint on a node split")
    add_graph_flags(sp)
    sp.add_argument("--config", required=True)
    sp.add_argument("--checkpoint", required=True, help="checkpoint path prefix")
    sp.add_argument("--split", required=True)
    sp.add_argument("--subset", choices=("train", "val", "test"), default="test")
    sp.add_argument("--out", default=None)

    sp = sub.add_parser("kernel", help="random-walk kernel of two graphs")
    add_graph_flags(sp, required=False)
    sp.add_argument("--nodes2", default=None)
    sp.add_argument("--links2", default=None)
    sp.add_argument("--hops", type=int, default=2)
    sp.add_argument("--decay", type=float, default=0.5)
    sp.add_argument("--gram", type=int, default=0,
                    help="also emit a Gram CSV over this many random graphs")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default=None)

    sp = sub.add_parser("check-theorem1",
                        help="network-sum vs walk-enumeration equality")
    add_graph_flags(sp, required=False)
    sp.add_argument("--hops", type=int, default=2)
    sp.add_argument("--decay", type=float, default=0.5)
    sp.add_argument("--trials", type=int, default=50)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default=None)

    sp = sub.add_parser("figure3-check",
                        help="concat blindness vs rw/sage discrimination")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--trials", type=int, default=100)
    sp.add_argument("--out", default=None)

    sp = sub.add_parser("sample-variance",
                        help="analytic vs empirical estimator variance")
    add_graph_flags(sp, required=False)
    sp.add_argument("--kind", choices=graphmod.SYNTH_KINDS, default="interaction")
    sp.add_argument("--n", type=int, default=60)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--neighborhoods", type=int, default=10)
    sp.add_argument("--draws", type=int, default=20000)
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("snr-sweep", help="accuracy vs link-attribute noise")
    add_graph_flags(sp, required=False)
    sp.add_argument("--kind", choices=graphmod.SYNTH_KINDS, default="interaction")
    sp.add_argument("--n", type=int, default=600)
    sp.add_argument("--config", default=None)
    sp.add_argument("--split", default=None)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--snr", default="inf,4,2,1,0.5",
                    help="comma-separated SNR list; 'inf' for no noise")
    sp.add_argument("--out", required=True)
    return p


# ---------------------------------------------------------------------------
# Command implementations
# ---------------------------------------------------------------------------

def _cmd_synth(args):
    g, split = graphmod.synth_graph(args.kind, args.n, seed=args.seed)
    graphmod.save_graph(g, args.nodes, args.links, args.manifest)
    if args.split:
        _write_json(args.split, _split_dict(split))
    print("synth %s: %d nodes, %d links, %d labels"
          % (args.kind, g.n_nodes, g.n_links, g.n_labels))
    return EXIT_OK


def _get_run(args):
    run = training.TrainRun.from_json(args.config)
    if getattr(args, "seed", None) is not None:
        run.seed = args.seed
    return run


def _cmd_train(args):
    g = _load_graph_args(args)
    run = _get_run(args)
    if args.split:
        split = _load_split(args.split)
    else:
        split = graphmod.make_split(g, seed=run.seed)
    model, hist = training.train(g, split, run)
    model.save(args.out + ".ckpt", meta={"seed": run.seed, "arch": run.arch})
    _atomic_write(args.out + ".metrics.csv", training.metrics_csv(hist))
    _write_json(args.out + ".summary.json", {
        "test_f1": hist.test_f1, "best_epoch": hist.best_epoch,
        "epochs": len(hist.train_loss), "config": run.to_dict()})
    print("train: test micro-F1 %.4f (best epoch %d)"
          % (hist.test_f1, hist.best_epoch))
    return EXIT_OK


def _cmd_eval(args):
    g = _load_graph_args(args)
    run = _get_run(args)
    model = training.build_model(g, run)
    model.load(args.checkpoint)
    split = _load_split(args.split)
    nodes = getattr(split, args.subset)
    f1 = training.evaluate(g, model, nodes)
    if args.out:
        _write_json(args.out, {"subset": args.subset, "micro_f1": f1})
    print("eval: %s micro-F1 %.4f" % (args.subset, f1))
    return EXIT_OK


def _cmd_kernel(args):
    cfg = kernels.KernelConfig(decay=args.decay, hops=args.hops)
    if args.gram:
        rows = []
        gs = [graphmod.synth_graph("random", 12, seed=args.seed + i)[0]
              for i in range(args.gram)]
        for a in gs:
            rows.append([kernels.rw_kernel_dp(a, b, cfg) for b in gs])
        text = "\n".join(",".join(repr(float(v)) for v in row)
                         for row in rows) + "\n"
        if args.out:
            _atomic_write(args.out, text)
        print("kernel: %d x %d Gram matrix written" % (args.gram, args.gram))
        return EXIT_OK
    if not args.nodes or not args.links:
        raise UsageError("kernel needs --nodes/--links unless --gram is given")
    g1 = _load_graph_args(args)
    if args.nodes2:
        g2 = graphmod.load_graph(args.nodes2, args.links2)
    else:
        g2 = g1
    dp = kernels.rw_kernel_dp(g1, g2, cfg)
    en = kernels.rw_kernel_enumerate(g1, g2, cfg)
    rel = abs(dp - en) / max(1.0, abs(en))
    result = {"dp": dp, "enumerate": en, "rel_err": rel}
    if args.out:
        _write_json(args.out, result)
    print("kernel: dp %.6g enumerate %.6g rel_err %.3g" % (dp, en, rel))
    return EXIT_OK if rel < 1e-9 else EXIT_NUMERIC


def _cmd_check_theorem1(args):
    rng = np.random.default_rng(args.seed)
    results = []
    worst = 0.0
    for trial in range(args.trials):
        if args.nodes:
            g = _load_graph_args(args)
        else:
            g = _random_small_graph(rng)
        stack = layers.LayerStack("rw", g.d_node, g.d_link, hidden=4,
                                  depth=args.hops, kernel_mode=True,
                                  constant_decay=args.decay,
                                  seed=int(rng.integers(2 ** 31)))
        k = int(rng.integers(stack.hidden))
        lhs, rhs = kernels.check_theorem1(g, stack, None, k)
        rel = abs(lhs - rhs) / max(1.0, abs(rhs))
        worst = max(worst, rel)
        results.append({"trial": trial, "lhs": lhs, "rhs": rhs, "rel_err": rel})
    if args.out:
        _write_json(args.out, {"results": results, "max_rel_err": worst})
    ok = worst < 1e-9
    print("check-theorem1: %d trials, max rel_err %.3g -> %s"
          % (args.trials, worst, "PASS" if ok else "FAIL"))
    return EXIT_OK if ok else EXIT_NUMERIC


def _random_small_graph(rng, max_nodes=8, d_node=3, d_link=2):
    n = int(rng.integers(2, max_nodes + 1))
    links = []
    for u in range(n):
        for v in range(u + 1, n):
            if rng.random() < 0.5:
                links.append((u, v))
    if not links:
        links = [(0, 1)]
    nf = rng.normal(size=(n, d_node))
    lf = rng.normal(size=(len(links), d_link))
    return graphmod.AttributedGraph(nf, [None] * n, links, lf, 1)


def _cmd_figure3(args):
    g, _ = graphmod.synth_graph("concat-blind", 12, seed=args.seed)
    u, u2 = graphmod.concat_blind_duos(g)[0]
    rng = np.random.default_rng(args.seed)

    concat_stack = layers.LayerStack("concat", g.d_node, g.d_link, hidden=8,
                                     depth=1, seed=args.seed)
    h = layers.full_hidden_arrays(g, concat_stack)[-1]
    concat_gap = float(np.max(np.abs(h[u] - h[u2])))

    separations = {"rw": 0, "sage": 0}
    for arch in separations:
        for _ in range(args.trials):
            stack = layers.LayerStack(arch, g.d_node, g.d_link, hidden=8,
                                      depth=1, seed=int(rng.integers(2 ** 31)))
            hh = layers.full_hidden_arrays(g, stack)[-1]
            if float(np.max(np.abs(hh[u] - hh[u2]))) > 1e-6:
                separations[arch] += 1
    ok = concat_gap < 1e-12 and all(
        c >= math.ceil(0.99 * args.trials) for c in separations.values())
    result = {"concat_gap": concat_gap, "trials": args.trials,
              "separated": separations, "pass": ok}
    if args.out:
        _write_json(args.out, result)
    print("figure3-check: concat gap %.3g, rw %d/%d, sage %d/%d -> %s"
          % (concat_gap, separations["rw"], args.trials,
             separations["sage"], args.trials, "PASS" if ok else "FAIL"))
    return EXIT_OK if ok else EXIT_NUMERIC


def _cmd_sample_variance(args):
    if args.nodes:
        g = _load_graph_args(args)
    else:
        g, _ = graphmod.synth_graph(args.kind, args.n, seed=args.seed)
    stack = layers.LayerStack("sage", g.d_node, g.d_link, hidden=8, depth=1,
                              seed=args.seed)
    ctx = layers.full_forward(g, stack)
    rng = np.random.default_rng(args.seed)
    candidates = [u for u in range(g.n_nodes) if g.degree(u) >= 2]
    chosen = rng.choice(candidates, size=min(args.neighborhoods,
                                             len(candidates)), replace=False)
    lines = ["strategy,neighborhood_id,analytic_var,empirical_var"]
    for u in chosen:
        lam, gmat = sampling.neighborhood_terms(g, stack, ctx, 1, int(u))
        dists = {
            "uniform": sampling.probs_uniform(lam.size),
            "gate": sampling.probs_from_gates(lam),
            "min_var": sampling.probs_minvar_weights(lam, gmat),
        }
        for name, p in dists.items():
            analytic = sampling.estimator_variance(lam, gmat, p)
            draws = rng.choice(lam.size, size=args.draws, p=p)
            ests = (lam[draws, None] * gmat[draws] / p[draws, None])
            empirical = float(np.sum(np.var(ests, axis=0)))
            lines.append("%s,%d,%s,%s" % (name, u, repr(float(analytic)),
                                          repr(float(empirical))))
    _atomic_write(args.out, "\n".join(lines) + "\n")
    print("sample-variance: %d neighborhoods written" % len(chosen))
    return EXIT_OK


def _parse_snrs(text):
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        out.append(math.inf if tok in ("inf", "Inf") else float(tok))
    return out


def _cmd_snr_sweep(args):
    if args.nodes:
        g = _load_graph_args(args)
        split = _load_split(args.split) if args.split else graphmod.make_split(
            g, seed=args.seed)
    else:
        g, split = graphmod.synth_graph(args.kind, args.n, seed=args.seed)
    if args.config:
        run = training.TrainRun.from_json(args.config)
    else:
        run = training.TrainRun(arch="sage", hidden=16, depth=1, lr=1e-2,
                                max_epochs=25, patience=25, seed=args.seed)
    rows = training.snr_sweep(g, split, run, _parse_snrs(args.snr))
    lines = ["snr,test_f1"]
    for snr, f1 in rows:
        lines.append("%s,%s" % ("inf" if math.isinf(snr) else repr(float(snr)),
                                repr(float(f1))))
    _atomic_write(args.out, "\n".join(lines) + "\n")
    for snr, f1 in rows:
        print("snr %s -> test micro-F1 %.4f" % (snr, f1))
    return EXIT_OK


_COMMANDS = {
    "synth": _cmd_synth,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "kernel": _cmd_kernel,
    "check-theorem1": _cmd_check_theorem1,
    "figure3-check": _cmd_figure3,
    "sample-variance": _cmd_sample_variance,
    "snr-sweep": _cmd_snr_sweep,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print("usage error: %s" % exc, file=sys.stderr)
        return EXIT_USAGE
    try:
        return _COMMANDS[args.command](args)
    except (UsageError, FileNotFoundError) as exc:
        print("usage error: %s" % exc, file=sys.stderr)
        return EXIT_USAGE
    except (graphmod.GraphError, ValueError, json.JSONDecodeError) as exc:
        print("data error: %s" % exc, file=sys.stderr)
        return EXIT_DATA
    except (training.TrainingDiverged, FloatingPointError) as exc:
        print("numerical failure: %s" % exc, file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
