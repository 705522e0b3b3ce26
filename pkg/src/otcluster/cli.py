"""Command line front end: generate / fit / eval / bench / check-equivalence.

Exit codes: 0 success, 2 usage or validation problem, 3 finished with a
warning (non-convergence, failed equivalence check).  The default seed
can be set through the OTCLUSTER_SEED environment variable.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time

import numpy as np

from .measures import DiscreteMeasure, MeasureError, load_dataset, save_dataset
from .metrics import MetricError, ami, ari, nmi, wasserstein_to_truth
from .multilevel import (FitConfig, MultilevelError, MultilevelState,
                         equivalence_check)
from .parallel import timed_fit
from .synthgen import GenError, GenParams, add_noise, gen_context, gen_lc, gen_nc

EVAL_COLUMNS = ["run_id", "variant", "nmi", "ari", "ami", "w_to_truth",
                "wall_clock_s"]


def _default_seed() -> int:
    return int(os.environ.get("OTCLUSTER_SEED", "0"))


def _measures_to_json(measures):
    return [G.to_dict() for G in measures]


def _measures_from_json(items):
    return [DiscreteMeasure.from_dict(d) for d in items]


def cmd_generate(args) -> int:
    try:
        params = GenParams(m=args.m, n_j=args.n, d=args.d, M=args.M,
                           K_i=args.Ki, k_j=args.k, K=args.K, d2=args.d2,
                           variance_mode=args.variance_mode, seed=args.seed)
        if args.kind == "nc":
            dataset, truth = gen_nc(params)
        elif args.kind == "lc":
            dataset, truth = gen_lc(params)
        else:
            dataset, truth = gen_context(params, m=args.m, n_j=args.n)
        if args.noise > 0:
            dataset = add_noise(dataset, args.noise, seed=args.seed)
    except (GenError, MeasureError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    save_dataset(dataset, args.out)
    sidecar = {
        "kind": args.kind,
        "params": vars(params),
        "locals": _measures_to_json(truth.locals),
        "globals": _measures_to_json(truth.globals),
        "z": [int(z) for z in truth.z],
    }
    if truth.shared_atoms is not None:
        sidecar["shared_atoms"] = truth.shared_atoms.tolist()
    with open(args.out + ".truth.json", "w") as fh:
        json.dump(sidecar, fh)
    return 0


def cmd_fit(args) -> int:
    try:
        dataset = load_dataset(args.data)
        lam = args.lam if args.lam == "auto" else float(args.lam)
        tau = None if args.tau is not None and args.tau <= 0 else args.tau
        config = FitConfig(variant=args.variant, k_j=args.k, M=args.M,
                           K=args.K, lam=lam, tau=tau, L=args.L,
                           tol=args.tol, max_iter=args.max_iter,
                           seed=args.seed,
                           local_term_scale=args.local_term_scale)
        t0 = time.perf_counter()
        state, seconds = timed_fit(dataset, config, workers=args.workers)
        wall = time.perf_counter() - t0
    except (MultilevelError, MeasureError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    model = state.to_dict(config)
    model["wall_clock_s"] = wall
    model["iteration_seconds"] = seconds
    with open(args.out, "w") as fh:
        json.dump(model, fh)
    if not state.converged:
        print("warning: stopped before meeting the tolerance",
              file=sys.stderr)
        return 3
    return 0


def cmd_eval(args) -> int:
    if args.truth is None and not args.labels:
        print("error: supply --truth and/or --labels", file=sys.stderr)
        return 2
    with open(args.model) as fh:
        model = json.load(fh)
    state = MultilevelState.from_dict(model)
    variant = model.get("variant") or model.get("config", {}).get("variant", "")
    row = {c: "" for c in EVAL_COLUMNS}
    row["run_id"] = args.run_id or os.path.basename(args.model)
    row["variant"] = variant
    row["wall_clock_s"] = model.get("wall_clock_s", "")
    if args.labels:
        dataset = load_dataset(args.data)
        if dataset.labels is None:
            print("error: dataset has no labels", file=sys.stderr)
            return 2
        row["nmi"] = nmi(dataset.labels, state.assignments)
        row["ari"] = ari(dataset.labels, state.assignments)
        row["ami"] = ami(dataset.labels, state.assignments)
    if args.truth is not None:
        with open(args.truth) as fh:
            truth = json.load(fh)
        try:
            row["w_to_truth"] = wasserstein_to_truth(
                state.locals, state.globals,
                _measures_from_json(truth["locals"]),
                _measures_from_json(truth["globals"]))
        except MetricError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    writer = csv.DictWriter(out, fieldnames=EVAL_COLUMNS)
    writer.writeheader()
    writer.writerow(row)
    if args.out:
        out.close()
    return 0


def cmd_bench(args) -> int:
    ms = [int(x) for x in args.sweep_m.split(",")]
    variants = args.variants.split(",")
    workers_list = [int(x) for x in args.workers_list.split(",")]
    rows = []
    for variant in variants:
        for m in ms:
            params = GenParams(m=m, n_j=args.n, d=args.d, M=args.M,
                               k_j=args.k, seed=args.seed)
            dataset, _ = gen_nc(params)
            for workers in workers_list:
                config = FitConfig(variant=variant, k_j=args.k, M=args.M,
                                   K=args.K, seed=args.seed,
                                   max_iter=args.max_iter)
                t0 = time.perf_counter()
                state, _ = timed_fit(dataset, config, workers=workers)
                rows.append({
                    "variant": variant, "m": m, "workers": workers,
                    "seconds": time.perf_counter() - t0,
                    "final_objective": state.objective_trace[-1],
                })
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    writer = csv.DictWriter(
        out, fieldnames=["variant", "m", "workers", "seconds",
                         "final_objective"])
    writer.writeheader()
    writer.writerows(rows)
    if args.out:
        out.close()
    return 0


def cmd_check_equivalence(args) -> int:
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for _ in range(args.instances):
        m = int(rng.integers(2, args.max_m + 1))
        M = int(rng.integers(1, args.max_M + 1))
        locs = []
        for _ in range(m):
            k = int(rng.integers(1, 4))
            atoms = rng.normal(size=(k, 2))
            w = rng.dirichlet(np.ones(k))
            locs.append(DiscreteMeasure(atoms, w))
        a, b = equivalence_check(locs, M)
        worst = max(worst, abs(a - b))
    print(f"max value gap over {args.instances} instances: {worst:.3e}")
    if worst > args.tol:
        print("warning: equivalence check exceeded tolerance",
              file=sys.stderr)
        return 3
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="otcluster",
        description="Multilevel clustering of grouped data via optimal "
                    "transport")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic dataset")
    g.add_argument("kind", choices=["nc", "lc", "context"])
    g.add_argument("--m", type=int, default=50)
    g.add_argument("--n", type=int, default=50)
    g.add_argument("--d", type=int, default=10)
    g.add_argument("--M", type=int, default=5)
    g.add_argument("--Ki", type=int, default=5)
    g.add_argument("--k", type=int, default=4)
    g.add_argument("--K", type=int, default=50)
    g.add_argument("--d2", type=int, default=2)
    g.add_argument("--variance-mode", default="constant",
                   choices=["constant", "cluster-proportional"])
    g.add_argument("--noise", type=float, default=0.0,
                   help="fraction of noise points to append")
    g.add_argument("--seed", type=int, default=_default_seed())
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    f = sub.add_parser("fit", help="fit a multilevel clustering model")
    f.add_argument("variant", choices=["mwm", "mwms", "mwmc", "mwgm"])
    f.add_argument("--data", required=True)
    f.add_argument("--k", type=int, default=4)
    f.add_argument("--M", type=int, default=5)
    f.add_argument("--K", type=int, default=50)
    f.add_argument("--lambda", dest="lam", default="auto")
    f.add_argument("--tau", type=float, default=10.0,
                   help="entropic regularization; <= 0 for exact")
    f.add_argument("--L", type=int, default=10)
    f.add_argument("--tol", type=float, default=1e-6)
    f.add_argument("--max-iter", type=int, default=100)
    f.add_argument("--workers", type=int, default=1)
    f.add_argument("--seed", type=int, default=_default_seed())
    f.add_argument("--local-term-scale", default="normalized",
                   choices=["normalized", "group_size"])
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_fit)

    e = sub.add_parser("eval", help="score a fitted model")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--truth", help="truth sidecar JSON")
    e.add_argument("--labels", action="store_true",
                   help="score assignments against dataset labels")
    e.add_argument("--run-id")
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench", help="timing sweep over m and workers")
    b.add_argument("--sweep-m", default="200,400")
    b.add_argument("--variants", default="mwm")
    b.add_argument("--workers-list", default="1")
    b.add_argument("--n", type=int, default=20)
    b.add_argument("--d", type=int, default=5)
    b.add_argument("--M", type=int, default=3)
    b.add_argument("--k", type=int, default=3)
    b.add_argument("--K", type=int, default=20)
    b.add_argument("--max-iter", type=int, default=3)
    b.add_argument("--seed", type=int, default=_default_seed())
    b.add_argument("--out")
    b.set_defaults(func=cmd_bench)

    c = sub.add_parser("check-equivalence",
                       help="compare the two exact forms of the global "
                            "clustering value on random tiny instances")
    c.add_argument("--instances", type=int, default=10)
    c.add_argument("--max-m", type=int, default=4)
    c.add_argument("--max-M", type=int, default=2)
    c.add_argument("--tol", type=float, default=1e-6)
    c.add_argument("--seed", type=int, default=_default_seed())
    c.set_defaults(func=cmd_check_equivalence)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
