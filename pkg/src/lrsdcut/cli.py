"""Command-line front end: instance generation, solving, benchmarking.

Subcommands: ``gen``, ``solve``, ``bench``, ``compare``.  Exit codes:
0 success (warnings allowed), 2 malformed instance or usage error,
3 solver error.  The environment variable ``LRSDCUT_THREADS`` caps
internal (BLAS) parallelism; 0 or unset leaves the libraries' defaults.

Every emitted report embeds the sha256 of the instance file and the full
parameter set, so results are replayable from the report alone.
"""

import argparse
import csv
import json
import os
import statistics
import sys
import time

EXIT_OK = 0
EXIT_INSTANCE = 2
EXIT_SOLVER = 3


def _apply_thread_cap():
    # Must run before numpy/scipy load their BLAS backends.
    raw = os.environ.get("LRSDCUT_THREADS", "").strip()
    if not raw:
        return
    try:
        cap = int(raw)
    except ValueError:
        print(f"warning: ignoring non-integer LRSDCUT_THREADS={raw!r}",
              file=sys.stderr)
        return
    if cap <= 0:  # 0 = auto
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS"):
        os.environ.setdefault(var, str(cap))


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="lrsdcut",
        description="MAP inference on fully-connected pairwise CRFs")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a synthetic instance file")
    gen.add_argument("--kind", choices=["clusters", "random", "grid"],
                     required=True)
    gen.add_argument("--n", type=int, default=100,
                     help="number of variables (clusters/random)")
    gen.add_argument("--labels", type=int, default=2)
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--grid-w", type=int, default=20)
    gen.add_argument("--grid-h", type=int, default=20)
    gen.add_argument("--spacing-x", type=float, default=1.0)
    gen.add_argument("--spacing-y", type=float, default=1.0)
    gen.add_argument("--noise", type=float, default=0.8)
    gen.add_argument("--weight", type=float, default=None,
                     help="pairwise kernel weight (family default if omitted)")
    gen.add_argument("--theta-pos", type=float, default=None)
    gen.add_argument("--theta-color", type=float, default=None)
    gen.add_argument("--nystrom-landmarks", type=int, default=40)
    gen.add_argument("--nystrom-rank", type=int, default=20)
    gen.add_argument("out", help="output instance JSON path")

    solve = sub.add_parser("solve", help="solve an instance")
    solve.add_argument("--method", choices=["lrsdcut", "meanfield", "brute"],
                       required=True)
    solve.add_argument("--gamma", type=float, default=1000.0)
    solve.add_argument("--kmax", type=int, default=10)
    solve.add_argument("--rank-init", type=int, default=20)
    solve.add_argument("--tau", type=float, default=1e-5)
    solve.add_argument("--seed", type=int, default=0)
    solve.add_argument("--restarts", type=int, default=5,
                       help="mean-field restarts")
    solve.add_argument("--samples", type=int, default=20,
                       help="rounding samples per iteration")
    solve.add_argument("--out", help="write the report JSON here")
    solve.add_argument("instance")

    bench = sub.add_parser("bench", help="per-iteration timing CSV")
    bench.add_argument("--method", choices=["lrsdcut"], default="lrsdcut")
    bench.add_argument("--kmax", type=int, default=5)
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--out", help="write CSV here instead of stdout")
    bench.add_argument("instances", nargs="+")

    compare = sub.add_parser("compare",
                             help="run lrsdcut and meanfield side by side")
    compare.add_argument("--seed", type=int, default=0)
    compare.add_argument("--restarts", type=int, default=5)
    compare.add_argument("--out", help="write CSV here as well")
    compare.add_argument("instances", nargs="+")
    return parser


def _solver_params(args):
    return {"gamma": args.gamma, "kmax": args.kmax,
            "rank_init": args.rank_init, "tau": args.tau, "seed": args.seed,
            "restarts": args.restarts, "samples": args.samples}


def _run_method(method, problem, args):
    """Returns a report dict with the shared SolveReport JSON shape."""
    from . import meanfield, oracle, sdp

    started = time.perf_counter()
    if method == "lrsdcut":
        report = sdp.lr_sdcut_solve(
            problem, gamma=args.gamma, k_max=args.kmax,
            rank_init=args.rank_init, tau=args.tau, seed=args.seed,
            n_samples=args.samples)
        out = report.to_dict()
    elif method == "meanfield":
        result = meanfield.mf_solve(problem, restarts=args.restarts,
                                    seed=args.seed)
        out = {
            "method": "meanfield",
            "best_energy": result.energy,
            "lower_bound": None,
            "labels": result.labels.tolist(),
            "trajectory": [
                {"iter": i, "dual": None, "rounded_energy": None,
                 "free_energy": float(f), "rank": None, "truncated": False,
                 "ms": None}
                for i, f in enumerate(result.free_energies)],
            "warnings": [],
            "restart_energies": result.restart_energies,
        }
    elif method == "brute":
        labels, value = oracle.brute_force_map(problem)
        out = {"method": "brute", "best_energy": value, "lower_bound": value,
               "labels": labels.tolist(), "trajectory": [], "warnings": []}
    else:
        raise ValueError(f"unknown method {method!r}")
    out["wall_time_s"] = time.perf_counter() - started
    return out


def cmd_gen(args):
    from . import generate, kernels

    artifacts = {}
    if args.kind == "clusters":
        kwargs = {"noise": args.noise,
                  "landmarks": args.nystrom_landmarks,
                  "rank": args.nystrom_rank}
        if args.weight is not None:
            kwargs["weight"] = args.weight
        if args.theta_pos is not None:
            kwargs["theta_pos"] = args.theta_pos
        if args.theta_color is not None:
            kwargs["theta_color"] = args.theta_color
        instance = generate.gen_clusters(args.n, args.labels, args.seed,
                                         **kwargs)
    elif args.kind == "random":
        kwargs = {}
        if args.weight is not None:
            kwargs["weight"] = args.weight
        instance, artifacts = generate.gen_random(args.n, args.labels,
                                                  args.seed, **kwargs)
    else:
        kwargs = {"noise": args.noise,
                  "landmarks": args.nystrom_landmarks,
                  "rank": args.nystrom_rank,
                  "spacing_x": args.spacing_x,
                  "spacing_y": args.spacing_y}
        if args.weight is not None:
            kwargs["weight"] = args.weight
        if args.theta_pos is not None:
            kwargs["theta_pos"] = args.theta_pos
        if args.theta_color is not None:
            kwargs["theta_color"] = args.theta_color
        instance = generate.gen_grid(args.grid_w, args.grid_h, args.labels,
                                     args.seed, **kwargs)

    out_dir = os.path.dirname(os.path.abspath(args.out))
    os.makedirs(out_dir, exist_ok=True)
    for name, factor in artifacts.items():
        kernels.save_factor(os.path.join(out_dir, name), factor)
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(instance, fh)
    print(f"wrote {args.kind} instance with N={instance['n_vars']} "
          f"L={instance['n_labels']} to {args.out}")
    return EXIT_OK


def cmd_solve(args):
    from .crf import load_instance

    problem, _, digest = load_instance(args.instance)
    report = _run_method(args.method, problem, args)
    report["instance"] = args.instance
    report["instance_sha256"] = digest
    report["params"] = _solver_params(args)

    bound = report.get("lower_bound")
    bound_text = "n/a" if bound is None else f"{bound:.6f}"
    print(f"method={report['method']} energy={report['best_energy']:.6f} "
          f"lower_bound={bound_text} time={report['wall_time_s']:.3f}s")
    for warning in report.get("warnings", []):
        print(f"warning: {warning}", file=sys.stderr)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2)
    return EXIT_OK


def cmd_bench(args):
    from .crf import load_instance
    from .sdp import lr_sdcut_solve

    rows = []
    for path in args.instances:
        problem, _, digest = load_instance(path)
        report = lr_sdcut_solve(problem, k_max=args.kmax, seed=args.seed)
        times = [rec.ms for rec in report.trajectory]
        rows.append({
            "instance": path,
            "instance_sha256": digest,
            "n_vars": problem.n_vars,
            "method": args.method,
            "iterations": len(times),
            "median_iter_ms": statistics.median(times),
        })
    for i, row in enumerate(rows):
        prev = rows[i - 1]["median_iter_ms"] if i else None
        row["ratio"] = ("" if not prev
                        else f"{row['median_iter_ms'] / prev:.3f}")

    fields = ["instance", "instance_sha256", "n_vars", "method",
              "iterations", "median_iter_ms", "ratio"]
    sink = open(args.out, "w", newline="", encoding="utf-8") if args.out \
        else sys.stdout
    try:
        writer = csv.DictWriter(sink, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)
    finally:
        if args.out:
            sink.close()
    return EXIT_OK


def cmd_compare(args):
    from .crf import load_instance

    args.gamma, args.kmax, args.rank_init = 1000.0, 10, 20
    args.tau, args.samples = 1e-5, 20
    rows = []
    for path in args.instances:
        problem, _, digest = load_instance(path)
        sd = _run_method("lrsdcut", problem, args)
        mf = _run_method("meanfield", problem, args)
        rows.append({
            "instance": path,
            "instance_sha256": digest,
            "n_vars": problem.n_vars,
            "lrsdcut_energy": sd["best_energy"],
            "lrsdcut_bound": sd["lower_bound"],
            "meanfield_energy": mf["best_energy"],
            "gap": sd["best_energy"] - mf["best_energy"],
        })

    header = (f"{'instance':<32} {'N':>6} {'lrsdcut':>14} {'bound':>14} "
              f"{'meanfield':>14} {'gap':>12}")
    print(header)
    print("-" * len(header))
    for row in rows:
        bound = row["lrsdcut_bound"]
        bound_text = "n/a" if bound is None else f"{bound:14.6f}"
        print(f"{os.path.basename(row['instance']):<32} {row['n_vars']:>6} "
              f"{row['lrsdcut_energy']:>14.6f} {bound_text:>14} "
              f"{row['meanfield_energy']:>14.6f} {row['gap']:>12.6f}")
    med_sd = statistics.median(r["lrsdcut_energy"] for r in rows)
    med_mf = statistics.median(r["meanfield_energy"] for r in rows)
    print(f"median lrsdcut={med_sd:.6f} meanfield={med_mf:.6f}")

    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)
    return EXIT_OK


def main(argv=None):
    _apply_thread_cap()
    args = _build_parser().parse_args(argv)
    from .crf import InstanceFormatError

    try:
        if args.command == "gen":
            return cmd_gen(args)
        if args.command == "solve":
            return cmd_solve(args)
        if args.command == "bench":
            return cmd_bench(args)
        return cmd_compare(args)
    except InstanceFormatError as exc:
        print(f"error: malformed instance: {exc}", file=sys.stderr)
        return EXIT_INSTANCE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INSTANCE
    except Exception as exc:  # solver-side failures
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
