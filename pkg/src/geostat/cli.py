"""Command-line interface: ``geostat {simulate,estimate,predict,cv,bench}``."""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from geostat import __version__, _random, scheduler, tilealg
from geostat.covariance import MaternParams, gen_cov_matrix
from geostat.errors import GeostatError
from geostat.geometry import Metric, distance_matrix, generate_locations
from geostat.io import parse_triple, read_locations_csv, read_theta, write_json, write_locations_csv
from geostat.likelihood import LikelihoodProblem, OptimizerConfig, mle_fit
from geostat.predict import Refit, k_fold_cv, krige_predict, mse
from geostat.simulate import SimulationSpec, simulate_field

MIN_NB = 8


def _metric(args) -> Metric:
    if args.metric == "euclidean":
        return Metric.euclidean()
    return Metric.great_circle(args.radius)


def _approx(text: str) -> int | None:
    if text == "exact":
        return None
    if text.startswith("ind:"):
        try:
            s = int(text[4:])
        except ValueError:
            s = 0
        if s >= 1:
            return s
    raise argparse.ArgumentTypeError(f"expected 'exact' or 'ind:<s>' with s >= 1, got {text!r}")


def _nb(text: str) -> int:
    nb = int(text)
    if nb < MIN_NB:
        raise argparse.ArgumentTypeError(f"tile size must be >= {MIN_NB}")
    return nb


def _workers(text: str) -> int:
    w = int(text)
    if w < 1:
        raise argparse.ArgumentTypeError("workers must be >= 1")
    return w


def _seed(args) -> int:
    if args.seed is None:
        args.seed = _random.fresh_seed()
        print(f"seed: {args.seed}", file=sys.stderr)
    return args.seed


def _likelihood_flops(n: int, nb: int, s: int | None) -> float:
    if s is None:
        return tilealg.cholesky_flops(n) + tilealg.trsm_flops(n, 1)
    total = 0.0
    for lo in range(0, n, s * nb):
        m = min(s * nb, n - lo)
        total += tilealg.cholesky_flops(m) + tilealg.trsm_flops(m, 1)
    return total


def _optimizer_config(args, locations) -> OptimizerConfig:
    kw = {"xtol_rel": args.xtol, "max_evals": args.max_evals, "nugget": args.nugget}
    if args.lower:
        kw["lower"] = parse_triple(args.lower, "--lower")
    if args.upper:
        kw["upper"] = parse_triple(args.upper, "--upper")
    if args.start:
        kw["start"] = parse_triple(args.start, "--start")
    return OptimizerConfig.default_for(locations, **kw)


# --------------------------------------------------------------------------
# commands


def cmd_simulate(args) -> int:
    theta = MaternParams(*parse_triple(args.theta, "--theta"), nugget=args.nugget)
    seed = _seed(args)
    spec = SimulationSpec(args.n, theta, seed, nb=args.nb, metric=_metric(args), workers=args.workers)
    t0 = time.perf_counter()
    locs, z = simulate_field(spec)
    elapsed = time.perf_counter() - t0
    out = Path(args.out)
    write_locations_csv(out, locs, z.to_array())
    meta = {
        "n": args.n,
        "theta": list(theta.as_tuple()),
        "nugget": theta.nugget,
        "seed": seed,
        "nb": args.nb,
        "metric": str(spec.metric),
        "wall_time_s": elapsed,
        "version": __version__,
    }
    write_json(out.with_suffix(".json"), meta)
    print(f"wrote {locs.n} rows to {out}", file=sys.stderr)
    return 0


def cmd_estimate(args) -> int:
    locs, z = read_locations_csv(args.data, _metric(args), require_z=True)
    problem = LikelihoodProblem(locs, z, nb=args.nb, super_tile=args.approx, workers=args.workers)
    cfg = _optimizer_config(args, locs)
    fit = mle_fit(problem, cfg)
    out = fit.to_dict()
    flops = _likelihood_flops(locs.n, args.nb, args.approx)
    out.update({
        "n": locs.n,
        "nb": args.nb,
        "approx": "exact" if args.approx is None else f"ind:{args.approx}",
        "workers": args.workers or scheduler.default_workers(),
        "gflops_per_s": tilealg.gflops(flops, fit.mean_eval_time),
        "bounds": {"lower": list(cfg.lower), "upper": list(cfg.upper)},
        "start": list(cfg.start),
        "xtol_rel": cfg.xtol_rel,
    })
    write_json(args.out, out)
    return 0


def cmd_predict(args) -> int:
    metric = _metric(args)
    obs, z2 = read_locations_csv(args.obs, metric, require_z=True)
    new, truth = read_locations_csv(args.new, metric)
    theta = read_theta(args.theta, args.nugget)
    t0 = time.perf_counter()
    result = krige_predict(theta, obs, z2, new, nb=args.nb, workers=args.workers,
                           super_tile=args.approx, with_variance=args.with_variance)
    elapsed = time.perf_counter() - t0
    pred, var = result if args.with_variance else (result, None)
    write_locations_csv(args.out, new, pred, extra=None if var is None else {"variance": var})
    summary = {"m": new.n, "n": obs.n, "wall_time_s": elapsed, "per_prediction_time_s": elapsed / new.n}
    if truth is not None:
        summary["mse"] = mse(pred, truth)
    if args.summary:
        write_json(args.summary, summary)
    else:
        print(summary, file=sys.stderr)
    return 0


def cmd_cv(args) -> int:
    locs, z = read_locations_csv(args.data, _metric(args), require_z=True)
    seed = _seed(args)
    if args.mode == "fixed":
        if not args.theta:
            raise GeostatError("--mode fixed needs --theta")
        theta = read_theta(args.theta, args.nugget)
    else:
        theta = Refit(None if not (args.lower or args.upper or args.start)
                      else _optimizer_config(args, locs))
    report = k_fold_cv(locs, z, args.k, theta, seed, nb=args.nb, workers=args.workers,
                       super_tile=args.approx)
    out = report.to_dict()
    out.update({"seed": seed, "mode": args.mode, "n": locs.n,
                "approx": "exact" if args.approx is None else f"ind:{args.approx}"})
    write_json(args.out, out)
    return 0


def cmd_bench(args) -> int:
    seed = _seed(args)
    worker_counts = [int(w) for w in args.workers_list.split(",")]
    if any(w < 1 for w in worker_counts):
        raise GeostatError("worker counts must be >= 1")
    locs = generate_locations(args.n, seed)
    theta = MaternParams(*parse_triple(args.theta, "--theta"), nugget=args.nugget)
    sigma = gen_cov_matrix(distance_matrix(locs), theta, args.nb, workers=1)
    trace_dir = Path(args.trace_dir)
    trace_dir.mkdir(parents=True, exist_ok=True)
    runs = []
    for w in worker_counts:
        times = []
        trace: list = []
        for rep in range(args.repeat):
            a = sigma.copy()
            t0 = time.perf_counter()
            tilealg.tile_cholesky(a, workers=w, trace=trace if rep == 0 else None)
            times.append(time.perf_counter() - t0)
        best = min(times)
        path = trace_dir / f"trace_w{w}.csv"
        scheduler.write_trace_csv(trace, path)
        runs.append({
            "workers": w,
            "seconds": best,
            "gflops_per_s": tilealg.gflops(tilealg.cholesky_flops(args.n), best),
            "trace": str(path),
        })
    base = runs[0]["seconds"]
    for r in runs:
        r["speedup"] = base / r["seconds"]
    write_json(args.out, {"n": args.n, "nb": args.nb, "host_cores": scheduler.default_workers(),
                          "seed": seed, "runs": runs})
    return 0


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    base = argparse.ArgumentParser(add_help=False)
    base.add_argument("--nb", type=_nb, default=tilealg.DEFAULT_NB, help="tile size (default 128)")
    base.add_argument("--nugget", type=float, default=0.0)
    base.add_argument("--seed", type=int, default=None)
    base.add_argument("-v", "--verbose", action="store_true")

    common = argparse.ArgumentParser(add_help=False, parents=[base])
    common.add_argument("--workers", type=_workers, default=None,
                        help="worker threads (default: $GEOSTAT_WORKERS or host cores)")
    common.add_argument("--metric", choices=("euclidean", "gcd"), default="euclidean")
    common.add_argument("--radius", type=float, default=6371.0,
                        help="sphere radius for --metric gcd (default 6371, km)")

    opt = argparse.ArgumentParser(add_help=False)
    opt.add_argument("--lower", help="lower bounds t1,t2,t3")
    opt.add_argument("--upper", help="upper bounds t1,t2,t3")
    opt.add_argument("--start", help="start point t1,t2,t3")
    opt.add_argument("--xtol", type=float, default=1e-5, help="relative parameter tolerance")
    opt.add_argument("--max-evals", type=int, default=500)

    approx = argparse.ArgumentParser(add_help=False)
    approx.add_argument("--approx", type=_approx, default=None, metavar="{exact,ind:<s>}",
                        help="exact likelihood or IND approximation with s x s super tiles")

    p = argparse.ArgumentParser(prog="geostat", description=__doc__)
    p.add_argument("--version", action="version", version=f"geostat {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="synthetic Matérn field")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--theta", required=True, help="t1,t2,t3")
    s.add_argument("--out", default="simulated.csv")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("estimate", parents=[common, opt, approx], help="maximum likelihood fit")
    s.add_argument("--data", required=True, help="x,y,z CSV")
    s.add_argument("--out", default="-", help="FitResult JSON (default stdout)")
    s.set_defaults(func=cmd_estimate)

    s = sub.add_parser("predict", parents=[common, approx], help="kriging prediction")
    s.add_argument("--obs", required=True, help="observed x,y,z CSV")
    s.add_argument("--new", required=True, help="target x,y[,z] CSV")
    s.add_argument("--theta", required=True, help="t1,t2,t3 or a FitResult JSON")
    s.add_argument("--out", default="predictions.csv")
    s.add_argument("--summary", default=None, help="write timing/MSE summary JSON here")
    s.add_argument("--with-variance", action="store_true")
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("cv", parents=[common, opt, approx], help="k-fold cross-validation")
    s.add_argument("--data", required=True)
    s.add_argument("--k", type=int, default=10)
    s.add_argument("--mode", choices=("refit", "fixed"), default="refit")
    s.add_argument("--theta", help="parameters for --mode fixed")
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_cv)

    s = sub.add_parser("bench", parents=[base], help="tile Cholesky scalability")
    s.add_argument("--n", type=int, default=2048)
    s.add_argument("--workers", dest="workers_list", default="1,4", help="comma-separated counts")
    s.add_argument("--theta", default="1,0.1,0.5")
    s.add_argument("--repeat", type=int, default=3)
    s.add_argument("--trace-dir", default="traces")
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (GeostatError, OSError) as exc:
        print(f"geostat: error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"geostat: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
