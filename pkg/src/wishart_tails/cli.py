"""Command-line entry point: curves, outage, simulations and the invariant suite.

Curves go out as CSV with a fixed header, summaries as JSON.  Numbers carry
12 significant digits.  Exit codes: 0 success, 1 invariant breach,
2 invalid input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import logging
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import distributions as dist
from .core import BracketError, DomainError, Receiver, SystemParams, mp_edges
from .distributions import CoverageError, CurveKind
from .ratefn import (
    DegenerateVarianceWarning,
    InfeasibleError,
    ergodic_stats,
    rate_function,
    solve_tilt,
)
from .weights import weight_profile

log = logging.getLogger("wishart_tails")

EXIT_OK, EXIT_BREACH, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3
SIG_DIGITS = 12

RATE_HEADER = [
    "z", "regime", "pole", "lambda", "k", "w", "detached_weight", "rate",
    "logpdf_analytic", "logpdf_gaussian", "logpdf_gamma_fit",
]
WEIGHTS_HEADER = ["z", "regime", "part", "x", "t", "w"]
HIST_HEADER = [
    "bin_lo", "bin_hi", "center", "count", "density", "stderr",
    "analytic", "gaussian", "gamma_fit",
]
COND_HEADER = ["z_lo", "z_hi", "x_lo", "x_hi", "x_center", "count", "mean_t", "se_t", "theory_t"]


class UsageError(ValueError):
    pass


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.{SIG_DIGITS}g}"


def _round(v):
    """JSON-safe value with 12 significant digits; non-finite floats become strings."""
    if isinstance(v, dict):
        return {k: _round(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_round(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if not math.isfinite(v):
            return str(v)
        return float(f"{v:.{SIG_DIGITS}g}")
    return v


@contextlib.contextmanager
def _open_out(path):
    if path in (None, "-"):
        yield sys.stdout
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            yield fh


def write_csv(path, header, rows):
    with _open_out(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def write_json(path, obj):
    with _open_out(path) as fh:
        json.dump(_round(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def emit(args, header, rows):
    """Curve rows as CSV, or as a JSON list of records with --format json."""
    if getattr(args, "format", "csv") == "json":
        write_json(args.out, [dict(zip(header, r)) for r in rows])
    else:
        write_csv(args.out, header, rows)


def parse_range(text: str) -> np.ndarray:
    """``min:max:step`` (inclusive of max up to rounding) or a comma list."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise UsageError(f"range must be min:max:step, got {text!r}")
        lo, hi, step = (float(p) for p in parts)
        if not (step > 0 and hi >= lo):
            raise UsageError(f"bad range {text!r}: need max >= min and step > 0")
        n = int(math.floor((hi - lo) / step + 1e-9)) + 1
        return lo + step * np.arange(n)
    try:
        return np.array([float(p) for p in text.split(",") if p.strip()])
    except ValueError:
        raise UsageError(f"cannot parse z values {text!r}") from None


def parse_bin(text: str):
    try:
        vals = [float(p) for p in text.split(":")]
    except ValueError:
        raise UsageError(f"cannot parse z-bin {text!r}") from None
    if len(vals) != 2 or not vals[1] > vals[0]:
        raise UsageError(f"z-bin must be lo:hi with lo < hi, got {text!r}")
    return float(vals[0]), float(vals[1])


def build_params(args, need_dims: bool = False, need_alpha: bool = True) -> SystemParams:
    receiver = Receiver(args.receiver)
    rho = args.rho
    if receiver is Receiver.MMSE and rho is None:
        raise UsageError("the MMSE receiver needs --rho")
    if receiver is Receiver.ZF and rho is not None:
        log.warning("ZF: rho only rescales z into the SINR beta = rho z")
    if args.M is not None or args.N is not None:
        if args.M is None or args.N is None:
            raise UsageError("--M and --N must be given together")
        if args.alpha is not None and not math.isclose(args.alpha, args.M / args.N):
            raise UsageError(f"--alpha {args.alpha} contradicts M/N = {args.M / args.N}")
        return SystemParams.from_dims(args.M, args.N, rho, receiver)
    if need_dims:
        raise UsageError("this command needs --M and --N")
    if args.alpha is None:
        raise UsageError("give --alpha or --M/--N")
    return SystemParams(args.alpha, rho, receiver)


def default_z_range(params: SystemParams) -> np.ndarray:
    """z_erg +- 8 standard deviations (N = 1 scale without dimensions), 400 points."""
    stats = ergodic_stats(params)
    N = params.N or 1
    sigma = max(math.sqrt(stats.v_erg / N), 1.0 / N)
    lo = max(stats.z_erg - 8 * sigma, 1e-3 * sigma)
    return np.linspace(lo, stats.z_erg + 8 * sigma, 400)


# -- commands -----------------------------------------------------------------


def cmd_edges(args) -> int:
    sup = mp_edges(args.alpha)
    rec = {"alpha": args.alpha, "a": sup.a, "b": sup.b}
    if args.format == "csv":
        write_csv(args.out, ["alpha", "a", "b"], [[args.alpha, sup.a, sup.b]])
    else:
        write_json(args.out, rec)
    return EXIT_OK


def _safe(fn, *a):
    try:
        return fn(*a)
    except DomainError:
        return None


def cmd_rate(args) -> int:
    params = build_params(args)
    stats = ergodic_stats(params)
    zs = parse_range(args.z) if args.z else default_z_range(params)
    if zs.size and zs[0] <= stats.z_erg <= zs[-1]:
        zs = np.union1d(zs, [stats.z_erg])
    zs = zs[zs > 0]
    has_dims = params.N is not None
    rows = []
    for z in zs:
        sol = solve_tilt(float(z), params)
        la = lg = lf = None
        if has_dims:
            la = float(dist.analytic_logpdf(z, params))
            lg = _safe(dist.gaussian_logpdf, z, params)
            lf = _safe(lambda zz, p: float(dist.gamma_fit_law(p).logpdf(zz)), z, params)
        rows.append([
            z, sol.regime.value, sol.pole, sol.lam, sol.k, sol.w, sol.detached_weight,
            rate_function(float(z), params), la, lg, lf,
        ])
    emit(args, RATE_HEADER, rows)
    return EXIT_OK


def _kinds(args, params):
    if args.kinds:
        return [CurveKind(k) for k in args.kinds.split(",")]
    kinds = [CurveKind.ANALYTIC, CurveKind.GAUSSIAN, CurveKind.GAMMA_FIT]
    if params.is_zf:
        kinds.append(CurveKind.EXACT)
    if ergodic_stats(params).v_erg <= 0:
        kinds.remove(CurveKind.GAUSSIAN)
    return kinds


def cmd_pdf(args) -> int:
    params = build_params(args, need_dims=True)
    grid = dist.default_grid(params, args.grid_size)
    curve = dist.normalize(grid, params)
    kinds = _kinds(args, params)
    cols = [np.exp(dist.density_logpdf(grid, params, k)) for k in kinds]
    log.info("trapezoid mass of the analytic curve: %.9f", curve.mass())
    header = ["z", "sinr"] + [f"pdf_{k.value}" for k in kinds]
    rows = [[z, s, *vals] for z, s, *vals in zip(grid, dist.to_sinr(grid, params), *cols)]
    emit(args, header, rows)
    return EXIT_OK


def cmd_outage(args) -> int:
    params = build_params(args, need_dims=True)
    target = 10 ** (args.target_db / 10) if args.target_db is not None else args.target
    if target is None:
        raise UsageError("give --target or --target-db")
    res = dist.outage(target, params, args.method)
    write_json(args.out, {
        "target_sinr": res.target,
        "target_z": float(dist.from_sinr(res.target, params)),
        "probability": res.probability,
        "method": res.method.value,
        "receiver": params.receiver.value,
        "M": params.M,
        "N": params.N,
        "rho": params.rho,
    })
    return EXIT_OK


def fig1_z_values(alpha: float) -> np.ndarray:
    r = math.sqrt(alpha)
    vals = [alpha - r - 0.5, alpha - r, alpha, alpha + r, 2 * alpha]
    return np.array([v for v in vals if v > 0])


def cmd_weights(args) -> int:
    params = build_params(args)
    zs = fig1_z_values(params.alpha) if args.z is None else parse_range(args.z)
    rows = []
    for z in zs:
        prof = weight_profile(float(z), params, args.grid_size)
        regime = solve_tilt(float(z), params).regime.value
        for x, t in zip(prof.xs, prof.ts):
            rows.append([z, regime, "bulk", x, t, None])
        if prof.detached is not None:
            d = prof.detached
            rows.append([z, regime, "detached", d.y, d.T, d.w])
    emit(args, WEIGHTS_HEADER, rows)
    return EXIT_OK


def _bin_masses(cdf, edges):
    F = cdf(edges)
    return np.diff(F) / np.diff(edges)


def cmd_mc(args) -> int:
    from . import montecarlo as mc

    params = build_params(args, need_dims=True)
    if args.samples < mc.simulate.MIN_SAMPLES:
        raise UsageError(f"--samples must be at least {mc.simulate.MIN_SAMPLES}")
    workers = args.workers if args.workers is not None else mc.simulate.default_workers()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    hist, summary, z = mc.run_histogram(
        params, args.samples, args.seed, bins=args.bins, workers=workers, all_streams=args.all_streams
    )
    kinds = _kinds(argparse.Namespace(kinds=None), params)
    cdfs = {k.value: dist.cdf_function(params, k) for k in kinds}
    cols = {k: _bin_masses(f, hist.edges) for k, f in cdfs.items()}
    rows = []
    for i in range(len(hist.counts)):
        rows.append([
            hist.edges[i], hist.edges[i + 1], hist.centers[i], hist.counts[i],
            hist.density[i], hist.stderr[i],
            cols["analytic"][i],
            cols["gaussian"][i] if "gaussian" in cols else None,
            cols["gamma_fit"][i],
        ])
    write_csv(out / f"{args.prefix}_hist.csv", HIST_HEADER, rows)

    report = {
        "config": {
            "M": params.M, "N": params.N, "rho": params.rho, "receiver": params.receiver.value,
            "samples": args.samples, "seed": args.seed, "bins": args.bins,
            "all_streams": args.all_streams, "window": [hist.edges[0], hist.edges[-1]],
        },
        "z": summary.__dict__,
        "outside_window": {"below": hist.below, "above": hist.above},
        "tv": {k: mc.histogram_tv(hist, f) for k, f in cdfs.items()},
    }
    if args.all_streams:
        # all N entries of a draw are correlated, so KS p-values would be wrong
        report["ks"] = None
        report["ks_note"] = "skipped: --all-streams samples are not independent"
    else:
        report["ks"] = {k: mc.ks_statistic(z, f) for k, f in cdfs.items()}
        report["ks_critical_1pct"] = mc.ks_critical(z.size)
    if params.rho is not None:
        report["sinr"] = {"mean": summary.mean * params.rho, "mean_se": summary.mean_se * params.rho}

    if args.weights_z:
        from .weights import conditional_weight

        bins = [parse_bin(b) for b in args.weights_z]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", mc.EmptyBinWarning)
            stats = mc.run_conditional_weights(
                params, args.samples, args.seed, bins, x_bins=args.x_bins,
                min_count=args.min_count, workers=workers, all_streams=args.all_streams,
            )
        crow = []
        extremes = []
        for st in stats:
            zmid = 0.5 * sum(st.z_bin)
            theory = np.asarray(conditional_weight(st.x_centers, zmid, params))
            for j in range(len(st.counts)):
                crow.append([
                    st.z_bin[0], st.z_bin[1], st.x_edges[j], st.x_edges[j + 1], st.x_centers[j],
                    st.counts[j], st.mean_t[j], st.se_t[j], theory[j],
                ])
            extremes.append({
                "z_bin": list(st.z_bin), "samples": st.samples,
                "top_weight": st.top_weight, "top_weight_se": st.top_weight_se,
                "top_position": st.top_position, "top_position_se": st.top_position_se,
                "bottom_weight": st.bottom_weight, "bottom_weight_se": st.bottom_weight_se,
                "bottom_position": st.bottom_position, "bottom_position_se": st.bottom_position_se,
            })
        write_csv(out / f"{args.prefix}_weights.csv", COND_HEADER, crow)
        report["conditional"] = extremes
    write_json(out / f"{args.prefix}_summary.json", report)
    log.info("wrote %s_hist.csv and %s_summary.json to %s", args.prefix, args.prefix, out)
    return EXIT_OK


def cmd_verify(args) -> int:
    from . import verify

    receivers = [args.receiver] if args.receiver else None
    alphas = [args.alpha] if args.alpha is not None else verify.ALPHAS
    rhos = [args.rho] if args.rho is not None else verify.RHOS
    grid = verify.parameter_grid(alphas, rhos, receivers)
    report = verify.run_suite(grid, fault=args.self_test_fault, quick=args.quick)
    print(verify.format_report(report), file=sys.stderr)
    write_json(args.out, report.to_dict())
    return EXIT_OK if report.passed else EXIT_BREACH


# -- argument parsing ---------------------------------------------------------


def _add_system(p, dims: bool = True):
    p.add_argument("--alpha", type=float, help="M/N (implied by --M/--N)")
    if dims:
        p.add_argument("--M", type=int, help="receive antennas")
        p.add_argument("--N", type=int, help="transmitted streams")
    p.add_argument("--rho", type=float, help="SNR per stream (linear)")
    p.add_argument("--receiver", choices=[r.value for r in Receiver], default="mmse")


def _add_out(p, default_format="csv"):
    p.add_argument("--out", default="-", help="output file, '-' for stdout")
    p.add_argument("--format", choices=["csv", "json"], default=default_format)


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wishart-tails",
        description="Large-deviation tails of MMSE/ZF SINR in Gaussian MIMO channels.",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("edges", help="Marchenko-Pastur support [a, b]")
    p.add_argument("--alpha", type=float, required=True)
    _add_out(p, "json")
    p.set_defaults(func=cmd_edges)

    p = sub.add_parser("rate", help="saddle point, rate function and log-densities over z")
    _add_system(p)
    p.add_argument("--z", help="min:max:step or comma list (default: z_erg +- 8 sd)")
    _add_out(p)
    p.set_defaults(func=cmd_rate)

    p = sub.add_parser("pdf", help="normalized densities of z on the adaptive grid")
    _add_system(p)
    p.add_argument("--grid-size", type=int, default=dist.DEFAULT_GRID)
    p.add_argument("--kinds", help="comma list of analytic,gaussian,gamma_fit,exact")
    _add_out(p)
    p.set_defaults(func=cmd_pdf)

    p = sub.add_parser("outage", help="P(SINR < target)")
    _add_system(p)
    p.add_argument("--target", type=float, help="target SINR, linear")
    p.add_argument("--target-db", type=float, help="target SINR in dB")
    p.add_argument("--method", default="analytic", choices=["analytic", "gaussian", "gamma_fit", "exact"])
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_outage)

    p = sub.add_parser("weights", help="mean eigenvector weight profiles t(x|z)")
    _add_system(p)
    p.add_argument("--z", help="z values (default: the five reference values for this alpha)")
    p.add_argument("--grid-size", type=int, default=201)
    _add_out(p)
    p.set_defaults(func=cmd_weights)

    p = sub.add_parser("mc", help="Monte-Carlo histogram, KS/TV summary, conditional weights")
    _add_system(p)
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, help="worker processes (default: $WISHART_TAILS_WORKERS or 1)")
    p.add_argument("--bins", type=int, default=64)
    p.add_argument("--all-streams", action="store_true", help="use all N diagonal entries of each draw")
    p.add_argument("--weights-z", action="append", metavar="LO:HI", help="condition eigenvector weights on z in [LO, HI]")
    p.add_argument("--x-bins", type=int, default=16)
    p.add_argument("--min-count", type=int, default=100)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--prefix", default="mc")
    p.set_defaults(func=cmd_mc)

    p = sub.add_parser("verify", help="run the invariant suites")
    p.add_argument("--alpha", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--receiver", choices=[r.value for r in Receiver])
    p.add_argument("--quick", action="store_true", help="fewer points per family")
    p.add_argument("--self-test-fault", action="store_true", help="inject a failing invariant")
    p.add_argument("--out", default="-", help="JSON report path")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", DegenerateVarianceWarning)
            code = args.func(args)
        for w in caught:
            log.warning("%s", w.message)
        return code
    except BrokenPipeError:
        # downstream closed the pipe (e.g. `| head`); not an error of ours
        sys.stderr.close()
        return EXIT_OK
    except (BracketError, CoverageError, InfeasibleError, ArithmeticError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, DomainError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
