"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 numerical
failure. Diagnostics go to stderr; data only to the named output files.
"""
from __future__ import annotations

import argparse
import csv
import os
import statistics
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np
from scipy import fft as sfft

from . import io as rio
from .grid import CmpGather, GridError, RadonImage, RegularGrid2
from .kernel import QuadratureError
from .operators import (DEFAULT_OVERSAMPLE, DEFAULT_THRESHOLD, PlanError, adjoint, direct_adjoint,
                        direct_forward, forward, plan)
from .sparse import IstaConfig, IstaError, ista, ista_masked, mute_and_split, read_polyline
from .spline import LatticeError
from .synthetics import MaskSpec, make_mask, read_event_spec, synth_gather

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4
EXAMPLE_SPEC = "three_events.txt"


class ConfigError(ValueError):
    """Inconsistent command-line options."""


def example_spec_path() -> Path:
    return Path(str(resources.files("hypradon") / "data" / EXAMPLE_SPEC))


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _splits(text: str) -> tuple[int, int]:
    try:
        a, b = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected two integers 'T,Q'") from None
    if a < 0 or b < 0:
        raise argparse.ArgumentTypeError("split counts must be non-negative")
    return a, b


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _sizes(text: str) -> list[int]:
    try:
        sizes = [int(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma-separated integers") from None
    if not sizes or min(sizes) < 8:
        raise argparse.ArgumentTypeError("sizes must be integers >= 8")
    return sizes


def _add_transform_options(sp):
    g = sp.add_argument_group("transform")
    g.add_argument("--ntau", type=_positive_int, help="intercept samples (default: as time axis)")
    g.add_argument("--nq", type=_positive_int, help="slowness samples (default: number of traces)")
    g.add_argument("--taumin", type=float, help="first intercept time (default: 10%% of record)")
    g.add_argument("--qmin", type=float, default=0.1, help="smallest slowness (default 0.1)")
    g.add_argument("--qmax", type=float, default=0.8, help="largest slowness (default 0.8)")
    g.add_argument("--splits", type=_splits, default=(1, 1), metavar="T,Q",
                   help="additional time and slowness cuts (default 1,1)")
    g.add_argument("--window-threshold", type=float, default=DEFAULT_THRESHOLD)
    g.add_argument("--oversample", type=float, default=DEFAULT_OVERSAMPLE)


def _add_ista_options(sp, iters=30):
    g = sp.add_argument_group("iteration")
    g.add_argument("--iters", type=_positive_int, default=iters)
    g.add_argument("--mu", type=float, help="sparsity weight (default 0.05 max|R f|)")
    g.add_argument("--mu-scale", type=float, default=1.0)
    g.add_argument("-c", "--step", dest="c", type=float, help="step scaling (default 0.95/||R||)")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    # SUPPRESS lets the flags appear before or after the subcommand
    common.add_argument("--threads", type=_positive_int, default=argparse.SUPPRESS,
                        help="FFT worker threads (default: all cores)")
    common.add_argument("--stats", action="store_true", default=argparse.SUPPRESS,
                        help="per-stage timings as CSV on stderr")
    ap = argparse.ArgumentParser(prog="hypradon", description="Fast hyperbolic Radon transforms.",
                                 parents=[common])
    sub = ap.add_subparsers(dest="command", required=True)

    def command(name, **kw):
        return sub.add_parser(name, parents=[common], **kw)

    sp = command("forward", help="gather -> Radon panel")
    sp.add_argument("input")
    sp.add_argument("-o", "--output", required=True)
    sp.add_argument("--method", choices=("logpolar", "direct"), default="logpolar")
    _add_transform_options(sp)

    sp = command("adjoint", help="Radon panel -> gather")
    sp.add_argument("input")
    sp.add_argument("-o", "--output", required=True)
    sp.add_argument("--like", required=True, help="gather whose grid defines the output")
    sp.add_argument("--method", choices=("logpolar", "direct"), default="logpolar")
    _add_transform_options(sp)

    sp = command("compare", help="normalized max error of a file against a reference")
    sp.add_argument("candidate")
    sp.add_argument("reference")

    sp = command("dottest", help="adjointness check on random fields")
    sp.add_argument("-n", "--size", type=_positive_int, default=128)
    sp.add_argument("--seed", type=int, default=0)
    _add_transform_options(sp)

    sp = command("demultiple", help="sparse panel, mute, subtract modelled multiples")
    sp.add_argument("input")
    sp.add_argument("--mute", required=True, help="polyline file of 'tau q' pairs")
    sp.add_argument("--prefix", required=True, help="output path prefix")
    _add_transform_options(sp)
    _add_ista_options(sp)

    sp = command("interpolate", help="fill missing traces")
    sp.add_argument("input")
    sp.add_argument("--prefix", required=True, help="output path prefix")
    m = sp.add_mutually_exclusive_group(required=True)
    m.add_argument("--mask", help="RSG field, nonzero on live samples")
    m.add_argument("--missing", type=float, help="kill this fraction of traces at random")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--truth", help="complete gather for error reporting")
    _add_transform_options(sp)
    _add_ista_options(sp)

    sp = command("bench", help="timing of log-polar and direct transforms")
    sp.add_argument("--sizes", type=_sizes, default=[128, 256, 512])
    sp.add_argument("--repeats", type=_positive_int, default=3)
    sp.add_argument("--direct-max", type=int, default=512, help="largest N timed with direct summation")
    sp.add_argument("-o", "--output", default="-", help="CSV path ('-' for stdout)")

    sp = command("synth", help="synthetic gather from an event list")
    sp.add_argument("--spec", help=f"event file (default: bundled {EXAMPLE_SPEC})")
    sp.add_argument("-o", "--output", required=True)
    sp.add_argument("--nt", type=_positive_int, default=512)
    sp.add_argument("--dt", type=float, default=0.004)
    sp.add_argument("--nx", type=_positive_int, default=512)
    sp.add_argument("--dx", type=float, default=0.004)
    sp.add_argument("--noise", type=float, default=0.0)
    sp.add_argument("--seed", type=int, default=0)

    sp = command("render", help="16-bit PGM image of an RSG/CSV file")
    sp.add_argument("input")
    sp.add_argument("-o", "--output", required=True)
    sp.add_argument("--clip", type=float, default=99.0, help="clip percentile in (50, 100]")
    return ap


def _radon_grid(args, data_grid: RegularGrid2) -> RegularGrid2:
    ntau = args.ntau or data_grid.n1
    nq = args.nq or data_grid.n2
    taumin = args.taumin if args.taumin is not None else data_grid.o1 + 0.1 * (data_grid.end1 - data_grid.o1)
    if not 0 < args.qmin < args.qmax:
        raise ConfigError("need 0 < qmin < qmax")
    if not data_grid.o1 < taumin < data_grid.end1:
        raise ConfigError("taumin must lie inside the time axis")
    if ntau < 2 or nq < 2:
        raise ConfigError("need at least 2 intercept and 2 slowness samples")
    return RegularGrid2(ntau, nq, taumin, (data_grid.end1 - taumin) / (ntau - 1),
                        args.qmin, (args.qmax - args.qmin) / (nq - 1))


def _check_transform_args(args):
    if not 0 < args.window_threshold < 1:
        raise ConfigError("--window-threshold must lie in (0, 1)")
    if not args.oversample >= 1:
        raise ConfigError("--oversample must be >= 1")


def _plan(args, data_grid, radon_grid):
    _check_transform_args(args)
    return plan(data_grid, radon_grid, splits=args.splits, oversample=args.oversample,
                window_threshold=args.window_threshold)


def _emit_stats(args, p, extra=None):
    if not args.stats:
        return
    rows = dict(p.last_stats.as_dict()) if p is not None and p.last_stats else {}
    rows.update(extra or {})
    rows.pop("lattice_shapes", None)
    _log("stage,seconds")
    for k, v in rows.items():
        if k.startswith("seconds_"):
            _log(f"{k[8:]},{v:.6f}")


def cmd_forward(args) -> int:
    gather = rio.read_gather(args.input)
    rg = _radon_grid(args, gather.grid)
    if args.method == "direct":
        t0 = time.perf_counter()
        out = direct_forward(gather, rg)
        _emit_stats(args, None, {"seconds_total": time.perf_counter() - t0})
    else:
        p = _plan(args, gather.grid, rg)
        out = forward(p, gather)
        _emit_stats(args, p)
    rio.write_rsg(args.output, out)
    return EXIT_OK


def cmd_adjoint(args) -> int:
    image = rio.read_image(args.input)
    like = rio.read_gather(args.like)
    if args.method == "direct":
        t0 = time.perf_counter()
        out = direct_adjoint(image, like.grid)
        _emit_stats(args, None, {"seconds_total": time.perf_counter() - t0})
    else:
        _check_transform_args(args)
        p = plan(like.grid, image.grid, splits=args.splits, oversample=args.oversample,
                 window_threshold=args.window_threshold)
        out = adjoint(p, image)
        _emit_stats(args, p)
    rio.write_rsg(args.output, out)
    return EXIT_OK


def normalized_max_error(candidate, reference) -> float:
    ref = np.asarray(reference, dtype=np.float64)
    scale = np.abs(ref).max()
    diff = np.abs(np.asarray(candidate, dtype=np.float64) - ref).max()
    return float(diff / scale) if scale > 0 else float(diff)


def cmd_compare(args) -> int:
    ga, a = rio.read_rsg(args.candidate)
    gb, b = rio.read_rsg(args.reference)
    if ga.shape != gb.shape:
        raise ConfigError(f"shapes differ: {ga.shape} vs {gb.shape}")
    err = normalized_max_error(a, b)
    rel = float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))
    _log(f"normalized_max_error={err:.6e} relative_l2={rel:.6e}")
    return EXIT_OK


def dot_test(p, seed: int = 0) -> float:
    """``|<R f, g> - <f, R* g>| / (||R f|| ||g||)`` for random ``f`` and ``g``."""
    rng = np.random.default_rng(seed)
    f = CmpGather(p.data_grid, rng.standard_normal(p.data_grid.shape))
    g = RadonImage(p.radon_grid, rng.standard_normal(p.radon_grid.shape))
    rf = forward(p, f).data
    rg_ = adjoint(p, g).data
    lhs = float(np.vdot(rf, g.data))
    rhs = float(np.vdot(f.data, rg_))
    return abs(lhs - rhs) / (np.linalg.norm(rf) * np.linalg.norm(g.data))


def benchmark_grids(n: int) -> tuple[RegularGrid2, RegularGrid2]:
    """Square ``n x n`` gather and panel on a 2.048 s by 2.048 km record."""
    d = 2.048 / n
    data = RegularGrid2(n, n, 0.0, d, 0.0, d)
    taumin = 0.35
    radon = RegularGrid2(n, n, taumin, (data.end1 - taumin) / (n - 1), 0.2, 0.6 / (n - 1))
    return data, radon


def cmd_dottest(args) -> int:
    dg, rg = benchmark_grids(args.size)
    p = _plan(args, dg, rg)
    rel = dot_test(p, args.seed)
    _log(f"dot_test_relative_discrepancy={rel:.3e}")
    _emit_stats(args, p)
    return EXIT_OK


def _ista_config(args, p, f, mask=None):
    try:
        return IstaConfig.for_plan(p, f, mu=args.mu, c=args.c, n_iters=args.iters, mask=mask,
                                   mu_scale=args.mu_scale)
    except IstaError as exc:
        raise ConfigError(str(exc)) from None


def cmd_demultiple(args) -> int:
    f = rio.read_gather(args.input)
    boundary = read_polyline(args.mute)
    rg = _radon_grid(args, f.grid)
    p = _plan(args, f.grid, rg)
    cfg = _ista_config(args, p, f)
    g, trace = ista(p, f, cfg)
    prim, mult = mute_and_split(g, boundary)
    mult_gather = adjoint(p, mult)
    prim_gather = adjoint(p, prim)
    rio.write_rsg(f"{args.prefix}panel.rsg", g)
    rio.write_rsg(f"{args.prefix}primaries.rsg", prim_gather)
    rio.write_rsg(f"{args.prefix}multiples.rsg", mult_gather)
    rio.write_rsg(f"{args.prefix}subtracted.rsg", f - mult_gather)
    _log(f"iterations={len(trace)} objective={trace.objective[-1]:.6e} nonzeros={trace.nonzeros[-1]}")
    _emit_stats(args, p)
    return EXIT_OK


def cmd_interpolate(args) -> int:
    f = rio.read_gather(args.input)
    if args.mask:
        mgrid, mdata = rio.read_rsg(args.mask)
        if mgrid.shape != f.grid.shape:
            raise ConfigError("mask shape does not match the gather")
        mask = mdata != 0
    else:
        try:
            mask = make_mask(f.grid, MaskSpec(args.missing, args.seed))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    truth = rio.read_gather(args.truth) if args.truth else None
    if truth is not None and truth.grid.shape != f.grid.shape:
        raise ConfigError("truth shape does not match the gather")
    rg = _radon_grid(args, f.grid)
    p = _plan(args, f.grid, rg)
    live = f.with_data(np.where(mask, f.data, 0.0))
    cfg = _ista_config(args, p, live, mask=mask)
    g, trace = ista_masked(p, live, cfg)
    rec = adjoint(p, g)
    rio.write_rsg(f"{args.prefix}panel.rsg", g)
    rio.write_rsg(f"{args.prefix}reconstructed.rsg", rec)
    _log(f"iterations={len(trace)} objective={trace.objective[-1]:.6e} nonzeros={trace.nonzeros[-1]}")
    if truth is not None and (~mask).any():
        dead = ~mask
        err = np.linalg.norm((rec.data - truth.data)[dead]) / max(np.linalg.norm(truth.data[dead]), 1e-300)
        _log(f"masked_relative_l2={err:.6e}")
    _emit_stats(args, p)
    return EXIT_OK


def _median_time(fn, repeats: int) -> float:
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def run_bench(sizes, repeats: int = 3, direct_max: int = 512, seed: int = 0) -> list[dict]:
    """Median forward times; ``ratio_vs_direct`` is direct time over log-polar time."""
    rows = []
    rng = np.random.default_rng(seed)
    for n in sizes:
        dg, rg = benchmark_grids(n)
        f = CmpGather(dg, rng.standard_normal(dg.shape))
        p = plan(dg, rg)
        forward(p, f)
        t_lp = _median_time(lambda: forward(p, f), repeats)
        t_dir = _median_time(lambda: direct_forward(f, rg), 1) if n <= direct_max else float("nan")
        rows.append({"N": n, "method": "logpolar", "seconds": t_lp, "ratio_vs_direct": t_dir / t_lp})
        rows.append({"N": n, "method": "direct", "seconds": t_dir, "ratio_vs_direct": 1.0})
    return rows


def cmd_bench(args) -> int:
    rows = run_bench(args.sizes, args.repeats, args.direct_max)
    fh = sys.stdout if args.output == "-" else open(args.output, "w", newline="")
    try:
        w = csv.DictWriter(fh, fieldnames=["N", "method", "seconds", "ratio_vs_direct"], lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{v:.6g}" if isinstance(v, float) else v) for k, v in r.items()})
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


def cmd_synth(args) -> int:
    spec = args.spec or example_spec_path()
    try:
        events = read_event_spec(spec)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    grid = RegularGrid2(args.nt, args.nx, 0.0, args.dt, 0.0, args.dx)
    if args.noise < 0:
        raise ConfigError("--noise must be non-negative")
    try:
        gather = synth_gather(grid, events, args.noise, args.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    rio.write_rsg(args.output, gather)
    return EXIT_OK


def cmd_render(args) -> int:
    if not 50 < args.clip <= 100:
        raise ConfigError("--clip must lie in (50, 100]")
    if str(args.input).lower().endswith(".csv"):
        data = rio.read_csv_gather(args.input).data
    else:
        data = rio.read_rsg(args.input)[1]
    rio.render_pgm(data, args.output, args.clip)
    return EXIT_OK


COMMANDS = {
    "forward": cmd_forward, "adjoint": cmd_adjoint, "compare": cmd_compare, "dottest": cmd_dottest,
    "demultiple": cmd_demultiple, "interpolate": cmd_interpolate, "bench": cmd_bench,
    "synth": cmd_synth, "render": cmd_render,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args.threads = getattr(args, "threads", os.cpu_count() or 1)
    args.stats = getattr(args, "stats", False)
    try:
        with sfft.set_workers(args.threads):
            return COMMANDS[args.command](args)
    except (ConfigError, GridError, PlanError, LatticeError) as exc:
        _log(f"hypradon: configuration error: {exc}")
        return EXIT_CONFIG
    except (OSError, rio.RsgFormatError, rio.CsvFormatError) as exc:
        _log(f"hypradon: I/O error: {exc}")
        return EXIT_IO
    except (QuadratureError, IstaError, FloatingPointError, np.linalg.LinAlgError) as exc:
        _log(f"hypradon: numerical failure: {exc}")
        return EXIT_NUMERIC
    except ValueError as exc:
        _log(f"hypradon: configuration error: {exc}")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
