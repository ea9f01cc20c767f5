"""Command-line harness: accuracy sweeps, scaling benchmarks, validation.

Subcommands
-----------
accuracy   Table-style error sweep against a high-order reference run.
bench      Wall-time scaling over a particle-count sweep with a fitted
           exponent.
validate   Runs the cross-module invariant checks; nonzero exit on any
           failure.

Configuration comes from an INI file (section [hfmm]) plus flag
overrides.  Output is CSV (versioned header) or JSON with the same
fields.  Exit codes: 0 pass, 1 validation failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
import time

import numpy as np

from . import expansions as ex
from .driver import RunConfig, direct_apply, error_metric, fmm_apply
from .greens import (MediaConfig, Point2, QuadratureConvergenceError, free_space,
                     free_space_spectral, scattered_batch, scattered_direct)
from .layered import TranslationGeometry, compute_A
from .quadrature import SommerfeldRules
from .tree import Particle

CSV_VERSION = "# hfmm-csv v1"
CSV_HEADER = "scenario,media,k,alpha,P,N,metric,value,seconds"


def build_media(args) -> MediaConfig:
    if args.media == "free":
        return MediaConfig.free(args.k)
    if args.media == "two-layer":
        return MediaConfig.two_layer(args.k, args.alpha)
    return MediaConfig.three_layer(args.k1, args.k2, args.k3, args.d)


def grid_particles(nx: int, ny: int, center=(0.0, 1.5), side=1.0):
    gx = np.linspace(center[0] - side / 2, center[0] + side / 2, nx)
    gy = np.linspace(center[1] - side / 2, center[1] + side / 2, ny)
    X, Y = np.meshgrid(gx, gy)
    return X.ravel(), Y.ravel()


def random_particles(seed: int, n: int, center=(0.0, 1.5), side=1.0):
    rng = np.random.default_rng(seed)
    xs = rng.uniform(center[0] - side / 2, center[0] + side / 2, n)
    ys = rng.uniform(center[1] - side / 2, center[1] + side / 2, n)
    return xs, ys


def _particles(xs, ys, qs):
    return [Particle(Point2(x, y), q) for x, y, q in zip(xs, ys, qs)]


def _run_config(args, media, order):
    policy, cache = args.tables, ""
    if policy.startswith("cache="):
        policy, cache = "precompute", policy[len("cache="):]
    return RunConfig(media=media, order=order, leaf_capacity=args.leaf_size,
                     table_policy=policy, table_cache=cache, threads=args.threads)


def _row(args, media, P, N, metric, value, seconds):
    return {
        "scenario": args.command,
        "media": media.variant,
        "k": media.k1,
        "alpha": media.alpha if media.variant == "two-layer" else "",
        "P": P,
        "N": N,
        "metric": metric,
        "value": value,
        "seconds": 0.0 if args.timings == "none" else round(seconds, 3),
    }


def cmd_accuracy(args):
    media = build_media(args)
    if args.n == int(round(np.sqrt(args.n)) ** 2):
        nx = int(round(np.sqrt(args.n)))
        xs, ys = grid_particles(nx, nx)
    else:
        xs, ys = random_particles(args.seed, args.n)
    rng = np.random.default_rng(args.seed)
    qs = rng.normal(size=len(xs))
    parts = _particles(xs, ys, qs)

    t0 = time.perf_counter()
    ref = fmm_apply(parts, _run_config(args, media, args.p_ref))
    t_ref = time.perf_counter() - t0
    rows = [_row(args, media, args.p_ref, args.n, "reference", 0.0, t_ref)]
    for P in args.p:
        t1 = time.perf_counter()
        out = fmm_apply(parts, _run_config(args, media, P))
        dt = time.perf_counter() - t1
        err = error_metric(ref, out, len(parts))
        rows.append(_row(args, media, P, args.n, "E_p", err, dt))
    return rows, 0


def cmd_bench(args):
    if not args.n_list:
        raise UsageError("bench requires a nonempty --n sweep")
    media = build_media(args)
    P = args.p[0] if args.p else 16
    rows, totals = [], []
    for N in args.n_list:
        xs, ys = random_particles(args.seed, N)
        rng = np.random.default_rng(args.seed)
        qs = rng.normal(size=N)
        parts = _particles(xs, ys, qs)
        out = fmm_apply(parts, _run_config(args, media, P))
        hide = args.timings == "none"  # timing values are nondeterministic
        for phase in ("build", "upward", "downward", "near", "total"):
            rows.append(_row(args, media, P, N, f"time_{phase}",
                             0.0 if hide else round(out.timings[phase], 6),
                             out.timings[phase]))
        totals.append(out.timings["total"])
    if len(args.n_list) >= 2:
        beta = float(np.polyfit(np.log(args.n_list), np.log(totals), 1)[0])
        rows.append(_row(args, media, P, 0, "beta",
                         0.0 if args.timings == "none" else round(beta, 4),
                         sum(totals)))
        print(f"fitted scaling exponent beta = {beta:.4f}")
    return rows, 0


# ---------------------------------------------------------------------------
# validation checks


def check_sommerfeld_identity(seed=11, alpha=1.0):
    rng = np.random.default_rng(seed)
    rules = SommerfeldRules.default()
    worst = 0.0
    for k in (0.1, 1.0):
        for _ in range(25):
            x0 = Point2(rng.uniform(-1, 1), rng.uniform(0.5, 2.0))
            x = Point2(x0.x + rng.uniform(0.5, 3.0) * rng.choice([-1, 1]),
                       x0.y + rng.uniform(0.5, 3.0))
            d = abs(free_space_spectral(k, x, x0, rules) - free_space(k, x, x0))
            worst = max(worst, d)
    return worst, worst <= 1e-10


def check_boundary_residual(alpha=1.0):
    """Impedance condition du/dn - i*alpha*u = 0 on y = 0 (n = -y)."""
    from .greens import domain_green
    media = MediaConfig.two_layer(1.0, 1.0)
    x0 = Point2(0.0, 1.0)
    h = 1e-5
    worst = 0.0
    for xx in np.linspace(-2.0, 2.0, 20):
        up = domain_green(media, Point2(xx, h), x0)
        dn = domain_green(media, Point2(xx, -h), x0)
        u0 = domain_green(media, Point2(xx, 0.0), x0)
        dudn = -(up - dn) / (2 * h)
        worst = max(worst, abs(dudn - 1j * alpha * u0) / abs(u0))
    return worst, worst <= 1e-6


def check_reciprocity(seed=12, alpha=1.0):
    rng = np.random.default_rng(seed)
    media = MediaConfig.two_layer(1.0, alpha)
    worst = 0.0
    for _ in range(10):
        a = Point2(rng.uniform(-1, 1), rng.uniform(0.2, 2.0))
        b = Point2(rng.uniform(-1, 1), rng.uniform(0.2, 2.0))
        worst = max(worst, abs(scattered_direct(media, a, b)
                               - scattered_direct(media, b, a)))
    return worst, worst <= 1e-12


def check_equal_wavenumber(seed=13, alpha=1.0):
    media = MediaConfig.three_layer(1.0, 1.0, 1.0, 0.7)
    rng = np.random.default_rng(seed)
    dx = rng.uniform(-2, 2, 20)
    dy = rng.uniform(0.3, 3.0, 20)
    worst = float(np.abs(scattered_batch(media, dx, dy, 1e-13)).max())
    return worst, worst <= 1e-12


def check_alpha_zero_mirror(seed=14, alpha=0.0):
    media = MediaConfig.two_layer(1.0, alpha)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(10):
        x0 = Point2(rng.uniform(-1, 1), rng.uniform(0.2, 2.0))
        x = Point2(rng.uniform(-1, 1), rng.uniform(0.2, 2.0))
        image = Point2(x0.x, -x0.y)
        worst = max(worst, abs(scattered_direct(media, x, x0)
                               - free_space(media.k1, x, image)))
    return worst, worst <= 1e-12


def check_toeplitz(alpha=1.0):
    media = MediaConfig.two_layer(1.0, alpha)
    P = 12
    entries = compute_A(TranslationGeometry(dx=0.25, dy=2.5), media, P,
                        SommerfeldRules.default())
    p = np.arange(-P, P + 1)
    mat = entries[(p[None, :] - p[:, None]) + 2 * P]
    worst = 0.0
    for d in range(-2 * P, 2 * P + 1):
        diag = np.diagonal(mat, offset=d)
        if len(diag):
            worst = max(worst, float(np.abs(diag - entries[d + 2 * P]).max() /
                                     max(np.abs(entries[d + 2 * P]), 1.0)))
    return worst, worst <= 1e-14


def check_oracle_agreement(seed=15, alpha=1.0):
    rng = np.random.default_rng(seed)
    n = 120
    media = MediaConfig.two_layer(1.0, alpha)
    parts = _particles(rng.uniform(-0.5, 0.5, n), rng.uniform(0.5, 1.5, n),
                       rng.normal(size=n))
    ref = direct_apply(parts, media, tol=1e-12)
    out = fmm_apply(parts, RunConfig(media=media, order=22, leaf_capacity=25))
    err = error_metric(ref, out, n)
    return err, err <= 1e-9


VALIDATION_CHECKS = [
    ("sommerfeld-identity", check_sommerfeld_identity),
    ("boundary-residual", check_boundary_residual),
    ("reciprocity", check_reciprocity),
    ("equal-wavenumber-three-layer", check_equal_wavenumber),
    ("alpha-zero-mirror", check_alpha_zero_mirror),
    ("toeplitz", check_toeplitz),
    ("oracle-agreement", check_oracle_agreement),
]


def cmd_validate(args):
    if args.list:
        for name, _ in VALIDATION_CHECKS:
            print(name)
        return [], 0
    media = build_media(args)
    rows, failed = [], False
    for name, fn in VALIDATION_CHECKS:
        t0 = time.perf_counter()
        try:
            value, ok = fn()
            note = ""
        except (ValueError, ArithmeticError, QuadratureConvergenceError) as exc:
            value, ok, note = float("nan"), False, f": {exc}"
        dt = time.perf_counter() - t0
        failed = failed or not ok
        print(f"{name}: {'pass' if ok else 'FAIL'} (measure {value:.3e}{note})")
        rows.append(_row(args, media, 0, 0, name, value, dt))
    return rows, (1 if failed else 0)


# ---------------------------------------------------------------------------
# plumbing


class UsageError(Exception):
    pass


def _format_value(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_rows(rows, out_path, fmt):
    if fmt == "csv":
        lines = [CSV_VERSION, CSV_HEADER]
        for r in rows:
            lines.append(",".join(_format_value(r[c]) for c in CSV_HEADER.split(",")))
        text = "\n".join(lines) + "\n"
    else:
        text = json.dumps({"format": "hfmm-json v1", "rows": rows},
                          indent=2, sort_keys=True) + "\n"
    if out_path:
        with open(out_path, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


def _int_list(text):
    return [int(v) for v in str(text).split(",") if v != ""]


def build_parser():
    parser = argparse.ArgumentParser(prog="hfmm",
                                     description="heterogeneous FMM harness")
    sub = parser.add_subparsers(dest="command", required=True)
    parser.sub_commands = {}
    for name in ("accuracy", "bench", "validate"):
        p = sub.add_parser(name)
        parser.sub_commands[name] = p
        p.add_argument("--config", default=None, help="INI config file")
        p.add_argument("--media", choices=["free", "two-layer", "three-layer"],
                       default="two-layer")
        p.add_argument("--k", type=float, default=1.0)
        p.add_argument("--alpha", type=float, default=1.0)
        p.add_argument("--k1", type=float, default=1.0)
        p.add_argument("--k2", type=float, default=0.8)
        p.add_argument("--k3", type=float, default=0.6)
        p.add_argument("--d", type=float, default=0.8)
        p.add_argument("--p", type=_int_list, default=None,
                       help="comma-separated expansion orders")
        p.add_argument("--p-ref", type=int, default=39, dest="p_ref")
        p.add_argument("--n", type=int, default=10000)
        p.add_argument("--n-list", type=_int_list, default=None,
                       help="comma-separated N sweep for bench")
        p.add_argument("--leaf-size", type=int, default=60, dest="leaf_size")
        p.add_argument("--seed", type=int, default=2026)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--tables", default="precompute",
                       help="precompute | on-the-fly | cache=PATH")
        p.add_argument("--out", default=None)
        p.add_argument("--format", choices=["csv", "json"], default="csv",
                       dest="fmt")
        p.add_argument("--timings", choices=["wall", "none"], default="wall",
                       help="'none' zeroes the seconds column for "
                            "byte-identical artifacts")
        if name == "validate":
            p.add_argument("--list", action="store_true")
    return parser


def _config_defaults(path):
    """Read the INI file into a dict usable as parser defaults."""
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise UsageError(f"cannot read config file {path}")
    if not cp.has_section("hfmm"):
        raise UsageError("config file needs an [hfmm] section")
    sec = cp["hfmm"]
    converters = {
        "media": str, "k": float, "alpha": float, "k1": float, "k2": float,
        "k3": float, "d": float, "p": _int_list, "p_ref": int, "n": int,
        "n_list": _int_list, "leaf_size": int, "seed": int, "threads": int,
        "tables": str, "out": str, "format": str, "timings": str,
    }
    out = {}
    for key, conv in converters.items():
        raw = sec.get(key.replace("_", "-"), sec.get(key))
        if raw is not None:
            out["fmt" if key == "format" else key] = conv(raw)
    return out


def main(argv=None) -> int:
    parser = build_parser()
    try:
        # parse twice so explicit flags override config-file values
        args = parser.parse_args(argv)
        if args.config:
            # defaults live on the subparser; explicit flags still win
            parser.sub_commands[args.command].set_defaults(**_config_defaults(args.config))
            args = parser.parse_args(argv)
        if args.p is None:
            args.p = [5, 10, 20, 30]
        if args.n_list is None:
            args.n_list = [10000, 90000, 360000]
        handler = {"accuracy": cmd_accuracy, "bench": cmd_bench,
                   "validate": cmd_validate}[args.command]
        rows, code = handler(args)
        if rows:
            write_rows(rows, args.out, args.fmt)
        return code
    except UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
