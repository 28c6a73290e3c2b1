"""Command-line front end.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile

import numpy as np

from . import __version__
from .embedding import EmpiricalEmbedding, posterior
from .errors import ConditioningError, DegenerateDataError, InvalidInputError, OptimizationFailedError
from .kernels import LEBESGUE_LIMIT, MedianMode, SEKernelParams, as_points, median_heuristic
from .learn import HyperPosterior, ThetaGrid, bkl_optimize, mh_sample
from .pseudolik import choose_landmark_indices, default_m, Landmarks
from .synthdata import GridMixtureSpec, gen_grid_mixture, gen_normal_laplace
from .testing import StatisticKind, permutation_test, witness_band

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("bke")


class DataError(Exception):
    pass


# -- I/O ---------------------------------------------------------------------


def read_csv(path: str) -> np.ndarray:
    """Comma-separated numeric rows; a non-numeric first row is a header."""
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if rows:
        try:
            [float(c) for c in rows[0]]
        except ValueError:
            rows = rows[1:]
    if not rows:
        raise DataError(f"{path}: no data rows")
    width = len(rows[0])
    for i, r in enumerate(rows):
        if len(r) != width:
            raise DataError(f"{path}: ragged row {i + 1} has {len(r)} fields, expected {width}")
    try:
        arr = np.array([[float(c) for c in r] for r in rows])
    except ValueError as exc:
        raise DataError(f"{path}: non-numeric value ({exc})") from exc
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{path}: non-finite values")
    return arr


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit(path, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        _atomic_write(path, text)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if not isinstance(v, (int, np.integer)) else int(v) for v in r])
    return buf.getvalue()


def json_text(payload: dict, args) -> str:
    out = dict(payload)
    out["config"] = run_config(args)
    out["version"] = __version__
    return json.dumps(out, indent=2, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


def run_config(args) -> dict:
    cfg = {}
    for k, v in vars(args).items():
        if k == "func":
            continue
        if isinstance(v, ThetaGrid):
            v = f"{v.lo}:{v.hi}:{v.count}"
        cfg[k] = v
    return cfg


# -- shared helpers ----------------------------------------------------------


def _eta(args):
    return LEBESGUE_LIMIT if args.eta is None else args.eta


def _grid_cols(D: int):
    return [f"x{i + 1}" for i in range(D)]


def _learn_theta(pooled: np.ndarray, args):
    """Hold out landmarks from ``pooled`` and maximize over theta.

    Returns ``(theta_hat, keep_mask)`` where ``keep_mask`` marks non-landmark rows.
    """
    n, D = pooled.shape
    m = args.m if args.m is not None else default_m(n, D)
    idx = choose_landmark_indices(pooled, m, args.seed)
    mask = np.ones(n, dtype=bool)
    mask[idx] = False
    result = bkl_optimize(pooled[mask], Landmarks(pooled[idx]), tau2=args.tau2, grid=args.grid, eta=_eta(args))
    return result.theta_hat, mask


def _fixed_theta(data: np.ndarray, args):
    if args.theta is not None:
        return args.theta
    return median_heuristic(data, MedianMode(args.median_heuristic))


# -- subcommands -------------------------------------------------------------


def cmd_learn(args) -> int:
    data = read_csv(args.data)
    n, D = data.shape
    m = args.m if args.m is not None else default_m(n, D)
    idx = choose_landmark_indices(data, m, args.seed)
    mask = np.ones(n, dtype=bool)
    mask[idx] = False
    res = bkl_optimize(data[mask], Landmarks(data[idx]), tau2=args.tau2, grid=args.grid, eta=_eta(args))
    emit(args.out, json_text(res.to_dict(), args))
    if args.curve_csv:
        emit(args.curve_csv, csv_text(["theta", "loglik"], res.curve))
    return EXIT_OK


def cmd_sample(args) -> int:
    data = read_csv(args.data)
    n, D = data.shape
    m = args.m if args.m is not None else default_m(n, D)
    idx = choose_landmark_indices(data, m, args.seed)
    mask = np.ones(n, dtype=bool)
    mask[idx] = False
    post = mh_sample(
        data[mask],
        Landmarks(data[idx]),
        iters=args.iters,
        warmup=args.warmup,
        chains=args.chains,
        seed=args.seed,
        proposal_scale=args.proposal_scale,
        eta=_eta(args),
    )
    kept = post.chain_draws.shape[1]
    rows = [(c, *post.chain_draws[c, i]) for c in range(post.chains) for i in range(kept)]
    emit(args.out, csv_text(["chain", "theta", "tau2"], rows))
    summary = {
        "acceptance_rate": post.acceptance_rate,
        "rhat": post.rhat,
        "n_draws": int(len(post.draws)),
        "warmup_discarded": post.warmup_discarded,
    }
    if args.json:
        emit(args.json, json_text(summary, args))
    else:
        sys.stderr.write(json_text(summary, args))
    return EXIT_OK


def cmd_embed(args) -> int:
    data = read_csv(args.data)
    grid = read_csv(args.grid_file)
    params = SEKernelParams(theta=args.theta, eta=_eta(args), tau2=args.tau2)
    post = posterior(EmpiricalEmbedding(data, params), grid)
    rows = [(*g, mu, var) for g, mu, var in zip(grid, post.mean, post.variance)]
    emit(args.out, csv_text(_grid_cols(grid.shape[1]) + ["post_mean", "post_var"], rows))
    return EXIT_OK


def _read_hyper(path: str) -> HyperPosterior:
    arr = read_csv(path)
    if arr.shape[1] == 3:  # chain, theta, tau2 as written by `sample`
        arr = arr[:, 1:]
    if arr.shape[1] != 2:
        raise DataError(f"{path}: expected columns theta,tau2 (optionally preceded by chain)")
    if np.any(arr <= 0):
        raise DataError(f"{path}: hyperparameter draws must be positive")
    return HyperPosterior(draws=arr, acceptance_rate=math.nan, warmup_discarded=0)


def cmd_witness(args) -> int:
    p = read_csv(args.p)
    q = read_csv(args.q)
    grid = read_csv(args.grid_file)
    if args.hyper:
        hyper = _read_hyper(args.hyper)
        band = witness_band(p, q, grid, hyper, args.level, args.draws, args.seed, eta=_eta(args))
    else:
        params = SEKernelParams(theta=args.theta, eta=_eta(args), tau2=args.tau2)
        band = witness_band(p, q, grid, params, args.level, args.draws, args.seed)
    rows = [(*g, a, b, c) for g, a, b, c in zip(grid, band.mean, band.lower, band.upper)]
    emit(args.out, csv_text(_grid_cols(grid.shape[1]) + ["mean", "lower", "upper"], rows))
    return EXIT_OK


def cmd_test2(args) -> int:
    p = read_csv(args.p)
    q = read_csv(args.q)
    if p.shape[1] != q.shape[1]:
        raise DataError("--p and --q have different numbers of columns")
    extra = {}
    if args.bkl:
        pooled = np.vstack([p, q])
        theta, mask = _learn_theta(pooled, args)
        p, q = pooled[: len(p)][mask[: len(p)]], pooled[len(p) :][mask[len(p) :]]
        extra["held_out_landmarks"] = int((~mask).sum())
    else:
        theta = _fixed_theta(np.vstack([p, q]), args)
    params = SEKernelParams(theta=theta, eta=_eta(args), tau2=args.tau2)
    res = permutation_test(StatisticKind.MMD2, p, q, params, n_permutations=args.perms, alpha=args.alpha, seed=args.seed)
    emit(args.out, json_text({**res.to_dict(), **extra}, args))
    return EXIT_OK


def cmd_testindep(args) -> int:
    x = read_csv(args.x)
    y = read_csv(args.y)
    if len(x) != len(y):
        raise DataError("--x and --y must have the same number of rows")
    extra = {}
    if args.bkl:
        tx, mx = _learn_theta(x, args)
        ty, my = _learn_theta(y, args)
        keep = mx & my
        x, y = x[keep], y[keep]
        extra["held_out_landmarks"] = int((~keep).sum())
    else:
        tx = args.theta_x if args.theta_x is not None else _fixed_theta(x, args)
        ty = args.theta_y if args.theta_y is not None else _fixed_theta(y, args)
    px = SEKernelParams(theta=tx, eta=_eta(args), tau2=args.tau2)
    py = SEKernelParams(theta=ty, eta=_eta(args), tau2=args.tau2)
    res = permutation_test(StatisticKind.HSIC, x, y, px, py, n_permutations=args.perms, alpha=args.alpha, seed=args.seed)
    emit(args.out, json_text({**res.to_dict(), **extra}, args))
    return EXIT_OK


def cmd_synth(args) -> int:
    if args.kind == "grid-mixture":
        spec = GridMixtureSpec(
            grid_side=args.side,
            spacing=args.spacing,
            eps=args.eps,
            per_component=args.per_component,
            rotated=args.rotated,
        )
        data = gen_grid_mixture(spec, args.seed)
        emit(args.out, csv_text(["x1", "x2"], data))
    else:
        normal, laplace = gen_normal_laplace(args.n, args.seed)
        if args.out is None or args.out == "-":
            emit(None, csv_text(["normal", "laplace"], np.column_stack([normal, laplace])))
        else:
            stem, ext = os.path.splitext(args.out)
            ext = ext or ".csv"
            emit(f"{stem}_p{ext}", csv_text(["x1"], normal))
            emit(f"{stem}_q{ext}", csv_text(["x1"], laplace))
    return EXIT_OK


# -- parser ------------------------------------------------------------------


def _positive(text):
    v = float(text)
    if not (math.isfinite(v) and v > 0):
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text!r}")
    return v


def _grid(text):
    try:
        return ThetaGrid.parse(text)
    except (ValueError, InvalidInputError) as exc:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}: expected lo:hi:count ({exc})")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bke", description="Bayesian kernel embeddings and kernel learning.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp, out_help):
        sp.add_argument("--out", default=None, help=f"{out_help} (default: stdout)")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--eta", type=_positive, default=None, help="prior measure width (default: Lebesgue limit)")

    def learning(sp):
        sp.add_argument("--tau2", type=_positive, default=1.0)
        sp.add_argument("--m", type=int, default=None, help="number of landmarks")
        sp.add_argument("--grid", type=_grid, default=ThetaGrid(), help="theta grid lo:hi:count")

    sp = sub.add_parser("learn", help="maximize the marginal pseudolikelihood over theta")
    sp.add_argument("--data", required=True)
    learning(sp)
    common(sp, "JSON result")
    sp.add_argument("--curve-csv", default=None, help="write the theta curve as CSV")
    sp.set_defaults(func=cmd_learn)

    sp = sub.add_parser("sample", help="Metropolis sampling of (theta, tau2)")
    sp.add_argument("--data", required=True)
    sp.add_argument("--iters", type=int, default=400)
    sp.add_argument("--warmup", type=int, default=200)
    sp.add_argument("--chains", type=int, default=4)
    sp.add_argument("--proposal-scale", type=_positive, default=0.15)
    sp.add_argument("--m", type=int, default=None)
    common(sp, "CSV of draws")
    sp.add_argument("--json", default=None, help="summary JSON (default: stderr)")
    sp.set_defaults(func=cmd_sample)

    sp = sub.add_parser("embed", help="posterior embedding on a grid")
    sp.add_argument("--data", required=True)
    sp.add_argument("--theta", type=_positive, required=True)
    sp.add_argument("--tau2", type=_positive, default=1.0)
    sp.add_argument("--grid-file", required=True)
    common(sp, "CSV")
    sp.set_defaults(func=cmd_embed)

    sp = sub.add_parser("witness", help="posterior witness band")
    sp.add_argument("--p", required=True)
    sp.add_argument("--q", required=True)
    g = sp.add_mutually_exclusive_group(required=True)
    g.add_argument("--theta", type=_positive)
    g.add_argument("--hyper", help="CSV of (theta, tau2) draws")
    sp.add_argument("--tau2", type=_positive, default=1.0)
    sp.add_argument("--level", type=float, default=0.8)
    sp.add_argument("--draws", type=int, default=800)
    sp.add_argument("--grid-file", required=True)
    common(sp, "CSV")
    sp.set_defaults(func=cmd_witness)

    sp = sub.add_parser("test2", help="MMD two-sample permutation test")
    sp.add_argument("--p", required=True)
    sp.add_argument("--q", required=True)
    g = sp.add_mutually_exclusive_group(required=True)
    g.add_argument("--theta", type=_positive)
    g.add_argument("--median-heuristic", choices=[m.value for m in MedianMode])
    g.add_argument("--bkl", action="store_true")
    sp.add_argument("--perms", type=int, default=500)
    sp.add_argument("--alpha", type=float, default=0.05)
    learning(sp)
    common(sp, "JSON result")
    sp.set_defaults(func=cmd_test2)

    sp = sub.add_parser("testindep", help="HSIC independence permutation test")
    sp.add_argument("--x", required=True)
    sp.add_argument("--y", required=True)
    g = sp.add_mutually_exclusive_group(required=True)
    g.add_argument("--theta", type=_positive, help="same lengthscale for x and y")
    g.add_argument("--median-heuristic", choices=[m.value for m in MedianMode])
    g.add_argument("--bkl", action="store_true")
    sp.add_argument("--theta-x", type=_positive, default=None)
    sp.add_argument("--theta-y", type=_positive, default=None)
    sp.add_argument("--perms", type=int, default=500)
    sp.add_argument("--alpha", type=float, default=0.05)
    learning(sp)
    common(sp, "JSON result")
    sp.set_defaults(func=cmd_testindep)

    sp = sub.add_parser("synth", help="generate synthetic data")
    sp.add_argument("kind", choices=["grid-mixture", "normal-laplace"])
    sp.add_argument("--n", type=int, default=400, help="normal-laplace sample size")
    sp.add_argument("--side", type=int, default=3)
    sp.add_argument("--spacing", type=float, default=10.0)
    sp.add_argument("--eps", type=_positive, default=1.0)
    sp.add_argument("--per-component", type=int, default=100)
    sp.add_argument("--rotated", action="store_true")
    sp.add_argument("--out", default=None, help="CSV path; normal-laplace writes <stem>_p / <stem>_q")
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_synth)
    return parser


def _fix_theta_defaults(args):
    # testindep --theta applies to both variables unless overridden
    if getattr(args, "command", None) == "testindep" and args.theta is not None:
        args.theta_x = args.theta_x or args.theta
        args.theta_y = args.theta_y or args.theta


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    _fix_theta_defaults(args)
    try:
        return args.func(args)
    except (DataError, DegenerateDataError) as exc:
        sys.stderr.write(f"bke: data error: {exc}\n")
        return EXIT_DATA
    except (ConditioningError, OptimizationFailedError) as exc:
        sys.stderr.write(f"bke: numerical failure: {exc}\n")
        return EXIT_NUMERIC
    except InvalidInputError as exc:
        sys.stderr.write(f"bke: data error: {exc}\n")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
