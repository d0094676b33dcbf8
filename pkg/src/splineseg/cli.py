"""Command-line front end: ``fit``, ``eval``, ``render``, ``sdf`` and ``bench``.

Exit codes: 0 success, 1 usage error, 2 data error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import io as sio
from .losses import LossKind, coefficient_loss
from .metrics import format_float, rasterize, slice_metrics, volume_metrics
from .optimizer import FitDivergedError, FitOptions, Init, fit_coefficients, write_history
from .sdf import SingularSystemError, boundary_weights, signed_distance, weighted_lsq_fit
from .spline import SplineSpace, collocation_matrix, evaluate_grid

log = logging.getLogger("splineseg")

EXIT_USAGE = 1
EXIT_DATA = 2


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _spacing(text):
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid spacing {text!r}; expected sx,sy,sz")
    if len(vals) != 3 or min(vals) <= 0:
        raise argparse.ArgumentTypeError("spacing needs three positive numbers sx,sy,sz")
    return vals


def _raw_size(text):
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid raw size {text!r}; expected WxH")
    return w, h


def _sizes(text):
    out = []
    for item in text.split(","):
        try:
            I, O = (int(v) for v in item.split(":"))
        except ValueError:
            raise argparse.ArgumentTypeError(f"invalid size {item!r}; expected I:O")
        out.append((I, O))
    return out


def _space(args) -> SplineSpace:
    if args.p < 0:
        raise UsageError(f"p must be non-negative (got p={args.p})")
    if args.O < args.p + 1:
        raise UsageError(f"O must be ≥ p+1 (got O={args.O}, p={args.p})")
    return SplineSpace(args.p, args.O)


def _load_square_mask(path, raw=None, I=None) -> np.ndarray:
    try:
        Y = sio.read_mask(path, raw)
    except sio.FormatError as exc:
        raise DataError(str(exc)) from exc
    if Y.shape[0] != Y.shape[1]:
        raise DataError(f"{path}: mask must be square, got {Y.shape[1]}x{Y.shape[0]}")
    if I is not None and Y.shape[0] != I:
        raise DataError(f"{path}: resolution {Y.shape[0]} does not match I={I}")
    return Y


def _mask_inputs(args):
    """(paths, expected resolution, spacing, volume name) from --mask or --manifest."""
    if args.manifest:
        try:
            m = sio.read_manifest(args.manifest)
        except sio.FormatError as exc:
            raise DataError(str(exc)) from exc
        return list(m.slices), m.I, m.spacing, m.name
    if not args.mask:
        raise UsageError("give --mask or --manifest")
    return list(args.mask), None, None, None


def _add_spline_flags(p, with_I=False):
    p.add_argument("--O", type=int, default=128, help="coefficients per axis (default 128)")
    p.add_argument("--p", type=int, default=1, help="spline degree (default 1)")
    if with_I:
        p.add_argument("--I", type=int, default=512, help="samples per axis (default 512)")


def _add_fit_flags(p):
    p.add_argument("--loss", choices=[k.value for k in LossKind], default="dice")
    p.add_argument("--epsilon", type=float, default=1e-4)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--iters", type=int, default=2000)
    p.add_argument("--init", choices=[k.value for k in Init], default="coarse")


def _fit_one(job):
    path, out, history, space, opts, raw, I = job
    Y = _load_square_mask(path, raw, I)
    res = fit_coefficients(Y, space, opts=opts)
    sio.write_ispl(out, res.coefficients)
    if history:
        write_history(history, res.loss_history)
    return str(out), res.final_loss, res.iterations_run, res.stop_reason.value


def cmd_fit(args) -> int:
    space = _space(args)
    try:
        opts = FitOptions(
            loss_kind=args.loss,
            learning_rate=args.lr,
            momentum=args.momentum,
            max_iters=args.iters,
            epsilon=args.epsilon,
            init=args.init,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    paths, I, _, _ = _mask_inputs(args)
    if args.out and len(paths) != 1:
        raise UsageError("--out needs exactly one mask; use --out-dir for batches")
    out_dir = Path(args.out_dir) if args.out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
    jobs = []
    for path in paths:
        src = Path(path)
        out = Path(args.out) if args.out else (out_dir or src.parent) / (src.stem + ".ispl")
        history = out.with_suffix(".loss.csv") if args.history else None
        jobs.append((path, out, history, space, opts, args.raw, I))

    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_fit_one, jobs))
    else:
        results = [_fit_one(j) for j in jobs]
    for out, loss, iters, stop in results:
        log.info("%s: loss %.6g after %d iterations (%s)", out, loss, iters, stop)
    return 0


def _eval_rows(args):
    paths, I, spacing, name = _mask_inputs(args)
    spacing = args.spacing or spacing or (1.0, 1.0, 1.0)
    name = args.name or name or "volume"
    if args.coeffs:
        coeff_paths = list(args.coeffs)
    elif args.coeff_dir:
        coeff_paths = [str(Path(args.coeff_dir) / (Path(p).stem + ".ispl")) for p in paths]
    else:
        raise UsageError("give --coeffs or --coeff-dir")
    if len(coeff_paths) != len(paths):
        raise DataError(f"{len(coeff_paths)} coefficient files for {len(paths)} masks")

    truths, preds, losses = [], [], []
    colloc = {}
    for cpath, mpath in zip(coeff_paths, paths):
        Y = _load_square_mask(mpath, args.raw, I)
        try:
            grid = sio.read_ispl(cpath)
        except OSError as exc:
            raise DataError(f"{cpath}: {exc}") from exc
        except sio.FormatError as exc:
            raise DataError(f"{cpath}: {exc}") from exc
        key = (Y.shape[0], grid.space)
        if key not in colloc:
            colloc[key] = collocation_matrix(Y.shape[0], grid.space.basis_count, grid.space.degree)
        U = colloc[key]
        Z = evaluate_grid(U, grid)
        truths.append(Y)
        preds.append(rasterize(Z))
        if args.loss:
            losses.append(coefficient_loss(grid, Y, U, args.loss, args.epsilon).loss)
    if len({t.shape for t in truths}) != 1:
        raise DataError("slices of one volume must share a resolution")

    rows = []
    for k, (pred, truth) in enumerate(zip(preds, truths)):
        m = slice_metrics(pred, truth, spacing[:2])
        row = {"volume": f"{name}[{k}]", "slice": k, "accuracy": m.accuracy, "dice": m.dice,
               "jaccard": m.jaccard, "hausdorff": m.hausdorff}
        if args.loss:
            row["loss"] = losses[k]
        rows.append(row)
    vm = volume_metrics(np.stack(preds), np.stack(truths), spacing)
    row = {"volume": name, "slice": None, "accuracy": vm.accuracy, "dice": vm.dice,
           "jaccard": vm.jaccard, "hausdorff": vm.hausdorff}
    if args.loss:
        row["loss"] = float(np.mean(losses))
    rows.append(row)
    return rows


def format_rows(rows, fmt) -> str:
    buf = io.StringIO()
    if fmt == "csv":
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["volume", "accuracy", "dice", "jaccard", "hausdorff"])
        for r in rows:
            w.writerow([r["volume"]] + [format_float(r[k]) for k in ("accuracy", "dice", "jaccard", "hausdorff")])
    else:
        for r in rows:
            # json emits the shortest round-trip repr for floats
            buf.write(json.dumps(r) + "\n")
    return buf.getvalue()


def cmd_eval(args) -> int:
    text = format_rows(_eval_rows(args), args.format)
    if args.out:
        sio.atomic_write(args.out, text.encode())
    else:
        sys.stdout.write(text)
    return 0


def contour_text(Z) -> str:
    """Zero-level polylines as ``row col`` lines, one blank line between polylines."""
    from skimage.measure import find_contours

    blocks = []
    for line in find_contours(np.asarray(Z, dtype=np.float64), 0.0):
        blocks.append("\n".join(f"{r!r} {c!r}" for r, c in line.tolist()))
    return "\n\n".join(blocks) + ("\n" if blocks else "")


def cmd_render(args) -> int:
    if args.I < 2:
        raise UsageError(f"I must be at least 2 (got I={args.I})")
    try:
        grid = sio.read_ispl(args.coeffs)
    except OSError as exc:
        raise DataError(f"{args.coeffs}: {exc}") from exc
    except sio.FormatError as exc:
        raise DataError(f"{args.coeffs}: {exc}") from exc
    U = collocation_matrix(args.I, grid.space.basis_count, grid.space.degree)
    Z = evaluate_grid(U, grid)
    sio.write_mask(args.out, rasterize(Z))
    if args.contours:
        sio.atomic_write(args.contours, contour_text(Z).encode())
    return 0


def cmd_sdf(args) -> int:
    Y = _load_square_mask(args.mask, args.raw)
    D = signed_distance(Y)
    sio.write_sdf(args.out, D)
    if args.fit_out:
        space = _space(args)
        W = boundary_weights(D, args.boundary_radius) if args.boundary_radius is not None else None
        try:
            grid = weighted_lsq_fit(D, W, space, ridge=args.ridge, truncate=args.truncate)
        except SingularSystemError as exc:
            raise DataError(str(exc)) from exc
        sio.write_ispl(args.fit_out, grid)
    return 0


def bench_rows(sizes, p=1, repeats=5, loss="dice"):
    rng = np.random.default_rng(0)
    rows = []
    for I, O in sizes:
        U = collocation_matrix(I, O, p)
        C = rng.uniform(-1, 1, (O, O))
        Y = rng.integers(0, 2, (I, I)).astype(bool)
        t_eval, t_loss = [], []
        for _ in range(repeats):
            t0 = time.perf_counter()
            evaluate_grid(U, C)
            t1 = time.perf_counter()
            coefficient_loss(C, Y, U, loss)
            t2 = time.perf_counter()
            t_eval.append((t1 - t0) * 1e3)
            t_loss.append((t2 - t1) * 1e3)
        rows.append((I, O, np.mean(t_eval), np.std(t_eval), np.mean(t_loss), np.std(t_loss)))
    return rows


def cmd_bench(args) -> int:
    if args.repeats < 1:
        raise UsageError("--repeats must be at least 1")
    for I, O in args.sizes:
        if I < 2 or O < args.p + 1:
            raise UsageError(f"invalid size I={I}, O={O} for p={args.p}")
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["I", "O", "evaluate_ms_mean", "evaluate_ms_std", "loss_grad_ms_mean", "loss_grad_ms_std"])
    for I, O, em, es, lm, ls in bench_rows(args.sizes, args.p, args.repeats, args.loss):
        w.writerow([I, O, f"{em:.4f}", f"{es:.4f}", f"{lm:.4f}", f"{ls:.4f}"])
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="splineseg", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fit coefficient grids to masks")
    p.add_argument("--mask", nargs="+", help="PGM mask file(s)")
    p.add_argument("--manifest", help="JSON volume manifest of mask slices")
    p.add_argument("--raw", type=_raw_size, help="read masks as headerless u8 of size WxH")
    p.add_argument("--out", help="output ISPL1 path (single mask only)")
    p.add_argument("--out-dir", help="directory for <stem>.ispl outputs")
    p.add_argument("--history", action="store_true", help="also write <stem>.loss.csv")
    p.add_argument("--jobs", type=int, default=1)
    _add_spline_flags(p)
    _add_fit_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval", help="score coefficient files against masks")
    p.add_argument("--coeffs", nargs="+", help="ISPL1 files, one per mask")
    p.add_argument("--coeff-dir", help="directory holding <mask stem>.ispl files")
    p.add_argument("--mask", nargs="+", help="ground-truth PGM masks, in slice order")
    p.add_argument("--manifest", help="JSON volume manifest of ground-truth slices")
    p.add_argument("--raw", type=_raw_size)
    p.add_argument("--spacing", type=_spacing, help="voxel spacing sx,sy,sz (default 1,1,1)")
    p.add_argument("--name", help="volume label in the report")
    p.add_argument("--format", choices=["csv", "jsonl"], default="csv")
    p.add_argument("--loss", choices=[k.value for k in LossKind], help="also report this loss (jsonl)")
    p.add_argument("--epsilon", type=float, default=1e-4)
    p.add_argument("--out", help="write the report here instead of stdout")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("render", help="rasterize a coefficient file")
    p.add_argument("--coeffs", required=True)
    p.add_argument("--I", type=int, default=512)
    p.add_argument("--out", required=True, help="output PGM")
    p.add_argument("--contours", help="also write zero-level polylines here")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("sdf", help="signed distance field of a mask")
    p.add_argument("--mask", required=True)
    p.add_argument("--raw", type=_raw_size)
    p.add_argument("--out", required=True, help="output SDF1 dump")
    p.add_argument("--fit-out", help="also write a least-squares ISPL1 fit of the field")
    p.add_argument("--ridge", type=float, default=0.0)
    p.add_argument("--truncate", type=float, help="clamp distances to [-T, T] before fitting")
    p.add_argument("--boundary-radius", type=float, help="up-weight pixels this close to the boundary")
    _add_spline_flags(p)
    p.set_defaults(func=cmd_sdf)

    p = sub.add_parser("bench", help="time spline evaluation and loss gradients")
    p.add_argument("--sizes", type=_sizes, default=_sizes("512:128,512:64,128:32"))
    p.add_argument("--p", type=int, default=1)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--loss", choices=[k.value for k in LossKind], default="dice")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"splineseg {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, sio.FormatError, FitDivergedError) as exc:
        print(f"splineseg {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"splineseg {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
