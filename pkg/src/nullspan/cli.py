"""Command-line harness.

Subcommands: lower, dim-sweep, verify, contour, privacy. Every command
takes an explicit --seed (no environment entropy) and an --out
directory; given the same arguments it writes byte-identical reports.
Floats in CSV files carry 17 significant digits so parsing them back
recovers the exact float64 value; JSON uses Python's shortest
round-trip float form.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import verification
from .layers import (
    ConvLayerSpec,
    FcLayerSpec,
    build_equivalent,
    load_layer_json,
    predict_nullspace_dim,
    verify_equivalence,
)
from .linalg import numerical_rank, singular_values
from .network import init_network, load_network_spec
from .imaging import read_ppm, save_float_image, write_ppm
from .seeding import make_rng, subseed
from .subspace import harmless_basis, load_basis, save_basis
from .verification import (
    CheckResult,
    default_network_spec,
    full_battery,
    privacy_battery,
)

__all__ = ["main"]


def _fmt(x) -> str:
    if isinstance(x, float):
        return format(x, ".17g")
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    return str(x)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _write_json(path: Path, doc) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def _check_dict(c: CheckResult) -> dict:
    return {"name": c.name, "passed": bool(c.passed), "measured": c.measured,
            "tolerance": c.tolerance, "detail": c.detail}


def _print_checks(checks) -> None:
    for c in checks:
        status = "PASS" if c.passed else "FAIL"
        print(f"[{status}] {c.name}: measured={_fmt(c.measured)} "
              f"tolerance={_fmt(c.tolerance)}" + (f" ({c.detail})" if c.detail else ""))


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --- lower ---------------------------------------------------------------

def cmd_lower(args) -> int:
    out = _out_dir(args)
    spec = load_layer_json(args.layer)
    eq = build_equivalent(spec)
    pred = predict_nullspace_dim(spec)
    sv = singular_values(eq.matrix)
    rank = numerical_rank(sv, eq.rows, eq.cols)
    residual = verify_equivalence(eq, spec, samples=args.samples, seed=args.seed)

    coo = eq.matrix.tocoo()
    order = np.lexsort((coo.col, coo.row))
    _write_csv(out / "equivalent_matrix.csv", ["row", "col", "value"],
               [[int(coo.row[i]), int(coo.col[i]), float(coo.data[i])] for i in order])

    stats = {
        "layer_kind": eq.layer_kind,
        "rows": eq.rows,
        "cols": eq.cols,
        "nnz": eq.nnz,
        "rank": rank,
        "nullity": eq.cols - rank,
        "predicted_dim": pred.dim,
        "formula_guaranteed": pred.guaranteed,
        "verify_residual": residual,
        "samples": args.samples,
        "seed": args.seed,
    }
    if args.format == "json":
        _write_json(out / "lower_stats.json", stats)
    else:
        _write_csv(out / "lower_stats.csv", list(stats), [list(stats.values())])
    for k, v in stats.items():
        print(f"{k}: {_fmt(v)}")
    if not pred.guaranteed:
        print("note: geometry outside the guaranteed regime (stride/padding/"
              "coverage/boundary support); dimension formula unguaranteed, "
              "use the numerical nullity")
    return 0


# --- dim-sweep -----------------------------------------------------------

def _sweep_rows(args, root_seed: int):
    rows = []
    if args.kind == "conv":
        c, h, w = (int(v) for v in args.in_shape.split(","))
        strides = [int(s) for s in args.strides.split(",")]
        channel_list = [int(v) for v in args.out_channels.split(",")]
        idx = 0
        for stride in strides:
            for c_out in channel_list:
                in_dim = c * h * w
                try:
                    rng = make_rng(root_seed, 20, idx)
                    kernels = rng.standard_normal((c_out, c, args.kernel, args.kernel))
                    spec = ConvLayerSpec(in_channels=c, in_height=h, in_width=w,
                                         out_channels=c_out, kernel_h=args.kernel,
                                         kernel_w=args.kernel, stride=stride,
                                         zero_padding=args.pad, kernels=kernels)
                    eq = build_equivalent(spec)
                    pred = predict_nullspace_dim(spec)
                    numerical = verification.numerical_nullity(eq)
                    rows.append([spec.input_dim, spec.output_dim, pred.dim, numerical,
                                 numerical == pred.dim])
                except ValueError as exc:
                    print(f"skipping invalid geometry (stride={stride}, "
                          f"out_channels={c_out}): {exc}", file=sys.stderr)
                    rows.append([in_dim, "", "", "", "error"])
                idx += 1
    else:
        n_in = args.in_features
        for idx, n_out in enumerate(int(v) for v in args.out_features.split(",")):
            try:
                rng = make_rng(root_seed, 21, idx)
                spec = FcLayerSpec(in_features=n_in, out_features=n_out,
                                   weight=rng.standard_normal((n_in, n_out)))
                eq = build_equivalent(spec)
                pred = predict_nullspace_dim(spec)
                numerical = verification.numerical_nullity(eq)
                rows.append([spec.input_dim, spec.output_dim, pred.dim, numerical,
                             numerical == pred.dim])
            except ValueError as exc:
                print(f"skipping invalid geometry (out_features={n_out}): {exc}",
                      file=sys.stderr)
                rows.append([n_in, "", "", "", "error"])
    return rows


def cmd_dim_sweep(args) -> int:
    out = _out_dir(args)
    rows = _sweep_rows(args, args.seed)
    header = ["in_dim", "out_dim", "predicted", "numerical", "agree"]
    if args.format == "json":
        _write_json(out / "dim_sweep.json",
                    [dict(zip(header, row)) for row in rows])
    else:
        _write_csv(out / "dim_sweep.csv", header, rows)
    for row in rows:
        print(",".join(_fmt(v) for v in row))
    return 0


# --- verify --------------------------------------------------------------

def cmd_verify(args) -> int:
    out = _out_dir(args)
    net_spec = load_network_spec(args.net) if args.net else None
    basis = load_basis(args.basis) if args.basis else None
    report = full_battery(args.seed, net_spec=net_spec, basis=basis,
                          geometry_count=args.geometries, trials=args.trials,
                          include_geometry_sweep=not args.skip_sweep)

    checks_doc = [_check_dict(c) for c in report.checks]
    rmse_rows = [[kind, scale, value]
                 for (kind, scale), value in sorted(report.rmse_rows.items())]
    if args.format == "json":
        doc = {
            "seed": args.seed,
            "passed": report.passed,
            "checks": checks_doc,
            "rmse": [{"kind": k, "scale": s, "rmse": v} for k, s, v in rmse_rows],
            "dim_sweep": report.dim_rows,
        }
        _write_json(out / "verify_report.json", doc)
    else:
        _write_csv(out / "checks.csv",
                   ["name", "measured", "tolerance", "passed", "detail"],
                   [[c.name, c.measured, c.tolerance, c.passed, c.detail]
                    for c in report.checks])
        _write_csv(out / "rmse.csv", ["kind", "scale", "rmse"], rmse_rows)
        if report.dim_rows:
            _write_csv(out / "dim_sweep.csv",
                       ["in_dim", "out_dim", "predicted", "numerical", "agree"],
                       [[r["in_dim"], r["out_dim"], r["predicted"], r["numerical"],
                         r["agree"]] for r in report.dim_rows])

    _print_checks(report.checks)
    if not report.passed:
        print(f"{len(report.failures())} check(s) FAILED", file=sys.stderr)
        return 1
    print("all checks passed")
    return 0


# --- contour -------------------------------------------------------------

def cmd_contour(args) -> int:
    out = _out_dir(args)
    if args.layer:
        spec = load_layer_json(args.layer)
    else:
        spec = init_network(default_network_spec(), subseed(args.seed, 8)).layers[0]
    eq = build_equivalent(spec)
    basis = harmless_basis(eq)
    if basis.dim == 0:
        print("layer has no harmless subspace; contour undefined", file=sys.stderr)
        return 1
    axis = np.linspace(0.0, args.axis_max, args.grid)
    grid = verification.build_contour(eq, basis, args.seed, axis, axis)
    checks = verification.contour_checks(grid)
    _print_checks(checks)
    rows = []
    for i, a in enumerate(grid.a_values):
        for j, b in enumerate(grid.b_values):
            rows.append([float(a), float(b), float(grid.values[i, j])])
    _write_csv(out / "contour.csv", ["a", "b", "value"], rows)
    if not all(c.passed for c in checks):
        print("contour invariants FAILED", file=sys.stderr)
        return 1
    return 0


# --- privacy -------------------------------------------------------------

def cmd_privacy(args) -> int:
    out = _out_dir(args)
    net_spec = load_network_spec(args.net) if args.net else default_network_spec()
    net = init_network(net_spec, subseed(args.seed, 8))
    first = net_spec.linear_layer_indices()[0]
    if first != 0:
        print("privacy scrambling needs the first network layer to be linear",
              file=sys.stderr)
        return 1
    eq = build_equivalent(net.layers[0])
    basis = harmless_basis(eq)
    if basis.dim == 0:
        print("first layer has no harmless subspace; cannot scramble", file=sys.stderr)
        return 1
    save_basis(basis, out / "first_layer_basis.nspb")

    images = None
    if args.image_files:
        images = [read_ppm(p) for p in args.image_files]
    battery = privacy_battery(net, basis, args.seed,
                              n_images=args.images, n_recon=args.recon,
                              images=images)

    for i, (x, res, recons) in enumerate(zip(battery.originals, battery.results,
                                             battery.reconstructions)):
        stem = out / f"img{i:02d}"
        write_ppm(f"{stem}_original.ppm", x)
        pert = res.image - x
        lo, hi = pert.min(), pert.max()
        view = (pert - lo) / (hi - lo) if hi > lo else np.zeros_like(pert)
        write_ppm(f"{stem}_perturbation.ppm", view)
        write_ppm(f"{stem}_scrambled.ppm", res.image)
        save_float_image(f"{stem}_scrambled.f64", res.image)
        for j, recon in enumerate(recons):
            write_ppm(f"{stem}_recon{j:02d}.ppm", recon)

    header = ["image", "mse", "ssim", "ssim_gaussian_matched", "output_deviation",
              "max_bound_violation", "argmax_agree"]
    if args.format == "json":
        _write_json(out / "privacy_report.json",
                    {"seed": args.seed,
                     "passed": battery.passed,
                     "checks": [_check_dict(c) for c in battery.checks],
                     "images": battery.rows})
    else:
        _write_csv(out / "privacy_report.csv", header,
                   [[r[k] for k in header] for r in battery.rows])
        _write_csv(out / "privacy_checks.csv",
                   ["name", "measured", "tolerance", "passed", "detail"],
                   [[c.name, c.measured, c.tolerance, c.passed, c.detail]
                    for c in battery.checks])
    _print_checks(battery.checks)
    if not battery.passed:
        print("privacy checks FAILED", file=sys.stderr)
        return 1
    return 0


# --- parser --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nullspan",
        description="Nullspace analysis of linear network layers: lowering, "
                    "harmless subspaces, invariance verification, and "
                    "output-invariant image scrambling.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, required=True,
                       help="root seed; all randomness derives from it")
        p.add_argument("--out", type=str, required=True, help="output directory")
        p.add_argument("--format", choices=("csv", "json"), default="csv")

    p = sub.add_parser("lower", help="lower a layer to its equivalent matrix")
    common(p)
    p.add_argument("--layer", type=str, required=True, help="layer spec JSON path")
    p.add_argument("--samples", type=int, default=100,
                   help="random inputs for the equivalence residual")
    p.set_defaults(func=cmd_lower)

    p = sub.add_parser("dim-sweep", help="predicted vs numerical nullspace dimension "
                                         "over a geometry family")
    common(p)
    p.add_argument("--kind", choices=("conv", "fc"), required=True)
    p.add_argument("--in-shape", type=str, default="3,32,32",
                   help="conv input C,H,W")
    p.add_argument("--out-channels", type=str, default="1,2,4,8,10,12,16",
                   help="comma list of kernel counts (conv)")
    p.add_argument("--strides", type=str, default="1,2", help="comma list (conv)")
    p.add_argument("--kernel", type=int, default=3, help="square kernel size (conv)")
    p.add_argument("--pad", type=int, default=1, help="zero padding (conv)")
    p.add_argument("--in-features", type=int, default=784, help="fc input width")
    p.add_argument("--out-features", type=str, default="98,196,392,784,1568",
                   help="comma list of fc output widths")
    p.set_defaults(func=cmd_dim_sweep)

    p = sub.add_parser("verify", help="run the full invariant battery")
    common(p)
    p.add_argument("--net", type=str, default=None, help="network spec JSON path")
    p.add_argument("--basis", type=str, default=None,
                   help="validate this stored basis instead of recomputing")
    p.add_argument("--geometries", type=int, default=50,
                   help="seeded geometries in the dimension sweep")
    p.add_argument("--trials", type=int, default=1000,
                   help="trials per decomposition law")
    p.add_argument("--skip-sweep", action="store_true",
                   help="skip the geometry sweep (fast smoke run)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("contour", help="output-norm grid over orthogonal/parallel "
                                       "component combinations")
    common(p)
    p.add_argument("--layer", type=str, default=None,
                   help="layer spec JSON; default: seeded first layer of the "
                        "default network")
    p.add_argument("--grid", type=int, default=21, help="points per axis")
    p.add_argument("--axis-max", type=float, default=2.0, help="axis upper bound")
    p.set_defaults(func=cmd_contour)

    p = sub.add_parser("privacy", help="generate output-invariant scrambled images")
    common(p)
    p.add_argument("--net", type=str, default=None, help="network spec JSON path")
    p.add_argument("--images", type=int, default=20, help="synthetic image count")
    p.add_argument("--image-files", type=str, nargs="*", default=None,
                   help="PPM images to scramble instead of synthetic ones")
    p.add_argument("--recon", type=int, default=16,
                   help="sampled reconstructions per image")
    p.set_defaults(func=cmd_privacy)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
