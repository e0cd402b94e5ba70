"""Command-line entry point: gen / sweep / dataset / verify / eval / plot.

All randomness flows from explicit --seed flags; no wall clock or OS
entropy enters any code path, so rerunning a subcommand with identical
flags and inputs reproduces its outputs byte for byte.  Exit codes:
0 success, 1 domain/runtime errors (message on stderr), 2 usage errors.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import dataset as ds
from . import dma, metrics
from .fft_homogenizer import SolverSettings, save_fields, solve_cell
from .microstructure import RveConfig, generate_rve, load_grid, measure_vf, rasterize, save_grid
from .viscoelastic import SymTensor2, complex_moduli, load_materials

log = logging.getLogger("vdmalab")


class UsageError(Exception):
    pass


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int,
                        default=int(os.environ.get("VDMA_THREADS", "1")),
                        help="worker processes (default 1, env VDMA_THREADS)")
    common.add_argument("--log-level", default=os.environ.get("VDMA_LOG_LEVEL", "warning"),
                        choices=["debug", "info", "warning", "error"],
                        help="logging level (env VDMA_LOG_LEVEL)")

    solver = argparse.ArgumentParser(add_help=False)
    solver.add_argument("--tolerance", type=float, default=1e-6,
                        help="equilibrium residual threshold (default 1e-6)")
    solver.add_argument("--max-iterations", type=int, default=1000)

    freq = argparse.ArgumentParser(add_help=False)
    freq.add_argument("--omega-min", type=float, default=dma.DEFAULT_OMEGA_MIN)
    freq.add_argument("--omega-max", type=float, default=dma.DEFAULT_OMEGA_MAX)
    freq.add_argument("--points", type=int, default=dma.DEFAULT_POINTS)

    p = argparse.ArgumentParser(
        prog="vdma",
        description="Virtual DMA laboratory: periodic fiber RVEs, FFT "
                    "viscoelastic homogenization, frequency-sweep datasets.",
        epilog="Environment overrides: VDMA_THREADS, VDMA_LOG_LEVEL.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", parents=[common], help="generate one RVE grid")
    g.add_argument("--vf", type=float, required=True, help="target fiber fraction")
    g.add_argument("--fibers", type=int, required=True, help="fiber count (1..150)")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--resolution", type=int, default=256)
    g.add_argument("--vf-tolerance", type=float, default=0.01)
    g.add_argument("--out", required=True)
    g.set_defaults(func=_cmd_gen)

    s = sub.add_parser("sweep", parents=[common, solver, freq],
                       help="frequency sweep of one grid")
    s.add_argument("--grid", required=True)
    s.add_argument("--materials", default="pp-glass",
                   help="preset name or materials JSON file (default pp-glass)")
    s.add_argument("--out", required=True, help="curve CSV output")
    s.add_argument("--dump-fields", default=None,
                   help="also dump converged local fields at one pulsation")
    s.add_argument("--dump-at", type=int, default=0,
                   help="frequency index for --dump-fields (default 0)")
    s.set_defaults(func=_cmd_sweep)

    d = sub.add_parser("dataset", parents=[common, solver, freq],
                       help="generate a full dataset directory")
    d.add_argument("--count-per-vf", type=int, required=True)
    d.add_argument("--vf-min", type=float, required=True)
    d.add_argument("--vf-max", type=float, required=True)
    d.add_argument("--vf-step", type=float, required=True)
    d.add_argument("--seed", type=int, required=True)
    d.add_argument("--out", required=True)
    d.add_argument("--resolution", type=int, default=256)
    d.add_argument("--vf-tolerance", type=float, default=0.01)
    d.add_argument("--materials", default="pp-glass")
    d.add_argument("--augment", type=int, default=0,
                   help="translated copies per sample (default 0)")
    d.add_argument("--split", default="0.7,0.15,0.15",
                   help="train,val,test fractions (default 0.7,0.15,0.15)")
    d.add_argument("--retries", type=int, default=3)
    d.set_defaults(func=_cmd_dataset)

    v = sub.add_parser("verify", parents=[common], help="replay dataset checks")
    v.add_argument("--dataset", required=True)
    v.add_argument("--recompute-fraction", type=float, default=0.01)
    v.set_defaults(func=_cmd_verify)

    e = sub.add_parser("eval", parents=[common], help="score predictions")
    e.add_argument("--truth", required=True, help="curve CSV or dataset directory")
    e.add_argument("--pred", required=True, help="curve CSV or directory of <id>.csv")
    e.add_argument("--metric", required=True, choices=["wmape", "mae", "mape"])
    e.add_argument("--group-by", choices=["vf"], default=None)
    e.add_argument("--out", default=None, help="output CSV (default stdout)")
    e.set_defaults(func=_cmd_eval)

    pl = sub.add_parser("plot", parents=[common], help="render a curve to SVG")
    pl.add_argument("--curve", required=True)
    pl.add_argument("--out", required=True)
    pl.set_defaults(func=_cmd_plot)
    return p


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise UsageError(message)


def _cmd_gen(args) -> int:
    _require(0.05 <= args.vf <= 0.75, f"--vf must lie in [0.05, 0.75], got {args.vf}")
    _require(1 <= args.fibers <= 150, f"--fibers must lie in [1, 150], got {args.fibers}")
    config = RveConfig(vf_target=args.vf, n_fibers=args.fibers, seed=args.seed,
                       resolution=args.resolution, vf_tolerance=args.vf_tolerance)
    grid = rasterize(generate_rve(config), args.resolution)
    save_grid(args.out, grid)
    log.info("wrote %s (measured vf %.4f)", args.out, measure_vf(grid))
    return 0


def _cmd_sweep(args) -> int:
    grid = load_grid(args.grid)
    materials = load_materials(args.materials)
    freq = dma.FrequencyGrid.log_spaced(args.omega_min, args.omega_max, args.points)
    settings = SolverSettings(tolerance=args.tolerance, max_iterations=args.max_iterations)
    curve = dma.sweep(grid, materials, freq, settings, threads=args.threads)
    dma.save_curve(args.out, curve)
    if not curve.all_converged():
        bad = np.flatnonzero(~curve.converged).tolist()
        print(f"warning: {len(bad)} frequency point(s) did not converge: {bad}",
              file=sys.stderr)
    if args.dump_fields is not None:
        _require(0 <= args.dump_at < len(freq), f"--dump-at out of range 0..{len(freq)-1}")
        omega = float(freq.omegas[args.dump_at])
        result = solve_cell(
            grid, complex_moduli(materials[0], omega), complex_moduli(materials[1], omega),
            SymTensor2(xx=0.0, yy=0.0, xy=0.5),
            SolverSettings(tolerance=args.tolerance,
                           max_iterations=args.max_iterations,
                           store_local_fields=True),
        )
        save_fields(args.dump_fields, result.strain, result.stress)
        log.info("dumped local fields at omega=%g rad/s to %s", omega, args.dump_fields)
    return 0


def _cmd_dataset(args) -> int:
    _require(0.05 <= args.vf_min <= args.vf_max <= 0.75,
             f"vf range must lie within [0.05, 0.75], got [{args.vf_min}, {args.vf_max}]")
    _require(args.vf_step > 0, "--vf-step must be positive")
    _require(args.count_per_vf >= 1, "--count-per-vf must be >= 1")
    try:
        fractions = tuple(float(f) for f in args.split.split(","))
        _require(len(fractions) == 3, "--split needs three comma-separated fractions")
    except ValueError as exc:
        raise UsageError(f"bad --split value: {exc}") from exc
    _require(abs(sum(fractions) - 1.0) <= 1e-9, "--split fractions must sum to 1")
    _require(args.augment >= 0, "--augment must be >= 0")

    settings = SolverSettings(tolerance=args.tolerance, max_iterations=args.max_iterations)
    freq = dma.FrequencyGrid.log_spaced(args.omega_min, args.omega_max, args.points)
    manifest = ds.generate_dataset(
        args.out, args.count_per_vf, args.vf_min, args.vf_max, args.vf_step,
        args.seed, settings,
        resolution=args.resolution, vf_tolerance=args.vf_tolerance,
        materials=load_materials(args.materials), freq=freq,
        threads=args.threads, retries=args.retries,
    )
    manifest = ds.split(manifest, fractions, seed=args.seed)
    if args.augment:
        manifest = ds.augment(manifest, ds.AugmentationSpec(args.augment), args.out)
    ds.save_manifest(args.out, manifest)
    log.info("dataset %s: %d records", args.out, len(manifest.records))
    return 0


def _cmd_verify(args) -> int:
    problems = ds.verify_dataset(args.dataset, recompute_fraction=args.recompute_fraction)
    for msg in problems:
        print(f"violation: {msg}", file=sys.stderr)
    return 1 if problems else 0


def _load_eval_pairs(args):
    """Yield (id, vf, truth_curve, pred_curve) pairs for eval."""
    truth_path = Path(args.truth)
    if truth_path.is_dir():
        manifest = ds.load_manifest(truth_path)
        pred_dir = Path(args.pred)
        _require(pred_dir.is_dir(), "--pred must be a directory when --truth is a dataset")
        missing = [r.id for r in manifest.records
                   if not (pred_dir / f"{r.id}.csv").exists()]
        if missing:
            raise ValueError(f"missing prediction files for {len(missing)} record(s), "
                             f"first: {missing[:5]}")
        for rec in manifest.records:
            yield (rec.id, rec.vf_target,
                   dma.load_curve(truth_path / rec.curve_path),
                   dma.load_curve(pred_dir / f"{rec.id}.csv"))
    else:
        yield ("curve", float("nan"), dma.load_curve(truth_path),
               dma.load_curve(args.pred))


def _cmd_eval(args) -> int:
    pairs = list(_load_eval_pairs(args))
    moduli = (("storage", lambda c: c.storage), ("loss", lambda c: c.loss))
    lines: list[str] = []
    if args.metric in ("wmape", "mae"):
        fn = metrics.wmape if args.metric == "wmape" else metrics.mae
        lines.append("metric,modulus,value")
        for name, pick in moduli:
            truth = np.vstack([pick(t) for _, _, t, _ in pairs])
            pred = np.vstack([pick(p) for _, _, _, p in pairs])
            lines.append(f"{args.metric},{name},{fn(truth, pred):.17g}")
    else:
        rows = []
        for rec_id, vf, truth, pred in pairs:
            for name, pick in moduli:
                result = metrics.mape_per_sample(pick(truth), pick(pred))
                rows.append((rec_id, vf, name, result.value, len(result.excluded)))
        if args.group_by == "vf":
            lines.append("vf,modulus,mean,std,count")
            for name, _ in moduli:
                member = [(vf, val) for _, vf, mod, val, _ in rows if mod == name]
                stats = metrics.group_stats([v for _, v in member], [vf for vf, _ in member])
                for vf_key, st in stats.items():
                    lines.append(f"{vf_key:.17g},{name},{st['mean']:.17g},"
                                 f"{st['std']:.17g},{st['count']}")
        else:
            lines.append("id,vf,modulus,mape,excluded_points")
            for rec_id, vf, name, value, excluded in rows:
                lines.append(f"{rec_id},{vf:.17g},{name},{value:.17g},{excluded}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_plot(args) -> int:
    curve = dma.load_curve(args.curve)
    dma.plot_curve_svg(curve, args.out)
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_:   # argparse signals usage errors with code 2
        return int(exit_.code or 0)
    logging.basicConfig(level=getattr(logging, args.log_level.upper()),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
