"""Command-line entry point: ``hpbiharm {run, report, inverse-lab, mesh-dump}``.

Exit codes: 0 success, 2 invalid configuration or input, 3 solver failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import config as cfgmod
from . import inverse_lab, report
from .benchmarks import Budget, adaptive_driver, get_problem, initial_mesh
from .fem_basis import KINDS

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3

log = logging.getLogger("hpbiharm")


def _overrides(pairs) -> dict:
    out = {}
    for item in pairs or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise cfgmod.ConfigError(f"override {item!r} is not of the form key=value")
        out[key.strip()] = value
    return out


def _load_config(args) -> cfgmod.RunConfig:
    cfg = cfgmod.load(args.config) if args.config else cfgmod.RunConfig()
    extra = _overrides(args.set)
    if getattr(args, "output_dir", None):
        extra["output_dir"] = args.output_dir
    return cfg.with_overrides(**extra) if extra else cfg


def _driver(cfg: cfgmod.RunConfig, on_step=None, max_steps=None):
    problem = get_problem(cfg.benchmark)
    mesh = initial_mesh(problem, cfg.mesh_kind, cfg.mesh_divisions(), cfg.p_initial, cfg.space)
    budget = cfg.budget() if max_steps is None else Budget(max_steps, cfg.max_dofs)
    return adaptive_driver(problem, cfg.strategy, mesh, cfg.marking(), cfg.penalty(), budget,
                           cfg.closure, cfg.p_max, cfg.p_initial, on_step)


def cmd_run(args) -> int:
    cfg = _load_config(args)
    out = Path(cfg.output_dir)
    meshes = out / "meshes"
    meshes.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(cfgmod.serialize(cfg), encoding="utf-8")

    def dump(step, mesh, result, decision):
        (meshes / f"step_{step:03d}.txt").write_text(mesh.dump(), encoding="utf-8")

    record = _driver(cfg, dump)
    (out / "run.csv").write_text(record.to_csv(), encoding="utf-8")
    (out / "run.json").write_text(record.to_json(), encoding="utf-8")
    last = record.steps[-1] if record.steps else None
    if last is not None:
        print(f"{len(record.steps)} steps, dofs={last.dofs}, error={last.error:.4e}, "
              f"eta={last.eta:.4e}, effectivity={last.effectivity:.3f}")
    if record.failed:
        print(f"solver failure: {record.message}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def cmd_mesh_dump(args) -> int:
    cfg = _load_config(args)
    if args.step < 0:
        raise cfgmod.ConfigError("--step must be nonnegative")
    captured = {}

    def grab(step, mesh, result, decision):
        captured[step] = mesh.dump()

    record = _driver(cfg, grab, max_steps=args.step)
    if args.step not in captured:
        reached = max(captured) if captured else -1
        msg = record.message if record.failed else f"loop stopped at step {reached}"
        print(f"step {args.step} not reached: {msg}", file=sys.stderr)
        return EXIT_SOLVER if record.failed else EXIT_CONFIG
    sys.stdout.write(captured[args.step])
    return EXIT_OK


def cmd_report(args) -> int:
    tables = []
    for p in args.csv:
        try:
            text = Path(p).read_text(encoding="utf-8")
        except OSError as exc:
            raise report.ReportError(f"cannot read {p}: {exc}") from exc
        tables.append(report.read_run_csv(text, source=Path(p).stem if args.short_names else p))
    summaries = [report.summarize(t) for t in tables]
    summary_csv = report.summaries_to_csv(summaries)
    sys.stdout.write(summary_csv)
    if args.out:
        from . import plotting

        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "summary.csv").write_text(summary_csv, encoding="utf-8")
        (out / "plot.csv").write_text(report.plot_table_csv(tables), encoding="utf-8")
        plotting.convergence_figure(tables, out / "convergence.png")
        plotting.effectivity_figure(tables, out / "effectivity.png")
        plotting.exponential_figure(tables, out / "exponential.png")
    return EXIT_OK


def cmd_inverse_lab(args) -> int:
    kinds = KINDS if args.kind == "both" else (args.kind,)
    if args.pmin < 1 or args.pmax < args.pmin + 3:
        raise cfgmod.ConfigError("need 1 <= pmin and at least four degrees (pmax >= pmin + 3)")
    series = inverse_lab.sweep(kinds, args.pmin, args.pmax)
    text = inverse_lab.series_to_csv(series)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    for s in series:
        log.info("%s %s exponent=%.3f predicted=%.1f r2=%.4f", s.kind, s.name, s.exponent, s.predicted, s.r2)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hpbiharm", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="log every adaptive step")
    sub = ap.add_subparsers(dest="command", required=True)

    def config_args(p):
        p.add_argument("config", nargs="?", help="INI file with a [run] section (defaults if omitted)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")

    p = sub.add_parser("run", help="adaptive benchmark run")
    config_args(p)
    p.add_argument("--output-dir", help="overrides output_dir")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="convergence summary of run CSV files")
    p.add_argument("csv", nargs="+")
    p.add_argument("--out", help="directory for summary.csv, plot.csv and PNG figures")
    p.add_argument("--short-names", action="store_true", help="label runs by file stem")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("inverse-lab", help="inverse-estimate constants and growth fits")
    p.add_argument("--kind", choices=(*KINDS, "both"), default="both")
    p.add_argument("--pmin", type=int, default=2)
    p.add_argument("--pmax", type=int, default=10)
    p.add_argument("--out", help="CSV path (stdout if omitted)")
    p.set_defaults(func=cmd_inverse_lab)

    p = sub.add_parser("mesh-dump", help="print the mesh of an adaptive step")
    config_args(p)
    p.add_argument("--step", type=int, required=True)
    p.set_defaults(func=cmd_mesh_dump)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (cfgmod.ConfigError, report.ReportError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
