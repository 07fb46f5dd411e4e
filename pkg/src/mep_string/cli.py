"""Command-line front end: ``mep-string {solve,study,probe,check}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import experiments as ex
from . import geometry as geo
from .config import DEFAULTS, RunConfigFile, defaults_text, load_json, parse_config, parse_study_config
from .errors import ConfigError, MEPError
from .integrator import FlowOracleConfig, SCHEME_ORDER
from .potential import make_potential
from .reporting import emit_plotdata, emit_report, write_study_table
from .solver import SolverConfig, initial_string, run

log = logging.getLogger("mep_string")

# solve flag -> (config block, key)
SOLVE_FLAGS = {
    "potential": ("potential", "name"),
    "h": ("solver", "h"),
    "K": ("solver", "K"),
    "dt": ("solver", "dt"),
    "integrator": ("solver", "integrator"),
    "max_steps": ("solver", "max_steps"),
    "tol_residual": ("solver", "tol_residual"),
    "tol_displacement": ("solver", "tol_displacement"),
    "n_images": ("init", "n_images"),
    "init": ("init", "kind"),
    "amplitude": ("init", "amplitude"),
    "seed": ("init", "seed"),
    "out": ("output", "report"),
    "trace": ("output", "trace"),
    "plotdata": ("output", "plotdata"),
}


def _potential(block):
    return make_potential(block["name"], block.get("params") or {}, block.get("box"))


def _solver_config(block, h) -> SolverConfig:
    return SolverConfig(
        h=h,
        K=block["K"],
        max_steps=int(block["max_steps"]),
        tol_displacement=block["tol_displacement"],
        tol_residual=block["tol_residual"],
        grad_tol=block["grad_tol"],
        eig_tol=block["eig_tol"],
    ).with_(dt=block["dt"], scheme=block["integrator"])


def _endpoints(p, init):
    if init.get("endpoints") is not None:
        return tuple(np.asarray(e, dtype=float) for e in init["endpoints"])
    return ex.default_endpoints(p)


def load_solve_config(args) -> RunConfigFile:
    """Config file (or defaults) overridden by any flags given on the command line."""
    if args.config:
        with open(args.config) as fh:
            data = load_json(fh.read())
    else:
        data = {}
    for flag, (block, key) in SOLVE_FLAGS.items():
        value = getattr(args, flag)
        if value is not None:
            data.setdefault(block, {})[key] = value
    data.setdefault("potential", {}).setdefault("name", DEFAULTS["potential"]["name"])
    return parse_config(json.dumps(data))


def cmd_solve(args) -> int:
    cfg = load_solve_config(args)
    p = _potential(cfg.potential)
    lo, hi = _endpoints(p, cfg.init)
    init = cfg.init
    h = cfg.solver["h"]
    x0 = initial_string(p, lo, hi, int(init["n_images"]), init["kind"], init["amplitude"],
                        int(init["seed"]), h=h)
    if h is None:
        h = geo.spacing(x0)
    report = run(_solver_config(cfg.solver, h), p, x0)
    out = cfg.output
    if out["report"]:
        emit_report(report, "json", out["report"])
    if out["trace"]:
        emit_report(report, "csv", out["trace"])
    if out["plotdata"]:
        emit_plotdata(report, out["plotdata"], ex.analytic_reference(p))
    last = report.iterations[-1] if report.iterations else None
    print(f"termination: {report.termination.value}")
    print(f"steps: {len(report.iterations)}  N: {report.final_string.n}")
    if last is not None:
        print(f"residual: {last.residual:.6g}")
    if report.saddle is not None:
        print(f"saddle: {np.array2string(report.saddle, precision=6)}  barrier: {report.barrier:.8g}")
    if report.message:
        print(f"note: {report.message}")
    return 0 if report.converged else 1


def cmd_study(args) -> int:
    with open(args.config) as fh:
        sc = parse_study_config(fh.read())
    p = _potential(sc.potential)
    base_block = dict(sc.solver)
    base = _solver_config(base_block, base_block["h"])
    ref = sc.reference
    if ref["kind"] == "analytic":
        reference = ex.analytic_reference(p)
        if reference is None:
            raise ConfigError(f"no analytic reference for {p.name}; use reference.kind = fine-run")
    else:
        reference = ex.fine_reference(p, base, int(ref["n_images"]), ref["dt"],
                                      max_steps=ref["max_steps"])
    grid = sc.grid
    table = ex.convergence_study(grid["h"], grid["dt"], grid["schemes"], base, p, reference,
                                 init_kind=sc.init["kind"], amplitude=sc.init["amplitude"],
                                 seed=int(sc.init["seed"]))
    out = args.out or sc.output.get("table")
    if out:
        write_study_table(table, out)
    plot = args.plotdata or sc.output.get("plotdata")
    if plot:
        emit_plotdata(table, plot)
    for r in table.rows:
        print(f"{r.scheme:5s} h={r.h:<8g} dt={r.dt:<8g} N={r.N_final:<4d} "
              f"d_H={r.error_dH:.3e} {r.termination} {r.status}")
    return 0 if table.all_ok else 1


def cmd_probe(args) -> int:
    p = make_potential(args.potential)
    if args.kind == "lemmas":
        result = ex.lemma_scaling_checks(seed=args.seed)
        plot_obj = None
    else:
        M = ex.analytic_reference(p)
        if M is None:
            M = ex.fine_reference(p, SolverConfig(h=1.0), dt=args.ref_dt, max_steps=args.ref_steps)
        if args.kind == "stability":
            oracle = FlowOracleConfig(args.tol, args.tol)
            trace = ex.stability_probe(p, M, args.amplitude, args.n_vertices, args.horizon,
                                       args.checkpoints, oracle)
            result = trace.to_dict()
            result["settled_monotone"] = ex.settled_monotone(trace)
            plot_obj = trace
        else:
            rows = ex.one_sided_lemma_probe(p, M, args.eta, args.samples, args.seed)
            result = {"rows": rows}
            plot_obj = rows
    result = {"kind": args.kind, "potential": p.name, "result": result}
    text = json.dumps(result, indent=1)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    if args.plotdata and plot_obj is not None:
        emit_plotdata(plot_obj, args.plotdata)
    return 0


def cmd_check(args) -> int:
    results = ex.check_suite(seed=args.seed)
    for r in results:
        print(f"{'PASS' if r['passed'] else 'FAIL'}  {r['label']}")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(results, fh, indent=1)
            fh.write("\n")
    return 0 if all(r["passed"] for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mep-string", description="String method for minimum energy paths.")
    parser.add_argument("--print-defaults", action="store_true", help="print the default run config and exit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command")

    s = sub.add_parser("solve", help="run the string method on one potential")
    s.add_argument("--config", help="JSON run config; flags override its values")
    s.add_argument("--print-defaults", dest="solve_print_defaults", action="store_true", help="print the default run config and exit")
    s.add_argument("--potential")
    s.add_argument("--h", type=float, help="target spacing (default: spacing of the initial string)")
    s.add_argument("--K", type=float)
    s.add_argument("--dt", type=float)
    s.add_argument("--integrator", choices=sorted(SCHEME_ORDER))
    s.add_argument("--n-images", dest="n_images", type=int, help="number of segments N")
    s.add_argument("--init", choices=("linear", "arc", "perturbed"))
    s.add_argument("--amplitude", type=float)
    s.add_argument("--seed", type=int)
    s.add_argument("--max-steps", dest="max_steps", type=int)
    s.add_argument("--tol-residual", dest="tol_residual", type=float)
    s.add_argument("--tol-displacement", dest="tol_displacement", type=float)
    s.add_argument("--out", help="report JSON path")
    s.add_argument("--trace", help="iteration trace CSV path")
    s.add_argument("--plotdata", help="long-format plot CSV path")
    s.set_defaults(func=cmd_solve)

    st = sub.add_parser("study", help="(h, dt) refinement study")
    st.add_argument("--config", required=True)
    st.add_argument("--out", help="table CSV path")
    st.add_argument("--plotdata")
    st.set_defaults(func=cmd_study)

    pr = sub.add_parser("probe", help="stability, one-sided or lemma scaling probe")
    pr.add_argument("--kind", required=True, choices=("stability", "one-sided", "lemmas"))
    pr.add_argument("--potential", default="double-well")
    pr.add_argument("--amplitude", type=float, default=0.1)
    pr.add_argument("--horizon", type=float, default=10.0)
    pr.add_argument("--checkpoints", type=int, default=21)
    pr.add_argument("--n-vertices", dest="n_vertices", type=int, default=201)
    pr.add_argument("--tol", type=float, default=1e-10, help="reference flow tolerance")
    pr.add_argument("--eta", type=float, nargs="+", default=[0.1, 0.05, 0.025, 0.0125])
    pr.add_argument("--samples", type=int, default=50)
    pr.add_argument("--seed", type=int, default=0)
    pr.add_argument("--ref-dt", dest="ref_dt", type=float, default=2.5e-5)
    pr.add_argument("--ref-steps", dest="ref_steps", type=int, default=20_000)
    pr.add_argument("--out")
    pr.add_argument("--plotdata")
    pr.set_defaults(func=cmd_probe)

    ck = sub.add_parser("check", help="run the lemma/property suite")
    ck.add_argument("--seed", type=int, default=0)
    ck.add_argument("--out", help="write the check report as JSON")
    ck.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.print_defaults or getattr(args, "solve_print_defaults", False):
        print(defaults_text())
        return 0
    if args.command is None:
        parser.print_help()
        return 2
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (MEPError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
