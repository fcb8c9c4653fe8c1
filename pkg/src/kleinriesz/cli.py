"""Command-line front end.

    kleinriesz <command> [--config FILE] [--out DIR] [--threads N] [overrides]

Commands: solve, kernel, poincare, verify, moving-plane, rescale, continue.
Each run writes <command>.json (report with the resolved config) and CSV
data files into the output directory; on failure an error JSON goes to
stdout and <out>/error.json and the exit status is nonzero.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from .config import ConfigError, RunConfig, load_config
from .geometry import build_chart, stereographic, unfold
from .kernel import assemble
from .mobius import (exponent_estimate, group_from_json, load_group, poincare_partial_sum,
                     shell_sums, trivial_group)
from .solver import solve

log = logging.getLogger("kleinriesz")

COMMANDS = ("solve", "kernel", "poincare", "verify", "moving-plane", "rescale", "continue")
EXIT_FAIL, EXIT_CONFIG = 1, 2


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % float(v)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for r in rows:
            wr.writerow([_fmt(v) for v in r])


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    if isinstance(o, (np.floating, float)):
        o = float(o)
        return o if np.isfinite(o) else str(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, np.bool_):
        return bool(o)
    return o


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def resolve_group(cfg: RunConfig):
    try:
        if cfg.group_file is not None:
            return load_group(cfg.group_file, cfg.n)
        if cfg.group is not None:
            return group_from_json(cfg.group, cfg.n)
    except ValueError as e:
        raise ConfigError([f"{'group_file' if cfg.group_file else 'group'}: {e}"])
    return trivial_group(cfg.n)


def _setup(cfg, alpha=None):
    spec = cfg.problem(alpha)
    group = resolve_group(cfg)
    try:
        chart = build_chart(group, cfg.resolution, cfg.n, warp=cfg.warp,
                            radial_levels=cfg.radial_levels)
    except ValueError as e:
        raise ConfigError([f"group: {e}"])
    return spec, group, chart


def _kernel(cfg, chart, spec):
    return assemble(chart, spec, diagonal=cfg.diagonal, r0=cfg.r0, cutoff=cfg.cutoff)


def _solve(cfg, spec, chart, K, with_yamabe=None):
    return solve(spec, chart, K, max_iter=cfg.max_iter,
                 with_yamabe=cfg.yamabe if with_yamabe is None else with_yamabe)


# ----------------------------------------------------------------- commands

def cmd_solve(cfg, out):
    spec, group, chart = _setup(cfg)
    K = _kernel(cfg, chart, spec)
    sol, rep = _solve(cfg, spec, chart, K)
    vhat = unfold(sol, chart)
    u = sol.values
    write_csv(out / "solution.csv",
              [f"x{i}" for i in range(chart.n)] + ["weight", "eta_hat", "u", "vhat"],
              (list(x) + [w, e, ui, vi] for x, w, e, ui, vi in
               zip(chart.nodes, chart.flat_weights, chart.eta_hat, u, vhat)))
    summary = {"nodes": chart.size, "chart": chart.chart_kind, "volume": chart.volume(),
               "exact_volume": chart.exact_volume(), "mean_u": float(np.mean(u)),
               "min_u": float(u.min()), "max_u": float(u.max())}
    report = {"kernel": K.header(), "solve": rep.to_dict(), "summary": summary}
    return report, rep.converged


def cmd_kernel(cfg, out):
    spec, group, chart = _setup(cfg)
    K = _kernel(cfg, chart, spec)
    A = K.operator_matrix()
    write_csv(out / "kernel_rows.csv", ["node", "diagonal_correction", "row_sum", "local_integral"],
              ((i, d, r, li) for i, (d, r, li) in
               enumerate(zip(K.diagonal_correction, A.sum(axis=1),
                             K.local_integral if K.local_integral is not None
                             else np.full(K.size, np.nan)))))
    return {"kernel": K.header(), "nodes": chart.size}, True


def cmd_poincare(cfg, out):
    group = resolve_group(cfg)
    if group.is_trivial:
        raise ConfigError(["group: the Poincare series needs a nontrivial group"])
    x = np.array(cfg.x if cfg.x is not None else [1.0] + [0.0] * (cfg.n - 1))
    cutoff = cfg.cutoff or 60
    ps = poincare_partial_sum(group, cfg.s, x, cutoff)
    S = shell_sums(group, cfg.s, x, cutoff)
    write_csv(out / "poincare_shells.csv", ["word_length", "shell_sum"],
              ((j + 1, v) for j, v in enumerate(S)))
    delta = exponent_estimate(group, x, cutoff)
    return {"s": cfg.s, "x": x, "cutoff": cutoff, "partial_sum": ps.sum,
            "tail_bound": ps.tail_bound, "diverging": ps.diverging,
            "exponent_estimate": delta}, True


def cmd_verify(cfg, out):
    from .identities import identity_suite
    res = identity_suite(seed=cfg.seed, n=cfg.n, alpha=cfg.alpha)
    rows = [(name, v, tol, v < tol) for name, (v, tol) in res.items()]
    with open(out / "verify.csv", "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["identity", "max_residual", "tolerance", "passed"])
        for name, v, tol, ok in rows:
            wr.writerow([name, _fmt(v), _fmt(tol), int(ok)])
    ok = all(r[3] for r in rows)
    return {"identities": {n: {"max_residual": v, "tolerance": t, "passed": p}
                           for n, v, t, p in rows}}, ok


def cmd_moving_plane(cfg, out):
    from .analysis import moving_plane_scan, unfolded_field
    spec, group, chart = _setup(cfg)
    K = _kernel(cfg, chart, spec)
    sol, rep = _solve(cfg, spec, chart, K)
    if not rep.converged:
        return {"kernel": K.header(), "solve": rep.to_dict()}, False
    bp = cfg.base_point
    if bp is None and not group.is_trivial:
        bp = [1.0] + [0.0] * (cfg.n - 1)
    base = None if bp is None else stereographic(np.asarray(bp, float))
    field, lim = unfolded_field(chart, sol.values, spec.alpha, base=base)
    scan = moving_plane_scan(field, cfg.lambdas, lim, axis=cfg.axis, lo=-cfg.box, hi=cfg.box,
                             m=cfg.samples, floor=cfg.floor)
    write_csv(out / "moving_plane.csv",
              ["lambda", "sigma_minus_measure", "min_gap", "skipped", "clearance",
               "sigma_minus_raw", "n_samples"], scan.rows())
    return {"kernel": K.header(), "solve": rep.to_dict(), "base_point": bp,
            "limit_points": lim, "scan": scan.to_dict(), "floor_test_passed": scan.ok()}, True


def cmd_rescale(cfg, out):
    from .analysis import ManifoldInterpolant, bubble_fit, kernel_limit_gap, rescale
    spec, group, chart = _setup(cfg)
    K = _kernel(cfg, chart, spec)
    sol, rep = _solve(cfg, spec, chart, K)
    if not rep.converged:
        return {"kernel": K.header(), "solve": rep.to_dict()}, False
    p0 = int(np.argmax(sol.values)) if cfg.p0 == "argmax" else cfg.p0
    if p0 >= chart.size:
        raise ConfigError([f"p0: node index {p0} out of range ({chart.size} nodes)"])
    interp = ManifoldInterpolant(chart, sol.values)
    gaps = kernel_limit_gap(chart, spec, p0, cfg.scales, cfg.Lambda)
    rows, frows, per = [], [], []
    for lam, gap in zip(cfg.scales, gaps):
        R = rescale(sol, chart, p0, lam, cfg.window, interp=interp)
        fit = bubble_fit(R.field, None, spec)
        rows.append((lam, R.center_value, R.radius, R.clipped, gap, fit.t, fit.amplitude,
                     fit.fit_residual))
        per.append({"lambda": lam, "radius": R.radius, "clipped": R.clipped,
                    "center_value": R.center_value, "kernel_gap": gap, "fit": fit.to_dict()})
        for x, v in zip(R.field.points().reshape(-1, chart.n), R.field.values.reshape(-1)):
            frows.append([lam] + list(x) + [v])
    write_csv(out / "rescale.csv", ["lambda", "center_value", "radius", "clipped", "kernel_gap",
                                    "fit_t", "fit_amplitude", "fit_residual"], rows)
    write_csv(out / "rescale_fields.csv", ["lambda"] + [f"x{i}" for i in range(chart.n)] + ["v"],
              frows)
    mono = all(a > b for a, b in zip(gaps, gaps[1:]))
    return {"kernel": K.header(), "solve": rep.to_dict(), "p0": p0,
            "p0_point": chart.nodes[p0], "Lambda": cfg.Lambda, "kernel_gaps": gaps,
            "kernel_gap_monotone": mono, "scales": per}, True


def cmd_continue(cfg, out):
    from .analysis import continue_alpha
    a0, a1 = cfg.alpha_range if cfg.alpha_range is not None else (2.0, cfg.alpha)
    spec, group, chart = _setup(cfg, alpha=a0)
    path = continue_alpha(spec, chart, a1, cfg.step, bound=cfg.bound, with_yamabe=cfg.yamabe,
                          alpha_start=a0,
                          kernel_kw={"diagonal": cfg.diagonal, "r0": cfg.r0, "cutoff": cfg.cutoff},
                          solve_kw={"max_iter": cfg.max_iter})
    write_csv(out / "continuation.csv",
              ["alpha", "sup_norm", "inf_value", "residual", "yamabe_alpha", "mass_bound_lhs",
               "mass_bound_rhs", "tail_bound"],
              ((a, m, i, r, y, l[0], l[1], tb) for (a, m, i, r, y), l, tb in
               zip(path.rows(), path.mass_bound, path.tail_bounds)))
    report = {"status_path": path.status, "last_good_alpha": path.last_good_alpha,
              "compact": path.compact, "bound": path.bound, "alphas": path.alphas,
              "tail_bound": max(path.tail_bounds) if path.tail_bounds else None}
    if path.failed_report is not None:
        report["failed_solve"] = path.failed_report.to_dict()
    return report, path.completed


HANDLERS = {"solve": cmd_solve, "kernel": cmd_kernel, "poincare": cmd_poincare,
            "verify": cmd_verify, "moving-plane": cmd_moving_plane, "rescale": cmd_rescale,
            "continue": cmd_continue}


# ------------------------------------------------------------------- main

def _parse_set(items):
    d = {}
    for it in items or []:
        if "=" not in it:
            raise ConfigError([f"--set {it}: expected key=value"])
        k, v = it.split("=", 1)
        d[k.strip()] = yaml.safe_load(v)
    return d


def build_parser():
    p = argparse.ArgumentParser(prog="kleinriesz", description=__doc__.split("\n\n")[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="YAML or JSON run configuration")
    p.add_argument("--out", help="output directory (overrides output_dir)")
    p.add_argument("--threads", type=int, help="BLAS/OpenMP thread limit")
    p.add_argument("--group-file", dest="group_file")
    p.add_argument("--n", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--alpha-range", dest="alpha_range", type=float, nargs=2)
    p.add_argument("--resolution", type=int)
    p.add_argument("--warp", type=float)
    p.add_argument("--step", type=float)
    p.add_argument("--lambdas", type=float, nargs="+")
    p.add_argument("--scales", type=float, nargs="+")
    p.add_argument("--window", type=float)
    p.add_argument("--yamabe", action="store_true", default=None)
    p.add_argument("--seed", type=int)
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override any config key (value parsed as YAML)")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def run(command, cfg: RunConfig, threads=None):
    """Run one command; returns (exit status, report)."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    try:
        if threads:
            from threadpoolctl import threadpool_limits
            with threadpool_limits(threads):
                report, ok = HANDLERS[command](cfg, out)
        else:
            report, ok = HANDLERS[command](cfg, out)
    except ConfigError as e:
        return _fail(command, out, e.errors, EXIT_CONFIG, cfg)
    except Exception as e:  # numerical failure: report, do not traceback
        log.debug("failure", exc_info=True)
        return _fail(command, out, [f"{type(e).__name__}: {e}"], EXIT_FAIL, cfg)
    report = {"command": command, "status": "ok" if ok else "failed", "config": cfg.to_dict(),
              **report, "elapsed_s": time.perf_counter() - t0}
    write_json(out / f"{command.replace('-', '_')}.json", report)
    return (0 if ok else EXIT_FAIL), report


def _fail(command, out, errors, code, cfg=None):
    err = {"command": command, "status": "error", "errors": errors}
    if cfg is not None:
        err["config"] = cfg.to_dict()
    print(json.dumps(_jsonable(err), sort_keys=True))
    if out is not None:
        try:
            out.mkdir(parents=True, exist_ok=True)
            write_json(out / "error.json", err)
        except OSError:
            pass
    return code, err


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=[logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)],
                        format="%(levelname)s %(name)s: %(message)s")
    over = {k: getattr(args, k) for k in ("group_file", "n", "alpha", "resolution", "warp",
                                          "step", "lambdas", "scales", "window", "yamabe", "seed")}
    if args.alpha_range is not None:
        over["alpha_range"] = list(args.alpha_range)
    if args.out is not None:
        over["output_dir"] = args.out
    try:
        over.update(_parse_set(args.set))
        cfg = load_config(args.config, over)
    except ConfigError as e:
        out = Path(args.out) if args.out else None
        code, _ = _fail(args.command, out, e.errors, EXIT_CONFIG)
        return code
    code, report = run(args.command, cfg, args.threads)
    if code == 0:
        print(json.dumps({"command": args.command, "status": report["status"],
                          "output_dir": cfg.output_dir}))
    return code


if __name__ == "__main__":
    sys.exit(main())
