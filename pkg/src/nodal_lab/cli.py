"""Command-line front end.

Every subcommand reads one JSON file (``--input``), writes CSV/JSON reports to
``--out`` and exits 0 when all checks pass, 1 when a check fails, and 2 on
bad input or usage. Set ``NODAL_LAB_LOG=debug`` for verbose logging.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import discrete, magnetic
from .discretizer import (
    discretize,
    enumerate_discretizations,
    verify_equilateral_connection,
    verify_surplus_transfer,
)
from .ensemble import girth_sweep, sweep
from .graph import betti_number, girth_oracle
from .io import (
    InputError,
    decomposition_from_json,
    graph_from_json,
    metric_from_json,
    operator_from_json,
    read_json,
    write_csv,
    write_json,
)
from .metric import RootTrackingError, k_hessian_fd, k_spectrum, metric_nodal_report
from .torus import (
    symmetry_pair,
    symmetry_residuals,
    surplus_statistics,
    torus_hessian,
)

log = logging.getLogger("nodal_lab")

EXIT_OK, EXIT_FALSIFIED, EXIT_USAGE = 0, 1, 2
SWEEP_POINTS = 101


class UsageError(Exception):
    pass


def _tolerances(args) -> dict:
    return {
        "simplicity_tol": args.tol_simplicity,
        "vertex_zero_tol": args.tol_vertex_zero,
    }


def _operator(args):
    op = operator_from_json(read_json(args.input))
    return op, discrete.spectrum(op, **_tolerances(args))


def _skipped_rows(spec):
    return [(n, float(spec.eigenvalues[n - 1]), reason) for n, reason in spec.skipped()]


def _write_skipped(out: Path, rows):
    write_csv(out / "skipped.csv", ["n", "value", "reason"], rows)


def _flux_sweep(op) -> list:
    rows = []
    for a in np.linspace(0.0, 2 * math.pi, SWEEP_POINTS):
        alpha = np.zeros(op.beta)
        alpha[0] = a
        rows.append([float(a)] + [float(x) for x in discrete.eigenvalues(discrete.apply_flux(op, alpha))])
    return rows


def cmd_spectrum(args, out: Path) -> int:
    op, spec = _operator(args)
    write_csv(
        out / "spectrum.csv",
        ["n", "lambda", "generic", "reason"],
        [(n, float(lam), g, r) for n, (lam, g, r) in enumerate(zip(spec.eigenvalues, spec.generic_flags, spec.reasons), 1)],
    )
    if op.beta:
        header = ["alpha"] + [f"lambda_{n}" for n in range(1, op.size + 1)]
        write_csv(out / "flux_sweep.csv", header, _flux_sweep(op))
    _write_skipped(out, _skipped_rows(spec))
    return EXIT_OK


def _bounds_ok(report: discrete.NodalReport) -> bool:
    b = report.beta
    return all(
        n - 1 <= e.phi <= n - 1 + b and n - b <= e.nu <= n for n, e in report.entries.items()
    )


def cmd_nodal(args, out: Path) -> int:
    op, spec = _operator(args)
    report = discrete.nodal_report(op, spec)
    write_csv(out / "nodal.csv", ["n", "lambda", "generic", "phi", "nu", "sigma"], report.rows())
    _write_skipped(out, _skipped_rows(spec))
    ok = _bounds_ok(report)
    print(f"phi = {report.phi()}  (bounds {'hold' if ok else 'VIOLATED'})")
    return EXIT_OK if ok else EXIT_FALSIFIED


def cmd_surplus_morse(args, out: Path) -> int:
    op, spec = _operator(args)
    hess = magnetic.perturbative_hessians(op, spec)
    table = magnetic.verify_surplus_equals_morse(op, spec, hess)
    write_csv(
        out / "surplus_morse.csv",
        ["n", "lambda", "sigma", "morse", "pass"],
        [(r.n, r.eigenvalue, r.sigma, r.morse, r.passed) for r in table.rows],
    )
    _write_skipped(out, _skipped_rows(spec))
    summary = {"surplus_equals_morse": table.passed, "trace_identity_pass": None,
               "girth_traces": None, "girth_oracle": girth_oracle(op.graph)}
    if not any(r == "degenerate" for r in spec.reasons):
        summary["trace_identity_pass"] = magnetic.trace_identities(op, spec, hess, args.tol_trace).passed
        if op.beta:
            summary["girth_traces"] = magnetic.girth_from_traces(op, spec, hess, args.tol_girth).girth
    write_json(out / "summary.json", summary)
    print(f"surplus = Morse on {len(table.rows)} generic indices: {'pass' if table.passed else 'FAIL'}")
    return EXIT_OK if table.passed else EXIT_FALSIFIED


def cmd_tree_test(args, out: Path) -> int:
    data = read_json(args.input)
    if "lengths" in data:
        return _metric_tree_test(args, out, data)
    op = operator_from_json(data)
    spec = discrete.spectrum(op, **_tolerances(args))
    report = discrete.nodal_report(op, spec)
    try:
        verdict = discrete.is_tree_nodal_count(report)
    except discrete.NonGenericError as exc:
        raise UsageError(f"tree test refused: {exc}") from exc
    is_tree = op.beta == 0
    consistent = verdict.is_tree_count == is_tree
    write_json(out / "tree_test.json", {
        "tree_nodal_count": verdict.is_tree_count, "witness": verdict.witness,
        "graph_is_tree": is_tree, "consistent": consistent, "phi": report.phi(),
    })
    if verdict.is_tree_count:
        print("tree's nodal count (phi_n = n - 1 for all n)")
    else:
        print(f"not a tree's nodal count (first violation at n={verdict.witness})")
    return EXIT_OK if consistent else EXIT_FALSIFIED


def _metric_tree_test(args, out, data) -> int:
    mg = metric_from_json(data)
    n = args.n or 50
    report = _metric_report_for(mg, n, args.kmax)
    entries = report.generic_entries()[:n]
    tree_count = all(e.phi == e.n - 1 for e in entries)
    is_tree = mg.beta == 0
    consistent = tree_count == is_tree
    write_json(out / "tree_test.json", {
        "tree_nodal_count": tree_count, "graph_is_tree": is_tree,
        "consistent": consistent, "generic_checked": len(entries),
    })
    print("tree's nodal count" if tree_count else "not a tree's nodal count")
    return EXIT_OK if consistent else EXIT_FALSIFIED


def cmd_trace_identities(args, out: Path) -> int:
    op, spec = _operator(args)
    try:
        res = magnetic.trace_identities(op, spec, tol=args.tol_trace)
    except magnetic.DegenerateEigenvalueError as exc:
        raise UsageError(str(exc)) from exc
    write_json(out / "trace_identities.json", {
        "sum_hessians": res.sum_hessians, "weighted_sum": res.weighted_sum,
        "scale": res.scale, "weighted_scale": res.weighted_scale, "pass": res.passed,
    })
    print(f"trace identities: {'pass' if res.passed else 'FAIL'}")
    return EXIT_OK if res.passed else EXIT_FALSIFIED


def cmd_girth(args, out: Path) -> int:
    op, spec = _operator(args)
    if op.beta == 0:
        raise UsageError("girth from traces needs a graph with cycles")
    try:
        res = magnetic.girth_from_traces(op, spec, threshold=args.tol_girth)
    except magnetic.DegenerateEigenvalueError as exc:
        raise UsageError(str(exc)) from exc
    oracle = girth_oracle(op.graph)
    write_json(out / "girth.json", {
        "girth_traces": res.girth, "girth_scalar": res.scalar_girth, "girth_oracle": oracle,
        "ambiguous": list(res.ambiguous),
        "values": {k: {"max_norm": v[0], "threshold": v[1], "scalar": v[2]} for k, v in res.values.items()},
    })
    ok = res.girth == oracle
    print(f"traces-girth {res.girth} {'=' if ok else '!='} oracle {oracle}")
    return EXIT_OK if ok else EXIT_FALSIFIED


def _metric_report_for(mg, n, k_max):
    k_max = k_max or math.pi * (2 * n + 10) / mg.total_length
    return metric_nodal_report(mg, k_spectrum(mg, k_max))


def cmd_metric_spectrum(args, out: Path) -> int:
    mg = metric_from_json(read_json(args.input))
    k_max = args.kmax or 20.0
    report = metric_nodal_report(mg, k_spectrum(mg, k_max))
    rows, failures = [], []
    for lv in report.levels:
        e = report.entries.get(lv.n)
        morse = None
        if e is not None and lv.k > 0 and mg.beta and not args.no_morse:
            morse = k_hessian_fd(mg, lv.k, n=lv.n).morse_index
            if morse != e.sigma:
                failures.append(lv.n)
        elif e is not None and mg.beta == 0:
            morse = 0
        if e is not None and not (lv.n - 1 <= e.phi <= lv.n - 1 + mg.beta and lv.n - mg.beta <= e.nu <= lv.n):
            failures.append(lv.n)
        for j in range(lv.multiplicity):
            rows.append((
                lv.n + j, lv.k, lv.k**2, lv.generic,
                e.phi if e else None, e.nu if e else None, e.sigma if e else None, morse,
            ))
    write_csv(out / "metric_spectrum.csv", ["n", "k", "lambda", "generic", "phi", "nu", "sigma", "morse"], rows)
    _write_skipped(out, [(n, None, r) for n, r in report.skipped()])
    write_csv(out / "sigma_vs_n.csv", ["n", "sigma"], [(e.n, e.sigma) for e in report.generic_entries()])
    print(f"{len(rows)} eigenvalues up to k={k_max}; onset of phi = nu - 1 + beta after n={report.domain_relation_onset()}")
    return EXIT_OK if not failures else EXIT_FALSIFIED


def cmd_torus_check(args, out: Path) -> int:
    data = read_json(args.input)
    mg = metric_from_json(data)
    decomp = decomposition_from_json(data, mg)
    residuals = symmetry_residuals(mg, decomp, 1000, seed=args.seed)
    sym_ok = all(r <= 1e-10 * s for r, _, s in residuals)
    signed_ok = all(r <= 1e-10 * s for _, r, s in residuals)
    n = args.n or 20
    report = _metric_report_for(mg, n, args.kmax)
    rows, worst, pair_ok = [], 0.0, True
    for e in report.generic_entries(positive_only=True)[:n]:
        th = torus_hessian(mg, decomp, e.k)
        fd = k_hessian_fd(mg, e.k)
        gap = float(np.max(np.abs(th.matrix - fd.matrix))) if mg.beta else 0.0
        worst = max(worst, gap)
        pair = symmetry_pair(mg, decomp, e.k)
        pair_ok &= pair.morse_sum_ok
        rows.append((e.n, e.k, e.sigma, th.morse_index, fd.morse_index, gap, pair.morse_plus, pair.morse_minus))
    write_csv(
        out / "torus_hessians.csv",
        ["n", "k", "sigma", "morse_torus", "morse_fd", "max_gap", "morse_x", "morse_minus_x"],
        rows,
    )
    ok = sym_ok and worst < 1e-4 and pair_ok
    write_json(out / "torus_check.json", {
        "generators": decomp.generators, "periods": decomp.periods,
        "symmetry_max_residual": max(r / s for r, _, s in residuals),
        "symmetry_pass": sym_ok,
        "det_S": mg.system.det_sign,
        "signed_symmetry_max_residual": max(r / s for _, r, s in residuals),
        "signed_symmetry_pass": signed_ok, "hessian_max_gap": worst, "pair_morse_pass": pair_ok, "pass": ok,
    })
    print(
        f"symmetry {'pass' if sym_ok else 'FAIL'} (up to det S = {mg.system.det_sign:+d}: "
        f"{'pass' if signed_ok else 'FAIL'}); torus vs FD Hessian max gap {worst:.2e}"
    )
    return EXIT_OK if ok else EXIT_FALSIFIED


def cmd_surplus_stats(args, out: Path) -> int:
    mg = metric_from_json(read_json(args.input))
    n = args.n or 200
    stats = surplus_statistics(mg, n, args.kmax)
    write_csv(out / "surplus_stats.csv", ["sigma", "count", "frequency"], stats.rows())
    print("histogram " + ", ".join(f"sigma={s}: {c}" for s, c, _ in stats.rows()))
    return EXIT_OK if stats.passed else EXIT_FALSIFIED


def cmd_discretize(args, out: Path) -> int:
    data = read_json(args.input)
    mg = metric_from_json(data)
    decomp = decomposition_from_json(data, mg)
    found = enumerate_discretizations(decomp, args.bound)
    result = {"bound": args.bound, "vectors": [list(j) for j in found.vectors], "hint": found.hint}
    if found.vectors:
        version = discretize(mg, decomp, found.vectors[0])
        result["first"] = {"j": list(version.j), "graph": version.graph.to_json(),
                           "lineage": {str(v): list(p) for v, p in version.lineage.items()}}
    write_json(out / "discretizations.json", result)
    print(f"{len(found.vectors)} discretized versions with entries <= {args.bound}" + (f"; {found.hint}" if found.hint else ""))
    return EXIT_OK


def cmd_equilateral_check(args, out: Path) -> int:
    data = read_json(args.input)
    graph = graph_from_json(data.get("graph", data))
    p_max = args.pmax
    eq = verify_equilateral_connection(graph, p_max)
    transfer = verify_surplus_transfer(graph, p_max) if betti_number(graph) else None
    by_mu = {c.n: c for c in transfer.checks} if transfer else {}
    reports = []
    for c in eq.checks:
        t = by_mu.get(c.n)
        reports.append({
            "mu": c.mu, "n": c.n,
            "sigma_discrete": t.sigma_discrete if t else 0,
            "branches": [b.to_json() for b in t.branches] if t else
            [{"p": p, "k": k, "match_error": err} for p, (k, err) in enumerate(zip(c.branches, c.branch_errors))],
            "branch_match": c.branches_ok,
            "dirichlet_check": eq.dirichlet_ok,
            "trace_lift_check": c.stated_lift_ok,
            "trace_lift_check_inverse_sqrt_degree": c.corrected_lift_ok,
        })
    outcome = eq.outcome
    write_json(out / "equilateral.json", {
        "outcome": outcome, "reports": reports, "dirichlet_check": eq.dirichlet_ok,
        "stray_roots": eq.stray_roots, "skipped": eq.skipped,
        "transfer_outcome": transfer.outcome if transfer else "vacuous",
    })
    ok = eq.branches_ok and eq.dirichlet_ok and eq.stated_lift_ok and (transfer is None or transfer.passed)
    print(
        f"{outcome}: branches {'pass' if eq.branches_ok else 'FAIL'}, "
        f"dirichlet {'pass' if eq.dirichlet_ok else 'FAIL'}, "
        f"lift D^(1/2) {'pass' if eq.stated_lift_ok else 'FAIL'}, "
        f"lift D^(-1/2) {'pass' if eq.corrected_lift_ok else 'FAIL'}"
    )
    return EXIT_OK if ok else EXIT_FALSIFIED


def cmd_ensemble(args, out: Path) -> int:
    summary = sweep(args.seed, args.ensemble_size, keep_scatter=True)
    girth = girth_sweep(args.seed, max(1, args.ensemble_size // 5))
    write_json(out / "ensemble.json", {"sweep": summary.to_json(), "girth": {
        "graphs": girth.graphs, "mismatches": len(girth.mismatches),
        "scalar_mismatches": len(girth.scalar_mismatches), "ambiguous": len(girth.ambiguous),
    }})
    write_csv(out / "hessian_scatter.csv", ["operator", "n", "i", "j", "perturbative", "fd"], summary.scatter)
    write_csv(out / "girth.csv", ["graph", "vertices", "beta", "traces", "scalar", "oracle"], girth.rows)
    ok = summary.passed and girth.passed
    print(f"{summary.operators} operators, {summary.generic_indices} generic indices: {'pass' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_FALSIFIED


COMMANDS = {
    "spectrum": (cmd_spectrum, "eigenvalues, genericity flags and a flux sweep"),
    "nodal": (cmd_nodal, "nodal counts of a discrete operator"),
    "surplus-morse": (cmd_surplus_morse, "nodal surplus against the flux Morse index"),
    "tree-test": (cmd_tree_test, "does the nodal count identify a tree?"),
    "trace-identities": (cmd_trace_identities, "vanishing Hessian sums"),
    "girth": (cmd_girth, "girth from flux Hessians against BFS"),
    "metric-spectrum": (cmd_metric_spectrum, "metric eigenvalues with nodal data"),
    "torus-check": (cmd_torus_check, "secular symmetry and the torus Hessian formula"),
    "surplus-stats": (cmd_surplus_stats, "surplus histogram of a metric graph"),
    "discretize": (cmd_discretize, "integer subdivisions compatible with the lengths"),
    "equilateral-check": (cmd_equilateral_check, "arccos spectral map and surplus transfer"),
    "ensemble": (cmd_ensemble, "randomized property sweep"),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # one-line diagnostic instead of the usage block
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nodal-lab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.error = parser.error
        p.add_argument("--input", required=name != "ensemble", help="JSON input file")
        p.add_argument("--out", default="out", help="output directory (default: out)")
        p.add_argument("--kmax", type=float, default=None, help="spectral ceiling in k")
        p.add_argument("--n", type=int, default=None, help="number of eigenvalues/roots")
        p.add_argument("--pmax", type=int, default=3, help="highest arccos branch")
        p.add_argument("--bound", type=int, default=10, help="largest subdivision count")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--ensemble-size", type=int, default=1000)
        p.add_argument("--no-morse", action="store_true", help="skip metric flux Hessians")
        p.add_argument("--tol-simplicity", type=float, default=discrete.SIMPLICITY_TOL)
        p.add_argument("--tol-vertex-zero", type=float, default=discrete.VERTEX_ZERO_TOL)
        p.add_argument("--tol-trace", type=float, default=magnetic.TRACE_TOL)
        p.add_argument("--tol-girth", type=float, default=magnetic.GIRTH_THRESHOLD)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("NODAL_LAB_LOG", "warning").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    handler = COMMANDS[args.command][0]
    out = Path(args.out)
    try:
        return handler(args, out)
    except (InputError, UsageError, RootTrackingError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
