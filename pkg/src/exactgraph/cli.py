"""Command-line entry point: ``exactgraph <command> [flags]``.

Commands
--------
learn      learn a graph from a p-value table or data
encode     write the integer program (MPS or LP) with a JSON sidecar
oracle     list separations (and distances) of a graph
citest     run Fisher-z tests on a data CSV
simulate   sample a random DAG/ADMG and linear-Gaussian data
metrics    SHD, separation distance and F1 between two graphs

Exit codes: 0 success (``learn``: proven optimal), 2 ``learn`` returned a
timeout incumbent, 1 any error (including usage errors).

Every run writes a JSON manifest (``--manifest``; by default next to
``--out`` as ``<out>.manifest.json``, otherwise to stderr).
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
import time

from . import __version__
from .citest import (
    PValueTable,
    TableError,
    family_k,
    format_c,
    read_data,
    read_table,
    run_all_tests,
    table_to_csv,
    write_data,
)
from .encoding import EncodingError, build_program, check_row, export
from .graph import GraphClass, GraphError, read_graph, validate_class, write_graph
from .metrics import MarkedGraph, f1_scores, k_sep_distance, representative, shd
from .separation import Criterion, all_separations, distance, distance_for
from .simulate import Noise, Scheme, SimConfig, simulate
from .solver import HIGHS_COMMAND, SolverError, Status, default_criterion, solve

log = logging.getLogger("exactgraph")

EXIT_OK, EXIT_ERROR, EXIT_TIMEOUT = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; 2 means 'timeout' here."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _digest(path) -> str | None:
    if path is None or not os.path.exists(path):
        return None
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


class Manifest:
    """Collects the RunManifest fields while a command runs."""

    def __init__(self, args):
        self.args = args
        self.t0 = time.perf_counter()
        self.inputs, self.outputs = {}, {}
        self.extra = {}
        self.status = None

    def input(self, path):
        if path is not None:
            self.inputs[str(path)] = _digest(path)

    def output(self, path):
        if path is not None:
            self.outputs[str(path)] = _digest(path)

    def as_dict(self, exit_code: int) -> dict:
        flags = {k: v for k, v in vars(self.args).items() if k not in ("func",)}
        return {
            "command": self.args.command,
            "flags": flags,
            "seed": getattr(self.args, "seed", None),
            "version": __version__,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "wall_seconds": time.perf_counter() - self.t0,
            "status": self.status,
            "exit_code": exit_code,
            **self.extra,
        }

    def write(self, exit_code: int):
        text = json.dumps(self.as_dict(exit_code), indent=2, sort_keys=True, default=str)
        path = self.args.manifest
        if path is None and getattr(self.args, "out", None):
            path = f"{self.args.out}.manifest.json"
        if path is None:
            print(text, file=sys.stderr)
        else:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")


# -- shared flag groups -----------------------------------------------------------

def _k_value(text: str):
    if text == "full":
        return "full"
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("k must be an integer or 'full'") from None


def _add_problem_flags(p):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--pvalues", help="p-value CSV with header i,j,C,p,w")
    src.add_argument("--data", help="numeric data CSV (header row); tested with Fisher z")
    p.add_argument("--d", type=int, help="number of nodes (default: inferred)")
    p.add_argument("--mode", required=True, choices=[c.value for c in GraphClass if c is not GraphClass.HYBRID])
    p.add_argument("--sep", choices=[c.value for c in Criterion],
                   help="separation criterion (default: d for dg/dag, m for dmg/admg, c for chain)")
    p.add_argument("--k", type=_k_value, default="full", help="max conditioning-set size or 'full'")
    p.add_argument("--alpha", type=float, default=0.001)
    p.add_argument("--weight", type=float, default=1.0, help="weight of tests computed from --data")
    p.add_argument("--missing", choices=["error", "zero-weight"], default="error",
                   help="what to do with family triples absent from --pvalues")
    p.add_argument("--seed", type=int, default=0)


def _problem(args, manifest):
    cls = GraphClass(args.mode)
    crit = Criterion(args.sep) if args.sep else default_criterion(cls)
    try:
        check_row(cls, crit)
    except EncodingError as exc:
        raise UsageError(str(exc)) from None
    if args.pvalues:
        manifest.input(args.pvalues)
        table = read_table(args.pvalues, args.d)
    else:
        manifest.input(args.data)
        data, _ = read_data(args.data)
        if args.d is not None and args.d != data.shape[1]:
            raise UsageError(f"--d {args.d} but the data has {data.shape[1]} columns")
        fam = family_k(data.shape[1], args.k)
        table = run_all_tests(data, fam, args.weight)
        manifest.extra["failed_tests"] = table.n_failed
    d = table.d
    try:
        family = family_k(d, args.k)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.missing == "error" and not table.covers(family):
        table.restrict(family, "error")      # raises with the first missing triple
    return cls, crit, d, family, table


# -- commands -------------------------------------------------------------------------

def cmd_learn(args, manifest) -> int:
    cls, crit, d, family, table = _problem(args, manifest)
    if args.missing == "zero-weight":
        table = table.restrict(family, "zero-weight")
    warm = None
    if args.warmstart:
        manifest.input(args.warmstart)
        warm = read_graph(args.warmstart)
        if cls.hybrid and not warm.hybrid:
            warm = warm.as_hybrid()
        if not validate_class(warm, cls):
            raise UsageError(f"warmstart is not a {cls.value} graph")
    if args.solver == "brute" and warm is not None:
        raise UsageError("--warmstart needs --solver bnb")
    cmd = args.solver_cmd or HIGHS_COMMAND
    sol = solve(args.solver, cls, crit, d, family, table, args.alpha, warm,
                args.walltime, cmd)
    manifest.status = sol.status.value
    manifest.extra.update({"objective": sol.objective, "lower_bound": sol.lower_bound,
                           "stats": sol.stats})
    text = sol.graph.to_text()
    if args.out:
        write_graph(sol.graph, args.out)
        manifest.output(args.out)
    else:
        sys.stdout.write(text)
    if args.represent == "cpdag":
        if cls is not GraphClass.DAG:
            raise UsageError("--represent cpdag needs --mode dag")
        rep = representative(sol.graph, cls)
        if args.out:
            path = f"{args.out}.cpdag.csv"
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(rep.to_csv())
            manifest.output(path)
        else:
            sys.stdout.write(rep.to_csv())
    summary = {"status": sol.status.value, "objective": sol.objective,
               "lower_bound": sol.lower_bound}
    print(json.dumps(summary), file=sys.stderr if not args.out else sys.stdout)
    return EXIT_OK if sol.status is Status.OPTIMAL else EXIT_TIMEOUT


def cmd_encode(args, manifest) -> int:
    cls, crit, d, family, table = _problem(args, manifest)
    try:
        program = build_program(cls, crit, d, family, table, args.alpha,
                                reduced=args.reduced, missing=args.missing)
    except EncodingError as exc:
        raise UsageError(str(exc)) from None
    export(program, args.out, args.format)
    manifest.output(args.out)
    manifest.output(f"{args.out}.json")
    manifest.status = "ok"
    counts = {"variables": program.n_vars, "constraints": program.n_constraints,
              "triples": len(list(family.triples()))}
    manifest.extra["counts"] = counts
    print(json.dumps(counts))
    return EXIT_OK


def cmd_oracle(args, manifest) -> int:
    manifest.input(args.graph)
    g = read_graph(args.graph)
    crit = Criterion(args.sep)
    family = family_k(g.d, args.k)
    seps = all_separations(g, family, crit)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if args.pvalues:
        buf.write(table_to_csv(PValueTable.from_separations(g.d, seps, args.weight)))
    else:
        kind = distance_for(crit)
        w.writerow(["i", "j", "C", "separated", "distance"])
        for (i, j, C), sep in seps.items():
            w.writerow([i + 1, j + 1, format_c(C), int(sep), distance(g, kind, i, j, C)])
    _emit(buf.getvalue(), args.out, manifest)
    manifest.status = "ok"
    return EXIT_OK


def cmd_citest(args, manifest) -> int:
    manifest.input(args.data)
    data, _ = read_data(args.data)
    family = family_k(data.shape[1], args.k)
    table = run_all_tests(data, family, args.weight)
    manifest.extra["failed_tests"] = table.n_failed
    _emit(table_to_csv(table), args.out, manifest)
    manifest.status = "ok"
    return EXIT_OK


def cmd_simulate(args, manifest) -> int:
    lo, hi = args.weights
    cfg = SimConfig(d=args.d, seed=args.seed, scheme=args.scheme, param=args.param,
                    weight_low=lo, weight_high=hi, noise=args.noise, n=args.n,
                    latent=args.latent)
    g, weights, var, data, model = simulate(cfg)
    write_data(data, args.out)
    manifest.output(args.out)
    if args.graph_out:
        write_graph(g, args.graph_out)
        manifest.output(args.graph_out)
    if args.weights_out:
        with open(args.weights_out, "w", encoding="utf-8", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["i", "j", "w"])
            for (i, j), x in sorted(weights.items()):
                wr.writerow([i + 1, j + 1, repr(x)])
        manifest.output(args.weights_out)
    if model is not None:
        manifest.extra["latent_nodes"] = [v + 1 for v in model.latent]
        if args.dag_out:
            write_graph(model.dag, args.dag_out)
            manifest.output(args.dag_out)
    manifest.status = "ok"
    return EXIT_OK


def cmd_metrics(args, manifest) -> int:
    manifest.input(args.estimate)
    manifest.input(args.truth)
    E, O = read_graph(args.estimate), read_graph(args.truth)
    if E.d != O.d:
        raise UsageError("graphs have different node counts")
    crit = Criterion(args.sep)
    if args.represent == "cpdag":
        mE, mO = representative(E, GraphClass.DAG), representative(O, GraphClass.DAG)
    else:
        mE, mO = MarkedGraph.from_graph(E), MarkedGraph.from_graph(O)
    k = None if args.k == "full" else args.k
    f1 = f1_scores(mE, mO)
    rows = [("shd", shd(mE, mO)), ("sep", k_sep_distance(E, O, k, crit)),
            ("f1_head", f1["head"]), ("f1_tail", f1["tail"])]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["metric", "value"])
    w.writerows(rows)
    _emit(buf.getvalue(), args.out, manifest)
    manifest.extra["metrics"] = dict(rows)
    manifest.status = "ok"
    return EXIT_OK


def _emit(text: str, out, manifest):
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        manifest.output(out)
    else:
        sys.stdout.write(text)


# -- parser -----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="exactgraph", description=__doc__,
                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--version", action="version", version=f"exactgraph {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    common = _Parser(add_help=False)
    common.add_argument("--manifest", help="where to write the run manifest (JSON)")

    q = sub.add_parser("learn", parents=[common], help="learn a graph")
    _add_problem_flags(q)
    q.add_argument("--solver", choices=["brute", "bnb", "milp", "external"], default="bnb",
                   help="brute: enumerate; bnb: branch and bound; milp: in-process HiGHS; "
                        "external: run --solver-cmd on an exported MPS file")
    q.add_argument("--solver-cmd", help="template with {mps}, {out}, {wall} placeholders "
                                        "(default: the bundled HiGHS runner)")
    q.add_argument("--walltime", type=float)
    q.add_argument("--warmstart", help="graph file used as the initial incumbent (bnb)")
    q.add_argument("--threads", type=int, help="accepted for compatibility; search is single-threaded")
    q.add_argument("--out", help="learned graph file (default: stdout)")
    q.add_argument("--represent", choices=["cpdag", "none"], default="none")
    q.set_defaults(func=cmd_learn)

    q = sub.add_parser("encode", parents=[common], help="write the integer program")
    _add_problem_flags(q)
    q.add_argument("--format", choices=["mps", "lp"], default="mps")
    q.add_argument("--reduced", action="store_true", help="reduced d-separation rule set")
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_encode)

    q = sub.add_parser("oracle", parents=[common], help="separations of a graph")
    q.add_argument("--graph", required=True)
    q.add_argument("--sep", choices=[c.value for c in Criterion], default="m")
    q.add_argument("--k", type=_k_value, default="full")
    q.add_argument("--pvalues", action="store_true", help="emit an oracle p-value table instead")
    q.add_argument("--weight", type=float, default=1.0)
    q.add_argument("--out")
    q.set_defaults(func=cmd_oracle)

    q = sub.add_parser("citest", parents=[common], help="Fisher-z tests on data")
    q.add_argument("--data", required=True)
    q.add_argument("--k", type=_k_value, default="full")
    q.add_argument("--weight", type=float, default=1.0)
    q.add_argument("--out")
    q.set_defaults(func=cmd_citest)

    q = sub.add_parser("simulate", parents=[common], help="sample a graph and data")
    q.add_argument("--d", type=int, required=True)
    q.add_argument("--seed", type=int, required=True)
    q.add_argument("--scheme", choices=[s.value for s in Scheme], default="edge_prob")
    q.add_argument("--param", type=float, help="edge probability or expected degree")
    q.add_argument("--weights", type=float, nargs=2, default=(1.0, 4.0), metavar=("LO", "HI"))
    q.add_argument("--noise", choices=[n.value for n in Noise], default="unequal_var_a")
    q.add_argument("--n", type=int, default=1000)
    q.add_argument("--latent", type=int, default=0)
    q.add_argument("--out", required=True, help="data CSV")
    q.add_argument("--graph-out", help="true (projected) graph")
    q.add_argument("--dag-out", help="underlying DAG in latent mode")
    q.add_argument("--weights-out", help="edge weights CSV")
    q.set_defaults(func=cmd_simulate)

    q = sub.add_parser("metrics", parents=[common], help="compare two graphs")
    q.add_argument("--estimate", required=True)
    q.add_argument("--truth", required=True)
    q.add_argument("--sep", choices=[c.value for c in Criterion], default="d")
    q.add_argument("--k", type=_k_value, default="full")
    q.add_argument("--represent", choices=["cpdag", "none"], default="none")
    q.add_argument("--out")
    q.set_defaults(func=cmd_metrics)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    manifest = Manifest(args)
    try:
        code = args.func(args, manifest)
    except UsageError as exc:
        print(f"exactgraph {args.command}: error: {exc}", file=sys.stderr)
        code = EXIT_ERROR
    except (TableError, GraphError, EncodingError, SolverError, ValueError, OSError) as exc:
        print(f"exactgraph {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        code = EXIT_ERROR
    if code == EXIT_ERROR:
        manifest.status = manifest.status or "error"
    try:
        manifest.write(code)
    except OSError as exc:
        print(f"exactgraph: could not write manifest: {exc}", file=sys.stderr)
        code = EXIT_ERROR
    return code


if __name__ == "__main__":
    sys.exit(main())
