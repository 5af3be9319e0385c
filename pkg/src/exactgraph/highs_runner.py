"""Stand-alone runner that solves an MPS file with HiGHS.

Usage::

    python3 -m exactgraph.highs_runner PROGRAM.mps SOLUTION.txt [WALLTIME]

Writes ``<name> <value>`` lines preceded by ``# status=``, ``# objective=``
and ``# bound=`` comments -- the format read by
:func:`exactgraph.encoding.import_solution`.  Requires the ``highspy``
package (``pip install exactgraph[highs]``).
"""
from __future__ import annotations

import math
import sys


def run(mps: str, out: str, walltime: float | None = None, threads: int | None = None) -> str:
    import highspy

    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("mip_rel_gap", 0.0)
    h.setOptionValue("mip_abs_gap", 0.0)
    if walltime is not None and math.isfinite(walltime):
        h.setOptionValue("time_limit", float(walltime))
    if threads:
        h.setOptionValue("threads", int(threads))
    status = h.readModel(mps)
    if status == highspy.HighsStatus.kError:
        raise RuntimeError(f"HiGHS could not read {mps}")
    h.run()
    model_status = h.getModelStatus()
    MS = highspy.HighsModelStatus
    info = h.getInfo()
    if model_status == MS.kOptimal:
        label = "optimal"
    elif model_status == MS.kInfeasible:
        label = "infeasible"
    elif model_status in (MS.kTimeLimit, MS.kIterationLimit, MS.kSolutionLimit,
                          MS.kInterrupt) and info.primal_solution_status == 2:
        label = "timelimit"
    else:
        label = "error"
    lines = [f"# status={label}"]
    if label in ("optimal", "timelimit"):
        lines.append(f"# objective={info.objective_function_value!r}")
        lines.append(f"# bound={info.mip_dual_bound!r}")
        lp = h.getLp()
        values = h.getSolution().col_value
        for name, val in zip(lp.col_names_, values):
            lines.append(f"{name} {val!r}")
    with open(out, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    return label


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) not in (2, 3):
        print(__doc__, file=sys.stderr)
        return 2
    wall = float(argv[2]) if len(argv) == 3 else None
    label = run(argv[0], argv[1], wall)
    return 0 if label != "error" else 1


if __name__ == "__main__":
    sys.exit(main())
