"""Command-line front end: ``selcomp synthesize | evaluate | validate``."""

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (
    CondensationError,
    DegenerateBaseError,
    EquilibriumError,
    InfeasibleProblemError,
    ProblemFileError,
    WeightError,
)
from .evaluate import format_report, load_sweep, performance_report, trace_natural_kinematics
from .optimizer import SynthesisAborted, run_global
from .problem import parse_problem, read_density
from .structure import ParameterizedStructure

log = logging.getLogger("selcomp")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_EQUILIBRIUM = 3
EXIT_INFEASIBLE = 4
EXIT_NOT_CONVERGED = 5

THREADS_ENV = "SELCOMP_THREADS"


def _exit_code(exc):
    if isinstance(exc, InfeasibleProblemError):
        return EXIT_INFEASIBLE
    if isinstance(exc, (EquilibriumError, WeightError, CondensationError, DegenerateBaseError)):
        return EXIT_EQUILIBRIUM
    return EXIT_INPUT


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out, files, **info):
    entries = [
        {"path": f.name, "bytes": f.stat().st_size, "sha256": _sha256(f)} for f in sorted(files)
    ]
    doc = {"version": __version__, **info, "files": entries}
    path = out / "manifest.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def write_density(path, x, space):
    np.savetxt(path, np.asarray(x).reshape(space.nely, space.nelx), fmt="%.10e")


def write_density_png(path, x, space, scale=8):
    from PIL import Image

    grid = np.asarray(x).reshape(space.nely, space.nelx)[::-1]  # top row first
    img = np.round(255.0 * (1.0 - np.clip(grid, 0.0, 1.0))).astype(np.uint8)
    img = np.kron(img, np.ones((scale, scale), dtype=np.uint8))
    Image.fromarray(img, mode="L").save(path, format="PNG", optimize=False)


def write_history(path, history, n_points):
    cols = ["s", "V_s", "volume_fraction", "phase"]
    for t in range(1, n_points + 1):
        cols += [f"K_p_{t}", f"K_s_{t}", f"S_{t}", f"delta_{t}"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in history:
            row = [r.s, repr(r.V_s), repr(r.volume_fraction), r.phase]
            for vals in zip(r.K_p, r.K_s, r.S, r.delta):
                row += [repr(float(v)) for v in vals]
            w.writerow(row)


def write_metrics(path, rec):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["point", "K_p", "K_s", "S", "delta"])
        if rec is not None:
            for t, vals in enumerate(zip(rec.K_p, rec.K_s, rec.S, rec.delta), start=1):
                w.writerow([t] + [repr(float(v)) for v in vals])


def _threads(args):
    if args.deterministic:
        return 1
    if args.threads is not None:
        return max(1, args.threads)
    return max(1, int(os.environ.get(THREADS_ENV, "1")))


def cmd_synthesize(args):
    pf = parse_problem(args.problem)
    problem = pf.build()
    overrides = {}
    if args.max_iters is not None:
        overrides["max_global_iters"] = args.max_iters
    if args.seed_densities is not None:
        overrides["seed_density"] = args.seed_densities
    try:
        cfg = pf.optimization_config(**overrides)
    except ValueError as exc:
        raise ProblemFileError(f"optimizer: {exc}") from exc
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    t0 = time.perf_counter()
    every = max(1, cfg.max_global_iters // 50)

    def progress(rec):
        if rec.s % every == 0 or rec.s == 1:
            log.info(
                "s=%d V_s=%.3f phase=%d S=%s delta=%s",
                rec.s,
                rec.V_s,
                rec.phase,
                np.array2string(np.asarray(rec.S), precision=2),
                np.array2string(np.asarray(rec.delta), precision=4),
            )

    error = None
    try:
        result = run_global(problem, cfg, callback=progress, threads=_threads(args))
    except SynthesisAborted as exc:
        result, error = exc.partial, exc.cause
        log.error("synthesis aborted: %s", error)
    space = problem.mesh.space
    files = [out / "density.txt", out / "history.csv", out / "density.png", out / "metrics.csv"]
    write_density(files[0], result.x_t0, space)
    write_history(files[1], result.history, len(problem.points))
    write_density_png(files[2], result.x_t0, space)
    write_metrics(files[3], result.history[-1] if result.history else None)
    (out / "problem.yaml").write_text(pf.to_yaml())
    files.append(out / "problem.yaml")

    if error is not None:
        code, status = _exit_code(error), f"aborted: {error}"
    elif not result.converged:
        code, status = EXIT_NOT_CONVERGED, "not converged within max_global_iters"
    else:
        code, status = EXIT_OK, "converged"
    info = {
        "command": "synthesize",
        "problem": pf.name,
        "status": status,
        "exit_code": code,
        "iterations": result.iterations,
        "converged": bool(result.converged),
    }
    if not args.deterministic:
        info["elapsed_s"] = round(time.perf_counter() - t0, 3)
    write_manifest(out, files, **info)
    log.info("%s after %d iterations; outputs in %s", status, result.iterations, out)
    return code


def _plot_trace(path, trace, problem):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    P = trace.points
    sp = np.array([p.u_a for p in problem.points])
    fig, ax = plt.subplots(figsize=(5, 4))
    if problem.partition.q == 2:
        ax.plot(P[:, 0], P[:, 1], "-", lw=1.5, label="natural kinematics")
        ax.plot(sp[:, 0], sp[:, 1], "o", mfc="none", label="stationary points")
        ax.set_xlabel("$u_{a1}$ [mm]")
        ax.set_ylabel("$u_{a2}$ [mm]")
    else:
        arc = trace.beta * np.arange(len(P))
        for i in range(P.shape[1]):
            ax.plot(arc, P[:, i], label=f"$u_{{a{i + 1}}}$")
        ax.set_xlabel("arc length [mm]")
        ax.set_ylabel("displacement [mm]")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _plot_selectivity(path, trace):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(trace.beta * np.arange(len(trace.S)), trace.S, "-")
    ax.set_xlabel("arc length of active displacement [mm]")
    ax.set_ylabel("selectivity $S$")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def cmd_evaluate(args):
    pf = parse_problem(args.problem)
    problem = pf.build()
    x = read_density(args.density, problem)
    cfg = pf.optimization_config()
    ev = pf.data["evaluation"]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    structure = ParameterizedStructure(problem.mesh, problem.material, cfg.interpolation())
    settings = cfg.newton()
    files, notes = [], []

    rows = performance_report(problem, x, settings=settings, structure=structure)
    (out / "report.txt").write_text(format_report(rows))
    files.append(out / "report.txt")
    with open(out / "report.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["point", "K_p", "K_s", "S", "delta"])
        for r in rows:
            w.writerow([r.index, repr(r.K_p), repr(r.K_s), repr(r.S), repr(r.delta)])
    files.append(out / "report.csv")

    trace = trace_natural_kinematics(problem, x, ev["beta"], ev["n_s"], settings=settings, structure=structure)
    q = problem.partition.q
    with open(out / "trace.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"u_a{i + 1}" for i in range(q)] + ["S", "lambda_1", "lambda_2"])
        for t, (p, S, lam) in enumerate(zip(trace.points, trace.S, trace.eigenvalues), start=1):
            w.writerow([t] + [repr(float(v)) for v in p] + [repr(float(S)), repr(float(lam[0])), repr(float(lam[1]))])
    files.append(out / "trace.csv")
    if trace.status != "complete":
        notes.append(f"trace {trace.status}: {trace.message}")
    _plot_trace(out / "trace.png", trace, problem)
    _plot_selectivity(out / "selectivity.png", trace)
    files += [out / "trace.png", out / "selectivity.png"]

    if ev["load_cases"]:
        sweep = load_sweep(problem, x, ev["load_cases"], ev["ramp_steps"], settings=settings, structure=structure)
        for k, (F, traj, lev, trunc) in enumerate(
            zip(sweep.load_cases, sweep.trajectories, sweep.levels, sweep.truncated), start=1
        ):
            p = out / f"sweep_{k}.csv"
            with open(p, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["level"] + [f"F_{i + 1}" for i in range(q)] + [f"u_a{i + 1}" for i in range(q)])
                for a, u in zip(lev, traj):
                    w.writerow([repr(float(a))] + [repr(float(a * f)) for f in F] + [repr(float(v)) for v in u])
            files.append(p)
            if trunc:
                notes.append(f"load case {k} truncated at level {lev[-1]:.3g}")
    else:
        notes.append("no load cases given; load sweeps skipped")

    write_manifest(out, files, command="evaluate", problem=pf.name, exit_code=EXIT_OK, notes=notes)
    sys.stdout.write(format_report(rows))
    return EXIT_OK


def cmd_validate(args):
    pf = parse_problem(args.problem)
    problem = pf.build()
    s = problem.mesh.space
    print(
        f"{pf.source}: ok ({pf.name}: {s.nelx}x{s.nely} elements, "
        f"{problem.partition.q} active DoFs, {len(problem.points)} stationary points)"
    )
    if args.dump:
        sys.stdout.write(pf.to_yaml())
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="selcomp", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-q", "--quiet", action="store_true", help="only print warnings and errors")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synthesize", help="run the topology synthesis")
    s.add_argument("problem")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--threads", type=int, help=f"worker threads (default ${THREADS_ENV} or 1)")
    s.add_argument("--max-iters", type=int, help="override max_global_iters")
    s.add_argument("--deterministic", action="store_true", help="single thread, no timing in the manifest")
    s.add_argument("--seed-densities", type=float, help="uniform start density")
    s.set_defaults(func=cmd_synthesize)

    e = sub.add_parser("evaluate", help="evaluate a density field")
    e.add_argument("problem")
    e.add_argument("density", help="density grid written by synthesize")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_evaluate)

    v = sub.add_parser("validate", help="parse and check a problem file")
    v.add_argument("problem")
    v.add_argument("--dump", action="store_true", help="print the problem with defaults applied")
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except ProblemFileError as exc:
        log.error("%s", exc)
        return EXIT_INPUT
    except (EquilibriumError, InfeasibleProblemError, WeightError, CondensationError, DegenerateBaseError) as exc:
        log.error("%s", exc)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
