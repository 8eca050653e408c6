"""Post-synthesis checks: natural kinematics, per-point performance and load sweeps."""

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .equilibrium import NewtonSettings, solve_equilibrium, solve_stable_state
from .errors import CondensationError, EquilibriumError
from .modal import condense, cosine_similarity, eigen, selectivity
from .structure import ParameterizedStructure

log = logging.getLogger(__name__)


def _structure(problem, structure):
    return structure if structure is not None else ParameterizedStructure(problem.mesh, problem.material)


@dataclass
class KinematicsTrace:
    """Minimum-energy path of the active DoFs.

    ``points[0]`` is the undeformed state; ``S[k]``, ``eigenvalues[k]`` and
    ``modes[k]`` belong to ``points[k]``. ``status`` is ``"complete"``,
    ``"buckled"`` (first eigenvalue reached zero) or ``"failed"``.
    """

    points: np.ndarray
    S: np.ndarray
    eigenvalues: np.ndarray
    modes: np.ndarray
    beta: float
    status: str = "complete"
    message: str = ""

    @property
    def buckled(self):
        return self.status == "buckled"

    def distance_to(self, u_a):
        """Shortest distance from ``u_a`` to the trace polyline."""
        u_a = np.asarray(u_a, dtype=float)
        P = self.points
        if len(P) == 1:
            return float(np.linalg.norm(P[0] - u_a))
        A, B = P[:-1], P[1:]
        d = B - A
        L2 = np.einsum("ij,ij->i", d, d)
        t = np.clip(np.einsum("ij,ij->i", u_a - A, d) / np.where(L2 > 0, L2, 1.0), 0.0, 1.0)
        return float(np.min(np.linalg.norm(A + t[:, None] * d - u_a, axis=1)))


def trace_natural_kinematics(
    problem, x, beta, n_s, phi_ref=None, settings=None, structure=None
):
    """Follow the first eigenmode of the condensed tangent in steps of ``beta``.

    Parameters
    ----------
    problem : Problem
    x : ndarray
        Fixed element densities.
    beta : float
        Step length in the active-DoF space (mm).
    n_s : int
        Number of trace points including the undeformed one.
    phi_ref : ndarray, optional
        Orientation of the first step; defaults to the desired mode of the
        first stationary point.

    Returns
    -------
    KinematicsTrace
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    if n_s < 1:
        raise ValueError("n_s must be at least 1")
    structure = _structure(problem, structure)
    settings = settings or NewtonSettings()
    part = problem.partition
    x = np.asarray(x, dtype=float)
    direction = np.asarray(phi_ref if phi_ref is not None else problem.points[0].phi_bar, dtype=float)

    u_a = np.zeros(part.q)
    eq = solve_equilibrium(structure, x, (part.active, u_a), settings=settings)
    points, S, lams, modes = [], [], [], []
    status, msg = "complete", ""
    while True:
        try:
            ct = eigen(condense(eq.state.K, part).K_bar)
        except CondensationError as exc:
            status, msg = "failed", str(exc)
            break
        chi = ct.chi1
        if chi @ direction < 0:
            chi = -chi
        points.append(u_a.copy())
        S.append(selectivity(ct))
        lams.append(ct.eigenvalues)
        modes.append(chi)
        if ct.eigenvalues[0] <= 0.0:
            status, msg = "buckled", f"first eigenvalue {ct.eigenvalues[0]:.3e} at step {len(points)}"
            break
        if len(points) == n_s:
            break
        u_a = u_a + beta * chi
        direction = chi
        try:
            eq = solve_equilibrium(structure, x, (part.active, u_a), settings=settings, previous_state=eq)
        except EquilibriumError as exc:
            status, msg = "failed", f"equilibrium failed after {len(points)} points: {exc}"
            break
    if status != "complete":
        log.warning("trace truncated: %s", msg)
    return KinematicsTrace(np.array(points), np.array(S), np.array(lams), np.array(modes), beta, status, msg)


@dataclass
class LoadSweep:
    """Active-DoF trajectories under ramped force load cases.

    ``trajectories[i]`` has one row per converged ramp level, starting with the
    unloaded state; ``levels[i]`` holds the matching load factors.
    """

    load_cases: List[np.ndarray]
    trajectories: List[np.ndarray]
    levels: List[np.ndarray]
    truncated: List[bool] = field(default_factory=list)


def load_sweep(problem, x, load_cases, ramp_steps=20, settings=None, structure=None):
    """Force-controlled equilibria for each load case at ``k / ramp_steps`` of its magnitude."""
    if ramp_steps < 1:
        raise ValueError("ramp_steps must be at least 1")
    structure = _structure(problem, structure)
    settings = settings or NewtonSettings()
    part = problem.partition
    x = np.asarray(x, dtype=float)
    cases = [np.asarray(F, dtype=float) for F in load_cases]
    out = LoadSweep(cases, [], [], [])
    for F in cases:
        if F.shape != (part.q,) or not np.all(np.isfinite(F)):
            raise ValueError(f"load case must be a finite vector of length {part.q}")
        traj, lev = [np.zeros(part.q)], [0.0]
        prev = None
        truncated = False
        for k in range(1, ramp_steps + 1):
            a = k / ramp_steps
            try:
                prev = solve_equilibrium(
                    structure,
                    x,
                    settings=settings,
                    forces=(part.active, a * F),
                    forces_start=(k - 1) / ramp_steps * F,
                    u_init=None if prev is None else prev.u,
                    schedule=[1.0],
                )
            except EquilibriumError as exc:
                log.warning("load case %s truncated at level %.3g: %s", F, a, exc)
                truncated = True
                break
            traj.append(prev.u[part.active_local])
            lev.append(a)
        out.trajectories.append(np.array(traj))
        out.levels.append(np.array(lev))
        out.truncated.append(truncated)
    return out


@dataclass
class PerformanceRow:
    index: int
    u_a: np.ndarray
    K_p: float
    K_s: float
    S: float
    delta: float


def performance_report(problem, x, points=None, settings=None, structure=None):
    """Selectivity and cosine similarity of the condensed tangent at every stationary point."""
    structure = _structure(problem, structure)
    settings = settings or NewtonSettings()
    part = problem.partition
    points = problem.points if points is None else points
    x = np.asarray(x, dtype=float)
    rows = []
    prev = None
    for p in points:
        if prev is None:
            eq = solve_stable_state(structure, x, (part.active, p.u_a), settings=settings)
        else:
            # continue from the previous point in equal increments
            n = settings.initial_increments
            try:
                eq = solve_equilibrium(
                    structure,
                    x,
                    (part.active, p.u_a),
                    settings=settings,
                    u_init=prev.u,
                    schedule=[k / n for k in range(1, n + 1)],
                )
            except EquilibriumError:
                eq = solve_stable_state(structure, x, (part.active, p.u_a), settings=settings)
        ct = eigen(condense(eq.state.K, part).K_bar)
        rows.append(PerformanceRow(p.index, p.u_a, ct.K_p, ct.K_s, selectivity(ct), cosine_similarity(ct.chi1, p.phi_bar)))
        prev = eq
    return rows


def format_report(rows):
    """Plain-text table with one column per stationary point."""
    head = ["Stationary point"] + [str(r.index) for r in rows]
    S = ["S"] + [f"{r.S:.4f}" for r in rows]
    d = ["delta"] + [f"{r.delta:.4f}" for r in rows]
    w = max(len(c) for c in head + S + d) + 2
    return "\n".join("".join(c.ljust(w) for c in line).rstrip() for line in (head, S, d)) + "\n"
