"""Newton-Raphson equilibrium under prescribed active-DoF displacements or forces."""

import logging
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import EquilibriumError, InvertedStateError
from .linalg import NotPositiveDefinite, factorize
from .structure import StructureState

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class NewtonSettings:
    eps_F: float = 1e-6
    max_newton_iters: int = 50
    initial_increments: int = 10
    max_subdivisions: int = 6
    subdivision_factor: int = 2
    require_positive_definite: bool = True
    max_backtracks: int = 8

    def __post_init__(self):
        if self.eps_F <= 0:
            raise ValueError("eps_F must be positive")
        if self.initial_increments < 1:
            raise ValueError("initial_increments must be at least 1")
        if self.subdivision_factor < 2:
            raise ValueError("subdivision_factor must be at least 2")


@dataclass
class EquilibriumState:
    u: np.ndarray
    converged: bool
    newton_iterations_used: int
    increments_used: int
    fraction: float = 1.0
    state: Optional[StructureState] = None


def incremental_schedule(previous_state, settings):
    """Load fractions for a solve: equal steps from scratch, one step when warm."""
    if previous_state is not None and previous_state.converged:
        return [1.0]
    n = settings.initial_increments
    return [k / n for k in range(1, n + 1)]


def subdivide(remaining, start, factor):
    """Split every remaining step ``(start, f1], (f1, f2], ...`` into ``factor`` parts."""
    out = []
    lo = start
    for hi in remaining:
        out.extend(lo + (hi - lo) * k / factor for k in range(1, factor + 1))
        lo = hi
    out[-1] = remaining[-1]
    return out


class _NewtonFailure(Exception):
    pass


def _newton(structure, x, u, st, P, target_P, U, r_U, settings):
    """Converge one increment. Returns (u, state, iterations)."""
    u = u.copy()
    dP = target_P - u[P]
    jump = bool(np.any(dP != 0.0))
    R0 = None
    for it in range(settings.max_newton_iters + 1):
        R = r_U - st.f[U]
        if jump:
            R = R - st.K[U][:, P] @ dP
        else:
            err = np.max(np.abs(R)) if R.size else 0.0
            if err < settings.eps_F:
                return u, st, it
            if not np.isfinite(err):
                raise _NewtonFailure("non-finite residual")
            if R0 is None:
                R0 = err
            elif err > 1e8 * max(R0, settings.eps_F):
                raise _NewtonFailure(f"diverging residual {err:.3e}")
        if it == settings.max_newton_iters:
            break
        try:
            lu = factorize(st.K[U][:, U], check_pd=settings.require_positive_definite)
        except NotPositiveDefinite as exc:
            raise _NewtonFailure(f"tangent not positive definite: {exc}") from exc
        except ArithmeticError as exc:
            raise _NewtonFailure(str(exc)) from exc
        du = lu.solve(R)
        base = u.copy()
        if jump:
            base[P] = target_P
            jump = False
        # backtrack if the full correction inverts an element
        step = 1.0
        for _ in range(settings.max_backtracks + 1):
            u = base.copy()
            u[U] += step * du
            try:
                st = structure.state(u, x)
                break
            except InvertedStateError as exc:
                err_msg = str(exc)
                step *= 0.5
        else:
            raise _NewtonFailure(err_msg)
    raise _NewtonFailure(f"no convergence in {settings.max_newton_iters} iterations")


def solve_equilibrium(
    structure,
    x,
    prescribed=None,
    u_init=None,
    settings=None,
    forces=None,
    previous_state=None,
    schedule=None,
    forces_start=None,
):
    """Equilibrium of the density-scaled structure.

    Parameters
    ----------
    structure : ParameterizedStructure
    x : ndarray
        Element densities.
    prescribed : (dofs, values), optional
        Global DoF numbers and target displacements (Dirichlet data).
    u_init : ndarray, optional
        Start vector over the free DoFs; zero when omitted.
    settings : NewtonSettings
    forces : (dofs, values), optional
        External target forces on unconstrained free DoFs.
    previous_state : EquilibriumState, optional
        A converged state at (nearly) the same targets; selects the one-step
        schedule and provides ``u_init`` when that is omitted.
    schedule : list of float, optional
        Explicit load fractions overriding the automatic schedule. A fraction
        ``f`` interpolates between the start state and the targets: prescribed
        values ``u0_P + f (target - u0_P)`` and forces ``r0 + f (r - r0)``.
    forces_start : ndarray, optional
        Values of ``forces`` the start vector is in equilibrium with (zero
        when omitted).

    Returns
    -------
    EquilibriumState
        ``state`` holds the assembled tangent at the converged displacement.

    Raises
    ------
    EquilibriumError
        When the schedule could not be completed within ``max_subdivisions``.
    """
    settings = settings or NewtonSettings()
    x = np.asarray(x, dtype=float)
    local = structure.assembler.local
    n = structure.n_free

    if prescribed is not None:
        P = local[np.asarray(prescribed[0], dtype=int)]
        target = np.asarray(prescribed[1], dtype=float)
        if np.any(P < 0):
            raise ValueError("prescribed DoFs must be free")
    else:
        P = np.zeros(0, dtype=int)
        target = np.zeros(0)
    U = np.setdiff1d(np.arange(n), P)
    r = np.zeros(n)
    if forces is not None:
        fd = local[np.asarray(forces[0], dtype=int)]
        if np.any(fd < 0) or np.any(np.isin(fd, P)):
            raise ValueError("forces must act on unconstrained free DoFs")
        np.add.at(r, fd, np.asarray(forces[1], dtype=float))
    r0 = np.zeros(n)
    if forces_start is not None:
        np.add.at(r0, fd, np.asarray(forces_start, dtype=float))

    if u_init is None:
        u_init = previous_state.u if previous_state is not None else np.zeros(n)
    u = np.array(u_init, dtype=float)
    if schedule is None:
        schedule = incremental_schedule(previous_state, settings)
    schedule = list(schedule)
    start_P = u[P].copy()
    # subdividing is pointless when the start already carries the targets
    moving = bool(np.any(start_P != target) or np.any(r0 != r))

    try:
        st = structure.state(u, x)
    except InvertedStateError as exc:
        raise EquilibriumError(f"start vector is inverted: {exc}", 0.0) from exc

    done = 0.0
    total_iters = 0
    increments = 0
    subdivisions = 0
    while schedule:
        frac = schedule[0]
        try:
            u_new, st_new, its = _newton(
                structure,
                x,
                u,
                st,
                P,
                start_P + frac * (target - start_P),
                U,
                r0[U] + frac * (r[U] - r0[U]),
                settings,
            )
        except _NewtonFailure as exc:
            if subdivisions >= settings.max_subdivisions or not moving:
                raise EquilibriumError(
                    f"equilibrium failed at fraction {frac:.4g} after "
                    f"{subdivisions} subdivisions: {exc}",
                    done,
                ) from exc
            subdivisions += 1
            log.debug("subdividing after failure at fraction %.4g: %s", frac, exc)
            schedule = subdivide(schedule, done, settings.subdivision_factor)
            continue
        u, st = u_new, st_new
        total_iters += its
        increments += 1
        done = frac
        schedule.pop(0)

    return EquilibriumState(u, True, total_iters, increments, done, st)


def solve_stable_state(structure, x, prescribed, settings=None, **kwargs):
    """Stable equilibrium at the prescribed values, even past a passive snap-through.

    Tries :func:`solve_equilibrium` first. If that fails, for example because
    the load path crosses a limit point, Newton is rerun without the
    definiteness requirement. The result is accepted only if the tangent of
    the unconstrained DoFs is positive definite at the converged state.
    """
    settings = settings or NewtonSettings()
    try:
        return solve_equilibrium(structure, x, prescribed, settings=settings, **kwargs)
    except EquilibriumError as first:
        if not settings.require_positive_definite:
            raise
        relaxed = replace(settings, require_positive_definite=False)
        try:
            eq = solve_equilibrium(structure, x, prescribed, settings=relaxed, **kwargs)
        except EquilibriumError:
            raise first
        U = np.setdiff1d(np.arange(structure.n_free), structure.assembler.local[np.asarray(prescribed[0], dtype=int)])
        try:
            factorize(eq.state.K[U][:, U], check_pd=True)
        except ArithmeticError:
            raise first
        log.info("accepted stable state past a failed load path: %s", first)
        return eq
