"""Global synthesis loop: eigen-base subproblem, linear design update, filter and blend."""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional

import numpy as np
from scipy.optimize import linprog

from .equilibrium import NewtonSettings, solve_equilibrium, solve_stable_state
from .errors import EquilibriumError, InfeasibleProblemError, WeightError
from .modal import condense, cosine_similarity, eigen, expand_base, orthonormal_base, selectivity
from .stabilize import FilterKernel, InterpolationParams, density_filter
from .structure import ParameterizedStructure

log = logging.getLogger(__name__)

VOLUME_WEIGHTINGS = ("literal", "flipped", "balanced")


@dataclass(frozen=True)
class OptimizationConfig:
    """Parameters of the synthesis loop.

    ``volume_weighting`` selects the volume weight of the second phase:
    ``"literal"`` uses ``-f2/f1`` exactly, ``"flipped"`` uses ``+f2/f1`` and
    ``"balanced"`` uses ``f1/f2`` (both terms equal at the current design).
    """

    variant: int = 1
    mu_g: float = 0.5
    t_mu: Optional[tuple] = None
    V: float = 0.3
    eta: float = 3.0
    zeta: float = 0.7
    kappa: float = 0.99
    l: int = 1
    I_T: int = 1000
    delta_C: float = 0.001
    s_C: int = 500
    x_l: float = 1e-9
    x_u: float = 1.0
    max_global_iters: int = 3000
    seed_density: float = 0.5
    filter_radius: float = 1.5
    filter_in_elements: bool = True
    beta_gamma: float = 500.0
    eta_gamma: float = 0.01
    eps_F: float = 1e-6
    initial_increments: int = 10
    volume_weighting: str = "balanced"

    def __post_init__(self):
        if self.variant not in (1, 2):
            raise ValueError("variant must be 1 or 2")
        if not 0.0 < self.kappa < 1.0:
            raise ValueError("kappa must lie in (0, 1)")
        if not 0.0 < self.V < 1.0:
            raise ValueError("V must lie in (0, 1)")
        if self.eta < 1.0:
            raise ValueError("eta must be at least 1")
        if not 0.0 <= self.zeta < 1.0:
            raise ValueError("zeta must lie in [0, 1)")
        if self.l < 1:
            raise ValueError("l must be at least 1")
        if not 0.0 < self.x_l < self.x_u:
            raise ValueError("need 0 < x_l < x_u")
        if self.variant == 2 and self.t_mu is None:
            raise ValueError("variant 2 needs per-point bounds t_mu")
        if self.volume_weighting not in VOLUME_WEIGHTINGS:
            raise ValueError(f"volume_weighting must be one of {VOLUME_WEIGHTINGS}")

    def newton(self):
        return NewtonSettings(eps_F=self.eps_F, initial_increments=self.initial_increments)

    def interpolation(self):
        return InterpolationParams(self.beta_gamma, self.eta_gamma)


@dataclass
class LPCoefficients:
    """Per-element coefficients of the quadratic forms at one stationary point.

    ``secondary`` belongs to ``psi_1``, ``primary`` to the desired mode and
    ``swap[j]`` to ``psi_{j+2}`` (one row per enforced mode-swap constraint).
    """

    secondary: np.ndarray
    primary: np.ndarray
    swap: np.ndarray


def volume_coefficients(x_t0, eta):
    """Linearised penalised-volume coefficients ``x0^(1/eta) / x0``."""
    x_t0 = np.asarray(x_t0, dtype=float)
    return x_t0 ** (1.0 / eta - 1.0)


def stationary_weights(x_t0, coeffs):
    """Weights making every stationary point's secondary stiffness count equally."""
    forms = np.array([c.secondary @ x_t0 for c in coeffs])
    if np.any(forms <= 0.0) or not np.all(np.isfinite(forms)):
        raise WeightError(f"non-positive secondary quadratic forms {forms}")
    inv = 1.0 / forms
    return inv / inv.sum()


def volume_weight(f1, f2, convention="balanced"):
    if f1 == 0.0:
        raise WeightError("f1(x_t0) = 0, volume weight undefined")
    if convention == "literal":
        return -f2 / f1
    if convention == "flipped":
        return f2 / f1
    if f2 == 0.0:
        raise WeightError("f2(x_t0) = 0, volume weight undefined")
    return f1 / f2


def switched_objective(x_t0, s, cfg, f1_coeffs, vol_coeffs):
    """Objective vector of the second phase (``s > I_T``), to be maximised.

    Returns ``(c, omega_V)`` with ``c @ x = f1(x) - zeta * omega_V * f2(x)``.
    """
    if s <= cfg.I_T:
        raise ValueError(f"phase switch happens only after I_T={cfg.I_T}")
    f1 = float(f1_coeffs @ x_t0)
    f2 = float(vol_coeffs @ x_t0)
    wV = volume_weight(f1, f2, cfg.volume_weighting)
    return f1_coeffs - cfg.zeta * wV * vol_coeffs, wV


@dataclass
class LPResult:
    x: np.ndarray
    objective: float
    constraint_names: List[str]
    slack: np.ndarray


def subproblem2(x_t0, coeffs, weights, cfg, phase=1, s=0, vol_coeffs=None):
    """Linear update of the design variables with frozen bases.

    Parameters
    ----------
    x_t0 : ndarray
        Densities the bases were computed for.
    coeffs : list of LPCoefficients
        One entry per stationary point.
    weights : ndarray
        Stationary-point weights.
    cfg : OptimizationConfig
    phase : {1, 2}
        Phase 1 carries the linearised volume constraint; phase 2 moves the
        volume into the objective.
    s : int
        Global iteration counter (needed in phase 2).

    Returns
    -------
    LPResult
    """
    x_t0 = np.asarray(x_t0, dtype=float)
    m = x_t0.size
    if vol_coeffs is None:
        vol_coeffs = volume_coefficients(x_t0, cfg.eta)
    f1 = sum(w * c.secondary for w, c in zip(weights, coeffs))

    if phase == 1:
        c_obj = f1
    else:
        c_obj, _ = switched_objective(x_t0, max(s, cfg.I_T + 1), cfg, f1, vol_coeffs)

    rows, rhs, names = [], [], []
    if cfg.variant == 1:
        rows.append(sum(c.primary for c in coeffs))
        rhs.append(2.0 * cfg.mu_g)
        names.append("primary stiffness (sum)")
    else:
        t_mu = np.broadcast_to(np.asarray(cfg.t_mu, dtype=float), (len(coeffs),))
        for t, c in enumerate(coeffs, start=1):
            rows.append(c.primary)
            rhs.append(2.0 * t_mu[t - 1])
            names.append(f"primary stiffness t={t}")
    for t, c in enumerate(coeffs, start=1):
        for j, cj in enumerate(c.swap, start=2):
            rows.append(c.secondary - cj)
            rhs.append(0.0)
            names.append(f"mode swap t={t} j={j}")
    if phase == 1:
        rows.append(vol_coeffs)
        rhs.append(m * cfg.V)
        names.append("volume")

    A = np.array(rows)
    b = np.array(rhs)
    res = linprog(
        -c_obj,
        A_ub=A,
        b_ub=b,
        bounds=(cfg.x_l, cfg.x_u),
        method="highs-ds",
        options={"presolve": True, "primal_feasibility_tolerance": 1e-9, "dual_feasibility_tolerance": 1e-9},
    )
    if res.status == 2:
        at_min = A @ np.full(m, cfg.x_l) - b
        bad = [names[i] for i in np.nonzero(at_min > 0)[0]]
        raise InfeasibleProblemError(f"linear subproblem infeasible; violated at lower bounds: {bad}")
    if res.status != 0:
        raise InfeasibleProblemError(f"linear subproblem failed: {res.message}")
    x = np.clip(res.x, cfg.x_l, cfg.x_u)
    slack = b - A @ x
    tol = 1e-9 * np.maximum(1.0, np.abs(A) @ np.abs(x))
    viol = np.nonzero(slack < -tol)[0]
    if viol.size:
        raise InfeasibleProblemError(
            "linear subproblem solution violates " + ", ".join(names[i] for i in viol)
        )
    return LPResult(x, float(c_obj @ x), names, slack)


def blend_update(x_t0, x_tilde, kappa):
    return kappa * np.asarray(x_t0, dtype=float) + (1.0 - kappa) * np.asarray(x_tilde, dtype=float)


def check_convergence(history, delta_C, s_C):
    """Trailing ``s_C + 1`` values within ``+-delta_C`` of the value before them."""
    if len(history) < s_C + 2:
        return False
    ref = history[-(s_C + 2)]
    window = np.asarray(history[-(s_C + 1):])
    return bool(np.all(window >= (1.0 - delta_C) * ref) and np.all(window <= (1.0 + delta_C) * ref))


def make_filter(mesh, cfg):
    c = mesh.centroids
    if cfg.filter_in_elements:
        c = c / np.array([mesh.space.dx, mesh.space.dy])
    return FilterKernel.from_centroids(c, cfg.filter_radius)


@dataclass
class PointAnalysis:
    """Everything computed for one stationary point in one iteration."""

    equilibrium: object
    condensed: object
    base: object
    coeffs: LPCoefficients
    K_p: float
    K_s: float
    S: float
    delta: float


def analyse_point(structure, partition, point, x_t0, cfg, previous=None, l=None):
    """Equilibrium, condensation, eigenpairs, base and LP coefficients at one point."""
    settings = cfg.newton()
    prescribed = (partition.active, point.u_a)
    eq = None
    if previous is not None:
        try:
            eq = solve_equilibrium(structure, x_t0, prescribed, settings=settings, previous_state=previous)
        except EquilibriumError:
            log.info("warm start failed at point %d, restarting incrementally", point.index)
    if eq is None:
        eq = solve_stable_state(structure, x_t0, prescribed, settings=settings)
    st = eq.state
    cond = condense(st.K, partition)
    ct = eigen(cond.K_bar)
    base = orthonormal_base(cond.K_bar, point.phi_bar)
    V = expand_base(base, cond)
    l = cfg.l if l is None else l
    qf = lambda v: structure.quadratic_coefficients(st.Ke, v)
    secondary = qf(V[:, 1])
    primary = qf(V[:, 0])
    swap = np.array([qf(V[:, j]) for j in range(2, min(l, V.shape[1] - 1) + 1)])
    swap = swap.reshape(-1, structure.n_elements)
    coeffs = LPCoefficients(secondary, primary, swap)
    return PointAnalysis(
        eq, cond, base, coeffs, ct.K_p, ct.K_s, selectivity(ct), cosine_similarity(ct.chi1, point.phi_bar)
    )


@dataclass
class IterationRecord:
    s: int
    V_s: float
    volume_fraction: float
    phase: int
    K_p: List[float]
    K_s: List[float]
    S: List[float]
    delta: List[float]
    weights: List[float]
    newton_iterations: List[int]
    objective: float


@dataclass
class SynthesisResult:
    x_t0: np.ndarray
    x: Optional[np.ndarray]
    x_tilde: Optional[np.ndarray]
    history: List[IterationRecord]
    converged: bool
    iterations: int
    final_points: List[PointAnalysis] = field(default_factory=list, repr=False)

    @property
    def V_s(self):
        return [r.V_s for r in self.history]


class SynthesisAborted(Exception):
    """Wraps a failure inside the loop together with the partial result."""

    def __init__(self, cause, partial):
        super().__init__(str(cause))
        self.cause = cause
        self.partial = partial


def run_global(problem, cfg, callback=None, threads=1, x_init=None, structure=None):
    """Iterate equilibrium, subproblem 1, subproblem 2, filter and blend.

    Parameters
    ----------
    problem : selcomp.model.Problem
    cfg : OptimizationConfig
    callback : callable, optional
        Receives each :class:`IterationRecord` as it is produced.
    threads : int
        Worker threads for the per-point analyses.
    x_init : ndarray, optional
        Start densities; ``cfg.seed_density`` everywhere when omitted.

    Returns
    -------
    SynthesisResult
        ``x_t0`` holds the final structural densities. ``converged`` is False
        when ``max_global_iters`` was reached first.

    Raises
    ------
    SynthesisAborted
        Carrying the partial result when equilibrium or the LP fails.
    """
    if structure is None:
        structure = ParameterizedStructure(problem.mesh, problem.material, cfg.interpolation())
    part = problem.partition
    points = problem.points
    m = structure.n_elements
    kernel = make_filter(problem.mesh, cfg)
    x_t0 = np.full(m, cfg.seed_density) if x_init is None else np.array(x_init, dtype=float)
    x_t0 = np.clip(x_t0, cfg.x_l, cfg.x_u)

    history = []
    vs_hist = []
    prev = [None] * len(points)
    x = x_tilde = None
    converged = False
    analyses = []
    pool = ThreadPoolExecutor(threads) if threads > 1 else None
    s = 0
    try:
        for s in range(1, cfg.max_global_iters + 1):
            phase = 1 if s <= cfg.I_T else 2
            jobs = [
                (lambda p=p, pv=pv: analyse_point(structure, part, p, x_t0, cfg, pv))
                for p, pv in zip(points, prev)
            ]
            analyses = list(pool.map(lambda j: j(), jobs)) if pool else [j() for j in jobs]
            prev = [a.equilibrium for a in analyses]
            coeffs = [a.coeffs for a in analyses]
            weights = stationary_weights(x_t0, coeffs)
            lp = subproblem2(x_t0, coeffs, weights, cfg, phase=phase, s=s)
            x = lp.x
            x_tilde = density_filter(x, kernel)
            V_s = float(np.sum(x))
            vs_hist.append(V_s)
            rec = IterationRecord(
                s,
                V_s,
                float(np.mean(x_t0)),
                phase,
                [a.K_p for a in analyses],
                [a.K_s for a in analyses],
                [a.S for a in analyses],
                [a.delta for a in analyses],
                weights.tolist(),
                [a.equilibrium.newton_iterations_used for a in analyses],
                lp.objective,
            )
            history.append(rec)
            if callback is not None:
                callback(rec)
            x_t0 = blend_update(x_t0, x_tilde, cfg.kappa)
            if check_convergence(vs_hist, cfg.delta_C, cfg.s_C):
                converged = True
                break
    except (EquilibriumError, InfeasibleProblemError, WeightError) as exc:
        partial = SynthesisResult(x_t0, x, x_tilde, history, False, s, analyses)
        raise SynthesisAborted(exc, partial) from exc
    finally:
        if pool:
            pool.shutdown()
    return SynthesisResult(x_t0, x, x_tilde, history, converged, s, analyses)
