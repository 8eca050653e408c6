"""Condensed tangent eigen-analysis and the K-orthogonal base of the first subproblem."""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import CondensationError, DegenerateBaseError
from .linalg import factorize, min_pivot


def _orient(v):
    """Flip sign so that the largest-magnitude component is positive."""
    v = np.asarray(v, dtype=float)
    if v.ndim == 1:
        return v if v[np.argmax(np.abs(v))] >= 0 else -v
    idx = np.argmax(np.abs(v), axis=0)
    s = np.sign(v[idx, np.arange(v.shape[1])])
    s[s == 0] = 1.0
    return v * s


@dataclass
class Condensation:
    """Static condensation of a free-DoF matrix onto the active DoFs.

    Keeps the factorisation of the passive block so that expansion reuses it.
    """

    K_bar: np.ndarray
    K_ca: object
    lu: object
    active: np.ndarray
    passive: np.ndarray
    n: int

    def expand(self, vectors):
        """Map condensed vectors (q,) or (q, k) to free-DoF vectors.

        Each ``v`` becomes ``(v, -K_cc^{-1} K_ca v)`` in the active/passive slots.
        """
        V = np.asarray(vectors, dtype=float)
        single = V.ndim == 1
        V = V.reshape(len(self.active), -1)
        out = np.zeros((self.n, V.shape[1]))
        out[self.active] = V
        if self.passive.size:
            rhs = np.asarray(self.K_ca @ V)
            out[self.passive] = -self.lu.solve(rhs) if rhs.shape[1] > 1 else -self.lu.solve(rhs[:, 0])[:, None]
        return out[:, 0] if single else out


def condense(K, part, check_pd=False):
    """``K_bar = K_aa - K_ac K_cc^{-1} K_ca`` for a free-DoF matrix ``K``.

    ``part`` is a :class:`~selcomp.model.DofPartition` or a pair of local
    ``(active, passive)`` index arrays.
    """
    if hasattr(part, "active_local"):
        a, c = part.active_local, part.passive_local
    else:
        a, c = (np.asarray(p, dtype=int) for p in part)
    K = sp.csr_matrix(K)
    n = K.shape[0]
    K_aa = K[a][:, a].toarray()
    if c.size == 0:
        return Condensation(0.5 * (K_aa + K_aa.T), None, None, a, c, n)
    K_cc = K[c][:, c]
    K_ca = K[c][:, a]
    try:
        lu = factorize(K_cc, check_pd=check_pd)
    except ArithmeticError as exc:
        raise CondensationError(f"singular passive block: {exc}") from exc
    if min_pivot(lu) < 1e-14 * abs(K_cc.diagonal()).max():
        raise CondensationError(f"near-zero pivot {min_pivot(lu):.3e} in passive block")
    X = lu.solve(K_ca.toarray())
    K_bar = K_aa - K_ca.T @ X
    K_bar = 0.5 * (K_bar + K_bar.T)
    return Condensation(K_bar, K_ca, lu, a, c, n)


@dataclass
class CondensedTangent:
    """Sorted eigen-decomposition of a condensed tangent.

    ``modes[:, j]`` is the unit eigenvector of ``eigenvalues[j]``.
    """

    K_bar: np.ndarray
    eigenvalues: np.ndarray
    modes: np.ndarray

    @property
    def K_p(self):
        return float(self.eigenvalues[0])

    @property
    def K_s(self):
        return float(self.eigenvalues[1])

    @property
    def chi1(self):
        return self.modes[:, 0]


def eigen(K_bar):
    K_bar = np.asarray(K_bar, dtype=float)
    K_bar = 0.5 * (K_bar + K_bar.T)
    lam, X = np.linalg.eigh(K_bar)
    return CondensedTangent(K_bar, lam, _orient(X))


def selectivity(ct):
    """Ratio of secondary to primary stiffness; ``nan`` signals a buckled state."""
    lam1 = ct.eigenvalues[0]
    if lam1 <= 0.0:
        return float("nan")
    return float(ct.eigenvalues[1] / lam1)


def cosine_similarity(chi1, phi_bar):
    return float(abs(np.dot(chi1, phi_bar)))


@dataclass
class OrthonormalBase:
    """``vectors[:, 0]`` is the desired mode, then ``psi_1 ... psi_{q-1}``.

    ``objective[j]`` is ``psi_j^T K_bar psi_j`` for ``j >= 1`` and the Rayleigh
    value of the desired mode at index 0. ``expanded`` holds the free-DoF
    versions once :meth:`expand` has run.
    """

    vectors: np.ndarray
    objective: np.ndarray
    expanded: np.ndarray = None

    @property
    def phi_bar(self):
        return self.vectors[:, 0]

    @property
    def psi(self):
        return self.vectors[:, 1:]


def orthonormal_base(K_bar, phi_bar, rank_tol=1e-10):
    """Recursive K-orthogonal minimisation in the complement of ``phi_bar``.

    For ``j = 1 .. q-1`` the unit vector minimising ``psi^T K_bar psi`` subject
    to ``K_bar``-orthogonality to ``phi_bar`` and all earlier ``psi`` is the
    lowest eigenvector of ``K_bar`` projected onto an orthonormal basis of the
    constraints' null space.
    """
    K_bar = np.asarray(K_bar, dtype=float)
    K_bar = 0.5 * (K_bar + K_bar.T)
    phi = np.asarray(phi_bar, dtype=float)
    q = phi.size
    scale = max(np.abs(K_bar).max(), np.finfo(float).tiny)
    constraints = [K_bar @ phi]
    found = []
    values = []
    for j in range(1, q):
        A = np.array(constraints)
        s = np.linalg.svd(A, compute_uv=False)
        if s.min() <= rank_tol * scale:
            raise DegenerateBaseError(f"constraint matrix rank-deficient at j={j}")
        N = sla.null_space(A)
        if N.shape[1] != q - j:
            raise DegenerateBaseError(f"unexpected null-space dimension {N.shape[1]} at j={j}")
        w, Y = np.linalg.eigh(N.T @ K_bar @ N)
        psi = _orient(N @ Y[:, 0])
        psi /= np.linalg.norm(psi)
        found.append(psi)
        values.append(float(psi @ K_bar @ psi))
        constraints.append(K_bar @ psi)
    order = np.argsort(values, kind="stable")
    vecs = np.column_stack([phi] + [found[i] for i in order])
    obj = np.array([float(phi @ K_bar @ phi)] + [values[i] for i in order])
    return OrthonormalBase(vecs, obj)


def expand_base(base, condensation):
    """Free-DoF expansions of the base vectors, reusing the condensation factorisation.

    ``base`` may be an :class:`OrthonormalBase` (the result is also stored on
    it) or a plain (q,) / (q, k) array.
    """
    if isinstance(base, OrthonormalBase):
        base.expanded = condensation.expand(base.vectors)
        return base.expanded
    return condensation.expand(base)
