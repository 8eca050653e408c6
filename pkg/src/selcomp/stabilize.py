"""Energy interpolation between linear and nonlinear elements, and the density filter."""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree


@dataclass(frozen=True)
class InterpolationParams:
    beta_gamma: float = 500.0
    eta_gamma: float = 0.01

    def __post_init__(self):
        if self.beta_gamma <= 0:
            raise ValueError("beta_gamma must be positive")
        if not 0.0 < self.eta_gamma < 1.0:
            raise ValueError("eta_gamma must lie in (0, 1)")


def heaviside_weight(x_e, params=InterpolationParams()):
    """Smoothed Heaviside weight of the nonlinear model, 0 at ``x=0`` and 1 at ``x=1``."""
    b, eta = params.beta_gamma, params.eta_gamma
    x_e = np.asarray(x_e, dtype=float)
    num = np.tanh(b * eta) + np.tanh(b * (x_e - eta))
    den = np.tanh(b * eta) + np.tanh(b * (1.0 - eta))
    return num / den


def interpolate_element(x_e, gamma, K_nl, K_l, f_nl, f_l):
    """Density-scaled blend of the nonlinear and linear element models.

    Works for single elements or batches (leading element axis).
    """
    x_e = np.asarray(x_e, dtype=float)
    g = np.asarray(gamma, dtype=float)
    K = x_e[..., None, None] * (g[..., None, None] * K_nl + (1.0 - g[..., None, None]) * K_l)
    f = x_e[..., None] * (g[..., None] * f_nl + (1.0 - g[..., None]) * f_l)
    return K, f


@dataclass
class FilterKernel:
    """Linear-weight density filter as a row-normalised sparse matrix.

    Attributes
    ----------
    radius : float
        Radius in the same units as the centroids used to build it.
    H : scipy.sparse.csr_matrix
        Raw weights ``R - dist`` for pairs closer than ``R`` (self included).
    """

    radius: float
    H: sp.csr_matrix

    def __post_init__(self):
        self._rowsum = np.asarray(self.H.sum(axis=1)).ravel()

    @classmethod
    def from_centroids(cls, centroids, radius):
        centroids = np.asarray(centroids, dtype=float)
        m = centroids.shape[0]
        tree = cKDTree(centroids)
        dist = tree.sparse_distance_matrix(tree, radius, output_type="coo_matrix")
        keep = (dist.data < radius) & (dist.row != dist.col)
        rows = np.concatenate([dist.row[keep], np.arange(m)])
        cols = np.concatenate([dist.col[keep], np.arange(m)])
        w = np.concatenate([radius - dist.data[keep], np.full(m, float(radius))])
        H = sp.csr_matrix((w, (rows, cols)), shape=(m, m))
        H.sum_duplicates()
        H.sort_indices()
        return cls(float(radius), H)

    def neighbors(self, e):
        row = self.H.getrow(e)
        return row.indices, row.data


def density_filter(x, kernel):
    """Weighted neighbourhood average of the design variables."""
    return (kernel.H @ np.asarray(x, dtype=float)) / kernel._rowsum
