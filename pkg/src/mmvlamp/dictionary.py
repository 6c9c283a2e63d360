"""Redundant angle dictionary, unitary DFT, and random subcarrier selection."""

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError


@dataclass
class Dictionary:
    """Angle dictionary: row g is the steering vector at sin_grid[g], unit l2 norm."""

    matrix: np.ndarray   # (n_grid, n_bs) complex
    sin_grid: np.ndarray  # (n_grid,) real, -1 + 2*(g-1)/G

    @property
    def n_grid(self):
        return self.matrix.shape[0]

    @property
    def n_bs(self):
        return self.matrix.shape[1]

    @property
    def synthesis(self):
        """D^H, mapping angle-domain images to the spatial domain."""
        return self.matrix.conj().T


def build_redundant_dictionary(n_bs, n_grid):
    """Oversampled steering-vector dictionary on the uniform sin grid -1 + 2*(g-1)/G."""
    if n_grid < n_bs:
        raise ParameterError(f"n_grid={n_grid} must be >= n_bs={n_bs}")
    sin_grid = -1.0 + 2.0 * np.arange(n_grid) / n_grid
    rows = np.exp(-1j * np.pi * np.outer(sin_grid, np.arange(n_bs))) / np.sqrt(n_bs)
    return Dictionary(rows, sin_grid)


def build_dft(k):
    """K-point unitary DFT matrix; entry (m, n) = exp(-j*2*pi*m*n/K)/sqrt(K), zero-based."""
    if k < 1:
        raise ParameterError("DFT size must be >= 1")
    idx = np.arange(k)
    return np.exp(-2j * np.pi * np.outer(idx, idx) / k) / np.sqrt(k)


def select_subcarriers(k, k_c, rng):
    """k_c distinct 1-based subcarrier indices, uniform over subsets, sorted ascending."""
    if not (1 <= k_c <= k):
        raise ParameterError(f"k_c={k_c} outside [1, {k}]")
    picked = rng.choice(k, size=k_c, replace=False)
    return np.sort(picked + 1).astype(np.int64)


def partial_dft(u, omega):
    """Rows of a DFT matrix selected by the 1-based index set omega."""
    omega = np.asarray(omega)
    if omega.min() < 1 or omega.max() > u.shape[0]:
        raise ParameterError("subcarrier selection out of range")
    return u[omega - 1]
