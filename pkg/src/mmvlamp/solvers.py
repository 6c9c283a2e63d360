"""Sparse recovery: row-wise Bernoulli-Gaussian shrinkage, its Onsager
divergence, the unrolled MMV-LAMP iteration, and greedy/AMP baselines.

The shrinkage acts on whole rows so the common support shared by all
measurement columns survives denoising: each output row is a real scalar
multiple of the input row,

    out_j = r_j / (pi * (1 + exp(psi - ||r_j||^2 / (2 sigma^2 pi)))),
    pi  = 1 + sigma^2 / theta1,
    psi = K * log(1 + theta1 / sigma^2) + theta2.

All functions accept an optional leading batch axis on the measurement-side
arrays; sigma is then per-sample. The exp argument is clamped to [-60, 60]
and sigma floored at 1e-12; the backward pass shares both guards.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError

SIGMA_FLOOR = 1e-12
EXP_CLAMP = 60.0


@dataclass
class LampParams:
    """Tied per-layer parameters: linear operator b_mat (N x M) and denoiser scalars."""

    b_mat: np.ndarray
    theta1: float = 1.0
    theta2: float = 1.0

    def __post_init__(self):
        self.b_mat = np.asarray(self.b_mat, dtype=np.complex128)
        if not self.theta1 > 0.0:
            raise ParameterError(f"theta1 must be positive, got {self.theta1}")
        if not np.all(np.isfinite(self.b_mat)):
            raise ParameterError("b_mat contains non-finite entries")


def _shrinkage_forward(r, theta1, theta2, sigma):
    """Shared forward kernel; returns (out, cache) with everything backward needs."""
    r = np.asarray(r, dtype=np.complex128)
    k_cols = r.shape[-1]
    sigma = np.asarray(sigma, dtype=np.float64)
    sig = np.maximum(sigma, SIGMA_FLOOR)
    sig_col = sig[..., None]                               # broadcasts over rows
    energy = np.sum(r.real**2 + r.imag**2, axis=-1)        # (..., N) row energies
    pi = 1.0 + sig**2 / theta1
    psi = k_cols * np.log1p(theta1 / sig**2) + theta2
    z = psi[..., None] - energy / (2.0 * sig_col**2 * pi[..., None])
    u = np.exp(np.clip(z, -EXP_CLAMP, EXP_CLAMP))
    live = np.abs(z) < EXP_CLAMP                           # where the clamp is inactive
    s = 1.0 / (pi[..., None] * (1.0 + u))                  # (..., N) real row scales
    out = r * s[..., None]
    cache = (r, s, u, u * live, energy, sig, pi, psi, k_cols, sigma, theta1)
    return out, cache


def _shrinkage_vjp(cache, grad_out):
    """Backward of the fused shrinkage for the (dL/dRe, dL/dIm) complex-pair convention.

    Returns (g_r, g_theta1, g_theta2, g_sigma); g_sigma matches sigma's shape.
    """
    r, s, u, u_live, energy, sig, pi, psi, k_cols, sigma_raw, theta1 = cache
    sig_col = sig[..., None]
    pi_col = pi[..., None]
    # a_j = Re <g_j, r_j>: sensitivity of the loss to the row scale
    a = np.sum(grad_out.real * r.real + grad_out.imag * r.imag, axis=-1)
    s2 = s * s
    c = a * s2 * u_live / (2.0 * sig_col**2)
    g_r = s[..., None] * grad_out + (2.0 * c)[..., None] * r

    dd_dpi = (1.0 + u) + u_live * energy / (2.0 * sig_col**2 * pi_col)
    dl_dpi = np.sum(a * (-s2) * dd_dpi, axis=-1)
    dl_dpsi = np.sum(a * (-s2) * pi_col * u_live, axis=-1)
    dz_dsig_direct = np.sum(a * (-s2) * u_live * energy, axis=-1) / sig**3

    g_theta1 = float(
        np.sum(dl_dpi * (-(sig**2) / theta1**2) + dl_dpsi * k_cols / (sig**2 + theta1))
    )
    g_theta2 = float(np.sum(dl_dpsi))
    g_sigma = (
        dl_dpi * (2.0 * sig / theta1)
        - dl_dpsi * 2.0 * k_cols * theta1 / (sig * (sig**2 + theta1))
        + dz_dsig_direct
    )
    g_sigma = np.where(sigma_raw >= SIGMA_FLOOR, g_sigma, 0.0)
    if np.ndim(sigma_raw) == 0:
        g_sigma = float(np.sum(g_sigma))
    return g_r, g_theta1, g_theta2, g_sigma


def shrinkage(r, theta, sigma):
    """Row-wise MMSE denoiser under a Bernoulli-Gaussian row prior.

    r : (..., N, K) complex; theta = (theta1, theta2); sigma scalar or (...,).
    """
    theta1, theta2 = float(theta[0]), float(theta[1])
    if not theta1 > 0.0:
        raise ParameterError("theta1 must be positive")
    out, _ = _shrinkage_forward(r, theta1, theta2, sigma)
    return out


def _divergence_from_cache(cache, m_rows):
    _, s, _, u_live, energy, sig, _, _, k_cols, _, _ = cache
    ds_de = s * s * u_live / (2.0 * sig[..., None] ** 2)
    div = np.sum(k_cols * s + energy * ds_de, axis=-1)
    b = div / (m_rows * k_cols)
    return float(b) if np.ndim(b) == 0 else b


def shrinkage_divergence(r, theta, sigma, m_rows):
    """Onsager coefficient: mean trace of the row-wise shrinkage Jacobian.

    Computed analytically as sum_j (K*s_j + e_j * ds_j/de_j) / (m_rows * K),
    the Wirtinger-derivative trace of the non-holomorphic row map. Returns a
    real scalar (or per-sample array for batched input).
    """
    theta1, theta2 = float(theta[0]), float(theta[1])
    _, cache = _shrinkage_forward(r, theta1, theta2, sigma)
    return _divergence_from_cache(cache, m_rows)


def mmv_lamp_run(y, a, params, t, return_trace=False):
    """Unrolled MMV-LAMP: T layers of (linear step, shrinkage, Onsager residual).

    y : (..., M, K) measurements; a : (M, N) measurement matrix.
    Returns the list of per-layer estimates [X_1, ..., X_T]; with
    ``return_trace`` also a dict of per-layer sigmas and Onsager terms.
    """
    y = np.asarray(y, dtype=np.complex128)
    a = np.asarray(a, dtype=np.complex128)
    if t < 0:
        raise ParameterError("layer count must be >= 0")
    m_rows, n_rows = a.shape
    if y.shape[-2] != m_rows:
        raise ShapeError(f"measurement rows {y.shape[-2]} != matrix rows {m_rows}")
    if params.b_mat.shape != (n_rows, m_rows):
        raise ShapeError(f"b_mat shape {params.b_mat.shape} != {(n_rows, m_rows)}")
    k_cols = y.shape[-1]
    xhat = np.zeros(y.shape[:-2] + (n_rows, k_cols), dtype=np.complex128)
    v = y
    layers, sigmas, onsagers = [], [], []
    for _ in range(t):
        r = xhat + params.b_mat @ v
        sigma = np.sqrt(np.sum(v.real**2 + v.imag**2, axis=(-2, -1)) / (m_rows * k_cols))
        assert np.all(sigma >= 0.0)
        xhat, cache = _shrinkage_forward(r, params.theta1, params.theta2, sigma)
        b_t = _divergence_from_cache(cache, m_rows)
        v = y - a @ xhat + np.asarray(b_t)[..., None, None] * v
        layers.append(xhat)
        sigmas.append(sigma)
        onsagers.append(b_t)
    if return_trace:
        return layers, {"sigma": sigmas, "onsager": onsagers}
    return layers


def mmv_lamp_estimate(y, a, params, t):
    """Final-layer estimate; the T=0 estimate is the zero initialization."""
    layers = mmv_lamp_run(y, a, params, t)
    if not layers:
        return np.zeros(y.shape[:-2] + (a.shape[1], y.shape[-1]), dtype=np.complex128)
    return layers[-1]


def mmv_amp_run(y, a, t, return_trace=False):
    """Untrained baseline: the same iteration with B = A^H and theta = (1, 1)."""
    params = LampParams(np.asarray(a).conj().T, 1.0, 1.0)
    return mmv_lamp_run(y, a, params, t, return_trace=return_trace)


def somp_run(y, a, max_support, residual_tol=1e-6):
    """Simultaneous OMP: greedy column selection by joint correlation energy.

    Selects the column maximizing the summed squared correlation magnitude
    with the residual across all measurement columns, solves joint least
    squares on the grown support, and stops at ``max_support`` atoms or when
    the relative residual drops below ``residual_tol``. Rank-deficient
    subproblems fall back to the pseudoinverse (rcond 1e-10).
    """
    y = np.asarray(y, dtype=np.complex128)
    a = np.asarray(a, dtype=np.complex128)
    m_rows, n_cols = a.shape
    if y.ndim != 2 or y.shape[0] != m_rows:
        raise ShapeError(f"y shape {y.shape} incompatible with matrix {a.shape}")
    if max_support > m_rows:
        raise ParameterError(f"max_support={max_support} exceeds measurement rows {m_rows}")

    xhat = np.zeros((n_cols, y.shape[1]), dtype=np.complex128)
    y_norm = np.linalg.norm(y)
    if y_norm == 0.0:
        return xhat

    support = []
    residual = y
    coef = None
    for _ in range(max_support):
        scores = np.sum(np.abs(a.conj().T @ residual) ** 2, axis=1)
        scores[support] = -np.inf
        support.append(int(np.argmax(scores)))
        sub = a[:, support]
        coef, *_ = np.linalg.lstsq(sub, y, rcond=1e-10)
        residual = y - sub @ coef
        if np.linalg.norm(residual) / y_norm <= residual_tol:
            break
    xhat[support] = coef
    return xhat
