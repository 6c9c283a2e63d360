"""Downlink feedback path: subcarrier compression at the user and two-stage
reconstruction at the BS (delay-domain decoder followed by the angle-domain
decoder)."""

from dataclasses import dataclass

import numpy as np

from .dictionary import build_dft
from .errors import ParameterError, ShapeError
from .solvers import mmv_lamp_estimate, somp_run


@dataclass
class FeedbackBundle:
    """Fed-back pilot rows, the subcarrier selection that produced them, and its ratio."""

    y_tilde: np.ndarray   # (k_c, q)
    omega: np.ndarray     # 1-based sorted subcarrier indices
    k_total: int

    @property
    def ratio(self):
        return len(self.omega) / self.k_total


def compressed_downlink_channels(h_sf, f_dl):
    """Frequency-domain channels after spatial compression: (H^sf)^T F, shape (..., k, q)."""
    h_sf = np.asarray(h_sf)
    return np.swapaxes(h_sf, -1, -2) @ f_dl


def compress_feedback(y_dl, omega):
    """Select the rows of Y^T indexed by the 1-based set omega.

    y_dl: (q, k) downlink pilot matrix; returns a FeedbackBundle whose rows
    follow omega's order.
    """
    y_dl = np.asarray(y_dl)
    omega = np.asarray(omega)
    k = y_dl.shape[-1]
    if omega.min() < 1 or omega.max() > k:
        raise ParameterError(f"subcarrier index out of range [1, {k}]")
    y_tilde = np.swapaxes(y_dl, -1, -2)[..., omega - 1, :]
    return FeedbackBundle(y_tilde=y_tilde, omega=omega, k_total=k)


def frsn_run(y_tilde, u_part, params, t_layers):
    """Delay-domain recovery from compressed rows; returns the (k, q) frequency estimate.

    u_part is the partial DFT (k_c, k); the full K-point unitary DFT used to
    lift the delay-domain estimate is rebuilt from its column count.
    """
    y_tilde = np.asarray(y_tilde, dtype=np.complex128)
    if y_tilde.shape[-2] != u_part.shape[0]:
        raise ShapeError(f"feedback rows {y_tilde.shape[-2]} != selection size {u_part.shape[0]}")
    u = build_dft(u_part.shape[1])
    return u @ mmv_lamp_estimate(y_tilde, u_part, params, t_layers)


def fcrn_pipeline(y_tilde, u_part, frsn_params, lamp_params, a_dl, t_frsn, t_crn, dictionary):
    """Two-stage reconstruction: frequency estimate, then angle-domain recovery.

    The first stage output (k, q), transposed, plays the role of a (q, k)
    measurement of the angle-frequency channel through a_dl = F^T D^H; the
    final spatial-frequency estimate is D^H times the second stage output.
    """
    h_freq_hat = frsn_run(y_tilde, u_part, frsn_params, t_frsn)
    y_stage2 = np.swapaxes(h_freq_hat, -1, -2)
    if y_stage2.shape[-2] != a_dl.shape[0]:
        raise ParameterError(
            f"pilot count {y_stage2.shape[-2]} does not match measurement rows {a_dl.shape[0]}"
        )
    x_af = mmv_lamp_estimate(y_stage2, a_dl, lamp_params, t_crn)
    return dictionary.synthesis @ x_af


def somp_feedback_pipeline(y_tilde, u_part, a_dl, dictionary, max_support_delay, max_support_angle):
    """Greedy baseline for the same two-stage problem: SOMP in the delay
    domain, then SOMP in the angle domain."""
    u = build_dft(u_part.shape[1])
    h_delay = somp_run(y_tilde, u_part, max_support_delay)
    h_freq_hat = u @ h_delay
    x_af = somp_run(h_freq_hat.T, a_dl, max_support_angle)
    return dictionary.synthesis @ x_af
