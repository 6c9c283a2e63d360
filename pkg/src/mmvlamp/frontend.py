"""Measurement frontend: phase-shifter combiner, noisy pilot synthesis, quantizers.

The SNR convention used throughout: per-element noise variance is the
realized signal energy of the sample divided by (rows * cols * 10^(snr/10)),
so the reported SNR is exact at the measurement output for every sample.
"""

import numpy as np

from .errors import DegenerateInputError, ParameterError

NOISELESS = None


def phases_to_combiner(xi):
    """Constant-modulus combiner F = exp(j*Xi)/sqrt(n_bs); Xi is (n_bs, m) real radians."""
    xi = np.asarray(xi, dtype=np.float64)
    return np.exp(1j * xi) / np.sqrt(xi.shape[0])


def random_phases(n_bs, m, rng):
    """Phase matrix with i.i.d. entries uniform in [0, 2*pi)."""
    return rng.uniform(0.0, 2.0 * np.pi, size=(n_bs, m))


def noise_scale(signal, snr_db):
    """Per-sample noise standard deviation for the realized-energy SNR convention.

    `signal` has shape (..., rows, cols); returns std with shape (..., 1, 1).
    """
    energy = np.sum(np.abs(signal) ** 2, axis=(-2, -1), keepdims=True)
    if np.any(energy == 0.0):
        raise DegenerateInputError("zero signal energy with finite SNR requested")
    cells = signal.shape[-2] * signal.shape[-1]
    var = energy / (cells * 10.0 ** (snr_db / 10.0))
    return np.sqrt(var)


def complex_noise(shape, rng):
    """Unit-variance circularly-symmetric complex Gaussian draws."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def measure(f, h_sf, snr_db, rng, transpose=False):
    """Noisy pilot measurement Y = F^H H + N (or F^T H + N with ``transpose``).

    ``h_sf`` may carry a leading batch axis; the noise variance is calibrated
    per sample from its realized signal energy. ``snr_db=None`` disables noise.
    """
    proj = f.T if transpose else f.conj().T
    signal = proj @ h_sf
    if snr_db is NOISELESS:
        return signal
    return signal + noise_scale(signal, snr_db) * complex_noise(signal.shape, rng)


def phase_set(b_ps):
    """Quantized phase set {0, 2*pi/2^B, ..., 2*pi - 2*pi/2^B}."""
    if b_ps < 1:
        raise ParameterError("phase resolution must be >= 1 bit")
    return 2.0 * np.pi * np.arange(2 ** b_ps) / (2 ** b_ps)


def quantize_phases(xi, b_ps):
    """Snap each phase to the circularly nearest member of the quantized set."""
    if b_ps < 1:
        raise ParameterError("phase resolution must be >= 1 bit")
    levels = 2 ** b_ps
    step = 2.0 * np.pi / levels
    idx = np.rint(np.asarray(xi, dtype=np.float64) / step).astype(np.int64) % levels
    return idx * step


def time_domain_span(y, u):
    """(min, max) over the real and imaginary parts of the time-domain signal Y*U."""
    t = y @ u
    parts = np.concatenate([t.real.ravel(), t.imag.ravel()])
    return float(parts.min()), float(parts.max())


def adc_quantize(y, b_adc, u, span=None):
    """Uniform mid-rise ADC applied in the time domain: quantize(Y U) U^H.

    Real and imaginary parts are quantized separately against one shared
    codebook {-(2^B-1)*eps/2, ..., (2^B-1)*eps/2} with eps spanning the
    joint min/max of both parts. A degenerate span (constant signal) passes
    the input through unchanged. ``span`` may pin (y_min, y_max) explicitly,
    e.g. to requantize against a previously computed codebook.
    """
    if b_adc < 1:
        raise ParameterError("ADC resolution must be >= 1 bit")
    t = y @ u
    y_min, y_max = time_domain_span(y, u) if span is None else span
    levels = 2 ** b_adc
    eps = (y_max - y_min) / levels
    if eps == 0.0:
        return y.copy()
    c_min = -(levels - 1) * eps / 2.0

    def snap(v):
        idx = np.clip(np.rint((v - c_min) / eps), 0, levels - 1)
        return c_min + idx * eps

    return (snap(t.real) + 1j * snap(t.imag)) @ u.conj().T
