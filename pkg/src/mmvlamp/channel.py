"""Wideband multipath channel generation for a ULA base station.

Two generators are provided: a random-scatterer model (complex normal path
gains, CP-bounded uniform delays, angles drawn uniformly in the sin domain
either on or off the dictionary grid) and a geometric fixed-scattering-
environment model (Friis path loss over a 2-D scene with single-bounce
NLoS rays).
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError, ParameterError

SPEED_OF_LIGHT = 299_792_458.0

ON_GRID = "on-grid"
OFF_GRID = "off-grid"


@dataclass
class SystemConfig:
    """Static dimensions and physical constants of one link.

    Measurement count per subcarrier is ``m = n_pilot * n_rf`` on the uplink
    (all RF chains observe each pilot slot) and ``n_pilot`` on the downlink
    (single-antenna user).
    """

    n_bs: int = 256            # BS antennas
    n_rf: int = 4              # BS RF chains
    n_sub: int = 64            # OFDM subcarriers used for estimation
    n_pilot: int = 16          # pilot time slots
    n_grid: int = 1024         # angle grid size of the redundant dictionary
    n_path: int = 8            # multipath components
    f_s: float = 100e6         # sampling rate [Hz]
    wavelength: float = 0.0107  # carrier wavelength [m] (~28 GHz)
    n_cp: int = 0              # cyclic prefix length; 0 -> n_sub // 4
    t_crn: int = 5             # unrolled layers of the angle-domain decoder
    t_frsn: int = 2            # unrolled layers of the delay-domain decoder
    k_fb: int = 16             # fed-back subcarrier count
    snr_db_list: tuple = (0.0, 5.0, 10.0, 20.0)

    def __post_init__(self):
        if self.n_cp == 0:
            self.n_cp = self.n_sub // 4
        if self.n_rf > self.n_bs:
            raise ParameterError(f"n_rf={self.n_rf} exceeds n_bs={self.n_bs}")
        if self.n_grid < self.n_bs:
            raise ParameterError(f"n_grid={self.n_grid} must be >= n_bs={self.n_bs}")
        if not (1 <= self.k_fb <= self.n_sub):
            raise ParameterError(f"k_fb={self.k_fb} outside [1, {self.n_sub}]")
        if self.n_path < 1:
            raise ParameterError("n_path must be >= 1")
        if self.m_uplink > self.n_bs:
            warnings.warn(
                f"m={self.m_uplink} >= n_bs={self.n_bs}: measurement is not compressive",
                stacklevel=2,
            )

    @property
    def m_uplink(self):
        return self.n_pilot * self.n_rf

    @property
    def antenna_spacing(self):
        return self.wavelength / 2.0


@dataclass
class PathSet:
    """Multipath parameters: per path a gain, a delay [s] and a BS-side angle [rad]."""

    gains: np.ndarray
    delays: np.ndarray
    angles: np.ndarray

    def __post_init__(self):
        self.gains = np.asarray(self.gains, dtype=np.complex128)
        self.delays = np.asarray(self.delays, dtype=np.float64)
        self.angles = np.asarray(self.angles, dtype=np.float64)
        if not (len(self.gains) == len(self.delays) == len(self.angles)):
            raise ParameterError("gains, delays and angles must have equal length")

    def __len__(self):
        return len(self.gains)


@dataclass
class FseScene:
    """2-D scene: BS at ``bs_pos`` with array normal along +x, one user, point scatterers.

    ``scatter_loss_db`` is the per-scatterer excess loss added on top of the
    two Friis legs of its bounce.
    """

    bs_pos: tuple = (0.0, 0.0)
    user_pos: tuple = (50.0, 0.0)
    user_normal: float = np.pi
    scatterer_pos: tuple = ()
    scatter_loss_db: tuple = ()

    def __post_init__(self):
        if len(self.scatter_loss_db) not in (0, len(self.scatterer_pos)):
            raise ParameterError("scatter_loss_db must match scatterer_pos length")
        if not self.scatter_loss_db:
            self.scatter_loss_db = tuple(0.0 for _ in self.scatterer_pos)


def steering_vector(theta, n):
    """ULA steering vector at half-wavelength spacing; entry m is exp(-j*pi*m*sin(theta))/sqrt(n)."""
    if n < 1:
        raise ParameterError("antenna count must be >= 1")
    m = np.arange(n)
    return np.exp(-1j * np.pi * m * np.sin(theta)) / np.sqrt(n)


def sample_paths(config, rng, grid_mode=OFF_GRID):
    """Draw a random PathSet.

    Gains are unit-variance circularly-symmetric complex normal, delays are
    uniform inside the cyclic prefix, and sin(angle) is uniform on [-1, 1)
    (off-grid) or drawn without replacement from the dictionary grid
    (on-grid).
    """
    n_path = config.n_path
    if grid_mode == ON_GRID and n_path > config.n_grid:
        raise ParameterError(f"cannot draw {n_path} distinct grid angles from {config.n_grid}")
    gains = (rng.standard_normal(n_path) + 1j * rng.standard_normal(n_path)) / np.sqrt(2.0)
    delays = rng.uniform(0.0, config.n_cp / config.f_s, size=n_path)
    if grid_mode == ON_GRID:
        idx = rng.choice(config.n_grid, size=n_path, replace=False)
        sines = -1.0 + 2.0 * idx / config.n_grid
    elif grid_mode == OFF_GRID:
        sines = rng.uniform(-1.0, 1.0, size=n_path)
    else:
        raise ParameterError(f"unknown grid_mode {grid_mode!r}")
    return PathSet(gains, delays, np.arcsin(sines))


def frequency_channel(paths, config):
    """Spatial-frequency channel matrix (n_bs x n_sub).

    Column k (1-based) is sqrt(n_bs/L) * sum_l gain_l * exp(-j*2*pi*k*f_s*delay_l/K) * a(angle_l).
    """
    n_bs, k_sub = config.n_bs, config.n_sub
    n_path = len(paths)
    k_idx = np.arange(1, k_sub + 1)
    # (L, K) delay phases and (n_bs, L) steering matrix
    phases = np.exp(-2j * np.pi * np.outer(paths.delays, k_idx) * config.f_s / k_sub)
    steer = np.exp(-1j * np.pi * np.outer(np.arange(n_bs), np.sin(paths.angles))) / np.sqrt(n_bs)
    return np.sqrt(n_bs / n_path) * (steer @ (paths.gains[:, None] * phases))


def on_grid_support(paths, n_grid):
    """Row indices (0-based) of the exact sparse angle-domain representation of on-grid paths.

    Because the dictionary synthesizes with conjugated steering rows, an
    on-grid sin value at grid position i is represented at row (G - i) mod G.
    """
    pos = (np.sin(paths.angles) + 1.0) * n_grid / 2.0
    idx = np.rint(pos).astype(int)
    if not np.allclose(pos, idx, atol=1e-9):
        raise ParameterError("paths are not on the dictionary grid")
    return np.sort((n_grid - idx) % n_grid)


def angle_image_on_grid(paths, config, n_grid=None):
    """Exact angle-frequency image (G x n_sub) of an on-grid PathSet."""
    n_grid = config.n_grid if n_grid is None else n_grid
    pos = (np.sin(paths.angles) + 1.0) * n_grid / 2.0
    idx = np.rint(pos).astype(int)
    if not np.allclose(pos, idx, atol=1e-9):
        raise ParameterError("paths are not on the dictionary grid")
    k_idx = np.arange(1, config.n_sub + 1)
    image = np.zeros((n_grid, config.n_sub), dtype=np.complex128)
    scale = np.sqrt(config.n_bs / len(paths))
    for gain, delay, i in zip(paths.gains, paths.delays, idx):
        row = (n_grid - i) % n_grid
        image[row] += scale * gain * np.exp(-2j * np.pi * k_idx * config.f_s * delay / config.n_sub)
    return image


def fse_channel(scene, config, rng, align_to_los=True):
    """PathSet of a fixed scene: one LoS ray plus one single-bounce ray per scatterer.

    Per-path loss follows the free-space Friis form 20*log10(4*pi*d/lambda)
    per leg plus the scatterer's excess loss; amplitudes are normalized so
    the LoS amplitude is 1 and every path gets an i.i.d. uniform phase.
    Delays are referenced to the LoS arrival when ``align_to_los`` is set.
    """
    bs = np.asarray(scene.bs_pos, dtype=float)
    user = np.asarray(scene.user_pos, dtype=float)
    d_los = float(np.hypot(*(user - bs)))
    if d_los <= 0.0:
        raise GeometryError("user coincides with the BS")

    lam = config.wavelength
    angles = [float(np.arctan2(user[1] - bs[1], user[0] - bs[0]))]
    loss_db = [20.0 * np.log10(4.0 * np.pi * d_los / lam)]
    lengths = [d_los]
    for pos, g_s in zip(scene.scatterer_pos, scene.scatter_loss_db):
        sc = np.asarray(pos, dtype=float)
        d1 = float(np.hypot(*(sc - user)))   # user <-> scatterer
        d2 = float(np.hypot(*(sc - bs)))     # scatterer <-> BS
        if d1 <= 0.0 or d2 <= 0.0:
            raise GeometryError(f"scatterer at {pos} coincides with an endpoint")
        angles.append(float(np.arctan2(sc[1] - bs[1], sc[0] - bs[0])))
        loss_db.append(
            20.0 * np.log10(4.0 * np.pi * d1 / lam)
            + 20.0 * np.log10(4.0 * np.pi * d2 / lam)
            + float(g_s)
        )
        lengths.append(d1 + d2)

    loss_db = np.asarray(loss_db)
    amps = 10.0 ** (-(loss_db - loss_db[0]) / 20.0)  # LoS amplitude -> 1
    phases = rng.uniform(0.0, 2.0 * np.pi, size=len(amps))
    gains = amps * np.exp(1j * phases)

    delays = np.asarray(lengths) / SPEED_OF_LIGHT
    if align_to_los:
        delays = delays - delays[0]
    if np.any(delays >= config.n_sub / config.f_s):
        raise GeometryError("excess path delay exceeds the OFDM symbol duration K/f_s")
    if np.any(delays >= config.n_cp / config.f_s):
        warnings.warn("excess path delay exceeds the CP duration", stacklevel=2)
    return PathSet(gains, delays, np.asarray(angles))


def channel_dataset(config, count, master_seed, grid_mode=OFF_GRID):
    """Stack of `count` spatial-frequency channels; sample i uses rng (master_seed, i)."""
    out = np.empty((count, config.n_bs, config.n_sub), dtype=np.complex128)
    for i in range(count):
        rng = np.random.default_rng([master_seed, i])
        out[i] = frequency_channel(sample_paths(config, rng, grid_mode), config)
    return out


def fse_dataset(scene, config, count, master_seed, user_x_range, user_y_range):
    """Stack of `count` fixed-scene channels with user positions uniform in a box."""
    out = np.empty((count, config.n_bs, config.n_sub), dtype=np.complex128)
    for i in range(count):
        rng = np.random.default_rng([master_seed, i])
        pos = (rng.uniform(*user_x_range), rng.uniform(*user_y_range))
        normal = rng.uniform(0.0, 2.0 * np.pi)
        sample_scene = FseScene(
            bs_pos=scene.bs_pos,
            user_pos=pos,
            user_normal=normal,
            scatterer_pos=scene.scatterer_pos,
            scatter_loss_db=scene.scatter_loss_db,
        )
        out[i] = frequency_channel(fse_channel(sample_scene, config, rng), config)
    return out
