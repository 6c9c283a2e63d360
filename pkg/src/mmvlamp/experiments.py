"""Experiment orchestration: NMSE metric, flat-text configuration, sweep
evaluation over (scheme, sweep value, seed) cells, and CSV emission.

Cell randomness: each cell derives its generator from (seed, generation key)
where the generation key is the sweep-value index for axes that change the
channel distribution (paths, subcarriers) and 0 otherwise, so schemes and
noise-level sweeps share channels and unit-noise draws for a fair
comparison. Detail rows carry one (scheme, value, seed) measurement;
aggregate rows average linear ratios over seeds before taking dB.
"""

import io
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import (
    OFF_GRID, FseScene, SystemConfig, fse_dataset, frequency_channel, sample_paths,
)
from .dictionary import build_dft, build_redundant_dictionary, partial_dft, select_subcarriers
from .errors import ConfigError, DegenerateInputError
from .feedback import compress_feedback, fcrn_pipeline, somp_feedback_pipeline
from .frontend import (
    adc_quantize, complex_noise, noise_scale, phases_to_combiner, quantize_phases,
    random_phases,
)
from .serialization import load_dataset
from .solvers import LampParams, mmv_lamp_estimate, somp_run
from .training import TrainConfig

NMSE_FLOOR_DB = -100.0

SCHEMES = ("somp", "mmv-amp", "mmv-lamp-trained", "mmv-lamp-untrained")
SWEEP_AXES = ("snr", "paths", "subcarriers", "phase-bits", "adc-bits", "feedback-ratio")
TRAINED_SCHEMES = ("mmv-lamp-trained",)


# --------------------------------------------------------------------- metric


def linear_ratios(hhat_set, h_set):
    """Per-sample ||H - Hhat||_F^2 / ||H||_F^2 over matched stacks."""
    hhat_set = np.asarray(hhat_set)
    h_set = np.asarray(h_set)
    norms = np.sum(np.abs(h_set) ** 2, axis=(-2, -1))
    if h_set.size == 0 or np.any(norms == 0.0):
        raise DegenerateInputError("empty set or zero-energy target channel")
    errs = np.sum(np.abs(h_set - hhat_set) ** 2, axis=(-2, -1))
    return errs / norms


def nmse_db(hhat_set, h_set):
    """10*log10 of the mean linear ratio, clamped below at -100 dB."""
    return ratio_to_db(float(np.mean(linear_ratios(hhat_set, h_set))))


def ratio_to_db(ratio):
    if ratio <= 10.0 ** (NMSE_FLOOR_DB / 10.0):
        return NMSE_FLOOR_DB
    return max(10.0 * np.log10(ratio), NMSE_FLOOR_DB)


# -------------------------------------------------------------- configuration


@dataclass
class ExperimentConfig:
    system: SystemConfig = field(default_factory=SystemConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    schemes: tuple = ("somp",)
    sweep_axis: str = "snr"
    sweep_values: tuple = (0.0, 10.0)
    seeds: tuple = (1,)
    eval_samples: int = 50
    eval_snr_db: float = 10.0
    grid_mode: str = OFF_GRID
    link: str = "uplink"
    data_count: int = 0
    data_path: str = ""
    fse: FseScene = None
    fse_user_x: tuple = (20.0, 60.0)
    fse_user_y: tuple = (-25.0, 25.0)

    def __post_init__(self):
        if not self.schemes or not self.sweep_values:
            raise ConfigError("scheme list and sweep values must be nonempty")
        for s in self.schemes:
            if s not in SCHEMES:
                raise ConfigError(f"unknown scheme {s!r}")
        if self.sweep_axis not in SWEEP_AXES:
            raise ConfigError(f"unknown sweep axis {self.sweep_axis!r}")
        if self.link not in ("uplink", "downlink"):
            raise ConfigError(f"unknown link {self.link!r}")

    @property
    def m_rows(self):
        return self.system.m_uplink if self.link == "uplink" else self.system.n_pilot


_SYSTEM_KEYS = {
    "system.n_bs": ("n_bs", int), "system.n_rf": ("n_rf", int),
    "system.n_sub": ("n_sub", int), "system.n_pilot": ("n_pilot", int),
    "system.n_grid": ("n_grid", int), "system.n_path": ("n_path", int),
    "system.f_s": ("f_s", float), "system.wavelength": ("wavelength", float),
    "system.n_cp": ("n_cp", int), "system.t_crn": ("t_crn", int),
    "system.t_frsn": ("t_frsn", int), "system.k_fb": ("k_fb", int),
}
_TRAIN_KEYS = {
    "train.lr": ("lr", float), "train.batch_size": ("batch_size", int),
    "train.epochs": ("epochs", int), "train.seed": ("seed", int),
    "train.stages": ("stages", int), "train.n_train": ("n_train", int),
    "train.n_val": ("n_val", int), "train.snr_db": ("snr_db", "floatlist"),
    "train.patience": ("patience", int),
}
_EVAL_KEYS = {
    "eval.schemes": ("schemes", "strlist"), "eval.sweep_axis": ("sweep_axis", str),
    "eval.sweep_values": ("sweep_values", "floatlist"), "eval.seeds": ("seeds", "intlist"),
    "eval.samples": ("eval_samples", int), "eval.snr_db": ("eval_snr_db", float),
    "eval.grid_mode": ("grid_mode", str), "eval.link": ("link", str),
    "data.count": ("data_count", int), "data.path": ("data_path", str),
}
_FSE_KEYS = {
    "fse.bs_x": float, "fse.bs_y": float,
    "fse.scatterer_x": "floatlist", "fse.scatterer_y": "floatlist",
    "fse.scatter_loss_db": "floatlist",
    "fse.user_x": "floatlist", "fse.user_y": "floatlist",
}


def _convert(key, raw, kind):
    try:
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is str:
            return raw
        parts = [p.strip() for p in raw.split(",") if p.strip()]
        if kind == "floatlist":
            vals = tuple(float(p) for p in parts)
            if key == "train.snr_db" and len(vals) == 1:
                return vals[0]
            return vals
        if kind == "intlist":
            return tuple(int(p) for p in parts)
        if kind == "strlist":
            return tuple(parts)
    except ValueError:
        raise ConfigError(f"cannot parse value {raw!r} for key {key}") from None
    raise ConfigError(f"unhandled kind {kind}")


def parse_config(text):
    """Parse the flat dotted-key config format into an ExperimentConfig.

    Lines are ``key = value``; ``#`` starts a comment; lists are
    comma-separated. Unknown keys are errors.
    """
    entries = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key in entries:
            raise ConfigError(f"line {lineno}: duplicate key {key}")
        entries[key] = raw

    sys_kwargs, train_kwargs, top_kwargs, fse_raw = {}, {}, {}, {}
    for key, raw in entries.items():
        if key in _SYSTEM_KEYS:
            name, kind = _SYSTEM_KEYS[key]
            sys_kwargs[name] = _convert(key, raw, kind)
        elif key in _TRAIN_KEYS:
            name, kind = _TRAIN_KEYS[key]
            train_kwargs[name] = _convert(key, raw, kind)
        elif key in _EVAL_KEYS:
            name, kind = _EVAL_KEYS[key]
            top_kwargs[name] = _convert(key, raw, kind)
        elif key in _FSE_KEYS:
            fse_raw[key] = _convert(key, raw, _FSE_KEYS[key])
        else:
            raise ConfigError(f"unknown config key {key!r}")

    cfg = ExperimentConfig(
        system=SystemConfig(**sys_kwargs),
        train=TrainConfig(**train_kwargs),
        **top_kwargs,
    )
    if fse_raw:
        xs = fse_raw.get("fse.scatterer_x", ())
        ys = fse_raw.get("fse.scatterer_y", ())
        if np.isscalar(xs):
            xs, ys = (xs,), (ys,)
        if len(xs) != len(ys):
            raise ConfigError("fse.scatterer_x and fse.scatterer_y lengths differ")
        loss = fse_raw.get("fse.scatter_loss_db", tuple(0.0 for _ in xs))
        if np.isscalar(loss):
            loss = (loss,)
        cfg.fse = FseScene(
            bs_pos=(fse_raw.get("fse.bs_x", 0.0), fse_raw.get("fse.bs_y", 0.0)),
            scatterer_pos=tuple(zip(xs, ys)),
            scatter_loss_db=tuple(loss),
        )
        if "fse.user_x" in fse_raw:
            cfg.fse_user_x = tuple(fse_raw["fse.user_x"])
        if "fse.user_y" in fse_raw:
            cfg.fse_user_y = tuple(fse_raw["fse.user_y"])
    return cfg


# ------------------------------------------------------------------ decoding


def _decode(scheme, y, proj, eff_system, dict_full, dict_nbs, checkpoint, t_crn):
    """Estimate the spatial-frequency channels from a (batch, m, k) measurement."""
    if scheme == "somp":
        a = proj @ dict_full.synthesis
        out = np.stack(
            [dict_full.synthesis @ somp_run(y_i, a, eff_system.n_path) for y_i in y]
        )
        return out
    if scheme == "mmv-amp":
        a = proj @ dict_nbs.synthesis
        params = LampParams(a.conj().T, 1.0, 1.0)
        return dict_nbs.synthesis @ mmv_lamp_estimate(y, a, params, t_crn)
    if scheme == "mmv-lamp-untrained":
        a = proj @ dict_full.synthesis
        params = LampParams(a.conj().T, 1.0, 1.0)
        return dict_full.synthesis @ mmv_lamp_estimate(y, a, params, t_crn)
    if scheme == "mmv-lamp-trained":
        a = proj @ dict_full.synthesis
        return dict_full.synthesis @ mmv_lamp_estimate(y, a, checkpoint.lamp_params(), t_crn)
    raise ConfigError(f"unknown scheme {scheme!r}")


def _feedback_cell(config, scheme, ratio, rng, h_set, units, checkpoint):
    """One feedback cell: compress downlink pilots, reconstruct, return ratios."""
    system = config.system
    k = system.n_sub
    k_c = int(round(ratio * k))
    if not (1 <= k_c <= k):
        raise ConfigError(f"feedback ratio {ratio} gives invalid k_c={k_c}")
    u = build_dft(k)
    dict_full = build_redundant_dictionary(system.n_bs, system.n_grid)

    if scheme == "mmv-lamp-trained":
        if not checkpoint.has_frsn:
            raise ConfigError("checkpoint carries no feedback-stage parameters")
        if k_c != len(checkpoint.omega):
            raise ConfigError(
                f"trained feedback ratio is {len(checkpoint.omega)}/{k}, requested {k_c}/{k}"
            )
        xi = checkpoint.xi
        omega = checkpoint.omega
    else:
        xi = random_phases(system.n_bs, system.n_pilot, rng)
        omega = select_subcarriers(k, k_c, rng)

    f = phases_to_combiner(xi)
    u_part = partial_dft(u, omega)
    a_dl = f.T @ dict_full.synthesis
    signal = f.T @ h_set
    y = signal + noise_scale(signal, config.eval_snr_db) * units
    ratios = []
    for i in range(h_set.shape[0]):
        bundle = compress_feedback(y[i], omega)
        if scheme == "mmv-lamp-trained":
            hhat = fcrn_pipeline(
                bundle.y_tilde, u_part, checkpoint.frsn_params(), checkpoint.lamp_params(),
                a_dl, checkpoint.t_frsn, checkpoint.t_crn, dict_full,
            )
        else:
            hhat = somp_feedback_pipeline(
                bundle.y_tilde, u_part, a_dl, dict_full,
                max_support_delay=min(system.n_cp, k_c), max_support_angle=system.n_path,
            )
        ratios.append(float(linear_ratios(hhat[None], h_set[i][None])[0]))
    return np.asarray(ratios)


def evaluate_cell(config, scheme, axis, value, seed, checkpoint=None):
    """Mean linear NMSE ratio of one (scheme, sweep value, seed) cell."""
    system = config.system
    gen_key = {"paths": 1, "subcarriers": 1}.get(axis, 0)
    value_index = list(config.sweep_values).index(value) if gen_key else 0
    rng = np.random.default_rng([int(seed), value_index])

    eff_system = system
    if axis == "paths":
        eff_system = replace(system, n_path=int(value))
    elif axis == "subcarriers":
        k_eval = int(value)
        if k_eval % system.n_sub:
            raise ConfigError(f"swept K={k_eval} must be a multiple of trained K={system.n_sub}")
        eff_system = replace(system, n_sub=k_eval, n_cp=0)

    if config.data_path:
        if axis in ("paths", "subcarriers"):
            raise ConfigError(f"axis {axis!r} regenerates channels; drop data.path")
        h_set, _ = load_dataset(config.data_path)
        h_set = h_set[: config.eval_samples]
    else:
        h_set = np.stack(
            [
                frequency_channel(sample_paths(eff_system, rng, config.grid_mode), eff_system)
                for _ in range(config.eval_samples)
            ]
        )

    if axis == "feedback-ratio":
        units = complex_noise((h_set.shape[0], system.n_pilot, system.n_sub), rng)
        return float(np.mean(_feedback_cell(config, scheme, value, rng, h_set, units, checkpoint)))

    m_rows = config.m_rows
    units = complex_noise((h_set.shape[0], m_rows, eff_system.n_sub), rng)
    xi_random = random_phases(system.n_bs, m_rows, rng)

    if scheme in TRAINED_SCHEMES:
        if checkpoint is None:
            raise ConfigError(f"scheme {scheme!r} needs a checkpoint")
        xi = checkpoint.xi
        t_crn = checkpoint.t_crn
    else:
        xi = xi_random
        t_crn = system.t_crn

    snr = float(value) if axis == "snr" else config.eval_snr_db
    if axis == "phase-bits" and int(value) > 0:
        xi = quantize_phases(xi, int(value))
    f = phases_to_combiner(xi)
    proj = f.conj().T if config.link == "uplink" else f.T
    signal = proj @ h_set
    y = signal + noise_scale(signal, snr) * units
    if axis == "adc-bits" and int(value) > 0:
        u = build_dft(eff_system.n_sub)
        y = np.stack([adc_quantize(y_i, int(value), u) for y_i in y])

    dict_full = build_redundant_dictionary(system.n_bs, system.n_grid)
    dict_nbs = build_redundant_dictionary(system.n_bs, system.n_bs)

    if axis == "subcarriers":
        stride = eff_system.n_sub // system.n_sub
        hhat = np.zeros_like(h_set)
        for g in range(stride):
            cols = np.arange(g, eff_system.n_sub, stride)
            hhat[..., cols] = _decode(
                scheme, y[..., cols], proj, eff_system, dict_full, dict_nbs, checkpoint, t_crn
            )
    else:
        hhat = _decode(scheme, y, proj, eff_system, dict_full, dict_nbs, checkpoint, t_crn)
    return float(np.mean(linear_ratios(hhat, h_set)))


def run_eval(config, checkpoint=None):
    """Evaluate every (scheme, sweep value, seed) cell; returns CSV-ready rows.

    Detail rows are dicts with keys sweep_axis, sweep_value, scheme, seed,
    nmse_db plus the linear ratio under '_ratio'; aggregate rows use seed
    'mean'.
    """
    for scheme in config.schemes:
        if scheme in TRAINED_SCHEMES and checkpoint is None:
            raise ConfigError(f"scheme {scheme!r} needs a checkpoint")
    rows = []
    for value in config.sweep_values:
        for scheme in config.schemes:
            for seed in config.seeds:
                ratio = evaluate_cell(config, scheme, config.sweep_axis, value, seed, checkpoint)
                rows.append(
                    {
                        "sweep_axis": config.sweep_axis,
                        "sweep_value": value,
                        "scheme": scheme,
                        "seed": int(seed),
                        "nmse_db": ratio_to_db(ratio),
                        "_ratio": ratio,
                    }
                )
    return rows


def aggregate_rows(rows):
    """One row per (scheme, sweep value): linear ratios averaged over seeds, then dB."""
    groups = {}
    for row in rows:
        groups.setdefault((row["sweep_value"], row["scheme"]), []).append(row["_ratio"])
    out = []
    for (value, scheme), ratios in sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][1])):
        out.append(
            {
                "sweep_axis": rows[0]["sweep_axis"],
                "sweep_value": value,
                "scheme": scheme,
                "seed": "mean",
                "nmse_db": ratio_to_db(float(np.mean(ratios))),
                "_ratio": float(np.mean(ratios)),
            }
        )
    return out


def render_csv(rows):
    """Stable CSV text: sorted detail rows, then sorted aggregate rows."""
    detail = sorted(rows, key=lambda r: (r["sweep_value"], r["scheme"], r["seed"]))
    buf = io.StringIO()
    buf.write("sweep_axis,sweep_value,scheme,seed,nmse_db\n")
    for row in detail + aggregate_rows(rows):
        buf.write(
            f"{row['sweep_axis']},{row['sweep_value']:g},{row['scheme']},"
            f"{row['seed']},{row['nmse_db']:.6f}\n"
        )
    return buf.getvalue()


def write_csv(rows, path):
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(render_csv(rows))


def build_fse_dataset(config, count, master_seed):
    """Fixed-scene dataset using the configured scene and user box."""
    if config.fse is None:
        raise ConfigError("fse.* keys are required to generate a fixed-scene dataset")
    return fse_dataset(
        config.fse, config.system, count, master_seed, config.fse_user_x, config.fse_user_y
    )
