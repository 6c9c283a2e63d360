"""Loss, optimizer, and the stagewise joint training of encoder phases and
decoder parameters.

Stage t trains a t-layer unrolled decoder (plus the shared phase-shifter
encoder) starting from the parameters of stage t-1; the stage-0
initialization is B = A^H, theta = (1, 1) and uniform random phases. The
batch loss is the plain sum over samples of ||Hhat - H||_F^2 / ||H||_F^2.

Measurement noise is redrawn every batch at the configured training SNR so
the encoder cannot adapt to one noise realization. The Onsager coefficient
is treated as a constant during backpropagation (its value still tracks the
running iterate); sigma_t is differentiated through.
"""

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tape
from .dictionary import build_redundant_dictionary, build_dft, partial_dft
from .errors import ContractError, DegenerateInputError, ParameterError
from .frontend import complex_noise, noise_scale, phases_to_combiner
from .solvers import LampParams, _divergence_from_cache, mmv_lamp_estimate

THETA1_FLOOR = 1e-12


@dataclass
class TrainConfig:
    lr: float = 0.001
    batch_size: int = 128
    epochs: int = 30            # per stage
    seed: int = 0
    stages: int = 5             # layer count reached by the final stage
    n_train: int = 0            # 0 -> 80% of the dataset
    n_val: int = 0              # 0 -> the remainder
    snr_db: object = 10.0       # float, or a sequence for mixed-SNR training
    patience: int = 5           # stagnant validation checks before stopping a stage
    min_rel_improvement: float = 1e-4

    def __post_init__(self):
        if self.lr < 0.0:
            raise ParameterError("learning rate must be >= 0")
        if self.batch_size < 1:
            raise ParameterError("batch size must be >= 1")

    def snr_values(self):
        snr = self.snr_db
        return [float(snr)] if np.isscalar(snr) else [float(s) for s in snr]


# --------------------------------------------------------------------- metric


def nmse_loss(hhat_batch, h_batch):
    """Sum over the batch of per-sample squared-error to signal-energy ratios."""
    hhat_batch = np.asarray(hhat_batch)
    h_batch = np.asarray(h_batch)
    if hhat_batch.shape != h_batch.shape:
        raise ContractError(f"shape mismatch {hhat_batch.shape} vs {h_batch.shape}")
    norms = np.sum(np.abs(h_batch) ** 2, axis=(-2, -1))
    if np.any(norms == 0.0):
        raise DegenerateInputError("a target channel has zero energy")
    errs = np.sum(np.abs(hhat_batch - h_batch) ** 2, axis=(-2, -1))
    return float(np.sum(errs / norms))


# ----------------------------------------------------------------------- adam


@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def _real_view(x):
    """float64 view of an array; complex arrays expose interleaved (re, im) pairs."""
    return x.view(np.float64) if np.iscomplexobj(x) else x


def _contig(x):
    """C-contiguous ndarray preserving 0-d shapes (ascontiguousarray forces ndim >= 1)."""
    x = np.asarray(x)
    return x if x.flags.c_contiguous else np.ascontiguousarray(x)


def adam_init(params):
    zeros = {k: np.zeros_like(_real_view(_contig(p))) for k, p in params.items()}
    return AdamState(m=zeros, v={k: z.copy() for k, z in zeros.items()})


def adam_step(params, grads, state, lr):
    """One bias-corrected Adam update applied independently to each real array.

    Complex parameters are updated through their real/imaginary parts.
    Returns (new_params, state); the state is advanced in place.
    """
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    new = {}
    for key, p in params.items():
        g = _real_view(_contig(grads[key]))
        if g.shape != state.m[key].shape:
            raise ContractError(f"gradient shape mismatch for {key!r}")
        m, v = state.m[key], state.v[key]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        out = _contig(p).copy()
        _real_view(out)[...] -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        new[key] = out
    return new, state


# -------------------------------------------------------------- graph builders


def lamp_layer_nodes(tape, y, a_node, b_node, th1, th2, t_layers, m_rows):
    """Record ``t_layers`` unrolled iterations on the tape; returns the last estimate node.

    The Onsager coefficient of each layer is evaluated from forward values and
    enters the graph as a constant scale (not differentiated).
    """
    k_cols = y.value.shape[-1]
    xhat = None
    v = y
    for t in range(t_layers):
        linear = tape.matmul(b_node, v)
        r = linear if xhat is None else tape.add(xhat, linear)
        sigma = tape.scale(tape.fronorm(v), 1.0 / np.sqrt(m_rows * k_cols))
        xhat = tape.shrinkage(r, th1, th2, sigma)
        if t == t_layers - 1:
            break
        b_t = _divergence_from_cache(xhat.attrs["cache"], m_rows)
        residual = tape.sub(y, tape.matmul(a_node, xhat))
        v = tape.add(residual, tape.scale(v, np.asarray(b_t)[..., None, None]))
    return xhat


def nmse_loss_node(tape, hhat, h_batch):
    """Batch-sum NMSE between an estimate node and constant targets."""
    norms = np.sum(np.abs(h_batch) ** 2, axis=(-2, -1))
    if np.any(norms == 0.0):
        raise DegenerateInputError("a target channel has zero energy")
    diff = tape.sub(hhat, tape.const(h_batch))
    per_sample = tape.square(tape.fronorm(diff))
    return tape.sumall(tape.scale(per_sample, 1.0 / norms))


def build_crn_loss(tape, nodes, h_batch, noise, d_syn, t_layers, transpose=False):
    """Forward graph of the encoder + t-layer decoder on one batch; returns the loss node.

    nodes: dict with param nodes 'xi', 'b', 'theta1', 'theta2'.
    d_syn: D^H, (n_bs, n_grid). noise: a constant (batch, m, k) array.
    """
    n_bs = h_batch.shape[-2]
    f = tape.phasor(nodes["xi"], factor=1.0 / np.sqrt(n_bs))
    proj = tape.transpose(f) if transpose else tape.conjt(f)
    y = tape.add(tape.matmul(proj, tape.const(h_batch)), tape.const(noise))
    a_node = tape.matmul(proj, tape.const(d_syn))
    xhat = lamp_layer_nodes(
        tape, y, a_node, nodes["b"], nodes["theta1"], nodes["theta2"], t_layers,
        m_rows=proj.value.shape[-2],
    )
    hhat = tape.matmul(tape.const(d_syn), xhat)
    return nmse_loss_node(tape, hhat, h_batch)


def build_frsn_loss(tape, nodes, y_tilde, h_freq, u, u_part, t_layers):
    """Forward graph of the t-layer delay-domain decoder; returns the loss node.

    nodes: dict with param nodes 'b', 'theta1', 'theta2'. y_tilde is the
    compressed (batch, k_c, q) measurement, h_freq the (batch, k, q) targets.
    """
    y = tape.const(y_tilde)
    xhat = lamp_layer_nodes(
        tape, y, tape.const(u_part), nodes["b"], nodes["theta1"], nodes["theta2"],
        t_layers, m_rows=u_part.shape[0],
    )
    hhat = tape.matmul(tape.const(u), xhat)
    return nmse_loss_node(tape, hhat, h_freq)


# ------------------------------------------------------------------- training


@dataclass
class StageRecord:
    stage: int
    val_curve: list = field(default_factory=list)  # mean linear NMSE ratio per check

    @property
    def initial_val(self):
        return self.val_curve[0]

    @property
    def final_val(self):
        return min(self.val_curve)


@dataclass
class TrainResult:
    xi: np.ndarray
    params: LampParams
    history: list

    def as_param_dict(self):
        return {
            "xi": self.xi,
            "b": self.params.b_mat,
            "theta1": np.float64(self.params.theta1),
            "theta2": np.float64(self.params.theta2),
        }


def _split(dataset, config):
    total = dataset.shape[0]
    n_train = config.n_train or int(round(0.8 * total))
    n_val = config.n_val or (total - n_train)
    if n_train + n_val > total or n_train < 1 or n_val < 1:
        raise ParameterError(f"splits ({n_train}, {n_val}) exceed dataset of {total}")
    return dataset[:n_train], dataset[n_train : n_train + n_val]


def _measure_batch(proj, h_batch, snr_db, unit):
    signal = proj @ h_batch
    return signal + noise_scale(signal, snr_db) * unit


def _validate_crn(params, h_val, val_units, d_syn, t_layers, snr_values, transpose):
    f = phases_to_combiner(params["xi"])
    proj = f.T if transpose else f.conj().T
    a = proj @ d_syn
    lamp = LampParams(params["b"], float(params["theta1"]), float(params["theta2"]))
    ratios = []
    for snr, unit in zip(snr_values, val_units):
        y = _measure_batch(proj, h_val, snr, unit)
        hhat = d_syn @ mmv_lamp_estimate(y, a, lamp, t_layers)
        ratios.append(nmse_loss(hhat, h_val) / h_val.shape[0])
    return float(np.mean(ratios))


def _run_stages(params, stage_fn, validate_fn, config):
    """Shared stagewise loop: per stage run Adam epochs with early stopping."""
    history = []
    for stage in range(1, config.stages + 1):
        state = adam_init(params)
        shuffle_rng = np.random.default_rng([config.seed, 1, stage])
        record = StageRecord(stage=stage)
        best = {k: v.copy() for k, v in params.items()}
        best_val = validate_fn(params, stage)
        record.val_curve.append(best_val)
        stagnant = 0
        for _ in range(config.epochs):
            params = stage_fn(params, state, stage, shuffle_rng)
            val = validate_fn(params, stage)
            record.val_curve.append(val)
            if val < best_val * (1.0 - config.min_rel_improvement):
                best_val = val
                best = {k: v.copy() for k, v in params.items()}
                stagnant = 0
            else:
                stagnant += 1
                if stagnant >= config.patience:
                    break
        params = best
        history.append(record)
    return params, history


def train_layerwise(dataset, config, system, link="uplink", dictionary=None):
    """Jointly train encoder phases and decoder parameters, one stage per layer.

    dataset: (samples, n_bs, n_sub) spatial-frequency channels. Returns a
    TrainResult with the stage-T parameters and per-stage validation curves.
    """
    if dictionary is None:
        dictionary = build_redundant_dictionary(system.n_bs, system.n_grid)
    d_syn = dictionary.synthesis
    transpose = link == "downlink"
    m_rows = system.m_uplink if link == "uplink" else system.n_pilot

    h_train, h_val = _split(np.asarray(dataset, dtype=np.complex128), config)
    snr_values = config.snr_values()

    init_rng = np.random.default_rng([config.seed, 0])
    xi = init_rng.uniform(0.0, 2.0 * np.pi, size=(system.n_bs, m_rows))
    a0 = (phases_to_combiner(xi).T if transpose else phases_to_combiner(xi).conj().T) @ d_syn
    params = {
        "xi": xi,
        "b": np.ascontiguousarray(a0.conj().T),
        "theta1": np.array(1.0),
        "theta2": np.array(1.0),
    }

    val_units = [
        complex_noise((h_val.shape[0], m_rows, system.n_sub), np.random.default_rng([config.seed, 2, i]))
        for i in range(len(snr_values))
    ]

    def validate(p, stage):
        return _validate_crn(p, h_val, val_units, d_syn, stage, snr_values, transpose)

    def run_epoch(p, state, stage, rng):
        order = rng.permutation(h_train.shape[0])
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            h_b = h_train[idx]
            snr = snr_values[0] if len(snr_values) == 1 else float(rng.choice(snr_values))
            f = phases_to_combiner(p["xi"])
            proj = f.T if transpose else f.conj().T
            signal = proj @ h_b
            noise = noise_scale(signal, snr) * complex_noise(signal.shape, rng)
            tape = Tape()
            nodes = {k: tape.param(v, name=k) for k, v in p.items()}
            loss = build_crn_loss(tape, nodes, h_b, noise, d_syn, stage, transpose)
            grads = tape.backprop(loss)
            if not np.isfinite(float(loss.value)):
                raise ContractError(f"non-finite loss at stage {stage}")
            p, _ = adam_step(p, {k: grads[nodes[k]] for k in p}, state, config.lr)
            p["xi"] = np.mod(p["xi"], 2.0 * np.pi)
            p["theta1"] = np.maximum(p["theta1"], THETA1_FLOOR)
        return p

    params, history = _run_stages(params, run_epoch, validate, config)
    return TrainResult(
        xi=params["xi"],
        params=LampParams(params["b"], float(params["theta1"]), float(params["theta2"])),
        history=history,
    )


def _validate_frsn(params, h_freq_val, val_units, u, u_part, omega, t_layers, snr_values):
    lamp = LampParams(params["b"], float(params["theta1"]), float(params["theta2"]))
    ratios = []
    for snr, unit in zip(snr_values, val_units):
        noisy = h_freq_val + noise_scale(h_freq_val, snr) * unit
        y_tilde = noisy[:, np.asarray(omega) - 1, :]
        hhat = u @ mmv_lamp_estimate(y_tilde, u_part, lamp, t_layers)
        ratios.append(nmse_loss(hhat, h_freq_val) / h_freq_val.shape[0])
    return float(np.mean(ratios))


def train_frsn(dataset, config, omega, system):
    """Train the delay-domain decoder on compressed-subcarrier measurements.

    dataset: (samples, n_sub, q) frequency-domain channels after spatial
    compression (noiseless targets). Noise is injected at the pilot stage
    before row selection. Returns a TrainResult whose xi is None.
    """
    h_freq = np.asarray(dataset, dtype=np.complex128)
    omega = np.asarray(omega)
    u = build_dft(system.n_sub)
    u_part = partial_dft(u, omega)

    h_train, h_val = _split(h_freq, config)
    snr_values = config.snr_values()
    params = {
        "b": np.ascontiguousarray(u_part.conj().T),
        "theta1": np.array(1.0),
        "theta2": np.array(1.0),
    }
    val_units = [
        complex_noise(h_val.shape, np.random.default_rng([config.seed, 2, i]))
        for i in range(len(snr_values))
    ]

    def validate(p, stage):
        return _validate_frsn(p, h_val, val_units, u, u_part, omega, stage, snr_values)

    def run_epoch(p, state, stage, rng):
        sel = omega - 1
        order = rng.permutation(h_train.shape[0])
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            h_b = h_train[idx]
            snr = snr_values[0] if len(snr_values) == 1 else float(rng.choice(snr_values))
            noisy = h_b + noise_scale(h_b, snr) * complex_noise(h_b.shape, rng)
            y_tilde = noisy[:, sel, :]
            tape = Tape()
            nodes = {k: tape.param(v, name=k) for k, v in p.items()}
            loss = build_frsn_loss(tape, nodes, y_tilde, h_b, u, u_part, stage)
            grads = tape.backprop(loss)
            if not np.isfinite(float(loss.value)):
                raise ContractError(f"non-finite loss at stage {stage}")
            p, _ = adam_step(p, {k: grads[nodes[k]] for k in p}, state, config.lr)
            p["theta1"] = np.maximum(p["theta1"], THETA1_FLOOR)
        return p

    params, history = _run_stages(params, run_epoch, validate, config)
    return TrainResult(
        xi=None,
        params=LampParams(params["b"], float(params["theta1"]), float(params["theta2"])),
        history=history,
    )
