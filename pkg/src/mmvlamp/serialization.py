"""Bit-exact binary formats for channel datasets and trained checkpoints.

Both formats are little-endian with float32 payloads (complex values stored
as interleaved re/im pairs). Saving therefore rounds in-memory float64
values to storage precision; a save/load round trip reproduces every scalar
of the rounded array bit-exactly.

Dataset layout:  magic "MMVL" | u32 version | u32 count | u32 n_bs | u32 k
                 | u32 l | u8 grid_mode | 3 pad | u64 master_seed | payload,
payload = count*n_bs*k complex64 in [sample][antenna][subcarrier] order.

Checkpoint layout: magic "MMVC" | u32 version | u32 n_bs, g, k, m, t, t_fb,
k_c | u32 tensor count | tensors. Each tensor: u16 name length | name utf-8
| u8 ndim | u32 dims | float32 data.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError
from .solvers import LampParams

_DATASET_MAGIC = b"MMVL"
_CHECKPOINT_MAGIC = b"MMVC"
_VERSION = 1
_DATASET_HEADER = struct.Struct("<4sIIIIIB3xQ")
_GRID_MODES = {"on-grid": 0, "off-grid": 1, "fse": 2}
_GRID_CODES = {v: k for k, v in _GRID_MODES.items()}


def save_dataset(path, samples, n_path, grid_mode, master_seed):
    """Write a (count, n_bs, k) complex stack; values are rounded to complex64."""
    samples = np.ascontiguousarray(samples, dtype="<c8")
    count, n_bs, k = samples.shape
    header = _DATASET_HEADER.pack(
        _DATASET_MAGIC, _VERSION, count, n_bs, k, n_path,
        _GRID_MODES[grid_mode], master_seed,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(samples.tobytes())


def load_dataset(path):
    """Read a dataset file; returns (samples complex128, meta dict)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _DATASET_HEADER.size:
        raise FormatError(f"truncated header: {len(raw)} bytes at offset 0")
    magic, version, count, n_bs, k, n_path, mode, seed = _DATASET_HEADER.unpack_from(raw)
    if magic != _DATASET_MAGIC:
        raise FormatError(f"bad magic {magic!r} at offset 0")
    if version != _VERSION:
        raise FormatError(f"unsupported version {version} at offset 4")
    if mode not in _GRID_CODES:
        raise FormatError(f"unknown grid mode {mode} at offset 24")
    expected = count * n_bs * k * 8
    payload = raw[_DATASET_HEADER.size :]
    if len(payload) != expected:
        raise FormatError(
            f"payload is {len(payload)} bytes, expected {expected}, "
            f"at offset {_DATASET_HEADER.size}"
        )
    samples = np.frombuffer(payload, dtype="<c8").reshape(count, n_bs, k)
    meta = {
        "count": count, "n_bs": n_bs, "k": k, "n_path": n_path,
        "grid_mode": _GRID_CODES[mode], "master_seed": seed,
    }
    return samples.astype(np.complex128), meta


def dataset_roundtrip(path, samples, n_path=0, grid_mode="off-grid", master_seed=0):
    """Save then reload; returns the storage-precision samples."""
    save_dataset(path, samples, n_path, grid_mode, master_seed)
    loaded, _ = load_dataset(path)
    return loaded


# ----------------------------------------------------------------- checkpoint


@dataclass
class Checkpoint:
    """Trained parameters plus the dimensions needed to rebuild the pipeline."""

    n_bs: int
    n_grid: int
    n_sub: int
    m: int
    t_crn: int
    xi: np.ndarray
    b: np.ndarray
    theta1: float
    theta2: float
    t_frsn: int = 0
    b_fb: np.ndarray = None
    theta_fb1: float = 0.0
    theta_fb2: float = 0.0
    omega: np.ndarray = None

    @property
    def has_frsn(self):
        return self.t_frsn > 0

    def lamp_params(self):
        return LampParams(self.b, self.theta1, self.theta2)

    def frsn_params(self):
        if not self.has_frsn:
            raise FormatError("checkpoint carries no feedback-stage parameters")
        return LampParams(self.b_fb, self.theta_fb1, self.theta_fb2)


def _pack_tensor(name, array):
    array = np.ascontiguousarray(array, dtype="<f4")
    out = [struct.pack("<H", len(name)), name.encode("ascii"), struct.pack("<B", array.ndim)]
    out.append(struct.pack(f"<{array.ndim}I", *array.shape))
    out.append(array.tobytes())
    return b"".join(out)


def save_checkpoint(path, ckpt):
    tensors = [
        ("xi", ckpt.xi),
        ("b_re", np.asarray(ckpt.b).real),
        ("b_im", np.asarray(ckpt.b).imag),
        ("theta1", np.float64(ckpt.theta1)),
        ("theta2", np.float64(ckpt.theta2)),
    ]
    k_c = 0
    if ckpt.has_frsn:
        k_c = len(ckpt.omega)
        tensors += [
            ("bfb_re", np.asarray(ckpt.b_fb).real),
            ("bfb_im", np.asarray(ckpt.b_fb).imag),
            ("thetafb1", np.float64(ckpt.theta_fb1)),
            ("thetafb2", np.float64(ckpt.theta_fb2)),
            ("omega", np.asarray(ckpt.omega, dtype=np.float64)),
        ]
    head = struct.pack(
        "<4sIIIIIIIII", _CHECKPOINT_MAGIC, _VERSION, ckpt.n_bs, ckpt.n_grid,
        ckpt.n_sub, ckpt.m, ckpt.t_crn, ckpt.t_frsn, k_c, len(tensors),
    )
    with open(path, "wb") as fh:
        fh.write(head)
        for name, arr in tensors:
            fh.write(_pack_tensor(name, arr))


def load_checkpoint(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    head = struct.Struct("<4sIIIIIIIII")
    if len(raw) < head.size:
        raise FormatError(f"truncated header: {len(raw)} bytes at offset 0")
    magic, version, n_bs, g, k, m, t, t_fb, k_c, n_tensors = head.unpack_from(raw)
    if magic != _CHECKPOINT_MAGIC:
        raise FormatError(f"bad magic {magic!r} at offset 0")
    if version != _VERSION:
        raise FormatError(f"unsupported version {version} at offset 4")

    tensors = {}
    off = head.size
    for _ in range(n_tensors):
        if off + 2 > len(raw):
            raise FormatError(f"truncated tensor header at offset {off}")
        (name_len,) = struct.unpack_from("<H", raw, off)
        off += 2
        name = raw[off : off + name_len].decode("ascii")
        off += name_len
        (ndim,) = struct.unpack_from("<B", raw, off)
        off += 1
        dims = struct.unpack_from(f"<{ndim}I", raw, off)
        off += 4 * ndim
        size = int(np.prod(dims, dtype=np.int64)) if ndim else 1
        end = off + 4 * size
        if end > len(raw):
            raise FormatError(f"truncated tensor {name!r} at offset {off}")
        data = np.frombuffer(raw[off:end], dtype="<f4").reshape(dims)
        off = end
        tensors[name] = data.astype(np.float64)

    def expect(name, shape):
        if name not in tensors:
            raise FormatError(f"missing tensor {name!r}")
        if tuple(tensors[name].shape) != shape:
            raise FormatError(
                f"tensor {name!r} has shape {tensors[name].shape}, expected {shape}"
            )
        return tensors[name]

    xi = expect("xi", (n_bs, m))
    b = expect("b_re", (g, m)) + 1j * expect("b_im", (g, m))
    ckpt = Checkpoint(
        n_bs=n_bs, n_grid=g, n_sub=k, m=m, t_crn=t,
        xi=xi, b=b,
        theta1=float(expect("theta1", ())),
        theta2=float(expect("theta2", ())),
        t_frsn=t_fb,
    )
    if t_fb > 0:
        ckpt.b_fb = expect("bfb_re", (k, k_c)) + 1j * expect("bfb_im", (k, k_c))
        ckpt.theta_fb1 = float(expect("thetafb1", ()))
        ckpt.theta_fb2 = float(expect("thetafb2", ()))
        ckpt.omega = expect("omega", (k_c,)).astype(np.int64)
    return ckpt
