"""Binary checkpoints that restore training bitwise.

Little-endian layout: a fixed header (magic, version, crc32 and length of
the payload) followed by the payload holding model dimensions, penalty
settings, all parameter arrays as raw float64, optimizer accumulators and
velocities, per-unit ages, regroup bookkeeping, the persistent chains and
the RNG counters (seed plus update count). Any flipped payload byte fails
the crc check on load.
"""

from __future__ import annotations

import io
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .model import ModelParams, PenaltyConfig
from .sampling import FantasyChains
from .training import Gradients, OptimizerState, RegroupState

MAGIC = b"IRBM"
VERSION = 1


class CheckpointError(ValueError):
    """Raised for unreadable, corrupt or incompatible checkpoint files."""


@dataclass
class CheckpointData:
    params: ModelParams
    opt: OptimizerState
    regroup: RegroupState
    chains: FantasyChains | None
    seed: int
    epochs_done: int


def _write_array(buf, arr, dtype):
    buf.write(np.ascontiguousarray(arr, dtype=dtype).tobytes())


def _read_array(buf, count, dtype, shape=None):
    dtype = np.dtype(dtype)
    raw = buf.read(count * dtype.itemsize)
    if len(raw) != count * dtype.itemsize:
        raise CheckpointError("checkpoint payload ends early")
    arr = np.frombuffer(raw, dtype=dtype).copy()
    return arr.reshape(shape) if shape is not None else arr


def _write_param_set(buf, g, l, D, C):
    _write_array(buf, g.W, "<f8")
    _write_array(buf, g.b_v, "<f8")
    _write_array(buf, g.c, "<f8")
    if C:
        _write_array(buf, g.U, "<f8")
        _write_array(buf, g.d, "<f8")


def _read_param_set(buf, l, D, C):
    W = _read_array(buf, l * D, "<f8", (l, D))
    b_v = _read_array(buf, D, "<f8")
    c = _read_array(buf, l, "<f8")
    U = _read_array(buf, l * C, "<f8", (l, C)) if C else None
    d = _read_array(buf, C, "<f8") if C else None
    return W, b_v, c, U, d


def save_checkpoint(path, data: CheckpointData):
    p = data.params
    buf = io.BytesIO()
    flags = (1 if p.has_labels else 0)
    flags |= (2 if p.penalty.mode == "dynamic" else 0)
    flags |= (4 if data.chains is not None else 0)
    flags |= (8 if data.chains is not None and data.chains.y is not None else 0)
    buf.write(struct.pack("<Bd", flags, p.penalty.beta))
    buf.write(struct.pack("<III", p.D, p.l, p.C))
    buf.write(struct.pack("<QQI", data.seed, data.opt.t, data.epochs_done))
    rg = data.regroup
    buf.write(struct.pack("<IBIIdQI", rg.M_t, 1 if rg.phase == "adaptive" else 0,
                          rg.epoch, rg.prev_l, rg.mode_sum, rg.mode_count,
                          len(rg.mz_history)))
    _write_array(buf, np.asarray(rg.mz_history, dtype=np.float64), "<f8")
    _write_param_set(buf, p, p.l, p.D, p.C)
    _write_param_set(buf, data.opt.acc, p.l, p.D, p.C)
    _write_param_set(buf, data.opt.vel, p.l, p.D, p.C)
    _write_array(buf, data.opt.unit_age, "<i8")
    if data.chains is not None:
        buf.write(struct.pack("<I", data.chains.n_chains))
        _write_array(buf, data.chains.v, "u1")
        if data.chains.y is not None:
            _write_array(buf, data.chains.y, "<u2")
    payload = buf.getvalue()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<IIQ", VERSION, zlib.crc32(payload), len(payload)))
        f.write(payload)


def load_checkpoint(path) -> CheckpointData:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != MAGIC:
            raise CheckpointError(f"bad magic {magic!r}")
        header = f.read(16)
        if len(header) != 16:
            raise CheckpointError("truncated header")
        version, crc, length = struct.unpack("<IIQ", header)
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        payload = f.read(length)
    if len(payload) != length or zlib.crc32(payload) != crc:
        raise CheckpointError("checkpoint payload fails its integrity check")

    buf = io.BytesIO(payload)

    def unpack(fmt):
        size = struct.calcsize(fmt)
        raw = buf.read(size)
        if len(raw) != size:
            raise CheckpointError("checkpoint payload ends early")
        return struct.unpack(fmt, raw)

    flags, beta = unpack("<Bd")
    D, l, C = unpack("<III")
    seed, t, epochs_done = unpack("<QQI")
    m_t, phase, epoch, prev_l, mode_sum, mode_count, n_hist = unpack("<IBIIdQI")
    mz_history = list(_read_array(buf, n_hist, "<f8"))
    penalty = PenaltyConfig(beta=beta, mode="dynamic" if flags & 2 else "constant")
    W, b_v, c, U, d = _read_param_set(buf, l, D, C)
    params = ModelParams(W=W, b_v=b_v, c=c, U=U, d=d, penalty=penalty)
    acc = Gradients(*_read_param_set(buf, l, D, C))
    vel = Gradients(*_read_param_set(buf, l, D, C))
    unit_age = _read_array(buf, l, "<i8")
    chains = None
    if flags & 4:
        (n_chains,) = unpack("<I")
        v = _read_array(buf, n_chains * D, "u1", (n_chains, D))
        y = _read_array(buf, n_chains, "<u2").astype(np.int64) if flags & 8 else None
        chains = FantasyChains(v=v, y=y)
    if buf.read(1):
        raise CheckpointError("trailing bytes in checkpoint payload")
    opt = OptimizerState(t=t, acc=acc, vel=vel, unit_age=unit_age)
    regroup = RegroupState(M_t=m_t, phase="adaptive" if phase else "early",
                           epoch=epoch, prev_l=prev_l, mz_history=mz_history,
                           mode_sum=mode_sum, mode_count=mode_count)
    return CheckpointData(params=params, opt=opt, regroup=regroup,
                          chains=chains, seed=seed, epochs_done=epochs_done)
