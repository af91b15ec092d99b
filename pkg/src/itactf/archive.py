"""Binary model archive.

Layout (all integers unsigned 64-bit little-endian, all arrays float64
little-endian row-major)::

    b"CTF1"
    N, I, J, R, N_aug
    A (I x R), B (J x R), Z (N x R), Z_aug (N_aug x R)
    length, CTF config as UTF-8 ``key=value`` lines
    zero or more tagged sections: 4-byte tag, payload length, payload

Known sections are ``MLP1`` (classifier weights and input scaling) and
``NRM1`` (Z-score statistics).  Unknown tags are skipped on load so newer
writers stay readable.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from .classifier import MlpConfig, MlpModel
from .config import dataclass_from_pairs, dataclass_to_pairs
from .ctf import CtfConfig
from .data import ZScoreStats, atomic_write_bytes
from .errors import DomainError, ParseError
from .tensor_core import FactorModel

__all__ = ["MAGIC", "ModelArchive", "save_archive", "load_archive", "archive_bytes", "parse_archive"]

MAGIC = b"CTF1"
_U64 = struct.Struct("<Q")


@dataclass(frozen=True)
class ModelArchive:
    model: FactorModel
    ctf: CtfConfig
    mlp: Optional[MlpModel] = None
    mlp_config: Optional[MlpConfig] = None
    zscore: Optional[ZScoreStats] = None


def _pairs_text(obj):
    return "\n".join(f"{k}={v}" for k, v in dataclass_to_pairs(obj).items()).encode("utf-8")


def _text_pairs(raw: bytes) -> Dict[str, str]:
    pairs = {}
    for line in raw.decode("utf-8").splitlines():
        if line:
            key, _, value = line.partition("=")
            pairs[key] = value
    return pairs


class _Writer:
    def __init__(self):
        self.buf = io.BytesIO()

    def u64(self, *values):
        for v in values:
            self.buf.write(_U64.pack(int(v)))

    def array(self, arr):
        self.buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())

    def blob(self, data: bytes):
        self.u64(len(data))
        self.buf.write(data)

    def section(self, tag: bytes, payload: bytes):
        self.buf.write(tag)
        self.blob(payload)


class _Reader:
    def __init__(self, data: bytes, source):
        self.data = data
        self.pos = 0
        self.source = source

    def take(self, n):
        if self.pos + n > len(self.data):
            raise ParseError(f"{self.source}: archive truncated at byte {self.pos}", self.source)
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u64(self):
        return _U64.unpack(self.take(8))[0]

    def array(self, *shape):
        count = int(np.prod(shape))
        return np.frombuffer(self.take(8 * count), dtype="<f8").reshape(shape).astype(np.float64)

    def blob(self):
        return self.take(self.u64())

    @property
    def done(self):
        return self.pos >= len(self.data)


def _mlp_payload(mlp: MlpModel, cfg: Optional[MlpConfig]) -> bytes:
    w = _Writer()
    w.u64(len(mlp.weights))
    for W, b in zip(mlp.weights, mlp.biases):
        w.u64(*W.shape)
        w.array(W)
        w.array(b)
    w.array(mlp.mean)
    w.array(mlp.scale)
    w.blob(_pairs_text(cfg) if cfg is not None else b"")
    return w.buf.getvalue()


def _read_mlp(payload, source):
    r = _Reader(payload, source)
    weights, biases = [], []
    for _ in range(r.u64()):
        fan_in, fan_out = r.u64(), r.u64()
        weights.append(r.array(fan_in, fan_out))
        biases.append(r.array(fan_out))
    dim = weights[0].shape[0]
    mean, scale = r.array(dim), r.array(dim)
    cfg_text = r.blob()
    cfg = dataclass_from_pairs(MlpConfig, _text_pairs(cfg_text), f"{source}[MLP1]") if cfg_text else None
    return MlpModel(tuple(weights), tuple(biases), mean, scale), cfg


def archive_bytes(archive: ModelArchive) -> bytes:
    m = archive.model
    Z_aug = m.Z_aug if m.Z_aug is not None else np.zeros((0, m.rank))
    w = _Writer()
    w.buf.write(MAGIC)
    w.u64(m.Z.shape[0], m.A.shape[0], m.B.shape[0], m.rank, Z_aug.shape[0])
    for arr in (m.A, m.B, m.Z, Z_aug):
        w.array(arr)
    w.blob(_pairs_text(archive.ctf))
    if archive.mlp is not None:
        w.section(b"MLP1", _mlp_payload(archive.mlp, archive.mlp_config))
    if archive.zscore is not None:
        z = _Writer()
        z.u64(archive.zscore.mean.shape[0])
        z.array(archive.zscore.mean)
        z.array(archive.zscore.std)
        w.section(b"NRM1", z.buf.getvalue())
    return w.buf.getvalue()


def parse_archive(data: bytes, source="<bytes>") -> ModelArchive:
    r = _Reader(data, source)
    if r.take(4) != MAGIC:
        raise ParseError(f"{source}: not a model archive (bad magic)", source)
    N, I, J, R, N_aug = (r.u64() for _ in range(5))
    if max(N, I, J, R, N_aug) > 1 << 40:
        raise ParseError(f"{source}: implausible header sizes", source)
    A, B, Z = r.array(I, R), r.array(J, R), r.array(N, R)
    Z_aug = r.array(N_aug, R) if N_aug else None
    ctf = dataclass_from_pairs(CtfConfig, _text_pairs(r.blob()), f"{source}[ctf]")
    mlp = mlp_cfg = zscore = None
    while not r.done:
        tag = r.take(4)
        payload = r.blob()
        if tag == b"MLP1":
            mlp, mlp_cfg = _read_mlp(payload, source)
        elif tag == b"NRM1":
            s = _Reader(payload, source)
            n = s.u64()
            zscore = ZScoreStats(s.array(n), s.array(n))
    return ModelArchive(FactorModel(A, B, Z, Z_aug), ctf, mlp, mlp_cfg, zscore)


def save_archive(path, archive: ModelArchive):
    atomic_write_bytes(path, archive_bytes(archive))


def load_archive(path) -> ModelArchive:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise DomainError(f"cannot read archive {path}: {exc}") from exc
    return parse_archive(data, str(path))
