"""Bit-exact binary state files.

Layout::

    b"SLVC1\\n"                      (b"SLVF1\\n" for final snapshots)
    key = value\\n ...               UTF-8 header
    \\n                              blank line ends the header
    u coefficients, v coefficients  little-endian float64, C order of (d, K, 2)

Header keys: dim, m, grid_shape (comma separated), a, alpha, n, t,
step_index, plus ``acc_*`` running integrals.  Floats are written with
``repr`` so they parse back to the identical double.  The mode order ``K`` is
``SpectralConfig.modes``: half-space wavevectors sorted lexicographically.
"""

from __future__ import annotations

import os

import numpy as np

from .constitutive import ConstitutiveParams
from .solver import Accumulators, SolverState
from .spectral import SpectralConfig, SpectralField

MAGIC_CHECKPOINT = b"SLVC1\n"
MAGIC_FINAL = b"SLVF1\n"
MAGICS = (MAGIC_CHECKPOINT, MAGIC_FINAL)
_REQUIRED = ("dim", "m", "grid_shape", "a", "alpha", "n", "t", "step_index")


class CheckpointError(ValueError):
    pass


def _fmt(x: float) -> str:
    return repr(float(x))


def encode_state(state: SolverState, magic: bytes = MAGIC_CHECKPOINT) -> bytes:
    if magic not in MAGICS:
        raise ValueError(f"unknown magic {magic!r}")
    spec, p = state.spec, state.params
    hdr = {
        "dim": str(spec.dim),
        "m": str(spec.m),
        "grid_shape": ",".join(str(k) for k in spec.grid_shape),
        "a": _fmt(p.a),
        "alpha": _fmt(p.alpha),
        "n": _fmt(p.n),
        "t": _fmt(state.t),
        "step_index": str(state.step_index),
    }
    hdr.update({k: _fmt(v) for k, v in state.acc.header().items()})
    head = "".join(f"{k} = {v}\n" for k, v in hdr.items()) + "\n"
    body = np.concatenate([state.u.coeffs.ravel(), state.v.coeffs.ravel()]).astype("<f8").tobytes()
    return magic + head.encode("utf-8") + body


def decode_state(data: bytes) -> tuple[SolverState, bytes]:
    """Parse a state file; returns the state and its magic."""
    magic = data[:6]
    if magic not in MAGICS:
        raise CheckpointError(f"bad magic {magic!r}")
    end = data.find(b"\n\n", 6)
    if end < 0:
        # header may be empty only in malformed files
        raise CheckpointError("header is not terminated by a blank line")
    hdr = {}
    for line in data[6:end].decode("utf-8").splitlines():
        key, sep, val = line.partition("=")
        if not sep:
            raise CheckpointError(f"malformed header line {line!r}")
        hdr[key.strip()] = val.strip()
    missing = [k for k in _REQUIRED if k not in hdr]
    if missing:
        raise CheckpointError(f"header lacks {', '.join(missing)}")
    spec = SpectralConfig(int(hdr["dim"]), int(hdr["m"]),
                          tuple(int(k) for k in hdr["grid_shape"].split(",")))
    params = ConstitutiveParams(a=float(hdr["a"]), alpha=float(hdr["alpha"]), n=float(hdr["n"]))
    body = data[end + 2:]
    size = int(np.prod(spec.coeff_shape))
    if len(body) != 2 * size * 8:
        raise CheckpointError(f"payload has {len(body)} bytes, expected {2 * size * 8}")
    arr = np.frombuffer(body, dtype="<f8").astype(np.float64)
    u = SpectralField(spec, arr[:size].reshape(spec.coeff_shape))
    v = SpectralField(spec, arr[size:].reshape(spec.coeff_shape))
    state = SolverState(float(hdr["t"]), u, v, int(hdr["step_index"]), params, spec,
                        Accumulators.from_header(hdr))
    return state, magic


def write_state(path: str | os.PathLike, state: SolverState, magic: bytes = MAGIC_CHECKPOINT) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(encode_state(state, magic))


def read_state(path: str | os.PathLike) -> SolverState:
    with open(path, "rb") as fh:
        state, _ = decode_state(fh.read())
    return state
