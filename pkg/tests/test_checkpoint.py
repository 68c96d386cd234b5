import numpy as np
import pytest

from strainlimit import solver as S
from strainlimit.checkpoint import (MAGIC_CHECKPOINT, MAGIC_FINAL, CheckpointError, decode_state, encode_state,
                                    read_state, write_state)
from strainlimit.constitutive import ConstitutiveParams as P
from strainlimit.spectral import SpectralConfig, random_field


def make_state(rng, dim=2, m=3):
    spec, p = SpectralConfig(dim, m), P(0.3, 1.7, 9)
    acc = S.Accumulators(dissip=0.1, grad_diss=1 / 3, T_L1Q=2.0, reg_L2Q_sq=1e-300, rate_pow=5.0, balance_max=1e-17)
    return S.SolverState(0.123456789, random_field(spec, rng), random_field(spec, rng), 42, p, spec, acc)


@pytest.mark.parametrize("dim,m", [(1, 4), (2, 3), (3, 2)])
def test_roundtrip_bitwise(rng, tmp_path, dim, m):
    st = make_state(rng, dim, m)
    path = tmp_path / "c.slvc"
    write_state(path, st)
    back = read_state(path)
    assert S._bits_equal(st, back)
    assert back.acc == st.acc and back.params == st.params and back.spec == st.spec
    assert encode_state(back) == path.read_bytes()


def test_layout(rng):
    st = make_state(rng)
    data = encode_state(st, MAGIC_FINAL)
    assert data.startswith(b"SLVF1\n")
    head, body = data[6:].split(b"\n\n", 1)
    keys = [ln.split("=")[0].strip() for ln in head.decode().splitlines()]
    assert keys[:8] == ["dim", "m", "grid_shape", "a", "alpha", "n", "t", "step_index"]
    arr = np.frombuffer(body, "<f8")
    np.testing.assert_array_equal(arr, np.concatenate([st.u.coeffs.ravel(), st.v.coeffs.ravel()]))
    assert decode_state(data)[1] == MAGIC_FINAL


def test_corrupt_files_rejected(rng):
    data = encode_state(make_state(rng))
    with pytest.raises(CheckpointError):
        decode_state(b"NOPE1\n" + data[6:])
    with pytest.raises(CheckpointError):
        decode_state(data[:-8])
    with pytest.raises(CheckpointError):
        decode_state(MAGIC_CHECKPOINT + b"dim = 2\n")
    with pytest.raises(CheckpointError):
        decode_state(data.replace(b"step_index", b"stepindex"))
    with pytest.raises(ValueError):
        encode_state(make_state(rng), b"XXXXX\n")
