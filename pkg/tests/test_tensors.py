import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from strainlimit.tensors import (SymTensor, SymTensorField, contract, frobenius, from_mandel,
                                 index_pairs, ncomp, to_mandel)


def sym(dim, mat):
    return SymTensor.from_matrix(np.asarray(mat, dtype=float))


def test_frobenius_examples():
    assert frobenius(SymTensor.zeros(2)) == 0.0
    assert frobenius(sym(2, [[3, 0], [0, 4]])) == pytest.approx(5.0, abs=1e-15)
    assert frobenius(sym(2, [[0, 1], [1, 0]])) == pytest.approx(math.sqrt(2.0), abs=1e-15)


def test_contract_examples():
    assert contract(SymTensor.identity(3), SymTensor.identity(3)) == pytest.approx(3.0)
    T = sym(3, np.arange(9.0).reshape(3, 3) + np.arange(9.0).reshape(3, 3).T)
    assert contract(T, SymTensor.zeros(3)) == 0.0


def test_storage_layout():
    assert ncomp(1) == 1 and ncomp(2) == 3 and ncomp(3) == 6
    assert index_pairs(2) == ((0, 0), (0, 1), (1, 1))
    with pytest.raises(ValueError):
        SymTensor(2, np.zeros(4))
    with pytest.raises(ValueError):
        SymTensorField(2, np.zeros((3, 6, 8)))


def test_matrix_roundtrip(rng):
    for d in (1, 2, 3):
        A = rng.standard_normal((d, d))
        A = A + A.T
        T = SymTensor.from_matrix(A)
        np.testing.assert_array_equal(T.to_matrix(), A)
        assert frobenius(T) == pytest.approx(np.linalg.norm(A), rel=1e-14)


def test_contract_matches_frobenius_square(rng):
    for d in (1, 2, 3):
        T = SymTensor(d, rng.standard_normal((ncomp(d), 500)))
        np.testing.assert_allclose(contract(T, T), frobenius(T) ** 2, rtol=1e-14)


def test_mandel_is_isometry(rng):
    T = SymTensor(3, rng.standard_normal(6))
    S = SymTensor(3, rng.standard_normal(6))
    assert np.dot(to_mandel(T), to_mandel(S)) == pytest.approx(contract(T, S), rel=1e-14)
    np.testing.assert_allclose(from_mandel(3, to_mandel(T)).entries, T.entries, rtol=1e-15)


def test_cauchy_schwarz_bulk(rng):
    for d in (2, 3):
        T = SymTensor(d, rng.standard_normal((ncomp(d), 100_000)) * 10 ** rng.uniform(-3, 3, 100_000))
        S = SymTensor(d, rng.standard_normal((ncomp(d), 100_000)))
        lhs = np.abs(contract(T, S))
        assert np.all(lhs <= frobenius(T) * frobenius(S) * (1 + 1e-14))


entries = st.floats(-1e3, 1e3, allow_nan=False)


@given(st.integers(1, 3), st.data())
def test_contract_bilinear_symmetric(d, data):
    k = ncomp(d)
    T, S, R = (SymTensor(d, np.array(data.draw(st.lists(entries, min_size=k, max_size=k)))) for _ in range(3))
    c = data.draw(st.floats(-10, 10))
    assert contract(T, S) == contract(S, T)
    lhs = contract(SymTensor(d, T.entries * c + R.entries), S)
    rhs = c * contract(T, S) + contract(R, S)
    scale = (abs(c) * frobenius(T) + frobenius(R)) * frobenius(S) + 1e-300
    assert abs(lhs - rhs) <= 1e-12 * scale
