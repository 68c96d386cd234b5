"""Symmetric d x d tensors stored as their upper triangle.

A :class:`SymTensor` carries ``d(d+1)/2`` components along the leading axis of
``entries``; any trailing axes are batch axes, so one object can hold a single
tensor (``entries.shape == (ncomp,)``) or a whole sampled field
(``entries.shape == (ncomp, *grid_shape)``).  Component order is row-major over
the upper triangle: ``(0,0), (0,1), ..., (0,d-1), (1,1), ...``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def index_pairs(dim: int) -> tuple[tuple[int, int], ...]:
    """Upper-triangular ``(i, j)`` pairs in storage order."""
    if dim not in (1, 2, 3):
        raise ValueError(f"dim must be 1, 2 or 3, got {dim}")
    return tuple((i, j) for i in range(dim) for j in range(i, dim))


def ncomp(dim: int) -> int:
    return len(index_pairs(dim))


@lru_cache(maxsize=None)
def _weights(dim: int) -> np.ndarray:
    # off-diagonal entries appear twice in T:S
    w = np.array([1.0 if i == j else 2.0 for i, j in index_pairs(dim)])
    w.setflags(write=False)
    return w


def _bcast(w: np.ndarray, ndim: int) -> np.ndarray:
    return w.reshape((-1,) + (1,) * (ndim - 1))


def is_power_of_two(k: int) -> bool:
    return k > 0 and (k & (k - 1)) == 0


@dataclass(frozen=True, eq=False)
class SymTensor:
    """Symmetric tensor (or batch of tensors) in upper-triangular storage."""

    dim: int
    entries: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.entries, dtype=np.float64)
        if arr.ndim == 0 or arr.shape[0] != ncomp(self.dim):
            raise ValueError(
                f"expected leading axis of length {ncomp(self.dim)} for dim={self.dim}, "
                f"got shape {arr.shape}"
            )
        if arr is self.entries:
            arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.entries.shape[1:]

    @classmethod
    def zeros(cls, dim: int, batch_shape: tuple[int, ...] = ()) -> "SymTensor":
        return cls(dim, np.zeros((ncomp(dim),) + tuple(batch_shape)))

    @classmethod
    def identity(cls, dim: int) -> "SymTensor":
        return cls(dim, np.array([1.0 if i == j else 0.0 for i, j in index_pairs(dim)]))

    @classmethod
    def from_matrix(cls, mat) -> "SymTensor":
        """Build from a ``(..., d, d)`` array; the symmetric part is taken."""
        mat = np.asarray(mat, dtype=np.float64)
        dim = mat.shape[-1]
        if mat.shape[-2] != dim:
            raise ValueError("matrix must be square")
        sym = 0.5 * (mat + np.swapaxes(mat, -1, -2))
        comps = [sym[..., i, j] for i, j in index_pairs(dim)]
        return cls(dim, np.stack(comps, axis=0))

    def to_matrix(self) -> np.ndarray:
        """Dense ``(*batch, d, d)`` array."""
        d = self.dim
        out = np.empty(self.batch_shape + (d, d))
        for c, (i, j) in enumerate(index_pairs(d)):
            out[..., i, j] = self.entries[c]
            out[..., j, i] = self.entries[c]
        return out

    def scaled(self, factor) -> "SymTensor":
        """Multiply by a scalar or by a batch-shaped array of scalars."""
        return type(self)._like(self, self.entries * np.asarray(factor))

    def __add__(self, other: "SymTensor") -> "SymTensor":
        _check_dims(self, other)
        return type(self)._like(self, self.entries + other.entries)

    def __sub__(self, other: "SymTensor") -> "SymTensor":
        _check_dims(self, other)
        return type(self)._like(self, self.entries - other.entries)

    def __neg__(self) -> "SymTensor":
        return type(self)._like(self, -self.entries)

    @classmethod
    def _like(cls, template: "SymTensor", entries: np.ndarray) -> "SymTensor":
        return cls(template.dim, entries)


class SymTensorField(SymTensor):
    """SymTensor sampled on a uniform periodic grid with power-of-two sides."""

    def __post_init__(self):
        super().__post_init__()
        shape = self.entries.shape[1:]
        if len(shape) != self.dim:
            raise ValueError(f"grid must have {self.dim} axes, got shape {shape}")
        if not all(is_power_of_two(k) for k in shape):
            raise ValueError(f"grid sides must be powers of two, got {shape}")

    @property
    def grid_shape(self) -> tuple[int, ...]:
        return self.entries.shape[1:]

    def mean(self, values: np.ndarray) -> float:
        """Rectangle-rule integral over the unit box of a grid scalar."""
        return float(np.mean(values))


def _check_dims(T: SymTensor, S: SymTensor) -> None:
    if T.dim != S.dim:
        raise ValueError(f"dimension mismatch: {T.dim} vs {S.dim}")


def contract_entries(dim: int, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``A:B`` for raw component arrays with components on axis 0."""
    w = _bcast(_weights(dim), a.ndim)
    return np.sum(w * a * b, axis=0)


def frobenius_entries(dim: int, a: np.ndarray) -> np.ndarray:
    return np.sqrt(contract_entries(dim, a, a))


def contract(T: SymTensor, S: SymTensor) -> np.ndarray | float:
    """Double-dot product ``sum_ij T_ij S_ij``."""
    _check_dims(T, S)
    out = contract_entries(T.dim, T.entries, S.entries)
    return float(out) if out.ndim == 0 else out


def frobenius(T: SymTensor) -> np.ndarray | float:
    """Frobenius norm ``(T:T)^(1/2)``."""
    out = frobenius_entries(T.dim, T.entries)
    return float(out) if out.ndim == 0 else out


def to_mandel(T: SymTensor) -> np.ndarray:
    """Orthonormal-basis coordinates (off-diagonals scaled by sqrt 2).

    Components come last: shape ``(*batch, ncomp)``.  Euclidean products of
    these vectors equal tensor contractions.
    """
    s = np.sqrt(_weights(T.dim))
    return np.moveaxis(T.entries * _bcast(s, T.entries.ndim), 0, -1)


def from_mandel(dim: int, vec: np.ndarray) -> SymTensor:
    s = np.sqrt(_weights(dim))
    ent = np.moveaxis(np.asarray(vec, dtype=np.float64), -1, 0)
    return SymTensor(dim, ent / _bcast(s, ent.ndim))
