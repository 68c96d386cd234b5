"""Real trigonometric Galerkin spaces on the periodic unit box.

A zero-mean vector field of degree at most ``m`` (``|k|_inf <= m``) is stored
as real coefficients against the orthonormal basis

    sqrt(2) cos(2 pi k.x) e_i,   sqrt(2) sin(2 pi k.x) e_i,

one pair per wavevector ``k`` in the half space ``H`` (``k != 0`` whose last
nonzero component is positive).  With this normalisation the L2 norm of a
field is the Euclidean norm of its coefficient array.

Canonical coefficient layout is ``coeffs[i, j, c]``: vector component ``i``,
mode ``j`` in the lexicographic order of ``SpectralConfig.modes``, and
``c = 0`` (cosine) / ``c = 1`` (sine).  Flattening in C order gives the order
used by the binary state files.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import fft as sfft

from .tensors import SymTensor, SymTensorField, index_pairs, is_power_of_two, ncomp

TWO_PI = 2.0 * np.pi
SQRT2 = np.sqrt(2.0)


def default_grid_side(m: int) -> int:
    """Smallest power of two that is at least ``2(m+1)``."""
    side = 1
    while side < 2 * (m + 1):
        side *= 2
    return side


@dataclass(frozen=True)
class SpectralConfig:
    dim: int
    m: int
    grid_shape: tuple[int, ...] = ()

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if self.m < 1:
            raise ValueError(f"m must be >= 1, got {self.m}")
        shape = tuple(int(k) for k in self.grid_shape) or (default_grid_side(self.m),) * self.dim
        if len(shape) != self.dim:
            raise ValueError(f"grid_shape needs {self.dim} entries, got {shape}")
        for k in shape:
            if not is_power_of_two(k):
                raise ValueError(f"grid sides must be powers of two, got {shape}")
            if k < 2 * (self.m + 1):
                raise ValueError(f"grid side {k} is below the oversampling floor 2(m+1) = {2 * (self.m + 1)}")
        object.__setattr__(self, "grid_shape", shape)

    # the cached tables live on the instance dict; frozen dataclasses allow that
    @cached_property
    def modes(self) -> np.ndarray:
        """Half-space wavevectors, shape ``(K, dim)``, lexicographically sorted."""
        rng = range(-self.m, self.m + 1)
        out = []
        for k in itertools.product(rng, repeat=self.dim):
            nz = [c for c in k if c != 0]
            if nz and nz[-1] > 0:
                out.append(k)
        arr = np.array(sorted(out), dtype=np.int64).reshape(-1, self.dim)
        arr.setflags(write=False)
        return arr

    @property
    def n_modes(self) -> int:
        return self.modes.shape[0]

    @property
    def coeff_shape(self) -> tuple[int, int, int]:
        return (self.dim, self.n_modes, 2)

    @property
    def n_points(self) -> int:
        return int(np.prod(self.grid_shape))

    @cached_property
    def _rfft_shape(self) -> tuple[int, ...]:
        return self.grid_shape[:-1] + (self.grid_shape[-1] // 2 + 1,)

    @cached_property
    def _index(self) -> tuple[np.ndarray, ...]:
        # position of +k in the rfft layout; last component of k is >= 0 in H
        return tuple(self.modes[:, ax] % self.grid_shape[ax] for ax in range(self.dim))

    @cached_property
    def _plane(self) -> tuple[np.ndarray, tuple[np.ndarray, ...]]:
        # modes with k_last = 0 also need their -k partner written explicitly
        sel = np.flatnonzero(self.modes[:, -1] == 0)
        neg = tuple((-self.modes[sel, ax]) % self.grid_shape[ax] for ax in range(self.dim))
        return sel, neg

    @cached_property
    def wavevectors(self) -> np.ndarray:
        """``2 pi k`` for each half-space mode, shape ``(dim, K)``."""
        w = TWO_PI * self.modes.T.astype(np.float64)
        w.setflags(write=False)
        return w

    @cached_property
    def grid_wavenumbers(self) -> tuple[np.ndarray, ...]:
        """Broadcastable ``2 pi k`` arrays over the rfft layout; Nyquist zeroed."""
        out = []
        for ax, N in enumerate(self.grid_shape):
            if ax == self.dim - 1:
                k = np.fft.rfftfreq(N, 1.0 / N)
            else:
                k = np.fft.fftfreq(N, 1.0 / N)
            k = k.copy()
            k[np.abs(k) == N // 2] = 0.0
            shape = [1] * self.dim
            shape[ax] = k.size
            out.append((TWO_PI * k).reshape(shape))
        return tuple(out)

    def grid_points(self) -> tuple[np.ndarray, ...]:
        """Node coordinates ``x_j = j/N`` as an ``indexing='ij'`` mesh."""
        axes = [np.arange(N) / N for N in self.grid_shape]
        return tuple(np.meshgrid(*axes, indexing="ij"))

    def mode_index(self, k) -> tuple[int, int]:
        """``(j, sign)`` with ``modes[j] == sign * k``; ValueError if out of band."""
        k = tuple(int(c) for c in k)
        if len(k) != self.dim or all(c == 0 for c in k) or max(abs(c) for c in k) > self.m:
            raise ValueError(f"mode {k} is not a nonzero wavevector of degree <= {self.m}")
        table = self._mode_table
        if k in table:
            return table[k], 1
        return table[tuple(-c for c in k)], -1

    @cached_property
    def _mode_table(self) -> dict[tuple[int, ...], int]:
        return {tuple(int(c) for c in k): j for j, k in enumerate(self.modes)}

    # -- complex <-> grid ---------------------------------------------------

    def scatter(self, amps: np.ndarray) -> np.ndarray:
        """Place half-space complex amplitudes ``(..., K)`` into an rfft array."""
        lead = amps.shape[:-1]
        full = np.zeros(lead + self._rfft_shape, dtype=np.complex128)
        full[(Ellipsis,) + self._index] = amps
        sel, neg = self._plane
        if sel.size:
            full[(Ellipsis,) + neg] = np.conj(amps[..., sel])
        return full

    def gather(self, full: np.ndarray) -> np.ndarray:
        return full[(Ellipsis,) + self._index]

    def synthesize(self, amps: np.ndarray) -> np.ndarray:
        """Grid values of ``sum_k amp_k e^{2 pi i k.x} + c.c.``; shape ``(..., *grid)``."""
        axes = tuple(range(-self.dim, 0))
        return sfft.irfftn(self.scatter(amps), s=self.grid_shape, axes=axes, norm="forward")

    def analyze(self, values: np.ndarray) -> np.ndarray:
        """Discrete Fourier amplitudes of grid values at the half-space modes."""
        axes = tuple(range(-self.dim, 0))
        return self.gather(sfft.rfftn(values, axes=axes, norm="forward"))

    def analyze_full(self, values: np.ndarray) -> np.ndarray:
        axes = tuple(range(-self.dim, 0))
        return sfft.rfftn(values, axes=axes, norm="forward")

    def synthesize_full(self, spec: np.ndarray) -> np.ndarray:
        axes = tuple(range(-self.dim, 0))
        return sfft.irfftn(spec, s=self.grid_shape, axes=axes, norm="forward")


def coeffs_to_amps(coeffs: np.ndarray) -> np.ndarray:
    """Real ``(..., K, 2)`` cos/sin coefficients to complex ``(..., K)`` amplitudes."""
    return (coeffs[..., 0] - 1j * coeffs[..., 1]) / SQRT2


def amps_to_coeffs(amps: np.ndarray) -> np.ndarray:
    return np.stack([SQRT2 * amps.real, -SQRT2 * amps.imag], axis=-1)


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Zero-mean trigonometric vector field of degree at most ``config.m``."""

    config: SpectralConfig
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.asarray(self.coeffs, dtype=np.float64)
        if arr.shape != self.config.coeff_shape:
            raise ValueError(f"coefficient shape {arr.shape} != {self.config.coeff_shape}")
        if arr is self.coeffs:
            arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "coeffs", arr)

    @classmethod
    def zeros(cls, config: SpectralConfig) -> "SpectralField":
        return cls(config, np.zeros(config.coeff_shape))

    @classmethod
    def single_mode(cls, config: SpectralConfig, k, component: int, amplitude: float = 1.0,
                    kind: str = "sin") -> "SpectralField":
        """``amplitude * sin(2 pi k.x) e_component`` (or cos)."""
        j, sign = config.mode_index(k)
        c = np.zeros(config.coeff_shape)
        if kind == "sin":
            c[component, j, 1] = sign * amplitude / SQRT2
        elif kind == "cos":
            c[component, j, 0] = amplitude / SQRT2
        else:
            raise ValueError(f"kind must be 'sin' or 'cos', got {kind!r}")
        return cls(config, c)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        _same(self, other)
        return SpectralField(self.config, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        _same(self, other)
        return SpectralField(self.config, self.coeffs - other.coeffs)

    def scaled(self, factor: float) -> "SpectralField":
        return SpectralField(self.config, self.coeffs * factor)

    def norm(self) -> float:
        """L2 norm over the unit box (Parseval)."""
        return float(np.sqrt(np.sum(self.coeffs**2)))

    def inner(self, other: "SpectralField") -> float:
        _same(self, other)
        return float(np.sum(self.coeffs * other.coeffs))

    def amps(self) -> np.ndarray:
        return coeffs_to_amps(self.coeffs)

    def resample(self, config: SpectralConfig) -> "SpectralField":
        """Same function in another space: zero-padded up, truncated (projected) down."""
        if config.dim != self.config.dim:
            raise ValueError("dimension mismatch")
        out = np.zeros(config.coeff_shape)
        src = self.config._mode_table
        for j, k in enumerate(config.modes):
            i = src.get(tuple(int(c) for c in k))
            if i is not None:
                out[:, j, :] = self.coeffs[:, i, :]
        return SpectralField(config, out)


def _same(a: SpectralField, b: SpectralField) -> None:
    if a.config != b.config:
        raise ValueError("fields live in different spaces")


def to_grid(F: SpectralField) -> np.ndarray:
    """Grid values, shape ``(dim, *grid_shape)``."""
    return F.config.synthesize(F.amps())


def from_grid(values: np.ndarray, config: SpectralConfig) -> SpectralField:
    """L2 projection of grid samples onto the degree-``m`` zero-mean space."""
    values = np.asarray(values, dtype=np.float64)
    expected = (config.dim,) + config.grid_shape
    if values.shape != expected:
        raise ValueError(f"grid values have shape {values.shape}, expected {expected}")
    return SpectralField(config, amps_to_coeffs(config.analyze(values)))


def _sym_gradient_amps(config: SpectralConfig, amps: np.ndarray) -> np.ndarray:
    # eps_ij = (d_j u_i + d_i u_j)/2 -> i pi (k_j u_i + k_i u_j)
    w = config.wavevectors
    out = np.empty((ncomp(config.dim),) + amps.shape[1:], dtype=np.complex128)
    for c, (i, j) in enumerate(index_pairs(config.dim)):
        out[c] = 0.5j * (w[j] * amps[i] + w[i] * amps[j])
    return out


def sym_gradient(F: SpectralField) -> SymTensorField:
    """``eps(u) = (grad u + grad u^T)/2`` sampled on the grid."""
    cfg = F.config
    return SymTensorField(cfg.dim, cfg.synthesize(_sym_gradient_amps(cfg, F.amps())))


def sym_gradient_values(config: SpectralConfig, coeffs: np.ndarray) -> np.ndarray:
    """Raw-array form of :func:`sym_gradient`; shape ``(ncomp, *grid)``."""
    return config.synthesize(_sym_gradient_amps(config, coeffs_to_amps(coeffs)))


def divergence_values(config: SpectralConfig, entries: np.ndarray) -> np.ndarray:
    """Raw-array form of :func:`divergence_sym`; returns coefficients."""
    t_hat = config.analyze(entries)
    w = config.wavevectors
    d = config.dim
    div = np.zeros((d, config.n_modes), dtype=np.complex128)
    for c, (i, j) in enumerate(index_pairs(d)):
        div[i] += 1j * w[j] * t_hat[c]
        if i != j:
            div[j] += 1j * w[i] * t_hat[c]
    return amps_to_coeffs(div)


def divergence_sym(T: SymTensorField, config: SpectralConfig) -> SpectralField:
    """Degree-``m`` projection of ``div T`` for a symmetric tensor field on the grid."""
    if T.dim != config.dim or T.grid_shape != config.grid_shape:
        raise ValueError(f"tensor field on {T.grid_shape} does not match grid {config.grid_shape}")
    return SpectralField(config, divergence_values(config, T.entries))


def gradient_norm_sq(F: SpectralField) -> float:
    """``||grad u||_2^2`` from coefficients."""
    k2 = np.sum(F.config.wavevectors**2, axis=0)
    return float(np.sum(k2[None, :, None] * F.coeffs**2))


def sym_gradient_norm_sq(F: SpectralField) -> float:
    """``||eps(u)||_2^2 = (||grad u||^2 + ||div u||^2) / 2`` from coefficients."""
    w = F.config.wavevectors
    div = np.einsum("ik,ikc->kc", w, F.coeffs)
    return 0.5 * (gradient_norm_sq(F) + float(np.sum(div**2)))


def korn_ratio(F: SpectralField) -> float:
    """``||grad u||_2 / ||eps(u)||_2``; at most sqrt 2 for zero-mean periodic fields."""
    g = gradient_norm_sq(F)
    if g == 0.0:
        raise ValueError("korn_ratio of the zero field")
    return float(np.sqrt(g / sym_gradient_norm_sq(F)))


def grid_gradient(config: SpectralConfig, values: np.ndarray) -> np.ndarray:
    """Spectral gradient of grid scalars ``(..., *grid)`` -> ``(dim, ..., *grid)``.

    No truncation to degree ``m``: every resolved grid mode is differentiated.
    """
    spec = config.analyze_full(values)
    return np.stack([config.synthesize_full(1j * kw * spec) for kw in config.grid_wavenumbers])


def random_field(config: SpectralConfig, rng: np.random.Generator, decay: float = 3.0) -> SpectralField:
    """Gaussian coefficients damped by ``|k|^(-decay)``."""
    kk = np.sqrt(np.sum(config.modes.astype(np.float64) ** 2, axis=1))
    c = rng.standard_normal(config.coeff_shape) * (kk ** -decay)[None, :, None]
    return SpectralField(config, c)


def grid_mean(values: np.ndarray) -> float:
    """Rectangle-rule integral over the unit box."""
    return float(np.mean(values))


class GalerkinTransforms:
    """Precomputed ``coeffs -> eps`` and ``T -> P^m div T`` maps for repeated use.

    Same results as :func:`sym_gradient_values` and :func:`divergence_values`
    with the index bookkeeping flattened once up front.
    """

    def __init__(self, config: SpectralConfig):
        self.config = config
        d = config.dim
        pairs = index_pairs(d)
        self.nc = len(pairs)
        rshape = config._rfft_shape
        self.rshape = rshape
        self.rsize = int(np.prod(rshape))
        self.axes = tuple(range(-d, 0))
        self.flat = np.ravel_multi_index(config._index, rshape)
        sel, neg = config._plane
        self.sel = sel
        self.flat_neg = np.ravel_multi_index(neg, rshape) if sel.size else np.zeros(0, dtype=np.intp)
        w = config.wavevectors
        self.I = np.array([i for i, _ in pairs])
        self.J = np.array([j for _, j in pairs])
        self.WI = 0.5 * w[self.I]
        self.WJ = 0.5 * w[self.J]
        D = np.zeros((d, self.nc, config.n_modes))
        for c, (i, j) in enumerate(pairs):
            D[i, c] += w[j]
            if i != j:
                D[j, c] += w[i]
        self.D = D

    def sym_gradient(self, coeffs: np.ndarray) -> np.ndarray:
        """Grid values of ``eps`` for coefficients ``(d, K, 2)``; shape ``(ncomp, *grid)``."""
        amps = (coeffs[..., 0] - 1j * coeffs[..., 1]) * (1.0 / SQRT2)
        e = 1j * (self.WJ * amps[self.I] + self.WI * amps[self.J])
        full = np.zeros((self.nc, self.rsize), dtype=np.complex128)
        full[:, self.flat] = e
        if self.sel.size:
            full[:, self.flat_neg] = np.conj(e[:, self.sel])
        return sfft.irfftn(full.reshape((self.nc,) + self.rshape), s=self.config.grid_shape,
                           axes=self.axes, norm="forward")

    def divergence(self, entries: np.ndarray) -> np.ndarray:
        """Coefficients ``(d, K, 2)`` of ``P^m div T`` for grid entries ``(ncomp, *grid)``."""
        that = sfft.rfftn(entries, axes=self.axes, norm="forward").reshape(self.nc, self.rsize)
        tk = that[:, self.flat]
        div = np.einsum("ick,ck->ik", self.D, tk)
        # div amplitudes are i * div; coefficients are (sqrt2 Re, -sqrt2 Im) of that
        out = np.empty(self.config.coeff_shape)
        out[..., 0] = -SQRT2 * div.imag
        out[..., 1] = -SQRT2 * div.real
        return out
