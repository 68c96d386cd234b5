"""Strain-limiting constitutive maps and their inverses.

All maps here are isotropic and radial: ``F(T) = phi(|T|) T`` for a scalar
profile ``phi``.  Everything is vectorised over the batch axes of
:class:`~strainlimit.tensors.SymTensor`, so the same calls serve single tensors
and whole grid fields.

Notation
--------
``a``      growth exponent of ``F(T) = T / (1 + |T|^a)^(1/a)``
``alpha``  relaxation coefficient in ``eps(u_t + alpha u) = F(T)``
``n``      regularisation index; ``F_n(T) = F(T) + T / (n (1 + |T|^(1-1/n)))``.
           ``n = math.inf`` selects the unregularised ``F``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from . import _kernels as _k
from .tensors import SymTensor, frobenius_entries, from_mandel, ncomp, to_mandel


class SaturationError(ValueError):
    """Raised when a strain lies on or beyond the strain-limit sphere."""


class InversionError(ArithmeticError):
    """Raised when the scalar root-find for ``F_n^{-1}`` cannot proceed."""


@dataclass(frozen=True)
class ConstitutiveParams:
    a: float
    alpha: float
    n: float = math.inf

    def __post_init__(self):
        if not (self.a > 0 and math.isfinite(self.a)):
            raise ValueError(f"a must be positive and finite, got {self.a}")
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ValueError(f"alpha must be positive and finite, got {self.alpha}")
        n = self.n
        if n != math.inf:
            if n < 1 or int(n) != n:
                raise ValueError(f"n must be a positive integer or inf, got {n}")
            object.__setattr__(self, "n", int(n))

    @property
    def regularised(self) -> bool:
        return self.n != math.inf

    @property
    def reg_exponent(self) -> float:
        """``1 - 1/n``, the power of ``|T|`` in the regulariser denominator."""
        return 1.0 - 1.0 / self.n

    def with_n(self, n) -> "ConstitutiveParams":
        return ConstitutiveParams(self.a, self.alpha, n)


# ---------------------------------------------------------------------------
# scalar radial profiles, s = |T| >= 0, numpy arrays in and out

def _pow(s: np.ndarray, p: float) -> np.ndarray:
    """``s**p`` through exp/log, with ``0**0 = 1`` and ``0**p = 0`` for p > 0."""
    s = np.asarray(s, dtype=np.float64)
    pos = s > 0
    out = np.zeros_like(s) if p > 0 else np.ones_like(s)
    if np.any(pos):
        with np.errstate(over="ignore"):
            out = np.where(pos, np.exp(p * np.log(np.where(pos, s, 1.0))), out)
    return out


def _arr(s) -> np.ndarray:
    return np.asarray(s, dtype=np.float64)


def phi_F(s, a: float) -> np.ndarray:
    """``(1 + s^a)^(-1/a)``."""
    return _k.phi_F(_arr(s), a)


def profile_f(s, a: float):
    """``f(s) = s (1 + s^a)^(-1/a)``, the radial profile of ``F``; values in [0, 1)."""
    s_arr = _arr(s)
    if np.any(s_arr < 0) or np.any(np.isnan(s_arr)):
        raise ValueError("profile_f requires s >= 0")
    out = _k.profile_f(s_arr, a)
    return float(out) if np.ndim(out) == 0 else out


def dprofile_f(s, a: float) -> np.ndarray:
    """``f'(s) = (1 + s^a)^(-1 - 1/a)``."""
    return _k.dprofile_f(_arr(s), a)


def phi_reg(s, params: ConstitutiveParams) -> np.ndarray:
    """Regulariser profile ``1 / (n (1 + s^(1-1/n)))``; identically zero for n = inf."""
    return _k.phi_reg(_arr(s), _k.n_code(params.n))


def dprofile_reg(s, params: ConstitutiveParams) -> np.ndarray:
    """Derivative of ``s * phi_reg(s)``: ``(1 + s^b / n) / (n (1 + s^b)^2)``, b = 1 - 1/n."""
    return _k.dprofile_reg(_arr(s), _k.n_code(params.n))


def phi_n(s, params: ConstitutiveParams) -> np.ndarray:
    """Full profile: ``F_n(T) = phi_n(|T|) T``."""
    return phi_F(s, params.a) + phi_reg(s, params)


def profile_fn(s, params: ConstitutiveParams) -> np.ndarray:
    """``f_n(s) = s phi_n(s)``."""
    return _k.profile_fn(_arr(s), params.a, _k.n_code(params.n))


def dprofile_fn(s, params: ConstitutiveParams) -> np.ndarray:
    return _k.dprofile_fn(_arr(s), params.a, _k.n_code(params.n))


def phi_n_at_zero(params: ConstitutiveParams) -> float:
    """``phi_n(0)``: 1 + 1/n for n >= 2, 3/2 for n = 1, 1 for n = inf."""
    return float(phi_n(0.0, params))


def linear_compliance(params: ConstitutiveParams) -> float:
    """Small-stress slope: ``F_n(T) ~ c T`` near 0, c = phi_n(0)."""
    return phi_n_at_zero(params)


# ---------------------------------------------------------------------------
# tensor maps

def _radial_map(T: SymTensor, factor: np.ndarray) -> SymTensor:
    return T.scaled(factor)


def apply_F(T: SymTensor, params: ConstitutiveParams) -> SymTensor:
    """``F(T) = T / (1 + |T|^a)^(1/a)``."""
    return _radial_map(T, phi_F(frobenius_entries(T.dim, T.entries), params.a))


def apply_F_alpha(T: SymTensor, params: ConstitutiveParams) -> SymTensor:
    """``F_alpha(T) = F(T) / alpha``, the gradient of the potential ``f_alpha``."""
    return apply_F(T, params).scaled(1.0 / params.alpha)


def apply_Fn(T: SymTensor, params: ConstitutiveParams) -> SymTensor:
    """Regularised map ``F_n(T) = F(T) + T / (n (1 + |T|^(1-1/n)))``.

    With ``n = inf`` this is ``F`` itself.
    """
    return _radial_map(T, phi_n(frobenius_entries(T.dim, T.entries), params))


def regulariser_term(T: SymTensor, params: ConstitutiveParams) -> SymTensor:
    """The correction ``F_n(T) - F(T)``."""
    return _radial_map(T, phi_reg(frobenius_entries(T.dim, T.entries), params))


def root_table(params: ConstitutiveParams):
    """Cached ``(ly0, h, zs, dz)`` predictor table of the radial inverse."""
    return _k.root_table(float(params.a), _k.n_code(params.n), phi_n_at_zero(params))


def solve_radial(y, params: ConstitutiveParams) -> np.ndarray:
    """Solve ``f_n(s) = y`` for ``s >= 0`` elementwise (finite n).

    Newton in ``z = log s`` on ``log f_n(e^z) = log y``, started from a cached
    cubic-Hermite table of the inverse.  Outside the table (or if Newton
    stalls) a bracketed solve on ``[y / phi_n(0), y (1 + n (1 + y))]`` takes
    over, the right end grown until it encloses the root.
    """
    if not params.regularised:
        raise ValueError("solve_radial needs finite n; use invert_F for n = inf")
    y = _arr(y)
    if not np.all(np.isfinite(y)):
        raise InversionError("non-finite strain magnitude")
    if np.any(y < 0):
        raise ValueError("negative magnitude")
    flat = np.ascontiguousarray(y).ravel()
    out = np.empty_like(flat)
    bad = _k.solve_many(flat, params.a, _k.n_code(params.n), phi_n_at_zero(params),
                        *root_table(params), out)
    if bad:
        raise InversionError(f"radial root-find failed at {bad} point(s)")
    return out.reshape(y.shape)


def invert_Fn(E: SymTensor, params: ConstitutiveParams) -> SymTensor:
    """The unique ``T`` with ``F_n(T) = E`` (finite n).

    Reduced to the scalar equation ``f_n(|T|) = |E|``; ``T`` is ``E`` rescaled.
    """
    if not np.all(np.isfinite(E.entries)):
        raise InversionError("non-finite strain")
    y = frobenius_entries(E.dim, E.entries)
    s = solve_radial(y, params)
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = np.where(y > 0, s / np.where(y > 0, y, 1.0), 0.0)
    return _radial_map(E, factor)


def _inv_sat_factor(y: np.ndarray, a: float) -> np.ndarray:
    # (1 - y^a)^(-1/a) with 1 - y^a formed as -expm1(a log y)
    with np.errstate(divide="ignore"):
        gap = -np.expm1(a * np.log(np.where(y > 0, y, 1.0)))
    gap = np.where(y > 0, gap, 1.0)
    return np.exp(-np.log(gap) / a)


def invert_F(E: SymTensor, params: ConstitutiveParams) -> SymTensor:
    """``F^{-1}(E) = E / (1 - |E|^a)^(1/a)`` for ``|E| < 1``.

    Raises :class:`SaturationError` if any ``|E| >= 1``; no clamping.
    """
    y = frobenius_entries(E.dim, E.entries)
    if not np.all(np.isfinite(y)):
        raise InversionError("non-finite strain")
    if np.any(y >= 1.0):
        raise SaturationError(f"strain magnitude {float(np.max(y))!r} reaches the limit 1")
    return _radial_map(E, _inv_sat_factor(y, params.a))


def invert_F_alpha(E: SymTensor, params: ConstitutiveParams) -> SymTensor:
    """``F_alpha^{-1}(E) = alpha E / (1 - alpha^a |E|^a)^(1/a)`` for ``|E| < 1/alpha``."""
    try:
        return invert_F(E.scaled(params.alpha), params)
    except SaturationError:
        raise SaturationError(
            f"strain magnitude reaches the limit 1/alpha = {1.0 / params.alpha!r}"
        ) from None


# ---------------------------------------------------------------------------
# Jacobians

@dataclass(frozen=True)
class SymOperator:
    """Linear map on symmetric tensors, stored as a matrix in Mandel coordinates.

    ``matrix`` has shape ``(*batch, ncomp, ncomp)``; the basis is orthonormal
    for the ``:`` product, so symmetry and eigenvalues carry over unchanged.
    """

    dim: int
    matrix: np.ndarray

    def apply(self, U: SymTensor) -> SymTensor:
        vec = to_mandel(U)
        return from_mandel(self.dim, np.einsum("...ij,...j->...i", self.matrix, vec))

    def eigvalsh(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)

    def frobenius(self) -> np.ndarray:
        return np.sqrt(np.sum(self.matrix**2, axis=(-2, -1)))

    def inverse(self) -> "SymOperator":
        return SymOperator(self.dim, np.linalg.inv(self.matrix))


def _radial_jacobian(T: SymTensor, phi: np.ndarray, dradial: np.ndarray) -> SymOperator:
    # D(phi(|T|) T) = phi I + (f'(|T|) - phi) e e^T with e = T/|T|
    vec = to_mandel(T)
    r = np.sqrt(np.sum(vec**2, axis=-1))
    with np.errstate(divide="ignore", invalid="ignore"):
        e = np.where(r[..., None] > 0, vec / np.where(r > 0, r, 1.0)[..., None], 0.0)
    k = ncomp(T.dim)
    eye = np.broadcast_to(np.eye(k), r.shape + (k, k))
    mat = phi[..., None, None] * eye + (dradial - phi)[..., None, None] * (
        e[..., :, None] * e[..., None, :]
    )
    return SymOperator(T.dim, mat)


def jacobian_Fn(T: SymTensor, params: ConstitutiveParams) -> SymOperator:
    """``DF_n(T)`` as a symmetric positive definite operator."""
    r = frobenius_entries(T.dim, T.entries)
    return _radial_jacobian(T, phi_n(r, params), dprofile_fn(r, params))


def jacobian_inverse_Fn(S: SymTensor, params: ConstitutiveParams) -> SymOperator:
    """``D(F_n^{-1})(S) = (DF_n(F_n^{-1}(S)))^{-1}``, in closed form."""
    T = invert_Fn(S, params)
    r = frobenius_entries(T.dim, T.entries)
    return _radial_jacobian(T, 1.0 / phi_n(r, params), 1.0 / dprofile_fn(r, params))


def inverse_stiffness_max(s: np.ndarray, params: ConstitutiveParams) -> np.ndarray:
    """Largest eigenvalue of ``D(F_n^{-1})`` at a stress of magnitude ``s``."""
    return np.maximum(1.0 / phi_n(s, params), 1.0 / dprofile_fn(s, params))


# ---------------------------------------------------------------------------
# radial integrals: potentials, conjugates, h_n

def radial_integral(func, R, epsabs: float = 1e-10, epsrel: float = 1e-12) -> np.ndarray:
    """``int_0^R func(t) dt`` for each entry of ``R`` (vectorised adaptive GK21).

    ``[0, min(R,1)]`` is mapped linearly and ``[1, R]`` logarithmically so that
    large ``R`` does not starve the adaptive scheme near ``t ~ 1``.
    """
    R = np.asarray(R, dtype=np.float64)
    shape = R.shape
    R = R.ravel()
    if np.any(R < 0) or not np.all(np.isfinite(R)):
        raise ValueError("integration bounds must be finite and >= 0")
    out = np.zeros_like(R)
    if R.size == 0:
        return out.reshape(shape)
    r1 = np.minimum(R, 1.0)
    if np.any(r1 > 0):
        val, _ = integrate.quad_vec(lambda u: r1 * func(r1 * u), 0.0, 1.0,
                                    epsabs=epsabs, epsrel=epsrel)
        out += val
    big = R > 1.0
    if np.any(big):
        L = np.log(R[big])
        val, _ = integrate.quad_vec(
            lambda u: L * np.exp(u * L) * func(np.exp(u * L)), 0.0, 1.0,
            epsabs=epsabs, epsrel=epsrel)
        out[big] += val
    return out.reshape(shape)


def radial_fn_integral(s, params: ConstitutiveParams, conjugate: bool = False) -> np.ndarray:
    """``int_0^s f_n(t) dt``, or ``int_0^s t f_n'(t) dt`` when ``conjugate``.

    Fixed-order Gauss-Legendre (relative error near 1e-12), so the value is
    a smooth function of ``s``.
    """
    s = np.asarray(s, dtype=np.float64)
    flat = np.ascontiguousarray(s.ravel())
    if np.any(flat < 0) or not np.all(np.isfinite(flat)):
        raise ValueError("integration bounds must be finite and >= 0")
    out = np.empty_like(flat)
    _k.radial_int_many(flat, float(params.a), _k.n_code(params.n), bool(conjugate),
                       _k.GL_NODES, _k.GL_WEIGHTS, out)
    return out.reshape(s.shape)


def potential_f_alpha(T: SymTensor, params: ConstitutiveParams):
    """``f_alpha(T) = (1/alpha) int_0^|T| f_n(t) dt`` (``f`` itself when n = inf)."""
    r = frobenius_entries(T.dim, T.entries)
    val = radial_fn_integral(r, params) / params.alpha
    return float(val) if val.ndim == 0 else val


def stored_energy_density(E: SymTensor, params: ConstitutiveParams):
    """Convex conjugate ``f_alpha^*(E)`` of the stress potential.

    Evaluated through the Fenchel identity
    ``f*(E) = E : T - f_alpha(T)`` with ``T = F_alpha^{-1}(E)``.  For n = inf the
    conjugate is ``+inf`` on and beyond ``|E| = 1/alpha``.  For finite n the
    potential is built from ``F_n`` and the conjugate is finite everywhere.
    """
    y = frobenius_entries(E.dim, E.entries)
    if params.regularised:
        s = solve_radial(params.alpha * y, params)
        out = radial_fn_integral(s, params, conjugate=True) / params.alpha
    else:
        out = np.full(y.shape, np.inf)
        ok = y < 1.0 / params.alpha
        if np.any(ok):
            ya = y[ok]
            s = ya * params.alpha * _inv_sat_factor(ya * params.alpha, params.a)
            out[ok] = radial_fn_integral(s, params, conjugate=True) / params.alpha
    out = np.maximum(out, 0.0)
    return float(out) if out.ndim == 0 else out


def h_n(s, params: ConstitutiveParams):
    """``h_n(s) = int_0^s f_n'(sqrt t) dt``.

    Along any smooth path ``T(t)``, ``T : d/dt F_n(T) = d/dt h_n(|T|^2) / 2``.
    """
    s_arr = np.asarray(s, dtype=np.float64)
    if np.any(s_arr < 0):
        raise ValueError("h_n requires s >= 0")
    val = radial_integral(lambda t: dprofile_fn(np.sqrt(t), params), s_arr)
    return float(val) if val.ndim == 0 else val


def hn_sandwich_fit(params: ConstitutiveParams, samples: np.ndarray) -> tuple[float, float]:
    """Smallest ``C`` and largest ``c`` making the two-sided h_n bound hold on ``samples``.

    Lower: ``c (s^((1-a)/2) [s>=1] - 1) <= h_n(s)``;
    upper: ``h_n(s) <= s^(1/n) + C (s^((1-a)/2) [s>=1] + 1)``.
    Returns ``(c, C)``; ``c = inf`` means the lower bound holds for every c > 0.
    """
    s = np.asarray(samples, dtype=np.float64)
    h = np.asarray(h_n(s, params))
    g = np.where(s >= 1.0, _pow(s, (1.0 - params.a) / 2.0), 0.0)
    base = s ** (1.0 / params.n) if params.regularised else np.zeros_like(s)
    C = max(float(np.max((h - base) / (g + 1.0))), 0.0)
    lower_arg = g - 1.0
    pos = lower_arg > 0
    c = float(np.min(h[pos] / lower_arg[pos])) if np.any(pos) else math.inf
    return c, C


# ---------------------------------------------------------------------------
# inequality oracles

def lemma1_gap(y, a):
    """Slacks of ``min{1,2^(1/a-1)}(1+y) <= (1+y^a)^(1/a) <= max{1,2^(1/a-1)}(1+y)``.

    Returns ``(lower_slack, upper_slack)``; both are nonnegative when the
    inequality holds.  Evaluated as ``mid * expm1(log-ratio)`` so that the huge
    middle terms of small ``a`` do not produce ``inf - inf``.
    """
    y = np.asarray(y, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    if np.any(y < 0) or np.any(a <= 0):
        raise ValueError("lemma1_gap needs y >= 0 and a > 0")
    log_mid = np.log1p(_pow_arr(y, a)) / a
    log_c = (-1.0 + 1.0 / a) * np.log(2.0)
    log_1y = np.log1p(y)
    with np.errstate(over="ignore", invalid="ignore"):
        mid = np.exp(log_mid)
        lower = -mid * np.expm1(np.minimum(0.0, log_c) + log_1y - log_mid)
        upper = mid * np.expm1(np.maximum(0.0, log_c) + log_1y - log_mid)
    lower = np.where(np.isnan(lower), 0.0, lower)
    upper = np.where(np.isnan(upper), 0.0, upper)
    return lower, upper


def lemma1_scale(y, a):
    """Magnitude ``(1+y^a)^(1/a)`` of the middle term, for relative tolerances."""
    y = np.asarray(y, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    with np.errstate(over="ignore"):
        return np.exp(np.log1p(_pow_arr(y, a)) / a)


def _pow_arr(y: np.ndarray, a: np.ndarray) -> np.ndarray:
    y, a = np.broadcast_arrays(y, a)
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(y > 0, np.exp(a * np.log(np.where(y > 0, y, 1.0))), 0.0)


def lemma2_kappa(a: float) -> float:
    """Monotonicity constant asserted for ``F``: ``min{1, 2^(a - 1/a)}``.

    Sampling puts the best constant below 1 for ``a < 1`` (about 0.0017 at
    a = 0.1 and 0.54 at a = 0.5), so the exponent must be ``a - 1/a`` there.
    """
    return min(1.0, 2.0 ** (a - 1.0 / a))


def lemma2_kappa_specform(a: float) -> float:
    """``min{1, 2^(1/a - a)}``; holds for ``a >= 1`` only."""
    return min(1.0, 2.0 ** (1.0 / a - a))


def lemma2_kappa_maxform(a: float) -> float:
    """``max{1, 2^(1/a - a)}``; fails for every ``a`` away from 1."""
    return max(1.0, 2.0 ** (1.0 / a - a))


def _lemma2_parts(T: SymTensor, S: SymTensor, params: ConstitutiveParams):
    d = T.dim
    diff = T.entries - S.entries
    lhs = np.sum(_w(d, diff.ndim) * diff * (apply_F(T, params).entries - apply_F(S, params).entries), axis=0)
    nT = frobenius_entries(d, T.entries)
    nS = frobenius_entries(d, S.entries)
    scale = frobenius_entries(d, diff) ** 2 / (1.0 + nT + nS) ** (1.0 + params.a)
    return lhs, scale


def _w(dim: int, ndim: int) -> np.ndarray:
    w = np.array([1.0 if i == j else 2.0 for i in range(dim) for j in range(i, dim)])
    return w.reshape((-1,) + (1,) * (ndim - 1))


def lemma2_gap(T: SymTensor, S: SymTensor, params: ConstitutiveParams, kappa: float | None = None):
    """``(T-S):(F(T)-F(S)) - kappa |T-S|^2 / (1+|T|+|S|)^(1+a)``."""
    if kappa is None:
        kappa = lemma2_kappa(params.a)
    lhs, scale = _lemma2_parts(T, S, params)
    out = lhs - kappa * scale
    return float(out) if out.ndim == 0 else out


def lemma2_empirical_kappa(T: SymTensor, S: SymTensor, params: ConstitutiveParams) -> float:
    """Largest kappa consistent with the sampled pairs (pairs with T = S ignored)."""
    lhs, scale = _lemma2_parts(T, S, params)
    lhs, scale = np.atleast_1d(lhs), np.atleast_1d(scale)
    keep = scale > 0
    return float(np.min(lhs[keep] / scale[keep])) if np.any(keep) else math.inf
