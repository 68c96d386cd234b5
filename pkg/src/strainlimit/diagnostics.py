"""Monitored quantities: energies, dissipation, a priori norms, exponents.

Every spatial integral is the rectangle rule on the periodic grid, which is
spectrally accurate for smooth periodic integrands and makes the semi-discrete
energy identities hold exactly (see :func:`strainlimit.spectral.divergence_sym`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from .constitutive import ConstitutiveParams, apply_Fn, stored_energy_density
from .spectral import SpectralConfig, SpectralField, grid_gradient, sym_gradient_values
from .tensors import SymTensor, _weights, frobenius_entries

CSV_COLUMNS = (
    "t", "kinetic", "stored", "total", "dissip_cum", "max_strain", "strain_rate_max",
    "T_L1", "T_L1me", "T_L1pd", "grad_diss_cum", "accel_L2",
)

# quantities kept alongside each row but not written to the CSV
EXTRA_KEYS = (
    "u_L2", "grad_u_sq", "grad_v_sq", "T_L1Q", "rate_Lnp1", "reg_L2Q", "balance_max",
)


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    kinetic: float
    stored: float
    total: float
    dissip_cum: float
    max_strain: float
    strain_rate_max: float
    T_L1: float
    T_L1me: float
    T_L1pd: float
    grad_diss_cum: float
    accel_L2: float
    extras: Mapping[str, float] = field(default_factory=dict, compare=False)

    def row(self) -> tuple[float, ...]:
        return tuple(getattr(self, k) for k in CSV_COLUMNS)

    def as_dict(self) -> dict[str, float]:
        out = {k: getattr(self, k) for k in CSV_COLUMNS}
        out.update(self.extras)
        return out

    def check(self) -> None:
        """Raise if the record violates its invariants."""
        bad = [k for k, v in zip(CSV_COLUMNS, self.row()) if not math.isfinite(v)]
        if bad:
            raise ValueError(f"non-finite diagnostics at t={self.t}: {', '.join(bad)}")
        neg = [k for k in ("kinetic", "stored", "dissip_cum") if getattr(self, k) < 0]
        if neg:
            raise ValueError(f"negative diagnostics at t={self.t}: {', '.join(neg)}")


def stored_energy(config: SpectralConfig, u_coeffs: np.ndarray, params: ConstitutiveParams) -> float:
    """``int f_alpha^*(eps(u))`` by grid quadrature; ``inf`` if any node saturates."""
    eps = sym_gradient_values(config, u_coeffs)
    dens = stored_energy_density(SymTensor(config.dim, eps), params)
    return float(np.mean(dens))


def energy(state) -> tuple[float, float, float]:
    """``(kinetic, stored, total)`` of a solver state."""
    kinetic = 0.5 * float(np.sum(state.v.coeffs**2))
    stored = stored_energy(state.spec, state.u.coeffs, state.params)
    return kinetic, stored, kinetic + stored


def dissipation_increment(T_field: SymTensor, params: ConstitutiveParams, quad=None) -> float:
    """``int T : F_n(T)`` over the box.

    ``quad`` optionally gives quadrature weights over the batch axes; the
    default is the rectangle rule on a unit-measure grid.
    """
    dens = np.sum(_weights(T_field.dim).reshape((-1,) + (1,) * (T_field.entries.ndim - 1))
                  * T_field.entries * apply_Fn(T_field, params).entries, axis=0)
    dens = np.maximum(dens, 0.0)
    if quad is None:
        return float(np.mean(dens))
    return float(np.sum(np.asarray(quad) * dens))


def lebesgue_norm(T_field: SymTensor, r: float) -> float:
    """``(int |T|^r)^(1/r)`` on the unit box."""
    if not r >= 1:
        raise ValueError(f"r must be >= 1, got {r}")
    s = frobenius_entries(T_field.dim, T_field.entries)
    return _lr(s, r)


def _lr(s: np.ndarray, r: float) -> float:
    smax = float(np.max(s)) if s.size else 0.0
    if smax == 0.0:
        return 0.0
    # scale out the max so huge stresses do not overflow
    return smax * float(np.mean((s / smax) ** r)) ** (1.0 / r)


def large_stress_mass(s: np.ndarray, a: float) -> float:
    """``int |T|^(1-a) [|T| >= 1]``."""
    big = s >= 1.0
    if not np.any(big):
        return 0.0
    return float(np.sum(s[big] ** (1.0 - a)) / s.size)


def grad_dissipation_density(config: SpectralConfig, T_entries: np.ndarray, s: np.ndarray,
                             a: float) -> float:
    """``int |grad T|^2 / (1 + |T|)^(1+a)`` with a spectral gradient of the grid stress."""
    g = grid_gradient(config, T_entries)            # (dim, ncomp, *grid)
    w = _weights(config.dim).reshape((1, -1) + (1,) * config.dim)
    num = np.sum(w * g * g, axis=(0, 1))
    return float(np.mean(num / (1.0 + s) ** (1.0 + a)))


def kinetic_energy(v: SpectralField) -> float:
    return 0.5 * float(np.sum(v.coeffs**2))


# ---------------------------------------------------------------------------
# a priori report

APRIORI_KEYS = (
    "sup_u_L2", "sup_v_L2", "rate_Lnp1", "T_L1Q", "sup_T_L1me",
    "sup_grad_u_sq", "sup_grad_v_sq", "grad_diss_cum", "sup_accel_sq",
)


def apriori_report(trajectory: Sequence[DiagnosticsRecord], params: ConstitutiveParams) -> dict[str, float]:
    """Sup-in-time and integral-in-time quantities controlled by the a priori bounds.

    Sup quantities are maxima over the emitted rows; integral quantities are
    the running values at the last row.
    """
    recs = list(trajectory)
    if not recs:
        raise ValueError("empty diagnostics table")
    for r in recs:
        missing = [k for k in ("u_L2", "grad_u_sq", "grad_v_sq", "T_L1Q", "rate_Lnp1") if k not in r.extras]
        if missing:
            raise ValueError(f"row at t={r.t} lacks {', '.join(missing)}")
    last = recs[-1]
    return {
        "sup_u_L2": max(r.extras["u_L2"] for r in recs),
        "sup_v_L2": max(math.sqrt(2.0 * r.kinetic) for r in recs),
        "rate_Lnp1": last.extras["rate_Lnp1"],
        "T_L1Q": last.extras["T_L1Q"],
        "sup_T_L1me": max(r.T_L1me for r in recs),
        "sup_grad_u_sq": max(r.extras["grad_u_sq"] for r in recs),
        "sup_grad_v_sq": max(r.extras["grad_v_sq"] for r in recs),
        "grad_diss_cum": last.grad_diss_cum,
        "sup_accel_sq": max(r.accel_L2**2 for r in recs),
    }


def spread(values: Iterable[float]) -> float:
    """``max/min`` of nonnegative values; 1 when all vanish, inf when only some do."""
    v = np.asarray(list(values), dtype=np.float64)
    hi, lo = float(np.max(v)), float(np.min(v))
    if hi == 0.0:
        return 1.0
    if lo <= 0.0:
        return math.inf
    return hi / lo


# ---------------------------------------------------------------------------
# integrability exponent

BOUNDARY_A = Fraction(2, 7)


def _exact(a) -> Fraction:
    if isinstance(a, Fraction):
        return a
    if isinstance(a, int):
        return Fraction(a)
    if isinstance(a, str):
        return Fraction(a)
    # floats are read as the nearest fraction with a modest denominator so that
    # 2/7 typed as a float lands on the boundary rather than just below it
    return Fraction(float(a)).limit_denominator(10**9)


@dataclass(frozen=True)
class ExponentReport:
    a: Fraction
    dim: int
    valid: bool
    q: Fraction
    q_prime: Fraction
    p: Fraction
    delta: Fraction
    lhs: Fraction       # 1 + 2a(q-1)
    rhs: Fraction       # p(1-a)/2

    @property
    def constraints_hold(self) -> bool:
        return self.lhs <= self.rhs and 1 / self.q <= 2 / self.p


def theorem3_exponent(a, dim: int) -> ExponentReport:
    """Exponents behind the ``T in L^(1+delta)`` integrability result.

    ``q = 3`` (its cap), ``p = 2q`` and ``delta = a / q'``.  The result is
    valid only for ``dim == 3`` and ``0 < a < 2/7``; the exponents are
    reported either way.
    """
    ax = _exact(a)
    if ax <= 0:
        raise ValueError(f"a must be positive, got {a}")
    q = Fraction(3)
    qp = q / (q - 1)
    p = 2 * q
    rep = ExponentReport(
        a=ax, dim=int(dim), valid=(dim == 3 and ax < BOUNDARY_A), q=q, q_prime=qp, p=p,
        delta=ax / qp, lhs=1 + 2 * ax * (q - 1), rhs=p * (1 - ax) / 2,
    )
    if rep.valid and not rep.constraints_hold:
        raise AssertionError(f"exponent constraints fail for valid a={ax}")
    return rep


def pd_exponent(a: float) -> float:
    """``1 + delta`` with ``delta = 2a/3`` used for the ``T_L1pd`` column."""
    return 1.0 + 2.0 * a / 3.0
