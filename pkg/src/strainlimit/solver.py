"""Fourier-Galerkin time integration of the regularised strain-limiting system.

The unknowns are the coefficient arrays of ``u`` and ``v = u_t`` in the
degree-``m`` zero-mean space.  The semi-discrete system is

    u' = v,    v' = P^m div T + P^m f,    T = F_n^{-1}(eps(v + alpha u)),

with ``T`` formed pointwise on the grid.  Time is advanced in macro steps of
the user ``dt`` (``t = step_index * dt`` exactly); each macro step may be cut
into equal substeps by the stability guard or by the retry logic.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import fft as sfft

from . import _kernels as _k
from .constitutive import (
    ConstitutiveParams, InversionError, SaturationError, inverse_stiffness_max, linear_compliance,
    phi_n_at_zero, phi_reg, root_table, solve_radial,
)
from .diagnostics import (
    DiagnosticsRecord, _lr, grad_dissipation_density, large_stress_mass, pd_exponent, stored_energy,
)
from .spectral import (
    SQRT2, TWO_PI, GalerkinTransforms, SpectralConfig, SpectralField, amps_to_coeffs, random_field,
    sym_gradient_values,
)
from .tensors import _weights, ncomp

METHODS = ("rk4", "midpoint")
RK4_B = (1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0)
MIDPOINT_TOL = 1e-12
MIDPOINT_SWEEPS = 50


class StepFailure(RuntimeError):
    """A single step could not be completed; ``suggested_dt`` is a smaller step to try."""

    def __init__(self, message: str, suggested_dt: float | None = None):
        super().__init__(message)
        self.suggested_dt = suggested_dt


class SolverAbort(RuntimeError):
    """Retries exhausted."""


# ---------------------------------------------------------------------------
# state


@dataclass(frozen=True)
class Accumulators:
    """Running time integrals carried with the state.

    ``dissip`` uses the integrator's own stage quadrature; the others use the
    trapezoid rule at macro-step endpoints.  ``balance_max`` is the largest
    per-substep residual of the discrete energy balance seen so far.
    """

    dissip: float = 0.0
    grad_diss: float = 0.0
    T_L1Q: float = 0.0
    reg_L2Q_sq: float = 0.0
    rate_pow: float = 0.0
    balance_max: float = 0.0

    def header(self) -> dict[str, float]:
        return {f"acc_{k}": getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_header(cls, hdr: dict[str, str]) -> "Accumulators":
        return cls(**{k: float(hdr[f"acc_{k}"]) for k in cls.__dataclass_fields__ if f"acc_{k}" in hdr})


@dataclass(frozen=True, eq=False)
class SolverState:
    t: float
    u: SpectralField
    v: SpectralField
    step_index: int
    params: ConstitutiveParams
    spec: SpectralConfig
    acc: Accumulators = field(default_factory=Accumulators)

    def __post_init__(self):
        if self.u.config != self.spec or self.v.config != self.spec:
            raise ValueError("u and v must live in the state's spectral space")
        if not (self.t >= 0.0) or not math.isfinite(self.t):
            raise ValueError(f"t must be finite and >= 0, got {self.t}")
        if self.step_index < 0:
            raise ValueError("step_index must be >= 0")

    @classmethod
    def initial(cls, initial: "InitialData", params: ConstitutiveParams) -> "SolverState":
        return cls(0.0, initial.u0, initial.v0, 0, params, initial.u0.config)


def _bits_equal(a: SolverState, b: SolverState) -> bool:
    return (a.t == b.t and a.step_index == b.step_index and a.spec == b.spec
            and a.params == b.params and a.acc == b.acc
            and a.u.coeffs.tobytes() == b.u.coeffs.tobytes()
            and a.v.coeffs.tobytes() == b.v.coeffs.tobytes())


states_bitwise_equal = _bits_equal


# ---------------------------------------------------------------------------
# forcing

FORCE_KINDS = ("zero", "single_mode", "manufactured", "tabulated")


@dataclass(frozen=True, eq=False)
class ForceSpec:
    """Body force ``f(t, x)``; always zero-mean because ``k = 0`` is not stored.

    kinds
      zero          f = 0
      single_mode   f = cos(omega t) sin(2 pi k.x) amplitude   (amplitude a d-vector)
      manufactured  the force that makes ``A sin(2 pi x_1) cos(omega t) e_2`` exact;
                    the stress divergence is formed from samples on ``ref_side``
                    points along ``x_1`` (0 means the solver's own grid)
      tabulated     coefficient frames ``table[j]`` at ``times[j]``, linear in t
    """

    kind: str = "zero"
    mode: tuple[int, ...] = ()
    amplitude: tuple[float, ...] = ()
    omega: float = 0.0
    A: float = 0.0
    ref_side: int = 0
    times: np.ndarray | None = field(default=None, repr=False)
    table: np.ndarray | None = field(default=None, repr=False)
    table_m: int = 0

    def __post_init__(self):
        if self.kind not in FORCE_KINDS:
            raise ValueError(f"force kind must be one of {FORCE_KINDS}, got {self.kind!r}")
        if self.kind == "tabulated":
            t = np.asarray(self.times, dtype=np.float64)
            tab = np.asarray(self.table, dtype=np.float64)
            if t.ndim != 1 or t.size < 1 or tab.shape[0] != t.size or tab.ndim != 4:
                raise ValueError("tabulated force needs times (nt,) and table (nt, d, K, 2)")
            if np.any(np.diff(t) <= 0):
                raise ValueError("tabulated force times must be strictly increasing")
            for arr in (t, tab):
                arr.setflags(write=False)
            object.__setattr__(self, "times", t)
            object.__setattr__(self, "table", tab)

    @classmethod
    def zero(cls) -> "ForceSpec":
        return cls("zero")

    @classmethod
    def single_mode(cls, k: Sequence[int], amplitude: Sequence[float], omega: float = 0.0) -> "ForceSpec":
        return cls("single_mode", mode=tuple(int(c) for c in k),
                   amplitude=tuple(float(c) for c in amplitude), omega=float(omega))

    @classmethod
    def manufactured(cls, A: float, omega: float, ref_side: int = 0) -> "ForceSpec":
        return cls("manufactured", A=float(A), omega=float(omega), ref_side=int(ref_side))

    @classmethod
    def tabulated(cls, times: Sequence[float], frames: Sequence[SpectralField]) -> "ForceSpec":
        frames = list(frames)
        if not frames:
            raise ValueError("tabulated force needs at least one frame")
        cfg = frames[0].config
        if any(f.config.dim != cfg.dim or f.config.m != cfg.m for f in frames):
            raise ValueError("all frames must share dim and m")
        return cls("tabulated", times=np.asarray(times, dtype=np.float64),
                   table=np.stack([f.coeffs for f in frames]), table_m=cfg.m)

    @classmethod
    def from_npz(cls, path: str | os.PathLike) -> "ForceSpec":
        """Load ``t`` (nt,), ``coeffs`` (nt, d, K, 2) and ``m`` from an ``.npz`` file."""
        with np.load(path) as z:
            return cls("tabulated", times=z["t"], table=z["coeffs"], table_m=int(z["m"]))

    def coeffs(self, t: float, config: SpectralConfig, params: ConstitutiveParams) -> np.ndarray | None:
        """Coefficients of ``P^m f(t)``, or ``None`` for the zero force."""
        if self.kind == "zero":
            return None
        if self.kind == "single_mode":
            if len(self.amplitude) != config.dim:
                raise ValueError(f"amplitude needs {config.dim} entries")
            j, sign = config.mode_index(self.mode)
            out = np.zeros(config.coeff_shape)
            out[:, j, 1] = sign * np.asarray(self.amplitude) * (math.cos(self.omega * t) / SQRT2)
            return out
        if self.kind == "manufactured":
            return manufactured_force(config, params, self.A, self.omega, t, self.ref_side)
        return self._tabulated(t, config)

    def _tabulated(self, t: float, config: SpectralConfig) -> np.ndarray:
        times, tab = self.times, self.table
        if tab.shape[1] != config.dim:
            raise ValueError("tabulated force dimension does not match the solver")
        if not (times[0] - 1e-12 <= t <= times[-1] + 1e-12):
            raise ValueError(f"t={t} outside the tabulated range [{times[0]}, {times[-1]}]")
        j = int(np.clip(np.searchsorted(times, t, side="right") - 1, 0, times.size - 1))
        if j == times.size - 1:
            frame = tab[j]
        else:
            w = (t - times[j]) / (times[j + 1] - times[j])
            frame = (1.0 - w) * tab[j] + w * tab[j + 1]
        if self.table_m == config.m:
            return np.array(frame)
        src = SpectralConfig(config.dim, self.table_m)
        return SpectralField(src, frame).resample(config).coeffs.copy()


def manufactured_strain_peak(A: float, omega: float, alpha: float) -> float:
    """``max |eps(u*_t + alpha u*)|`` over space and time for the manufactured solution."""
    return SQRT2 * math.pi * abs(A) * math.hypot(alpha, omega)


def manufactured_fields(config: SpectralConfig, A: float, omega: float, t: float) -> tuple[SpectralField, SpectralField]:
    """``(u*, u*_t)`` at time ``t`` for ``u* = A sin(2 pi x_1) cos(omega t) e_2``."""
    if config.dim < 2:
        raise ValueError("the manufactured solution needs dim >= 2")
    k = (1,) + (0,) * (config.dim - 1)
    u = SpectralField.single_mode(config, k, 1, A * math.cos(omega * t))
    v = SpectralField.single_mode(config, k, 1, -A * omega * math.sin(omega * t))
    return u, v


def manufactured_force(config: SpectralConfig, params: ConstitutiveParams, A: float, omega: float,
                       t: float, ref_side: int = 0) -> np.ndarray:
    """Coefficients of ``u*_tt - P^m div T*`` with ``T* = F_n^{-1}(eps(u*_t + alpha u*))``.

    All fields depend on ``x_1`` only and ``T*`` has a single independent
    entry ``T_12``; its divergence ``d_1 T_12 e_2`` is formed by a 1-D FFT of
    ``ref_side`` samples.
    """
    if config.dim < 2:
        raise ValueError("the manufactured solution needs dim >= 2")
    N = int(ref_side) or config.grid_shape[0]
    if N < 2 * (config.m + 1):
        raise ValueError(f"reference side {N} too small for m={config.m}")
    g = params.alpha * math.cos(omega * t) - omega * math.sin(omega * t)
    x = np.arange(N) / N
    e12 = math.pi * A * g * np.cos(TWO_PI * x)
    y = SQRT2 * np.abs(e12)
    s = solve_radial(y, params)
    tau = np.divide(s * e12, y, out=np.zeros_like(e12), where=y > 0)
    that = sfft.rfft(tau, norm="forward")
    out = np.zeros(config.coeff_shape)
    for j in range(1, config.m + 1):
        idx, _ = config.mode_index((j,) + (0,) * (config.dim - 1))
        out[1, idx] = amps_to_coeffs(np.array([1j * TWO_PI * j * that[j]]))[0]
    out = -out
    k1, _ = config.mode_index((1,) + (0,) * (config.dim - 1))
    out[1, k1, 1] += -A * omega**2 * math.cos(omega * t) / SQRT2
    return out


# ---------------------------------------------------------------------------
# initial data


@dataclass(frozen=True, eq=False)
class InitialData:
    """``u0``, ``v0`` and the measured ``C* = max |eps(v0 + alpha u0)|``.

    ``rescale`` is the factor applied to both fields (1 when none was needed);
    ``strain0`` is ``max |eps(u0)|`` on the same oversampled grid.
    """

    u0: SpectralField
    v0: SpectralField
    C_star: float
    rescale: float = 1.0
    strain0: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (0.0 <= self.C_star < 1.0):
            raise ValueError(f"C* must lie in [0, 1), got {self.C_star}")


def oversampled(config: SpectralConfig) -> SpectralConfig:
    return SpectralConfig(config.dim, config.m, tuple(2 * k for k in config.grid_shape))


def max_sym_gradient(F: SpectralField, config: SpectralConfig | None = None) -> float:
    """``max |eps(F)|`` on the grid of ``config`` (default: F's own grid, oversampled 2x)."""
    cfg = config or oversampled(F.config)
    field_ = F.resample(cfg) if cfg != F.config else F
    eps = sym_gradient_values(cfg, field_.coeffs)
    w = _weights(cfg.dim).reshape((-1,) + (1,) * cfg.dim)
    return float(np.sqrt(np.max(np.sum(w * eps * eps, axis=0))))


def prepare_initial_data(spec_u0: SpectralField, spec_v0: SpectralField, params: ConstitutiveParams,
                         config: SpectralConfig, safety: float = 0.95) -> InitialData:
    """Project onto the solver space and enforce ``C* < 1``.

    ``C*`` is measured on a grid twice as fine as the solver grid.  When it is
    at least 1 both fields are scaled by ``safety / C*``.
    """
    u0 = spec_u0.resample(config) if spec_u0.config != config else spec_u0
    v0 = spec_v0.resample(config) if spec_v0.config != config else spec_v0
    over = oversampled(config)
    w = v0 + u0.scaled(params.alpha)
    c_raw = max_sym_gradient(w, over)
    factor = 1.0
    if c_raw >= 1.0:
        factor = safety / c_raw
        u0, v0 = u0.scaled(factor), v0.scaled(factor)
        w = v0 + u0.scaled(params.alpha)
    c_star = max_sym_gradient(w, over)
    return InitialData(u0, v0, c_star, factor, max_sym_gradient(u0, over),
                       {"C_star_raw": c_raw, "rescaled": factor != 1.0})


def random_initial_fields(config: SpectralConfig, params: ConstitutiveParams, rng: np.random.Generator,
                          target: float = 0.5, decay: float = 3.0) -> tuple[SpectralField, SpectralField]:
    """Seeded ``(u0, v0)`` with ``max |eps(v0 + alpha u0)| <= target``.

    Coefficients are Gaussian damped by ``|k|^-decay``.  ``alpha u0`` and
    ``v0`` are each scaled to a peak strain of ``target / 2``; a common
    factor then restores the bound should their sum exceed it.
    """
    if not 0.0 <= target < 1.0:
        raise ValueError("target must lie in [0, 1)")
    u = random_field(config, rng, decay)
    v = random_field(config, rng, decay)
    if target == 0.0:
        return SpectralField.zeros(config), SpectralField.zeros(config)
    over = oversampled(config)
    u = u.scaled(0.5 * target / (params.alpha * max_sym_gradient(u, over)))
    v = v.scaled(0.5 * target / max_sym_gradient(v, over))
    c = max_sym_gradient(v + u.scaled(params.alpha), over)
    lam = min(1.0, target / c)
    return u.scaled(lam), v.scaled(lam)


# ---------------------------------------------------------------------------
# right-hand side


@dataclass(frozen=True)
class _Eval:
    t: float
    acc: np.ndarray        # coefficients of v'
    force: np.ndarray | None
    y: np.ndarray          # |eps(v + alpha u)| at the nodes
    T: np.ndarray          # (ncomp, npts)
    s: np.ndarray          # |T|

    @property
    def power(self) -> float:
        """``int T : F_n(T) = int |T| |eps(v + alpha u)|``."""
        return float(np.mean(self.s * self.y))


class _Workspace:
    """Per-run constants, transform tables and scratch buffers."""

    def __init__(self, spec: SpectralConfig, params: ConstitutiveParams, force: ForceSpec):
        if not params.regularised:
            raise ValueError("the solver steps the regularised system only (finite n)")
        self.spec, self.params, self.force = spec, params, force
        self.nc = ncomp(spec.dim)
        self.w = np.ascontiguousarray(_weights(spec.dim))
        self.ncode = _k.n_code(params.n)
        self.phi0 = phi_n_at_zero(params)
        self.npts = spec.n_points
        self.s = np.zeros(self.npts)
        self.T = np.empty((self.nc, self.npts))
        self.wv = spec.wavevectors
        self.k2 = np.sum(self.wv**2, axis=0)
        self.table = root_table(params)
        self.tr = GalerkinTransforms(spec)

    def eval(self, u: np.ndarray, v: np.ndarray, t: float) -> _Eval:
        spec, p = self.spec, self.params
        E = self.tr.sym_gradient(v + p.alpha * u).reshape(self.nc, self.npts)
        bad = _k.invert_field(E, self.w, p.a, self.ncode, self.phi0, *self.table, self.T, self.s)
        if bad:
            raise InversionError(f"constitutive inversion failed at {bad} node(s) at t={t}")
        acc = self.tr.divergence(self.T.reshape((self.nc,) + spec.grid_shape))
        f = self.force.coeffs(t, spec, p)
        if f is not None:
            acc = acc + f
        y = np.sqrt(np.einsum("c,cp->p", self.w, E * E))
        return _Eval(t, acc, f, y, self.T.copy(), self.s.copy())

    def precondition(self, R: np.ndarray, c: float) -> np.ndarray:
        """``(I + c L)^{-1} R`` with ``L`` the symbol of ``-P div eps`` (Sherman-Morrison per mode)."""
        beta = 0.5 * c
        gamma = 1.0 + beta * self.k2
        wr = np.einsum("ik,ikc->kc", self.wv, R)
        corr = (beta / (gamma + beta * self.k2))[:, None] * wr
        return (R - self.wv[:, :, None] * corr[None]) / gamma[None, :, None]

    def integrands(self, ev: _Eval) -> tuple[float, float, float, float]:
        """Trapezoid integrands: grad dissipation, ``|T|_1``, regulariser ``L2^2``, ``|E|^(n+1)``."""
        p = self.params
        T = ev.T.reshape((self.nc,) + self.spec.grid_shape)
        g = grad_dissipation_density(self.spec, T, ev.s.reshape(self.spec.grid_shape), p.a)
        reg = ev.s * phi_reg(ev.s, p)
        return (g, float(np.mean(ev.s)), float(np.mean(reg * reg)),
                float(np.mean(ev.y ** (p.n + 1.0))))


def galerkin_rhs(state: SolverState, force: ForceSpec) -> SpectralField:
    """``v' = P^m div F_n^{-1}(eps(v + alpha u)) + P^m f(t)``."""
    ws = _Workspace(state.spec, state.params, force)
    ev = ws.eval(state.u.coeffs, state.v.coeffs, state.t)
    return SpectralField(state.spec, ev.acc)


# ---------------------------------------------------------------------------
# steppers


def _phi(u: np.ndarray, v: np.ndarray, alpha: float) -> float:
    return 0.5 * float(np.sum(v * v)) + alpha * float(np.sum(v * u))


def _stage_flux(ev: _Eval, u: np.ndarray, v: np.ndarray, alpha: float) -> float:
    # d/dt (|v|^2/2 + alpha <v,u>) = -D + alpha |v|^2 + <f, v + alpha u>
    flux = -ev.power + alpha * float(np.sum(v * v))
    if ev.force is not None:
        flux += float(np.sum(ev.force * (v + alpha * u)))
    return flux


@dataclass(frozen=True)
class _SubstepStats:
    dissip: float
    balance: float


def _rk4(ws: _Workspace, u, v, t, h, ev1):
    al = ws.params.alpha
    a1 = ev1.acc
    u2, v2 = u + 0.5 * h * v, v + 0.5 * h * a1
    ev2 = ws.eval(u2, v2, t + 0.5 * h)
    u3, v3 = u + 0.5 * h * v2, v + 0.5 * h * ev2.acc
    ev3 = ws.eval(u3, v3, t + 0.5 * h)
    u4, v4 = u + h * v3, v + h * ev3.acc
    ev4 = ws.eval(u4, v4, t + h)
    un = u + (h / 6.0) * (v + 2.0 * v2 + 2.0 * v3 + v4)
    vn = v + (h / 6.0) * (a1 + 2.0 * ev2.acc + 2.0 * ev3.acc + ev4.acc)
    stages = ((ev1, u, v), (ev2, u2, v2), (ev3, u3, v3), (ev4, u4, v4))
    dissip = h * sum(b * ev.power for b, (ev, _, _) in zip(RK4_B, stages))
    flux = h * sum(b * _stage_flux(ev, uu, vv, al) for b, (ev, uu, vv) in zip(RK4_B, stages))
    balance = _phi(un, vn, al) - _phi(u, v, al) - flux
    return un, vn, _SubstepStats(dissip, balance)


def _midpoint(ws: _Workspace, u, v, t, h, ev1):
    p = ws.params
    al = p.alpha
    c = 0.5 * h * linear_compliance(p) * (1.0 + 0.5 * al * h)
    vb = v + 0.5 * h * ev1.acc
    tm = t + 0.5 * h
    for _ in range(MIDPOINT_SWEEPS):
        ub = u + 0.5 * h * vb
        ev = ws.eval(ub, vb, tm)
        R = vb - v - 0.5 * h * ev.acc
        dv = ws.precondition(R, c)
        vb = vb - dv
        ndv = float(np.sqrt(np.sum(dv * dv)))
        if ndv == 0.0 or ndv <= MIDPOINT_TOL * float(np.sqrt(np.sum(vb * vb))):
            break
        if not math.isfinite(ndv):
            raise StepFailure(f"midpoint iteration diverged at t={t}", 0.5 * h)
    else:
        raise StepFailure(f"midpoint iteration did not converge in {MIDPOINT_SWEEPS} sweeps at t={t}", 0.5 * h)
    ub = u + 0.5 * h * vb
    un, vn = u + h * vb, 2.0 * vb - v
    dissip = h * ev.power
    balance = _phi(un, vn, al) - _phi(u, v, al) - h * _stage_flux(ev, ub, vb, al)
    return un, vn, _SubstepStats(dissip, balance)


_STEPPERS = {"rk4": _rk4, "midpoint": _midpoint}


def step(state: SolverState, dt: float, force: ForceSpec, method: str = "rk4") -> SolverState:
    """One step of size ``dt`` (no guard, no retry); accumulators other than
    ``dissip`` and ``balance_max`` are left untouched."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if method not in _STEPPERS:
        raise ValueError(f"method must be one of {METHODS}, got {method!r}")
    ws = _Workspace(state.spec, state.params, force)
    ev = ws.eval(state.u.coeffs, state.v.coeffs, state.t)
    un, vn, st = _STEPPERS[method](ws, state.u.coeffs, state.v.coeffs, state.t, dt, ev)
    _check_finite(un, vn, state.t)
    acc = replace(state.acc, dissip=state.acc.dissip + st.dissip,
                  balance_max=max(state.acc.balance_max, abs(st.balance)))
    return SolverState(state.t + dt, SpectralField(state.spec, un), SpectralField(state.spec, vn),
                       state.step_index + 1, state.params, state.spec, acc)


def _check_finite(u, v, t):
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
        raise StepFailure(f"non-finite state after step from t={t}")


def guard_dt(kappa_max: float, m: int) -> float:
    """Largest explicit substep allowed by ``h <= 0.5 / (kappa_max (2 pi m)^2)``."""
    return 0.5 / (kappa_max * (TWO_PI * m) ** 2)


# ---------------------------------------------------------------------------
# run


@dataclass(frozen=True)
class SolverConfig:
    spec: SpectralConfig
    params: ConstitutiveParams
    method: str = "rk4"
    cadence_steps: int = 10
    checkpoint_every: int = 0
    checkpoint_dir: str | None = None
    guard: bool = True
    max_halvings: int = 10
    keep_fields: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.cadence_steps < 1:
            raise ValueError("cadence_steps must be >= 1")
        if self.checkpoint_every < 0:
            raise ValueError("checkpoint_every must be >= 0")
        if self.checkpoint_every and not self.checkpoint_dir:
            raise ValueError("checkpoint_every needs a checkpoint_dir")


@dataclass
class RunResult:
    state: SolverState
    records: list[DiagnosticsRecord]
    fields: list[tuple[float, np.ndarray]] = field(default_factory=list)
    substeps: int = 0
    retries: int = 0
    checkpoints: list[str] = field(default_factory=list)


def count_steps(T_final: float, dt: float) -> int:
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if T_final < 0:
        raise ValueError(f"T_final must be >= 0, got {T_final}")
    N = int(round(T_final / dt))
    if abs(N * dt - T_final) > 1e-9 * max(1.0, T_final):
        raise ValueError(f"dt={dt} does not divide T_final={T_final}")
    return N


def make_record(ws: _Workspace, state: SolverState, ev: _Eval) -> DiagnosticsRecord:
    p, spec = ws.params, ws.spec
    u, v = state.u.coeffs, state.v.coeffs
    kinetic = 0.5 * float(np.sum(v * v))
    stored = stored_energy(spec, u, p)
    eps_u = sym_gradient_values(spec, u).reshape(ws.nc, ws.npts)
    max_strain = float(np.sqrt(np.max(np.einsum("c,cp->p", ws.w, eps_u * eps_u))))
    acc = state.acc
    k2 = ws.k2[None, :, None]
    extras = {
        "u_L2": float(np.sqrt(np.sum(u * u))),
        "grad_u_sq": float(np.sum(k2 * u * u)),
        "grad_v_sq": float(np.sum(k2 * v * v)),
        "T_L1Q": acc.T_L1Q,
        "rate_Lnp1": acc.rate_pow ** (1.0 / (p.n + 1.0)) if acc.rate_pow > 0 else 0.0,
        "reg_L2Q": math.sqrt(acc.reg_L2Q_sq),
        "balance_max": acc.balance_max,
    }
    rec = DiagnosticsRecord(
        t=state.t, kinetic=kinetic, stored=stored, total=kinetic + stored, dissip_cum=acc.dissip,
        max_strain=max_strain, strain_rate_max=float(np.max(ev.y)), T_L1=float(np.mean(ev.s)),
        T_L1me=large_stress_mass(ev.s, p.a), T_L1pd=_lr(ev.s, pd_exponent(p.a)),
        grad_diss_cum=acc.grad_diss, accel_L2=float(np.sqrt(np.sum(ev.acc**2))), extras=extras,
    )
    rec.check()
    return rec


def _macro_step(ws: _Workspace, cfg: SolverConfig, state: SolverState, dt: float, ev0: _Eval,
                q0: int) -> tuple[np.ndarray, np.ndarray, float, float, int, int]:
    """Advance ``state`` by ``dt`` in ``q`` equal substeps, doubling ``q`` on failure."""
    stepper = _STEPPERS[cfg.method]
    q = q0
    for attempt in range(cfg.max_halvings + 1):
        h = dt / q
        u, v, t = state.u.coeffs, state.v.coeffs, state.t
        ev = ev0
        dissip, bal = 0.0, 0.0
        try:
            with np.errstate(over="raise", invalid="raise"):
                for i in range(q):
                    if i:
                        ev = ws.eval(u, v, t)
                    u, v, st = stepper(ws, u, v, t, h, ev)
                    _check_finite(u, v, t)
                    t = state.t + (i + 1) * h
                    dissip += st.dissip
                    bal = max(bal, abs(st.balance))
            return u, v, dissip, bal, q, attempt
        except (StepFailure, InversionError, SaturationError, FloatingPointError):
            q *= 2
    raise SolverAbort(f"step from t={state.t} failed after {cfg.max_halvings} halvings of dt={dt}")


def run(config: SolverConfig, initial: "InitialData | SolverState", force: ForceSpec, T_final: float,
        dt: float, sinks: Iterable[Callable[[DiagnosticsRecord], None]] = (),
        step_hook: Callable[[SolverState], None] | None = None) -> RunResult:
    """Integrate from the initial (or restored) state up to ``T_final``.

    Rows are emitted at the starting state, every ``cadence_steps`` macro steps
    and at ``T_final``.  The state after macro step ``i`` has ``t = i * dt``.
    """
    from .checkpoint import write_state  # local import: checkpoint depends on this module

    sinks = list(sinks)
    if isinstance(initial, SolverState):
        state = initial
        if state.params != config.params or state.spec != config.spec:
            raise ValueError("restored state does not match the run configuration")
    else:
        state = SolverState.initial(initial, config.params)
        if state.spec != config.spec:
            raise ValueError("initial data does not live in the run's spectral space")
    N = count_steps(T_final, dt)
    if state.step_index > N:
        raise ValueError(f"state is already at step {state.step_index} > {N}")
    ws = _Workspace(config.spec, config.params, force)
    result = RunResult(state, [])

    def emit(st: SolverState, ev: _Eval):
        rec = make_record(ws, st, ev)
        result.records.append(rec)
        if config.keep_fields:
            result.fields.append((st.t, ev.T.copy()))
        for sink in sinks:
            sink(rec)

    ev = ws.eval(state.u.coeffs, state.v.coeffs, state.t)
    G = ws.integrands(ev)
    emit(state, ev)
    m = config.spec.m
    while state.step_index < N:
        q = 1
        if config.guard and config.method == "rk4":
            # both eigenvalues of D(F_n^{-1}) grow with |T|, so the largest stress decides
            kmax = float(inverse_stiffness_max(np.max(ev.s), config.params))
            q = max(1, math.ceil(dt / guard_dt(kmax, m) - 1e-9))
        u, v, dissip, bal, q_used, retries = _macro_step(ws, config, state, dt, ev, q)
        result.substeps += q_used
        result.retries += retries
        k = state.step_index + 1
        t_new = k * dt
        ev = ws.eval(u, v, t_new)
        G1 = ws.integrands(ev)
        half = 0.5 * dt
        a0 = state.acc
        acc = Accumulators(
            dissip=a0.dissip + dissip,
            grad_diss=a0.grad_diss + half * (G[0] + G1[0]),
            T_L1Q=a0.T_L1Q + half * (G[1] + G1[1]),
            reg_L2Q_sq=a0.reg_L2Q_sq + half * (G[2] + G1[2]),
            rate_pow=a0.rate_pow + half * (G[3] + G1[3]),
            balance_max=max(a0.balance_max, bal),
        )
        state = SolverState(t_new, SpectralField(config.spec, u), SpectralField(config.spec, v), k,
                            config.params, config.spec, acc)
        G = G1
        if step_hook is not None:
            step_hook(state)
        if k % config.cadence_steps == 0 or k == N:
            emit(state, ev)
        if config.checkpoint_every and k % config.checkpoint_every == 0:
            path = os.path.join(config.checkpoint_dir, f"checkpoint_{k:08d}.slvc")
            write_state(path, state)
            result.checkpoints.append(path)
    result.state = state
    return result
