"""Experiment drivers behind the command line: runs, sweeps, MMS ladders, property suite.

Each driver is a pure function of its configuration (and seed); file output
lives in :mod:`strainlimit.cli`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import constitutive as C
from .checkpoint import MAGIC_FINAL, read_state, write_state
from .config import RunConfig
from .diagnostics import (
    APRIORI_KEYS, CSV_COLUMNS, DiagnosticsRecord, apriori_report, spread,
)
from .solver import (
    ForceSpec, InitialData, RunResult, SolverConfig, SolverState, manufactured_fields,
    manufactured_strain_peak, prepare_initial_data, random_initial_fields, run,
)
from .spectral import SpectralConfig, SpectralField, korn_ratio, random_field
from .tensors import SymTensor, frobenius_entries, ncomp

# ---------------------------------------------------------------------------
# building blocks


def make_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed)))


def build_initial(cfg: RunConfig, spec: SpectralConfig | None = None) -> InitialData:
    """Initial data for ``cfg`` in ``spec`` (default: the run's own space).

    Random data is drawn at degree ``ic.data_m`` (or ``m``) from the seed alone,
    so runs that differ only in ``n`` or ``m`` start from the same function.
    """
    spec = spec or cfg.spectral
    p = cfg.params
    ic = cfg.ic
    if ic.kind == "zero":
        u = v = SpectralField.zeros(spec)
    elif ic.kind == "random":
        data_spec = SpectralConfig(cfg.dim, ic.data_m or cfg.m)
        u, v = random_initial_fields(data_spec, p, make_rng(cfg.seed), ic.target, ic.decay)
    elif ic.kind == "single_mode":
        u = SpectralField.single_mode(spec, ic.mode, ic.component, ic.amplitude)
        v = SpectralField.zeros(spec)
    else:
        u, v = manufactured_fields(spec, cfg.mms_A, cfg.mms_omega, 0.0)
    return prepare_initial_data(u, v, p, spec)


def build_force(cfg: RunConfig, ref_side: int | None = None) -> ForceSpec:
    fc = cfg.force
    if fc.kind == "zero":
        return ForceSpec.zero()
    if fc.kind == "single_mode":
        return ForceSpec.single_mode(fc.mode, fc.amplitude, fc.omega)
    if fc.kind == "tabulated":
        return ForceSpec.from_npz(fc.path)
    side = cfg.mms_ref_side if ref_side is None else ref_side
    return ForceSpec.manufactured(cfg.mms_A, cfg.mms_omega, side)


def solver_config(cfg: RunConfig, spec: SpectralConfig | None = None, keep_fields: bool = False,
                  checkpoint_dir: str | None = None, guard: bool = True) -> SolverConfig:
    return SolverConfig(
        spec or cfg.spectral, cfg.params, cfg.method, cadence_steps=cfg.cadence_steps,
        checkpoint_every=cfg.checkpoint_every if checkpoint_dir else 0,
        checkpoint_dir=checkpoint_dir, guard=guard, keep_fields=keep_fields,
    )


def check_manufactured(cfg: RunConfig) -> None:
    """Configuration error if the manufactured strain reaches the saturation ball."""
    peak = manufactured_strain_peak(cfg.mms_A, cfg.mms_omega, cfg.alpha)
    if not peak < 1.0:
        raise ValueError(f"manufactured strain peak {peak:.6g} is not below 1; reduce mms_A or mms_omega")


# ---------------------------------------------------------------------------
# CSV


def format_float(x: float) -> str:
    # '%' formatting ignores the locale
    return "%.17g" % x


def csv_bytes(records, columns=CSV_COLUMNS) -> bytes:
    lines = [",".join(columns)]
    for r in records:
        vals = r.row() if isinstance(r, DiagnosticsRecord) else tuple(r)
        lines.append(",".join(format_float(v) if isinstance(v, float) else str(v) for v in vals))
    return ("\n".join(lines) + "\n").encode("ascii")


def parse_csv(data: bytes) -> tuple[list[str], np.ndarray]:
    lines = data.decode("ascii").strip().splitlines()
    header = lines[0].split(",")
    rows = [[float(x) for x in ln.split(",")] for ln in lines[1:]]
    return header, np.array(rows, dtype=np.float64).reshape(len(rows), len(header))


# ---------------------------------------------------------------------------
# single run


def run_config(cfg: RunConfig, keep_fields: bool = False, checkpoint_dir: str | None = None,
               restart: SolverState | str | None = None, sinks=()) -> RunResult:
    """Run ``cfg`` from its initial data, or continue from a restored state."""
    if "manufactured" in (cfg.ic.kind, cfg.force.kind):
        check_manufactured(cfg)
    scfg = solver_config(cfg, keep_fields=keep_fields, checkpoint_dir=checkpoint_dir)
    force = build_force(cfg)
    if restart is not None:
        state = read_state(restart) if not isinstance(restart, SolverState) else restart
        return run(scfg, state, force, cfg.T_final, cfg.dt, sinks)
    return run(scfg, build_initial(cfg), force, cfg.T_final, cfg.dt, sinks)


def write_final(path: str, state: SolverState) -> None:
    write_state(path, state, MAGIC_FINAL)


# ---------------------------------------------------------------------------
# n sweep


def _stress_L1(fields_a, fields_b, dim: int) -> float:
    """Time trapezoid of ``int |T_a - T_b| dx`` over shared cadence times."""
    ta = np.array([t for t, _ in fields_a])
    tb = np.array([t for t, _ in fields_b])
    if ta.shape != tb.shape or np.any(ta != tb):
        raise ValueError("runs do not share cadence times")
    vals = np.array([float(np.mean(frobenius_entries(dim, A - B))) for (_, A), (_, B) in zip(fields_a, fields_b)])
    if vals.size == 1:
        return 0.0
    return float(np.trapezoid(vals, ta))


@dataclass
class NSweepResult:
    n_list: list[int]
    runs: dict[int, RunResult]
    T_L1_diff: list[float]           # successive ||T^{n_{j+1}} - T^{n_j}||_{L1(Q)}
    v_diff: list[float]              # successive ||v^{n_{j+1}} - v^{n_j}||_2 at T_final
    reg_L2Q: dict[int, float]
    sup_T_L1pd: dict[int, float]
    apriori: dict[int, dict[str, float]]

    def apriori_spread(self) -> dict[str, float]:
        return {k: spread(self.apriori[n][k] for n in self.n_list) for k in APRIORI_KEYS}

    def reg_fit(self) -> tuple[float, float]:
        """``C`` fitted at the smallest n and the worst ratio ``reg / (C n^-1/2)`` over the sweep."""
        n0 = self.n_list[0]
        Cfit = self.reg_L2Q[n0] * math.sqrt(n0)
        worst = max(self.reg_L2Q[n] / (Cfit / math.sqrt(n)) if Cfit > 0 else 0.0 for n in self.n_list)
        return Cfit, worst

    def table(self) -> tuple[tuple[str, ...], list[tuple]]:
        cols = ("n", "reg_L2Q", "sup_T_L1pd", "T_L1Q_diff_next", "v_diff_next") + APRIORI_KEYS
        rows = []
        for j, n in enumerate(self.n_list):
            nxt = (self.T_L1_diff[j], self.v_diff[j]) if j < len(self.T_L1_diff) else (math.nan, math.nan)
            rows.append((n, self.reg_L2Q[n], self.sup_T_L1pd[n]) + nxt
                        + tuple(self.apriori[n][k] for k in APRIORI_KEYS))
        return cols, rows


def sweep_n(cfg: RunConfig, n_list) -> NSweepResult:
    n_list = [int(n) for n in n_list]
    if len(n_list) < 2 or n_list != sorted(n_list):
        raise ValueError("n_list needs at least two ascending entries")
    runs = {}
    for n in n_list:
        if n in runs:
            continue
        runs[n] = run_config(cfg.with_(n=n), keep_fields=True)
    d = cfg.dim
    T_diff, v_diff = [], []
    for n0, n1 in zip(n_list[:-1], n_list[1:]):
        T_diff.append(_stress_L1(runs[n1].fields, runs[n0].fields, d))
        v_diff.append((runs[n1].state.v - runs[n0].state.v).norm())
    return NSweepResult(
        n_list, runs, T_diff, v_diff,
        reg_L2Q={n: runs[n].records[-1].extras["reg_L2Q"] for n in n_list},
        sup_T_L1pd={n: max(r.T_L1pd for r in runs[n].records) for n in n_list},
        apriori={n: apriori_report(runs[n].records, cfg.params.with_n(n)) for n in n_list},
    )


# ---------------------------------------------------------------------------
# m sweep


@dataclass
class MSweepResult:
    m_list: list[int]
    runs: dict[int, RunResult]
    u_diff: list[float]
    v_diff: list[float]
    spreads: dict[str, float]

    def table(self) -> tuple[tuple[str, ...], list[tuple]]:
        cols = ("m", "total_final", "dissip_cum_final", "u_diff_next", "v_diff_next")
        rows = []
        for j, m in enumerate(self.m_list):
            last = self.runs[m].records[-1]
            nxt = (self.u_diff[j], self.v_diff[j]) if j < len(self.u_diff) else (math.nan, math.nan)
            rows.append((m, last.total, last.dissip_cum) + nxt)
        return cols, rows


def sweep_m(cfg: RunConfig, m_list) -> MSweepResult:
    m_list = [int(m) for m in m_list]
    if not m_list or m_list != sorted(m_list):
        raise ValueError("m_list must be ascending and nonempty")
    data_m = cfg.ic.data_m or m_list[0]
    runs = {}
    for m in m_list:
        c = cfg.with_(m=m, grid_shape=(), ic=replace(cfg.ic, data_m=min(data_m, m)))
        runs[m] = run_config(c)
    u_diff, v_diff = [], []
    for m0, m1 in zip(m_list[:-1], m_list[1:]):
        hi = runs[m1].state.spec
        u_diff.append((runs[m1].state.u - runs[m0].state.u.resample(hi)).norm())
        v_diff.append((runs[m1].state.v - runs[m0].state.v.resample(hi)).norm())
    spreads = {k: spread(abs(getattr(runs[m].records[-1], k)) for m in m_list)
               for k in ("total", "dissip_cum", "T_L1")}
    return MSweepResult(m_list, runs, u_diff, v_diff, spreads)


# ---------------------------------------------------------------------------
# manufactured solutions


@dataclass
class MMSResult:
    dts: list[float]
    err_u: list[float]               # ||u - u*||_{L2(Q)}
    err_v: list[float]               # ||v - v*||_{L2(Q)}
    order_u: float
    order_v: float


def fit_order(h, err) -> float:
    """Least-squares slope of ``log err`` against ``log h``."""
    h = np.asarray(h, dtype=np.float64)
    e = np.asarray(err, dtype=np.float64)
    if h.size < 2:
        return math.nan
    if np.any(e <= 0):
        return math.inf if np.all(e == 0) else math.nan
    return float(np.polyfit(np.log(h), np.log(e), 1)[0])


def mms_errors(cfg: RunConfig, spec: SpectralConfig, dt: float, T_final: float, ref_side: int,
               guard: bool) -> tuple[float, float]:
    """``L2(Q)`` errors of one manufactured run (time trapezoid over macro steps)."""
    check_manufactured(cfg)
    A, om = cfg.mms_A, cfg.mms_omega
    u0, v0 = manufactured_fields(spec, A, om, 0.0)
    init = prepare_initial_data(u0, v0, cfg.params, spec)
    scfg = SolverConfig(spec, cfg.params, cfg.method, cadence_steps=10**9, guard=guard)
    eu, ev = [0.0], [0.0]

    def hook(st: SolverState):
        us, vs = manufactured_fields(spec, A, om, st.t)
        eu.append(float(np.sum((st.u.coeffs - us.coeffs) ** 2)))
        ev.append(float(np.sum((st.v.coeffs - vs.coeffs) ** 2)))

    run(scfg, init, ForceSpec.manufactured(A, om, ref_side), T_final, dt, step_hook=hook)
    eu, ev = np.array(eu), np.array(ev)
    # trapezoid with the uniform macro step
    q = lambda e: math.sqrt(dt * (float(np.sum(e)) - 0.5 * (e[0] + e[-1])))
    return q(eu), q(ev)


def mms_temporal(cfg: RunConfig) -> MMSResult:
    """dt ladder on the solver's own grid, where ``u*`` solves the discrete system exactly.

    The guard is off so every step size is the one on the ladder.
    """
    dts = sorted(cfg.mms_dt_list, reverse=True)
    eu, ev = [], []
    for dt in dts:
        a, b = mms_errors(cfg, cfg.spectral, dt, cfg.T_final, 0, guard=False)
        eu.append(a)
        ev.append(b)
    return MMSResult(dts, eu, ev, fit_order(dts, eu), fit_order(dts, ev))


def mms_spatial(cfg: RunConfig) -> tuple[list[int], list[float], list[float]]:
    """Error floor for each ``m`` with the force built from a fine reference grid."""
    ms = sorted(cfg.mms_m_list)
    eu, ev = [], []
    for m in ms:
        spec = SpectralConfig(cfg.dim, m)
        a, b = mms_errors(cfg, spec, cfg.mms_spatial_dt, cfg.mms_spatial_T, cfg.mms_ref_side, guard=True)
        eu.append(a)
        ev.append(b)
    return ms, eu, ev


# ---------------------------------------------------------------------------
# property suite


@dataclass
class PropertyResult:
    name: str
    passed: bool
    worst: float
    detail: str = ""
    fatal: bool = True

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        info = "" if self.fatal else " (informational)"
        return f"{tag} {self.name}: worst {format_float(self.worst)}{info} {self.detail}".rstrip()


def random_sym(rng: np.random.Generator, dim: int, size: int, lo: float, hi: float) -> SymTensor:
    """Random directions with log-uniform magnitudes in ``[lo, hi]``."""
    k = ncomp(dim)
    e = rng.standard_normal((k, size))
    r = frobenius_entries(dim, e)
    mag = np.exp(rng.uniform(math.log(lo), math.log(hi), size))
    return SymTensor(dim, e * (mag / r))


def _rel_err(dim, A, B):
    return frobenius_entries(dim, A - B) / np.maximum(frobenius_entries(dim, B), 1e-300)


def property_suite(seed: int, samples: int, a_list=(0.1, 0.5, 1.0, 2.0)) -> list[PropertyResult]:
    rng = make_rng(seed)
    out: list[PropertyResult] = []
    a_arr = np.asarray(a_list, dtype=np.float64)
    N = int(samples)
    small = max(1, min(N, 10_000))

    # two-sided comparison of (1+y^a)^(1/a) with 1+y
    y = np.exp(rng.uniform(math.log(1e-10), math.log(1e10), N))
    y[: min(N, 3)] = [0.0, 1.0, 1e-300][: min(N, 3)]
    a = a_arr[rng.integers(0, a_arr.size, N)]
    lo, up = C.lemma1_gap(y, a)
    scale = C.lemma1_scale(y, a)
    rel = np.minimum(lo, up) / scale
    w = float(np.min(rel))
    out.append(PropertyResult("lemma1_gap", w >= -1e-12, w, "(slack / middle term)"))

    # strong monotonicity of F under the adopted kappa; the other two constant forms are probed only
    forms = {"lemma2_gap": C.lemma2_kappa, "lemma2_gap_specform": C.lemma2_kappa_specform,
             "lemma2_gap_maxform": C.lemma2_kappa_maxform}
    worst2 = dict.fromkeys(forms, math.inf)
    kemp = {}
    per = -(-N // a_arr.size)
    for av in a_arr:
        p = C.ConstitutiveParams(a=float(av), alpha=1.0)
        dim = int(rng.integers(2, 4))
        T = random_sym(rng, dim, per, 1e-3, 1e3)
        S = random_sym(rng, dim, per, 1e-3, 1e3)
        for name, kf in forms.items():
            g = np.atleast_1d(C.lemma2_gap(T, S, p, kf(float(av))))
            worst2[name] = min(worst2[name], float(np.min(g)))
        kemp[float(av)] = C.lemma2_empirical_kappa(T, S, p)
    emp = " ".join(f"a={a:g}:{k:.4g}" for a, k in kemp.items())
    out.append(PropertyResult("lemma2_gap", worst2["lemma2_gap"] >= -1e-12, worst2["lemma2_gap"],
                              f"(kappa = min{{1, 2^(a-1/a)}}; empirical kappa {emp})"))
    out.append(PropertyResult("lemma2_gap_specform", worst2["lemma2_gap_specform"] >= -1e-12,
                              worst2["lemma2_gap_specform"], "(kappa = min{1, 2^(1/a-a)})", fatal=False))
    out.append(PropertyResult("lemma2_gap_maxform", worst2["lemma2_gap_maxform"] >= -1e-12,
                              worst2["lemma2_gap_maxform"], "(kappa = max{1, 2^(1/a-a)})", fatal=False))

    # inverse roundtrips T -> F_n(T) -> T for |T| up to 1e6
    worst_rt = 0.0
    for n in (1, 2, 16, 64):
        for av in a_arr:
            p = C.ConstitutiveParams(a=float(av), alpha=1.0, n=n)
            T = random_sym(rng, int(rng.integers(1, 4)), max(1, N // (4 * a_arr.size)), 1e-8, 1e6)
            back = C.invert_Fn(C.apply_Fn(T, p), p)
            worst_rt = max(worst_rt, float(np.max(_rel_err(T.dim, back.entries, T.entries))))
    out.append(PropertyResult("inverse_roundtrip", worst_rt <= 1e-10, worst_rt, "(relative, |T| <= 1e6)"))

    # Jacobian: forward differences converge at first order, operator is SPD
    ratios, worst_fd, min_eig = [], 0.0, math.inf
    for av in a_arr:
        p = C.ConstitutiveParams(a=float(av), alpha=1.0, n=int(rng.choice([1, 4, 16])))
        dim = int(rng.integers(2, 4))
        cnt = max(1, small // a_arr.size)
        T = random_sym(rng, dim, cnt, 1e-2, 1e2)
        U = random_sym(rng, dim, cnt, 1.0, 1.0)
        J = C.jacobian_Fn(T, p)
        JU = J.apply(U).entries
        errs = []
        for h in (1e-4, 5e-5):
            Th = SymTensor(dim, T.entries + h * U.entries)
            fd = (C.apply_Fn(Th, p).entries - C.apply_Fn(T, p).entries) / h
            errs.append(_rel_err(dim, fd, JU))
        ok = errs[1] > 1e-12
        ratios.append(errs[0][ok] / errs[1][ok])
        worst_fd = max(worst_fd, float(np.max(errs[0])))
        min_eig = min(min_eig, float(np.min(J.eigvalsh())),
                      float(np.min(C.jacobian_inverse_Fn(C.apply_Fn(T, p), p).eigvalsh())))
    ratio = float(np.median(np.concatenate(ratios)))
    out.append(PropertyResult("jacobian_fd", worst_fd <= 1e-3 and 1.8 <= ratio <= 2.2, worst_fd,
                              f"(error ratio on halving h: {ratio:.4f})"))
    out.append(PropertyResult("jacobian_spd", min_eig > 0, min_eig, "(smallest eigenvalue)"))

    # growth: |D F_n^{-1}(S)|_F <= C_a (1 + |F_n^{-1}(S)|^(a+1)); both eigenvalues of the
    # radial inverse Jacobian are at most 2^(1+1/a) (1 + s^(a+1)), hence C_a = sqrt(k) 2^(1+1/a)
    worst_g = 0.0
    for av in a_arr:
        p = C.ConstitutiveParams(a=float(av), alpha=1.0, n=16)
        dim = int(rng.integers(1, 4))
        T = random_sym(rng, dim, small, 1e-6, 1e6)
        S = C.apply_Fn(T, p)
        jf = C.jacobian_inverse_Fn(S, p).frobenius()
        s = frobenius_entries(dim, C.invert_Fn(S, p).entries)
        bound = math.sqrt(ncomp(dim)) * 2.0 ** (1.0 + 1.0 / av) * (1.0 + s ** (av + 1.0))
        worst_g = max(worst_g, float(np.max(jf / bound)))
    out.append(PropertyResult("inverse_jacobian_growth", worst_g <= 1.0, worst_g,
                              "(|D F_n^-1(S)|_F / (C_a (1 + |F_n^-1(S)|^(a+1))))"))

    # h_n chain rule: T : DF_n(T) U = d/dt h_n(|T + tU|^2) / 2 at t = 0
    worst_h = 0.0
    cnt = max(1, min(N, 200))
    for av in a_arr:
        p = C.ConstitutiveParams(a=float(av), alpha=1.0, n=8)
        dim = 3
        T = random_sym(rng, dim, cnt, 1e-1, 1e2)
        U = random_sym(rng, dim, cnt, 1.0, 1.0)
        lhs = np.sum(_wts(dim) * T.entries * C.jacobian_Fn(T, p).apply(U).entries, axis=0)
        d = 1e-4 * frobenius_entries(dim, T.entries)
        sp = frobenius_entries(dim, T.entries + d * U.entries) ** 2
        sm = frobenius_entries(dim, T.entries - d * U.entries) ** 2
        rhs = (C.h_n(sp, p) - C.h_n(sm, p)) / (4.0 * d)
        worst_h = max(worst_h, float(np.max(np.abs(lhs - rhs) / np.maximum(np.abs(lhs), 1e-12))))
    out.append(PropertyResult("h_n_identity", worst_h <= 1e-6, worst_h, "(relative, central differences)"))

    # Korn: ||grad u|| <= sqrt 2 ||eps(u)||, attained by shear modes
    worst_k = 0.0
    for _ in range(max(1, min(N, 1000))):
        dim = int(rng.integers(1, 4))
        spec = SpectralConfig(dim, int(rng.integers(1, 5)))
        worst_k = max(worst_k, korn_ratio(random_field(spec, rng, float(rng.uniform(0.0, 3.0)))))
    shear = SpectralField.single_mode(SpectralConfig(2, 2), (1, 0), 1, 1.0)
    att = abs(korn_ratio(shear) - math.sqrt(2.0))
    out.append(PropertyResult("korn_ratio", worst_k <= math.sqrt(2.0) + 1e-12, worst_k, "(bound sqrt 2)"))
    out.append(PropertyResult("korn_shear_attainment", att <= 1e-12, att, "(|ratio - sqrt 2|)"))
    return out


def _wts(dim: int) -> np.ndarray:
    return np.array([1.0 if i == j else 2.0 for i in range(dim) for j in range(i, dim)])[:, None]


__all__ = [
    "build_initial", "build_force", "solver_config", "csv_bytes", "parse_csv", "format_float",
    "run_config", "write_final", "sweep_n", "NSweepResult", "sweep_m", "MSweepResult",
    "mms_temporal", "mms_spatial", "mms_errors", "MMSResult", "fit_order", "property_suite",
    "PropertyResult", "random_sym", "make_rng",
]
