"""Acceptance criteria 1 to 10 at their stated tolerances.

Each test reports one PASS/FAIL line (collected again in the terminal
summary) and then asserts it.  Run alone with ``pytest -v tests/test_acceptance.py``.
"""

import math
from fractions import Fraction

import numpy as np
import pytest

from oracles import shear_mode_amplitude
from strainlimit import experiments as X
from strainlimit import solver as S
from strainlimit.checkpoint import decode_state, encode_state
from strainlimit.config import parse_config
from strainlimit.constitutive import (ConstitutiveParams as P, inverse_stiffness_max, lemma2_gap,
                                      lemma2_kappa_specform, phi_n_at_zero, solve_radial)
from strainlimit.diagnostics import spread, theorem3_exponent
from strainlimit.spectral import SpectralConfig, SpectralField, korn_ratio, random_field


# --- 1. constitutive suite ------------------------------------------------------------

@pytest.fixture(scope="module")
def props():
    return {r.name: r for r in X.property_suite(seed=0, samples=100_000, a_list=(0.1, 0.5, 1.0, 2.0))}


def test_criterion_1_constitutive_suite(props, criterion):
    checks = {
        "lemma1_gap": props["lemma1_gap"].passed and props["lemma1_gap"].worst >= -1e-12,
        "inverse_roundtrip": props["inverse_roundtrip"].passed and props["inverse_roundtrip"].worst <= 1e-10,
        "jacobian_fd": props["jacobian_fd"].passed,
        "jacobian_spd": props["jacobian_spd"].passed and props["jacobian_spd"].worst > 0,
        "lemma2_gap (adopted kappa)": props["lemma2_gap"].passed and props["lemma2_gap"].worst >= -1e-12,
    }
    detail = "; ".join(f"{k} {'ok' if v else 'fails'}" for k, v in checks.items())
    assert criterion(1, all(checks.values()), detail)


@pytest.mark.xfail(strict=True, reason="kappa = min{1, 2^(1/a-a)} exceeds the best constant for a < 1; "
                                       "see the decisions ledger")
def test_criterion_1_lemma2_stated_kappa(criterion):
    rng = np.random.default_rng(0)
    worst = {}
    for a in (0.1, 0.5, 1.0, 2.0):
        T = X.random_sym(rng, 2, 25_000, 1e-3, 1e3)
        Sx = X.random_sym(rng, 2, 25_000, 1e-3, 1e3)
        worst[a] = float(np.min(lemma2_gap(T, Sx, P(a, 1.0), kappa=lemma2_kappa_specform(a))))
    ok = all(w >= -1e-12 for w in worst.values())
    detail = "lemma2_gap under kappa = min{1, 2^(1/a-a)}: worst " + ", ".join(
        f"a={a}: {w:.3g}" for a, w in worst.items())
    assert criterion("1 (lemma2, stated kappa)", ok, detail)


# --- 2 and 3. energy decay and strain limit ---------------------------------------------------

DT2 = 2e-4


@pytest.fixture(scope="module")
def decay_run():
    spec, p = SpectralConfig(2, 8), P(a=1.0, alpha=1.0, n=16)
    u0, v0 = S.random_initial_fields(spec, p, X.make_rng(0), target=0.5)
    init = S.prepare_initial_data(u0, v0, p, spec)
    res = S.run(S.SolverConfig(spec, p, cadence_steps=1), init, S.ForceSpec.zero(), 2.0, DT2)
    return spec, p, init, res


def test_criterion_2_energy_decay(decay_run, criterion):
    spec, p, init, res = decay_run
    tot = np.array([r.total for r in res.records])
    E0 = tot[0]
    allowed = 1e-3 * DT2**2 * E0
    violations = int(np.sum(np.diff(tot) > allowed))
    # balance residual per substep against (tau^4) E0, tau = h (2 pi m)^2 kappa_max
    ymax = max(r.strain_rate_max for r in res.records)
    kmax = float(inverse_stiffness_max(solve_radial(ymax, p), p))
    h = DT2 * (len(res.records) - 1) / res.substeps
    tau = h * (2 * math.pi * spec.m) ** 2 * kmax
    bal = res.state.acc.balance_max
    bal_ok = bal <= 1e-2 * tau**4 * E0
    # order: the one-step residual shrinks at least 16x per halving of h
    st0 = S.SolverState.initial(init, p)
    r = [S.step(st0, hh, S.ForceSpec.zero()).acc.balance_max for hh in (DT2, DT2 / 2, DT2 / 4)]
    order_ok = r[0] / r[1] >= 16 and r[1] / r[2] >= 16
    ok = violations == 0 and bal_ok and order_ok and tot[-1] < E0
    detail = (f"E0={E0:.6g} final={tot[-1]:.6g} increases>{allowed:.2g}: {violations}; "
              f"balance {bal:.3g} <= {1e-2 * tau**4 * E0:.3g} (tau={tau:.3g}); "
              f"halving ratios {r[0] / r[1]:.1f}, {r[1] / r[2]:.1f}")
    assert criterion(2, ok, detail)


def test_criterion_3_strain_limit(decay_run, criterion):
    _, p, init, res = decay_run
    bound = 1.0 / p.alpha
    peak = max(r.max_strain for r in res.records)
    ok = init.strain0 <= bound and peak <= bound + 1e-6
    assert criterion(3, ok, f"|eps(u0)|max={init.strain0:.6g}, max_strain over run {peak:.6g} <= {bound + 1e-6}")


# --- 4. manufactured solutions -----------------------------------------------------------

MMS_DOC = "dim = 2\nm = 2\na = 2\nalpha = 1\nn = 1\nT_final = 1\ndt = 0.01\nmms_A = 0.03\n"


def test_criterion_4_mms(criterion):
    cfg = parse_config(MMS_DOC)
    tr = X.mms_temporal(cfg)
    ms, eu, _ = X.mms_spatial(cfg)
    drop = eu[0] / eu[1] if eu[1] > 0 else math.inf
    ok = tr.order_u >= 3.7 and ms == [4, 8] and drop >= 100
    detail = (f"temporal order u={tr.order_u:.3f} v={tr.order_v:.3f} over dt {tr.dts}; "
              f"spatial floor m=4 {eu[0]:.3g}, m=8 {eu[1]:.3g}, drop {drop:.3g}x")
    assert criterion(4, ok, detail)


# --- 5. linear-regime oracle ----------------------------------------------------------------

def test_criterion_5_linear_oracle(criterion):
    spec, p = SpectralConfig(2, 1), P(a=2.0, alpha=1.0, n=1)
    A, T = 1e-4, 1.0
    kappa = 1.0 / (1.0 + 1.0 / (2 * p.n))
    assert kappa == pytest.approx(1.0 / phi_n_at_zero(p))
    u0 = SpectralField.single_mode(spec, (1, 0), 1, A)
    init = S.prepare_initial_data(u0, SpectralField.zeros(spec), p, spec)
    res = S.run(S.SolverConfig(spec, p), init, S.ForceSpec.zero(), T, 1e-3)
    x, xd = shear_mode_amplitude(A, p.alpha, kappa, T)
    b = SpectralField.single_mode(spec, (1, 0), 1, 1.0)
    ux = b.inner(res.state.u) / b.inner(b)
    vx = b.inner(res.state.v) / b.inner(b)
    off = np.linalg.norm(res.state.u.coeffs - ux * b.coeffs)
    err = max(abs(ux - x) / abs(x), abs(vx - xd) / abs(xd))
    ok = err <= 1e-4 and off == 0.0
    assert criterion(5, ok, f"relative error {err:.3g} (x={x:.6g}, x'={xd:.6g}), off-mode content {off:.3g}")


# --- 6 and 8. n-refinement and a priori uniformity ----------------------------------------------

N_LIST = (4, 8, 16, 32)
SWEEP_DOC = ("dim = 2\nm = 4\na = 1\nalpha = 1\nn = 4\nT_final = 1\ndt = 2e-4\nic = random\nic_target = 0.5\n"
             "force = single_mode\nforce_mode = 1, 0\nforce_amplitude = 0, 8\nseed = 0\n")


@pytest.fixture(scope="module")
def n_sweep():
    return X.sweep_n(parse_config(SWEEP_DOC), N_LIST)


def test_criterion_6_n_refinement(n_sweep, criterion):
    d = n_sweep.T_L1_diff
    decreasing = all(b < a for a, b in zip(d, d[1:]))
    C, worst = n_sweep.reg_fit()
    ok = decreasing and worst <= 1.0 + 1e-12
    detail = (f"||T^n' - T^n||_L1(Q) = {', '.join(f'{v:.3g}' for v in d)}; "
              f"regulariser L2(Q) {', '.join(f'{n_sweep.reg_L2Q[n]:.3g}' for n in N_LIST)} "
              f"<= {C:.3g} n^-1/2 (worst ratio {worst:.3g})")
    assert criterion(6, ok, detail)


def test_criterion_8_apriori_uniformity(n_sweep, criterion):
    sp = n_sweep.apriori_spread()
    worst = max(sp, key=sp.get)
    ok = all(v <= 2.0 for v in sp.values())
    assert criterion(8, ok, f"largest spread across n: {worst} {sp[worst]:.3g} (all {len(sp)} entries <= 2)")


# --- 7. integrability exponent -----------------------------------------------------------------

D3_DOC = ("dim = 3\nm = 4\na = 0.2\nalpha = 1\nn = 4\nT_final = 0.2\ndt = 2e-4\nic = random\n"
          "ic_target = 0.002\nseed = 0\n")


def test_criterion_7_exponent(criterion):
    b = theorem3_exponent(Fraction(2, 7), 3)
    arith = ((b.p, b.q, b.delta) == (6, 3, Fraction(4, 21)) and b.lhs == b.rhs == Fraction(15, 7)
             and not b.valid)
    v = theorem3_exponent(0.2, 3)
    arith = arith and v.valid and v.delta == 2 * Fraction(1, 5) / 3
    res = X.sweep_n(parse_config(D3_DOC), N_LIST)
    pd = [res.sup_T_L1pd[n] for n in N_LIST]
    sp = spread(pd)
    ok = arith and sp <= 2.0
    detail = (f"(p,q,delta)=({b.p},{b.q},{b.delta}) sides {b.lhs}={b.rhs} valid={b.valid}; "
              f"a=0.2 delta={v.delta}; d=3 T_L1pd {', '.join(f'{x:.4g}' for x in pd)} spread {sp:.3g}")
    assert criterion(7, ok, detail)


# --- 9. Korn probe ----------------------------------------------------------------------------

def test_criterion_9_korn(criterion):
    rng = np.random.default_rng(0)
    worst = 0.0
    for i in range(1000):
        d = 1 + i % 3
        m = int(rng.integers(1, 5 if d < 3 else 3))
        worst = max(worst, korn_ratio(random_field(SpectralConfig(d, m), rng, decay=rng.uniform(0, 4))))
    # divergence-free single modes: wavevector orthogonal to the displaced component
    shear = max(abs(korn_ratio(SpectralField.single_mode(SpectralConfig(d, 2), k, c)) - math.sqrt(2))
                for d, k, c in ((2, (1, 0), 1), (2, (0, 2), 0), (3, (0, 1, 0), 2), (3, (1, 1, 0), 2)))
    ok = worst <= math.sqrt(2) + 1e-12 and shear <= 1e-12
    assert criterion(9, ok, f"worst ratio over 1000 fields {worst:.15g}, shear attainment error {shear:.3g}")


# --- 10. determinism and persistence ---------------------------------------------------------------

def test_criterion_10_determinism(criterion):
    cfg = parse_config("dim = 2\nm = 4\na = 0.5\nalpha = 1\nn = 8\nT_final = 0.05\ndt = 1e-3\n"
                       "ic = random\nic_target = 0.6\nseed = 1234\ncadence = 0.005\n")
    a = X.run_config(cfg)
    b = X.run_config(cfg)
    same_csv = X.csv_bytes(a.records) == X.csv_bytes(b.records)
    blob = encode_state(a.state)
    back, _ = decode_state(blob)
    roundtrip = S._bits_equal(back, a.state) and encode_state(back) == blob and back.acc == a.state.acc
    ok = same_csv and roundtrip
    assert criterion(10, ok, f"byte-identical CSV {same_csv}; checkpoint round trip bitwise {roundtrip}")
