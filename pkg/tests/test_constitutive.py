import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import brentq

from strainlimit import constitutive as C
from strainlimit.constitutive import ConstitutiveParams as P
from strainlimit.tensors import SymTensor, contract, frobenius, ncomp


def diag(*vals):
    d = len(vals)
    return SymTensor.from_matrix(np.diag(np.asarray(vals, dtype=float)))


def rand_sym(rng, dim, size, lo=1e-3, hi=1e3):
    e = rng.standard_normal((ncomp(dim), size))
    e /= frobenius(SymTensor(dim, e))
    return SymTensor(dim, e * np.exp(rng.uniform(math.log(lo), math.log(hi), size)))


def rel(A, B):
    return frobenius(SymTensor(A.dim, A.entries - B.entries)) / np.maximum(frobenius(B), 1e-300)


# --- parameters -------------------------------------------------------------

@pytest.mark.parametrize("kw", [dict(a=0, alpha=1), dict(a=1, alpha=-1), dict(a=1, alpha=1, n=0),
                                dict(a=1, alpha=1, n=2.5), dict(a=math.inf, alpha=1)])
def test_params_reject(kw):
    with pytest.raises(ValueError):
        P(**kw)


def test_phi_n_at_zero():
    assert C.phi_n_at_zero(P(1, 1, 1)) == pytest.approx(1.5)
    assert C.phi_n_at_zero(P(1, 1, 4)) == pytest.approx(1.25)
    assert C.phi_n_at_zero(P(2, 1)) == 1.0


# --- profile and forward maps ------------------------------------------------

def test_profile_examples():
    assert C.profile_f(0.0, 1.0) == 0.0
    assert C.profile_f(1.0, 1.0) == pytest.approx(0.5, abs=1e-15)
    assert abs(C.profile_f(1e6, 2.0) - 1.0) < 1e-6
    with pytest.raises(ValueError):
        C.profile_f(-1.0, 1.0)


def test_apply_F_examples(rng):
    p = P(1.0, 1.0)
    assert frobenius(C.apply_F(SymTensor.zeros(2), p)) == 0.0
    np.testing.assert_allclose(C.apply_F(diag(1, 0), p).entries, diag(0.5, 0).entries, atol=1e-15)
    # strict while 1 - f(s) ~ s^-a/a is resolvable in double precision
    T = rand_sym(rng, 3, 5000, 1e-6, 1e6)
    for a in (0.1, 1.0):
        assert np.all(frobenius(C.apply_F(T, P(a, 1.0))) < 1.0)
    T = rand_sym(rng, 3, 5000, 1e-6, 1e4)
    assert np.all(frobenius(C.apply_F(T, P(3.0, 1.0))) < 1.0)
    # far out the quotient rounds to 1 but never above
    T = rand_sym(rng, 3, 5000, 1e6, 1e150)
    assert np.all(frobenius(C.apply_F(T, P(3.0, 1.0))) <= 1.0 + 4e-16)
    assert np.all(C.profile_f(frobenius(T), 3.0) <= 1.0)


def test_strain_limit_sup_approaches_one():
    s = np.logspace(0, 15, 16)
    vals = C.profile_f(s, 1.0)
    assert np.all(np.diff(vals) > 0) and vals[-1] > 1 - 1e-12


def test_apply_Fn_examples(rng):
    T = diag(1, 0)
    np.testing.assert_allclose(C.apply_Fn(T, P(1.0, 1.0, 1)).entries, T.entries, atol=1e-15)
    assert frobenius(C.apply_Fn(SymTensor.zeros(3), P(1, 1, 8))) == 0.0
    T = rand_sym(rng, 2, 2000, 1e-3, 1e6)
    for n in (2, 16, 256):
        gap = frobenius(SymTensor(2, C.apply_Fn(T, P(0.5, 1, n)).entries - C.apply_F(T, P(0.5, 1)).entries))
        assert np.all(gap <= frobenius(T) / n * (1 + 1e-12))


def test_radiality_under_rotation(rng):
    p = P(0.7, 1.0, 5)
    for _ in range(20):
        Q, _r = np.linalg.qr(rng.standard_normal((3, 3)))
        A = rng.standard_normal((3, 3))
        A = A + A.T
        T = SymTensor.from_matrix(A)
        lhs = C.apply_F(SymTensor.from_matrix(Q @ A @ Q.T), p).to_matrix()
        rhs = Q @ C.apply_F(T, p).to_matrix() @ Q.T
        np.testing.assert_allclose(lhs, rhs, atol=1e-13)


def test_monotonicity(rng):
    for n in (3, math.inf):
        p = P(0.5, 1.0, n)
        T, S = rand_sym(rng, 2, 20000), rand_sym(rng, 2, 20000)
        F = C.apply_Fn if n != math.inf else C.apply_F
        d = contract(SymTensor(2, T.entries - S.entries), SymTensor(2, F(T, p).entries - F(S, p).entries))
        assert np.all(d > 0)


# --- inverses ----------------------------------------------------------------

def test_invert_Fn_examples():
    p = P(1.0, 1.0, 1)
    assert frobenius(C.invert_Fn(SymTensor.zeros(2), p)) == 0.0
    E = diag(1, 0)
    np.testing.assert_allclose(C.invert_Fn(E, p).entries, E.entries, rtol=1e-12)
    # bisection oracle for a generic case
    q = P(0.3, 1.0, 7)
    s = brentq(lambda x: float(C.profile_fn(x, q)) - 2.5, 0.0, 1e12, xtol=1e-14, rtol=1e-15)
    assert float(C.solve_radial(2.5, q)) == pytest.approx(s, rel=1e-12)


@pytest.mark.parametrize("n", [1, 2, 16, 64])
@pytest.mark.parametrize("a", [0.1, 0.5, 1.0, 2.0])
def test_invert_Fn_roundtrip_both_ways(rng, a, n):
    p = P(a, 1.0, n)
    T = rand_sym(rng, 3, 5000, 1e-8, 1e6)
    assert np.max(rel(C.invert_Fn(C.apply_Fn(T, p), p), T)) <= 1e-10
    # strains whose preimage has |T| <= 1e6
    E = rand_sym(rng, 2, 5000, 1e-8, float(C.profile_fn(1e6, p)))
    assert np.max(rel(C.apply_Fn(C.invert_Fn(E, p), p), E)) <= 1e-10


def test_invert_Fn_beyond_double_range():
    # f_n(s) grows like s^(1/n)/n, so |E| = 50 at n = 64 needs |T| far above 1e308
    with pytest.raises(C.InversionError):
        C.invert_Fn(diag(50.0, 0), P(1.0, 1.0, 64))


def test_solve_radial_needs_finite_n():
    with pytest.raises(ValueError):
        C.solve_radial(0.5, P(1, 1))
    with pytest.raises(C.InversionError):
        C.invert_Fn(SymTensor(1, np.array([np.nan])), P(1, 1, 2))


def test_invert_F_examples(rng):
    p = P(1.0, 1.0)
    assert frobenius(C.invert_F(SymTensor.zeros(2), p)) == 0.0
    assert frobenius(C.invert_F(diag(0.5, 0), p)) == pytest.approx(1.0, rel=1e-15)
    near = C.invert_F(diag(1 - 1e-15, 0), p)
    assert frobenius(near) > 1e14
    for bad in (1.0, 1.5):
        with pytest.raises(C.SaturationError):
            C.invert_F(diag(bad, 0), p)
    E = rand_sym(rng, 3, 2000, 1e-6, 0.999)
    np.testing.assert_allclose(C.invert_F_alpha(E, p).entries, C.invert_F(E, p).entries, rtol=0, atol=0)
    T = C.invert_F(E, P(0.4, 1.0))
    assert np.max(rel(C.apply_F(T, P(0.4, 1.0)), E)) < 1e-12


def test_invert_F_alpha_example():
    p = P(1.0, 2.0)
    assert frobenius(C.invert_F_alpha(diag(0.25, 0), p)) == pytest.approx(1.0, rel=1e-15)
    with pytest.raises(C.SaturationError):
        C.invert_F_alpha(diag(0.5, 0), p)


@given(st.floats(0.05, 4.0), st.integers(1, 200), st.floats(-8, 6), st.integers(1, 3))
def test_roundtrip_property(a, n, logmag, d):
    p = P(a, 1.0, n)
    e = np.arange(1.0, ncomp(d) + 1)
    T = SymTensor(d, e / np.linalg.norm(e) * 10.0**logmag)
    back = C.invert_Fn(C.apply_Fn(T, p), p)
    assert float(rel(back, T)) <= 1e-10


# --- Jacobians -----------------------------------------------------------------

def test_jacobian_at_zero_matches_finite_differences(rng):
    for n in (1, 2, 8):
        p = P(1.0, 1.0, n)
        J = C.jacobian_Fn(SymTensor.zeros(2), p)
        np.testing.assert_allclose(J.matrix, C.phi_n_at_zero(p) * np.eye(3), atol=1e-15)
        U = SymTensor(2, rng.standard_normal(3))
        h = 1e-9
        fd = C.apply_Fn(U.scaled(h), p).entries / h
        # the regulariser's slope at 0 is reached like h^(1/n); allow for it
        np.testing.assert_allclose(fd, J.apply(U).entries, rtol=5 * h ** (1.0 / n) + 1e-6)


def test_jacobian_fd_first_order(rng):
    p = P(0.6, 1.0, 8)
    T = rand_sym(rng, 3, 200, 1e-2, 1e2)
    U = rand_sym(rng, 3, 200, 1.0, 1.0)
    J = C.jacobian_Fn(T, p).apply(U)

    def err(h):
        fd = (C.apply_Fn(SymTensor(3, T.entries + h * frobenius(T) * U.entries), p).entries
              - C.apply_Fn(T, p).entries) / (h * frobenius(T))
        return frobenius(SymTensor(3, fd - J.entries)) / frobenius(J)

    e1, e2 = err(1e-4), err(5e-5)
    ratio = np.median(e1 / e2)
    assert 1.8 <= ratio <= 2.2
    assert np.max(e1) < 1e-3


def test_jacobian_spd_and_inverse(rng):
    p = P(0.3, 1.0, 4)
    T = rand_sym(rng, 3, 10000, 1e-4, 1e6)
    assert np.all(C.jacobian_Fn(T, p).eigvalsh() > 0)
    S = C.apply_Fn(T, p)
    prod = np.einsum("...ij,...jk->...ik", C.jacobian_Fn(T, p).matrix, C.jacobian_inverse_Fn(S, p).matrix)
    np.testing.assert_allclose(prod, np.broadcast_to(np.eye(6), prod.shape), atol=1e-9)


def test_inverse_jacobian_growth_bounded(rng):
    for a in (0.2, 1.0, 2.0):
        p = P(a, 1.0, 16)
        s = np.logspace(-6, 6, 400)
        T = SymTensor(2, np.vstack([s, 0 * s, 0 * s]))
        jf = C.jacobian_inverse_Fn(C.apply_Fn(T, p), p).frobenius()
        ratio = jf / (1.0 + s ** (a + 1.0))
        assert np.max(ratio) <= math.sqrt(3.0) * 2.0 ** (1.0 + 1.0 / a)
        # no growth at the top of the sweep: the ratio settles
        assert ratio[-1] <= 1.01 * np.max(ratio[:-50])


def test_inverse_stiffness_max_is_largest_eigenvalue(rng):
    p = P(1.0, 1.0, 16)
    T = rand_sym(rng, 2, 100, 1e-3, 1e3)
    ev = C.jacobian_inverse_Fn(C.apply_Fn(T, p), p).eigvalsh()[:, -1]
    np.testing.assert_allclose(C.inverse_stiffness_max(frobenius(T), p), ev, rtol=1e-10)


# --- potentials ----------------------------------------------------------------

def test_radial_integral_closed_forms():
    p = P(1.0, 1.0)
    s = np.logspace(-2, 5, 60)
    np.testing.assert_allclose(C.radial_fn_integral(s, p), s - np.log1p(s), rtol=1e-10)
    conj = np.log1p(s) + 1.0 / (1.0 + s) - 1.0
    np.testing.assert_allclose(C.radial_fn_integral(s, p, conjugate=True), conj, rtol=1e-10)
    # series where the closed forms cancel
    s = np.logspace(-6, -3, 10)
    np.testing.assert_allclose(C.radial_fn_integral(s, p), s**2 / 2 - s**3 / 3 + s**4 / 4 - s**5 / 5, rtol=1e-10)
    np.testing.assert_allclose(C.radial_fn_integral(s, p, conjugate=True),
                               s**2 / 2 - 2 * s**3 / 3 + 3 * s**4 / 4 - 4 * s**5 / 5, rtol=1e-10)


def test_radial_integral_against_quad():
    from scipy.integrate import quad
    for a, n in ((0.1, 3), (0.5, 16), (2.0, 1)):
        p = P(a, 1.0, n)
        for s in (0.3, 2.0, 40.0):
            ref = quad(lambda t: float(C.profile_fn(t, p)), 0, s, epsabs=0, epsrel=1e-13, limit=200)[0]
            assert float(C.radial_fn_integral(s, p)) == pytest.approx(ref, rel=1e-10)


def test_stored_energy_examples():
    for p in (P(1.0, 1.0), P(0.5, 2.0), P(1.0, 1.0, 8)):
        assert C.stored_energy_density(SymTensor.zeros(2), p) == 0.0
    for alpha in (1.0, 2.0):
        p = P(1.0, alpha)
        assert C.stored_energy_density(diag(2.0 / alpha, 0), p) == math.inf
        assert C.stored_energy_density(diag(1.0 / alpha, 0), p) == math.inf
    assert math.isfinite(C.stored_energy_density(diag(2.0, 0), P(1.0, 1.0, 8)))


def test_stored_energy_quadratic_expansion():
    p = P(1.0, 1.5)
    errs = []
    for amp in (1e-2, 1e-3):
        E = diag(amp, -amp / 2)
        lead = 0.5 * p.alpha * float(frobenius(E)) ** 2
        errs.append(abs(C.stored_energy_density(E, p) / lead - 1.0))
    assert errs[1] < errs[0] / 5 and errs[1] < 1e-2


def test_fenchel_young(rng):
    for a, alpha in ((1.0, 1.0), (0.3, 2.0), (2.5, 0.5)):
        p = P(a, alpha)
        T = rand_sym(rng, 2, 300, 1e-3, 1e3)
        Fa = C.apply_F_alpha(T, p)
        lhs = C.potential_f_alpha(T, p) + C.stored_energy_density(Fa, p)
        np.testing.assert_allclose(lhs, contract(Fa, T), rtol=1e-8)


def test_h_n_identity_along_path(rng):
    p = P(0.7, 1.0, 5)
    A, B = rng.standard_normal(3), rng.standard_normal(3)
    path = lambda t: SymTensor(2, A + t * B + t * t * A[::-1])
    t, h = 0.4, 1e-5
    dF = (C.apply_Fn(path(t + h), p).entries - C.apply_Fn(path(t - h), p).entries) / (2 * h)
    lhs = contract(path(t), SymTensor(2, dF))
    hh = lambda tt: C.h_n(float(frobenius(path(tt))) ** 2, p)
    rhs = 0.5 * (hh(t + h) - hh(t - h)) / (2 * h)
    assert lhs == pytest.approx(rhs, rel=1e-6)
    assert C.h_n(0.0, p) == 0.0


def test_h_n_sandwich_constants():
    s = np.logspace(-4, 8, 80)
    for a, n in ((0.5, 4), (1.0, 16)):
        c, Cu = C.hn_sandwich_fit(P(a, 1.0, n), s)
        assert c > 0 and math.isfinite(Cu) and Cu > 0


# --- inequality oracles ----------------------------------------------------------

def test_lemma1_examples():
    y = np.logspace(-5, 6, 50)
    lo, hi = C.lemma1_gap(y, np.ones_like(y))
    assert np.all(np.abs(lo) <= 1e-12 * (1 + y))
    assert np.all(np.abs(hi) <= 1e-12 * (1 + y))
    lo, hi = C.lemma1_gap(1.0, 2.0)
    assert abs(float(lo)) < 1e-15 and float(hi) >= 0


def test_lemma1_sampled(rng):
    y = np.concatenate([rng.uniform(0, 1e6, 50000), np.exp(rng.uniform(-20, math.log(1e6), 50000))])
    a = rng.uniform(1e-3, 5.0, y.size)
    lo, hi = C.lemma1_gap(y, a)
    sc = C.lemma1_scale(y, a)
    assert np.all(lo >= -1e-12 * sc) and np.all(hi >= -1e-12 * sc)


def test_lemma2_examples():
    p = P(1.0, 1.0)
    T = diag(1, 0)
    assert C.lemma2_gap(T, T, p) == 0.0
    k = C.lemma2_kappa(1.0)
    assert C.lemma2_gap(T, SymTensor.zeros(2), p) == pytest.approx(0.5 - k / 4, abs=1e-15)


def test_lemma2_adopted_kappa_holds(rng):
    for a in (0.1, 0.5, 1.0, 2.0):
        p = P(a, 1.0)
        T, S = rand_sym(rng, 2, 25000, 1e-3, 1e3), rand_sym(rng, 2, 25000, 1e-3, 1e3)
        assert np.min(C.lemma2_gap(T, S, p)) >= -1e-12
        assert C.lemma2_empirical_kappa(T, S, p) >= C.lemma2_kappa(a)


def test_lemma2_kappa_forms_agree_at_one():
    assert C.lemma2_kappa(1.0) == C.lemma2_kappa_specform(1.0) == C.lemma2_kappa_maxform(1.0) == 1.0
    assert C.lemma2_kappa(0.5) == pytest.approx(2.0 ** -1.5)
    assert C.lemma2_kappa(2.0) == 1.0
