"""Compiled scalar kernels for the radial constitutive profiles.

The regularisation index is passed as a float with ``0.0`` standing for
``n = inf`` (no regulariser).  Each profile is written once as a scalar
``njit`` function and exported to numpy as a ufunc.
"""

import math
from functools import lru_cache

import numba as nb
import numpy as np

_SIG2 = ["float64(float64, float64)"]
_SIG3 = ["float64(float64, float64, float64)"]


@nb.njit(cache=True)
def powp(s, p):
    if s == 0.0:
        if p == 0.0:
            return 1.0
        return 0.0 if p > 0.0 else math.inf
    return math.exp(p * math.log(s))


@nb.njit(cache=True)
def phi_F_s(s, a):
    if s <= 1.0:
        return math.exp(-math.log1p(powp(s, a)) / a)
    return math.exp(-math.log1p(powp(s, -a)) / a - math.log(s))


@nb.njit(cache=True)
def f_s(s, a):
    if s <= 1.0:
        return s * math.exp(-math.log1p(powp(s, a)) / a)
    return math.exp(-math.log1p(powp(s, -a)) / a)


@nb.njit(cache=True)
def df_s(s, a):
    if s <= 1.0:
        return math.exp(-(1.0 + 1.0 / a) * math.log1p(powp(s, a)))
    return math.exp(-(1.0 + 1.0 / a) * math.log1p(powp(s, -a)) - (a + 1.0) * math.log(s))


@nb.njit(cache=True)
def phi_reg_s(s, n):
    if n == 0.0:
        return 0.0
    sb = powp(s, 1.0 - 1.0 / n)
    return 1.0 / (n * (1.0 + sb))


@nb.njit(cache=True)
def dfreg_s(s, n):
    if n == 0.0:
        return 0.0
    sb = powp(s, 1.0 - 1.0 / n)
    q = 1.0 / (1.0 + sb)
    return q * (q + sb * q / n) / n


@nb.njit(cache=True)
def fn_s(s, a, n):
    return f_s(s, a) + s * phi_reg_s(s, n)


@nb.njit(cache=True)
def dfn_s(s, a, n):
    return df_s(s, a) + dfreg_s(s, n)


@nb.njit(cache=True)
def fn_dfn(s, a, n):
    """``(f_n(s), f_n'(s))`` sharing one ``log s``; used inside the root-find."""
    if s == 0.0:
        if n == 0.0:
            return 0.0, 1.0
        if n == 1.0:
            return 0.0, 1.5
        return 0.0, 1.0 + 1.0 / n
    ls = math.log(s)
    if s <= 1.0:
        sa = math.exp(a * ls)
        phi = math.exp(-math.log1p(sa) / a)
        f = s * phi
        df = phi / (1.0 + sa)
    else:
        sma = math.exp(-a * ls)
        lg = math.log1p(sma) / a
        f = math.exp(-lg)
        df = f / s * sma / (1.0 + sma)
    if n != 0.0:
        sb = math.exp((1.0 - 1.0 / n) * ls)
        q = 1.0 / (1.0 + sb)
        f += s * q / n
        df += q * (q + sb * q / n) / n
    return f, df


@nb.vectorize(_SIG2, cache=True)
def phi_F(s, a):
    return phi_F_s(s, a)


@nb.vectorize(_SIG2, cache=True)
def profile_f(s, a):
    return f_s(s, a)


@nb.vectorize(_SIG2, cache=True)
def dprofile_f(s, a):
    return df_s(s, a)


@nb.vectorize(_SIG2, cache=True)
def phi_reg(s, n):
    return phi_reg_s(s, n)


@nb.vectorize(_SIG2, cache=True)
def dprofile_reg(s, n):
    return dfreg_s(s, n)


@nb.vectorize(_SIG3, cache=True)
def profile_fn(s, a, n):
    return fn_s(s, a, n)


@nb.vectorize(_SIG3, cache=True)
def dprofile_fn(s, a, n):
    return dfn_s(s, a, n)


# Newton is quadratic: a step below ZSTOP leaves an error of order ZSTOP^2
ZSTOP = 1e-9
MAXIT = 200


@nb.njit(cache=True)
def logfn_slope(z, a, n):
    """``(log f_n(e^z), d log f_n(e^z) / dz)``.

    Written in ``z`` so that neither tiny nor huge ``s = e^z`` overflows, and
    with the regulariser entering through ``log1p`` of its ratio to ``f``.
    """
    if z <= 0.0:
        sa = math.exp(a * z)
        logphi = -math.log1p(sa) / a
        c1 = 1.0 / (1.0 + sa)
        logf = z + logphi
        if n == 0.0:
            return logf, c1
        sb = math.exp((1.0 - 1.0 / n) * z)
        q = 1.0 / (1.0 + sb)
        r = q / (n * math.exp(logphi))
        rq = r * q * (1.0 + sb / n)
    else:
        sma = math.exp(-a * z)
        logf = -math.log1p(sma) / a
        c1 = sma / (1.0 + sma)
        if n == 0.0:
            return logf, c1
        es = math.exp(-z)
        em = math.exp(-z / n)
        den = es + em
        r = 1.0 / (n * math.exp(logf) * den)
        rq = r * (es + em / n) / den
    return logf + math.log1p(r), (c1 + rq) / (1.0 + r)


ZMAX = 709.0


@nb.njit(cache=True)
def solve_one(y, a, n, phi0):
    """Root of ``f_n(s) = y``; returns -1.0 on failure (NaN on bad input).

    Newton on ``log f_n(e^z) = log y`` inside a shrinking bracket in ``z``.
    The log map keeps the iteration quadratic both near the origin and in
    the slowly growing tail of the regularised profile.
    """
    if not (y >= 0.0) or not math.isfinite(y):
        return math.nan
    if y == 0.0:
        return 0.0
    ly = math.log(y)
    zl = ly - math.log(phi0)
    zh = ly + math.log1p(max(n, 1.0) * (1.0 + y))
    k = 0
    while logfn_slope(zh, a, n)[0] < ly:
        zh = zh + max(0.6931471805599453, zh)
        k += 1
        if k > 64 or zh > ZMAX:
            return -1.0
    z = zl
    for _ in range(MAXIT):
        g, slope = logfn_slope(z, a, n)
        g -= ly
        if g == 0.0:
            return math.exp(z)
        if g < 0.0:
            zl = max(zl, z)
        else:
            zh = min(zh, z)
        zn = z - g / slope if slope > 0.0 else math.nan
        # convergence is tested before the bracket so roundoff-sized steps
        # cannot trigger a bisection of a wide bracket
        if abs(zn - z) <= ZSTOP * max(1.0, abs(z)):
            return math.exp(zn)
        if not (zn > zl and zn < zh):
            zn = 0.5 * (zl + zh)
        z = zn
    return -1.0


# ---------------------------------------------------------------------------
# tabulated predictor
#
# ``z(ly) = log s`` as a function of ``ly = log y`` is smooth, so a cubic
# Hermite table on a uniform ``ly`` grid (node slopes from the exact
# derivative) predicts the root to about 1e-10; one Newton step then finishes.
# The result depends on ``y`` alone, never on a previous iterate.

TABLE_LY0 = math.log(1e-12)
TABLE_LY1 = math.log(1e6)
TABLE_SIZE = 8192


@nb.njit(cache=True)
def build_table(a, n, phi0, ly0, ly1, size):
    """Nodes ``z_i`` and slopes ``dz/dly`` on ``[ly0, ly1]``; truncated at the first failure."""
    h = (ly1 - ly0) / (size - 1)
    zs = np.empty(size)
    dz = np.empty(size)
    used = 0
    for i in range(size):
        s = solve_one(math.exp(ly0 + i * h), a, n, phi0)
        if not (s > 0.0) or not math.isfinite(s):
            break
        z = math.log(s)
        zs[i] = z
        dz[i] = 1.0 / logfn_slope(z, a, n)[1]
        used += 1
    return zs[:used], dz[:used], h


@nb.njit(cache=True)
def solve_tab(y, a, n, phi0, ly0, h, zs, dz):
    """Root of ``f_n(s) = y`` from the tabulated predictor plus Newton."""
    if not (y > 0.0) or not math.isfinite(y):
        return solve_one(y, a, n, phi0)
    ly = math.log(y)
    pos = (ly - ly0) / h
    i = int(math.floor(pos))
    if i < 0 or i >= zs.size - 1:
        return solve_one(y, a, n, phi0)
    t = pos - i
    t2 = t * t
    t3 = t2 * t
    z = ((2.0 * t3 - 3.0 * t2 + 1.0) * zs[i] + (t3 - 2.0 * t2 + t) * h * dz[i]
         + (3.0 * t2 - 2.0 * t3) * zs[i + 1] + (t3 - t2) * h * dz[i + 1])
    for _ in range(4):
        g, slope = logfn_slope(z, a, n)
        g -= ly
        if g == 0.0:
            return math.exp(z)
        if not (slope > 0.0):
            break
        zn = z - g / slope
        if abs(zn - z) <= ZSTOP * max(1.0, abs(z)):
            return math.exp(zn)
        z = zn
    return solve_one(y, a, n, phi0)


@nb.njit(cache=True)
def solve_many(y, a, n, phi0, ly0, h, zs, dz, out):
    bad = 0
    for i in range(y.size):
        s = solve_tab(y[i], a, n, phi0, ly0, h, zs, dz)
        if not (s >= 0.0):
            bad += 1
        out[i] = s
    return bad


@nb.njit(cache=True)
def solve_many_cold(y, a, n, phi0, out):
    bad = 0
    for i in range(y.size):
        s = solve_one(y[i], a, n, phi0)
        if not (s >= 0.0):
            bad += 1
        out[i] = s
    return bad


@nb.njit(cache=True)
def invert_field(E, w, a, n, phi0, ly0, h, zs, dz, T, s_out):
    """Pointwise ``T = F_n^{-1}(E)`` on ``(ncomp, npts)`` arrays.

    ``w`` holds the contraction weights (1 on the diagonal, 2 off it).
    Returns the number of nodes where the root-find failed.
    """
    nc, npts = E.shape
    bad = 0
    for p in range(npts):
        y2 = 0.0
        for c in range(nc):
            y2 += w[c] * E[c, p] * E[c, p]
        y = math.sqrt(y2)
        s = solve_tab(y, a, n, phi0, ly0, h, zs, dz)
        if not (s >= 0.0):
            bad += 1
            s = math.nan
        s_out[p] = s
        fac = s / y if y > 0.0 else 0.0
        for c in range(nc):
            T[c, p] = fac * E[c, p]
    return bad


# ---------------------------------------------------------------------------
# radial integrals
#
# ``int_0^s g(t) dt`` for g = f_n (the potential) or g = t f_n'(t) (the
# conjugate, since s f_n(s) - int f_n = int t f_n').  A fixed Gauss-Legendre
# rule keeps the result a smooth function of ``s``, which an adaptive rule
# does not.  On [0, min(s,1)] the map t = r x^2 doubles the weak regularity at
# the origin; [1, s] is split into unit panels in log t.

GL_NODES, GL_WEIGHTS = (0.5 * (v + 1.0) if i == 0 else 0.5 * v
                        for i, v in enumerate(np.polynomial.legendre.leggauss(48)))


@nb.njit(cache=True)
def _radial_g(t, a, n, conj):
    if conj:
        return t * dfn_s(t, a, n)
    return fn_s(t, a, n)


@nb.njit(cache=True)
def radial_int_one(s, a, n, conj, xg, wg):
    if s <= 0.0:
        return 0.0
    r = min(s, 1.0)
    acc = 0.0
    for i in range(xg.size):
        x = xg[i]
        acc += wg[i] * 2.0 * r * x * _radial_g(r * x * x, a, n, conj)
    if s > 1.0:
        L = math.log(s)
        npan = max(1, int(math.ceil(L)))
        hp = L / npan
        for j in range(npan):
            for i in range(xg.size):
                u = (j + xg[i]) * hp
                t = math.exp(u)
                acc += wg[i] * hp * t * _radial_g(t, a, n, conj)
    return acc


@nb.njit(cache=True)
def radial_int_many(s, a, n, conj, xg, wg, out):
    for i in range(s.size):
        out[i] = radial_int_one(s[i], a, n, conj, xg, wg)


def n_code(n) -> float:
    return 0.0 if n == math.inf else float(n)


@lru_cache(maxsize=64)
def root_table(a: float, n: float, phi0: float) -> tuple[float, float, np.ndarray, np.ndarray]:
    """``(ly0, h, zs, dz)`` predictor table for ``f_n(s) = y``, cached per profile."""
    zs, dz, h = build_table(a, n, phi0, TABLE_LY0, TABLE_LY1, TABLE_SIZE)
    zs.setflags(write=False)
    dz.setflags(write=False)
    return TABLE_LY0, h, zs, dz


__all__ = [
    "phi_F", "profile_f", "dprofile_f", "phi_reg", "dprofile_reg", "profile_fn",
    "dprofile_fn", "radial_int_many", "solve_many", "solve_many_cold", "invert_field", "build_table", "n_code",
]
