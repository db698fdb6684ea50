"""Compiled particle-filter kernel with a kernel-local xoshiro256** generator.

The generator state is a 4-word array owned by the caller, so each filter
run is reproducible from its seed and independent of thread scheduling.
"""
import math

import numba as nb
import numpy as np

_U = nb.uint64
_INV53 = 1.0 / 9007199254740992.0


def _leaf(**kw):
    # No allocations below, so reference counting is switched off: the
    # increments it adds around each array argument cost more than a draw.
    return nb.njit(nogil=True, cache=True, _nrt=False, **kw)


@nb.njit(inline="always")
def _rotl(x, k):
    return (x << _U(k)) | (x >> _U(64 - k))


@_leaf()
def next_u64(s):
    r = _rotl(s[1] * _U(5), 7) * _U(9)
    t = s[1] << _U(17)
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], 45)
    return r


@_leaf()
def uniform(s):
    """Uniform on [0, 1)."""
    return (next_u64(s) >> _U(11)) * _INV53


@_leaf()
def uniform_open(s):
    """Uniform on (0, 1)."""
    return ((next_u64(s) >> _U(11)) + 0.5) * _INV53


def _ziggurat_tables():
    # Marsaglia-Tsang 128-layer tables for the standard normal
    m1 = 2147483648.0
    dn = tn = 3.442619855899
    vn = 9.91256303526217e-3
    kn = np.zeros(128)
    wn = np.zeros(128)
    fn = np.zeros(128)
    q = vn / math.exp(-0.5 * dn * dn)
    kn[0] = (dn / q) * m1
    kn[1] = 0.0
    wn[0] = q / m1
    wn[127] = dn / m1
    fn[0] = 1.0
    fn[127] = math.exp(-0.5 * dn * dn)
    for i in range(126, 0, -1):
        dn = math.sqrt(-2.0 * math.log(vn / dn + math.exp(-0.5 * dn * dn)))
        kn[i + 1] = (dn / tn) * m1
        tn = dn
        fn[i] = math.exp(-0.5 * dn * dn)
        wn[i] = dn / m1
    return kn, wn, fn


_KN, _WN, _FN = _ziggurat_tables()
_ZIG_R = 3.442619855899


@_leaf()
def _draw_hz(s):
    u = next_u64(s)
    hz = np.int64(u >> _U(32)) - 2147483648
    iz = np.int64(u & _U(127))
    return hz, iz


@_leaf()
def _normal_tail(s, hz, iz):
    while True:
        x = hz * _WN[iz]
        if iz == 0:
            while True:
                x = -math.log(uniform_open(s)) / _ZIG_R
                yy = -math.log(uniform_open(s))
                if yy + yy >= x * x:
                    break
            return _ZIG_R + x if hz > 0 else -_ZIG_R - x
        if _FN[iz] + uniform(s) * (_FN[iz - 1] - _FN[iz]) < math.exp(-0.5 * x * x):
            return x
        hz, iz = _draw_hz(s)
        if abs(hz) < _KN[iz]:
            return hz * _WN[iz]


@_leaf()
def normal(s):
    """Standard normal by the ziggurat method."""
    hz, iz = _draw_hz(s)
    if abs(hz) < _KN[iz]:
        return hz * _WN[iz]
    return _normal_tail(s, hz, iz)


@_leaf()
def _gamma_mt(s, d, cc):
    # Marsaglia-Tsang for shape d + 1/3 >= 1, with cc = 1/sqrt(9 d)
    while True:
        x = normal(s)
        v = 1.0 + cc * x
        if v <= 0.0:
            continue
        v = v * v * v
        u = uniform_open(s)
        if u < 1.0 - 0.0331 * x * x * x * x:
            return d * v
        if math.log(u) < 0.5 * x * x + d * (1.0 - v + math.log(v)):
            return d * v


@_leaf()
def gamma(s, shape):
    """Gamma(shape, 1) by Marsaglia-Tsang, boosted for shape < 1."""
    boost = 1.0
    if shape < 1.0:
        boost = uniform_open(s) ** (1.0 / shape)
        shape += 1.0
    d = shape - 1.0 / 3.0
    return _gamma_mt(s, d, 1.0 / math.sqrt(9.0 * d)) * boost


@_leaf()
def poisson(s, lam):
    """Poisson draw: inversion by products for small means, PTRS otherwise."""
    if lam <= 0.0:
        return 0
    if lam < 10.0:
        lim = math.exp(-lam)
        k = 0
        prod = uniform(s)
        while prod > lim:
            k += 1
            prod *= uniform(s)
        return k
    slam = math.sqrt(lam)
    loglam = math.log(lam)
    bb = 0.931 + 2.53 * slam
    aa = -0.059 + 0.02483 * bb
    inv_alpha = 1.1239 + 1.1328 / (bb - 3.4)
    vr = 0.9277 - 3.6224 / (bb - 2.0)
    while True:
        u = uniform(s) - 0.5
        v = uniform_open(s)
        us = 0.5 - abs(u)
        k = math.floor((2.0 * aa / us + bb) * u + lam + 0.43)
        if us >= 0.07 and v <= vr:
            return np.int64(k)
        if k < 0 or (us < 0.013 and v > us):
            continue
        if (math.log(v) + math.log(inv_alpha) - math.log(aa / (us * us) + bb)
                <= -lam + k * loglam - math.lgamma(k + 1.0)):
            return np.int64(k)


@_leaf()
def ncx2_scaled(s, nu, c, lam):
    """Draw chi'^2_nu(lam) / (2c).

    For nu > 1 uses chi'^2_nu(lam) = (Z + sqrt(lam))^2 + chi^2_{nu-1};
    otherwise the Poisson mixture of central chi-squares.
    """
    if nu > 1.0:
        z = normal(s) + math.sqrt(lam)
        return (z * z + 2.0 * gamma(s, 0.5 * (nu - 1.0))) / (2.0 * c)
    k = poisson(s, 0.5 * lam)
    return gamma(s, 0.5 * nu + k) / c


@_leaf()
def plan_law(nu, gd, gc, gb):
    """Constants of the chi^2_{nu-1} part, so each draw skips a sqrt and a division."""
    for p in range(nu.shape[0]):
        shape = 0.5 * (nu[p] - 1.0)
        gb[p] = 0.0
        if shape < 1.0:
            gb[p] = 1.0 / shape if shape > 0.0 else 0.0
            shape += 1.0
        gd[p] = shape - 1.0 / 3.0
        gc[p] = 1.0 / math.sqrt(9.0 * gd[p])


@_leaf()
def ncx2_planned(s, nu, c, lam, gd, gc, gb):
    """:func:`ncx2_scaled` with constants from :func:`plan_law`; same draws, same values."""
    if nu > 1.0:
        z = normal(s) + math.sqrt(lam)
        boost = 1.0
        if gb > 0.0:
            boost = uniform_open(s) ** gb
        return (z * z + 2.0 * (_gamma_mt(s, gd, gc) * boost)) / (2.0 * c)
    k = poisson(s, 0.5 * lam)
    return gamma(s, 0.5 * nu + k) / c


@_leaf()
def multinomial_indices(s, w, idx, scratch):
    n = w.shape[0]
    m = idx.shape[0]
    acc = 0.0
    for j in range(m):
        acc -= math.log(uniform_open(s))
        scratch[j] = acc
    acc -= math.log(uniform_open(s))
    k = 0
    cum = w[0]
    for j in range(m):
        t = scratch[j] / acc
        while cum < t and k < n - 1:
            k += 1
            cum += w[k]
        idx[j] = k


@_leaf()
def systematic_indices(s, w, idx):
    n = w.shape[0]
    m = idx.shape[0]
    u = uniform(s) / m
    k = 0
    cum = w[0]
    for j in range(m):
        t = u + j / m
        while cum < t and k < n - 1:
            k += 1
            cum += w[k]
        idx[j] = k


@nb.njit(nogil=True, cache=True)
def particle_filter(y, delta, A, B, b, sigma2, xi0, nu, c, rho, state,
                    trapezoid, systematic, xi_out, anc_out, ess_out, wsum_out, lz_out, w_final,
                    owner):
    """Bootstrap filter with the exact transition as proposal.

    Per-particle process parameters (``xi0``, ``nu``, ``c``, ``rho``) are
    indexed through ``owner``, which follows each lineage through resampling.

    Outputs (preallocated):
      xi_out[i, j]  rate of particle j after propagation at step i
      anc_out[i, j] pre-resampling index at step i of the particle that
                    survives in slot j
      ess_out, wsum_out  per-step effective sample size / weight sum
      lz_out        per-step log mean of the unnormalized observation densities
      w_final       normalized weights at the last step
      owner         parameter index per particle at the last step
    Returns -1, or the first step at which every weight vanished.
    """
    n1 = y.shape[0]
    n_p = xi0.shape[0]
    n_law = nu.shape[0]
    gd = np.empty(n_law)
    gc = np.empty(n_law)
    gb = np.empty(n_law)
    plan_law(nu, gd, gc, gb)
    cur = np.empty(n_p)
    g = np.zeros(n_p)
    newx = np.empty(n_p)
    newg = np.empty(n_p)
    lw = np.empty(n_p)
    w = np.empty(n_p)
    idx = np.empty(n_p, np.int64)
    scratch = np.empty(n_p)
    own = np.empty(n_p, np.int64)
    newown = np.empty(n_p, np.int64)
    inv2s = 0.5 / sigma2
    lnorm = -0.5 * math.log(2.0 * math.pi * sigma2)
    for j in range(n_p):
        own[j] = j
        cur[j] = xi0[j]
        xi_out[0, j] = xi0[j]
        anc_out[0, j] = j
        w_final[j] = 1.0 / n_p
    ess_out[0] = n_p
    wsum_out[0] = 1.0
    lz_out[0] = 0.0
    for j in range(n_p):
        owner[j] = own[j]
    for i in range(1, n1):
        mx = -np.inf
        yi = y[i]
        for j in range(n_p):
            p = own[j]
            x = ncx2_planned(state, nu[p], c[p], 2.0 * c[p] * rho[p] * cur[j], gd[p], gc[p], gb[p])
            if trapezoid:
                gg = g[j] + 0.5 * delta * (cur[j] + x)
            else:
                gg = g[j] + delta * x
            sn = math.sin(gg + b)
            # cos(2u) = 1 - 2 sin(u)^2
            f = A * sn - B * (1.0 - 2.0 * sn * sn)
            r = yi - f
            lw[j] = -r * r * inv2s
            newx[j] = x
            newg[j] = gg
            xi_out[i, j] = x
            if lw[j] > mx:
                mx = lw[j]
        if not mx > -np.inf:
            return i
        tot = 0.0
        for j in range(n_p):
            w[j] = math.exp(lw[j] - mx)
            tot += w[j]
        lz_out[i] = mx + math.log(tot / n_p) + lnorm
        sq = 0.0
        acc = 0.0
        for j in range(n_p):
            w[j] /= tot
            sq += w[j] * w[j]
            acc += w[j]
        ess_out[i] = 1.0 / sq
        wsum_out[i] = acc
        if i == n1 - 1:
            for j in range(n_p):
                w_final[j] = w[j]
                owner[j] = own[j]
        if systematic:
            systematic_indices(state, w, idx)
        else:
            multinomial_indices(state, w, idx, scratch)
        for j in range(n_p):
            k = idx[j]
            anc_out[i, j] = k
            cur[j] = newx[k]
            g[j] = newg[k]
            newown[j] = own[k]
        for j in range(n_p):
            own[j] = newown[j]
    return -1


@nb.njit(nogil=True, cache=True)
def trace_lineage(xi_out, anc_out, j):
    """Rate trajectory of the particle at final pre-resampling index ``j``."""
    n1 = xi_out.shape[0]
    path = np.empty(n1)
    k = j
    for i in range(n1 - 1, 0, -1):
        path[i] = xi_out[i, k]
        k = anc_out[i - 1, k]
    path[0] = xi_out[0, k]
    return path


@nb.njit(nogil=True, cache=True)
def trace_all(xi_out, anc_out):
    n1, n_p = xi_out.shape
    paths = np.empty((n_p, n1))
    for j in range(n_p):
        paths[j] = trace_lineage(xi_out, anc_out, j)
    return paths


@_leaf()
def choose_index(state, w):
    u = uniform(state)
    acc = 0.0
    n = w.shape[0]
    for j in range(n):
        acc += w[j]
        if u < acc:
            return j
    return n - 1
