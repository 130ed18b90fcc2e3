"""Counter-based random streams and exact Poisson/binomial variates.

Generator ``splitmix64-cell/v1``: every (key, cell) pair owns an independent
SplitMix64 stream whose initial state is ``mix64(key ^ mix64(cell))``.  The
``t``-th output of that stream is ``mix64(state + (t + 1) * GOLDEN)``, so any
draw is addressable without generating the ones before it.  This makes
sampling independent of evaluation order and vectorizes over cells.

Poisson draws use inversion for rates below 10 and Hörmann's transformed
rejection with squeeze (PTRS) above.  Binomial draws use inversion when the
mean is below 10 and Hörmann's BTRS otherwise.  Rejection methods consume
counters ``2t`` and ``2t + 1`` on attempt ``t``.
"""

import numpy as np
from scipy.special import gammaln

GENERATOR_NAME = "splitmix64-cell/v1"

_MASK64 = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MAX_ATTEMPTS = 10_000


def _mix64(z):
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def mix_words(*words) -> int:
    """Hash a sequence of nonnegative integers into one 64-bit key."""
    h = np.uint64(0x6A09E667F3BCC909)
    for w in words:
        with np.errstate(over="ignore"):
            h = _mix64(np.uint64(h) ^ _mix64(np.uint64(int(w) & _MASK64)) + _GOLDEN)
    return int(h)


def cell_states(key, cells) -> np.ndarray:
    cells = np.asarray(cells, dtype=np.uint64)
    return _mix64(np.uint64(key & _MASK64) ^ _mix64(cells))


def uniforms(states, counter) -> np.ndarray:
    """Open-interval uniforms in (0, 1) at position `counter` of each stream."""
    counter = np.asarray(counter, dtype=np.uint64)
    with np.errstate(over="ignore"):
        bits = _mix64(states + (counter + np.uint64(1)) * _GOLDEN)
    return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53


def poisson(lam, states) -> np.ndarray:
    """One Poisson(`lam`) variate per stream."""
    lam = np.asarray(lam, dtype=np.float64).ravel()
    states = np.asarray(states, dtype=np.uint64).ravel()
    out = np.zeros(lam.shape, dtype=np.int64)
    small = (lam > 0) & (lam < 10)
    large = lam >= 10
    if np.any(small):
        out[small] = _poisson_inversion(lam[small], states[small])
    if np.any(large):
        out[large] = _poisson_ptrs(lam[large], states[large])
    return out


def _poisson_inversion(lam, states):
    u = uniforms(states, 0)
    k = np.zeros(lam.shape, dtype=np.int64)
    pmf = np.exp(-lam)
    cdf = pmf.copy()
    active = u > cdf
    step = 0
    while np.any(active) and step < 1000:
        step += 1
        idx = np.nonzero(active)[0]
        k[idx] += 1
        pmf[idx] *= lam[idx] / k[idx]
        cdf[idx] += pmf[idx]
        # pmf underflow: the residual mass is below double precision
        active[idx] = (u[idx] > cdf[idx]) & (pmf[idx] > 0)
    return k


def _poisson_ptrs(lam, states):
    slam = np.sqrt(lam)
    loglam = np.log(lam)
    b = 0.931 + 2.53 * slam
    a = -0.059 + 0.02483 * b
    invalpha = 1.1239 + 1.1328 / (b - 3.4)
    vr = 0.9277 - 3.6224 / (b - 2)
    out = np.zeros(lam.shape, dtype=np.int64)
    pending = np.arange(lam.size)
    for t in range(_MAX_ATTEMPTS):
        if pending.size == 0:
            return out
        s = states[pending]
        U = uniforms(s, 2 * t) - 0.5
        V = uniforms(s, 2 * t + 1)
        us = 0.5 - np.abs(U)
        aa, bb, ll = a[pending], b[pending], lam[pending]
        k = np.floor((2 * aa / us + bb) * U + ll + 0.43)
        quick = (us >= 0.07) & (V <= vr[pending])
        skip = (k < 0) | ((us < 0.013) & (V > us))
        kk = np.maximum(k, 0)
        lhs = np.log(V) + np.log(invalpha[pending]) - np.log(aa / (us * us) + bb)
        rhs = -ll + kk * loglam[pending] - gammaln(kk + 1)
        accept = quick | (~skip & (lhs <= rhs))
        out[pending[accept]] = k[accept].astype(np.int64)
        pending = pending[~accept]
    raise RuntimeError("Poisson rejection sampler exceeded its attempt budget")


def binomial(n, p, states) -> np.ndarray:
    """One Binomial(`n`, `p`) variate per stream."""
    n = np.asarray(n, dtype=np.int64).ravel()
    p = np.clip(np.asarray(p, dtype=np.float64).ravel(), 0.0, 1.0)
    states = np.asarray(states, dtype=np.uint64).ravel()
    flip = p > 0.5
    q = np.where(flip, 1.0 - p, p)
    out = np.zeros(n.shape, dtype=np.int64)
    live = (n > 0) & (q > 0)
    small = live & (n * q < 10)
    large = live & ~small
    if np.any(small):
        out[small] = _binomial_inversion(n[small], q[small], states[small])
    if np.any(large):
        out[large] = _binomial_btrs(n[large], q[large], states[large])
    return np.where(flip, n - out, out)


def _binomial_inversion(n, p, states):
    u = uniforms(states, 0)
    q = 1.0 - p
    ratio = p / q
    k = np.zeros(n.shape, dtype=np.int64)
    pmf = np.exp(n * np.log1p(-p))
    cdf = pmf.copy()
    active = u > cdf
    while np.any(active):
        idx = np.nonzero(active)[0]
        pmf[idx] *= (n[idx] - k[idx]) / (k[idx] + 1) * ratio[idx]
        k[idx] += 1
        cdf[idx] += pmf[idx]
        active[idx] = (u[idx] > cdf[idx]) & (pmf[idx] > 0) & (k[idx] < n[idx])
    return k


def _binomial_btrs(n, p, states):
    q = 1.0 - p
    nf = n.astype(np.float64)
    spq = np.sqrt(nf * p * q)
    b = 1.15 + 2.53 * spq
    a = -0.0873 + 0.0248 * b + 0.01 * p
    c = nf * p + 0.5
    vr = 0.92 - 4.2 / b
    alpha = (2.83 + 5.1 / b) * spq
    lpq = np.log(p / q)
    mode = np.floor((nf + 1) * p)
    h = gammaln(mode + 1) + gammaln(nf - mode + 1)
    out = np.zeros(n.shape, dtype=np.int64)
    pending = np.arange(n.size)
    for t in range(_MAX_ATTEMPTS):
        if pending.size == 0:
            return out
        s = states[pending]
        U = uniforms(s, 2 * t) - 0.5
        V = uniforms(s, 2 * t + 1)
        us = 0.5 - np.abs(U)
        aa, bb, nn = a[pending], b[pending], nf[pending]
        k = np.floor((2 * aa / us + bb) * U + c[pending])
        inside = (k >= 0) & (k <= nn)
        quick = inside & (us >= 0.07) & (V <= vr[pending])
        kk = np.clip(k, 0, nn)
        lhs = np.log(V * alpha[pending] / (aa / (us * us) + bb))
        rhs = h[pending] - gammaln(kk + 1) - gammaln(nn - kk + 1) + (kk - mode[pending]) * lpq[pending]
        accept = quick | (inside & (lhs <= rhs))
        out[pending[accept]] = k[accept].astype(np.int64)
        pending = pending[~accept]
    raise RuntimeError("binomial rejection sampler exceeded its attempt budget")
