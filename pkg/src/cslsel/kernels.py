"""Per-pixel numeric kernels.

Each kernel has a loop implementation (compiled with numba when available,
see ``JIT``) and a vectorised numpy implementation; ``LOOPS`` and ``NUMPY``
expose both so they can be checked and timed against each other.

Dispatch: the per-pixel kernels always run vectorised. They are bound by the
residual sort and memory traffic, so the compiled loops are no faster while
loading numba costs ~0.7 s per process. The exhaustive partition search is
compute bound and runs compiled (about 13x faster at N = 14) unless
``CSL_DISABLE_NUMBA=1``.
"""
import numpy as np

from ._accel import HAVE_NUMBA, njit

__all__ = [
    "HAVE_NUMBA",
    "pixel_stats",
    "gram2",
    "spectral_assign",
    "gaussian_weights",
    "brute_force_search",
]


# --- per-pixel max confidence / residual dispersion -------------------------

def _pixel_stats_loop(probs):
    K, N = probs.shape
    pmax = np.empty(N, dtype=np.float64)
    argmax = np.empty(N, dtype=np.int32)
    disp = np.empty(N, dtype=np.float64)
    buf = np.empty(K, dtype=np.float64)
    for n in range(N):
        best = probs[0, n]
        kbest = 0
        for k in range(1, K):
            if probs[k, n] > best:
                best = probs[k, n]
                kbest = k
        # insertion sort so the residual sums do not depend on class order
        for k in range(K):
            x = probs[k, n]
            j = k - 1
            while j >= 0 and buf[j] > x:
                buf[j + 1] = buf[j]
                j -= 1
            buf[j + 1] = x
        s = 0.0
        for k in range(K - 1):
            s += buf[k]
        mu = s / (K - 1)
        ss = 0.0
        for k in range(K - 1):
            d = buf[k] - mu
            ss += d * d
        pmax[n] = buf[K - 1]
        argmax[n] = kbest
        disp[n] = -ss / (K - 1)
    return pmax, argmax, disp


def _pixel_stats_numpy(probs):
    K = probs.shape[0]
    argmax = np.argmax(probs, axis=0).astype(np.int32)
    srt = np.sort(probs, axis=0)
    res = srt[:-1]
    s = res[0].copy()
    for k in range(1, K - 1):
        s += res[k]
    mu = s / (K - 1)
    ss = np.zeros_like(mu)
    for k in range(K - 1):
        d = res[k] - mu
        ss += d * d
    return srt[-1].copy(), argmax, -ss / (K - 1)


# --- 2x2 Gram matrix ---------------------------------------------------------

def _gram2_loop(phi):
    a = 0.0
    b = 0.0
    d = 0.0
    for n in range(phi.shape[1]):
        x = phi[0, n]
        y = phi[1, n]
        a += x * x
        b += x * y
        d += y * y
    return a, b, d


def _gram2_numpy(phi):
    x, y = phi[0], phi[1]
    return float(np.dot(x, x)), float(np.dot(x, y)), float(np.dot(y, y))


# --- eigenvector-magnitude assignment ----------------------------------------

def _spectral_assign_loop(phi, w1x, w1y, s1, w2x, w2y, s2):
    N = phi.shape[1]
    out = np.empty(N, dtype=np.uint8)
    for n in range(N):
        u1 = abs(w1x * phi[0, n] + w1y * phi[1, n]) / s1
        u2 = abs(w2x * phi[0, n] + w2y * phi[1, n]) / s2
        out[n] = 1 if u2 > u1 else 0
    return out


def _spectral_assign_numpy(phi, w1x, w1y, s1, w2x, w2y, s2):
    u1 = np.abs(w1x * phi[0] + w1y * phi[1]) / s1
    u2 = np.abs(w2x * phi[0] + w2y * phi[1]) / s2
    return (u2 > u1).astype(np.uint8)


# --- Gaussian weights + hard indicator ---------------------------------------

def _gaussian_weights_loop(phi, mu0, mu1, var0, var1, alpha, and_rule):
    N = phi.shape[1]
    w = np.empty(N, dtype=np.float64)
    hard = np.empty(N, dtype=np.bool_)
    for n in range(N):
        d0 = phi[0, n] - mu0
        d1 = phi[1, n] - mu1
        if and_rule:
            h = d0 > 0.0 and d1 > 0.0
        else:
            h = d0 > 0.0 or d1 > 0.0
        hard[n] = h
        if h:
            w[n] = 1.0
        else:
            w[n] = np.exp(-(d0 * d0) / (alpha * var0)) * np.exp(-(d1 * d1) / (alpha * var1))
    return w, hard


def _gaussian_weights_numpy(phi, mu0, mu1, var0, var1, alpha, and_rule):
    d0 = phi[0] - mu0
    d1 = phi[1] - mu1
    if and_rule:
        hard = (d0 > 0.0) & (d1 > 0.0)
    else:
        hard = (d0 > 0.0) | (d1 > 0.0)
    w = np.exp(-(d0 * d0) / (alpha * var0)) * np.exp(-(d1 * d1) / (alpha * var1))
    w[hard] = 1.0
    return w, hard


# --- exhaustive two-way partition --------------------------------------------

def _brute_force_loop(X):
    # X is (N, D). Bit N-1-n of the mask is the class of point n, so ascending
    # masks visit assignment bitstrings in lexicographic order.
    N, D = X.shape
    best_mask = -1
    best_obj = np.inf
    s0 = np.empty(D)
    s1 = np.empty(D)
    for m in range(1, (1 << N) - 1):
        for j in range(D):
            s0[j] = 0.0
            s1[j] = 0.0
        c1 = 0
        for n in range(N):
            if (m >> (N - 1 - n)) & 1:
                c1 += 1
                for j in range(D):
                    s1[j] += X[n, j]
            else:
                for j in range(D):
                    s0[j] += X[n, j]
        c0 = N - c1
        for j in range(D):
            s0[j] /= c0
            s1[j] /= c1
        ss0 = 0.0
        ss1 = 0.0
        for n in range(N):
            if (m >> (N - 1 - n)) & 1:
                for j in range(D):
                    d = X[n, j] - s1[j]
                    ss1 += d * d
            else:
                for j in range(D):
                    d = X[n, j] - s0[j]
                    ss0 += d * d
        obj = ss0 + ss1
        if obj < best_obj:
            best_obj = obj
            best_mask = m
    return best_mask, best_obj


def _class_ss(B, X):
    n = B.sum(axis=1)
    mu = (B[:, :, None] * X[None]).sum(axis=1) / n[:, None]
    dev = X[None] - mu[:, None, :]
    return (B[:, :, None] * dev * dev).sum(axis=(1, 2))


def _brute_force_numpy(X, chunk=1 << 15):
    N = X.shape[0]
    shifts = (N - 1 - np.arange(N))[None, :]
    best_mask, best_obj = -1, np.inf
    for start in range(1, (1 << N) - 1, chunk):
        masks = np.arange(start, min(start + chunk, (1 << N) - 1), dtype=np.int64)
        B = ((masks[:, None] >> shifts) & 1).astype(np.float64)
        obj = _class_ss(1.0 - B, X) + _class_ss(B, X)
        i = int(np.argmin(obj))
        if obj[i] < best_obj:
            best_obj = float(obj[i])
            best_mask = int(masks[i])
    return best_mask, best_obj


LOOPS = {
    "pixel_stats": _pixel_stats_loop,
    "gram2": _gram2_loop,
    "spectral_assign": _spectral_assign_loop,
    "gaussian_weights": _gaussian_weights_loop,
    "brute_force": _brute_force_loop,
}
NUMPY = {
    "pixel_stats": _pixel_stats_numpy,
    "gram2": _gram2_numpy,
    "spectral_assign": _spectral_assign_numpy,
    "gaussian_weights": _gaussian_weights_numpy,
    "brute_force": _brute_force_numpy,
}
# jitted when numba is active, plain Python loops otherwise
JIT = {name: njit(f) for name, f in LOOPS.items()}


def pixel_stats(probs):
    """Max confidence, first argmax and residual dispersion of a ``(K, N)`` array."""
    return _pixel_stats_numpy(np.ascontiguousarray(probs, dtype=np.float64))


def gram2(phi):
    """Entries ``(a, b, d)`` of the symmetric Gram matrix ``phi @ phi.T``."""
    return _gram2_numpy(np.ascontiguousarray(phi, dtype=np.float64))


def spectral_assign(phi, w1, s1, w2, s2):
    phi = np.ascontiguousarray(phi, dtype=np.float64)
    return _spectral_assign_numpy(phi, float(w1[0]), float(w1[1]), float(s1), float(w2[0]), float(w2[1]), float(s2))


def gaussian_weights(phi, mu, var, alpha, and_rule=True):
    phi = np.ascontiguousarray(phi, dtype=np.float64)
    return _gaussian_weights_numpy(phi, float(mu[0]), float(mu[1]), float(var[0]), float(var[1]), float(alpha), bool(and_rule))


def brute_force_search(X):
    """Best two-way split mask of the rows of ``X`` (N, D) by within-class SS."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if HAVE_NUMBA:
        return JIT["brute_force"](X)
    return _brute_force_numpy(X)
