"""Inner loops of the Gibbs samplers.

Every kernel exists twice: a numba ``@njit`` version with scalar loops and a
pure-numpy version that vectorises over topics. Both consume the same
pre-drawn uniforms, so for identical inputs they produce identical
assignments. Set ``MIS2_DISABLE_NUMBA=1`` to route everything through the
numpy versions (useful for debugging and on platforms without numba).

All kernels mutate their count arrays in place.
"""
import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    numba = None

_FLAG = os.environ.get("MIS2_DISABLE_NUMBA", "").strip().lower()
USE_NUMBA = numba is not None and _FLAG not in ("1", "true", "yes", "on")


def backend():
    return "numba" if USE_NUMBA else "numpy"


def _jit(fn):
    if numba is None:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)


# --------------------------------------------------------------------------
# LDA: collapsed Gibbs sweep with per-topic asymmetric word priors
# --------------------------------------------------------------------------

def _lda_sweep_loops(doc_ids, word_ids, z, ndk, nkw, nk, alpha, alpha_sum, beta, u):
    K = nk.shape[0]
    p = np.empty(K)
    for i in range(word_ids.shape[0]):
        d = doc_ids[i]
        w = word_ids[i]
        k = z[i]
        ndk[d, k] -= 1
        nkw[k, w] -= 1
        nk[k] -= 1
        total = 0.0
        for j in range(K):
            total += (ndk[d, j] + beta[j]) * (nkw[j, w] + alpha[j, w]) / (nk[j] + alpha_sum[j])
            p[j] = total
        target = u[i] * total
        k = K - 1
        for j in range(K):
            if p[j] > target:
                k = j
                break
        z[i] = k
        ndk[d, k] += 1
        nkw[k, w] += 1
        nk[k] += 1


def lda_sweep_numpy(doc_ids, word_ids, z, ndk, nkw, nk, alpha, alpha_sum, beta, u):
    K = nk.shape[0]
    for i in range(word_ids.shape[0]):
        d, w, k = doc_ids[i], word_ids[i], z[i]
        ndk[d, k] -= 1
        nkw[k, w] -= 1
        nk[k] -= 1
        cum = np.cumsum((ndk[d] + beta) * (nkw[:, w] + alpha[:, w]) / (nk + alpha_sum))
        k = min(int(np.searchsorted(cum, u[i] * cum[-1], side="right")), K - 1)
        z[i] = k
        ndk[d, k] += 1
        nkw[k, w] += 1
        nk[k] += 1


lda_sweep_numba = _jit(_lda_sweep_loops)


# --------------------------------------------------------------------------
# Fold-in: one document against a frozen topic-word matrix
# --------------------------------------------------------------------------

def _foldin_sweep_loops(word_ids, z, nk, phi, beta, u):
    K = nk.shape[0]
    p = np.empty(K)
    for i in range(word_ids.shape[0]):
        w = word_ids[i]
        nk[z[i]] -= 1
        total = 0.0
        for j in range(K):
            total += (nk[j] + beta[j]) * phi[j, w]
            p[j] = total
        target = u[i] * total
        k = K - 1
        for j in range(K):
            if p[j] > target:
                k = j
                break
        z[i] = k
        nk[k] += 1


def foldin_sweep_numpy(word_ids, z, nk, phi, beta, u):
    K = nk.shape[0]
    for i in range(word_ids.shape[0]):
        w = word_ids[i]
        nk[z[i]] -= 1
        cum = np.cumsum((nk + beta) * phi[:, w])
        k = min(int(np.searchsorted(cum, u[i] * cum[-1], side="right")), K - 1)
        z[i] = k
        nk[k] += 1


foldin_sweep_numba = _jit(_foldin_sweep_loops)


# --------------------------------------------------------------------------
# HDP: direct-assignment sweep over a fixed-capacity topic table
#
# Slot j is live iff active[j]. eta[j] is the global weight of live topic j
# and state[0] holds the unallocated remainder eta_new. A token picks live
# topic k with weight (n_dk + a0*eta_k) * (n_kw + b) / (n_k + V*b) and a
# fresh topic with weight a0 * eta_new / V. A fresh topic takes the first
# free slot and breaks off stick fraction s ~ Beta(1, gamma) of eta_new;
# the s draws come pre-sampled in `sticks`. Topics that lose their last
# token are freed and their weight returns to eta_new. z[i] < 0 marks a
# token not yet seated (first sweep).
#
# stats[0] counts topics opened, stats[1] counts capacity hits.
# --------------------------------------------------------------------------

def _hdp_sweep_loops(doc_ids, word_ids, z, ndk, nkw, nk, active, eta, state,
                     alpha0, word_prior, u, sticks, stats):
    kmax = nk.shape[0]
    V = nkw.shape[1]
    vb = V * word_prior
    p = np.empty(kmax + 1)
    # live slots all sit below hi
    hi = 0
    for j in range(kmax):
        if active[j]:
            hi = j + 1
    n_new = 0
    for i in range(word_ids.shape[0]):
        d = doc_ids[i]
        w = word_ids[i]
        k = z[i]
        if k >= 0:
            ndk[d, k] -= 1
            nkw[k, w] -= 1
            nk[k] -= 1
            if nk[k] == 0:
                active[k] = False
                state[0] += eta[k]
                eta[k] = 0.0
        total = 0.0
        free = -1
        for j in range(hi):
            if active[j]:
                total += (ndk[d, j] + alpha0 * eta[j]) * (nkw[j, w] + word_prior) / (nk[j] + vb)
            elif free < 0:
                free = j
            p[j] = total
        if free < 0 and hi < kmax:
            free = hi
        if free >= 0:
            total += alpha0 * state[0] / V
        else:
            stats[1] += 1
        target = u[i] * total
        k = -1
        for j in range(hi):
            if p[j] > target:
                k = j
                break
        if k < 0:
            if free < 0:
                # numerical edge at full capacity: take the last live topic
                for j in range(hi - 1, -1, -1):
                    if active[j]:
                        k = j
                        break
            else:
                k = free
                s = sticks[n_new]
                n_new += 1
                eta[k] = s * state[0]
                state[0] = (1.0 - s) * state[0]
                active[k] = True
                if k + 1 > hi:
                    hi = k + 1
                stats[0] += 1
        z[i] = k
        ndk[d, k] += 1
        nkw[k, w] += 1
        nk[k] += 1


def hdp_sweep_numpy(doc_ids, word_ids, z, ndk, nkw, nk, active, eta, state,
                    alpha0, word_prior, u, sticks, stats):
    kmax = nk.shape[0]
    V = nkw.shape[1]
    vb = V * word_prior
    live = np.flatnonzero(active)
    hi = int(live[-1]) + 1 if live.size else 0
    n_new = 0
    for i in range(word_ids.shape[0]):
        d, w, k = doc_ids[i], word_ids[i], z[i]
        if k >= 0:
            ndk[d, k] -= 1
            nkw[k, w] -= 1
            nk[k] -= 1
            if nk[k] == 0:
                active[k] = False
                state[0] += eta[k]
                eta[k] = 0.0
        act = active[:hi]
        weights = np.where(act, (ndk[d, :hi] + alpha0 * eta[:hi]) * (nkw[:hi, w] + word_prior) / (nk[:hi] + vb), 0.0)
        holes = np.flatnonzero(~act)
        free = int(holes[0]) if holes.size else (hi if hi < kmax else -1)
        if free >= 0:
            tail = alpha0 * state[0] / V
        else:
            tail = 0.0
            stats[1] += 1
        cum = np.cumsum(weights)
        total = (cum[-1] if hi else 0.0) + tail
        k = int(np.searchsorted(cum, u[i] * total, side="right"))
        if k >= hi:
            if free < 0:
                k = int(np.flatnonzero(act)[-1])
            else:
                k = free
                s = sticks[n_new]
                n_new += 1
                eta[k] = s * state[0]
                state[0] = (1.0 - s) * state[0]
                active[k] = True
                hi = max(hi, k + 1)
                stats[0] += 1
        z[i] = k
        ndk[d, k] += 1
        nkw[k, w] += 1
        nk[k] += 1


hdp_sweep_numba = _jit(_hdp_sweep_loops)


# --------------------------------------------------------------------------
# Antoniak table counts: for each (doc, topic) with n customers,
# m = sum_{i<n} Bernoulli(c / (c + i)) with c = a0 * eta_k.
# Consumes one uniform per token, in doc-major, topic-minor order.
# --------------------------------------------------------------------------

def _table_counts_loops(ndk, active, eta, alpha0, u):
    D, kmax = ndk.shape
    m = np.zeros(kmax, dtype=np.int64)
    pos = 0
    for d in range(D):
        for k in range(kmax):
            n = ndk[d, k]
            if n <= 0 or not active[k]:
                continue
            c = alpha0 * eta[k]
            for i in range(n):
                if i == 0 or u[pos] < c / (c + i):
                    m[k] += 1
                pos += 1
    return m


def table_counts_numpy(ndk, active, eta, alpha0, u):
    m = np.zeros(ndk.shape[1], dtype=np.int64)
    pos = 0
    for d in range(ndk.shape[0]):
        for k in np.flatnonzero((ndk[d] > 0) & active):
            n = int(ndk[d, k])
            c = alpha0 * eta[k]
            i = np.arange(n)
            hits = u[pos:pos + n] < c / (c + i)
            hits[0] = True
            m[k] += int(hits.sum())
            pos += n
    return m


table_counts_numba = _jit(_table_counts_loops)


if USE_NUMBA:
    lda_sweep = lda_sweep_numba
    foldin_sweep = foldin_sweep_numba
    hdp_sweep = hdp_sweep_numba
    table_counts = table_counts_numba
else:
    lda_sweep = lda_sweep_numpy
    foldin_sweep = foldin_sweep_numpy
    hdp_sweep = hdp_sweep_numpy
    table_counts = table_counts_numpy
