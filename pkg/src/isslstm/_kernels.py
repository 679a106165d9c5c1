"""Hot inner loops: LSTM layer forward/backward over a sequence and the
2-state bound recursion.

Each kernel exists twice: a numba ``@njit`` version and a pure-numpy
version with identical semantics. The dispatch names at the bottom pick the
numba path unless numba is missing or ``ISSLSTM_NO_NUMBA`` is set to a
truthy value (``1``, ``true``, ``yes``). Both paths are always importable so
tests and ``benchmarks/bench_kernels.py`` can compare them directly.

Parameter layout (gate order f, i, o, g along axis 0):
    W: (4, n, m)   R: (4, n, n)   b: (4, n)
"""

import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

_FLAG = os.environ.get("ISSLSTM_NO_NUMBA", "").strip().lower()
USE_NUMBA = HAVE_NUMBA and _FLAG not in ("1", "true", "yes", "on")


# ---------------------------------------------------------------------------
# pure numpy
# ---------------------------------------------------------------------------

def _sigmoid_np(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def layer_forward_numpy(W, R, b, X, c0, h0):
    N = X.shape[0]
    n = R.shape[1]
    C = np.empty((N + 1, n))
    H = np.empty((N + 1, n))
    G = np.empty((N, 4, n))
    TC = np.empty((N, n))
    C[0] = c0
    H[0] = h0
    # input contribution for all steps at once: (N, 4, n)
    XW = np.einsum("jrq,tq->tjr", W, X) + b[None, :, :]
    for t in range(N):
        z = XW[t] + R @ H[t]
        G[t, :3] = _sigmoid_np(z[:3])
        G[t, 3] = np.tanh(z[3])
        c = G[t, 0] * C[t] + G[t, 1] * G[t, 3]
        tc = np.tanh(c)
        C[t + 1] = c
        TC[t] = tc
        H[t + 1] = G[t, 2] * tc
    return C, H, G, TC


def layer_backward_numpy(W, R, X, C, H, G, TC, dH):
    N = X.shape[0]
    n = R.shape[1]
    dZ = np.empty((N, 4, n))
    dh_next = np.zeros(n)
    dc_next = np.zeros(n)
    for t in range(N - 1, -1, -1):
        f, i, o, g = G[t]
        tc = TC[t]
        dh = dH[t + 1] + dh_next
        dc = dc_next + dh * o * (1.0 - tc * tc)
        dZ[t, 0] = dc * C[t] * f * (1.0 - f)
        dZ[t, 1] = dc * g * i * (1.0 - i)
        dZ[t, 2] = dh * tc * o * (1.0 - o)
        dZ[t, 3] = dc * i * (1.0 - g * g)
        dc_next = dc * f
        dh_next = np.einsum("jr,jrq->q", dZ[t], R)
    dW = np.einsum("tjr,tq->jrq", dZ, X)
    dR = np.einsum("tjr,tq->jrq", dZ, H[:-1])
    db = dZ.sum(axis=0)
    dX = np.einsum("tjr,jrq->tq", dZ, W)
    return dW, dR, db, dX, dc_next, dh_next


def envelope_recursion_numpy(A, Bu, Bb, bg_inf, e0, u_norms):
    """Batched ``e_k = A e_{k-1} + Bu |u_{k-1}| + Bb |b_g|``.

    e0: (B, 2), u_norms: (B, N) -> (B, N + 1, 2)
    """
    B, N = u_norms.shape
    E = np.empty((B, N + 1, 2))
    E[:, 0] = e0
    drift = Bb * bg_inf
    for k in range(N):
        E[:, k + 1] = E[:, k] @ A.T + u_norms[:, k, None] * Bu[None, :] + drift
    return E


# ---------------------------------------------------------------------------
# numba
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True)
    def _sigmoid_scalar(z):
        if z >= 0.0:
            return 1.0 / (1.0 + np.exp(-z))
        ez = np.exp(z)
        return ez / (1.0 + ez)

    @njit(cache=True)
    def layer_forward_numba(W, R, b, X, c0, h0):
        N = X.shape[0]
        m = X.shape[1]
        n = R.shape[1]
        C = np.empty((N + 1, n))
        H = np.empty((N + 1, n))
        G = np.empty((N, 4, n))
        TC = np.empty((N, n))
        for r in range(n):
            C[0, r] = c0[r]
            H[0, r] = h0[r]
        for t in range(N):
            for j in range(4):
                for r in range(n):
                    z = b[j, r]
                    for q in range(m):
                        z += W[j, r, q] * X[t, q]
                    for q in range(n):
                        z += R[j, r, q] * H[t, q]
                    if j < 3:
                        G[t, j, r] = _sigmoid_scalar(z)
                    else:
                        G[t, j, r] = np.tanh(z)
            for r in range(n):
                c = G[t, 0, r] * C[t, r] + G[t, 1, r] * G[t, 3, r]
                tc = np.tanh(c)
                C[t + 1, r] = c
                TC[t, r] = tc
                H[t + 1, r] = G[t, 2, r] * tc
        return C, H, G, TC

    @njit(cache=True)
    def layer_backward_numba(W, R, X, C, H, G, TC, dH):
        N = X.shape[0]
        m = X.shape[1]
        n = R.shape[1]
        dW = np.zeros((4, n, m))
        dR = np.zeros((4, n, n))
        db = np.zeros((4, n))
        dX = np.zeros((N, m))
        dh_next = np.zeros(n)
        dc_next = np.zeros(n)
        dz = np.empty((4, n))
        for t in range(N - 1, -1, -1):
            for r in range(n):
                f = G[t, 0, r]
                i = G[t, 1, r]
                o = G[t, 2, r]
                g = G[t, 3, r]
                tc = TC[t, r]
                dh = dH[t + 1, r] + dh_next[r]
                dc = dc_next[r] + dh * o * (1.0 - tc * tc)
                dz[0, r] = dc * C[t, r] * f * (1.0 - f)
                dz[1, r] = dc * g * i * (1.0 - i)
                dz[2, r] = dh * tc * o * (1.0 - o)
                dz[3, r] = dc * i * (1.0 - g * g)
                dc_next[r] = dc * f
            for q in range(n):
                dh_next[q] = 0.0
            for j in range(4):
                for r in range(n):
                    d = dz[j, r]
                    db[j, r] += d
                    for q in range(m):
                        dW[j, r, q] += d * X[t, q]
                        dX[t, q] += W[j, r, q] * d
                    for q in range(n):
                        dR[j, r, q] += d * H[t, q]
                        dh_next[q] += R[j, r, q] * d
        return dW, dR, db, dX, dc_next, dh_next

    @njit(cache=True)
    def envelope_recursion_numba(A, Bu, Bb, bg_inf, e0, u_norms):
        B, N = u_norms.shape
        E = np.empty((B, N + 1, 2))
        for s in range(B):
            c = e0[s, 0]
            h = e0[s, 1]
            E[s, 0, 0] = c
            E[s, 0, 1] = h
            for k in range(N):
                u = u_norms[s, k]
                nc = A[0, 0] * c + A[0, 1] * h + Bu[0] * u + Bb[0] * bg_inf
                nh = A[1, 0] * c + A[1, 1] * h + Bu[1] * u + Bb[1] * bg_inf
                c = nc
                h = nh
                E[s, k + 1, 0] = c
                E[s, k + 1, 1] = h
        return E


if USE_NUMBA:
    layer_forward = layer_forward_numba
    layer_backward = layer_backward_numba
    envelope_recursion = envelope_recursion_numba
else:
    layer_forward = layer_forward_numpy
    layer_backward = layer_backward_numpy
    envelope_recursion = envelope_recursion_numpy


def backend():
    """Name of the active kernel path."""
    return "numba" if USE_NUMBA else "numpy"
