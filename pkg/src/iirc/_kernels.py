"""Hot inner loops, compiled with numba when available.

Every kernel has two implementations with identical results: a numba
``@njit`` version and a numpy (or plain Python, where the loop carries
state) fallback.  The numba path is used when numba imports and the
environment variable ``IIRC_NUMBA`` is not ``0``.  Both implementations
stay importable through :data:`numba_impl` and :data:`numpy_impl` so tests
and the benchmark can compare them directly.

Floating point reductions are written in the same summation order on both
paths so the outputs agree bit for bit.
"""

import os
from types import SimpleNamespace

import numpy as np

_MASK64 = (1 << 64) - 1

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None


# --------------------------------------------------------------------------
# numpy / Python reference path
# --------------------------------------------------------------------------


def _xoshiro_fill_py(state, out):
    s0, s1, s2, s3 = (int(v) for v in state)
    for i in range(out.shape[0]):
        x = (s1 * 5) & _MASK64
        x = ((x << 7) | (x >> 57)) & _MASK64
        out[i] = (x * 9) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = ((s3 << 45) | (s3 >> 19)) & _MASK64
    state[0], state[1], state[2], state[3] = s0, s1, s2, s3


def _fisher_yates_py(arr, u):
    n = arr.shape[0]
    for i in range(n - 1, 0, -1):
        j = int(u[n - 1 - i] * (i + 1))
        arr[i], arr[j] = arr[j], arr[i]


def _set_counts_np(truth, pred):
    inter = np.count_nonzero(truth & pred, axis=1).astype(np.int64)
    union = np.count_nonzero(truth | pred, axis=1).astype(np.int64)
    npred = np.count_nonzero(pred, axis=1).astype(np.int64)
    return inter, union, npred


def _confusion_counts_np(truth, pred):
    # float matmul goes through BLAS; counts stay exact below 2**53
    t = truth.astype(np.float64)
    p = pred.astype(np.float64)
    return (t.T @ p).astype(np.int64)


def _herding_np(feats, m):
    n, d = feats.shape
    mu = np.zeros(d)
    for j in range(d):
        acc = 0.0
        for i in range(n):
            acc += feats[i, j]
        mu[j] = acc / n
    chosen = np.empty(m, dtype=np.int64)
    taken = np.zeros(n, dtype=np.bool_)
    running = np.zeros(d)
    for k in range(m):
        dist = np.zeros(n)
        for j in range(d):
            diff = mu[j] - (running[j] + feats[:, j]) / (k + 1)
            dist += diff * diff
        dist[taken] = np.inf
        best = int(np.argmin(dist))
        chosen[k] = best
        taken[best] = True
        running += feats[best]
    return chosen


numpy_impl = SimpleNamespace(
    name="numpy",
    xoshiro_fill=_xoshiro_fill_py,
    fisher_yates=_fisher_yates_py,
    set_counts=_set_counts_np,
    confusion_counts=_confusion_counts_np,
    herding=_herding_np,
)


# --------------------------------------------------------------------------
# numba path
# --------------------------------------------------------------------------


def _build_numba():
    njit = numba.njit(cache=True, nogil=True)
    u64 = np.uint64

    @njit
    def rotl(x, k):
        return (x << u64(k)) | (x >> u64(64 - k))

    @njit
    def xoshiro_fill(state, out):
        s0, s1, s2, s3 = state[0], state[1], state[2], state[3]
        for i in range(out.shape[0]):
            out[i] = rotl(s1 * u64(5), 7) * u64(9)
            t = s1 << u64(17)
            s2 ^= s0
            s3 ^= s1
            s1 ^= s2
            s0 ^= s3
            s2 ^= t
            s3 = rotl(s3, 45)
        state[0], state[1], state[2], state[3] = s0, s1, s2, s3

    @njit
    def fisher_yates(arr, u):
        n = arr.shape[0]
        for i in range(n - 1, 0, -1):
            j = int(u[n - 1 - i] * (i + 1))
            tmp = arr[i]
            arr[i] = arr[j]
            arr[j] = tmp

    @njit
    def set_counts(truth, pred):
        n, c = truth.shape
        inter = np.zeros(n, dtype=np.int64)
        union = np.zeros(n, dtype=np.int64)
        npred = np.zeros(n, dtype=np.int64)
        for i in range(n):
            a = 0
            b = 0
            p = 0
            for j in range(c):
                t = truth[i, j]
                q = pred[i, j]
                if t and q:
                    a += 1
                if t or q:
                    b += 1
                if q:
                    p += 1
            inter[i] = a
            union[i] = b
            npred[i] = p
        return inter, union, npred

    @njit
    def confusion_counts(truth, pred):
        n, c = truth.shape
        out = np.zeros((c, c), dtype=np.int64)
        for i in range(n):
            for y in range(c):
                if truth[i, y]:
                    for p in range(c):
                        if pred[i, p]:
                            out[y, p] += 1
        return out

    @njit
    def herding(feats, m):
        n, d = feats.shape
        mu = np.zeros(d)
        for j in range(d):
            acc = 0.0
            for i in range(n):
                acc += feats[i, j]
            mu[j] = acc / n
        chosen = np.empty(m, dtype=np.int64)
        taken = np.zeros(n, dtype=np.bool_)
        running = np.zeros(d)
        for k in range(m):
            best = -1
            best_d = np.inf
            for i in range(n):
                if taken[i]:
                    continue
                dist = 0.0
                for j in range(d):
                    diff = mu[j] - (running[j] + feats[i, j]) / (k + 1)
                    dist += diff * diff
                if dist < best_d or best < 0:
                    best_d = dist
                    best = i
            chosen[k] = best
            taken[best] = True
            for j in range(d):
                running[j] += feats[best, j]
        return chosen

    return SimpleNamespace(
        name="numba",
        xoshiro_fill=xoshiro_fill,
        fisher_yates=fisher_yates,
        set_counts=set_counts,
        confusion_counts=confusion_counts,
        herding=herding,
    )


numba_impl = _build_numba() if numba is not None else None

USING_NUMBA = numba_impl is not None and os.environ.get("IIRC_NUMBA", "1") != "0"
_impl = numba_impl if USING_NUMBA else numpy_impl


def backend():
    """Name of the active kernel backend, ``"numba"`` or ``"numpy"``."""
    return _impl.name


def xoshiro_fill(state, out):
    """Fill ``out`` (uint64) with xoshiro256** outputs, advancing ``state``."""
    _impl.xoshiro_fill(state, out)


def fisher_yates(arr, u):
    """In-place Fisher-Yates shuffle of ``arr`` driven by ``len(arr) - 1`` uniforms."""
    _impl.fisher_yates(arr, u)


def set_counts(truth, pred):
    """Per-row ``|Y & P|``, ``|Y | P|`` and ``|P|`` for boolean label matrices."""
    return _impl.set_counts(np.ascontiguousarray(truth, dtype=np.bool_),
                            np.ascontiguousarray(pred, dtype=np.bool_))


def confusion_counts(truth, pred):
    """``M[y, p]`` = number of rows with ``truth[:, y]`` and ``pred[:, p]`` both set."""
    return _impl.confusion_counts(np.ascontiguousarray(truth, dtype=np.bool_),
                                  np.ascontiguousarray(pred, dtype=np.bool_))


def herding(feats, m):
    """Greedy herding: ``m`` row indices whose running mean tracks the full mean."""
    feats = np.ascontiguousarray(feats, dtype=np.float64)
    m = min(int(m), feats.shape[0])
    return _impl.herding(feats, m)
