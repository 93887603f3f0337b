"""Network primitives on single-sample ``(C, z, y, x)`` float32 arrays.

Convolutions are the hot path and carry both a numba loop kernel and a numpy
kernel built on per-tap matrix products.
"""
import numpy as np

from .. import _accel
from .._accel import njit
from ..errors import NumericError

INSTANCE_NORM_EPS = 1e-5


@njit
def _conv3d_numba(xp, w, b):
    co_n, ci_n, k, _, _ = w.shape
    _, dp, hp, wp = xp.shape
    d, h, wd = dp - k + 1, hp - k + 1, wp - k + 1
    out = np.empty((co_n, d, h, wd), dtype=np.float32)
    for co in range(co_n):
        acc = out[co]
        acc[:] = b[co]
        for ci in range(ci_n):
            src = xp[ci]
            for kz in range(k):
                for ky in range(k):
                    for kx in range(k):
                        wv = w[co, ci, kz, ky, kx]
                        for z in range(d):
                            for y in range(h):
                                row = src[z + kz, y + ky]
                                dst = acc[z, y]
                                for x in range(wd):
                                    dst[x] += wv * row[x + kx]
    return out


_CHUNK_ELEMS = 1 << 22


def _conv3d_numpy(xp, w, b):
    co_n, ci_n, k, _, _ = w.shape
    _, dp, hp, wp = xp.shape
    d, h, wd = dp - k + 1, hp - k + 1, wp - k + 1
    out = np.empty((co_n, d, h, wd), dtype=np.float32)
    # tap-major copy keeps every (Co, Ci) slice contiguous so matmul stays on BLAS
    taps = np.ascontiguousarray(w.transpose(2, 3, 4, 0, 1))
    # z-slabs bound the gathered tap buffer and the product to a few MB
    dz = max(1, min(d, _CHUNK_ELEMS // (max(ci_n, co_n) * h * wd)))
    tap = np.empty((ci_n, dz, h, wd), dtype=np.float32)
    prod = np.empty((co_n, dz * h * wd), dtype=np.float32)
    for z0 in range(0, d, dz):
        n = min(dz, d - z0)
        acc = out[:, z0 : z0 + n].reshape(co_n, -1)
        acc[:] = b[:, None]
        t, pr = tap[:, :n], prod[:, : n * h * wd]
        for kz in range(k):
            for ky in range(k):
                for kx in range(k):
                    np.copyto(t, xp[:, z0 + kz : z0 + kz + n, ky : ky + h, kx : kx + wd])
                    np.matmul(taps[kz, ky, kx], t.reshape(ci_n, -1), out=pr)
                    acc += pr
    return out


def conv3d(x, w, b):
    """Stride-1 cubic convolution with zero padding ``k // 2`` (spatial size preserved)."""
    x = np.asarray(x, dtype=np.float32)
    w = np.ascontiguousarray(w, dtype=np.float32)
    b = np.ascontiguousarray(b, dtype=np.float32)
    if x.ndim != 4 or w.ndim != 5 or w.shape[1] != x.shape[0]:
        raise ValueError(f"conv3d shape mismatch: input {x.shape}, weight {w.shape}")
    p = w.shape[2] // 2
    xp = np.pad(x, ((0, 0), (p, p), (p, p), (p, p))) if p else np.ascontiguousarray(x)
    if _accel.backend() == "numba":
        return _conv3d_numba(xp, w, b)
    return _conv3d_numpy(xp, w, b)


@njit
def _conv_transpose_numba(x, w, b):
    ci_n, d, h, wd = x.shape
    co_n = w.shape[1]
    out = np.empty((co_n, 2 * d, 2 * h, 2 * wd), dtype=np.float32)
    for co in range(co_n):
        out[co] = b[co]
        for ci in range(ci_n):
            src = x[ci]
            for a in range(2):
                for c in range(2):
                    for e in range(2):
                        wv = w[ci, co, a, c, e]
                        for z in range(d):
                            for y in range(h):
                                dst = out[co, 2 * z + a, 2 * y + c]
                                row = src[z, y]
                                for i in range(wd):
                                    dst[2 * i + e] += wv * row[i]
    return out


def _conv_transpose_numpy(x, w, b):
    ci_n, d, h, wd = x.shape
    co_n = w.shape[1]
    # (co, a, c, e, z, y, x) -> (co, z, a, y, c, x, e)
    y = np.tensordot(w, x, axes=([0], [0]))
    y = y.transpose(0, 4, 1, 5, 2, 6, 3).reshape(co_n, 2 * d, 2 * h, 2 * wd)
    return (y + b[:, None, None, None]).astype(np.float32)


def conv_transpose3d(x, w, b):
    """Transposed convolution with kernel 2 and stride 2; ``w`` is ``(in, out, 2, 2, 2)``."""
    x = np.ascontiguousarray(x, dtype=np.float32)
    w = np.ascontiguousarray(w, dtype=np.float32)
    b = np.ascontiguousarray(b, dtype=np.float32)
    if x.ndim != 4 or w.shape[0] != x.shape[0] or w.shape[2:] != (2, 2, 2):
        raise ValueError(f"conv_transpose3d shape mismatch: input {x.shape}, weight {w.shape}")
    if _accel.backend() == "numba":
        return _conv_transpose_numba(x, w, b)
    return _conv_transpose_numpy(x, w, b)


def max_pool2(x):
    c, d, h, w = x.shape
    if d % 2 or h % 2 or w % 2:
        raise ValueError(f"max_pool2 needs even spatial sizes, got {x.shape[1:]}")
    return x.reshape(c, d // 2, 2, h // 2, 2, w // 2, 2).max(axis=(2, 4, 6))


def instance_norm(x, gamma, beta, eps=INSTANCE_NORM_EPS):
    # float64 statistics, one channel at a time so no full-size float64 copy exists
    c = x.shape[0]
    flat = np.asarray(x, dtype=np.float32).reshape(c, -1)
    out = np.empty(flat.shape, dtype=np.float32)
    for i in range(c):
        row = flat[i]
        mean = row.mean(dtype=np.float64)
        var = row.var(dtype=np.float64)
        scale = float(gamma[i]) / np.sqrt(var + eps)
        np.subtract(row, np.float32(mean), out=out[i])
        out[i] *= np.float32(scale)
        out[i] += np.float32(beta[i])
    return out.reshape(x.shape)


def leaky_relu(x, slope=0.01):
    x = np.asarray(x, dtype=np.float32)
    out = np.multiply(x, np.float32(slope))
    np.copyto(out, x, where=x >= 0)
    return out


def softmax_channels(logits):
    """Softmax over axis 0 (classes)."""
    logits = np.asarray(logits)
    if logits.shape[0] < 1:
        raise NumericError("softmax needs at least one channel")
    if not np.all(np.isfinite(logits)):
        raise NumericError("non-finite logits")
    z = logits.astype(np.float64)
    z -= z.max(axis=0, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=0, keepdims=True)
    return z.astype(np.float32)
