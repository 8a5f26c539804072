"""Independent brute-force oracles used to pin expected values.

Everything here is deliberately written as plain loops / direct sums over
numpy arrays so it shares no code path with the package under test.
"""

import numpy as np


def rel_err(got: np.ndarray, want: np.ndarray) -> float:
    got = np.asarray(got, dtype=np.float64)
    want = np.asarray(want, dtype=np.float64)
    denom = np.linalg.norm(got.ravel()) + np.linalg.norm(want.ravel())
    if denom == 0.0:
        return 0.0
    return 2.0 * np.linalg.norm((got - want).ravel()) / denom


def fd_gradient(f, arrays, index, h=1e-5):
    """Central finite-difference gradient of scalar f(*arrays) w.r.t. arrays[index]."""
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    target = arrays[index]
    grad = np.zeros_like(target)
    flat = target.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f(*arrays))
        flat[i] = orig - h
        fm = float(f(*arrays))
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def loop_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    m, k = a.shape
    k2, n = b.shape
    assert k == k2
    out = np.zeros((m, n), dtype=np.float64)
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for p in range(k):
                acc += a[i, p] * b[p, j]
            out[i, j] = acc
    return out


def loop_conv2d_same(x: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Direct cross-correlation with zero same-padding. x (b,ci,h,w), k (co,ci,kh,kw)."""
    b, ci, h, w = x.shape
    co, ci2, kh, kw = k.shape
    assert ci == ci2
    ph, pw = kh // 2, kw // 2
    out = np.zeros((b, co, h, w), dtype=np.float64)
    for bi in range(b):
        for o in range(co):
            for y in range(h):
                for xx in range(w):
                    acc = 0.0
                    for c in range(ci):
                        for dy in range(kh):
                            for dx in range(kw):
                                sy, sx = y + dy - ph, xx + dx - pw
                                if 0 <= sy < h and 0 <= sx < w:
                                    acc += x[bi, c, sy, sx] * k[o, c, dy, dx]
                    out[bi, o, y, xx] = acc
    return out


def dft2_direct(image: np.ndarray) -> np.ndarray:
    """O(n^4) centered 2D DFT: DC at (h//2, w//2), spatial phase reference at
    the image center pixel."""
    h, w = image.shape
    ch, cw = h // 2, w // 2
    out = np.zeros((h, w), dtype=np.complex128)
    for a in range(h):
        for b in range(w):
            ky, kx = a - ch, b - cw
            acc = 0.0 + 0.0j
            for y in range(h):
                for x in range(w):
                    ang = -2.0 * np.pi * (ky * (y - ch) / h + kx * (x - cw) / w)
                    acc += image[y, x] * np.exp(1j * ang)
            out[a, b] = acc
    return out


def softmax_attention_rows(q: np.ndarray, k: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Row-by-row softmax attention."""
    n, d = q.shape
    out = np.zeros((n, v.shape[1]), dtype=np.float64)
    for i in range(n):
        scores = np.array([q[i] @ k[j] / np.sqrt(d) for j in range(k.shape[0])])
        scores -= scores.max()
        w = np.exp(scores)
        w /= w.sum()
        out[i] = sum(w[j] * v[j] for j in range(k.shape[0]))
    return out


def _feature(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, x + 1.0, np.exp(np.minimum(x, 0.0)))


def kernel_attention_direct(q, k, v, causal=False):
    """Direct double-sum evaluation of normalized kernel attention with the
    elu(x)+1 feature map. q (n,d), k (m,d), v (m,dv)."""
    fq, fk = _feature(q), _feature(k)
    n = q.shape[0]
    m = k.shape[0]
    out = np.zeros((n, v.shape[1]), dtype=np.float64)
    for i in range(n):
        num = np.zeros(v.shape[1], dtype=np.float64)
        den = 0.0
        last = (i + 1) if causal else m
        for j in range(last):
            sim = float(fq[i] @ fk[j])
            num += sim * v[j]
            den += sim
        out[i] = num / den
    return out


def count_lattice_disk(shape, radius):
    """Number of cells of the full centered grid within `radius` of DC."""
    h, w = shape
    ch, cw = h // 2, w // 2
    count = 0
    for y in range(h):
        for x in range(w):
            if np.hypot(y - ch, x - cw) <= radius:
                count += 1
    return count


def count_half_cells_ring_leq(shape, max_ring):
    """Half-spectrum cells (kx >= 0) whose rounded radius is <= max_ring."""
    h, w = shape
    ch = h // 2
    count = 0
    for ky in range(-ch, ch + 1):
        for kx in range(0, w // 2 + 1):
            if round(np.hypot(ky, kx)) <= max_ring:
                count += 1
    return count
