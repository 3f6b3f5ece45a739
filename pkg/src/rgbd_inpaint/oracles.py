"""Slow, direct reference computations used to check the fast paths.

Nothing here shares code with the implementations it checks.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def direct_conv2d(x, w, b=None, stride=(1, 1), padding=(0, 0), dilation=(1, 1)):
    """Nested-loop cross-correlation with zero padding."""
    x = np.asarray(x)
    w = np.asarray(w)
    bsz, c, h, wd = x.shape
    f, _, kh, kw = w.shape
    (sh, sw), (ph, pw), (dh, dw) = stride, padding, dilation
    oh = (h + 2 * ph - dh * (kh - 1) - 1) // sh + 1
    ow = (wd + 2 * pw - dw * (kw - 1) - 1) // sw + 1
    out = np.zeros((bsz, f, oh, ow), dtype=np.result_type(x, w))
    for n in range(bsz):
        for o in range(f):
            for y in range(oh):
                for xx in range(ow):
                    acc = 0.0 if b is None else float(b[o])
                    for ch in range(c):
                        for i in range(kh):
                            for j in range(kw):
                                r = y * sh + i * dh - ph
                                q = xx * sw + j * dw - pw
                                if 0 <= r < h and 0 <= q < wd:
                                    acc += x[n, ch, r, q] * w[o, ch, i, j]
                    out[n, o, y, xx] = acc
    return out


def triple_loop_matmul(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    m, k = a.shape
    _, n = b.shape
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            s = 0.0
            for t in range(k):
                s += a[i, t] * b[t, j]
            out[i, j] = s
    return out


def psnr_direct(pred, gt, max_val=1.0, cap=99.0):
    p = np.asarray(pred, dtype=np.float64).ravel().tolist()
    g = np.asarray(gt, dtype=np.float64).ravel().tolist()
    mse = math.fsum((a - b) ** 2 for a, b in zip(p, g)) / len(p)
    if mse == 0:
        return cap
    return min(cap, 10 * math.log10(max_val * max_val / mse))


def ssim_direct(a, b, win=11, sigma=1.5, k1=0.01, k2=0.03):
    """Mean SSIM over every full win x win window, evaluated window by window."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    half = (win - 1) / 2
    weights = [[math.exp(-((i - half) ** 2 + (j - half) ** 2) / (2 * sigma * sigma)) for j in range(win)] for i in range(win)]
    total = math.fsum(itertools.chain.from_iterable(weights))
    weights = [[v / total for v in row] for row in weights]
    c1, c2 = k1 ** 2, k2 ** 2
    vals = []
    for y in range(a.shape[0] - win + 1):
        for x in range(a.shape[1] - win + 1):
            mu_a = mu_b = 0.0
            for i in range(win):
                for j in range(win):
                    mu_a += weights[i][j] * a[y + i, x + j]
                    mu_b += weights[i][j] * b[y + i, x + j]
            va = vb = cov = 0.0
            for i in range(win):
                for j in range(win):
                    da = a[y + i, x + j] - mu_a
                    db = b[y + i, x + j] - mu_b
                    va += weights[i][j] * da * da
                    vb += weights[i][j] * db * db
                    cov += weights[i][j] * da * db
            vals.append(((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a ** 2 + mu_b ** 2 + c1) * (va + vb + c2)))
    return math.fsum(vals) / len(vals)


def depth_metrics_direct(pred, gt, eps=1e-3):
    pairs = [(p, g) for p, g in zip(np.ravel(pred).tolist(), np.ravel(gt).tolist()) if g > eps]
    n = len(pairs)
    abs_rel = math.fsum(abs(p - g) / g for p, g in pairs) / n
    sq_rel = math.fsum((p - g) ** 2 / g for p, g in pairs) / n
    rmse = math.sqrt(math.fsum((p - g) ** 2 for p, g in pairs) / n)
    rmse_log = math.sqrt(math.fsum((math.log(max(p, eps)) - math.log(g)) ** 2 for p, g in pairs) / n)
    return {"abs_rel": abs_rel, "sq_rel": sq_rel, "rmse": rmse, "rmse_log": rmse_log}


def emd_bruteforce(a, b):
    """Minimum mean |a_i - b_pi(i)| over all n! matchings."""
    a = list(a)
    b = list(b)
    best = math.inf
    for perm in itertools.permutations(range(len(b))):
        cost = math.fsum(abs(a[i] - b[p]) for i, p in enumerate(perm)) / len(a)
        best = min(best, cost)
    return best


def adam_scalar_trace(grad_fn, x0, steps, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8):
    x, m, v = float(x0), 0.0, 0.0
    trace = []
    for t in range(1, steps + 1):
        g = grad_fn(x)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mh = m / (1 - b1 ** t)
        vh = v / (1 - b2 ** t)
        x = x - lr * mh / (math.sqrt(vh) + eps)
        trace.append(x)
    return trace


def nearest_patch_loop(img, top, left, side, patch):
    """Crop (side x side) at (top, left) and resize to patch x patch by pixel-centre nearest."""
    c = img.shape[0]
    out = np.zeros((c, patch, patch), dtype=img.dtype)
    for i in range(patch):
        for j in range(patch):
            src_r = top + int(math.floor((i + 0.5) * side / patch))
            src_c = left + int(math.floor((j + 0.5) * side / patch))
            out[:, i, j] = img[:, src_r, src_c]
    return out
