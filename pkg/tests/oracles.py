"""Independent reference computations used as test oracles.

Nothing here imports the code paths under test beyond plain data types.
"""
from __future__ import annotations

import math
from collections import deque

import numpy as np


def scaled_linear_alphas_bar(T=1000, beta_start=0.00085, beta_end=0.012):
    out = []
    prod = 1.0
    for i in range(T):
        r = math.sqrt(beta_start) + (math.sqrt(beta_end) - math.sqrt(beta_start)) * i / (T - 1)
        prod *= 1.0 - r * r
        out.append(prod)
    return out


def gaussian_ddim_coefficients(ab, ab_prev, sigma0, s=1.0):
    """(a, b) with x_prev = a·x_t + b·μ for the exact Gaussian predictor under guidance
    against a zero-mean unconditional target; ab_prev = 1 for the last step."""
    c = math.sqrt(1.0 - ab) / (ab * sigma0**2 + 1.0 - ab)
    a = math.sqrt(ab_prev) * (1.0 - math.sqrt(1.0 - ab) * c) / math.sqrt(ab) + math.sqrt(1.0 - ab_prev) * c
    b = math.sqrt(ab_prev) * math.sqrt(1.0 - ab) * c - math.sqrt(1.0 - ab_prev) * c * math.sqrt(ab)
    return a, s * b


def gaussian_ddim_trajectory(x_T, mu, sigma0, timesteps, alphas_bar, s=1.0):
    """Every intermediate latent of guided DDIM on N(μ, σ0²) data via the affine recursion."""
    x = np.array(x_T, dtype=np.float64)
    traj = []
    ts = list(timesteps)
    for i, t in enumerate(ts):
        ab = alphas_bar[t]
        ab_prev = alphas_bar[ts[i + 1]] if i + 1 < len(ts) else 1.0
        a, b = gaussian_ddim_coefficients(ab, ab_prev, sigma0, s)
        x = a * x + b * mu
        traj.append(x.copy())
    return traj


def flood_fill_components(mask, connectivity=4):
    """Label components by breadth-first flood fill (raster order of first pixel)."""
    mask = np.asarray(mask, bool)
    h, w = mask.shape
    labels = np.zeros((h, w), int)
    steps = [(1, 0), (-1, 0), (0, 1), (0, -1)]
    if connectivity == 8:
        steps += [(1, 1), (1, -1), (-1, 1), (-1, -1)]
    n = 0
    for y in range(h):
        for x in range(w):
            if mask[y, x] and not labels[y, x]:
                n += 1
                labels[y, x] = n
                q = deque([(y, x)])
                while q:
                    cy, cx = q.popleft()
                    for dy, dx in steps:
                        ny, nx = cy + dy, cx + dx
                        if 0 <= ny < h and 0 <= nx < w and mask[ny, nx] and not labels[ny, nx]:
                            labels[ny, nx] = n
                            q.append((ny, nx))
    return labels, n


def brute_force_blur(img, sigma, truncate=4.0):
    """Direct 2-D convolution with the outer product of a normalized 1-D Gaussian, zero padding."""
    r = max(1, int(math.ceil(truncate * sigma)))
    k1 = np.array([math.exp(-0.5 * (i / sigma) ** 2) for i in range(-r, r + 1)])
    k1 /= k1.sum()
    k2 = np.outer(k1, k1)
    h, w = img.shape
    out = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for dy in range(-r, r + 1):
                for dx in range(-r, r + 1):
                    yy, xx = y + dy, x + dx
                    if 0 <= yy < h and 0 <= xx < w:
                        acc += k2[dy + r, dx + r] * img[yy, xx]
            out[y, x] = acc
    return out


def softmax_column_mass(scores):
    """Column sums of row-softmaxed matrices, averaged over the leading head axis (loops)."""
    scores = np.asarray(scores, dtype=np.float64)
    heads, n, m = scores.shape
    col = [0.0] * m
    for hh in range(heads):
        for i in range(n):
            mx = max(scores[hh, i])
            e = [math.exp(v - mx) for v in scores[hh, i]]
            z = sum(e)
            for j in range(m):
                col[j] += e[j] / z
    return np.array(col) / heads
