"""Pure-Python/numpy implementations of the hot kernels.

Every function here has a twin in ``_ckernels.pyx`` with the same signature.
The fused sampler step evaluates its arithmetic in the same order as the
compiled version so that both produce bit-identical results.
"""
from __future__ import annotations

from collections import deque

import numpy as np
from scipy import ndimage

NAME = "python"


def label_components(mask: np.ndarray, connectivity: int = 4) -> tuple[np.ndarray, int]:
    """Label connected foreground pixels of a 2-D boolean/uint8 mask.

    Labels start at 1 and are assigned in raster order of each component's
    first pixel; background is 0.
    """
    if connectivity not in (4, 8):
        raise ValueError("connectivity must be 4 or 8")
    fg = np.ascontiguousarray(mask, dtype=np.uint8)
    h, w = fg.shape
    labels = np.zeros((h, w), dtype=np.int32)
    if connectivity == 4:
        offsets = ((-1, 0), (1, 0), (0, -1), (0, 1))
    else:
        offsets = tuple((dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1) if dy or dx)
    fg_list = fg.tolist()
    lab = labels.tolist()
    n = 0
    for y0 in range(h):
        row = fg_list[y0]
        for x0 in range(w):
            if not row[x0] or lab[y0][x0]:
                continue
            n += 1
            lab[y0][x0] = n
            queue = deque([(y0, x0)])
            while queue:
                y, x = queue.popleft()
                for dy, dx in offsets:
                    yy, xx = y + dy, x + dx
                    if 0 <= yy < h and 0 <= xx < w and fg_list[yy][xx] and not lab[yy][xx]:
                        lab[yy][xx] = n
                        queue.append((yy, xx))
    return np.asarray(lab, dtype=np.int32).reshape(h, w), n


def fused_step(x, eps_subs, masks, gammas, eps_surr, eps_uc, s, sa, sb, sap, sbp, final):
    """Masked noise fusion, guidance harmonization and one DDIM update.

    Shapes: x, eps_surr, eps_uc (h, w, c); eps_subs (n, h, w, c);
    masks (n, h, w); gammas (n,).  Returns (x_prev, eps_hat).
    """
    total = (gammas[0] * masks[0])[..., None] * eps_subs[0]
    msum = masks[0]
    for i in range(1, len(gammas)):
        total = total + (gammas[i] * masks[i])[..., None] * eps_subs[i]
        msum = msum + masks[i]
    total = total + (1.0 - msum)[..., None] * eps_surr
    eps_hat = total + (s - 1.0) * (total - eps_uc)
    x0 = (x - sb * eps_hat) / sa
    if final:
        return x0, eps_hat
    return sap * x0 + sbp * eps_hat, eps_hat


def blur_separable(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Correlate rows then columns with a 1-D kernel, zero padding."""
    out = ndimage.correlate1d(np.asarray(img, dtype=np.float64), kernel, axis=1, mode="constant", cval=0.0)
    return ndimage.correlate1d(out, kernel, axis=0, mode="constant", cval=0.0)


def attention_received(scores: np.ndarray) -> np.ndarray:
    """Row-softmax each head's score matrix, sum columns, average heads."""
    s = np.asarray(scores, dtype=np.float64)
    s = s - s.max(axis=-1, keepdims=True)
    p = np.exp(s)
    p /= p.sum(axis=-1, keepdims=True)
    return p.sum(axis=1).mean(axis=0)
