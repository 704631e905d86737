"""Independent reference implementations used as test oracles.

Everything here is deliberately written from the defining formulas with
plain Python loops, sharing no code with the package: the hat-function
form of the color code, and a voxel/frame/channel triple-loop build of the
colorized, summed, and normalized volumes.
"""

import math

import numpy as np


def hat_color_code(t: int, num_frames: int, channels: int) -> list[float]:
    """Hat functions peaking at s_c = (C - c)/(C - 1): max(0, 1 - |s - s_c|(C-1))."""
    s = (t - 1) / (num_frames - 1)
    out = []
    for c in range(1, channels + 1):
        s_c = (channels - c) / (channels - 1)
        out.append(max(0.0, 1.0 - abs(s - s_c) * (channels - 1)))
    return out


def brute_force_encode(positions, dims, sigma, truncation_radius, channels, scheme, epsilon=1.0):
    """Encode a (T, J, 3) voxel-space trajectory by exhaustive loops.

    Returns the stacked per-joint volumes (channel-major float64) in the
    same joint-major/block order as the production encoder: u and n carry
    C channels per joint, i one, and nui the blocks [n, u, i].
    """
    positions = np.asarray(positions, dtype=np.float64)
    T, J = positions.shape[0], positions.shape[1]
    W, H, D = dims
    C = channels
    r2 = (truncation_radius * sigma) ** 2
    blocks = []
    for j in range(J):
        summed = np.zeros((C, W, H, D))
        for t in range(T):
            code = hat_color_code(t + 1, T, C)
            cx, cy, cz = positions[t, j]
            for x in range(W):
                for y in range(H):
                    for z in range(D):
                        d2 = (x - cx) ** 2 + (y - cy) ** 2 + (z - cz) ** 2
                        if d2 > r2:
                            continue
                        h = math.exp(-d2 / (2.0 * sigma * sigma))
                        for c in range(C):
                            summed[c, x, y, z] += h * code[c]
        u = np.zeros_like(summed)
        for c in range(C):
            peak = 0.0
            for x in range(W):
                for y in range(H):
                    for z in range(D):
                        peak = max(peak, summed[c, x, y, z])
            if peak > 0.0:
                for x in range(W):
                    for y in range(H):
                        for z in range(D):
                            u[c, x, y, z] = summed[c, x, y, z] / peak
        i = np.zeros((W, H, D))
        for x in range(W):
            for y in range(H):
                for z in range(D):
                    total = 0.0
                    for c in range(C):
                        total += u[c, x, y, z]
                    i[x, y, z] = total
        n = np.zeros_like(u)
        for c in range(C):
            for x in range(W):
                for y in range(H):
                    for z in range(D):
                        n[c, x, y, z] = u[c, x, y, z] / (epsilon + i[x, y, z])
        if scheme == "u":
            blocks.append(u)
        elif scheme == "i":
            blocks.append(i[None])
        elif scheme == "n":
            blocks.append(n)
        elif scheme == "nui":
            blocks.append(np.concatenate([n, u, i[None]], axis=0))
        else:
            raise ValueError(scheme)
    return np.concatenate(blocks, axis=0)


def finite_difference_gradients(loss_fn, arrays, step=1e-3):
    """Central finite differences of a scalar function w.r.t. each array entry."""
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr, dtype=np.float64)
        flat = arr.reshape(-1)
        gf = g.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + step
            plus = loss_fn()
            flat[idx] = orig - step
            minus = loss_fn()
            flat[idx] = orig
            gf[idx] = (plus - minus) / (2.0 * step)
        grads.append(g)
    return grads


def max_relative_error(analytic, numeric, floor):
    """Worst |a - n| / max(|a|, |n|, floor) over matching arrays."""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float((np.abs(a - n) / denom).max()))
    return worst
