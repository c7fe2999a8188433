"""Independent reference implementations used by the tests."""
import numpy as np


def edge_pad(x_cf, pads):
    pt, py, px = pads
    return np.pad(x_cf, ((0, 0), (pt, pt), (py, py), (px, px)), mode="edge")


def conv3d_loops(x_cf, w, b):
    """Direct nested-loop 3D cross-correlation on an already padded input, float64."""
    cout, cin, kt, ky, kx = w.shape
    _, tp, yp, xp = x_cf.shape
    T, Y, X = tp - kt + 1, yp - ky + 1, xp - kx + 1
    out = np.zeros((cout, T, Y, X))
    for co in range(cout):
        for t in range(T):
            for y in range(Y):
                for x in range(X):
                    acc = float(b[co])
                    for ci in range(cin):
                        for dt in range(kt):
                            for dy in range(ky):
                                for dx in range(kx):
                                    acc += float(w[co, ci, dt, dy, dx]) * float(x_cf[ci, t + dt, y + dy, x + dx])
                    out[co, t, y, x] = acc
    return out


def conv3d_taps64(x_cf, w, b):
    """Tap-summed 3D cross-correlation in float64 on a padded input."""
    cout, cin, kt, ky, kx = w.shape
    _, tp, yp, xp = x_cf.shape
    T, Y, X = tp - kt + 1, yp - ky + 1, xp - kx + 1
    x = x_cf.astype(np.float64)
    out = np.zeros((cout, T, Y, X)) + np.asarray(b, np.float64)[:, None, None, None]
    for dt in range(kt):
        for dy in range(ky):
            for dx in range(kx):
                patch = x[:, dt:dt + T, dy:dy + Y, dx:dx + X]
                out += np.einsum("oc,ctyx->otyx", w[:, :, dt, dy, dx].astype(np.float64), patch)
    return out


def net_forward64(specs, weights, biases, x_tyxc):
    """Residual of the layer stack, float64, channels-last in and out."""
    a = np.moveaxis(np.asarray(x_tyxc, np.float64), 3, 0)
    for s, w, b in zip(specs, weights, biases):
        z = conv3d_taps64(edge_pad(a, s.pads), w, b)
        a = np.maximum(z, 0) if s.has_relu else z
    return np.moveaxis(a, 0, 3)


def topk_full_sort(queries, cands, k, qpos, cpos, pool, excl_pool, radius):
    """Top-k by sorting every candidate distance: sequential float64 sums,
    stable order on (distance, candidate index)."""
    q = np.asarray(queries, np.float32).astype(np.float64)
    c = np.asarray(cands, np.float32).astype(np.float64)
    out = []
    for i in range(len(q)):
        d = np.cumsum((c - q[i]) ** 2, axis=1)[:, -1]
        banned = (np.asarray(pool) == excl_pool) & (
            np.abs(np.asarray(cpos) - np.asarray(qpos)[i]).max(axis=1) <= radius)
        keep = np.flatnonzero(~banned)
        order = keep[np.lexsort((keep, d[keep]))]
        out.append(order[:k])
    return np.array(out)
