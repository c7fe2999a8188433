"""Pure numpy implementations of the hot kernels.

Same signatures as the compiled ``_ckernels`` module; selected by
:mod:`zstsr.kernels` when the extension is unavailable.
"""
import numpy as np


def pad_replicate(x, pads):
    pt, py, px = pads
    return np.ascontiguousarray(
        np.pad(x, ((0, 0), (pt, pt), (py, py), (px, px)), mode="edge"), dtype=np.float32
    )


def unpad_replicate_adjoint(g, pads):
    """Adjoint of :func:`pad_replicate`: fold border gradients onto the edge cells."""
    pt, py, px = pads
    g = g.astype(np.float32, copy=True)
    for axis, p in ((1, pt), (2, py), (3, px)):
        if p == 0:
            continue
        n = g.shape[axis]
        lo = [slice(None)] * 4
        hi = [slice(None)] * 4
        # sum pads into the first/last interior cell, front to back
        lo[axis] = slice(p, p + 1)
        hi[axis] = slice(n - p - 1, n - p)
        head = [slice(None)] * 4
        tail = [slice(None)] * 4
        head[axis] = slice(0, p)
        tail[axis] = slice(n - p, n)
        g[tuple(lo)] += g[tuple(head)].sum(axis=axis, keepdims=True)
        g[tuple(hi)] += g[tuple(tail)].sum(axis=axis, keepdims=True)
        keep = [slice(None)] * 4
        keep[axis] = slice(p, n - p)
        g = g[tuple(keep)]
    return np.ascontiguousarray(g)


def _geometry(xpad_shape, kshape, pads):
    _, tp, yp, xp = xpad_shape
    kt, ky, kx = kshape
    t = tp - 2 * pads[0]
    y = yp - 2 * pads[1]
    x = xp - 2 * pads[2]
    offsets = [dt * yp * xp + dy * xp + dx
               for dt in range(kt) for dy in range(ky) for dx in range(kx)]
    span = (t - 1) * yp * xp + (y - 1) * xp + x
    return (t, y, x), offsets, span


def conv3d_forward(xpad, w, b):
    """Stride-1 3D convolution of an already padded (Cin, Tp, Yp, Xp) input.

    Each kernel tap is one GEMM on a flat shifted view of the padded grid;
    outputs land on the padded grid and the valid corner is cropped.
    Taps are accumulated in (kt, ky, kx) row-major order.
    """
    cout, cin, kt, ky, kx = w.shape
    pads = (kt // 2, ky // 2, kx // 2)
    (t, y, x), offsets, span = _geometry(xpad.shape, (kt, ky, kx), pads)
    _, tp, yp, xp = xpad.shape
    flat = xpad.reshape(cin, -1)
    wk = np.ascontiguousarray(w.transpose(2, 3, 4, 0, 1).reshape(-1, cout, cin))
    grid = np.zeros((cout, tp * yp * xp), dtype=np.float32)
    acc = grid[:, :span]
    tmp = np.empty((cout, span), dtype=np.float32)
    for k, off in enumerate(offsets):
        np.matmul(wk[k], flat[:, off:off + span], out=tmp)
        acc += tmp
    z = grid.reshape(cout, tp, yp, xp)[:, :t, :y, :x]
    z = z + b.astype(np.float32)[:, None, None, None]
    return np.ascontiguousarray(z)


def conv3d_backward(xpad, w, dz, need_dx=True):
    """Gradients of :func:`conv3d_forward` w.r.t. weights, bias and padded input."""
    cout, cin, kt, ky, kx = w.shape
    pads = (kt // 2, ky // 2, kx // 2)
    (t, y, x), offsets, span = _geometry(xpad.shape, (kt, ky, kx), pads)
    _, tp, yp, xp = xpad.shape
    flat = xpad.reshape(cin, -1)
    grid = np.zeros((cout, tp, yp, xp), dtype=np.float32)
    grid[:, :t, :y, :x] = dz
    d = grid.reshape(cout, -1)[:, :span]
    wk = np.ascontiguousarray(w.transpose(2, 3, 4, 0, 1).reshape(-1, cout, cin))
    dwk = np.empty((len(offsets), cout, cin), dtype=np.float32)
    dxpad = None
    if need_dx:
        dxpad = np.zeros((cin, tp * yp * xp), dtype=np.float32)
        tmp = np.empty((cin, span), dtype=np.float32)
    for k, off in enumerate(offsets):
        xs = flat[:, off:off + span]
        np.matmul(d, xs.T, out=dwk[k])
        if need_dx:
            np.matmul(wk[k].T, d, out=tmp)
            dxpad[:, off:off + span] += tmp
    dw = dwk.reshape(kt, ky, kx, cout, cin).transpose(3, 4, 0, 1, 2)
    db = dz.reshape(cout, -1).sum(axis=1, dtype=np.float64).astype(np.float32)
    if need_dx:
        dxpad = dxpad.reshape(cin, tp, yp, xp)
    return np.ascontiguousarray(dw), db, dxpad


def resample_axis(a, axis, idx, wts):
    """Four-tap resampling along one axis: out[j] = sum_m wts[j, m] * a[idx[j, m]]."""
    a = np.asarray(a, dtype=np.float32)
    out = np.zeros(a.shape[:axis] + (idx.shape[0],) + a.shape[axis + 1:], dtype=np.float64)
    shape = [1] * a.ndim
    shape[axis] = idx.shape[0]
    for m in range(idx.shape[1]):
        out += np.take(a, idx[:, m], axis=axis) * wts[:, m].reshape(shape)
    return out.astype(np.float32)


def ssd_topk(queries, cands, k, qpos, cpos, cpool, excl_pool, radius):
    """Exhaustive k nearest candidates by sum of squared differences.

    Distances accumulate in float64 over feature dims in index order, so
    results are bit-identical to the compiled kernel. Ties keep the lower
    candidate index. Candidates of pool ``excl_pool`` whose centre lies within
    Chebyshev ``radius`` of the query centre are skipped. Returns
    (indices, distances), each (Q, k); unfilled slots hold -1 / inf.
    """
    queries = np.asarray(queries, dtype=np.float32)
    cands = np.asarray(cands, dtype=np.float32)
    nq, nd = queries.shape
    idx_out = np.full((nq, k), -1, dtype=np.int64)
    dist_out = np.full((nq, k), np.inf)
    c64 = cands.astype(np.float64)
    same_pool = np.asarray(cpool) == excl_pool
    for q in range(nq):
        acc = np.zeros(cands.shape[0])
        qv = queries[q].astype(np.float64)
        for j in range(nd):
            diff = c64[:, j] - qv[j]
            acc += diff * diff
        near = np.abs(np.asarray(cpos) - np.asarray(qpos)[q]).max(axis=1) <= radius
        acc[same_pool & near] = np.inf
        order = np.argsort(acc, kind="stable")[:k]
        order = order[np.isfinite(acc[order])]
        idx_out[q, :len(order)] = order
        dist_out[q, :len(order)] = acc[order]
    return idx_out, dist_out
