"""Pure numpy implementations of the hot kernels.

These are the fallback used when the compiled ``_ckernels`` extension is not
available, and the reference the compiled versions are tested against.
Array layouts are channels-last (B, H, W, C) throughout.
"""
import numpy as np

BOUNDARY_EPS = 1e-12


def conv_output_size(size, k, stride, pad):
    return (size + 2 * pad - k) // stride + 1


def im2col(x, k, stride, pad):
    B, H, W, C = x.shape
    Ho = conv_output_size(H, k, stride, pad)
    Wo = conv_output_size(W, k, stride, pad)
    if pad:
        x = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    cols = np.empty((B, Ho, Wo, k, k, C), dtype=x.dtype)
    for i in range(k):
        for j in range(k):
            cols[:, :, :, i, j, :] = x[:, i:i + stride * Ho:stride, j:j + stride * Wo:stride, :]
    return cols.reshape(B * Ho * Wo, k * k * C)


def col2im(cols, x_shape, k, stride, pad):
    B, H, W, C = x_shape
    Ho = conv_output_size(H, k, stride, pad)
    Wo = conv_output_size(W, k, stride, pad)
    cols = cols.reshape(B, Ho, Wo, k, k, C)
    dx = np.zeros((B, H + 2 * pad, W + 2 * pad, C), dtype=cols.dtype)
    for i in range(k):
        for j in range(k):
            dx[:, i:i + stride * Ho:stride, j:j + stride * Wo:stride, :] += cols[:, :, :, i, j, :]
    if pad:
        dx = dx[:, pad:pad + H, pad:pad + W, :]
    return np.ascontiguousarray(dx)


def maxpool_forward(x, s):
    """Non-overlapping s x s max pooling; trailing rows/cols that do not fill a window are dropped.

    Returns the pooled array and the flat in-window index (row-major, first
    maximum wins) of each selected element.
    """
    B, H, W, C = x.shape
    Ho, Wo = H // s, W // s
    win = x[:, :Ho * s, :Wo * s, :].reshape(B, Ho, s, Wo, s, C)
    win = win.transpose(0, 1, 3, 5, 2, 4).reshape(B, Ho, Wo, C, s * s)
    idx = np.argmax(win, axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return out, idx.astype(np.int32)


def maxpool_backward(dout, idx, x_shape, s):
    B, H, W, C = x_shape
    Ho, Wo = dout.shape[1], dout.shape[2]
    onehot = (idx[..., None] == np.arange(s * s)).astype(dout.dtype) * dout[..., None]
    blocks = onehot.reshape(B, Ho, Wo, C, s, s).transpose(0, 1, 4, 2, 5, 3)
    dx = np.zeros(x_shape, dtype=dout.dtype)
    dx[:, :Ho * s, :Wo * s, :] = blocks.reshape(B, Ho * s, Wo * s, C)
    return dx


def points_in_polygon(points, vertices):
    """Even-odd containment of many points; points on an edge count as inside."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    a = np.asarray(vertices, dtype=np.float64)
    b = np.roll(a, -1, axis=0)
    px = points[:, 0:1]
    py = points[:, 1:2]
    ax, ay, bx, by = a[:, 0], a[:, 1], b[:, 0], b[:, 1]
    ex, ey = bx - ax, by - ay
    # on-boundary test: distance to segment below eps
    elen2 = ex * ex + ey * ey
    t = ((px - ax) * ex + (py - ay) * ey) / np.where(elen2 > 0, elen2, 1.0)
    t = np.clip(t, 0.0, 1.0)
    dx = px - (ax + t * ex)
    dy = py - (ay + t * ey)
    on_edge = np.any(dx * dx + dy * dy <= BOUNDARY_EPS * BOUNDARY_EPS, axis=1)
    # half-open crossing rule handles rays through vertices
    straddle = (ay > py) != (by > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = ax + (py - ay) * ex / np.where(ey != 0, ey, 1.0)
    crossings = np.sum(straddle & (px < xint), axis=1)
    return on_edge | (crossings % 2 == 1)


def rasterize_polygon(vertices, nx, ny, cell, ox, oy):
    xs = ox + (np.arange(nx) + 0.5) * cell
    ys = oy + (np.arange(ny) + 0.5) * cell
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    return points_in_polygon(pts, vertices).reshape(nx, ny).astype(np.uint8)


def gae(rewards, values, dones, last_value, gamma, lam):
    T = len(rewards)
    adv = np.zeros(T, dtype=np.float64)
    running = 0.0
    next_value = last_value
    for t in range(T - 1, -1, -1):
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        running = delta + gamma * lam * nonterminal * running
        adv[t] = running
        next_value = values[t]
    return adv


def _nearest_on_edges(pts, ea, eu, elen, en):
    """Nearest boundary sample for each point (..., 2) given uniformly sampled edges."""
    rel = pts[..., None, :] - ea  # (..., E, 2)
    t = np.einsum("...ed,ed->...e", rel, eu)
    step = elen / en
    kk = np.clip(np.floor(t / step + 0.5), 0, en)
    cand = ea + (kk * step)[..., None] * eu
    d2 = np.sum((pts[..., None, :] - cand) ** 2, axis=-1)
    best = np.argmin(d2, axis=-1)
    nearest = np.take_along_axis(cand, best[..., None, None], axis=-2)[..., 0, :]
    return nearest, np.take_along_axis(d2, best[..., None], axis=-1)[..., 0]


def _residual(d2, metric):
    return np.sqrt(d2).mean(axis=1) if metric == 1 else np.sqrt(d2.mean(axis=1))


def icp_batch(cloud, ea, eu, elen, en, init_theta, init_t, max_iter, tol, metric=1):
    """Run ICP from every initial transform at once (cloud -> model direction).

    ``init_theta`` (A,) and ``init_t`` (A, 2) give the starting transforms
    x -> R(theta) x + t. The residual is the mean correspondence distance
    (``metric=1``) or its root mean square (``metric=0``). Returns, per
    start, the final residual, the rotation angle and translation, the
    iteration count and the residual history (NaN padded to ``max_iter + 1``).
    """
    cloud = np.asarray(cloud, dtype=np.float64)
    A = len(init_theta)
    en = en.astype(np.float64)
    cc = cloud.mean(axis=0)
    centered = cloud - cc
    theta = np.asarray(init_theta, dtype=np.float64)
    c, s = np.cos(theta), np.sin(theta)
    t = np.array(init_t, dtype=np.float64).reshape(A, 2)
    history = np.full((A, max_iter + 1), np.nan)
    iters = np.zeros(A, dtype=np.int64)
    active = np.ones(A, dtype=bool)

    def apply(c, s, t):
        x = c[:, None] * cloud[None, :, 0] - s[:, None] * cloud[None, :, 1] + t[:, None, 0]
        y = s[:, None] * cloud[None, :, 0] + c[:, None] * cloud[None, :, 1] + t[:, None, 1]
        return np.stack([x, y], axis=-1)

    moved = apply(c, s, t)
    nearest, d2 = _nearest_on_edges(moved, ea, eu, elen, en)
    resid = _residual(d2, metric)
    history[:, 0] = resid
    for it in range(1, max_iter + 1):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        q = nearest[idx]
        qc = q.mean(axis=1)
        qq = q - qc[:, None, :]
        sxx = (centered[None, :, 0] * qq[..., 0]).sum(axis=1)
        syy = (centered[None, :, 1] * qq[..., 1]).sum(axis=1)
        sxy = (centered[None, :, 0] * qq[..., 1]).sum(axis=1)
        syx = (centered[None, :, 1] * qq[..., 0]).sum(axis=1)
        ang = np.arctan2(sxy - syx, sxx + syy)
        nc, ns = np.cos(ang), np.sin(ang)
        nt = qc - np.stack([nc * cc[0] - ns * cc[1], ns * cc[0] + nc * cc[1]], axis=1)
        new_moved = apply(nc, ns, nt)
        new_nearest, new_d2 = _nearest_on_edges(new_moved, ea, eu, elen, en)
        new_resid = _residual(new_d2, metric)
        improvement = resid[idx] - new_resid
        # a step that raises the residual (roundoff only) is rejected and ends the run
        ok = improvement >= 0
        acc = idx[ok]
        c[acc], s[acc], t[acc] = nc[ok], ns[ok], nt[ok]
        nearest[acc] = new_nearest[ok]
        resid[acc] = new_resid[ok]
        history[acc, it] = new_resid[ok]
        iters[acc] = it
        active[idx[~ok]] = False
        active[acc[improvement[ok] < tol]] = False
    theta = np.arctan2(s, c)
    return resid, theta, t[:, 0].copy(), t[:, 1].copy(), iters, history
