# cython: language_level=3
"""Compiled hot kernels. Semantics mirror ``_pykernels`` exactly."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, floor, atan2, cos, sin

cnp.import_array()

ctypedef fused floating:
    float
    double

cdef double BOUNDARY_EPS = 1e-12


def conv_output_size(Py_ssize_t size, Py_ssize_t k, Py_ssize_t stride, Py_ssize_t pad):
    return (size + 2 * pad - k) // stride + 1


def _im2col(const floating[:, :, :, ::1] x, floating[:, ::1] cols,
            Py_ssize_t k, Py_ssize_t stride, Py_ssize_t pad,
            Py_ssize_t Ho, Py_ssize_t Wo):
    cdef Py_ssize_t B = x.shape[0], H = x.shape[1], W = x.shape[2], C = x.shape[3]
    cdef Py_ssize_t b, oi, oj, i, j, c, row, col, yi, xj
    with nogil:
        for b in range(B):
            for oi in range(Ho):
                for oj in range(Wo):
                    row = (b * Ho + oi) * Wo + oj
                    col = 0
                    for i in range(k):
                        yi = oi * stride + i - pad
                        for j in range(k):
                            xj = oj * stride + j - pad
                            if yi < 0 or yi >= H or xj < 0 or xj >= W:
                                for c in range(C):
                                    cols[row, col + c] = 0
                            else:
                                for c in range(C):
                                    cols[row, col + c] = x[b, yi, xj, c]
                            col += C


def im2col(x, Py_ssize_t k, Py_ssize_t stride, Py_ssize_t pad):
    x = np.ascontiguousarray(x)
    cdef Py_ssize_t B = x.shape[0], H = x.shape[1], W = x.shape[2], C = x.shape[3]
    cdef Py_ssize_t Ho = (H + 2 * pad - k) // stride + 1
    cdef Py_ssize_t Wo = (W + 2 * pad - k) // stride + 1
    cols = np.empty((B * Ho * Wo, k * k * C), dtype=x.dtype)
    _im2col(x, cols, k, stride, pad, Ho, Wo)
    return cols


def _col2im(const floating[:, ::1] cols, floating[:, :, :, ::1] dx,
            Py_ssize_t k, Py_ssize_t stride, Py_ssize_t pad,
            Py_ssize_t Ho, Py_ssize_t Wo):
    cdef Py_ssize_t B = dx.shape[0], H = dx.shape[1], W = dx.shape[2], C = dx.shape[3]
    cdef Py_ssize_t b, oi, oj, i, j, c, row, col, yi, xj
    with nogil:
        for b in range(B):
            for oi in range(Ho):
                for oj in range(Wo):
                    row = (b * Ho + oi) * Wo + oj
                    col = 0
                    for i in range(k):
                        yi = oi * stride + i - pad
                        for j in range(k):
                            xj = oj * stride + j - pad
                            if yi >= 0 and yi < H and xj >= 0 and xj < W:
                                for c in range(C):
                                    dx[b, yi, xj, c] += cols[row, col + c]
                            col += C


def col2im(cols, x_shape, Py_ssize_t k, Py_ssize_t stride, Py_ssize_t pad):
    cols = np.ascontiguousarray(cols)
    cdef Py_ssize_t B = x_shape[0], H = x_shape[1], W = x_shape[2]
    cdef Py_ssize_t Ho = (H + 2 * pad - k) // stride + 1
    cdef Py_ssize_t Wo = (W + 2 * pad - k) // stride + 1
    dx = np.zeros(tuple(x_shape), dtype=cols.dtype)
    _col2im(cols, dx, k, stride, pad, Ho, Wo)
    return dx


def _maxpool_fwd(const floating[:, :, :, ::1] x, floating[:, :, :, ::1] out,
                 int[:, :, :, ::1] idx, Py_ssize_t s):
    cdef Py_ssize_t B = out.shape[0], Ho = out.shape[1], Wo = out.shape[2], C = out.shape[3]
    cdef Py_ssize_t b, oi, oj, c, i, j, best
    cdef floating v, m
    with nogil:
        for b in range(B):
            for oi in range(Ho):
                for oj in range(Wo):
                    for c in range(C):
                        m = x[b, oi * s, oj * s, c]
                        best = 0
                        for i in range(s):
                            for j in range(s):
                                v = x[b, oi * s + i, oj * s + j, c]
                                if v > m:
                                    m = v
                                    best = i * s + j
                        out[b, oi, oj, c] = m
                        idx[b, oi, oj, c] = <int>best


def maxpool_forward(x, Py_ssize_t s):
    x = np.ascontiguousarray(x)
    cdef Py_ssize_t B = x.shape[0], H = x.shape[1], W = x.shape[2], C = x.shape[3]
    out = np.empty((B, H // s, W // s, C), dtype=x.dtype)
    idx = np.empty((B, H // s, W // s, C), dtype=np.int32)
    _maxpool_fwd(x, out, idx, s)
    return out, idx


def _maxpool_bwd(const floating[:, :, :, ::1] dout, const int[:, :, :, ::1] idx,
                 floating[:, :, :, ::1] dx, Py_ssize_t s):
    cdef Py_ssize_t B = dout.shape[0], Ho = dout.shape[1], Wo = dout.shape[2], C = dout.shape[3]
    cdef Py_ssize_t b, oi, oj, c, w
    with nogil:
        for b in range(B):
            for oi in range(Ho):
                for oj in range(Wo):
                    for c in range(C):
                        w = idx[b, oi, oj, c]
                        dx[b, oi * s + w // s, oj * s + w % s, c] = dout[b, oi, oj, c]


def maxpool_backward(dout, idx, x_shape, Py_ssize_t s):
    dout = np.ascontiguousarray(dout)
    idx = np.ascontiguousarray(idx, dtype=np.int32)
    dx = np.zeros(tuple(x_shape), dtype=dout.dtype)
    _maxpool_bwd(dout, idx, dx, s)
    return dx


cdef inline bint _inside(double px, double py, const double[:, ::1] v) noexcept nogil:
    cdef Py_ssize_t n = v.shape[0], e
    cdef double ax, ay, bx, by, ex, ey, l2, t, dx, dy, xint
    cdef bint odd = False
    for e in range(n):
        ax = v[e, 0]
        ay = v[e, 1]
        bx = v[(e + 1) % n, 0]
        by = v[(e + 1) % n, 1]
        ex = bx - ax
        ey = by - ay
        l2 = ex * ex + ey * ey
        if l2 > 0:
            t = ((px - ax) * ex + (py - ay) * ey) / l2
        else:
            t = 0.0
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
        dx = px - (ax + t * ex)
        dy = py - (ay + t * ey)
        if dx * dx + dy * dy <= BOUNDARY_EPS * BOUNDARY_EPS:
            return True
        if (ay > py) != (by > py):
            xint = ax + (py - ay) * ex / ey
            if px < xint:
                odd = not odd
    return odd


def points_in_polygon(points, vertices):
    cdef const double[:, ::1] p = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 2)
    cdef const double[:, ::1] v = np.ascontiguousarray(vertices, dtype=np.float64)
    cdef Py_ssize_t m = p.shape[0], i
    out = np.empty(m, dtype=bool)
    cdef cnp.npy_bool[::1] o = out
    with nogil:
        for i in range(m):
            o[i] = _inside(p[i, 0], p[i, 1], v)
    return out


def rasterize_polygon(vertices, Py_ssize_t nx, Py_ssize_t ny, double cell, double ox, double oy):
    cdef const double[:, ::1] v = np.ascontiguousarray(vertices, dtype=np.float64)
    out = np.zeros((nx, ny), dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] o = out
    cdef Py_ssize_t i, j
    cdef double x, y
    with nogil:
        for i in range(nx):
            x = ox + (i + 0.5) * cell
            for j in range(ny):
                y = oy + (j + 0.5) * cell
                o[i, j] = _inside(x, y, v)
    return out


def gae(rewards, values, dones, double last_value, double gamma, double lam):
    cdef const double[::1] r = np.ascontiguousarray(rewards, dtype=np.float64)
    cdef const double[::1] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef const double[::1] d = np.ascontiguousarray(dones, dtype=np.float64)
    cdef Py_ssize_t T = r.shape[0], t
    adv = np.zeros(T, dtype=np.float64)
    cdef double[::1] a = adv
    cdef double running = 0.0, next_value = last_value, nonterminal, delta
    with nogil:
        for t in range(T - 1, -1, -1):
            nonterminal = 1.0 - d[t]
            delta = r[t] + gamma * next_value * nonterminal - v[t]
            running = delta + gamma * lam * nonterminal * running
            a[t] = running
            next_value = v[t]
    return adv


cdef inline double _nearest(double px, double py,
                            const double[:, ::1] ea, const double[:, ::1] eu,
                            const double[::1] elen, const double[::1] en,
                            double *qx, double *qy) noexcept nogil:
    cdef Py_ssize_t E = ea.shape[0], e
    cdef double best = 1e300, t, step, kk, cx, cy, d2
    for e in range(E):
        t = (px - ea[e, 0]) * eu[e, 0] + (py - ea[e, 1]) * eu[e, 1]
        step = elen[e] / en[e]
        kk = floor(t / step + 0.5)
        if kk < 0:
            kk = 0
        elif kk > en[e]:
            kk = en[e]
        cx = ea[e, 0] + (kk * step) * eu[e, 0]
        cy = ea[e, 1] + (kk * step) * eu[e, 1]
        d2 = (px - cx) * (px - cx) + (py - cy) * (py - cy)
        if d2 < best:
            best = d2
            qx[0] = cx
            qy[0] = cy
    return best


cdef double _correspond(const double[:, ::1] cloud, double c, double s, double tx, double ty,
                        const double[:, ::1] ea, const double[:, ::1] eu,
                        const double[::1] elen, const double[::1] en,
                        double[:, ::1] near, int metric) noexcept nogil:
    cdef Py_ssize_t n = cloud.shape[0], i
    cdef double x, y, d2, acc = 0.0, qx = 0.0, qy = 0.0
    for i in range(n):
        x = c * cloud[i, 0] - s * cloud[i, 1] + tx
        y = s * cloud[i, 0] + c * cloud[i, 1] + ty
        d2 = _nearest(x, y, ea, eu, elen, en, &qx, &qy)
        acc += sqrt(d2) if metric == 1 else d2
        near[i, 0] = qx
        near[i, 1] = qy
    return acc / n if metric == 1 else sqrt(acc / n)


def icp_batch(cloud, ea, eu, elen, en, init_theta, init_t,
              Py_ssize_t max_iter, double tol, int metric=1):
    cdef const double[:, ::1] P = np.ascontiguousarray(cloud, dtype=np.float64)
    cdef const double[:, ::1] A_ = np.ascontiguousarray(ea, dtype=np.float64)
    cdef const double[:, ::1] U = np.ascontiguousarray(eu, dtype=np.float64)
    cdef const double[::1] L = np.ascontiguousarray(elen, dtype=np.float64)
    cdef const double[::1] N = np.ascontiguousarray(en, dtype=np.float64)
    cdef const double[::1] ang0 = np.ascontiguousarray(init_theta, dtype=np.float64)
    cdef const double[:, ::1] T0 = np.ascontiguousarray(init_t, dtype=np.float64)
    cdef Py_ssize_t n = P.shape[0], A = ang0.shape[0], a, i, it
    near_arr = np.empty((n, 2), dtype=np.float64)
    cand_arr = np.empty((n, 2), dtype=np.float64)
    cdef double[:, ::1] near = near_arr
    cdef double[:, ::1] cand = cand_arr
    resid_arr = np.empty(A)
    theta_arr = np.empty(A)
    tx_arr = np.empty(A)
    ty_arr = np.empty(A)
    iters_arr = np.zeros(A, dtype=np.int64)
    hist_arr = np.full((A, max_iter + 1), np.nan)
    cdef double[::1] R = resid_arr
    cdef double[::1] TH = theta_arr
    cdef double[::1] TX = tx_arr
    cdef double[::1] TY = ty_arr
    cdef cnp.int64_t[::1] IT = iters_arr
    cdef double[:, ::1] H = hist_arr
    cdef double ccx = 0.0, ccy = 0.0, c, s, tx, ty, r, nr, qcx, qcy
    cdef double sxx, syy, sxy, syx, px, py, qx, qy, th, nc, ns, ntx, nty
    with nogil:
        for i in range(n):
            ccx += P[i, 0]
            ccy += P[i, 1]
        ccx /= n
        ccy /= n
        for a in range(A):
            c = cos(ang0[a])
            s = sin(ang0[a])
            tx = T0[a, 0]
            ty = T0[a, 1]
            r = _correspond(P, c, s, tx, ty, A_, U, L, N, near, metric)
            H[a, 0] = r
            for it in range(1, max_iter + 1):
                qcx = 0.0
                qcy = 0.0
                for i in range(n):
                    qcx += near[i, 0]
                    qcy += near[i, 1]
                qcx /= n
                qcy /= n
                sxx = 0.0
                syy = 0.0
                sxy = 0.0
                syx = 0.0
                for i in range(n):
                    px = P[i, 0] - ccx
                    py = P[i, 1] - ccy
                    qx = near[i, 0] - qcx
                    qy = near[i, 1] - qcy
                    sxx += px * qx
                    syy += py * qy
                    sxy += px * qy
                    syx += py * qx
                th = atan2(sxy - syx, sxx + syy)
                nc = cos(th)
                ns = sin(th)
                ntx = qcx - (nc * ccx - ns * ccy)
                nty = qcy - (ns * ccx + nc * ccy)
                nr = _correspond(P, nc, ns, ntx, nty, A_, U, L, N, cand, metric)
                if r - nr < 0:
                    break
                c = nc
                s = ns
                tx = ntx
                ty = nty
                for i in range(n):
                    near[i, 0] = cand[i, 0]
                    near[i, 1] = cand[i, 1]
                H[a, it] = nr
                IT[a] = it
                if r - nr < tol:
                    r = nr
                    break
                r = nr
            R[a] = r
            TH[a] = atan2(s, c)
            TX[a] = tx
            TY[a] = ty
    return resid_arr, theta_arr, tx_arr, ty_arr, iters_arr, hist_arr
