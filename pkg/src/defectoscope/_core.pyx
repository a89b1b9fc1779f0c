# cython: language_level=3
# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for the discrete elastic energy and its gradient.

Same cell scheme and per-edge arithmetic as the numpy reference backend
(_core_np): orbit distances with the fixed pairwise reduction tree of
manifolds.dot_tree, axis means as nested 0.5-pair averages, weight clamp
at t = delta, first-occurrence tie-break on the deck element. Per-edge
distances and per-cell t values match the reference bitwise; quantities
that pass through pow (phi, weights, gradients) agree to ~1 ulp because
numpy vectorizes pow differently from libm. Reductions here are
sequential row-major, so energy totals differ from numpy's pairwise
summation at the 1e-12 relative level.

Deck elements are applied as dense matrix-vector products; for the
signed-permutation groups used by the built-in targets this is exact
(one +-1 entry per row, zeros absorb without rounding).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, pow, sqrt

cnp.import_array()

BACKEND = "compiled"




cdef inline double _tree_sq(const double* d, int m) noexcept nogil:
    # squared norm with the pairwise fold of manifolds.dot_tree
    cdef double terms[8]
    cdef double nxt[8]
    cdef int cnt = m, i, j
    for i in range(m):
        terms[i] = d[i] * d[i]
    while cnt > 1:
        j = 0
        for i in range(0, cnt - 1, 2):
            nxt[j] = terms[i] + terms[i + 1]
            j += 1
        if cnt & 1:
            nxt[j] = terms[cnt - 1]
            j += 1
        for i in range(j):
            terms[i] = nxt[i]
        cnt = j
    return terms[0]


cdef inline void _matvec(const double* G, const double* v, double* out,
                         int m) noexcept nogil:
    cdef int i, j
    cdef double acc
    for i in range(m):
        acc = 0.0
        for j in range(m):
            acc = acc + G[i * m + j] * v[j]
        out[i] = acc


cdef void _edge_scan(const double* a, const double* b, const double* mats,
                     int k, int m, double* s_out, int* gi_out,
                     double* diff_out) noexcept nogil:
    """Minimal orbit distance over deck elements for one edge (a, b).

    gi_out/diff_out may be NULL when only the distance is needed.
    """
    cdef double moved[8]
    cdef double d[8]
    cdef double best = INFINITY, cur
    cdef int g, i, bg = 0
    if k == 1:
        for i in range(m):
            d[i] = b[i] - a[i]
        s_out[0] = sqrt(_tree_sq(d, m))
        if gi_out != NULL:
            gi_out[0] = 0
            for i in range(m):
                diff_out[i] = d[i]
        return
    for g in range(k):
        _matvec(mats + g * m * m, a, moved, m)
        for i in range(m):
            d[i] = b[i] - moved[i]
        cur = sqrt(_tree_sq(d, m))
        if cur < best:
            best = cur
            bg = g
            if diff_out != NULL:
                for i in range(m):
                    diff_out[i] = d[i]
    s_out[0] = best
    if gi_out != NULL:
        gi_out[0] = bg


def _group_mats(group, int m):
    """Stack deck elements (and inverses) as (k, m, m) float64 arrays."""
    if group is None or len(group) == 1:
        eye = np.eye(m)[None]
        return np.ascontiguousarray(eye), np.ascontiguousarray(eye)
    mats = np.ascontiguousarray(np.stack(group.elements))
    inv = np.ascontiguousarray(
        np.stack([group.elements[group.inverse[g]] for g in range(len(group))]))
    if mats.shape[1] != m:
        raise ValueError("deck group ambient dimension does not match field")
    if m > 8:
        raise ValueError("ambient dimension above compiled kernel limit")
    return mats, inv


def active_cells(inside):
    """Cells whose 2^d corner nodes are all inside the domain."""
    ndim = inside.ndim
    act = inside
    for ax in range(ndim):
        sl0 = [slice(None)] * ndim
        sl1 = [slice(None)] * ndim
        sl0[ax] = slice(None, -1)
        sl1[ax] = slice(1, None)
        act = act[tuple(sl0)] & act[tuple(sl1)]
    return act


# ---------------------------------------------------------------- 2D ----

cdef void _edges_2d(const double[:, :, ::1] U, const double* mats, int k,
                    int m, int ax, double* s, int* gi,
                    double* diff) noexcept nogil:
    cdef Py_ssize_t n0 = U.shape[0], n1 = U.shape[1]
    cdef Py_ssize_t i, j, e, e0 = n0, e1 = n1
    if ax == 0:
        e0 = n0 - 1
    else:
        e1 = n1 - 1
    cdef Py_ssize_t bi, bj
    for i in range(e0):
        for j in range(e1):
            bi = i + 1 if ax == 0 else i
            bj = j + 1 if ax == 1 else j
            e = i * e1 + j
            _edge_scan(&U[i, j, 0], &U[bi, bj, 0], mats, k, m, s + e,
                       gi + e if gi != NULL else NULL,
                       diff + e * m if diff != NULL else NULL)


def _forward_2d(U, inside, group, double h, double p, double b,
                bint want_grad, double delta):
    cdef double[:, :, ::1] Uv = U
    cdef Py_ssize_t n0 = Uv.shape[0], n1 = Uv.shape[1]
    cdef int m = <int> Uv.shape[2]
    mats_np, inv_np = _group_mats(group, m)
    cdef double[:, :, ::1] mats = mats_np
    cdef double[:, :, ::1] invm = inv_np
    cdef int k = <int> mats.shape[0]

    act_np = active_cells(np.ascontiguousarray(inside))
    cdef cnp.uint8_t[:, ::1] act = act_np.astype(np.uint8)

    s0_np = np.empty((n0 - 1, n1), dtype=np.float64)
    s1_np = np.empty((n0, n1 - 1), dtype=np.float64)
    cdef double[:, ::1] s0 = s0_np, s1 = s1_np
    cdef int[:, ::1] g0 = None, g1 = None
    cdef double[:, :, ::1] d0 = None, d1 = None
    cdef int* g0p = NULL
    cdef int* g1p = NULL
    cdef double* d0p = NULL
    cdef double* d1p = NULL
    if want_grad:
        g0 = np.empty((n0 - 1, n1), dtype=np.int32)
        g1 = np.empty((n0, n1 - 1), dtype=np.int32)
        d0 = np.empty((n0 - 1, n1, m), dtype=np.float64)
        d1 = np.empty((n0, n1 - 1, m), dtype=np.float64)
        g0p = &g0[0, 0]
        g1p = &g1[0, 0]
        d0p = &d0[0, 0, 0]
        d1p = &d1[0, 0, 0]

    with nogil:
        _edges_2d(Uv, &mats[0, 0, 0], k, m, 0, &s0[0, 0], g0p, d0p)
        _edges_2d(Uv, &mats[0, 0, 0], k, m, 1, &s1[0, 0], g1p, d1p)

    cdef Py_ssize_t c0 = n0 - 1, c1 = n1 - 1
    D0_np = np.empty((c0, c1), dtype=np.float64)
    D1_np = np.empty((c0, c1), dtype=np.float64)
    t_np = np.empty((c0, c1), dtype=np.float64)
    E_np = np.zeros((c0, c1), dtype=np.float64)
    cdef double[:, ::1] D0 = D0_np, D1 = D1_np, tv = t_np, Ev = E_np

    cdef double bp = pow(b, p / 2.0)
    cdef double hd = pow(h, 2.0)
    cdef double t2, Da, Db, phi
    cdef Py_ssize_t i, j
    cdef double total = 0.0
    with nogil:
        for i in range(c0):
            for j in range(c1):
                Da = 0.5 * (s0[i, j] + s0[i, j + 1])
                Db = 0.5 * (s1[i, j] + s1[i + 1, j])
                D0[i, j] = Da
                D1[i, j] = Db
                t2 = (Da / h) * (Da / h)
                t2 = t2 + (Db / h) * (Db / h)
                tv[i, j] = sqrt(t2)
                if act[i, j]:
                    phi = pow(t2 + b, p / 2.0) - bp
                    Ev[i, j] = hd * phi
                    total = total + Ev[i, j]

    if not want_grad:
        return E_np, t_np, act_np.astype(bool), total

    grad_np = np.zeros((n0, n1, m), dtype=np.float64)
    cdef double[:, :, ::1] grad = grad_np
    C0_np = np.zeros((c0, c1), dtype=np.float64)
    C1_np = np.zeros((c0, c1), dtype=np.float64)
    cdef double[:, ::1] C0 = C0_np, C1 = C1_np
    cdef double scale = pow(h, 0.0)
    cdef double coef, th, w, cw, sv
    cdef double contrib[8]
    cdef double back[8]
    cdef int cm
    with nogil:
        for i in range(c0):
            for j in range(c1):
                if act[i, j]:
                    th = tv[i, j]
                    if th < delta:
                        th = delta
                    w = p * pow(th * th + b, p / 2.0 - 1.0)
                    cw = scale * w
                    C0[i, j] = cw * D0[i, j]
                    C1[i, j] = cw * D1[i, j]
        # axis 0 edges: coef gathered over axis-1 cell neighbors
        for i in range(n0 - 1):
            for j in range(n1):
                coef = 0.5 * ((C0[i, j - 1] if j - 1 >= 0 else 0.0)
                              + (C0[i, j] if j < c1 else 0.0))
                sv = s0[i, j]
                if sv > 0.0:
                    for cm in range(m):
                        contrib[cm] = coef * (d0[i, j, cm] / sv)
                else:
                    for cm in range(m):
                        contrib[cm] = 0.0
                for cm in range(m):
                    grad[i + 1, j, cm] = grad[i + 1, j, cm] + contrib[cm]
                if k == 1:
                    for cm in range(m):
                        grad[i, j, cm] = grad[i, j, cm] - contrib[cm]
                else:
                    _matvec(&invm[g0[i, j], 0, 0], contrib, back, m)
                    for cm in range(m):
                        grad[i, j, cm] = grad[i, j, cm] - back[cm]
        # axis 1 edges
        for i in range(n0):
            for j in range(n1 - 1):
                coef = 0.5 * ((C1[i - 1, j] if i - 1 >= 0 else 0.0)
                              + (C1[i, j] if i < c0 else 0.0))
                sv = s1[i, j]
                if sv > 0.0:
                    for cm in range(m):
                        contrib[cm] = coef * (d1[i, j, cm] / sv)
                else:
                    for cm in range(m):
                        contrib[cm] = 0.0
                for cm in range(m):
                    grad[i, j + 1, cm] = grad[i, j + 1, cm] + contrib[cm]
                if k == 1:
                    for cm in range(m):
                        grad[i, j, cm] = grad[i, j, cm] - contrib[cm]
                else:
                    _matvec(&invm[g1[i, j], 0, 0], contrib, back, m)
                    for cm in range(m):
                        grad[i, j, cm] = grad[i, j, cm] - back[cm]
    return grad_np, total


# ---------------------------------------------------------------- 3D ----

cdef void _edges_3d(const double[:, :, :, ::1] U, const double* mats, int k,
                    int m, int ax, double* s, int* gi,
                    double* diff) noexcept nogil:
    cdef Py_ssize_t n0 = U.shape[0], n1 = U.shape[1], n2 = U.shape[2]
    cdef Py_ssize_t e0 = n0, e1 = n1, e2 = n2
    if ax == 0:
        e0 = n0 - 1
    elif ax == 1:
        e1 = n1 - 1
    else:
        e2 = n2 - 1
    cdef Py_ssize_t i, j, l, bi, bj, bl, e
    for i in range(e0):
        for j in range(e1):
            for l in range(e2):
                bi = i + 1 if ax == 0 else i
                bj = j + 1 if ax == 1 else j
                bl = l + 1 if ax == 2 else l
                e = (i * e1 + j) * e2 + l
                _edge_scan(&U[i, j, l, 0], &U[bi, bj, bl, 0], mats, k, m,
                           s + e, gi + e if gi != NULL else NULL,
                           diff + e * m if diff != NULL else NULL)


cdef inline double _cell3(const double[:, :, ::1] C,
                          Py_ssize_t i, Py_ssize_t j, Py_ssize_t l,
                          Py_ssize_t c0, Py_ssize_t c1,
                          Py_ssize_t c2) noexcept nogil:
    # cell coefficient, zero outside the cell array
    if i < 0 or j < 0 or l < 0 or i >= c0 or j >= c1 or l >= c2:
        return 0.0
    return C[i, j, l]


def _forward_3d(U, inside, group, double h, double p, double b,
                bint want_grad, double delta):
    cdef double[:, :, :, ::1] Uv = U
    cdef Py_ssize_t n0 = Uv.shape[0], n1 = Uv.shape[1], n2 = Uv.shape[2]
    cdef int m = <int> Uv.shape[3]
    mats_np, inv_np = _group_mats(group, m)
    cdef double[:, :, ::1] mats = mats_np
    cdef double[:, :, ::1] invm = inv_np
    cdef int k = <int> mats.shape[0]

    act_np = active_cells(np.ascontiguousarray(inside))
    cdef cnp.uint8_t[:, :, ::1] act = act_np.astype(np.uint8)

    shapes = [((n0 - 1), n1, n2), (n0, (n1 - 1), n2), (n0, n1, (n2 - 1))]
    s_np = [np.empty(sh, dtype=np.float64) for sh in shapes]
    cdef double[:, :, ::1] s0 = s_np[0], s1 = s_np[1], s2 = s_np[2]
    cdef int[:, :, ::1] g0 = None, g1 = None, g2 = None
    cdef double[:, :, :, ::1] d0 = None, d1 = None, d2 = None
    cdef int* gp[3]
    cdef double* dp[3]
    cdef int ii
    for ii in range(3):
        gp[ii] = NULL
        dp[ii] = NULL
    if want_grad:
        g_np = [np.empty(sh, dtype=np.int32) for sh in shapes]
        d_np = [np.empty(sh + (m,), dtype=np.float64) for sh in shapes]
        g0 = g_np[0]; g1 = g_np[1]; g2 = g_np[2]
        d0 = d_np[0]; d1 = d_np[1]; d2 = d_np[2]
        gp[0] = &g0[0, 0, 0]; gp[1] = &g1[0, 0, 0]; gp[2] = &g2[0, 0, 0]
        dp[0] = &d0[0, 0, 0, 0]; dp[1] = &d1[0, 0, 0, 0]; dp[2] = &d2[0, 0, 0, 0]

    with nogil:
        _edges_3d(Uv, &mats[0, 0, 0], k, m, 0, &s0[0, 0, 0], gp[0], dp[0])
        _edges_3d(Uv, &mats[0, 0, 0], k, m, 1, &s1[0, 0, 0], gp[1], dp[1])
        _edges_3d(Uv, &mats[0, 0, 0], k, m, 2, &s2[0, 0, 0], gp[2], dp[2])

    cdef Py_ssize_t c0 = n0 - 1, c1 = n1 - 1, c2 = n2 - 1
    D0_np = np.empty((c0, c1, c2), dtype=np.float64)
    D1_np = np.empty((c0, c1, c2), dtype=np.float64)
    D2_np = np.empty((c0, c1, c2), dtype=np.float64)
    t_np = np.empty((c0, c1, c2), dtype=np.float64)
    E_np = np.zeros((c0, c1, c2), dtype=np.float64)
    cdef double[:, :, ::1] D0 = D0_np, D1 = D1_np, D2 = D2_np
    cdef double[:, :, ::1] tv = t_np, Ev = E_np

    cdef double bp = pow(b, p / 2.0)
    cdef double hd = pow(h, 3.0)
    cdef double t2, Da, Db, Dc, phi
    cdef Py_ssize_t i, j, l
    cdef double total = 0.0
    with nogil:
        for i in range(c0):
            for j in range(c1):
                for l in range(c2):
                    # nested 0.5-pair means, inner axis first (matches the
                    # reference backend's reduction order)
                    Da = 0.5 * (0.5 * (s0[i, j, l] + s0[i, j + 1, l])
                                + 0.5 * (s0[i, j, l + 1] + s0[i, j + 1, l + 1]))
                    Db = 0.5 * (0.5 * (s1[i, j, l] + s1[i + 1, j, l])
                                + 0.5 * (s1[i, j, l + 1] + s1[i + 1, j, l + 1]))
                    Dc = 0.5 * (0.5 * (s2[i, j, l] + s2[i + 1, j, l])
                                + 0.5 * (s2[i, j + 1, l] + s2[i + 1, j + 1, l]))
                    D0[i, j, l] = Da
                    D1[i, j, l] = Db
                    D2[i, j, l] = Dc
                    t2 = (Da / h) * (Da / h)
                    t2 = t2 + (Db / h) * (Db / h)
                    t2 = t2 + (Dc / h) * (Dc / h)
                    tv[i, j, l] = sqrt(t2)
                    if act[i, j, l]:
                        phi = pow(t2 + b, p / 2.0) - bp
                        Ev[i, j, l] = hd * phi
                        total = total + Ev[i, j, l]

    if not want_grad:
        return E_np, t_np, act_np.astype(bool), total

    grad_np = np.zeros((n0, n1, n2, m), dtype=np.float64)
    cdef double[:, :, :, ::1] grad = grad_np
    C0_np = np.zeros((c0, c1, c2), dtype=np.float64)
    C1_np = np.zeros((c0, c1, c2), dtype=np.float64)
    C2_np = np.zeros((c0, c1, c2), dtype=np.float64)
    cdef double[:, :, ::1] C0 = C0_np, C1 = C1_np, C2 = C2_np
    cdef double scale = pow(h, 1.0)
    cdef double coef, th, w, cw, sv, yl, yc
    cdef double contrib[8]
    cdef double back[8]
    cdef int cm
    with nogil:
        for i in range(c0):
            for j in range(c1):
                for l in range(c2):
                    if act[i, j, l]:
                        th = tv[i, j, l]
                        if th < delta:
                            th = delta
                        w = p * pow(th * th + b, p / 2.0 - 1.0)
                        cw = scale * w
                        C0[i, j, l] = cw * D0[i, j, l]
                        C1[i, j, l] = cw * D1[i, j, l]
                        C2[i, j, l] = cw * D2[i, j, l]
        # axis 0: scatter pairs cells along axis 1 (inner), axis 2 (outer)
        for i in range(n0 - 1):
            for j in range(n1):
                for l in range(n2):
                    yl = 0.5 * (_cell3(C0, i, j - 1, l - 1, c0, c1, c2)
                                + _cell3(C0, i, j, l - 1, c0, c1, c2))
                    yc = 0.5 * (_cell3(C0, i, j - 1, l, c0, c1, c2)
                                + _cell3(C0, i, j, l, c0, c1, c2))
                    coef = 0.5 * (yl + yc)
                    sv = s0[i, j, l]
                    if sv > 0.0:
                        for cm in range(m):
                            contrib[cm] = coef * (d0[i, j, l, cm] / sv)
                    else:
                        for cm in range(m):
                            contrib[cm] = 0.0
                    for cm in range(m):
                        grad[i + 1, j, l, cm] = grad[i + 1, j, l, cm] + contrib[cm]
                    if k == 1:
                        for cm in range(m):
                            grad[i, j, l, cm] = grad[i, j, l, cm] - contrib[cm]
                    else:
                        _matvec(&invm[g0[i, j, l], 0, 0], contrib, back, m)
                        for cm in range(m):
                            grad[i, j, l, cm] = grad[i, j, l, cm] - back[cm]
        # axis 1: pairs along axis 0 (inner), axis 2 (outer)
        for i in range(n0):
            for j in range(n1 - 1):
                for l in range(n2):
                    yl = 0.5 * (_cell3(C1, i - 1, j, l - 1, c0, c1, c2)
                                + _cell3(C1, i, j, l - 1, c0, c1, c2))
                    yc = 0.5 * (_cell3(C1, i - 1, j, l, c0, c1, c2)
                                + _cell3(C1, i, j, l, c0, c1, c2))
                    coef = 0.5 * (yl + yc)
                    sv = s1[i, j, l]
                    if sv > 0.0:
                        for cm in range(m):
                            contrib[cm] = coef * (d1[i, j, l, cm] / sv)
                    else:
                        for cm in range(m):
                            contrib[cm] = 0.0
                    for cm in range(m):
                        grad[i, j + 1, l, cm] = grad[i, j + 1, l, cm] + contrib[cm]
                    if k == 1:
                        for cm in range(m):
                            grad[i, j, l, cm] = grad[i, j, l, cm] - contrib[cm]
                    else:
                        _matvec(&invm[g1[i, j, l], 0, 0], contrib, back, m)
                        for cm in range(m):
                            grad[i, j, l, cm] = grad[i, j, l, cm] - back[cm]
        # axis 2: pairs along axis 0 (inner), axis 1 (outer)
        for i in range(n0):
            for j in range(n1):
                for l in range(n2 - 1):
                    yl = 0.5 * (_cell3(C2, i - 1, j - 1, l, c0, c1, c2)
                                + _cell3(C2, i, j - 1, l, c0, c1, c2))
                    yc = 0.5 * (_cell3(C2, i - 1, j, l, c0, c1, c2)
                                + _cell3(C2, i, j, l, c0, c1, c2))
                    coef = 0.5 * (yl + yc)
                    sv = s2[i, j, l]
                    if sv > 0.0:
                        for cm in range(m):
                            contrib[cm] = coef * (d2[i, j, l, cm] / sv)
                    else:
                        for cm in range(m):
                            contrib[cm] = 0.0
                    for cm in range(m):
                        grad[i, j, l + 1, cm] = grad[i, j, l + 1, cm] + contrib[cm]
                    if k == 1:
                        for cm in range(m):
                            grad[i, j, l, cm] = grad[i, j, l, cm] - contrib[cm]
                    else:
                        _matvec(&invm[g2[i, j, l], 0, 0], contrib, back, m)
                        for cm in range(m):
                            grad[i, j, l, cm] = grad[i, j, l, cm] - back[cm]
    return grad_np, total


# --------------------------------------------------------------- API ----

def _as_c(U):
    U = np.ascontiguousarray(np.asarray(U, dtype=np.float64))
    if U.ndim not in (3, 4):
        raise ValueError("expected a 2D or 3D node array of vectors")
    return U


def cell_energies(U, inside, group, h, p, b):
    """Per-cell energies and gradient magnitudes (compiled backend)."""
    U = _as_c(U)
    if U.ndim == 3:
        E, t, act, _ = _forward_2d(U, inside, group, h, p, b, False, 0.0)
    else:
        E, t, act, _ = _forward_3d(U, inside, group, h, p, b, False, 0.0)
    return E, np.where(act, t, 0.0), act


def total_energy(U, inside, group, h, p, b):
    U = _as_c(U)
    if U.ndim == 3:
        return float(_forward_2d(U, inside, group, h, p, b, False, 0.0)[3])
    return float(_forward_3d(U, inside, group, h, p, b, False, 0.0)[3])


def energy_gradient(U, inside, group, h, p, b, delta):
    """Ambient gradient of the cell energy plus the energy (compiled)."""
    U = _as_c(U)
    if U.ndim == 3:
        grad, en = _forward_2d(U, inside, group, h, p, b, True, delta)
    else:
        grad, en = _forward_3d(U, inside, group, h, p, b, True, delta)
    return grad, float(en)
