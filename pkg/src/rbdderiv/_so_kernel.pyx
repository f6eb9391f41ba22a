# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled triple loop filling the second-order inverse-dynamics tensors.

Inputs are the per-DoF terms built in ``deriv_second.dof_terms``; vectors are
stored one DoF per row. ``path_idx[path_ptr[i]:path_ptr[i + 1]]`` lists the
DoFs from the root down to body i, so joint indices along a path increase.
"""

cdef inline double dot6(const double* x, const double* y) nogil:
    return x[0] * y[0] + x[1] * y[1] + x[2] * y[2] + x[3] * y[3] + x[4] * y[4] + x[5] * y[5]


cdef inline void mv(const double* M, const double* x, double alpha, double* out) nogil:
    # out += alpha * M x for a row-major 6x6 M
    cdef int r
    for r in range(6):
        out[r] += alpha * dot6(M + 6 * r, x)


cdef inline void mtv(const double* M, const double* x, double alpha, double* out) nogil:
    # out += alpha * M^T x
    cdef int r, k
    for k in range(6):
        for r in range(6):
            out[r] += alpha * M[6 * k + r] * x[k]


cdef inline void zero6(double* x) nogil:
    cdef int r
    for r in range(6):
        x[r] = 0.0


cdef inline void crf_apply(const double* s, const double* f, double* out) nogil:
    # out += s x* f = [w x n + v x fl; w x fl]
    out[0] += s[1] * f[2] - s[2] * f[1] + s[4] * f[5] - s[5] * f[4]
    out[1] += s[2] * f[0] - s[0] * f[2] + s[5] * f[3] - s[3] * f[5]
    out[2] += s[0] * f[1] - s[1] * f[0] + s[3] * f[4] - s[4] * f[3]
    out[3] += s[1] * f[5] - s[2] * f[4]
    out[4] += s[2] * f[3] - s[0] * f[5]
    out[5] += s[0] * f[4] - s[1] * f[3]


def fill(const double[:, ::1] s, const double[:, ::1] pd, const double[:, ::1] pdd,
         const double[:, ::1] ph,
         const double[:, :, ::1] BS, const double[:, :, ::1] T, const double[:, :, ::1] C,
         const double[:, :, ::1] FBI, const double[:, :, ::1] FBB, const double[:, :, ::1] FBQ,
         const double[:, :, ::1] G, const double[:, ::1] FT,
         const Py_ssize_t[::1] joint, const Py_ssize_t[::1] path_ptr, const Py_ssize_t[::1] path_idx,
         double[:, :, ::1] d2q, double[:, :, ::1] d2qd, double[:, :, ::1] X, double[:, :, ::1] dM):
    cdef Py_ssize_t nv = s.shape[0]
    cdef Py_ssize_t a, b, c, ib, ic, ji, jb, jc, p0, p1
    cdef const double *BSa
    cdef const double *Ta
    cdef const double *Ca
    cdef const double *FBIa
    cdef const double *FBBa
    cdef const double *FBQa
    cdef const double *Ga
    cdef const double *sb
    cdef const double *sc
    cdef double u1[6]
    cdef double u2[6]
    cdef double w1[6]
    cdef double cts[6]
    cdef double tts[6]
    cdef double u3[6]
    cdef double bs2[6]
    cdef double gs[6]
    cdef double x1b[6]
    cdef double fbis[6]
    cdef double x2b[6]
    cdef double cs[6]
    cdef double tsb[6]
    cdef double pp[6]
    cdef double tmp[6]
    cdef double v
    cdef bint lt, bl, top
    cdef int r
    with nogil:
        for a in range(nv):
            ji = joint[a]
            p0 = path_ptr[ji]
            p1 = path_ptr[ji + 1]
            BSa = &BS[a, 0, 0]
            Ta = &T[a, 0, 0]
            Ca = &C[a, 0, 0]
            FBIa = &FBI[a, 0, 0]
            FBBa = &FBB[a, 0, 0]
            FBQa = &FBQ[a, 0, 0]
            Ga = &G[a, 0, 0]
            for ib in range(p0, p1):
                b = path_idx[ib]
                jb = joint[b]
                sb = &s[b, 0]
                bl = jb < ji
                top = jb == ji
                zero6(u1); zero6(u2); zero6(w1); zero6(cts); zero6(tts); zero6(u3)
                zero6(bs2); zero6(gs); zero6(x1b); zero6(fbis); zero6(x2b); zero6(cs); zero6(tsb)
                mtv(BSa, &pd[b, 0], -2.0, u1)
                mtv(FBBa, sb, -2.0, u1)
                mtv(FBIa, sb, -1.0, u2)
                mv(Ca, &pd[b, 0], 1.0, w1)
                mv(Ta, &pdd[b, 0], 1.0, w1)
                crf_apply(sb, &FT[a, 0], w1)
                mtv(Ca, sb, 1.0, cts)
                mtv(Ta, sb, 1.0, tts)
                mtv(BSa, sb, -2.0, u3)
                mv(BSa, sb, 2.0, bs2)
                if top:
                    mv(Ga, sb, 1.0, gs)
                mv(BSa, &pd[b, 0], -2.0, x1b)
                mv(FBIa, &pd[b, 0], 2.0, x1b)
                mv(FBBa, sb, 2.0, x1b)
                mv(FBIa, sb, 1.0, fbis)
                mv(BSa, &pd[b, 0], 2.0, x2b)
                mv(FBQa, sb, 1.0, x2b)
                for r in range(6):
                    tmp[r] = pd[b, r] + ph[b, r]
                mv(Ca, sb, 1.0, cs)
                mv(Ta, tmp, 1.0, cs)
                mv(Ta, sb, 1.0, tsb)
                for ic in range(p0, p1):
                    c = path_idx[ic]
                    jc = joint[c]
                    if jc > jb:
                        break
                    sc = &s[c, 0]
                    lt = jc < jb
                    for r in range(6):
                        pp[r] = pd[c, r] + ph[c, r]

                    # d2 tau / dq2
                    v = dot6(u1, &pd[c, 0]) + dot6(u2, &pdd[c, 0])
                    d2q[a, b, c] = v
                    if lt:
                        d2q[a, c, b] = v
                        v = dot6(sc, w1)
                        d2q[c, a, b] = v
                        if bl:
                            d2q[c, b, a] = v
                    if bl:
                        v = dot6(cts, &pd[c, 0]) + dot6(tts, &pdd[c, 0])
                        d2q[b, c, a] = v
                        d2q[b, a, c] = v

                    # d2 tau / dqd2
                    if lt:
                        v = dot6(u3, sc)
                        d2qd[a, b, c] = v
                        d2qd[a, c, b] = v
                        if bl:
                            v = dot6(sc, bs2)
                            d2qd[c, a, b] = v
                            d2qd[c, b, a] = v
                        if top:
                            d2qd[c, a, b] = dot6(sc, gs)
                    else:
                        d2qd[a, b, c] = -dot6(tts, sc)
                    if bl:
                        v = -dot6(u3, sc)
                        d2qd[b, c, a] = v
                        d2qd[b, a, c] = v

                    # d2 tau / dqd dq
                    v = dot6(u3, &pd[c, 0])
                    X[a, b, c] = v
                    if bl:
                        X[b, a, c] = -v
                        X[b, c, a] = dot6(cts, sc) + dot6(tts, pp)
                    if lt:
                        X[a, c, b] = dot6(sc, x1b) + dot6(pp, fbis)
                        X[c, a, b] = dot6(sc, x2b)
                        if bl:
                            X[c, b, a] = dot6(sc, cs)

                    # dM / dq
                    if lt:
                        v = dot6(sc, fbis)
                        dM[c, a, b] = v
                        dM[a, c, b] = v
                    if bl:
                        v = dot6(sc, tsb)
                        dM[c, b, a] = v
                        dM[b, c, a] = v
