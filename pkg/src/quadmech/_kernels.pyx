# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: RK4 rate-equation integration and Richardson-Lucy.

Same algorithms and signatures as ``_kernels_py``; loops run without the GIL
so independent integrations can share a thread pool.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport log
from libc.stdlib cimport malloc, free
from scipy.linalg.cython_blas cimport dgemv

cnp.import_array()

BACKEND = "cython"


cdef struct Prog:
    int n
    int nch
    const int *ch_k
    const double *ch_pref
    const double *ch_slope
    const double *ch_off
    const int *ch_sched
    int kmax
    const double *sch_t
    const double *sch_c
    const int *sch_len
    const double *g_up
    const double *g_dn
    const double *e_up
    const double *e_dn
    double gamma1
    const int *w_ptr
    const int *w_idx
    const double *w_val


cdef inline double _interp(const double *tk, const double *ck, int length, double t) noexcept nogil:
    cdef int i
    if length == 1 or t <= tk[0]:
        return ck[0]
    if t >= tk[length - 1]:
        return ck[length - 1]
    for i in range(1, length):
        if t <= tk[i]:
            return ck[i - 1] + (ck[i] - ck[i - 1]) * (t - tk[i - 1]) / (tk[i] - tk[i - 1])
    return ck[length - 1]


cdef void _deriv(const Prog *p, double t, const double *pg, const double *pe,
                 double *dg, double *de) noexcept nogil:
    cdef int n = p.n
    cdef int i, j, c, k, lo, hi, s
    cdef double x, rate, flux, center, g1 = p.gamma1, src
    for i in range(n):
        dg[i] = -(p.g_up[i] + p.g_dn[i]) * pg[i]
        de[i] = -(p.e_up[i] + p.e_dn[i] + g1) * pe[i]
    for i in range(n - 1):
        dg[i + 1] += p.g_up[i] * pg[i]
        dg[i] += p.g_dn[i + 1] * pg[i + 1]
        de[i + 1] += p.e_up[i] * pe[i]
        de[i] += p.e_dn[i + 1] * pe[i + 1]
    if g1 != 0.0:
        for i in range(n):
            src = g1 * pe[i]
            if src != 0.0:
                for j in range(p.w_ptr[i], p.w_ptr[i + 1]):
                    dg[p.w_idx[j]] += p.w_val[j] * src
    for c in range(p.nch):
        k = p.ch_k[c]
        s = p.ch_sched[c]
        center = _interp(p.sch_t + s * p.kmax, p.sch_c + s * p.kmax, p.sch_len[s], t)
        lo = -k if k < 0 else 0
        hi = n - k if k > 0 else n
        for i in range(lo, hi):
            x = p.ch_slope[c] * (i - center) + p.ch_off[c]
            rate = p.ch_pref[c * n + i] / (1.0 + x * x)
            flux = rate * (pg[i] - pe[i + k])
            dg[i] -= flux
            de[i + k] += flux


cdef void _enforce(int n, double *pg, double *pe, double *st) noexcept nogil:
    # st: min_entry, clipped_mass, max_clip_step, boundary_max
    cdef int i
    cdef double neg = 0.0, rest = 0.0, top
    for i in range(n):
        if pg[i] < st[0]:
            st[0] = pg[i]
        if pe[i] < st[0]:
            st[0] = pe[i]
        if pg[i] < 0.0:
            neg -= pg[i]
            pg[i] = 0.0
        if pe[i] < 0.0:
            neg -= pe[i]
            pe[i] = 0.0
    if neg > 0.0:
        st[1] += neg
        if neg > st[2]:
            st[2] = neg
    pe[n - 1] = 0.0
    for i in range(n - 1):
        rest += pg[i] + pe[i]
    top = 1.0 - rest
    if top < 0.0:
        for i in range(n - 1):
            pg[i] /= rest
            pe[i] /= rest
        top = 0.0
    pg[n - 1] = top
    if top > st[3]:
        st[3] = top


cdef void _rk4(const Prog *p, double *pg, double *pe, double t, double dt, double *work) noexcept nogil:
    cdef int n = p.n
    cdef int i
    cdef double half = 0.5 * dt
    cdef double *k1g = work
    cdef double *k1e = work + n
    cdef double *k2g = work + 2 * n
    cdef double *k2e = work + 3 * n
    cdef double *k3g = work + 4 * n
    cdef double *k3e = work + 5 * n
    cdef double *k4g = work + 6 * n
    cdef double *k4e = work + 7 * n
    cdef double *tg = work + 8 * n
    cdef double *te = work + 9 * n
    _deriv(p, t, pg, pe, k1g, k1e)
    for i in range(n):
        tg[i] = pg[i] + half * k1g[i]
        te[i] = pe[i] + half * k1e[i]
    _deriv(p, t + half, tg, te, k2g, k2e)
    for i in range(n):
        tg[i] = pg[i] + half * k2g[i]
        te[i] = pe[i] + half * k2e[i]
    _deriv(p, t + half, tg, te, k3g, k3e)
    for i in range(n):
        tg[i] = pg[i] + dt * k3g[i]
        te[i] = pe[i] + dt * k3e[i]
    _deriv(p, t + dt, tg, te, k4g, k4e)
    for i in range(n):
        pg[i] += dt / 6.0 * (k1g[i] + 2.0 * k2g[i] + 2.0 * k3g[i] + k4g[i])
        pe[i] += dt / 6.0 * (k1e[i] + 2.0 * k2e[i] + 2.0 * k3e[i] + k4e[i])


cdef class _ProgHolder:
    """Keeps contiguous copies of a program's arrays alive while in use."""
    cdef Prog prog
    cdef object keep

    def __init__(self, prog):
        ch_k = np.ascontiguousarray(prog.ch_k, dtype=np.intc)
        ch_pref = np.ascontiguousarray(prog.ch_pref, dtype=np.float64).reshape(-1)
        ch_slope = np.ascontiguousarray(prog.ch_slope, dtype=np.float64)
        ch_off = np.ascontiguousarray(prog.ch_off, dtype=np.float64)
        ch_sched = np.ascontiguousarray(prog.ch_sched, dtype=np.intc)
        sch_t = np.ascontiguousarray(prog.sch_t, dtype=np.float64)
        sch_c = np.ascontiguousarray(prog.sch_c, dtype=np.float64)
        sch_len = np.ascontiguousarray(prog.sch_len, dtype=np.intc)
        g_up = np.ascontiguousarray(prog.g_up, dtype=np.float64)
        g_dn = np.ascontiguousarray(prog.g_dn, dtype=np.float64)
        e_up = np.ascontiguousarray(prog.e_up, dtype=np.float64)
        e_dn = np.ascontiguousarray(prog.e_dn, dtype=np.float64)
        w_ptr = np.ascontiguousarray(prog.w_ptr, dtype=np.intc)
        w_idx = np.ascontiguousarray(prog.w_idx, dtype=np.intc)
        w_val = np.ascontiguousarray(prog.w_val, dtype=np.float64)
        # guard against zero-size buffers (no channels or schedules)
        pads = [np.zeros(1, dtype=np.intc), np.zeros(1), np.zeros(1)]
        self.keep = (ch_k, ch_pref, ch_slope, ch_off, ch_sched, sch_t, sch_c, sch_len,
                     g_up, g_dn, e_up, e_dn, w_ptr, w_idx, w_val, pads)
        self.prog.n = int(prog.n)
        self.prog.nch = int(ch_k.shape[0])
        self.prog.kmax = int(sch_t.shape[1]) if sch_t.ndim == 2 and sch_t.shape[0] else 1
        self.prog.ch_k = <const int *> cnp.PyArray_DATA(ch_k if ch_k.size else pads[0])
        self.prog.ch_pref = <const double *> cnp.PyArray_DATA(ch_pref if ch_pref.size else pads[1])
        self.prog.ch_slope = <const double *> cnp.PyArray_DATA(ch_slope if ch_slope.size else pads[1])
        self.prog.ch_off = <const double *> cnp.PyArray_DATA(ch_off if ch_off.size else pads[1])
        self.prog.ch_sched = <const int *> cnp.PyArray_DATA(ch_sched if ch_sched.size else pads[0])
        self.prog.sch_t = <const double *> cnp.PyArray_DATA(sch_t if sch_t.size else pads[1])
        self.prog.sch_c = <const double *> cnp.PyArray_DATA(sch_c if sch_c.size else pads[2])
        self.prog.sch_len = <const int *> cnp.PyArray_DATA(sch_len if sch_len.size else pads[0])
        self.prog.g_up = <const double *> cnp.PyArray_DATA(g_up)
        self.prog.g_dn = <const double *> cnp.PyArray_DATA(g_dn)
        self.prog.e_up = <const double *> cnp.PyArray_DATA(e_up)
        self.prog.e_dn = <const double *> cnp.PyArray_DATA(e_dn)
        self.prog.gamma1 = float(prog.gamma1)
        self.prog.w_ptr = <const int *> cnp.PyArray_DATA(w_ptr)
        self.prog.w_idx = <const int *> cnp.PyArray_DATA(w_idx if w_idx.size else pads[0])
        self.prog.w_val = <const double *> cnp.PyArray_DATA(w_val if w_val.size else pads[1])


def derivative(prog, double t, pg, pe):
    """Right-hand side ``(dpg/dt, dpe/dt)`` of the rate equations."""
    cdef _ProgHolder h = _ProgHolder(prog)
    cdef cnp.ndarray[double, ndim=1, mode="c"] g = np.ascontiguousarray(pg, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] e = np.ascontiguousarray(pe, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] dg = np.empty(h.prog.n)
    cdef cnp.ndarray[double, ndim=1, mode="c"] de = np.empty(h.prog.n)
    _deriv(&h.prog, t, &g[0], &e[0], &dg[0], &de[0])
    return dg, de


def integrate(prog, pg0, pe0, double t0, double dt, long n_steps, long sample_every):
    """Fixed-step RK4 with the per-step conservation rule.

    Returns ``(times, pg_samples, pe_samples, stats)`` exactly as the
    pure-Python backend does.
    """
    cdef _ProgHolder h = _ProgHolder(prog)
    cdef int n = h.prog.n
    cdef long n_samples = 1 + n_steps // sample_every + (1 if n_steps % sample_every else 0)
    cdef cnp.ndarray[double, ndim=1, mode="c"] pg = np.array(pg0, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] pe = np.array(pe0, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] gs = np.empty((n_samples, n))
    cdef cnp.ndarray[double, ndim=2, mode="c"] es = np.empty((n_samples, n))
    cdef cnp.ndarray[double, ndim=1, mode="c"] times = np.empty(n_samples)
    cdef double st[4]
    cdef double *work = <double *> malloc(10 * n * sizeof(double))
    cdef long step, row = 0
    cdef int i
    cdef double t = t0
    if work == NULL:
        raise MemoryError()
    st[0] = 0.0
    st[1] = 0.0
    st[2] = 0.0
    st[3] = 0.0
    times[0] = t0
    for i in range(n):
        gs[0, i] = pg[i]
        es[0, i] = pe[i]
    try:
        with nogil:
            for step in range(1, n_steps + 1):
                _rk4(&h.prog, &pg[0], &pe[0], t, dt, work)
                t = t0 + step * dt
                _enforce(n, &pg[0], &pe[0], st)
                if step % sample_every == 0 or step == n_steps:
                    row += 1
                    times[row] = t
                    for i in range(n):
                        gs[row, i] = pg[i]
                        es[row, i] = pe[i]
    finally:
        free(work)
    stats = {"min_entry": st[0], "clipped_mass": st[1], "max_clip_step": st[2], "boundary_max": st[3]}
    return times, gs, es, stats


def richardson_lucy(psf, data, long iterations, double floor, double tol):
    """Multiplicative Richardson-Lucy updates for ``data ~ P @ psf``.

    Returns ``(P, loglik_history, n_decreases)`` exactly as the pure-Python
    backend does. Both matrix-vector products go through BLAS ``dgemv``.
    """
    cdef cnp.ndarray[double, ndim=2, mode="c"] k = np.ascontiguousarray(psf, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] d = np.ascontiguousarray(data, dtype=np.float64)
    cdef int nr = k.shape[0]
    cdef int nf = k.shape[1]
    cdef cnp.ndarray[double, ndim=1, mode="c"] p = np.empty(nr)
    cdef cnp.ndarray[double, ndim=1, mode="c"] back = np.empty(nr)
    cdef cnp.ndarray[double, ndim=1, mode="c"] norm = np.zeros(nr)
    cdef cnp.ndarray[double, ndim=1, mode="c"] model = np.empty(nf)
    cdef cnp.ndarray[double, ndim=1, mode="c"] ratio = np.empty(nf)
    cdef cnp.ndarray[double, ndim=1, mode="c"] hist = np.empty(iterations + 1)
    cdef int i, j
    cdef long it, used = 0, decreases = 0
    cdef double total = 0.0, dsum = 0.0, ll, new, acc, gain
    cdef char trans = b'T'
    cdef int one = 1
    cdef double d_one = 1.0, d_zero = 0.0
    for i in range(nr):
        acc = 0.0
        for j in range(nf):
            acc += k[i, j]
        norm[i] = acc
        total += acc
    for j in range(nf):
        dsum += d[j]
    with nogil:
        for i in range(nr):
            p[i] = dsum / total if norm[i] > 0 else 0.0
        ll = _forward(&k[0, 0], &p[0], &d[0], &model[0], nr, nf, floor)
        hist[0] = ll
        for it in range(iterations):
            for j in range(nf):
                ratio[j] = d[j] / model[j]
            # row-major k is the column-major nf x nr matrix A; back = A^T ratio
            dgemv(&trans, &nf, &nr, &d_one, &k[0, 0], &nf, &ratio[0], &one, &d_zero, &back[0], &one)
            for i in range(nr):
                p[i] = p[i] * back[i] / norm[i] if norm[i] > 0 else 0.0
            new = _forward(&k[0, 0], &p[0], &d[0], &model[0], nr, nf, floor)
            if new < ll - 1e-12 * (ll if ll > 0 else -ll):
                decreases += 1
            used += 1
            hist[used] = new
            gain = new - ll
            ll = new
            if tol > 0 and (gain if gain > 0 else -gain) <= tol * (ll if ll > 0 else -ll):
                break
    return p, hist[:used + 1].copy(), int(decreases)


cdef double _forward(double *k, double *p, const double *d, double *model,
                     int nr, int nf, double floor) noexcept nogil:
    """``model = max(p @ k, floor)``; returns the Poisson log-likelihood."""
    cdef int j, one = 1
    cdef char notrans = b'N'
    cdef double d_one = 1.0, d_zero = 0.0, ll = 0.0
    dgemv(&notrans, &nf, &nr, &d_one, k, &nf, p, &one, &d_zero, model, &one)
    for j in range(nf):
        if model[j] < floor:
            model[j] = floor
        ll += d[j] * log(model[j]) - model[j]
    return ll
