# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled statevector kernels; see ``_pykernels`` for the reference versions."""

from libc.math cimport cos, sin

cdef extern from *:
    int __builtin_popcountll(unsigned long long) nogil

ctypedef long long i64


def rotate_pairs(double complex[::1] psi, const i64[::1] xs, const i64[::1] ys,
                 const double[::1] signs, double c, double s):
    cdef Py_ssize_t k, n = xs.shape[0]
    cdef double complex a, b
    cdef double ss
    with nogil:
        for k in range(n):
            a = psi[xs[k]]
            b = psi[ys[k]]
            ss = s * signs[k]
            psi[xs[k]] = c * a - ss * b
            psi[ys[k]] = c * b + ss * a


def generator_overlap(const double complex[::1] bra, const double complex[::1] ket,
                      const i64[::1] xs, const i64[::1] ys, const double[::1] signs):
    cdef Py_ssize_t k, n = xs.shape[0]
    cdef double complex acc = 0.0
    cdef double complex bx, by
    with nogil:
        for k in range(n):
            bx = bra[xs[k]]
            by = bra[ys[k]]
            acc = acc + signs[k] * (
                (by.real - 1j * by.imag) * ket[xs[k]]
                - (bx.real - 1j * bx.imag) * ket[ys[k]]
            )
    return acc


def pauli_rotation(double complex[::1] psi, i64 xmask, i64 zmask, int ny, double phi):
    cdef Py_ssize_t b, bp, dim = psi.shape[0]
    cdef double c = cos(phi), s = sin(phi)
    cdef double complex base, ph_b, ph_bp, a0, a1
    cdef int r = ny % 4
    if r == 0:
        base = 1.0
    elif r == 1:
        base = 1j
    elif r == 2:
        base = -1.0
    else:
        base = -1j
    cdef i64 top = 0
    if xmask == 0:
        with nogil:
            for b in range(dim):
                ph_b = base
                if __builtin_popcountll(<unsigned long long>(b & zmask)) & 1:
                    ph_b = -ph_b
                psi[b] = (c + 1j * s * ph_b) * psi[b]
        return
    top = xmask
    while top & (top - 1):
        top &= top - 1
    with nogil:
        for b in range(dim):
            if b & top:
                continue
            bp = b ^ xmask
            ph_b = base
            if __builtin_popcountll(<unsigned long long>(b & zmask)) & 1:
                ph_b = -ph_b
            ph_bp = base
            if __builtin_popcountll(<unsigned long long>(bp & zmask)) & 1:
                ph_bp = -ph_bp
            a0 = psi[b]
            a1 = psi[bp]
            psi[b] = c * a0 + 1j * s * ph_bp * a1
            psi[bp] = c * a1 + 1j * s * ph_b * a0
