"""Numpy implementations of the statevector kernels.

Same signatures and in-place semantics as the compiled ``_ckernels``.
"""

import numpy as np


def rotate_pairs(psi, xs, ys, signs, c, s):
    """Rotate amplitude pairs ``(x, y)`` with ``kappa|x> = sign|y>``."""
    a = psi[xs]
    b = psi[ys]
    ss = s * signs
    psi[xs] = c * a - ss * b
    psi[ys] = c * b + ss * a


def generator_overlap(bra, ket, xs, ys, signs):
    """``<bra|kappa|ket>`` for a generator given by its pair table."""
    return complex(np.sum(signs * (np.conj(bra[ys]) * ket[xs] - np.conj(bra[xs]) * ket[ys])))


def _phases(b, zmask, ny):
    par = np.bitwise_count(b & zmask) & 1
    return (1j) ** (ny % 4) * (1 - 2 * par.astype(float))


def pauli_rotation(psi, xmask, zmask, ny, phi):
    """In-place ``exp(i phi P)`` for the Pauli string given by its masks."""
    c, s = np.cos(phi), np.sin(phi)
    b = np.arange(psi.shape[0], dtype=np.int64)
    if xmask == 0:
        psi *= c + 1j * s * _phases(b, zmask, ny)
        return
    top = 1 << (int(xmask).bit_length() - 1)
    lo = b[(b & top) == 0]
    hi = lo ^ xmask
    a0 = psi[lo]
    a1 = psi[hi]
    psi[lo] = c * a0 + 1j * s * _phases(hi, zmask, ny) * a1
    psi[hi] = c * a1 + 1j * s * _phases(lo, zmask, ny) * a0
