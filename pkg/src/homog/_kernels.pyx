# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Fourier-Galerkin assembly.

Builds the block matrix with (i, j) block ``B_i^H T[modes_i - modes_j] B_j``
where ``T`` is a table of Fourier coefficients indexed by mode differences.
"""

import numpy as np


def galerkin_matrix(
    const long long[:, ::1] modes,
    const double complex[:, :, ::1] symbols,
    const double complex[:, :, ::1] table,
    const long long[::1] strides,
    const long long[::1] offset,
    const unsigned char[::1] nonzero,
    bint hermitian,
):
    cdef Py_ssize_t D = modes.shape[0]
    cdef Py_ssize_t d = modes.shape[1]
    cdef Py_ssize_t m = symbols.shape[1]
    cdef Py_ssize_t n = symbols.shape[2]
    out = np.zeros((D * n, D * n), dtype=np.complex128)
    cdef double complex[:, ::1] A = out
    tmp_arr = np.empty((m, n), dtype=np.complex128)
    cdef double complex[:, ::1] tmp = tmp_arr
    cdef Py_ssize_t i, j, a, p, q, r, j0
    cdef long long idx
    cdef double complex acc, bconj
    with nogil:
        for i in range(D):
            j0 = i if hermitian else 0
            for j in range(j0, D):
                idx = 0
                for a in range(d):
                    idx = idx + (modes[i, a] - modes[j, a] + offset[a]) * strides[a]
                if not nonzero[idx]:
                    continue
                # tmp = T[idx] @ B_j
                for p in range(m):
                    for q in range(n):
                        acc = 0
                        for r in range(m):
                            acc = acc + table[idx, p, r] * symbols[j, r, q]
                        tmp[p, q] = acc
                # block = B_i^H @ tmp
                for p in range(n):
                    for q in range(n):
                        acc = 0
                        for r in range(m):
                            bconj = symbols[i, r, p].real - 1j * symbols[i, r, p].imag
                            acc = acc + bconj * tmp[r, q]
                        A[i * n + p, j * n + q] = acc
                        if hermitian and j != i:
                            A[j * n + q, i * n + p] = acc.real - 1j * acc.imag
    return out
