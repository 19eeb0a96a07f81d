"""Pure-numpy assembly used when the compiled kernel is unavailable."""

from __future__ import annotations

import numpy as np


def galerkin_matrix(modes, symbols, table, strides, offset, nonzero, hermitian):
    """Block matrix with (i, j) block ``B_i^H T[modes_i - modes_j] B_j``.

    Same contract as the compiled kernel; rows are built one mode at a time so
    memory stays at O(D m^2) instead of O(D^2 m^2).
    """
    D = modes.shape[0]
    n = symbols.shape[2]
    out = np.zeros((D, n, D, n), dtype=np.complex128)
    flat = modes @ strides
    base = offset @ strides
    sym_h = np.conj(np.swapaxes(symbols, 1, 2))
    for i in range(D):
        idx = flat[i] - flat + base
        keep = np.flatnonzero(nonzero[idx])
        if hermitian:
            keep = keep[keep >= i]
        if keep.size == 0:
            continue
        blocks = sym_h[i][None, :, :] @ table[idx[keep]] @ symbols[keep]  # (K, n, n)
        out[i][:, keep, :] = blocks.transpose(1, 0, 2)
        if hermitian:
            mirror = keep[keep > i]
            out[mirror, :, i, :] = np.conj(blocks[keep > i]).transpose(0, 2, 1)
    return out.reshape(D * n, D * n)
