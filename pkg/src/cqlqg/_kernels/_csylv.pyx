# cython: boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled back-substitution for triangular Sylvester equations."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef inline double cabs2(double complex z) nogil:
    return z.real * z.real + z.imag * z.imag


def trsyl(const double complex[:, ::1] T1, const double complex[:, ::1] T2,
          const double complex[:, ::1] C):
    """Solve ``T1 @ Y + Y @ T2 = C`` for upper-triangular ``T1``, ``T2``.

    Returns ``(Y, min_pivot)`` where ``min_pivot`` is the smallest modulus of
    ``T1[r, r] + T2[j, j]`` met during the sweep. The caller decides whether
    that is singular.
    """
    cdef Py_ssize_t n = T1.shape[0]
    cdef Py_ssize_t k = T2.shape[0]
    if T1.shape[1] != n or T2.shape[1] != k or C.shape[0] != n or C.shape[1] != k:
        raise ValueError("trsyl: incompatible shapes")

    Y_arr = np.array(C, dtype=np.complex128, order="C", copy=True)
    cdef double complex[:, ::1] Y = Y_arr
    cdef Py_ssize_t i, j, r, q
    cdef double complex t, s, acc, piv
    cdef double minpiv2 = np.inf
    cdef double p2

    with nogil:
        for j in range(k):
            for i in range(j):
                t = T2[i, j]
                if t.real != 0.0 or t.imag != 0.0:
                    for r in range(n):
                        Y[r, j] = Y[r, j] - t * Y[r, i]
            s = T2[j, j]
            for r in range(n - 1, -1, -1):
                acc = Y[r, j]
                for q in range(r + 1, n):
                    acc = acc - T1[r, q] * Y[q, j]
                piv = T1[r, r] + s
                p2 = cabs2(piv)
                if p2 < minpiv2:
                    minpiv2 = p2
                if p2 == 0.0:
                    Y[r, j] = 0.0
                else:
                    Y[r, j] = acc / piv
    return Y_arr, (minpiv2 ** 0.5 if n * k > 0 else np.inf)
