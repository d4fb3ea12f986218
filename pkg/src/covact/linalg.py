"""Dense complex kernels for small Hermitian positive-definite matrices.

Matrices are ``numpy`` arrays of dtype ``complex128`` in C (row-major) order,
always stored as the full square. Vectors are 1-D ``complex128`` arrays.
"""

import numpy as np

from .errors import DimensionMismatch, NotPositiveDefinite, SingularUpdate

SINGULAR_UPDATE_TOL = 1e-14


def _check_square(A, n=None):
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {A.shape}")
    if n is not None and A.shape[0] != n:
        raise DimensionMismatch(f"matrix is {A.shape[0]}x{A.shape[1]}, vector has length {n}")


def is_hermitian(A, rtol=1e-10):
    A = np.asarray(A)
    scale = max(np.abs(A).max(initial=0.0), 1e-300)
    return bool(np.abs(A - A.conj().T).max(initial=0.0) <= rtol * scale)


def cholesky_logdet(A):
    """Return ``log|A|`` for Hermitian positive-definite ``A``.

    Computed as ``2 * sum(log(diag(chol(A))))``. Raises
    :class:`NotPositiveDefinite` instead of regularizing.
    """
    A = np.asarray(A, dtype=np.complex128)
    _check_square(A)
    try:
        Lc = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    piv = Lc.diagonal().real
    if np.any(piv <= 0) or not np.all(np.isfinite(piv)):
        raise NotPositiveDefinite("non-positive Cholesky pivot")
    return float(2.0 * np.log(piv).sum())


def _real_part(z, what):
    re, im = z.real, z.imag
    if abs(im) >= 1e-8 * abs(re) + 1e-12:
        raise ArithmeticError(f"{what} has imaginary part {im:.3e} (real {re:.3e}); input not Hermitian?")
    return float(re)


def quadratic_form(x, A):
    """``x^H A x`` as a real scalar."""
    x = np.asarray(x, dtype=np.complex128)
    A = np.asarray(A, dtype=np.complex128)
    _check_square(A, x.shape[0])
    return _real_part(np.vdot(x, A @ x), "quadratic form")


def sandwich_form(x, A, B):
    """``x^H A B A x``, evaluated as ``(Ax)^H B (Ax)``."""
    x = np.asarray(x, dtype=np.complex128)
    A = np.asarray(A, dtype=np.complex128)
    _check_square(A, x.shape[0])
    _check_square(np.asarray(B), x.shape[0])
    return quadratic_form(A @ x, B)


def rank_one_inverse_update(Ainv, s, d):
    """Replace ``Ainv`` in place by ``(A + d s s^H)^{-1}`` (Sherman-Morrison).

    ``d`` is real. The correction ``v v^H`` with ``v = Ainv s`` is Hermitian
    entry by entry, so both triangles stay exact mirrors of each other.
    Raises :class:`SingularUpdate` when ``1 + d s^H Ainv s <= 1e-14``; ``Ainv``
    is left untouched in that case.
    """
    s = np.asarray(s, dtype=np.complex128)
    _check_square(Ainv, s.shape[0])
    if d == 0.0:
        return Ainv
    v = Ainv @ s
    denom = 1.0 + d * np.vdot(s, v).real
    if denom <= SINGULAR_UPDATE_TOL:
        raise SingularUpdate(f"1 + d s^H A^-1 s = {denom:.3e}")
    Ainv -= (d / denom) * np.outer(v, v.conj())
    return Ainv


def re_symmetrize(A):
    """In-place ``A <- (A + A^H) / 2``."""
    A[...] = 0.5 * (A + A.conj().T)
    return A


def relative_frobenius(A, B):
    return float(np.linalg.norm(A - B) / max(np.linalg.norm(B), 1e-300))
