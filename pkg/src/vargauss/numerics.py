"""Self-contained numerical kernels.

Takagi factorization of complex symmetric matrices, Pfaffians of
antisymmetric matrices, symplectic-form utilities, the digamma function,
and symmetric positive-definite matrix square roots.  Everything here is a
pure function of its arguments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import PreconditionError, SingularGramError

SYMMETRY_TOL = 1e-12


_SYMPLECTIC_CACHE: dict = {}


def symplectic_form(n: int) -> np.ndarray:
    """Return the 2n x 2n symplectic form [[0, I], [-I, 0]] in (x, p) ordering."""
    cached = _SYMPLECTIC_CACHE.get(n)
    if cached is None:
        s = np.zeros((2 * n, 2 * n))
        s[:n, n:] = np.eye(n)
        s[n:, :n] = -np.eye(n)
        s.setflags(write=False)
        cached = _SYMPLECTIC_CACHE[n] = s
    return cached


def symplectic_check(s: np.ndarray, sigma: np.ndarray | None = None, tol: float = 1e-8) -> bool:
    """True iff ``s`` preserves the symplectic form: || s sigma s^T - sigma ||_F < tol."""
    s = np.asarray(s)
    if s.ndim != 2 or s.shape[0] != s.shape[1] or s.shape[0] % 2:
        raise PreconditionError("symplectic_check needs a square 2n x 2n matrix")
    if sigma is None:
        sigma = symplectic_form(s.shape[0] // 2)
    return bool(np.linalg.norm(s @ sigma @ s.T - sigma) < tol)


@dataclass
class TakagiFactorization:
    """Factorization M = u^T diag(d) u with unitary u and d >= 0 sorted descending.

    ``s0`` is the congruence sign sign(Re det u), used by the Gaussian
    exponential-expectation formulas.
    """

    d: np.ndarray
    u: np.ndarray
    s0: int

    def reconstruct(self) -> np.ndarray:
        return self.u.T @ np.diag(self.d) @ self.u


def takagi(m: np.ndarray, sym_tol: float = SYMMETRY_TOL) -> TakagiFactorization:
    """Takagi-factorize a complex symmetric matrix.

    Parameters
    ----------
    m : (n, n) complex symmetric array, ``m.T == m`` to ``sym_tol`` (relative).

    Returns
    -------
    TakagiFactorization with ``u.T @ diag(d) @ u == m``.

    Notes
    -----
    Built on the SVD; within each group of (nearly) degenerate singular
    values the unitary factor is aligned with the principal square root of
    the symmetric unitary coupling block, which keeps the reconstruction
    exact for repeated and zero singular values.
    """
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise PreconditionError("takagi needs a square matrix")
    scale = np.linalg.norm(m)
    if scale > 0 and np.linalg.norm(m - m.T) > sym_tol * max(1.0, scale):
        raise PreconditionError("takagi input is not symmetric")

    v, d, wh = np.linalg.svd(m)
    w = wh.conj().T
    n = m.shape[0]

    # group indices with (nearly) equal singular values; exact degeneracy
    # makes the SVD bases rotate freely inside each block
    groups: list[list[int]] = []
    tol = 1e-10 * max(scale, 1e-300) + 1e-14
    for i in range(n):
        if groups and abs(d[groups[-1][0]] - d[i]) <= tol:
            groups[-1].append(i)
        else:
            groups.append([i])

    q = np.zeros((n, n), dtype=complex)
    for idx in groups:
        if d[idx[0]] <= tol:
            # null block: any orthonormal choice reconstructs m exactly
            for i in idx:
                q[i, i] = 1.0
            continue
        z = v[:, idx].T @ w[:, idx]  # unitary and symmetric on the block
        if len(idx) == 1:
            q[idx[0], idx[0]] = np.sqrt(z[0, 0])
        else:
            q[np.ix_(idx, idx)] = sla.sqrtm(z)
    u = (v @ q.conj()).T

    det_u = np.linalg.det(u)
    s0 = 1 if det_u.real >= 0 else -1
    return TakagiFactorization(d=d, u=u, s0=s0)


def pfaffian(a: np.ndarray, antisym_tol: float = SYMMETRY_TOL):
    """Pfaffian of an antisymmetric matrix (real or complex entries).

    Parlett-Reid style LTL^T elimination with partial pivoting; O(n^3) and
    sign exact.  Odd dimension returns 0 by definition.
    """
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise PreconditionError("pfaffian needs a square matrix")
    n = a.shape[0]
    if n == 0:
        return 1.0
    scale = np.abs(a).max()
    if scale > 0 and np.abs(a + a.T).max() > antisym_tol * max(1.0, scale):
        raise PreconditionError("pfaffian input is not antisymmetric")
    if n % 2:
        return 0.0

    work = a.astype(complex if np.iscomplexobj(a) else float).copy()
    pf = 1.0 + 0.0j if np.iscomplexobj(a) else 1.0
    for k in range(0, n - 1, 2):
        pivot = k + 1 + np.argmax(np.abs(work[k + 1:, k]))
        if pivot != k + 1:
            work[[k + 1, pivot]] = work[[pivot, k + 1]]
            work[:, [k + 1, pivot]] = work[:, [pivot, k + 1]]
            pf = -pf
        if work[k + 1, k] == 0:
            return 0.0 * pf
        pf = pf * work[k, k + 1]
        if k + 2 < n:
            tau = work[k + 2:, k] / work[k + 1, k]
            col = work[k + 2:, k + 1]
            work[k + 2:, k + 2:] += np.outer(tau, col) - np.outer(col, tau)
    return pf


_DIGAMMA_ASYMPTOTIC = (
    # -B_{2n}/(2n): coefficients of z^{-2n} in the asymptotic expansion
    -1.0 / 12.0,
    1.0 / 120.0,
    -1.0 / 252.0,
    1.0 / 240.0,
    -1.0 / 132.0,
    691.0 / 32760.0,
    -1.0 / 12.0,
)


def digamma(z: float) -> float:
    """Digamma function for z > 0, accurate to 1e-12.

    Recurrence psi(z) = psi(z+1) - 1/z lifts the argument above 10, where
    the Bernoulli asymptotic series converges to full double precision.
    """
    z = float(z)
    if not z > 0.0:
        raise PreconditionError("digamma requires z > 0")
    acc = 0.0
    while z < 10.0:
        acc -= 1.0 / z
        z += 1.0
    inv2 = 1.0 / (z * z)
    series = 0.0
    power = inv2
    for coeff in _DIGAMMA_ASYMPTOTIC:
        series += coeff * power
        power *= inv2
    return acc + np.log(z) - 0.5 / z + series


def matrix_sqrt_posdef(m: np.ndarray, min_eig: float = 1e-12) -> np.ndarray:
    """Symmetric square root of a symmetric positive-definite matrix.

    Raises SingularGramError (carrying the offending eigenvalue) when an
    eigenvalue does not exceed ``min_eig``.
    """
    m = np.asarray(m, dtype=float)
    if np.linalg.norm(m - m.T) > SYMMETRY_TOL * max(1.0, np.linalg.norm(m)):
        raise PreconditionError("matrix_sqrt_posdef input is not symmetric")
    w, v = np.linalg.eigh(m)
    if w.min() <= min_eig:
        raise SingularGramError(
            f"matrix is not positive definite (eigenvalue {w.min():.3e})",
            eigenvalue=float(w.min()),
        )
    return (v * np.sqrt(w)) @ v.T
