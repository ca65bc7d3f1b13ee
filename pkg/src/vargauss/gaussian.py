"""Pure Gaussian states and their closed-form expectation values.

Bosonic states are parametrized by a displacement vector ``delta_r`` in the
quadrature ordering (x_1..x_N, p_1..p_N) and a real symmetric covariance
``gamma_b`` with vacuum normalization ``gamma_b = I``.  Fermionic states are
parametrized by the real antisymmetric Majorana covariance ``gamma_m``.

Besides Wick moments, the module provides the analytic expectation values of
exponentials of number operators (and their products with single mode
operators), which are the workhorses of the canonically transformed
variational models.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import PreconditionError, SingularExpectationError
from .numerics import symplectic_form, takagi

PURITY_TOL = 1e-8


# ---------------------------------------------------------------------------
# state containers


@dataclass
class BosonGaussian:
    """Pure bosonic Gaussian state: displacement, covariance, global phase."""

    n_modes: int
    delta_r: np.ndarray
    gamma_b: np.ndarray
    theta0: float = 0.0

    def __post_init__(self):
        self.delta_r = np.asarray(self.delta_r, dtype=float)
        self.gamma_b = np.asarray(self.gamma_b, dtype=float)
        n2 = 2 * self.n_modes
        if self.delta_r.shape != (n2,) or self.gamma_b.shape != (n2, n2):
            raise PreconditionError("BosonGaussian dimensions are inconsistent")

    @classmethod
    def vacuum(cls, n_modes: int) -> "BosonGaussian":
        return cls(n_modes, np.zeros(2 * n_modes), np.eye(2 * n_modes))

    def copy(self) -> "BosonGaussian":
        return BosonGaussian(self.n_modes, self.delta_r.copy(), self.gamma_b.copy(), self.theta0)

    def purity_residual(self) -> float:
        s = symplectic_form(self.n_modes)
        return float(np.linalg.norm(self.gamma_b @ s @ self.gamma_b - s))

    def check(self, tol: float = PURITY_TOL):
        if np.linalg.norm(self.gamma_b - self.gamma_b.T) > tol:
            raise PreconditionError("gamma_b is not symmetric")
        if np.linalg.eigvalsh(self.gamma_b).min() <= 0:
            raise PreconditionError("gamma_b is not positive definite")
        if self.purity_residual() > tol * max(1.0, np.linalg.norm(self.gamma_b)):
            raise PreconditionError("gamma_b violates the purity condition")
        return self

    def mean_b(self) -> np.ndarray:
        """Mode amplitudes <b_j> = (delta_x + i delta_p)/2."""
        n = self.n_modes
        return (self.delta_r[:n] + 1j * self.delta_r[n:]) / 2.0


@dataclass
class FermionCovariance:
    """Pure fermionic Gaussian state in the Majorana representation."""

    n_modes: int
    gamma_m: np.ndarray

    def __post_init__(self):
        self.gamma_m = np.asarray(self.gamma_m, dtype=float)
        n2 = 2 * self.n_modes
        if self.gamma_m.shape != (n2, n2):
            raise PreconditionError("FermionCovariance dimensions are inconsistent")

    @classmethod
    def vacuum(cls, n_modes: int) -> "FermionCovariance":
        return cls(n_modes, -symplectic_form(n_modes))

    def purity_residual(self) -> float:
        return float(np.linalg.norm(self.gamma_m @ self.gamma_m + np.eye(2 * self.n_modes)))

    def check(self, tol: float = PURITY_TOL):
        if np.linalg.norm(self.gamma_m + self.gamma_m.T) > tol:
            raise PreconditionError("gamma_m is not antisymmetric")
        if self.purity_residual() > tol * 2 * self.n_modes:
            raise PreconditionError("gamma_m violates the purity condition")
        return self


@dataclass
class ExpNumberSpec:
    """Phase pattern of an exponential of number operators.

    Exactly one of ``beta`` (bosonic) or ``alpha`` (fermionic) is set; the
    optional ``source`` is a linear-source vector for functional-derivative
    extraction by callers that differentiate through the expectation.
    """

    beta: np.ndarray | None = None
    alpha: np.ndarray | None = None
    source: np.ndarray | None = field(default=None)

    def __post_init__(self):
        if (self.beta is None) == (self.alpha is None):
            raise PreconditionError("ExpNumberSpec needs exactly one of beta/alpha")
        phases = self.beta if self.beta is not None else self.alpha
        if not np.all(np.isfinite(phases)):
            raise PreconditionError("phase entries must be finite")


def _as_beta(spec) -> np.ndarray:
    if isinstance(spec, ExpNumberSpec):
        if spec.beta is None:
            raise PreconditionError("expected a bosonic phase pattern")
        return np.asarray(spec.beta, dtype=float)
    return np.asarray(spec, dtype=float)


def _as_alpha(spec) -> np.ndarray:
    if isinstance(spec, ExpNumberSpec):
        if spec.alpha is None:
            raise PreconditionError("expected a fermionic phase pattern")
        return np.asarray(spec.alpha, dtype=float)
    return np.asarray(spec, dtype=float)


# ---------------------------------------------------------------------------
# Wick moments


def wick_moment(state: BosonGaussian, monomial) -> complex:
    """Quantum expectation of an ordered product of quadratures.

    ``monomial`` lists quadrature indices (0..2N-1) in operator order; its
    length must not exceed 4.  Contractions use the ordered two-point
    function Gamma + i*sigma of the fluctuations around the displacement.
    """
    idx = list(monomial)
    if len(idx) > 4:
        raise PreconditionError("wick_moment implements degree <= 4")
    n2 = 2 * state.n_modes
    if any(i < 0 or i >= n2 for i in idx):
        raise PreconditionError("quadrature index out of range")
    sigma = symplectic_form(state.n_modes)
    contr = state.gamma_b + 1j * sigma
    mean = state.delta_r

    def moment(positions):
        if not positions:
            return 1.0
        first, rest = positions[0], positions[1:]
        total = mean[idx[first]] * moment(rest)
        for pos_n, other in enumerate(rest):
            total += contr[idx[first], idx[other]] * moment(rest[:pos_n] + rest[pos_n + 1:])
        return total

    return complex(moment(tuple(range(len(idx)))))


# ---------------------------------------------------------------------------
# exponentials of number operators (bosons)


def _beta_matrices(state: BosonGaussian, beta: np.ndarray):
    """Shared intermediates for the exp-number formulas at phase pattern beta."""
    if beta.shape != (state.n_modes,):
        raise PreconditionError("beta must have one phase per mode")
    e2 = np.exp(1j * np.concatenate([beta, beta]))
    one_m = 1.0 - e2
    sq = np.sqrt(one_m)  # principal branch, entrywise
    gamma_big = sq[:, None] * state.gamma_b * sq[None, :] + np.diag(1.0 + e2)
    gamma_tilde = one_m[:, None] * state.gamma_b + np.diag(1.0 + e2)
    return e2, one_m, sq, gamma_big, gamma_tilde


def expn_boson(state: BosonGaussian, spec) -> complex:
    """<exp(i sum_j beta_j n_j)> on a pure bosonic Gaussian state."""
    beta = _as_beta(spec)
    _, _, sq, gamma_big, _ = _beta_matrices(state, beta)
    fac = takagi(gamma_big)
    if fac.d.min() <= 1e-12 * fac.d.max() or fac.d.max() / max(fac.d.min(), 1e-300) > 1e12:
        raise SingularExpectationError("exp-number covariance matrix is numerically singular")
    # branch of det(Gamma_B/2)^(-1/2): product of the individual square roots
    # times det(U); together with s0 this is invariant under the sign
    # ambiguity of the Takagi factor
    det_u = np.linalg.det(fac.u)
    prefactor = fac.s0 / (np.prod(np.sqrt(fac.d / 2.0)) * det_u)
    v = sq * state.delta_r
    expo = -0.5 * v @ np.linalg.solve(gamma_big, v)
    return complex(prefactor * np.exp(expo))


def expn_boson_with_poly(state: BosonGaussian, spec, j: int, k: int):
    """(<e^{i sum beta n} b_k>, <e^{i sum beta n} b_j^dag b_k>).

    The 1/(1 - e^{i beta_j}) factor of the quadratic formula is removed
    analytically, so beta_j -> 0 is regular (and beta = 0 reduces to the
    plain Wick contractions).
    """
    beta = _as_beta(spec)
    n = state.n_modes
    if not (0 <= j < n and 0 <= k < n):
        raise PreconditionError("mode index out of range")
    _, _, _, _, gamma_tilde = _beta_matrices(state, beta)
    base = expn_boson(state, beta)

    vk = np.zeros(2 * n, dtype=complex)
    vk[k] = 1.0
    vk[n + k] = 1.0j
    uj = np.zeros(2 * n, dtype=complex)
    uj[j] = 1.0
    uj[n + j] = -1.0j

    gt_vk = np.linalg.solve(gamma_tilde, vk)
    gt_uj = np.linalg.solve(gamma_tilde, uj)  # pairs as u_j^T (Gt^-1)^T

    exp_b = base * (state.delta_r @ gt_vk)
    fluct = 0.5 * (uj @ ((state.gamma_b - np.eye(2 * n)) @ gt_vk))
    coh = (gt_uj @ state.delta_r) * (state.delta_r @ gt_vk)
    exp_bdag_b = base * np.exp(1j * beta[j]) * (fluct + coh)
    return complex(exp_b), complex(exp_bdag_b)


def displaced_exp(state: BosonGaussian, gamma) -> complex:
    """<exp(i R^T gamma)> = exp(i delta^T gamma - gamma^T Gamma_b gamma / 2)."""
    gamma = np.asarray(gamma)
    if gamma.shape != (2 * state.n_modes,):
        raise PreconditionError("gamma must have length 2*n_modes")
    return complex(
        np.exp(1j * (state.delta_r @ gamma) - 0.5 * (gamma @ state.gamma_b @ gamma))
    )


# ---------------------------------------------------------------------------
# exponentials of number operators (fermions)


def w_matrix(n: int) -> np.ndarray:
    """Basis change [[I, I], [-iI, iI]] between quadrature/Majorana and mode operators."""
    eye = np.eye(n)
    return np.block([[eye, eye], [-1j * eye, 1j * eye]])


def gamma_f_from_m(cov: FermionCovariance) -> np.ndarray:
    """Dirac covariance <C C^dag> from the Majorana covariance."""
    w = w_matrix(cov.n_modes)
    return 0.5 * np.eye(2 * cov.n_modes) - 0.25j * (w.conj().T @ cov.gamma_m @ w)


def gamma_m_from_f(gamma_f: np.ndarray) -> FermionCovariance:
    """Inverse of :func:`gamma_f_from_m` (uses W W^dag = 2 I)."""
    n = gamma_f.shape[0] // 2
    w = w_matrix(n)
    inner = 0.5 * np.eye(2 * n) - gamma_f
    gm = -1j * (w @ inner @ w.conj().T)
    return FermionCovariance(n, gm.real)


def expn_fermion(cov: FermionCovariance, spec) -> complex:
    """<exp(i sum_j alpha_j n_j)> on a pure fermionic Gaussian state.

    Evaluated as (-1/2)^N s_f Pf(Gamma_F); the Pfaffian backend accepts the
    complex antisymmetric Gamma_F produced by general phase patterns.
    """
    from .numerics import pfaffian

    alpha = _as_alpha(spec)
    n = cov.n_modes
    if alpha.shape != (n,):
        raise PreconditionError("alpha must have one phase per mode")
    e2 = np.exp(1j * np.concatenate([alpha, alpha]))
    sq = np.sqrt(1.0 - e2)
    sigma = symplectic_form(n)
    gamma_fe = sq[:, None] * cov.gamma_m * sq[None, :] - (1.0 + e2)[:, None] * sigma
    s_f = (-1) ** (n // 2) if n % 2 == 0 else (-1) ** ((n - 1) // 2)
    return complex((-0.5) ** n * s_f * pfaffian(gamma_fe))


# ---------------------------------------------------------------------------
# purity maintenance


def repurify_boson(gamma_b: np.ndarray) -> np.ndarray:
    """Project a drifted covariance back onto the pure-state manifold.

    Rescales the symplectic spectrum to one: with X = Gamma^(1/2) and
    A = X sigma X, the matrix X (-A^2)^(-1/2) X is exactly pure and reduces
    to Gamma when Gamma already is (polar-style projection along the
    mixedness direction).
    """
    n = gamma_b.shape[0] // 2
    sigma = symplectic_form(n)
    w, v = np.linalg.eigh((gamma_b + gamma_b.T) / 2.0)
    x = (v * np.sqrt(w)) @ v.T
    a = x @ sigma @ x
    w2, v2 = np.linalg.eigh(-(a @ a))
    b = (v2 / np.sqrt(w2)) @ v2.T
    out = x @ b @ x
    return (out + out.T) / 2.0


def repurify_fermion_dirac(gamma_f: np.ndarray) -> np.ndarray:
    """Round a drifted Dirac covariance to the nearest projector."""
    gf = (gamma_f + gamma_f.conj().T) / 2.0
    w, v = np.linalg.eigh(gf)
    rounded = (w > 0.5).astype(float)
    return (v * rounded) @ v.conj().T


# ---------------------------------------------------------------------------
# random pure states (tests, perturbed starts)


def random_pure_boson(n_modes: int, rng, squeeze: float = 0.4, displace: float = 1.0) -> BosonGaussian:
    """Random pure Gaussian state with bounded squeezing (for tests/seeding)."""
    k = rng.standard_normal((2 * n_modes, 2 * n_modes))
    k = squeeze * (k + k.T) / (2 * np.sqrt(2 * n_modes))
    sigma = symplectic_form(n_modes)
    s = sla.expm(sigma @ k)
    gamma = s @ s.T
    delta = displace * rng.standard_normal(2 * n_modes)
    return BosonGaussian(n_modes, delta, gamma)


def random_pure_fermion(n_modes: int, rng, scale: float = 1.0) -> FermionCovariance:
    """Random pure Majorana covariance Gamma_m = -U sigma U^T, U in SO(2N)."""
    k = rng.standard_normal((2 * n_modes, 2 * n_modes)) * scale
    u = sla.expm(k - k.T)
    return FermionCovariance(n_modes, -(u @ symplectic_form(n_modes) @ u.T))
