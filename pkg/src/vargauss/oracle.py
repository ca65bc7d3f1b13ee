"""Brute-force truncated-Fock ground truth.

Exact diagonalization and exact time evolution on small Hilbert spaces,
used to certify variational results and the closed-form Gaussian
expectations.  Bases are occupation-number tuples with a per-mode cutoff
``n_max`` and an optional total-occupation cap ``n_total`` (the cap keeps
multi-mode bases inside the hard dimension guard).
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, asdict, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DimensionExceededError, PreconditionError
from .gaussian import BosonGaussian
from .numerics import symplectic_form

DIM_GUARD = int(2e7)
DENSE_EVOLVE_GUARD = int(1e5)


# ---------------------------------------------------------------------------
# bosonic occupation bases


def boson_basis(n_modes: int, n_max: int, n_total: int | None = None) -> np.ndarray:
    """All occupation tuples with n_j <= n_max and sum n <= n_total, sorted by code."""
    if n_total is None:
        n_total = n_modes * n_max
    states = [[]]
    for _ in range(n_modes):
        states = [s + [n] for s in states for n in range(min(n_max, n_total - sum(s)) + 1)]
    arr = np.array(states, dtype=np.int64)
    codes = encode_states(arr, n_max)
    order = np.argsort(codes)
    if arr.shape[0] > DIM_GUARD:
        raise DimensionExceededError(f"basis dimension {arr.shape[0]} exceeds guard {DIM_GUARD}")
    return arr[order]


def encode_states(states: np.ndarray, n_max: int) -> np.ndarray:
    base = n_max + 1
    codes = np.zeros(states.shape[0], dtype=np.int64)
    for j in range(states.shape[1]):
        codes = codes * base + states[:, j]
    return codes


def lookup(states_sorted_codes: np.ndarray, query_codes: np.ndarray) -> np.ndarray:
    """Indices of query codes in a sorted code table, -1 when absent."""
    pos = np.searchsorted(states_sorted_codes, query_codes)
    pos = np.clip(pos, 0, len(states_sorted_codes) - 1)
    found = states_sorted_codes[pos] == query_codes
    return np.where(found, pos, -1)


# ---------------------------------------------------------------------------
# dense single-mode operators and small Fock-space Gaussian states


def _single_mode_ops(cutoff: int):
    n = np.arange(cutoff + 1)
    a = np.diag(np.sqrt(n[1:]), 1)
    return a, a.T.conj()


def boson_mode_operators(n_modes: int, cutoff: int):
    """Sparse annihilation operators for each mode on the product Fock space."""
    a1, _ = _single_mode_ops(cutoff)
    eye = sp.identity(cutoff + 1, format="csr")
    ops = []
    for j in range(n_modes):
        factors = [eye] * n_modes
        factors[j] = sp.csr_matrix(a1)
        op = factors[0]
        for f in factors[1:]:
            op = sp.kron(op, f, format="csr")
        ops.append(op)
    return ops


def boson_gaussian_fock(state: BosonGaussian, cutoff: int) -> np.ndarray:
    """Truncated-Fock vector of a pure Gaussian state |psi> = D(Delta) S |0>."""
    n = state.n_modes
    dim = (cutoff + 1) ** n
    if dim > DENSE_EVOLVE_GUARD:
        raise DimensionExceededError("Fock construction is limited to small mode counts")
    ann = boson_mode_operators(n, cutoff)
    xs = [a + a.T.conj() for a in ann]
    ps = [1j * (a.T.conj() - a) for a in ann]
    rr = xs + ps

    sigma = symplectic_form(n)
    # squeezing generator from the covariance: S_b = Gamma^(1/2) is symplectic
    xi = sigma.T @ (sla.logm(state.gamma_b).real / 2.0)
    quad = sp.csr_matrix((dim, dim), dtype=complex)
    for i in range(2 * n):
        for j in range(2 * n):
            if abs(xi[i, j]) > 1e-15:
                quad = quad + xi[i, j] * (rr[i] @ rr[j])
    psi = np.zeros(dim, dtype=complex)
    psi[0] = 1.0
    psi = spla.expm_multiply((-0.25j) * quad.tocsc(), psi)

    lin = sp.csr_matrix((dim, dim), dtype=complex)
    coeff = sigma @ state.delta_r
    for i in range(2 * n):
        if abs(coeff[i]) > 1e-15:
            lin = lin + coeff[i] * rr[i]
    psi = spla.expm_multiply(0.5j * lin.tocsc(), psi)
    return psi / np.linalg.norm(psi)


def boson_number_phases(n_modes: int, cutoff: int) -> np.ndarray:
    """Occupation table of the product basis, shape (dim, n_modes)."""
    n1 = np.arange(cutoff + 1)
    grids = np.meshgrid(*([n1] * n_modes), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


# ---------------------------------------------------------------------------
# fermionic Fock tools (Jordan-Wigner)


def fermion_mode_operators(n_modes: int):
    """Dense annihilation operators c_j on the 2^n Fock space (JW strings)."""
    lower = np.array([[0.0, 1.0], [0.0, 0.0]])
    z = np.diag([1.0, -1.0])
    eye = np.eye(2)
    ops = []
    for j in range(n_modes):
        factors = [z] * j + [lower] + [eye] * (n_modes - j - 1)
        op = factors[0]
        for f in factors[1:]:
            op = np.kron(op, f)
        ops.append(op)
    return ops


def fermion_gaussian_fock(generator: np.ndarray, n_modes: int) -> np.ndarray:
    """|psi> = exp((1/4) A^T K A)|0> for a real antisymmetric generator K.

    The corresponding Majorana covariance is -U sigma U^T with U = exp(K).
    """
    cs = fermion_mode_operators(n_modes)
    majorana = [c.conj().T + c for c in cs] + [1j * (c.conj().T - c) for c in cs]
    dim = 2**n_modes
    op = np.zeros((dim, dim), dtype=complex)
    for i in range(2 * n_modes):
        for j in range(2 * n_modes):
            if abs(generator[i, j]) > 1e-15:
                op += generator[i, j] * (majorana[i] @ majorana[j])
    psi = np.zeros(dim, dtype=complex)
    psi[0] = 1.0
    psi = sla.expm(0.25 * op) @ psi
    return psi / np.linalg.norm(psi)


# ---------------------------------------------------------------------------
# model Hamiltonians in the brute-force bases


@dataclass
class FockSpec:
    """What to diagonalize: model tag, geometry/couplings, cutoffs, sector."""

    model: str
    n_sites: int = 0
    n_modes: int = 0
    t0: float = 1.0
    omega0: float = 1.0
    g: float = 0.0
    mu: float = 0.0
    k_index: int = 0
    lx: int = 0
    ly: int = 0
    eps: tuple = ()
    gk: tuple = ()
    delta: float = 0.0
    n_max: int = 10
    n_total: int | None = None

    def key(self) -> str:
        payload = json.dumps(asdict(self), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:24]


def _polaron_basis(spec: FockSpec):
    basis = boson_basis(spec.n_sites, spec.n_max, spec.n_total)
    codes = encode_states(basis, spec.n_max)
    return basis, codes


class PolaronApply:
    """Matrix-free action of the co-moving-frame single-polaron Hamiltonian."""

    def __init__(self, spec: FockSpec):
        if spec.model not in ("holstein_polaron", "ssh_polaron"):
            raise PreconditionError("unknown polaron model")
        self.spec = spec
        n = spec.n_sites
        self.q = 2.0 * np.pi * np.arange(n) / n
        self.k = self.q[spec.k_index % n]
        self.basis, self.codes = _polaron_basis(spec)
        self.dim = len(self.basis)
        ntot = self.basis.sum(axis=1)
        qtot = self.basis @ self.q  # total phonon momentum, mod 2pi phases only
        self.diag = spec.omega0 * ntot + (-2.0 * spec.t0) * np.cos(self.k - qtot)
        self.qtot = qtot

        if spec.model == "holstein_polaron":
            self.coupling_offsets = (0,)
            self.gq = {0: spec.g / np.sqrt(n) * np.ones(n)}
        else:
            self.coupling_offsets = (1, -1)
            base = 2.0j * spec.g / np.sqrt(n) * np.sin(self.q / 2.0)
            self.gq = {1: base, -1: base}

        # index maps for b_q: target = state - e_q
        self.down_idx = np.empty((n, self.dim), dtype=np.int64)
        self.down_amp = np.empty((n, self.dim))
        base_code = spec.n_max + 1
        step = np.array([base_code ** (n - 1 - j) for j in range(n)], dtype=np.int64)
        for j in range(n):
            occ = self.basis[:, j]
            tgt = np.where(occ > 0, self.codes - step[j], -1)
            idx = lookup(self.codes, tgt)
            idx[occ == 0] = -1
            self.down_idx[j] = idx
            self.down_amp[j] = np.sqrt(occ)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        y = self.diag.astype(complex) * x
        spec = self.spec
        for offset in self.coupling_offsets:
            # phase of the co-moving frame on the target (lower) state
            phase = np.exp(1j * offset * (self.qtot - 0.0))
            for j in range(spec.n_sites):
                idx = self.down_idx[j]
                mask = idx >= 0
                c = self.gq[offset][j] * np.exp(1j * (self.q[j] / 2.0 - self.k) * offset)
                if c == 0:
                    continue
                amp = np.zeros(self.dim, dtype=complex)
                # <m| e^{i offset Q} b_j |n>: phase evaluated on m = n - e_j
                amp[mask] = c * phase[idx[mask]] * self.down_amp[j][mask]
                contrib = amp * x
                y_add = np.zeros_like(y)
                y_add[idx[mask]] = contrib[mask]
                y += y_add
                # Hermitian conjugate: <n| ... |m>
                y[mask] += np.conj(amp[mask]) * x[idx[mask]]
        return y

    def operator(self) -> spla.LinearOperator:
        return spla.LinearOperator((self.dim, self.dim), matvec=self.matvec, dtype=complex)


def _spin_boson_hamiltonian(spec: FockSpec):
    """Sparse H of the spin-boson model in the (spin x Fock) product basis."""
    eps = np.asarray(spec.eps, dtype=float)
    gk = np.asarray(spec.gk, dtype=float)
    nb = len(eps)
    basis = boson_basis(nb, spec.n_max, spec.n_total)
    codes = encode_states(basis, spec.n_max)
    dim_b = len(basis)
    rows, cols, vals = [], [], []
    diag_b = basis @ eps
    base_code = spec.n_max + 1
    step = np.array([base_code ** (nb - 1 - j) for j in range(nb)], dtype=np.int64)
    for j in range(nb):
        occ = basis[:, j]
        mask = occ > 0
        tgt = lookup(codes, codes[mask] - step[j])
        src = np.nonzero(mask)[0]
        amp = np.sqrt(occ[mask])
        rows.append(tgt)
        cols.append(src)
        vals.append(gk[j] * amp)
    sx = np.array([[0.0, 1.0], [1.0, 0.0]])
    sz = np.diag([1.0, -1.0])
    eye2 = np.eye(2)
    hb = sp.diags(diag_b)
    x_op = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(dim_b, dim_b),
    )
    x_op = x_op + x_op.T  # g_j (b_j + b_j^dag) already weighted by g
    h = (
        sp.kron(sp.csr_matrix(sx * spec.delta / 2.0), sp.identity(dim_b))
        + sp.kron(sp.csr_matrix(eye2), hb)
        - 0.5 * sp.kron(sp.csr_matrix(sz), x_op)
    )
    return h.tocsr(), basis


def _lattice_toy_hamiltonian(spec: FockSpec):
    """Dense/sparse H of a tiny finite-density Holstein lattice (grand canonical)."""
    n = spec.lx * max(spec.ly, 1)
    if n > 3:
        raise PreconditionError("lattice toy oracle is limited to <= 3 sites")
    n_orb = 2 * n  # spin up sites then spin down sites
    cs = fermion_mode_operators(n_orb)
    dim_f = 2**n_orb
    tmat = lattice_hopping_matrix(spec.lx, max(spec.ly, 1), spec.t0)
    hf = np.zeros((dim_f, dim_f), dtype=complex)
    for s in range(2):
        for a in range(n):
            for b in range(n):
                if tmat[a, b] != 0.0:
                    hf += tmat[a, b] * (cs[s * n + a].conj().T @ cs[s * n + b])
    nums = [c.conj().T @ c for c in cs]
    ntot = sum(nums)
    hf -= spec.mu * ntot

    basis = boson_basis(n, spec.n_max)
    dim_b = len(basis)
    ann = boson_mode_operators(n, spec.n_max)
    hb = sp.csr_matrix((dim_b, dim_b), dtype=complex)
    for j in range(n):
        hb = hb + spec.omega0 * (ann[j].conj().T @ ann[j])

    h = sp.kron(sp.csr_matrix(hf), sp.identity(dim_b)) + sp.kron(
        sp.identity(dim_f), hb
    )
    for j in range(n):
        xj = ann[j] + ann[j].conj().T
        dens = nums[j] + nums[n + j]
        h = h + spec.g * sp.kron(sp.csr_matrix(dens), xj)
    return h.tocsr()


def lattice_hopping_matrix(lx: int, ly: int, t0: float) -> np.ndarray:
    """Nearest-neighbor hopping matrix on a periodic lx x ly lattice.

    Periodic wrap on a length-2 direction produces a doubled bond (both
    neighbors coincide); that convention is kept consistently here and in
    the variational lattice model.
    """
    n = lx * ly
    t = np.zeros((n, n))

    def site(ix, iy):
        return (ix % lx) + lx * (iy % ly)

    for ix in range(lx):
        for iy in range(ly):
            a = site(ix, iy)
            if lx > 1:
                t[a, site(ix + 1, iy)] += -t0
                t[a, site(ix - 1, iy)] += -t0
            if ly > 1:
                t[a, site(ix, iy + 1)] += -t0
                t[a, site(ix, iy - 1)] += -t0
    return t


# ---------------------------------------------------------------------------
# ED driver with certification and on-disk caching


def _cache_dir() -> Path:
    root = os.environ.get("VARGAUSS_CACHE", os.path.join(os.path.expanduser("~"), ".cache", "vargauss"))
    path = Path(root)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _ground_energy(spec: FockSpec) -> tuple[float, int]:
    if spec.model in ("holstein_polaron", "ssh_polaron"):
        op = PolaronApply(spec)
        if op.dim > DIM_GUARD:
            raise DimensionExceededError(f"dimension {op.dim} exceeds guard")
        if op.dim < 300:
            h = np.zeros((op.dim, op.dim), dtype=complex)
            eye = np.eye(op.dim, dtype=complex)
            for i in range(op.dim):
                h[:, i] = op.matvec(eye[:, i])
            return float(np.linalg.eigvalsh(h)[0]), op.dim
        w = spla.eigsh(op.operator(), k=1, which="SA", tol=1e-11, maxiter=5000)[0]
        return float(w[0]), op.dim
    if spec.model == "spin_boson":
        h, basis = _spin_boson_hamiltonian(spec)
        if h.shape[0] < 300:
            return float(np.linalg.eigvalsh(h.toarray())[0]), h.shape[0]
        w = spla.eigsh(h, k=1, which="SA", tol=1e-11)[0]
        return float(w[0]), h.shape[0]
    if spec.model == "lattice_holstein_toy":
        h = _lattice_toy_hamiltonian(spec)
        if h.shape[0] < 600:
            return float(np.linalg.eigvalsh(h.toarray())[0]), h.shape[0]
        w = spla.eigsh(h, k=1, which="SA", tol=1e-11)[0]
        return float(w[0]), h.shape[0]
    raise PreconditionError(f"unknown oracle model {spec.model!r}")


@dataclass
class EDResult:
    e0: float
    certified: bool
    e0_check: float
    dim: int
    spec: dict = field(default_factory=dict)


def ed_ground(spec: FockSpec, certify: bool = True, use_cache: bool = True) -> EDResult:
    """Lowest eigenvalue in the declared sector, with cutoff certification.

    Certification re-runs with the occupation cap raised by 4 and requires
    the energy to move by less than 1e-6 |E0|.  Results are cached on disk
    keyed by a hash of the spec.
    """
    cache_file = _cache_dir() / f"ed_{spec.key()}_{int(certify)}.json"
    if use_cache and cache_file.exists():
        data = json.loads(cache_file.read_text())
        return EDResult(**data)

    e0, dim = _ground_energy(spec)
    e0_check, certified = e0, False
    if certify:
        bumped = FockSpec(**{**asdict(spec)})
        if bumped.n_total is not None:
            bumped.n_total += 4
            bumped.n_max = max(bumped.n_max, bumped.n_total)
        else:
            bumped.n_max += 4
        e0_check, _ = _ground_energy(bumped)
        certified = abs(e0_check - e0) < 1e-6 * max(abs(e0), 1e-12)
    result = EDResult(e0=e0, certified=certified, e0_check=e0_check, dim=dim, spec=asdict(spec))
    if use_cache:
        cache_file.write_text(json.dumps(asdict(result)))
    return result


def ed_evolve(spec: FockSpec, psi0: np.ndarray, t_grid: np.ndarray):
    """Exact unitary evolution; returns overlaps with psi0 and norms.

    Limited to dimensions <= 1e5.  For polaron specs the Hamiltonian is the
    co-moving-frame one at the spec momentum.
    """
    if spec.model in ("holstein_polaron", "ssh_polaron"):
        op = PolaronApply(spec)
        dim = op.dim
        if dim > DENSE_EVOLVE_GUARD:
            raise DimensionExceededError("evolution dimension exceeds guard")
        h = np.zeros((dim, dim), dtype=complex)
        eye = np.eye(dim, dtype=complex)
        for i in range(dim):
            h[:, i] = op.matvec(eye[:, i])
    elif spec.model == "spin_boson":
        h = _spin_boson_hamiltonian(spec)[0].toarray()
    else:
        raise PreconditionError(f"no evolution backend for {spec.model!r}")
    w, v = np.linalg.eigh(h)
    c0 = v.conj().T @ psi0
    overlaps = np.empty(len(t_grid), dtype=complex)
    norms = np.empty(len(t_grid))
    for i, t in enumerate(t_grid):
        psi_t = v @ (np.exp(-1j * w * t) * c0)
        overlaps[i] = np.vdot(psi0, psi_t)
        norms[i] = np.linalg.norm(psi_t)
    return overlaps, norms
