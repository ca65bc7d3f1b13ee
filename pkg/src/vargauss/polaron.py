"""Single polaron in the co-moving frame: Holstein and SSH models.

One electron on a periodic chain coupled to Einstein phonons.  After the
momentum-conserving frame shift the electron drops out and a bosonic
Gaussian state over the N phonon momentum modes is variational for each
total momentum k.  The module provides the energy functional and its
gradients, ground-state dispersion scans with quasiparticle weights,
real-space phonon profiles, and the real-time retarded Green function /
spectral function obtained by tracking the global phase and pair-creation
matrix of the evolving Gaussian unitary.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    PreconditionError,
    RiccatiBlowupError,
    SingularExpectationError,
    UnderResolvedError,
)
from .flow import (
    FlowConfig,
    Gradients,
    Model,
    Trajectory,
    VariationalState,
    flow_imaginary,
    flow_real_sampled,
)
from .gaussian import BosonGaussian


@dataclass
class PolaronModelSpec:
    """Which polaron problem: lattice size, couplings, total momentum."""

    kind: str
    n_sites: int
    omega0: float
    g: float
    t0: float = 1.0
    k_index: int = 0

    def __post_init__(self):
        if self.kind not in ("holstein", "ssh"):
            raise PreconditionError(f"unknown polaron kind {self.kind!r}")
        if self.n_sites < 2:
            raise PreconditionError("need at least two sites")
        if self.omega0 <= 0:
            raise PreconditionError("omega0 must be positive")
        self.k_index = int(self.k_index) % self.n_sites

    @property
    def q_grid(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.n_sites) / self.n_sites

    @property
    def k(self) -> float:
        return float(self.q_grid[self.k_index])

    def replace_k(self, k_index: int) -> "PolaronModelSpec":
        return PolaronModelSpec(self.kind, self.n_sites, self.omega0, self.g, self.t0, k_index)


@dataclass
class LLPFrameCache:
    """Per-offset frame data: momentum phases and coupling vectors."""

    f0: dict  # offset -> (N,) complex phases e^{i q offset}
    g_vec: dict  # offset -> (2N,) complex coupling vector or None
    omega_diag: np.ndarray  # (2N,) phonon frequencies


def _frame_cache(spec: PolaronModelSpec) -> LLPFrameCache:
    q = spec.q_grid
    n = spec.n_sites
    f0 = {}
    g_vec = {}
    offsets = {1, -1}
    if spec.kind == "holstein":
        offsets.add(0)
    for off in offsets:
        f0[off] = np.exp(1j * q * off)
        g_vec[off] = None
    if spec.kind == "holstein":
        amp = spec.g / np.sqrt(n) * np.ones(n)
        g_vec[0] = np.concatenate([amp, 1j * amp]).astype(complex)
    else:
        for off in (1, -1):
            amp = 2j * spec.g / np.sqrt(n) * np.sin(q / 2.0) * np.exp(1j * q * off / 2.0)
            g_vec[off] = np.concatenate([amp, 1j * amp])
    omega_diag = spec.omega0 * np.ones(2 * n)
    return LLPFrameCache(f0=f0, g_vec=g_vec, omega_diag=omega_diag)


class _OffsetExpectation:
    """Scalar prefactor and resolvents of <e^{i offset Q}> at one offset.

    The det(Gamma_B/2)^(-1/2) branch is the principal one, which equals the
    Takagi-sign construction identically (verified to machine precision in
    the test suite); an LU slogdet is much cheaper than an SVD here.
    ``branch_margin`` is pi minus the distance of arg(det) from the branch
    cut; a small margin flags proximity to a sign discontinuity.
    """

    __slots__ = ("pref", "gt_inv", "minv", "branch_margin", "is_identity")

    def __init__(self, gamma_b, delta_r, phases):
        e2 = np.concatenate([phases, phases])
        one_m = 1.0 - e2
        self.is_identity = bool(np.abs(one_m).max() < 1e-15)
        if self.is_identity:  # identity offset: <e^{i0}> = 1
            n2 = gamma_b.shape[0]
            self.pref = 1.0 + 0.0j
            self.gt_inv = 0.5 * np.eye(n2, dtype=complex)
            self.minv = np.zeros((n2, n2), dtype=complex)
            self.branch_margin = float(np.pi)
            return
        sq = np.sqrt(one_m)
        gamma_big = sq[:, None] * gamma_b * sq[None, :] + np.diag(1.0 + e2)
        gamma_tilde = one_m[:, None] * gamma_b + np.diag(1.0 + e2)
        sign_det, logabs = np.linalg.slogdet(gamma_big / 2.0)
        if not np.isfinite(logabs) or logabs < -28.0:
            raise SingularExpectationError("offset expectation matrix is singular")
        self.branch_margin = float(np.pi - abs(np.angle(sign_det)))
        self.gt_inv = np.linalg.inv(gamma_tilde)
        self.minv = self.gt_inv * one_m[None, :]
        self.minv = 0.5 * (self.minv + self.minv.T)
        expo = -0.5 * delta_r @ (self.minv @ delta_r)
        self.pref = np.exp(-0.5 * logabs - 0.5j * np.angle(sign_det) + expo)

    @classmethod
    def conjugate(cls, other):
        new = cls.__new__(cls)
        new.pref = np.conj(other.pref)
        new.gt_inv = np.conj(other.gt_inv)
        new.minv = np.conj(other.minv)
        new.branch_margin = other.branch_margin
        new.is_identity = other.is_identity
        return new


class PolaronModel(Model):
    """Energy/gradient functional of the co-moving-frame polaron."""

    def __init__(self, spec: PolaronModelSpec):
        self.spec = spec
        self.cache = _frame_cache(spec)
        self._memo_key = None
        self._memo = None

    # -- expectation plumbing ------------------------------------------------

    def _offsets(self, state: VariationalState) -> dict:
        b = state.boson
        data = {1: _OffsetExpectation(b.gamma_b, b.delta_r, self.cache.f0[1])}
        data[-1] = _OffsetExpectation.conjugate(data[1])
        if 0 in self.cache.f0:
            data[0] = _OffsetExpectation(b.gamma_b, b.delta_r, self.cache.f0[0])
        return data

    def _coupling_offsets(self):
        return (0,) if self.spec.kind == "holstein" else (1, -1)

    def _evaluate(self, state: VariationalState):
        """Energy, gradients and phase diagnostics in one pass."""
        key = (state.boson.delta_r.tobytes(), state.boson.gamma_b.tobytes())
        if self._memo_key == key:
            return self._memo
        spec, b = self.spec, state.boson
        n = spec.n_sites
        delta, gamma = b.delta_r, b.gamma_b
        w = self.cache.omega_diag
        k = spec.k
        off = self._offsets(state)

        energy = 0.25 * delta @ (w * delta) + 0.25 * np.sum(w * np.diag(gamma)) \
            - 0.5 * spec.omega0 * n
        h_delta = (w * delta).astype(complex)
        h_b = np.diag(w).astype(complex)

        # per-offset M^-1 Delta and W1 = M^-1 - (M^-1 D)(M^-1 D)^T; the
        # -1 offset data is the conjugate of the +1 one
        mdelta1 = off[1].minv @ delta
        w1_pos = off[1].minv - mdelta1[:, None] * mdelta1[None, :]
        mdelta = {1: mdelta1, -1: np.conj(mdelta1)}
        w1 = {1: w1_pos, -1: None}  # conj taken where needed

        # hopping: the -1 term is the conjugate of the +1 term
        c = -spec.t0 * np.exp(-1j * k) * off[1].pref
        energy += 2.0 * c.real
        h_delta += 2.0 * np.real(c * (-2.0) * mdelta1)
        h_b += (-4.0) * np.real(c * w1_pos)

        for d in self._coupling_offsets():
            gt_g = off[d].gt_inv @ self.cache.g_vec[d]
            scal = np.exp(-1j * k * d) * off[d].pref
            inner = delta @ gt_g
            energy += 2.0 * (scal * inner).real
            if off[d].is_identity:  # M^-1 = 0: only the linear source survives
                h_delta += 2.0 * (scal * gt_g + np.conj(scal * gt_g))
                continue
            w1_d = w1_pos if d == 1 else np.conj(w1_pos)
            vec = scal * (gt_g - mdelta[d] * inner)
            h_delta += 2.0 * (vec + np.conj(vec))
            w2 = gt_g[:, None] * mdelta[d][None, :]
            term = scal * (inner * w1_d + w2 + w2.T)
            h_b += -2.0 * (term + np.conj(term))

        if max(np.abs(h_delta.imag).max(), np.abs(h_b.imag).max()) > 1e-9 * max(
            1.0, np.abs(h_delta).max(), np.abs(h_b).max()
        ):
            raise PreconditionError("gradients acquired an imaginary part; state invalid")
        h_delta = h_delta.real
        h_b = 0.5 * (h_b + h_b.T).real
        result = (
            float(np.real(energy)),
            Gradients(h_delta=h_delta, h_b=h_b),
            {f"branch_margin_{d}": o.branch_margin for d, o in off.items()},
        )
        self._memo_key = key
        self._memo = result
        return result

    # -- Model interface -----------------------------------------------------

    def energy(self, state: VariationalState) -> float:
        return self._evaluate(state)[0]

    def gradients(self, state: VariationalState) -> Gradients:
        return self._evaluate(state)[1]

    def observables(self, state: VariationalState) -> dict:
        return {"Z": quasiparticle_weight(state.boson)}

    def diagnostics(self, state: VariationalState) -> dict:
        return self._evaluate(state)[2]


def quasiparticle_weight(boson: BosonGaussian) -> float:
    """Overlap of the dressed state with the bare electron: |<0|psi>|^2."""
    n2 = 2 * boson.n_modes
    gp = boson.gamma_b + np.eye(n2)
    sign, logdet = np.linalg.slogdet(gp / 2.0)
    expo = -0.5 * boson.delta_r @ np.linalg.solve(gp, boson.delta_r)
    return float(np.exp(expo - 0.5 * logdet))


# ---------------------------------------------------------------------------
# ground states and dispersion


def ground_state(
    spec: PolaronModelSpec,
    cfg: FlowConfig | None = None,
    seed: int = 0,
    perturbation: float = 1e-3,
    n_starts: int = 1,
) -> Trajectory:
    """Imaginary-time ground state at the spec momentum.

    Starts from the phonon vacuum plus a small seeded displacement kick
    (skipped in the exactly quadratic g = 0 limit, where the vacuum is the
    band state).  With ``n_starts > 1`` additional seeded starts are
    compared and the lowest basin returned.
    """
    model = PolaronModel(spec)
    if cfg is None:
        cfg = default_imaginary_config(spec)
    rng = np.random.default_rng(seed)
    best = None
    starts = max(1, n_starts)
    for trial in range(starts):
        st = VariationalState(boson=BosonGaussian.vacuum(spec.n_sites))
        if spec.g != 0.0:
            kick = perturbation if trial == 0 else perturbation * 10 ** rng.uniform(0, 2)
            st.boson.delta_r = st.boson.delta_r + kick * rng.standard_normal(2 * spec.n_sites)
        traj = flow_imaginary(st, model, cfg)
        if best is None or traj.final_energy < best.final_energy:
            best = traj
    return best


def default_imaginary_config(spec: PolaronModelSpec) -> FlowConfig:
    scale = spec.omega0 + 4.0 * spec.t0
    return FlowConfig(
        mode="imaginary",
        dt=0.05 / scale,
        max_dt=2.0 / scale,
        t_max=20000.0,
        fixed_point_tol=1e-10,
        record_stride=200,
        max_steps=400_000,
        repurify_every=40,
    )


@dataclass
class DispersionRow:
    k_index: int
    k: float
    energy: float
    z: float
    converged: bool
    n_steps: int


@dataclass
class DispersionResult:
    rows: list
    argmin_index: int

    @property
    def argmin_k(self) -> float:
        return self.rows[self.argmin_index].k

    @property
    def argmin_energy(self) -> float:
        return self.rows[self.argmin_index].energy


def dispersion_scan(
    spec: PolaronModelSpec,
    k_indices=None,
    cfg: FlowConfig | None = None,
    seed: int = 0,
    perturbation: float = 1e-3,
    n_starts: int = 1,
    parallel_jobs: int = 1,
) -> DispersionResult:
    """Ground energy and quasiparticle weight per momentum-grid point.

    Non-convergence at a momentum is flagged on the row; the scan continues.
    """
    if k_indices is None:
        k_indices = range(spec.n_sites // 2 + 1)
    k_indices = list(k_indices)
    jobs = [
        (spec.replace_k(ki), cfg, seed + 1000 * i, perturbation, n_starts)
        for i, ki in enumerate(k_indices)
    ]
    if parallel_jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=parallel_jobs) as pool:
            results = list(pool.map(_scan_cell, jobs))
    else:
        results = [_scan_cell(j) for j in jobs]
    rows = [
        DispersionRow(
            k_index=ki, k=spec.replace_k(ki).k, energy=e, z=z, converged=c, n_steps=s
        )
        for ki, (e, z, c, s) in zip(k_indices, results)
    ]
    finite = [i for i, r in enumerate(rows) if r.converged]
    pool_idx = finite if finite else range(len(rows))
    argmin = min(pool_idx, key=lambda i: rows[i].energy)
    return DispersionResult(rows=rows, argmin_index=argmin)


def _scan_cell(job):
    spec, cfg, seed, perturbation, n_starts = job
    traj = ground_state(spec, cfg=cfg, seed=seed, perturbation=perturbation, n_starts=n_starts)
    return (
        traj.final_energy,
        quasiparticle_weight(traj.final_state.boson),
        traj.converged,
        traj.n_steps,
    )


# ---------------------------------------------------------------------------
# real-space structure


def realspace_profile(state: VariationalState, spec: PolaronModelSpec):
    """Phonon displacement/covariance around the electron (pinned at site 0).

    Returns (x_sites, p_sites, cov_xx) where cov_xx[i, j] = <dx_i dx_j>.
    """
    n = spec.n_sites
    b = state.boson
    d = np.arange(n)
    v = np.exp(1j * np.outer(d, spec.q_grid)) / np.sqrt(n)
    vf = np.zeros((2 * n, 2 * n), dtype=complex)
    vf[:n, :n] = v
    vf[n:, n:] = v.conj()
    eye = np.eye(n)
    w = np.block([[eye, eye], [-1j * eye, 1j * eye]])
    rot = 0.5 * (w @ vf @ w.conj().T)
    delta_site = rot @ b.delta_r
    gamma_site = rot @ b.gamma_b @ rot.conj().T
    if np.abs(delta_site.imag).max() > 1e-8 or np.abs(gamma_site.imag).max() > 1e-8:
        raise PreconditionError("real-space profile came out complex; state is inconsistent")
    delta_site = delta_site.real
    return delta_site[:n], delta_site[n:], gamma_site[:n, :n].real


# ---------------------------------------------------------------------------
# real-time dynamics with global-phase tracking


class PolaronWeiNormanModel(PolaronModel):
    """Polaron model extended with the (theta0, Lambda1) phase tracker.

    theta0 is complex (its imaginary part carries the normalization of the
    unnormalized pair-creation factor); Lambda1 stays symmetric.
    """

    def param_rates(self, state: VariationalState, mode: str) -> dict:
        if mode != "real":
            return {"wn_theta": np.zeros(1, dtype=complex),
                    "wn_lambda": np.zeros_like(state.params["wn_lambda"])}
        energy, grads, _ = self._evaluate(state)
        b = state.boson
        n = self.spec.n_sites
        lam = state.params["wn_lambda"]
        if np.abs(lam).max() > 1e6:
            raise RiccatiBlowupError("pair-creation matrix diverged")
        h = grads.h_b
        hxx, hxp = h[:n, :n], h[:n, n:]
        hpx, hpp = h[n:, :n], h[n:, n:]
        omega_b = 0.5 * (hxx + hpp + 1j * (hpx - hxp))
        varpi = 0.5 * (hxx - hpp + 1j * (hpx + hxp))
        delta_e = energy - 0.25 * np.sum(h * b.gamma_b) - 0.25 * b.delta_r @ grads.h_delta
        d_theta = -delta_e - 0.5 * np.trace(omega_b) - np.trace(varpi.conj().T @ lam)
        d_lam = -1j * (0.5 * varpi + omega_b @ lam + lam @ omega_b.T
                       + 2.0 * lam @ varpi.conj().T @ lam)
        return {
            "wn_theta": np.array([d_theta], dtype=complex),
            "wn_lambda": 0.5 * (d_lam + d_lam.T),
        }

    def diagnostics(self, state: VariationalState) -> dict:
        diag = dict(super().diagnostics(state))
        lam = state.params["wn_lambda"]
        theta = state.params["wn_theta"][0]
        # norm consistency of the tracked Gaussian unitary
        sign, logdet = np.linalg.slogdet(np.eye(lam.shape[0]) - 4.0 * lam.conj().T @ lam)
        diag["wn_norm"] = float(np.exp(-2.0 * theta.imag) * np.exp(-0.5 * logdet))
        return diag


def wei_norman_state(spec: PolaronModelSpec) -> VariationalState:
    """Phonon vacuum with zeroed phase tracker (the quench initial state)."""
    n = spec.n_sites
    return VariationalState(
        boson=BosonGaussian.vacuum(n),
        params={
            "wn_theta": np.zeros(1, dtype=complex),
            "wn_lambda": np.zeros((n, n), dtype=complex),
        },
    )


def green_retarded(traj: Trajectory) -> tuple[np.ndarray, np.ndarray]:
    """Retarded Green function samples from a phase-tracked trajectory.

    G_R(t) = -i e^{i theta0} e^{-|Delta_b|^2/2} e^{Delta_b^dag Lambda1 Delta_b^*}.
    """
    times = np.asarray(traj.times)
    out = np.empty(len(times), dtype=complex)
    for i, st in enumerate(traj.states):
        theta = st.params["wn_theta"][0]
        lam = st.params["wn_lambda"]
        db = st.boson.mean_b()
        out[i] = -1j * np.exp(1j * theta) * np.exp(-0.5 * np.vdot(db, db)) \
            * np.exp(db.conj() @ lam @ db.conj())
    return times, out


def quench(spec: PolaronModelSpec, t_max: float = 200.0, sample_dt: float = 0.1,
           cfg: FlowConfig | None = None) -> Trajectory:
    """Real-time evolution from the bare-electron (phonon vacuum) state."""
    if cfg is None:
        # repurification every few hundred steps keeps the projector residual
        # ~1e-7 over t ~ 200 at these tolerances (cheaper than tightening rtol)
        cfg = FlowConfig(mode="real", dt=0.05, t_max=t_max, abs_tol=1e-9,
                         rel_tol=1e-7, repurify_every=300)
    else:
        cfg = FlowConfig(**{**cfg.__dict__, "t_max": t_max})
    model = PolaronWeiNormanModel(spec)
    return flow_real_sampled(wei_norman_state(spec), model, cfg, sample_dt)


def spectral_function(times: np.ndarray, gr: np.ndarray, eta: float,
                      omegas: np.ndarray) -> np.ndarray:
    """A(w) = -(1/pi) Im int_0^tmax dt G_R(t) e^{i w t - eta t} (trapezoid)."""
    times = np.asarray(times)
    gr = np.asarray(gr)
    if np.exp(-eta * times[-1]) > 1e-4:
        raise UnderResolvedError(
            f"t_max {times[-1]:.3g} too short for broadening eta={eta:.3g}"
        )
    damped = gr * np.exp(-eta * times)
    weights = np.full(len(times), times[1] - times[0])
    weights[0] *= 0.5
    weights[-1] *= 0.5
    phases = np.exp(1j * np.outer(omegas, times))
    integral = phases @ (weights * damped)
    return -np.imag(integral) / np.pi


def spectral_run(spec: PolaronModelSpec, eta: float = 0.05, t_max: float = 200.0,
                 sample_dt: float = 0.1, omegas: np.ndarray | None = None):
    """Quench + transform: returns (omegas, A, times, G_R, trajectory)."""
    if omegas is None:
        lo = -2.0 * spec.t0 - 4.0
        hi = 2.0 * spec.t0 + 8.0
        omegas = np.arange(lo, hi, eta / 5.0)
    traj = quench(spec, t_max=t_max, sample_dt=sample_dt)
    times, gr = green_retarded(traj)
    a_w = spectral_function(times, gr, eta, omegas)
    return omegas, a_w, times, gr, traj
