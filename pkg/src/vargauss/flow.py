"""Imaginary- and real-time variational flows.

A model exposes the energy, its gradients with respect to the Gaussian
blocks, rates for any transformation parameters, and the associated
frame-rotation terms; the flow assembles the equations of motion

    imaginary:  d delta = -Gamma_b h_d - i sigma O_d
                d Gamma_b = sigma^T h_b sigma - Gamma_b h_b Gamma_b
                            + i Gamma_b O_b sigma - i sigma O_b Gamma_b
                d Gamma_f = {Gamma_f, h_f} - 2 Gamma_f h_f Gamma_f + [Gamma_f, O_f]

    real:       d delta = sigma (h_d - i O_d)
                d Gamma_b = sigma h^t_b Gamma_b - Gamma_b h^t_b sigma
                d Gamma_f = i [Gamma_f, h^t_f]

and integrates them with a monotonicity-guarded RK4 (imaginary time) or an
embedded Dormand-Prince RK45 (real time).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EnergyConservationError,
    IntegratorFailureError,
    InvalidGramError,
    PurityDriftError,
)
from .gaussian import BosonGaussian, repurify_boson, repurify_fermion_dirac
from .numerics import symplectic_form


# ---------------------------------------------------------------------------
# state container and model interface


@dataclass
class VariationalState:
    """Model-tagged bundle of Gaussian blocks plus transformation parameters."""

    boson: BosonGaussian | None = None
    gamma_f: np.ndarray | None = None
    params: dict = field(default_factory=dict)

    def copy(self) -> "VariationalState":
        return VariationalState(
            boson=self.boson.copy() if self.boson is not None else None,
            gamma_f=None if self.gamma_f is None else self.gamma_f.copy(),
            params={k: np.array(v, copy=True) for k, v in self.params.items()},
        )

    def blocks(self) -> dict:
        out = {}
        if self.boson is not None:
            out["delta_r"] = self.boson.delta_r
            out["gamma_b"] = self.boson.gamma_b
        if self.gamma_f is not None:
            out["gamma_f"] = self.gamma_f
        for k, v in self.params.items():
            out[k] = v
        return out

    def apply(self, updates: dict) -> "VariationalState":
        new = self.copy()
        if new.boson is not None:
            new.boson.delta_r = updates["delta_r"]
            new.boson.gamma_b = updates["gamma_b"]
        if new.gamma_f is not None:
            new.gamma_f = updates["gamma_f"]
        for k in new.params:
            new.params[k] = updates[k]
        return new


@dataclass
class Gradients:
    h_delta: np.ndarray | None = None
    h_b: np.ndarray | None = None
    h_f: np.ndarray | None = None


@dataclass
class TransformTerms:
    o_delta: np.ndarray | None = None
    o_b: np.ndarray | None = None
    o_f: np.ndarray | None = None


class Model:
    """Base model: gradients + optional transformation parameters.

    Subclasses must implement ``energy`` and ``gradients``; models with
    extra parameters override ``param_rates`` and ``transform_terms``.
    """

    def energy(self, state: VariationalState) -> float:
        raise NotImplementedError

    def gradients(self, state: VariationalState) -> Gradients:
        raise NotImplementedError

    def param_rates(self, state: VariationalState, mode: str) -> dict:
        return {}

    def transform_terms(self, state: VariationalState, rates: dict) -> TransformTerms:
        return TransformTerms()

    def observables(self, state: VariationalState) -> dict:
        return {}

    def conserved(self, state: VariationalState) -> dict:
        return {}

    def diagnostics(self, state: VariationalState) -> dict:
        return {}


# ---------------------------------------------------------------------------
# configuration and trajectory records


@dataclass
class FlowConfig:
    mode: str = "imaginary"
    dt: float = 0.05
    t_max: float = 1000.0
    integrator: str = ""  # default: rk4 for imaginary, rk45 for real
    fixed_point_tol: float = 1e-10
    abs_tol: float = 1e-9
    rel_tol: float = 1e-7
    record_stride: int = 1
    max_steps: int = 2_000_000
    repurify_every: int = 0
    purity_tol: float = 1e-6
    energy_rise_tol: float = 1e-9
    min_dt: float = 1e-9
    max_dt: float = 0.0  # 0: no growth beyond the initial dt

    def __post_init__(self):
        if self.dt <= 0 or self.t_max <= 0:
            raise ValueError("dt and t_max must be positive")
        if self.mode not in ("imaginary", "real"):
            raise ValueError(f"unknown flow mode {self.mode!r}")
        if not self.integrator:
            self.integrator = "rk4" if self.mode == "imaginary" else "rk45"


@dataclass
class Trajectory:
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    energies: list = field(default_factory=list)
    observables: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=lambda: {
        "rate_norm": [], "purity_boson": [], "purity_fermion": [], "dt": [],
    })
    converged: bool = False
    n_steps: int = 0
    termination: str = ""

    def record(self, t, state, energy, obs, diag):
        self.times.append(t)
        self.states.append(state.copy())
        self.energies.append(energy)
        self.observables.append(obs)
        for key, val in diag.items():
            self.diagnostics.setdefault(key, []).append(val)

    @property
    def final_state(self) -> VariationalState:
        return self.states[-1]

    @property
    def final_energy(self) -> float:
        return self.energies[-1]


# ---------------------------------------------------------------------------
# right-hand sides


def _sigma_apply(a):
    """sigma @ a for the (x, p)-ordered symplectic form, as a block shuffle."""
    n = a.shape[0] // 2
    if a.ndim == 1:
        return np.concatenate([a[n:], -a[:n]])
    return np.concatenate([a[n:, :], -a[:n, :]], axis=0)


def _assemble_rates(model: Model, state: VariationalState, mode: str) -> dict:
    rates = model.param_rates(state, mode)
    terms = model.transform_terms(state, rates)
    grads = model.gradients(state)
    out = dict(rates)

    if state.boson is not None:
        gamma = state.boson.gamma_b
        h_d, h_b = grads.h_delta, grads.h_b
        o_d, o_b = terms.o_delta, terms.o_b
        if mode == "imaginary":
            d_delta = -gamma @ h_d
            if o_d is not None:
                d_delta = d_delta + np.real(-1j * _sigma_apply(o_d))
            # sigma^T h sigma == sigma (sigma h)^T for symmetric h
            d_gamma = _sigma_apply(_sigma_apply(h_b).T) - gamma @ (h_b @ gamma)
            if o_b is not None:
                og = _sigma_apply(o_b @ gamma)  # sigma O_b Gamma
                d_gamma = d_gamma + np.real(1j * (-og.T - og))
        else:
            h_d_t = h_d if o_d is None else h_d - 1j * o_d
            h_b_t = h_b if o_b is None else h_b - 1j * o_b
            d_delta = np.real(_sigma_apply(h_d_t))
            sb = _sigma_apply(h_b_t @ gamma)
            d_gamma = np.real(sb + sb.T)
        out["delta_r"] = d_delta
        out["gamma_b"] = 0.5 * (d_gamma + d_gamma.T)

    if state.gamma_f is not None:
        gf, h_f = state.gamma_f, grads.h_f
        o_f = terms.o_f
        if mode == "imaginary":
            d_gf = gf @ h_f + h_f @ gf - 2.0 * (gf @ h_f @ gf)
            if o_f is not None:
                d_gf = d_gf + (gf @ o_f - o_f @ gf)
        else:
            h_f_t = h_f if o_f is None else h_f - 1j * o_f
            d_gf = 1j * (gf @ h_f_t - h_f_t @ gf)
        out["gamma_f"] = 0.5 * (d_gf + d_gf.conj().T)
    return out


def _rate_norm(rates: dict) -> float:
    return max(float(np.max(np.abs(v))) if np.size(v) else 0.0 for v in rates.values())


def _axpy(blocks: dict, coeff: float, rates: dict) -> dict:
    return {k: blocks[k] + coeff * rates[k] for k in blocks}


def _purity_diag(state: VariationalState) -> tuple[float, float]:
    pb = state.boson.purity_residual() if state.boson is not None else 0.0
    pf = 0.0
    if state.gamma_f is not None:
        gf = state.gamma_f
        pf = float(np.linalg.norm(gf @ gf - gf))
    return pb, pf


def _check_purity(state, cfg, t):
    pb, pf = _purity_diag(state)
    if pb > cfg.purity_tol or pf > cfg.purity_tol:
        raise PurityDriftError(
            f"purity drift at t={t:.6g}: boson {pb:.3e}, fermion {pf:.3e} "
            f"(tolerance {cfg.purity_tol:.1e}); enable repurify_every or reduce dt"
        )
    return pb, pf


def _maybe_repurify(state: VariationalState):
    if state.boson is not None:
        state.boson.gamma_b = repurify_boson(state.boson.gamma_b)
    if state.gamma_f is not None:
        state.gamma_f = repurify_fermion_dirac(state.gamma_f)


def _rk4_step(model, state, mode, dt, k1=None):
    if k1 is None:
        k1 = _assemble_rates(model, state, mode)
    y0 = state.blocks()
    k2 = _assemble_rates(model, state.apply(_axpy(y0, dt / 2, k1)), mode)
    k3 = _assemble_rates(model, state.apply(_axpy(y0, dt / 2, k2)), mode)
    k4 = _assemble_rates(model, state.apply(_axpy(y0, dt, k3)), mode)
    new = {
        k: y0[k] + (dt / 6.0) * (k1[k] + 2 * k2[k] + 2 * k3[k] + k4[k]) for k in y0
    }
    return state.apply(new), k1


# ---------------------------------------------------------------------------
# imaginary time


def flow_imaginary(state: VariationalState, model: Model, cfg: FlowConfig) -> Trajectory:
    """Integrate the gradient flow until a fixed point or t_max.

    The energy must be non-increasing at every accepted step (within
    ``energy_rise_tol`` relative); a rise rejects the step and halves dt,
    persistent failure aborts.  Terminates when the max-norm of all rates
    drops below ``fixed_point_tol``.
    """
    if cfg.mode != "imaginary":
        raise ValueError("flow_imaginary needs cfg.mode == 'imaginary'")
    traj = Trajectory()
    state = state.copy()
    t, dt = 0.0, cfg.dt
    energy = model.energy(state)
    rates = _assemble_rates(model, state, "imaginary")
    rnorm = _rate_norm(rates)
    pb, pf = _check_purity(state, cfg, t)
    traj.record(t, state, energy, model.observables(state), {
        "rate_norm": rnorm, "purity_boson": pb, "purity_fermion": pf, "dt": dt,
        **model.diagnostics(state),
    })
    if rnorm < cfg.fixed_point_tol:
        traj.converged = True
        traj.termination = "fixed_point"
        return traj

    steps = 0
    accepted_since_reject = 0
    while t < cfg.t_max and steps < cfg.max_steps:
        steps += 1
        candidate, rates = _rk4_step(model, state, "imaginary", dt, k1=rates)
        new_energy = model.energy(candidate)
        cand_pb, cand_pf = _purity_diag(candidate)
        purity_bad = max(cand_pb, cand_pf) > 0.5 * cfg.purity_tol
        if purity_bad and cfg.repurify_every:
            # clean accumulated background before judging the step size
            _maybe_repurify(state)
            energy = model.energy(state)
            rates = _assemble_rates(model, state, "imaginary")
        if purity_bad or new_energy > energy + cfg.energy_rise_tol * max(abs(energy), 1.0):
            dt /= 2.0
            accepted_since_reject = 0
            if dt < cfg.min_dt:
                raise IntegratorFailureError(
                    f"imaginary-time step rejected below min_dt at t={t:.6g} "
                    f"(energy rise {new_energy - energy:.3e}, "
                    f"purity {max(cand_pb, cand_pf):.3e})"
                )
            continue  # rates still holds k1 at the (possibly repurified) state
        state, t = candidate, t + dt
        energy = new_energy
        accepted_since_reject += 1
        if cfg.repurify_every and steps % cfg.repurify_every == 0:
            _maybe_repurify(state)
            energy = model.energy(state)
        rates = _assemble_rates(model, state, "imaginary")
        rnorm = _rate_norm(rates)
        pb, pf = _check_purity(state, cfg, t)
        if steps % cfg.record_stride == 0 or rnorm < cfg.fixed_point_tol:
            traj.record(t, state, energy, model.observables(state), {
                "rate_norm": rnorm, "purity_boson": pb, "purity_fermion": pf, "dt": dt,
                **model.diagnostics(state),
            })
        if rnorm < cfg.fixed_point_tol:
            traj.converged = True
            break
        dt_cap = cfg.max_dt if cfg.max_dt > 0 else cfg.dt
        if accepted_since_reject >= 20 and dt < dt_cap:
            dt = min(dt_cap, dt * 1.5)
            accepted_since_reject = 0
    traj.n_steps = steps
    traj.termination = "fixed_point" if traj.converged else "t_max"
    if traj.times[-1] != t:
        rates = _assemble_rates(model, state, "imaginary")
        traj.record(t, state, energy, model.observables(state), {
            "rate_norm": _rate_norm(rates), "purity_boson": pb, "purity_fermion": pf,
            "dt": dt, **model.diagnostics(state),
        })
    return traj


# ---------------------------------------------------------------------------
# real time (embedded Dormand-Prince 5(4))

_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_B4 = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)


def _dp_step(model, state, dt, k1=None):
    y0 = state.blocks()
    ks = [k1 if k1 is not None else _assemble_rates(model, state, "real")]
    for i in range(1, 7):
        y = dict(y0)
        for j, a in enumerate(_DP_A[i]):
            if a:
                y = _axpy(y, dt * a, ks[j])
        ks.append(_assemble_rates(model, state.apply(y), "real"))
    y5 = dict(y0)
    err_blocks = {}
    for k in y0:
        inc5 = sum(_DP_B5[i] * ks[i][k] for i in range(7))
        inc4 = sum(_DP_B4[i] * ks[i][k] for i in range(7))
        y5[k] = y0[k] + dt * inc5
        err_blocks[k] = dt * (inc5 - inc4)
    return state.apply(y5), err_blocks, ks[6]  # FSAL: k7 = rates at y5


def _error_norm(err_blocks, y_new, y_old, abs_tol, rel_tol):
    worst = 0.0
    for k, e in err_blocks.items():
        scale = abs_tol + rel_tol * np.maximum(np.abs(y_new[k]), np.abs(y_old[k]))
        worst = max(worst, float(np.max(np.abs(e) / scale)))
    return worst


def flow_real(state: VariationalState, model: Model, cfg: FlowConfig,
              callbacks=None) -> Trajectory:
    """Real-time evolution with adaptive stepping and energy-drift control.

    For a time-independent model the energy must stay within
    max(1e-8, 1e-6 |E(0)|); a violation triggers one full retry with 10x
    tighter tolerances before aborting.  ``callbacks`` may carry functions
    called on every accepted step as f(t, state) (used by the phase
    tracker to co-integrate auxiliary quantities is not done here; models
    co-integrate via params instead).
    """
    if cfg.mode != "real":
        raise ValueError("flow_real needs cfg.mode == 'real'")
    try:
        return _flow_real_once(state, model, cfg, callbacks)
    except EnergyConservationError:
        tighter = FlowConfig(**{**cfg.__dict__})
        tighter.abs_tol = cfg.abs_tol / 10.0
        tighter.rel_tol = cfg.rel_tol / 10.0
        tighter.dt = cfg.dt / 4.0
        return _flow_real_once(state, model, tighter, callbacks)


def _flow_real_once(state, model, cfg, callbacks):
    traj = Trajectory()
    state = state.copy()
    t, dt = 0.0, cfg.dt
    e0 = model.energy(state)
    drift_bound = max(1e-8, 1e-6 * abs(e0))
    cons0 = model.conserved(state)
    pb, pf = _check_purity(state, cfg, t)
    rates = _assemble_rates(model, state, "real")
    traj.record(t, state, e0, model.observables(state), {
        "rate_norm": _rate_norm(rates), "purity_boson": pb, "purity_fermion": pf,
        "dt": dt, **model.diagnostics(state),
    })

    steps = accepted = 0
    while t < cfg.t_max - 1e-14 and steps < cfg.max_steps:
        steps += 1
        dt = min(dt, cfg.t_max - t)
        candidate, err, k_last = _dp_step(model, state, dt, k1=rates)
        err_norm = _error_norm(err, candidate.blocks(), state.blocks(), cfg.abs_tol, cfg.rel_tol)
        if err_norm > 1.0:
            dt = max(cfg.min_dt, dt * max(0.2, 0.9 * err_norm ** (-0.2)))
            if dt <= cfg.min_dt:
                raise IntegratorFailureError(f"real-time step size collapsed at t={t:.6g}")
            continue
        state, t = candidate, t + dt
        rates = k_last
        accepted += 1
        energy = model.energy(state)
        if abs(energy - e0) > drift_bound:
            raise EnergyConservationError(
                f"energy drift {abs(energy - e0):.3e} exceeds {drift_bound:.3e} at t={t:.6g}"
            )
        for key, val in model.conserved(state).items():
            if abs(val - cons0[key]) > 1e-7 * max(1.0, abs(cons0[key])):
                raise EnergyConservationError(
                    f"conserved quantity {key} drifted by {abs(val - cons0[key]):.3e}"
                )
        pb, pf = _check_purity(state, cfg, t)
        if cfg.repurify_every and accepted % cfg.repurify_every == 0:
            _maybe_repurify(state)
        if callbacks:
            for cb in callbacks:
                cb(t, state)
        if accepted % cfg.record_stride == 0 or t >= cfg.t_max - 1e-14:
            traj.record(t, state, energy, model.observables(state), {
                "rate_norm": _rate_norm(rates), "purity_boson": pb, "purity_fermion": pf,
                "dt": dt, **model.diagnostics(state),
            })
        dt = min(cfg.dt * 50, dt * min(5.0, max(0.2, 0.9 * max(err_norm, 1e-10) ** (-0.2))))
    traj.n_steps = steps
    traj.converged = True
    traj.termination = "t_max"
    return traj


# ---------------------------------------------------------------------------
# fixed-grid real-time driver (uniform sampling for spectral transforms)


def flow_real_sampled(state, model, cfg, sample_dt):
    """Real-time flow recorded on an exactly uniform grid t = j*sample_dt.

    The adaptive step is capped so accepted steps land exactly on the grid
    points (needed by Fourier transforms of the phase tracker); the carried
    step size survives across samples.
    """
    n_samples = int(round(cfg.t_max / sample_dt))
    traj = Trajectory()
    state = state.copy()
    e0 = model.energy(state)
    drift_bound = max(1e-8, 1e-6 * abs(e0))
    pb, pf = _purity_diag(state)
    traj.record(0.0, state, e0, model.observables(state), {
        "rate_norm": 0.0, "purity_boson": pb, "purity_fermion": pf, "dt": cfg.dt,
        **model.diagnostics(state),
    })
    t, dt = 0.0, cfg.dt
    rates = _assemble_rates(model, state, "real")
    steps = 0
    for j in range(1, n_samples + 1):
        target = j * sample_dt
        while t < target - 1e-12:
            steps += 1
            if steps > cfg.max_steps:
                raise IntegratorFailureError("sampled real-time run exceeded max_steps")
            dt_try = min(dt, target - t)
            candidate, err, k_last = _dp_step(model, state, dt_try, k1=rates)
            err_norm = _error_norm(err, candidate.blocks(), state.blocks(),
                                   cfg.abs_tol, cfg.rel_tol)
            if err_norm > 1.0:
                dt = max(cfg.min_dt, dt_try * max(0.2, 0.9 * err_norm ** (-0.2)))
                if dt <= cfg.min_dt:
                    raise IntegratorFailureError(f"step collapse at t={t:.6g}")
                continue
            state, t, rates = candidate, t + dt_try, k_last
            grown = dt_try * min(5.0, max(0.2, 0.9 * max(err_norm, 1e-10) ** (-0.2)))
            dt = min(cfg.dt * 50, max(dt, grown) if dt_try < dt else grown)
        energy = model.energy(state)
        if abs(energy - e0) > drift_bound:
            raise EnergyConservationError(
                f"energy drift {abs(energy - e0):.3e} over sampled run"
            )
        pb, pf = _check_purity(state, cfg, t)
        traj.record(target, state, energy, model.observables(state), {
            "rate_norm": _rate_norm(rates), "purity_boson": pb, "purity_fermion": pf,
            "dt": dt, **model.diagnostics(state),
        })
    traj.n_steps = steps
    traj.converged = True
    traj.termination = "t_max"
    return traj


# ---------------------------------------------------------------------------
# fluctuations around a fixed point


@dataclass
class FluctuationProblem:
    gram: np.ndarray
    hmat: np.ndarray


@dataclass
class FluctuationModes:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns, in the orthonormal tangent basis
    kept: np.ndarray  # indices of non-deflated Gram directions


def linearize(problem: FluctuationProblem, deflate_tol: float = 1e-10) -> FluctuationModes:
    """Spectrum of L = G^{-1/2} M G^{-1/2} on the non-null subspace of G."""
    g = np.asarray(problem.gram)
    m = np.asarray(problem.hmat)
    if np.linalg.norm(g - g.conj().T) > 1e-10 * max(1.0, np.linalg.norm(g)):
        raise InvalidGramError("Gram matrix is not Hermitian")
    w, v = np.linalg.eigh(g)
    if w.min() < -deflate_tol * max(1.0, w.max()):
        raise InvalidGramError("Gram matrix is indefinite", eigenvalue=float(w.min()))
    keep = w > deflate_tol * max(1.0, w.max())
    v_k = v[:, keep]
    w_k = w[keep]
    inv_sqrt = v_k / np.sqrt(w_k)
    l_mat = inv_sqrt.conj().T @ m @ inv_sqrt
    l_mat = (l_mat + l_mat.conj().T) / 2.0
    mu, eta = np.linalg.eigh(l_mat)
    # express eigenvectors in the full orthonormal tangent basis
    eta_full = v_k @ eta
    return FluctuationModes(eigenvalues=mu, eigenvectors=eta_full, kept=np.nonzero(keep)[0])


def spectral_weight(modes: FluctuationModes, k: int, omegas: np.ndarray, eta: float) -> np.ndarray:
    """Z_k(w) = sum_l |eta_k^l|^2 Lorentzian(w - mu_l) with HWHM ``eta``.

    Each Lorentzian is normalized to unit weight over the supplied grid
    window (arctan normalization), so the grid integral of Z_k equals
    sum_l |eta_k^l|^2 whenever the grid spans the spectrum; a bare Cauchy
    kernel would leave several percent in the tails even at +-10 eta.
    """
    omegas = np.asarray(omegas, dtype=float)
    weights = np.abs(modes.eigenvectors[k, :]) ** 2
    lo, hi = omegas[0], omegas[-1]
    out = np.zeros_like(omegas)
    for wgt, mu in zip(weights, modes.eigenvalues):
        norm = (np.arctan((hi - mu) / eta) - np.arctan((lo - mu) / eta)) / np.pi
        out += wgt * (eta / np.pi) / ((omegas - mu) ** 2 + eta**2) / norm
    return out
