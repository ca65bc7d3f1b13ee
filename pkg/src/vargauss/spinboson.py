"""Spin-boson model with an Ohmic bath, and its Kondo mapping.

Two equivalent variational families for the even excitation-parity sector:

* parity frame — the spin is eliminated through the conserved parity and
  the bath state is a displaced squeezed Gaussian (delta_r free);
* shifted frame — a mode-by-mode displacement with variational vector
  lambda multiplies a squeezed Gaussian with delta_r = 0; the spin
  expectation values are pinned to the even-sector solution.

At their fixed points the two frames coincide via lambda = sigma delta/2.
The module also provides the quench dynamics, magnetization/squeezing/
energy-variance observables, and the bath spin-density profile of the
anisotropic Kondo model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError, VargaussError
from .flow import (
    FlowConfig,
    Gradients,
    Model,
    Trajectory,
    VariationalState,
    flow_imaginary,
    flow_real,
)
from .gaussian import BosonGaussian
from .numerics import digamma, symplectic_form

EULER_GAMMA = 0.5772156649015329


# ---------------------------------------------------------------------------
# bath specifications


@dataclass
class OhmicBathSpec:
    """Linear-dispersion bath with Ohmic couplings and a sharp cutoff."""

    n_modes: int
    alpha: float
    delta: float
    omega_c: float = 1.0

    def __post_init__(self):
        if self.alpha < 0 or self.delta < 0:
            raise PreconditionError("alpha and delta must be nonnegative")

    @property
    def eps(self) -> np.ndarray:
        return self.omega_c * np.arange(1, self.n_modes + 1) / self.n_modes

    @property
    def couplings(self) -> np.ndarray:
        return np.sqrt(2.0 * self.alpha * self.omega_c * self.eps / self.n_modes)


def kondo_cutoff_solve(n_modes: int, omega_c: float = 1.0) -> float:
    """Short-distance cutoff matching the mode discretization.

    Solves psi(N+1) + gamma0 = -ln(1 - exp(-omega_c l_c / N)) for l_c by
    bisection to 1e-12 relative.
    """
    if n_modes < 1:
        raise PreconditionError("need at least one mode")
    target = digamma(n_modes + 1.0) + EULER_GAMMA

    def residual(lc):
        return -np.log1p(-np.exp(-omega_c * lc / n_modes)) - target

    lo, hi = 1e-12, 1.0
    while residual(hi) > 0:
        hi *= 2.0
        if hi > 1e12:
            raise VargaussError("cutoff bracket expansion failed")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if residual(mid) > 0:
            lo = mid
        else:
            hi = mid
        if (hi - lo) <= 1e-12 * hi:
            break
    return 0.5 * (lo + hi)


@dataclass
class KondoSpec:
    """Anisotropic Kondo couplings mapped onto the bosonic bath."""

    j_perp: float
    j_parallel: float
    n_modes: int
    omega_c: float = 1.0

    @property
    def l_c(self) -> float:
        return kondo_cutoff_solve(self.n_modes, self.omega_c)

    @property
    def alpha(self) -> float:
        return (1.0 - self.j_parallel / (4.0 * np.pi)) ** 2

    @property
    def delta(self) -> float:
        return self.j_perp / (2.0 * np.pi * self.l_c)

    @property
    def eps(self) -> np.ndarray:
        return self.omega_c * np.arange(1, self.n_modes + 1) / self.n_modes

    @property
    def couplings(self) -> np.ndarray:
        # Ohmic form with the soft short-distance cutoff of the mapping
        return np.sqrt(2.0 * self.alpha * self.omega_c * self.eps / self.n_modes) * np.exp(
            -self.eps * self.l_c / 2.0
        )


def _bath_arrays(bath) -> tuple[np.ndarray, np.ndarray]:
    return np.asarray(bath.eps, dtype=float), np.asarray(bath.couplings, dtype=float)


# ---------------------------------------------------------------------------
# parity frame


class ParityFrameModel(Model):
    """Gaussian bath state with the spin eliminated by parity conservation."""

    def __init__(self, bath):
        self.bath = bath
        eps, g = _bath_arrays(bath)
        self.eps2 = np.concatenate([eps, eps])
        self.g_x = np.concatenate([g, np.zeros_like(g)])
        self.delta_spin = float(bath.delta)

    def energy(self, state: VariationalState) -> float:
        b = state.boson
        gi_d = np.linalg.solve(b.gamma_b, b.delta_r)
        tunneling = self.delta_spin / 2.0 * np.exp(-0.5 * b.delta_r @ gi_d)
        return float(
            0.25 * b.delta_r @ (self.eps2 * b.delta_r)
            + 0.25 * np.sum(self.eps2 * np.diag(b.gamma_b))
            - 0.5 * self.eps2[: len(self.eps2) // 2].sum()
            - tunneling
            - 0.5 * self.g_x @ b.delta_r
        )

    def gradients(self, state: VariationalState) -> Gradients:
        b = state.boson
        gi_d = np.linalg.solve(b.gamma_b, b.delta_r)
        t_fac = self.delta_spin * np.exp(-0.5 * b.delta_r @ gi_d)
        h_delta = self.eps2 * b.delta_r + t_fac * gi_d - self.g_x
        h_b = np.diag(self.eps2) - t_fac * gi_d[:, None] * gi_d[None, :]
        return Gradients(h_delta=h_delta, h_b=h_b)

    def observables(self, state: VariationalState) -> dict:
        lam = shift_from_displacement(state.boson.delta_r)
        return observables_from_shift(lam, state.boson.gamma_b, self.delta_spin)


def fixed_point_residual_parity(state: VariationalState, bath) -> float:
    """Residual of the self-consistent displacement condition at a fixed point."""
    model = ParityFrameModel(bath)
    b = state.boson
    gi_d = np.linalg.solve(b.gamma_b, b.delta_r)
    t_fac = bath.delta * np.exp(-0.5 * b.delta_r @ gi_d)
    lhs = (model.eps2 * b.delta_r) + t_fac * gi_d
    return float(np.max(np.abs(lhs - model.g_x)))


# ---------------------------------------------------------------------------
# shifted (polaron-type) frame, even sector pinned


def shift_rates_general(lam, gamma_b, g_big, delta_spin, sz, sp, mode):
    """Mode-shift parameter flow for a general spin sector.

    ``sp`` is the complex raising-operator expectation; the even-sector
    models call this with the pinned values sz = 0, sp = -1/2.  The
    prefactor (1 - sz^2) must stay away from zero, otherwise the tangent
    directions degenerate and the flow aborts (no regularization).
    """
    n = len(lam) // 2
    sigma = symplectic_form(n)
    pref = 1.0 - sz * sz
    if pref < 1e-10:
        raise VargaussError(
            "tangent degeneracy: (1 - <s_z>^2) vanished; the shift flow is ill-posed"
        )
    exp_fac = np.exp(-2.0 * lam @ gamma_b @ lam)
    a = 2.0 * delta_spin * np.real(sp) * exp_fac
    b = 2.0 * delta_spin * sz * np.imag(sp) * exp_fac
    if mode == "imaginary":
        rhs = a * (sigma @ lam) - b * (gamma_b @ lam) - 0.5 * pref * (gamma_b @ g_big)
        return -(sigma @ rhs) / pref  # sigma^{-1} = -sigma
    rhs = -a * (sigma @ (gamma_b @ lam)) + b * lam + 0.5 * pref * g_big
    return rhs / pref


def _shift_source(lam, eps2):
    """G = (g + 2 eps lam_p, -2 eps lam_x) without the bare coupling part."""
    n = len(lam) // 2
    out = np.empty_like(lam)
    out[:n] = 2.0 * eps2[:n] * lam[n:]
    out[n:] = -2.0 * eps2[n:] * lam[:n]
    return out


class ShiftedFrameModel(Model):
    """Even-sector shifted frame: squeezed bath plus the shift vector lambda."""

    def __init__(self, bath):
        self.bath = bath
        eps, g = _bath_arrays(bath)
        self.eps2 = np.concatenate([eps, eps])
        self.g_x = np.concatenate([g, np.zeros_like(g)])
        self.delta_spin = float(bath.delta)

    def _y(self, state):
        lam = state.params["lam"]
        return lam @ state.boson.gamma_b @ lam

    def energy(self, state: VariationalState) -> float:
        lam = state.params["lam"]
        b = state.boson
        n = len(lam) // 2
        tunneling = self.delta_spin / 2.0 * np.exp(-2.0 * self._y(state))
        return float(
            -tunneling
            + 0.25 * np.sum(self.eps2 * np.diag(b.gamma_b))
            - 0.5 * self.eps2[:n].sum()
            + lam @ (self.eps2 * lam)
            + self.g_x[:n] @ lam[n:]
        )

    def gradients(self, state: VariationalState) -> Gradients:
        lam = state.params["lam"]
        b = state.boson
        exp_fac = np.exp(-2.0 * self._y(state))
        h_b = np.diag(self.eps2) + 4.0 * self.delta_spin * exp_fac * (
            lam[:, None] * lam[None, :]
        )
        h_delta = np.zeros_like(lam)  # delta_r is pinned to zero in this frame
        return Gradients(h_delta=h_delta, h_b=h_b)

    def param_rates(self, state: VariationalState, mode: str) -> dict:
        lam = state.params["lam"]
        g_big = self.g_x + _shift_source(lam, self.eps2)
        rate = shift_rates_general(
            lam, state.boson.gamma_b, g_big, self.delta_spin,
            sz=0.0, sp=-0.5, mode=mode,
        )
        return {"lam": rate}

    def observables(self, state: VariationalState) -> dict:
        return observables_from_shift(
            state.params["lam"], state.boson.gamma_b, self.delta_spin
        )


def shift_from_displacement(delta_r: np.ndarray) -> np.ndarray:
    """Frame map lambda = sigma delta / 2."""
    n = len(delta_r) // 2
    return symplectic_form(n) @ delta_r / 2.0


def observables_from_shift(lam, gamma_b, delta_spin) -> dict:
    """Magnetization, squeezing spectrum and tangent-space energy variance."""
    n = len(lam) // 2
    y = float(lam @ gamma_b @ lam)
    m_x = float(np.exp(-2.0 * y))
    n_perp = float(
        delta_spin**2 / 8.0 * (2.0 - np.exp(-4.0 * y))
        - 2.0 * delta_spin**2 * np.exp(-4.0 * y) * (y + 0.25) ** 2
    )
    out = {"m_x": m_x, "n_perp": n_perp, "y": y}
    out["s_x_max"] = float(np.max(np.diag(gamma_b)[:n] - 1.0))
    return out


def squeezing_spectrum(state: VariationalState) -> np.ndarray:
    """(S_X)_k = <x_k^2> - 1 of the squeezed bath around the impurity."""
    n = state.boson.n_modes
    return np.diag(state.boson.gamma_b)[:n] - 1.0


# ---------------------------------------------------------------------------
# ground-state and quench drivers


def initial_state(bath, frame: str) -> VariationalState:
    n = bath.n_modes
    if frame == "parity":
        return VariationalState(boson=BosonGaussian.vacuum(n))
    if frame == "shifted":
        return VariationalState(
            boson=BosonGaussian.vacuum(n), params={"lam": np.zeros(2 * n)}
        )
    raise PreconditionError(f"unknown frame {frame!r}")


def make_model(bath, frame: str) -> Model:
    return ParityFrameModel(bath) if frame == "parity" else ShiftedFrameModel(bath)


def default_config(bath, mode: str) -> FlowConfig:
    if mode == "imaginary":
        # slowest relaxation rate ~ smallest bath frequency
        t_relax = bath.n_modes / bath.omega_c
        return FlowConfig(
            mode="imaginary",
            dt=0.1 / bath.omega_c,
            max_dt=2.0 / bath.omega_c,
            t_max=400.0 * t_relax,
            fixed_point_tol=1e-11,
            record_stride=500,
            max_steps=1_000_000,
            repurify_every=50,
        )
    return FlowConfig(mode="real", dt=0.05 / bath.omega_c, t_max=100.0,
                      abs_tol=1e-9, rel_tol=1e-7, record_stride=5,
                      repurify_every=300)


def ground_state(bath, frame: str = "shifted", cfg: FlowConfig | None = None,
                 seed: int = 0, perturbation: float = 1e-3) -> Trajectory:
    """Imaginary-time ground state in the requested frame.

    The bath starts in its vacuum with a small seeded kick on the
    displacement/shift parameters (the vacuum is exactly stationary at
    delta = 0).
    """
    st = initial_state(bath, frame)
    rng = np.random.default_rng(seed)
    n = bath.n_modes
    if frame == "parity":
        st.boson.delta_r = st.boson.delta_r + perturbation * rng.standard_normal(2 * n)
    else:
        st.params["lam"] = st.params["lam"] + perturbation * rng.standard_normal(2 * n)
    model = make_model(bath, frame)
    if cfg is None:
        cfg = default_config(bath, "imaginary")
    return flow_imaginary(st, model, cfg)


def quench(bath, t_max: float = 100.0, cfg: FlowConfig | None = None) -> Trajectory:
    """Real-time evolution from the decoupled state (vacuum bath, lam = 0)."""
    if cfg is None:
        cfg = default_config(bath, "real")
    cfg = FlowConfig(**{**cfg.__dict__, "t_max": t_max})
    model = ShiftedFrameModel(bath)
    return flow_real(initial_state(bath, "shifted"), model, cfg)


# ---------------------------------------------------------------------------
# Kondo bath observables


def kondo_spin_density(lam: np.ndarray, bath, x_grid: np.ndarray) -> np.ndarray:
    """Bath spin-density profile rho^+(x) around the impurity.

    rho^+(x) = -(omega_c / pi N) sum_q [ sqrt(2 n_q) lam_x sin(qx)
               + (1 + sqrt(2 n_q) lam_p) cos(qx) ];  rho^- = -rho^+.
    """
    n = len(lam) // 2
    eps = np.asarray(bath.eps)
    n_q = np.arange(1, n + 1, dtype=float)
    root = np.sqrt(2.0 * n_q)
    x = np.asarray(x_grid, dtype=float)
    sin_qx = np.sin(np.outer(x, eps))
    cos_qx = np.cos(np.outer(x, eps))
    out = sin_qx @ (root * lam[:n]) + cos_qx @ (1.0 + root * lam[n:])
    return -(bath.omega_c / (np.pi * n)) * out


def kondo_quench(kondo: KondoSpec, t_max: float = 100.0,
                 cfg: FlowConfig | None = None, x_grid: np.ndarray | None = None):
    """Quench from the decoupled Fermi sea; returns (trajectory, x, rho(t, x)).

    The initial state (lam = 0, vacuum squeezing) is the impurity in its
    bare down state on top of the unperturbed Fermi sea.
    """
    if x_grid is None:
        length = 2.0 * np.pi * kondo.n_modes / kondo.omega_c
        x_grid = np.linspace(0.0, length / 2.0, 200)
    traj = quench(kondo, t_max=t_max, cfg=cfg)
    rho = np.array([
        kondo_spin_density(st.params["lam"], kondo, x_grid) for st in traj.states
    ])
    return traj, x_grid, rho
