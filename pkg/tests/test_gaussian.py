import numpy as np
import pytest
import scipy.linalg as sla

from vargauss.errors import PreconditionError
from vargauss.gaussian import (
    BosonGaussian,
    ExpNumberSpec,
    FermionCovariance,
    displaced_exp,
    expn_boson,
    expn_boson_with_poly,
    expn_fermion,
    gamma_f_from_m,
    gamma_m_from_f,
    random_pure_boson,
    random_pure_fermion,
    repurify_boson,
    repurify_fermion_dirac,
    wick_moment,
)
from vargauss.numerics import symplectic_form
from vargauss.oracle import (
    boson_gaussian_fock,
    boson_mode_operators,
    boson_number_phases,
    fermion_gaussian_fock,
    fermion_mode_operators,
)

CUTOFF = 30


def fock_expn(state, beta, cutoff=CUTOFF):
    psi = boson_gaussian_fock(state, cutoff)
    occ = boson_number_phases(state.n_modes, cutoff)
    phases = np.exp(1j * (occ @ beta))
    return np.vdot(psi, phases * psi)


def coherent(n_modes, alpha):
    delta = np.concatenate([2 * np.real(alpha), 2 * np.imag(alpha)])
    return BosonGaussian(n_modes, delta, np.eye(2 * n_modes))


def squeezed_vacuum(r):
    return BosonGaussian(1, np.zeros(2), np.diag([np.exp(2 * r), np.exp(-2 * r)]))


class TestStateContainers:
    def test_vacuum_is_pure(self):
        BosonGaussian.vacuum(3).check()
        FermionCovariance.vacuum(3).check()

    def test_random_states_are_pure(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            random_pure_boson(3, rng).check()
            random_pure_fermion(3, rng).check()

    def test_purity_detects_mixed(self):
        mixed = BosonGaussian(1, np.zeros(2), 2.0 * np.eye(2))
        with pytest.raises(PreconditionError):
            mixed.check()


class TestWickMoment:
    def test_first_moment_vacuum(self):
        assert wick_moment(BosonGaussian.vacuum(2), [0]) == 0

    def test_second_moment_definition(self):
        rng = np.random.default_rng(1)
        st = random_pure_boson(2, rng)
        for j in range(4):
            expect = st.gamma_b[j, j] + st.delta_r[j] ** 2
            assert wick_moment(st, [j, j]) == pytest.approx(expect, rel=1e-12)

    def test_commutator_structure(self):
        st = BosonGaussian.vacuum(1)
        # [x, p] = 2i: <xp> - <px> = 2i
        assert wick_moment(st, [0, 1]) - wick_moment(st, [1, 0]) == pytest.approx(2j)

    @pytest.mark.parametrize("monomial", [[0, 1, 2, 3], [0, 0, 1, 1], [2, 0, 3, 1]])
    def test_degree_four_vs_fock(self, monomial):
        rng = np.random.default_rng(2)
        st = random_pure_boson(2, rng, squeeze=0.3, displace=0.6)
        psi = boson_gaussian_fock(st, CUTOFF)
        ann = boson_mode_operators(2, CUTOFF)
        quads = [a + a.conj().T for a in ann] + [1j * (a.conj().T - a) for a in ann]
        op = quads[monomial[0]]
        for idx in monomial[1:]:
            op = op @ quads[idx]
        ref = np.vdot(psi, op @ psi)
        assert wick_moment(st, monomial) == pytest.approx(ref, abs=1e-8)


class TestExpnBoson:
    def test_vacuum_any_beta(self):
        rng = np.random.default_rng(3)
        for _ in range(5):
            beta = rng.uniform(-np.pi, np.pi, size=3)
            assert expn_boson(BosonGaussian.vacuum(3), beta) == pytest.approx(1.0 + 0j, abs=1e-12)

    def test_beta_zero_is_one(self):
        rng = np.random.default_rng(4)
        st = random_pure_boson(3, rng)
        assert expn_boson(st, np.zeros(3)) == pytest.approx(1.0 + 0j, abs=1e-10)

    def test_coherent_parity(self):
        alpha = np.array([0.5 + 0.0j])
        st = coherent(1, alpha)
        # Fock-sum parity oracle: sum (-1)^n |<n|alpha>|^2 = e^{-2|alpha|^2}
        val = expn_boson(st, np.array([np.pi]))
        assert val == pytest.approx(np.exp(-2 * abs(alpha[0]) ** 2), abs=1e-12)
        # single-mode example delta_x = 1, delta_p = 0 -> e^{-1/2}
        st2 = BosonGaussian(1, np.array([1.0, 0.0]), np.eye(2))
        assert expn_boson(st2, np.array([np.pi])) == pytest.approx(np.exp(-0.5), abs=1e-12)

    def test_squeezed_vacuum_parity(self):
        # squeezed vacuum has even occupation only
        st = squeezed_vacuum(0.5)
        assert expn_boson(st, np.array([np.pi])) == pytest.approx(1.0 + 0j, abs=1e-10)

    def test_single_mode_analytic(self):
        # <e^{i beta n}> = 1 / (cosh r sqrt(1 - tanh^2 r e^{2 i beta}))
        r = 0.7
        st = squeezed_vacuum(r)
        for beta in np.linspace(-np.pi, np.pi, 17):
            ref = 1.0 / (np.cosh(r) * np.sqrt(1 - np.tanh(r) ** 2 * np.exp(2j * beta)))
            assert expn_boson(st, np.array([beta])) == pytest.approx(ref, abs=1e-12)

    @pytest.mark.parametrize("seed", range(8))
    def test_random_two_mode_vs_fock(self, seed):
        rng = np.random.default_rng(40 + seed)
        st = random_pure_boson(2, rng, squeeze=0.35, displace=0.7)
        beta = rng.uniform(-np.pi, np.pi, size=2)
        ref = fock_expn(st, beta)
        ref40 = fock_expn(st, beta, cutoff=40)
        assert abs(ref - ref40) < 1e-9  # cutoff convergence of the oracle
        assert expn_boson(st, beta) == pytest.approx(ref40, abs=1e-8)

    def test_unitarity_bound(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            st = random_pure_boson(3, rng, squeeze=0.5, displace=1.0)
            beta = rng.uniform(-np.pi, np.pi, size=3)
            assert abs(expn_boson(st, beta)) <= 1.0 + 1e-10

    def test_spec_wrapper(self):
        st = BosonGaussian.vacuum(2)
        spec = ExpNumberSpec(beta=np.array([0.3, -0.7]))
        assert expn_boson(st, spec) == pytest.approx(1.0 + 0j, abs=1e-12)


class TestExpnBosonWithPoly:
    def test_vacuum_annihilator(self):
        st = BosonGaussian.vacuum(2)
        eb, _ = expn_boson_with_poly(st, np.array([0.4, 1.1]), 0, 1)
        assert eb == pytest.approx(0.0, abs=1e-12)

    def test_beta_zero_reduces_to_wick(self):
        rng = np.random.default_rng(6)
        st = random_pure_boson(2, rng, squeeze=0.3, displace=0.8)
        n = st.n_modes
        for j in range(n):
            for k in range(n):
                eb, ebb = expn_boson_with_poly(st, np.zeros(n), j, k)
                bk = (st.delta_r[k] + 1j * st.delta_r[n + k]) / 2
                assert eb == pytest.approx(bk, abs=1e-10)
                # <b_j^dag b_k> from quadrature moments
                xj, pj, xk, pk = j, n + j, k, n + k
                ref = 0.25 * (
                    wick_moment(st, [xj, xk])
                    + 1j * wick_moment(st, [xj, pk])
                    - 1j * wick_moment(st, [pj, xk])
                    + wick_moment(st, [pj, pk])
                )
                assert ebb == pytest.approx(ref, abs=1e-10)

    @pytest.mark.parametrize("jk", [(0, 0), (0, 1), (1, 0), (1, 1)])
    def test_two_mode_vs_fock(self, jk):
        rng = np.random.default_rng(7)
        st = random_pure_boson(2, rng, squeeze=0.3, displace=0.6)
        beta = np.array([np.pi, 0.0])
        j, k = jk
        psi = boson_gaussian_fock(st, CUTOFF)
        occ = boson_number_phases(2, CUTOFF)
        phases = np.exp(1j * (occ @ beta))
        ann = boson_mode_operators(2, CUTOFF)
        ref_b = np.vdot(psi, phases * (ann[k] @ psi))
        ref_bb = np.vdot(psi, phases * (ann[j].conj().T @ ann[k] @ psi))
        eb, ebb = expn_boson_with_poly(st, beta, j, k)
        assert eb == pytest.approx(ref_b, abs=1e-8)
        assert ebb == pytest.approx(ref_bb, abs=1e-8)

    def test_small_beta_regular(self):
        rng = np.random.default_rng(8)
        st = random_pure_boson(2, rng, squeeze=0.3, displace=0.5)
        val_zero = expn_boson_with_poly(st, np.array([0.0, 0.3]), 0, 0)[1]
        val_tiny = expn_boson_with_poly(st, np.array([1e-9, 0.3]), 0, 0)[1]
        assert val_tiny == pytest.approx(val_zero, abs=1e-7)


class TestDisplacedExp:
    def test_zero_gamma(self):
        rng = np.random.default_rng(9)
        st = random_pure_boson(2, rng)
        assert displaced_exp(st, np.zeros(4)) == pytest.approx(1.0 + 0j)

    def test_vacuum_single_mode(self):
        st = BosonGaussian.vacuum(1)
        assert displaced_exp(st, np.array([1.0, 0.0])) == pytest.approx(np.exp(-0.5), abs=1e-12)

    def test_random_vs_fock(self):
        rng = np.random.default_rng(10)
        st = random_pure_boson(2, rng, squeeze=0.3, displace=0.6)
        gamma = rng.uniform(-0.8, 0.8, size=4)
        psi = boson_gaussian_fock(st, CUTOFF)
        ann = boson_mode_operators(2, CUTOFF)
        quads = [a + a.conj().T for a in ann] + [1j * (a.conj().T - a) for a in ann]
        op = sum(gamma[i] * quads[i] for i in range(4))
        ref = np.vdot(psi, sla.expm(1j * op.toarray()) @ psi)
        assert displaced_exp(st, gamma) == pytest.approx(ref, abs=1e-8)


class TestExpnFermion:
    def test_vacuum(self):
        rng = np.random.default_rng(11)
        for n in (1, 2, 3):
            alpha = rng.uniform(-np.pi, np.pi, size=n)
            assert expn_fermion(FermionCovariance.vacuum(n), alpha) == pytest.approx(
                1.0 + 0j, abs=1e-12
            )

    def test_occupied_mode_phase(self):
        # fully occupied single mode: eigenstate of n with eigenvalue 1
        occupied = FermionCovariance(1, symplectic_form(1))
        for phi in (0.3, np.pi, -1.2):
            assert expn_fermion(occupied, np.array([phi])) == pytest.approx(
                np.exp(1j * phi), abs=1e-12
            )

    def test_alpha_zero(self):
        rng = np.random.default_rng(12)
        cov = random_pure_fermion(3, rng)
        assert expn_fermion(cov, np.zeros(3)) == pytest.approx(1.0 + 0j, abs=1e-10)

    @pytest.mark.parametrize("seed", range(6))
    def test_random_vs_fock(self, seed):
        rng = np.random.default_rng(60 + seed)
        n = 3
        k = rng.standard_normal((2 * n, 2 * n))
        k = k - k.T
        u = sla.expm(k)
        cov = FermionCovariance(n, -(u @ symplectic_form(n) @ u.T))
        psi = fermion_gaussian_fock(k, n)
        cs = fermion_mode_operators(n)
        alpha = rng.uniform(-np.pi, np.pi, size=n)
        op = sla.expm(sum(1j * alpha[j] * (cs[j].conj().T @ cs[j]) for j in range(n)))
        ref = np.vdot(psi, op @ psi)
        assert expn_fermion(cov, alpha) == pytest.approx(ref, abs=1e-8)

    def test_parity_pattern_vs_fock(self):
        rng = np.random.default_rng(13)
        n = 3
        k = rng.standard_normal((2 * n, 2 * n))
        k = k - k.T
        u = sla.expm(k)
        cov = FermionCovariance(n, -(u @ symplectic_form(n) @ u.T))
        psi = fermion_gaussian_fock(k, n)
        cs = fermion_mode_operators(n)
        par = sla.expm(sum(1j * np.pi * (c.conj().T @ c) for c in cs))
        ref = np.vdot(psi, par @ psi)
        assert expn_fermion(cov, np.pi * np.ones(n)) == pytest.approx(ref, abs=1e-8)

    def test_bound(self):
        rng = np.random.default_rng(14)
        for _ in range(10):
            cov = random_pure_fermion(3, rng)
            alpha = rng.uniform(-np.pi, np.pi, size=3)
            assert abs(expn_fermion(cov, alpha)) <= 1.0 + 1e-10


class TestDiracCovariance:
    def test_vacuum_blocks(self):
        gf = gamma_f_from_m(FermionCovariance.vacuum(2))
        assert np.allclose(gf[:2, :2], np.eye(2), atol=1e-12)  # <c c^dag> = I
        assert np.allclose(gf[2:, 2:], 0.0, atol=1e-12)  # <c^dag c> = 0

    def test_occupied_blocks(self):
        gf = gamma_f_from_m(FermionCovariance(2, symplectic_form(2)))
        assert np.allclose(gf[2:, 2:], np.eye(2), atol=1e-12)

    def test_projector_property(self):
        rng = np.random.default_rng(15)
        for _ in range(5):
            cov = random_pure_fermion(3, rng)
            gf = gamma_f_from_m(cov)
            assert np.allclose(gf, gf.conj().T, atol=1e-10)
            assert np.linalg.norm(gf @ gf - gf) < 1e-8

    def test_round_trip(self):
        rng = np.random.default_rng(16)
        cov = random_pure_fermion(3, rng)
        back = gamma_m_from_f(gamma_f_from_m(cov))
        assert np.allclose(back.gamma_m, cov.gamma_m, atol=1e-10)


class TestRepurify:
    def test_boson_identity_on_pure(self):
        rng = np.random.default_rng(17)
        st = random_pure_boson(2, rng)
        assert np.allclose(repurify_boson(st.gamma_b), st.gamma_b, atol=1e-9)

    def test_boson_projects_drift(self):
        rng = np.random.default_rng(18)
        st = random_pure_boson(2, rng)
        drifted = st.gamma_b + 1e-4 * np.eye(4)
        fixed = BosonGaussian(2, np.zeros(4), repurify_boson(drifted))
        assert fixed.purity_residual() < 1e-8
        assert np.linalg.norm(fixed.gamma_b - st.gamma_b) < 1e-3

    def test_fermion_projector_rounding(self):
        rng = np.random.default_rng(19)
        gf = gamma_f_from_m(random_pure_fermion(2, rng))
        noisy = gf + 1e-4 * np.eye(4)
        fixed = repurify_fermion_dirac(noisy)
        assert np.linalg.norm(fixed @ fixed - fixed) < 1e-10
