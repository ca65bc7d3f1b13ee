import itertools

import numpy as np
import pytest

from vargauss.errors import PreconditionError, SingularGramError
from vargauss.numerics import (
    digamma,
    matrix_sqrt_posdef,
    pfaffian,
    symplectic_check,
    symplectic_form,
    takagi,
)


def random_complex_symmetric(n, rng, scale=1.0):
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return scale * (a + a.T) / 2


def random_antisymmetric(n, rng, complex_=False):
    a = rng.standard_normal((n, n))
    if complex_:
        a = a + 1j * rng.standard_normal((n, n))
    return a - a.T


def pfaffian_combinatorial(a):
    """Reference Pfaffian by summation over perfect matchings (tiny n only)."""
    n = a.shape[0]
    if n % 2:
        return 0.0
    idx = list(range(n))

    def matchings(rest):
        if not rest:
            yield [], 1
            return
        i = rest[0]
        for pos, j in enumerate(rest[1:], start=1):
            remaining = rest[1:pos] + rest[pos + 1:]
            sign = (-1) ** (pos - 1)
            for pairs, s in matchings(remaining):
                yield [(i, j)] + pairs, sign * s

    total = 0.0
    for pairs, sign in matchings(idx):
        term = sign
        for i, j in pairs:
            term = term * a[i, j]
        total += term
    return total


class TestTakagi:
    def test_real_diagonal(self):
        fac = takagi(np.diag([2.0, 3.0]).astype(complex))
        assert np.allclose(fac.d, [3.0, 2.0])
        assert np.allclose(fac.reconstruct(), np.diag([2.0, 3.0]))
        assert fac.s0 in (-1, 1)

    def test_offdiagonal_pair(self):
        m = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
        fac = takagi(m)
        assert np.allclose(fac.d, [1.0, 1.0])
        assert np.linalg.norm(fac.reconstruct() - m) < 1e-12

    @pytest.mark.parametrize("seed", range(6))
    def test_random_reconstruction(self, seed):
        rng = np.random.default_rng(seed)
        m = random_complex_symmetric(6, rng)
        fac = takagi(m)
        assert fac.d.min() >= 0
        assert np.all(np.diff(fac.d) <= 1e-12)
        assert np.allclose(fac.u @ fac.u.conj().T, np.eye(6), atol=1e-11)
        res = np.linalg.norm(fac.reconstruct() - m) / np.linalg.norm(m)
        assert res < 1e-10

    def test_rank_deficient(self):
        rng = np.random.default_rng(7)
        v = rng.standard_normal(5) + 1j * rng.standard_normal(5)
        m = np.outer(v, v)  # rank one, symmetric
        fac = takagi(m)
        assert np.linalg.norm(fac.reconstruct() - m) < 1e-10 * np.linalg.norm(m)
        assert np.sum(fac.d > 1e-10) == 1

    def test_degenerate_singular_values(self):
        rng = np.random.default_rng(11)
        # unitary congruence of a doubly degenerate diagonal
        q = np.linalg.qr(rng.standard_normal((4, 4)))[0]
        m = q.T @ np.diag([2.0, 2.0, 1.0, 1.0]) @ q
        fac = takagi(m.astype(complex))
        assert np.linalg.norm(fac.reconstruct() - m) < 1e-10

    def test_rejects_nonsymmetric(self):
        with pytest.raises(PreconditionError):
            takagi(np.array([[0.0, 1.0], [2.0, 0.0]]))


class TestPfaffian:
    def test_two_by_two(self):
        a = 1.7
        m = np.array([[0.0, a], [-a, 0.0]])
        assert pfaffian(m) == pytest.approx(a)

    def test_four_by_four_reference(self):
        m = np.zeros((4, 4))
        vals = {(0, 1): 1.0, (0, 2): 2.0, (0, 3): 3.0, (1, 2): 4.0, (1, 3): 5.0, (2, 3): 6.0}
        for (i, j), v in vals.items():
            m[i, j] = v
            m[j, i] = -v
        # 1*6 - 2*5 + 3*4 = 8
        assert pfaffian(m) == pytest.approx(8.0)

    @pytest.mark.parametrize("n", [2, 4, 6, 8, 10, 12])
    def test_square_is_determinant(self, n):
        rng = np.random.default_rng(n)
        a = random_antisymmetric(n, rng)
        pf = pfaffian(a)
        det = np.linalg.det(a)
        assert pf**2 == pytest.approx(det, rel=1e-8)

    @pytest.mark.parametrize("n", [2, 4, 6, 8])
    def test_congruence(self, n):
        rng = np.random.default_rng(100 + n)
        a = random_antisymmetric(n, rng)
        b = rng.standard_normal((n, n))
        assert pfaffian(b.T @ a @ b) == pytest.approx(np.linalg.det(b) * pfaffian(a), rel=1e-8)

    def test_small_reference_match(self):
        rng = np.random.default_rng(3)
        for n in (2, 4, 6):
            a = random_antisymmetric(n, rng)
            assert pfaffian(a) == pytest.approx(pfaffian_combinatorial(a), rel=1e-10)

    def test_complex_entries(self):
        rng = np.random.default_rng(5)
        a = random_antisymmetric(6, rng, complex_=True)
        pf = pfaffian(a)
        assert pf**2 == pytest.approx(np.linalg.det(a), rel=1e-8)

    def test_odd_dimension_is_zero(self):
        rng = np.random.default_rng(9)
        assert pfaffian(random_antisymmetric(5, rng)) == 0.0

    def test_rejects_non_antisymmetric(self):
        with pytest.raises(PreconditionError):
            pfaffian(np.eye(4))


class TestSymplectic:
    def test_identity(self):
        assert symplectic_check(np.eye(4))

    def test_single_mode_squeeze(self):
        r = 0.7
        s = np.diag([np.exp(r), np.exp(-r)])
        assert symplectic_check(s, symplectic_form(1))

    def test_uniform_scaling_fails(self):
        assert not symplectic_check(np.diag([2.0, 2.0]))

    def test_form_properties(self):
        s = symplectic_form(3)
        assert np.array_equal(s.T, -s)
        assert np.allclose(s @ s, -np.eye(6))


class TestDigamma:
    def test_euler_constant(self):
        gamma0 = 0.5772156649015329
        assert digamma(1.0) == pytest.approx(-gamma0, abs=1e-13)

    def test_recurrence_value(self):
        gamma0 = 0.5772156649015329
        assert digamma(2.0) == pytest.approx(1.0 - gamma0, abs=1e-13)

    def test_recurrence_grid(self):
        for z in np.linspace(0.5, 100.0, 200):
            assert digamma(z + 1.0) - digamma(z) == pytest.approx(1.0 / z, abs=1e-12)

    def test_against_mpmath(self):
        mpmath = pytest.importorskip("mpmath")
        for z in (0.5, 1.25, 7.0, 201.0):
            ref = float(mpmath.digamma(z))
            assert digamma(z) == pytest.approx(ref, abs=1e-12)

    def test_domain(self):
        with pytest.raises(PreconditionError):
            digamma(0.0)
        with pytest.raises(PreconditionError):
            digamma(-1.0)


class TestMatrixSqrt:
    def test_identity(self):
        assert np.allclose(matrix_sqrt_posdef(np.eye(3)), np.eye(3))

    def test_diagonal(self):
        assert np.allclose(matrix_sqrt_posdef(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))

    def test_random_spd(self):
        rng = np.random.default_rng(21)
        a = rng.standard_normal((10, 10))
        m = a @ a.T + 0.5 * np.eye(10)
        x = matrix_sqrt_posdef(m)
        assert np.allclose(x, x.T)
        assert np.linalg.norm(x @ x - m) < 1e-10 * np.linalg.norm(m)

    def test_non_posdef_raises(self):
        with pytest.raises(SingularGramError) as exc:
            matrix_sqrt_posdef(np.diag([1.0, -0.5]))
        assert exc.value.eigenvalue == pytest.approx(-0.5)
