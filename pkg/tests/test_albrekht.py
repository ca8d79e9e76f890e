import itertools
import math

import numpy as np
import pytest
import scipy.linalg as sla

from fredholm_albrekht.albrekht import (
    DefectiveMatrix,
    IndefiniteR,
    LqrData,
    NonStabilizable,
    PolyExpansion,
    PolySystem,
    ResonantOperator,
    _spectrum,
    are_residual,
    closed_loop_spectrum,
    cost_operator,
    expand,
    hjb_residual,
    residual_series,
    solve_are,
    solve_cost_degree,
)
from fredholm_albrekht.polytensor import GradedPoly, SymTensor, multi_indices, num_coeffs


def scalar_quadratic(a=0.0, b=1.0, c=1.0):
    """x' = a x + b u + c x^2 with l = (x^2 + u^2)/2."""
    return PolySystem(
        F=[[a]], G=[[b]], Q=[[1.0]], R=[[1.0]],
        dynamics_terms={2: [SymTensor.from_dict(2, 2, {(0, 0): c})]},
    )


def scalar_taylor(a, c):
    """Taylor data of the exact scalar value function.

    With b = 1 the HJB reduces to pi'(x) = x g(x), g = h + sqrt(h^2 + 1),
    h = a + c x; this returns (pi2, pi3, pi4, k1, k2, k3) in monomial form.
    """
    s = math.sqrt(a * a + 1)
    g0 = a + s
    g1 = c * (1 + a / s)
    g2 = c * c / s**3
    return g0 / 2, g1 / 3, g2 / 8, -g0, -g1, -g2 / 2


def random_system(seed, n=3, m=2, with_extras=True):
    rng = np.random.default_rng(seed)
    F = rng.normal(size=(n, n))
    G = rng.normal(size=(n, m))
    W = rng.normal(size=(n + m, n + m))
    J = W @ W.T + 0.5 * np.eye(n + m)
    dyn, lag = {}, {}
    if with_extras:
        dim = n + m
        dyn[2] = [SymTensor(dim, 2, 0.3 * rng.normal(size=num_coeffs(dim, 2))) for _ in range(n)]
        dyn[3] = [SymTensor(dim, 3, 0.1 * rng.normal(size=num_coeffs(dim, 3))) for _ in range(n)]
        lag[3] = SymTensor(dim, 3, 0.2 * rng.normal(size=num_coeffs(dim, 3)))
        lag[4] = SymTensor(dim, 4, 0.1 * rng.normal(size=num_coeffs(dim, 4)))
    return PolySystem(F=F, G=G, Q=J[:n, :n], S=J[:n, n:], R=J[n:, n:], dynamics_terms=dyn, lagrangian_terms=lag)


class TestARE:
    def test_scalar(self):
        lqr = solve_are(scalar_quadratic())
        assert lqr.P[0, 0] == pytest.approx(1.0, abs=1e-12)
        assert lqr.K[0, 0] == pytest.approx(-1.0, abs=1e-12)
        assert lqr.mu[0] == pytest.approx(-1.0, abs=1e-12)

    def test_first_cosine_mode(self):
        lam = -(math.pi**2)
        P = solve_are(PolySystem(F=[[lam]], G=[[1.0]], Q=[[1.0]], R=[[1.0]])).P[0, 0]
        assert P == pytest.approx(lam + math.sqrt(lam**2 + 1), abs=1e-12)
        assert P == pytest.approx(0.050531, abs=1e-6)

    def test_unstable_open_loop(self):
        P = solve_are(PolySystem(F=[[2.0]], G=[[1.0]], Q=[[1.0]], R=[[1.0]])).P[0, 0]
        assert P == pytest.approx(2 + math.sqrt(5), abs=1e-12)

    @pytest.mark.parametrize("seed", range(8))
    def test_against_scipy_with_cross_term(self, seed):
        sys = random_system(seed, n=4, m=2, with_extras=False)
        lqr = solve_are(sys)
        ref = sla.solve_continuous_are(sys.F, sys.G, sys.Q, sys.R, s=sys.S)
        assert np.abs(lqr.P - ref).max() <= 1e-8 * (1 + np.abs(ref).max())
        assert np.linalg.norm(are_residual(sys, lqr.P)) <= 1e-10 * (1 + np.linalg.norm(lqr.P))
        assert np.allclose(lqr.K, -np.linalg.solve(sys.R, (lqr.P @ sys.G + sys.S).T))

    def test_not_stabilizable(self):
        sys = PolySystem(F=[[1.0, 0.0], [0.0, -1.0]], G=[[0.0], [1.0]], Q=np.eye(2), R=[[1.0]])
        with pytest.raises(NonStabilizable):
            solve_are(sys)

    def test_indefinite_R(self):
        with pytest.raises(IndefiniteR):
            PolySystem(F=[[0.0]], G=[[1.0]], Q=[[1.0]], R=[[-1.0]])

    def test_bad_shapes(self):
        with pytest.raises(ValueError):
            PolySystem(F=np.eye(2), G=np.ones((3, 1)), Q=np.eye(2), R=[[1.0]])


class TestSpectrum:
    def test_sorted_descending_real_part(self):
        sys = PolySystem(F=np.diag([-3.0, -1.0, -2.0]), G=np.eye(3), Q=np.eye(3), R=np.eye(3))
        lqr = solve_are(sys)
        mu, Psi = closed_loop_spectrum(sys, lqr)
        lam = np.array([-1.0, -2.0, -3.0])
        assert np.allclose(mu, -np.sqrt(lam**2 + 1))
        Acl = sys.F + sys.G @ lqr.K
        for i in range(3):
            assert np.allclose(Psi[i] @ Acl, mu[i] * Psi[i])
            assert np.linalg.norm(Psi[i]) == pytest.approx(1.0)

    def test_complex_pair(self):
        mu, Psi = _spectrum(np.array([[-1.0, 2.0], [-2.0, -1.0]]))
        assert mu[0] == np.conj(mu[1])
        assert mu[0].real == pytest.approx(-1.0)

    def test_defective(self):
        with pytest.raises(DefectiveMatrix):
            _spectrum(np.array([[-1.0, 1.0], [0.0, -1.0]]))


class TestCostOperator:
    @pytest.mark.parametrize("n,k", [(2, 2), (2, 3), (3, 3), (3, 4)])
    def test_eigenvalues_are_rate_sums(self, n, k):
        rng = np.random.default_rng(n + 7 * k)
        V = rng.normal(size=(n, n))
        rates = -rng.uniform(0.5, 3.0, size=n)
        A = V @ np.diag(rates) @ np.linalg.inv(V)
        got = np.sort(np.linalg.eigvals(cost_operator(A, k)).real)
        want = np.sort([rates[list(t)].sum() for t in multi_indices(n, k)])
        assert np.allclose(got, want, atol=1e-8)

    def test_matches_direct_lie_derivative(self):
        rng = np.random.default_rng(3)
        n, k = 3, 3
        A = rng.normal(size=(n, n))
        c = rng.normal(size=num_coeffs(n, k))
        p = GradedPoly(n, {k: SymTensor.from_monomials(n, k, c)})
        q = GradedPoly(n, {k: SymTensor.from_monomials(n, k, cost_operator(A, k) @ c)})
        for _ in range(5):
            z = rng.normal(size=n)
            assert q(z) == pytest.approx(p.gradient(z) @ (A @ z), rel=1e-10)


class TestExpansion:
    @pytest.mark.parametrize("a,c", [(0.0, 1.0), (-1.0, 0.5), (0.7, -2.0), (-(math.pi**2), 1.0)])
    def test_scalar_closed_form(self, a, c):
        exp = expand(scalar_quadratic(a=a, c=c), 3)
        got = [exp.cost[k].coeffs[0] for k in (2, 3, 4)] + [exp.feedback[0][k].coeffs[0] for k in (1, 2, 3)]
        assert np.allclose(got, scalar_taylor(a, c), atol=1e-10)

    def test_textbook_values(self):
        exp = expand(scalar_quadratic(), 3)
        assert exp.cost[3].coeffs[0] == pytest.approx(1 / 3, abs=1e-12)
        assert exp.cost[4].coeffs[0] == pytest.approx(1 / 8, abs=1e-12)
        assert exp.feedback[0][3].coeffs[0] == pytest.approx(-0.5, abs=1e-12)

    def test_no_quadratic_dynamics_gives_zero_cubic(self):
        exp = expand(scalar_quadratic(c=0.0), 2)
        assert exp.cost[3].coeffs[0] == 0.0
        assert exp.feedback[0][2].coeffs[0] == 0.0

    def test_lq_system_has_no_higher_terms(self):
        sys = random_system(5, with_extras=False)
        exp = expand(sys, 3)
        for k in (3, 4):
            assert np.abs(exp.cost[k].coeffs).max() <= 1e-12
        for kp in exp.feedback:
            for k in (2, 3):
                assert np.abs(kp[k].coeffs).max() <= 1e-12

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_degree_consistency(self, seed):
        sys = random_system(seed)
        d = 3
        exp = expand(sys, d)
        scalar, grads = residual_series(sys, exp, d + 1)
        scale = 1 + max(np.abs(t.coeffs).max() for t in exp.cost.terms.values())
        for k in range(2, d + 2):
            assert np.abs(scalar.part(k)).max() <= 1e-9 * scale
        for g in grads:
            for k in range(1, d + 1):
                assert np.abs(g.part(k)).max() <= 1e-9 * scale

    def test_pointwise_residual_order(self):
        sys = random_system(1)
        exp = expand(sys, 3)
        rng = np.random.default_rng(9)
        for _ in range(5):
            v = rng.normal(size=sys.n)
            v /= np.linalg.norm(v)
            r1 = abs(hjb_residual(sys, exp, 1e-2 * v)[0])
            r2 = abs(hjb_residual(sys, exp, 5e-3 * v)[0])
            assert r1 / r2 >= 0.8 * 2**5

    def test_residual_at_origin(self):
        sys = random_system(2)
        exp = expand(sys, 2)
        s, g = hjb_residual(sys, exp, np.zeros(sys.n))
        assert s == 0.0
        assert not g.any()

    def test_cost_matches_riccati_block(self):
        sys = random_system(4)
        lqr = solve_are(sys)
        exp = expand(sys, 2, lqr)
        assert np.allclose(exp.cost[2].to_full(), lqr.P / 2)

    def test_resonant_operator(self):
        # closed-loop rates 1 and -2 make the degree-3 operator singular (1+1-2 = 0)
        sys = PolySystem(F=np.diag([1.0, -2.0]), G=np.eye(2), Q=np.eye(2), R=np.eye(2))
        fake = LqrData(P=np.zeros((2, 2)), K=np.zeros((2, 2)), mu=np.array([1.0, -2.0]), Psi=np.eye(2))
        partial = PolyExpansion(
            GradedPoly(2, {2: SymTensor.zeros(2, 2)}),
            tuple(GradedPoly(2, {1: SymTensor.zeros(2, 1)}) for _ in range(2)),
            1,
        )
        with pytest.raises(ResonantOperator):
            solve_cost_degree(sys, fake, partial, 2)

    def test_bad_degree(self):
        with pytest.raises(ValueError):
            expand(scalar_quadratic(), 0)

    def test_control_evaluation(self):
        exp = expand(scalar_quadratic(), 3)
        x = 0.3
        assert exp.control([x])[0] == pytest.approx(-x - x**2 - 0.5 * x**3)


def test_dynamics_and_lagrangian_evaluation():
    sys = random_system(6)
    rng = np.random.default_rng(0)
    z, u = rng.normal(size=3), rng.normal(size=2)
    w = np.concatenate([z, u])
    want = sys.F @ z + sys.G @ u
    for k, ts in sys.dynamics_terms.items():
        for i, t in enumerate(ts):
            want[i] += sum(t[idx] * np.prod(w[list(idx)]) for idx in itertools.product(range(5), repeat=k))
    assert np.allclose(sys.dynamics(z, u), want)
    assert sys.lagrangian(np.zeros(3), np.zeros(2)) == 0.0
