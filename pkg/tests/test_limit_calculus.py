import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from multiscale_gjn.errors import NotMMatrix, SingularBlock
from multiscale_gjn.limit_calculus import (
    conventional_srbm, covariance_gamma, eliminate, gamma_matrix, is_m_matrix,
    limit_descriptor, limits_report, sigma_theorem1, sigma_uGu, two_station_example,
    u_vector, variance_identity_residuals, w_from_R, w_matrix, descriptor_from)
from multiscale_gjn.network_model import (
    DistributionSpec, NetworkSpec, ScaleRegime, random_network, single_station,
    solve_traffic, tandem)


def w_by_value_iteration(P, iters=5000):
    """Hit j before exit or any of j+1..J, by iterating the first-step equations."""
    J = P.shape[0]
    w = np.zeros((J, J))
    for j in range(J):
        h = np.zeros(J)
        for _ in range(iters):
            cont = np.where(np.arange(J) < j, h, 0.0)
            h = P[:, j] + P @ cont
        w[:, j] = h
    return w


def gamma_nested_loops(P, alpha, lam, ce2, cs2):
    J = len(alpha)
    G = np.zeros((J, J))
    d = np.eye(J)
    for i in range(J):
        for j in range(J):
            s = alpha[i] * ce2[i] * d[i, j]
            for l in range(J):
                s += lam[l] * (P[l, i] * d[i, j] - P[l, i] * P[l, j])
                s += lam[l] * cs2[l] * (d[l, i] - P[l, i]) * (d[l, j] - P[l, j])
            G[i, j] = s
    return G


class TestWMatrix:
    def test_tandem(self):
        w = w_matrix(tandem().P)
        assert w[0, 1] == pytest.approx(1.0)
        assert w[0, 0] == 0 and w[1, 1] == 0

    def test_no_routing_is_zero(self):
        assert np.all(w_matrix(np.zeros((3, 3))) == 0)

    def test_matches_value_iteration(self, random_specs):
        for spec in random_specs:
            assert np.abs(w_matrix(spec.P) - w_by_value_iteration(spec.P)).max() < 1e-9

    def test_probabilities(self, random_specs):
        for spec in random_specs:
            w = w_matrix(spec.P)
            assert w.min() >= -1e-14 and w.max() <= 1 + 1e-12

    def test_from_R_agrees_on_upper_triangle(self, random_specs):
        for spec in random_specs:
            a = np.triu(w_matrix(spec.P))
            b = w_from_R(spec.R)
            assert np.abs(a - b).max() < 1e-10
            assert np.all(np.tril(b, -1) == 0)

    def test_u_vector(self):
        w = np.array([[0.1, 0.4, 0.2], [0.0, 0.3, 0.5], [0.0, 0.0, 0.6]])
        assert np.array_equal(u_vector(w, 3), [0.2, 0.5, 1.0])
        assert np.array_equal(u_vector(w, 1), [1.0, 0.0, 0.0])


class TestElimination:
    def test_two_station(self):
        R = np.array([[1.0, -0.5], [-0.5, 1.0]])
        el = eliminate(R, 2)
        assert np.allclose(el.E, [[1, 0], [0.5, 1]])
        assert np.allclose(el.G, [[1, -0.5], [0, 0.75]])
        assert 1 - el.G[1, 1] == pytest.approx(w_from_R(R)[1, 1])

    def test_first_pivot_is_identity(self):
        R = np.array([[1.0, -0.3], [-0.2, 1.0]])
        el = eliminate(R, 1)
        assert np.array_equal(el.E, np.eye(2)) and np.array_equal(el.G, R)

    def test_ER_equals_G(self, random_specs):
        for spec in random_specs:
            for k in range(1, spec.J + 1):
                el = eliminate(spec.R, k)
                assert np.abs(el.E @ spec.R - el.G).max() < 1e-12
                assert np.all(el.G[k - 1:, :k - 1] == 0)
                assert is_m_matrix(el.trailing())

    def test_diagonal_relation_to_w(self, random_specs):
        for spec in random_specs:
            w = w_matrix(spec.P)
            for k in range(1, spec.J + 1):
                G = eliminate(spec.R, k).G
                assert G[k - 1, k - 1] == pytest.approx(1 - w[k - 1, k - 1], abs=1e-12)

    def test_singular_block(self):
        R = np.array([[0.0, 1.0], [1.0, 1.0]])
        with pytest.raises(SingularBlock):
            eliminate(R, 2)

    def test_bad_pivot(self):
        with pytest.raises(ValueError):
            eliminate(np.eye(2), 3)


class TestMMatrix:
    def test_examples(self):
        assert is_m_matrix(np.array([[1.0, -0.5], [-0.5, 1.0]]))
        assert not is_m_matrix(np.array([[1.0, 0.5], [-0.5, 1.0]]))
        assert not is_m_matrix(np.array([[1.0, -2.0], [-2.0, 1.0]]))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 100_000), st.integers(1, 7))
    def test_network_R(self, seed, J):
        spec = random_network(np.random.default_rng(seed), J)
        assert is_m_matrix(spec.R)
        assert np.all(np.linalg.inv(spec.R) >= -1e-12)


class TestGamma:
    def test_tandem_poisson(self):
        assert np.allclose(covariance_gamma(tandem()), [[2, -1], [-1, 2]])

    def test_single_station(self):
        assert np.allclose(covariance_gamma(single_station()), [[2.0]])
        det = single_station(arrival=DistributionSpec("deterministic"),
                             service=DistributionSpec("deterministic"))
        assert np.allclose(covariance_gamma(det), [[0.0]])

    def test_nested_loop_oracle(self, random_specs):
        for spec in random_specs:
            lam = solve_traffic(spec)
            a = gamma_matrix(spec.P, spec.alpha, lam, spec.ce2, spec.cs2)
            b = gamma_nested_loops(spec.P, spec.alpha, lam, spec.ce2, spec.cs2)
            assert np.abs(a - b).max() < 1e-11
            assert np.linalg.eigvalsh(a).min() > -1e-10

    def test_variance_identity(self, random_specs):
        for spec in random_specs:
            assert np.abs(variance_identity_residuals(spec)).max() < 1e-9

    def test_tandem_variances(self):
        spec = tandem()
        for j in (1, 2):
            assert sigma_theorem1(spec, j) == pytest.approx(2.0)
            assert sigma_uGu(spec, j) == pytest.approx(2.0)


class TestDescriptors:
    def test_tandem_matching(self):
        d = limit_descriptor(tandem(), "matching")
        assert [c.drift.tolist() for c in d.components] == [[-1.0], [-1.0]]
        assert [c.covariance[0, 0] for c in d.components] == pytest.approx([2.0, 2.0])
        assert [c.reflection[0, 0] for c in d.components] == pytest.approx([1.0, 1.0])
        assert d.components[1].initial_from([3.0, 4.0]).tolist() == [4.0]

    def test_two_station_lowest(self):
        R, Gam = two_station_example()
        reg = ScaleRegime.singletons([1.0, 2.0])
        d = descriptor_from(R, Gam, reg, "lowest")
        first, second = d.components
        assert first.dim == 2 and first.report == 1
        assert np.allclose(first.drift, -R[:, 0])
        assert second.drift[0] == pytest.approx(-0.75)
        assert second.reflection[0, 0] == pytest.approx(0.75)
        assert second.initial_from([1.0, 2.0]).tolist() == [0.0]
        # variance of q21 Z1 + Z2 is u' Gamma u
        u = np.array([0.5, 1.0])
        assert second.covariance[0, 0] == pytest.approx(u @ Gam @ u)
        assert second.covariance[0, 0] == pytest.approx(1.64)

    def test_lowest_last_component_matches_matching(self, random_specs):
        for spec in random_specs:
            J = spec.J
            reg = ScaleRegime.singletons(np.arange(1, J + 1, dtype=float))
            m = limit_descriptor(spec, "matching", reg).components[-1]
            lo = limit_descriptor(spec, "lowest", reg).components[-1]
            assert np.allclose(m.drift, lo.drift) and np.allclose(m.covariance, lo.covariance)

    def test_single_block_is_conventional(self):
        spec = random_network(np.random.default_rng(3), 4)
        b = np.array([1.0, 2.0, 0.5, 1.5])
        reg = ScaleRegime.single_block(4, 1.0, b)
        comp = limit_descriptor(spec, "block-matching", reg).components[0]
        drift, cov, refl = conventional_srbm(spec.R, covariance_gamma(spec), b)
        assert np.allclose(comp.drift, drift) and np.allclose(comp.covariance, cov)
        assert np.allclose(comp.reflection, refl)

    def test_singleton_regime_names(self):
        spec = NetworkSpec.build(np.zeros((3, 3)), [1, 1, 1],
                                 ScaleRegime(((1, 2), (3, 3)), (1.0, 2.0), ((1, 1), (1,))))
        with pytest.raises(ValueError, match="block-matching"):
            limit_descriptor(spec, "matching")
        assert len(limit_descriptor(spec, "block-lowest").components) == 2

    def test_not_m_matrix_rejected(self):
        R = np.array([[1.0, 0.5], [-0.5, 1.0]])
        with pytest.raises(NotMMatrix):
            descriptor_from(R, np.eye(2), ScaleRegime.singletons([1, 2]), "matching")

    def test_report_keys(self):
        rep = limits_report(tandem())
        for key in ("lambda", "w", "Gamma", "R", "sigma2_theorem", "sigma2_quadratic",
                    "variance_identity_residuals", "descriptors"):
            assert key in rep
        assert set(rep["descriptors"]) == {"matching", "lowest", "block-matching",
                                           "block-lowest"}
