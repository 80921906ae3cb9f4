import io

import numpy as np
import pytest

from multiscale_gjn.errors import NegativeStart, NoConvergence
from multiscale_gjn.skorokhod import (
    LemmaScenario, PathGrid, check_lemma_paths, complementarity, kappa, lemma_sup_norms,
    lipschitz_constants, lipschitz_gaps, reflect_1d, reflect_batch, reflect_md,
    write_reflection_csv)


def regulator_1d(v):
    """Loop version of ``max(0, max_{m<=n} -v_m)``."""
    out, run = np.empty_like(v), 0.0
    for n, a in enumerate(v):
        run = max(run, -a)
        out[n] = run
    return out


def random_walk(rng, n, d, drift=-0.2):
    x = np.cumsum(rng.normal(drift, 1.0, size=(n, d)), axis=0)
    return np.vstack([np.abs(rng.normal(size=(1, d))), x])


class TestOneDimensional:
    def test_examples(self):
        res = reflect_1d([0.0, -1.0, 0.0])
        assert res.z.values[:, 0].tolist() == [0.0, 0.0, 1.0]
        assert res.y.values[:, 0].tolist() == [0.0, 1.0, 1.0]
        res = reflect_1d([2.0, 1.0, -1.0, 3.0])
        assert res.y.values[:, 0].tolist() == [0.0, 0.0, 1.0, 1.0]
        assert res.z.values[:, 0].tolist() == [2.0, 1.0, 0.0, 4.0]

    def test_nonnegative_path_untouched(self):
        res = reflect_1d([1.0, 2.0, 0.5])
        assert np.all(res.y.values == 0)

    def test_loop_oracle(self, rng):
        for _ in range(20):
            v = random_walk(rng, 500, 1)[:, 0]
            res = reflect_1d(v)
            assert np.array_equal(res.y.values[:, 0], regulator_1d(v))
            assert res.complementarity_residual == 0.0

    def test_negative_start(self):
        with pytest.raises(NegativeStart):
            reflect_1d([-0.5, 1.0])

    def test_kappa(self):
        assert kappa([[1.0, -0.5], [-0.25, 2.0]]) == 2.25


class TestMultiDimensional:
    def test_identity_is_coordinatewise(self, rng):
        x = random_walk(rng, 300, 3)
        res = reflect_md(x, np.eye(3))
        for j in range(3):
            assert np.allclose(res.y.values[:, j], regulator_1d(x[:, j]))

    def test_triangular_oracle(self, rng):
        R = np.array([[1.0, 0.0], [-0.6, 1.0]])
        for _ in range(10):
            x = random_walk(rng, 400, 2)
            y1 = regulator_1d(x[:, 0])
            y2 = regulator_1d(x[:, 1] - 0.6 * y1)
            res = reflect_md(x, R)
            assert np.abs(res.y.values - np.column_stack([y1, y2])).max() < 1e-9

    def test_defining_properties(self, rng):
        R = np.array([[1.0, -0.5, -0.2], [-0.4, 1.0, -0.3], [-0.1, -0.6, 1.5]])
        for _ in range(10):
            x = random_walk(rng, 400, 3)
            res = reflect_md(x, R)
            z, y = res.z.values, res.y.values
            assert z.min() >= -1e-9
            assert np.all(np.diff(y, axis=0) >= -1e-12) and np.all(y[0] >= 0)
            assert np.allclose(z, x + y @ R.T)
            assert res.complementarity_residual < 1e-7

    def test_batch_matches_single(self, rng):
        R = np.array([[1.0, -0.5], [-0.5, 1.0]])
        xs = np.stack([random_walk(rng, 100, 2) for _ in range(4)])
        z, y, _ = reflect_batch(xs, R)
        for i in range(4):
            one = reflect_md(xs[i], R)
            assert np.allclose(one.z.values, z[i]) and np.allclose(one.y.values, y[i])

    def test_no_convergence(self, rng):
        R = np.array([[1.0, -0.99], [-0.99, 1.0]])
        x = random_walk(rng, 200, 2, drift=-1.0)
        with pytest.raises(NoConvergence):
            reflect_md(x, R, max_iter=3)

    def test_complementarity_helper(self):
        z = np.array([[1.0], [0.0], [2.0]])
        y = np.array([[0.0], [1.0], [3.0]])
        assert complementarity(z, y) == 4.0

    def test_grid_refinement(self):
        # reflection of the Brownian-like path t -> sin(6t) - t on finer grids converges
        errs = []
        exact_y = None
        fine = np.linspace(0, 2, 2**16 + 1)
        f = lambda t: np.column_stack([np.sin(6 * t) - t + 0.1, np.cos(5 * t) - 1.2 * t])
        R = np.array([[1.0, -0.3], [-0.4, 1.0]])
        exact_y = reflect_md(PathGrid(fine, f(fine)), R).y
        for n in (2**6, 2**8, 2**10):
            t = np.linspace(0, 2, n + 1)
            y = reflect_md(PathGrid(t, f(t)), R).y.values
            errs.append(np.abs(y - exact_y.values[:: 2**16 // n]).max())
        assert errs[0] > errs[1] > errs[2]


class TestPathGrid:
    def test_validation(self):
        with pytest.raises(ValueError):
            PathGrid([0.0, 0.0], [1.0, 2.0])
        with pytest.raises(ValueError):
            PathGrid([0.0, 1.0], [1.0, np.nan])
        with pytest.raises(ValueError):
            PathGrid([0.0, 1.0], [1.0])

    def test_reading(self):
        p = PathGrid([0.0, 1.0, 2.0], [[1.0, 5.0], [2.0, 6.0], [3.0, 7.0]])
        assert p.d == 2 and len(p) == 3
        assert p.coord(2).tolist() == [5.0, 6.0, 7.0]
        assert p.at(1.5).tolist() == [2.0, 6.0]
        assert p.at(1.0).tolist() == [2.0, 6.0]


class TestLemmas:
    def test_negative_drift_family(self):
        s = LemmaScenario("negative", u=lambda t, r: r * np.sin(t), v=lambda t, r: 0 * t,
                          scalar=lambda r: 1.0)
        sups = lemma_sup_norms(s)
        assert check_lemma_paths(s)
        assert sups[-1] <= 1e-12

    def test_negative_with_shrinking_noise(self):
        s = LemmaScenario("negative", u=lambda t, r: 0.5 + np.sqrt(r) * np.cos(9 * t),
                          v=lambda t, r: 0.5 * np.ones_like(t), scalar=lambda r: 0.0)
        sups = lemma_sup_norms(s)
        assert check_lemma_paths(s) and sups[-1] < sups[0]

    def test_positive_family(self):
        s = LemmaScenario("positive", u=lambda t, r: r * np.sin(20 * t) - r * t,
                          v=lambda t, r: 0 * t, scalar=lambda r: 1 / r, c=0.75)
        assert check_lemma_paths(s)
        assert lemma_sup_norms(s)[-1] == 0.0

    def test_detects_failure(self):
        s = LemmaScenario("negative", u=lambda t, r: np.ones_like(t), v=lambda t, r: 0 * t,
                          scalar=lambda r: -1.0)
        assert not check_lemma_paths(s)


class TestLipschitz:
    def test_one_dimensional_constants(self):
        assert lipschitz_constants([[1.0]]) == (2.0, 1.0)

    def test_kappa_bound_counterexample(self):
        # in one dimension kappa(R) = 1 but the z-gap is twice the input gap
        eps = 1e-3
        dx, dz, dy = lipschitz_gaps([0.0, -1.0, 0.0], [0.0, -1.0 + eps, -eps], [[1.0]])
        assert dx == pytest.approx(eps)
        assert dz == pytest.approx(2 * eps)
        assert dz > kappa([[1.0]]) * dx

    def test_corrected_constants_hold(self, rng):
        R = np.array([[1.0, -0.5], [-0.5, 1.0]])
        c_phi, c_psi = lipschitz_constants(R)
        assert c_psi == pytest.approx(2.0) and c_phi == pytest.approx(4.0)
        for _ in range(200):
            x = random_walk(rng, 60, 2)
            x2 = x + rng.normal(scale=0.3, size=x.shape)
            x2[0] = np.abs(x2[0])
            dx, dz, dy = lipschitz_gaps(x, x2, R)
            assert dy <= c_psi * dx + 1e-9
            assert dz <= c_phi * dx + 1e-9

    def test_csv_dump(self):
        res = reflect_md(np.array([[0.0, 1.0], [-1.0, 0.5]]), np.eye(2))
        fh = io.StringIO()
        write_reflection_csv(res, fh)
        lines = fh.getvalue().splitlines()
        assert lines[0] == "t,z_1,z_2,y_1,y_2"
        assert lines[2] == "1.0,0.0,0.5,1.0,0.0"
