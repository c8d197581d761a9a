import numpy as np
import pytest

from mlfbpinn import autodiff as ad
from mlfbpinn.problems import (
    exact,
    exact_jet,
    helmholtz2d,
    laplace1d,
    laplace2d,
    make_problem,
    multiscale2d,
    residual,
    source,
)


class TestSource:
    def test_laplace2d_center(self):
        assert source(laplace2d(), np.array([0.5, 0.5])) == 16.0

    def test_multiscale_single_mode(self):
        p = multiscale2d(1, omegas=[2.0])
        np.testing.assert_allclose(source(p, np.array([0.25, 0.25])), 8 * np.pi**2, rtol=1e-14)
        assert abs(source(p, np.array([0.25, 0.25])) - 78.9568) < 1e-4

    def test_helmholtz_peak(self):
        assert source(helmholtz2d(8 * np.pi / 1.6, 0.1), np.array([0.5, 0.5])) == 1.0

    def test_laplace1d_constant(self, rng):
        np.testing.assert_array_equal(source(laplace1d(), rng.uniform(0, 1, (9, 1))), 8.0)

    def test_helmholtz_gaussian_width(self):
        p = helmholtz2d(10.0, 0.2)
        np.testing.assert_allclose(source(p, np.array([0.7, 0.5])), np.exp(-0.5), rtol=1e-15)


class TestExact:
    def test_laplace1d_midpoint(self):
        assert exact(laplace1d(), np.array([0.5])) == 1.0

    def test_laplace2d_center(self):
        assert exact(laplace2d(), np.array([0.5, 0.5])) == 1.0

    def test_multiscale_two_modes(self):
        p = multiscale2d(2, omegas=[2.0, 4.0])
        np.testing.assert_allclose(exact(p, np.array([0.25, 0.25])), 0.5, atol=1e-15)

    def test_helmholtz_unavailable(self):
        p = helmholtz2d(5.0, 0.1)
        assert exact(p, np.array([0.5, 0.5])) is None
        assert not p.has_exact

    def test_default_frequencies(self):
        assert multiscale2d(3).omegas == (2.0, 4.0, 8.0)


class TestResidual:
    def test_zero_function_laplace2d(self):
        x = np.array([[0.5, 0.5]])
        assert residual(laplace2d(), ad.Jet(np.zeros(1)), x)[0] == -16.0

    def test_zero_function_helmholtz(self):
        x = np.array([[0.5, 0.5]])
        assert residual(helmholtz2d(3.0, 0.1), ad.Jet(np.zeros(1)), x)[0] == -1.0

    @pytest.mark.parametrize("p", [laplace1d(), laplace2d(), multiscale2d(1), multiscale2d(2), multiscale2d(3)],
                             ids=["laplace1d", "laplace2d", "ms1", "ms2", "ms3"])
    def test_manufactured_residual_vanishes(self, p, rng):
        x = rng.uniform(0, 1, (1000, p.dim))
        r = residual(p, exact_jet(p, ad.seed_input(x)), x)
        assert np.max(np.abs(r)) < 1e-9

    def test_source_solution_consistency(self, rng):
        for p in (laplace1d(), laplace2d()):
            x = rng.uniform(0, 1, (200, p.dim))
            u = exact_jet(p, ad.seed_input(x))
            np.testing.assert_allclose(-np.asarray(u.laplacian()), source(p, x), atol=1e-9)

    def test_helmholtz_sign_convention(self):
        """lap(u) - k^2 u - f by default; the switch flips the k^2 term."""
        x = np.array([[0.3, 0.6]])
        u = ad.Jet(np.array([2.0]), np.zeros((2, 1)), np.array([[1.0], [0.5]]))
        k = 3.0
        f = source(helmholtz2d(k, 0.2), x[0])
        minus = residual(helmholtz2d(k, 0.2), u, x)[0]
        plus = residual(helmholtz2d(k, 0.2, wave_sign=+1), u, x)[0]
        np.testing.assert_allclose(minus, 1.5 - k**2 * 2.0 - f, rtol=1e-15)
        np.testing.assert_allclose(plus, 1.5 + k**2 * 2.0 - f, rtol=1e-15)


class TestValidation:
    def test_multiscale_needs_positive_frequencies(self):
        with pytest.raises(ValueError):
            multiscale2d(2, omegas=[2.0, -1.0])

    def test_helmholtz_needs_positive_parameters(self):
        with pytest.raises(ValueError):
            helmholtz2d(0.0, 0.1)
        with pytest.raises(ValueError):
            helmholtz2d(1.0, 0.0)

    def test_unknown_problem(self):
        with pytest.raises(ValueError):
            make_problem("heat1d")

    def test_default_sharpness(self):
        # constraint sharpness 0.2 (Laplace), 1/omega_n (multi-scale), 1/k (Helmholtz)
        assert laplace2d().constraint.factors[0][2] == 0.2
        assert multiscale2d(3).constraint.factors[0][2] == 1 / 8
        assert helmholtz2d(4.0, 0.1).constraint.factors[0][2] == 0.25
