import math

import mpmath as mp
import numpy as np
import pytest

from warptransfer.specfun import (
    DEFAULT_QUADRATURE,
    DomainError,
    QuadratureSpec,
    digamma,
    log_beta,
    log_weighted_inc_beta,
    log_weighted_inc_beta_many,
    reg_inc_beta,
)

EULER_GAMMA = 0.57721566490153286


def simpson_integral(f, lo, hi, panels=2**18):
    """Brute-force composite Simpson rule; panels must be even."""
    grid = np.linspace(lo, hi, panels + 1)
    values = f(grid)
    return (hi - lo) / panels / 3.0 * (
        values[0] + values[-1] + 4.0 * values[1:-1:2].sum() + 2.0 * values[2:-1:2].sum()
    )


def simpson_reg_inc_beta(x, a, b):
    norm = math.exp(log_beta(a, b))

    def density(u):
        return u ** (a - 1.0) * (1.0 - u) ** (b - 1.0) / norm

    return simpson_integral(density, 1e-12, x)


class TestLogBeta:
    def test_known_values(self):
        assert log_beta(1.0, 1.0) == pytest.approx(0.0, abs=1e-14)
        assert log_beta(2.0, 2.0) == pytest.approx(math.log(1.0 / 6.0), abs=1e-12)
        assert log_beta(0.5, 0.5) == pytest.approx(math.log(math.pi), abs=1e-12)

    @pytest.mark.parametrize("a,b", [(0.0, 1.0), (-1.0, 2.0), (1.0, 0.0), (math.nan, 1.0), (math.inf, 1.0)])
    def test_domain_errors(self, a, b):
        with pytest.raises(DomainError):
            log_beta(a, b)


class TestDigamma:
    def test_known_values(self):
        assert digamma(1.0) == pytest.approx(-EULER_GAMMA, abs=1e-12)
        assert digamma(2.0) == pytest.approx(1.0 - EULER_GAMMA, abs=1e-12)
        assert digamma(0.5) == pytest.approx(-EULER_GAMMA - 2.0 * math.log(2.0), abs=1e-12)

    def test_accuracy_against_mpmath(self):
        mp.mp.dps = 30
        for x in np.geomspace(1e-3, 1e6, 25):
            expected = float(mp.digamma(mp.mpf(float(x))))
            assert abs(digamma(float(x)) - expected) <= 1e-12 * max(1.0, abs(expected))

    @pytest.mark.parametrize("x", [0.0, -1.0, math.nan, math.inf])
    def test_domain_errors(self, x):
        with pytest.raises(DomainError):
            digamma(x)


class TestRegIncBeta:
    @pytest.mark.parametrize("x", [0.0, 0.2, 0.5, 0.77, 1.0])
    def test_uniform_cdf(self, x):
        assert reg_inc_beta(x, 1.0, 1.0) == pytest.approx(x, abs=1e-14)

    @pytest.mark.parametrize("a", [0.3, 1.0, 2.5, 17.0])
    def test_symmetric_midpoint(self, a):
        assert reg_inc_beta(0.5, a, a) == pytest.approx(0.5, abs=1e-12)

    def test_against_quadrature_oracle(self):
        assert reg_inc_beta(0.3, 2.0, 5.0) == pytest.approx(
            simpson_reg_inc_beta(0.3, 2.0, 5.0), abs=1e-10
        )

    def test_reflection_identity(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            x = float(rng.uniform(0.0, 1.0))
            a = float(np.exp(rng.normal(0.0, 1.0)))
            b = float(np.exp(rng.normal(0.0, 1.0)))
            assert reg_inc_beta(x, a, b) + reg_inc_beta(1.0 - x, b, a) == pytest.approx(
                1.0, abs=1e-10
            )

    def test_monotone_in_x(self):
        xs = np.linspace(0.0, 1.0, 33)
        values = [reg_inc_beta(float(x), 1.7, 0.4) for x in xs]
        assert values[0] == 0.0 and values[-1] == 1.0
        assert all(v2 >= v1 for v1, v2 in zip(values, values[1:]))

    @pytest.mark.parametrize("args", [(-0.1, 1, 1), (1.1, 1, 1), (0.5, 0, 1), (0.5, 1, -2)])
    def test_domain_errors(self, args):
        with pytest.raises(DomainError):
            reg_inc_beta(*args)


class TestLogWeightedIncBeta:
    def test_closed_forms_at_unit_shapes(self):
        for x in [0.05, 0.3, 0.5, 0.9, 0.999]:
            int_a, int_b = log_weighted_inc_beta(x, 1.0, 1.0)
            assert int_a == pytest.approx(x * math.log(x) - x, abs=1e-12)
            assert int_b == pytest.approx(-(1.0 - x) * math.log(1.0 - x) - x, abs=1e-12)

    def test_symmetry_at_full_interval(self):
        int_a, int_b = log_weighted_inc_beta(1.0, 2.0, 2.0)
        assert int_a == pytest.approx(int_b, abs=1e-12)

    def test_full_interval_matches_digamma(self):
        # d/da B(a,b) = B(a,b) (psi(a) - psi(a+b)) fixes the x = 1 values.
        for a, b in [(2.0, 2.0), (0.5, 3.0), (1.5, 0.3), (7.0, 0.7)]:
            int_a, int_b = log_weighted_inc_beta(1.0, a, b)
            assert int_a == pytest.approx(digamma(a) - digamma(a + b), abs=1e-10)
            assert int_b == pytest.approx(digamma(b) - digamma(a + b), abs=1e-10)

    def test_against_simpson_oracle(self):
        x, a, b = 0.4, 1.5, 3.0
        norm = math.exp(log_beta(a, b))

        def integrand_a(u):
            out = np.zeros_like(u)
            pos = u > 0
            out[pos] = np.log(u[pos]) * u[pos] ** (a - 1) * (1 - u[pos]) ** (b - 1) / norm
            return out

        def integrand_b(u):
            out = np.zeros_like(u)
            pos = u > 0
            out[pos] = np.log1p(-u[pos]) * u[pos] ** (a - 1) * (1 - u[pos]) ** (b - 1) / norm
            return out

        int_a, int_b = log_weighted_inc_beta(x, a, b)
        # The sqrt(u) log(u) endpoint needs a very fine mesh for Simpson.
        assert int_a == pytest.approx(simpson_integral(integrand_a, 0.0, x, panels=2**22), abs=1e-8)
        assert int_b == pytest.approx(simpson_integral(integrand_b, 0.0, x, panels=2**22), abs=1e-8)

    def test_zero_lower_limit(self):
        assert log_weighted_inc_beta(0.0, 0.7, 4.0) == (0.0, 0.0)

    def test_nonpositive_and_monotone_in_x(self):
        rng = np.random.default_rng(11)
        xs = np.linspace(0.0, 1.0, 21)
        for _ in range(10):
            a = float(np.exp(rng.normal(0.0, 0.8)))
            b = float(np.exp(rng.normal(0.0, 0.8)))
            int_a, int_b = log_weighted_inc_beta_many(xs, a, b)
            assert (int_a <= 1e-15).all() and (int_b <= 1e-15).all()
            assert (np.diff(int_a) <= 1e-12).all()
            assert (np.diff(int_b) <= 1e-12).all()

    def test_shape_derivative_identity_vs_finite_differences(self):
        # dI/da assembled from the weighted integral and digamma terms
        # must match central differences of the CDF itself.
        rng = np.random.default_rng(23)
        step = 1e-5
        for _ in range(40):
            x = float(rng.uniform(0.05, 0.95))
            a = float(np.exp(rng.normal(0.0, 0.6)))
            b = float(np.exp(rng.normal(0.0, 0.6)))
            int_a, int_b = log_weighted_inc_beta(x, a, b)
            cdf = reg_inc_beta(x, a, b)
            analytic_a = int_a - cdf * (digamma(a) - digamma(a + b))
            analytic_b = int_b - cdf * (digamma(b) - digamma(a + b))
            fd_a = (reg_inc_beta(x, a + step, b) - reg_inc_beta(x, a - step, b)) / (2 * step)
            fd_b = (reg_inc_beta(x, a, b + step) - reg_inc_beta(x, a, b - step)) / (2 * step)
            for analytic, fd in ((analytic_a, fd_a), (analytic_b, fd_b)):
                denom = max(abs(analytic), abs(fd))
                if denom > 1e-7:
                    assert abs(analytic - fd) / denom < 1e-4
                else:
                    assert abs(analytic - fd) < 1e-10

    def test_batch_matches_scalar(self):
        rng = np.random.default_rng(5)
        xs = rng.uniform(0.0, 1.0, 16)
        aa = np.exp(rng.normal(0.0, 0.7, 16))
        bb = np.exp(rng.normal(0.0, 0.7, 16))
        batch_a, batch_b = log_weighted_inc_beta_many(xs, aa, bb)
        for i in range(16):
            one_a, one_b = log_weighted_inc_beta(float(xs[i]), float(aa[i]), float(bb[i]))
            assert batch_a[i] == pytest.approx(one_a, abs=1e-12)
            assert batch_b[i] == pytest.approx(one_b, abs=1e-12)

    @pytest.mark.parametrize("args", [(-0.1, 1, 1), (2.0, 1, 1), (0.5, -1, 1), (0.5, 1, 0)])
    def test_domain_errors(self, args):
        with pytest.raises(DomainError):
            log_weighted_inc_beta(*args)


class TestQuadratureSpec:
    def test_defaults(self):
        assert DEFAULT_QUADRATURE.max_subdivisions == 200
        assert DEFAULT_QUADRATURE.abs_tol == 1e-10
        assert DEFAULT_QUADRATURE.rel_tol == 1e-8

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"max_subdivisions": 0},
            {"abs_tol": 0.0},
            {"rel_tol": -1e-8},
            {"abs_tol": math.nan},
        ],
    )
    def test_validation(self, kwargs):
        with pytest.raises(ValueError):
            QuadratureSpec(**kwargs)

    def test_custom_spec_is_honored(self):
        loose = QuadratureSpec(max_subdivisions=6, abs_tol=1e-6, rel_tol=1e-5)
        int_a, _ = log_weighted_inc_beta(0.6, 1.2, 2.3, spec=loose)
        tight_a, _ = log_weighted_inc_beta(0.6, 1.2, 2.3)
        assert int_a == pytest.approx(tight_a, abs=1e-5)
