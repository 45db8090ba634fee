import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from gsign.noise import (
    NoiseError,
    NoiseModel,
    density_at_zero,
    flom_inverse_moment,
    fractional_inverse_moment,
    make_rng,
    sample,
)

N = 10**6


def quad_inverse_moment(pdf, p_s, split=1.0):
    """2 * int_0^inf t^-p f(t) dt for a symmetric density, singular weight handled by QUADPACK."""
    near, _ = integrate.quad(pdf, 0.0, split, weight="alg", wvar=(-p_s, 0.0), limit=200)
    far, _ = integrate.quad(lambda t: t**-p_s * pdf(t), split, np.inf, limit=200)
    return 2.0 * (near + far)


class TestSamplers:
    def test_sas_gaussian_variance(self):
        # alpha = 2: exp(-gamma t^2) is N(0, 2 gamma)
        x = sample(NoiseModel("sas", alpha=2, gamma=0.1), N, make_rng(1))
        assert abs(x.var() / 0.2 - 1) <= 0.02

    def test_cauchy_median_and_iqr(self):
        x = sample(NoiseModel("cauchy", gamma=0.1), N, make_rng(2))
        q1, med, q3 = np.quantile(x, [0.25, 0.5, 0.75])
        assert abs(med) <= 0.002
        assert abs((q3 - q1) / 0.2 - 1) <= 0.02

    def test_laplace_variance(self):
        x = sample(NoiseModel("laplace", b=math.sqrt(2)), N, make_rng(3))
        assert abs(x.var() / 4.0 - 1) <= 0.02

    def test_laplace_location(self):
        x = sample(NoiseModel("laplace", mu=3.0, b=1.0), N, make_rng(3))
        assert abs(np.median(x) - 3.0) <= 0.01

    @pytest.mark.parametrize("gamma", [0.1, 1.0])
    def test_sas_alpha1_is_cauchy(self, gamma):
        x = sample(NoiseModel("sas", alpha=1, gamma=gamma), N, make_rng(4))
        qs = np.array([0.1, 0.25, 0.75, 0.9])
        expected = gamma * np.tan(np.pi * (qs - 0.5))
        np.testing.assert_allclose(np.quantile(x, qs), expected, rtol=0.02)

    def test_student_t_quantiles(self):
        x = sample(NoiseModel("student_t", nu=2), N, make_rng(5))
        qs = np.array([0.1, 0.25, 0.75, 0.9])
        np.testing.assert_allclose(np.quantile(x, qs), stats.t.ppf(qs, 2), rtol=0.02)

    def test_sas_heavy_tail_quantiles(self):
        m = NoiseModel("sas", alpha=1.5, gamma=1.0)
        x = sample(m, 200_000, make_rng(6))
        qs = np.array([0.1, 0.25, 0.75, 0.9])
        # scipy's S1 parametrization with beta=0 has the same scale gamma^(1/alpha)
        expected = stats.levy_stable.ppf(qs, 1.5, 0.0)
        np.testing.assert_allclose(np.quantile(x, qs), expected, rtol=0.03)

    @pytest.mark.parametrize(
        "model",
        [
            NoiseModel("sas", alpha=1.06, gamma=0.1),
            NoiseModel("cauchy", gamma=0.1),
            NoiseModel("student_t", nu=2),
            NoiseModel("laplace", b=math.sqrt(2)),
        ],
    )
    def test_symmetric(self, model):
        x = sample(model, N, make_rng(7))
        assert abs(np.mean(np.sign(x))) < 0.005
        assert np.all(np.isfinite(x)) and np.all(x != 0)

    def test_deterministic_streams(self):
        m = NoiseModel("cauchy", gamma=0.1)
        a = sample(m, (10, 5), make_rng(9, 2, 3))
        b = sample(m, (10, 5), make_rng(9, 2, 3))
        c = sample(m, (10, 5), make_rng(9, 2, 4))
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)
        assert a.shape == (10, 5)


class TestModel:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"kind": "sas", "alpha": 0.0, "gamma": 1.0},
            {"kind": "sas", "alpha": 2.5, "gamma": 1.0},
            {"kind": "sas", "alpha": 1.5},
            {"kind": "cauchy", "gamma": -1.0},
            {"kind": "student_t", "nu": 0.0},
            {"kind": "laplace", "b": float("inf")},
            {"kind": "laplace", "b": 1.0, "nu": 2.0},
            {"kind": "sas", "alpha": 1.5, "gamma": 1.0, "mu": 1.0},
            {"kind": "gaussian"},
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(NoiseError):
            NoiseModel(**kwargs)

    def test_aliases_and_round_trip(self):
        m = NoiseModel("Student-t", nu=3)
        assert m.kind == "student_t"
        assert NoiseModel.from_dict(m.to_dict()) == m

    def test_from_dict_unknown(self):
        with pytest.raises(NoiseError, match="unknown"):
            NoiseModel.from_dict({"kind": "laplace", "b": 1, "sigma": 2})

    def test_empty_sample(self):
        with pytest.raises(NoiseError):
            sample(NoiseModel("laplace", b=1), 0, make_rng(0))

    @pytest.mark.parametrize(
        "model, pdf",
        [
            (NoiseModel("cauchy", gamma=0.1), stats.cauchy(scale=0.1).pdf),
            (NoiseModel("laplace", b=2.0), stats.laplace(scale=2.0).pdf),
            (NoiseModel("student_t", nu=2), stats.t(2).pdf),
            (NoiseModel("sas", alpha=2, gamma=0.5), stats.norm(scale=1.0).pdf),
        ],
    )
    def test_density_at_zero(self, model, pdf):
        assert density_at_zero(model) == pytest.approx(pdf(0.0), rel=1e-12)


class TestInverseMoment:
    def test_constant_magnitude(self):
        assert fractional_inverse_moment(np.full(10, -2.0), 0.99) == pytest.approx(2.0**-0.99)

    @pytest.mark.parametrize(
        "model, pdf",
        [
            (NoiseModel("laplace", b=math.sqrt(2)), stats.laplace(scale=math.sqrt(2)).pdf),
            (NoiseModel("cauchy", gamma=0.1), stats.cauchy(scale=0.1).pdf),
            (NoiseModel("student_t", nu=2), stats.t(2).pdf),
        ],
    )
    def test_quadrature_oracle(self, model, pdf):
        expected = quad_inverse_moment(pdf, 0.99, split=model.scale)
        assert flom_inverse_moment(model) == pytest.approx(expected, rel=0.01)

    def test_closed_forms(self):
        # Laplace: Gamma(1-p) b^-p ; Cauchy: gamma^-p / cos(p pi / 2) ; Gaussian: via Gamma((1-p)/2)
        p = 0.99
        b = math.sqrt(2)
        assert flom_inverse_moment(NoiseModel("laplace", b=b)) == pytest.approx(
            math.gamma(1 - p) * b**-p, rel=0.01)
        assert flom_inverse_moment(NoiseModel("cauchy", gamma=0.1)) == pytest.approx(
            0.1**-p / math.cos(p * math.pi / 2), rel=0.01)
        sigma = math.sqrt(0.2)
        gauss = sigma**-p * 2 ** (-p / 2) * math.gamma((1 - p) / 2) / math.sqrt(math.pi)
        assert flom_inverse_moment(NoiseModel("sas", alpha=2, gamma=0.1)) == pytest.approx(gauss, rel=0.01)

    def test_decreasing_in_scale(self):
        vals = [flom_inverse_moment(NoiseModel("laplace", b=b), n_mc=200_000) for b in (0.5, 1, 2, 4)]
        assert all(a > b for a, b in zip(vals, vals[1:]))

    @settings(max_examples=20, deadline=None)
    @given(st.floats(0.05, 20.0))
    def test_scaling_law(self, c):
        # E|c w|^-p = c^-p E|w|^-p, exact for the same draws
        w = sample(NoiseModel("cauchy", gamma=1.0), 1000, make_rng(0))
        assert fractional_inverse_moment(c * w, 0.5) == pytest.approx(
            c**-0.5 * fractional_inverse_moment(w, 0.5), rel=1e-10)

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.5])
    def test_bad_order(self, p):
        with pytest.raises(ValueError):
            fractional_inverse_moment(np.ones(3), p)

    def test_correction_needs_cutoff(self):
        with pytest.raises(ValueError):
            fractional_inverse_moment(np.ones(3), 0.9, f0=0.5)

    def test_zero_draw_raises(self):
        with pytest.raises(FloatingPointError):
            fractional_inverse_moment(np.array([0.0, 1.0]), 0.9)
