import itertools
import math
import warnings
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from batchregret.errors import DegenerateEvidenceError, DomainError, UnsupportedClassError
from batchregret.logmath import log_sum_exp
from batchregret.predictors import (
    AddBeta,
    AlphaNML,
    Mixture,
    add_beta_predict,
    alpha_nml_predict,
    dirichlet_quadrature,
    mixture_predict,
)
from batchregret.source import BatchSetup, CountStat, ParamGrid, Prior, enumerate_counts, log_likelihood


def _seq(counts):
    zeros, ones = counts
    return [0] * zeros + [1] * ones


class TestMixture:
    def test_single_point_prior(self):
        w = Prior.point(ParamGrid.binary([0.35]), 0)
        for test in enumerate_counts(3, 2):
            assert mixture_predict(w, CountStat.of(2, 1), test) == pytest.approx(log_likelihood(0.35, test), abs=1e-15)

    def test_no_training_is_prior_marginal(self):
        g = ParamGrid.binary([0.2, 0.6])
        w = Prior.from_weights(g, [0.25, 0.75])
        want = math.log(0.25 * 0.2 * 0.8 + 0.75 * 0.6 * 0.4)
        assert mixture_predict(w, CountStat.empty(), CountStat.of(1, 1)) == pytest.approx(want, abs=1e-15)

    def test_laplace_quadrature_one_step(self):
        w = dirichlet_quadrature(1.0, 64)
        for x in ([0], [1]):
            for y in ([0], [1]):
                got = mixture_predict(w, CountStat.from_sequence(x), CountStat.from_sequence(y))
                assert got == pytest.approx(add_beta_predict(1.0, CountStat.from_sequence(x), y), abs=1e-8)

    def test_degenerate_evidence(self):
        w = Prior.uniform(ParamGrid.binary([0.0, 1.0]))
        with pytest.raises(DegenerateEvidenceError):
            mixture_predict(w, CountStat.of(1, 1), CountStat.of(0, 1))


class TestAddBeta:
    def test_first_symbol_kt(self):
        assert add_beta_predict(0.5, CountStat.of(0, 0), [1]) == pytest.approx(math.log(0.5), abs=1e-15)

    def test_after_two_ones(self):
        assert add_beta_predict(0.5, CountStat.of(0, 2), [1]) == pytest.approx(math.log(5 / 6), abs=1e-15)

    def test_laplace_product(self):
        assert add_beta_predict(1.0, CountStat.of(0, 0), [1, 0]) == pytest.approx(math.log(1 / 6), abs=1e-15)

    def test_ternary_rejected(self):
        with pytest.raises(UnsupportedClassError):
            add_beta_predict(0.5, CountStat.of(1, 1, 0), [0])
        with pytest.raises(UnsupportedClassError):
            AddBeta(0.5, BatchSetup(1, 1, 3))

    def test_nonpositive_beta(self):
        with pytest.raises(DomainError):
            add_beta_predict(0.0, CountStat.of(0, 0), [1])

    def test_outside_certified_range_warns(self):
        with pytest.warns(UserWarning):
            p = AddBeta(2.0, BatchSetup(1, 1))
        assert not p.certified
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            assert AddBeta(0.75, BatchSetup(1, 1)).certified

    @pytest.mark.parametrize("beta", [0.5, 0.75, 1.0])
    @pytest.mark.parametrize("ell", [1, 2, 3, 4, 5])
    def test_exchangeable_bitwise(self, beta, ell):
        training = CountStat.of(2, 3)
        by_count = {}
        for y in itertools.product((0, 1), repeat=ell):
            v = add_beta_predict(beta, training, y)
            key = sum(y)
            assert by_count.setdefault(key, v) == v

    def test_table_matches_sequential(self):
        setup = BatchSetup(2, 3)
        pred = AddBeta(0.5, setup)
        for x in enumerate_counts(setup.t, 2):
            for y in enumerate_counts(setup.ell, 2):
                assert pred.log_prob(x, y) == pytest.approx(add_beta_predict(0.5, x, _seq(y.counts)), abs=1e-12)


class TestAlphaNML:
    grid = ParamGrid.binary([0.2, 0.8])

    def test_order_one_is_mixture(self):
        w = Prior.from_weights(self.grid, [0.3, 0.7])
        for x in enumerate_counts(2, 2):
            for y in enumerate_counts(2, 2):
                assert alpha_nml_predict(w, 1.0, x, y) == pytest.approx(mixture_predict(w, x, y), abs=1e-10)

    @pytest.mark.parametrize("alpha", [1.0, 2.0, 7.5])
    def test_single_point_prior(self, alpha):
        w = Prior.point(ParamGrid.binary([0.4]), 0)
        for y in enumerate_counts(3, 2):
            assert alpha_nml_predict(w, alpha, CountStat.of(1, 1), y) == pytest.approx(log_likelihood(0.4, y), abs=1e-13)

    def test_two_point_order_two(self):
        # exact rationals: posterior after one observed 1, then the squared power mean
        p = {Fraction(1, 5): Fraction(1, 2), Fraction(4, 5): Fraction(1, 2)}
        post = {th: w * th for th, w in p.items()}
        z = sum(post.values())
        post = {th: v / z for th, v in post.items()}
        s1 = sum(v * th ** 2 for th, v in post.items())
        s0 = sum(v * (1 - th) ** 2 for th, v in post.items())
        r1, r0 = math.sqrt(s1), math.sqrt(s0)
        want = math.log(r1 / (r0 + r1))
        got = alpha_nml_predict(Prior.uniform(self.grid), 2.0, CountStat.of(0, 1), CountStat.of(0, 1))
        assert got == pytest.approx(want, abs=1e-14)

    def test_alpha_below_one(self):
        with pytest.raises(DomainError):
            alpha_nml_predict(Prior.uniform(self.grid), 0.9, CountStat.of(0, 1), CountStat.of(0, 1))
        with pytest.raises(DomainError):
            AlphaNML(Prior.uniform(self.grid), 0.5, BatchSetup(1, 1))

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(0.05, 1.0), min_size=3, max_size=3), st.integers(0, 3), st.integers(1, 3))
    def test_continuity_at_one(self, raw, n, ell):
        w = Prior.from_weights(ParamGrid.binary([0.1, 0.45, 0.8]), raw)
        for x in enumerate_counts(n * ell, 2):
            for y in enumerate_counts(ell, 2):
                gap = abs(alpha_nml_predict(w, 1 + 1e-7, x, y) - mixture_predict(w, x, y))
                assert gap <= 1e-5


class TestNormalisation:
    @pytest.mark.parametrize("n,ell", [(0, 1), (1, 3), (3, 2), (6, 6)])
    def test_all_variants(self, n, ell):
        setup = BatchSetup(n, ell)
        w = Prior.from_weights(ParamGrid.binary([0.0, 0.3, 0.55, 1.0]), [1, 2, 3, 4])
        for pred in (Mixture(w, setup), AddBeta(0.5, setup), AddBeta(1.0, setup),
                     AlphaNML(w, 2.0, setup), AlphaNML(w, 16.0, setup)):
            assert pred.normalization_error() <= 1e-10, pred.describe()

    def test_ternary(self):
        setup = BatchSetup(2, 2, 3)
        pts = np.array([[0.2, 0.3, 0.5], [0.6, 0.2, 0.2], [1 / 3, 1 / 3, 1 / 3]])
        w = Prior.uniform(ParamGrid(pts))
        for pred in (Mixture(w, setup), AlphaNML(w, 3.0, setup)):
            assert pred.normalization_error() <= 1e-10

    def test_positive_mass_with_interior_support(self):
        setup = BatchSetup(2, 3)
        pred = Mixture(Prior.uniform(ParamGrid.binary([0.0, 0.5, 1.0])), setup)
        assert np.all(np.isfinite(pred.log_table))


def test_table_is_read_only():
    pred = AddBeta(0.5, BatchSetup(1, 2))
    with pytest.raises(ValueError):
        pred.log_table[0, 0] = 0.0


def test_log_prob_rejects_foreign_counts():
    pred = AddBeta(0.5, BatchSetup(1, 2))
    with pytest.raises(DomainError):
        pred.log_prob(CountStat.of(3, 3), CountStat.of(1, 1))


class TestQuadrature:
    def test_legendre_case(self):
        w = dirichlet_quadrature(1.0, 16)
        x, wt = np.polynomial.legendre.leggauss(16)
        assert w.grid.points[:, 1] == pytest.approx((x + 1) / 2, abs=1e-14)
        assert w.weights == pytest.approx(wt / 2, abs=1e-14)
        assert w.weights.sum() == pytest.approx(1.0, abs=1e-14)

    @pytest.mark.parametrize("beta", [0.5, 0.75, 1.0, 2.5])
    def test_symmetric_mean(self, beta):
        w = dirichlet_quadrature(beta, 20)
        assert float(w.weights @ w.grid.points[:, 1]) == pytest.approx(0.5, abs=1e-12)

    def test_arcsine_second_moment(self):
        # Beta(1/2, 1/2): E[theta(1-theta)] = 1/2 - (1/2)(3/2)/(1*2) = 1/8
        w = dirichlet_quadrature(0.5, 32)
        th = w.grid.points[:, 1]
        assert float(w.weights @ (th * (1 - th))) == pytest.approx(1 / 8, abs=1e-10)

    def test_exact_polynomial_degree(self):
        # Beta(b, b) moment E[theta^k] = prod_{i<k} (b + i) / (2b + i)
        b, g = 0.75, 10
        w = dirichlet_quadrature(b, g)
        th = w.grid.points[:, 1]
        for k in range(2 * g):
            want = math.prod((b + i) / (2 * b + i) for i in range(k))
            assert float(w.weights @ th ** k) == pytest.approx(want, rel=1e-11)

    def test_domain(self):
        with pytest.raises(DomainError):
            dirichlet_quadrature(0.0, 16)
        with pytest.raises(DomainError):
            dirichlet_quadrature(1.0, 4)


def test_mixture_add_beta_identity_spot():
    w = dirichlet_quadrature(0.5, 64)
    x, y = CountStat.of(3, 5), CountStat.of(2, 2)
    got = mixture_predict(w, x, y)
    assert got == pytest.approx(add_beta_predict(0.5, x, _seq(y.counts)), abs=1e-8)
    total = log_sum_exp([mixture_predict(w, x, c) + math.log(math.comb(4, c.counts[1]))
                         for c in enumerate_counts(4, 2)])
    assert total == pytest.approx(0.0, abs=1e-12)
