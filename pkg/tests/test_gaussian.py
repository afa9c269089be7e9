"""Discretized Gaussian/logistic bins and CDF quantization."""

import numpy as np
import pytest
from scipy.special import ndtr

from drnvc.errors import DataError, ShapeError
from drnvc.gaussian import (CDF_TOTAL, build_cdf, gaussian_bin_prob,
                            gaussian_bin_prob_backward,
                            gaussian_residual_cdfs, logistic_bin_prob,
                            logistic_bin_prob_backward, logistic_cdfs,
                            nll_bits, quantize_pmf)
from drnvc.gradcheck import finite_diff_grad, max_rel_error


def test_central_bin_standard_normal():
    # Phi(0.5) - Phi(-0.5)
    p = gaussian_bin_prob(0.0, 0.0, 1.0)
    assert p == pytest.approx(0.382925, abs=1e-6)


def test_bins_sum_to_one(rng):
    mu = rng.uniform(-2, 2)
    sigma = rng.uniform(0.1, 5.0)
    support = np.arange(-200, 201)
    total = gaussian_bin_prob(support, mu, sigma).sum()
    assert total == pytest.approx(1.0, abs=1e-9)


def test_bin_symmetry():
    for d in (1, 2, 5):
        pa = gaussian_bin_prob(3.0 + d, 3.0, 1.7)
        pb = gaussian_bin_prob(3.0 - d, 3.0, 1.7)
        assert pa == pytest.approx(pb, rel=1e-12)


def test_gaussian_bin_gradients(hub):
    rng = hub.stream("gbin")
    v = rng.standard_normal((8,)) * 2
    mu = rng.standard_normal((8,))
    sigma = rng.uniform(0.3, 3.0, (8,))
    g = rng.standard_normal((8,))
    gv, gmu, gsigma = gaussian_bin_prob_backward(v, mu, sigma, g)
    nv = finite_diff_grad(lambda a: float((gaussian_bin_prob(a, mu, sigma) * g).sum()), v)
    nmu = finite_diff_grad(lambda a: float((gaussian_bin_prob(v, a, sigma) * g).sum()), mu)
    nsig = finite_diff_grad(lambda a: float((gaussian_bin_prob(v, mu, a) * g).sum()), sigma)
    assert max_rel_error(gv, nv) < 1e-4
    assert max_rel_error(gmu, nmu) < 1e-4
    assert max_rel_error(gsigma, nsig) < 1e-4


def test_logistic_bin_gradients(hub):
    rng = hub.stream("lbin")
    v = rng.integers(-3, 4, (8,)).astype(float)
    loc = rng.standard_normal((8,))
    scale = rng.uniform(0.3, 3.0, (8,))
    g = rng.standard_normal((8,))
    gv, gloc, gscale = logistic_bin_prob_backward(v, loc, scale, g)
    nl = finite_diff_grad(lambda a: float((logistic_bin_prob(v, a, scale) * g).sum()), loc)
    ns = finite_diff_grad(lambda a: float((logistic_bin_prob(v, loc, a) * g).sum()), scale)
    nv = finite_diff_grad(lambda a: float((logistic_bin_prob(a, loc, scale) * g).sum()), v)
    assert max_rel_error(gloc, nl) < 1e-4
    assert max_rel_error(gscale, ns) < 1e-4
    assert max_rel_error(gv, nv) < 1e-4


def test_nll_bits_rejects_zero_probability():
    with pytest.raises(DataError, match="zero bin probability"):
        nll_bits(np.array([0.5, 0.0]))
    out = nll_bits(np.array([0.5, 0.0]), floor=1e-30)
    assert np.isfinite(out).all()


def test_quantize_pmf_total_and_floor(rng):
    for _ in range(20):
        n = int(rng.integers(2, 300))
        raw = rng.uniform(0, 1, n)
        pmf = raw / raw.sum() * rng.uniform(0.5, 1.0)
        cdf = quantize_pmf(pmf)[0]
        assert cdf[0] == 0
        assert cdf[-1] == CDF_TOTAL
        widths = np.diff(cdf)
        assert (widths >= 1).all()


def test_build_cdf_contract():
    t = build_cdf(0.0, 1.0, -12, 12)
    assert t.cdf[-1] == CDF_TOTAL
    assert (np.diff(t.cdf) >= 1).all()
    assert t.num_symbols == 26  # 25 support symbols + escape
    with pytest.raises(ShapeError, match="8 sigma"):
        build_cdf(0.0, 2.0, -4, 4)


def test_build_cdf_minimum_scale_concentrates():
    t = build_cdf(0.0, 0.04, -2, 2)
    # central symbol (index 2) holds essentially all the mass
    width = t.cdf[3] - t.cdf[2]
    assert width >= 0.999 * CDF_TOTAL - t.num_symbols


def test_residual_cdfs_vectorized_match_scalar(rng):
    mu = rng.uniform(-3, 3, (5,))
    sigma = rng.uniform(0.2, 2.0, (5,))
    hw = 20
    rows = gaussian_residual_cdfs(mu, sigma, hw)
    assert rows.shape == (5, 2 * hw + 3)
    assert (rows[:, -1] == CDF_TOTAL).all()
    # row 0 equals a directly computed table over the same residual support
    frac = mu[0] - np.round(mu[0])
    pmf = gaussian_bin_prob(np.arange(-hw, hw + 1, dtype=float), frac, sigma[0])
    want = quantize_pmf(pmf)[0]
    assert np.array_equal(rows[0], want)


def test_logistic_cdfs_mass_sums_to_one():
    # coding support derived as loc +/- (24*scale + 1) keeps tail mass < 1e-9
    for loc, scale in [(0.0, 1.0), (2.3, 0.5), (-1.7, 3.0)]:
        hw = int(np.ceil(24 * scale)) + 1
        s_min, s_max = int(round(loc)) - hw, int(round(loc)) + hw
        support = np.arange(s_min, s_max + 1, dtype=float)
        mass = logistic_bin_prob(support, loc, scale).sum()
        assert mass == pytest.approx(1.0, abs=1e-9)
        row = logistic_cdfs(loc, scale, s_min, s_max)
        assert row[-1] == CDF_TOTAL
