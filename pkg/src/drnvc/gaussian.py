"""Discretized probability models for entropy coding, plus CDF quantization.

Latent symbols are modeled by a Gaussian with per-element mean/scale; the
hyper latent by a per-channel logistic. A bin probability is the CDF mass
over [v-0.5, v+0.5). For coding, bin probabilities are quantized to 16-bit
cumulative counts with an escape symbol carrying the out-of-support mass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .errors import DataError, ShapeError

SCALE_MIN = 0.04
SCALE_MAX = 64.0
CDF_PRECISION = 16
CDF_TOTAL = 1 << CDF_PRECISION

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def _phi(x):
    return np.exp(-0.5 * x * x) * _INV_SQRT_2PI


def gaussian_bin_prob(v, mu, sigma):
    """P(v - 0.5 <= Y < v + 0.5) for Y ~ N(mu, sigma^2).

    Evaluated in the lower tail via |v - mu| so the subtraction never
    cancels catastrophically.
    """
    d = np.abs(np.asarray(v, dtype=np.float64) - mu)
    upper = ndtr((0.5 - d) / sigma)
    lower = ndtr((-0.5 - d) / sigma)
    return upper - lower


def gaussian_bin_prob_backward(v, mu, sigma, grad_p):
    """Gradients of gaussian_bin_prob w.r.t. (v, mu, sigma)."""
    d = v - mu
    a = (0.5 - np.abs(d)) / sigma
    b = (-0.5 - np.abs(d)) / sigma
    pa, pb = _phi(a), _phi(b)
    sgn = np.sign(d)
    dp_dd = -sgn * (pa - pb) / sigma
    dp_dsigma = (-a * pa + b * pb) / sigma
    gv = grad_p * dp_dd
    gmu = -gv
    gsigma = grad_p * dp_dsigma
    return gv, gmu, gsigma


def logistic_bin_prob(v, loc, scale):
    """Bin mass under a logistic distribution (closed-form CDF)."""
    fa = _sigmoid((np.asarray(v, dtype=np.float64) + 0.5 - loc) / scale)
    fb = _sigmoid((v - 0.5 - loc) / scale)
    return fa - fb


def logistic_bin_prob_backward(v, loc, scale, grad_p):
    ua = (v + 0.5 - loc) / scale
    ub = (v - 0.5 - loc) / scale
    fa, fb = _sigmoid(ua), _sigmoid(ub)
    da = fa * (1.0 - fa)
    db = fb * (1.0 - fb)
    dp_dv = (da - db) / scale
    dp_dloc = -dp_dv
    dp_dscale = -(da * ua - db * ub) / scale
    return grad_p * dp_dv, grad_p * dp_dloc, grad_p * dp_dscale


def _sigmoid(x):
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def nll_bits(p: np.ndarray, floor: float | None = None) -> np.ndarray:
    """-log2 p per element. Without a floor, zero probability is an error."""
    if floor is None:
        if np.any(p <= 0.0):
            raise DataError("zero bin probability encountered (support misconfiguration)")
        return -np.log2(p)
    return -np.log2(np.maximum(p, floor))


def nll_bits_backward(p: np.ndarray, grad_bits: np.ndarray, floor: float = 0.0) -> np.ndarray:
    """d(-log2 p)/dp * grad; zero where the floor clamps."""
    g = -grad_bits / (np.maximum(p, floor) * np.log(2.0))
    if floor > 0.0:
        g = np.where(p > floor, g, 0.0)
    return g


@dataclass
class CdfTable:
    """Quantized cumulative counts over an integer support plus escape.

    cdf has len(support)+2 entries: cdf[0] = 0, cdf[-1] = 65536; symbol i
    occupies [cdf[i], cdf[i+1]). The last symbol slot is the escape.
    """

    s_min: int
    s_max: int
    cdf: np.ndarray

    @property
    def num_symbols(self) -> int:
        return len(self.cdf) - 1

    def symbol_index(self, v: int) -> int:
        """Index of integer value v, or the escape index if out of support."""
        if self.s_min <= v <= self.s_max:
            return int(v - self.s_min)
        return self.num_symbols - 1

    @property
    def escape_index(self) -> int:
        return self.num_symbols - 1


def quantize_pmf(pmf: np.ndarray) -> np.ndarray:
    """Quantize probability rows to cumulative counts summing to 2^16.

    pmf: (..., S) with row sums <= 1; an escape slot is appended carrying
    the residual mass. Every slot gets >= 1 count; the largest slot absorbs
    the remaining deficit, so totals are exact.
    """
    pmf = np.atleast_2d(np.asarray(pmf, dtype=np.float64))
    resid = np.clip(1.0 - pmf.sum(axis=-1, keepdims=True), 0.0, 1.0)
    full = np.concatenate([pmf, resid], axis=-1)
    n_slots = full.shape[-1]
    if n_slots + 1 >= CDF_TOTAL:
        raise ShapeError(f"support of {n_slots} symbols does not fit 16-bit counts")
    counts = np.floor(full * (CDF_TOTAL - n_slots)).astype(np.int64) + 1
    deficit = CDF_TOTAL - counts.sum(axis=-1)
    rows = np.arange(counts.shape[0])
    counts[rows, np.argmax(counts, axis=-1)] += deficit
    cdf = np.zeros((counts.shape[0], n_slots + 1), dtype=np.int64)
    np.cumsum(counts, axis=-1, out=cdf[:, 1:])
    return cdf


def build_cdf(mu: float, sigma: float, s_min: int, s_max: int) -> CdfTable:
    """CdfTable for one Gaussian over integer support [s_min, s_max].

    The support must cover mu +/- 8 sigma (after clamping sigma to the legal
    range); out-of-support mass goes to the escape symbol.
    """
    sigma = float(np.clip(sigma, SCALE_MIN, SCALE_MAX))
    if s_min > s_max:
        raise ShapeError(f"empty support [{s_min}, {s_max}]")
    if s_min > mu - 8.0 * sigma or s_max < mu + 8.0 * sigma:
        raise ShapeError(
            f"support [{s_min}, {s_max}] does not cover mu +/- 8 sigma = "
            f"[{mu - 8 * sigma:.3f}, {mu + 8 * sigma:.3f}]"
        )
    support = np.arange(s_min, s_max + 1, dtype=np.float64)
    pmf = gaussian_bin_prob(support, mu, sigma)
    cdf = quantize_pmf(pmf)[0]
    return CdfTable(s_min=int(s_min), s_max=int(s_max), cdf=cdf)


def gaussian_support_halfwidth(sigma_max: float) -> int:
    """Residual support half-width guaranteeing mu +/- 8 sigma coverage
    around the per-element rounded mean."""
    return int(np.ceil(8.0 * float(sigma_max))) + 1


def gaussian_residual_cdfs(mu: np.ndarray, sigma: np.ndarray, halfwidth: int) -> np.ndarray:
    """Per-element CDF rows for residuals r = v - round(mu), r in
    [-halfwidth, halfwidth], plus escape. Returns (E, 2*halfwidth+3) counts."""
    mu = mu.reshape(-1)
    sigma = sigma.reshape(-1)
    offs = np.round(mu)
    frac = mu - offs
    r = np.arange(-halfwidth, halfwidth + 1, dtype=np.float64)
    pmf = gaussian_bin_prob(r[None, :], frac[:, None], sigma[:, None])
    return quantize_pmf(pmf)


def logistic_cdfs(loc: float, scale: float, s_min: int, s_max: int) -> np.ndarray:
    """One CDF row for a logistic prior over [s_min, s_max] plus escape."""
    support = np.arange(s_min, s_max + 1, dtype=np.float64)
    pmf = logistic_bin_prob(support, loc, scale)
    return quantize_pmf(pmf)[0]
