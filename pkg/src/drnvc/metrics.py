"""Quality and rate metrics: PSNR, bitrate error, Bjontegaard deltas."""

from __future__ import annotations

import numpy as np

from .errors import DataError, ShapeError


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """10*log10(1/MSE) on [0,1] frames; identical frames give +inf."""
    if a.shape != b.shape:
        raise ShapeError(f"psnr: frame shapes differ, {a.shape} vs {b.shape}")
    mse = float(np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2))
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(1.0 / mse))


def bitrate_error(mean_bpp: float, target_bpp: float) -> float:
    """|R_out - R_tar| / R_tar * 100 percent."""
    if target_bpp <= 0.0:
        raise DataError(f"target bpp must be positive, got {target_bpp}")
    return abs(mean_bpp - target_bpp) / target_bpp * 100.0


def _check_curve(curve, name):
    pts = [(float(r), float(p)) for r, p in curve]
    if len(pts) < 4:
        raise DataError(f"{name}: BD metrics need >= 4 RD points, got {len(pts)}")
    rates = [r for r, _ in pts]
    if any(b <= a for a, b in zip(rates, rates[1:])):
        raise DataError(f"{name}: rates must strictly increase, got {rates}")
    if any(r <= 0 for r in rates):
        raise DataError(f"{name}: rates must be positive")
    if not all(np.isfinite(p) for _, p in pts):
        raise DataError(f"{name}: PSNR values must be finite")
    return pts


def bd_metrics(curve_a, curve_b) -> tuple[float, float]:
    """Bjontegaard deltas of curve_b relative to curve_a.

    Returns (BD-Rate percent, BD-PSNR dB): average rate difference at equal
    quality and average quality difference at equal rate, from cubic
    polynomial fits in log10-rate.
    """
    a = _check_curve(curve_a, "curve_a")
    b = _check_curve(curve_b, "curve_b")
    lr_a = np.log10([r for r, _ in a])
    ps_a = np.array([p for _, p in a])
    lr_b = np.log10([r for r, _ in b])
    ps_b = np.array([p for _, p in b])

    # BD-PSNR: fit PSNR(log rate), integrate over the overlapping rate range
    lo = max(lr_a.min(), lr_b.min())
    hi = min(lr_a.max(), lr_b.max())
    if hi <= lo:
        raise DataError(
            f"no log-rate overlap: curve_a [{lr_a.min():.4f},{lr_a.max():.4f}] vs "
            f"curve_b [{lr_b.min():.4f},{lr_b.max():.4f}]")
    pa = np.polyint(np.polyfit(lr_a, ps_a, 3))
    pb = np.polyint(np.polyfit(lr_b, ps_b, 3))
    int_a = np.polyval(pa, hi) - np.polyval(pa, lo)
    int_b = np.polyval(pb, hi) - np.polyval(pb, lo)
    bd_psnr = (int_b - int_a) / (hi - lo)

    # BD-Rate: fit log rate(PSNR), integrate over the overlapping PSNR range
    lo = max(ps_a.min(), ps_b.min())
    hi = min(ps_a.max(), ps_b.max())
    if hi <= lo:
        raise DataError(
            f"no PSNR overlap: curve_a [{ps_a.min():.3f},{ps_a.max():.3f}] vs "
            f"curve_b [{ps_b.min():.3f},{ps_b.max():.3f}]")
    qa = np.polyint(np.polyfit(ps_a, lr_a, 3))
    qb = np.polyint(np.polyfit(ps_b, lr_b, 3))
    int_a = np.polyval(qa, hi) - np.polyval(qa, lo)
    int_b = np.polyval(qb, hi) - np.polyval(qb, lo)
    avg_log_diff = (int_b - int_a) / (hi - lo)
    bd_rate = (10.0 ** avg_log_diff - 1.0) * 100.0
    return float(bd_rate), float(bd_psnr)
