"""PSNR, bitrate error, BD metrics, PGM I/O, synthetic generator."""

import numpy as np
import pytest

from drnvc.errors import DataError, ShapeError
from drnvc.frames import (load_sequence, read_pgm, save_sequence, to_u8,
                          to_unit, write_pgm)
from drnvc.metrics import bd_metrics, bitrate_error, psnr
from drnvc.synth import PROFILES, gen_sequence, gen_synthetic
from drnvc.rng import RngHub


def test_psnr_identical_is_inf(rng):
    a = rng.uniform(0, 1, (16, 16))
    assert psnr(a, a.copy()) == float("inf")
    assert str(psnr(a, a.copy())) == "inf"


def test_psnr_uniform_one_255th():
    a = np.zeros((8, 8))
    b = np.full((8, 8), 1.0 / 255.0)
    assert psnr(a, b) == pytest.approx(20 * np.log10(255.0), abs=1e-3)
    assert psnr(a, b) == pytest.approx(48.1308, abs=1e-3)


def test_psnr_symmetric_and_checked(rng):
    a = rng.uniform(0, 1, (8, 8))
    b = rng.uniform(0, 1, (8, 8))
    assert psnr(a, b) == psnr(b, a)
    with pytest.raises(ShapeError):
        psnr(a, rng.uniform(0, 1, (8, 9)))


def test_bitrate_error_values():
    assert bitrate_error(0.1, 0.1) == 0.0
    assert bitrate_error(0.102, 0.100) == pytest.approx(2.0)
    assert bitrate_error(0.098, 0.100) == pytest.approx(2.0)
    with pytest.raises(DataError):
        bitrate_error(0.1, 0.0)


def _curve():
    rates = np.array([0.1, 0.2, 0.4, 0.8])
    psnrs = np.array([30.0, 33.0, 36.0, 39.0])
    return list(zip(rates, psnrs))


def test_bd_identical_curves_zero():
    bd_rate, bd_psnr = bd_metrics(_curve(), _curve())
    assert bd_rate == pytest.approx(0.0, abs=1e-9)
    assert bd_psnr == pytest.approx(0.0, abs=1e-12)


def test_bd_rate_multiplicative_shift():
    shifted = [(r * 0.9, p) for r, p in _curve()]
    bd_rate, _ = bd_metrics(_curve(), shifted)
    assert bd_rate == pytest.approx(-10.0, abs=0.1)


def test_bd_psnr_vertical_shift():
    shifted = [(r, p + 0.5) for r, p in _curve()]
    _, bd_psnr = bd_metrics(_curve(), shifted)
    assert bd_psnr == pytest.approx(0.5, abs=0.01)


def test_bd_validation():
    with pytest.raises(DataError, match=">= 4"):
        bd_metrics(_curve()[:3], _curve())
    decreasing = [(0.4, 30.0), (0.3, 31.0), (0.5, 32.0), (0.6, 33.0)]
    with pytest.raises(DataError, match="strictly increase"):
        bd_metrics(decreasing, _curve())
    apart = [(r, p + 100.0) for r, p in _curve()]
    with pytest.raises(DataError, match="overlap"):
        bd_metrics(_curve(), apart)


def test_pgm_roundtrip(tmp_path, rng):
    img = (rng.uniform(0, 255, (12, 20))).astype(np.uint8)
    path = tmp_path / "f.pgm"
    write_pgm(str(path), img)
    back = read_pgm(str(path))
    assert np.array_equal(back, img)
    assert to_u8(to_unit(img)).tolist() == img.tolist()


def test_pgm_rejects_bad_headers(tmp_path):
    p = tmp_path / "bad.pgm"
    p.write_bytes(b"P6\n2 2\n255\n....")
    with pytest.raises(DataError, match="P5"):
        read_pgm(str(p))
    p.write_bytes(b"P5\n2 2\n255\n..")
    with pytest.raises(DataError, match="truncated"):
        read_pgm(str(p))


def test_sequence_io_roundtrip(tmp_path, rng):
    frames = [rng.uniform(0, 1, (8, 8)) for _ in range(3)]
    save_sequence(str(tmp_path / "s"), frames)
    back = load_sequence(str(tmp_path / "s"))
    assert len(back) == 3
    for a, b in zip(frames, back):
        assert np.array_equal(to_u8(a), to_u8(b))


def test_gen_synthetic_seed_determinism(tmp_path):
    d1 = tmp_path / "a"
    d2 = tmp_path / "b"
    gen_synthetic(7, 2, 4, (32, 32), "mixed", str(d1))
    gen_synthetic(7, 2, 4, (32, 32), "mixed", str(d2))
    for sub in ("seq000", "seq001"):
        for f in sorted((d1 / sub).iterdir()):
            assert f.read_bytes() == (d2 / sub / f.name).read_bytes()
    d3 = tmp_path / "c"
    gen_synthetic(8, 1, 2, (32, 32), "mixed", str(d3))
    assert (d3 / "seq000" / "frame0000.pgm").read_bytes() != \
           (d1 / "seq000" / "frame0000.pgm").read_bytes()


def test_static_profile_frames_identical():
    frames = gen_sequence(RngHub(3), 0, 5, (32, 32), PROFILES["static"])
    for f in frames[1:]:
        assert np.array_equal(f, frames[0])


def test_pan_profile_is_circular_shift():
    frames = gen_sequence(RngHub(4), 0, 4, (32, 32), PROFILES["pan"])
    for t in range(3):
        assert np.array_equal(frames[t + 1], np.roll(frames[t], 1, axis=1))


def test_gen_synthetic_validation(tmp_path):
    with pytest.raises(DataError, match="divisible"):
        gen_synthetic(0, 1, 1, (30, 32), "static", str(tmp_path / "x"))
    with pytest.raises(DataError, match="profile"):
        gen_synthetic(0, 1, 1, (32, 32), "warp9", str(tmp_path / "x"))
