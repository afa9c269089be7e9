"""Adam contract, named-stream RNG reproducibility, checkpoint format."""

import numpy as np
import pytest

from drnvc.checkpoint import (ESTIMATOR_MAGIC, MODEL_MAGIC, load_into,
                              load_raw, save_params)
from drnvc.errors import BitstreamError, NumericError
from drnvc.optim import Adam
from drnvc.rng import RngHub
from drnvc.tensor import Parameter


def test_adam_zero_gradient_leaves_values(rng):
    p = Parameter("p", rng.standard_normal((3, 3)))
    before = p.value.copy()
    opt = Adam([p], lr=0.01)
    opt.step()
    assert np.array_equal(p.value, before)


def test_adam_first_step_is_lr_times_sign():
    # bias-corrected first step with constant gradient g: update = -lr*sign(g)
    for g in (0.3, -2.0):
        p = Parameter("p", np.array([1.0]))
        p.grad[:] = g
        opt = Adam([p], lr=0.001)
        opt.step()
        assert p.value[0] == pytest.approx(1.0 - 0.001 * np.sign(g), abs=1e-6)


def test_adam_step_counter_and_determinism(rng):
    def run():
        hub = RngHub(5)
        r = hub.stream("w")
        p = Parameter("p", r.standard_normal((4, 4)))
        opt = Adam([p], lr=0.01)
        for _ in range(10):
            p.grad[:] = r.standard_normal((4, 4))
            opt.step()
        return opt.t, p.value.tobytes()

    t1, b1 = run()
    t2, b2 = run()
    assert t1 == t2 == 10
    assert b1 == b2


def test_adam_aborts_on_nonfinite_gradient():
    p = Parameter("enc0.weight", np.array([1.0]))
    p.grad[:] = np.nan
    with pytest.raises(NumericError, match="enc0.weight"):
        Adam([p]).step()


def test_named_streams_are_order_insensitive():
    a = RngHub(42)
    x1 = a.stream("one").standard_normal(4)
    y1 = a.stream("two").standard_normal(4)
    b = RngHub(42)
    y2 = b.stream("two").standard_normal(4)
    x2 = b.stream("one").standard_normal(4)
    assert np.array_equal(x1, x2)
    assert np.array_equal(y1, y2)


def test_same_seed_reproduces_stream():
    assert np.array_equal(RngHub(9).stream("s").standard_normal(8),
                          RngHub(9).stream("s").standard_normal(8))
    assert not np.array_equal(RngHub(9).stream("s").standard_normal(8),
                              RngHub(10).stream("s").standard_normal(8))


def test_checkpoint_roundtrip_and_byte_identity(tmp_path, rng):
    params = [Parameter("a.weight", rng.standard_normal((2, 3))),
              Parameter("a.bias", rng.standard_normal(3))]
    p1 = tmp_path / "m1.drnw"
    p2 = tmp_path / "m2.drnw"
    save_params(str(p1), params)
    save_params(str(p2), params)
    assert p1.read_bytes() == p2.read_bytes()
    assert p1.read_bytes()[:4] == MODEL_MAGIC

    fresh = [Parameter("a.weight", np.zeros((2, 3))),
             Parameter("a.bias", np.zeros(3))]
    load_into(str(p1), fresh)
    for a, b in zip(params, fresh):
        assert np.array_equal(a.value, b.value)


def test_checkpoint_bad_magic_and_shape(tmp_path, rng):
    params = [Parameter("w", rng.standard_normal(4))]
    path = tmp_path / "m.drnw"
    save_params(str(path), params)
    with pytest.raises(BitstreamError, match="magic"):
        load_raw(str(path), ESTIMATOR_MAGIC)
    wrong = [Parameter("w", np.zeros((2, 2)))]
    with pytest.raises(BitstreamError, match="shape"):
        load_into(str(path), wrong)
    missing = [Parameter("nope", np.zeros(4))]
    with pytest.raises(BitstreamError, match="missing"):
        load_into(str(path), missing)


def test_checkpoint_trailing_bytes_rejected(tmp_path, rng):
    path = tmp_path / "m.drnw"
    save_params(str(path), [Parameter("w", rng.standard_normal(4))])
    path.write_bytes(path.read_bytes() + b"x")
    with pytest.raises(BitstreamError, match="trailing"):
        load_raw(str(path))
