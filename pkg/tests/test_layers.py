"""Layer forward oracles and finite-difference gradient checks."""

import numpy as np
import pytest

from drnvc import layers
from drnvc.errors import ShapeError
from drnvc.gradcheck import finite_diff_grad, grad_check, max_rel_error


def conv2d_loops(x, w, b, stride, pad):
    """Independent quadruple-nested-loop convolution reference."""
    n, c_in, h, wid = x.shape
    c_out, _, k, _ = w.shape
    out_h = (h + 2 * pad - k) // stride + 1
    out_w = (wid + 2 * pad - k) // stride + 1
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    y = np.zeros((n, c_out, out_h, out_w))
    for ni in range(n):
        for oi in range(c_out):
            for yi in range(out_h):
                for xi in range(out_w):
                    acc = 0.0
                    for ci in range(c_in):
                        for ki in range(k):
                            for kj in range(k):
                                acc += xp[ni, ci, yi * stride + ki, xi * stride + kj] * w[oi, ci, ki, kj]
                    y[ni, oi, yi, xi] = acc + b[oi]
    return y


def test_conv2d_identity_kernel(rng):
    x = rng.standard_normal((2, 3, 5, 5))
    w = np.zeros((3, 3, 1, 1))
    for c in range(3):
        w[c, c, 0, 0] = 1.0
    y = layers.conv2d(x, w, np.zeros(3), 1, 0)
    assert np.array_equal(y, x)


def test_conv2d_bias_only():
    x = np.zeros((1, 2, 4, 4))
    w = np.ones((1, 2, 3, 3))
    y = layers.conv2d(x, w, np.array([3.0]), 1, 1)
    assert np.all(y == 3.0)


def test_conv2d_matches_loop_reference(rng):
    x = rng.standard_normal((1, 2, 5, 5))
    w = rng.standard_normal((3, 2, 3, 3))
    b = rng.standard_normal(3)
    got = layers.conv2d(x, w, b, 1, 1)
    want = conv2d_loops(x, w, b, 1, 1)
    assert np.max(np.abs(got - want)) < 1e-12


@pytest.mark.parametrize("trial", range(50))
def test_conv2d_loop_oracle_random_shapes(hub, trial):
    rng = hub.stream(f"conv-oracle-{trial}")
    n = int(rng.integers(1, 3))
    c_in = int(rng.integers(1, 4))
    c_out = int(rng.integers(1, 4))
    k = int(rng.choice([1, 3, 5]))
    stride = int(rng.integers(1, 3))
    pad = int(rng.integers(0, 3))
    h = int(rng.integers(k, k + 6))
    w = int(rng.integers(k, k + 6))
    x = rng.standard_normal((n, c_in, h, w))
    wt = rng.standard_normal((c_out, c_in, k, k))
    b = rng.standard_normal(c_out)
    if (h + 2 * pad - k) // stride + 1 < 1 or (w + 2 * pad - k) // stride + 1 < 1:
        pytest.skip("degenerate output")
    got = layers.conv2d(x, wt, b, stride, pad)
    want = conv2d_loops(x, wt, b, stride, pad)
    assert np.max(np.abs(got - want)) < 1e-12


def test_conv2d_shape_mismatch_diagnostic(rng):
    x = rng.standard_normal((1, 3, 5, 5))
    w = rng.standard_normal((2, 2, 3, 3))
    with pytest.raises(ShapeError, match="channels"):
        layers.conv2d(x, w, np.zeros(2), 1, 1)
    with pytest.raises(ShapeError, match="odd"):
        layers.conv2d(rng.standard_normal((1, 2, 5, 5)),
                      rng.standard_normal((2, 2, 2, 2)), np.zeros(2), 1, 1)


def test_conv2d_backward_zero_cotangent(rng):
    x = rng.standard_normal((1, 2, 6, 6))
    w = rng.standard_normal((3, 2, 3, 3))
    gx, gw, gb = layers.conv2d_backward(x, w, np.zeros((1, 3, 6, 6)), 1, 1)
    assert not gx.any() and not gw.any() and not gb.any()


def test_conv2d_backward_bias_is_cotangent_sum(rng):
    x = rng.standard_normal((2, 2, 6, 6))
    w = rng.standard_normal((3, 2, 3, 3))
    g = rng.standard_normal((2, 3, 6, 6))
    _, _, gb = layers.conv2d_backward(x, w, g, 1, 1)
    assert np.allclose(gb, g.sum(axis=(0, 2, 3)), atol=1e-12)


def test_conv2d_backward_shape_mismatch(rng):
    x = rng.standard_normal((1, 2, 6, 6))
    w = rng.standard_normal((3, 2, 3, 3))
    with pytest.raises(ShapeError, match="grad_out"):
        layers.conv2d_backward(x, w, np.zeros((1, 3, 5, 5)), 1, 1)


def test_tconv2d_identity_1x1():
    x = np.arange(16.0).reshape(1, 1, 4, 4)
    w = np.ones((1, 1, 1, 1))
    y = layers.tconv2d(x, w, np.zeros(1), 1, 0)
    assert np.array_equal(y, x)


def test_tconv2d_stride1_equals_flipped_swapped_conv(rng):
    # stride-1 transposed conv == conv with spatially flipped kernels,
    # in/out channel axes swapped, full padding
    x = rng.standard_normal((2, 3, 6, 6))
    w = rng.standard_normal((3, 4, 3, 3))  # (c_in, c_out, k, k)
    b = rng.standard_normal(4)
    got = layers.tconv2d(x, w, b, 1, 0)
    w_conv = w[:, :, ::-1, ::-1].swapaxes(0, 1).copy()  # (c_out, c_in, k, k)
    want = layers.conv2d(x, w_conv, b, 1, 2)  # full padding k-1
    assert np.max(np.abs(got - want)) < 1e-12


def test_tconv2d_output_dims(rng):
    x = rng.standard_normal((1, 2, 8, 8))
    w = rng.standard_normal((2, 3, 4, 4))
    y = layers.tconv2d(x, w, np.zeros(3), 2, 1)
    assert y.shape == (1, 3, 16, 16)


def _scalar_loss_through(forward):
    """Wraps a tensor-valued forward into scalar sum for finite differences."""
    return lambda arr: float(forward(arr).sum())


@pytest.mark.parametrize("stride,pad", [(1, 0), (1, 1), (2, 1), (2, 0)])
def test_conv2d_gradients_vs_finite_differences(hub, stride, pad):
    rng = hub.stream(f"convgrad-{stride}-{pad}")
    x = rng.standard_normal((2, 2, 6, 6))
    w = rng.standard_normal((3, 2, 3, 3)) * 0.5
    b = rng.standard_normal(3) * 0.1
    g = rng.standard_normal(layers.conv2d(x, w, b, stride, pad).shape)

    gx, gw, gb = layers.conv2d_backward(x, w, g, stride, pad)
    err_x = max_rel_error(gx, finite_diff_grad(
        lambda a: float((layers.conv2d(a, w, b, stride, pad) * g).sum()), x))
    err_w = max_rel_error(gw, finite_diff_grad(
        lambda a: float((layers.conv2d(x, a, b, stride, pad) * g).sum()), w))
    err_b = max_rel_error(gb, finite_diff_grad(
        lambda a: float((layers.conv2d(x, w, a, stride, pad) * g).sum()), b))
    assert err_x < 1e-4 and err_w < 1e-4 and err_b < 1e-4


@pytest.mark.parametrize("stride,pad,k", [(1, 0, 3), (1, 1, 3), (2, 1, 4), (2, 0, 2)])
def test_tconv2d_gradients_vs_finite_differences(hub, stride, pad, k):
    rng = hub.stream(f"tconvgrad-{stride}-{pad}-{k}")
    x = rng.standard_normal((2, 2, 5, 5))
    w = rng.standard_normal((2, 3, k, k)) * 0.5
    b = rng.standard_normal(3) * 0.1
    g = rng.standard_normal(layers.tconv2d(x, w, b, stride, pad).shape)

    gx, gw, gb = layers.tconv2d_backward(x, w, g, stride, pad)
    err_x = max_rel_error(gx, finite_diff_grad(
        lambda a: float((layers.tconv2d(a, w, b, stride, pad) * g).sum()), x))
    err_w = max_rel_error(gw, finite_diff_grad(
        lambda a: float((layers.tconv2d(x, a, b, stride, pad) * g).sum()), w))
    err_b = max_rel_error(gb, finite_diff_grad(
        lambda a: float((layers.tconv2d(x, w, a, stride, pad) * g).sum()), b))
    assert err_x < 1e-4 and err_w < 1e-4 and err_b < 1e-4


def test_leaky_relu_values_and_backward():
    x = np.array([[[[2.0, -2.0], [0.0, -1.0]]]])
    y = layers.leaky_relu(x, 0.1)
    assert y[0, 0, 0, 0] == 2.0
    assert y[0, 0, 0, 1] == pytest.approx(-0.2)
    g = layers.leaky_relu_backward(x, np.ones_like(x), 0.1)
    assert g[0, 0, 1, 1] == pytest.approx(0.1)
    with pytest.raises(ShapeError):
        layers.leaky_relu(x, 1.5)


def test_grad_check_linear_map():
    err = grad_check(lambda a: float(3.0 * a.sum()),
                     lambda a: np.full_like(a, 3.0),
                     np.array([1.0, -2.0, 0.5]))
    assert err < 1e-10


@pytest.mark.parametrize("fn,bwd", [
    (layers.softplus, layers.softplus_backward),
    (layers.global_avg_pool, layers.global_avg_pool_backward),
])
def test_aux_layer_gradients(hub, fn, bwd):
    rng = hub.stream(f"aux-{fn.__name__}")
    x = rng.standard_normal((2, 3, 4, 4))
    g = rng.standard_normal(fn(x).shape)
    analytic = bwd(x, g)
    numeric = finite_diff_grad(lambda a: float((fn(a) * g).sum()), x)
    assert max_rel_error(analytic, numeric) < 1e-4


def test_forward_determinism(rng):
    x = rng.standard_normal((2, 3, 8, 8))
    w = rng.standard_normal((4, 3, 3, 3))
    b = rng.standard_normal(4)
    y1 = layers.conv2d(x, w, b, 2, 1)
    y2 = layers.conv2d(x.copy(), w.copy(), b.copy(), 2, 1)
    assert y1.tobytes() == y2.tobytes()
