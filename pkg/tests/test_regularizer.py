import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import dense_matrix, random_flow
from src.core.grid import FlowField
from src.core.regularizer import (
    HuberParams,
    RegularizerWeights,
    adaptive_weights,
    diff_xy,
    diff_xy_adjoint,
    diff_yx,
    diff_yx_adjoint,
    diff_yx_same_pixel,
    diff_yx_same_pixel_adjoint,
    huber_deriv,
    huber_value,
    hvd_energy,
    hvd_energy_and_gradient,
    hvd_gradient,
    regularizer_energy_and_gradient,
    second_diff_xx,
    second_diff_yy,
    tv_energy,
    tv_gradient,
)
from src.core.errors import GridError

H = W = 8


def _g(g, i, j):
    """g(i, j) with the replicate boundary used by the operators."""
    return g[min(j, g.shape[0] - 1), min(i, g.shape[1] - 1)]


def _dx(g, i, j):
    return 0.0 if i >= g.shape[1] - 1 else g[j, i + 1] - g[j, i]


def _dy(g, i, j):
    return 0.0 if j >= g.shape[0] - 1 else g[j + 1, i] - g[j, i]


def loop_xy(g):
    out = np.zeros_like(g)
    for j in range(g.shape[0]):
        for i in range(g.shape[1]):
            out[j, i] = _dx(g, i, j) - _dy(g, min(i + 1, g.shape[1] - 1), j)
    return out


def loop_yx(g):
    out = np.zeros_like(g)
    for j in range(g.shape[0]):
        for i in range(g.shape[1]):
            out[j, i] = _dy(g, i, j) - _dx(g, i, min(j + 1, g.shape[0] - 1))
    return out


def loop_xx(g):
    out = np.zeros_like(g)
    for j in range(g.shape[0]):
        for i in range(g.shape[1]):
            out[j, i] = 0.0 if j >= g.shape[0] - 1 else _dx(g, i, j + 1) - _dx(g, i, j)
    return out


def test_huber_branches_meet_at_epsilon():
    eps = 0.01
    assert huber_value(eps, eps) == pytest.approx(eps / 2)
    assert huber_value(-eps, eps) == pytest.approx(eps / 2)
    assert huber_value(0.0, eps) == 0.0
    assert huber_value(1.0, eps) == pytest.approx(1.0 - eps / 2)
    assert huber_deriv(0.005, eps) == pytest.approx(0.5)
    assert huber_deriv(-3.0, eps) == -1.0


def test_huber_params_validation():
    with pytest.raises(ValueError):
        HuberParams(epsilon=0.0)


@pytest.mark.parametrize("op, oracle", [(diff_xy, loop_xy), (diff_yx, loop_yx), (second_diff_xx, loop_xx)])
def test_operators_match_loop_oracle(op, oracle):
    D = dense_matrix(op, H, W)
    Dref = dense_matrix(oracle, H, W)
    np.testing.assert_allclose(D, Dref, atol=1e-12)


@pytest.mark.parametrize(
    "op, adj",
    [(diff_xy, diff_xy_adjoint), (diff_yx, diff_yx_adjoint), (diff_yx_same_pixel, diff_yx_same_pixel_adjoint)],
)
def test_diagonal_adjoints_are_transposes(op, adj):
    np.testing.assert_allclose(dense_matrix(adj, H, W), dense_matrix(op, H, W).T, atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(arrays(np.int64, (H, W), elements=st.integers(-1000, 1000)))
def test_mixed_second_differences_commute(g):
    g = g.astype(np.float64)
    np.testing.assert_array_equal(second_diff_xx(g)[:-1, :-1], second_diff_yy(g)[:-1, :-1])


def test_mixed_second_differences_commute_on_floats(rng):
    for _ in range(100):
        g = rng.standard_normal((H, W))
        np.testing.assert_allclose(second_diff_xx(g), second_diff_yy(g), atol=1e-12)


def test_constant_flow_has_zero_energy_and_gradient():
    v = FlowField.constant(H, W, 0.7, -1.2)
    assert hvd_energy(v, HuberParams()) == 0.0
    g = hvd_gradient(v, HuberParams())
    assert not g.vx.any() and not g.vy.any()


def test_single_step_edge_energy():
    # vertical edge of height 1 in vx: only x and xy terms see it
    vx = np.zeros((H, W))
    vx[:, W // 2:] = 1.0
    v = FlowField(vx, np.zeros((H, W)))
    eps = 0.01
    # per row: x term 1, xy term 1, yx term 1 at column W//2 - 1 (row shift does not cross the edge)
    expected = 3 * H * (1.0 - eps / 2)
    assert hvd_energy(v, HuberParams(eps)) == pytest.approx(expected)


def test_energy_invariant_under_half_turn(rng):
    vx = np.zeros((12, 12))
    vy = np.zeros((12, 12))
    vx[2:-2, 2:-2] = rng.standard_normal((8, 8))
    vy[2:-2, 2:-2] = rng.standard_normal((8, 8))
    a = hvd_energy(FlowField(vx, vy), HuberParams())
    b = hvd_energy(FlowField(np.rot90(vx, 2), np.rot90(vy, 2)), HuberParams())
    assert a == pytest.approx(b, rel=1e-12)


def _fd_gradient(energy, vx, vy, h=1e-6):
    gx, gy = np.zeros_like(vx), np.zeros_like(vy)
    for grid, out in ((vx, gx), (vy, gy)):
        for idx in np.ndindex(grid.shape):
            old = grid[idx]
            grid[idx] = old + h
            ep = energy(vx, vy)
            grid[idx] = old - h
            em = energy(vx, vy)
            grid[idx] = old
            out[idx] = (ep - em) / (2 * h)
    return gx, gy


@pytest.mark.parametrize("kind", ["hvd", "tv_isotropic", "tv_anisotropic", "tv_weighted"])
def test_gradient_matches_finite_differences(rng, kind):
    eps = 0.01
    w = adaptive_weights(rng.random((H, W))).values((H, W))
    for _ in range(5):
        v = random_flow(rng, H, W)
        vx, vy = v.vx.copy(), v.vy.copy()
        _, gx, gy = regularizer_energy_and_gradient(kind, vx, vy, eps, w)
        fx, fy = _fd_gradient(lambda a, b: regularizer_energy_and_gradient(kind, a, b, eps, w)[0], vx, vy)
        num = np.linalg.norm(np.concatenate([(gx - fx).ravel(), (gy - fy).ravel()]))
        den = np.linalg.norm(np.concatenate([fx.ravel(), fy.ravel()]))
        assert num / den <= 1e-4


def test_same_pixel_convention_differs_from_shifted(rng):
    v = random_flow(rng, H, W)
    e_shift, _, _ = hvd_energy_and_gradient(v.vx, v.vy, 0.01, np.ones((H, W)), "shifted")
    e_same, _, _ = hvd_energy_and_gradient(v.vx, v.vy, 0.01, np.ones((H, W)), "same_pixel")
    assert e_shift != e_same
    with pytest.raises(ValueError):
        hvd_energy_and_gradient(v.vx, v.vy, 0.01, np.ones((H, W)), "other")


def test_tv_variants(rng):
    v = random_flow(rng, H, W)
    p = HuberParams()
    iso = tv_energy(v, p, "isotropic")
    aniso = tv_energy(v, p, "anisotropic")
    # |a| + |b| >= sqrt(a^2 + b^2), up to the Huber offset
    assert aniso >= iso - 2 * H * W * p.epsilon
    uniform = tv_energy(v, p, "weighted_anisotropic")
    assert uniform == pytest.approx(aniso)
    g = tv_gradient(v, p, "isotropic")
    assert g.shape == v.shape
    with pytest.raises(ValueError):
        tv_energy(v, p, "bogus")


def test_weights_lower_energy(rng):
    v = random_flow(rng, H, W)
    w = RegularizerWeights(np.full((H, W), 0.5))
    assert hvd_energy(v, HuberParams(), w) == pytest.approx(0.5 * hvd_energy(v, HuberParams()))


def test_weights_validation():
    with pytest.raises(GridError):
        RegularizerWeights(np.zeros((2, 2)))
    with pytest.raises(GridError):
        RegularizerWeights(np.full((2, 2), 0.5)).values((3, 3))


def test_adaptive_weights_range(rng):
    flat = adaptive_weights(np.full((6, 6), 0.3))
    np.testing.assert_allclose(flat.w, 1.0)
    edge = np.zeros((6, 6))
    edge[:, 3:] = 1.0
    w = adaptive_weights(edge, alpha=10.0, beta=1.0).w
    assert w[0, 2] == pytest.approx(np.exp(-10.0))
    assert w.min() > 0 and w.max() <= 1.0


def test_second_difference_of_product_is_one():
    g = np.outer(np.arange(H, dtype=float), np.arange(W, dtype=float))  # g(i, j) = i * j
    np.testing.assert_array_equal(second_diff_xx(g)[:-1, :-1], 1.0)
    np.testing.assert_array_equal(second_diff_yy(g)[:-1, :-1], 1.0)
