import numpy as np
import pytest

from conftest import random_flow
from src.core.data_terms import (
    AugmentedUnknowns,
    DerivativeStack,
    build_gca,
    build_gdim,
    build_ofc,
    build_system,
    central_diff_x,
    central_diff_y,
    compute_derivatives,
    data_energy,
    data_gradient,
)
from src.core.errors import GridError
from src.core.grid import FlowField, ImagePair, warp_backward
from src.core.selection import MeasurementMask

H = W = 8


def random_stack(rng, kind="ofc", flow=None):
    f0 = rng.random((H, W))
    f1 = rng.random((H, W))
    return compute_derivatives(ImagePair(f0, f1), flow or FlowField.zeros(H, W), kind)


def dense_system(sys):
    """Explicit (rows x unknowns) matrix and rhs for the active rows."""
    R, B = sys.coeffs.shape[:2]
    n = H * W
    rows, rhs = [], []
    for r in range(R):
        for p in range(n):
            j, i = divmod(p, W)
            if not sys.active[j, i]:
                continue
            row = np.zeros(B * n)
            for b in range(B):
                row[b * n + p] = sys.coeffs[r, b, j, i]
            rows.append(row)
            rhs.append(sys.rhs[r, j, i])
    return np.array(rows), np.array(rhs)


def test_central_differences():
    g = np.tile(np.arange(5, dtype=float) ** 2, (3, 1))
    dx = central_diff_x(g)
    np.testing.assert_allclose(dx[0], [0.5, 2.0, 4.0, 6.0, 3.5])
    assert not central_diff_y(g).any()


def test_identical_frames_have_zero_temporal_derivative(rng):
    f = rng.random((H, W))
    stack = compute_derivatives(ImagePair(f, f), FlowField.zeros(H, W))
    assert not stack.It.any()
    assert not stack.has_second_order
    sys = build_ofc(stack)
    assert not sys.residual(np.zeros((2, H, W))).any()


def test_ofc_residual_structure(rng):
    stack = random_stack(rng)
    v = random_flow(rng, H, W)
    sys = build_ofc(stack)
    expected = stack.Ix * v.vx + stack.Iy * v.vy + stack.It
    np.testing.assert_allclose(sys.residual(v.to_array())[0], expected, atol=1e-12)


def test_linearization_shift(rng):
    base = random_flow(rng, H, W, scale=0.5)
    stack = random_stack(rng, flow=base)
    sys = build_ofc(stack)
    v = random_flow(rng, H, W)
    inc = v - base
    expected = (stack.Ix * inc.vx + stack.Iy * inc.vy + stack.It) * sys.active
    np.testing.assert_allclose(sys.residual(v.to_array())[0], expected, atol=1e-12)


@pytest.mark.parametrize("kind", ["ofc", "gca", "gdim"])
def test_systems_match_dense_oracle(rng, kind):
    stack = random_stack(rng, kind, flow=random_flow(rng, H, W, scale=0.8))
    mask = MeasurementMask(rng.random((H, W)) < 0.6)
    sys = build_system(kind, stack, mask)
    A, y = dense_system(sys)
    x = rng.standard_normal((sys.n_unknown_blocks, H, W))
    r = sys.residual(x)
    flat_r = np.concatenate([r[k][sys.active] for k in range(r.shape[0])])
    np.testing.assert_allclose(flat_r, A @ x.reshape(-1) - y, atol=1e-12)
    assert sys.n_rows == A.shape[0]

    rr = rng.standard_normal(r.shape)
    lhs = np.sum(sys.residual(x) * rr) + np.sum(sys.rhs * sys.active * rr)
    rhs = np.sum(x * sys.adjoint(rr))
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-10)


def test_energy_of_single_row_at_epsilon():
    eps = 0.01
    stack = DerivativeStack(
        Ix=np.ones((1, 1)), Iy=np.zeros((1, 1)), It=np.zeros((1, 1)), I=np.zeros((1, 1)),
        oob=np.zeros((1, 1), dtype=bool), flow=FlowField.zeros(1, 1),
    )
    sys = build_ofc(stack)
    assert data_energy(sys, FlowField.constant(1, 1, eps, 0.0), eps) == pytest.approx(eps / 2)


def test_masking_removes_exactly_one_row(rng):
    stack = random_stack(rng)
    eps = 0.01
    v = random_flow(rng, H, W)
    full = build_ofc(stack)
    sel = np.ones((H, W), dtype=bool)
    sel[3, 4] = False
    masked = build_ofc(stack, MeasurementMask(sel))
    r = full.residual(v.to_array())[0, 3, 4]
    huber = r * r / (2 * eps) if abs(r) <= eps else abs(r) - eps / 2
    assert data_energy(full, v, eps) - data_energy(masked, v, eps) == pytest.approx(huber, rel=1e-9)


def test_out_of_bounds_rows_are_dropped(rng):
    f = rng.random((H, W))
    stack = compute_derivatives(ImagePair(f, f), FlowField.constant(H, W, 2.0, 0.0))
    sys = build_ofc(stack)
    assert not sys.active[:, -2:].any()
    assert sys.active[:, :-2].all()


def test_gca_cancels_brightness_offset(rng):
    f0 = 0.8 * rng.random((H, W))
    pair = ImagePair(f0, f0 + 0.1)
    zero = np.zeros((2, H, W))
    gca = build_gca(compute_derivatives(pair, FlowField.zeros(H, W), "gca"))
    ofc = build_ofc(compute_derivatives(pair, FlowField.zeros(H, W), "ofc"))
    np.testing.assert_allclose(gca.residual(zero), 0.0, atol=1e-12)
    np.testing.assert_allclose(ofc.residual(zero), 0.1, atol=1e-12)


def test_gca_zero_residual_on_planar_shift():
    jj, ii = np.mgrid[0:12, 0:12].astype(float)
    f0 = 0.2 + 0.02 * ii + 0.03 * jj
    f1 = f0 - 0.02 * 1.0 - 0.03 * 0.5
    sys = build_gca(compute_derivatives(ImagePair(f0, f1), FlowField.zeros(12, 12), "gca"))
    r = sys.residual(FlowField.constant(12, 12, 1.0, 0.5).to_array())
    np.testing.assert_allclose(r[:, 2:-2, 2:-2], 0.0, atol=1e-12)


def test_gca_needs_second_order(rng):
    with pytest.raises(GridError):
        build_gca(random_stack(rng, "ofc"))


def test_gdim_degenerates_to_ofc(rng):
    stack = random_stack(rng, "gdim")
    v = random_flow(rng, H, W)
    r_gdim = build_gdim(stack).residual(AugmentedUnknowns.from_flow(v).to_array())
    r_ofc = build_ofc(stack).residual(v.to_array())
    np.testing.assert_allclose(r_gdim, r_ofc, atol=1e-14)


def test_gdim_exact_on_contrast_and_offset(rng):
    f0 = 0.9 * rng.random((H, W))
    pair = ImagePair(f0, 1.05 * f0 + 0.02)
    sys = build_gdim(compute_derivatives(pair, FlowField.zeros(H, W), "gdim"))
    u = AugmentedUnknowns(FlowField.zeros(H, W), np.full((H, W), 0.05), np.full((H, W), 0.02))
    np.testing.assert_allclose(sys.residual(u.to_array()), 0.0, atol=1e-12)


def test_unknown_type_checked(rng):
    stack = random_stack(rng, "gdim")
    with pytest.raises(GridError):
        data_energy(build_gdim(stack), FlowField.zeros(H, W), 0.01)
    with pytest.raises(GridError):
        data_energy(build_ofc(stack), AugmentedUnknowns.zeros(H, W), 0.01)
    with pytest.raises(ValueError):
        build_system("hs", stack)


@pytest.mark.parametrize("kind", ["ofc", "gca", "gdim"])
def test_data_gradient_matches_finite_differences(rng, kind):
    eps = 0.01
    h = 1e-6
    sys = build_system(kind, random_stack(rng, kind))
    x = rng.standard_normal((sys.n_unknown_blocks, H, W))
    _, g = sys.energy_and_gradient(x, eps)
    fd = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        ep, _ = sys.energy_and_gradient(x, eps)
        x[idx] = old - h
        em, _ = sys.energy_and_gradient(x, eps)
        x[idx] = old
        fd[idx] = (ep - em) / (2 * h)
    assert np.linalg.norm(g - fd) / np.linalg.norm(fd) <= 1e-4


def test_data_gradient_wrapper_returns_unknowns(rng):
    sys = build_gdim(random_stack(rng, "gdim"))
    g = data_gradient(sys, AugmentedUnknowns.zeros(H, W), 0.01)
    assert isinstance(g, AugmentedUnknowns)


def test_row_lipschitz():
    stack = DerivativeStack(
        Ix=np.array([[3.0, 1.0]]), Iy=np.array([[4.0, 0.0]]), It=np.zeros((1, 2)), I=np.zeros((1, 2)),
        oob=np.zeros((1, 2), dtype=bool), flow=FlowField.zeros(1, 2),
    )
    assert build_ofc(stack).row_lipschitz(0.01) == pytest.approx(25.0 / 0.01)


def test_shifted_ramp_has_opposite_temporal_derivative():
    ramp = np.tile(0.1 + 0.05 * np.arange(W, dtype=float), (H, 1))
    shifted = np.tile(0.1 + 0.05 * (np.arange(W, dtype=float) - 1), (H, 1))
    stack = compute_derivatives(ImagePair(ramp, shifted), FlowField.zeros(H, W))
    np.testing.assert_allclose(stack.It[:, 1:-1], -stack.Ix[:, 1:-1], atol=1e-15)
    np.testing.assert_allclose(stack.Ix[:, 1:-1], 0.05, atol=1e-15)


def _central_loop(g):
    h, w = g.shape
    dx, dy = np.zeros_like(g), np.zeros_like(g)
    for j in range(h):
        for i in range(w):
            dx[j, i] = 0.5 * (g[j, min(i + 1, w - 1)] - g[j, max(i - 1, 0)])
            dy[j, i] = 0.5 * (g[min(j + 1, h - 1), i] - g[max(j - 1, 0), i])
    return dx, dy


def test_derivatives_match_stencil_loop(rng):
    f0, f1 = rng.random((H, W)), rng.random((H, W))
    flow = random_flow(rng, H, W, scale=0.7)
    stack = compute_derivatives(ImagePair(f0, f1), flow, "gca")
    warped, _ = warp_backward(f1, flow)
    ix, iy = _central_loop(0.5 * (f0 + warped))
    it = warped - f0
    np.testing.assert_allclose(stack.Ix, ix, atol=1e-14)
    np.testing.assert_allclose(stack.Iy, iy, atol=1e-14)
    np.testing.assert_allclose(stack.It, it, atol=1e-14)
    ixx, ixy = _central_loop(ix)
    iyx, iyy = _central_loop(iy)
    ixt, iyt = _central_loop(it)
    for got, want in ((stack.Ixx, ixx), (stack.Ixy, ixy), (stack.Iyx, iyx),
                      (stack.Iyy, iyy), (stack.Ixt, ixt), (stack.Iyt, iyt)):
        np.testing.assert_allclose(got, want, atol=1e-14)
