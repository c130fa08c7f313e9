import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hypradon import (CmpGather, RadonImage, RegularGrid2, adjoint, direct_adjoint, direct_forward,
                      estimate_norm, forward, plan)
from hypradon.cli import benchmark_grids
from hypradon.operators import PlanError

from conftest import random_pair


def test_split_counts_are_extra_cuts():
    dg, rg = benchmark_grids(64)
    assert len(plan(dg, rg, splits=(0, 0)).splits) == 1
    assert len(plan(dg, rg, splits=(1, 1)).splits) == 4
    assert len(plan(dg, rg, splits=(2, 0)).splits) == 3


def test_zero_in_zero_out(small_plan):
    p = small_plan
    assert not forward(p, CmpGather.zeros(p.data_grid)).data.any()
    assert not adjoint(p, RadonImage.zeros(p.radon_grid)).data.any()


@given(st.integers(0, 2 ** 31 - 1))
def test_fast_pair_passes_dot_test(small_plan, seed):
    f, g = random_pair(small_plan, seed)
    a = np.vdot(forward(small_plan, f).data, g.data)
    b = np.vdot(f.data, adjoint(small_plan, g).data)
    assert abs(a - b) <= 1e-10 * max(abs(a), abs(b))


@settings(max_examples=10)
@given(st.integers(0, 2 ** 31 - 1))
def test_direct_pair_passes_dot_test(seed):
    dg, rg = benchmark_grids(48)
    rng = np.random.default_rng(seed)
    f = CmpGather(dg, rng.standard_normal(dg.shape))
    g = RadonImage(rg, rng.standard_normal(rg.shape))
    a = np.vdot(direct_forward(f, rg).data, g.data)
    b = np.vdot(f.data, direct_adjoint(g, dg).data)
    assert abs(a - b) <= 1e-12 * max(abs(a), abs(b))


@pytest.mark.parametrize("split", [(0, 0), (1, 1)])
def test_adjoint_of_spike_follows_hyperbola(plan128, split):
    dg, rg = plan128.data_grid, plan128.radon_grid
    p = plan128 if split == (1, 1) else plan(dg, rg, splits=split)
    i, j = 60, 70
    img = np.zeros(rg.shape)
    img[i, j] = 1.0
    out = adjoint(p, RadonImage(rg, img)).data
    tau0, q0 = rg.axis1[i], rg.axis2[j]
    t = np.sqrt(tau0 ** 2 + (q0 * dg.axis2) ** 2)
    inside = t <= dg.end1 - 4 * dg.d1
    peaks = dg.axis1[np.argmax(np.abs(out), axis=0)]
    assert np.all(np.abs(peaks[inside] - t[inside]) <= 2 * dg.d1)


def test_direct_forward_of_constant_is_offset_span():
    dg = RegularGrid2(200, 50, 0.0, 0.01, 0.0, 0.02)
    rg = RegularGrid2(10, 5, 0.5, 0.1, 0.1, 0.1)
    R = direct_forward(CmpGather(dg, np.ones(dg.shape)), rg).data
    tmax = np.sqrt(rg.axis1[:, None] ** 2 + (rg.axis2[None, :] * dg.end2) ** 2)
    ok = tmax <= dg.end1 - 2 * dg.d1
    np.testing.assert_allclose(R[ok], dg.end2, rtol=1e-13)


def test_direct_forward_picks_out_linear_moveout():
    # f(t, x) = t**2 integrates to tau**2 X + q**2 X**3 / 3 up to trapezoid error
    dg = RegularGrid2(400, 201, 0.0, 0.005, 0.0, 0.005)
    rg = RegularGrid2(5, 4, 0.4, 0.1, 0.2, 0.1)
    T = dg.axis1[:, None] ** 2 * np.ones(dg.n2)[None, :]
    R = direct_forward(CmpGather(dg, T), rg).data
    X = dg.end2
    exact = rg.axis1[:, None] ** 2 * X + rg.axis2[None, :] ** 2 * X ** 3 / 3
    np.testing.assert_allclose(R, exact, rtol=1e-4)


@given(st.integers(0, 2 ** 31 - 1), st.floats(-3, 3))
def test_operators_linear(small_plan, seed, s):
    f1, g1 = random_pair(small_plan, seed)
    f2, g2 = random_pair(small_plan, seed + 1)
    rg = small_plan.radon_grid
    lhs = forward(small_plan, f1.axpy(s, f2)).data
    rhs = forward(small_plan, f1).data + s * forward(small_plan, f2).data
    assert np.max(np.abs(lhs - rhs)) <= 1e-11 * (1 + abs(s)) * np.max(np.abs(rhs) + 1)
    lhs = direct_forward(f1.axpy(s, f2), rg).data
    rhs = direct_forward(f1, rg).data + s * direct_forward(f2, rg).data
    assert np.max(np.abs(lhs - rhs)) <= 1e-11 * (1 + abs(s)) * np.max(np.abs(rhs) + 1)


def test_physical_scaling_multiplies_output_by_offset_span():
    n = 64
    dg, rg = benchmark_grids(n)
    p = plan(dg, rg)
    rec = p.record
    udg, urg = rec.grid_to_internal(dg, "gather"), rec.grid_to_internal(rg, "radon")
    pu = plan(udg, urg)
    data = np.random.default_rng(4).standard_normal(dg.shape)
    R = forward(p, CmpGather(dg, data)).data
    Ru = forward(pu, CmpGather(udg, data)).data
    np.testing.assert_allclose(R, rec.X * Ru, rtol=1e-9, atol=1e-12 * np.max(np.abs(R)))


def test_norm_scales_with_offset_stretch():
    n = 64
    dg, rg = benchmark_grids(n)
    dg2 = RegularGrid2(dg.n1, dg.n2, dg.o1, dg.d1, dg.o2, 2 * dg.d2)
    rg2 = RegularGrid2(rg.n1, rg.n2, rg.o1, rg.d1, rg.o2 / 2, rg.d2 / 2)
    p, p2 = plan(dg, rg), plan(dg2, rg2)
    data = np.random.default_rng(5).standard_normal(dg.shape)
    R = forward(p, CmpGather(dg, data)).data
    R2 = forward(p2, CmpGather(dg2, data)).data
    np.testing.assert_allclose(R2, 2 * R, rtol=1e-9, atol=1e-12 * np.max(np.abs(R)))
    assert estimate_norm(p2) == pytest.approx(2 * estimate_norm(p), rel=1e-9)


def test_power_iteration_nondecreasing(small_plan):
    vals = [estimate_norm(small_plan, iterations=k, tol=0.0) for k in (1, 2, 4, 8, 16)]
    assert all(b >= a * (1 - 1e-12) for a, b in zip(vals[:-1], vals[1:]))


def test_norm_estimate_matches_dense_svd(small_plan):
    p = small_plan
    n = p.data_grid.n1 * p.data_grid.n2
    A = np.empty((p.radon_grid.n1 * p.radon_grid.n2, n))
    e = np.zeros(n)
    for k in range(n):
        e[k] = 1.0
        A[:, k] = forward(p, CmpGather(p.data_grid, e.reshape(p.data_grid.shape))).data.ravel()
        e[k] = 0.0
    top = np.linalg.norm(A, 2)
    est = estimate_norm(p, iterations=60)
    assert est <= top * (1 + 1e-9)
    assert est == pytest.approx(top, rel=0.02)


def test_apply_stats_account_for_runtime(plan128):
    f, g = random_pair(plan128, 9)
    for op, arg in ((forward, f), (adjoint, g)):
        op(plan128, arg)
        s = plan128.last_stats
        staged = s.seconds_gridding + s.seconds_fft + s.seconds_interpolation
        assert staged <= s.seconds_total
        assert staged >= 0.95 * s.seconds_total - 2e-4
        assert len(s.lattice_shapes) == len(plan128.splits)
        d = s.as_dict()
        assert d["points_in"] > 0 and d["points_out"] > 0


@pytest.mark.parametrize("kw", [dict(splits=(-1, 0)), dict(oversample=0.0), dict(tau_min=5.0),
                                dict(splits=(0, 200))])
def test_plan_rejects_bad_options(kw):
    dg, rg = benchmark_grids(32)
    with pytest.raises(PlanError):
        plan(dg, rg, **kw)


def test_plan_rejects_nonpositive_radon_origin():
    dg, rg = benchmark_grids(32)
    bad = RegularGrid2(rg.n1, rg.n2, rg.o1, rg.d1, 0.0, rg.d2)
    with pytest.raises(PlanError):
        plan(dg, bad)


def test_apply_rejects_mismatched_grid(small_plan):
    other = RegularGrid2(10, 10)
    with pytest.raises(PlanError):
        forward(small_plan, CmpGather.zeros(other))
    with pytest.raises(PlanError):
        adjoint(small_plan, RadonImage.zeros(RegularGrid2(10, 10, 0.1, 0.1, 0.1, 0.1)))


def test_plan_rejects_oversized_lattice():
    dg, rg = benchmark_grids(64)
    with pytest.raises(PlanError, match="memory budget"):
        plan(dg, rg, max_lattice_cells=1000)
