import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from pydantic import ValidationError

from config.errors import DomainError, KernelEstimationError
from config.settings import settings
from features import FeaturePoint, GridSpec, Manifold
from kernels import (
    KernelParams,
    ProcessKind,
    ProcessSpec,
    canonical_base,
    drift,
    estimate_kernel,
    horizontal_curve,
    kernel_lookup,
    kernel_lookup_many,
    marginal,
    pairwise_weights,
    reflect_velocity,
    simulate_path,
    spatial_second_moment,
)
from kernels.processes import integrate, path_noise, scale_noise


class TestProcessSpec:
    def test_zero_noise_allowed(self):
        assert ProcessSpec(kind=ProcessKind.SE2, kappa=0.0).kappa == 0.0

    def test_negative_diffusion_rejected(self):
        with pytest.raises(ValidationError):
            ProcessSpec(kind=ProcessKind.CONTOUR, kappa=0.1, alpha=-0.5)

    def test_alpha_ignored_for_se2(self):
        assert ProcessSpec(kind=ProcessKind.SE2, kappa=0.1, alpha=3.0).header()["alpha"] == 0.0


class TestDrift:
    def test_se2_at_zero(self):
        process = ProcessSpec(kind=ProcessKind.SE2, kappa=0.0)
        assert_allclose(drift(process, FeaturePoint(x=0, y=0, theta=0)), [0, 1, 0], atol=1e-15)

    def test_trajectory_moves_along_normal(self):
        process = ProcessSpec(kind=ProcessKind.TRAJECTORY, kappa=0.0)
        state = FeaturePoint(x=0, y=0, theta=0, t=0, v=2)
        assert_allclose(drift(process, state), [2, 0, 1, 0, 0], atol=1e-15)

    def test_contour_ignores_velocity(self):
        process = ProcessSpec(kind=ProcessKind.CONTOUR, kappa=0.0)
        state = FeaturePoint(x=0, y=0, theta=math.pi / 2, v=4.0)
        assert_allclose(drift(process, state), [-1, 0, 0, 0], atol=1e-15)


class TestReflectVelocity:
    def test_both_walls(self):
        assert_allclose(reflect_velocity(np.array([-1.0, 11.0, 25.0, 4.0]), 10.0), [1.0, 9.0, 5.0, 4.0])


class TestSimulatePath:
    def test_noiseless_se2_is_straight_segment(self):
        process = ProcessSpec(kind=ProcessKind.SE2, kappa=0.0)
        params = KernelParams.build(Manifold.M3, H=10, N=1)
        path = simulate_path(process, canonical_base(ProcessKind.SE2), params, path_id=0)
        assert path.shape == (11, 3)
        assert_allclose(path[:, 0], 0.0, atol=1e-15)
        assert_allclose(path[:, 1], np.arange(11))
        assert_allclose(path[:, 2], 0.0)

    def test_noiseless_trajectory_is_space_time_line(self):
        process = ProcessSpec(kind=ProcessKind.TRAJECTORY, kappa=0.0, alpha=0.0)
        params = KernelParams.build(Manifold.MT, H=5, N=1, v_max=2.0)
        start = FeaturePoint(x=0, y=0, theta=0, t=0, v=1)
        path = simulate_path(process, start, params, path_id=0)
        assert_allclose(path[:, 0], np.arange(6))
        assert_allclose(path[:, 2], np.arange(6))
        assert_allclose(path[:, 4], 1.0)

    def test_angular_increments_have_std_kappa(self):
        kappa = 0.07
        noise = path_noise(seed=11, path_ids=np.arange(20_000), H=5, dims=1) * kappa
        assert_allclose(noise.std(ddof=1), kappa, rtol=0.02)

    def test_rows_independent_of_sharding(self):
        full = path_noise(seed=3, path_ids=np.arange(2500), H=4, dims=2)
        ids = np.array([2400, 7, 1023, 1024, 2047, 2048])
        assert_array_equal(path_noise(seed=3, path_ids=ids, H=4, dims=2), full[ids])
        assert_array_equal(path_noise(seed=3, path_ids=np.arange(1000, 1100), H=4, dims=2), full[1000:1100])
        assert not np.array_equal(full[0], full[1024])

    def test_matches_batch_row(self):
        process = ProcessSpec(kind=ProcessKind.CONTOUR, kappa=0.1, alpha=0.3)
        params = KernelParams.build(Manifold.M0, H=8, N=10, seed=5, v_max=2.0)
        start = canonical_base(ProcessKind.CONTOUR, v=1.0)
        batch = integrate(process, start, scale_noise(process, path_noise(5, np.arange(10), 8, 2)), params.v_max)
        assert_allclose(simulate_path(process, start, params, path_id=7), batch[:, 7, :], rtol=1e-12, atol=1e-12)

    def test_velocity_stays_in_fiber(self):
        process = ProcessSpec(kind=ProcessKind.CONTOUR, kappa=0.1, alpha=2.0)
        params = KernelParams.build(Manifold.M0, H=30, N=1, seed=1, v_max=1.5)
        path = simulate_path(process, canonical_base(ProcessKind.CONTOUR, v=0.5), params, path_id=0)
        assert np.all((path[:, 3] >= 0) & (path[:, 3] <= 1.5))


class TestHorizontalCurve:
    def test_zero_control_is_straight(self):
        process = ProcessSpec(kind=ProcessKind.SE2, kappa=0.0)
        curve = horizontal_curve(process, canonical_base(ProcessKind.SE2), (0.0, 0.0), H=20)
        assert_allclose(curve[:, 1], np.arange(21))
        assert_allclose(curve[:, 0], 0.0, atol=1e-15)

    def test_constant_turning_traces_circle(self):
        k = 0.056
        process = ProcessSpec(kind=ProcessKind.SE2, kappa=0.0)
        curve = horizontal_curve(process, canonical_base(ProcessKind.SE2), (k, 0.0), H=20, substeps=200)
        radius = 1.0 / k
        # counterclockwise turn from the origin heading +y: center at (-R, 0)
        distances = np.hypot(curve[:, 0] + radius, curve[:, 1])
        assert_allclose(distances, radius, atol=1e-2)
        assert_allclose(curve[:, 2], k * np.arange(21), atol=1e-9)

    def test_trajectory_speed(self):
        process = ProcessSpec(kind=ProcessKind.TRAJECTORY, kappa=0.0)
        start = FeaturePoint(x=0, y=0, theta=0, t=0, v=7.5)
        curve = horizontal_curve(process, start, (0.0, 0.0), H=4)
        assert_allclose(np.diff(curve[:, 0]), 7.5)
        assert_allclose(np.diff(curve[:, 2]), 1.0)


class TestEstimateKernel:
    def test_single_noiseless_path(self, straight_kernel):
        sl = straight_kernel.slices[0]
        assert sl.ids.size == 11
        assert_allclose(sl.weights, 0.1)
        centers = straight_kernel.grid.center_array(straight_kernel.grid.unravel(sl.ids))
        assert_allclose(np.sort(centers[:, 1]), np.arange(11), atol=1e-12)
        assert_allclose(centers[:, 0], 0.0, atol=1e-12)

    def test_total_mass(self, straight_kernel, se2_kernel):
        assert_allclose(straight_kernel.slices[0].total_mass, 11 / 10)
        assert_allclose(se2_kernel.slices[0].total_mass, 13 / 12, rtol=1e-12)

    def test_independent_of_worker_count(self, monkeypatch):
        monkeypatch.setattr(settings, "path_block", 50)
        process = ProcessSpec(kind=ProcessKind.SE2, kappa=0.1)
        params = KernelParams.build(Manifold.M3, H=8, N=200, seed=9)
        one = estimate_kernel(process, params, jobs=1)
        many = estimate_kernel(process, params, jobs=4)
        assert_array_equal(one.slices[0].ids, many.slices[0].ids)
        assert_array_equal(one.slices[0].weights, many.slices[0].weights)

    def test_velocity_slices(self):
        process = ProcessSpec(kind=ProcessKind.CONTOUR, kappa=0.05, alpha=0.2)
        params = KernelParams.build(Manifold.M0, H=6, N=50, v_max=1.0)
        kernel = estimate_kernel(process, params)
        assert sorted(kernel.slices) == [0, 1, 2]
        for sl in kernel.slices.values():
            assert_allclose(sl.total_mass, 7 / 6, rtol=1e-12)

    def test_single_base_bin(self):
        process = ProcessSpec(kind=ProcessKind.CONTOUR, kappa=0.05, alpha=0.2)
        params = KernelParams.build(Manifold.M0, H=6, N=20, v_max=1.0)
        kernel = estimate_kernel(process, params, base_v_bin=1)
        assert list(kernel.slices) == [1]
        with pytest.raises(DomainError):
            kernel.slice_for(0.0)

    def test_spill_beyond_tolerance(self):
        process = ProcessSpec(kind=ProcessKind.SE2, kappa=0.0)
        params = KernelParams(H=10, N=5, grid=GridSpec.for_kernel(Manifold.M3, H=2))
        with pytest.raises(KernelEstimationError):
            estimate_kernel(process, params)

    def test_grid_must_match_process(self):
        process = ProcessSpec(kind=ProcessKind.CONTOUR, kappa=0.0)
        with pytest.raises(DomainError):
            estimate_kernel(process, KernelParams.build(Manifold.M3, H=4, N=1))


class TestKernelLookup:
    def test_identity_is_base_cell_weight(self, straight_kernel):
        p = FeaturePoint(x=17.0, y=33.0, theta=2.0)
        assert_allclose(kernel_lookup(straight_kernel, p, p), 0.1)

    def test_follows_source_tangent(self, straight_kernel):
        p = FeaturePoint(x=20.0, y=30.0, theta=1.0)
        ahead = FeaturePoint(x=20.0 - 3 * math.sin(1.0), y=30.0 + 3 * math.cos(1.0), theta=1.0)
        assert_allclose(kernel_lookup(straight_kernel, p, ahead), 0.1)
        assert kernel_lookup(straight_kernel, ahead, p) == 0.0

    def test_rigid_motion_invariance(self, se2_kernel):
        base = FeaturePoint(x=0, y=0, theta=0)
        target = FeaturePoint(x=0, y=6, theta=0)
        moved_base = FeaturePoint(x=1, y=2, theta=math.pi / 2)
        moved_target = FeaturePoint(x=-5, y=2, theta=math.pi / 2)
        weight = kernel_lookup(se2_kernel, base, target)
        assert weight > 0
        assert_allclose(kernel_lookup(se2_kernel, moved_base, moved_target), weight)

    def test_beyond_reach_is_zero(self, se2_kernel):
        base = FeaturePoint(x=0, y=0, theta=0)
        assert kernel_lookup(se2_kernel, base, FeaturePoint(x=0, y=50, theta=0)) == 0.0

    def test_orientation_fold(self, straight_kernel):
        base = FeaturePoint(x=0, y=0, theta=0)
        flipped = FeaturePoint(x=0, y=4, theta=math.pi)
        assert kernel_lookup(straight_kernel, base, flipped) == 0.0
        assert_allclose(kernel_lookup(straight_kernel, base, flipped, identify_orientation=True), 0.1)

    def test_many_agrees_with_pairwise(self, se2_kernel):
        rng = np.random.default_rng(0)
        columns = {
            "x": 40 + rng.uniform(-4, 4, 12),
            "y": 40 + rng.uniform(-4, 4, 12),
            "theta": rng.uniform(0, 2 * math.pi, 12),
        }
        W = pairwise_weights(se2_kernel, columns)
        i, j = np.meshgrid(np.arange(12), np.arange(12), indexing="ij")
        src = {d: columns[d][i.ravel()] for d in columns}
        dst = {d: columns[d][j.ravel()] for d in columns}
        assert_allclose(kernel_lookup_many(se2_kernel, src, dst).reshape(12, 12), W)


class TestDiagnostics:
    def test_xy_marginal_of_straight_kernel(self, straight_kernel):
        frame = marginal(straight_kernel, "xy")
        assert list(frame.columns) == ["x", "y", "weight"]
        assert_allclose(frame["x"], 0.0, atol=1e-12)
        assert_allclose(frame["y"], np.arange(11), atol=1e-12)
        assert_allclose(frame["weight"], 0.1)

    def test_unavailable_projection(self, straight_kernel):
        with pytest.raises(DomainError):
            marginal(straight_kernel, "xyt")

    def test_second_moment_of_straight_kernel(self, straight_kernel):
        # variance of h over h = 0..10
        assert_allclose(spatial_second_moment(straight_kernel), 10.0)

    def test_second_moment_grows_with_H(self):
        process = ProcessSpec(kind=ProcessKind.SE2, kappa=0.05)
        short = estimate_kernel(process, KernelParams.build(Manifold.M3, H=5, N=100, seed=2))
        long = estimate_kernel(process, KernelParams.build(Manifold.M3, H=15, N=100, seed=2))
        assert spatial_second_moment(long) > spatial_second_moment(short)

    def test_spread_non_decreasing_in_kappa(self):
        spreads = [
            spatial_second_moment(
                estimate_kernel(ProcessSpec(kind=ProcessKind.SE2, kappa=kappa), KernelParams.build(Manifold.M3, H=40, N=20_000, seed=4))
            )
            for kappa in (0.0, 0.0035, 0.014, 0.056)
        ]
        assert spreads[0] == pytest.approx((41**2 - 1) / 12)
        assert all(a <= b for a, b in zip(spreads, spreads[1:]))
        assert spreads[-1] > spreads[0] + 2.0
