import numpy as np
import pytest

from safeconv.dq_network import DqVector, EquivalentNetwork, compute_outputs
from safeconv.errors import ConfigurationError
from safeconv.feasible_region import (
    TrackingMode,
    coeffs_for_mode,
    convexity_check,
    nearest_feasible,
    sample_boundary,
)

from conftest import random_network

MODES = [TrackingMode.PQ, TrackingMode.PV2, TrackingMode.QV2]
PAIR = {TrackingMode.PQ: (0, 1), TrackingMode.PV2: (0, 2), TrackingMode.QV2: (1, 2)}


class TestCoeffs:
    def test_lossless_pq(self):
        net = EquivalentNetwork(r_eq=0.0, l_eq=0.0, omega=1.0, e_dq=DqVector(0.8, -0.2))
        c = coeffs_for_mode(TrackingMode.PQ, net)
        assert c.alpha == 0.0 and c.beta == 0.0
        assert np.allclose(c.a, [0.8, -0.2])
        assert np.allclose(c.b, [-0.2, -0.8])  # J E = (E_q, -E_d)
        assert c.zeta1 == 0.0 and c.zeta2 == 0.0

    def test_qv2_linear_vector(self, bench_net):
        c = coeffs_for_mode(TrackingMode.QV2, bench_net)
        z = np.array([[bench_net.r_eq, bench_net.x_eq], [-bench_net.x_eq, bench_net.r_eq]])
        assert np.allclose(c.b, 2.0 * z @ np.asarray(bench_net.e_dq), atol=1e-16)

    def test_consistency_with_outputs(self):
        rng = np.random.default_rng(23)
        for _ in range(1000):
            net = random_network(rng)
            mode = MODES[rng.integers(0, 3)]
            c = coeffs_for_mode(mode, net)
            i = rng.normal(scale=1.3, size=2)
            s1, s2 = c.outputs(i)
            full = compute_outputs(i, net)
            k1, k2 = PAIR[mode]
            assert s1 == pytest.approx(full[k1], rel=1e-12, abs=1e-12)
            assert s2 == pytest.approx(full[k2], rel=1e-12, abs=1e-12)

    def test_degenerate_source_rejected(self):
        net = EquivalentNetwork(r_eq=0.1, l_eq=0.05, omega=1.0, e_dq=DqVector(0.0, 0.0))
        with pytest.raises(ConfigurationError, match="degenerate"):
            coeffs_for_mode(TrackingMode.PQ, net)

    def test_linear_independence(self):
        rng = np.random.default_rng(29)
        for _ in range(200):
            net = random_network(rng, x_range=(0.01, 0.2))
            for mode in MODES:
                c = coeffs_for_mode(mode, net)
                assert abs(np.linalg.det(c.linear_matrix())) > 0.0


class TestSampleBoundary:
    def test_lossless_pq_circle(self):
        net = EquivalentNetwork(r_eq=0.0, l_eq=0.0, omega=1.0, e_dq=DqVector(1.0, 0.0))
        sample = sample_boundary(TrackingMode.PQ, net, i_max=0.5, n=16, interior_grid=(2, 2))
        radii = np.linalg.norm(sample.boundary, axis=1)
        assert np.allclose(radii, 0.5 * net.e_dq.norm(), atol=1e-15)

    def test_min_samples_enforced(self, bench_net):
        with pytest.raises(ValueError):
            sample_boundary(TrackingMode.PQ, bench_net, i_max=1.0, n=8)

    def test_bench_pv2_hull_contents(self, bench_net):
        sample = sample_boundary(TrackingMode.PV2, bench_net, i_max=1.0, n=360)
        hull = sample.boundary

        def inside(pt):
            report = convexity_check(np.vstack([hull, pt]), hull_points=hull)
            return report.is_convex

        assert inside(np.array([0.99, 1.05]))
        assert not inside(np.array([1.0, 1.0]))  # the stepped setpoint is infeasible

    def test_capacitive_region_still_convex(self):
        net = EquivalentNetwork(r_eq=0.02, l_eq=-0.15, omega=1.0, e_dq=DqVector(1.0, 0.0))
        for mode in MODES:
            sample = sample_boundary(mode, net, i_max=1.0, n=720, interior_grid=(60, 60))
            report = convexity_check(sample.all_points, hull_points=sample.hull_generators)
            assert report.is_convex, (mode, report.max_violation)


class TestConvexityCheck:
    def test_circle_is_convex(self):
        ang = np.linspace(0, 2 * np.pi, 64, endpoint=False)
        pts = np.column_stack([np.cos(ang), np.sin(ang)])
        report = convexity_check(pts)
        assert report.is_convex and report.max_violation == 0.0 and not report.degenerate

    def test_displaced_point_detected(self):
        ang = np.linspace(0, 2 * np.pi, 64, endpoint=False)
        hull = np.column_stack([np.cos(ang), np.sin(ang)])
        bad = np.vstack([hull, [1.1, 0.0]])  # 0.1 outside the rim
        report = convexity_check(bad, hull_points=hull)
        assert not report.is_convex
        assert report.max_violation == pytest.approx(0.1, rel=1e-6)

    def test_collinear_degenerate_flag(self):
        pts = np.column_stack([np.linspace(0, 1, 10), np.zeros(10)])
        report = convexity_check(pts)
        assert report.degenerate

    def test_inductive_pq_interior_sampling(self, bench_net):
        sample = sample_boundary(TrackingMode.PQ, bench_net, i_max=1.0, n=720,
                                 interior_grid=(100, 100))
        report = convexity_check(sample.all_points, hull_points=sample.hull_generators)
        assert report.is_convex
        assert len(sample.interior) == 10000

    def test_random_networks_all_modes(self):
        rng = np.random.default_rng(31)
        for _ in range(10):
            net = random_network(rng)
            for mode in MODES:
                sample = sample_boundary(mode, net, i_max=1.0, n=360, interior_grid=(40, 40))
                report = convexity_check(sample.all_points, hull_points=sample.hull_generators)
                assert report.is_convex, (net, mode, report.max_violation)


class TestNearestFeasible:
    def test_feasible_target_is_returned(self, bench_net):
        target = compute_outputs((0.4, 0.1), bench_net)[::2]  # (P, V2)
        best = nearest_feasible(TrackingMode.PV2, bench_net, 1.0, target)
        assert best.objective < 1e-12
        assert best.s1 == pytest.approx(target[0], abs=1e-5)
        assert best.s2 == pytest.approx(target[1], abs=1e-5)

    def test_bench_infeasible_setpoint(self, bench_net):
        best = nearest_feasible(TrackingMode.PV2, bench_net, 1.0, (1.0, 1.0), gamma=1.0)
        assert best.s1 == pytest.approx(0.99, abs=0.02)
        assert best.s2 == pytest.approx(1.05, abs=0.02)
        assert np.linalg.norm(best.current) <= 1.0 + 1e-12

    def test_idempotent(self, bench_net):
        first = nearest_feasible(TrackingMode.PV2, bench_net, 1.0, (1.0, 1.0))
        again = nearest_feasible(TrackingMode.PV2, bench_net, 1.0, (first.s1, first.s2))
        assert again.s1 == pytest.approx(first.s1, abs=1e-6)
        assert again.s2 == pytest.approx(first.s2, abs=1e-6)

    def test_post_drop_optimum_moves(self, bench_net):
        dropped = bench_net.with_source(np.asarray(bench_net.e_dq) * 0.83)
        best = nearest_feasible(TrackingMode.PV2, dropped, 1.0, (1.0, 1.0))
        # the shrunk region can no longer reach the setpoint in either coordinate
        assert best.s1 < 0.9 and best.s2 < 0.8
