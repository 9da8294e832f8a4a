import math

import numpy as np
import pytest

from safeconv.dq_network import (
    DqVector,
    EquivalentNetwork,
    FilterLineParams,
    compute_outputs,
    impedance_matrix,
    terminal_voltage,
    thevenin_reduce,
)
from safeconv.errors import ConfigurationError

from conftest import random_network


def outputs_from_definitions(i, net):
    """Independent oracle: P = I.V, Q = I.(J V), V^2 = V.V via the terminal relation."""
    v = np.asarray(terminal_voltage(i, net))
    i = np.asarray(i, dtype=float)
    p = i @ v
    q = i[0] * v[1] - i[1] * v[0]
    return p, q, v @ v


class TestImpedanceMatrix:
    def test_zero_impedance(self):
        net = EquivalentNetwork(r_eq=0.0, l_eq=0.0, omega=1.0, e_dq=DqVector(1, 0))
        assert np.array_equal(impedance_matrix(net), np.zeros((2, 2)))

    def test_pure_resistance_is_identity(self):
        net = EquivalentNetwork(r_eq=1.0, l_eq=0.0, omega=1.0, e_dq=DqVector(1, 0))
        assert np.array_equal(impedance_matrix(net), np.eye(2))

    def test_bench_series_values(self):
        # series sums of the bench filter + line with the shunt removed
        p = FilterLineParams(r_f=0.011, l_f=0.016, c_f=0.0, r_g=0.025, l_g=0.021)
        net = thevenin_reduce(p, DqVector(1, 0))
        z = impedance_matrix(net)
        assert z == pytest.approx(np.array([[0.036, -0.037], [0.037, 0.036]]), abs=1e-15)

    def test_rotation_scaling_structure(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            net = random_network(rng)
            z = impedance_matrix(net)
            assert np.allclose(z.T @ z, net.z_mag2 * np.eye(2), atol=1e-15)


class TestTheveninReduce:
    def test_no_shunt_is_exact_series_sum(self):
        p = FilterLineParams(r_f=0.011, l_f=0.016, c_f=0.0, r_g=0.025, l_g=0.021)
        net = thevenin_reduce(p, DqVector(1.0, 0.0))
        assert net.r_eq == 0.011 + 0.025
        assert net.l_eq == 0.016 + 0.021
        assert net.e_dq == DqVector(1.0, 0.0)

    def test_bench_against_nodal_oracle(self, bench_filter, bench_net):
        # independent oracle: solve the two-node filter circuit with nodal
        # equations and fit (Z_eq, E_eff) from two probe injections
        w = bench_filter.omega
        z_f = complex(bench_filter.r_f, w * bench_filter.l_f)
        z_g = complex(bench_filter.r_g, w * bench_filter.l_g)
        y_sh = complex(0.0, w * bench_filter.c_f)
        e_inf = 1.0 + 0j

        def terminal_v(i_inj: complex) -> complex:
            # node m (capacitor node): (v - v_m)/z_f = i flows in, out via shunt + line
            # KCL at m: (v_t - v_m)/z_f + (e - v_m)/z_g = v_m * y_sh with v_t = v_m + i*z_f
            # i enters at terminal: i = (v_t - v_m)/z_f
            v_m = (i_inj + e_inf / z_g) / (y_sh + 1.0 / z_g)
            return v_m + i_inj * z_f

        e_eff = terminal_v(0.0)
        z_eq = terminal_v(1.0) - e_eff
        assert bench_net.r_eq == pytest.approx(z_eq.real, rel=1e-14)
        assert bench_net.x_eq == pytest.approx(z_eq.imag, rel=1e-14)
        assert bench_net.e_dq.d == pytest.approx(e_eff.real, rel=1e-14)
        assert bench_net.e_dq.q == pytest.approx(e_eff.imag, abs=1e-14)

    def test_large_shunt_shorts_the_source(self):
        p = FilterLineParams(r_f=0.011, l_f=0.016, c_f=1e9, r_g=0.025, l_g=0.021)
        net = thevenin_reduce(p, DqVector(1.0, 0.0))
        assert net.e_dq.norm() < 1e-7
        assert net.r_eq == pytest.approx(0.011, rel=1e-6)
        assert net.x_eq == pytest.approx(0.016, rel=1e-6)

    def test_series_resonance_rejected(self):
        # shunt reactance cancels the line reactance exactly, lossless line
        p = FilterLineParams(r_f=0.01, l_f=0.01, c_f=10.0, r_g=0.0, l_g=0.1)
        with pytest.raises(ConfigurationError, match="resonant"):
            thevenin_reduce(p, DqVector(1.0, 0.0))


class TestTerminalVoltage:
    def test_open_circuit(self, bench_net):
        assert terminal_voltage((0.0, 0.0), bench_net) == bench_net.e_dq

    def test_bench_operating_point(self, bench_net):
        v = terminal_voltage((0.75, 0.3), bench_net)
        assert v.norm() ** 2 == pytest.approx(1.03, abs=0.02)

    def test_linear_round_trip(self, bench_net):
        rng = np.random.default_rng(5)
        z = impedance_matrix(bench_net)
        for _ in range(20):
            i = rng.normal(size=2)
            v = np.asarray(terminal_voltage(i, bench_net))
            back = np.linalg.solve(z, v - np.asarray(bench_net.e_dq))
            assert np.allclose(back, i, atol=1e-14)


class TestComputeOutputs:
    def test_zero_current(self, bench_net):
        p, q, v2 = compute_outputs((0.0, 0.0), bench_net)
        assert p == 0.0 and q == 0.0
        assert v2 == pytest.approx(bench_net.e_dq.norm() ** 2, rel=1e-15)

    def test_bench_operating_point(self, bench_net):
        p, _, v2 = compute_outputs((0.75, 0.3), bench_net)
        assert p == pytest.approx(0.77, abs=0.02)
        assert v2 == pytest.approx(1.03, abs=0.02)

    def test_equivalence_with_defining_forms(self):
        rng = np.random.default_rng(17)
        for _ in range(1000):
            net = random_network(rng)
            i = rng.normal(scale=1.2, size=2)
            got = compute_outputs(i, net)
            ref = outputs_from_definitions(i, net)
            for g, r in zip(got, ref):
                assert g == pytest.approx(r, rel=1e-12, abs=1e-12)

    def test_hand_expanded_regression(self):
        # frozen hand expansion on a capacitive network with an off-axis source
        net = EquivalentNetwork(r_eq=0.05, l_eq=-0.02, omega=1.0, e_dq=DqVector(0.9, 0.1))
        p, q, v2 = compute_outputs((0.3, -0.4), net)
        assert p == pytest.approx(0.2425, rel=1e-14)
        assert q == pytest.approx(0.385, rel=1e-14)
        assert v2 == pytest.approx(0.828125, rel=1e-14)

    def test_max_power_matches_grid_search(self, bench_net):
        # dense polar sweep of the unit current disk as the independent oracle
        radii = np.linspace(0.0, 1.0, 1000)
        angles = np.linspace(-np.pi, np.pi, 1000, endpoint=False)
        rr, aa = np.meshgrid(radii, angles, indexing="ij")
        i_d = (rr * np.cos(aa)).ravel()
        i_q = (rr * np.sin(aa)).ravel()
        e = np.asarray(bench_net.e_dq)
        p = bench_net.r_eq * (i_d**2 + i_q**2) + e[0] * i_d + e[1] * i_q
        best = int(np.argmax(p))
        # the analytic maximum sits on the rim, aligned with the source
        analytic = bench_net.r_eq + bench_net.e_dq.norm()
        assert p[best] == pytest.approx(analytic, abs=1e-5)
        got = compute_outputs((i_d[best], i_q[best]), bench_net)[0]
        assert got == pytest.approx(p[best], rel=1e-12)


class TestTypes:
    def test_dq_vector_behaves_like_a_pair(self):
        v = DqVector(3.0, 4.0)
        assert v.norm() == 5.0
        d, q = v
        assert (d, q) == (3.0, 4.0)
        assert np.asarray(v).shape == (2,)

    def test_filter_params_validation(self):
        with pytest.raises(ConfigurationError):
            FilterLineParams(r_f=-0.01, l_f=0.016, c_f=0.0, r_g=0.025, l_g=0.021)
        with pytest.raises(ConfigurationError):
            FilterLineParams(r_f=0.01, l_f=0.016, c_f=0.0, r_g=0.025, l_g=0.021, omega=0.0)

    def test_network_validation(self):
        with pytest.raises(ConfigurationError):
            EquivalentNetwork(r_eq=-0.1, l_eq=0.0, omega=1.0, e_dq=DqVector(1, 0))
        with pytest.raises(ConfigurationError):
            EquivalentNetwork(r_eq=0.1, l_eq=math.nan, omega=1.0, e_dq=DqVector(1, 0))
        # capacitive (negative) equivalent inductance is legal
        EquivalentNetwork(r_eq=0.1, l_eq=-0.2, omega=1.0, e_dq=DqVector(1, 0))
