"""Saturated droop baseline: frequency/voltage droop with a hard current cap.

A simplified grid-forming droop for head-to-head comparison with the optimal
controller.  Frequency droop integrates the converter angle relative to the
grid frame; voltage droop sets the terminal-voltage magnitude reference.
The implied current is read off the same quasi-static impedance relation the
plant obeys, then passed through a direction-preserving magnitude saturator.

Measured P, Q, V^2 are first-order filtered before entering the droop laws
so the discrete update has no algebraic loop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dq_network import EquivalentNetwork, _as_dq_array, compute_outputs, terminal_voltage
from .errors import ConfigurationError
from .feasible_region import TrackingMode


@dataclass(frozen=True)
class DroopParams:
    """Droop gains and references.

    ``m_p_hz``: frequency droop, Hz per per-unit active power error.
    ``m_q``: voltage droop, per-unit voltage per per-unit reactive power error.
    ``m_v2``: squared-voltage droop, per-unit V^2 per per-unit V^2 error.
    """

    m_p_hz: float = 0.5
    m_q: float = 0.05
    m_v2: float = 0.05
    omega_nom: float = 2.0 * math.pi * 60.0
    v_nom: float = 1.0
    filter_tau: float = 0.016
    i_max: float = 1.0

    def __post_init__(self):
        for name in ("m_p_hz", "m_q", "m_v2"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be >= 0")
        if self.filter_tau <= 0:
            raise ConfigurationError(f"filter_tau must be > 0, got {self.filter_tau}")
        if self.i_max <= 0:
            raise ConfigurationError(f"i_max must be > 0, got {self.i_max}")


@dataclass
class DroopState:
    """Angle relative to the grid frame, filtered measurements, last command."""

    theta: float
    p_filt: float
    q_filt: float
    v2_filt: float
    i_prev: np.ndarray
    v_ref_clamped: bool = False


def droop_initial_state(i0, net: EquivalentNetwork) -> DroopState:
    """Start at the operating point of ``i0``: angle from its terminal voltage,
    filters seeded with its measured outputs."""
    i = _as_dq_array(i0)
    v = terminal_voltage(i, net)
    p, q, v2 = compute_outputs(i, net)
    return DroopState(theta=math.atan2(v.q, v.d), p_filt=p, q_filt=q, v2_filt=v2,
                      i_prev=i.copy())


def lowpass(prev: float, sample: float, dt: float, tau: float) -> float:
    """Forward-Euler first-order filter: prev + (dt/tau) (sample - prev)."""
    if dt <= 0 or tau <= 0:
        raise ValueError("dt and tau must be positive")
    return prev + (dt / tau) * (sample - prev)


def saturate(i_dq, i_max: float) -> np.ndarray:
    """Cap the magnitude at ``i_max``; direction untouched, unsaturated input returned as-is."""
    i = _as_dq_array(i_dq)
    mag = math.hypot(i[0], i[1])
    return i * (i_max / max(i_max, mag))


def _wrap_angle(theta: float) -> float:
    return (theta + math.pi) % (2.0 * math.pi) - math.pi


def droop_step(
    state: DroopState,
    measurements: tuple[float, float, float],
    setpoints: tuple[float, float],
    params: DroopParams,
    net: EquivalentNetwork,
    dt: float,
    mode: TrackingMode,
) -> tuple[DroopState, np.ndarray]:
    """One droop update: filter measurements, apply droop laws, saturate.

    ``measurements`` is (P, Q, V^2) at the applied current; ``setpoints`` is
    the tracked pair for ``mode`` (PQ: (P*, Q*); PV2: (P*, V2*)).  The
    voltage/angle references imply a current through the inverse impedance
    relation; the saturated version is the command.

    An excessive droop excursion can drive the squared-voltage reference
    negative; it is clamped at zero and flagged on the returned state.
    """
    if mode not in (TrackingMode.PQ, TrackingMode.PV2):
        raise ConfigurationError(f"droop supports PQ and PV2 tracking, not {mode}")
    p, q, v2 = measurements
    p_filt = lowpass(state.p_filt, p, dt, params.filter_tau)
    q_filt = lowpass(state.q_filt, q, dt, params.filter_tau)
    v2_filt = lowpass(state.v2_filt, v2, dt, params.filter_tau)

    s1_bar, s2_bar = float(setpoints[0]), float(setpoints[1])
    omega = params.omega_nom - params.m_p_hz * 2.0 * math.pi * (p_filt - s1_bar)
    # infinite bus at nominal frequency: theta is the mismatch angle
    theta = _wrap_angle(state.theta + (omega - params.omega_nom) * dt)

    clamped = False
    if mode is TrackingMode.PQ:
        v_ref = params.v_nom - params.m_q * (q_filt - s2_bar)
        if v_ref < 0.0:
            v_ref = 0.0
            clamped = True
    else:
        v2_ref = params.v_nom * params.v_nom - params.m_v2 * (v2_filt - s2_bar)
        if v2_ref < 0.0:
            v2_ref = 0.0
            clamped = True
        v_ref = math.sqrt(v2_ref)

    # candidate current from the quasi-static relation: I = Z^-1 (V_ref - E)
    r, x = net.r_eq, net.x_eq
    det = r * r + x * x
    if det == 0.0:
        raise ConfigurationError("droop needs a nonzero equivalent impedance")
    ud = v_ref * math.cos(theta) - net.e_dq.d
    uq = v_ref * math.sin(theta) - net.e_dq.q
    candidate = np.array([(r * ud + x * uq) / det, (-x * ud + r * uq) / det])
    i_cmd = saturate(candidate, params.i_max)

    new_state = DroopState(
        theta=theta, p_filt=p_filt, q_filt=q_filt, v2_filt=v2_filt,
        i_prev=i_cmd.copy(), v_ref_clamped=clamped,
    )
    return new_state, i_cmd
