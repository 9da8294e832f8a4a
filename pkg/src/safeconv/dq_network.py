"""Quasi-static dq-frame model of a converter behind an equivalent impedance.

All quantities are per-unit.  The electrical frequency ``omega`` is per-unit
as well (1.0 at nominal), so ``omega * l`` is directly a per-unit reactance.
Power bases are chosen so that active power is ``P = I_dq . V_dq`` with no
extra 3/2 factor; the three-phase factor is absorbed into the base power.

With ``Z_eq`` the 2x2 real rotation-scaling form of ``R_eq + j omega L_eq``,
the model is the algebraic relation

    V_dq = Z_eq I_dq + E_dq

and the converter outputs are the quadratics

    P   = R_eq |I|^2 + E . I
    Q   = omega L_eq |I|^2 + (J E) . I        J = [[0, 1], [-1, 0]]
    V^2 = (R_eq^2 + (omega L_eq)^2) |I|^2 + 2 (Z_eq^T E) . I + |E|^2
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .errors import ConfigurationError

# 90-degree rotation used in the reactive-power form: J @ [d, q] = [q, -d]
J = np.array([[0.0, 1.0], [-1.0, 0.0]])

# |Z_sh + Z_g| below this is treated as a series-resonant (unusable) filter
_RESONANCE_TOL = 1e-9


class DqVector(NamedTuple):
    """Direct/quadrature component pair (per-unit).

    Behaves as a plain 2-tuple, so ``np.asarray(v)`` yields a shape-(2,)
    array and ``d, q = v`` unpacks.
    """

    d: float
    q: float

    def norm(self) -> float:
        return math.hypot(self.d, self.q)

    def as_array(self) -> np.ndarray:
        return np.array([self.d, self.q])

    @classmethod
    def from_array(cls, arr) -> "DqVector":
        d, q = float(arr[0]), float(arr[1])
        return cls(d, q)

    def is_finite(self) -> bool:
        return math.isfinite(self.d) and math.isfinite(self.q)


def _as_dq_array(v) -> np.ndarray:
    """Accept a DqVector, tuple, list, or ndarray; return a float64 (2,) array."""
    a = np.asarray(v, dtype=float)
    if a.shape != (2,):
        raise ValueError(f"expected a dq pair, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class FilterLineParams:
    """RLC filter plus RL line, per-unit, at per-unit frequency ``omega``."""

    r_f: float
    l_f: float
    c_f: float
    r_g: float
    l_g: float
    omega: float = 1.0

    def __post_init__(self):
        for name in ("r_f", "l_f", "c_f", "r_g", "l_g"):
            val = getattr(self, name)
            if not math.isfinite(val) or val < 0:
                raise ConfigurationError(f"{name} must be finite and >= 0, got {val}")
        if not math.isfinite(self.omega) or self.omega <= 0:
            raise ConfigurationError(f"omega must be positive, got {self.omega}")


@dataclass(frozen=True)
class EquivalentNetwork:
    """Thevenin picture seen by the converter: R_eq + j omega L_eq behind E_dq.

    ``l_eq`` may be negative (net capacitive).  ``e_dq`` is the effective
    source voltage in the grid dq frame.
    """

    r_eq: float
    l_eq: float
    omega: float
    e_dq: DqVector

    def __post_init__(self):
        if not math.isfinite(self.r_eq) or self.r_eq < 0:
            raise ConfigurationError(f"r_eq must be finite and >= 0, got {self.r_eq}")
        if not math.isfinite(self.l_eq):
            raise ConfigurationError("l_eq must be finite")
        if not math.isfinite(self.omega) or self.omega <= 0:
            raise ConfigurationError(f"omega must be positive, got {self.omega}")
        if not isinstance(self.e_dq, DqVector):
            object.__setattr__(self, "e_dq", DqVector.from_array(_as_dq_array(self.e_dq)))
        if not self.e_dq.is_finite():
            raise ConfigurationError("e_dq components must be finite")

    @property
    def x_eq(self) -> float:
        """Per-unit reactance omega * l_eq (sign-carrying)."""
        return self.omega * self.l_eq

    @property
    def z_mag2(self) -> float:
        """R_eq^2 + (omega L_eq)^2."""
        return self.r_eq * self.r_eq + self.x_eq * self.x_eq

    def with_source(self, e_dq) -> "EquivalentNetwork":
        """Same impedance, different effective source (used with estimated E)."""
        return replace(self, e_dq=DqVector.from_array(_as_dq_array(e_dq)))


def impedance_matrix(net: EquivalentNetwork) -> np.ndarray:
    """2x2 real matrix [[R, -X], [X, R]] equivalent to R + jX acting on dq pairs."""
    r, x = net.r_eq, net.x_eq
    return np.array([[r, -x], [x, r]])


def thevenin_reduce(params: FilterLineParams, e_inf) -> EquivalentNetwork:
    """Collapse filter + line into a single impedance behind an effective source.

    The shunt capacitor forms a divider: the source seen by the converter is
    ``E_inf * Z_sh / (Z_sh + Z_g)`` behind ``Z_f + Z_sh || Z_g``.  With
    ``c_f == 0`` the shunt branch is absent and the reduction is the exact
    series sum with the source unchanged.

    Raises ConfigurationError when the shunt and line are series-resonant
    (|Z_sh + Z_g| ~ 0), which would make the divider singular.
    """
    e_inf = _as_dq_array(e_inf)
    w = params.omega
    z_f = complex(params.r_f, w * params.l_f)
    z_g = complex(params.r_g, w * params.l_g)
    if params.c_f == 0.0:
        z_eq = z_f + z_g
        e_eff = DqVector(float(e_inf[0]), float(e_inf[1]))
    else:
        z_sh = 1.0 / complex(0.0, w * params.c_f)
        denom = z_sh + z_g
        if abs(denom) < _RESONANCE_TOL:
            raise ConfigurationError(
                f"shunt and line impedances are series-resonant (|Z_sh + Z_g| = {abs(denom):.3e})"
            )
        z_eq = z_f + (z_sh * z_g) / denom
        divider = z_sh / denom
        e_c = complex(e_inf[0], e_inf[1]) * divider
        e_eff = DqVector(e_c.real, e_c.imag)
    return EquivalentNetwork(r_eq=z_eq.real, l_eq=z_eq.imag / w, omega=w, e_dq=e_eff)


def terminal_voltage(i_dq, net: EquivalentNetwork) -> DqVector:
    """Converter terminal voltage V = Z_eq I + E."""
    i = _as_dq_array(i_dq)
    r, x = net.r_eq, net.x_eq
    return DqVector(
        r * i[0] - x * i[1] + net.e_dq.d,
        x * i[0] + r * i[1] + net.e_dq.q,
    )


def compute_outputs(i_dq, net: EquivalentNetwork) -> tuple[float, float, float]:
    """Per-unit (P, Q, V^2) of the converter at current ``i_dq``.

    Evaluated in the expanded quadratic-in-current form; agrees with the
    defining products P = I.V, Q = I.(J V), V^2 = V.V composed with the
    terminal-voltage relation to floating-point accuracy.
    """
    i = _as_dq_array(i_dq)
    r, x = net.r_eq, net.x_eq
    ed, eq = net.e_dq
    mag2 = i[0] * i[0] + i[1] * i[1]
    p = r * mag2 + ed * i[0] + eq * i[1]
    # (J E) . I with J E = [E_q, -E_d]
    q = x * mag2 + eq * i[0] - ed * i[1]
    zte_d = r * ed + x * eq
    zte_q = -x * ed + r * eq
    v2 = net.z_mag2 * mag2 + 2.0 * (zte_d * i[0] + zte_q * i[1]) + (ed * ed + eq * eq)
    return p, q, v2
