"""Online optimal setpoint-tracking controller for a current-limited converter.

The tracking problem over the output pair is lifted to a 3x3 symmetric matrix
W standing in for [I_d, I_q, 1] [I_d, I_q, 1]^T, constrained to the
spectrahedron

    W_set = { W PSD,  W11 + W22 <= I_max^2,  W33 = 1 }.

Each control cycle takes one projected-gradient step of

    f(W) = 0.5 (Tr(M1 W) - s1*)^2 + gamma 0.5 (Tr(M2 W) - s2*)^2 + rho Tr(W)

then recovers the smallest-magnitude physical current that realizes the same
two outputs as the projected (generally rank-2) matrix, and re-lifts it.  The
trace regularizer ``rho > 0`` is what makes minimizers rank-1 and keeps the
recovered current inside the limit; the objective is non-increasing step to
step for a small enough gradient step, so the commanded current converges to
the constrained optimum while staying safe along the way.

The grid-side source voltage is not assumed known: it is re-estimated every
cycle from the terminal voltage/current measurements through the impedance
model, with a first-order tracking filter for noisy measurements.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import smallsym
from .dq_network import EquivalentNetwork, _as_dq_array
from .errors import ConfigurationError, InfeasibleOutputsError
from .feasible_region import QuadraticCoeffs, TrackingMode, coeffs_for_mode

# membership tolerances for the lifted constraint set
LIFT_EIG_TOL = 1e-9
LIFT_TRACE_TOL = 1e-9
LIFT_CORNER_TOL = 1e-9

_PROJECTION_TOL = 1e-10
_PROJECTION_SWEEP_CAP = 10000
_DISCRIMINANT_CLAMP = -1e-9


def lift(i_dq) -> np.ndarray:
    """Rank-1 lifted representation: outer product of [I_d, I_q, 1]."""
    i = _as_dq_array(i_dq)
    v = np.array([i[0], i[1], 1.0])
    return np.outer(v, v)


def is_in_lift_set(w, i_max: float, eig_tol: float = LIFT_EIG_TOL) -> bool:
    """Membership in {W PSD, W11+W22 <= I_max^2, W33 = 1} within tolerances."""
    w = np.asarray(w, dtype=float)
    if abs(w[2, 2] - 1.0) > LIFT_CORNER_TOL:
        return False
    if w[0, 0] + w[1, 1] > i_max * i_max + LIFT_TRACE_TOL:
        return False
    return smallsym.min_eigenvalue(smallsym.pack(w)) >= -eig_tol


@dataclass(frozen=True)
class ObjectiveMatrices:
    """Trace representations of the two tracked outputs: S_i = Tr(M_i W)."""

    m1: np.ndarray
    m2: np.ndarray


def _coeff_matrix(quad: float, lin: np.ndarray, const: float) -> np.ndarray:
    return np.array([
        [quad, 0.0, 0.5 * lin[0]],
        [0.0, quad, 0.5 * lin[1]],
        [0.5 * lin[0], 0.5 * lin[1], const],
    ])


def matrices_from_coeffs(coeffs: QuadraticCoeffs) -> ObjectiveMatrices:
    return ObjectiveMatrices(
        m1=_coeff_matrix(coeffs.alpha, coeffs.a, coeffs.zeta1),
        m2=_coeff_matrix(coeffs.beta, coeffs.b, coeffs.zeta2),
    )


def build_objective_matrices(mode: TrackingMode, net: EquivalentNetwork) -> ObjectiveMatrices:
    """M1, M2 for the selected output pair on the given network."""
    return matrices_from_coeffs(coeffs_for_mode(mode, net))


@dataclass(frozen=True)
class ControllerConfig:
    mode: TrackingMode
    s1_setpoint: float
    s2_setpoint: float
    gamma: float = 1.0
    rho: float = 1e-3
    step_size: float = 1.0
    i_max: float = 1.0
    estimator_gain: float = 1.0

    def __post_init__(self):
        if self.gamma < 0:
            raise ConfigurationError(f"gamma must be >= 0, got {self.gamma}")
        if self.rho <= 0:
            raise ConfigurationError(f"rho must be > 0, got {self.rho}")
        if self.step_size <= 0:
            raise ConfigurationError(f"step_size must be > 0, got {self.step_size}")
        if self.i_max <= 0:
            raise ConfigurationError(f"i_max must be > 0, got {self.i_max}")
        if not 0.0 < self.estimator_gain <= 1.0:
            raise ConfigurationError(
                f"estimator_gain must be in (0, 1], got {self.estimator_gain}"
            )

    def with_setpoints(self, s1: float, s2: float) -> "ControllerConfig":
        return replace(self, s1_setpoint=s1, s2_setpoint=s2)


@dataclass(frozen=True)
class ControllerState:
    """Value-type controller state: last commanded current, its lift, and the source estimate."""

    i_dq: np.ndarray
    e_hat: np.ndarray
    w: np.ndarray
    step_count: int = 0


def initial_state(i0, e0, i_max: float | None = None) -> ControllerState:
    i = _as_dq_array(i0)
    e = _as_dq_array(e0)
    if i_max is not None and math.hypot(i[0], i[1]) > i_max + 1e-9:
        raise ConfigurationError(
            f"initial current magnitude {math.hypot(i[0], i[1]):.6f} exceeds limit {i_max}"
        )
    return ControllerState(i_dq=i, e_hat=e, w=lift(i), step_count=0)


def objective_and_gradient(w, mats: ObjectiveMatrices, cfg: ControllerConfig):
    """f(W) and its symmetric gradient (S1 - s1*) M1 + gamma (S2 - s2*) M2 + rho I."""
    w = np.asarray(w, dtype=float)
    s1 = float(np.sum(mats.m1 * w))
    s2 = float(np.sum(mats.m2 * w))
    e1 = s1 - cfg.s1_setpoint
    e2 = s2 - cfg.s2_setpoint
    f = 0.5 * e1 * e1 + cfg.gamma * 0.5 * e2 * e2 + cfg.rho * float(np.trace(w))
    g = e1 * mats.m1 + cfg.gamma * e2 * mats.m2 + cfg.rho * np.eye(3)
    return f, g


def project_psd(a) -> np.ndarray:
    """Frobenius-nearest positive semidefinite matrix (eigenvalue clamp)."""
    return np.array(smallsym.unpack(smallsym.psd_clamp(smallsym.pack(a))))


def project_feasible_lift(a, i_max: float) -> np.ndarray:
    """Frobenius projection onto {W PSD, W11+W22 <= I_max^2, W33 = 1}."""
    packed, _ = smallsym.project_lift_set(
        smallsym.pack(a), i_max * i_max, tol=_PROJECTION_TOL, max_sweeps=_PROJECTION_SWEEP_CAP
    )
    return np.array(smallsym.unpack(packed))


def smoothness_bound(mats: ObjectiveMatrices, gamma: float) -> float:
    """Lipschitz constant of the tracking gradient over symmetric matrices.

    Largest eigenvalue of the 2x2 Gram of (M1, sqrt(gamma) M2) under the
    Frobenius inner product; a descent-safe step size is anything below 2/L.
    """
    g11 = float(np.sum(mats.m1 * mats.m1))
    g22 = gamma * float(np.sum(mats.m2 * mats.m2))
    g12 = math.sqrt(gamma) * float(np.sum(mats.m1 * mats.m2))
    mid = 0.5 * (g11 + g22)
    return mid + math.hypot(0.5 * (g11 - g22), g12)


def safe_step_size(mats: ObjectiveMatrices, gamma: float) -> float:
    return 1.0 / smoothness_bound(mats, gamma)


@dataclass(frozen=True)
class ExtractionProblem:
    """Reduced data of the two-output inversion: x = d - mu c with mu = |x|^2."""

    c: np.ndarray
    d: np.ndarray
    mu1: float
    mu2: float


def extraction_problem(s1: float, s2: float, coeffs: QuadraticCoeffs) -> ExtractionProblem:
    """Set up and solve the scalar quadratic for the current magnitude.

    Multiplying the two output equations by the inverse of [a^T; b^T] gives
    x = d - mu c with mu = |x|^2, hence

        |c|^2 mu^2 - (2 d.c + 1) mu + |d|^2 = 0.

    Both roots are kept (mu1 <= mu2).  A discriminant inside the round-off
    band [-1e-9, 0) is clamped to zero; beyond it, or with no nonnegative
    root, the pair is not realizable by any real current.
    """
    a, b = coeffs.a, coeffs.b
    det = a[0] * b[1] - a[1] * b[0]
    scale = math.hypot(a[0], a[1]) * math.hypot(b[0], b[1])
    if abs(det) <= 1e-12 * max(scale, 1e-300):
        raise ConfigurationError(
            "output-pair linear coefficients are parallel; this tracking mode is "
            "degenerate on this network"
        )
    r1 = s1 - coeffs.zeta1
    r2 = s2 - coeffs.zeta2
    d = np.array([(b[1] * r1 - a[1] * r2) / det, (-b[0] * r1 + a[0] * r2) / det])
    c = np.array([(b[1] * coeffs.alpha - a[1] * coeffs.beta) / det,
                  (-b[0] * coeffs.alpha + a[0] * coeffs.beta) / det])
    qa = c[0] * c[0] + c[1] * c[1]
    dc = d[0] * c[0] + d[1] * c[1]
    qb = -(2.0 * dc + 1.0)
    qc = d[0] * d[0] + d[1] * d[1]
    if qa == 0.0:
        # lossless network: the magnitude equation is linear
        mu = qc / (2.0 * dc + 1.0)
        if mu < 0.0:
            raise InfeasibleOutputsError(f"negative squared magnitude {mu:.3e}")
        return ExtractionProblem(c=c, d=d, mu1=mu, mu2=mu)
    disc = qb * qb - 4.0 * qa * qc
    if disc < 0.0:
        if disc < _DISCRIMINANT_CLAMP:
            raise InfeasibleOutputsError(
                f"outputs ({s1:.6g}, {s2:.6g}) unreachable: discriminant {disc:.3e}"
            )
        disc = 0.0
    sq = math.sqrt(disc)
    if qb == 0.0:
        roots = sorted((-sq / (2.0 * qa), sq / (2.0 * qa)))
    else:
        qq = -0.5 * (qb + math.copysign(sq, qb))
        roots = sorted((qq / qa, qc / qq if qq != 0.0 else 0.0))
    valid = [max(r, 0.0) for r in roots if r >= -1e-12]
    if not valid:
        raise InfeasibleOutputsError(
            f"outputs ({s1:.6g}, {s2:.6g}) unreachable: roots {roots[0]:.3e}, {roots[1]:.3e}"
        )
    mu1 = valid[0]
    mu2 = valid[-1]
    return ExtractionProblem(c=c, d=d, mu1=mu1, mu2=mu2)


def extract_current(s1: float, s2: float, coeffs: QuadraticCoeffs) -> np.ndarray:
    """Smallest-magnitude current realizing the output pair exactly."""
    prob = extraction_problem(s1, s2, coeffs)
    return prob.d - prob.mu1 * prob.c


def estimate_grid_voltage(prev, v_meas, i_meas, net: EquivalentNetwork, gain: float) -> np.ndarray:
    """First-order tracking of the source voltage from terminal measurements.

    The instantaneous inversion is E = V - Z_eq I; ``gain`` = 1 adopts it
    outright, smaller gains low-pass measurement noise.
    """
    if not 0.0 < gain <= 1.0:
        raise ValueError(f"gain must be in (0, 1], got {gain}")
    prev = _as_dq_array(prev)
    v = _as_dq_array(v_meas)
    i = _as_dq_array(i_meas)
    r, x = net.r_eq, net.x_eq
    e_inst_d = v[0] - (r * i[0] - x * i[1])
    e_inst_q = v[1] - (x * i[0] + r * i[1])
    return np.array([
        prev[0] + gain * (e_inst_d - prev[0]),
        prev[1] + gain * (e_inst_q - prev[1]),
    ])


@dataclass(frozen=True)
class StepResult:
    """One controller cycle's outcome.

    ``objective`` is f evaluated at the incoming lifted state with this
    cycle's rebuilt matrices, so consecutive values trace the descent under a
    fixed source estimate.  ``v_command`` is the voltage-mode actuation
    equivalent of the current command: V_meas + Z_eq (I_cmd - I_meas).
    """

    i_command: np.ndarray
    v_command: np.ndarray
    objective: float
    s1: float
    s2: float
    w_pgd: np.ndarray
    extraction_failed: bool = False
    projection_sweeps: int = 0


def controller_step(
    state: ControllerState,
    v_meas,
    i_meas,
    cfg: ControllerConfig,
    net: EquivalentNetwork,
) -> tuple[ControllerState, StepResult]:
    """Run one control cycle: estimate, descend, project, extract, re-lift.

    Projection failures propagate as NumericalError.  Extraction failures
    (transient round-off can push the projected outputs just outside the
    reachable set) fail safe: the previous current is held for one cycle and
    the step is flagged.
    """
    v = _as_dq_array(v_meas)
    im = _as_dq_array(i_meas)
    e_hat = estimate_grid_voltage(state.e_hat, v, im, net, cfg.estimator_gain)
    net_hat = net.with_source(e_hat)
    coeffs = coeffs_for_mode(cfg.mode, net_hat)
    mats = matrices_from_coeffs(coeffs)

    # current state is rank-1, so its traces are just the output quadratics
    s1k, s2k = coeffs.outputs(state.i_dq)
    e1 = s1k - cfg.s1_setpoint
    e2 = s2k - cfg.s2_setpoint
    ik = state.i_dq
    f_k = (0.5 * e1 * e1 + cfg.gamma * 0.5 * e2 * e2
           + cfg.rho * (ik[0] * ik[0] + ik[1] * ik[1] + 1.0))

    g = e1 * mats.m1 + cfg.gamma * e2 * mats.m2
    a_step = smallsym.pack(state.w - cfg.step_size * g)
    rho_a = cfg.step_size * cfg.rho
    a_step = (a_step[0] - rho_a, a_step[1], a_step[2], a_step[3] - rho_a, a_step[4],
              a_step[5] - rho_a)
    packed, sweeps = smallsym.project_lift_set(
        a_step, cfg.i_max * cfg.i_max, tol=_PROJECTION_TOL, max_sweeps=_PROJECTION_SWEEP_CAP
    )
    w_pgd = np.array(smallsym.unpack(packed))
    s1p = float(np.sum(mats.m1 * w_pgd))
    s2p = float(np.sum(mats.m2 * w_pgd))

    extraction_failed = False
    try:
        i_new = extract_current(s1p, s2p, coeffs)
    except InfeasibleOutputsError:
        i_new = state.i_dq.copy()
        extraction_failed = True

    r, x = net.r_eq, net.x_eq
    di = i_new - im
    v_command = np.array([
        v[0] + r * di[0] - x * di[1],
        v[1] + x * di[0] + r * di[1],
    ])
    new_state = ControllerState(
        i_dq=i_new, e_hat=e_hat, w=lift(i_new), step_count=state.step_count + 1
    )
    result = StepResult(
        i_command=i_new,
        v_command=v_command,
        objective=f_k,
        s1=s1p,
        s2=s2p,
        w_pgd=w_pgd,
        extraction_failed=extraction_failed,
        projection_sweeps=sweeps,
    )
    return new_state, result
