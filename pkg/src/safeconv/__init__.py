"""Current-safe optimal setpoint tracking for grid-connected converters.

Library layout:

- ``dq_network``: quasi-static dq-frame plant model (impedances, Thevenin
  reduction, output quadratics).
- ``feasible_region``: the convex feasible output region, its sampling,
  convexity certification, and a brute-force nearest-feasible oracle.
- ``smallsym`` / ``sdp_controller``: the lifted-SDP projected-gradient
  controller with rank-1 current extraction and online source estimation.
- ``droop_controller``: the saturated droop baseline.
- ``network_sim``: single-bus and multi-bus scenario engines.
- ``scenario`` / ``reporting`` / ``cli``: scenario files, presets, CSV and
  summary emission, command-line entry point.
"""

from .dq_network import (
    DqVector,
    EquivalentNetwork,
    FilterLineParams,
    compute_outputs,
    impedance_matrix,
    terminal_voltage,
    thevenin_reduce,
)
from .errors import (
    ConfigurationError,
    InfeasibleOutputsError,
    NumericalError,
    SafeconvError,
    ScenarioError,
)
from .feasible_region import (
    TrackingMode,
    coeffs_for_mode,
    convexity_check,
    nearest_feasible,
    sample_boundary,
)
from .sdp_controller import (
    ControllerConfig,
    ControllerState,
    build_objective_matrices,
    controller_step,
    estimate_grid_voltage,
    extract_current,
    initial_state,
    lift,
    objective_and_gradient,
    project_feasible_lift,
    project_psd,
)
from .droop_controller import DroopParams, DroopState, droop_step, lowpass, saturate
from .network_sim import (
    BranchSpec,
    BusSpec,
    DroopControllerSpec,
    GridVoltageScale,
    InverterAttachment,
    NetworkCase,
    NetworkScenario,
    NoiseBurst,
    OcController,
    SetpointChange,
    SingleBusScenario,
    build_admittance,
    frequency_trace,
    local_thevenin,
    run_network,
    run_single_bus,
)

__version__ = "0.1.0"
