"""Per-category plasticity constraints."""

from .battery import (
    DeadlineViolation,
    IdealBatteryParams,
    IsClusterParams,
    RicClusterParams,
    allowed_moves,
    deadline_feasible,
    neighbor_set,
)
from .nid import CausalityError, NidClusterParams, check_nid_trajectory, nid_load, resample_pulse
from .tcl import (
    CoarseGrid,
    CoarseTclState,
    DegenerateGridError,
    TclClusterParams,
    TclDraw,
    TclSwitchState,
    ThermalMapping,
    UnreachableBoundaryError,
    coarse_cluster,
    duty_cycle,
    expected_switches,
    off_time,
    on_time,
    switch_deadlines,
    tcl_sample_switches,
    tcl_switch_deadline,
    tcl_transition_pmf,
    transition_matrices,
)
