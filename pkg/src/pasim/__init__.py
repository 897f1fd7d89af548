"""Multi-user pinching-antenna system toolkit.

Channel and rate models for three transmission structures (multiplexing,
division, switching), max-min fairness solvers built on penalty dual
decomposition, fixed-antenna baselines, and a Monte-Carlo experiment harness.
"""

from .scenario import (DEFAULT_CONFIG, Geometry, PlacementRegions, RfConfig,
                       Scenario, UserLayout, build_scenario, dbm_to_watts,
                       load_config, make_regions, sample_users, watts_to_dbm)
from .channel import (PinchingLayout, antenna_user_distance, effective_channel,
                      effective_channels, phase_phi, stacked_response,
                      uniform_layout, user_channel, waveguide_response)
from .rates import RateReport, min_rate, rate_wd, rate_wm, rate_ws
from .convex import (ConcaveQuadratic, NonConvergedError, SolveReport,
                     box_ordered_qp, maxmin_power_budget,
                     maxmin_quadratics_ball, solve_epigraph, time_allocation)
from .pdd import PddConfig, PddResult, pdd_solve
from .ws_unicast import (PlacementResult, mrt_beamformer, solve_unicast_ws,
                         two_stage_placement)
from .baselines import UlaGeometry, default_ula, fulldigital_mmf, hybrid_mmf, ula_channel

__all__ = [
    "DEFAULT_CONFIG", "Geometry", "PlacementRegions", "RfConfig", "Scenario",
    "UserLayout", "build_scenario", "dbm_to_watts", "load_config",
    "make_regions", "sample_users", "watts_to_dbm",
    "PinchingLayout", "antenna_user_distance", "effective_channel",
    "effective_channels", "phase_phi", "stacked_response", "uniform_layout",
    "user_channel", "waveguide_response",
    "RateReport", "min_rate", "rate_wd", "rate_wm", "rate_ws",
    "ConcaveQuadratic", "NonConvergedError", "SolveReport", "box_ordered_qp",
    "maxmin_power_budget", "maxmin_quadratics_ball", "solve_epigraph",
    "time_allocation",
    "PddConfig", "PddResult", "pdd_solve",
    "PlacementResult", "mrt_beamformer", "solve_unicast_ws", "two_stage_placement",
    "UlaGeometry", "default_ula", "fulldigital_mmf", "hybrid_mmf", "ula_channel",
]

__version__ = "0.1.0"
