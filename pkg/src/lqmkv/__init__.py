"""Open-loop Nash equilibria of n-player linear-quadratic mean-field games."""

__version__ = "0.1.0"

from .equilibrium import (
    BestResponseLaw,
    EquilibriumLaw,
    OverrideProfile,
    PlayerLaw,
    StaticProfile,
    TabulatedProfile,
    analytic_cost,
    best_response,
    dispersion_path,
    mean_state_path,
    solve_nash,
    value,
)
from .errors import ConfigError, LQMKVError, SimulationError, SolverError, VerificationError
from .meanfield_fixedpoint import solve_fixed_point
from .model import CostSpec, DynamicsSpec, GameSpec, PlayerCost, game_from_dict, load_game, make_game, save_game, validate_assumptions
from .riccati import solve_riccati
from .simulate import PathEnsemble, SimConfig, estimate_cost, simulate
from .tracking_example import TrackingParams, build_game, closed_form, cross_check, sweep
from .verify import (
    VerificationReport,
    deviation_test,
    drift_check,
    epsilon_fit,
    equilibrium_drift,
    martingale_check,
    oracle_deterministic,
    verify_equilibrium,
)

__all__ = [
    "BestResponseLaw",
    "ConfigError",
    "CostSpec",
    "DynamicsSpec",
    "EquilibriumLaw",
    "GameSpec",
    "LQMKVError",
    "OverrideProfile",
    "PathEnsemble",
    "PlayerCost",
    "PlayerLaw",
    "SimConfig",
    "SimulationError",
    "SolverError",
    "StaticProfile",
    "TabulatedProfile",
    "TrackingParams",
    "VerificationError",
    "VerificationReport",
    "analytic_cost",
    "best_response",
    "build_game",
    "closed_form",
    "cross_check",
    "deviation_test",
    "dispersion_path",
    "drift_check",
    "epsilon_fit",
    "equilibrium_drift",
    "estimate_cost",
    "game_from_dict",
    "load_game",
    "make_game",
    "martingale_check",
    "mean_state_path",
    "oracle_deterministic",
    "save_game",
    "simulate",
    "solve_fixed_point",
    "solve_nash",
    "solve_riccati",
    "sweep",
    "validate_assumptions",
    "value",
    "verify_equilibrium",
]
