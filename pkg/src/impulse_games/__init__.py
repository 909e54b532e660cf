"""Band equilibria for stochastic impulse-control games: closed-form threshold
solvers, a grid oracle, equilibrium checks, N-player Monte Carlo and the
mean-field fixed point."""

from .errors import (
    CascadeOverflow,
    DegenerateBand,
    GridTooSmall,
    IllPosed,
    ImpulseGamesError,
    NoConvergence,
)
from .mfg import MfgSolution, gamma_map, solve_mfg, validate_mfg_by_simulation
from .model import (
    BandPolicy,
    CostSpec,
    GameParams,
    PiecewiseValue,
    ValueKind,
    eval_curvature,
    eval_slope,
    eval_value,
    player_values,
)
from .oracle import Grid, GridSolution, default_grid, solve_qvi_grid
from .sim import (
    InitDist,
    PlayerStrategy,
    SimConfig,
    SimStats,
    epsilon_nash_gap,
    jump_chain_stationary,
    simulate_nplayer,
    simulate_path,
)
from .solver import (
    SolveReport,
    solve_mfg_thresholds,
    solve_single_player,
    solve_two_player_dictator,
    solve_two_player_symmetric,
)
from .verifier import CheckReport, check_opponent_condition, check_qvi, check_symmetry

__version__ = "0.1.0"
