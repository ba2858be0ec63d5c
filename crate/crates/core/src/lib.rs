//! Markov perfect equilibria of finite discounted stochastic games: value
//! evaluation, the Nash improvement map, residual-based certification and a
//! simplicial search for approximate fixed points.

pub mod certify;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod game;
pub mod nash_map;
pub mod oracles;
pub mod random;
pub mod report;
pub mod simplicial;
pub mod solver;

pub use certify::{best_response_values, certify_profile, Certificate};
pub use error::{Error, Result};
pub use game::{deviation_value, value_function, StochasticGame, StrategyProfile, ValueVector};
pub use nash_map::{apply_f, gain_table, lipschitz_constant, residual, GainTable};
pub use simplicial::{find_stopping_simplex, GridProfile, GridSimplex};
pub use solver::{SolveOptions, SolveOutcome, Solver, SolverRegistry};
