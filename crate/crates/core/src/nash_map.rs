//! The Nash improvement map on behavioral profiles.
//!
//! For every (player, state, action) the map adds the one-shot deviation gain
//! to the current probability and renormalizes:
//!
//! ```text
//! f(pi)^i(s, a) = (pi^i(s, a) + D^i(s, a)) / (1 + sum_b D^i(s, b))
//! D^i(s, a)     = max(0, V^{pi}_{pi^i(s,a)=1}(s) - V^{pi}(s))
//! ```
//!
//! Fixed points of the map are exactly the Markov perfect equilibria.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::game::{deviation_value_unchecked, value_functions_unchecked, StochasticGame, StrategyProfile};

/// Raw deviation improvements at or below this are treated as zero.
pub const GAIN_CLAMP: f64 = 1e-12;

/// One-shot deviation gains, `gains[player][state][action]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainTable {
    gains: Vec<Vec<Vec<f64>>>,
}

impl GainTable {
    pub fn get(&self, player: usize, state: usize, action: usize) -> f64 {
        self.gains[player][state][action]
    }

    pub fn row(&self, player: usize, state: usize) -> &[f64] {
        &self.gains[player][state]
    }

    pub fn max(&self) -> f64 {
        self.entries().fold(0.0, f64::max)
    }

    pub fn entries(&self) -> impl Iterator<Item = f64> + '_ {
        self.gains.iter().flatten().flatten().copied()
    }

    pub fn is_zero(&self) -> bool {
        self.entries().all(|g| g == 0.0)
    }
}

pub fn gain_table(game: &StochasticGame, pi: &StrategyProfile) -> Result<GainTable> {
    pi.check_shape(game)?;
    let values = value_functions_unchecked(game, pi);
    let gains = (0..game.num_players())
        .map(|i| {
            (0..game.num_states())
                .map(|s| {
                    (0..game.num_actions(i))
                        .map(|a| {
                            let diff = deviation_value_unchecked(game, pi, i, s, a) - values[i][s];
                            if diff > GAIN_CLAMP {
                                diff
                            } else {
                                0.0
                            }
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    Ok(GainTable { gains })
}

/// Applies the map given precomputed gains for `pi`.
pub fn apply_with_gains(pi: &StrategyProfile, gains: &GainTable) -> StrategyProfile {
    let probs = pi
        .probs()
        .iter()
        .zip(&gains.gains)
        .map(|(per_state, gain_rows)| {
            per_state
                .iter()
                .zip(gain_rows)
                .map(|(p, g)| {
                    let denom = 1.0 + g.iter().sum::<f64>();
                    p.iter().zip(g).map(|(pa, ga)| (pa + ga) / denom).collect()
                })
                .collect()
        })
        .collect();
    StrategyProfile::from_probs_unchecked(probs)
}

pub fn apply_f(game: &StochasticGame, pi: &StrategyProfile) -> Result<StrategyProfile> {
    let gains = gain_table(game, pi)?;
    Ok(apply_with_gains(pi, &gains))
}

/// `||f(pi) - pi||_inf`.
pub fn residual(game: &StochasticGame, pi: &StrategyProfile) -> Result<f64> {
    Ok(apply_f(game, pi)?.distance(pi))
}

/// Per-coordinate displacement `f(pi) - pi`, laid out like the profile.
pub fn displacement(game: &StochasticGame, pi: &StrategyProfile) -> Result<Vec<Vec<Vec<f64>>>> {
    let image = apply_f(game, pi)?;
    Ok(image
        .probs()
        .iter()
        .zip(pi.probs())
        .map(|(fs, ps)| {
            fs.iter()
                .zip(ps)
                .map(|(f, p)| f.iter().zip(p).map(|(a, b)| a - b).collect())
                .collect()
        })
        .collect())
}

/// Closed-form Lipschitz constant `9 n S^2 A_max^2 R_max / (1 - gamma)^2` of
/// the map in the sup norm.
pub fn lipschitz_constant(game: &StochasticGame) -> f64 {
    let n = game.num_players() as f64;
    let s = game.num_states() as f64;
    let a = game.max_actions() as f64;
    let slack = 1.0 - game.gamma();
    9.0 * n * s * s * a * a * game.r_max() / (slack * slack)
}
