//! Brute-force reference computations used to cross-check the main modules.
//!
//! Nothing here calls into the marginalisation or best-response code it is
//! meant to validate: joint actions are re-enumerated explicitly, policies
//! are enumerated exhaustively and values are also obtained by truncated
//! iteration.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{StochasticGame, StrategyProfile, ValueVector};
use crate::nash_map::{apply_f, residual};
use crate::random::{random_nearby, random_profile, rng};
use crate::simplicial::{grid_points, grid_size, GridProfile, MAX_GRID_POINTS};

/// Largest number of deterministic policies enumerated.
pub const MAX_POLICIES: u128 = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct JointExpectation {
    /// `r^{i,pi}(s)`
    pub reward: Vec<f64>,
    /// `P^pi(s'|s)` as `transition[s][s']`
    pub transition: Vec<Vec<f64>>,
}

/// Calls `f(actions)` for every action tuple, last player fastest.
fn for_each_tuple(sizes: &[usize], f: &mut dyn FnMut(&[usize])) {
    fn rec(sizes: &[usize], prefix: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if prefix.len() == sizes.len() {
            f(prefix);
            return;
        }
        for a in 0..sizes[prefix.len()] {
            prefix.push(a);
            rec(sizes, prefix, f);
            prefix.pop();
        }
    }
    rec(sizes, &mut Vec::with_capacity(sizes.len()), f);
}

fn row_major(sizes: &[usize], actions: &[usize]) -> usize {
    let mut index = 0;
    let mut stride = 1;
    for (a, m) in actions.iter().zip(sizes).rev() {
        index += a * stride;
        stride *= m;
    }
    index
}

/// Recomputes `r^{i,pi}` and `P^pi` by summing over explicit action tuples.
pub fn enumerate_joint_expectation(
    game: &StochasticGame,
    pi: &StrategyProfile,
    player: usize,
) -> Result<JointExpectation> {
    pi.check_shape(game)?;
    game.check_player(player)?;
    let sizes = game.action_counts();
    let n = game.num_states();
    let mut reward = vec![0.0; n];
    let mut transition = vec![vec![0.0; n]; n];
    for s in 0..n {
        for_each_tuple(&sizes, &mut |acts| {
            let j = row_major(&sizes, acts);
            let mut w = 1.0;
            for (i, &a) in acts.iter().enumerate() {
                w *= pi.get(i, s, a);
            }
            reward[s] += w * game.reward(player, s, j);
            for (t, &q) in game.transition(s, j).iter().enumerate() {
                transition[s][t] += w * q;
            }
        });
    }
    Ok(JointExpectation { reward, transition })
}

/// `sum_{t < horizon} gamma^t (P^pi)^t r^{i,pi}` by repeated backups.
pub fn truncated_value(
    game: &StochasticGame,
    pi: &StrategyProfile,
    player: usize,
    horizon: usize,
) -> Result<ValueVector> {
    if horizon < 1 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let JointExpectation { reward, transition } = enumerate_joint_expectation(game, pi, player)?;
    let mut v = vec![0.0; reward.len()];
    for _ in 0..horizon {
        v = (0..reward.len())
            .map(|s| reward[s] + game.gamma() * transition[s].iter().zip(&v).map(|(p, x)| p * x).sum::<f64>())
            .collect();
    }
    Ok(ValueVector(v))
}

/// Best value from every state over all deterministic stationary policies of
/// `player` against the frozen others, each evaluated by a linear solve.
pub fn enumerate_deterministic_policies(
    game: &StochasticGame,
    pi_others: &StrategyProfile,
    player: usize,
) -> Result<ValueVector> {
    pi_others.check_shape(game)?;
    game.check_player(player)?;
    let n = game.num_states();
    let m = game.num_actions(player);
    let count = (m as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if count > MAX_POLICIES {
        return Err(Error::TooLarge {
            size: count,
            limit: MAX_POLICIES,
        });
    }
    let mut best = vec![f64::NEG_INFINITY; n];
    for policy_index in 0..count as usize {
        let mut code = policy_index;
        let policy: Vec<usize> = (0..n)
            .map(|_| {
                let a = code % m;
                code /= m;
                a
            })
            .collect();
        let mut probs = pi_others.probs().to_vec();
        for (s, &a) in policy.iter().enumerate() {
            probs[player][s] = (0..m).map(|b| if b == a { 1.0 } else { 0.0 }).collect();
        }
        let deviated = StrategyProfile::from_probs_unchecked(probs);
        let JointExpectation { reward, transition } = enumerate_joint_expectation(game, &deviated, player)?;
        let a = DMatrix::from_fn(n, n, |s, t| {
            let id = if s == t { 1.0 } else { 0.0 };
            id - game.gamma() * transition[s][t]
        });
        let v = a
            .lu()
            .solve(&DVector::from_vec(reward))
            .expect("I - gamma P is nonsingular for gamma < 1");
        for (b, x) in best.iter_mut().zip(v.iter()) {
            *b = b.max(*x);
        }
    }
    Ok(ValueVector(best))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupportEnumeration {
    pub equilibria: Vec<StrategyProfile>,
    /// Set when an indifference equation is singular; only the pure checks
    /// are reported in that case.
    pub degenerate: bool,
}

const SUPPORT_TOL: f64 = 1e-12;

/// All Nash equilibria of a 2x2 single-state undiscounted game: pure profiles
/// that are mutual best responses, plus the fully mixed solution of the
/// indifference equations when it lies strictly inside both simplices.
pub fn support_enumeration_2x2(game: &StochasticGame) -> Result<SupportEnumeration> {
    if game.num_players() != 2 || game.num_states() != 1 || game.gamma() != 0.0 || game.action_counts() != [2, 2] {
        return Err(Error::InvalidArgument(
            "support enumeration needs two players, one state, gamma = 0 and 2x2 actions".into(),
        ));
    }
    let row = |a: usize, b: usize| game.reward(0, 0, 2 * a + b);
    let col = |a: usize, b: usize| game.reward(1, 0, 2 * a + b);
    let mut equilibria = Vec::new();
    for a in 0..2 {
        for b in 0..2 {
            let row_ok = row(a, b) + SUPPORT_TOL >= row(1 - a, b);
            let col_ok = col(a, b) + SUPPORT_TOL >= col(a, 1 - b);
            if row_ok && col_ok {
                equilibria.push(StrategyProfile::pure(game, &[vec![a], vec![b]])?);
            }
        }
    }
    // p: row weight on action 0 making the column player indifferent
    let p_den = col(0, 0) - col(1, 0) - col(0, 1) + col(1, 1);
    // q: column weight on action 0 making the row player indifferent
    let q_den = row(0, 0) - row(0, 1) - row(1, 0) + row(1, 1);
    let degenerate = p_den.abs() < SUPPORT_TOL || q_den.abs() < SUPPORT_TOL;
    if !degenerate {
        let p = (col(1, 1) - col(1, 0)) / p_den;
        let q = (row(1, 1) - row(0, 1)) / q_den;
        if p > SUPPORT_TOL && p < 1.0 - SUPPORT_TOL && q > SUPPORT_TOL && q < 1.0 - SUPPORT_TOL {
            equilibria.push(StrategyProfile::from_probs_unchecked(vec![
                vec![vec![p, 1.0 - p]],
                vec![vec![q, 1.0 - q]],
            ]));
        }
    }
    Ok(SupportEnumeration { equilibria, degenerate })
}

/// `||f(pi1) - f(pi2)|| / ||pi1 - pi2||`, or `None` for identical profiles.
pub fn lipschitz_ratio(game: &StochasticGame, pi1: &StrategyProfile, pi2: &StrategyProfile) -> Result<Option<f64>> {
    let delta = pi1.distance(pi2);
    if delta == 0.0 {
        return Ok(None);
    }
    let f1 = apply_f(game, pi1)?;
    let f2 = apply_f(game, pi2)?;
    Ok(Some(f1.distance(&f2) / delta))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzProbe {
    pub max_ratio: f64,
    pub pairs: usize,
}

/// Largest observed `||f(pi1) - f(pi2)|| / ||pi1 - pi2||` over `samples`
/// seeded random pairs. Odd samples are independent profiles, even samples
/// nearby pairs at distance up to 1e-3.
pub fn finite_difference_lipschitz(game: &StochasticGame, samples: usize, seed: u64) -> Result<LipschitzProbe> {
    if samples < 1 {
        return Err(Error::InvalidArgument("at least one sample is required".into()));
    }
    let mut rng = rng(seed);
    let mut max_ratio: f64 = 0.0;
    let mut pairs = 0;
    for k in 0..samples {
        let pi1 = random_profile(&mut rng, game);
        let pi2 = if k % 2 == 0 {
            random_profile(&mut rng, game)
        } else {
            random_nearby(&mut rng, game, &pi1, 1e-3)
        };
        if let Some(ratio) = lipschitz_ratio(game, &pi1, &pi2)? {
            max_ratio = max_ratio.max(ratio);
            pairs += 1;
        }
    }
    Ok(LipschitzProbe { max_ratio, pairs })
}

/// Grid point of least residual, first in lexicographic order among ties.
pub fn grid_residual_argmin(game: &StochasticGame, d: u32) -> Result<(GridProfile, f64)> {
    let size = grid_size(game, d);
    if size > MAX_GRID_POINTS {
        return Err(Error::TooLarge {
            size,
            limit: MAX_GRID_POINTS,
        });
    }
    let points: Vec<GridProfile> = grid_points(game, d)?.collect();
    let residuals = points
        .par_iter()
        .map(|p| residual(game, &p.to_profile()))
        .collect::<Result<Vec<f64>>>()?;
    let (best, &res) = residuals
        .iter()
        .enumerate()
        .fold(None, |acc: Option<(usize, &f64)>, (k, r)| match acc {
            Some((_, b)) if *b <= *r => acc,
            _ => Some((k, r)),
        })
        .expect("grid is nonempty");
    Ok((points[best].clone(), res))
}

/// Value of the 2x2 zero-sum matrix game `a` for the maximising row player.
pub fn matrix_game_value_2x2(a: [[f64; 2]; 2]) -> f64 {
    let maxmin = (0..2).map(|i| a[i][0].min(a[i][1])).fold(f64::NEG_INFINITY, f64::max);
    let minmax = (0..2).map(|j| a[0][j].max(a[1][j])).fold(f64::INFINITY, f64::min);
    if maxmin >= minmax {
        return maxmin;
    }
    (a[0][0] * a[1][1] - a[0][1] * a[1][0]) / (a[0][0] + a[1][1] - a[0][1] - a[1][0])
}

/// Minimax (Shapley) value iteration for a two-player constant-sum game with
/// two actions per player. Returns the first player's equilibrium values.
pub fn minimax_value_iteration(game: &StochasticGame, tol: f64, max_iters: usize) -> Result<ValueVector> {
    if game.num_players() != 2 || game.action_counts() != [2, 2] {
        return Err(Error::InvalidArgument(
            "minimax iteration needs two players with two actions".into(),
        ));
    }
    let n = game.num_states();
    let mut v = vec![0.0; n];
    for _ in 0..max_iters {
        let next: Vec<f64> = (0..n)
            .map(|s| {
                let mut m = [[0.0; 2]; 2];
                for (a, row) in m.iter_mut().enumerate() {
                    for (b, cell) in row.iter_mut().enumerate() {
                        let j = 2 * a + b;
                        let cont: f64 = game.transition(s, j).iter().zip(&v).map(|(p, x)| p * x).sum();
                        *cell = game.reward(0, s, j) + game.gamma() * cont;
                    }
                }
                matrix_game_value_2x2(m)
            })
            .collect();
        let change = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if change <= tol {
            break;
        }
    }
    Ok(ValueVector(v))
}
