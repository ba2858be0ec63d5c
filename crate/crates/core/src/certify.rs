//! Certification of approximate Markov perfect equilibria.
//!
//! Measured regrets come from exact best-response solves of the MDP each
//! player faces when the others are frozen. Theoretical bounds chain the
//! fixed-point residual into one-shot deviation gains and then into regrets:
//!
//! ```text
//! eps'          = eps * (1 + A_max R_max / (1 - gamma))
//! gain bound    = A_max * (sqrt(eps') / (1 - gamma) + R_max sqrt(eps') + eps')
//! regret bound  = gain bound / (1 - gamma)
//! ```

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::game::{solve_bellman, value_functions_unchecked, StochasticGame, StrategyProfile, ValueVector};
use crate::nash_map::{apply_with_gains, gain_table, lipschitz_constant};

const GREEDY_TIE_TOL: f64 = 1e-12;
const MAX_POLICY_ITERATIONS: usize = 10_000;

/// The single-agent MDP seen by `player` when every other player is frozen.
#[derive(Debug, Clone)]
pub struct InducedMdp {
    pub gamma: f64,
    /// `reward[s][a]`
    pub reward: Vec<Vec<f64>>,
    /// `transition[s][a][s']`
    pub transition: Vec<Vec<Vec<f64>>>,
}

impl InducedMdp {
    pub fn new(game: &StochasticGame, pi: &StrategyProfile, player: usize) -> Result<Self> {
        pi.check_shape(game)?;
        game.check_player(player)?;
        let num_states = game.num_states();
        let m = game.num_actions(player);
        let mut reward = vec![vec![0.0; m]; num_states];
        let mut transition = vec![vec![vec![0.0; num_states]; m]; num_states];
        for s in 0..num_states {
            for j in 0..game.num_joint_actions() {
                let acts = game.joint_actions(j);
                let w: f64 = acts
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| *k != player)
                    .map(|(k, &a)| pi.get(k, s, a))
                    .product();
                if w == 0.0 {
                    continue;
                }
                let a = acts[player];
                reward[s][a] += w * game.reward(player, s, j);
                for (t, &q) in game.transition(s, j).iter().enumerate() {
                    transition[s][a][t] += w * q;
                }
            }
        }
        Ok(InducedMdp {
            gamma: game.gamma(),
            reward,
            transition,
        })
    }

    pub fn num_states(&self) -> usize {
        self.reward.len()
    }

    /// `Q(s, a) = r(s, a) + gamma sum_s' P(s'|s, a) V(s')`.
    pub fn q_value(&self, values: &[f64], state: usize, action: usize) -> f64 {
        let cont: f64 = self.transition[state][action]
            .iter()
            .zip(values)
            .map(|(p, v)| p * v)
            .sum();
        self.reward[state][action] + self.gamma * cont
    }

    /// Exact value of a deterministic stationary policy.
    pub fn evaluate(&self, game: &StochasticGame, policy: &[usize]) -> Vec<f64> {
        let n = self.num_states();
        let mut p = nalgebra::DMatrix::zeros(n, n);
        let mut r = vec![0.0; n];
        for s in 0..n {
            r[s] = self.reward[s][policy[s]];
            for (t, &q) in self.transition[s][policy[s]].iter().enumerate() {
                p[(s, t)] = q;
            }
        }
        solve_bellman(game, &p, &r)
    }

    /// Lowest-index action whose Q-value is within tolerance of the best.
    fn greedy(&self, values: &[f64]) -> Vec<usize> {
        (0..self.num_states())
            .map(|s| {
                let q: Vec<f64> = (0..self.reward[s].len()).map(|a| self.q_value(values, s, a)).collect();
                let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let tol = GREEDY_TIE_TOL * (1.0 + best.abs());
                q.iter().position(|&x| x >= best - tol).unwrap_or(0)
            })
            .collect()
    }

    /// `max_s |max_a Q(s, a) - V(s)|`.
    pub fn bellman_optimality_residual(&self, values: &[f64]) -> f64 {
        (0..self.num_states())
            .map(|s| {
                let best = (0..self.reward[s].len())
                    .map(|a| self.q_value(values, s, a))
                    .fold(f64::NEG_INFINITY, f64::max);
                (best - values[s]).abs()
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestResponse {
    pub values: ValueVector,
    pub policy: Vec<usize>,
    pub iterations: usize,
}

/// Optimal values of the induced MDP by policy iteration with exact
/// evaluation, stopping when the greedy policy repeats.
pub fn best_response(game: &StochasticGame, pi: &StrategyProfile, player: usize) -> Result<BestResponse> {
    let mdp = InducedMdp::new(game, pi, player)?;
    let zeros = vec![0.0; mdp.num_states()];
    let mut policy = mdp.greedy(&zeros);
    let mut values = mdp.evaluate(game, &policy);
    let mut iterations = 1;
    while iterations < MAX_POLICY_ITERATIONS {
        let next = mdp.greedy(&values);
        if next == policy {
            break;
        }
        policy = next;
        values = mdp.evaluate(game, &policy);
        iterations += 1;
    }
    Ok(BestResponse {
        values: ValueVector(values),
        policy,
        iterations,
    })
}

pub fn best_response_values(game: &StochasticGame, pi: &StrategyProfile, player: usize) -> Result<ValueVector> {
    Ok(best_response(game, pi, player)?.values)
}

/// `eps * (1 + A_max R_max / (1 - gamma))`.
pub fn epsilon_prime(game: &StochasticGame, eps: f64) -> f64 {
    eps * (1.0 + game.max_actions() as f64 * game.r_max() / (1.0 - game.gamma()))
}

/// Upper bound on every one-shot deviation gain of a profile whose residual
/// is at most `eps`.
pub fn residual_to_gain_bound(game: &StochasticGame, eps: f64) -> f64 {
    let ep = epsilon_prime(game, eps);
    let root = ep.sqrt();
    game.max_actions() as f64 * (root / (1.0 - game.gamma()) + game.r_max() * root + ep)
}

/// Upper bound on the regret of a profile whose residual is at most `eps`.
pub fn residual_to_mpe_bound(game: &StochasticGame, eps: f64) -> f64 {
    residual_to_gain_bound(game, eps) / (1.0 - game.gamma())
}

/// Grid size sufficient for a `1/L`-approximate equilibrium:
/// `ceil(32 A_max^5 R_max^3 (lambda + 1) L^2 / (1 - gamma)^5)`, at least 1.
/// Saturates at `u64::MAX`.
pub fn choose_d(game: &StochasticGame, l: u64) -> u64 {
    let a = game.max_actions() as f64;
    let r = game.r_max();
    let lambda = lipschitz_constant(game);
    let l = l as f64;
    let raw = 32.0 * a.powi(5) * r.powi(3) * (lambda + 1.0) * l * l / (1.0 - game.gamma()).powi(5);
    if !raw.is_finite() || raw >= u64::MAX as f64 {
        return u64::MAX;
    }
    // values within floating noise of an integer are that integer
    let nearest = raw.round();
    let d = if (raw - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest
    } else {
        raw.ceil()
    };
    (d as u64).max(1)
}

/// Residual bound `A_max^2 (lambda + 1) / d` at the vertices of a stopping
/// simplex on the grid of size `d`.
pub fn stopping_bound(game: &StochasticGame, d: u64) -> f64 {
    let a = game.max_actions() as f64;
    a * a * (lipschitz_constant(game) + 1.0) / d as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub residual: f64,
    pub max_gain: f64,
    /// `per_state_regret[player][state] = V*(s) - V^pi(s)`.
    pub per_state_regret: Vec<Vec<f64>>,
    pub values: Vec<Vec<f64>>,
    pub best_response_values: Vec<Vec<f64>>,
    pub epsilon_bound: f64,
    pub epsilon_achieved: f64,
    pub target_epsilon: Option<f64>,
    pub verdict: Option<bool>,
    pub lipschitz: f64,
    pub grid_d: Option<u64>,
    pub stopping_bound: Option<f64>,
    pub required_d: Option<u64>,
}

impl Certificate {
    /// Records the grid size a solver worked on, with its stopping bound.
    pub fn with_grid(mut self, game: &StochasticGame, d: u64) -> Self {
        self.grid_d = Some(d);
        self.stopping_bound = Some(stopping_bound(game, d));
        self
    }

    /// Records the grid size the analysis asks for to reach `1/L`.
    pub fn with_required_d(mut self, game: &StochasticGame, l: u64) -> Self {
        self.required_d = Some(choose_d(game, l));
        self
    }
}

/// Certifies a profile from scratch. The verdict (when `target` is given) is
/// decided by the measured regret, never by the theoretical bound.
pub fn certify_profile(game: &StochasticGame, pi: &StrategyProfile, target: Option<f64>) -> Result<Certificate> {
    let gains = gain_table(game, pi)?;
    let residual = apply_with_gains(pi, &gains).distance(pi);
    let values = value_functions_unchecked(game, pi);
    let mut per_state_regret = Vec::with_capacity(game.num_players());
    let mut best_values = Vec::with_capacity(game.num_players());
    for (i, v) in values.iter().enumerate() {
        let star = best_response_values(game, pi, i)?;
        per_state_regret.push(star.iter().zip(v.iter()).map(|(b, c)| b - c).collect::<Vec<_>>());
        best_values.push(star.0);
    }
    let epsilon_achieved = per_state_regret.iter().flatten().copied().fold(0.0, f64::max);
    Ok(Certificate {
        residual,
        max_gain: gains.max(),
        per_state_regret,
        values: values.into_iter().map(|v| v.0).collect(),
        best_response_values: best_values,
        epsilon_bound: residual_to_mpe_bound(game, residual),
        epsilon_achieved,
        target_epsilon: target,
        verdict: target.map(|t| epsilon_achieved <= t),
        lipschitz: lipschitz_constant(game),
        grid_d: None,
        stopping_bound: None,
        required_d: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretCheck {
    pub max_gain: f64,
    pub max_regret: f64,
    pub bound: f64,
    pub passed: bool,
}

/// Checks that every best-response regret is at most the largest one-shot
/// gain divided by `1 - gamma` (slack 1e-8).
pub fn gain_to_regret_check(game: &StochasticGame, pi: &StrategyProfile) -> Result<RegretCheck> {
    let max_gain = gain_table(game, pi)?.max();
    let values = value_functions_unchecked(game, pi);
    let mut max_regret = f64::NEG_INFINITY;
    for (i, v) in values.iter().enumerate() {
        let star = best_response_values(game, pi, i)?;
        for (b, c) in star.iter().zip(v.iter()) {
            max_regret = max_regret.max(b - c);
        }
    }
    let bound = max_gain / (1.0 - game.gamma());
    Ok(RegretCheck {
        max_gain,
        max_regret,
        bound,
        passed: max_regret <= bound + 1e-8,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;

    #[test]
    fn best_response_of_bandit_and_pennies() {
        let g = corpus::single_agent_bandit(vec![1.0, 0.0]);
        let v = best_response_values(&g, &StrategyProfile::uniform(&g), 0).unwrap();
        assert_eq!(v.0, vec![1.0]);

        let g = corpus::matching_pennies();
        let pi = StrategyProfile::uniform(&g);
        for i in 0..2 {
            assert!((best_response_values(&g, &pi, i).unwrap()[0] - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn best_response_on_chain_moves_then_stays() {
        let g = corpus::single_agent_chain();
        let br = best_response(&g, &StrategyProfile::uniform(&g), 0).unwrap();
        assert_eq!(br.policy, vec![1, 0]);
        assert!((br.values[0] - 9.0).abs() < 1e-9);
        assert!((br.values[1] - 10.0).abs() < 1e-9);
    }

    #[test]
    fn bound_arithmetic() {
        // A_max = 2, R_max = 1, gamma = 0.5
        let g = corpus::two_state_example();
        assert_eq!(epsilon_prime(&g, 0.0), 0.0);
        assert!((epsilon_prime(&g, 0.01) - 0.05).abs() < 1e-15);
        let expected = 2.0 * (0.05_f64.sqrt() / 0.5 + 0.05_f64.sqrt() + 0.05);
        assert!((residual_to_gain_bound(&g, 0.01) - expected).abs() < 1e-14);
        assert!((residual_to_gain_bound(&g, 0.01) - 1.4416).abs() < 1e-4);
        assert!((residual_to_mpe_bound(&g, 0.01) - 2.8833).abs() < 1e-4);
        assert_eq!(residual_to_mpe_bound(&g, 0.0), 0.0);
    }

    #[test]
    fn epsilon_prime_without_rewards() {
        let g = corpus::single_agent_bandit(vec![0.0, 0.0]);
        assert_eq!(epsilon_prime(&g, 0.3), 0.3);
        assert_eq!(choose_d(&g, 5), 1);
    }

    #[test]
    fn gain_bound_is_monotone() {
        let g = corpus::two_state_example();
        let mut last = 0.0;
        for k in 0..=100 {
            let b = residual_to_gain_bound(&g, k as f64 / 100.0);
            assert!(b >= last);
            last = b;
        }
    }

    #[test]
    fn choose_d_reference_values() {
        assert_eq!(choose_d(&corpus::single_agent_bandit(vec![1.0, 0.0]), 1), 37888);
        assert_eq!(choose_d(&corpus::two_state_example(), 10), 3_778_150_400);
        let g = corpus::single_agent_bandit(vec![1.0, 0.0]);
        assert_eq!(choose_d(&g, 3), 9 * 37888);
    }

    #[test]
    fn stopping_bound_value() {
        let g = corpus::single_agent_bandit(vec![1.0, 0.0]);
        assert_eq!(stopping_bound(&g, 8), 18.5);
    }

    #[test]
    fn pennies_certificates() {
        let g = corpus::matching_pennies();
        let cert = certify_profile(&g, &StrategyProfile::uniform(&g), Some(1e-6)).unwrap();
        assert!(cert.epsilon_achieved.abs() < 1e-12);
        assert_eq!(cert.verdict, Some(true));

        let pure = StrategyProfile::pure(&g, &[vec![0], vec![0]]).unwrap();
        let cert = certify_profile(&g, &pure, Some(0.5)).unwrap();
        assert!((cert.epsilon_achieved - 1.0).abs() < 1e-12);
        assert!((cert.per_state_regret[1][0] - 1.0).abs() < 1e-12);
        assert_eq!(cert.per_state_regret[0][0], 0.0);
        assert_eq!(cert.verdict, Some(false));
    }

    #[test]
    fn dominant_equilibrium_certifies_for_any_target() {
        let g = corpus::prisoners_dilemma();
        let pi = StrategyProfile::pure(&g, &[vec![1], vec![1]]).unwrap();
        let cert = certify_profile(&g, &pi, Some(1e-12)).unwrap();
        assert_eq!(cert.epsilon_achieved, 0.0);
        assert_eq!(cert.verdict, Some(true));
        let check = gain_to_regret_check(&g, &pi).unwrap();
        assert!(check.passed);
        assert_eq!(check.max_gain, 0.0);
    }
}
