//! Stochastic game model, behavioral strategy profiles and exact policy
//! evaluation.
//!
//! A game has `n` players, `S` states and per-player action sets. Joint
//! actions are indexed row-major over players in declared order, so player 0
//! is the most significant digit. Values are obtained by solving the Bellman
//! system `(I - gamma P) V = r` with a dense LU factorization.

use std::ops::Deref;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on probability sums for data read from input.
pub const INPUT_PROB_TOL: f64 = 1e-12;
/// Tolerance on probability sums for data produced by arithmetic.
pub const ARITH_PROB_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerSpec {
    pub actions: Vec<String>,
}

/// On-disk game document. `transitions[s][joint][s']` and
/// `rewards[player][s][joint]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameFile {
    pub gamma: f64,
    pub states: Vec<String>,
    pub players: Vec<PlayerSpec>,
    pub transitions: Vec<Vec<Vec<f64>>>,
    pub rewards: Vec<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_max: Option<f64>,
}

/// A validated finite discounted stochastic game.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticGame {
    gamma: f64,
    states: Vec<String>,
    actions: Vec<Vec<String>>,
    transitions: Vec<Vec<Vec<f64>>>,
    rewards: Vec<Vec<Vec<f64>>>,
    r_max: f64,
    r_max_given: bool,
    /// `joint_table[j][i]` is player i's action in joint action j.
    joint_table: Vec<Vec<usize>>,
}

/// Checks every structural constraint of a game document and builds the game.
/// The first violated constraint is reported.
pub fn validate_game(raw: GameFile) -> Result<StochasticGame> {
    let bad = |msg: String| Err(Error::InvalidGame(msg));

    if !raw.gamma.is_finite() || raw.gamma < 0.0 || raw.gamma >= 1.0 {
        return bad(format!("gamma must satisfy 0 <= gamma < 1, got {}", raw.gamma));
    }
    if raw.states.is_empty() {
        return bad("at least one state is required".into());
    }
    if raw.players.is_empty() {
        return bad("at least one player is required".into());
    }
    for (i, p) in raw.players.iter().enumerate() {
        if p.actions.is_empty() {
            return bad(format!("players[{i}] has no actions"));
        }
    }

    let num_states = raw.states.len();
    let num_joint: usize = raw.players.iter().map(|p| p.actions.len()).product();

    if raw.transitions.len() != num_states {
        return bad(format!(
            "transitions has {} entries, expected one per state ({num_states})",
            raw.transitions.len()
        ));
    }
    for (s, per_state) in raw.transitions.iter().enumerate() {
        if per_state.len() != num_joint {
            return bad(format!(
                "transitions[{s}] has {} joint actions, expected {num_joint}",
                per_state.len()
            ));
        }
        for (j, row) in per_state.iter().enumerate() {
            if row.len() != num_states {
                return bad(format!(
                    "transitions[{s}][{j}] has length {}, expected {num_states}",
                    row.len()
                ));
            }
            for (t, &p) in row.iter().enumerate() {
                if !p.is_finite() || p < 0.0 {
                    return bad(format!("transitions[{s}][{j}][{t}] = {p} is not a probability"));
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > INPUT_PROB_TOL {
                return bad(format!("transitions[{s}][{j}] sums to {sum}, expected 1"));
            }
        }
    }

    if raw.rewards.len() != raw.players.len() {
        return bad(format!(
            "rewards has {} entries, expected one per player ({})",
            raw.rewards.len(),
            raw.players.len()
        ));
    }
    let mut observed_max = 0.0_f64;
    for (i, per_player) in raw.rewards.iter().enumerate() {
        if per_player.len() != num_states {
            return bad(format!(
                "rewards[{i}] has {} states, expected {num_states}",
                per_player.len()
            ));
        }
        for (s, row) in per_player.iter().enumerate() {
            if row.len() != num_joint {
                return bad(format!(
                    "rewards[{i}][{s}] has {} joint actions, expected {num_joint}",
                    row.len()
                ));
            }
            for (j, &r) in row.iter().enumerate() {
                if !r.is_finite() || r < 0.0 {
                    return bad(format!("rewards[{i}][{s}][{j}] = {r} is negative or not finite"));
                }
                observed_max = observed_max.max(r);
            }
        }
    }

    let (r_max, r_max_given) = match raw.r_max {
        Some(bound) => {
            if !bound.is_finite() || bound < 0.0 {
                return bad(format!("r_max = {bound} must be a nonnegative number"));
            }
            if observed_max > bound {
                return bad(format!("reward {observed_max} exceeds r_max = {bound}"));
            }
            (bound, true)
        }
        None => (observed_max, false),
    };

    let sizes: Vec<usize> = raw.players.iter().map(|p| p.actions.len()).collect();
    let joint_table = (0..num_joint).map(|j| decode_joint(&sizes, j)).collect();

    Ok(StochasticGame {
        gamma: raw.gamma,
        states: raw.states,
        actions: raw.players.into_iter().map(|p| p.actions).collect(),
        transitions: raw.transitions,
        rewards: raw.rewards,
        r_max,
        r_max_given,
        joint_table,
    })
}

fn decode_joint(sizes: &[usize], mut joint: usize) -> Vec<usize> {
    let mut out = vec![0; sizes.len()];
    for (slot, &size) in out.iter_mut().zip(sizes).rev() {
        *slot = joint % size;
        joint /= size;
    }
    out
}

impl StochasticGame {
    pub fn from_file(raw: GameFile) -> Result<Self> {
        validate_game(raw)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        validate_game(serde_json::from_str(text)?)
    }

    pub fn to_file(&self) -> GameFile {
        GameFile {
            gamma: self.gamma,
            states: self.states.clone(),
            players: self.actions.iter().map(|a| PlayerSpec { actions: a.clone() }).collect(),
            transitions: self.transitions.clone(),
            rewards: self.rewards.clone(),
            r_max: self.r_max_given.then_some(self.r_max),
        }
    }

    pub fn num_players(&self) -> usize {
        self.actions.len()
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_actions(&self, player: usize) -> usize {
        self.actions[player].len()
    }

    pub fn action_counts(&self) -> Vec<usize> {
        self.actions.iter().map(Vec::len).collect()
    }

    pub fn max_actions(&self) -> usize {
        self.actions.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn num_joint_actions(&self) -> usize {
        self.joint_table.len()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn state_name(&self, state: usize) -> &str {
        &self.states[state]
    }

    pub fn state_names(&self) -> &[String] {
        &self.states
    }

    pub fn action_name(&self, player: usize, action: usize) -> &str {
        &self.actions[player][action]
    }

    /// Actions of each player in joint action `joint`.
    pub fn joint_actions(&self, joint: usize) -> &[usize] {
        &self.joint_table[joint]
    }

    /// Row-major index of a joint action.
    pub fn joint_index(&self, actions: &[usize]) -> usize {
        actions
            .iter()
            .zip(&self.actions)
            .fold(0, |acc, (&a, set)| acc * set.len() + a)
    }

    pub fn transition(&self, state: usize, joint: usize) -> &[f64] {
        &self.transitions[state][joint]
    }

    pub fn reward(&self, player: usize, state: usize, joint: usize) -> f64 {
        self.rewards[player][state][joint]
    }

    pub(crate) fn check_player(&self, player: usize) -> Result<()> {
        check_index("player", player, self.num_players())
    }

    pub(crate) fn check_state(&self, state: usize) -> Result<()> {
        check_index("state", state, self.num_states())
    }
}

pub(crate) fn check_index(what: &'static str, index: usize, size: usize) -> Result<()> {
    if index < size {
        Ok(())
    } else {
        Err(Error::IndexOutOfRange { what, index, size })
    }
}

/// Behavioral strategy profile: `probs[player][state][action]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyProfile {
    probs: Vec<Vec<Vec<f64>>>,
}

impl StrategyProfile {
    /// Builds a profile and checks it against the game at input tolerance.
    pub fn new(game: &StochasticGame, probs: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let profile = StrategyProfile { probs };
        profile.validate(game, INPUT_PROB_TOL)?;
        Ok(profile)
    }

    /// Wraps raw probabilities without validation. Callers own the invariants.
    pub fn from_probs_unchecked(probs: Vec<Vec<Vec<f64>>>) -> Self {
        StrategyProfile { probs }
    }

    pub fn uniform(game: &StochasticGame) -> Self {
        let probs = (0..game.num_players())
            .map(|i| {
                let m = game.num_actions(i);
                vec![vec![1.0 / m as f64; m]; game.num_states()]
            })
            .collect();
        StrategyProfile { probs }
    }

    /// Deterministic profile; `choice[player][state]` is the action played.
    pub fn pure(game: &StochasticGame, choice: &[Vec<usize>]) -> Result<Self> {
        if choice.len() != game.num_players() {
            return Err(Error::ShapeMismatch(format!(
                "{} players given, game has {}",
                choice.len(),
                game.num_players()
            )));
        }
        let mut probs = Vec::with_capacity(choice.len());
        for (i, per_state) in choice.iter().enumerate() {
            if per_state.len() != game.num_states() {
                return Err(Error::ShapeMismatch(format!(
                    "player {i}: {} states given, game has {}",
                    per_state.len(),
                    game.num_states()
                )));
            }
            let mut rows = Vec::with_capacity(per_state.len());
            for &a in per_state {
                check_index("action", a, game.num_actions(i))?;
                let mut row = vec![0.0; game.num_actions(i)];
                row[a] = 1.0;
                rows.push(row);
            }
            probs.push(rows);
        }
        Ok(StrategyProfile { probs })
    }

    pub fn check_shape(&self, game: &StochasticGame) -> Result<()> {
        if self.probs.len() != game.num_players() {
            return Err(Error::ShapeMismatch(format!(
                "profile has {} players, game has {}",
                self.probs.len(),
                game.num_players()
            )));
        }
        for (i, per_state) in self.probs.iter().enumerate() {
            if per_state.len() != game.num_states() {
                return Err(Error::ShapeMismatch(format!(
                    "profile player {i} has {} states, game has {}",
                    per_state.len(),
                    game.num_states()
                )));
            }
            for (s, row) in per_state.iter().enumerate() {
                if row.len() != game.num_actions(i) {
                    return Err(Error::ShapeMismatch(format!(
                        "profile player {i} state {s} has {} actions, game has {}",
                        row.len(),
                        game.num_actions(i)
                    )));
                }
            }
        }
        Ok(())
    }

    /// Shape check plus per-(player, state) simplex membership within `tol`.
    pub fn validate(&self, game: &StochasticGame, tol: f64) -> Result<()> {
        self.check_shape(game)?;
        for (i, per_state) in self.probs.iter().enumerate() {
            for (s, row) in per_state.iter().enumerate() {
                if let Some(p) = row.iter().find(|p| !p.is_finite() || **p < 0.0) {
                    return Err(Error::InvalidProfile(format!("probs[{i}][{s}] contains {p}")));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > tol {
                    return Err(Error::InvalidProfile(format!(
                        "probs[{i}][{s}] sums to {sum}, expected 1"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn probs(&self) -> &[Vec<Vec<f64>>] {
        &self.probs
    }

    pub fn into_probs(self) -> Vec<Vec<Vec<f64>>> {
        self.probs
    }

    pub fn get(&self, player: usize, state: usize, action: usize) -> f64 {
        self.probs[player][state][action]
    }

    pub fn distribution(&self, player: usize, state: usize) -> &[f64] {
        &self.probs[player][state]
    }

    pub fn distribution_mut(&mut self, player: usize, state: usize) -> &mut [f64] {
        &mut self.probs[player][state]
    }

    /// Copy of the profile in which `player` plays `action` with certainty at
    /// `state`; everything else is unchanged.
    pub fn with_pure_action(&self, player: usize, state: usize, action: usize) -> Self {
        let mut out = self.clone();
        for (b, p) in out.probs[player][state].iter_mut().enumerate() {
            *p = if b == action { 1.0 } else { 0.0 };
        }
        out
    }

    /// `max |pi1 - pi2|` over every (player, state, action) coordinate.
    pub fn distance(&self, other: &StrategyProfile) -> f64 {
        self.coords()
            .zip(other.coords())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// `(1 - alpha) * self + alpha * other`.
    pub fn mix(&self, other: &StrategyProfile, alpha: f64) -> Self {
        let probs = self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(ps, qs)| {
                ps.iter()
                    .zip(qs)
                    .map(|(p, q)| p.iter().zip(q).map(|(a, b)| (1.0 - alpha) * a + alpha * b).collect())
                    .collect()
            })
            .collect();
        StrategyProfile { probs }
    }

    /// All probabilities in (player, state, action) lexicographic order.
    pub fn coords(&self) -> impl Iterator<Item = f64> + '_ {
        self.probs.iter().flatten().flatten().copied()
    }

    /// Probability that joint action `joint` is played at `state`.
    pub fn joint_prob(&self, game: &StochasticGame, state: usize, joint: usize) -> f64 {
        game.joint_actions(joint)
            .iter()
            .enumerate()
            .map(|(i, &a)| self.probs[i][state][a])
            .product()
    }
}

/// Per-state expected discounted return of one player.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueVector(pub Vec<f64>);

impl Deref for ValueVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Expected immediate reward `r^{i,pi}(s)` for every state.
pub fn marginal_reward(game: &StochasticGame, pi: &StrategyProfile, player: usize) -> Result<Vec<f64>> {
    pi.check_shape(game)?;
    game.check_player(player)?;
    Ok(marginal_reward_unchecked(game, pi, player))
}

fn marginal_reward_unchecked(game: &StochasticGame, pi: &StrategyProfile, player: usize) -> Vec<f64> {
    (0..game.num_states())
        .map(|s| {
            (0..game.num_joint_actions())
                .map(|j| game.reward(player, s, j) * pi.joint_prob(game, s, j))
                .sum()
        })
        .collect()
}

/// State-to-state transition matrix `P^pi` induced by the profile.
pub fn marginal_transition(game: &StochasticGame, pi: &StrategyProfile) -> Result<DMatrix<f64>> {
    pi.check_shape(game)?;
    Ok(marginal_transition_unchecked(game, pi))
}

fn marginal_transition_unchecked(game: &StochasticGame, pi: &StrategyProfile) -> DMatrix<f64> {
    let n = game.num_states();
    let mut p = DMatrix::zeros(n, n);
    for s in 0..n {
        for j in 0..game.num_joint_actions() {
            let w = pi.joint_prob(game, s, j);
            if w == 0.0 {
                continue;
            }
            for (t, &q) in game.transition(s, j).iter().enumerate() {
                p[(s, t)] += w * q;
            }
        }
    }
    p
}

fn bellman_matrix(game: &StochasticGame, transition: &DMatrix<f64>) -> DMatrix<f64> {
    let n = game.num_states();
    DMatrix::identity(n, n) - transition * game.gamma()
}

/// Solves `(I - gamma P) x = b` by LU with partial pivoting. The matrix is
/// strictly diagonally dominant for `gamma < 1`, hence nonsingular.
pub(crate) fn solve_bellman(game: &StochasticGame, transition: &DMatrix<f64>, rhs: &[f64]) -> Vec<f64> {
    let lu = bellman_matrix(game, transition).lu();
    let b = DVector::from_column_slice(rhs);
    let x = lu.solve(&b).expect("I - gamma P is nonsingular for gamma < 1");
    x.iter().copied().collect()
}

/// `V^{pi}` for one player: the unique solution of `(I - gamma P^pi) V = r^{i,pi}`.
pub fn value_function(game: &StochasticGame, pi: &StrategyProfile, player: usize) -> Result<ValueVector> {
    pi.check_shape(game)?;
    game.check_player(player)?;
    let p = marginal_transition_unchecked(game, pi);
    let r = marginal_reward_unchecked(game, pi, player);
    Ok(ValueVector(solve_bellman(game, &p, &r)))
}

/// Values of every player, sharing one factorization of `I - gamma P^pi`.
pub fn value_functions(game: &StochasticGame, pi: &StrategyProfile) -> Result<Vec<ValueVector>> {
    pi.check_shape(game)?;
    Ok(value_functions_unchecked(game, pi))
}

pub(crate) fn value_functions_unchecked(game: &StochasticGame, pi: &StrategyProfile) -> Vec<ValueVector> {
    let p = marginal_transition_unchecked(game, pi);
    let lu = bellman_matrix(game, &p).lu();
    (0..game.num_players())
        .map(|i| {
            let r = DVector::from_vec(marginal_reward_unchecked(game, pi, i));
            let v = lu.solve(&r).expect("I - gamma P is nonsingular for gamma < 1");
            ValueVector(v.iter().copied().collect())
        })
        .collect()
}

/// `(I - gamma P^pi)^{-1}`, the discounted state-occupancy matrix.
pub fn resolvent(game: &StochasticGame, pi: &StrategyProfile) -> Result<DMatrix<f64>> {
    let p = marginal_transition(game, pi)?;
    Ok(bellman_matrix(game, &p)
        .try_inverse()
        .expect("I - gamma P is nonsingular for gamma < 1"))
}

/// Value at `state` when `player` switches to the pure action `action` at
/// that state only, keeping its other stationary choices and everybody else
/// fixed.
pub fn deviation_value(
    game: &StochasticGame,
    pi: &StrategyProfile,
    player: usize,
    state: usize,
    action: usize,
) -> Result<f64> {
    pi.check_shape(game)?;
    game.check_player(player)?;
    game.check_state(state)?;
    check_index("action", action, game.num_actions(player))?;
    Ok(deviation_value_unchecked(game, pi, player, state, action))
}

pub(crate) fn deviation_value_unchecked(
    game: &StochasticGame,
    pi: &StrategyProfile,
    player: usize,
    state: usize,
    action: usize,
) -> f64 {
    let modified = pi.with_pure_action(player, state, action);
    let p = marginal_transition_unchecked(game, &modified);
    let r = marginal_reward_unchecked(game, &modified, player);
    solve_bellman(game, &p, &r)[state]
}
