//! Seeded random instances for property tests and sampling harnesses.
//!
//! Rewards are uniform on `[0, 1]`; each transition row and each strategy
//! distribution is a normalized vector of uniform positives.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::game::{validate_game, GameFile, PlayerSpec, StochasticGame, StrategyProfile};

/// Discount factors used by the random generator.
pub const GAMMAS: [f64; 3] = [0.0, 0.5, 0.9];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomGameConfig {
    pub states: usize,
    pub actions: Vec<usize>,
    pub gamma: f64,
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn simplex_point<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..len).map(|_| rng.random::<f64>() + 1e-3).collect();
    let total: f64 = raw.iter().sum();
    let mut row: Vec<f64> = raw.iter().map(|x| x / total).collect();
    // push the rounding error into the largest entry so the row sums to 1
    let drift = 1.0 - row.iter().sum::<f64>();
    let (k, _) = row
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |best, (k, &x)| if x > best.1 { (k, x) } else { best });
    row[k] += drift;
    row
}

pub fn random_game<R: Rng + ?Sized>(rng: &mut R, config: &RandomGameConfig) -> StochasticGame {
    let joint: usize = config.actions.iter().product();
    let s = config.states;
    let transitions = (0..s)
        .map(|_| (0..joint).map(|_| simplex_point(rng, s)).collect())
        .collect();
    let rewards = config
        .actions
        .iter()
        .map(|_| {
            (0..s)
                .map(|_| (0..joint).map(|_| rng.random::<f64>()).collect())
                .collect()
        })
        .collect();
    validate_game(GameFile {
        gamma: config.gamma,
        states: (1..=s).map(|k| format!("s{k}")).collect(),
        players: config
            .actions
            .iter()
            .map(|&m| PlayerSpec {
                actions: (1..=m).map(|a| format!("a{a}")).collect(),
            })
            .collect(),
        transitions,
        rewards,
        r_max: None,
    })
    .expect("generated game is valid")
}

/// Random desk-scale shape: up to 3 players, 3 states, 3 actions, with the
/// joint action space capped at 8.
pub fn random_config<R: Rng + ?Sized>(rng: &mut R) -> RandomGameConfig {
    loop {
        let players = rng.random_range(1..=3);
        let actions: Vec<usize> = (0..players).map(|_| rng.random_range(1..=3)).collect();
        if actions.iter().product::<usize>() > 8 || actions.iter().all(|&a| a == 1) {
            continue;
        }
        return RandomGameConfig {
            states: rng.random_range(1..=3),
            actions,
            gamma: GAMMAS[rng.random_range(0..GAMMAS.len())],
        };
    }
}

pub fn random_profile<R: Rng + ?Sized>(rng: &mut R, game: &StochasticGame) -> StrategyProfile {
    let probs = (0..game.num_players())
        .map(|i| {
            (0..game.num_states())
                .map(|_| simplex_point(rng, game.num_actions(i)))
                .collect()
        })
        .collect();
    StrategyProfile::from_probs_unchecked(probs)
}

/// Moves `pi` towards an independent random profile by a random fraction no
/// larger than `scale`, giving pairs at controlled sup-norm distance.
pub fn random_nearby<R: Rng + ?Sized>(
    rng: &mut R,
    game: &StochasticGame,
    pi: &StrategyProfile,
    scale: f64,
) -> StrategyProfile {
    let other = random_profile(rng, game);
    let t = scale * rng.random::<f64>();
    pi.mix(&other, t)
}
