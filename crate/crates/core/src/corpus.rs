//! Small named games with analytically known equilibria.
//!
//! States are named `s1, s2, ...` and actions `a1, a2, ...` so that labels
//! print as `(1, s1, a2)`.

use crate::game::{validate_game, GameFile, PlayerSpec, StochasticGame, StrategyProfile};

/// Builds a game with default state/action names. Panics on invalid data, so
/// it is only meant for hard-coded instances.
pub fn build(
    gamma: f64,
    num_states: usize,
    actions: &[usize],
    transitions: Vec<Vec<Vec<f64>>>,
    rewards: Vec<Vec<Vec<f64>>>,
) -> StochasticGame {
    validate_game(GameFile {
        gamma,
        states: (1..=num_states).map(|s| format!("s{s}")).collect(),
        players: actions
            .iter()
            .map(|&m| PlayerSpec {
                actions: (1..=m).map(|a| format!("a{a}")).collect(),
            })
            .collect(),
        transitions,
        rewards,
        r_max: None,
    })
    .expect("corpus game is valid")
}

/// Single-state, undiscounted game: `payoffs[player][joint]`.
pub fn normal_form(actions: &[usize], payoffs: Vec<Vec<f64>>) -> StochasticGame {
    let joint: usize = actions.iter().product();
    build(
        0.0,
        1,
        actions,
        vec![vec![vec![1.0]; joint]],
        payoffs.into_iter().map(|p| vec![p]).collect(),
    )
}

pub fn single_agent_bandit(rewards: Vec<f64>) -> StochasticGame {
    normal_form(&[rewards.len()], vec![rewards])
}

pub fn bandit3() -> StochasticGame {
    single_agent_bandit(vec![0.2, 0.9, 0.5])
}

/// Player 1 scores on a match, player 2 on a mismatch.
pub fn matching_pennies() -> StochasticGame {
    scaled_matching_pennies(1.0)
}

pub fn scaled_matching_pennies(scale: f64) -> StochasticGame {
    normal_form(
        &[2, 2],
        vec![vec![scale, 0.0, 0.0, scale], vec![0.0, scale, scale, 0.0]],
    )
}

pub fn coordination() -> StochasticGame {
    normal_form(&[2, 2], vec![vec![1.0, 0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0, 1.0]])
}

/// Battle of the sexes: pure equilibria on the diagonal and a mixed one with
/// row weight 2/3 and column weight 1/3 on the first action.
pub fn battle_of_sexes() -> StochasticGame {
    normal_form(&[2, 2], vec![vec![1.0, 0.0, 0.0, 0.5], vec![0.5, 0.0, 0.0, 1.0]])
}

/// Second action (defect) strictly dominates for both players.
pub fn prisoners_dilemma() -> StochasticGame {
    normal_form(&[2, 2], vec![vec![0.6, 0.0, 1.0, 0.2], vec![0.6, 1.0, 0.0, 0.2]])
}

/// Three players, two actions each; every player's first action earns a
/// bonus of 0.5 regardless of the others, so `(a1, a1, a1)` is dominant.
pub fn three_player_dominant() -> StochasticGame {
    let actions = [2, 2, 2];
    let probe = normal_form(&actions, vec![vec![0.0; 8]; 3]);
    let payoffs = (0..3)
        .map(|i| {
            (0..8)
                .map(|j| {
                    let acts = probe.joint_actions(j);
                    let others = acts.iter().enumerate().filter(|(k, &a)| *k != i && a == 0).count();
                    let own = if acts[i] == 0 { 0.5 } else { 0.0 };
                    own + 0.25 * others as f64
                })
                .collect()
        })
        .collect();
    normal_form(&actions, payoffs)
}

/// Two-state single-agent MDP with discount 0.9. In `s1` the agent can take
/// a small reward and stay (`a1`) or move to `s2` (`a2`); in `s2` it can stay
/// for reward 1 (`a1`) or return (`a2`). Optimal: move, then stay.
pub fn single_agent_chain() -> StochasticGame {
    build(
        0.9,
        2,
        &[2],
        vec![
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
        ],
        vec![vec![vec![0.1, 0.0], vec![1.0, 0.0]]],
    )
}

/// Two players on an action-independent two-state chain; each reward depends
/// only on the player's own action, so myopic best actions form the MPE:
/// player 1 plays `a1` in `s1` and `a2` in `s2`, player 2 the reverse.
pub fn independent_chain() -> StochasticGame {
    let chain = [vec![0.3, 0.7], vec![0.6, 0.4]];
    build(
        0.5,
        2,
        &[2, 2],
        vec![vec![chain[0].clone(); 4], vec![chain[1].clone(); 4]],
        vec![
            vec![vec![0.8, 0.8, 0.2, 0.2], vec![0.1, 0.1, 0.9, 0.9]],
            vec![vec![0.3, 0.7, 0.3, 0.7], vec![1.0, 0.4, 1.0, 0.4]],
        ],
    )
}

/// Generic two-player, two-state, two-action game with discount 0.5 and
/// largest reward 1.
pub fn two_state_example() -> StochasticGame {
    build(
        0.5,
        2,
        &[2, 2],
        vec![
            vec![vec![0.9, 0.1], vec![0.4, 0.6], vec![0.2, 0.8], vec![0.5, 0.5]],
            vec![vec![0.3, 0.7], vec![1.0, 0.0], vec![0.6, 0.4], vec![0.1, 0.9]],
        ],
        vec![
            vec![vec![1.0, 0.2, 0.4, 0.7], vec![0.3, 0.9, 0.5, 0.1]],
            vec![vec![0.2, 0.6, 0.8, 0.3], vec![0.7, 0.4, 0.0, 1.0]],
        ],
    )
}

/// Constant-sum (rewards add to 1) two-state game with discount 0.5. State
/// `s1` is matching pennies with action-dependent continuation, `s2` a
/// generic 2x2 game with a mixed saddle.
pub fn zero_sum_two_state() -> StochasticGame {
    let s1 = vec![1.0, 0.0, 0.0, 1.0];
    let s2 = vec![0.2, 0.7, 0.9, 0.4];
    let complement = |r: &Vec<f64>| r.iter().map(|x| 1.0 - x).collect::<Vec<_>>();
    build(
        0.5,
        2,
        &[2, 2],
        vec![
            vec![vec![0.7, 0.3], vec![0.4, 0.6], vec![0.4, 0.6], vec![0.7, 0.3]],
            vec![vec![0.5, 0.5], vec![0.2, 0.8], vec![0.6, 0.4], vec![0.3, 0.7]],
        ],
        vec![vec![s1.clone(), s2.clone()], vec![complement(&s1), complement(&s2)]],
    )
}

/// Constant-sum two-state game with discount 0.5 whose stage games have pure
/// saddle points: `(a1, a1)` in `s1` and `(a2, a2)` in `s2`.
pub fn zero_sum_saddle() -> StochasticGame {
    let s1 = vec![0.6, 0.8, 0.3, 0.5];
    let s2 = vec![0.4, 0.2, 0.9, 0.7];
    let complement = |r: &Vec<f64>| r.iter().map(|x| 1.0 - x).collect::<Vec<_>>();
    build(
        0.5,
        2,
        &[2, 2],
        vec![
            vec![vec![0.8, 0.2], vec![0.6, 0.4], vec![0.5, 0.5], vec![0.3, 0.7]],
            vec![vec![0.4, 0.6], vec![0.5, 0.5], vec![0.2, 0.8], vec![0.3, 0.7]],
        ],
        vec![vec![s1.clone(), s2.clone()], vec![complement(&s1), complement(&s2)]],
    )
}

/// A game in the corpus together with equilibria known in closed form.
pub struct KnownGame {
    pub name: &'static str,
    pub game: StochasticGame,
    pub equilibria: Vec<StrategyProfile>,
}

fn pure(game: &StochasticGame, choice: &[Vec<usize>]) -> StrategyProfile {
    StrategyProfile::pure(game, choice).expect("corpus profile is valid")
}

/// Games with analytically known equilibria.
pub fn known_games() -> Vec<KnownGame> {
    let mut out = Vec::new();

    let g = single_agent_bandit(vec![1.0, 0.0]);
    out.push(KnownGame {
        name: "bandit",
        equilibria: vec![pure(&g, &[vec![0]])],
        game: g,
    });

    let g = single_agent_bandit(vec![0.01, 0.0]);
    out.push(KnownGame {
        name: "bandit-small-rewards",
        equilibria: vec![pure(&g, &[vec![0]])],
        game: g,
    });

    let g = single_agent_bandit(vec![0.2, 0.9, 0.5]);
    out.push(KnownGame {
        name: "bandit-3",
        equilibria: vec![pure(&g, &[vec![1]])],
        game: g,
    });

    let g = matching_pennies();
    out.push(KnownGame {
        name: "matching-pennies",
        equilibria: vec![StrategyProfile::uniform(&g)],
        game: g,
    });

    let g = scaled_matching_pennies(0.01);
    out.push(KnownGame {
        name: "matching-pennies-small-rewards",
        equilibria: vec![StrategyProfile::uniform(&g)],
        game: g,
    });

    let g = coordination();
    out.push(KnownGame {
        name: "coordination",
        equilibria: vec![
            pure(&g, &[vec![0], vec![0]]),
            pure(&g, &[vec![1], vec![1]]),
            StrategyProfile::uniform(&g),
        ],
        game: g,
    });

    let g = battle_of_sexes();
    let mixed =
        StrategyProfile::from_probs_unchecked(vec![vec![vec![2.0 / 3.0, 1.0 / 3.0]], vec![vec![1.0 / 3.0, 2.0 / 3.0]]]);
    out.push(KnownGame {
        name: "battle-of-sexes",
        equilibria: vec![pure(&g, &[vec![0], vec![0]]), pure(&g, &[vec![1], vec![1]]), mixed],
        game: g,
    });

    let g = prisoners_dilemma();
    out.push(KnownGame {
        name: "prisoners-dilemma",
        equilibria: vec![pure(&g, &[vec![1], vec![1]])],
        game: g,
    });

    let g = three_player_dominant();
    out.push(KnownGame {
        name: "three-player-dominant",
        equilibria: vec![pure(&g, &[vec![0], vec![0], vec![0]])],
        game: g,
    });

    let g = single_agent_chain();
    out.push(KnownGame {
        name: "single-agent-chain",
        equilibria: vec![pure(&g, &[vec![1, 0]])],
        game: g,
    });

    let g = independent_chain();
    out.push(KnownGame {
        name: "independent-chain",
        equilibria: vec![pure(&g, &[vec![0, 1], vec![1, 0]])],
        game: g,
    });

    let g = zero_sum_saddle();
    out.push(KnownGame {
        name: "zero-sum-saddle",
        equilibria: vec![pure(&g, &[vec![0, 1], vec![0, 1]])],
        game: g,
    });

    out
}

/// Seeds of the random games shipped in the corpus directory.
pub const RANDOM_SEEDS: [u64; 8] = [11, 12, 13, 14, 15, 16, 17, 18];

/// One file of the corpus directory.
pub struct CorpusEntry {
    pub file: String,
    pub game: StochasticGame,
    /// Seed of the random generator, for generated games.
    pub seed: Option<u64>,
    /// Number of equilibria known in closed form.
    pub known_equilibria: usize,
}

/// The games written to the corpus directory, in manifest order.
pub fn corpus_entries() -> Vec<CorpusEntry> {
    let mut out: Vec<CorpusEntry> = known_games()
        .into_iter()
        .map(|k| CorpusEntry {
            file: format!("{}.json", k.name),
            known_equilibria: k.equilibria.len(),
            game: k.game,
            seed: None,
        })
        .collect();
    out.push(CorpusEntry {
        file: "two-state-example.json".into(),
        game: two_state_example(),
        seed: None,
        known_equilibria: 0,
    });
    out.push(CorpusEntry {
        file: "zero-sum-two-state.json".into(),
        game: zero_sum_two_state(),
        seed: None,
        known_equilibria: 0,
    });
    for seed in RANDOM_SEEDS {
        let mut rng = crate::random::rng(seed);
        let config = crate::random::random_config(&mut rng);
        out.push(CorpusEntry {
            file: format!("random-{seed}.json"),
            game: crate::random::random_game(&mut rng, &config),
            seed: Some(seed),
            known_equilibria: 0,
        });
    }
    out
}

/// Manifest listing every corpus file with its seed and the tolerances the
/// oracles are expected to agree within.
pub fn manifest(entries: &[CorpusEntry]) -> serde_json::Value {
    let games: Vec<serde_json::Value> = entries
        .iter()
        .map(|e| {
            serde_json::json!({
                "file": e.file,
                "seed": e.seed,
                "players": e.game.num_players(),
                "states": e.game.num_states(),
                "actions": e.game.action_counts(),
                "gamma": e.game.gamma(),
                "known_equilibria": e.known_equilibria,
            })
        })
        .collect();
    serde_json::json!({
        "agreement": {
            "joint_expectation": 1e-10,
            "best_response_vs_enumeration": 1e-8,
            "truncation_horizon": 200,
        },
        "games": games,
    })
}
