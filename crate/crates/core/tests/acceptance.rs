//! Acceptance criteria, one line each. Run with
//! `cargo test -p mpe-core --test acceptance`.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use mpe_core::certify::{
    best_response_values, certify_profile, choose_d, gain_to_regret_check, residual_to_gain_bound,
    residual_to_mpe_bound,
};
use mpe_core::corpus::{self, known_games};
use mpe_core::game::{marginal_reward, resolvent, value_function};
use mpe_core::nash_map::{apply_f, gain_table, lipschitz_constant, residual};
use mpe_core::oracles::{
    enumerate_deterministic_policies, grid_residual_argmin, lipschitz_ratio, minimax_value_iteration,
    support_enumeration_2x2, truncated_value,
};
use mpe_core::random::{random_config, random_game, random_nearby, random_profile, rng, RandomGameConfig};
use mpe_core::simplicial::{grid_size, stopping_residual_check, stopping_simplices};
use mpe_core::{StochasticGame, StrategyProfile};
use rayon::prelude::*;
use serde_json::Value;

type Outcome = Result<String, String>;

/// Number, name, runtime limit and body of one criterion.
type Criterion = (u32, &'static str, Duration, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_instance(seed: u64) -> StochasticGame {
    let mut r = rng(seed);
    let config = random_config(&mut r);
    random_game(&mut r, &config)
}

fn criterion_1() -> Outcome {
    let games = known_games();
    check(games.len() >= 10, || format!("only {} corpus games", games.len()))?;
    let mut worst_res: f64 = 0.0;
    let mut worst_regret: f64 = 0.0;
    let mut converse = 0;
    for k in &games {
        for eq in &k.equilibria {
            let cert = certify_profile(&k.game, eq, None).map_err(|e| e.to_string())?;
            worst_res = worst_res.max(cert.residual);
            worst_regret = worst_regret.max(cert.epsilon_achieved);
            check(cert.residual <= 1e-9, || {
                format!("{}: residual {:e}", k.name, cert.residual)
            })?;
            check(cert.epsilon_achieved <= 1e-8, || {
                format!("{}: regret {:e}", k.name, cert.epsilon_achieved)
            })?;
        }
        for d in 1..=6 {
            if grid_size(&k.game, d) > 20_000 {
                continue;
            }
            let (point, res) = grid_residual_argmin(&k.game, d).map_err(|e| e.to_string())?;
            if res <= 1e-10 {
                converse += 1;
                let cert = certify_profile(&k.game, &point.to_profile(), None).map_err(|e| e.to_string())?;
                let bound = residual_to_mpe_bound(&k.game, 1e-10);
                check(cert.epsilon_achieved <= bound, || {
                    format!("{} d={d}: regret {:e} > {bound:e}", k.name, cert.epsilon_achieved)
                })?;
            }
        }
    }
    Ok(format!(
        "{} games, max residual {worst_res:.1e}, max regret {worst_regret:.1e}, {converse} grid minima re-certified",
        games.len()
    ))
}

fn criterion_2() -> Outcome {
    let seeds: Vec<u64> = (0..24).map(|k| 2000 + k).collect();
    let results: Vec<(usize, f64)> = seeds
        .par_iter()
        .map(|&seed| {
            let g = random_instance(seed);
            let lambda = lipschitz_constant(&g);
            let mut r = rng(seed ^ 0x5eed);
            let mut violations = 0;
            let mut worst: f64 = 0.0;
            for k in 0..1000 {
                let p1 = random_profile(&mut r, &g);
                let p2 = if k % 2 == 0 {
                    random_profile(&mut r, &g)
                } else {
                    random_nearby(&mut r, &g, &p1, 1e-3)
                };
                if let Some(ratio) = lipschitz_ratio(&g, &p1, &p2).expect("shapes match") {
                    worst = worst.max(ratio / lambda);
                    if ratio > lambda {
                        violations += 1;
                    }
                }
            }
            (violations, worst)
        })
        .collect();
    let violations: usize = results.iter().map(|r| r.0).sum();
    let worst = results.iter().map(|r| r.1).fold(0.0, f64::max);
    check(violations == 0, || format!("{violations} violations"))?;
    Ok(format!(
        "24 games x 1000 pairs, 0 violations, max ratio/lambda {worst:.2e}"
    ))
}

fn criterion_3() -> Outcome {
    let mut violations = Vec::new();
    for k in 0..500u64 {
        let mut r = rng(3000 + k);
        let config = random_config(&mut r);
        let g = random_game(&mut r, &config);
        let p1 = random_profile(&mut r, &g);
        let p2 = if k % 2 == 0 {
            random_profile(&mut r, &g)
        } else {
            random_nearby(&mut r, &g, &p1, 1e-2)
        };
        let delta = p1.distance(&p2);
        let n = g.num_players() as f64;
        let a = g.max_actions() as f64;
        let s = g.num_states() as f64;
        let cap = 1.0 / (1.0 - g.gamma());
        for i in 0..g.num_players() {
            let r1 = marginal_reward(&g, &p1, i).unwrap();
            let r2 = marginal_reward(&g, &p2, i).unwrap();
            let gap = r1.iter().zip(&r2).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            if gap > n * a * g.r_max() * delta + 1e-12 {
                violations.push(format!("pair {k}: reward marginal"));
            }
        }
        let m1 = resolvent(&g, &p1).unwrap();
        let m2 = resolvent(&g, &p2).unwrap();
        if (&m1 - &m2).amax() > n * s * a * delta / (1.0 - g.gamma()).powi(2) + 1e-12 {
            violations.push(format!("pair {k}: inverse perturbation"));
        }
        for m in [&m1, &m2] {
            for row in m.row_iter() {
                if (row.sum() - cap).abs() > 1e-9 {
                    violations.push(format!("pair {k}: row sum {}", row.sum()));
                }
                if row.iter().any(|&x| x < -1e-12 || x > cap + 1e-9) {
                    violations.push(format!("pair {k}: entry out of [0, 1/(1-gamma)]"));
                }
            }
        }
    }
    check(violations.is_empty(), || {
        format!("{} violations, first: {}", violations.len(), violations[0])
    })?;
    Ok("500 pairs, 0 violations of the four inequalities".into())
}

/// One random (game, profile) pair plus points along a damped-f trajectory
/// from it, so that near-equilibrium profiles are covered as well.
fn chain_profiles(seed: u64) -> (StochasticGame, Vec<StrategyProfile>) {
    let mut r = rng(seed);
    let config = random_config(&mut r);
    let g = random_game(&mut r, &config);
    let mut pi = random_profile(&mut r, &g);
    let mut out = vec![pi.clone()];
    for step in 1..=400 {
        pi = pi.mix(&apply_f(&g, &pi).unwrap(), 0.5);
        if step % 40 == 0 {
            out.push(pi.clone());
        }
    }
    (g, out)
}

fn criterion_4() -> Outcome {
    let seeds: Vec<u64> = (0..240).map(|k| 4000 + k).collect();
    let results: Vec<Result<(usize, f64, f64), String>> = seeds
        .par_iter()
        .map(|&seed| {
            let (g, profiles) = chain_profiles(seed);
            let mut worst_gain: f64 = 0.0;
            let mut worst_regret: f64 = 0.0;
            for pi in &profiles {
                let res = residual(&g, pi).unwrap();
                let bound = residual_to_gain_bound(&g, res);
                let gains = gain_table(&g, pi).unwrap();
                worst_gain = worst_gain.max(gains.max() / bound.max(f64::MIN_POSITIVE));
                check(gains.max() <= bound + 1e-8, || {
                    format!(
                        "seed {seed}: gain {:e} > bound {bound:e} at residual {res:e}",
                        gains.max()
                    )
                })?;
                let rc = gain_to_regret_check(&g, pi).unwrap();
                if rc.bound > 0.0 {
                    worst_regret = worst_regret.max(rc.max_regret / rc.bound);
                }
                check(rc.passed, || {
                    format!("seed {seed}: regret {:e} > {:e}", rc.max_regret, rc.bound)
                })?;
            }
            Ok((profiles.len(), worst_gain, worst_regret))
        })
        .collect();
    let mut pairs = 0;
    let mut worst_gain: f64 = 0.0;
    let mut worst_regret: f64 = 0.0;
    for r in results {
        let (n, g, rg) = r?;
        pairs += n;
        worst_gain = worst_gain.max(g);
        worst_regret = worst_regret.max(rg);
    }
    Ok(format!(
        "{pairs} (game, profile) pairs over 240 games, max gain/bound {worst_gain:.2e}, max regret/bound {worst_regret:.2e}"
    ))
}

fn criterion_5() -> Outcome {
    let mut games: Vec<(String, StochasticGame)> = known_games()
        .into_iter()
        .map(|k| (k.name.to_string(), k.game))
        .collect();
    games.push(("two-state-example".into(), corpus::two_state_example()));
    games.push(("zero-sum-two-state".into(), corpus::zero_sum_two_state()));
    // each corpus game has a pure equilibrium, hence one on every grid
    let exact = known_games().len();
    let runs: Vec<(usize, usize, u32)> = (0..games.len()).flat_map(|g| [2u32, 4, 8].map(|d| (g, 0, d))).collect();
    let results: Vec<Result<(usize, f64), String>> = runs
        .par_iter()
        .map(|&(gi, _, d)| {
            let (name, g) = &games[gi];
            let found = stopping_simplices(g, d).map_err(|e| format!("{name} d={d}: {e}"))?;
            if gi < exact && found.is_empty() {
                return Err(format!("{name} d={d}: no stopping simplex"));
            }
            let mut worst: f64 = 0.0;
            for s in &found {
                let c = stopping_residual_check(g, &s.simplex, d).map_err(|e| e.to_string())?;
                check(c.passed, || {
                    format!("{name} d={d}: residual {:e} > {:e}", c.max_residual, c.bound)
                })?;
                worst = worst.max(c.max_residual / c.bound);
            }
            Ok((found.len(), worst))
        })
        .collect();
    let mut total = 0;
    let mut worst: f64 = 0.0;
    for r in results {
        let (n, w) = r?;
        total += n;
        worst = worst.max(w);
    }
    Ok(format!(
        "{} games x d in {{2,4,8}}: {total} stopping simplices, max residual/bound {worst:.2e}",
        games.len()
    ))
}

fn criterion_6() -> Outcome {
    let mut br_gap: f64 = 0.0;
    for k in 0..100u64 {
        let mut r = rng(6000 + k);
        let config = random_config(&mut r);
        let g = random_game(&mut r, &config);
        let pi = random_profile(&mut r, &g);
        for i in 0..g.num_players() {
            let brute = enumerate_deterministic_policies(&g, &pi, i).map_err(|e| e.to_string())?;
            let br = best_response_values(&g, &pi, i).unwrap();
            let v = value_function(&g, &pi, i).unwrap();
            let tv = truncated_value(&g, &pi, i, 200).unwrap();
            let tail = g.gamma().powi(200) * g.r_max() / (1.0 - g.gamma());
            for s in 0..g.num_states() {
                br_gap = br_gap.max((brute[s] - br[s]).abs());
                check((brute[s] - br[s]).abs() <= 1e-8, || {
                    format!("instance {k}: best response gap")
                })?;
                check((v[s] - tv[s]).abs() <= tail + 1e-12, || {
                    format!("instance {k}: truncation gap")
                })?;
            }
        }
    }
    let mut bimatrix: Vec<StochasticGame> = vec![
        corpus::matching_pennies(),
        corpus::coordination(),
        corpus::battle_of_sexes(),
        corpus::prisoners_dilemma(),
    ];
    for k in 0..40u64 {
        let mut r = rng(6500 + k);
        bimatrix.push(random_game(
            &mut r,
            &RandomGameConfig {
                states: 1,
                actions: vec![2, 2],
                gamma: 0.0,
            },
        ));
    }
    let mut equilibria = 0;
    for g in &bimatrix {
        let se = support_enumeration_2x2(g).map_err(|e| e.to_string())?;
        check(!se.equilibria.is_empty(), || "support enumeration found nothing".into())?;
        for eq in &se.equilibria {
            let cert = certify_profile(g, eq, None).unwrap();
            check(cert.residual <= 1e-9 && cert.epsilon_achieved <= 1e-9, || {
                format!(
                    "2x2 equilibrium with residual {:e}, regret {:e}",
                    cert.residual, cert.epsilon_achieved
                )
            })?;
            equilibria += 1;
        }
    }
    Ok(format!(
        "100 instances (max best-response gap {br_gap:.1e}), truncation within tail, {equilibria} 2x2 equilibria at residual <= 1e-9"
    ))
}

fn criterion_7() -> Outcome {
    let lambda = lipschitz_constant(&corpus::two_state_example());
    check(lambda == 1152.0, || format!("lambda = {lambda}"))?;
    let d = choose_d(&corpus::single_agent_bandit(vec![1.0, 0.0]), 1);
    check(d == 37888, || format!("d = {d}"))?;
    Ok("lambda = 1152, d = 37888".into())
}

fn run_solve(file: &str) -> Result<(Value, Option<i32>), String> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("corpus").join(file);
    let out = Command::new(env!("CARGO_BIN_EXE_mpe"))
        .args([
            "solve",
            path.to_str().unwrap(),
            "--method=damped-f",
            "--target-L",
            "1000",
        ])
        .output()
        .map_err(|e| e.to_string())?;
    let doc = serde_json::from_slice(&out.stdout).map_err(|e| format!("{file}: bad report ({e})"))?;
    Ok((doc, out.status.code()))
}

/// Checks one damped-f report; returns its status.
fn check_zero_sum_report(file: &str, g: &StochasticGame) -> Result<String, String> {
    let (doc, code) = run_solve(file)?;
    let status = doc["status"].as_str().ok_or("missing status")?.to_string();
    let cert = &doc["certificate"];
    let regret = cert["epsilon_achieved"].as_f64().ok_or("missing regret")?;
    let probs: Vec<Vec<Vec<f64>>> = serde_json::from_value(doc["profile"].clone()).map_err(|e| e.to_string())?;
    let pi = StrategyProfile::new(g, probs).map_err(|e| e.to_string())?;
    // independent regret: brute-force policies against the reported profile
    let mut independent: f64 = 0.0;
    for i in 0..2 {
        let best = enumerate_deterministic_policies(g, &pi, i).unwrap();
        let v = value_function(g, &pi, i).unwrap();
        for s in 0..g.num_states() {
            independent = independent.max(best[s] - v[s]);
        }
    }
    check((independent - regret).abs() <= 1e-8 + 1e-11 * regret.abs(), || {
        format!("{file}: reported regret {regret:e}, recomputed {independent:e}")
    })?;
    check(cert["verdict"].as_bool() == Some(independent <= 1e-3), || {
        format!("{file}: verdict disagrees")
    })?;
    match status.as_str() {
        "converged" => {
            check(code == Some(0), || format!("{file}: exit {code:?}"))?;
            check(regret <= 1e-3, || format!("{file}: converged with regret {regret:e}"))?;
            let minimax = minimax_value_iteration(g, 1e-14, 100_000).unwrap();
            let values = &cert["values"];
            let total = 1.0 / (1.0 - g.gamma());
            for s in 0..g.num_states() {
                let v0 = values[0][s].as_f64().unwrap();
                let v1 = values[1][s].as_f64().unwrap();
                check((v0 - minimax[s]).abs() <= 1e-4, || {
                    format!("{file}: value {v0} vs minimax {}", minimax[s])
                })?;
                check((v0 + v1 - total).abs() <= 1e-4, || {
                    format!("{file}: values do not sum to {total}")
                })?;
            }
        }
        "not-converged" => check(code == Some(3), || format!("{file}: exit {code:?} for non-convergence"))?,
        other => return Err(format!("{file}: unexpected status {other}")),
    }
    Ok(status)
}

fn criterion_8() -> Outcome {
    let mixed = check_zero_sum_report("zero-sum-two-state.json", &corpus::zero_sum_two_state())?;
    let saddle = check_zero_sum_report("zero-sum-saddle.json", &corpus::zero_sum_saddle())?;
    Ok(format!(
        "zero-sum-two-state: {mixed}; zero-sum-saddle: {saddle} (minimax-consistent)"
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        (1, "fixed-point characterization", Duration::from_secs(10), criterion_1),
        (2, "Lipschitz bound", Duration::from_secs(60), criterion_2),
        (
            3,
            "resolvent and marginal inequalities",
            Duration::from_secs(30),
            criterion_3,
        ),
        (
            4,
            "residual -> gain -> regret chain",
            Duration::from_secs(120),
            criterion_4,
        ),
        (
            5,
            "stopping simplex residual bound",
            Duration::from_secs(300),
            criterion_5,
        ),
        (6, "oracle equivalence", Duration::from_secs(60), criterion_6),
        (7, "formula reproduction", Duration::from_secs(1), criterion_7),
        (
            8,
            "end-to-end CLI on zero-sum games",
            Duration::from_secs(30),
            criterion_8,
        ),
    ];
    let mut failed = 0;
    for (id, name, limit, run) in criteria {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > limit => Err(format!("{detail}; took {elapsed:.1?}, limit {limit:?}")),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("PASS criterion {id} ({name}) [{elapsed:.2?}]: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {id} ({name}) [{elapsed:.2?}]: {why}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
