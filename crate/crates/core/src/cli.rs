//! The `mpe` command line.
//!
//! Exit codes: 0 success or verdict true, 1 verdict false, 2 input error,
//! 3 method failure (non-convergence, no stopping simplex, grid too large).

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::certify::{certify_profile, choose_d};
use crate::error::{Error, Result};
use crate::game::StochasticGame;
use crate::nash_map::lipschitz_constant;
use crate::report::{certificate_json, read_profile, round_floats, solve_json, to_pretty, write_profile};
use crate::simplicial::{
    classify_simplex, grid_points, grid_size, label_point, GridProfile, SimplexFile, MAX_GRID_POINTS,
};
use crate::solver::{SolveOptions, SolverRegistry};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERDICT_FALSE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_METHOD: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "mpe", version, about = "Markov perfect equilibria of small stochastic games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print game dimensions, the Lipschitz constant and the grid size for 1/L.
    Info {
        game: PathBuf,
        #[arg(long = "L", value_name = "L")]
        l: Option<u64>,
    },
    /// Search for an approximate equilibrium and certify it.
    Solve {
        game: PathBuf,
        #[arg(long, default_value = "damped-f")]
        method: String,
        #[command(flatten)]
        common: SolveArgs,
    },
    /// Certify a profile file against a game.
    Certify {
        game: PathBuf,
        profile: PathBuf,
        #[arg(long = "target-L", value_name = "L")]
        target_l: Option<u64>,
    },
    /// Label grid points, or the vertices of a simplex.
    Label {
        game: PathBuf,
        #[arg(long)]
        d: u32,
        /// Comma-separated numerators ordered by player, state, action.
        #[arg(long = "point", value_name = "N,N,...")]
        points: Vec<String>,
        #[arg(long, conflicts_with = "points")]
        simplex: Option<PathBuf>,
    },
    /// Same as `solve --method simplicial`.
    Search {
        game: PathBuf,
        #[command(flatten)]
        common: SolveArgs,
    },
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[arg(long, default_value_t = 4)]
    d: u32,
    #[arg(long, default_value_t = 0.5)]
    damping: f64,
    #[arg(long = "max-iters", default_value_t = 10_000)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "target-L", value_name = "L")]
    target_l: Option<u64>,
    /// Write the solved profile (full precision) to this file.
    #[arg(long = "profile-out")]
    profile_out: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the command and returns the exit
/// code. Reports go to `out`, diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            match e {
                Error::TooLarge { .. } => EXIT_METHOD,
                _ => EXIT_INPUT,
            }
        }
    }
}

fn load_game(path: &Path) -> Result<StochasticGame> {
    let text = fs::read_to_string(path)?;
    StochasticGame::from_json(&text)
}

fn target(l: Option<u64>) -> Result<Option<f64>> {
    match l {
        Some(0) => Err(Error::InvalidArgument("L must be positive".into())),
        Some(l) => Ok(Some(1.0 / l as f64)),
        None => Ok(None),
    }
}

fn emit(out: &mut dyn Write, value: &Value) -> Result<()> {
    out.write_all(to_pretty(value).as_bytes())?;
    Ok(())
}

fn execute(command: Command, out: &mut dyn Write) -> Result<i32> {
    match command {
        Command::Info { game, l } => {
            let game = load_game(&game)?;
            if l == Some(0) {
                return Err(Error::InvalidArgument("L must be positive".into()));
            }
            let mut doc = json!({
                "players": game.num_players(),
                "states": game.num_states(),
                "actions": game.action_counts(),
                "joint_actions": game.num_joint_actions(),
                "gamma": game.gamma(),
                "r_max": game.r_max(),
                "lipschitz": lipschitz_constant(&game),
            });
            if let Some(l) = l {
                doc["L"] = json!(l);
                doc["d"] = json!(choose_d(&game, l));
            }
            emit(out, &round_floats(doc))?;
            Ok(EXIT_OK)
        }
        Command::Solve { game, method, common } => solve(&game, &method, common, out),
        Command::Search { game, common } => solve(&game, "simplicial", common, out),
        Command::Certify {
            game,
            profile,
            target_l,
        } => {
            let game = load_game(&game)?;
            let pi = read_profile(&game, &profile)?;
            let mut cert = certify_profile(&game, &pi, target(target_l)?)?;
            if let Some(l) = target_l {
                cert = cert.with_required_d(&game, l);
            }
            emit(out, &certificate_json(&cert))?;
            Ok(if cert.verdict == Some(false) {
                EXIT_VERDICT_FALSE
            } else {
                EXIT_OK
            })
        }
        Command::Label {
            game,
            d,
            points,
            simplex,
        } => {
            let game = load_game(&game)?;
            let doc = if let Some(path) = simplex {
                let file: SimplexFile = serde_json::from_str(&fs::read_to_string(path)?)?;
                if file.d != d {
                    return Err(Error::InvalidSimplex(format!(
                        "simplex file has d = {} but --d is {d}",
                        file.d
                    )));
                }
                let sigma = file.to_simplex(&game)?;
                let c = classify_simplex(&game, &sigma)?;
                json!({
                    "d": d,
                    "vertices": c.vertices.iter().zip(&c.labels).map(|(v, l)| point_entry(&game, v, *l)).collect::<Vec<_>>(),
                    "classification": c.class.describe(&game),
                })
            } else {
                let grid: Vec<GridProfile> = if points.is_empty() {
                    let size = grid_size(&game, d);
                    if size > MAX_GRID_POINTS {
                        return Err(Error::TooLarge {
                            size,
                            limit: MAX_GRID_POINTS,
                        });
                    }
                    grid_points(&game, d)?.collect()
                } else {
                    points.iter().map(|p| parse_point(&game, d, p)).collect::<Result<_>>()?
                };
                let entries = grid
                    .iter()
                    .map(|p| Ok(point_entry(&game, p, label_point(&game, p)?)))
                    .collect::<Result<Vec<_>>>()?;
                json!({ "d": d, "points": entries })
            };
            emit(out, &doc)?;
            Ok(EXIT_OK)
        }
    }
}

fn point_entry(game: &StochasticGame, p: &GridProfile, label: crate::simplicial::Label) -> Value {
    json!({
        "point": p.flat(),
        "label": label.display(game).to_string(),
        "coord": label,
    })
}

fn parse_point(game: &StochasticGame, d: u32, text: &str) -> Result<GridProfile> {
    let flat = text
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<u32>()
                .map_err(|_| Error::InvalidGridPoint(format!("cannot parse {t:?} in point {text:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    GridProfile::from_flat(game, d, &flat)
}

fn solve(game_path: &Path, method: &str, args: SolveArgs, out: &mut dyn Write) -> Result<i32> {
    let game = load_game(game_path)?;
    let target_eps = target(args.target_l)?;
    let registry = SolverRegistry::with_defaults();
    let solver = registry.get(method)?;
    let options = SolveOptions {
        d: args.d,
        damping: args.damping,
        max_iters: args.max_iters,
        tol: args.tol,
        seed: args.seed,
    };
    let outcome = solver.solve(&game, &options)?;
    let mut cert = certify_profile(&game, &outcome.profile, target_eps)?;
    if let Some(d) = outcome.d {
        cert = cert.with_grid(&game, d as u64);
    }
    if let Some(l) = args.target_l {
        cert = cert.with_required_d(&game, l);
    }
    if let Some(path) = &args.profile_out {
        write_profile(&outcome.profile, path)?;
    }
    emit(out, &solve_json(solver.name(), solver.heuristic(), &outcome, &cert))?;
    Ok(if outcome.status.is_failure() {
        EXIT_METHOD
    } else if cert.verdict == Some(false) {
        EXIT_VERDICT_FALSE
    } else {
        EXIT_OK
    })
}
