//! Fixed-point solvers behind one trait, selectable by name.
//!
//! None of these is the correctness claim: every outcome is re-certified
//! from scratch by the caller.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{StochasticGame, StrategyProfile};
use crate::nash_map::{apply_f, residual};
use crate::oracles::grid_residual_argmin;
use crate::random::{random_profile, rng};
use crate::simplicial::{find_stopping_simplex, SimplexFile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Grid size for `grid` and `simplicial`.
    pub d: u32,
    /// Weight `alpha` of `f(pi)` in a damped step.
    pub damping: f64,
    pub max_iters: usize,
    pub tol: f64,
    /// Random start for `damped-f`; uniform when absent.
    pub seed: Option<u64>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            d: 4,
            damping: 0.5,
            max_iters: 10_000,
            tol: 1e-10,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Converged,
    NotConverged,
    GridMinimum,
    StoppingSimplex,
    NoStoppingSimplex,
}

impl SolveStatus {
    /// Whether the method failed to produce what it was asked for.
    pub fn is_failure(self) -> bool {
        matches!(self, SolveStatus::NotConverged | SolveStatus::NoStoppingSimplex)
    }
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SolveStatus::Converged => "converged",
            SolveStatus::NotConverged => "not-converged",
            SolveStatus::GridMinimum => "grid-minimum",
            SolveStatus::StoppingSimplex => "stopping-simplex",
            SolveStatus::NoStoppingSimplex => "no-stopping-simplex",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub profile: StrategyProfile,
    pub status: SolveStatus,
    pub iterations: usize,
    pub residual: f64,
    /// Grid size the profile lives on, for grid-based methods.
    pub d: Option<u32>,
    pub simplex: Option<SimplexFile>,
}

pub trait Solver: Send + Sync {
    fn name(&self) -> &'static str;

    /// Heuristic solvers carry no convergence guarantee.
    fn heuristic(&self) -> bool;

    fn solve(&self, game: &StochasticGame, options: &SolveOptions) -> Result<SolveOutcome>;
}

/// Probabilities below this are candidates for pruning in `damped-f`.
pub const PRUNE_BELOW: f64 = 1e-3;

/// Zeroes entries below `threshold` and renormalises; `None` when nothing
/// would change. The largest entry of each distribution always survives.
fn prune(pi: &StrategyProfile, threshold: f64) -> Option<StrategyProfile> {
    let mut changed = false;
    let mut probs = pi.probs().to_vec();
    for row in probs.iter_mut().flatten() {
        let top = row.iter().copied().fold(0.0, f64::max);
        for p in row.iter_mut() {
            if *p > 0.0 && *p < threshold && *p < top {
                *p = 0.0;
                changed = true;
            }
        }
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= total);
    }
    changed.then(|| StrategyProfile::from_probs_unchecked(probs))
}

/// `pi <- (1 - alpha) pi + alpha f(pi)`, keeping the best residual seen.
///
/// Iterates of `f` approach pure equilibria only sublinearly, so every step
/// also tries the iterate with near-zero probabilities pruned.
pub struct DampedF;

impl Solver for DampedF {
    fn name(&self) -> &'static str {
        "damped-f"
    }

    fn heuristic(&self) -> bool {
        true
    }

    fn solve(&self, game: &StochasticGame, options: &SolveOptions) -> Result<SolveOutcome> {
        let alpha = options.damping;
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "damping must lie in (0, 1], got {alpha}"
            )));
        }
        let mut pi = match options.seed {
            Some(seed) => random_profile(&mut rng(seed), game),
            None => StrategyProfile::uniform(game),
        };
        let mut best = (pi.clone(), f64::INFINITY);
        for k in 0..=options.max_iters {
            let image = apply_f(game, &pi)?;
            let res = image.distance(&pi);
            if res < best.1 {
                best = (pi.clone(), res);
            }
            if res <= options.tol {
                return Ok(SolveOutcome {
                    profile: pi,
                    status: SolveStatus::Converged,
                    iterations: k,
                    residual: res,
                    d: None,
                    simplex: None,
                });
            }
            if let Some(pruned) = prune(&pi, PRUNE_BELOW) {
                let r = residual(game, &pruned)?;
                if r < best.1 {
                    best = (pruned.clone(), r);
                }
                if r <= options.tol {
                    return Ok(SolveOutcome {
                        profile: pruned,
                        status: SolveStatus::Converged,
                        iterations: k,
                        residual: r,
                        d: None,
                        simplex: None,
                    });
                }
            }
            if k < options.max_iters {
                pi = pi.mix(&image, alpha);
            }
        }
        Ok(SolveOutcome {
            profile: best.0,
            status: SolveStatus::NotConverged,
            iterations: options.max_iters,
            residual: best.1,
            d: None,
            simplex: None,
        })
    }
}

/// Exhaustive residual minimisation over the grid.
pub struct GridSearch;

impl Solver for GridSearch {
    fn name(&self) -> &'static str {
        "grid"
    }

    fn heuristic(&self) -> bool {
        false
    }

    fn solve(&self, game: &StochasticGame, options: &SolveOptions) -> Result<SolveOutcome> {
        let (point, res) = grid_residual_argmin(game, options.d)?;
        Ok(SolveOutcome {
            profile: point.to_profile(),
            status: if res <= options.tol {
                SolveStatus::Converged
            } else {
                SolveStatus::GridMinimum
            },
            iterations: 0,
            residual: res,
            d: Some(options.d),
            simplex: None,
        })
    }
}

/// First stopping simplex in search order; reports its best-residual vertex.
pub struct Simplicial;

impl Solver for Simplicial {
    fn name(&self) -> &'static str {
        "simplicial"
    }

    fn heuristic(&self) -> bool {
        false
    }

    fn solve(&self, game: &StochasticGame, options: &SolveOptions) -> Result<SolveOutcome> {
        let d = options.d;
        let Some(found) = find_stopping_simplex(game, d)? else {
            let uniform = StrategyProfile::uniform(game);
            let res = residual(game, &uniform)?;
            return Ok(SolveOutcome {
                profile: uniform,
                status: SolveStatus::NoStoppingSimplex,
                iterations: 0,
                residual: res,
                d: Some(d),
                simplex: None,
            });
        };
        let vertices = crate::simplicial::simplex_vertices(game, &found.simplex)?;
        let mut best: Option<(StrategyProfile, f64)> = None;
        for v in &vertices {
            let p = v.to_profile();
            let r = residual(game, &p)?;
            if best.as_ref().is_none_or(|(_, b)| r < *b) {
                best = Some((p, r));
            }
        }
        let (profile, res) = best.expect("a simplex has vertices");
        Ok(SolveOutcome {
            profile,
            status: SolveStatus::StoppingSimplex,
            iterations: 0,
            residual: res,
            d: Some(d),
            simplex: Some(SimplexFile::from_simplex(
                &found.simplex,
                Some(found.labels.clone()),
                Some(found.class.describe(game)),
            )),
        })
    }
}

/// Solvers keyed by name.
pub struct SolverRegistry {
    solvers: BTreeMap<&'static str, Box<dyn Solver>>,
}

impl SolverRegistry {
    pub fn empty() -> Self {
        SolverRegistry {
            solvers: BTreeMap::new(),
        }
    }

    pub fn with_defaults() -> Self {
        let mut reg = Self::empty();
        reg.register(Box::new(DampedF));
        reg.register(Box::new(GridSearch));
        reg.register(Box::new(Simplicial));
        reg
    }

    /// Replaces any solver already registered under the same name.
    pub fn register(&mut self, solver: Box<dyn Solver>) {
        self.solvers.insert(solver.name(), solver);
    }

    pub fn get(&self, name: &str) -> Result<&dyn Solver> {
        self.solvers
            .get(name)
            .map(|s| s.as_ref())
            .ok_or_else(|| Error::UnknownMethod(format!("{name} (known: {})", self.names().join(", "))))
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.solvers.keys().copied().collect()
    }
}

impl Default for SolverRegistry {
    fn default() -> Self {
        Self::with_defaults()
    }
}
