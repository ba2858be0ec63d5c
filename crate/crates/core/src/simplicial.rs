//! Regular grid on the product of strategy simplices, its triangulation into
//! simplices `Delta(w0, phi)`, the labelling rule, and exhaustive search for
//! stopping simplices.
//!
//! Grid points are integer numerators per (player, state) summing to `d`.
//! For each (player, state) block the displacement column `Q(i, s, a)` moves
//! one unit from action `a` to action `a + 1 (mod A^i)`. For an index set `T`
//! that leaves at least one action of every block out, the region
//!
//! ```text
//! A(T) = { v0 + sum_{t in T} c_t Q(t) : c_t >= 0 } intersected with the grid
//! ```
//!
//! is triangulated by the simplices `w0, w0 + Q(phi(1)), ...` over base points
//! `w0 in A(T)` and permutations `phi` of `T`. In cone coordinates this is
//! the Kuhn triangulation of the nonnegative orthant.

use std::collections::HashMap;
use std::fmt;
use std::ops::ControlFlow;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certify::stopping_bound;
use crate::error::{Error, Result};
use crate::game::{check_index, StochasticGame, StrategyProfile};
use crate::nash_map::{displacement, residual};

/// Largest grid that exhaustive routines will enumerate.
pub const MAX_GRID_POINTS: u128 = 10_000_000;

/// Displacements within this distance of the minimum count as ties.
pub const LABEL_TIE_TOL: f64 = 1e-12;

/// A (player, state, action) coordinate; also used as a grid label.
/// Ordering is lexicographic in that field order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 3]", into = "[usize; 3]")]
pub struct Coord {
    pub player: usize,
    pub state: usize,
    pub action: usize,
}

pub type Label = Coord;

impl Coord {
    pub fn new(player: usize, state: usize, action: usize) -> Self {
        Coord { player, state, action }
    }

    pub fn check(&self, game: &StochasticGame) -> Result<()> {
        check_index("player", self.player, game.num_players())?;
        check_index("state", self.state, game.num_states())?;
        check_index("action", self.action, game.num_actions(self.player))
    }

    /// Human form with 1-based player and game names, e.g. `(1, s1, a2)`.
    pub fn display<'a>(&'a self, game: &'a StochasticGame) -> impl fmt::Display + 'a {
        NamedCoord { coord: self, game }
    }
}

impl From<[usize; 3]> for Coord {
    fn from(v: [usize; 3]) -> Self {
        Coord::new(v[0], v[1], v[2])
    }
}

impl From<Coord> for [usize; 3] {
    fn from(c: Coord) -> Self {
        [c.player, c.state, c.action]
    }
}

struct NamedCoord<'a> {
    coord: &'a Coord,
    game: &'a StochasticGame,
}

impl fmt::Display for NamedCoord<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = self.coord;
        write!(
            f,
            "({}, {}, {})",
            c.player + 1,
            self.game.state_name(c.state),
            self.game.action_name(c.player, c.action)
        )
    }
}

/// A point of the grid of size `d`: `numerators[player][state][action]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridProfile {
    d: u32,
    numerators: Vec<Vec<Vec<u32>>>,
}

impl GridProfile {
    pub fn new(game: &StochasticGame, d: u32, numerators: Vec<Vec<Vec<u32>>>) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidArgument("grid size d must be at least 1".into()));
        }
        let point = GridProfile { d, numerators };
        point.check(game)?;
        Ok(point)
    }

    /// Builds a point from numerators listed in (player, state, action) order.
    pub fn from_flat(game: &StochasticGame, d: u32, flat: &[u32]) -> Result<Self> {
        let expected: usize = game.action_counts().iter().sum::<usize>() * game.num_states();
        if flat.len() != expected {
            return Err(Error::InvalidGridPoint(format!(
                "{} numerators given, the game has {expected} coordinates",
                flat.len()
            )));
        }
        let mut it = flat.iter().copied();
        let numerators = (0..game.num_players())
            .map(|i| {
                (0..game.num_states())
                    .map(|_| it.by_ref().take(game.num_actions(i)).collect())
                    .collect()
            })
            .collect();
        GridProfile::new(game, d, numerators)
    }

    fn check(&self, game: &StochasticGame) -> Result<()> {
        if self.numerators.len() != game.num_players() {
            return Err(Error::InvalidGridPoint(format!(
                "{} players given, game has {}",
                self.numerators.len(),
                game.num_players()
            )));
        }
        for (i, per_state) in self.numerators.iter().enumerate() {
            if per_state.len() != game.num_states() {
                return Err(Error::InvalidGridPoint(format!("player {i}: wrong number of states")));
            }
            for (s, row) in per_state.iter().enumerate() {
                if row.len() != game.num_actions(i) {
                    return Err(Error::InvalidGridPoint(format!(
                        "player {i} state {s}: {} numerators for {} actions",
                        row.len(),
                        game.num_actions(i)
                    )));
                }
                let sum: u64 = row.iter().map(|&x| x as u64).sum();
                if sum != self.d as u64 {
                    return Err(Error::InvalidGridPoint(format!(
                        "player {i} state {s}: numerators sum to {sum}, expected d = {}",
                        self.d
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn d(&self) -> u32 {
        self.d
    }

    pub fn numerators(&self) -> &[Vec<Vec<u32>>] {
        &self.numerators
    }

    pub fn get(&self, c: Coord) -> u32 {
        self.numerators[c.player][c.state][c.action]
    }

    pub fn flat(&self) -> Vec<u32> {
        self.numerators.iter().flatten().flatten().copied().collect()
    }

    pub fn to_profile(&self) -> StrategyProfile {
        let d = self.d as f64;
        StrategyProfile::from_probs_unchecked(
            self.numerators
                .iter()
                .map(|ps| {
                    ps.iter()
                        .map(|row| row.iter().map(|&x| x as f64 / d).collect())
                        .collect()
                })
                .collect(),
        )
    }

    /// Adds a displacement column; `None` if a numerator would go negative.
    pub fn step(&self, column: &QColumn) -> Option<GridProfile> {
        if column.is_zero() {
            return Some(self.clone());
        }
        let row = &self.numerators[column.player][column.state];
        if row[column.minus] == 0 {
            return None;
        }
        let mut next = self.clone();
        let row = &mut next.numerators[column.player][column.state];
        row[column.minus] -= 1;
        row[column.plus] += 1;
        Some(next)
    }
}

/// Number of grid points `prod_{i,s} C(d + A^i - 1, A^i - 1)`, saturating.
pub fn grid_size(game: &StochasticGame, d: u32) -> u128 {
    let mut total: u128 = 1;
    for i in 0..game.num_players() {
        let per_block = binomial(
            d as u128 + game.num_actions(i) as u128 - 1,
            game.num_actions(i) as u128 - 1,
        );
        for _ in 0..game.num_states() {
            total = total.saturating_mul(per_block);
        }
    }
    total
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, j| acc.saturating_mul(n - j) / (j + 1))
}

/// Every composition of `d` into `parts` nonnegative integers, in
/// lexicographically ascending order.
pub fn compositions(d: u32, parts: usize) -> Vec<Vec<u32>> {
    fn rec(remaining: u32, parts: usize, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if parts == 1 {
            prefix.push(remaining);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for x in 0..=remaining {
            prefix.push(x);
            rec(remaining - x, parts - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(d, parts, &mut Vec::with_capacity(parts), &mut out);
    out
}

/// Iterator over the grid in lexicographic order of flattened numerators.
pub struct GridPoints {
    d: u32,
    blocks: Vec<(usize, usize)>,
    choices: Vec<Vec<Vec<u32>>>,
    odometer: Vec<usize>,
    template: Vec<Vec<Vec<u32>>>,
    done: bool,
}

impl Iterator for GridPoints {
    type Item = GridProfile;

    fn next(&mut self) -> Option<GridProfile> {
        if self.done {
            return None;
        }
        let mut numerators = self.template.clone();
        for (b, &(i, s)) in self.blocks.iter().enumerate() {
            numerators[i][s] = self.choices[b][self.odometer[b]].clone();
        }
        // advance, last block fastest
        self.done = true;
        for b in (0..self.blocks.len()).rev() {
            self.odometer[b] += 1;
            if self.odometer[b] < self.choices[b].len() {
                self.done = false;
                break;
            }
            self.odometer[b] = 0;
        }
        Some(GridProfile { d: self.d, numerators })
    }
}

fn blocks(game: &StochasticGame) -> Vec<(usize, usize)> {
    (0..game.num_players())
        .flat_map(|i| (0..game.num_states()).map(move |s| (i, s)))
        .collect()
}

/// Enumerates every point of the grid of size `d` exactly once.
pub fn grid_points(game: &StochasticGame, d: u32) -> Result<GridPoints> {
    if d == 0 {
        return Err(Error::InvalidArgument("grid size d must be at least 1".into()));
    }
    let blocks = blocks(game);
    let choices = blocks
        .iter()
        .map(|&(i, _)| compositions(d, game.num_actions(i)))
        .collect();
    let template = vec![vec![Vec::new(); game.num_states()]; game.num_players()];
    Ok(GridPoints {
        d,
        odometer: vec![0; blocks.len()],
        blocks,
        choices,
        template,
        done: false,
    })
}

fn guard(game: &StochasticGame, d: u32) -> Result<()> {
    let size = grid_size(game, d);
    if size > MAX_GRID_POINTS {
        return Err(Error::TooLarge {
            size,
            limit: MAX_GRID_POINTS,
        });
    }
    Ok(())
}

/// Column `Q(i, s, a)`: `-1` at action `a`, `+1` at action `a + 1 mod A^i`,
/// within block (i, s) only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QColumn {
    pub player: usize,
    pub state: usize,
    pub minus: usize,
    pub plus: usize,
}

impl QColumn {
    pub fn is_zero(&self) -> bool {
        self.minus == self.plus
    }

    /// Dense form laid out like a profile.
    pub fn dense(&self, game: &StochasticGame) -> Vec<Vec<Vec<i64>>> {
        let mut out: Vec<Vec<Vec<i64>>> = (0..game.num_players())
            .map(|i| vec![vec![0; game.num_actions(i)]; game.num_states()])
            .collect();
        out[self.player][self.state][self.minus] -= 1;
        out[self.player][self.state][self.plus] += 1;
        out
    }
}

pub fn q_column(game: &StochasticGame, coord: Coord) -> Result<QColumn> {
    coord.check(game)?;
    let m = game.num_actions(coord.player);
    Ok(QColumn {
        player: coord.player,
        state: coord.state,
        minus: coord.action,
        plus: (coord.action + 1) % m,
    })
}

/// Label of a grid point: the lexicographically least coordinate with
/// positive probability whose displacement `f(pi) - pi` attains the minimum.
pub fn label_point(game: &StochasticGame, point: &GridProfile) -> Result<Label> {
    point.check(game)?;
    let pi = point.to_profile();
    let disp = displacement(game, &pi)?;
    let mut min = f64::INFINITY;
    for (i, per_state) in disp.iter().enumerate() {
        for (s, row) in per_state.iter().enumerate() {
            for (a, &x) in row.iter().enumerate() {
                if point.numerators[i][s][a] > 0 {
                    min = min.min(x);
                }
            }
        }
    }
    for (i, per_state) in disp.iter().enumerate() {
        for (s, row) in per_state.iter().enumerate() {
            for (a, &x) in row.iter().enumerate() {
                if point.numerators[i][s][a] > 0 && x <= min + LABEL_TIE_TOL {
                    return Ok(Coord::new(i, s, a));
                }
            }
        }
    }
    unreachable!("every block has a positive numerator")
}

/// The starting point `v0`: per block, the lexicographically least grid
/// vector nearest the uniform distribution (the remainder `d mod A` is
/// spread over the last actions).
pub fn start_point(game: &StochasticGame, d: u32) -> Result<GridProfile> {
    let numerators = (0..game.num_players())
        .map(|i| {
            let m = game.num_actions(i) as u32;
            let (q, r) = (d / m, d % m);
            let row: Vec<u32> = (0..m).map(|a| if a >= m - r { q + 1 } else { q }).collect();
            vec![row; game.num_states()]
        })
        .collect();
    GridProfile::new(game, d, numerators)
}

/// Nonnegative cone coefficients of `w - v0` in the Q columns of one block,
/// normalised so that the smallest coefficient is zero.
fn block_coefficients(v0: &[u32], w: &[u32]) -> Vec<i64> {
    let m = v0.len();
    let mut lambda = vec![0i64; m];
    // Delta_j = lambda_{j-1} - lambda_j
    for j in 1..m {
        lambda[j] = lambda[j - 1] - (w[j] as i64 - v0[j] as i64);
    }
    let min = *lambda.iter().min().expect("nonempty block");
    lambda.iter().map(|x| x - min).collect()
}

/// Cone coefficients of `w` relative to `v0` restricted to `t`, or `None` if
/// `w` is not in `A(T)`.
pub fn cone_coefficients(v0: &GridProfile, w: &GridProfile, t: &[Coord]) -> Option<HashMap<Coord, i64>> {
    let mut out = HashMap::new();
    for (i, per_state) in w.numerators.iter().enumerate() {
        for (s, row) in per_state.iter().enumerate() {
            let lambda = block_coefficients(&v0.numerators[i][s], row);
            for (a, &c) in lambda.iter().enumerate() {
                let coord = Coord::new(i, s, a);
                if c > 0 {
                    if !t.contains(&coord) {
                        return None;
                    }
                    out.insert(coord, c);
                }
            }
        }
    }
    Some(out)
}

/// `T` belongs to the admissible collection: valid, duplicate-free, and
/// missing at least one action of every (player, state) block.
pub fn check_index_set(game: &StochasticGame, t: &[Coord]) -> Result<()> {
    let mut per_block: HashMap<(usize, usize), usize> = HashMap::new();
    for (k, c) in t.iter().enumerate() {
        c.check(game)?;
        if t[..k].contains(c) {
            return Err(Error::InvalidSimplex(format!(
                "duplicate coordinate {c:?} in index set"
            )));
        }
        *per_block.entry((c.player, c.state)).or_default() += 1;
    }
    for (&(i, s), &count) in &per_block {
        if count >= game.num_actions(i) {
            return Err(Error::InvalidSimplex(format!(
                "index set covers every action of player {i} at state {s}"
            )));
        }
    }
    Ok(())
}

/// A simplex `Delta(w0, phi)`: `phi(k) = index_set[permutation[k - 1]]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GridSimplex {
    pub base: GridProfile,
    pub index_set: Vec<Coord>,
    pub permutation: Vec<usize>,
}

impl GridSimplex {
    pub fn d(&self) -> u32 {
        self.base.d
    }

    /// Coordinates in the order the columns are applied.
    pub fn ordered_columns(&self) -> impl Iterator<Item = Coord> + '_ {
        self.permutation.iter().map(|&k| self.index_set[k])
    }

    fn check_permutation(&self) -> Result<()> {
        let mut seen = vec![false; self.index_set.len()];
        if self.permutation.len() != self.index_set.len() {
            return Err(Error::InvalidSimplex(
                "permutation length differs from index set".into(),
            ));
        }
        for &k in &self.permutation {
            if k >= seen.len() || seen[k] {
                return Err(Error::InvalidSimplex(format!(
                    "{:?} is not a permutation",
                    self.permutation
                )));
            }
            seen[k] = true;
        }
        Ok(())
    }
}

/// Vertices `w0, ..., w^{|T|}` with `w^k = w^{k-1} + Q(phi(k))`.
pub fn simplex_vertices(game: &StochasticGame, sigma: &GridSimplex) -> Result<Vec<GridProfile>> {
    sigma.base.check(game)?;
    sigma.check_permutation()?;
    let mut vertices = Vec::with_capacity(sigma.index_set.len() + 1);
    vertices.push(sigma.base.clone());
    for coord in sigma.ordered_columns() {
        let column = q_column(game, coord)?;
        let next = vertices
            .last()
            .expect("nonempty")
            .step(&column)
            .ok_or_else(|| Error::InvalidSimplex(format!("vertex {} leaves the grid", vertices.len())))?;
        vertices.push(next);
    }
    Ok(vertices)
}

/// Full membership in the triangulation: admissible `T`, base point in
/// `A(T)`, and all vertices on the grid.
pub fn check_simplex(game: &StochasticGame, sigma: &GridSimplex) -> Result<Vec<GridProfile>> {
    check_index_set(game, &sigma.index_set)?;
    let vertices = simplex_vertices(game, sigma)?;
    let v0 = start_point(game, sigma.d())?;
    if cone_coefficients(&v0, &sigma.base, &sigma.index_set).is_none() {
        return Err(Error::InvalidSimplex("base point is outside A(T)".into()));
    }
    Ok(vertices)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SimplexClass {
    Incomplete,
    CompletelyLabelled,
    Stopping { player: usize, state: usize },
}

impl SimplexClass {
    pub fn is_stopping(&self) -> bool {
        matches!(self, SimplexClass::Stopping { .. })
    }

    pub fn describe(&self, game: &StochasticGame) -> String {
        match *self {
            SimplexClass::Incomplete => "incomplete".into(),
            SimplexClass::CompletelyLabelled => "completely-labelled".into(),
            SimplexClass::Stopping { player, state } => {
                format!("stopping({}, {})", player + 1, game.state_name(state))
            }
        }
    }
}

fn class_of(game: &StochasticGame, labels: &[Label]) -> SimplexClass {
    for (k, l) in labels.iter().enumerate() {
        if labels[..k].contains(l) {
            return SimplexClass::Incomplete;
        }
    }
    for i in 0..game.num_players() {
        for s in 0..game.num_states() {
            let covered = (0..game.num_actions(i)).all(|a| labels.contains(&Coord::new(i, s, a)));
            if covered {
                return SimplexClass::Stopping { player: i, state: s };
            }
        }
    }
    SimplexClass::CompletelyLabelled
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub vertices: Vec<GridProfile>,
    pub labels: Vec<Label>,
    pub class: SimplexClass,
}

pub fn classify_simplex(game: &StochasticGame, sigma: &GridSimplex) -> Result<Classification> {
    let vertices = check_simplex(game, sigma)?;
    let labels = vertices
        .iter()
        .map(|v| label_point(game, v))
        .collect::<Result<Vec<_>>>()?;
    let class = class_of(game, &labels);
    Ok(Classification {
        vertices,
        labels,
        class,
    })
}

/// Memoised labels, shared across search threads.
struct LabelCache<'g> {
    game: &'g StochasticGame,
    map: Mutex<HashMap<GridProfile, Label>>,
}

impl<'g> LabelCache<'g> {
    fn new(game: &'g StochasticGame) -> Self {
        LabelCache {
            game,
            map: Mutex::new(HashMap::new()),
        }
    }

    fn label(&self, p: &GridProfile) -> Label {
        if let Some(l) = self.map.lock().expect("label cache").get(p) {
            return *l;
        }
        let l = label_point(self.game, p).expect("grid point is valid");
        self.map.lock().expect("label cache").insert(p.clone(), l);
        l
    }
}

/// Admissible per-block index subsets (bit masks over actions) containing the
/// support of the base point's cone coefficients.
fn block_options(game: &StochasticGame, v0: &GridProfile, w0: &GridProfile) -> Vec<Vec<u32>> {
    blocks(game)
        .into_iter()
        .map(|(i, s)| {
            let m = game.num_actions(i);
            let lambda = block_coefficients(&v0.numerators[i][s], &w0.numerators[i][s]);
            let support: u32 = lambda
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .fold(0, |acc, (a, _)| acc | (1 << a));
            let full = (1u32 << m) - 1;
            (0..full).filter(|mask| mask & support == support).collect()
        })
        .collect()
}

/// Admissible index sets for which `w0` lies in `A(T)`, ordered by size and
/// then lexicographically.
fn index_sets_for_base(game: &StochasticGame, v0: &GridProfile, w0: &GridProfile) -> Vec<Vec<Coord>> {
    let bl = blocks(game);
    let options = block_options(game, v0, w0);
    let mut sets: Vec<Vec<Coord>> = vec![Vec::new()];
    for (b, &(i, s)) in bl.iter().enumerate() {
        let mut next = Vec::with_capacity(sets.len() * options[b].len());
        for prefix in &sets {
            for &mask in &options[b] {
                let mut t = prefix.clone();
                t.extend(
                    (0..game.num_actions(i))
                        .filter(|a| mask & (1 << a) != 0)
                        .map(|a| Coord::new(i, s, a)),
                );
                next.push(t);
            }
        }
        sets = next;
    }
    sets.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    sets
}

/// Depth-first walk over permutations of `t` in lexicographic order, pruning
/// prefixes that leave the grid or repeat a label. `visit` sees every
/// completely labelled full simplex.
fn walk_permutations<B>(
    game: &StochasticGame,
    cache: &LabelCache<'_>,
    w0: &GridProfile,
    t: &[Coord],
    visit: &mut dyn FnMut(GridSimplex, Vec<Label>, SimplexClass) -> ControlFlow<B>,
) -> ControlFlow<B> {
    let columns: Vec<QColumn> = t
        .iter()
        .map(|&c| q_column(game, c).expect("valid coordinate"))
        .collect();
    let mut perm = Vec::with_capacity(t.len());
    let mut used = vec![false; t.len()];
    let mut vertices = vec![w0.clone()];
    let mut labels = vec![cache.label(w0)];

    #[allow(clippy::too_many_arguments)]
    fn rec<B>(
        game: &StochasticGame,
        cache: &LabelCache<'_>,
        t: &[Coord],
        columns: &[QColumn],
        perm: &mut Vec<usize>,
        used: &mut [bool],
        vertices: &mut Vec<GridProfile>,
        labels: &mut Vec<Label>,
        visit: &mut dyn FnMut(GridSimplex, Vec<Label>, SimplexClass) -> ControlFlow<B>,
    ) -> ControlFlow<B> {
        if perm.len() == t.len() {
            let class = class_of(game, labels);
            let sigma = GridSimplex {
                base: vertices[0].clone(),
                index_set: t.to_vec(),
                permutation: perm.clone(),
            };
            return visit(sigma, labels.clone(), class);
        }
        for k in 0..t.len() {
            if used[k] {
                continue;
            }
            let Some(next) = vertices.last().expect("nonempty").step(&columns[k]) else {
                continue;
            };
            let label = cache.label(&next);
            if labels.contains(&label) {
                continue;
            }
            used[k] = true;
            perm.push(k);
            vertices.push(next);
            labels.push(label);
            rec(game, cache, t, columns, perm, used, vertices, labels, visit)?;
            labels.pop();
            vertices.pop();
            perm.pop();
            used[k] = false;
        }
        ControlFlow::Continue(())
    }

    if t.is_empty() {
        let class = class_of(game, &labels);
        return visit(
            GridSimplex {
                base: w0.clone(),
                index_set: Vec::new(),
                permutation: Vec::new(),
            },
            labels,
            class,
        );
    }
    rec(
        game,
        cache,
        t,
        &columns,
        &mut perm,
        &mut used,
        &mut vertices,
        &mut labels,
        visit,
    )
}

/// A stopping simplex together with its vertex labels.
#[derive(Debug, Clone, PartialEq)]
pub struct StoppingSimplex {
    pub simplex: GridSimplex,
    pub labels: Vec<Label>,
    pub class: SimplexClass,
}

fn search_base(
    game: &StochasticGame,
    cache: &LabelCache<'_>,
    v0: &GridProfile,
    w0: &GridProfile,
) -> Option<StoppingSimplex> {
    for t in index_sets_for_base(game, v0, w0) {
        let found = walk_permutations(game, cache, w0, &t, &mut |simplex, labels, class| {
            if class.is_stopping() {
                ControlFlow::Break(StoppingSimplex { simplex, labels, class })
            } else {
                ControlFlow::Continue(())
            }
        });
        if let ControlFlow::Break(s) = found {
            return Some(s);
        }
    }
    None
}

/// Exhaustive deterministic search for a stopping simplex on the grid of
/// size `d`. Returns the first one in the order: base point, `|T|`, `T`,
/// permutation.
pub fn find_stopping_simplex(game: &StochasticGame, d: u32) -> Result<Option<StoppingSimplex>> {
    guard(game, d)?;
    let v0 = start_point(game, d)?;
    let cache = LabelCache::new(game);
    let bases: Vec<GridProfile> = grid_points(game, d)?.collect();
    Ok(bases.par_iter().find_map_first(|w0| search_base(game, &cache, &v0, w0)))
}

/// Every stopping simplex of the triangulation, in search order.
pub fn stopping_simplices(game: &StochasticGame, d: u32) -> Result<Vec<StoppingSimplex>> {
    guard(game, d)?;
    let v0 = start_point(game, d)?;
    let cache = LabelCache::new(game);
    let bases: Vec<GridProfile> = grid_points(game, d)?.collect();
    let per_base: Vec<Vec<StoppingSimplex>> = bases
        .par_iter()
        .map(|w0| {
            let mut found = Vec::new();
            for t in index_sets_for_base(game, &v0, w0) {
                let _ = walk_permutations::<()>(game, &cache, w0, &t, &mut |simplex, labels, class| {
                    if class.is_stopping() {
                        found.push(StoppingSimplex { simplex, labels, class });
                    }
                    ControlFlow::Continue(())
                });
            }
            found
        })
        .collect();
    Ok(per_base.into_iter().flatten().collect())
}

/// All simplices of `Sigma_T` for one index set, without labelling.
pub fn simplices_for_index_set(game: &StochasticGame, d: u32, t: &[Coord]) -> Result<Vec<GridSimplex>> {
    guard(game, d)?;
    check_index_set(game, t)?;
    let mut t = t.to_vec();
    t.sort();
    let v0 = start_point(game, d)?;
    let mut out = Vec::new();
    for w0 in grid_points(game, d)? {
        if cone_coefficients(&v0, &w0, &t).is_none() {
            continue;
        }
        let mut perm: Vec<usize> = (0..t.len()).collect();
        loop {
            let sigma = GridSimplex {
                base: w0.clone(),
                index_set: t.clone(),
                permutation: perm.clone(),
            };
            if simplex_vertices(game, &sigma).is_ok() {
                out.push(sigma);
            }
            if !next_permutation(&mut perm) {
                break;
            }
        }
    }
    Ok(out)
}

fn next_permutation(p: &mut [usize]) -> bool {
    if p.len() < 2 {
        return false;
    }
    let Some(i) = (0..p.len() - 1).rev().find(|&i| p[i] < p[i + 1]) else {
        return false;
    };
    let j = (i + 1..p.len()).rev().find(|&j| p[j] > p[i]).expect("successor exists");
    p.swap(i, j);
    p[i + 1..].reverse();
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoppingCheck {
    pub bound: f64,
    pub vertex_residuals: Vec<f64>,
    pub max_residual: f64,
    pub passed: bool,
}

/// Checks `||f(pi) - pi|| <= A_max^2 (lambda + 1) / d` (slack 1e-8) at every
/// vertex of a stopping simplex.
pub fn stopping_residual_check(game: &StochasticGame, sigma: &GridSimplex, d: u32) -> Result<StoppingCheck> {
    if sigma.d() != d {
        return Err(Error::InvalidSimplex(format!(
            "simplex lives on grid {} not {d}",
            sigma.d()
        )));
    }
    let classification = classify_simplex(game, sigma)?;
    if !classification.class.is_stopping() {
        return Err(Error::NotStopping);
    }
    let bound = stopping_bound(game, d as u64);
    let vertex_residuals = classification
        .vertices
        .iter()
        .map(|v| residual(game, &v.to_profile()))
        .collect::<Result<Vec<_>>>()?;
    let max_residual = vertex_residuals.iter().copied().fold(0.0, f64::max);
    Ok(StoppingCheck {
        bound,
        passed: max_residual <= bound + 1e-8,
        vertex_residuals,
        max_residual,
    })
}

/// Text form of a simplex, as read and written by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexFile {
    pub d: u32,
    pub base: Vec<Vec<Vec<u32>>>,
    pub index_set: Vec<Coord>,
    pub permutation: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<Label>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classification: Option<String>,
}

impl SimplexFile {
    pub fn from_simplex(sigma: &GridSimplex, labels: Option<Vec<Label>>, classification: Option<String>) -> Self {
        SimplexFile {
            d: sigma.d(),
            base: sigma.base.numerators.clone(),
            index_set: sigma.index_set.clone(),
            permutation: sigma.permutation.clone(),
            labels,
            classification,
        }
    }

    pub fn to_simplex(&self, game: &StochasticGame) -> Result<GridSimplex> {
        Ok(GridSimplex {
            base: GridProfile::new(game, self.d, self.base.clone())?,
            index_set: self.index_set.clone(),
            permutation: self.permutation.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;

    fn bandit() -> StochasticGame {
        corpus::single_agent_bandit(vec![1.0, 0.0])
    }

    fn point(game: &StochasticGame, d: u32, flat: &[u32]) -> GridProfile {
        GridProfile::from_flat(game, d, flat).unwrap()
    }

    #[test]
    fn grid_counts() {
        let g = bandit();
        let pts: Vec<Vec<u32>> = grid_points(&g, 2).unwrap().map(|p| p.flat()).collect();
        assert_eq!(pts, vec![vec![0, 2], vec![1, 1], vec![2, 0]]);
        assert_eq!(grid_points(&g, 4).unwrap().count(), 5);
        assert_eq!(grid_points(&corpus::matching_pennies(), 2).unwrap().count(), 9);
        assert_eq!(grid_size(&corpus::matching_pennies(), 2), 9);
        assert!(grid_points(&g, 0).is_err());
    }

    #[test]
    fn grid_is_lexicographic_and_distinct() {
        let g = corpus::two_state_example();
        let pts: Vec<Vec<u32>> = grid_points(&g, 3).unwrap().map(|p| p.flat()).collect();
        assert_eq!(pts.len() as u128, grid_size(&g, 3));
        assert!(pts.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn q_matrix_two_actions() {
        let g = bandit();
        let c0 = q_column(&g, Coord::new(0, 0, 0)).unwrap().dense(&g);
        let c1 = q_column(&g, Coord::new(0, 0, 1)).unwrap().dense(&g);
        assert_eq!(c0[0][0], vec![-1, 1]);
        assert_eq!(c1[0][0], vec![1, -1]);
        assert!(q_column(&g, Coord::new(0, 0, 2)).is_err());
    }

    #[test]
    fn q_columns_sum_to_zero() {
        let g = corpus::bandit3();
        for a in 0..3 {
            let col = q_column(&g, Coord::new(0, 0, a)).unwrap().dense(&g);
            assert_eq!(col[0][0].iter().sum::<i64>(), 0);
            assert_eq!(col[0][0][a], -1);
            assert_eq!(col[0][0][(a + 1) % 3], 1);
        }
    }

    #[test]
    fn labels_on_bandit() {
        let g = bandit();
        assert_eq!(label_point(&g, &point(&g, 2, &[1, 1])).unwrap(), Coord::new(0, 0, 1));
        assert_eq!(label_point(&g, &point(&g, 2, &[2, 0])).unwrap(), Coord::new(0, 0, 0));
        let l = label_point(&g, &point(&g, 2, &[1, 1])).unwrap();
        assert_eq!(l.display(&g).to_string(), "(1, s1, a2)");
    }

    #[test]
    fn equilibrium_point_takes_least_positive_coordinate() {
        let g = corpus::matching_pennies();
        assert_eq!(
            label_point(&g, &point(&g, 2, &[1, 1, 1, 1])).unwrap(),
            Coord::new(0, 0, 0)
        );
    }

    #[test]
    fn vertices_of_edge() {
        let g = bandit();
        let sigma = GridSimplex {
            base: point(&g, 2, &[1, 1]),
            index_set: vec![Coord::new(0, 0, 0)],
            permutation: vec![0],
        };
        let v: Vec<Vec<u32>> = simplex_vertices(&g, &sigma)
            .unwrap()
            .iter()
            .map(GridProfile::flat)
            .collect();
        assert_eq!(v, vec![vec![1, 1], vec![0, 2]]);

        let bad = GridSimplex {
            base: point(&g, 2, &[0, 2]),
            ..sigma.clone()
        };
        assert!(matches!(simplex_vertices(&g, &bad), Err(Error::InvalidSimplex(_))));

        let point_simplex = GridSimplex {
            base: point(&g, 2, &[2, 0]),
            index_set: vec![],
            permutation: vec![],
        };
        assert_eq!(simplex_vertices(&g, &point_simplex).unwrap().len(), 1);
    }

    #[test]
    fn classification_cases() {
        let g = bandit();
        // labels a2 at (7,1) and a1 at (8,0)
        let sigma = GridSimplex {
            base: point(&g, 8, &[7, 1]),
            index_set: vec![Coord::new(0, 0, 1)],
            permutation: vec![0],
        };
        let c = classify_simplex(&g, &sigma).unwrap();
        assert_eq!(c.class, SimplexClass::Stopping { player: 0, state: 0 });
        assert_eq!(c.class.describe(&g), "stopping(1, s1)");

        // both endpoints labelled a2
        let sigma = GridSimplex {
            base: point(&g, 8, &[5, 3]),
            index_set: vec![Coord::new(0, 0, 1)],
            permutation: vec![0],
        };
        assert_eq!(classify_simplex(&g, &sigma).unwrap().class, SimplexClass::Incomplete);

        let sigma = GridSimplex {
            base: point(&g, 8, &[4, 4]),
            index_set: vec![],
            permutation: vec![],
        };
        assert!(!classify_simplex(&g, &sigma).unwrap().class.is_stopping());
    }

    #[test]
    fn index_set_must_leave_an_action_out() {
        let g = bandit();
        let both = vec![Coord::new(0, 0, 0), Coord::new(0, 0, 1)];
        assert!(check_index_set(&g, &both).is_err());
        assert!(check_index_set(&g, &both[..1]).is_ok());
    }

    #[test]
    fn start_point_spreads_remainder_last() {
        let g = corpus::bandit3();
        assert_eq!(start_point(&g, 4).unwrap().flat(), vec![1, 1, 2]);
        assert_eq!(start_point(&g, 3).unwrap().flat(), vec![1, 1, 1]);
        assert_eq!(start_point(&bandit(), 8).unwrap().flat(), vec![4, 4]);
    }

    #[test]
    fn cone_membership() {
        let g = corpus::bandit3();
        let v0 = start_point(&g, 3).unwrap();
        let w = point(&g, 3, &[2, 0, 1]);
        let coeffs = cone_coefficients(&v0, &w, &[Coord::new(0, 0, 1), Coord::new(0, 0, 2)]).unwrap();
        let mut rebuilt = vec![1i64, 1, 1];
        for (c, k) in &coeffs {
            let col = q_column(&g, *c).unwrap();
            rebuilt[col.minus] -= k;
            rebuilt[col.plus] += k;
        }
        assert_eq!(rebuilt, vec![2, 0, 1]);
        assert!(cone_coefficients(&v0, &w, &[Coord::new(0, 0, 0)]).is_none());
    }

    #[test]
    fn finds_stopping_simplex_on_bandit() {
        let g = bandit();
        let found = find_stopping_simplex(&g, 8).unwrap().expect("stopping simplex");
        let check = stopping_residual_check(&g, &found.simplex, 8).unwrap();
        assert!(check.passed);
        assert_eq!(check.bound, 18.5);
    }

    #[test]
    fn non_stopping_simplex_is_rejected_by_check() {
        let g = bandit();
        let sigma = GridSimplex {
            base: point(&g, 8, &[4, 4]),
            index_set: vec![],
            permutation: vec![],
        };
        assert!(matches!(
            stopping_residual_check(&g, &sigma, 8),
            Err(Error::NotStopping)
        ));
    }

    #[test]
    fn guard_rejects_large_grids() {
        let g = corpus::two_state_example();
        assert!(matches!(find_stopping_simplex(&g, 200), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn permutations_in_order() {
        let mut p = vec![0, 1, 2];
        let mut all = vec![p.clone()];
        while next_permutation(&mut p) {
            all.push(p.clone());
        }
        assert_eq!(all.len(), 6);
        assert!(all.windows(2).all(|w| w[0] < w[1]));
    }
}
