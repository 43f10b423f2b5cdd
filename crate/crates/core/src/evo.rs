//! Evolutionary baselines and heuristic inner-loop solvers.

use std::collections::HashSet;
use std::time::Instant;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{CategoricalDomain, Point};
use crate::mbo::{
    random_unvisited, run_mbo_from, History, InnerSolver, MboConfig, MboError, Proposal, ProposalContext,
    Record, RecordStatus,
};
use crate::objectives::BlackBox;
use crate::rng::{self, derive_seed};

#[derive(Debug, Error)]
pub enum EvoError {
    #[error("empty population")]
    EmptyHistory,
    #[error("parents have lengths {0} and {1}")]
    LengthMismatch(usize, usize),
    #[error("parent violates the subset-equality constraints")]
    InfeasibleParent,
    #[error("subset pairs: {0}")]
    BadPairs(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvoConfig {
    pub tournament: usize,
    pub alive: usize,
    pub p_cross: f64,
    pub p_mut: f64,
    pub seed: u64,
}

impl Default for EvoConfig {
    fn default() -> Self {
        Self::regevo()
    }
}

impl EvoConfig {
    /// Outer-loop RegEvo.
    pub fn regevo() -> Self {
        Self {
            tournament: 10,
            alive: 100,
            p_cross: 0.1,
            p_mut: 0.1,
            seed: 0,
        }
    }

    /// Inner-loop RegEvo for batched acquisition search.
    pub fn inner_regevo() -> Self {
        Self {
            tournament: 20,
            alive: 1000,
            p_cross: 0.2,
            p_mut: 0.01,
            seed: 0,
        }
    }

    /// Outer-loop ConEvo (single parent, no crossover).
    pub fn conevo() -> Self {
        Self {
            tournament: 20,
            alive: 100,
            p_cross: 0.0,
            p_mut: 0.05,
            seed: 0,
        }
    }

    /// Inner-loop ConEvo.
    pub fn inner_conevo() -> Self {
        Self {
            tournament: 20,
            alive: 1000,
            p_cross: 0.0,
            p_mut: 0.05,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), EvoError> {
        if self.tournament < 2 {
            return Err(EvoError::InvalidConfig("tournament size must be at least 2".into()));
        }
        if self.alive < self.tournament {
            return Err(EvoError::InvalidConfig("alive population must be at least the tournament size".into()));
        }
        for (name, p) in [("p_cross", self.p_cross), ("p_mut", self.p_mut)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(EvoError::InvalidConfig(format!("{name} must lie in [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Disjoint index sets paired for equal selection counts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetPairs {
    pairs: Vec<(Vec<usize>, Vec<usize>)>,
}

impl SubsetPairs {
    pub fn new(pairs: Vec<(Vec<usize>, Vec<usize>)>) -> Result<Self, EvoError> {
        let mut seen = HashSet::new();
        for (j, (a, b)) in pairs.iter().enumerate() {
            if a.len() != b.len() {
                return Err(EvoError::BadPairs(format!("pair {j} has sizes {} and {}", a.len(), b.len())));
            }
            for &i in a.iter().chain(b) {
                if !seen.insert(i) {
                    return Err(EvoError::BadPairs(format!("index {i} appears twice")));
                }
            }
        }
        Ok(Self { pairs })
    }

    pub fn pairs(&self) -> &[(Vec<usize>, Vec<usize>)] {
        &self.pairs
    }

    pub fn max_index(&self) -> Option<usize> {
        self.pairs.iter().flat_map(|(a, b)| a.iter().chain(b)).copied().max()
    }

    /// Direct count check on a binary point.
    pub fn is_satisfied(&self, p: &Point) -> bool {
        let ones = |s: &[usize]| s.iter().filter(|&&i| p.values()[i] == 1).count();
        self.pairs.iter().all(|(a, b)| ones(a) == ones(b))
    }
}

/// Indices of the top two of a uniform size-`min(T, pool)` subset of the
/// last `alive` entries (the best one twice for a single-entry pool).
pub fn tournament_select<R: Rng + ?Sized>(
    rewards: &[f64],
    tournament: usize,
    alive: usize,
    rng: &mut R,
) -> Result<(usize, usize), EvoError> {
    if rewards.is_empty() || alive == 0 {
        return Err(EvoError::EmptyHistory);
    }
    let start = rewards.len().saturating_sub(alive);
    let pool = rewards.len() - start;
    let k = tournament.min(pool).max(1);
    let mut picks: Vec<usize> = index::sample(rng, pool, k).iter().map(|i| start + i).collect();
    // Stable on ties so the draw order decides.
    picks.sort_by(|&a, &b| rewards[b].total_cmp(&rewards[a]));
    let first = picks[0];
    let second = picks.get(1).copied().unwrap_or(first);
    Ok((first, second))
}

/// Left-to-right copy from a random starting parent, switching source
/// between positions with probability `p_c`.
pub fn crossover<R: Rng + ?Sized>(p1: &Point, p2: &Point, p_c: f64, rng: &mut R) -> Result<Point, EvoError> {
    if p1.len() != p2.len() {
        return Err(EvoError::LengthMismatch(p1.len(), p2.len()));
    }
    let parents = [p1.values(), p2.values()];
    let mut cur = usize::from(rng.random_bool(0.5));
    let mut child = Vec::with_capacity(p1.len());
    for i in 0..p1.len() {
        if i > 0 && rng.random_bool(p_c) {
            cur ^= 1;
        }
        child.push(parents[cur][i]);
    }
    Ok(Point(child))
}

/// Resample each position with probability `p_mut` to a different symbol.
pub fn mutate<R: Rng + ?Sized>(p: &Point, p_mut: f64, domain: &CategoricalDomain, rng: &mut R) -> Point {
    let mut out = p.clone();
    for (i, v) in out.0.iter_mut().enumerate() {
        let size = domain.alphabet_size(i);
        if size < 2 || !rng.random_bool(p_mut) {
            continue;
        }
        let r = rng.random_range(0..size - 1);
        *v = if r >= *v { r + 1 } else { r };
    }
    out
}

/// Feasibility-preserving mutation for subset-equality domains. Positions
/// outside every pair mutate freely.
pub fn conevo_mutate<R: Rng + ?Sized>(p: &Point, pairs: &SubsetPairs, p_mut: f64, rng: &mut R) -> Result<Point, EvoError> {
    if pairs.max_index().is_some_and(|m| m >= p.len()) || p.values().iter().any(|&v| v > 1) || !pairs.is_satisfied(p) {
        return Err(EvoError::InfeasibleParent);
    }
    let mut child = p.0.clone();
    let mut paired = vec![false; p.len()];
    for (a, b) in pairs.pairs() {
        for &i in a.iter().chain(b) {
            paired[i] = true;
        }
        let (plus, minus) = if rng.random_bool(0.5) { (a, b) } else { (b, a) };
        let mut net = 0i64;
        for &i in plus {
            if rng.random_bool(p_mut) {
                child[i] ^= 1;
                net += if child[i] == 1 { 1 } else { -1 };
            }
        }
        if net != 0 {
            let want = usize::from(net < 0);
            let candidates: Vec<usize> = minus.iter().copied().filter(|&i| p.values()[i] == want).collect();
            let count = net.unsigned_abs() as usize;
            for k in index::sample(rng, candidates.len(), count).iter() {
                child[candidates[k]] ^= 1;
            }
        }
    }
    for (i, v) in child.iter_mut().enumerate() {
        if !paired[i] && rng.random_bool(p_mut) {
            *v ^= 1;
        }
    }
    Ok(Point(child))
}

fn binomial(n: usize, k: usize) -> u128 {
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Exact uniform draw from the binary points of length `n` satisfying the
/// pairs: per pair the common count `c` has weight `C(s, c)^2`.
pub fn uniform_subset_equality_sample<R: Rng + ?Sized>(pairs: &SubsetPairs, n: usize, rng: &mut R) -> Point {
    let mut x: Vec<usize> = (0..n).map(|_| usize::from(rng.random_bool(0.5))).collect();
    for (a, b) in pairs.pairs() {
        let s = a.len();
        let weights: Vec<u128> = (0..=s).map(|c| binomial(s, c).pow(2)).collect();
        let total: u128 = weights.iter().sum();
        let mut r = rng.random_range(0..total);
        let mut c = 0;
        while r >= weights[c] {
            r -= weights[c];
            c += 1;
        }
        for side in [a, b] {
            for &i in side {
                x[i] = 0;
            }
            for k in index::sample(rng, s, c).iter() {
                x[side[k]] = 1;
            }
        }
    }
    Point(x)
}

fn record_eval(
    h: &mut History,
    objective: &mut dyn BlackBox,
    p: Point,
    status: RecordStatus,
    seconds: f64,
) -> Result<(), MboError> {
    let reward = objective.evaluate(&p)?;
    h.push(Record {
        point: p,
        reward,
        solve_seconds: seconds,
        status,
    });
    Ok(())
}

/// Regularized evolution on the raw objective. Duplicates are re-evaluated
/// and recorded as they come.
pub fn run_regevo(
    objective: &mut dyn BlackBox,
    domain: &CategoricalDomain,
    budget: usize,
    cfg: &EvoConfig,
    init: Vec<Point>,
) -> Result<History, MboError> {
    cfg.validate()?;
    if init.is_empty() {
        return Err(EvoError::EmptyHistory.into());
    }
    if !domain.constraints().is_empty() {
        return Err(EvoError::InvalidConfig("RegEvo ignores domain constraints; use ConEvo".into()).into());
    }
    let mut h = History::new();
    for p in init {
        record_eval(&mut h, objective, p, RecordStatus::Initial, 0.0)?;
    }
    let mut rng = rng::seeded(derive_seed(cfg.seed, 0xe0));
    while h.len() < budget {
        let (a, b) = tournament_select(&h.rewards(), cfg.tournament, cfg.alive, &mut rng)?;
        let child = crossover(&h.records[a].point, &h.records[b].point, cfg.p_cross, &mut rng)?;
        let child = mutate(&child, cfg.p_mut, domain, &mut rng);
        record_eval(&mut h, objective, child, RecordStatus::Evolution, 0.0)?;
    }
    Ok(h)
}

/// Single-parent evolution with the feasibility-preserving mutator.
pub fn run_conevo(
    objective: &mut dyn BlackBox,
    domain: &CategoricalDomain,
    pairs: &SubsetPairs,
    budget: usize,
    cfg: &EvoConfig,
    init: Vec<Point>,
) -> Result<History, MboError> {
    cfg.validate()?;
    if init.is_empty() {
        return Err(EvoError::EmptyHistory.into());
    }
    let mut h = History::new();
    for p in init {
        record_eval(&mut h, objective, p, RecordStatus::Initial, 0.0)?;
    }
    let mut rng = rng::seeded(derive_seed(cfg.seed, 0xc0));
    while h.len() < budget {
        let (a, _) = tournament_select(&h.rewards(), cfg.tournament, cfg.alive, &mut rng)?;
        let child = conevo_mutate(&h.records[a].point, pairs, cfg.p_mut, &mut rng)?;
        debug_assert!(domain.is_feasible(&child));
        record_eval(&mut h, objective, child, RecordStatus::Evolution, 0.0)?;
    }
    Ok(h)
}

/// Variation operator for the batched inner search.
#[derive(Clone, Debug, PartialEq)]
pub enum InnerMutator {
    RegEvo,
    ConEvo(SubsetPairs),
}

/// Extend a population seeded with `(point, acquisition)` pairs by `budget`
/// candidates in batches of `batch`, and return the best candidate that is
/// feasible and not in `visited`.
#[allow(clippy::too_many_arguments)]
pub fn batched_inner_solve<R: Rng + ?Sized>(
    acquisition: &dyn Fn(&Point) -> f64,
    domain: &CategoricalDomain,
    budget: usize,
    batch: usize,
    cfg: &EvoConfig,
    mutator: &InnerMutator,
    seeds: Vec<(Point, f64)>,
    visited: &HashSet<Point>,
    rng: &mut R,
) -> Result<Option<(Point, f64)>, EvoError> {
    if batch == 0 || budget < batch {
        return Err(EvoError::InvalidConfig("need budget >= batch >= 1".into()));
    }
    if seeds.is_empty() {
        return Err(EvoError::EmptyHistory);
    }
    let mut points: Vec<Point> = Vec::with_capacity(seeds.len() + budget);
    let mut values: Vec<f64> = Vec::with_capacity(seeds.len() + budget);
    for (p, v) in seeds {
        points.push(p);
        values.push(v);
    }
    let mut best: Option<(Point, f64)> = None;
    let mut generated = 0;
    while generated < budget {
        let size = batch.min(budget - generated);
        let mut new = Vec::with_capacity(size);
        for _ in 0..size {
            let child = match mutator {
                InnerMutator::RegEvo => {
                    let (a, b) = tournament_select(&values, cfg.tournament, cfg.alive, rng)?;
                    let c = crossover(&points[a], &points[b], cfg.p_cross, rng)?;
                    mutate(&c, cfg.p_mut, domain, rng)
                }
                InnerMutator::ConEvo(pairs) => {
                    let (a, _) = tournament_select(&values, cfg.tournament, cfg.alive, rng)?;
                    conevo_mutate(&points[a], pairs, cfg.p_mut, rng)?
                }
            };
            let v = acquisition(&child);
            new.push((child, v));
        }
        for (p, v) in new {
            if best.as_ref().is_none_or(|(_, b)| v > *b) && !visited.contains(&p) && domain.is_feasible(&p) {
                best = Some((p.clone(), v));
            }
            points.push(p);
            values.push(v);
        }
        generated += size;
    }
    Ok(best)
}

/// Inner search by batched evolution on the surrogate.
pub struct EvoInner {
    pub cfg: EvoConfig,
    pub budget: usize,
    pub batch: usize,
    pub mutator: InnerMutator,
    pub max_draws: u64,
}

impl EvoInner {
    pub fn regevo() -> Self {
        Self {
            cfg: EvoConfig::inner_regevo(),
            budget: 10_000,
            batch: 100,
            mutator: InnerMutator::RegEvo,
            max_draws: 1_000_000,
        }
    }

    pub fn conevo(pairs: SubsetPairs) -> Self {
        Self {
            cfg: EvoConfig::inner_conevo(),
            budget: 10_000,
            batch: 100,
            mutator: InnerMutator::ConEvo(pairs),
            max_draws: 1_000_000,
        }
    }
}

fn fallback_point(
    ctx: &ProposalContext<'_>,
    pairs: Option<&SubsetPairs>,
    max_draws: u64,
    rng: &mut rng::Rng,
) -> Result<Point, MboError> {
    if let Some(pairs) = pairs {
        for _ in 0..max_draws.min(100_000) {
            let p = uniform_subset_equality_sample(pairs, ctx.domain.n(), rng);
            if !ctx.visited.contains(&p) && ctx.domain.is_feasible(&p) {
                return Ok(p);
            }
        }
    }
    random_unvisited(ctx.domain, ctx.visited, rng, max_draws).ok_or(MboError::Exhausted)
}

impl InnerSolver for EvoInner {
    fn name(&self) -> &str {
        match self.mutator {
            InnerMutator::RegEvo => "regevo",
            InnerMutator::ConEvo(_) => "conevo",
        }
    }

    fn propose(&mut self, ctx: &ProposalContext<'_>) -> Result<Proposal, MboError> {
        let start = Instant::now();
        let mut rng = rng::seeded(derive_seed(ctx.seed, 2));
        let acq = |p: &Point| ctx.surrogate.scaled(ctx.domain, p);
        let seeds: Vec<(Point, f64)> = ctx.history.records.iter().map(|r| (r.point.clone(), acq(&r.point))).collect();
        let found = batched_inner_solve(
            &acq,
            ctx.domain,
            self.budget,
            self.batch,
            &self.cfg,
            &self.mutator,
            seeds,
            ctx.visited,
            &mut rng,
        )?;
        let (point, status) = match found {
            Some((p, _)) => (p, RecordStatus::Heuristic),
            None => {
                let pairs = match &self.mutator {
                    InnerMutator::ConEvo(pairs) => Some(pairs),
                    InnerMutator::RegEvo => None,
                };
                (fallback_point(ctx, pairs, self.max_draws, &mut rng)?, RecordStatus::Fallback)
            }
        };
        Ok(Proposal {
            point,
            status,
            solve_seconds: start.elapsed().as_secs_f64(),
            solve: None,
        })
    }
}

/// Source of uniform feasible samples.
#[derive(Clone, Debug, PartialEq)]
pub enum Sampler {
    SubsetEquality(SubsetPairs),
    /// Rejection from the product space.
    Rejection { max_draws: u64 },
}

impl Sampler {
    pub fn sample<R: Rng + ?Sized>(&self, domain: &CategoricalDomain, rng: &mut R) -> Option<Point> {
        match self {
            Sampler::SubsetEquality(pairs) => Some(uniform_subset_equality_sample(pairs, domain.n(), rng)),
            Sampler::Rejection { max_draws } => (0..*max_draws)
                .map(|_| domain.sample_unconstrained(rng))
                .find(|p| domain.is_feasible(p)),
        }
    }
}

/// Inner step scoring uniform feasible samples with the surrogate.
pub struct RejSampleInner {
    pub samples: usize,
    pub sampler: Sampler,
    pub max_draws: u64,
}

pub const DEFAULT_SAMPLES_PER_STEP: usize = 10_000;

impl RejSampleInner {
    pub fn new(sampler: Sampler) -> Self {
        Self {
            samples: DEFAULT_SAMPLES_PER_STEP,
            sampler,
            max_draws: 1_000_000,
        }
    }
}

impl InnerSolver for RejSampleInner {
    fn name(&self) -> &str {
        "rejsample"
    }

    fn propose(&mut self, ctx: &ProposalContext<'_>) -> Result<Proposal, MboError> {
        let start = Instant::now();
        let mut rng = rng::seeded(derive_seed(ctx.seed, 3));
        let mut best: Option<(Point, f64)> = None;
        for _ in 0..self.samples {
            let Some(p) = self.sampler.sample(ctx.domain, &mut rng) else {
                break;
            };
            if ctx.visited.contains(&p) || !ctx.domain.is_feasible(&p) {
                continue;
            }
            let v = ctx.surrogate.scaled(ctx.domain, &p);
            if best.as_ref().is_none_or(|(_, b)| v > *b) {
                best = Some((p, v));
            }
        }
        let (point, status) = match best {
            Some((p, _)) => (p, RecordStatus::Heuristic),
            None => {
                let pairs = match &self.sampler {
                    Sampler::SubsetEquality(p) => Some(p),
                    Sampler::Rejection { .. } => None,
                };
                (fallback_point(ctx, pairs, self.max_draws, &mut rng)?, RecordStatus::Fallback)
            }
        };
        Ok(Proposal {
            point,
            status,
            solve_seconds: start.elapsed().as_secs_f64(),
            solve: None,
        })
    }
}

/// Surrogate loop whose inner step is uniform sampling.
pub fn run_rejsample(
    objective: &mut dyn BlackBox,
    domain: &CategoricalDomain,
    cfg: &MboConfig,
    samples_per_step: usize,
    sampler: Sampler,
    init: Vec<Point>,
) -> Result<History, MboError> {
    cfg.validate()?;
    let mut inner = RejSampleInner {
        samples: samples_per_step,
        sampler,
        max_draws: cfg.max_draws,
    };
    run_mbo_from(objective, domain, cfg, &mut inner, init)
}
