//! The outer model-based optimization loop: refit the surrogate, build the
//! acquisition MILP (domain + no-goods + network), solve, query, record.

use std::collections::HashSet;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use num_rational::Rational64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{CategoricalDomain, DomainError, EncodedPoint, LinearConstraint, OneHot, Point, Sense};
use crate::milp::{
    add_domain, random_objective_solve, DomainVars, MilpBackend, MilpError, MilpModel,
    SolveOptions, SolveResult, SolveStatus, VarId, DEFAULT_GAP_TOL, DEFAULT_TIME_LIMIT,
};
use crate::netencode::{domain_box, encode_network, interval_bounds, lp_bounds, BoundsReport, NetEncodeError};
use crate::objectives::{BlackBox, EvalError};
use crate::rng::{self, derive_seed};
use crate::surrogate::{Dataset, Surrogate, SurrogateError, TrainConfig};

#[derive(Debug, Error)]
pub enum MboError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("rejection sampling gave up after {draws} draws ({found} of {wanted} points found)")]
    RejectionBudgetExceeded { draws: u64, found: usize, wanted: usize },
    #[error("every feasible point has been visited")]
    Exhausted,
    #[error("network width {net} does not match domain width {domain}")]
    WidthMismatch { net: usize, domain: usize },
    #[error("empty history")]
    EmptyHistory,
    #[error("evaluation failed: {0}")]
    Objective(#[from] EvalError),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
    #[error(transparent)]
    Milp(#[from] MilpError),
    #[error(transparent)]
    Encode(#[from] NetEncodeError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Evo(#[from] crate::evo::EvoError),
    #[error("history csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    UniformRejection,
    RandomObjectiveMilp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundMode {
    Interval,
    Lp,
}

/// `Frozen` records zero solve seconds so reruns are byte-identical.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Clock {
    Wall,
    Frozen,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MboConfig {
    pub budget: usize,
    pub init_count: usize,
    pub train: TrainConfig,
    pub time_limit: f64,
    pub gap_tol: f64,
    pub seed: u64,
    pub init_strategy: InitStrategy,
    pub bound_mode: BoundMode,
    /// Cap on draws for rejection sampling.
    pub max_draws: u64,
    pub clock: Clock,
}

impl Default for MboConfig {
    fn default() -> Self {
        Self {
            budget: 100,
            init_count: 50,
            train: TrainConfig::default(),
            time_limit: DEFAULT_TIME_LIMIT,
            gap_tol: DEFAULT_GAP_TOL,
            seed: 0,
            init_strategy: InitStrategy::UniformRejection,
            bound_mode: BoundMode::Lp,
            max_draws: 1_000_000,
            clock: Clock::Wall,
        }
    }
}

impl MboConfig {
    pub fn validate(&self) -> Result<(), MboError> {
        if self.init_count == 0 {
            return Err(MboError::InvalidConfig("init_count must be positive".into()));
        }
        if self.budget < self.init_count {
            return Err(MboError::InvalidConfig(format!(
                "budget {} is smaller than init_count {}",
                self.budget, self.init_count
            )));
        }
        if !(self.time_limit > 0.0) {
            return Err(MboError::InvalidConfig("time_limit must be positive".into()));
        }
        if !(self.gap_tol >= 0.0) {
            return Err(MboError::InvalidConfig("gap_tol must be nonnegative".into()));
        }
        self.train.validate()?;
        Ok(())
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            time_limit: self.time_limit,
            gap_tol: self.gap_tol,
            initial_solution: None,
        }
    }
}

/// How a history entry was produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    Initial,
    Optimal,
    FeasibleTimeout,
    /// Solver error or no incumbent; a random feasible unvisited point was used.
    Fallback,
    /// Proposed by a heuristic inner solver.
    Heuristic,
    /// Proposed by a surrogate-free evolutionary step.
    Evolution,
}

impl RecordStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RecordStatus::Initial => "initial",
            RecordStatus::Optimal => "optimal",
            RecordStatus::FeasibleTimeout => "feasible_timeout",
            RecordStatus::Fallback => "fallback",
            RecordStatus::Heuristic => "heuristic",
            RecordStatus::Evolution => "evolution",
        }
    }
}

impl fmt::Display for RecordStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RecordStatus {
    type Err = MboError;

    fn from_str(s: &str) -> Result<Self, MboError> {
        Ok(match s {
            "initial" => RecordStatus::Initial,
            "optimal" => RecordStatus::Optimal,
            "feasible_timeout" => RecordStatus::FeasibleTimeout,
            "fallback" => RecordStatus::Fallback,
            "heuristic" => RecordStatus::Heuristic,
            "evolution" => RecordStatus::Evolution,
            other => return Err(MboError::Csv(format!("unknown status {other:?}"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub point: Point,
    pub reward: f64,
    pub solve_seconds: f64,
    pub status: RecordStatus,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct History {
    pub records: Vec<Record>,
}

impl History {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn push(&mut self, record: Record) {
        self.records.push(record);
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.reward).collect()
    }

    /// First record with the highest reward.
    pub fn best(&self) -> Option<&Record> {
        self.records
            .iter()
            .fold(None, |best: Option<&Record>, r| match best {
                Some(b) if b.reward >= r.reward => Some(b),
                _ => Some(r),
            })
    }

    pub fn dataset(&self) -> Dataset {
        Dataset::new(self.records.iter().map(|r| (r.point.clone(), r.reward)).collect())
    }

    pub fn has_duplicates(&self) -> bool {
        let mut seen = HashSet::new();
        !self.records.iter().all(|r| seen.insert(&r.point))
    }

    /// `step,point,reward,solve_seconds,status`, steps numbered from 1.
    pub fn write_csv<W: Write>(&self, domain: &CategoricalDomain, out: W) -> Result<(), MboError> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| MboError::Csv(e.to_string());
        w.write_record(["step", "point", "reward", "solve_seconds", "status"]).map_err(err)?;
        for (t, r) in self.records.iter().enumerate() {
            w.write_record([
                (t + 1).to_string(),
                domain.format_point(&r.point),
                r.reward.to_string(),
                r.solve_seconds.to_string(),
                r.status.to_string(),
            ])
            .map_err(err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self, domain: &CategoricalDomain) -> String {
        let mut buf = Vec::new();
        self.write_csv(domain, &mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("utf-8 csv")
    }

    pub fn read_csv(domain: &CategoricalDomain, path: impl AsRef<Path>) -> Result<Self, MboError> {
        let mut rd = csv::Reader::from_path(path).map_err(|e| MboError::Csv(e.to_string()))?;
        let mut h = History::new();
        for (line, row) in rd.records().enumerate() {
            let row = row.map_err(|e| MboError::Csv(e.to_string()))?;
            let field = |i: usize| row.get(i).ok_or_else(|| MboError::Csv(format!("row {}: missing field {i}", line + 2)));
            let num = |i: usize| -> Result<f64, MboError> {
                field(i)?
                    .parse()
                    .map_err(|_| MboError::Csv(format!("row {}: bad number in field {i}", line + 2)))
            };
            h.push(Record {
                point: domain.parse_point(field(1)?)?,
                reward: num(2)?,
                solve_seconds: num(3)?,
                status: field(4)?.parse()?,
            });
        }
        Ok(h)
    }
}

/// Terms and right-hand side of the no-good row over `bits`:
/// `sum_{b=0} z + sum_{b=1} (1 - z) >= rhs`, returned with the constants
/// moved to the right.
pub fn no_good_terms(bits: &[bool], onehot_groups: bool) -> (Vec<(usize, i64)>, i64) {
    let rhs = if onehot_groups { 2 } else { 1 };
    let ones = bits.iter().filter(|b| **b).count() as i64;
    let terms = bits
        .iter()
        .enumerate()
        .map(|(i, &b)| (i, if b { -1 } else { 1 }))
        .collect();
    (terms, rhs - ones)
}

/// No-good constraint excluding `e`, with the tightened right-hand side of 2
/// on one-hot grouped domains.
pub fn no_good_constraint(domain: &CategoricalDomain, e: &EncodedPoint, onehot_groups: bool) -> LinearConstraint {
    let (terms, rhs) = no_good_terms(&e.bits, onehot_groups);
    let terms = terms
        .into_iter()
        .map(|(flat, c)| (domain.one_hot_at(flat), Rational64::from_integer(c)))
        .collect::<Vec<(OneHot, Rational64)>>();
    LinearConstraint::new(terms, Sense::Ge, Rational64::from_integer(rhs)).expect("distinct flat indices")
}

/// Add the no-good row for `bits` over the model variables `vars`.
pub fn add_no_good(model: &mut MilpModel, vars: &[VarId], bits: &[bool], onehot_groups: bool) -> usize {
    let (terms, rhs) = no_good_terms(bits, onehot_groups);
    model.add_row(
        terms.into_iter().map(|(i, c)| (vars[i], c as f64)).collect(),
        Sense::Ge,
        rhs as f64,
    )
}

pub struct Acquisition {
    pub model: MilpModel,
    pub vars: DomainVars,
    pub output: VarId,
    pub bounds: BoundsReport,
    pub no_good_rows: usize,
}

/// One-hot rows, domain rows, one no-good per visited point and the network;
/// the objective is the network output in scaled units.
pub fn build_acquisition(
    backend: &dyn MilpBackend,
    surrogate: &Surrogate,
    domain: &CategoricalDomain,
    visited: &[EncodedPoint],
    bound_mode: BoundMode,
) -> Result<Acquisition, MboError> {
    let net = &surrogate.net;
    if net.input_width() != domain.width() {
        return Err(MboError::WidthMismatch {
            net: net.input_width(),
            domain: domain.width(),
        });
    }
    let bounds = match bound_mode {
        BoundMode::Interval => BoundsReport {
            bounds: interval_bounds(net, &domain_box(domain))?,
            fallback: false,
        },
        BoundMode::Lp => lp_bounds(backend, net, domain)?,
    };
    let mut model = MilpModel::new();
    let vars = add_domain(&mut model, domain);
    for e in visited {
        add_no_good(&mut model, &vars.bits, &e.bits, true);
    }
    let output = encode_network(&mut model, net, &bounds.bounds, &vars.bits)?;
    model.set_objective(vec![(output, 1.0)], 0.0);
    Ok(Acquisition {
        model,
        vars,
        output,
        bounds,
        no_good_rows: visited.len(),
    })
}

/// Uniformly drawn feasible point outside `visited`.
pub fn random_unvisited(
    domain: &CategoricalDomain,
    visited: &HashSet<Point>,
    rng: &mut rng::Rng,
    max_draws: u64,
) -> Option<Point> {
    for _ in 0..max_draws {
        let p = domain.sample_unconstrained(rng);
        if !visited.contains(&p) && domain.is_feasible(&p) {
            return Some(p);
        }
    }
    None
}

/// A feasible unvisited point from a random-objective MILP with no-goods on
/// every visited point.
pub fn milp_unvisited(
    backend: &dyn MilpBackend,
    domain: &CategoricalDomain,
    visited: &HashSet<Point>,
    seed: u64,
    opts: &SolveOptions,
) -> Result<Point, MboError> {
    let mut sorted: Vec<&Point> = visited.iter().collect();
    sorted.sort();
    let extra = sorted
        .into_iter()
        .map(|p| Ok(no_good_constraint(domain, &domain.encode(p)?, true)))
        .collect::<Result<Vec<_>, DomainError>>()?;
    match random_objective_solve(backend, domain, &extra, seed, opts) {
        Ok(p) => Ok(p),
        Err(MilpError::InfeasibleDomain) => Err(MboError::Exhausted),
        Err(e) => Err(e.into()),
    }
}

/// `count` distinct feasible points.
pub fn sample_initial(
    domain: &CategoricalDomain,
    count: usize,
    strategy: InitStrategy,
    seed: u64,
    max_draws: u64,
    backend: &dyn MilpBackend,
) -> Result<Vec<Point>, MboError> {
    let mut out = Vec::with_capacity(count);
    let mut seen = HashSet::new();
    match strategy {
        InitStrategy::UniformRejection => {
            let mut rng = rng::seeded(seed);
            let mut draws = 0u64;
            while out.len() < count {
                if draws >= max_draws {
                    return Err(MboError::RejectionBudgetExceeded {
                        draws,
                        found: out.len(),
                        wanted: count,
                    });
                }
                draws += 1;
                let p = domain.sample_unconstrained(&mut rng);
                if domain.is_feasible(&p) && seen.insert(p.clone()) {
                    out.push(p);
                }
            }
        }
        InitStrategy::RandomObjectiveMilp => {
            let opts = SolveOptions::default();
            let mut extra = Vec::new();
            for i in 0..count {
                let p = match random_objective_solve(backend, domain, &extra, derive_seed(seed, i as u64), &opts) {
                    Ok(p) => p,
                    Err(MilpError::InfeasibleDomain) => return Err(MboError::Exhausted),
                    Err(e) => return Err(e.into()),
                };
                extra.push(no_good_constraint(domain, &domain.encode(&p)?, true));
                out.push(p);
            }
        }
    }
    Ok(out)
}

/// Everything an inner solver may look at for one proposal.
pub struct ProposalContext<'a> {
    pub domain: &'a CategoricalDomain,
    pub surrogate: &'a Surrogate,
    pub history: &'a History,
    pub visited: &'a HashSet<Point>,
    /// 1-based index of the record being proposed.
    pub step: usize,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct Proposal {
    pub point: Point,
    pub status: RecordStatus,
    pub solve_seconds: f64,
    pub solve: Option<SolveResult>,
}

/// Maximizes the trained surrogate over the feasible unvisited points.
pub trait InnerSolver {
    fn name(&self) -> &str;

    fn propose(&mut self, ctx: &ProposalContext<'_>) -> Result<Proposal, MboError>;
}

/// Exact acquisition by MILP.
pub struct MilpInner {
    pub backend: Box<dyn MilpBackend>,
    pub bound_mode: BoundMode,
    pub opts: SolveOptions,
    pub max_draws: u64,
}

impl MilpInner {
    pub fn new(backend: Box<dyn MilpBackend>, cfg: &MboConfig) -> Self {
        Self {
            backend,
            bound_mode: cfg.bound_mode,
            opts: cfg.solve_options(),
            max_draws: cfg.max_draws,
        }
    }

    fn fallback(&self, ctx: &ProposalContext<'_>, solve: Option<SolveResult>, seconds: f64) -> Result<Proposal, MboError> {
        let mut rng = rng::seeded(derive_seed(ctx.seed, 1));
        let point = match random_unvisited(ctx.domain, ctx.visited, &mut rng, self.max_draws) {
            Some(p) => p,
            None => milp_unvisited(self.backend.as_ref(), ctx.domain, ctx.visited, ctx.seed, &SolveOptions::default())?,
        };
        Ok(Proposal {
            point,
            status: RecordStatus::Fallback,
            solve_seconds: seconds,
            solve,
        })
    }
}

impl InnerSolver for MilpInner {
    fn name(&self) -> &str {
        "milp"
    }

    fn propose(&mut self, ctx: &ProposalContext<'_>) -> Result<Proposal, MboError> {
        let mut visited: Vec<&Point> = ctx.visited.iter().collect();
        visited.sort();
        let encoded = visited
            .into_iter()
            .map(|p| ctx.domain.encode(p))
            .collect::<Result<Vec<_>, _>>()?;
        let acq = build_acquisition(self.backend.as_ref(), ctx.surrogate, ctx.domain, &encoded, self.bound_mode)?;
        let start = Instant::now();
        let res = self.backend.solve(&acq.model, &self.opts);
        let seconds = start.elapsed().as_secs_f64();
        match (res.status, &res.assignment) {
            (SolveStatus::Infeasible, _) => Err(MboError::Exhausted),
            (SolveStatus::Optimal | SolveStatus::FeasibleTimeout, Some(x)) => {
                let decoded = acq.vars.decode(ctx.domain, x).ok();
                match decoded {
                    Some(p) if ctx.domain.is_feasible(&p) && !ctx.visited.contains(&p) => Ok(Proposal {
                        point: p,
                        status: if res.status == SolveStatus::Optimal {
                            RecordStatus::Optimal
                        } else {
                            RecordStatus::FeasibleTimeout
                        },
                        solve_seconds: seconds,
                        solve: Some(res),
                    }),
                    _ => {
                        log::warn!("step {}: solver incumbent rejected by the exact checker", ctx.step);
                        self.fallback(ctx, Some(res), seconds)
                    }
                }
            }
            _ => {
                log::warn!("step {}: acquisition solve gave {}: {:?}", ctx.step, res.status, res.message);
                self.fallback(ctx, Some(res), seconds)
            }
        }
    }
}

/// One trial of the surrogate loop, advanced a step at a time.
pub struct MboSession<'a> {
    pub domain: &'a CategoricalDomain,
    pub cfg: MboConfig,
    history: History,
    visited: HashSet<Point>,
    /// Acquisition statuses of the last proposal, for inspection.
    pub last_solve: Option<SolveResult>,
}

impl<'a> MboSession<'a> {
    pub fn new(domain: &'a CategoricalDomain, cfg: MboConfig) -> Self {
        Self {
            domain,
            cfg,
            history: History::new(),
            visited: HashSet::new(),
            last_solve: None,
        }
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    pub fn into_history(self) -> History {
        self.history
    }

    pub fn visited(&self) -> &HashSet<Point> {
        &self.visited
    }

    /// Evaluate and record the initial points.
    pub fn seed_initial(&mut self, points: Vec<Point>, objective: &mut dyn BlackBox) -> Result<(), MboError> {
        for p in points {
            let reward = objective.evaluate(&p)?;
            self.record(p, reward, 0.0, RecordStatus::Initial);
        }
        Ok(())
    }

    pub fn record(&mut self, point: Point, reward: f64, solve_seconds: f64, status: RecordStatus) {
        let solve_seconds = match self.cfg.clock {
            Clock::Wall => solve_seconds,
            Clock::Frozen => 0.0,
        };
        self.visited.insert(point.clone());
        self.history.push(Record {
            point,
            reward,
            solve_seconds,
            status,
        });
    }

    /// Fit, propose and evaluate one point. `Ok(false)` once the domain is exhausted.
    pub fn step(&mut self, objective: &mut dyn BlackBox, inner: &mut dyn InnerSolver) -> Result<bool, MboError> {
        if self.history.is_empty() {
            return Err(MboError::EmptyHistory);
        }
        let t = self.history.len() + 1;
        let step_seed = derive_seed(self.cfg.seed, t as u64);
        let train = TrainConfig {
            seed: step_seed,
            ..self.cfg.train.clone()
        };
        let surrogate = Surrogate::train(&self.history.dataset(), &train, self.domain)?;
        let ctx = ProposalContext {
            domain: self.domain,
            surrogate: &surrogate,
            history: &self.history,
            visited: &self.visited,
            step: t,
            seed: step_seed,
        };
        let proposal = match inner.propose(&ctx) {
            Ok(p) => p,
            Err(MboError::Exhausted) => return Ok(false),
            Err(e) => return Err(e),
        };
        debug_assert!(!self.visited.contains(&proposal.point));
        let reward = objective.evaluate(&proposal.point)?;
        self.last_solve = proposal.solve;
        self.record(proposal.point, reward, proposal.solve_seconds, proposal.status);
        Ok(true)
    }
}

/// Initial dataset followed by surrogate-driven proposals up to the budget;
/// stops early with a partial history when the domain is exhausted.
pub fn run_mbo(
    objective: &mut dyn BlackBox,
    domain: &CategoricalDomain,
    cfg: &MboConfig,
    inner: &mut dyn InnerSolver,
    backend: &dyn MilpBackend,
) -> Result<History, MboError> {
    cfg.validate()?;
    let init = sample_initial(domain, cfg.init_count, cfg.init_strategy, cfg.seed, cfg.max_draws, backend)?;
    run_mbo_from(objective, domain, cfg, inner, init)
}

pub fn run_mbo_from(
    objective: &mut dyn BlackBox,
    domain: &CategoricalDomain,
    cfg: &MboConfig,
    inner: &mut dyn InnerSolver,
    init: Vec<Point>,
) -> Result<History, MboError> {
    let mut session = MboSession::new(domain, cfg.clone());
    session.seed_initial(init, objective)?;
    while session.history().len() < cfg.budget {
        if !session.step(objective, inner)? {
            log::info!("domain exhausted after {} points", session.history().len());
            break;
        }
    }
    Ok(session.into_history())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::{solve_exhaustive, ExhaustiveBackend, HighsBackend};
    use crate::objectives::FnObjective;
    use crate::surrogate::{DenseLayer, Mlp, RewardScaler};

    #[test]
    fn binary_no_good_without_grouping() {
        let mut m = MilpModel::new();
        let z = [m.add_binary("z1"), m.add_binary("z2")];
        let r = add_no_good(&mut m, &z, &[true, false], false);
        let row = &m.rows()[r];
        let excluded: Vec<(u8, u8)> = [(0, 0), (0, 1), (1, 0), (1, 1)]
            .into_iter()
            .filter(|&(a, b)| row.violation(&[a as f64, b as f64]) > 0.0)
            .collect();
        assert_eq!(excluded, vec![(1, 0)]);
    }

    #[test]
    fn grouped_no_good_has_rhs_two() {
        let (terms, rhs) = no_good_terms(&[false, true, true, false], true);
        // 2 - (number of set bits)
        assert_eq!(rhs, 0);
        assert_eq!(terms, vec![(0, 1), (1, -1), (2, -1), (3, 1)]);
        let d = CategoricalDomain::binary(2).unwrap();
        let p = Point(vec![1, 0]);
        let c = no_good_constraint(&d, &d.encode(&p).unwrap(), true);
        assert!(!c.satisfied_by(&p));
        assert_eq!(d.iter_points().filter(|q| c.satisfied_by(q)).count(), 3);
    }

    #[test]
    fn five_no_goods_leave_twenty_two_points() {
        let d = CategoricalDomain::uniform(3, 3).unwrap();
        let excluded = [vec![0, 0, 0], vec![1, 2, 0], vec![2, 2, 2], vec![0, 1, 2], vec![2, 0, 1]];
        let mut dd = d.clone();
        for p in &excluded {
            let p = Point(p.clone());
            dd.add_constraint(no_good_constraint(&d, &d.encode(&p).unwrap(), true)).unwrap();
        }
        assert_eq!(dd.feasible_points().count(), 22);
    }

    fn spike_surrogate(domain: &CategoricalDomain, target: &Point) -> Surrogate {
        // One hidden neuron firing only at `target`: sum of its bits minus (n - 1).
        let e = domain.encode(target).unwrap();
        let w: Vec<f64> = e.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        let net = Mlp::new(vec![
            DenseLayer::new(vec![w], vec![-(domain.n() as f64 - 1.0)]).unwrap(),
            DenseLayer::new(vec![vec![1.0]], vec![0.0]).unwrap(),
        ])
        .unwrap();
        Surrogate {
            net,
            scaler: RewardScaler::identity(),
        }
    }

    #[test]
    fn unique_maximizer_is_returned() {
        let d = CategoricalDomain::binary(3).unwrap();
        let target = Point(vec![1, 0, 1]);
        let s = spike_surrogate(&d, &target);
        let mut inner = MilpInner::new(Box::new(HighsBackend::default()), &MboConfig::default());
        let history = History::new();
        let visited = HashSet::new();
        let ctx = ProposalContext {
            domain: &d,
            surrogate: &s,
            history: &history,
            visited: &visited,
            step: 1,
            seed: 0,
        };
        let prop = inner.propose(&ctx).unwrap();
        assert_eq!(prop.point, target);
        assert_eq!(prop.status, RecordStatus::Optimal);
    }

    #[test]
    fn acquisition_with_everything_visited_is_infeasible() {
        let d = CategoricalDomain::binary(2).unwrap();
        let s = spike_surrogate(&d, &Point(vec![0, 0]));
        let visited: Vec<EncodedPoint> = d.iter_points().map(|p| d.encode(&p).unwrap()).collect();
        let acq = build_acquisition(&HighsBackend::default(), &s, &d, &visited, BoundMode::Interval).unwrap();
        assert_eq!(acq.no_good_rows, 4);
        assert_eq!(HighsBackend::default().solve(&acq.model, &SolveOptions::default()).status, SolveStatus::Infeasible);
        let ex = solve_exhaustive(&acq.model, acq.model.groups(), 1 << 20).unwrap();
        assert_eq!(ex.status, SolveStatus::Infeasible);
    }

    #[test]
    fn initial_sampling_exhausts_small_domain() {
        let d = CategoricalDomain::binary(3).unwrap();
        let pts = sample_initial(&d, 8, InitStrategy::UniformRejection, 3, 100_000, &ExhaustiveBackend::default()).unwrap();
        let set: HashSet<_> = pts.iter().collect();
        assert_eq!(set.len(), 8);
        let pts = sample_initial(&d, 8, InitStrategy::RandomObjectiveMilp, 3, 0, &HighsBackend::default()).unwrap();
        assert_eq!(pts.iter().collect::<HashSet<_>>().len(), 8);
        assert!(matches!(
            sample_initial(&d, 9, InitStrategy::UniformRejection, 3, 10_000, &ExhaustiveBackend::default()),
            Err(MboError::RejectionBudgetExceeded { .. })
        ));
    }

    fn quick_cfg(budget: usize, init: usize) -> MboConfig {
        MboConfig {
            budget,
            init_count: init,
            train: TrainConfig {
                epochs: 20,
                ..TrainConfig::default()
            },
            clock: Clock::Frozen,
            ..MboConfig::default()
        }
    }

    #[test]
    fn budget_equal_to_init_returns_initial_data() {
        let d = CategoricalDomain::binary(4).unwrap();
        let mut f = FnObjective::new(|p: &Point| p.values().iter().sum::<usize>() as f64);
        let cfg = quick_cfg(5, 5);
        let backend = HighsBackend::default();
        let mut inner = MilpInner::new(Box::new(HighsBackend::default()), &cfg);
        let h = run_mbo(&mut f, &d, &cfg, &mut inner, &backend).unwrap();
        assert_eq!(h.len(), 5);
        assert!(h.records.iter().all(|r| r.status == RecordStatus::Initial));
    }

    #[test]
    fn loop_exhausts_domain_without_repeats() {
        let d = CategoricalDomain::binary(3).unwrap();
        let mut f = FnObjective::new(|p: &Point| p.values()[0] as f64 - p.values()[2] as f64);
        let cfg = quick_cfg(20, 2);
        let backend = HighsBackend::default();
        let mut inner = MilpInner::new(Box::new(HighsBackend::default()), &cfg);
        let h = run_mbo(&mut f, &d, &cfg, &mut inner, &backend).unwrap();
        assert_eq!(h.len(), 8);
        assert!(!h.has_duplicates());
    }

    #[test]
    fn csv_round_trip() {
        let d = CategoricalDomain::uniform(2, 3).unwrap();
        let mut h = History::new();
        h.push(Record {
            point: Point(vec![2, 0]),
            reward: -0.125,
            solve_seconds: 0.0,
            status: RecordStatus::Initial,
        });
        h.push(Record {
            point: Point(vec![1, 1]),
            reward: 3.5,
            solve_seconds: 0.25,
            status: RecordStatus::FeasibleTimeout,
        });
        let text = h.to_csv_string(&d);
        assert!(text.starts_with("step,point,reward,solve_seconds,status\n1,2 0,-0.125,0,initial\n"));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.csv");
        std::fs::write(&path, &text).unwrap();
        assert_eq!(History::read_csv(&d, &path).unwrap(), h);
    }

    #[test]
    fn config_validation() {
        assert!(MboConfig::default().validate().is_ok());
        assert!(quick_cfg(3, 5).validate().is_err());
        let cfg: MboConfig = serde_json::from_str(r#"{"budget": 60, "train": {"epochs": 10}}"#).unwrap();
        assert_eq!(cfg.train.epochs, 10);
        assert_eq!(cfg.train.batch_size, 64);
        assert_eq!(cfg.init_count, 50);
        assert!(serde_json::from_str::<MboConfig>(r#"{"budjet": 1}"#).is_err());
    }
}
