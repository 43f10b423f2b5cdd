//! Backend-agnostic MILP models (always maximization), the solver interface,
//! a HiGHS adapter and an exhaustive enumeration solver used as a reference
//! oracle on small domains.

use std::fmt::{self, Write as _};
use std::ops::Range;
use std::time::Instant;

use highs::{HighsModelStatus, HighsSolutionStatus, RowProblem, Sense as HighsSense};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{coef_to_f64, CategoricalDomain, DomainError, LinearConstraint, Point, Sense};
use crate::rng;
use crate::surrogate::Mlp;

pub type VarId = usize;

/// Default safeguard on a single acquisition solve, in seconds.
pub const DEFAULT_TIME_LIMIT: f64 = 500.0;
/// Absolute optimality gap; objectives live on the scaled `[-1, 1]` reward range.
pub const DEFAULT_GAP_TOL: f64 = 1e-6;
/// Largest enumeration the exhaustive solver accepts by default.
pub const DEFAULT_ENUMERATION_CAP: u64 = 1 << 20;

const FEAS_TOL: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum MilpError {
    #[error("model: {0}")]
    Model(String),
    #[error("enumeration of {count} assignments exceeds the cap of {cap}")]
    CapExceeded { count: u128, cap: u64 },
    #[error("backend: {0}")]
    Backend(String),
    #[error("backend does not provide LP relaxations")]
    BackendUnavailable,
    #[error("domain admits no feasible point")]
    InfeasibleDomain,
    #[error(transparent)]
    Domain(#[from] DomainError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarKind {
    Binary,
    Continuous,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    #[serde(with = "inf_as_null")]
    pub lower: f64,
    #[serde(with = "inf_as_null")]
    pub upper: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub terms: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Row {
    pub fn lhs(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, c)| c * x[v]).sum()
    }

    /// Amount by which `x` violates the row (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let lhs = self.lhs(x);
        match self.sense {
            Sense::Le => (lhs - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - lhs).max(0.0),
            Sense::Eq => (lhs - self.rhs).abs(),
        }
    }
}

/// How a hidden neuron appears in the model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeuronMode {
    /// Big-M rows with an indicator variable.
    Free,
    /// `y = 0`.
    Off,
    /// `y = w.x + b`.
    On,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeuronVars {
    pub y: VarId,
    pub alpha: Option<VarId>,
    pub mode: NeuronMode,
}

/// Bookkeeping for a network compiled into a model, enough to complete the
/// continuous variables from the binary inputs by a forward pass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkFragment {
    pub net: Mlp,
    pub inputs: Vec<VarId>,
    pub neurons: Vec<Vec<NeuronVars>>,
    pub output: VarId,
    pub rows: Range<usize>,
}

impl NetworkFragment {
    /// Values for every fragment variable given the network input vector,
    /// following the encoded semantics of each neuron.
    pub fn complete(&self, x: &mut [f64]) {
        let mut act: Vec<f64> = self.inputs.iter().map(|&v| x[v]).collect();
        for (layer, vars) in self.net.hidden_layers().iter().zip(&self.neurons) {
            let mut next = Vec::with_capacity(vars.len());
            for (o, nv) in vars.iter().enumerate() {
                let z = layer.bias()[o] + layer.row(o).iter().zip(&act).map(|(w, a)| w * a).sum::<f64>();
                let y = match nv.mode {
                    NeuronMode::Off => 0.0,
                    NeuronMode::On => z,
                    NeuronMode::Free => z.max(0.0),
                };
                x[nv.y] = y;
                if let Some(a) = nv.alpha {
                    x[a] = if z > 0.0 { 1.0 } else { 0.0 };
                }
                next.push(y);
            }
            act = next;
        }
        let out = self.net.output_layer();
        x[self.output] = out.bias()[0] + out.row(0).iter().zip(&act).map(|(w, a)| w * a).sum::<f64>();
    }
}

/// Snap binaries and redo the network forward pass, so the big-M slack the
/// solver tolerates does not leak into the reported objective. The raw
/// assignment is kept if the polished one is less feasible.
fn polish(model: &MilpModel, raw: Vec<f64>) -> Vec<f64> {
    let mut x = raw.clone();
    for (v, var) in model.vars.iter().enumerate() {
        if var.kind == VarKind::Binary {
            x[v] = x[v].round();
        }
    }
    if let Some(net) = &model.network {
        net.complete(&mut x);
    }
    if model.max_violation(&x) <= model.max_violation(&raw).max(1e-9) {
        x
    } else {
        raw
    }
}

/// Maximize `objective . x + offset` subject to linear rows and bounds.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MilpModel {
    vars: Vec<Variable>,
    rows: Vec<Row>,
    objective: Vec<(VarId, f64)>,
    objective_offset: f64,
    /// One-hot groups: exactly one binary per group is 1 in every feasible point.
    groups: Vec<Vec<VarId>>,
    network: Option<NetworkFragment>,
}

impl MilpModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>, kind: VarKind, lower: f64, upper: f64) -> VarId {
        self.vars.push(Variable {
            name: name.into(),
            kind,
            lower,
            upper,
        });
        self.vars.len() - 1
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> VarId {
        self.add_var(name, VarKind::Binary, 0.0, 1.0)
    }

    pub fn add_continuous(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> VarId {
        self.add_var(name, VarKind::Continuous, lower, upper)
    }

    pub fn add_row(&mut self, terms: Vec<(VarId, f64)>, sense: Sense, rhs: f64) -> usize {
        self.rows.push(Row { terms, sense, rhs });
        self.rows.len() - 1
    }

    pub fn set_objective(&mut self, terms: Vec<(VarId, f64)>, offset: f64) {
        self.objective = terms;
        self.objective_offset = offset;
    }

    pub fn add_group(&mut self, group: Vec<VarId>) {
        self.groups.push(group);
    }

    pub fn attach_network(&mut self, fragment: NetworkFragment) {
        self.network = Some(fragment);
    }

    pub fn vars(&self) -> &[Variable] {
        &self.vars
    }

    pub fn var_mut(&mut self, id: VarId) -> &mut Variable {
        &mut self.vars[id]
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn objective(&self) -> &[(VarId, f64)] {
        &self.objective
    }

    pub fn objective_offset(&self) -> f64 {
        self.objective_offset
    }

    pub fn groups(&self) -> &[Vec<VarId>] {
        &self.groups
    }

    pub fn network(&self) -> Option<&NetworkFragment> {
        self.network.as_ref()
    }

    pub fn num_binaries(&self) -> usize {
        self.vars.iter().filter(|v| v.kind == VarKind::Binary).count()
    }

    pub fn validate(&self) -> Result<(), MilpError> {
        let n = self.vars.len();
        for (i, v) in self.vars.iter().enumerate() {
            if v.kind == VarKind::Binary && (v.lower < 0.0 || v.upper > 1.0) {
                return Err(MilpError::Model(format!("binary variable {i} has bounds [{}, {}]", v.lower, v.upper)));
            }
            if v.lower.is_nan() || v.upper.is_nan() {
                return Err(MilpError::Model(format!("variable {i} has a NaN bound")));
            }
        }
        let check = |id: VarId, what: &str| {
            if id >= n {
                Err(MilpError::Model(format!("{what} references undeclared variable {id}")))
            } else {
                Ok(())
            }
        };
        for (r, row) in self.rows.iter().enumerate() {
            for &(v, c) in &row.terms {
                check(v, &format!("row {r}"))?;
                if !c.is_finite() {
                    return Err(MilpError::Model(format!("row {r} has a non-finite coefficient")));
                }
            }
        }
        for &(v, _) in &self.objective {
            check(v, "objective")?;
        }
        for g in &self.groups {
            for &v in g {
                check(v, "group")?;
            }
        }
        Ok(())
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective_offset + self.objective.iter().map(|&(v, c)| c * x[v]).sum::<f64>()
    }

    /// Largest row or bound violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let bounds = self
            .vars
            .iter()
            .zip(x)
            .map(|(v, &xi)| (v.lower - xi).max(xi - v.upper).max(0.0));
        let rows = self.rows.iter().map(|r| r.violation(x));
        bounds.chain(rows).fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, MilpError> {
        serde_json::from_str(text).map_err(|e| MilpError::Model(e.to_string()))
    }

    /// CPLEX LP text for inspection with external solvers.
    pub fn to_lp_string(&self) -> String {
        let name = |v: VarId| lp_name(&self.vars[v].name, v);
        let expr = |terms: &[(VarId, f64)]| -> String {
            if terms.is_empty() {
                return "0 x_zero".to_string();
            }
            let mut s = String::new();
            for (k, &(v, c)) in terms.iter().enumerate() {
                let sign = if c < 0.0 { "-" } else if k > 0 { "+" } else { "" };
                let _ = write!(s, "{}{} {} {}", if k > 0 { " " } else { "" }, sign, fmt_num(c.abs()), name(v));
            }
            s.trim_start().to_string()
        };
        let mut out = String::new();
        let _ = writeln!(out, "\\ objective offset {}", fmt_num(self.objective_offset));
        let _ = writeln!(out, "Maximize\n obj: {}", expr(&self.objective));
        let _ = writeln!(out, "Subject To");
        for (r, row) in self.rows.iter().enumerate() {
            let _ = writeln!(out, " c{}: {} {} {}", r, expr(&row.terms), row.sense.symbol(), fmt_num(row.rhs));
        }
        let _ = writeln!(out, "Bounds");
        for (i, v) in self.vars.iter().enumerate() {
            if v.kind == VarKind::Binary {
                continue;
            }
            match (v.lower.is_finite(), v.upper.is_finite()) {
                (false, false) => {
                    let _ = writeln!(out, " {} free", name(i));
                }
                (true, false) => {
                    let _ = writeln!(out, " {} >= {}", name(i), fmt_num(v.lower));
                }
                (false, true) => {
                    let _ = writeln!(out, " -inf <= {} <= {}", name(i), fmt_num(v.upper));
                }
                (true, true) => {
                    let _ = writeln!(out, " {} <= {} <= {}", fmt_num(v.lower), name(i), fmt_num(v.upper));
                }
            }
        }
        let bins: Vec<String> = (0..self.vars.len())
            .filter(|&i| self.vars[i].kind == VarKind::Binary)
            .map(name)
            .collect();
        if !bins.is_empty() {
            let _ = writeln!(out, "Binaries");
            for chunk in bins.chunks(10) {
                let _ = writeln!(out, " {}", chunk.join(" "));
            }
        }
        out.push_str("End\n");
        out
    }
}

fn lp_name(name: &str, id: VarId) -> String {
    let clean: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
        .collect();
    if clean.is_empty() || clean.starts_with(|c: char| c.is_ascii_digit()) {
        format!("v{id}_{clean}")
    } else {
        clean
    }
}

fn fmt_num(x: f64) -> String {
    format!("{x}")
}

mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else if *x > 0.0 {
            s.serialize_str("+inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Text(t) if t == "+inf" => Ok(f64::INFINITY),
            Repr::Text(t) if t == "-inf" => Ok(f64::NEG_INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("bad bound {t:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    FeasibleTimeout,
    Infeasible,
    Error,
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::FeasibleTimeout => "feasible_timeout",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Error => "error",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Present for `Optimal` and `FeasibleTimeout`.
    pub assignment: Option<Vec<f64>>,
    pub objective_value: f64,
    /// Proven upper bound on the optimum.
    pub dual_bound: f64,
    pub wall_time: f64,
    pub message: Option<String>,
}

impl SolveResult {
    fn without_solution(status: SolveStatus, wall_time: f64, message: Option<String>) -> Self {
        Self {
            status,
            assignment: None,
            objective_value: f64::NEG_INFINITY,
            dual_bound: if status == SolveStatus::Infeasible {
                f64::NEG_INFINITY
            } else {
                f64::INFINITY
            },
            wall_time,
            message,
        }
    }

    pub fn has_incumbent(&self) -> bool {
        self.assignment.is_some()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveOptions {
    pub time_limit: f64,
    pub gap_tol: f64,
    /// Known feasible assignment handed to the backend as a starting incumbent.
    pub initial_solution: Option<Vec<f64>>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            time_limit: DEFAULT_TIME_LIMIT,
            gap_tol: DEFAULT_GAP_TOL,
            initial_solution: None,
        }
    }
}

impl SolveOptions {
    pub fn with_time_limit(time_limit: f64) -> Self {
        Self {
            time_limit,
            ..Self::default()
        }
    }
}

/// An LP relaxation that can be re-optimized under different objectives.
pub trait LpSession {
    /// Maximum of `objective . x + offset` over the relaxation.
    fn maximize(&mut self, objective: &[(VarId, f64)], offset: f64) -> Result<f64, MilpError>;
}

/// Narrow solver contract: load a model, apply limits, solve, report the
/// incumbent and bound.
pub trait MilpBackend: Send + Sync {
    fn name(&self) -> &'static str;

    fn solve(&self, model: &MilpModel, opts: &SolveOptions) -> SolveResult;

    /// Integrality-relaxed copy of `model`; `None` if the backend has no LP solver.
    fn lp_session(&self, _model: &MilpModel) -> Option<Box<dyn LpSession>> {
        None
    }
}

/// Select a backend by name (`highs` or `exhaustive`).
pub fn backend_by_name(name: &str) -> Result<Box<dyn MilpBackend>, MilpError> {
    match name.to_ascii_lowercase().as_str() {
        "highs" => Ok(Box::new(HighsBackend::default())),
        "exhaustive" => Ok(Box::new(ExhaustiveBackend::default())),
        other => Err(MilpError::Backend(format!("unknown backend {other:?} (expected highs or exhaustive)"))),
    }
}

/// Branch-and-bound through HiGHS.
#[derive(Clone, Debug)]
pub struct HighsBackend {
    pub threads: u32,
    pub random_seed: i32,
}

impl Default for HighsBackend {
    fn default() -> Self {
        Self {
            threads: 1,
            random_seed: 0,
        }
    }
}

fn to_highs(model: &MilpModel, relax: bool) -> (RowProblem, Vec<highs::Col>) {
    let mut pb = RowProblem::default();
    let mut cost = vec![0.0; model.vars.len()];
    for &(v, c) in &model.objective {
        cost[v] += c;
    }
    let cols: Vec<_> = model
        .vars
        .iter()
        .zip(&cost)
        .map(|(v, &c)| pb.add_column_with_integrality(c, v.lower..=v.upper, !relax && v.kind == VarKind::Binary))
        .collect();
    for row in &model.rows {
        let factors: Vec<_> = row.terms.iter().map(|&(v, c)| (cols[v], c)).collect();
        match row.sense {
            Sense::Le => pb.add_row(f64::NEG_INFINITY..=row.rhs, &factors),
            Sense::Ge => pb.add_row(row.rhs..=f64::INFINITY, &factors),
            Sense::Eq => pb.add_row(row.rhs..=row.rhs, &factors),
        }
    }
    (pb, cols)
}

impl MilpBackend for HighsBackend {
    fn name(&self) -> &'static str {
        "highs"
    }

    fn solve(&self, model: &MilpModel, opts: &SolveOptions) -> SolveResult {
        let start = Instant::now();
        if let Err(e) = model.validate() {
            return SolveResult::without_solution(SolveStatus::Error, 0.0, Some(e.to_string()));
        }
        if model.vars.is_empty() {
            let feasible = model.rows.iter().all(|r| r.violation(&[]) <= FEAS_TOL);
            return if feasible {
                let v = model.objective_offset;
                SolveResult {
                    status: SolveStatus::Optimal,
                    assignment: Some(Vec::new()),
                    objective_value: v,
                    dual_bound: v,
                    wall_time: 0.0,
                    message: None,
                }
            } else {
                SolveResult::without_solution(SolveStatus::Infeasible, 0.0, None)
            };
        }
        let has_integers = model.vars.iter().any(|v| v.kind == VarKind::Binary);
        let mut hm = to_highs(model, false).0.optimise(HighsSense::Maximise);
        hm.make_quiet();
        let configured = hm
            .try_set_option("time_limit", opts.time_limit.max(0.0))
            .and_then(|_| hm.try_set_option("mip_abs_gap", opts.gap_tol))
            .and_then(|_| hm.try_set_option("mip_rel_gap", 0.0))
            .and_then(|_| hm.try_set_option("threads", self.threads.max(1) as i32))
            .and_then(|_| hm.try_set_option("random_seed", self.random_seed));
        if configured.is_err() {
            return SolveResult::without_solution(SolveStatus::Error, 0.0, Some("HiGHS rejected an option".into()));
        }
        if let Some(init) = &opts.initial_solution {
            if init.len() == model.vars.len() {
                let _ = hm.try_set_solution(Some(init), None, None, None);
            }
        }
        let solved = match hm.try_solve() {
            Ok(s) => s,
            Err(e) => {
                return SolveResult::without_solution(
                    SolveStatus::Error,
                    start.elapsed().as_secs_f64(),
                    Some(format!("HiGHS run failed: {e:?}")),
                )
            }
        };
        let wall_time = start.elapsed().as_secs_f64();
        let status = solved.status();
        let has_primal = solved.primal_solution_status() == HighsSolutionStatus::Feasible;
        let incumbent = || {
            let x = polish(model, solved.get_solution().columns().to_vec());
            let obj = model.objective_value(&x);
            (x, obj)
        };
        let dual = |obj: f64| -> f64 {
            if !has_integers {
                return obj;
            }
            match solved.double_info_value(c"mip_dual_bound") {
                Ok(b) if b.is_finite() => b + model.objective_offset,
                _ => f64::INFINITY,
            }
        };
        match status {
            HighsModelStatus::Optimal => {
                let (x, obj) = incumbent();
                // The reported bound can sit a hair below the recomputed objective.
                let bound = dual(obj).max(obj);
                SolveResult {
                    status: SolveStatus::Optimal,
                    assignment: Some(x),
                    objective_value: obj,
                    dual_bound: bound,
                    wall_time,
                    message: None,
                }
            }
            HighsModelStatus::Infeasible | HighsModelStatus::UnboundedOrInfeasible => {
                SolveResult::without_solution(SolveStatus::Infeasible, wall_time, None)
            }
            HighsModelStatus::ReachedTimeLimit
            | HighsModelStatus::ReachedIterationLimit
            | HighsModelStatus::ReachedSolutionLimit
            | HighsModelStatus::ReachedInterrupt => {
                if has_primal {
                    let (x, obj) = incumbent();
                    SolveResult {
                        status: SolveStatus::FeasibleTimeout,
                        assignment: Some(x),
                        objective_value: obj,
                        // Unclamped, so callers can check it against the incumbent.
                        dual_bound: dual(obj),
                        wall_time,
                        message: Some(format!("{status:?}")),
                    }
                } else {
                    SolveResult::without_solution(
                        SolveStatus::Error,
                        wall_time,
                        Some(format!("{status:?} without an incumbent")),
                    )
                }
            }
            other => SolveResult::without_solution(SolveStatus::Error, wall_time, Some(format!("HiGHS status {other:?}"))),
        }
    }

    fn lp_session(&self, model: &MilpModel) -> Option<Box<dyn LpSession>> {
        let (pb, cols) = to_highs(model, true);
        let mut hm = pb.optimise(HighsSense::Maximise);
        hm.make_quiet();
        hm.try_set_option("threads", self.threads.max(1) as i32).ok()?;
        Some(Box::new(HighsLp {
            model: Some(hm),
            cols,
            costs: vec![0.0; model.vars.len()],
        }))
    }
}

struct HighsLp {
    model: Option<highs::Model>,
    cols: Vec<highs::Col>,
    costs: Vec<f64>,
}

impl LpSession for HighsLp {
    fn maximize(&mut self, objective: &[(VarId, f64)], offset: f64) -> Result<f64, MilpError> {
        let mut hm = self.model.take().ok_or_else(|| MilpError::Backend("LP session poisoned".into()))?;
        let mut target = vec![0.0; self.costs.len()];
        for &(v, c) in objective {
            target[v] += c;
        }
        for (col, (&old, &new)) in self.costs.iter().zip(&target).enumerate() {
            if old != new {
                hm.change_column_cost(self.cols[col], new);
            }
        }
        self.costs = target;
        let solved = hm
            .try_solve()
            .map_err(|e| MilpError::Backend(format!("HiGHS LP failed: {e:?}")))?;
        let status = solved.status();
        let value = solved.objective_value();
        self.model = Some(solved.into());
        match status {
            HighsModelStatus::Optimal => Ok(value + offset),
            HighsModelStatus::Infeasible => Err(MilpError::InfeasibleDomain),
            other => Err(MilpError::Backend(format!("LP status {other:?}"))),
        }
    }
}

/// Reference solver enumerating every one-hot assignment.
#[derive(Clone, Debug)]
pub struct ExhaustiveBackend {
    pub cap: u64,
}

impl Default for ExhaustiveBackend {
    fn default() -> Self {
        Self {
            cap: DEFAULT_ENUMERATION_CAP,
        }
    }
}

impl MilpBackend for ExhaustiveBackend {
    fn name(&self) -> &'static str {
        "exhaustive"
    }

    fn solve(&self, model: &MilpModel, _opts: &SolveOptions) -> SolveResult {
        match solve_exhaustive(model, model.groups(), self.cap) {
            Ok(r) => r,
            Err(e) => SolveResult::without_solution(SolveStatus::Error, 0.0, Some(e.to_string())),
        }
    }
}

/// Enumerate all assignments of the one-hot `groups` and of every remaining
/// free binary, complete network variables by a forward pass, and return the
/// true optimum. Continuous variables outside an attached network are not
/// supported.
pub fn solve_exhaustive(model: &MilpModel, groups: &[Vec<VarId>], cap: u64) -> Result<SolveResult, MilpError> {
    let start = Instant::now();
    model.validate()?;
    let n = model.vars.len();
    let mut owned = vec![false; n];
    if let Some(net) = &model.network {
        owned[net.output] = true;
        for nv in net.neurons.iter().flatten() {
            owned[nv.y] = true;
            if let Some(a) = nv.alpha {
                owned[a] = true;
            }
        }
    }
    for g in groups {
        for &v in g {
            if model.vars[v].kind != VarKind::Binary || owned[v] {
                return Err(MilpError::Model(format!("group member {v} is not a free binary")));
            }
            owned[v] = true;
        }
    }
    let mut free_bins = Vec::new();
    for (i, v) in model.vars.iter().enumerate() {
        if owned[i] {
            continue;
        }
        match v.kind {
            VarKind::Binary => free_bins.push(i),
            VarKind::Continuous => {
                return Err(MilpError::Model(format!(
                    "continuous variable {i} ({}) is not determined by an attached network",
                    v.name
                )))
            }
        }
    }
    // Each enumerated digit picks one option; an option is the list of vars set to 1.
    let mut digits: Vec<Vec<Option<VarId>>> = groups.iter().map(|g| g.iter().map(|&v| Some(v)).collect()).collect();
    digits.extend(free_bins.iter().map(|&v| vec![None, Some(v)]));
    let count = digits
        .iter()
        .try_fold(1u128, |acc, d| acc.checked_mul(d.len() as u128))
        .unwrap_or(u128::MAX);
    if count > cap as u128 {
        return Err(MilpError::CapExceeded { count, cap });
    }
    if digits.iter().any(Vec::is_empty) {
        return Ok(SolveResult::without_solution(SolveStatus::Infeasible, start.elapsed().as_secs_f64(), None));
    }
    // Rows touching only enumerated binaries are screened before any forward pass.
    let net_rows = model.network.as_ref().map(|f| f.rows.clone()).unwrap_or(0..0);
    let (cheap, rest): (Vec<usize>, Vec<usize>) = (0..model.rows.len())
        .partition(|&r| !net_rows.contains(&r) && model.rows[r].terms.iter().all(|&(v, _)| !is_net_var(model, v)));

    let mut idx = vec![0usize; digits.len()];
    let mut x = vec![0.0; n];
    let mut best: Option<(f64, Vec<f64>)> = None;
    loop {
        for d in &digits {
            for v in d.iter().flatten() {
                x[*v] = 0.0;
            }
        }
        for (d, &k) in digits.iter().zip(&idx) {
            if let Some(v) = d[k] {
                x[v] = 1.0;
            }
        }
        let ok = cheap.iter().all(|&r| model.rows[r].violation(&x) <= FEAS_TOL) && {
            if let Some(f) = &model.network {
                f.complete(&mut x);
            }
            rest.iter().all(|&r| model.rows[r].violation(&x) <= FEAS_TOL)
                && model
                    .vars
                    .iter()
                    .zip(&x)
                    .all(|(v, &xi)| xi >= v.lower - FEAS_TOL && xi <= v.upper + FEAS_TOL)
        };
        if ok {
            let obj = model.objective_value(&x);
            if best.as_ref().map_or(true, |(b, _)| obj > *b) {
                best = Some((obj, x.clone()));
            }
        }
        // Odometer increment.
        let mut pos = digits.len();
        loop {
            if pos == 0 {
                let wall_time = start.elapsed().as_secs_f64();
                return Ok(match best {
                    Some((obj, x)) => SolveResult {
                        status: SolveStatus::Optimal,
                        assignment: Some(x),
                        objective_value: obj,
                        dual_bound: obj,
                        wall_time,
                        message: None,
                    },
                    None => SolveResult::without_solution(SolveStatus::Infeasible, wall_time, None),
                });
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < digits[pos].len() {
                break;
            }
            idx[pos] = 0;
        }
    }
}

fn is_net_var(model: &MilpModel, v: VarId) -> bool {
    model.network.as_ref().is_some_and(|f| {
        f.output == v || f.neurons.iter().flatten().any(|nv| nv.y == v || nv.alpha == Some(v))
    })
}

/// Model variables standing for the one-hot bits of a domain, in flat order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DomainVars {
    pub bits: Vec<VarId>,
}

impl DomainVars {
    /// Point encoded by an assignment (bits rounded at 0.5).
    pub fn decode(&self, domain: &CategoricalDomain, x: &[f64]) -> Result<Point, DomainError> {
        let e = crate::domain::EncodedPoint {
            bits: self.bits.iter().map(|&v| x[v] > 0.5).collect(),
        };
        domain.decode(&e)
    }

    /// Full-model assignment fragment for a point (bits only).
    pub fn assign(&self, domain: &CategoricalDomain, p: &Point, x: &mut [f64]) {
        for &v in &self.bits {
            x[v] = 0.0;
        }
        for (i, &s) in p.values().iter().enumerate() {
            x[self.bits[domain.offset(i) + s]] = 1.0;
        }
    }
}

/// Add one binary per one-hot bit, the one-hot rows and every domain constraint.
pub fn add_domain(model: &mut MilpModel, domain: &CategoricalDomain) -> DomainVars {
    let mut bits = Vec::with_capacity(domain.width());
    for i in 0..domain.n() {
        let group: Vec<VarId> = (0..domain.alphabet_size(i))
            .map(|j| model.add_binary(format!("z_{i}_{j}")))
            .collect();
        model.add_row(group.iter().map(|&v| (v, 1.0)).collect(), Sense::Eq, 1.0);
        bits.extend_from_slice(&group);
        model.add_group(group);
    }
    let vars = DomainVars { bits };
    for c in domain.constraints() {
        add_domain_constraint(model, domain, &vars, c);
    }
    vars
}

pub fn add_domain_constraint(model: &mut MilpModel, domain: &CategoricalDomain, vars: &DomainVars, c: &LinearConstraint) -> usize {
    let terms = c
        .terms()
        .iter()
        .map(|(h, k)| (vars.bits[domain.flat_index(*h)], coef_to_f64(*k)))
        .collect();
    model.add_row(terms, c.sense(), coef_to_f64(c.rhs()))
}

/// Objective coefficients drawn for [`random_objective_solve`], one per one-hot bit.
pub fn random_objective(domain: &CategoricalDomain, seed: u64) -> Vec<f64> {
    let mut rng = rng::seeded(seed);
    (0..domain.width()).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// A feasible point maximizing a random linear objective over the one-hot
/// bits, subject to the domain and any `extra` constraints.
pub fn random_objective_solve(
    backend: &dyn MilpBackend,
    domain: &CategoricalDomain,
    extra: &[LinearConstraint],
    seed: u64,
    opts: &SolveOptions,
) -> Result<Point, MilpError> {
    let mut model = MilpModel::new();
    let vars = add_domain(&mut model, domain);
    for c in extra {
        add_domain_constraint(&mut model, domain, &vars, c);
    }
    let coefs = random_objective(domain, seed);
    model.set_objective(vars.bits.iter().copied().zip(coefs).collect(), 0.0);
    let res = backend.solve(&model, opts);
    match (res.status, res.assignment) {
        (SolveStatus::Infeasible, _) => Err(MilpError::InfeasibleDomain),
        (_, Some(x)) => Ok(vars.decode(domain, &x)?),
        (_, None) => Err(MilpError::Backend(res.message.unwrap_or_else(|| "no incumbent".into()))),
    }
}
