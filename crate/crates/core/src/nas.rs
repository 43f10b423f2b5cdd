//! Cell search space: a linear description of valid cells over binary edge and
//! operation variables, an independent graph checker, tabular replay and the
//! time-budgeted search loop.

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::domain::{CategoricalDomain, DomainError, LinearConstraint, Point, Sense};
use crate::mbo::{MboConfig, MboError, MboSession, MilpInner, RecordStatus};
use crate::milp::backend_by_name;
use crate::objectives::{BlackBox, EvalError};
use crate::rng::{self, derive_seed};

pub const DEFAULT_OPS: [&str; 3] = ["conv1x1", "conv3x3", "maxpool3x3"];

#[derive(Debug, Error)]
pub enum NasError {
    #[error("invalid cell spec: {0}")]
    InvalidSpec(String),
    #[error("cell shape does not match the spec")]
    Shape,
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error("no table entry for cell {0}")]
    NotFound(String),
    #[error("could not sample a valid cell in {0} attempts")]
    Sampling(usize),
    #[error("backend: {0}")]
    Backend(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Mbo(#[from] MboError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CellSpec {
    /// Maximum node count, input and output included.
    pub v: usize,
    pub max_edges: usize,
    pub ops: Vec<String>,
    pub symmetry_breaking: bool,
}

impl Default for CellSpec {
    fn default() -> Self {
        Self {
            v: 7,
            max_edges: 9,
            ops: DEFAULT_OPS.iter().map(|s| s.to_string()).collect(),
            symmetry_breaking: false,
        }
    }
}

impl CellSpec {
    pub fn new(v: usize, max_edges: usize) -> Self {
        Self {
            v,
            max_edges,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), NasError> {
        if self.v < 2 {
            return Err(NasError::InvalidSpec("need at least 2 nodes".into()));
        }
        if self.max_edges < 1 {
            return Err(NasError::InvalidSpec("need at least 1 edge".into()));
        }
        if self.ops.is_empty() {
            return Err(NasError::InvalidSpec("empty operation set".into()));
        }
        for (k, op) in self.ops.iter().enumerate() {
            if op.is_empty() || op == "null" || op.contains([',', '|', ' ', '\t']) || self.ops[..k].contains(op) {
                return Err(NasError::InvalidSpec(format!("bad operation name {op:?}")));
            }
        }
        Ok(())
    }

    pub fn num_edges(&self) -> usize {
        self.v * (self.v - 1) / 2
    }

    pub fn num_intermediate(&self) -> usize {
        self.v - 2
    }

    /// Variable index of edge `i -> j` (0-based nodes, `i < j`).
    pub fn edge_var(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j && j < self.v);
        i * (2 * self.v - i - 1) / 2 + (j - i - 1)
    }

    /// Variable index of `w[node, k]`; `node` is 0-based and intermediate.
    pub fn op_var(&self, node: usize, k: usize) -> usize {
        debug_assert!(node >= 1 && node + 1 < self.v && k < self.ops.len());
        self.num_edges() + (node - 1) * (self.ops.len() + 1) + k
    }

    pub fn null_var(&self, node: usize) -> usize {
        self.op_var(node, 0) + self.ops.len()
    }

    pub fn num_vars(&self) -> usize {
        self.num_edges() + self.num_intermediate() * (self.ops.len() + 1)
    }

    /// Human-readable names in variable order.
    pub fn var_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.num_vars());
        for i in 0..self.v {
            for j in i + 1..self.v {
                names.push(format!("m_{}_{}", i + 1, j + 1));
            }
        }
        for node in 1..self.v - 1 {
            for op in &self.ops {
                names.push(format!("w_{}_{op}", node + 1));
            }
            names.push(format!("z_{}", node + 1));
        }
        names
    }
}

/// Binary domain over edge and operation bits. The input and output nodes
/// carry no operation variables, so the rows fixing those to zero vanish;
/// flow rows whose left side is constant are dropped only when trivially true.
pub fn build_nas_domain(spec: &CellSpec) -> Result<CategoricalDomain, NasError> {
    spec.validate()?;
    let v = spec.v;
    let one = 1usize;
    let mut rows = Vec::new();
    let mut push = |terms: Vec<(usize, usize, i64)>, sense: Sense, rhs: i64| -> Result<(), NasError> {
        rows.push(LinearConstraint::from_ints(&terms, sense, rhs)?);
        Ok(())
    };
    let inter = |node: usize| node >= 1 && node + 1 < v;

    for node in 1..v - 1 {
        let mut terms: Vec<_> = (0..spec.ops.len()).map(|k| (spec.op_var(node, k), one, 1)).collect();
        terms.push((spec.null_var(node), one, 1));
        push(terms, Sense::Eq, 1)?;
    }
    let all_edges: Vec<_> = (0..v)
        .flat_map(|i| (i + 1..v).map(move |j| (i, j)))
        .map(|(i, j)| (spec.edge_var(i, j), one, 1))
        .collect();
    push(all_edges, Sense::Le, spec.max_edges as i64)?;
    for i in 0..v {
        for j in i + 1..v {
            if inter(j) {
                push(vec![(spec.edge_var(i, j), one, 1), (spec.null_var(j), one, 1)], Sense::Le, 1)?;
            }
        }
    }
    for i in 0..v {
        for j in i + 1..v {
            if inter(i) {
                push(vec![(spec.edge_var(i, j), one, 1), (spec.null_var(i), one, 1)], Sense::Le, 1)?;
            }
        }
    }
    for j in 1..v {
        let mut terms: Vec<_> = (0..j).map(|i| (spec.edge_var(i, j), one, 1)).collect();
        if inter(j) {
            terms.push((spec.null_var(j), one, 1));
        }
        push(terms, Sense::Ge, 1)?;
    }
    for i in 0..v - 1 {
        let mut terms: Vec<_> = (i + 1..v).map(|j| (spec.edge_var(i, j), one, 1)).collect();
        if inter(i) {
            terms.push((spec.null_var(i), one, 1));
        }
        push(terms, Sense::Ge, 1)?;
    }
    if spec.symmetry_breaking {
        for node in 1..v.saturating_sub(2) {
            push(vec![(spec.null_var(node), one, 1), (spec.null_var(node + 1), one, -1)], Sense::Le, 0)?;
        }
    }
    let alphabet = vec!["0".to_string(), "1".to_string()];
    Ok(CategoricalDomain::new(vec![alphabet; spec.num_vars()], rows)?)
}

/// Raw cell bits: edges of the strict upper triangle in row-major order,
/// then per intermediate node its operation bits and null flag.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Cell {
    pub v: usize,
    pub edges: Vec<bool>,
    pub ops: Vec<Vec<bool>>,
    pub null: Vec<bool>,
}

/// Label of a node once the one-hot bits are well formed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeLabel {
    Input,
    Output,
    Op(usize),
    Null,
}

impl Cell {
    /// Cell from an edge list and per-intermediate labels (`None` = null).
    pub fn from_parts(spec: &CellSpec, edges: &[(usize, usize)], labels: &[Option<usize>]) -> Result<Self, NasError> {
        if labels.len() != spec.num_intermediate() {
            return Err(NasError::Shape);
        }
        let mut bits = vec![false; spec.num_edges()];
        for &(i, j) in edges {
            if i >= j || j >= spec.v {
                return Err(NasError::Shape);
            }
            bits[spec.edge_var(i, j)] = true;
        }
        let s = spec.ops.len();
        let mut ops = Vec::with_capacity(labels.len());
        for l in labels {
            let mut w = vec![false; s];
            if let Some(k) = *l {
                if k >= s {
                    return Err(NasError::Shape);
                }
                w[k] = true;
            }
            ops.push(w);
        }
        Ok(Self {
            v: spec.v,
            edges: bits,
            ops,
            null: labels.iter().map(Option::is_none).collect(),
        })
    }

    pub fn from_point(spec: &CellSpec, p: &Point) -> Result<Self, NasError> {
        if p.len() != spec.num_vars() || p.values().iter().any(|&x| x > 1) {
            return Err(NasError::Shape);
        }
        let x = p.values();
        let edges = x[..spec.num_edges()].iter().map(|&b| b == 1).collect();
        let mut ops = Vec::new();
        let mut null = Vec::new();
        for node in 1..spec.v - 1 {
            ops.push((0..spec.ops.len()).map(|k| x[spec.op_var(node, k)] == 1).collect());
            null.push(x[spec.null_var(node)] == 1);
        }
        Ok(Self {
            v: spec.v,
            edges,
            ops,
            null,
        })
    }

    pub fn to_point(&self, spec: &CellSpec) -> Result<Point, NasError> {
        self.check_shape(spec)?;
        let mut x = vec![0usize; spec.num_vars()];
        for (e, &b) in self.edges.iter().enumerate() {
            x[e] = b as usize;
        }
        for node in 1..spec.v - 1 {
            for k in 0..spec.ops.len() {
                x[spec.op_var(node, k)] = self.ops[node - 1][k] as usize;
            }
            x[spec.null_var(node)] = self.null[node - 1] as usize;
        }
        Ok(Point(x))
    }

    pub fn check_shape(&self, spec: &CellSpec) -> Result<(), NasError> {
        let ok = self.v == spec.v
            && self.edges.len() == spec.num_edges()
            && self.ops.len() == spec.num_intermediate()
            && self.null.len() == spec.num_intermediate()
            && self.ops.iter().all(|w| w.len() == spec.ops.len());
        if ok {
            Ok(())
        } else {
            Err(NasError::Shape)
        }
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        i * (2 * self.v - i - 1) / 2 + (j - i - 1)
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i < j && j < self.v && self.edges[self.idx(i, j)]
    }

    pub fn edge_count(&self) -> usize {
        self.edges.iter().filter(|&&b| b).count()
    }

    /// `None` when the node's bits are not exactly one-hot.
    pub fn label(&self, node: usize) -> Option<NodeLabel> {
        if node == 0 {
            return Some(NodeLabel::Input);
        }
        if node + 1 == self.v {
            return Some(NodeLabel::Output);
        }
        let w = &self.ops[node - 1];
        let z = self.null[node - 1];
        let set = w.iter().filter(|&&b| b).count() + z as usize;
        if set != 1 {
            return None;
        }
        if z {
            Some(NodeLabel::Null)
        } else {
            w.iter().position(|&b| b).map(NodeLabel::Op)
        }
    }

    /// Same graph with null intermediates moved behind the non-null ones,
    /// keeping the relative order of each group.
    pub fn canonicalize(&self) -> Cell {
        let v = self.v;
        let mut order: Vec<usize> = (1..v - 1).filter(|&n| !self.null[n - 1]).collect();
        order.extend((1..v - 1).filter(|&n| self.null[n - 1]));
        let mut perm = vec![0usize; v];
        perm[v - 1] = v - 1;
        for (pos, &old) in order.iter().enumerate() {
            perm[old] = pos + 1;
        }
        let mut edges = vec![false; self.edges.len()];
        for i in 0..v {
            for j in i + 1..v {
                if self.has_edge(i, j) {
                    let (a, b) = (perm[i].min(perm[j]), perm[i].max(perm[j]));
                    if a != b {
                        edges[self.idx(a, b)] = true;
                    }
                }
            }
        }
        let mut ops = vec![Vec::new(); v - 2];
        let mut null = vec![false; v - 2];
        for old in 1..v - 1 {
            ops[perm[old] - 1] = self.ops[old - 1].clone();
            null[perm[old] - 1] = self.null[old - 1];
        }
        Cell { v, edges, ops, null }
    }

    /// Stable text key of the canonical form.
    pub fn canonical_key(&self, spec: &CellSpec) -> String {
        let c = self.canonicalize();
        let mut s = String::with_capacity(c.edges.len() + 8 * c.v);
        let _ = write!(s, "{}|", c.v);
        for &b in &c.edges {
            s.push(if b { '1' } else { '0' });
        }
        s.push('|');
        for node in 1..c.v - 1 {
            if node > 1 {
                s.push(',');
            }
            match c.label(node) {
                Some(NodeLabel::Op(k)) => s.push_str(&spec.ops[k]),
                Some(NodeLabel::Null) => s.push_str("null"),
                _ => {
                    let bits: String = c.ops[node - 1].iter().chain([&c.null[node - 1]]).map(|&b| if b { '1' } else { '0' }).collect();
                    s.push_str(&bits);
                }
            }
        }
        s
    }

    /// Hex SHA-256 of the canonical key; the lookup key of [`NasTable`].
    pub fn hash(&self, spec: &CellSpec) -> String {
        let digest = Sha256::digest(self.canonical_key(spec).as_bytes());
        digest.iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

fn reach(cell: &Cell, from: usize, forward: bool) -> Vec<bool> {
    let v = cell.v;
    let mut seen = vec![false; v];
    let mut stack = vec![from];
    seen[from] = true;
    while let Some(u) = stack.pop() {
        for w in 0..v {
            let e = if forward { cell.has_edge(u, w) } else { cell.has_edge(w, u) };
            if e && !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    seen
}

/// Graph-side validity: well-formed labels, isolated null nodes, every other
/// node on an input-to-output path, and the edge budget.
pub fn is_valid_cell(spec: &CellSpec, c: &Cell) -> bool {
    if c.check_shape(spec).is_err() {
        return false;
    }
    let v = c.v;
    let mut labels = Vec::with_capacity(v);
    for node in 0..v {
        match c.label(node) {
            Some(l) => labels.push(l),
            None => return false,
        }
    }
    if c.edge_count() > spec.max_edges {
        return false;
    }
    for i in 0..v {
        for j in i + 1..v {
            if c.has_edge(i, j) && (labels[i] == NodeLabel::Null || labels[j] == NodeLabel::Null) {
                return false;
            }
        }
    }
    let fwd = reach(c, 0, true);
    let bwd = reach(c, v - 1, false);
    (0..v).all(|n| labels[n] == NodeLabel::Null || (fwd[n] && bwd[n]))
}

/// Turn arbitrary raw bits into a valid cell when possible: disconnect null
/// nodes, then null out every intermediate that is not on an input-to-output
/// path. `None` when no path exists or the edge budget is exceeded.
pub fn prune(spec: &CellSpec, edges: Vec<bool>, labels: &[Option<usize>]) -> Option<Cell> {
    let v = spec.v;
    let mut cell = Cell {
        v,
        edges,
        ops: labels
            .iter()
            .map(|l| (0..spec.ops.len()).map(|k| *l == Some(k)).collect())
            .collect(),
        null: labels.iter().map(Option::is_none).collect(),
    };
    clear_null_edges(&mut cell);
    let fwd = reach(&cell, 0, true);
    let bwd = reach(&cell, v - 1, false);
    if !fwd[v - 1] {
        return None;
    }
    for node in 1..v - 1 {
        if !(fwd[node] && bwd[node]) {
            cell.null[node - 1] = true;
            cell.ops[node - 1].iter_mut().for_each(|b| *b = false);
        }
    }
    clear_null_edges(&mut cell);
    (cell.edge_count() <= spec.max_edges).then_some(cell)
}

fn clear_null_edges(cell: &mut Cell) {
    let v = cell.v;
    for i in 0..v {
        for j in i + 1..v {
            let dead = (i >= 1 && i + 1 < v && cell.null[i - 1]) || (j + 1 < v && j >= 1 && cell.null[j - 1]);
            if dead {
                let e = cell.idx(i, j);
                cell.edges[e] = false;
            }
        }
    }
}

/// Uniform raw bits followed by [`prune`], retried until valid. Canonical
/// when the spec breaks symmetry.
pub fn random_cell<R: Rng + ?Sized>(spec: &CellSpec, rng: &mut R, attempts: usize) -> Result<Cell, NasError> {
    for _ in 0..attempts {
        let edges: Vec<bool> = (0..spec.num_edges()).map(|_| rng.random_bool(0.5)).collect();
        let labels: Vec<Option<usize>> = (0..spec.num_intermediate())
            .map(|_| {
                let k = rng.random_range(0..=spec.ops.len());
                (k < spec.ops.len()).then_some(k)
            })
            .collect();
        if let Some(c) = prune(spec, edges, &labels) {
            return Ok(if spec.symmetry_breaking { c.canonicalize() } else { c });
        }
    }
    Err(NasError::Sampling(attempts))
}

/// Edge flips and label changes at an expected `rate` events per kind,
/// retried until the pruned child is valid.
pub fn mutate_cell<R: Rng + ?Sized>(spec: &CellSpec, parent: &Cell, rate: f64, rng: &mut R, attempts: usize) -> Result<Cell, NasError> {
    let p_edge = (rate / spec.num_edges() as f64).min(1.0);
    let p_op = if spec.num_intermediate() == 0 {
        0.0
    } else {
        (rate / spec.num_intermediate() as f64).min(1.0)
    };
    let labels: Vec<Option<usize>> = (1..spec.v - 1)
        .map(|n| match parent.label(n) {
            Some(NodeLabel::Op(k)) => Some(k),
            _ => None,
        })
        .collect();
    for _ in 0..attempts {
        let edges: Vec<bool> = parent.edges.iter().map(|&b| if rng.random_bool(p_edge) { !b } else { b }).collect();
        let labels: Vec<Option<usize>> = labels
            .iter()
            .map(|&l| {
                if !rng.random_bool(p_op) {
                    return l;
                }
                let cur = l.unwrap_or(spec.ops.len());
                let mut k = rng.random_range(0..spec.ops.len());
                if k >= cur {
                    k += 1;
                }
                (k < spec.ops.len()).then_some(k)
            })
            .collect();
        if let Some(c) = prune(spec, edges, &labels) {
            return Ok(if spec.symmetry_breaking { c.canonicalize() } else { c });
        }
    }
    Err(NasError::Sampling(attempts))
}

/// Three replicate measurements of one architecture.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NasEntry {
    pub validation: [f64; 3],
    pub test: [f64; 3],
    pub seconds: [f64; 3],
}

impl NasEntry {
    pub fn mean_validation(&self) -> f64 {
        self.validation.iter().sum::<f64>() / 3.0
    }

    pub fn mean_test(&self) -> f64 {
        self.test.iter().sum::<f64>() / 3.0
    }
}

pub trait NasBenchmark {
    fn lookup(&self, spec: &CellSpec, cell: &Cell) -> Result<NasEntry, NasError>;
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct NasTable {
    pub entries: HashMap<String, NasEntry>,
}

impl NasTable {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, hash: &str) -> Result<&NasEntry, NasError> {
        self.entries.get(hash).ok_or_else(|| NasError::NotFound(hash.to_string()))
    }

    pub fn insert(&mut self, hash: String, e: NasEntry) {
        self.entries.insert(hash, e);
    }

    pub fn parse(text: &str, path: &str) -> Result<Self, NasError> {
        let mut entries = HashMap::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| NasError::Parse {
                path: path.to_string(),
                line: ln + 1,
                msg,
            };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(err(format!("expected 4 tab-separated fields, found {}", fields.len())));
            }
            let triple = |f: &str, what: &str| -> Result<[f64; 3], NasError> {
                let vals: Vec<&str> = f.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
                if vals.len() != 3 {
                    return Err(err(format!("{what}: expected 3 replicates, found {}", vals.len())));
                }
                let mut out = [0.0; 3];
                for (o, s) in out.iter_mut().zip(vals) {
                    *o = s
                        .parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .ok_or_else(|| err(format!("{what}: bad number {s:?}")))?;
                }
                Ok(out)
            };
            let hash = fields[0].trim();
            if hash.is_empty() {
                return Err(err("empty hash".into()));
            }
            let e = NasEntry {
                validation: triple(fields[1], "validation")?,
                test: triple(fields[2], "test")?,
                seconds: triple(fields[3], "seconds")?,
            };
            if e.seconds.iter().any(|&s| s < 0.0) {
                return Err(err("negative training time".into()));
            }
            if entries.insert(hash.to_string(), e).is_some() {
                return Err(err(format!("duplicate hash {hash}")));
            }
        }
        Ok(Self { entries })
    }

    /// Records in sorted hash order.
    pub fn to_text(&self) -> String {
        let mut keys: Vec<&String> = self.entries.keys().collect();
        keys.sort();
        let mut s = String::new();
        let join = |a: &[f64; 3]| format!("{},{},{}", a[0], a[1], a[2]);
        for k in keys {
            let e = &self.entries[k];
            let _ = writeln!(s, "{k}\t{}\t{}\t{}", join(&e.validation), join(&e.test), join(&e.seconds));
        }
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NasError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    /// Tabulate `bench` over the given cells.
    pub fn from_benchmark<'c>(
        spec: &CellSpec,
        bench: &dyn NasBenchmark,
        cells: impl IntoIterator<Item = &'c Cell>,
    ) -> Result<Self, NasError> {
        let mut t = Self::default();
        for c in cells {
            t.insert(c.hash(spec), bench.lookup(spec, c)?);
        }
        Ok(t)
    }
}

/// Table file, one record per line:
/// `HASH<TAB>val1,val2,val3<TAB>test1,test2,test3<TAB>sec1,sec2,sec3`.
///
/// To build one from the public benchmark dump, iterate its architectures,
/// pad each to `v` nodes (missing intermediates null), form a [`Cell`], and
/// write `cell.hash(spec)` with the three final-epoch validation accuracies,
/// test accuracies and training times.
pub fn load_nas_table(path: impl AsRef<Path>) -> Result<NasTable, NasError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    NasTable::parse(&text, &path.display().to_string())
}

impl NasBenchmark for NasTable {
    fn lookup(&self, spec: &CellSpec, cell: &Cell) -> Result<NasEntry, NasError> {
        self.get(&cell.hash(spec)).copied()
    }
}

/// Deterministic stand-in benchmark computed from the cell itself, for
/// demos and benchmarks without the real table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SyntheticNas {
    pub seed: u64,
    pub noise: f64,
}

impl Default for SyntheticNas {
    fn default() -> Self {
        Self { seed: 0, noise: 0.005 }
    }
}

impl NasBenchmark for SyntheticNas {
    fn lookup(&self, spec: &CellSpec, cell: &Cell) -> Result<NasEntry, NasError> {
        if !is_valid_cell(spec, cell) {
            return Err(NasError::NotFound(cell.canonical_key(spec)));
        }
        let key = cell.hash(spec);
        let h = u64::from_str_radix(&key[..16], 16).unwrap_or(0);
        let mut r = rng::seeded(derive_seed(self.seed, h));
        let mut counts = vec![0usize; spec.ops.len()];
        for n in 1..cell.v - 1 {
            if let Some(NodeLabel::Op(k)) = cell.label(n) {
                counts[k] += 1;
            }
        }
        let nodes: usize = counts.iter().sum();
        let depth = longest_path(cell) as f64;
        let weights: f64 = counts.iter().enumerate().map(|(k, &c)| c as f64 * (0.012 + 0.006 * k as f64)).sum();
        let base = 0.78 + weights + 0.01 * depth.min(4.0) - 0.004 * (cell.edge_count() as f64 - 4.0).abs()
            + 0.02 * (r.random::<f64>() - 0.5);
        let mut e = NasEntry {
            validation: [0.0; 3],
            test: [0.0; 3],
            seconds: [0.0; 3],
        };
        let cost = 600.0 + 250.0 * nodes as f64 + 40.0 * cell.edge_count() as f64;
        for rep in 0..3 {
            let val = base + self.noise * (r.random::<f64>() - 0.5) * 2.0;
            e.validation[rep] = val.clamp(0.0, 1.0);
            e.test[rep] = (val - 0.006 + self.noise * (r.random::<f64>() - 0.5)).clamp(0.0, 1.0);
            e.seconds[rep] = cost * (0.95 + 0.1 * r.random::<f64>());
        }
        Ok(e)
    }
}

fn longest_path(cell: &Cell) -> usize {
    let v = cell.v;
    let mut best = vec![0usize; v];
    for j in 1..v {
        for i in 0..j {
            if cell.has_edge(i, j) {
                best[j] = best[j].max(best[i] + 1);
            }
        }
    }
    best[v - 1]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NasAlgorithm {
    NnMilp {
        #[serde(default)]
        mbo: MboConfig,
        #[serde(default = "default_backend")]
        backend: String,
    },
    RandomSearch,
    RegEvo {
        #[serde(default = "default_population")]
        population: usize,
        #[serde(default = "default_tournament")]
        tournament: usize,
        #[serde(default = "default_mutation_rate")]
        mutation_rate: f64,
    },
    /// Every feasible cell in domain order; only for small specs.
    Exhaustive,
}

fn default_backend() -> String {
    "highs".into()
}
fn default_population() -> usize {
    50
}
fn default_tournament() -> usize {
    10
}
fn default_mutation_rate() -> f64 {
    1.0
}

impl NasAlgorithm {
    pub fn regevo() -> Self {
        NasAlgorithm::RegEvo {
            population: default_population(),
            tournament: default_tournament(),
            mutation_rate: default_mutation_rate(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            NasAlgorithm::NnMilp { .. } => "nn_milp",
            NasAlgorithm::RandomSearch => "random_search",
            NasAlgorithm::RegEvo { .. } => "regevo",
            NasAlgorithm::Exhaustive => "exhaustive",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub cumulative_seconds: f64,
    /// Observed validation accuracy of the query just made.
    pub observed: f64,
    pub incumbent_validation: f64,
    /// Mean test accuracy of the incumbent, for reporting only.
    pub incumbent_test: f64,
    pub hash: String,
}

pub type Trajectory = Vec<TrajectoryPoint>;

const SAMPLE_ATTEMPTS: usize = 100_000;

/// Replays the benchmark for queried points, tracking time and the incumbent.
struct Replay<'a> {
    spec: &'a CellSpec,
    bench: &'a dyn NasBenchmark,
    rng: rng::Rng,
    budget: f64,
    traj: Trajectory,
    best: Option<(f64, f64)>,
    elapsed: f64,
    miss: Option<NasError>,
}

impl Replay<'_> {
    fn query(&mut self, cell: &Cell) -> Result<f64, NasError> {
        let e = self.bench.lookup(self.spec, cell)?;
        let rep = self.rng.random_range(0..3);
        let observed = e.validation[rep];
        self.elapsed += e.seconds[rep];
        if self.best.is_none_or(|(v, _)| observed > v) {
            self.best = Some((observed, e.mean_test()));
        }
        let (iv, it) = self.best.unwrap_or((observed, e.mean_test()));
        self.traj.push(TrajectoryPoint {
            cumulative_seconds: self.elapsed,
            observed,
            incumbent_validation: iv,
            incumbent_test: it,
            hash: cell.hash(self.spec),
        });
        Ok(observed)
    }

    fn done(&self) -> bool {
        self.elapsed > self.budget
    }
}

impl BlackBox for Replay<'_> {
    fn evaluate(&mut self, p: &Point) -> Result<f64, EvalError> {
        let cell = Cell::from_point(self.spec, p).map_err(|e| EvalError(e.to_string()))?;
        self.query(&cell).map_err(|e| {
            let msg = e.to_string();
            self.miss = Some(e);
            EvalError(msg)
        })
    }
}

/// Query architectures until cumulative training time exceeds
/// `time_budget`. Each query draws one of the three replicates uniformly.
pub fn run_nas_experiment(
    algorithm: &NasAlgorithm,
    spec: &CellSpec,
    bench: &dyn NasBenchmark,
    time_budget: f64,
    seed: u64,
) -> Result<Trajectory, NasError> {
    spec.validate()?;
    let mut replay = Replay {
        spec,
        bench,
        rng: rng::seeded(derive_seed(seed, 0x7ab1e)),
        budget: time_budget,
        traj: Vec::new(),
        best: None,
        elapsed: 0.0,
        miss: None,
    };
    let mut rng = rng::seeded(derive_seed(seed, 0xa1));
    match algorithm {
        NasAlgorithm::RandomSearch => {
            while !replay.done() {
                let c = random_cell(spec, &mut rng, SAMPLE_ATTEMPTS)?;
                replay.query(&c)?;
            }
        }
        NasAlgorithm::Exhaustive => {
            let domain = build_nas_domain(spec)?;
            for p in domain.feasible_points() {
                if replay.done() {
                    break;
                }
                replay.query(&Cell::from_point(spec, &p)?)?;
            }
        }
        NasAlgorithm::RegEvo {
            population,
            tournament,
            mutation_rate,
        } => {
            if *population == 0 || *tournament == 0 || *tournament > *population {
                return Err(NasError::InvalidSpec("need 1 <= tournament <= population".into()));
            }
            let mut pop: VecDeque<(Cell, f64)> = VecDeque::with_capacity(*population + 1);
            while pop.len() < *population && !replay.done() {
                let c = random_cell(spec, &mut rng, SAMPLE_ATTEMPTS)?;
                let r = replay.query(&c)?;
                pop.push_back((c, r));
            }
            while !replay.done() {
                let picks = rand::seq::index::sample(&mut rng, pop.len(), *tournament);
                let parent = picks
                    .iter()
                    .max_by(|&a, &b| pop[a].1.total_cmp(&pop[b].1).then(b.cmp(&a)))
                    .expect("tournament is nonempty");
                let child = mutate_cell(spec, &pop[parent].0, *mutation_rate, &mut rng, SAMPLE_ATTEMPTS)?;
                let r = replay.query(&child)?;
                pop.push_back((child, r));
                pop.pop_front();
            }
        }
        NasAlgorithm::NnMilp { mbo, backend } => {
            let domain = build_nas_domain(spec)?;
            let backend_box = backend_by_name(backend).map_err(|e| NasError::Backend(e.to_string()))?;
            let mut inner = MilpInner::new(backend_box, mbo);
            let mut session = MboSession::new(&domain, mbo.clone());
            let mut seen = std::collections::HashSet::new();
            let mut draws = 0;
            while session.history().len() < mbo.init_count.max(1) && !replay.done() {
                let c = random_cell(spec, &mut rng, SAMPLE_ATTEMPTS)?;
                draws += 1;
                let p = c.to_point(spec)?;
                if !seen.insert(p.clone()) {
                    if draws > SAMPLE_ATTEMPTS {
                        return Err(NasError::Sampling(draws));
                    }
                    continue;
                }
                let r = replay.query(&c)?;
                session.record(p, r, 0.0, RecordStatus::Initial);
            }
            while !replay.done() {
                match session.step(&mut replay, &mut inner) {
                    Ok(true) => {}
                    Ok(false) => break,
                    Err(e) => return Err(replay.miss.take().unwrap_or(NasError::Mbo(e))),
                }
            }
        }
    }
    Ok(replay.traj)
}
