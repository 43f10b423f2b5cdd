//! Benchmark black-box objectives and their constraint families.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use num_rational::Rational64;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde_json::{json, Value};
use thiserror::Error;

use crate::domain::{constraints_from_json, constraints_to_json, CategoricalDomain, DomainError, LinearConstraint, OneHot, Point, Sense};
use crate::evo::SubsetPairs;
use crate::rng;
use crate::surrogate::{DenseLayer, Mlp};

#[derive(Debug, Error)]
#[error("{0}")]
pub struct EvalError(pub String);

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error("index {index} out of range for n = {n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Expensive function queried one point at a time. `&mut` lets noisy or
/// stateful objectives (tabular replay) track their own draws.
pub trait BlackBox {
    fn evaluate(&mut self, p: &Point) -> Result<f64, EvalError>;
}

/// Wraps a closure as an objective.
pub struct FnObjective<F>(F);

impl<F: FnMut(&Point) -> f64> FnObjective<F> {
    pub fn new(f: F) -> Self {
        Self(f)
    }
}

impl<F: FnMut(&Point) -> f64> BlackBox for FnObjective<F> {
    fn evaluate(&mut self, p: &Point) -> Result<f64, EvalError> {
        Ok((self.0)(p))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MlpArch {
    Fcc,
    Cnn,
}

/// Same-padded 1-D convolution over the sequence axis, `weights[o][k][c]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv1d {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv1d {
    pub fn glorot<R: Rng + ?Sized>(in_ch: usize, out_ch: usize, kernel: usize, rng: &mut R) -> Self {
        let limit = (6.0 / ((in_ch + out_ch) * kernel) as f64).sqrt();
        Self {
            in_ch,
            out_ch,
            kernel,
            weights: (0..out_ch * kernel * in_ch).map(|_| rng.random_range(-limit..limit)).collect(),
            bias: vec![0.0; out_ch],
        }
    }

    fn w(&self, o: usize, k: usize, c: usize) -> f64 {
        self.weights[(o * self.kernel + k) * self.in_ch + c]
    }

    /// `x` is `len x in_ch` row-major; returns `len x out_ch` after ReLU.
    pub fn forward_relu(&self, x: &[f64], len: usize) -> Vec<f64> {
        let left = (self.kernel - 1) / 2;
        let mut out = vec![0.0; len * self.out_ch];
        for t in 0..len {
            for o in 0..self.out_ch {
                let mut s = self.bias[o];
                for k in 0..self.kernel {
                    let Some(src) = (t + k).checked_sub(left).filter(|&s| s < len) else {
                        continue;
                    };
                    for c in 0..self.in_ch {
                        s += self.w(o, k, c) * x[src * self.in_ch + c];
                    }
                }
                out[t * self.out_ch + o] = s.max(0.0);
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RandomNet {
    Fcc(Mlp),
    Cnn { convs: Vec<Conv1d>, head: DenseLayer, len: usize },
}

impl RandomNet {
    pub fn forward(&self, one_hot: &[f64]) -> f64 {
        match self {
            RandomNet::Fcc(net) => net.forward(one_hot),
            RandomNet::Cnn { convs, head, len } => {
                let mut x = one_hot.to_vec();
                for c in convs {
                    x = c.forward_relu(&x, *len);
                }
                head.bias()[0] + head.row(0).iter().zip(&x).map(|(w, v)| w * v).sum::<f64>()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IsingModel {
    pub n: usize,
    /// `tables[e][a][b]` for the `e`-th edge `(u, v)`, `u < v`, lexicographic.
    pub tables: Vec<[[f64; 2]; 2]>,
}

impl IsingModel {
    pub fn edge_index(&self, u: usize, v: usize) -> usize {
        debug_assert!(u < v && v < self.n);
        u * (2 * self.n - u - 1) / 2 + (v - u - 1)
    }

    pub fn eval(&self, x: &[usize]) -> f64 {
        let mut s = 0.0;
        let mut e = 0;
        for u in 0..self.n {
            for v in u + 1..self.n {
                s += self.tables[e][x[u]][x[v]];
                e += 1;
            }
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BbobFunction {
    Sphere,
    /// Separable ellipsoid with condition number 1e6.
    Ellipsoid,
}

impl BbobFunction {
    pub fn eval(self, x: &[f64]) -> f64 {
        match self {
            BbobFunction::Sphere => x.iter().map(|v| v * v).sum(),
            BbobFunction::Ellipsoid => {
                let n = x.len();
                x.iter()
                    .enumerate()
                    .map(|(i, v)| {
                        let e = if n > 1 { 6.0 * i as f64 / (n - 1) as f64 } else { 0.0 };
                        10f64.powf(e) * v * v
                    })
                    .sum()
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BbobFunction::Sphere => "sphere",
            BbobFunction::Ellipsoid => "ellipsoid",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BbobGrid {
    pub function: BbobFunction,
    /// Coordinate values indexed by alphabet position.
    pub values: Vec<f64>,
    pub mad: f64,
}

impl BbobGrid {
    pub fn raw_at(&self, p: &[usize]) -> f64 {
        let x: Vec<f64> = p.iter().map(|&i| self.values[i]).collect();
        self.function.eval(&x)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BqpInstance {
    pub n: usize,
    /// Entries `(i, j, q)` of Q; the quadratic term is the sum of `q x_i x_j` over entries.
    pub q: Vec<(usize, usize, f64)>,
    pub c: Vec<(usize, f64)>,
    pub constraints: Vec<LinearConstraint>,
    pub best_known: Option<f64>,
}

impl BqpInstance {
    pub fn eval(&self, x: &[usize]) -> f64 {
        let quad: f64 = self.q.iter().map(|&(i, j, q)| q * (x[i] * x[j]) as f64).sum();
        let lin: f64 = self.c.iter().map(|&(i, c)| c * x[i] as f64).sum();
        quad + lin
    }

    pub fn domain(&self) -> Result<CategoricalDomain, DomainError> {
        CategoricalDomain::binary(self.n)?.with_constraints(self.constraints.clone())
    }

    pub fn to_json(&self) -> Value {
        json!({
            "n": self.n,
            "Q": self.q.iter().map(|&(i, j, q)| json!([i, j, q])).collect::<Vec<_>>(),
            "c": self.c.iter().map(|&(i, c)| json!([i, c])).collect::<Vec<_>>(),
            "constraints": constraints_to_json(&self.constraints),
            "best_known": self.best_known,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ObjectiveError> {
        fs::write(path, serde_json::to_string_pretty(&self.to_json()).expect("json"))?;
        Ok(())
    }
}

pub fn parse_bqp(text: &str, path: &str) -> Result<BqpInstance, ObjectiveError> {
    let perr = |msg: String| ObjectiveError::Parse {
        path: path.to_string(),
        line: 0,
        msg,
    };
    let v: Value = serde_json::from_str(text).map_err(|e| ObjectiveError::Parse {
        path: path.to_string(),
        line: e.line(),
        msg: e.to_string(),
    })?;
    let n = v["n"].as_u64().ok_or_else(|| perr("missing integer field n".into()))? as usize;
    let check = |i: usize| if i < n { Ok(i) } else { Err(ObjectiveError::IndexOutOfRange { index: i, n }) };
    let idx = |x: &Value, what: &str| -> Result<usize, ObjectiveError> {
        let i = x.as_u64().ok_or_else(|| perr(format!("{what}: expected an index")))? as usize;
        check(i)
    };
    let num = |x: &Value, what: &str| x.as_f64().ok_or_else(|| perr(format!("{what}: expected a number")));
    let mut q = Vec::new();
    for (k, e) in v["Q"].as_array().map(Vec::as_slice).unwrap_or(&[]).iter().enumerate() {
        let a = e.as_array().filter(|a| a.len() == 3).ok_or_else(|| perr(format!("Q[{k}]: expected [i, j, coef]")))?;
        q.push((idx(&a[0], "Q")?, idx(&a[1], "Q")?, num(&a[2], "Q")?));
    }
    let mut c = Vec::new();
    for (k, e) in v["c"].as_array().map(Vec::as_slice).unwrap_or(&[]).iter().enumerate() {
        let a = e.as_array().filter(|a| a.len() == 2).ok_or_else(|| perr(format!("c[{k}]: expected [i, coef]")))?;
        c.push((idx(&a[0], "c")?, num(&a[1], "c")?));
    }
    let alphabets = vec![vec!["0".to_string(), "1".to_string()]; n];
    let rows = v["constraints"].as_array().cloned().unwrap_or_default();
    let constraints = constraints_from_json(&rows, &alphabets)?;
    let best_known = match &v["best_known"] {
        Value::Null => None,
        b => Some(num(b, "best_known")?),
    };
    Ok(BqpInstance {
        n,
        q,
        c,
        constraints,
        best_known,
    })
}

pub fn load_bqp(path: impl AsRef<Path>) -> Result<BqpInstance, ObjectiveError> {
    let path = path.as_ref();
    parse_bqp(&fs::read_to_string(path)?, &path.display().to_string())
}

#[derive(Clone, Debug, PartialEq)]
pub enum Kind {
    RandomMlp(RandomNet),
    Ising(IsingModel),
    Bbob(BbobGrid),
    /// Lookup table, e.g. normalized binding affinities.
    Table(HashMap<Point, f64>),
    Bqp(BqpInstance),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Objective {
    pub name: String,
    pub domain: CategoricalDomain,
    pub seed: Option<u64>,
    pub optimum: Option<f64>,
    pub kind: Kind,
}

impl Objective {
    pub fn eval(&self, p: &Point) -> Result<f64, EvalError> {
        self.domain
            .validate(p)
            .map_err(|e| EvalError(format!("{}: {e}", self.name)))?;
        Ok(match &self.kind {
            Kind::RandomMlp(net) => {
                let e = self.domain.encode(p).map_err(|e| EvalError(e.to_string()))?;
                net.forward(&e.as_f64())
            }
            Kind::Ising(m) => m.eval(p.values()),
            // Maximization of a normalized minimization target.
            Kind::Bbob(g) => -g.raw_at(p.values()) / g.mad,
            Kind::Table(t) => *t
                .get(p)
                .ok_or_else(|| EvalError(format!("{}: no entry for {}", self.name, self.domain.format_point(p))))?,
            Kind::Bqp(b) => b.eval(p.values()),
        })
    }

    pub fn with_constraints(mut self, constraints: Vec<LinearConstraint>) -> Result<Self, DomainError> {
        self.domain = self.domain.with_constraints(constraints)?;
        Ok(self)
    }
}

impl BlackBox for Objective {
    fn evaluate(&mut self, p: &Point) -> Result<f64, EvalError> {
        self.eval(p)
    }
}

impl BlackBox for &Objective {
    fn evaluate(&mut self, p: &Point) -> Result<f64, EvalError> {
        self.eval(p)
    }
}

pub const FCC_HIDDEN: [usize; 2] = [128, 128];
pub const CNN_CHANNELS: usize = 64;
pub const CNN_KERNEL: usize = 13;

pub fn make_random_mlp(arch: MlpArch, n: usize, alphabet_size: usize, seed: u64) -> Result<Objective, ObjectiveError> {
    if n == 0 || alphabet_size == 0 {
        return Err(ObjectiveError::InvalidParams("n and alphabet size must be positive".into()));
    }
    let domain = CategoricalDomain::uniform(n, alphabet_size)?;
    let mut rng = rng::seeded(seed);
    let net = match arch {
        MlpArch::Fcc => RandomNet::Fcc(Mlp::glorot(domain.width(), &FCC_HIDDEN, &mut rng)),
        MlpArch::Cnn => {
            let c1 = Conv1d::glorot(alphabet_size, CNN_CHANNELS, CNN_KERNEL, &mut rng);
            let c2 = Conv1d::glorot(CNN_CHANNELS, CNN_CHANNELS, CNN_KERNEL, &mut rng);
            RandomNet::Cnn {
                convs: vec![c1, c2],
                head: DenseLayer::glorot(n * CNN_CHANNELS, 1, &mut rng),
                len: n,
            }
        }
    };
    let tag = match arch {
        MlpArch::Fcc => "fcc",
        MlpArch::Cnn => "cnn",
    };
    Ok(Objective {
        name: format!("random_{tag}({n},{alphabet_size})_s{seed}"),
        domain,
        seed: Some(seed),
        optimum: None,
        kind: Kind::RandomMlp(net),
    })
}

pub fn make_ising(n: usize, seed: u64) -> Result<Objective, ObjectiveError> {
    if n < 2 {
        return Err(ObjectiveError::InvalidParams("Ising needs n >= 2".into()));
    }
    let mut rng = rng::seeded(seed);
    let edges = n * (n - 1) / 2;
    let tables = (0..edges)
        .map(|_| {
            let mut t = [[0.0; 2]; 2];
            for row in &mut t {
                for v in row.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
            }
            t
        })
        .collect();
    Ok(Objective {
        name: format!("ising({n})_s{seed}"),
        domain: CategoricalDomain::binary(n)?,
        seed: Some(seed),
        optimum: None,
        kind: Kind::Ising(IsingModel { n, tables }),
    })
}

/// `m` equally spaced values on `[-5, 5]` with the value nearest zero set to
/// exactly zero; ties go to the positive candidate.
pub fn bbob_grid_values(m: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..m).map(|k| -5.0 + 10.0 * k as f64 / (m - 1) as f64).collect();
    let mut best = 0;
    for k in 1..m {
        let (a, b) = (v[k].abs(), v[best].abs());
        if a < b - 1e-12 || ((a - b).abs() <= 1e-12 && v[k] > v[best]) {
            best = k;
        }
    }
    v[best] = 0.0;
    v
}

fn first_primes(count: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(count);
    let mut k = 2u64;
    while out.len() < count {
        if out.iter().all(|p| k % p != 0) {
            out.push(k);
        }
        k += 1;
    }
    out
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// Halton points (indices 1..=count) mapped to `[-5, 5]^n`.
pub fn probe_points(n: usize, count: usize) -> Vec<Vec<f64>> {
    let primes = first_primes(n);
    (1..=count as u64)
        .map(|i| primes.iter().map(|&b| -5.0 + 10.0 * radical_inverse(i, b)).collect())
        .collect()
}

pub const BBOB_PROBES: usize = 30;

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

/// Median absolute deviation about the median; 1 when degenerate.
pub fn median_absolute_deviation(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    let med = median(&mut v);
    let mut dev: Vec<f64> = values.iter().map(|x| (x - med).abs()).collect();
    let mad = median(&mut dev);
    if mad > 0.0 && mad.is_finite() {
        mad
    } else {
        1.0
    }
}

pub fn discretize_bbob(function: BbobFunction, n: usize, m: usize) -> Result<Objective, ObjectiveError> {
    if m < 2 || n == 0 {
        return Err(ObjectiveError::InvalidParams("BBOB needs n >= 1 and m >= 2".into()));
    }
    let values = bbob_grid_values(m);
    let raw: Vec<f64> = probe_points(n, BBOB_PROBES).iter().map(|x| function.eval(x)).collect();
    let mad = median_absolute_deviation(&raw);
    let symbols: Vec<String> = (1..=m).map(|k| k.to_string()).collect();
    Ok(Objective {
        name: format!("bbob_{}({n},{m})", function.name()),
        domain: CategoricalDomain::new(vec![symbols; n], Vec::new())?,
        seed: None,
        optimum: Some(0.0),
        kind: Kind::Bbob(BbobGrid { function, values, mad }),
    })
}

pub const NUCLEOTIDES: [&str; 4] = ["A", "C", "G", "T"];
pub const TFBIND_LEN: usize = 8;

/// Lookup objective from `SEQUENCE<TAB>AFFINITY` lines, affinities min/max
/// mapped to `[0, 1]`. Returns the objective and the count of duplicate rows
/// (the last occurrence wins).
pub fn parse_tfbind(text: &str, path: &str) -> Result<(Objective, usize), ObjectiveError> {
    let alphabets = vec![NUCLEOTIDES.iter().map(|s| s.to_string()).collect::<Vec<_>>(); TFBIND_LEN];
    let domain = CategoricalDomain::new(alphabets, Vec::new())?;
    let err = |line: usize, msg: String| ObjectiveError::Parse {
        path: path.to_string(),
        line,
        msg,
    };
    let mut raw: HashMap<Point, f64> = HashMap::new();
    let mut duplicates = 0;
    for (k, line) in text.lines().enumerate() {
        let lineno = k + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let (Some(seq), Some(aff), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(err(lineno, "expected SEQUENCE<TAB>AFFINITY".into()));
        };
        let aff: f64 = match aff.trim().parse() {
            Ok(a) => a,
            Err(_) if k == 0 => continue,
            Err(_) => return Err(err(lineno, format!("affinity {aff:?} is not a number"))),
        };
        let seq = seq.trim();
        if seq.chars().count() != TFBIND_LEN {
            return Err(err(lineno, format!("sequence {seq:?} has length {} (expected {TFBIND_LEN})", seq.chars().count())));
        }
        let values = seq
            .chars()
            .map(|ch| {
                NUCLEOTIDES
                    .iter()
                    .position(|s| s.starts_with(ch.to_ascii_uppercase()))
                    .ok_or_else(|| err(lineno, format!("unknown nucleotide {ch:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if raw.insert(Point(values), aff).is_some() {
            duplicates += 1;
        }
    }
    if raw.is_empty() {
        return Err(err(0, "no records".into()));
    }
    if duplicates > 0 {
        log::warn!("{path}: {duplicates} duplicate sequences, last occurrence kept");
    }
    let lo = raw.values().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.values().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let table = raw
        .into_iter()
        .map(|(p, a)| (p, if span > 0.0 { (a - lo) / span } else { 0.0 }))
        .collect();
    let name = Path::new(path)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "tfbind".into());
    Ok((
        Objective {
            name: format!("tfbind_{name}"),
            domain,
            seed: None,
            optimum: Some(1.0),
            kind: Kind::Table(table),
        },
        duplicates,
    ))
}

pub fn load_tfbind(path: impl AsRef<Path>) -> Result<(Objective, usize), ObjectiveError> {
    let path = path.as_ref();
    parse_tfbind(&fs::read_to_string(path)?, &path.display().to_string())
}

pub fn load_bqp_objective(path: impl AsRef<Path>) -> Result<Objective, ObjectiveError> {
    let path = path.as_ref();
    let inst = load_bqp(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "bqp".into());
    Ok(Objective {
        name: format!("bqp_{name}"),
        domain: inst.domain()?,
        seed: None,
        optimum: inst.best_known,
        kind: Kind::Bqp(inst),
    })
}

/// Rows `sum_{S_{2j-1}} z_{i,1} = sum_{S_{2j}} z_{i,1}` on a binary domain.
pub fn subset_equality_rows(pairs: &SubsetPairs) -> Vec<LinearConstraint> {
    pairs
        .pairs()
        .iter()
        .map(|(a, b)| {
            let terms = a
                .iter()
                .map(|&i| (OneHot::new(i, 1), Rational64::from_integer(1)))
                .chain(b.iter().map(|&i| (OneHot::new(i, 1), Rational64::from_integer(-1))))
                .collect();
            LinearConstraint::new(terms, Sense::Eq, Rational64::from_integer(0)).expect("disjoint subsets")
        })
        .collect()
}

/// `k` pairs of `subset_size`-element subsets from a seeded permutation of `[n]`.
pub fn subset_equality_constraints(
    n: usize,
    k: usize,
    subset_size: usize,
    seed: u64,
) -> Result<(SubsetPairs, Vec<LinearConstraint>), ObjectiveError> {
    let block = 2 * k * subset_size;
    if k == 0 || subset_size == 0 || block > n || n % block != 0 {
        return Err(ObjectiveError::InvalidParams(format!(
            "n = {n} is not divisible into 2k = {} subsets of size {subset_size}",
            2 * k
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng::seeded(seed));
    let pairs = (0..k)
        .map(|j| {
            let at = |s: usize| {
                let mut v = perm[s * subset_size..(s + 1) * subset_size].to_vec();
                v.sort_unstable();
                v
            };
            (at(2 * j), at(2 * j + 1))
        })
        .collect();
    let pairs = SubsetPairs::new(pairs).map_err(|e| ObjectiveError::InvalidParams(e.to_string()))?;
    let rows = subset_equality_rows(&pairs);
    Ok((pairs, rows))
}

/// Ising(n) over the binary domain with `k` subset-equality pairs of size 5.
pub fn make_constrained_ising(n: usize, k: usize, seed: u64) -> Result<(Objective, SubsetPairs), ObjectiveError> {
    let (pairs, rows) = subset_equality_constraints(n, k, 5, crate::rng::derive_seed(seed, 0x5e7))?;
    let obj = make_ising(n, seed)?.with_constraints(rows)?;
    Ok((obj, pairs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ising_hand_sum() {
        let mut obj = make_ising(3, 0).unwrap();
        let Kind::Ising(m) = &mut obj.kind else { unreachable!() };
        m.tables = vec![[[1.0, 2.0], [3.0, 4.0]], [[10.0, 20.0], [30.0, 40.0]], [[100.0, 200.0], [300.0, 400.0]]];
        assert_eq!(m.edge_index(0, 1), 0);
        assert_eq!(m.edge_index(0, 2), 1);
        assert_eq!(m.edge_index(1, 2), 2);
        // x = (1, 0, 1): edge01 -> [1][0], edge02 -> [1][1], edge12 -> [0][1]
        assert_eq!(obj.eval(&Point(vec![1, 0, 1])).unwrap(), 3.0 + 40.0 + 200.0);
        m_zero(&mut obj);
        assert_eq!(obj.eval(&Point(vec![1, 1, 0])).unwrap(), 0.0);
    }

    fn m_zero(obj: &mut Objective) {
        if let Kind::Ising(m) = &mut obj.kind {
            m.tables.iter_mut().for_each(|t| *t = [[0.0; 2]; 2]);
        }
    }

    #[test]
    fn bbob_grids() {
        assert_eq!(bbob_grid_values(2), vec![-5.0, 0.0]);
        let g = bbob_grid_values(10);
        assert_eq!(g.iter().filter(|v| **v == 0.0).count(), 1);
        // Symmetric tie at -5/9 and 5/9 resolved toward the positive side.
        assert_eq!(g[5], 0.0);
        assert!((g[4] + 5.0 / 9.0).abs() < 1e-12);
        assert_eq!(bbob_grid_values(11)[5], 0.0);
    }

    #[test]
    fn bbob_optimum_at_zero() {
        let obj = discretize_bbob(BbobFunction::Sphere, 10, 10).unwrap();
        let zero = Point(vec![5; 10]);
        assert_eq!(obj.eval(&zero).unwrap(), 0.0);
        let other = Point(vec![4; 10]);
        assert!(obj.eval(&other).unwrap() < 0.0);
    }

    #[test]
    fn mad_about_median() {
        assert_eq!(median_absolute_deviation(&[1.0, 2.0, 3.0, 4.0, 100.0]), 1.0);
        assert_eq!(median_absolute_deviation(&[5.0, 5.0, 5.0]), 1.0);
    }

    #[test]
    fn halton_in_range_and_fixed() {
        let p = probe_points(10, 30);
        assert_eq!(p.len(), 30);
        assert!(p.iter().flatten().all(|v| (-5.0..=5.0).contains(v)));
        assert_eq!(p[0][0], 0.0);
        assert_eq!(p, probe_points(10, 30));
    }

    #[test]
    fn tfbind_normalization_and_errors() {
        let (obj, dups) = parse_tfbind("seq\taff\nAAAAAAAA\t3\nACGTACGT\t7\n", "f.tsv").unwrap();
        assert_eq!(dups, 0);
        assert_eq!(obj.eval(&obj.domain.parse_point("A A A A A A A A").unwrap()).unwrap(), 0.0);
        assert_eq!(obj.eval(&Point(vec![0, 1, 2, 3, 0, 1, 2, 3])).unwrap(), 1.0);
        assert_eq!((obj.domain.n(), obj.domain.alphabet_size(0)), (8, 4));
        let (obj, dups) = parse_tfbind("AAAAAAAA\t3\nAAAAAAAA\t5\nCCCCCCCC\t1\n", "f.tsv").unwrap();
        assert_eq!(dups, 1);
        assert_eq!(obj.eval(&Point(vec![0; 8])).unwrap(), 1.0);
        let e = parse_tfbind("AAAAAAAA\t1\nAAAA\t2\n", "f.tsv").unwrap_err().to_string();
        assert!(e.contains("f.tsv:2"), "{e}");
        let e = parse_tfbind("AAAAAAAA\t1\nAAAAAAAX\t2\n", "f.tsv").unwrap_err().to_string();
        assert!(e.contains("unknown nucleotide"), "{e}");
        let e = parse_tfbind("AAAAAAAA\t1\nCCCCCCCC\tx\n", "f.tsv").unwrap_err().to_string();
        assert!(e.contains(":2:"), "{e}");
    }

    #[test]
    fn bqp_eval_and_round_trip() {
        let inst = parse_bqp(r#"{"n": 2, "Q": [[0,0,1],[1,1,1]], "c": [], "constraints": [], "best_known": null}"#, "x").unwrap();
        assert_eq!(inst.eval(&[1, 1]), 2.0);
        let text = r#"{"n": 3, "Q": [[0,1,-2.5],[2,2,1]], "c": [[1, 0.5]],
            "constraints": [{"terms": [[0,1,1],[1,1,1],[2,1,1]], "sense": "=", "rhs": 1}], "best_known": -1.5}"#;
        let inst = parse_bqp(text, "x").unwrap();
        let d = inst.domain().unwrap();
        for p in d.iter_points() {
            let direct = p.values().iter().sum::<usize>() == 1;
            assert_eq!(d.is_feasible(&p), direct);
        }
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("i.json");
        inst.save(&f).unwrap();
        assert_eq!(load_bqp(&f).unwrap(), inst);
        assert!(matches!(
            parse_bqp(r#"{"n": 2, "Q": [[0,2,1]]}"#, "x"),
            Err(ObjectiveError::IndexOutOfRange { index: 2, n: 2 })
        ));
    }

    #[test]
    fn subset_equality_examples() {
        let pairs = SubsetPairs::new(vec![(vec![0, 1], vec![2, 3])]).unwrap();
        let d = CategoricalDomain::binary(4).unwrap().with_constraints(subset_equality_rows(&pairs)).unwrap();
        assert!(d.is_feasible(&Point(vec![1, 0, 0, 1])));
        assert!(!d.is_feasible(&Point(vec![1, 1, 0, 1])));
        assert_eq!(d.feasible_points().count(), 6);
        let (pairs, rows) = subset_equality_constraints(40, 4, 5, 1).unwrap();
        assert_eq!(rows.len(), 4);
        let mut all: Vec<usize> = pairs.pairs().iter().flat_map(|(a, b)| a.iter().chain(b).copied()).collect();
        all.sort_unstable();
        assert_eq!(all, (0..40).collect::<Vec<_>>());
        assert!(subset_equality_constraints(30, 4, 5, 1).is_err());
    }

    #[test]
    fn random_mlp_deterministic() {
        for arch in [MlpArch::Fcc, MlpArch::Cnn] {
            let a = make_random_mlp(arch, 25, 5, 13).unwrap();
            let b = make_random_mlp(arch, 25, 5, 13).unwrap();
            let c = make_random_mlp(arch, 25, 5, 42).unwrap();
            let mut r = rng::seeded(0);
            let mut differs = false;
            for _ in 0..100 {
                let p = a.domain.sample_unconstrained(&mut r);
                assert_eq!(a.eval(&p).unwrap(), b.eval(&p).unwrap());
                differs |= a.eval(&p).unwrap() != c.eval(&p).unwrap();
            }
            assert!(differs);
        }
    }
}
