//! Finite categorical domains, their one-hot encodings and declarative
//! linear constraints over the encoding.
//!
//! Every variable is one-hot encoded, binary variables included: a binary
//! variable contributes the two bits `(i, 0)` and `(i, 1)`. Constraint
//! coefficients are exact rationals so feasibility checks never depend on
//! floating-point rounding.

use std::fmt;
use std::fs;
use std::path::Path;

use num_rational::Rational64;
use num_traits::{ToPrimitive, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// Exact constraint coefficient.
pub type Coef = Rational64;

#[derive(Debug, Error)]
pub enum DomainError {
    #[error("domain must have at least one variable")]
    NoVariables,
    #[error("alphabet of variable {0} is empty")]
    EmptyAlphabet(usize),
    #[error("variable {var}: symbol {symbol:?} is not in the alphabet")]
    SymbolNotInAlphabet { var: usize, symbol: String },
    #[error("variable {var}: symbol {symbol:?} contains whitespace or is duplicated")]
    InvalidSymbol { var: usize, symbol: String },
    #[error("one-hot index ({var}, {symbol}) is out of range")]
    IndexOutOfRange { var: usize, symbol: usize },
    #[error("point has {got} values but the domain has {expected} variables")]
    WrongLength { expected: usize, got: usize },
    #[error("malformed encoding: variable {var} has {set} bits set")]
    MalformedEncoding { var: usize, set: usize },
    #[error("constraint references one-hot index ({var}, {symbol}) more than once")]
    DuplicateTerm { var: usize, symbol: usize },
    #[error("domain file: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sense {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = ">=")]
    Ge,
}

impl Sense {
    pub fn holds<T: PartialOrd>(self, lhs: T, rhs: T) -> bool {
        match self {
            Sense::Le => lhs <= rhs,
            Sense::Eq => lhs == rhs,
            Sense::Ge => lhs >= rhs,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "<=" => Some(Sense::Le),
            "=" | "==" => Some(Sense::Eq),
            ">=" => Some(Sense::Ge),
            _ => None,
        }
    }
}

/// Address of one bit of the one-hot encoding: variable `var` takes the
/// alphabet entry at position `symbol`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OneHot {
    pub var: usize,
    pub symbol: usize,
}

impl OneHot {
    pub fn new(var: usize, symbol: usize) -> Self {
        Self { var, symbol }
    }
}

/// `sum(coef * z[var, symbol]) <sense> rhs` over one-hot bits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinearConstraint {
    terms: Vec<(OneHot, Coef)>,
    sense: Sense,
    rhs: Coef,
}

impl LinearConstraint {
    pub fn new(terms: Vec<(OneHot, Coef)>, sense: Sense, rhs: Coef) -> Result<Self, DomainError> {
        let mut seen: Vec<OneHot> = terms.iter().map(|(h, _)| *h).collect();
        seen.sort_unstable();
        if let Some(w) = seen.windows(2).find(|w| w[0] == w[1]) {
            return Err(DomainError::DuplicateTerm {
                var: w[0].var,
                symbol: w[0].symbol,
            });
        }
        Ok(Self { terms, sense, rhs })
    }

    /// Integer-coefficient shorthand used by generated constraint families.
    pub fn from_ints(terms: &[(usize, usize, i64)], sense: Sense, rhs: i64) -> Result<Self, DomainError> {
        Self::new(
            terms
                .iter()
                .map(|&(v, s, c)| (OneHot::new(v, s), Coef::from_integer(c)))
                .collect(),
            sense,
            Coef::from_integer(rhs),
        )
    }

    pub fn terms(&self) -> &[(OneHot, Coef)] {
        &self.terms
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn rhs(&self) -> Coef {
        self.rhs
    }

    /// Left-hand side evaluated on a point (bit `(i, j)` is set iff `p[i] == j`).
    pub fn lhs_at(&self, p: &Point) -> Coef {
        self.terms
            .iter()
            .filter(|(h, _)| p.0.get(h.var) == Some(&h.symbol))
            .fold(Coef::zero(), |acc, (_, c)| acc + c)
    }

    pub fn satisfied_by(&self, p: &Point) -> bool {
        self.sense.holds(self.lhs_at(p), self.rhs)
    }

    /// Evaluate against an explicit bit vector laid out by `domain`.
    pub fn satisfied_by_bits(&self, domain: &CategoricalDomain, bits: &[bool]) -> bool {
        let lhs = self
            .terms
            .iter()
            .filter(|(h, _)| bits[domain.flat_index(*h)])
            .fold(Coef::zero(), |acc, (_, c)| acc + c);
        self.sense.holds(lhs, self.rhs)
    }
}

/// A point of the domain, stored as alphabet positions.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Point(pub Vec<usize>);

impl Point {
    pub fn values(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<Vec<usize>> for Point {
    fn from(v: Vec<usize>) -> Self {
        Point(v)
    }
}

/// Flattened one-hot bits, variable-major.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct EncodedPoint {
    pub bits: Vec<bool>,
}

impl EncodedPoint {
    pub fn set_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| i)
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CategoricalDomain {
    alphabets: Vec<Vec<String>>,
    offsets: Vec<usize>,
    width: usize,
    constraints: Vec<LinearConstraint>,
}

impl CategoricalDomain {
    pub fn new(alphabets: Vec<Vec<String>>, constraints: Vec<LinearConstraint>) -> Result<Self, DomainError> {
        if alphabets.is_empty() {
            return Err(DomainError::NoVariables);
        }
        let mut offsets = Vec::with_capacity(alphabets.len());
        let mut width = 0;
        for (i, a) in alphabets.iter().enumerate() {
            if a.is_empty() {
                return Err(DomainError::EmptyAlphabet(i));
            }
            for (j, s) in a.iter().enumerate() {
                if s.is_empty() || s.chars().any(char::is_whitespace) || a[..j].contains(s) {
                    return Err(DomainError::InvalidSymbol {
                        var: i,
                        symbol: s.clone(),
                    });
                }
            }
            offsets.push(width);
            width += a.len();
        }
        let domain = Self {
            alphabets,
            offsets,
            width,
            constraints: Vec::new(),
        };
        domain.with_constraints(constraints)
    }

    /// `n` variables sharing the alphabet `0..size` (symbols are the decimal indices).
    pub fn uniform(n: usize, size: usize) -> Result<Self, DomainError> {
        let alphabet: Vec<String> = (0..size).map(|j| j.to_string()).collect();
        Self::new(vec![alphabet; n], Vec::new())
    }

    pub fn binary(n: usize) -> Result<Self, DomainError> {
        Self::uniform(n, 2)
    }

    /// Replace the constraint list, validating every referenced index.
    pub fn with_constraints(mut self, constraints: Vec<LinearConstraint>) -> Result<Self, DomainError> {
        for c in &constraints {
            for (h, _) in c.terms() {
                self.check_index(*h)?;
            }
        }
        self.constraints = constraints;
        Ok(self)
    }

    pub fn add_constraint(&mut self, c: LinearConstraint) -> Result<(), DomainError> {
        for (h, _) in c.terms() {
            self.check_index(*h)?;
        }
        self.constraints.push(c);
        Ok(())
    }

    fn check_index(&self, h: OneHot) -> Result<(), DomainError> {
        if h.var >= self.n() || h.symbol >= self.alphabets[h.var].len() {
            return Err(DomainError::IndexOutOfRange {
                var: h.var,
                symbol: h.symbol,
            });
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.alphabets.len()
    }

    pub fn alphabets(&self) -> &[Vec<String>] {
        &self.alphabets
    }

    pub fn alphabet_size(&self, var: usize) -> usize {
        self.alphabets[var].len()
    }

    pub fn constraints(&self) -> &[LinearConstraint] {
        &self.constraints
    }

    /// Total one-hot width.
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn offset(&self, var: usize) -> usize {
        self.offsets[var]
    }

    pub fn flat_index(&self, h: OneHot) -> usize {
        self.offsets[h.var] + h.symbol
    }

    pub fn one_hot_at(&self, flat: usize) -> OneHot {
        let var = match self.offsets.binary_search(&flat) {
            Ok(v) => v,
            Err(v) => v - 1,
        };
        OneHot::new(var, flat - self.offsets[var])
    }

    /// Flat index ranges of each variable's one-hot group.
    pub fn groups(&self) -> Vec<std::ops::Range<usize>> {
        (0..self.n())
            .map(|i| self.offsets[i]..self.offsets[i] + self.alphabets[i].len())
            .collect()
    }

    /// Number of points in the unconstrained product space, if it fits.
    pub fn cardinality(&self) -> Option<u128> {
        self.alphabets
            .iter()
            .try_fold(1u128, |acc, a| acc.checked_mul(a.len() as u128))
    }

    pub fn validate(&self, p: &Point) -> Result<(), DomainError> {
        if p.len() != self.n() {
            return Err(DomainError::WrongLength {
                expected: self.n(),
                got: p.len(),
            });
        }
        for (i, &v) in p.0.iter().enumerate() {
            if v >= self.alphabets[i].len() {
                return Err(DomainError::SymbolNotInAlphabet {
                    var: i,
                    symbol: v.to_string(),
                });
            }
        }
        Ok(())
    }

    pub fn point_from_symbols<S: AsRef<str>>(&self, symbols: &[S]) -> Result<Point, DomainError> {
        if symbols.len() != self.n() {
            return Err(DomainError::WrongLength {
                expected: self.n(),
                got: symbols.len(),
            });
        }
        symbols
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let s = s.as_ref();
                self.alphabets[i]
                    .iter()
                    .position(|a| a == s)
                    .ok_or_else(|| DomainError::SymbolNotInAlphabet {
                        var: i,
                        symbol: s.to_string(),
                    })
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Point)
    }

    pub fn symbols_of(&self, p: &Point) -> Vec<&str> {
        p.0.iter()
            .enumerate()
            .map(|(i, &v)| self.alphabets[i][v].as_str())
            .collect()
    }

    /// Space-separated symbol string used in CSV exports.
    pub fn format_point(&self, p: &Point) -> String {
        self.symbols_of(p).join(" ")
    }

    pub fn parse_point(&self, s: &str) -> Result<Point, DomainError> {
        let symbols: Vec<&str> = s.split_whitespace().collect();
        self.point_from_symbols(&symbols)
    }

    pub fn encode(&self, p: &Point) -> Result<EncodedPoint, DomainError> {
        self.validate(p)?;
        let mut bits = vec![false; self.width];
        for (i, &v) in p.0.iter().enumerate() {
            bits[self.offsets[i] + v] = true;
        }
        Ok(EncodedPoint { bits })
    }

    pub fn decode(&self, e: &EncodedPoint) -> Result<Point, DomainError> {
        if e.bits.len() != self.width {
            return Err(DomainError::Parse(format!(
                "encoding has width {} but the domain has width {}",
                e.bits.len(),
                self.width
            )));
        }
        self.groups()
            .into_iter()
            .enumerate()
            .map(|(i, g)| {
                let set: Vec<usize> = g.clone().filter(|&k| e.bits[k]).collect();
                match set.as_slice() {
                    [k] => Ok(k - g.start),
                    _ => Err(DomainError::MalformedEncoding {
                        var: i,
                        set: set.len(),
                    }),
                }
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Point)
    }

    /// True iff the point satisfies every declared constraint. Points of the
    /// wrong shape are never feasible.
    pub fn is_feasible(&self, p: &Point) -> bool {
        self.validate(p).is_ok() && self.constraints.iter().all(|c| c.satisfied_by(p))
    }

    /// Uniform draw over the product space, ignoring constraints.
    pub fn sample_unconstrained<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        Point(self.alphabets.iter().map(|a| rng.random_range(0..a.len())).collect())
    }

    /// Iterates the full product space in lexicographic order.
    pub fn iter_points(&self) -> PointIter<'_> {
        PointIter {
            domain: self,
            next: Some(vec![0; self.n()]),
        }
    }

    pub fn feasible_points(&self) -> impl Iterator<Item = Point> + '_ {
        self.iter_points().filter(|p| self.is_feasible(p))
    }

    pub fn from_json_str(s: &str) -> Result<Self, DomainError> {
        let file: DomainFile = serde_json::from_str(s).map_err(|e| DomainError::Parse(e.to_string()))?;
        file.into_domain()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DomainError> {
        Self::from_json_str(&fs::read_to_string(path)?)
    }

    pub fn to_json_value(&self) -> Value {
        serde_json::json!({
            "n": self.n(),
            "alphabets": self.alphabets,
            "constraints": constraints_to_json(&self.constraints),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DomainError> {
        let text = serde_json::to_string_pretty(&self.to_json_value()).map_err(|e| DomainError::Parse(e.to_string()))?;
        fs::write(path, text)?;
        Ok(())
    }
}

pub struct PointIter<'a> {
    domain: &'a CategoricalDomain,
    next: Option<Vec<usize>>,
}

impl Iterator for PointIter<'_> {
    type Item = Point;

    fn next(&mut self) -> Option<Point> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        for i in (0..succ.len()).rev() {
            succ[i] += 1;
            if succ[i] < self.domain.alphabet_size(i) {
                self.next = Some(succ);
                break;
            }
            succ[i] = 0;
        }
        Some(Point(current))
    }
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Deserialize)]
struct DomainFile {
    n: usize,
    alphabets: Vec<Vec<Value>>,
    #[serde(default)]
    constraints: Vec<Value>,
}

impl DomainFile {
    fn into_domain(self) -> Result<CategoricalDomain, DomainError> {
        if self.alphabets.len() != self.n {
            return Err(DomainError::Parse(format!(
                "\"n\" is {} but {} alphabets were given",
                self.n,
                self.alphabets.len()
            )));
        }
        let alphabets = self
            .alphabets
            .iter()
            .map(|a| a.iter().map(scalar_to_string).collect::<Result<Vec<_>, _>>())
            .collect::<Result<Vec<_>, _>>()?;
        let domain = CategoricalDomain::new(alphabets, Vec::new())?;
        let constraints = constraints_from_json(&self.constraints, domain.alphabets())?;
        domain.with_constraints(constraints)
    }
}

fn scalar_to_string(v: &Value) -> Result<String, DomainError> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        Value::Bool(b) => Ok(b.to_string()),
        other => Err(DomainError::Parse(format!("alphabet symbol must be a scalar, got {other}"))),
    }
}

/// Parse a coefficient from a JSON number or a `"p/q"` string.
pub fn parse_coef(v: &Value) -> Result<Coef, DomainError> {
    match v {
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                Ok(Coef::from_integer(i))
            } else {
                let f = n.as_f64().unwrap_or(f64::NAN);
                Coef::approximate_float(f).ok_or_else(|| DomainError::Parse(format!("coefficient {f} is not representable")))
            }
        }
        Value::String(s) => s
            .trim()
            .parse::<Coef>()
            .map_err(|_| DomainError::Parse(format!("bad rational coefficient {s:?}"))),
        other => Err(DomainError::Parse(format!("coefficient must be a number, got {other}"))),
    }
}

pub fn coef_to_json(c: Coef) -> Value {
    if c.is_integer() {
        Value::from(*c.numer())
    } else {
        Value::from(c.to_string())
    }
}

pub fn coef_to_f64(c: Coef) -> f64 {
    c.to_f64().unwrap_or(f64::NAN)
}

/// Parse the shared constraint schema: `{"terms": [[i, j, coef]], "sense", "rhs"}`.
/// `j` is either the zero-based alphabet position or a symbol string.
pub fn constraints_from_json(rows: &[Value], alphabets: &[Vec<String>]) -> Result<Vec<LinearConstraint>, DomainError> {
    rows.iter()
        .enumerate()
        .map(|(r, row)| {
            let ctx = |msg: String| DomainError::Parse(format!("constraint {r}: {msg}"));
            let terms = row
                .get("terms")
                .and_then(Value::as_array)
                .ok_or_else(|| ctx("missing \"terms\" array".into()))?;
            let terms = terms
                .iter()
                .map(|t| {
                    let t = t.as_array().filter(|t| t.len() == 3).ok_or_else(|| ctx("term must be [i, j, coef]".into()))?;
                    let var = t[0].as_u64().ok_or_else(|| ctx("term variable must be a nonnegative integer".into()))? as usize;
                    let symbol = match &t[1] {
                        Value::Number(n) => n.as_u64().ok_or_else(|| ctx("term symbol index must be nonnegative".into()))? as usize,
                        Value::String(s) => alphabets
                            .get(var)
                            .and_then(|a| a.iter().position(|x| x == s))
                            .ok_or_else(|| ctx(format!("unknown symbol {s:?} for variable {var}")))?,
                        other => return Err(ctx(format!("bad term symbol {other}"))),
                    };
                    Ok((OneHot::new(var, symbol), parse_coef(&t[2]).map_err(|e| ctx(e.to_string()))?))
                })
                .collect::<Result<Vec<_>, DomainError>>()?;
            let sense = row
                .get("sense")
                .and_then(Value::as_str)
                .and_then(Sense::parse)
                .ok_or_else(|| ctx("\"sense\" must be one of <=, =, >=".into()))?;
            let rhs = parse_coef(row.get("rhs").ok_or_else(|| ctx("missing \"rhs\"".into()))?)?;
            LinearConstraint::new(terms, sense, rhs)
        })
        .collect()
}

pub fn constraints_to_json(constraints: &[LinearConstraint]) -> Value {
    Value::Array(
        constraints
            .iter()
            .map(|c| {
                serde_json::json!({
                    "terms": c.terms().iter().map(|(h, k)| serde_json::json!([h.var, h.symbol, coef_to_json(*k)])).collect::<Vec<_>>(),
                    "sense": c.sense().symbol(),
                    "rhs": coef_to_json(c.rhs()),
                })
            })
            .collect(),
    )
}
