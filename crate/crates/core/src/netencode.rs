//! Compiles a trained ReLU network into MILP rows with per-neuron big-M
//! constants from interval arithmetic or LP relaxations.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{CategoricalDomain, Sense};
use crate::milp::{add_domain, MilpBackend, MilpError, MilpModel, NetworkFragment, NeuronMode, NeuronVars, VarId};
use crate::surrogate::Mlp;

/// Bounds at or below this are treated as zero and the neuron is fixed.
pub const FIX_TOL: f64 = 1e-9;
/// Added to nonnegative big-M values before rows are emitted.
pub const BOUND_PAD: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum NetEncodeError {
    #[error("input box has {got} entries, network expects {expected}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("non-finite input bound at position {0}")]
    InfiniteInput(usize),
    #[error("neuron ({layer}, {neuron}): {reason}")]
    InconsistentBounds { layer: usize, neuron: usize, reason: String },
    #[error("bounds cover {got} layers, network has {expected} hidden layers")]
    BoundsShape { expected: usize, got: usize },
    #[error(transparent)]
    Milp(#[from] MilpError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeuronStatus {
    Free,
    AlwaysOff,
    AlwaysOn,
}

impl NeuronStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            NeuronStatus::Free => "free",
            NeuronStatus::AlwaysOff => "always_off",
            NeuronStatus::AlwaysOn => "always_on",
        }
    }
}

/// `m0` bounds the pre-activation from above, `m1` bounds its negation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeuronBounds {
    pub m0: f64,
    pub m1: f64,
    pub status: NeuronStatus,
}

impl NeuronBounds {
    /// Classify from raw bounds; an always-nonpositive neuron is fixed off
    /// before an always-nonnegative one is fixed on.
    pub fn classify(m0: f64, m1: f64) -> Self {
        let status = if m0 <= FIX_TOL {
            NeuronStatus::AlwaysOff
        } else if m1 <= FIX_TOL {
            NeuronStatus::AlwaysOn
        } else {
            NeuronStatus::Free
        };
        Self { m0, m1, status }
    }
}

pub type LayerBounds = Vec<Vec<NeuronBounds>>;

/// Bounds plus a flag set when LP bounds fell back to interval arithmetic.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundsReport {
    pub bounds: LayerBounds,
    pub fallback: bool,
}

/// `[lo, hi]` range of `b + w.x` over a box.
fn affine_range(row: &[f64], bias: f64, input_box: &[(f64, f64)]) -> (f64, f64) {
    let mut lo = bias;
    let mut hi = bias;
    for (&w, &(l, u)) in row.iter().zip(input_box) {
        let (a, b) = (w * l, w * u);
        lo += a.min(b);
        hi += a.max(b);
    }
    (lo, hi)
}

pub fn interval_bounds(net: &Mlp, input_box: &[(f64, f64)]) -> Result<LayerBounds, NetEncodeError> {
    if input_box.len() != net.input_width() {
        return Err(NetEncodeError::WidthMismatch {
            expected: net.input_width(),
            got: input_box.len(),
        });
    }
    if let Some(i) = input_box.iter().position(|(l, u)| !l.is_finite() || !u.is_finite()) {
        return Err(NetEncodeError::InfiniteInput(i));
    }
    let mut current = input_box.to_vec();
    let mut all = Vec::with_capacity(net.hidden_layers().len());
    for layer in net.hidden_layers() {
        let mut bounds = Vec::with_capacity(layer.outputs());
        let mut next = Vec::with_capacity(layer.outputs());
        for o in 0..layer.outputs() {
            let (lo, hi) = affine_range(layer.row(o), layer.bias()[o], &current);
            bounds.push(NeuronBounds::classify(hi, -lo));
            next.push((0.0, hi.max(0.0)));
        }
        all.push(bounds);
        current = next;
    }
    Ok(all)
}

/// Unit box over every one-hot bit of the domain.
pub fn domain_box(domain: &CategoricalDomain) -> Vec<(f64, f64)> {
    vec![(0.0, 1.0); domain.width()]
}

/// Tighter bounds from LP relaxations of the one-hot polytope, the domain
/// constraints and the relaxed encodings of earlier layers. The result never
/// exceeds the interval bounds.
pub fn lp_bounds(backend: &dyn MilpBackend, net: &Mlp, domain: &CategoricalDomain) -> Result<BoundsReport, NetEncodeError> {
    let interval = interval_bounds(net, &domain_box(domain))?;
    let mut model = MilpModel::new();
    let vars = add_domain(&mut model, domain);
    let mut inputs: Vec<VarId> = vars.bits.clone();
    let mut out = Vec::with_capacity(interval.len());
    for (l, layer) in net.hidden_layers().iter().enumerate() {
        let Some(mut session) = backend.lp_session(&model) else {
            log::warn!("backend {} has no LP relaxation; using interval bounds", backend.name());
            return Ok(BoundsReport {
                bounds: interval,
                fallback: true,
            });
        };
        let mut bounds = Vec::with_capacity(layer.outputs());
        for o in 0..layer.outputs() {
            let terms: Vec<(VarId, f64)> = inputs.iter().copied().zip(layer.row(o).iter().copied()).collect();
            let neg: Vec<(VarId, f64)> = terms.iter().map(|&(v, w)| (v, -w)).collect();
            let b = layer.bias()[o];
            let solved = session.maximize(&terms, b).and_then(|m0| Ok((m0, session.maximize(&neg, -b)?)));
            let (m0, m1) = match solved {
                Ok(v) => v,
                Err(MilpError::InfeasibleDomain) => return Err(MilpError::InfeasibleDomain.into()),
                Err(e) => {
                    log::warn!("LP bound failed ({e}); using interval bounds");
                    return Ok(BoundsReport {
                        bounds: interval,
                        fallback: true,
                    });
                }
            };
            let iv = interval[l][o];
            bounds.push(NeuronBounds::classify(m0.min(iv.m0), m1.min(iv.m1)));
        }
        let mut next = Vec::with_capacity(layer.outputs());
        for (o, nb) in bounds.iter().enumerate() {
            let pre: Vec<(VarId, f64)> = inputs.iter().copied().zip(layer.row(o).iter().copied()).collect();
            next.push(add_relu_rows(&mut model, &pre, layer.bias()[o], nb, l, o, true).y);
        }
        inputs = next;
        out.push(bounds);
    }
    Ok(BoundsReport {
        bounds: out,
        fallback: false,
    })
}

fn pad(m: f64) -> f64 {
    if m >= 0.0 {
        m + BOUND_PAD
    } else {
        m
    }
}

/// Emit the rows for one neuron with pre-activation `pre . x + bias`.
fn add_relu_rows(
    model: &mut MilpModel,
    pre: &[(VarId, f64)],
    bias: f64,
    nb: &NeuronBounds,
    layer: usize,
    neuron: usize,
    relaxed: bool,
) -> NeuronVars {
    // Rows are written as y - w.x (sense) rhs.
    let with_y = |y: VarId, extra: Option<(VarId, f64)>| -> Vec<(VarId, f64)> {
        let mut t = Vec::with_capacity(pre.len() + 2);
        t.push((y, 1.0));
        t.extend(pre.iter().map(|&(v, w)| (v, -w)));
        t.extend(extra);
        t
    };
    match nb.status {
        NeuronStatus::AlwaysOff => {
            let y = model.add_continuous(format!("y_{layer}_{neuron}"), 0.0, f64::INFINITY);
            model.add_row(vec![(y, 1.0)], Sense::Eq, 0.0);
            NeuronVars {
                y,
                alpha: None,
                mode: NeuronMode::Off,
            }
        }
        NeuronStatus::AlwaysOn => {
            let y = model.add_continuous(format!("y_{layer}_{neuron}"), f64::NEG_INFINITY, f64::INFINITY);
            model.add_row(with_y(y, None), Sense::Eq, bias);
            NeuronVars {
                y,
                alpha: None,
                mode: NeuronMode::On,
            }
        }
        NeuronStatus::Free => {
            let (m0, m1) = (pad(nb.m0), pad(nb.m1));
            let y = model.add_continuous(format!("y_{layer}_{neuron}"), 0.0, f64::INFINITY);
            let name = format!("a_{layer}_{neuron}");
            let a = if relaxed {
                model.add_continuous(name, 0.0, 1.0)
            } else {
                model.add_binary(name)
            };
            model.add_row(vec![(y, 1.0), (a, -m0)], Sense::Le, 0.0);
            model.add_row(with_y(y, None), Sense::Ge, bias);
            model.add_row(with_y(y, Some((a, m1))), Sense::Le, bias + m1);
            NeuronVars {
                y,
                alpha: Some(a),
                mode: NeuronMode::Free,
            }
        }
    }
}

/// Add the network over input variables `inputs` to `model` and attach the
/// fragment. Returns the id of the output variable.
pub fn encode_network(
    model: &mut MilpModel,
    net: &Mlp,
    bounds: &LayerBounds,
    inputs: &[VarId],
) -> Result<VarId, NetEncodeError> {
    if inputs.len() != net.input_width() {
        return Err(NetEncodeError::WidthMismatch {
            expected: net.input_width(),
            got: inputs.len(),
        });
    }
    let hidden = net.hidden_layers();
    if bounds.len() != hidden.len() {
        return Err(NetEncodeError::BoundsShape {
            expected: hidden.len(),
            got: bounds.len(),
        });
    }
    for (l, (layer, lb)) in hidden.iter().zip(bounds).enumerate() {
        if lb.len() != layer.outputs() {
            return Err(NetEncodeError::InconsistentBounds {
                layer: l,
                neuron: lb.len(),
                reason: format!("{} bounds for {} neurons", lb.len(), layer.outputs()),
            });
        }
        for (o, nb) in lb.iter().enumerate() {
            let bad = match nb.status {
                NeuronStatus::Free if nb.m0 < 0.0 || nb.m1 < 0.0 => Some("negative bound with status free"),
                NeuronStatus::AlwaysOff if nb.m0 > FIX_TOL => Some("always_off with positive M0"),
                NeuronStatus::AlwaysOn if nb.m1 > FIX_TOL => Some("always_on with positive M1"),
                _ if nb.m0.is_nan() || nb.m1.is_nan() || nb.m0.is_infinite() || nb.m1.is_infinite() => Some("non-finite bound"),
                _ => None,
            };
            if let Some(reason) = bad {
                return Err(NetEncodeError::InconsistentBounds {
                    layer: l,
                    neuron: o,
                    reason: reason.into(),
                });
            }
        }
    }
    let first_row = model.rows().len();
    let mut current = inputs.to_vec();
    let mut neurons = Vec::with_capacity(hidden.len());
    for (l, (layer, lb)) in hidden.iter().zip(bounds).enumerate() {
        let mut vars = Vec::with_capacity(layer.outputs());
        for (o, nb) in lb.iter().enumerate() {
            let pre: Vec<(VarId, f64)> = current.iter().copied().zip(layer.row(o).iter().copied()).collect();
            vars.push(add_relu_rows(model, &pre, layer.bias()[o], nb, l, o, false));
        }
        current = vars.iter().map(|v| v.y).collect();
        neurons.push(vars);
    }
    let out_layer = net.output_layer();
    let output = model.add_continuous("f_hat", f64::NEG_INFINITY, f64::INFINITY);
    let mut terms = vec![(output, 1.0)];
    terms.extend(current.iter().copied().zip(out_layer.row(0).iter().map(|w| -w)));
    model.add_row(terms, Sense::Eq, out_layer.bias()[0]);
    let rows = first_row..model.rows().len();
    model.attach_network(NetworkFragment {
        net: net.clone(),
        inputs: inputs.to_vec(),
        neurons,
        output,
        rows,
    });
    Ok(output)
}

/// Debug dump: `layer,neuron,M0,M1,status`.
pub fn bounds_csv(bounds: &LayerBounds) -> String {
    let mut s = String::from("layer,neuron,M0,M1,status\n");
    for (l, lb) in bounds.iter().enumerate() {
        for (o, nb) in lb.iter().enumerate() {
            let _ = writeln!(s, "{l},{o},{},{},{}", nb.m0, nb.m1, nb.status.as_str());
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::LinearConstraint;
    use crate::milp::{ExhaustiveBackend, HighsBackend, SolveOptions, SolveStatus};
    use crate::surrogate::DenseLayer;

    fn one_neuron(w: f64, b: f64) -> Mlp {
        Mlp::new(vec![
            DenseLayer::new(vec![vec![w]], vec![b]).unwrap(),
            DenseLayer::new(vec![vec![1.0]], vec![0.0]).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn interval_examples() {
        let b = interval_bounds(&one_neuron(2.0, -1.0), &[(0.0, 1.0)]).unwrap()[0][0];
        assert_eq!((b.m0, b.m1, b.status), (1.0, 1.0, NeuronStatus::Free));
        let b = interval_bounds(&one_neuron(1.0, 0.5), &[(0.0, 1.0)]).unwrap()[0][0];
        assert_eq!(b.m1, -0.5);
        assert_eq!(b.status, NeuronStatus::AlwaysOn);
        let b = interval_bounds(&one_neuron(-1.0, -0.1), &[(0.0, 1.0)]).unwrap()[0][0];
        assert!((b.m0 + 0.1).abs() < 1e-15);
        assert_eq!(b.status, NeuronStatus::AlwaysOff);
    }

    #[test]
    fn interval_rejects_bad_box() {
        let net = one_neuron(1.0, 0.0);
        assert!(matches!(interval_bounds(&net, &[]), Err(NetEncodeError::WidthMismatch { .. })));
        assert!(matches!(
            interval_bounds(&net, &[(0.0, f64::INFINITY)]),
            Err(NetEncodeError::InfiniteInput(0))
        ));
    }

    fn simplex_net() -> Mlp {
        Mlp::new(vec![
            DenseLayer::new(vec![vec![1.0, 2.0, 3.0]], vec![0.0]).unwrap(),
            DenseLayer::new(vec![vec![1.0]], vec![0.0]).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn lp_bound_on_simplex_picks_best_vertex() {
        let d = CategoricalDomain::uniform(1, 3).unwrap();
        let r = lp_bounds(&HighsBackend::default(), &simplex_net(), &d).unwrap();
        assert!(!r.fallback);
        assert!((r.bounds[0][0].m0 - 3.0).abs() < 1e-9);
        // Interval arithmetic ignores the one-hot row.
        assert_eq!(interval_bounds(&simplex_net(), &domain_box(&d)).unwrap()[0][0].m0, 6.0);
    }

    #[test]
    fn lp_bound_respects_domain_rows() {
        let c = LinearConstraint::from_ints(&[(0, 2, 1)], Sense::Eq, 0).unwrap();
        let d = CategoricalDomain::uniform(1, 3).unwrap().with_constraints(vec![c]).unwrap();
        let r = lp_bounds(&HighsBackend::default(), &simplex_net(), &d).unwrap();
        assert!((r.bounds[0][0].m0 - 2.0).abs() < 1e-9);
    }

    #[test]
    fn lp_bounds_fall_back_without_lp_solver() {
        let d = CategoricalDomain::uniform(1, 3).unwrap();
        let r = lp_bounds(&ExhaustiveBackend::default(), &simplex_net(), &d).unwrap();
        assert!(r.fallback);
        assert_eq!(r.bounds, interval_bounds(&simplex_net(), &domain_box(&d)).unwrap());
    }

    #[test]
    fn single_relu_milp() {
        let net = one_neuron(2.0, -1.0);
        let mut m = MilpModel::new();
        let z = m.add_binary("z");
        let bounds = interval_bounds(&net, &[(0.0, 1.0)]).unwrap();
        let out = encode_network(&mut m, &net, &bounds, &[z]).unwrap();
        m.set_objective(vec![(out, 1.0)], 0.0);
        for backend in [&HighsBackend::default() as &dyn MilpBackend, &ExhaustiveBackend::default()] {
            let r = backend.solve(&m, &SolveOptions::default());
            assert_eq!(r.status, SolveStatus::Optimal);
            assert!((r.objective_value - 1.0).abs() < 1e-6);
            assert!(r.assignment.unwrap()[z] > 0.5);
        }
    }

    #[test]
    fn always_on_neuron_is_one_equality_row() {
        let net = one_neuron(1.0, 0.5);
        let mut m = MilpModel::new();
        let z = m.add_binary("z");
        let bounds = interval_bounds(&net, &[(0.0, 1.0)]).unwrap();
        encode_network(&mut m, &net, &bounds, &[z]).unwrap();
        // One row for the neuron plus one for the output.
        assert_eq!(m.rows().len(), 2);
        assert_eq!(m.rows()[0].sense, Sense::Eq);
        assert_eq!(m.num_binaries(), 1);
        let f = m.network().unwrap();
        assert_eq!(f.neurons[0][0].alpha, None);
        assert_eq!(f.neurons[0][0].mode, NeuronMode::On);
    }

    #[test]
    fn free_neuron_with_negative_bound_rejected() {
        let net = one_neuron(1.0, 0.0);
        let mut m = MilpModel::new();
        let z = m.add_binary("z");
        let bad = vec![vec![NeuronBounds {
            m0: -1.0,
            m1: 1.0,
            status: NeuronStatus::Free,
        }]];
        assert!(matches!(
            encode_network(&mut m, &net, &bad, &[z]),
            Err(NetEncodeError::InconsistentBounds { .. })
        ));
    }

    #[test]
    fn zero_bounds_fix_the_neuron() {
        assert_eq!(NeuronBounds::classify(5e-10, 1.0).status, NeuronStatus::AlwaysOff);
        assert_eq!(NeuronBounds::classify(1.0, 0.0).status, NeuronStatus::AlwaysOn);
        assert_eq!(NeuronBounds::classify(0.0, 0.0).status, NeuronStatus::AlwaysOff);
        assert_eq!(NeuronBounds::classify(1e-3, 1e-3).status, NeuronStatus::Free);
    }

    #[test]
    fn csv_dump() {
        let b = interval_bounds(&one_neuron(2.0, -1.0), &[(0.0, 1.0)]).unwrap();
        assert_eq!(bounds_csv(&b), "layer,neuron,M0,M1,status\n0,0,1,1,free\n");
    }
}
