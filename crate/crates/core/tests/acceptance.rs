//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;
use std::time::Instant;

use rand::seq::index;
use rand::Rng;
use serde_json::json;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use nnmilp::domain::{CategoricalDomain, LinearConstraint, Point, Sense};
use nnmilp::evo::{conevo_mutate, uniform_subset_equality_sample, SubsetPairs};
use nnmilp::harness::{build_problem, normalized_scores, primal_gap, run_trial, ExperimentConfig, Problem};
use nnmilp::mbo::{add_no_good, build_acquisition, BoundMode, History, RecordStatus};
use nnmilp::milp::{add_domain, HighsBackend, MilpBackend, MilpModel, SolveOptions, SolveStatus, VarKind};
use nnmilp::nas::{build_nas_domain, is_valid_cell, random_cell, Cell, CellSpec};
use nnmilp::netencode::{interval_bounds, domain_box, lp_bounds, NeuronStatus};
use nnmilp::objectives::{make_random_mlp, MlpArch, NUCLEOTIDES};
use nnmilp::rng::{derive_seed, seeded};
use nnmilp::surrogate::{loss_gradient, mse, Dataset, DenseLayer, Mlp, RewardScaler, Surrogate, TrainConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn alphabet(s: usize) -> Vec<String> {
    (0..s).map(|k| format!("s{k}")).collect()
}

/// Small random domain, optionally with one random linear row, having at
/// least `min_points` feasible points.
fn random_domain(rng: &mut impl Rng, min_points: usize) -> CategoricalDomain {
    loop {
        let n = rng.random_range(2..=6);
        let sizes: Vec<usize> = (0..n).map(|_| rng.random_range(2..=4)).collect();
        let mut constraints = Vec::new();
        if rng.random_bool(0.5) {
            let k = rng.random_range(2..=n.min(3));
            let vars = index::sample(rng, n, k);
            let terms: Vec<(usize, usize, i64)> = vars
                .iter()
                .map(|v| (v, rng.random_range(0..sizes[v]), [-2, -1, 1, 2][rng.random_range(0..4)]))
                .collect();
            let sense = [Sense::Le, Sense::Ge][rng.random_range(0..2)];
            constraints.push(LinearConstraint::from_ints(&terms, sense, rng.random_range(-1..=1)).unwrap());
        }
        let d = CategoricalDomain::new(sizes.iter().map(|&s| alphabet(s)).collect(), constraints).unwrap();
        if d.feasible_points().take(min_points).count() >= min_points {
            return d;
        }
    }
}

fn surrogate_of(net: Mlp) -> Surrogate {
    Surrogate {
        net,
        scaler: RewardScaler::identity(),
    }
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let highs = HighsBackend::default();
    let mut bad = Vec::new();
    let mut worst = 0.0f64;
    for i in 0..200u64 {
        let mut rng = seeded(derive_seed(1, i));
        let domain = random_domain(&mut rng, 2);
        let feasible: Vec<Point> = domain.feasible_points().collect();
        assert!(feasible.len() <= 4096);
        let mut data = Dataset::new(Vec::new());
        for _ in 0..10 {
            data.push(feasible[rng.random_range(0..feasible.len())].clone(), rng.random_range(-1.0..1.0));
        }
        let hidden = [vec![8], vec![16], vec![8, 8]][rng.random_range(0..3)].clone();
        let cfg = TrainConfig {
            hidden_sizes: hidden,
            epochs: 40,
            seed: i,
            ..TrainConfig::default()
        };
        let s = Surrogate::train(&data, &cfg, &domain).unwrap();
        let r = rng.random_range(0..=feasible.len().min(30) - 1);
        let visited: HashSet<Point> = index::sample(&mut rng, feasible.len(), r).iter().map(|k| feasible[k].clone()).collect();
        let enc: Vec<_> = visited.iter().map(|p| domain.encode(p).unwrap()).collect();
        let mode = if i % 2 == 0 { BoundMode::Lp } else { BoundMode::Interval };
        let acq = build_acquisition(&highs, &s, &domain, &enc, mode).unwrap();
        let res = highs.solve(&acq.model, &SolveOptions::default());
        let brute = feasible
            .iter()
            .filter(|p| !visited.contains(*p))
            .map(|p| s.scaled(&domain, p))
            .fold(f64::NEG_INFINITY, f64::max);
        let ok = res.status == SolveStatus::Optimal
            && res.assignment.as_ref().is_some_and(|x| {
                let p = acq.vars.decode(&domain, x).unwrap();
                domain.is_feasible(&p) && !visited.contains(&p) && (s.scaled(&domain, &p) - brute).abs() <= 1e-6
            });
        let diff = (res.objective_value - brute).abs();
        worst = worst.max(if diff.is_finite() { diff } else { f64::INFINITY });
        if !ok || diff > 1e-6 {
            bad.push(i);
        }
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(
        bad.is_empty() && secs < 300.0,
        format!("200 instances, mismatches {bad:?}, max |milp - brute| {worst:.2e}, {secs:.1} s"),
    )
}

/// Every binary assignment of a bits-only model, checked against its rows.
fn enumerate_feasible(model: &MilpModel) -> Vec<Vec<bool>> {
    let n = model.vars().len();
    assert!(model.vars().iter().all(|v| v.kind == VarKind::Binary));
    (0u64..1 << n)
        .map(|m| (0..n).map(|b| m >> b & 1 == 1).collect::<Vec<bool>>())
        .filter(|bits| {
            let x: Vec<f64> = bits.iter().map(|&b| f64::from(u8::from(b))).collect();
            model.max_violation(&x) <= 1e-9
        })
        .collect()
}

fn desk_config(problem: serde_json::Value, algorithm: &str, budget: usize, epochs: usize) -> ExperimentConfig {
    serde_json::from_value(json!({
        "problem": problem,
        "algorithm": algorithm,
        "trials": 1,
        "budget": budget,
        "out_dir": std::env::temp_dir().join("nnmilp-acceptance"),
        "mbo": {"init_count": 50, "train": {"epochs": epochs}}
    }))
    .unwrap()
}

fn repeats(h: &History) -> usize {
    h.len() - h.records.iter().map(|r| &r.point).collect::<HashSet<_>>().len()
}

fn criterion_2(ordering: &OrderingRuns) -> Outcome {
    let domain = CategoricalDomain::uniform(3, 3).unwrap();
    let all: Vec<Point> = domain.feasible_points().collect();
    let mut rng = seeded(2);
    let excluded: Vec<Point> = index::sample(&mut rng, all.len(), 5).iter().map(|k| all[k].clone()).collect();
    let mut model = MilpModel::new();
    let vars = add_domain(&mut model, &domain);
    for p in &excluded {
        add_no_good(&mut model, &vars.bits, &domain.encode(p).unwrap().bits, true);
    }
    let feasible = enumerate_feasible(&model);
    let decoded: HashSet<Point> = feasible
        .iter()
        .map(|bits| {
            let x: Vec<f64> = bits.iter().map(|&b| f64::from(u8::from(b))).collect();
            vars.decode(&domain, &x).unwrap()
        })
        .collect();
    let exact = feasible.len() == 22 && decoded.len() == 22 && excluded.iter().all(|p| !decoded.contains(p));

    // Enumeration solves the same acquisition model as HiGHS, and stays fast
    // when the no-goods cover nearly the whole domain.
    let mut runs = Vec::new();
    for (name, problem) in [
        ("ising n=10", json!({"family": "ising", "n": 10, "seed": 2})),
        ("fcc n=5 |A|=4", json!({"family": "random_mlp", "arch": "fcc", "n": 5, "alphabet_size": 4, "seed": 2})),
    ] {
        let mut cfg = desk_config(problem, "nn_milp", 1000, 50);
        cfg.backend = "exhaustive".into();
        let p = build_problem(&cfg.problem).unwrap();
        let h = run_trial(&cfg, &p, 0, 2).unwrap().history.unwrap();
        runs.push((name, h.len(), repeats(&h)));
    }
    let no_repeats = runs.iter().all(|&(_, len, rep)| len == 1000 && rep == 0);
    let highs_runs = &ordering.histories["nn_milp"];
    let highs_repeats: usize = highs_runs.iter().map(repeats).sum();
    outcome(
        exact && no_repeats && highs_repeats == 0,
        format!(
            "27-point domain minus 5: {} feasible assignments; 1000-step runs (name, length, repeats): {runs:?}; {} HiGHS runs of 300 steps: {highs_repeats} repeats",
            feasible.len(),
            highs_runs.len()
        ),
    )
}

fn fixture_network() -> Mlp {
    // Over 3 variables with 3 symbols: a never-active neuron, one active
    // under both bound methods, and one only the LP proves active.
    let ones = vec![1.0; 9];
    let hidden = DenseLayer::new(vec![ones.clone(), ones.clone(), ones], vec![-10.0, 1.0, -2.0]).unwrap();
    let out = DenseLayer::new(vec![vec![1.0, -0.5, 0.7]], vec![0.1]).unwrap();
    Mlp::new(vec![hidden, out]).unwrap()
}

fn criterion_3() -> Outcome {
    let highs = HighsBackend::default();
    let mut violations = 0;
    let mut mismatches = Vec::new();
    let mut tighter_instances = 0;
    let mut fixed = 0;
    for i in 0..20u64 {
        let mut rng = seeded(derive_seed(3, i));
        let (domain, net) = if i == 0 {
            (CategoricalDomain::uniform(3, 3).unwrap(), fixture_network())
        } else {
            let d = random_domain(&mut rng, 2);
            let hidden = [vec![8, 8], vec![6, 6, 4], vec![12]][rng.random_range(0..3)].clone();
            let mut net = Mlp::glorot(d.width(), &hidden, &mut rng);
            for l in net.layers_mut() {
                for b in l.bias_mut() {
                    *b = rng.random_range(-0.5..0.5);
                }
            }
            (d, net)
        };
        let int = interval_bounds(&net, &domain_box(&domain)).unwrap();
        let lp = lp_bounds(&highs, &net, &domain).unwrap();
        assert!(!lp.fallback);
        let mut strictly = false;
        for (li, ll) in int.iter().zip(&lp.bounds) {
            for (a, b) in li.iter().zip(ll) {
                if b.m0 > a.m0 || b.m1 > a.m1 {
                    violations += 1;
                }
                if b.m0 < a.m0 - 1e-6 || b.m1 < a.m1 - 1e-6 {
                    strictly = true;
                }
                if b.status != NeuronStatus::Free {
                    fixed += 1;
                }
            }
        }
        tighter_instances += usize::from(strictly);
        let s = surrogate_of(net);
        let opt = |mode| {
            let acq = build_acquisition(&highs, &s, &domain, &[], mode).unwrap();
            let r = highs.solve(&acq.model, &SolveOptions::default());
            assert_eq!(r.status, SolveStatus::Optimal);
            r.objective_value
        };
        let (a, b) = (opt(BoundMode::Interval), opt(BoundMode::Lp));
        let brute = domain.feasible_points().map(|p| s.scaled(&domain, &p)).fold(f64::NEG_INFINITY, f64::max);
        if (a - b).abs() > 1e-6 || (a - brute).abs() > 1e-6 {
            mismatches.push(i);
        }
    }
    outcome(
        violations == 0 && mismatches.is_empty() && tighter_instances > 0 && fixed > 0,
        format!(
            "20 instances: {violations} lp > interval entries, optimum mismatches {mismatches:?}, {tighter_instances} strictly tighter, {fixed} fixed neurons"
        ),
    )
}

fn criterion_4() -> Outcome {
    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut nets = 0;
    let mut attempt = 0u64;
    while nets < 50 {
        attempt += 1;
        let mut rng = seeded(derive_seed(4, attempt));
        let width = rng.random_range(2..=6);
        let hidden: Vec<usize> = (0..rng.random_range(1..=2)).map(|_| rng.random_range(2..=6)).collect();
        let mut net = Mlp::glorot(width, &hidden, &mut rng);
        for l in net.layers_mut() {
            for b in l.bias_mut() {
                *b = rng.random_range(-0.3..0.3);
            }
        }
        let batch: Vec<(Vec<f64>, f64)> = (0..5)
            .map(|_| ((0..width).map(|_| rng.random_range(-1.0..1.0)).collect(), rng.random_range(-1.0..1.0)))
            .collect();
        let near_kink = batch
            .iter()
            .any(|(x, _)| net.pre_activations(x).iter().take(hidden.len()).flatten().any(|z| z.abs() < 1e-3));
        if near_kink {
            continue;
        }
        nets += 1;
        let (_, g) = loss_gradient(&net, &batch).unwrap();
        let g = g.flatten();
        let theta = net.params();
        let h = 1e-6;
        for k in 0..theta.len() {
            let mut p = theta.clone();
            p[k] = theta[k] + h;
            net.set_params(&p);
            let up = mse(&net, &batch);
            p[k] = theta[k] - h;
            net.set_params(&p);
            let down = mse(&net, &batch);
            let fd = (up - down) / (2.0 * h);
            let rel = (g[k] - fd).abs() / g[k].abs().max(fd.abs()).max(1e-6);
            worst = worst.max(rel);
            checked += 1;
        }
        net.set_params(&theta);
    }
    outcome(worst <= 1e-4, format!("50 networks, {checked} parameters, max relative error {worst:.2e}"))
}

/// Independent check of a subset-equality point: binary, right length and
/// equal counts within every pair.
fn subset_feasible(p: &Point, n: usize, pairs: &[(Vec<usize>, Vec<usize>)]) -> bool {
    let x = p.values();
    x.len() == n
        && x.iter().all(|&v| v <= 1)
        && pairs.iter().all(|(a, b)| a.iter().map(|&i| x[i]).sum::<usize>() == b.iter().map(|&i| x[i]).sum::<usize>())
}

const ORDERING: [&str; 4] = ["nn_milp", "nn_conevo", "conevo", "rejsample"];

struct OrderingRuns {
    histories: BTreeMap<&'static str, Vec<History>>,
    pairs: Vec<(Vec<usize>, Vec<usize>)>,
    seconds: f64,
}

/// Ising(n=40, k=4), 300 steps, 10 trials per algorithm.
fn ordering_runs() -> OrderingRuns {
    let t = Instant::now();
    let mut histories = BTreeMap::new();
    let mut pairs = Vec::new();
    for alg in ORDERING {
        let mut cfg = desk_config(json!({"family": "ising", "n": 40, "seed": 0, "subset_pairs": 4}), alg, 300, 100);
        cfg.trials = 10;
        cfg.seed = 10;
        let problem = build_problem(&cfg.problem).unwrap();
        if let Problem::Black { pairs: Some(p), .. } = &problem {
            pairs = p.pairs().to_vec();
        }
        let hs: Vec<History> = cfg
            .trial_seeds()
            .into_iter()
            .enumerate()
            .map(|(trial, seed)| run_trial(&cfg, &problem, trial, seed).unwrap().history.unwrap())
            .collect();
        eprintln!("  ordering runs: {alg} done at {:.0} s", t.elapsed().as_secs_f64());
        histories.insert(alg, hs);
    }
    OrderingRuns {
        histories,
        pairs,
        seconds: t.elapsed().as_secs_f64(),
    }
}

fn criterion_5(runs: &OrderingRuns) -> Outcome {
    // The 300-step runs are deterministic in the history prefix, so their
    // first 200 records are exactly the 200-step runs.
    assert_eq!(runs.pairs.len(), 4);
    let mut checked = 0;
    let mut failed = BTreeMap::new();
    for (alg, hs) in &runs.histories {
        for h in hs.iter().take(5) {
            for r in h.records.iter().take(200) {
                checked += 1;
                if !subset_feasible(&r.point, 40, &runs.pairs) {
                    *failed.entry(*alg).or_insert(0) += 1;
                }
            }
        }
    }
    outcome(
        failed.is_empty() && checked == 4 * 5 * 200,
        format!("{checked} points checked, infeasible per algorithm {failed:?}"),
    )
}

fn random_pairs(rng: &mut impl Rng, n: usize) -> Vec<(Vec<usize>, Vec<usize>)> {
    let s = rng.random_range(1..=5);
    let k = rng.random_range(1..=n / (2 * s));
    let idx = index::sample(rng, n, 2 * k * s).into_vec();
    idx.chunks(2 * s).map(|c| (c[..s].to_vec(), c[s..].to_vec())).collect()
}

fn criterion_6() -> Outcome {
    let mut rng = seeded(6);
    let mut total = 0;
    let mut bad = 0;
    for _ in 0..1000 {
        let n = [10, 20, 40][rng.random_range(0..3)];
        let raw = random_pairs(&mut rng, n);
        let pairs = SubsetPairs::new(raw.clone()).unwrap();
        let p_mut = rng.random_range(0.01..0.5);
        let mut parent = uniform_subset_equality_sample(&pairs, n, &mut rng);
        assert!(subset_feasible(&parent, n, &raw));
        for _ in 0..100 {
            let child = conevo_mutate(&parent, &pairs, p_mut, &mut rng).unwrap();
            total += 1;
            if !subset_feasible(&child, n, &raw) {
                bad += 1;
            }
            parent = child;
        }
    }
    outcome(bad == 0 && total == 100_000, format!("{total} mutations, {bad} infeasible"))
}

fn criterion_7() -> Outcome {
    let pairs = SubsetPairs::new(vec![(vec![0, 1, 2], vec![3, 4, 5])]).unwrap();
    let mut rng = seeded(7);
    let draws = 100_000;
    let mut counts = [0usize; 4];
    let mut unequal = 0;
    for _ in 0..draws {
        let x = uniform_subset_equality_sample(&pairs, 6, &mut rng);
        let a: usize = x.values()[..3].iter().sum();
        let b: usize = x.values()[3..].iter().sum();
        unequal += usize::from(a != b);
        counts[a] += 1;
    }
    let weights = [1.0, 9.0, 9.0, 1.0];
    let stat: f64 = counts
        .iter()
        .zip(weights)
        .map(|(&o, w)| {
            let e = draws as f64 * w / 20.0;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    let critical = ChiSquared::new(3.0).unwrap().inverse_cdf(0.99);
    outcome(
        unequal == 0 && stat < critical,
        format!("counts {counts:?}, chi-square {stat:.3} vs critical {critical:.3} (df 3, alpha 0.01)"),
    )
}

struct NasModel {
    domain: CategoricalDomain,
    model: MilpModel,
}

impl NasModel {
    fn new(spec: &CellSpec) -> Self {
        let domain = build_nas_domain(spec).unwrap();
        let mut model = MilpModel::new();
        add_domain(&mut model, &domain);
        Self { domain, model }
    }

    /// Feasibility of the row system at a point given by binary variable
    /// values; agrees with the exact rational check by construction.
    fn accepts(&self, p: &Point) -> bool {
        let e = self.domain.encode(p).unwrap();
        let x: Vec<f64> = e.bits.iter().map(|&b| f64::from(u8::from(b))).collect();
        let by_rows = self.model.max_violation(&x) <= 1e-9;
        assert_eq!(by_rows, self.domain.is_feasible(p));
        by_rows
    }
}

fn checker_accepts(spec: &CellSpec, p: &Point) -> bool {
    is_valid_cell(spec, &Cell::from_point(spec, p).unwrap())
}

fn criterion_8() -> Outcome {
    let spec4 = CellSpec::new(4, 9);
    let m4 = NasModel::new(&spec4);
    let nv = spec4.num_vars();
    let mut disagree4 = 0;
    let mut accepted4 = Vec::new();
    for m in 0u64..1 << nv {
        let p = Point((0..nv).map(|b| (m >> b & 1) as usize).collect());
        let (a, b) = (m4.accepts(&p), checker_accepts(&spec4, &p));
        disagree4 += usize::from(a != b);
        if a {
            accepted4.push(p);
        }
    }

    let spec7 = CellSpec::new(7, 9);
    let m7 = NasModel::new(&spec7);
    let nv7 = spec7.num_vars();
    let mut rng = seeded(8);
    let mut disagree7 = 0;
    let mut feasible7 = 0;
    for k in 0..100_000 {
        let p = match k % 3 {
            0 => Point((0..nv7).map(|_| rng.random_range(0..2)).collect()),
            1 => {
                // Valid one-hot labels over a random edge set.
                let density = rng.random_range(0.0..0.5);
                let mut x: Vec<usize> = (0..spec7.num_edges()).map(|_| usize::from(rng.random_bool(density))).collect();
                x.resize(nv7, 0);
                for node in 1..spec7.v - 1 {
                    let k = rng.random_range(0..=spec7.ops.len());
                    x[spec7.op_var(node, 0) + k] = 1;
                }
                Point(x)
            }
            _ => {
                let mut x = random_cell(&spec7, &mut rng, 1000).unwrap().to_point(&spec7).unwrap().0;
                if rng.random_bool(0.5) {
                    let i = rng.random_range(0..nv7);
                    x[i] ^= 1;
                }
                Point(x)
            }
        };
        let (a, b) = (m7.accepts(&p), checker_accepts(&spec7, &p));
        disagree7 += usize::from(a != b);
        feasible7 += usize::from(a);
    }

    let mut sym4 = spec4.clone();
    sym4.symmetry_breaking = true;
    let s4 = NasModel::new(&sym4);
    let kept: HashSet<&Point> = accepted4.iter().filter(|p| s4.accepts(p)).collect();
    let mut unrepresented = 0;
    let mut removed = 0;
    for p in accepted4.iter().filter(|p| !kept.contains(p)) {
        removed += 1;
        let c = Cell::from_point(&spec4, p).unwrap();
        let canon = c.canonicalize();
        let q = canon.to_point(&sym4).unwrap();
        if !kept.contains(&q) || canon.hash(&spec4) != c.hash(&spec4) {
            unrepresented += 1;
        }
    }
    let mut sym7 = spec7.clone();
    sym7.symmetry_breaking = true;
    let s7 = NasModel::new(&sym7);
    let mut removed7 = 0;
    for _ in 0..10_000 {
        let c = random_cell(&spec7, &mut rng, 1000).unwrap();
        if !s7.accepts(&c.to_point(&spec7).unwrap()) {
            removed7 += 1;
            let canon = c.canonicalize();
            if !s7.accepts(&canon.to_point(&sym7).unwrap()) || canon.hash(&spec7) != c.hash(&spec7) {
                unrepresented += 1;
            }
        }
    }
    let smaller = kept.len() < accepted4.len();
    outcome(
        disagree4 == 0 && disagree7 == 0 && unrepresented == 0 && smaller && removed7 > 0,
        format!(
            "V=4: {} feasible, {disagree4} disagreements; V=7: 1e5 assignments ({feasible7} feasible), {disagree7} disagreements; symmetry breaking removes {removed} (V=4) and {removed7} sampled (V=7), {unrepresented} without a representative",
            accepted4.len()
        ),
    )
}

fn criterion_9() -> Outcome {
    let gaps = [(0.0, 0.0, 0.0), (9.0, 10.0, 0.1), (-1.0, 2.0, 1.0)];
    let gaps_ok = gaps.iter().all(|&(v, s, want)| primal_gap(v, s) == want);
    let scores = |pairs: &[(&str, f64)]| normalized_scores(&pairs.iter().map(|&(k, v)| (k.to_string(), v)).collect());
    let two = scores(&[("A", 0.4), ("B", 0.8)]).unwrap();
    let three = scores(&[("A", 0.0), ("B", 5.0), ("C", 10.0)]).unwrap();
    let equal = scores(&[("A", 3.0), ("B", 3.0)]).unwrap();
    let norm_ok = two["A"] == 0.0
        && two["B"] == 1.0
        && three["A"] == 0.0
        && three["B"] == 0.5
        && three["C"] == 1.0
        && equal.values().all(|&v| v == 1.0)
        && scores(&[("A", 1.0)]).is_err();
    outcome(
        gaps_ok && norm_ok,
        format!("primal gap examples {gaps_ok}, normalized score examples {norm_ok}"),
    )
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 0 {
        (v[m - 1] + v[m]) / 2.0
    } else {
        v[m]
    }
}

fn criterion_10(runs: &OrderingRuns) -> Outcome {
    let med: Vec<f64> = ORDERING
        .iter()
        .map(|alg| median(runs.histories[alg].iter().map(|h| h.best().unwrap().reward).collect()))
        .collect();
    let ordered = med.windows(2).all(|w| w[0] >= w[1]);
    let lengths_ok = runs.histories.values().flatten().all(|h| h.len() == 300);
    let detail = ORDERING
        .iter()
        .zip(&med)
        .map(|(a, m)| format!("{a} {m:.3}"))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(
        ordered && lengths_ok && runs.seconds < 7200.0,
        format!("median final best: {detail}; {:.0} s total", runs.seconds),
    )
}

fn criterion_11() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("synthetic_tf.txt");
    let teacher = make_random_mlp(MlpArch::Fcc, 8, 4, 11).unwrap();
    let mut text = String::from("sequence\taffinity\n");
    for p in teacher.domain.iter_points() {
        let seq: String = p.values().iter().map(|&k| NUCLEOTIDES[k]).collect();
        text.push_str(&format!("{seq}\t{}\n", teacher.eval(&p).unwrap()));
    }
    std::fs::write(&path, text).unwrap();

    let mut cfg = desk_config(json!({"family": "tfbind", "path": path}), "nn_milp", 250, 200);
    cfg.mbo.train.hidden_sizes = vec![16];
    let problem = build_problem(&cfg.problem).unwrap();
    let h = run_trial(&cfg, &problem, 0, 11).unwrap().history.unwrap();
    let proposals: Vec<_> = h.records.iter().filter(|r| r.status != RecordStatus::Initial).collect();
    let mut statuses: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &proposals {
        *statuses.entry(r.status.as_str()).or_insert(0) += 1;
    }
    let times: Vec<f64> = proposals.iter().map(|r| r.solve_seconds).collect();
    let med = median(times.clone());
    let max = times.iter().copied().fold(0.0, f64::max);
    let hit_limit = proposals.iter().any(|r| r.status == RecordStatus::FeasibleTimeout) || max >= 500.0;
    outcome(
        proposals.len() == 200 && med < 60.0 && !hit_limit,
        format!("200 proposals, median solve {med:.3} s, max {max:.3} s, statuses {statuses:?}"),
    )
}

fn criterion_12() -> Outcome {
    let mut rng = seeded(12);
    let mut model = MilpModel::new();
    let n = 400;
    let x: Vec<_> = (0..n).map(|i| model.add_binary(format!("x{i}"))).collect();
    for _ in 0..40 {
        let terms: Vec<_> = x.iter().map(|&v| (v, rng.random_range(1.0..100.0))).collect();
        let cap = terms.iter().map(|t| t.1).sum::<f64>() / 4.0;
        model.add_row(terms, Sense::Le, cap);
    }
    model.set_objective(x.iter().map(|&v| (v, rng.random_range(1.0..100.0))).collect(), 0.0);
    let highs = HighsBackend::default();
    let mut opts = SolveOptions::with_time_limit(1e-3);
    opts.initial_solution = Some(vec![0.0; n]);
    let r = highs.solve(&model, &opts);
    let feasible = r.assignment.as_ref().is_some_and(|a| model.max_violation(a) <= 1e-6);
    let consistent = r.assignment.as_ref().is_some_and(|a| (model.objective_value(a) - r.objective_value).abs() <= 1e-6);
    outcome(
        r.status == SolveStatus::FeasibleTimeout && feasible && consistent && r.objective_value <= r.dual_bound + 1e-6,
        format!(
            "status {}, objective {:.3}, dual bound {:.3}, {:.4} s",
            r.status, r.objective_value, r.dual_bound, r.wall_time
        ),
    )
}

fn report(k: usize, name: &str, started: Instant, o: &Outcome, failures: &mut Vec<usize>) {
    let verdict = if o.pass { "PASS" } else { "FAIL" };
    if !o.pass {
        failures.push(k);
    }
    println!("criterion {k:>2} {verdict} {name}: {} [{:.1} s]", o.detail, started.elapsed().as_secs_f64());
    std::io::stdout().flush().unwrap();
}

fn main() {
    let mut failures = Vec::new();
    macro_rules! run {
        ($k:expr, $name:expr, $e:expr) => {{
            let t = Instant::now();
            let o = $e;
            report($k, $name, t, &o, &mut failures);
        }};
    }
    run!(1, "inner-loop exactness", criterion_1());
    let runs = ordering_runs();
    run!(2, "no-good exactness", criterion_2(&runs));
    run!(3, "bound tightening", criterion_3());
    run!(4, "gradient correctness", criterion_4());
    run!(5, "constrained feasibility", criterion_5(&runs));
    run!(6, "conevo mutator", criterion_6());
    run!(7, "uniform sampler", criterion_7());
    run!(8, "nas formulation", criterion_8());
    run!(9, "metric formulas", criterion_9());
    let t = Instant::now();
    let o = criterion_10(&runs);
    report(10, "desk-scale ordering", t, &o, &mut failures);
    run!(11, "timing sanity", criterion_11());
    run!(12, "timeout contract", criterion_12());
    println!("{} of 12 criteria passed", 12 - failures.len());
    if !failures.is_empty() {
        println!("failed: {failures:?}");
        std::process::exit(1);
    }
}
