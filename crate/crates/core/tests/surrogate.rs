use proptest::prelude::*;
use rand::Rng;

use nnmilp::domain::CategoricalDomain;
use nnmilp::rng::seeded;
use nnmilp::surrogate::{fit_scaler, loss_gradient, mse, Dataset, Mlp, Surrogate, TrainConfig};

fn net_strategy() -> impl Strategy<Value = (Mlp, u64)> {
    (1usize..6, prop::collection::vec(1usize..6, 1..3), any::<u64>()).prop_map(|(w, hidden, seed)| {
        let mut rng = seeded(seed);
        (Mlp::glorot(w, &hidden, &mut rng), seed)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn params_roundtrip((net, seed) in net_strategy()) {
        let mut other = Mlp::glorot(net.input_width(), &net.hidden_layers().iter().map(|l| l.outputs()).collect::<Vec<_>>(), &mut seeded(seed ^ 1));
        other.set_params(&net.params());
        prop_assert_eq!(other.params().len(), net.param_count());
        prop_assert_eq!(other, net);
    }

    #[test]
    fn one_hot_forward_matches_dense(sizes in prop::collection::vec(2usize..5, 1..4), seed in any::<u64>()) {
        let d = CategoricalDomain::new(sizes.iter().map(|&s| (0..s).map(|k| k.to_string()).collect()).collect(), Vec::new()).unwrap();
        let mut rng = seeded(seed);
        let net = Mlp::glorot(d.width(), &[7, 3], &mut rng);
        let p = d.sample_unconstrained(&mut rng);
        let e = d.encode(&p).unwrap();
        let active: Vec<usize> = e.set_indices().collect();
        prop_assert!((net.forward(&e.as_f64()) - net.forward_one_hot(&active)).abs() < 1e-12);
    }

    #[test]
    fn loss_matches_mse_and_gradient_has_param_layout((net, seed) in net_strategy()) {
        let mut rng = seeded(seed);
        let batch: Vec<(Vec<f64>, f64)> = (0..4)
            .map(|_| ((0..net.input_width()).map(|_| rng.random_range(-1.0..1.0)).collect(), rng.random_range(-1.0..1.0)))
            .collect();
        let (loss, g) = loss_gradient(&net, &batch).unwrap();
        prop_assert!((loss - mse(&net, &batch)).abs() < 1e-12);
        prop_assert_eq!(g.flatten().len(), net.param_count());
    }

    #[test]
    fn scaler_inverts(rewards in prop::collection::vec(-1e3f64..1e3, 2..20)) {
        let data = Dataset::new(rewards.iter().map(|&r| (nnmilp::domain::Point(vec![0]), r)).collect());
        let s = fit_scaler(&data).unwrap();
        for &r in &rewards {
            prop_assert!((s.inverse(s.apply(r)) - r).abs() <= 1e-9 * r.abs().max(1.0));
        }
    }
}

#[test]
fn training_reduces_loss_and_is_seeded() {
    let d = CategoricalDomain::uniform(3, 3).unwrap();
    let data = Dataset::new(d.iter_points().map(|p| {
        let v = p.values();
        let r = v[0] as f64 - 0.5 * v[1] as f64 + if v[2] == 2 { 1.0 } else { 0.0 };
        (p, r)
    }).collect());
    let cfg = TrainConfig { epochs: 300, seed: 5, ..TrainConfig::default() };
    let a = Surrogate::train(&data, &cfg, &d).unwrap();
    let b = Surrogate::train(&data, &cfg, &d).unwrap();
    assert_eq!(a, b);
    let untrained = Surrogate::train(&data, &TrainConfig { epochs: 1, ..cfg.clone() }, &d).unwrap();
    let err = |s: &Surrogate| data.points().zip(data.rewards()).map(|(p, r)| (s.predict(&d, p) - r).powi(2)).sum::<f64>();
    assert!(err(&a) < 0.1 * err(&untrained), "{} vs {}", err(&a), err(&untrained));
}

#[test]
fn surrogate_json_roundtrip() {
    let d = CategoricalDomain::uniform(2, 3).unwrap();
    let data = Dataset::new(d.iter_points().enumerate().map(|(k, p)| (p, k as f64)).collect());
    let s = Surrogate::train(&data, &TrainConfig { epochs: 5, ..TrainConfig::default() }, &d).unwrap();
    assert_eq!(Surrogate::from_json(&s.to_json()).unwrap(), s);
}
