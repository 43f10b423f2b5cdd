//! Fixtures shared by the benchmarks.

use nnmilp::domain::{CategoricalDomain, EncodedPoint, Point};
use nnmilp::rng::seeded;
use nnmilp::surrogate::{Dataset, Surrogate, TrainConfig};

/// A surrogate trained on `visits` random points of `domain` with a smooth
/// random target, and the encodings of those points.
pub fn trained_surrogate(domain: &CategoricalDomain, hidden: &[usize], visits: usize, seed: u64) -> (Surrogate, Vec<EncodedPoint>) {
    let mut rng = seeded(seed);
    let mut points: Vec<Point> = Vec::with_capacity(visits);
    while points.len() < visits {
        let p = domain.sample_unconstrained(&mut rng);
        if domain.is_feasible(&p) && !points.contains(&p) {
            points.push(p);
        }
    }
    let data = Dataset::new(
        points
            .iter()
            .map(|p| {
                let r = p.values().iter().enumerate().map(|(i, &v)| ((i * 7 + v * 3) % 5) as f64).sum::<f64>();
                (p.clone(), r.sin())
            })
            .collect(),
    );
    let cfg = TrainConfig {
        hidden_sizes: hidden.to_vec(),
        epochs: 50,
        seed,
        ..TrainConfig::default()
    };
    let s = Surrogate::train(&data, &cfg, domain).expect("training succeeds");
    let enc = points.iter().map(|p| domain.encode(p).expect("valid point")).collect();
    (s, enc)
}
