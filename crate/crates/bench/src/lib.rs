//! Fixtures shared by the benchmarks. Everything is seeded so runs compare.

use grapheur_core::metrics::AtomicMeasure2D;
use grapheur_core::numeric::rng_from_seed;
use grapheur_core::{normalize, Grapheur, NormalizedGraph, WeightedDigraph};
use rand::Rng;

/// A dense graph on `n` vertices with uniform random weights.
pub fn random_graph(n: usize, seed: u64) -> NormalizedGraph {
    let mut rng = rng_from_seed(seed);
    let w = (0..n * n).map(|_| rng.random::<f64>()).collect();
    normalize(&WeightedDigraph::from_dense(n, w).unwrap()).unwrap()
}

/// `m` atoms at random positions with random masses summing to one.
pub fn random_atoms(m: usize, seed: u64) -> AtomicMeasure2D {
    let mut rng = rng_from_seed(seed);
    let raw: Vec<(f64, f64, f64)> = (0..m).map(|_| (rng.random(), rng.random(), rng.random())).collect();
    let total: f64 = raw.iter().map(|a| a.2).sum();
    AtomicMeasure2D::new(raw.into_iter().map(|(x, y, w)| (x, y, w / total)).collect()).unwrap()
}

/// A grapheur with `m` hubs carrying half the mass; the other half is
/// split between `θ`, `ϑ` and the row hubs.
pub fn mixed_grapheur(m: usize, seed: u64) -> Grapheur {
    let mut rng = rng_from_seed(seed);
    let raw: Vec<f64> = (0..m * m).map(|_| rng.random()).collect();
    let total: f64 = raw.iter().sum();
    let rows = raw.chunks(m).map(|r| r.iter().map(|x| 0.5 * x / total).collect()).collect();
    Grapheur::new(rows, vec![0.2 / m as f64; m], vec![], 0.2, 0.1).unwrap()
}

/// A random `n × n` cost matrix, row-major.
pub fn random_costs(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    (0..n * n).map(|_| rng.random()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_valid_and_seeded() {
        assert_eq!(random_graph(5, 1).n(), 5);
        assert!((random_atoms(10, 2).total_mass() - 1.0).abs() < 1e-12);
        assert!((mixed_grapheur(3, 3).total_mass() - 1.0).abs() < 1e-12);
        assert_eq!(random_costs(4, 4), random_costs(4, 4));
    }
}
