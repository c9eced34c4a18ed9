//! Equipartition-consistent random graph models: law checks for quotients by
//! equal-fiber maps, nested versus independent quotient sampling, and the
//! structure of mean matrices.

use rand::Rng as _;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grapheur::Grapheur;
use crate::graph::{equipartition_map, for_each_map, random_equipartition_map, NormalizedGraph};
use crate::metrics::{rect_discrepancy, AtomicMeasure2D};
use crate::numeric::{self, substream, Rng, RunningStats};

/// Draws one graph of a model on `size` vertices.
pub trait ModelSampler: Sync {
    fn sample(&self, size: usize, rng: &mut Rng) -> Result<NormalizedGraph>;
}

impl<F> ModelSampler for F
where
    F: Fn(usize, &mut Rng) -> Result<NormalizedGraph> + Sync,
{
    fn sample(&self, size: usize, rng: &mut Rng) -> Result<NormalizedGraph> {
        self(size, rng)
    }
}

/// The quotient model `k ↦ G_k[M]` of a grapheur.
pub struct GrapheurModel<'a>(pub &'a Grapheur);

impl ModelSampler for GrapheurModel<'_> {
    fn sample(&self, size: usize, rng: &mut Rng) -> Result<NormalizedGraph> {
        self.0.grid_quotient_sample(size, rng)
    }
}

/// Rows drawn iid from the flat Dirichlet law and scaled by `1/size`. Its
/// quotients are far more concentrated than its small samples, so it is
/// not equipartition-consistent.
pub struct IndependentRowsModel;

impl ModelSampler for IndependentRowsModel {
    fn sample(&self, size: usize, rng: &mut Rng) -> Result<NormalizedGraph> {
        let mut w = Vec::with_capacity(size * size);
        for _ in 0..size {
            let row: Vec<f64> = (0..size).map(|_| Exp1.sample(rng)).collect();
            let s: f64 = row.iter().sum();
            w.extend(row.into_iter().map(|x| x / (s * size as f64)));
        }
        NormalizedGraph::from_dense(size, w)
    }
}

/// Labeled moments `E Q_a` and `E Q_a Q_b` of a random `k × k` graph.
fn moment_stats(samples: &[Vec<f64>], k: usize) -> Vec<RunningStats> {
    let kk = k * k;
    let mut stats = vec![RunningStats::new(); kk + kk * (kk + 1) / 2];
    for q in samples {
        let mut idx = 0;
        for a in 0..kk {
            stats[idx].push(q[a]);
            idx += 1;
        }
        for a in 0..kk {
            for b in a..kk {
                stats[idx].push(q[a] * q[b]);
                idx += 1;
            }
        }
    }
    stats
}

/// Largest two-sample z-score; gaps within rounding (1e-12) score 0.
fn max_z(a: &[RunningStats], b: &[RunningStats]) -> f64 {
    a.iter()
        .zip(b)
        .filter(|(x, y)| (x.mean() - y.mean()).abs() > 1e-12)
        .map(|(x, y)| numeric::z_score(x.mean(), x.std_error(), y.mean(), y.std_error()))
        .fold(0.0, f64::max)
}

/// Outcome of [`check_model_consistency`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub k: usize,
    pub n: usize,
    pub samples: usize,
    pub moments: usize,
    /// Canonical equipartition quotients of size-`nk` samples against size-`k` samples.
    pub max_z_canonical: f64,
    /// Random equipartition quotients against size-`k` samples.
    pub max_z_random: f64,
    pub max_z: f64,
}

/// Compares all moments of degree at most 2 of `ρ(d)G_{nk}` against `G_k`
/// for the canonical and for a random equipartition `d`.
pub fn check_model_consistency<S: ModelSampler>(
    model: &S,
    k: usize,
    n: usize,
    n_samples: usize,
    seed: u64,
) -> Result<ConsistencyReport> {
    if k == 0 || n == 0 || n_samples < 2 {
        return Err(Error::InvalidInput("k, n must be positive and n_samples at least 2".into()));
    }
    let canonical = equipartition_map(k, n * k)?;
    let draw = |stream: u64| -> Result<Vec<Vec<f64>>> {
        (0..n_samples)
            .into_par_iter()
            .map(|i| {
                let mut r = substream(seed, stream * n_samples as u64 + i as u64);
                let g = match stream {
                    0 => model.sample(k, &mut r)?,
                    1 => model.sample(n * k, &mut r)?.quotient(&canonical)?,
                    _ => {
                        let d = random_equipartition_map(k, n * k, &mut r)?;
                        model.sample(n * k, &mut r)?.quotient(&d)?
                    }
                };
                Ok(g.to_dense())
            })
            .collect()
    };
    let direct = moment_stats(&draw(0)?, k);
    let via_canonical = moment_stats(&draw(1)?, k);
    let via_random = moment_stats(&draw(2)?, k);
    let max_z_canonical = max_z(&direct, &via_canonical);
    let max_z_random = max_z(&direct, &via_random);
    Ok(ConsistencyReport {
        k,
        n,
        samples: n_samples,
        moments: direct.len(),
        max_z_canonical,
        max_z_random,
        max_z: max_z_canonical.max(max_z_random),
    })
}

/// [`check_model_consistency`] for the quotient model of a grapheur.
pub fn check_equipartition_consistency(
    m: &Grapheur,
    k: usize,
    n: usize,
    n_samples: usize,
    seed: u64,
) -> Result<ConsistencyReport> {
    check_model_consistency(&GrapheurModel(m), k, n, n_samples, seed)
}

/// `G_k[M]` for every `k` in `ks`, all read off one realization, so the
/// sequence is a function of the stream alone.
pub fn nested_quotient_sequence(m: &Grapheur, ks: &[usize], rng: &mut Rng) -> Result<Vec<NormalizedGraph>> {
    if ks.is_empty() {
        return Err(Error::InvalidInput("ks must be nonempty".into()));
    }
    let r = m.sample_realization(rng);
    ks.iter().map(|&k| r.grid_quotient(k)).collect()
}

/// Outcome of [`independent_sampling_divergence_demo`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub k_max: usize,
    /// Whether both atoms of the single edge fell in one cell, for `k = 1..=k_max`.
    pub collisions: Vec<bool>,
    pub count: usize,
    /// `Σ 1/k`, the harmonic number `H_{k_max}`.
    pub expected: f64,
    /// `√(Σ (1/k)(1 − 1/k))`.
    pub std: f64,
    pub z: f64,
    /// Smallest rectangle discrepancy between a collided quotient's measure
    /// and the split realization it was drawn from.
    pub min_collision_discrepancy: Option<f64>,
    /// `|E μ(S×T) − E ν(S×T)|` for `S = [0,½]`, `T = [½,1]`, where `μ` is a
    /// collided quotient's grapheur and `ν` the single edge. It bounds `W□`
    /// from below for every coupling.
    pub collision_rect_gap: f64,
}

/// Independent quotients of the single-edge grapheur for `k ≤ k_max`.
/// A collision (probability `1/k`) puts all mass on one diagonal entry.
pub fn independent_sampling_divergence_demo(k_max: usize, rng: &mut Rng) -> Result<DivergenceReport> {
    if k_max < 2 {
        return Err(Error::InvalidInput("k_max must be at least 2".into()));
    }
    let edge = Grapheur::single_edge();
    let mut collisions = Vec::with_capacity(k_max);
    let mut min_disc: Option<f64> = None;
    for k in 1..=k_max {
        let r = edge.sample_realization(rng);
        let q = r.grid_quotient(k)?;
        let hit = q.trace() == 1.0;
        if hit {
            let t = r.locations();
            let split = AtomicMeasure2D::new(vec![(t[0], t[1], 1.0)])?;
            // The collided graph is one loop; its grapheur is a diagonal atom.
            let s = rng.random::<f64>();
            let diag = AtomicMeasure2D::new(vec![(s, s, 1.0)])?;
            let d = rect_discrepancy(&diag, &split)?;
            min_disc = Some(min_disc.map_or(d, |m: f64| m.min(d)));
        }
        collisions.push(hit);
    }
    let count = collisions.iter().filter(|&&c| c).count();
    let expected = numeric::sum((1..=k_max).map(|k| 1.0 / k as f64));
    let var = numeric::sum((1..=k_max).map(|k| {
        let p = 1.0 / k as f64;
        p * (1.0 - p)
    }));
    let looped = Grapheur::new(vec![vec![1.0]], vec![], vec![], 0.0, 0.0)?;
    let gap = (looped.expected_rect_mass(0.0, 0.5, 0.5, 1.0) - edge.expected_rect_mass(0.0, 0.5, 0.5, 1.0)).abs();
    Ok(DivergenceReport {
        k_max,
        collisions,
        count,
        expected,
        std: var.sqrt(),
        z: (count as f64 - expected) / var.sqrt(),
        min_collision_discrepancy: min_disc,
        collision_rect_gap: gap,
    })
}

/// Per-size row of a [`MeanReport`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanRow {
    pub k: usize,
    /// `k²` times the average off-diagonal mean entry.
    pub theta: f64,
    pub theta_se: f64,
    /// Largest z-score of an off-diagonal entry against the off-diagonal average.
    pub max_offdiag_z: f64,
    /// Largest z-score of a diagonal entry against the diagonal average.
    pub max_diag_z: f64,
}

/// Outcome of [`mean_matrix_check`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanReport {
    pub rows: Vec<MeanRow>,
    /// z-score between the implied `θ` of the two sizes.
    pub theta_z: f64,
    pub passed: bool,
}

/// Checks that the mean of an exchangeable model is `θ 11ᵀ/k² + (1 − θ) I/k`
/// with `θ` independent of `k`: entries within `z_tol` standard errors of
/// the off-diagonal and diagonal averages, and matching `θ` at both sizes.
pub fn mean_matrix_check<S: ModelSampler>(
    model: &S,
    ks: [usize; 2],
    n_samples: usize,
    z_tol: f64,
    seed: u64,
) -> Result<MeanReport> {
    if ks.iter().any(|&k| k < 2) || n_samples < 2 {
        return Err(Error::InvalidInput("sizes must be at least 2 and n_samples at least 2".into()));
    }
    let mut rows = Vec::new();
    for (idx, &k) in ks.iter().enumerate() {
        let samples: Vec<Vec<f64>> = (0..n_samples)
            .into_par_iter()
            .map(|i| Ok(model.sample(k, &mut substream(seed, (idx * n_samples + i) as u64))?.to_dense()))
            .collect::<Result<_>>()?;
        let mut entries = vec![RunningStats::new(); k * k];
        let mut off = RunningStats::new();
        let mut diag = RunningStats::new();
        for q in &samples {
            for (s, &x) in entries.iter_mut().zip(q) {
                s.push(x);
            }
            let tr: f64 = (0..k).map(|a| q[a * k + a]).sum();
            off.push((1.0 - tr) / (k * (k - 1)) as f64);
            diag.push(tr / k as f64);
        }
        let zmax = |pred: &dyn Fn(usize) -> bool, avg: &RunningStats| {
            (0..k * k)
                .filter(|&c| pred(c))
                .map(|c| {
                    let e = &entries[c];
                    numeric::z_score(e.mean(), e.std_error(), avg.mean(), 0.0)
                })
                .fold(0.0, f64::max)
        };
        let max_offdiag_z = zmax(&|c| c / k != c % k, &off);
        let max_diag_z = zmax(&|c| c / k == c % k, &diag);
        // Off-diagonal mean θ/k², so θ = k² · average.
        let kk = (k * k) as f64;
        rows.push(MeanRow {
            k,
            theta: kk * off.mean(),
            theta_se: kk * off.std_error(),
            max_offdiag_z,
            max_diag_z,
        });
    }
    let theta_z = numeric::z_score(rows[0].theta, rows[0].theta_se, rows[1].theta, rows[1].theta_se);
    let passed = theta_z <= z_tol && rows.iter().all(|r| r.max_offdiag_z <= z_tol && r.max_diag_z <= z_tol);
    Ok(MeanReport { rows, theta_z, passed })
}

/// Law of `d_{k,nk} ∘ F` for a uniform map `F: [m] → [nk]` and the
/// canonical equipartition, by enumeration. Indexed by the maps `[m] → [k]`
/// in odometer order.
pub fn equipartition_pushforward_law(k: usize, n: usize, m: usize) -> Result<Vec<f64>> {
    let d = equipartition_map(k, n * k)?;
    crate::error::budget("pushforward enumeration", numeric::pow_count(n * k, m), 1e7)?;
    let mut counts = vec![0u64; numeric::pow_count(k, m) as usize];
    for_each_map(m, n * k, |f| {
        let code = f.iter().fold(0usize, |acc, &x| acc * k + d.apply(x));
        counts[code] += 1;
    });
    let total = numeric::pow_count(n * k, m);
    Ok(counts.into_iter().map(|c| c as f64 / total).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{normalize, WeightedDigraph};
    use crate::numeric::rng_from_seed;

    fn test_grapheurs() -> Vec<Grapheur> {
        let mut rng = rng_from_seed(40);
        let w: Vec<f64> = (0..9).map(|_| rng.random::<f64>()).collect();
        vec![
            Grapheur::from_graph(&normalize(&WeightedDigraph::from_dense(3, w).unwrap()).unwrap()),
            Grapheur::new(vec![vec![0.3, 0.1]], vec![0.1], vec![0.0, 0.1], 0.3, 0.1).unwrap(),
            Grapheur::single_edge(),
        ]
    }

    #[test]
    fn k_one_is_trivial() {
        let r = check_equipartition_consistency(&test_grapheurs()[1], 1, 3, 50, 1).unwrap();
        assert_eq!(r.max_z, 0.0);
    }

    #[test]
    fn grapheur_models_are_consistent() {
        for (i, m) in test_grapheurs().iter().enumerate() {
            let r = check_equipartition_consistency(m, 2, 2, 10_000, 100 + i as u64).unwrap();
            assert!(r.max_z <= 4.0, "{r:?}");
        }
    }

    #[test]
    fn independent_rows_fail() {
        let r = check_model_consistency(&IndependentRowsModel, 2, 3, 10_000, 2).unwrap();
        assert!(r.max_z > 10.0, "{r:?}");
    }

    #[test]
    fn nested_sequences_are_reproducible() {
        let m = &test_grapheurs()[1];
        let a = nested_quotient_sequence(m, &[2, 4, 8], &mut rng_from_seed(3)).unwrap();
        let b = nested_quotient_sequence(m, &[2, 4, 8], &mut rng_from_seed(3)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.to_dense(), y.to_dense());
        }
        let theta = nested_quotient_sequence(&Grapheur::pure_theta(), &[3, 5], &mut rng_from_seed(3)).unwrap();
        assert!(theta[1].to_dense().iter().all(|&x| (x - 1.0 / 25.0).abs() < 1e-15));
        assert!(nested_quotient_sequence(m, &[], &mut rng_from_seed(3)).is_err());
    }

    #[test]
    fn nested_single_edge_separates_with_rate() {
        let edge = Grapheur::single_edge();
        let k = 4;
        let trials = 10_000;
        let mut rng = rng_from_seed(5);
        let separated = (0..trials)
            .filter(|_| nested_quotient_sequence(&edge, &[k], &mut rng).unwrap()[0].trace() == 0.0)
            .count() as f64;
        let p = 1.0 - 1.0 / k as f64;
        assert!((separated - trials as f64 * p).abs() < 4.0 * (trials as f64 * p * (1.0 - p)).sqrt());
    }

    #[test]
    fn nested_estimates_approach_atomic_grapheurs() {
        let m = Grapheur::new(vec![vec![0.0, 0.5], vec![0.3, 0.2]], vec![], vec![], 0.0, 0.0).unwrap();
        let seq = nested_quotient_sequence(&m, &[64], &mut rng_from_seed(6)).unwrap();
        let est = crate::grapheur::estimate_grapheur(&seq[0], 0.05, 0.05).unwrap();
        assert!(est.linf_distance(&m) <= 0.05, "{est:?}");
    }

    #[test]
    fn collisions_at_two_cells() {
        let mut rng = rng_from_seed(7);
        let edge = Grapheur::single_edge();
        let reps = 10_000;
        let hits = (0..reps)
            .filter(|_| edge.grid_quotient_sample(2, &mut rng).unwrap().trace() == 1.0)
            .count() as f64;
        assert!((hits - 5000.0).abs() < 3.0 * 50.0);
    }

    #[test]
    fn divergence_demo() {
        let r = independent_sampling_divergence_demo(1000, &mut rng_from_seed(8)).unwrap();
        assert!((r.expected - 7.485_470_860_550_345).abs() < 1e-12);
        assert!(r.z.abs() <= 3.0, "{r:?}");
        assert!(r.collisions[0]);
        assert!(r.min_collision_discrepancy.unwrap() >= 0.25);
        assert!((r.collision_rect_gap - 0.25).abs() < 1e-15);
        assert!(independent_sampling_divergence_demo(1, &mut rng_from_seed(8)).is_err());
    }

    #[test]
    fn mean_structure() {
        for (i, m) in test_grapheurs().iter().enumerate() {
            let r = mean_matrix_check(&GrapheurModel(m), [2, 3], 20_000, 4.0, 10 + i as u64).unwrap();
            assert!(r.passed, "{r:?}");
            assert!((r.rows[0].theta - m.implied_theta()).abs() <= 4.0 * r.rows[0].theta_se + 1e-12);
        }
        let diag = mean_matrix_check(&GrapheurModel(&Grapheur::pure_vartheta()), [2, 3], 100, 4.0, 1).unwrap();
        assert!(diag.passed && diag.rows[0].theta.abs() < 1e-15);
        let lopsided = |k: usize, r: &mut Rng| {
            let mut w = vec![r.random::<f64>() * 0.1; k * k];
            w[0] += 1.0;
            normalize(&WeightedDigraph::from_dense(k, w)?)
        };
        let bad = mean_matrix_check(&lopsided, [2, 3], 2000, 4.0, 2).unwrap();
        assert!(!bad.passed);
    }

    #[test]
    fn pushforward_is_uniform() {
        for m in 1..=5 {
            for k in 1..=2 {
                for n in 1..=2 {
                    let law = equipartition_pushforward_law(k, n, m).unwrap();
                    let u = 1.0 / numeric::pow_count(k, m);
                    assert!(law.iter().all(|&p| (p - u).abs() < 1e-15), "k={k} n={n} m={m}");
                }
            }
        }
    }
}
