//! Quotient-testable parameters, the hub statistic and edge-sampling testers.

use std::fmt;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::combinatorics::{quotient_density_exact_with_cap, quotient_density_mc, Multigraph};
use crate::edge_sampling::{sample_edges_from_graph, VC_CONSTANT};
use crate::error::{budget, Error, Result};
use crate::graph::{for_each_map, normalize, NormalizedGraph, WeightedDigraph};
use crate::numeric::{self, rng_from_seed, Estimate, RunningStats};

/// Enumeration cap for the exact `q₂` identity check.
pub const Q2_ENUMERATION_CAP: f64 = 1e7;

/// Maps enumerated before a quotient-density parameter switches to Monte Carlo.
pub const PARAMETER_EXACT_CAP: f64 = 1e5;

/// Monte Carlo budget of quotient-density parameters.
pub const PARAMETER_MC_SAMPLES: usize = 20_000;

/// Lipschitz constant of the hub statistic with respect to `W□`.
pub const HUB_LIPSCHITZ: f64 = 8.0;

/// `‖G1‖² + ‖Gᵀ1‖²` of the normalized graph.
pub fn hub_statistic(g: &WeightedDigraph) -> Result<f64> {
    let total = g.total();
    if total <= 0.0 {
        return Err(Error::ZeroGraph);
    }
    let sq = |v: Vec<f64>| numeric::sum(v.into_iter().map(|x| (x / total) * (x / total)));
    Ok(sq(g.row_sums()) + sq(g.col_sums()))
}

/// `f(G)/8`, a lower bound on `W□(M_G, M)` for every hub-free `M`.
pub fn hub_lower_bound(g: &WeightedDigraph) -> Result<f64> {
    Ok(hub_statistic(g)? / HUB_LIPSCHITZ)
}

/// `q₂(Q) = (Q₁₁+Q₁₂−Q₂₁−Q₂₂)² + (Q₁₁+Q₂₁−Q₁₂−Q₂₂)²` on a row-major 2 × 2 array.
pub fn q2(q: &[f64]) -> f64 {
    let row = q[0] + q[1] - q[2] - q[3];
    let col = q[0] + q[2] - q[1] - q[3];
    row * row + col * col
}

/// How [`q2_identity_check`] averages over random 2-quotients.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Q2Mode {
    Exact,
    MonteCarlo { samples: usize, seed: u64 },
}

/// Outcome of [`q2_identity_check`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Q2Report {
    pub hub_statistic: f64,
    pub quotient_mean: f64,
    /// Zero in exact mode.
    pub std_error: f64,
    pub abs_error: f64,
}

/// Compares `E q₂(ρ(F_{2,n})G)` with the hub statistic of `G`.
pub fn q2_identity_check(g: &NormalizedGraph, mode: Q2Mode) -> Result<Q2Report> {
    let n = g.n();
    let entries: Vec<(usize, usize, f64)> = g.entries().collect();
    let quotient = |images: &[usize]| {
        let mut q = [0.0; 4];
        for &(i, j, w) in &entries {
            q[images[i] * 2 + images[j]] += w;
        }
        q2(&q)
    };
    let (mean, se) = match mode {
        Q2Mode::Exact => {
            budget("2-quotient enumeration", numeric::pow_count(2, n), Q2_ENUMERATION_CAP)?;
            let mut acc = numeric::CompensatedSum::new();
            for_each_map(n, 2, |images| acc.add(quotient(images)));
            (acc.value() / numeric::pow_count(2, n), 0.0)
        }
        Q2Mode::MonteCarlo { samples, seed } => {
            let mut rng = rng_from_seed(seed);
            let stats: RunningStats = (0..samples)
                .map(|_| {
                    let images: Vec<usize> = (0..n).map(|_| rng.random_range(0..2)).collect();
                    quotient(&images)
                })
                .collect();
            (stats.mean(), stats.std_error())
        }
    };
    let hub = hub_statistic(g)?;
    Ok(Q2Report {
        hub_statistic: hub,
        quotient_mean: mean,
        std_error: se,
        abs_error: (hub - mean).abs(),
    })
}

/// `⌈(L·(174 + √(ln ε^{-1/2}))/ε)²⌉` edges, enough for an `(ε, 1−ε)`
/// guarantee on an `L`-Lipschitz parameter.
pub fn required_edges(eps: f64, lipschitz: f64) -> Result<u64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidEpsilon(eps));
    }
    if !(lipschitz > 0.0 && lipschitz.is_finite()) {
        return Err(Error::InvalidInput(format!("Lipschitz constant must be positive, got {lipschitz}")));
    }
    let ratio = (VC_CONSTANT + tail_term(eps)) / eps;
    Ok(((lipschitz * lipschitz) * (ratio * ratio)).ceil() as u64)
}

/// `√(ln ε^{-1/2})`, the one-sided tail part of the sample size.
pub fn tail_term(eps: f64) -> f64 {
    (-0.5 * eps.ln()).sqrt()
}

type Evaluator = dyn Fn(&NormalizedGraph) -> Result<f64> + Send + Sync;

/// A graph parameter that is invariant under relabeling and isolated
/// vertices, optionally `L`-Lipschitz with respect to `W□`.
#[derive(Clone)]
pub struct TestableParameter {
    name: String,
    evaluator: Arc<Evaluator>,
    lipschitz: Option<f64>,
}

impl fmt::Debug for TestableParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestableParameter")
            .field("name", &self.name)
            .field("lipschitz", &self.lipschitz)
            .finish_non_exhaustive()
    }
}

impl TestableParameter {
    /// Registers a parameter after spot-checking invariance on a few random
    /// graphs, each relabeled and padded with three isolated vertices.
    /// Values must agree within `tolerance`.
    pub fn register<F>(name: &str, evaluator: F, lipschitz: Option<f64>, tolerance: f64) -> Result<Self>
    where
        F: Fn(&NormalizedGraph) -> Result<f64> + Send + Sync + 'static,
    {
        if let Some(l) = lipschitz {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::InvalidInput(format!("Lipschitz constant must be positive, got {l}")));
            }
        }
        let mut rng = rng_from_seed(0x5eed);
        for trial in 0..4 {
            let n = 3 + trial;
            let w: Vec<f64> = (0..n * n)
                .map(|_| if rng.random_bool(0.5) { rng.random::<f64>() } else { 0.0 })
                .collect();
            let mut w = w;
            w[1] += 0.5;
            let g = normalize(&WeightedDigraph::from_dense(n, w)?)?;
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let base = evaluator(&g)?;
            for (label, other) in [("relabeling", g.permute(&perm)?), ("isolated vertices", g.pad_isolated(3))] {
                let v = evaluator(&other)?;
                if (v - base).abs() > tolerance {
                    return Err(Error::NotInvariant {
                        name: name.to_string(),
                        detail: format!("{label} changed the value from {base} to {v}"),
                    });
                }
            }
        }
        Ok(TestableParameter {
            name: name.to_string(),
            evaluator: Arc::new(evaluator),
            lipschitz,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }

    pub fn evaluate(&self, g: &NormalizedGraph) -> Result<f64> {
        (self.evaluator)(g)
    }
}

/// The hub statistic as a testable parameter (`L = 8`).
pub fn hub_parameter() -> TestableParameter {
    TestableParameter::register("hub_statistic", |g| hub_statistic(g), Some(HUB_LIPSCHITZ), 1e-12)
        .expect("hub statistic is invariant")
}

/// `G ↦ t_Q(H; G)` with `L = k²‖H‖_∞`. Exact when the `k^n` maps fit
/// [`PARAMETER_EXACT_CAP`], otherwise Monte Carlo with a fixed budget and
/// seed, so values are reproducible.
pub fn register_quotient_density_parameter(h: &Multigraph) -> Result<TestableParameter> {
    let k = h.k() as f64;
    let lipschitz = k * k * f64::from(h.max_multiplicity());
    let pattern = h.clone();
    TestableParameter::register(
        &format!("t_Q[{h}]"),
        move |g| {
            let (stripped, _) = g.strip_isolated();
            match quotient_density_exact_with_cap(&pattern, &stripped, PARAMETER_EXACT_CAP) {
                Err(Error::BudgetExceeded { .. }) => {
                    let mut rng = rng_from_seed(0x7a51);
                    Ok(quotient_density_mc(&pattern, &stripped, PARAMETER_MC_SAMPLES, &mut rng)?.mean)
                }
                other => other,
            }
        },
        Some(lipschitz),
        1e-9,
    )
}

/// The guarantee attached to an estimate when enough edges were sampled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Guarantee {
    pub epsilon: f64,
    /// `|estimate − value| ≤ ε` holds with at least this probability.
    pub confidence: f64,
}

/// What an edge-sampling estimate can claim.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub parameter: String,
    pub seed: u64,
    pub edges: u64,
    pub epsilon: Option<f64>,
    pub lipschitz: Option<f64>,
    pub required_edges: Option<u64>,
    pub log_base: String,
    pub vc_term: f64,
    pub tail_term: Option<f64>,
    pub guarantee: Option<Guarantee>,
}

/// Evaluates `param` on `k` edges sampled from `G`.
pub fn test_parameter_by_edge_sampling(
    g: &WeightedDigraph,
    param: &TestableParameter,
    k_edges: usize,
    eps: Option<f64>,
    seed: u64,
) -> Result<(f64, Certificate)> {
    let sample = sample_edges_from_graph(g, k_edges, &mut rng_from_seed(seed))?;
    let estimate = param.evaluate(&sample.graph)?;
    let required = match (eps, param.lipschitz) {
        (Some(e), Some(l)) => Some(required_edges(e, l)?),
        (Some(e), None) => {
            required_edges(e, 1.0)?;
            None
        }
        _ => None,
    };
    let guarantee = match (eps, required) {
        (Some(e), Some(r)) if k_edges as u64 >= r => Some(Guarantee {
            epsilon: e,
            confidence: 1.0 - e,
        }),
        _ => None,
    };
    Ok((
        estimate,
        Certificate {
            parameter: param.name.clone(),
            seed,
            edges: k_edges as u64,
            epsilon: eps,
            lipschitz: param.lipschitz,
            required_edges: required,
            log_base: "natural".into(),
            vc_term: VC_CONSTANT,
            tail_term: eps.map(tail_term),
            guarantee,
        },
    ))
}

/// Estimates across seeds `0..seeds`, for spread studies.
pub fn edge_sampling_spread(g: &WeightedDigraph, param: &TestableParameter, k_edges: usize, seeds: u64) -> Result<Estimate> {
    let stats: RunningStats = (0..seeds)
        .map(|s| test_parameter_by_edge_sampling(g, param, k_edges, None, s).map(|r| r.0))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .collect();
    Ok(Estimate {
        mean: stats.mean(),
        std_error: stats.std_dev(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grapheur::Grapheur;

    fn random_graph(rng: &mut numeric::Rng, n: usize) -> NormalizedGraph {
        let w: Vec<f64> = (0..n * n).map(|_| rng.random::<f64>()).collect();
        normalize(&WeightedDigraph::from_dense(n, w).unwrap()).unwrap()
    }

    #[test]
    fn hub_examples() {
        let edge = WeightedDigraph::from_rows(&[vec![0.0, 3.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(hub_statistic(&edge).unwrap(), 2.0);
        assert_eq!(hub_lower_bound(&edge).unwrap(), 0.25);
        let n = 8;
        let full = WeightedDigraph::from_dense(n, vec![1.0; n * n]).unwrap();
        assert!((hub_statistic(&full).unwrap() - 2.0 / n as f64).abs() < 1e-15);
        assert!(matches!(hub_statistic(&WeightedDigraph::zeros(2).unwrap()), Err(Error::ZeroGraph)));
    }

    #[test]
    fn hub_is_transpose_symmetric() {
        let mut rng = rng_from_seed(1);
        for n in 1..6 {
            let g = random_graph(&mut rng, n);
            assert_eq!(hub_statistic(&g).unwrap(), hub_statistic(&g.transpose()).unwrap());
        }
    }

    #[test]
    fn q2_examples() {
        assert_eq!(q2(&[1.0, 0.0, 0.0, 0.0]), 2.0);
        let mut rng = rng_from_seed(2);
        for _ in 0..50 {
            let n = rng.random_range(1..=10);
            let g = random_graph(&mut rng, n);
            let r = q2_identity_check(&g, Q2Mode::Exact).unwrap();
            assert!(r.abs_error <= 1e-10, "{r:?}");
        }
        let g = random_graph(&mut rng, 30);
        let r = q2_identity_check(&g, Q2Mode::MonteCarlo { samples: 20_000, seed: 4 }).unwrap();
        assert!(r.abs_error <= 4.0 * r.std_error);
        assert!(matches!(q2_identity_check(&g, Q2Mode::Exact), Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn q2_lipschitz_constant_is_four() {
        let mut rng = rng_from_seed(3);
        let simplex = |rng: &mut numeric::Rng| {
            let v: Vec<f64> = (0..4).map(|_| -rng.random::<f64>().ln()).collect();
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect::<Vec<_>>()
        };
        let mut steepest: f64 = 0.0;
        for _ in 0..1000 {
            let a = simplex(&mut rng);
            let b = simplex(&mut rng);
            let d: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum();
            steepest = steepest.max((q2(&a) - q2(&b)).abs() / d);
        }
        assert!(steepest <= 4.0 + 1e-12);
        // From e₁₁ toward e₂₂, q₂ = 2(1 − 2t)² while the ℓ₁ step is 2t.
        let t = 1e-6;
        let slope = (q2(&[1.0, 0.0, 0.0, 0.0]) - q2(&[1.0 - t, 0.0, 0.0, t])) / (2.0 * t);
        assert!((slope - 4.0).abs() < 1e-4, "{slope}");
    }

    #[test]
    fn required_edges_examples() {
        for eps in [0.05f64, 0.1, 0.3, 0.5, 0.9] {
            let direct = (64.0 * ((174.0 + (eps.powf(-0.5)).ln().sqrt()) / eps).powi(2)).ceil() as u64;
            let got = required_edges(eps, 8.0).unwrap();
            assert!(got.abs_diff(direct) <= 1, "{eps}: {got} vs {direct}");
        }
        assert_eq!(required_edges(0.1, 8.0).unwrap(), 196_163_517);
        let near_one = required_edges(1.0 - 1e-12, 1.0).unwrap();
        assert!((30_276..=30_278).contains(&near_one));
        assert!(matches!(required_edges(1.0, 1.0), Err(Error::InvalidEpsilon(_))));
        assert!(matches!(required_edges(0.0, 1.0), Err(Error::InvalidEpsilon(_))));
        assert!(required_edges(0.5, 0.0).is_err());
    }

    #[test]
    fn registration_rejects_non_invariant_parameters() {
        let bad = TestableParameter::register("vertex count", |g| Ok(g.n() as f64), None, 1e-9);
        assert!(matches!(bad, Err(Error::NotInvariant { .. })));
        let first = TestableParameter::register("first entry", |g| Ok(g.get(0, 1)), None, 1e-9);
        assert!(matches!(first, Err(Error::NotInvariant { .. })));
    }

    #[test]
    fn quotient_density_parameter_examples() {
        let p = register_quotient_density_parameter(&Multigraph::edge()).unwrap();
        assert_eq!(p.lipschitz(), Some(4.0));
        let edge = NormalizedGraph::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        assert!((p.evaluate(&edge).unwrap() - 0.25).abs() < 1e-12);
        let lp = register_quotient_density_parameter(&Multigraph::self_loop()).unwrap();
        let mut rng = rng_from_seed(5);
        for n in [1, 4, 40] {
            assert!((lp.evaluate(&random_graph(&mut rng, n)).unwrap() - 1.0).abs() < 1e-12);
        }
        // Large graphs fall back to a reproducible Monte Carlo estimate.
        let big = random_graph(&mut rng, 40);
        let a = p.evaluate(&big).unwrap();
        assert_eq!(a, p.evaluate(&big).unwrap());
        assert_eq!(a, p.evaluate(&big.pad_isolated(3)).unwrap());
    }

    #[test]
    fn edge_sampling_examples() {
        let edge = WeightedDigraph::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        let hub = hub_parameter();
        for k in [1, 10, 1000] {
            let (v, cert) = test_parameter_by_edge_sampling(&edge, &hub, k, Some(0.1), 7).unwrap();
            assert_eq!(v, 2.0);
            assert_eq!(cert.log_base, "natural");
            assert_eq!(cert.required_edges, Some(196_163_517));
            assert!(cert.guarantee.is_none());
        }
        let smooth = TestableParameter::register("scaled hub", |g| Ok(hub_statistic(g)? / 800.0), Some(0.01), 1e-12).unwrap();
        let need = required_edges(0.1, 0.01).unwrap();
        let (_, cert) = test_parameter_by_edge_sampling(&edge, &smooth, need as usize, Some(0.1), 7).unwrap();
        assert_eq!(cert.guarantee, Some(Guarantee { epsilon: 0.1, confidence: 0.9 }));
    }

    #[test]
    fn hub_statistic_of_approximants_approaches_limit() {
        let m = Grapheur::new(vec![vec![0.3, 0.1]], vec![0.1], vec![0.0, 0.2], 0.3, 0.0).unwrap();
        let limit = m.hub_statistic_limit();
        let gaps: Vec<f64> = [50, 100, 200]
            .iter()
            .map(|&n| (hub_statistic(&m.approx_sequence(n).unwrap()).unwrap() - limit).abs())
            .collect();
        assert!(gaps[0] >= gaps[1] && gaps[1] >= gaps[2], "{gaps:?}");
        assert!(gaps[2] <= 0.05);
    }
}
