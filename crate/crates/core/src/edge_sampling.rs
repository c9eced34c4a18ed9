//! Edge sampling from graphs and grapheurs, and the empirical-coupling
//! discrepancy experiment.

use std::collections::HashMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng as _;
use rand_distr::weighted::WeightedAliasIndex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grapheur::Grapheur;
use crate::graph::{NormalizedGraph, WeightedDigraph};
use crate::metrics::{rect_discrepancy, AtomicMeasure2D};
use crate::numeric::{self, substream, Rng, RunningStats};

/// Supports larger than this are sampled with an alias table.
pub const ALIAS_THRESHOLD: usize = 100_000;

/// Constant of the uniform rectangle-discrepancy bound `174/√n`.
pub const VC_CONSTANT: f64 = 174.0;

/// A categorical law over `0..len`: cumulative inversion for small supports,
/// alias tables for large ones. Both are deterministic given the stream.
pub enum Categorical {
    Cumulative(WeightedIndex<f64>),
    Alias(WeightedAliasIndex<f64>),
}

impl Categorical {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || numeric::sum(weights.iter().copied()) <= 0.0 {
            return Err(Error::ZeroGraph);
        }
        if weights.len() <= ALIAS_THRESHOLD {
            WeightedIndex::new(&weights)
                .map(Categorical::Cumulative)
                .map_err(|e| Error::InvalidInput(e.to_string()))
        } else {
            WeightedAliasIndex::new(weights)
                .map(Categorical::Alias)
                .map_err(|e| Error::InvalidInput(e.to_string()))
        }
    }

    pub fn sample(&self, rng: &mut Rng) -> usize {
        match self {
            Categorical::Cumulative(d) => d.sample(rng),
            Categorical::Alias(d) => d.sample(rng),
        }
    }
}

/// The grapheur component that produced a sampled edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    Atom(usize, usize),
    Row(usize),
    Col(usize),
    Uniform,
    Diagonal,
}

/// `n` sampled edges and the graph `G^(n)` they span.
#[derive(Clone, Debug)]
pub struct EdgeSample {
    pub edges: Vec<(f64, f64)>,
    /// Vertices are the distinct endpoints in order of first appearance;
    /// weights are multiplicities over `n`.
    pub graph: NormalizedGraph,
    pub provenance: Vec<Component>,
}

impl EdgeSample {
    fn from_edges(edges: Vec<(f64, f64)>, provenance: Vec<Component>) -> Result<Self> {
        let graph = graph_from_points(&edges)?;
        Ok(EdgeSample { edges, graph, provenance })
    }

    /// Vertices of `G^(n)`.
    pub fn vertex_count(&self) -> usize {
        self.graph.n()
    }

    /// Largest number of draws landing on one edge.
    pub fn max_multiplicity(&self) -> usize {
        let n = self.edges.len() as f64;
        self.graph.entries().map(|(_, _, w)| (w * n).round() as usize).max().unwrap_or(0)
    }
}

/// The graph on the distinct coordinates of `points`, one unit of weight per point.
fn graph_from_points(points: &[(f64, f64)]) -> Result<NormalizedGraph> {
    let mut ids: HashMap<u64, usize> = HashMap::new();
    let mut id = |x: f64| {
        let next = ids.len();
        *ids.entry(x.to_bits()).or_insert(next)
    };
    let triplets: Vec<(usize, usize, f64)> = points.iter().map(|&(x, y)| (id(x), id(y), 1.0)).collect();
    let n = ids.len();
    let g = WeightedDigraph::from_triplets(n, triplets)?;
    crate::graph::normalize(&g)
}

/// `n` iid edges of `G` drawn proportionally to weight. Vertices receive
/// uniform locations when first drawn.
pub fn sample_edges_from_graph(g: &WeightedDigraph, n: usize, rng: &mut Rng) -> Result<EdgeSample> {
    if n == 0 {
        return Err(Error::InvalidInput("n must be positive".into()));
    }
    let entries: Vec<(usize, usize, f64)> = g.entries().filter(|e| e.2 > 0.0).collect();
    if entries.is_empty() {
        return Err(Error::ZeroGraph);
    }
    let law = Categorical::new(entries.iter().map(|e| e.2).collect())?;
    let mut location: HashMap<usize, f64> = HashMap::new();
    let mut edges = Vec::with_capacity(n);
    let mut provenance = Vec::with_capacity(n);
    for _ in 0..n {
        let (i, j, _) = entries[law.sample(rng)];
        let x = *location.entry(i).or_insert_with(|| rng.random());
        let y = *location.entry(j).or_insert_with(|| rng.random());
        edges.push((x, y));
        provenance.push(Component::Atom(i, j));
    }
    EdgeSample::from_edges(edges, provenance)
}

/// `n` iid edges of one realization of `M`. Row, column, uniform and
/// diagonal components draw fresh uniform locations for each edge.
pub fn sample_edges_from_grapheur(m: &Grapheur, n: usize, rng: &mut Rng) -> Result<EdgeSample> {
    if n == 0 {
        return Err(Error::InvalidInput("n must be positive".into()));
    }
    let t = m.sample_realization(rng).locations().to_vec();
    let mut components = Vec::new();
    let mut weights = Vec::new();
    let mut push = |c: Component, w: f64| {
        if w > 0.0 {
            components.push(c);
            weights.push(w);
        }
    };
    let k = m.support_size();
    for i in 0..k {
        for j in 0..k {
            push(Component::Atom(i, j), m.e(i, j));
        }
    }
    for i in 0..k {
        push(Component::Row(i), m.sigma()[i]);
        push(Component::Col(i), m.varsigma()[i]);
    }
    push(Component::Uniform, m.theta());
    push(Component::Diagonal, m.vartheta());
    let law = Categorical::new(weights)?;
    let mut edges = Vec::with_capacity(n);
    let mut provenance = Vec::with_capacity(n);
    for _ in 0..n {
        let c = components[law.sample(rng)];
        let edge = match c {
            Component::Atom(i, j) => (t[i], t[j]),
            Component::Row(i) => (t[i], rng.random()),
            Component::Col(j) => (rng.random(), t[j]),
            Component::Uniform => (rng.random(), rng.random()),
            Component::Diagonal => {
                let u = rng.random();
                (u, u)
            }
        };
        edges.push(edge);
        provenance.push(c);
    }
    EdgeSample::from_edges(edges, provenance)
}

/// `n` iid draws from the atoms of `mu`, aggregated: returns the empirical
/// measure and the spanned graph.
fn sample_atoms(mu: &AtomicMeasure2D, n: usize, rng: &mut Rng) -> Result<(AtomicMeasure2D, NormalizedGraph)> {
    let law = Categorical::new(mu.atoms().iter().map(|a| a.2).collect())?;
    let mut counts = vec![0usize; mu.len()];
    for _ in 0..n {
        counts[law.sample(rng)] += 1;
    }
    let nf = n as f64;
    let drawn: Vec<(f64, f64, f64)> = mu
        .atoms()
        .iter()
        .zip(&counts)
        .filter(|(_, &c)| c > 0)
        .map(|(&(x, y, _), &c)| (x, y, c as f64 / nf))
        .collect();
    let mut ids: HashMap<u64, usize> = HashMap::new();
    let mut id = |x: f64| {
        let next = ids.len();
        *ids.entry(x.to_bits()).or_insert(next)
    };
    let triplets: Vec<(usize, usize, f64)> = drawn.iter().map(|&(x, y, w)| (id(x), id(y), w)).collect();
    let g = crate::graph::normalize(&WeightedDigraph::from_triplets(ids.len(), triplets)?)?;
    Ok((AtomicMeasure2D::new(drawn)?, g))
}

/// One trial of the coupling experiment: a realization `μ` of `M`, then `n`
/// iid points from `μ`, scored by `sup_R |μ(R) − μ_n(R)|`. Continuous
/// components need `grid = Some(g)`; they are discretized first.
pub fn coupled_rect_discrepancy_trial(m: &Grapheur, n: usize, grid: Option<usize>, rng: &mut Rng) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidInput("n must be positive".into()));
    }
    let mu = m.sample_realization(rng).to_atomic(grid)?;
    let (empirical, _) = sample_atoms(&mu, n, rng)?;
    rect_discrepancy(&mu, &empirical)
}

/// One row of the discrepancy experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyRow {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub bound: f64,
    /// Per-trial values, in trial order.
    #[serde(skip)]
    pub values: Vec<f64>,
}

/// `trials` coupled discrepancy trials for each `n`, in parallel over
/// substreams of `seed`, with the bound `174/√n`.
pub fn discrepancy_experiment(
    m: &Grapheur,
    ns: &[usize],
    trials: usize,
    grid: Option<usize>,
    seed: u64,
) -> Result<Vec<DiscrepancyRow>> {
    ns.iter()
        .enumerate()
        .map(|(idx, &n)| {
            let values: Vec<f64> = (0..trials)
                .into_par_iter()
                .map(|t| coupled_rect_discrepancy_trial(m, n, grid, &mut substream(seed, (idx * trials + t) as u64)))
                .collect::<Result<_>>()?;
            let stats: RunningStats = values.iter().copied().collect();
            Ok(DiscrepancyRow {
                n,
                mean: stats.mean(),
                std: stats.std_dev(),
                bound: VC_CONSTANT / (n as f64).sqrt(),
                values,
            })
        })
        .collect()
}

/// `k(ε) = ⌈(174/ε)²⌉`, the sample size that guarantees an `ε`-close graph.
pub fn szemeredi_edges(eps: f64) -> Result<u64> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidEpsilon(eps));
    }
    Ok((VC_CONSTANT / eps).powi(2).ceil() as u64)
}

/// Best of `trials` edge samples of size `k(ε)`, scored by the coupled
/// discrepancy against the realization they were drawn from.
pub fn szemeredi_approximant(
    m: &Grapheur,
    eps: f64,
    trials: usize,
    grid: Option<usize>,
    rng: &mut Rng,
) -> Result<(NormalizedGraph, f64)> {
    let k = szemeredi_edges(eps)? as usize;
    if trials == 0 {
        return Err(Error::InvalidInput("need at least one trial".into()));
    }
    let seed = rng.random::<u64>();
    let results: Vec<(NormalizedGraph, f64)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut r = substream(seed, t as u64);
            let mu = m.sample_realization(&mut r).to_atomic(grid)?;
            let (empirical, g) = sample_atoms(&mu, k, &mut r)?;
            Ok((g, rect_discrepancy(&mu, &empirical)?))
        })
        .collect::<Result<_>>()?;
    Ok(results
        .into_iter()
        .reduce(|best, next| if next.1 < best.1 { next } else { best })
        .unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{rng_from_seed, Estimate};
    use std::collections::BTreeMap;

    fn edge_graph() -> NormalizedGraph {
        NormalizedGraph::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap()
    }

    #[test]
    fn single_edge_graph_samples() {
        let mut rng = rng_from_seed(1);
        for n in [1, 5, 100] {
            let s = sample_edges_from_graph(&edge_graph(), n, &mut rng).unwrap();
            assert_eq!(s.graph.to_rows(), vec![vec![0.0, 1.0], vec![0.0, 0.0]]);
            assert_eq!(s.edges.len(), n);
        }
        assert!(matches!(
            sample_edges_from_graph(&WeightedDigraph::zeros(3).unwrap(), 5, &mut rng),
            Err(Error::ZeroGraph)
        ));
        assert!(sample_edges_from_graph(&edge_graph(), 0, &mut rng).is_err());
    }

    #[test]
    fn two_edges_are_binomial() {
        let g = NormalizedGraph::from_rows(&[vec![0.0, 0.5], vec![0.5, 0.0]]).unwrap();
        let n = 10_000;
        let s = sample_edges_from_graph(&g, n, &mut rng_from_seed(2)).unwrap();
        let hits = s.provenance.iter().filter(|&&c| c == Component::Atom(0, 1)).count() as f64;
        assert!((hits - 5000.0).abs() <= 3.0 * 50.0);
        let s2 = sample_edges_from_graph(&g, n, &mut rng_from_seed(2)).unwrap();
        assert_eq!(s.edges, s2.edges);
    }

    #[test]
    fn alias_and_cumulative_agree_in_law() {
        let w: Vec<f64> = (1..=4).map(f64::from).collect();
        let small = Categorical::new(w.clone()).unwrap();
        let alias = Categorical::Alias(WeightedAliasIndex::new(w).unwrap());
        let mut rng = rng_from_seed(3);
        for law in [small, alias] {
            let mut c = [0usize; 4];
            for _ in 0..40_000 {
                c[law.sample(&mut rng)] += 1;
            }
            for (i, &ci) in c.iter().enumerate() {
                let p = (i + 1) as f64 / 10.0;
                let sd = (40_000.0 * p * (1.0 - p)).sqrt();
                assert!((ci as f64 - 40_000.0 * p).abs() < 4.0 * sd);
            }
        }
        assert!(matches!(Categorical::new(vec![0.0, 0.0]), Err(Error::ZeroGraph)));
        let big = Categorical::new(vec![1.0; ALIAS_THRESHOLD + 1]).unwrap();
        assert!(matches!(big, Categorical::Alias(_)));
    }

    #[test]
    fn grapheur_sampling_examples() {
        let mut rng = rng_from_seed(4);
        let diag = sample_edges_from_grapheur(&Grapheur::pure_vartheta(), 50, &mut rng).unwrap();
        assert_eq!(diag.vertex_count(), 50);
        assert!(diag.edges.iter().all(|&(x, y)| x == y));
        assert_eq!(diag.graph.trace(), 1.0);
        let recurring = Grapheur::new(vec![vec![1.0]], vec![], vec![], 0.0, 0.0).unwrap();
        let s = sample_edges_from_grapheur(&recurring, 30, &mut rng).unwrap();
        assert_eq!(s.graph.to_rows(), vec![vec![1.0]]);
        let s = sample_edges_from_grapheur(&Grapheur::single_edge(), 30, &mut rng).unwrap();
        assert_eq!(s.graph.to_rows(), vec![vec![0.0, 1.0], vec![0.0, 0.0]]);
        let theta = sample_edges_from_grapheur(&Grapheur::pure_theta(), 20, &mut rng).unwrap();
        assert_eq!(theta.vertex_count(), 40);
    }

    #[test]
    fn graph_and_grapheur_samplers_agree_in_law() {
        let g = NormalizedGraph::from_rows(&[
            vec![0.1, 0.2, 0.0],
            vec![0.0, 0.3, 0.1],
            vec![0.25, 0.0, 0.05],
        ])
        .unwrap();
        let m = Grapheur::from_graph(&g);
        let n = 6;
        let trials = 10_000;
        let stats = |f: &dyn Fn(&mut Rng) -> EdgeSample| {
            let mut rng = rng_from_seed(5);
            let (mut v, mut mm) = (RunningStats::new(), RunningStats::new());
            for _ in 0..trials {
                let s = f(&mut rng);
                v.push(s.vertex_count() as f64);
                mm.push(s.max_multiplicity() as f64);
            }
            (Estimate::from(&v), Estimate::from(&mm))
        };
        let a = stats(&|r| sample_edges_from_graph(&g, n, r).unwrap());
        let b = stats(&|r| sample_edges_from_grapheur(&m, n, r).unwrap());
        assert!(numeric::z_score(a.0.mean, a.0.std_error, b.0.mean, b.0.std_error) < 4.0);
        assert!(numeric::z_score(a.1.mean, a.1.std_error, b.1.mean, b.1.std_error) < 4.0);
    }

    #[test]
    fn component_frequencies_match_parameters() {
        let m = Grapheur::new(vec![vec![0.2, 0.1]], vec![0.15, 0.05], vec![0.0, 0.1], 0.25, 0.15).unwrap();
        let n = 50_000;
        let s = sample_edges_from_grapheur(&m, n, &mut rng_from_seed(6)).unwrap();
        let mut freq: BTreeMap<&str, f64> = BTreeMap::new();
        for c in &s.provenance {
            let key = match c {
                Component::Atom(..) => "E",
                Component::Row(_) => "sigma",
                Component::Col(_) => "varsigma",
                Component::Uniform => "theta",
                Component::Diagonal => "vartheta",
            };
            *freq.entry(key).or_default() += 1.0 / n as f64;
        }
        let expected = [("E", 0.3), ("sigma", 0.2), ("varsigma", 0.1), ("theta", 0.25), ("vartheta", 0.15)];
        for (key, p) in expected {
            let sd = (p * (1.0 - p) / n as f64).sqrt();
            assert!((freq[key] - p).abs() < 3.0 * sd, "{key}");
        }
        assert!(s.vertex_count() <= 2 * n);
    }

    #[test]
    fn small_sample_moments_match_enumeration() {
        // G^(2) of a 2-edge graph: enumerate the 4 ordered draws.
        let g = NormalizedGraph::from_rows(&[vec![0.0, 0.75], vec![0.25, 0.0]]).unwrap();
        let h = crate::combinatorics::Multigraph::edge();
        let mut exact = 0.0;
        for (a, pa) in [((0, 1), 0.75), ((1, 0), 0.25)] {
            for (b, pb) in [((0, 1), 0.75), ((1, 0), 0.25)] {
                let mut w = vec![0.0; 4];
                w[a.0 * 2 + a.1] += 0.5;
                w[b.0 * 2 + b.1] += 0.5;
                let s = NormalizedGraph::from_dense(2, w).unwrap();
                exact += pa * pb * crate::combinatorics::quotient_density_exact(&h, &s).unwrap();
            }
        }
        let mut rng = rng_from_seed(7);
        let vals: RunningStats = (0..20_000)
            .map(|_| {
                let s = sample_edges_from_graph(&g, 2, &mut rng).unwrap();
                crate::combinatorics::quotient_density_exact(&h, &s.graph).unwrap()
            })
            .collect();
        assert!(Estimate::from(&vals).within(exact, 4.0));
    }

    #[test]
    fn coupled_trial_examples() {
        let mut rng = rng_from_seed(8);
        let one = Grapheur::new(vec![vec![1.0]], vec![], vec![], 0.0, 0.0).unwrap();
        assert_eq!(coupled_rect_discrepancy_trial(&one, 1, None, &mut rng).unwrap(), 0.0);
        let two = Grapheur::new(vec![vec![0.5, 0.0], vec![0.0, 0.5]], vec![], vec![], 0.0, 0.0).unwrap();
        let n = 20;
        let mut hist = vec![0usize; n + 1];
        let trials = 4000;
        for _ in 0..trials {
            let d = coupled_rect_discrepancy_trial(&two, n, None, &mut rng).unwrap();
            // |c/n − 1/2| takes values j/n for j = 0..=10.
            let j = (d * n as f64).round() as usize;
            assert!((d * n as f64 - j as f64).abs() < 1e-9);
            hist[j] += 1;
        }
        let binom = |c: usize| (0..c).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64) / 2f64.powi(n as i32);
        for j in 0..=3 {
            let p = if j == 0 { binom(10) } else { 2.0 * binom(10 - j) };
            let sd = (trials as f64 * p * (1.0 - p)).sqrt();
            assert!((hist[j] as f64 - trials as f64 * p).abs() < 4.0 * sd, "j={j}");
        }
        assert!(matches!(
            coupled_rect_discrepancy_trial(&Grapheur::pure_theta(), 5, None, &mut rng),
            Err(Error::UnsupportedContinuousComponent)
        ));
        assert!(coupled_rect_discrepancy_trial(&Grapheur::pure_theta(), 5, Some(4), &mut rng).is_ok());
    }

    #[test]
    fn experiment_is_reproducible_and_within_bound() {
        let m = Grapheur::new(vec![vec![0.3, 0.2], vec![0.1, 0.4]], vec![], vec![], 0.0, 0.0).unwrap();
        let a = discrepancy_experiment(&m, &[16, 64], 50, None, 9).unwrap();
        let b = discrepancy_experiment(&m, &[16, 64], 50, None, 9).unwrap();
        assert_eq!(a, b);
        for row in &a {
            assert!(row.mean <= row.bound);
        }
    }

    #[test]
    fn szemeredi_examples() {
        assert_eq!(szemeredi_edges(1.0).unwrap(), 30_276);
        assert!(matches!(szemeredi_edges(0.0), Err(Error::InvalidEpsilon(_))));
        let mut rng = rng_from_seed(10);
        let (g, d) = szemeredi_approximant(&Grapheur::single_edge(), 1.0, 2, None, &mut rng).unwrap();
        assert_eq!(d, 0.0);
        assert_eq!(g.to_rows(), vec![vec![0.0, 1.0], vec![0.0, 0.0]]);
        let m = Grapheur::new(vec![vec![0.3, 0.2], vec![0.1, 0.4]], vec![], vec![], 0.0, 0.0).unwrap();
        let (g, d) = szemeredi_approximant(&m, 0.9, 3, None, &mut rng).unwrap();
        assert!(d <= 0.9);
        assert!((g.total() - 1.0).abs() < 1e-12);
    }
}
