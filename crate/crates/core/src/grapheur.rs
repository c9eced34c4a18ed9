//! Grapheurs: the limit objects of quotient-convergent graph sequences.
//!
//! A grapheur is the law of a random exchangeable measure on `[0,1]²` built
//! from iid uniform locations `T_i`:
//!
//! ```text
//! Σ E_ij δ(T_i,T_j) + Σ σ_i δ(T_i)⊗λ + Σ ς_j λ⊗δ(T_j) + θ λ² + ϑ λ_D
//! ```
//!
//! Only finitely many hubs are stored, in a square array indexed by hub.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::combinatorics::Multigraph;
use crate::error::{budget, Error, Result};
use crate::graph::{for_each_map, NormalizedGraph, WeightedDigraph};
use crate::metrics::AtomicMeasure2D;
use crate::numeric::{self, CompensatedSum, Estimate, RunningStats};

/// Tolerance on the total mass of a grapheur.
pub const MASS_TOL: f64 = 1e-12;

/// Mass drift accepted (and rescaled away) when reading a grapheur.
pub const READ_MASS_TOL: f64 = 1e-9;

/// Hub weights below this are folded into the uniform component by
/// [`Grapheur::truncated`].
pub const DEFAULT_TRUNCATION_FLOOR: f64 = 1e-9;

/// Tolerance used by [`Grapheur::approx_eq`].
pub const EQUALITY_TOL: f64 = 1e-9;

/// A grapheur `(E, σ, ς, θ, ϑ)` with finitely many hubs.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GrapheurRepr", into = "GrapheurRepr")]
pub struct Grapheur {
    m: usize,
    e: Vec<f64>,
    sigma: Vec<f64>,
    varsigma: Vec<f64>,
    theta: f64,
    vartheta: f64,
}

#[derive(Serialize, Deserialize)]
struct GrapheurRepr {
    #[serde(rename = "E", default)]
    e: Vec<Vec<f64>>,
    #[serde(default)]
    sigma: Vec<f64>,
    #[serde(default)]
    varsigma: Vec<f64>,
    #[serde(default)]
    theta: f64,
    #[serde(default)]
    vartheta: f64,
}

impl TryFrom<GrapheurRepr> for Grapheur {
    type Error = Error;

    fn try_from(r: GrapheurRepr) -> Result<Self> {
        let g = Grapheur::new(r.e, r.sigma, r.varsigma, r.theta, r.vartheta)?;
        Ok(g.truncated(DEFAULT_TRUNCATION_FLOOR))
    }
}

impl From<Grapheur> for GrapheurRepr {
    fn from(g: Grapheur) -> Self {
        GrapheurRepr {
            e: g.e_rows(),
            sigma: g.sigma,
            varsigma: g.varsigma,
            theta: g.theta,
            vartheta: g.vartheta,
        }
    }
}

fn check_nonneg(x: f64, what: &str) -> Result<()> {
    if x.is_finite() && x >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} must be finite and nonnegative, got {x}")))
    }
}

impl Grapheur {
    /// Builds and canonicalizes a grapheur. `E` may be rectangular (`r × c`);
    /// it is padded with zeros to a square over `max(r, c, |σ|, |ς|)` hubs.
    /// The total mass must be 1 within [`READ_MASS_TOL`].
    pub fn new(
        e: Vec<Vec<f64>>,
        sigma: Vec<f64>,
        varsigma: Vec<f64>,
        theta: f64,
        vartheta: f64,
    ) -> Result<Self> {
        let cols = e.iter().map(Vec::len).max().unwrap_or(0);
        let m = e.len().max(cols).max(sigma.len()).max(varsigma.len());
        let mut flat = vec![0.0; m * m];
        for (i, row) in e.iter().enumerate() {
            for (j, &x) in row.iter().enumerate() {
                check_nonneg(x, "E entries")?;
                flat[i * m + j] = x;
            }
        }
        let pad = |v: Vec<f64>, what: &str| -> Result<Vec<f64>> {
            for &x in &v {
                check_nonneg(x, what)?;
            }
            let mut v = v;
            v.resize(m, 0.0);
            Ok(v)
        };
        let sigma = pad(sigma, "sigma")?;
        let varsigma = pad(varsigma, "varsigma")?;
        check_nonneg(theta, "theta")?;
        check_nonneg(vartheta, "vartheta")?;
        let g = Grapheur {
            m,
            e: flat,
            sigma,
            varsigma,
            theta,
            vartheta,
        };
        let total = g.total_mass();
        if (total - 1.0).abs() > READ_MASS_TOL {
            return Err(Error::NotNormalized { total });
        }
        Ok(g.scaled(1.0 / total).canonical())
    }

    /// `θ = 1`: the uniform measure, the limit of dense and hub-free graphs.
    pub fn pure_theta() -> Self {
        Self::new(vec![], vec![], vec![], 1.0, 0.0).unwrap()
    }

    /// `ϑ = 1`: the diagonal measure, the limit of `I_n / n`.
    pub fn pure_vartheta() -> Self {
        Self::new(vec![], vec![], vec![], 0.0, 1.0).unwrap()
    }

    /// The grapheur of a single directed edge.
    pub fn single_edge() -> Self {
        Self::new(vec![vec![0.0, 1.0], vec![0.0, 0.0]], vec![], vec![], 0.0, 0.0).unwrap()
    }

    /// `M_G`: the atoms `G_ij δ(T_i, T_j)` of a finite graph.
    pub fn from_graph(g: &NormalizedGraph) -> Self {
        let (stripped, _) = g.strip_isolated();
        let m = stripped.n();
        Grapheur {
            m,
            e: stripped.to_dense(),
            sigma: vec![0.0; m],
            varsigma: vec![0.0; m],
            theta: 0.0,
            vartheta: 0.0,
        }
        .canonical()
    }

    /// Number of stored hubs.
    pub fn support_size(&self) -> usize {
        self.m
    }

    pub fn e(&self, i: usize, j: usize) -> f64 {
        self.e[i * self.m + j]
    }

    pub fn e_rows(&self) -> Vec<Vec<f64>> {
        if self.m == 0 {
            return Vec::new();
        }
        self.e.chunks(self.m).map(<[f64]>::to_vec).collect()
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn varsigma(&self) -> &[f64] {
        &self.varsigma
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn vartheta(&self) -> f64 {
        self.vartheta
    }

    pub fn total_mass(&self) -> f64 {
        numeric::sum(
            self.e
                .iter()
                .chain(&self.sigma)
                .chain(&self.varsigma)
                .copied()
                .chain([self.theta, self.vartheta]),
        )
    }

    /// `E1 + σ`: the out-weight of each hub.
    pub fn row_weights(&self) -> Vec<f64> {
        (0..self.m)
            .map(|i| numeric::sum((0..self.m).map(|j| self.e(i, j))) + self.sigma[i])
            .collect()
    }

    /// `Eᵀ1 + ς`: the in-weight of each hub.
    pub fn col_weights(&self) -> Vec<f64> {
        (0..self.m)
            .map(|j| numeric::sum((0..self.m).map(|i| self.e(i, j))) + self.varsigma[j])
            .collect()
    }

    /// Only atoms: no row, column, uniform or diagonal components.
    pub fn is_atomic(&self) -> bool {
        self.theta == 0.0
            && self.vartheta == 0.0
            && self.sigma.iter().all(|&x| x == 0.0)
            && self.varsigma.iter().all(|&x| x == 0.0)
    }

    fn scaled(mut self, factor: f64) -> Self {
        self.e.iter_mut().for_each(|x| *x *= factor);
        self.sigma.iter_mut().for_each(|x| *x *= factor);
        self.varsigma.iter_mut().for_each(|x| *x *= factor);
        self.theta *= factor;
        self.vartheta *= factor;
        self
    }

    fn sort_key(&self, i: usize) -> [f64; 5] {
        let row = numeric::sum((0..self.m).map(|j| self.e(i, j))) + self.sigma[i];
        let col = numeric::sum((0..self.m).map(|j| self.e(j, i))) + self.varsigma[i];
        [row, col, self.sigma[i], self.varsigma[i], self.e(i, i)]
    }

    fn reindexed(&self, order: &[usize]) -> Self {
        let m = order.len();
        let mut e = vec![0.0; m * m];
        for (p, &a) in order.iter().enumerate() {
            for (q, &b) in order.iter().enumerate() {
                e[p * m + q] = self.e(a, b);
            }
        }
        Grapheur {
            m,
            e,
            sigma: order.iter().map(|&i| self.sigma[i]).collect(),
            varsigma: order.iter().map(|&i| self.varsigma[i]).collect(),
            theta: self.theta,
            vartheta: self.vartheta,
        }
    }

    /// Drops hubs carrying no mass and orders the rest by decreasing
    /// out-weight, then in-weight, then `σ`, `ς` and loop weight. Idempotent.
    pub fn canonical(&self) -> Self {
        let mut order: Vec<usize> = (0..self.m)
            .filter(|&i| {
                self.sigma[i] > 0.0
                    || self.varsigma[i] > 0.0
                    || (0..self.m).any(|j| self.e(i, j) > 0.0 || self.e(j, i) > 0.0)
            })
            .collect();
        let keys: Vec<[f64; 5]> = (0..self.m).map(|i| self.sort_key(i)).collect();
        order.sort_by(|&a, &b| {
            keys[b]
                .iter()
                .zip(&keys[a])
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        self.reindexed(&order)
    }

    /// Moves every hub weight below `floor` into `θ` and canonicalizes. The
    /// change in any rectangle measure is at most the moved mass.
    pub fn truncated(&self, floor: f64) -> Self {
        let mut g = self.clone();
        let mut moved = CompensatedSum::new();
        for x in g.e.iter_mut().chain(g.sigma.iter_mut()).chain(g.varsigma.iter_mut()) {
            if *x > 0.0 && *x < floor {
                moved.add(*x);
                *x = 0.0;
            }
        }
        g.theta += moved.value();
        g.canonical()
    }

    /// Smallest `ℓ_∞` gap between the parameters of the two grapheurs over
    /// hub relabelings. Exhaustive up to 7 hubs; larger supports are compared
    /// in canonical order, which is exact when the sort keys are distinct.
    pub fn linf_distance(&self, other: &Self) -> f64 {
        let m = self.m.max(other.m);
        let a = self.padded(m);
        let b = other.padded(m);
        let scalar = (a.theta - b.theta).abs().max((a.vartheta - b.vartheta).abs());
        let gap = |perm: &[usize]| -> f64 {
            let mut worst: f64 = 0.0;
            for i in 0..m {
                let pi = perm[i];
                worst = worst
                    .max((a.sigma[i] - b.sigma[pi]).abs())
                    .max((a.varsigma[i] - b.varsigma[pi]).abs());
                for j in 0..m {
                    worst = worst.max((a.e(i, j) - b.e(pi, perm[j])).abs());
                }
            }
            worst
        };
        let identity: Vec<usize> = (0..m).collect();
        let best = if m <= 7 {
            let mut best = f64::INFINITY;
            let mut perm = identity.clone();
            heap_permutations(&mut perm, m, &mut |p| best = best.min(gap(p)));
            best
        } else {
            gap(&identity)
        };
        scalar.max(best)
    }

    fn padded(&self, m: usize) -> Self {
        let order: Vec<usize> = (0..self.m).collect();
        let mut g = self.reindexed(&order);
        if m > self.m {
            let mut e = vec![0.0; m * m];
            for i in 0..self.m {
                for j in 0..self.m {
                    e[i * m + j] = self.e(i, j);
                }
            }
            g.e = e;
            g.m = m;
            g.sigma.resize(m, 0.0);
            g.varsigma.resize(m, 0.0);
        }
        g
    }

    /// Equality up to hub relabeling and zero hubs, within [`EQUALITY_TOL`].
    pub fn approx_eq(&self, other: &Self) -> bool {
        self.linf_distance(other) <= EQUALITY_TOL
    }

    /// No hubs: `E = 0` and `σ = ς = 0`.
    pub fn hub_free(&self) -> bool {
        self.e.iter().chain(&self.sigma).chain(&self.varsigma).all(|&x| x == 0.0)
    }

    /// `‖E1 + σ‖² + ‖Eᵀ1 + ς‖²`, the limit of the hub statistic.
    pub fn hub_statistic_limit(&self) -> f64 {
        numeric::sum(self.row_weights().iter().chain(&self.col_weights()).map(|x| x * x))
    }

    /// `E μ([x0,x1] × [y0,y1])` under the random locations. Its gap between
    /// two grapheurs bounds `W□` from below.
    pub fn expected_rect_mass(&self, x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
        let len = |a: f64, b: f64| (b.min(1.0) - a.max(0.0)).max(0.0);
        let area = len(x0, x1) * len(y0, y1);
        let diag = len(x0.max(y0), x1.min(y1));
        let trace = numeric::sum((0..self.m).map(|i| self.e(i, i)));
        (1.0 - trace - self.vartheta) * area + (trace + self.vartheta) * diag
    }

    /// Symmetric class: `E` symmetric with zero diagonal, `σ = ς`, `ϑ = 0`.
    pub fn check_symmetric(&self) -> Result<()> {
        let tol = 1e-12;
        for i in 0..self.m {
            if self.e(i, i) != 0.0 {
                return Err(Error::NotSymmetricGrapheur(format!("E has a diagonal atom at {i}")));
            }
            if (self.sigma[i] - self.varsigma[i]).abs() > tol {
                return Err(Error::NotSymmetricGrapheur(format!("sigma and varsigma differ at {i}")));
            }
            for j in 0..i {
                if (self.e(i, j) - self.e(j, i)).abs() > tol {
                    return Err(Error::NotSymmetricGrapheur(format!("E is not symmetric at ({i}, {j})")));
                }
            }
        }
        if self.vartheta != 0.0 {
            return Err(Error::NotSymmetricGrapheur("vartheta is positive".into()));
        }
        Ok(())
    }

    /// Draws iid uniform hub locations (redrawn on the null event of a tie).
    pub fn sample_realization<R: Rng + ?Sized>(&self, rng: &mut R) -> MeasureRealization {
        loop {
            let locations: Vec<f64> = (0..self.m).map(|_| rng.random::<f64>()).collect();
            let mut sorted = locations.clone();
            sorted.sort_by(f64::total_cmp);
            if sorted.windows(2).all(|w| w[0] < w[1]) {
                return MeasureRealization {
                    grapheur: self.clone(),
                    locations,
                };
            }
        }
    }

    /// A sample of `G_k[M]`.
    pub fn grid_quotient_sample<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Result<NormalizedGraph> {
        self.sample_realization(rng).grid_quotient(k)
    }

    /// `E G_k[M] = θ′ 11ᵀ/k² + (1 − θ′) I/k` with `θ′ = 1 − ϑ − Tr E`.
    pub fn grid_quotient_mean(&self, k: usize) -> Result<WeightedDigraph> {
        if k == 0 {
            return Err(Error::InvalidInput("k must be positive".into()));
        }
        let theta_prime = self.implied_theta();
        let kf = k as f64;
        let mut w = vec![theta_prime / (kf * kf); k * k];
        for i in 0..k {
            w[i * k + i] += (1.0 - theta_prime) / kf;
        }
        WeightedDigraph::from_dense(k, w)
    }

    /// `θ′ = 1 − ϑ − Tr E`, the off-diagonal share of the mean quotient.
    pub fn implied_theta(&self) -> f64 {
        let trace = numeric::sum((0..self.m).map(|i| self.e(i, i)));
        (1.0 - self.vartheta - trace).clamp(0.0, 1.0)
    }

    /// Monte Carlo `t_Q(H; M) = E (G_k[M])^H` with `k = |V(H)|`.
    pub fn density_mc<R: Rng + ?Sized>(&self, h: &Multigraph, samples: usize, rng: &mut R) -> Result<Estimate> {
        if samples < 2 {
            return Err(Error::InvalidInput("need at least two samples".into()));
        }
        let mut stats = RunningStats::new();
        for _ in 0..samples {
            let q = self.grid_quotient_sample(h.k(), rng)?;
            stats.push(h.monomial(&q.to_dense()));
        }
        Ok(Estimate::from(&stats))
    }

    /// Exact `t_Q(H; M)` by enumerating the `k^m` cell assignments of the hubs.
    pub fn density_exact(&self, h: &Multigraph) -> Result<f64> {
        let k = h.k();
        budget("hub cell enumeration", numeric::pow_count(k, self.m), crate::combinatorics::DEFAULT_ENUMERATION_CAP)?;
        let mut acc = CompensatedSum::new();
        for_each_map(self.m, k, |cells| {
            let q = self.quotient_for_cells(cells, k);
            acc.add(h.monomial(&q));
        });
        Ok(acc.value() / numeric::pow_count(k, self.m))
    }

    fn quotient_for_cells(&self, cells: &[usize], k: usize) -> Vec<f64> {
        let kf = k as f64;
        let mut q = vec![self.theta / (kf * kf); k * k];
        for a in 0..k {
            q[a * k + a] += self.vartheta / kf;
        }
        for i in 0..self.m {
            let ci = cells[i];
            for j in 0..self.m {
                let x = self.e(i, j);
                if x != 0.0 {
                    q[ci * k + cells[j]] += x;
                }
            }
            if self.sigma[i] != 0.0 {
                for b in 0..k {
                    q[ci * k + b] += self.sigma[i] / kf;
                }
            }
            if self.varsigma[i] != 0.0 {
                for a in 0..k {
                    q[a * k + ci] += self.varsigma[i] / kf;
                }
            }
        }
        q
    }

    /// The finite graph `(E_ij + σ_i/n + ς_j/n + θ/n² + ϑ 1[i=j]/n) / s_n`
    /// on `n` vertices, which quotient-converges to `M`.
    pub fn approx_sequence(&self, n: usize) -> Result<NormalizedGraph> {
        if n == 0 {
            return Err(Error::InvalidInput("n must be positive".into()));
        }
        let nf = n as f64;
        let hub = |v: &[f64], i: usize| if i < self.m { v[i] } else { 0.0 };
        let mut w = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let atom = if i < self.m && j < self.m { self.e(i, j) } else { 0.0 };
                let mut x = atom + hub(&self.sigma, i) / nf + hub(&self.varsigma, j) / nf + self.theta / (nf * nf);
                if i == j {
                    x += self.vartheta / nf;
                }
                w[i * n + j] = x;
            }
        }
        let g = WeightedDigraph::from_dense(n, w)?;
        crate::graph::normalize(&g)
    }

    /// Samples of `⟨G2, G_k[M]⟩` for a simple graph `G2` on `k` vertices.
    pub fn pair_with_step_graphon<R: Rng + ?Sized>(
        &self,
        g2: &WeightedDigraph,
        samples: usize,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        self.check_symmetric()?;
        let k = g2.n();
        for i in 0..k {
            if g2.get(i, i) != 0.0 {
                return Err(Error::NotSimple(format!("self-loop at {i}")));
            }
        }
        for (i, j, w) in g2.entries() {
            if w != 1.0 || g2.get(j, i) != 1.0 {
                return Err(Error::NotSimple(format!("entry ({i}, {j}) is not a symmetric 0/1 edge")));
            }
        }
        let edges: Vec<(usize, usize)> = g2.entries().map(|(i, j, _)| (i, j)).collect();
        (0..samples)
            .map(|_| {
                let q = self.grid_quotient_sample(k, rng)?;
                Ok(numeric::sum(edges.iter().map(|&(i, j)| q.get(i, j))))
            })
            .collect()
    }
}

/// Heap's algorithm; calls `visit` on every permutation of `items[..n]`.
pub(crate) fn heap_permutations(items: &mut [usize], n: usize, visit: &mut dyn FnMut(&[usize])) {
    if n <= 1 {
        visit(items);
        return;
    }
    for i in 0..n - 1 {
        heap_permutations(items, n - 1, visit);
        if n % 2 == 0 {
            items.swap(i, n - 1);
        } else {
            items.swap(0, n - 1);
        }
    }
    heap_permutations(items, n - 1, visit);
}

impl fmt::Debug for Grapheur {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grapheur")
            .field("E", &self.e_rows())
            .field("sigma", &self.sigma)
            .field("varsigma", &self.varsigma)
            .field("theta", &self.theta)
            .field("vartheta", &self.vartheta)
            .finish()
    }
}

/// Estimates a grapheur from one large graph by thresholding.
///
/// Entries at least `tau_e` become atoms. In the residual, row and column
/// sums at least `tau_d` become `σ` and `ς`. The residual diagonal outside
/// those hubs becomes `ϑ`, and `θ` takes the remaining mass.
pub fn estimate_grapheur(g: &NormalizedGraph, tau_e: f64, tau_d: f64) -> Result<Grapheur> {
    for (name, tau) in [("edge threshold", tau_e), ("degree threshold", tau_d)] {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::InvalidInput(format!("{name} must lie in (0, 1), got {tau}")));
        }
    }
    let n = g.n();
    let mut atoms = Vec::new();
    let mut row_res = vec![0.0; n];
    let mut col_res = vec![0.0; n];
    let mut diag_res = vec![0.0; n];
    for (i, j, w) in g.entries() {
        if w >= tau_e {
            atoms.push((i, j, w));
        } else {
            row_res[i] += w;
            col_res[j] += w;
            if i == j {
                diag_res[i] = w;
            }
        }
    }
    let sigma: Vec<f64> = row_res.iter().map(|&x| if x >= tau_d { x } else { 0.0 }).collect();
    let varsigma: Vec<f64> = col_res.iter().map(|&x| if x >= tau_d { x } else { 0.0 }).collect();
    let vartheta = numeric::sum(
        (0..n)
            .filter(|&i| sigma[i] == 0.0 && varsigma[i] == 0.0)
            .map(|i| diag_res[i]),
    )
    .max(0.0);

    let mut hubs: Vec<usize> = atoms
        .iter()
        .flat_map(|&(i, j, _)| [i, j])
        .chain((0..n).filter(|&i| sigma[i] > 0.0 || varsigma[i] > 0.0))
        .collect();
    hubs.sort_unstable();
    hubs.dedup();
    let index = |v: usize| hubs.binary_search(&v).expect("hub index");
    let m = hubs.len();
    let mut e = vec![vec![0.0; m]; m];
    for &(i, j, w) in &atoms {
        e[index(i)][index(j)] = w;
    }
    let s: Vec<f64> = hubs.iter().map(|&h| sigma[h]).collect();
    let vs: Vec<f64> = hubs.iter().map(|&h| varsigma[h]).collect();
    let used = numeric::sum(
        atoms
            .iter()
            .map(|a| a.2)
            .chain(s.iter().copied())
            .chain(vs.iter().copied())
            .chain([vartheta]),
    );
    let theta = (1.0 - used).clamp(0.0, 1.0);
    let total = used + theta;
    let scale = 1.0 / total;
    let e = e.into_iter().map(|r| r.into_iter().map(|x| x * scale).collect()).collect();
    Grapheur::new(
        e,
        s.into_iter().map(|x| x * scale).collect(),
        vs.into_iter().map(|x| x * scale).collect(),
        theta * scale,
        vartheta * scale,
    )
}

/// One draw of the random measure: hub locations for a fixed grapheur.
#[derive(Clone, Debug)]
pub struct MeasureRealization {
    grapheur: Grapheur,
    locations: Vec<f64>,
}

impl MeasureRealization {
    /// A realization with given hub locations, which must be distinct points of `[0,1)`.
    pub fn with_locations(grapheur: &Grapheur, locations: Vec<f64>) -> Result<Self> {
        if locations.len() != grapheur.support_size() {
            return Err(Error::DimensionMismatch {
                expected: grapheur.support_size(),
                got: locations.len(),
            });
        }
        if locations.iter().any(|&t| !(0.0..1.0).contains(&t)) {
            return Err(Error::InvalidInput("locations must lie in [0, 1)".into()));
        }
        let mut sorted = locations.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput("locations must be distinct".into()));
        }
        Ok(MeasureRealization {
            grapheur: grapheur.clone(),
            locations,
        })
    }

    pub fn grapheur(&self) -> &Grapheur {
        &self.grapheur
    }

    pub fn locations(&self) -> &[f64] {
        &self.locations
    }

    /// Cell of each hub in the `k`-grid.
    pub fn cells(&self, k: usize) -> Vec<usize> {
        self.locations
            .iter()
            .map(|&t| ((t * k as f64) as usize).min(k - 1))
            .collect()
    }

    /// The grid quotient `G_k`: the measure of each cell `I_a × I_b`, computed
    /// from the hub cells and the closed-form masses of continuous parts.
    pub fn grid_quotient(&self, k: usize) -> Result<NormalizedGraph> {
        if k == 0 {
            return Err(Error::InvalidInput("k must be positive".into()));
        }
        let q = self.grapheur.quotient_for_cells(&self.cells(k), k);
        NormalizedGraph::from_dense(k, q)
    }

    /// Atoms `E_ij δ(T_i, T_j)` as a planar measure.
    ///
    /// With `grid = Some(g)` the continuous parts are discretized onto the
    /// centres of a `g × g` grid, which moves any rectangle measure by at most
    /// `4/g`. Without a grid, continuous parts are an error.
    pub fn to_atomic(&self, grid: Option<usize>) -> Result<AtomicMeasure2D> {
        let m = &self.grapheur;
        let t = &self.locations;
        let mut atoms = Vec::new();
        for i in 0..m.m {
            for j in 0..m.m {
                let w = m.e(i, j);
                if w > 0.0 {
                    atoms.push((t[i], t[j], w));
                }
            }
        }
        if !m.is_atomic() {
            let g = match grid {
                Some(g) if g > 0 => g,
                _ => return Err(Error::UnsupportedContinuousComponent),
            };
            let gf = g as f64;
            let centre = |b: usize| (b as f64 + 0.5) / gf;
            for i in 0..m.m {
                for b in 0..g {
                    if m.sigma[i] > 0.0 {
                        atoms.push((t[i], centre(b), m.sigma[i] / gf));
                    }
                    if m.varsigma[i] > 0.0 {
                        atoms.push((centre(b), t[i], m.varsigma[i] / gf));
                    }
                }
            }
            for a in 0..g {
                if m.vartheta > 0.0 {
                    atoms.push((centre(a), centre(a), m.vartheta / gf));
                }
                if m.theta > 0.0 {
                    for b in 0..g {
                        atoms.push((centre(a), centre(b), m.theta / (gf * gf)));
                    }
                }
            }
        }
        AtomicMeasure2D::new(atoms)
    }
}
