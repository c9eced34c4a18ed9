//! Distances between grapheurs: rectangle discrepancy of planar measures,
//! empirical Wasserstein-1 between random quotient laws, and `W□` brackets.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{budget, Error, Result};
use crate::grapheur::{heap_permutations, Grapheur, MeasureRealization};
use crate::graph::NormalizedGraph;
use crate::numeric::{self, substream, Estimate, Rng, RunningStats};

/// Default cap on the combined atom count of [`rect_discrepancy`].
pub const DEFAULT_RECT_CAP: usize = 5000;

/// Largest cloud accepted by the exact transport solver.
pub const OT_CAP: usize = 1000;

/// Batches used for the standard error of [`w1_random_graphs`].
pub const OT_BATCHES: usize = 5;

/// Pilot trials per candidate alignment in [`w_square_upper_coupled`].
pub const ALIGNMENT_PILOT: usize = 32;

/// A finite measure on `[0,1]²`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AtomicMeasure2D {
    atoms: Vec<(f64, f64, f64)>,
}

impl AtomicMeasure2D {
    /// Coordinates must lie in `[0,1]`, weights must be nonnegative and
    /// total mass at most `1 + 1e-12`.
    pub fn new(atoms: Vec<(f64, f64, f64)>) -> Result<Self> {
        for &(x, y, w) in &atoms {
            if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
                return Err(Error::InvalidInput(format!("atom ({x}, {y}) outside the unit square")));
            }
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::InvalidInput(format!("atom weight {w} is negative or not finite")));
            }
        }
        let m = AtomicMeasure2D { atoms };
        if m.total_mass() > 1.0 + 1e-12 {
            return Err(Error::InvalidInput(format!("total mass {} exceeds 1", m.total_mass())));
        }
        Ok(m)
    }

    pub fn atoms(&self) -> &[(f64, f64, f64)] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        numeric::sum(self.atoms.iter().map(|a| a.2))
    }

    /// Mass of the closed rectangle `[x0,x1] × [y0,y1]`.
    pub fn rect_mass(&self, x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
        numeric::sum(
            self.atoms
                .iter()
                .filter(|&&(x, y, _)| x0 <= x && x <= x1 && y0 <= y && y <= y1)
                .map(|a| a.2),
        )
    }
}

fn compress(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// `sup_R |μ1(R) − μ2(R)|` over closed axis-aligned rectangles, exactly.
pub fn rect_discrepancy(mu1: &AtomicMeasure2D, mu2: &AtomicMeasure2D) -> Result<f64> {
    rect_discrepancy_with_cap(mu1, mu2, DEFAULT_RECT_CAP)
}

/// [`rect_discrepancy`] with an explicit cap on the combined atom count.
///
/// The optimum is attained on rectangles whose sides pass through atom
/// coordinates, so both axes are compressed to atom coordinates. For each
/// range of compressed rows the column sums are scanned for their maximum
/// and minimum contiguous sums.
pub fn rect_discrepancy_with_cap(mu1: &AtomicMeasure2D, mu2: &AtomicMeasure2D, cap: usize) -> Result<f64> {
    let m = mu1.len() + mu2.len();
    budget("rectangle discrepancy atoms", m as f64, cap as f64)?;
    let all = || mu1.atoms.iter().map(|&a| (a, 1.0)).chain(mu2.atoms.iter().map(|&a| (a, -1.0)));
    let xs = compress(all().map(|((x, _, _), _)| x));
    let ys = compress(all().map(|((_, y, _), _)| y));
    let (nx, ny) = (xs.len(), ys.len());
    if nx == 0 {
        return Ok(0.0);
    }
    let mut grid = vec![0.0; nx * ny];
    for ((x, y, w), sign) in all() {
        let i = xs.binary_search_by(|p| p.total_cmp(&x)).unwrap();
        let j = ys.binary_search_by(|p| p.total_cmp(&y)).unwrap();
        grid[i * ny + j] += sign * w;
    }
    let best = (0..nx)
        .into_par_iter()
        .map(|top| {
            let mut cols = vec![0.0; ny];
            let mut best: f64 = 0.0;
            for bottom in top..nx {
                for (c, g) in cols.iter_mut().zip(&grid[bottom * ny..(bottom + 1) * ny]) {
                    *c += g;
                }
                let (mut hi, mut lo) = (0.0f64, 0.0f64);
                for &c in &cols {
                    hi = c + hi.max(0.0);
                    lo = c + lo.min(0.0);
                    best = best.max(hi).max(-lo);
                }
            }
            best
        })
        .reduce(|| 0.0, f64::max);
    Ok(best)
}

/// Minimum-cost perfect matching of a square cost matrix (Hungarian method
/// with potentials, `O(n³)`). Returns the total cost and the column
/// assigned to each row.
pub fn hungarian(n: usize, cost: &[f64]) -> Result<(f64, Vec<usize>)> {
    if cost.len() != n * n {
        return Err(Error::DimensionMismatch {
            expected: n * n,
            got: cost.len(),
        });
    }
    // 1-based arrays; index 0 is the virtual source column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    let total = numeric::sum((0..n).map(|i| cost[i * n + assignment[i]]));
    Ok((total, assignment))
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Exact `W₁` between two uniform clouds of equal size under the `ℓ₁` cost.
pub fn empirical_w1(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let n = a.len();
    budget("transport problem size", n as f64, OT_CAP as f64)?;
    if n == 0 {
        return Ok(0.0);
    }
    let cost: Vec<f64> = a.iter().flat_map(|x| b.iter().map(move |y| l1(x, y))).collect();
    Ok(hungarian(n, &cost)?.0 / n as f64)
}

/// Draws `n` samples with per-sample substreams of `seed`, in parallel.
fn draw_cloud<F>(sampler: &F, k: usize, n: usize, seed: u64) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&mut Rng) -> Result<NormalizedGraph> + Sync,
{
    (0..n)
        .into_par_iter()
        .map(|i| {
            let g = sampler(&mut substream(seed, i as u64))?;
            if g.n() != k {
                return Err(Error::DimensionMismatch { expected: k, got: g.n() });
            }
            Ok(g.to_dense())
        })
        .collect()
}

/// Empirical `W₁` between the laws of two random `k × k` graphs.
///
/// The estimate is the exact transport cost between the full clouds; the
/// standard error is the spread of the costs of [`OT_BATCHES`] disjoint
/// batches divided by `√OT_BATCHES`.
pub fn w1_random_graphs<A, B>(sampler_a: A, sampler_b: B, k: usize, n_samples: usize, rng: &mut Rng) -> Result<Estimate>
where
    A: Fn(&mut Rng) -> Result<NormalizedGraph> + Sync,
    B: Fn(&mut Rng) -> Result<NormalizedGraph> + Sync,
{
    if n_samples < 10 {
        return Err(Error::InvalidInput("need at least 10 samples".into()));
    }
    budget("transport problem size", n_samples as f64, OT_CAP as f64)?;
    let (seed_a, seed_b) = (rng.random::<u64>(), rng.random::<u64>());
    let a = draw_cloud(&sampler_a, k, n_samples, seed_a)?;
    let b = draw_cloud(&sampler_b, k, n_samples, seed_b)?;
    let size = n_samples / OT_BATCHES;
    let batches: Vec<f64> = (0..OT_BATCHES)
        .into_par_iter()
        .map(|i| empirical_w1(&a[i * size..(i + 1) * size], &b[i * size..(i + 1) * size]))
        .collect::<Result<_>>()?;
    let spread: RunningStats = batches.into_iter().collect();
    Ok(Estimate {
        mean: empirical_w1(&a, &b)?,
        std_error: spread.std_dev() / (OT_BATCHES as f64).sqrt(),
    })
}

/// Per-`k` diagnostics of a [`DistanceBracket`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BracketRow {
    pub k: usize,
    pub w1: f64,
    pub std_error: f64,
    /// `W₁` between two independent clouds from the first law, a proxy for
    /// the upward bias of the empirical estimate.
    pub self_distance: f64,
}

/// Lower and upper bounds on `W□`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceBracket {
    pub lower: f64,
    pub upper: f64,
    pub per_k: Vec<BracketRow>,
}

impl DistanceBracket {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

/// Brackets `W□(M1, M2)` from quotient laws:
/// `W₁(G_k[M1], G_k[M2]) / k² ≤ W□ ≤ W₁(G_k[M1], G_k[M2]) + 4/k`.
///
/// The lower bound subtracts the self-distance and two standard errors and
/// is floored at 0. The upper bound adds two standard errors and is capped
/// at 1, the largest possible discrepancy between probability measures.
pub fn w_square_bracket(
    m1: &Grapheur,
    m2: &Grapheur,
    ks: &[usize],
    n_samples: usize,
    rng: &mut Rng,
) -> Result<DistanceBracket> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::InvalidInput("ks must be a nonempty list of positive sizes".into()));
    }
    let mut per_k = Vec::with_capacity(ks.len());
    for &k in ks {
        let draw1 = |r: &mut Rng| m1.grid_quotient_sample(k, r);
        let draw2 = |r: &mut Rng| m2.grid_quotient_sample(k, r);
        let w = w1_random_graphs(draw1, draw2, k, n_samples, rng)?;
        let bias = w1_random_graphs(draw1, draw1, k, n_samples, rng)?;
        per_k.push(BracketRow {
            k,
            w1: w.mean,
            std_error: w.std_error,
            self_distance: bias.mean,
        });
    }
    let lower = per_k
        .iter()
        .map(|r| (r.w1 - r.self_distance - 2.0 * r.std_error).max(0.0) / (r.k * r.k) as f64)
        .fold(0.0, f64::max);
    let upper = per_k
        .iter()
        .map(|r| r.w1 + 4.0 / r.k as f64 + 2.0 * r.std_error)
        .fold(1.0, f64::min);
    Ok(DistanceBracket { lower, upper, per_k })
}

/// `sup_R |μ1(R) − μ2(R)|` for realizations sharing hub locations, where
/// hub `i` of `m1` sits with hub `align[i]` of `m2`.
fn coupled_trial(m1: &Grapheur, m2: &Grapheur, align: &[usize], grid: Option<usize>, rng: &mut Rng) -> Result<f64> {
    let size = align.len();
    let t: Vec<f64> = loop {
        let t: Vec<f64> = (0..size).map(|_| rng.random::<f64>()).collect();
        let mut s = t.clone();
        s.sort_by(f64::total_cmp);
        if s.windows(2).all(|w| w[0] < w[1]) {
            break t;
        }
    };
    let t1 = t[..m1.support_size()].to_vec();
    let t2 = (0..m2.support_size())
        .map(|j| t[align.iter().position(|&a| a == j).unwrap()])
        .collect();
    let r1 = MeasureRealization::with_locations(m1, t1)?;
    let r2 = MeasureRealization::with_locations(m2, t2)?;
    rect_discrepancy(&r1.to_atomic(grid)?, &r2.to_atomic(grid)?)
}

/// Upper estimate of `W□(M1, M2)` from the coupling that shares hub
/// locations. Continuous parts need `grid = Some(g)` and add up to `8/g`.
///
/// Any alignment of hubs gives a valid coupling. With at most six hubs on
/// the larger side every alignment is scored on a pilot batch and the best
/// is kept; otherwise hubs are aligned in canonical order. The reported
/// trials are independent of the pilot.
pub fn w_square_upper_coupled(
    m1: &Grapheur,
    m2: &Grapheur,
    n_trials: usize,
    grid: Option<usize>,
    rng: &mut Rng,
) -> Result<Estimate> {
    if n_trials < 2 {
        return Err(Error::InvalidInput("need at least two trials".into()));
    }
    for m in [m1, m2] {
        if !m.is_atomic() && grid.is_none_or(|g| g == 0) {
            return Err(Error::UnsupportedContinuousComponent);
        }
    }
    let size = m1.support_size().max(m2.support_size());
    let identity: Vec<usize> = (0..size).collect();
    let align = if size <= 6 && size > 1 {
        let mut candidates = Vec::new();
        let mut perm = identity.clone();
        heap_permutations(&mut perm, size, &mut |p| candidates.push(p.to_vec()));
        let pilot_seed = rng.random::<u64>();
        let scores: Vec<f64> = candidates
            .par_iter()
            .map(|align| {
                let mut r = substream(pilot_seed, 0);
                let mut total = 0.0;
                for _ in 0..ALIGNMENT_PILOT {
                    total += coupled_trial(m1, m2, align, grid, &mut r)?;
                }
                Ok(total)
            })
            .collect::<Result<_>>()?;
        let best = (0..candidates.len())
            .min_by(|&a, &b| scores[a].total_cmp(&scores[b]))
            .unwrap();
        candidates.swap_remove(best)
    } else {
        identity
    };
    let seed = rng.random::<u64>();
    let values: Vec<f64> = (0..n_trials)
        .into_par_iter()
        .map(|i| coupled_trial(m1, m2, &align, grid, &mut substream(seed, i as u64)))
        .collect::<Result<_>>()?;
    Ok(Estimate::from(&values.into_iter().collect::<RunningStats>()))
}
