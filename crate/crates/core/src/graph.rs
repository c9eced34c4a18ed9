//! Weighted digraphs, partition maps and the quotient operator.
//!
//! A graph on `n` vertices is its nonnegative adjacency matrix; entry `(i, j)`
//! is the weight of the edge `i -> j`. Vertices are 0-based throughout the
//! library (the edge-list reader and writer translate ids).
//!
//! Graphs with at most [`DENSE_LIMIT`] vertices are stored densely; larger ones
//! keep a sorted coordinate list. Every operation behaves identically on both.

use std::fmt;
use std::ops::Deref;

use rand::Rng;
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::numeric;

/// Largest vertex count stored as a dense array.
pub const DENSE_LIMIT: usize = 4096;

/// Absolute tolerance on the total weight of a [`NormalizedGraph`].
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Largest drift from unit mass that constructors silently renormalize.
pub const RENORMALIZE_DRIFT: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
enum Storage {
    Dense(Vec<f64>),
    /// Sorted by `(row, col)`, unique coordinates, strictly positive weights.
    Sparse(Vec<(usize, usize, f64)>),
}

/// A weighted directed graph with nonnegative finite edge weights.
#[derive(Clone, PartialEq)]
pub struct WeightedDigraph {
    n: usize,
    storage: Storage,
}

fn check_weight(w: f64) -> Result<()> {
    if w.is_finite() && w >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "edge weights must be finite and nonnegative, got {w}"
        )))
    }
}

impl WeightedDigraph {
    /// Builds a graph from a row-major `n * n` weight array.
    pub fn from_dense(n: usize, weights: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("graph needs at least one vertex".into()));
        }
        if weights.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                got: weights.len(),
            });
        }
        for &w in &weights {
            check_weight(w)?;
        }
        if n > DENSE_LIMIT {
            let triplets = weights
                .iter()
                .enumerate()
                .filter(|(_, w)| **w > 0.0)
                .map(|(idx, &w)| (idx / n, idx % n, w))
                .collect();
            return Ok(Self {
                n,
                storage: Storage::Sparse(triplets),
            });
        }
        Ok(Self {
            n,
            storage: Storage::Dense(weights),
        })
    }

    /// Builds a graph from a square list of rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut weights = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: row.len(),
                });
            }
            weights.extend_from_slice(row);
        }
        Self::from_dense(n, weights)
    }

    /// Builds a graph from `(src, dst, weight)` triplets; duplicates are summed.
    pub fn from_triplets(
        n: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("graph needs at least one vertex".into()));
        }
        let mut list = Vec::new();
        for (i, j, w) in triplets {
            if i >= n || j >= n {
                return Err(Error::InvalidInput(format!(
                    "edge ({i}, {j}) out of range for {n} vertices"
                )));
            }
            check_weight(w)?;
            list.push((i, j, w));
        }
        if n <= DENSE_LIMIT {
            let mut weights = vec![0.0; n * n];
            for (i, j, w) in list {
                weights[i * n + j] += w;
            }
            return Ok(Self {
                n,
                storage: Storage::Dense(weights),
            });
        }
        list.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(list.len());
        for (i, j, w) in list {
            match merged.last_mut() {
                Some(last) if last.0 == i && last.1 == j => last.2 += w,
                _ => merged.push((i, j, w)),
            }
        }
        merged.retain(|e| e.2 > 0.0);
        Ok(Self {
            n,
            storage: Storage::Sparse(merged),
        })
    }

    /// The all-zero graph on `n` vertices.
    pub fn zeros(n: usize) -> Result<Self> {
        Self::from_triplets(n, std::iter::empty())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.storage, Storage::Dense(_))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        assert!(i < self.n && j < self.n, "index ({i}, {j}) out of range");
        match &self.storage {
            Storage::Dense(w) => w[i * self.n + j],
            Storage::Sparse(list) => list
                .binary_search_by(|e| (e.0, e.1).cmp(&(i, j)))
                .map(|idx| list[idx].2)
                .unwrap_or(0.0),
        }
    }

    /// Nonzero entries as `(row, col, weight)` in row-major order.
    pub fn entries(&self) -> Box<dyn Iterator<Item = (usize, usize, f64)> + '_> {
        match &self.storage {
            Storage::Dense(w) => {
                let n = self.n;
                Box::new(
                    w.iter()
                        .enumerate()
                        .filter(|(_, w)| **w != 0.0)
                        .map(move |(idx, &w)| (idx / n, idx % n, w)),
                )
            }
            Storage::Sparse(list) => Box::new(list.iter().copied()),
        }
    }

    /// Number of nonzero entries.
    pub fn nnz(&self) -> usize {
        match &self.storage {
            Storage::Dense(w) => w.iter().filter(|w| **w != 0.0).count(),
            Storage::Sparse(list) => list.len(),
        }
    }

    /// Row-major dense copy of the weights.
    pub fn to_dense(&self) -> Vec<f64> {
        match &self.storage {
            Storage::Dense(w) => w.clone(),
            Storage::Sparse(list) => {
                let mut w = vec![0.0; self.n * self.n];
                for &(i, j, x) in list {
                    w[i * self.n + j] = x;
                }
                w
            }
        }
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        let dense = self.to_dense();
        dense.chunks(self.n).map(<[f64]>::to_vec).collect()
    }

    /// Total edge weight `1ᵀG1`.
    pub fn total(&self) -> f64 {
        numeric::sum(self.entries().map(|e| e.2))
    }

    pub fn trace(&self) -> f64 {
        numeric::sum(self.entries().filter(|e| e.0 == e.1).map(|e| e.2))
    }

    /// Out-weights `G1`.
    pub fn row_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (i, _, w) in self.entries() {
            out[i] += w;
        }
        out
    }

    /// In-weights `Gᵀ1`.
    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (_, j, w) in self.entries() {
            out[j] += w;
        }
        out
    }

    fn with_entries(
        &self,
        n: usize,
        entries: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Self {
        Self::from_triplets(n, entries).expect("entries derived from a valid graph")
    }

    /// The quotient `ρ(f)G`: entry `(a, b)` sums the weights of all edges
    /// from fiber `f⁻¹(a)` to fiber `f⁻¹(b)`. Fibers may be empty.
    pub fn quotient(&self, f: &PartitionMap) -> Result<Self> {
        if f.n() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: f.n(),
            });
        }
        let img = f.images();
        Ok(self.with_entries(f.k(), self.entries().map(|(i, j, w)| (img[i], img[j], w))))
    }

    /// Relabels vertex `i` as `perm[i]`, i.e. `(πG)_{π(i),π(j)} = G_{i,j}`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.n)?;
        Ok(self.with_entries(self.n, self.entries().map(|(i, j, w)| (perm[i], perm[j], w))))
    }

    pub fn transpose(&self) -> Self {
        self.with_entries(self.n, self.entries().map(|(i, j, w)| (j, i, w)))
    }

    /// `(G + Gᵀ) / 2`.
    pub fn symmetrize(&self) -> Self {
        self.with_entries(
            self.n,
            self.entries()
                .flat_map(|(i, j, w)| [(i, j, w / 2.0), (j, i, w / 2.0)]),
        )
    }

    pub fn scale(&self, factor: f64) -> Result<Self> {
        check_weight(factor)?;
        Ok(self.with_entries(self.n, self.entries().map(|(i, j, w)| (i, j, w * factor))))
    }

    /// Indices of vertices with some incident weight (including self-loops).
    pub fn non_isolated(&self) -> Vec<usize> {
        let mut touched = vec![false; self.n];
        for (i, j, _) in self.entries() {
            touched[i] = true;
            touched[j] = true;
        }
        (0..self.n).filter(|&v| touched[v]).collect()
    }

    /// Removes isolated vertices, returning the induced graph and the kept
    /// original indices in increasing order. A graph with no edges keeps its
    /// first vertex so the result is never empty.
    pub fn strip_isolated(&self) -> (Self, Vec<usize>) {
        let mut kept = self.non_isolated();
        if kept.is_empty() {
            kept.push(0);
        }
        let mut relabel = vec![usize::MAX; self.n];
        for (new, &old) in kept.iter().enumerate() {
            relabel[old] = new;
        }
        let g = self.with_entries(
            kept.len(),
            self.entries()
                .map(|(i, j, w)| (relabel[i], relabel[j], w)),
        );
        (g, kept)
    }

    /// Appends `extra` isolated vertices.
    pub fn pad_isolated(&self, extra: usize) -> Self {
        self.with_entries(self.n + extra, self.entries())
    }

    /// Entrywise ℓ₁ distance; graphs must have equal size.
    pub fn l1_distance(&self, other: &Self) -> Result<f64> {
        if other.n != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: other.n,
            });
        }
        let a = self.to_dense();
        let b = other.to_dense();
        Ok(numeric::sum(a.iter().zip(&b).map(|(x, y)| (x - y).abs())))
    }
}

impl fmt::Debug for WeightedDigraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.n <= 16 {
            f.debug_struct("WeightedDigraph")
                .field("n", &self.n)
                .field("rows", &self.to_rows())
                .finish()
        } else {
            f.debug_struct("WeightedDigraph")
                .field("n", &self.n)
                .field("nnz", &self.nnz())
                .finish()
        }
    }
}

fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    if perm.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: perm.len(),
        });
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || std::mem::replace(&mut seen[p], true) {
            return Err(Error::InvalidInput("not a permutation".into()));
        }
    }
    Ok(())
}

/// A graph whose weights sum to one.
#[derive(Clone, PartialEq)]
pub struct NormalizedGraph(WeightedDigraph);

impl NormalizedGraph {
    /// Accepts `g` if its total weight is 1 within [`RENORMALIZE_DRIFT`]
    /// (rescaling away the drift), and rejects it otherwise.
    pub fn new(g: WeightedDigraph) -> Result<Self> {
        let total = g.total();
        if (total - 1.0).abs() <= NORMALIZATION_TOL {
            Ok(Self(g))
        } else if (total - 1.0).abs() <= RENORMALIZE_DRIFT {
            Ok(Self(g.scale(1.0 / total)?))
        } else {
            Err(Error::NotNormalized { total })
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(WeightedDigraph::from_rows(rows)?)
    }

    pub fn from_dense(n: usize, weights: Vec<f64>) -> Result<Self> {
        Self::new(WeightedDigraph::from_dense(n, weights)?)
    }

    pub fn as_digraph(&self) -> &WeightedDigraph {
        &self.0
    }

    pub fn into_digraph(self) -> WeightedDigraph {
        self.0
    }

    pub fn quotient(&self, f: &PartitionMap) -> Result<Self> {
        Ok(Self(self.0.quotient(f)?))
    }

    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        Ok(Self(self.0.permute(perm)?))
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn symmetrize(&self) -> Self {
        Self(self.0.symmetrize())
    }

    pub fn strip_isolated(&self) -> (Self, Vec<usize>) {
        let (g, kept) = self.0.strip_isolated();
        (Self(g), kept)
    }

    pub fn pad_isolated(&self, extra: usize) -> Self {
        Self(self.0.pad_isolated(extra))
    }
}

impl Deref for NormalizedGraph {
    type Target = WeightedDigraph;

    fn deref(&self) -> &WeightedDigraph {
        &self.0
    }
}

impl fmt::Debug for NormalizedGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// `G / 1ᵀG1`.
pub fn normalize(g: &WeightedDigraph) -> Result<NormalizedGraph> {
    let total = g.total();
    if total <= 0.0 {
        return Err(Error::ZeroGraph);
    }
    let scaled = g.scale(1.0 / total)?;
    NormalizedGraph::new(scaled)
}

/// A map `[n] -> [k]` (0-based images), viewed as an ordered partition of
/// `n` vertices into `k` possibly empty parts.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PartitionMap {
    k: usize,
    images: Vec<usize>,
}

impl PartitionMap {
    pub fn new(k: usize, images: Vec<usize>) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidInput("codomain must be nonempty".into()));
        }
        if let Some(&bad) = images.iter().find(|&&x| x >= k) {
            return Err(Error::InvalidInput(format!("image {bad} outside [0, {k})")));
        }
        Ok(Self { k, images })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            k: n,
            images: (0..n).collect(),
        }
    }

    pub fn constant(n: usize) -> Self {
        Self {
            k: 1,
            images: vec![0; n],
        }
    }

    pub fn n(&self) -> usize {
        self.images.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn images(&self) -> &[usize] {
        &self.images
    }

    pub fn apply(&self, i: usize) -> usize {
        self.images[i]
    }

    /// `after ∘ self`.
    pub fn then(&self, after: &PartitionMap) -> Result<Self> {
        if after.n() != self.k {
            return Err(Error::DimensionMismatch {
                expected: self.k,
                got: after.n(),
            });
        }
        Ok(Self {
            k: after.k,
            images: self.images.iter().map(|&i| after.images[i]).collect(),
        })
    }

    pub fn fiber_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &i in &self.images {
            sizes[i] += 1;
        }
        sizes
    }

    pub fn is_surjective(&self) -> bool {
        self.fiber_sizes().iter().all(|&s| s > 0)
    }
}

/// A uniformly random map `[n] -> [k]`: every vertex is sent to an
/// independent uniform part.
pub fn random_partition_map<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<PartitionMap> {
    if n == 0 || k == 0 {
        return Err(Error::InvalidInput("n and k must be positive".into()));
    }
    let images = (0..n).map(|_| rng.random_range(0..k)).collect();
    PartitionMap::new(k, images)
}

/// The canonical equipartition `[N] -> [k]` into contiguous blocks of size `N / k`.
pub fn equipartition_map(k: usize, total: usize) -> Result<PartitionMap> {
    if k == 0 || total == 0 {
        return Err(Error::InvalidInput("k and N must be positive".into()));
    }
    if total % k != 0 {
        return Err(Error::NotDivisible { k, n: total });
    }
    let block = total / k;
    PartitionMap::new(k, (0..total).map(|i| i / block).collect())
}

/// A uniformly random equipartition: the canonical one precomposed with a
/// uniform relabeling of `[N]`.
pub fn random_equipartition_map<R: Rng + ?Sized>(
    k: usize,
    total: usize,
    rng: &mut R,
) -> Result<PartitionMap> {
    let canonical = equipartition_map(k, total)?;
    let mut perm: Vec<usize> = (0..total).collect();
    perm.shuffle(rng);
    PartitionMap::new(k, perm.iter().map(|&p| canonical.apply(p)).collect())
}

/// Calls `visit` on every map `[n] -> [k]` in lexicographic order.
pub fn for_each_map(n: usize, k: usize, mut visit: impl FnMut(&[usize])) {
    let mut images = vec![0usize; n];
    loop {
        visit(&images);
        let mut pos = n;
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            images[pos] += 1;
            if images[pos] < k {
                break;
            }
            images[pos] = 0;
        }
    }
}
