//! Multigraph patterns, homomorphism numbers and quotient densities.
//!
//! A pattern `H` is a `k × k` matrix of edge multiplicities without isolated
//! vertices. For a graph `G` the homomorphism number `hom(H; G)` sums the
//! monomial `Π G_{f(i),f(j)}^{H_{i,j}}` over all maps `f: [k] -> [n]`, and the
//! quotient density `t_Q(H; G)` averages `(ρ(F)G)^H` over uniform maps
//! `F: [n] -> [k]`.
//!
//! The refinement order relates the two. `K ≤_R H` when some surjection maps
//! `K` onto `H`, and `R_{K,H}` counts those surjections. Patterns are compared
//! up to isomorphism through [`Multigraph::canonical_form`].

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{budget, Error, Result};
use crate::graph::{NormalizedGraph, WeightedDigraph};
use crate::numeric::{self, powu, CompensatedSum, Estimate, RunningStats};

/// Default cap on the number of maps an exhaustive enumeration may visit.
pub const DEFAULT_ENUMERATION_CAP: f64 = 1e8;

/// Default cap on the edge count of patterns handled by the refinement poset.
pub const DEFAULT_POSET_EDGE_CAP: usize = 4;

/// A pattern multigraph: nonnegative integer adjacency, no isolated vertices.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "MultigraphRepr", into = "MultigraphRepr")]
pub struct Multigraph {
    k: usize,
    counts: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
struct MultigraphRepr {
    k: usize,
    counts: Vec<Vec<u32>>,
}

impl TryFrom<MultigraphRepr> for Multigraph {
    type Error = Error;

    fn try_from(r: MultigraphRepr) -> Result<Self> {
        if r.counts.len() != r.k {
            return Err(Error::DimensionMismatch {
                expected: r.k,
                got: r.counts.len(),
            });
        }
        Multigraph::from_rows(&r.counts)
    }
}

impl From<Multigraph> for MultigraphRepr {
    fn from(h: Multigraph) -> Self {
        MultigraphRepr {
            k: h.k,
            counts: h.rows(),
        }
    }
}

impl Multigraph {
    /// Builds a pattern from a row-major `k * k` array of multiplicities.
    pub fn new(k: usize, counts: Vec<u32>) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidInput("pattern needs at least one vertex".into()));
        }
        if counts.len() != k * k {
            return Err(Error::DimensionMismatch {
                expected: k * k,
                got: counts.len(),
            });
        }
        let h = Multigraph { k, counts };
        if let Some(v) = (0..k).find(|&v| h.out_degree(v) + h.in_degree(v) == 0) {
            return Err(Error::InvalidInput(format!("pattern vertex {v} is isolated")));
        }
        Ok(h)
    }

    pub fn from_rows(rows: &[Vec<u32>]) -> Result<Self> {
        let k = rows.len();
        let mut counts = Vec::with_capacity(k * k);
        for row in rows {
            if row.len() != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    got: row.len(),
                });
            }
            counts.extend_from_slice(row);
        }
        Self::new(k, counts)
    }

    /// Pattern with one edge per listed pair; vertex count is inferred.
    pub fn from_edges(edges: &[(usize, usize)]) -> Result<Self> {
        let k = edges.iter().map(|&(a, b)| a.max(b) + 1).max().unwrap_or(0);
        let mut counts = vec![0; k * k];
        for &(a, b) in edges {
            counts[a * k + b] += 1;
        }
        Self::new(k, counts)
    }

    /// The directed edge `0 -> 1`.
    pub fn edge() -> Self {
        Self::from_edges(&[(0, 1)]).unwrap()
    }

    /// A single vertex with one self-loop.
    pub fn self_loop() -> Self {
        Self::loops(1)
    }

    /// A single vertex carrying `m` self-loops.
    pub fn loops(m: u32) -> Self {
        Self::new(1, vec![m.max(1)]).unwrap()
    }

    /// The undirected edge as a pattern: both directions `0 <-> 1`.
    pub fn k2() -> Self {
        Self::from_edges(&[(0, 1), (1, 0)]).unwrap()
    }

    /// Centre `0` with `m` outgoing edges to distinct leaves.
    pub fn star_out(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidInput("star needs at least one leaf".into()));
        }
        Self::from_edges(&(1..=m).map(|l| (0, l)).collect::<Vec<_>>())
    }

    /// Centre `0` with `m` incoming edges from distinct leaves.
    pub fn star_in(m: usize) -> Result<Self> {
        Ok(Self::star_out(m)?.transpose())
    }

    /// Directed path `0 -> 1 -> ... -> m`.
    pub fn path(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidInput("path needs at least one edge".into()));
        }
        Self::from_edges(&(0..m).map(|i| (i, i + 1)).collect::<Vec<_>>())
    }

    /// Parses a named pattern (`edge`, `loop`, `K2`, `star-out:m`, `star-in:m`,
    /// `path:m`) or a JSON literal `{"k": .., "counts": [[..]]}`.
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        if spec.starts_with('{') {
            return Ok(serde_json::from_str(spec)?);
        }
        let (name, arg) = match spec.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (spec, None),
        };
        let arg = || -> Result<usize> {
            arg.ok_or_else(|| Error::InvalidInput(format!("pattern `{name}` needs `:m`")))?
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad size in pattern `{spec}`")))
        };
        match name {
            "edge" => Ok(Self::edge()),
            "loop" => Ok(Self::self_loop()),
            "K2" | "k2" => Ok(Self::k2()),
            "star-out" => Self::star_out(arg()?),
            "star-in" => Self::star_in(arg()?),
            "path" => Self::path(arg()?),
            _ => Err(Error::InvalidInput(format!("unknown pattern `{spec}`"))),
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn count(&self, i: usize, j: usize) -> u32 {
        self.counts[i * self.k + j]
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn rows(&self) -> Vec<Vec<u32>> {
        self.counts.chunks(self.k).map(<[u32]>::to_vec).collect()
    }

    /// Total edge count `‖H‖₁`.
    pub fn edge_count(&self) -> u32 {
        self.counts.iter().sum()
    }

    /// Largest multiplicity `‖H‖_∞`.
    pub fn max_multiplicity(&self) -> u32 {
        self.counts.iter().copied().max().unwrap_or(0)
    }

    pub fn out_degree(&self, v: usize) -> u32 {
        (0..self.k).map(|j| self.count(v, j)).sum()
    }

    pub fn in_degree(&self, v: usize) -> u32 {
        (0..self.k).map(|i| self.count(i, v)).sum()
    }

    /// `H! = Π H_{i,j}!`.
    pub fn factorial(&self) -> f64 {
        self.counts
            .iter()
            .map(|&c| (1..=c).map(f64::from).product::<f64>())
            .product()
    }

    /// Edges with repetition, in row-major order.
    pub fn edge_list(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.edge_count() as usize);
        for i in 0..self.k {
            for j in 0..self.k {
                for _ in 0..self.count(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let k = self.k;
        let counts = (0..k * k).map(|idx| self.count(idx % k, idx / k)).collect();
        Multigraph { k, counts }
    }

    /// Relabels vertex `i` as `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.k {
            return Err(Error::DimensionMismatch {
                expected: self.k,
                got: perm.len(),
            });
        }
        let mut counts = vec![0; self.k * self.k];
        for i in 0..self.k {
            for j in 0..self.k {
                counts[perm[i] * self.k + perm[j]] += self.count(i, j);
            }
        }
        Multigraph::new(self.k, counts)
    }

    /// The quotient `ρ(f)H` under a surjection `f: [k] -> [j]`.
    pub fn quotient(&self, images: &[usize]) -> Result<Self> {
        if images.len() != self.k {
            return Err(Error::DimensionMismatch {
                expected: self.k,
                got: images.len(),
            });
        }
        let j = images.iter().max().map_or(0, |m| m + 1);
        let mut counts = vec![0; j * j];
        for a in 0..self.k {
            for b in 0..self.k {
                counts[images[a] * j + images[b]] += self.count(a, b);
            }
        }
        Multigraph::new(j, counts)
            .map_err(|_| Error::InvalidInput("quotient map is not surjective".into()))
    }

    /// `H₁ ⊔ H₂`.
    pub fn disjoint_union(&self, other: &Self) -> Self {
        let k = self.k + other.k;
        let mut counts = vec![0; k * k];
        for i in 0..self.k {
            for j in 0..self.k {
                counts[i * k + j] = self.count(i, j);
            }
        }
        for i in 0..other.k {
            for j in 0..other.k {
                counts[(self.k + i) * k + self.k + j] = other.count(i, j);
            }
        }
        Multigraph { k, counts }
    }

    /// Isomorphism-invariant vertex keys: degrees and loops, refined once by
    /// the multiset of neighbour keys.
    fn vertex_keys(&self) -> Vec<Vec<u32>> {
        let base: Vec<[u32; 3]> = (0..self.k)
            .map(|v| [self.out_degree(v), self.in_degree(v), self.count(v, v)])
            .collect();
        (0..self.k)
            .map(|v| {
                let mut nbrs: Vec<[u32; 5]> = (0..self.k)
                    .filter(|&u| u != v && (self.count(v, u) > 0 || self.count(u, v) > 0))
                    .map(|u| {
                        [self.count(v, u), self.count(u, v), base[u][0], base[u][1], base[u][2]]
                    })
                    .collect();
                nbrs.sort_unstable();
                let mut key = base[v].to_vec();
                for n in nbrs {
                    key.extend_from_slice(&n);
                }
                key
            })
            .collect()
    }

    /// Minimizes the row-major counts over vertex orders compatible with the
    /// invariant keys. Returns the canonical pattern and the number of orders
    /// attaining the minimum, which equals `|Aut(H)|`.
    fn canonical_search(&self) -> (Multigraph, u64) {
        let keys = self.vertex_keys();
        let mut order: Vec<usize> = (0..self.k).collect();
        order.sort_by(|&a, &b| keys[b].cmp(&keys[a]));
        let mut classes: Vec<Vec<usize>> = Vec::new();
        for &v in &order {
            match classes.last_mut() {
                Some(c) if keys[c[0]] == keys[v] => c.push(v),
                _ => classes.push(vec![v]),
            }
        }
        let class_perms: Vec<Vec<Vec<usize>>> = classes.iter().map(|c| permutations(c)).collect();
        let mut choice = vec![0usize; classes.len()];
        let mut best: Option<Vec<u32>> = None;
        let mut ties = 0u64;
        let mut layout = Vec::with_capacity(self.k);
        let mut candidate = vec![0u32; self.k * self.k];
        loop {
            layout.clear();
            for (c, &pick) in choice.iter().enumerate() {
                layout.extend_from_slice(&class_perms[c][pick]);
            }
            for (p, &a) in layout.iter().enumerate() {
                for (q, &b) in layout.iter().enumerate() {
                    candidate[p * self.k + q] = self.count(a, b);
                }
            }
            match &best {
                Some(b) if candidate > *b => {}
                Some(b) if candidate == *b => ties += 1,
                _ => {
                    best = Some(candidate.clone());
                    ties = 1;
                }
            }
            let mut c = classes.len();
            loop {
                if c == 0 {
                    let counts = best.expect("at least one order");
                    return (Multigraph { k: self.k, counts }, ties);
                }
                c -= 1;
                choice[c] += 1;
                if choice[c] < class_perms[c].len() {
                    break;
                }
                choice[c] = 0;
            }
        }
    }

    /// A fixed representative of the isomorphism class.
    pub fn canonical_form(&self) -> Multigraph {
        self.canonical_search().0
    }

    /// `|Aut(H)|`, which equals `R_{H,H}`.
    pub fn automorphism_count(&self) -> u64 {
        self.canonical_search().1
    }

    pub fn is_isomorphic(&self, other: &Self) -> bool {
        self.k == other.k
            && self.edge_count() == other.edge_count()
            && self.canonical_form() == other.canonical_form()
    }

    /// `(ρG)^H` for a row-major `k × k` matrix `q`.
    pub fn monomial(&self, q: &[f64]) -> f64 {
        let mut prod = 1.0;
        for (idx, &c) in self.counts.iter().enumerate() {
            if c > 0 {
                prod *= powu(q[idx], c);
            }
        }
        prod
    }
}

impl fmt::Debug for Multigraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Multigraph{:?}", self.rows())
    }
}

impl fmt::Display for Multigraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<String> = self
            .rows()
            .iter()
            .map(|r| r.iter().map(u32::to_string).collect::<Vec<_>>().join(","))
            .collect();
        write!(f, "[{}]", rows.join(";"))
    }
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for (i, &first) in items.iter().enumerate() {
        let mut rest = items.to_vec();
        rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, first);
            out.push(tail);
        }
    }
    out
}

/// Calls `visit` on every set partition of `[len]`, as a restricted growth
/// string (block labels in order of first appearance).
pub fn for_each_set_partition(len: usize, mut visit: impl FnMut(&[usize], usize)) {
    fn rec(pos: usize, blocks: usize, labels: &mut Vec<usize>, visit: &mut dyn FnMut(&[usize], usize)) {
        if pos == labels.len() {
            visit(labels, blocks);
            return;
        }
        for b in 0..=blocks {
            labels[pos] = b;
            rec(pos + 1, blocks.max(b + 1), labels, visit);
        }
    }
    let mut labels = vec![0; len];
    rec(0, 0, &mut labels, &mut visit);
}

/// A pattern together with a surjection count.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PosetEntry {
    pub pattern: Multigraph,
    pub count: u64,
}

/// Every isomorphism class `K` with `H ≤_R K`, each with `R_{H,K}`.
/// Always contains `H` itself and the single vertex with `‖H‖₁` loops.
pub fn coarsenings(h: &Multigraph) -> Vec<PosetEntry> {
    let mut partitions: BTreeMap<Multigraph, u64> = BTreeMap::new();
    for_each_set_partition(h.k(), |labels, _| {
        let q = h.quotient(labels).expect("set partitions are surjective");
        *partitions.entry(q.canonical_form()).or_default() += 1;
    });
    let mut out: Vec<PosetEntry> = partitions
        .into_iter()
        .map(|(pattern, parts)| {
            let count = parts * pattern.automorphism_count();
            PosetEntry { pattern, count }
        })
        .collect();
    sort_entries(&mut out);
    out
}

/// Number of surjections `f: V(K) -> V(H)` with `ρ(f)K = H`.
pub fn count_surjections(kg: &Multigraph, h: &Multigraph) -> u64 {
    if kg.edge_count() != h.edge_count() || kg.k() < h.k() {
        return 0;
    }
    struct Search<'a> {
        kg: &'a Multigraph,
        h: &'a Multigraph,
        assign: Vec<usize>,
        partial: Vec<u32>,
        hits: Vec<u32>,
        covered: usize,
    }
    impl Search<'_> {
        fn rec(&mut self, p: usize) -> u64 {
            let (kk, hk) = (self.kg.k(), self.h.k());
            if p == kk {
                return u64::from(self.covered == hk);
            }
            if kk - p < hk - self.covered {
                return 0;
            }
            let mut total = 0;
            for a in 0..hk {
                let mut touched = Vec::new();
                let mut ok = true;
                for q in 0..=p {
                    let b = if q == p { a } else { self.assign[q] };
                    let pairs = if q == p {
                        [(a, a, self.kg.count(p, p)), (a, a, 0)]
                    } else {
                        [(a, b, self.kg.count(p, q)), (b, a, self.kg.count(q, p))]
                    };
                    for (x, y, c) in pairs {
                        if c == 0 {
                            continue;
                        }
                        let idx = x * hk + y;
                        self.partial[idx] += c;
                        touched.push((idx, c));
                        if self.partial[idx] > self.h.counts[idx] {
                            ok = false;
                        }
                    }
                }
                if ok {
                    self.assign[p] = a;
                    self.hits[a] += 1;
                    if self.hits[a] == 1 {
                        self.covered += 1;
                    }
                    total += self.rec(p + 1);
                    if self.hits[a] == 1 {
                        self.covered -= 1;
                    }
                    self.hits[a] -= 1;
                }
                for (idx, c) in touched {
                    self.partial[idx] -= c;
                }
            }
            total
        }
    }
    let mut s = Search {
        kg,
        h,
        assign: vec![0; kg.k()],
        partial: vec![0; h.k() * h.k()],
        hits: vec![0; h.k()],
        covered: 0,
    };
    s.rec(0)
}

/// Every isomorphism class `K` with `K ≤_R H`, each with `R_{K,H}`.
pub fn refinements(h: &Multigraph) -> Result<Vec<PosetEntry>> {
    refinements_with_cap(h, DEFAULT_POSET_EDGE_CAP)
}

/// [`refinements`] with an explicit cap on `‖H‖₁`.
///
/// A refinement splits each vertex `v` of `H` into the blocks of a partition
/// of the edge endpoints at `v`, so enumerating those partitions reaches
/// every class; surjection counts are then computed by backtracking.
pub fn refinements_with_cap(h: &Multigraph, max_edges: usize) -> Result<Vec<PosetEntry>> {
    budget("refinement poset edge count", f64::from(h.edge_count()), max_edges as f64)?;
    let edges = h.edge_list();
    // Endpoint slots per H-vertex: (edge index, is_head).
    let mut slots: Vec<Vec<(usize, bool)>> = vec![Vec::new(); h.k()];
    for (e, &(s, t)) in edges.iter().enumerate() {
        slots[s].push((e, false));
        slots[t].push((e, true));
    }
    let per_vertex: Vec<Vec<(Vec<usize>, usize)>> = slots
        .iter()
        .map(|s| {
            let mut parts = Vec::new();
            for_each_set_partition(s.len(), |labels, blocks| parts.push((labels.to_vec(), blocks)));
            parts
        })
        .collect();

    let mut classes: BTreeMap<Multigraph, ()> = BTreeMap::new();
    let mut choice = vec![0usize; h.k()];
    let mut tail = vec![0usize; edges.len()];
    let mut head = vec![0usize; edges.len()];
    loop {
        let mut offset = 0;
        for v in 0..h.k() {
            let (labels, blocks) = &per_vertex[v][choice[v]];
            for (slot, &(e, is_head)) in slots[v].iter().enumerate() {
                if is_head {
                    head[e] = offset + labels[slot];
                } else {
                    tail[e] = offset + labels[slot];
                }
            }
            offset += blocks;
        }
        let mut counts = vec![0; offset * offset];
        for e in 0..edges.len() {
            counts[tail[e] * offset + head[e]] += 1;
        }
        let kg = Multigraph::new(offset, counts).expect("every block holds an endpoint");
        classes.insert(kg.canonical_form(), ());

        let mut v = h.k();
        loop {
            if v == 0 {
                let mut out: Vec<PosetEntry> = classes
                    .into_keys()
                    .map(|pattern| {
                        let count = count_surjections(&pattern, h);
                        PosetEntry { pattern, count }
                    })
                    .collect();
                sort_entries(&mut out);
                return Ok(out);
            }
            v -= 1;
            choice[v] += 1;
            if choice[v] < per_vertex[v].len() {
                break;
            }
            choice[v] = 0;
        }
    }
}

fn sort_entries(entries: &mut [PosetEntry]) {
    entries.sort_by(|a, b| {
        (a.pattern.k(), &a.pattern.counts).cmp(&(b.pattern.k(), &b.pattern.counts))
    });
}

/// Every isomorphism class of patterns with exactly `m` edges.
pub fn all_patterns(m: u32) -> Result<Vec<Multigraph>> {
    Ok(refinements_with_cap(&Multigraph::loops(m), m as usize)?
        .into_iter()
        .map(|e| e.pattern)
        .collect())
}

/// Per-vertex incremental factors for depth-first map enumeration.
struct MapPlan {
    k: usize,
    loops: Vec<u32>,
    /// For vertex `p`: `(q, H_{p,q}, H_{q,p})` over earlier vertices `q < p`.
    back: Vec<Vec<(usize, u32, u32)>>,
}

impl MapPlan {
    fn new(h: &Multigraph) -> Self {
        let k = h.k();
        let back = (0..k)
            .map(|p| {
                (0..p)
                    .filter_map(|q| {
                        let (out, inn) = (h.count(p, q), h.count(q, p));
                        (out + inn > 0).then_some((q, out, inn))
                    })
                    .collect()
            })
            .collect();
        MapPlan {
            k,
            loops: (0..k).map(|v| h.count(v, v)).collect(),
            back,
        }
    }

    fn sum_from(
        &self,
        g: &[f64],
        n: usize,
        injective: bool,
        p: usize,
        assign: &mut [usize],
        used: &mut [bool],
        prod: f64,
        acc: &mut CompensatedSum,
    ) {
        if p == self.k {
            acc.add(prod);
            return;
        }
        for a in 0..n {
            if injective && used[a] {
                continue;
            }
            let mut w = prod * powu(g[a * n + a], self.loops[p]);
            for &(q, out, inn) in &self.back[p] {
                let b = assign[q];
                w *= powu(g[a * n + b], out) * powu(g[b * n + a], inn);
            }
            if w == 0.0 {
                continue;
            }
            assign[p] = a;
            used[a] = true;
            self.sum_from(g, n, injective, p + 1, assign, used, w, acc);
            used[a] = false;
        }
    }
}

fn map_sum(h: &Multigraph, g: &WeightedDigraph, injective: bool, cap: f64) -> Result<f64> {
    let n = g.n();
    let k = h.k();
    if injective && k > n {
        return Ok(0.0);
    }
    let maps = if injective {
        (0..k).map(|i| (n - i) as f64).product()
    } else {
        numeric::pow_count(n, k)
    };
    budget(
        if injective { "injective map enumeration" } else { "map enumeration" },
        maps,
        cap,
    )?;
    let plan = MapPlan::new(h);
    let dense = g.to_dense();
    let partials: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|a| {
            let mut assign = vec![0; k];
            let mut used = vec![false; n];
            let mut acc = CompensatedSum::new();
            let w = powu(dense[a * n + a], plan.loops[0]);
            if w != 0.0 {
                assign[0] = a;
                used[a] = true;
                plan.sum_from(&dense, n, injective, 1, &mut assign, &mut used, w, &mut acc);
            }
            acc.value()
        })
        .collect();
    Ok(numeric::sum(partials))
}

/// `hom(H; G) = Σ_{f: [k] -> [n]} Π G_{f(i),f(j)}^{H_{i,j}}`.
pub fn hom_number(h: &Multigraph, g: &WeightedDigraph) -> Result<f64> {
    hom_number_with_cap(h, g, DEFAULT_ENUMERATION_CAP)
}

pub fn hom_number_with_cap(h: &Multigraph, g: &WeightedDigraph, cap: f64) -> Result<f64> {
    map_sum(h, g, false, cap)
}

/// The homomorphism sum restricted to injective maps; zero when `k > n`.
pub fn inj_number(h: &Multigraph, g: &WeightedDigraph) -> Result<f64> {
    inj_number_with_cap(h, g, DEFAULT_ENUMERATION_CAP)
}

pub fn inj_number_with_cap(h: &Multigraph, g: &WeightedDigraph, cap: f64) -> Result<f64> {
    map_sum(h, g, true, cap)
}

/// Exact `t_Q(H; G)` by enumerating all `k^n` maps.
///
/// Isolated vertices of `G` do not change the quotient law of the remaining
/// ones, so only non-isolated vertices are enumerated.
pub fn quotient_density_exact(h: &Multigraph, g: &NormalizedGraph) -> Result<f64> {
    quotient_density_exact_with_cap(h, g, DEFAULT_ENUMERATION_CAP)
}

pub fn quotient_density_exact_with_cap(
    h: &Multigraph,
    g: &WeightedDigraph,
    cap: f64,
) -> Result<f64> {
    let (g, _) = g.strip_isolated();
    let n = g.n();
    let k = h.k();
    budget("quotient map enumeration", numeric::pow_count(k, n), cap)?;
    let entries: Vec<(usize, usize, f64)> = g.entries().collect();

    // Split the map space on the images of the first `d` vertices.
    let mut d = 0;
    while d < n && k.pow(d as u32) < 256 {
        d += 1;
    }
    let chunks = k.pow(d as u32);
    let partials: Vec<f64> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut images = vec![0usize; n];
            let mut rest = c;
            for slot in images[..d].iter_mut().rev() {
                *slot = rest % k;
                rest /= k;
            }
            let mut q = vec![0.0; k * k];
            let mut acc = CompensatedSum::new();
            loop {
                q.iter_mut().for_each(|x| *x = 0.0);
                for &(i, j, w) in &entries {
                    q[images[i] * k + images[j]] += w;
                }
                acc.add(h.monomial(&q));
                let mut pos = n;
                loop {
                    if pos == d {
                        return acc.value();
                    }
                    pos -= 1;
                    images[pos] += 1;
                    if images[pos] < k {
                        break;
                    }
                    images[pos] = 0;
                }
            }
        })
        .collect();
    Ok(numeric::sum(partials) / numeric::pow_count(k, n))
}

/// Monte Carlo `t_Q(H; G)` from `samples` uniform maps.
pub fn quotient_density_mc<R: Rng + ?Sized>(
    h: &Multigraph,
    g: &WeightedDigraph,
    samples: usize,
    rng: &mut R,
) -> Result<Estimate> {
    if samples < 2 {
        return Err(Error::InvalidInput("need at least two samples".into()));
    }
    let (g, _) = g.strip_isolated();
    let k = h.k();
    let entries: Vec<(usize, usize, f64)> = g.entries().collect();
    let mut images = vec![0usize; g.n()];
    let mut q = vec![0.0; k * k];
    let mut stats = RunningStats::new();
    for _ in 0..samples {
        images.iter_mut().for_each(|x| *x = rng.random_range(0..k));
        q.iter_mut().for_each(|x| *x = 0.0);
        for &(i, j, w) in &entries {
            q[images[i] * k + images[j]] += w;
        }
        stats.push(h.monomial(&q));
    }
    Ok(Estimate::from(&stats))
}

/// Coefficient of `inj(K; G)` in the expansion of `t_Q(H; G)`:
/// `k^{-|V(K)|} (H!/K!) R_{K,H} / R_{K,K}` with `k = |V(H)|`.
///
/// Expanding `(ρ(F)G)^H` edge by edge, each injective copy of `K` in `G` is
/// reached through `R_{K,H}` surjections, each hit with probability
/// `k^{-|V(K)|}` and with `H!/K!` orderings of parallel edges, and is counted
/// `|Aut(K)|` times by `inj`.
fn tq_coefficient(h: &Multigraph, kg: &Multigraph, r_kh: u64) -> f64 {
    let k = h.k() as f64;
    k.powi(-(kg.k() as i32)) * (h.factorial() / kg.factorial()) * r_kh as f64
        / kg.automorphism_count() as f64
}

/// `t_Q(H; G)` as a combination of injective homomorphism numbers over the
/// refinements of `H`.
pub fn tq_from_inj(h: &Multigraph, g: &WeightedDigraph) -> Result<f64> {
    let mut acc = CompensatedSum::new();
    for entry in refinements(h)? {
        if entry.pattern.k() > g.n() {
            continue;
        }
        let inj = inj_number(&entry.pattern, g)?;
        acc.add(tq_coefficient(h, &entry.pattern, entry.count) * inj);
    }
    Ok(acc.value())
}

/// `hom(H; G) = Σ_{H ≤_R K} (R_{H,K} / R_{K,K}) inj(K; G)`.
pub fn hom_from_inj(h: &Multigraph, g: &WeightedDigraph) -> Result<f64> {
    budget(
        "refinement poset edge count",
        f64::from(h.edge_count()),
        DEFAULT_POSET_EDGE_CAP as f64,
    )?;
    let mut acc = CompensatedSum::new();
    for entry in coarsenings(h) {
        if entry.pattern.k() > g.n() {
            continue;
        }
        let inj = inj_number(&entry.pattern, g)?;
        acc.add(entry.count as f64 / entry.pattern.automorphism_count() as f64 * inj);
    }
    Ok(acc.value())
}

/// Recovers `inj(H; G)` from quotient densities by back-substitution down the
/// refinement order, which makes the linear system triangular with diagonal
/// `|V(H)|^{-|V(H)|}`.
///
/// `tq` supplies `t_Q(K; G)` for each refinement `K` of `H`.
pub fn inj_from_tq(h: &Multigraph, mut tq: impl FnMut(&Multigraph) -> Result<f64>) -> Result<f64> {
    let mut family: Vec<Multigraph> = refinements(h)?.into_iter().map(|e| e.pattern).collect();
    // Strict refinements have more vertices, so solve from the largest down.
    family.sort_by(|a, b| b.k().cmp(&a.k()).then_with(|| a.cmp(b)));
    let mut inj = vec![0.0; family.len()];
    for idx in 0..family.len() {
        let kg = &family[idx];
        let mut rhs = CompensatedSum::new();
        rhs.add(tq(kg)?);
        for finer in 0..idx {
            if family[finer].k() == kg.k() {
                continue;
            }
            let r = count_surjections(&family[finer], kg);
            if r > 0 {
                let coef = tq_coefficient(kg, &family[finer], r);
                rhs.add(-coef * inj[finer]);
            }
        }
        let diag = tq_coefficient(kg, kg, kg.automorphism_count());
        inj[idx] = rhs.value() / diag;
    }
    let canon = h.canonical_form();
    let pos = family
        .iter()
        .position(|k| *k == canon)
        .expect("a pattern refines itself");
    Ok(inj[pos])
}

/// [`inj_from_tq`] with densities from [`quotient_density_exact`].
pub fn inj_from_tq_exact(h: &Multigraph, g: &WeightedDigraph) -> Result<f64> {
    inj_from_tq(h, |kg| {
        quotient_density_exact_with_cap(kg, g, DEFAULT_ENUMERATION_CAP)
    })
}

fn check_simple(g: &WeightedDigraph, what: &str) -> Result<()> {
    for i in 0..g.n() {
        if g.get(i, i) != 0.0 {
            return Err(Error::NotSimple(format!("{what} has a self-loop at {i}")));
        }
    }
    for (i, j, w) in g.entries() {
        if w != 1.0 || g.get(j, i) != 1.0 {
            return Err(Error::NotSimple(format!(
                "{what} entry ({i}, {j}) is not a symmetric 0/1 edge"
            )));
        }
    }
    Ok(())
}

/// `hom(H; G) / (2|E(G)|)^{|E(H)|}` for simple undirected graphs, where each
/// undirected edge of `H` is counted once (oriented from lower to higher index)
/// and isolated vertices of `H` are dropped.
///
/// The single edge gives exactly 1 for every `G`.
pub fn normalized_hom_simple(h: &WeightedDigraph, g: &WeightedDigraph) -> Result<f64> {
    check_simple(h, "pattern")?;
    check_simple(g, "graph")?;
    let oriented: Vec<(usize, usize)> = h.entries().filter(|e| e.0 < e.1).map(|e| (e.0, e.1)).collect();
    if oriented.is_empty() {
        return Err(Error::InvalidInput("pattern has no edges".into()));
    }
    let g_edges = g.nnz() / 2;
    if g_edges == 0 {
        return Err(Error::ZeroGraph);
    }
    let mut used: Vec<usize> = oriented.iter().flat_map(|&(a, b)| [a, b]).collect();
    used.sort_unstable();
    used.dedup();
    let relabel = |v: usize| used.binary_search(&v).expect("endpoint is used");
    let pattern = Multigraph::from_edges(
        &oriented.iter().map(|&(a, b)| (relabel(a), relabel(b))).collect::<Vec<_>>(),
    )?;
    let hom = hom_number(&pattern, g)?;
    Ok(hom / (2.0 * g_edges as f64).powi(oriented.len() as i32))
}
