//! Exact nearest-neighbour conditioning sets.
//!
//! All searches are brute force over the candidate set with a bounded sorted
//! buffer, giving `O(H·N)` comparisons per query in the worst case. Results are
//! ordered by Euclidean distance with ties broken by the lower data index.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::euclidean;
use crate::linalg::Matrix;

#[derive(Clone, Debug, PartialEq)]
pub struct ConditioningSet {
    pub indices: Vec<usize>,
    pub distances: Vec<f64>,
}

impl ConditioningSet {
    pub fn empty() -> Self {
        Self { indices: Vec::new(), distances: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// How the SPA chain orders the data.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaOrdering {
    #[default]
    Input,
    FirstCoordinate,
}

#[derive(Clone, Debug)]
pub struct NeighbourIndex {
    x: Matrix,
    ordering: Vec<usize>,
    position: Vec<usize>,
    group: Vec<usize>,
    h: usize,
}

impl NeighbourIndex {
    /// Index over the rows of `x` with input ordering and a single group.
    pub fn new(x: Matrix, h: usize) -> Self {
        let n = x.rows();
        Self { x, ordering: (0..n).collect(), position: (0..n).collect(), group: vec![0; n], h }
    }

    /// Restricts every search to points of the same group. `offsets` are group
    /// start indices followed by `N`, e.g. `[0, 30, 60]` for two groups of 30.
    pub fn with_groups(mut self, offsets: &[usize]) -> Result<Self> {
        self.group = group_labels(offsets, self.len())?;
        Ok(self)
    }

    pub fn with_ordering(mut self, ordering: Vec<usize>) -> Result<Self> {
        let n = self.len();
        if ordering.len() != n {
            return Err(Error::InvalidArgument(format!("ordering has {} entries for {n} points", ordering.len())));
        }
        let mut position = vec![usize::MAX; n];
        for (p, &i) in ordering.iter().enumerate() {
            if i >= n || position[i] != usize::MAX {
                return Err(Error::InvalidArgument("ordering is not a permutation".into()));
            }
            position[i] = p;
        }
        self.ordering = ordering;
        self.position = position;
        Ok(self)
    }

    pub fn with_spa_ordering(self, mode: SpaOrdering) -> Self {
        let order = spa_ordering(&self.x, mode);
        self.with_ordering(order).expect("sort yields a permutation")
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn ordering(&self) -> &[usize] {
        &self.ordering
    }

    pub fn position_of(&self, i: usize) -> usize {
        self.position[i]
    }

    pub fn group_of(&self, i: usize) -> usize {
        self.group[i]
    }

    /// The `H` points nearest to `x_i` within its group, `i` itself first.
    pub fn knn_full(&self, i: usize) -> Result<ConditioningSet> {
        let n = self.len();
        if i >= n {
            return Err(Error::InvalidArgument(format!("index {i} out of range for {n} points")));
        }
        let g = self.group[i];
        let candidates = (0..n).filter(|&c| self.group[c] == g);
        let available = candidates.clone().count();
        if self.h > available {
            return Err(Error::HExceedsN { h: self.h, n: available });
        }
        Ok(top_h(&self.x, candidates, self.x.row(i), self.h))
    }

    /// Among points earlier in the ordering (and in the same group), the
    /// `min(H, j)` nearest to the point at ordering position `j`.
    pub fn knn_predecessors(&self, j: usize) -> ConditioningSet {
        let target = self.ordering[j];
        let g = self.group[target];
        let candidates = self.ordering[..j].iter().copied().filter(|&c| self.group[c] == g);
        top_h(&self.x, candidates, self.x.row(target), self.h)
    }

    /// The `H` training points nearest to an arbitrary location.
    pub fn knn_query(&self, x_star: &[f64]) -> Result<ConditioningSet> {
        self.query_candidates(x_star, (0..self.len()).collect())
    }

    /// [`NeighbourIndex::knn_query`] restricted to one group.
    pub fn knn_query_in_group(&self, x_star: &[f64], group: usize) -> Result<ConditioningSet> {
        let candidates = (0..self.len()).filter(|&c| self.group[c] == group).collect();
        self.query_candidates(x_star, candidates)
    }

    fn query_candidates(&self, x_star: &[f64], candidates: Vec<usize>) -> Result<ConditioningSet> {
        if x_star.len() != self.x.cols() {
            return Err(Error::DimensionMismatch(format!("query has {} coordinates, index has {}", x_star.len(), self.x.cols())));
        }
        if self.h > candidates.len() {
            return Err(Error::HExceedsN { h: self.h, n: candidates.len() });
        }
        Ok(top_h(&self.x, candidates.into_iter(), x_star, self.h))
    }
}

fn compare(a: (f64, usize), b: (f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

fn top_h(x: &Matrix, candidates: impl Iterator<Item = usize>, target: &[f64], h: usize) -> ConditioningSet {
    let mut best: Vec<(f64, usize)> = Vec::with_capacity(h + 1);
    if h == 0 {
        return ConditioningSet::empty();
    }
    for c in candidates {
        let item = (euclidean(x.row(c), target), c);
        if best.len() == h && compare(item, best[h - 1]) != Ordering::Less {
            continue;
        }
        let pos = best.partition_point(|&b| compare(b, item) == Ordering::Less);
        best.insert(pos, item);
        best.truncate(h);
    }
    ConditioningSet { distances: best.iter().map(|b| b.0).collect(), indices: best.iter().map(|b| b.1).collect() }
}

pub fn spa_ordering(x: &Matrix, mode: SpaOrdering) -> Vec<usize> {
    let mut order: Vec<usize> = (0..x.rows()).collect();
    if mode == SpaOrdering::FirstCoordinate && x.cols() > 0 {
        order.sort_by(|&a, &b| x[(a, 0)].total_cmp(&x[(b, 0)]).then(a.cmp(&b)));
    }
    order
}

pub(crate) fn group_labels(offsets: &[usize], n: usize) -> Result<Vec<usize>> {
    if offsets.len() < 2 || offsets[0] != 0 || *offsets.last().unwrap() != n || offsets.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(format!("group offsets {offsets:?} do not partition {n} points")));
    }
    let mut labels = vec![0; n];
    for (g, w) in offsets.windows(2).enumerate() {
        labels[w[0]..w[1]].fill(g);
    }
    Ok(labels)
}

/// Precomputed conditioning sets for every data point, keyed by data index.
#[derive(Clone, Debug)]
pub struct NeighbourSets {
    sets: Vec<ConditioningSet>,
}

impl NeighbourSets {
    /// Symmetric `knn_full` sets for the hierarchical prior.
    pub fn hpa(index: &NeighbourIndex) -> Result<Self> {
        let sets = (0..index.len()).map(|i| index.knn_full(i)).collect::<Result<_>>()?;
        Ok(Self { sets })
    }

    /// Predecessor sets for the Vecchia chain; `sets[i]` belongs to data point `i`.
    pub fn spa(index: &NeighbourIndex) -> Self {
        let mut sets = vec![ConditioningSet::empty(); index.len()];
        for (j, &i) in index.ordering().iter().enumerate() {
            sets[i] = index.knn_predecessors(j);
        }
        Self { sets }
    }

    pub fn from_sets(sets: Vec<ConditioningSet>) -> Self {
        Self { sets }
    }

    pub fn get(&self, i: usize) -> &ConditioningSet {
        &self.sets[i]
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }
}
