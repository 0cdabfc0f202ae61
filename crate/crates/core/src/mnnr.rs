//! Mutual nearest-neighbor reasoning.
//!
//! A query's cross-modality neighbor set (its closest gallery items) is
//! compared with each gallery item's intra-modality reciprocal neighbor set
//! by Jaccard distance. Only neighbor ranks matter, never distance values.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::types::{DistanceMatrix, Matrix};

/// Gallery positions associated with one owner (a query or gallery sample),
/// kept sorted ascending and unique.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborSet {
    owner: usize,
    members: Vec<usize>,
}

impl NeighborSet {
    pub fn new(owner: usize, mut members: Vec<usize>) -> Self {
        members.sort_unstable();
        members.dedup();
        NeighborSet { owner, members }
    }

    pub fn owner(&self) -> usize {
        self.owner
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, x: usize) -> bool {
        self.members.binary_search(&x).is_ok()
    }

    pub fn intersection_len(&self, other: &NeighborSet) -> usize {
        sorted_intersection_len(&self.members, &other.members)
    }
}

fn sorted_intersection_len(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// Positions of the `k` smallest entries of `row`, by (value, index).
pub(crate) fn k_smallest(row: &[f64], k: usize) -> Vec<usize> {
    let mut keyed: Vec<(f64, usize)> = row.iter().copied().zip(0..).collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k > 0 && k < keyed.len() {
        keyed.select_nth_unstable_by(k - 1, cmp);
    }
    keyed.truncate(k);
    keyed.sort_unstable_by(cmp);
    keyed.into_iter().map(|(_, i)| i).collect()
}

/// Same as [`k_smallest`] on a self-distance row, but `owner` always comes
/// first even if another sample sits at distance zero.
fn k_nearest_with_self(row: &[f64], owner: usize, k: usize) -> Vec<usize> {
    if k == 0 {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(k);
    out.push(owner);
    out.extend(
        k_smallest(row, k.min(row.len()) + 1)
            .into_iter()
            .filter(|&t| t != owner)
            .take(k - 1),
    );
    out
}

/// Per-query neighbor set: the `k_q` smallest entries of each row.
pub fn cross_knn(ds: &Matrix, k_q: usize) -> Result<Vec<NeighborSet>> {
    if k_q == 0 || k_q > ds.cols() {
        return Err(Error::InvalidParams(format!(
            "k_q {k_q} out of range 1..={}",
            ds.cols()
        )));
    }
    Ok((0..ds.rows())
        .into_par_iter()
        .map(|i| NeighborSet::new(i, k_smallest(ds.row(i), k_q)))
        .collect())
}

/// Intra-gallery k-reciprocal sets.
///
/// `R(g, k) = { x in knn(g, k) : g in knn(x, k) }` with self counted as a
/// neighbor. With `expand`, each `x` in `R(g, k)` contributes its own
/// `R(x, ceil(k/2))` when at least two thirds of that smaller set already
/// lies in `R(g, k)`.
pub fn reciprocal_neighbors(
    dgg: &DistanceMatrix,
    k_g: usize,
    expand: bool,
) -> Result<Vec<NeighborSet>> {
    let n = dgg.rows().len();
    if !dgg.is_self_distance() {
        return Err(Error::RegistryMismatch(
            "gallery-gallery matrix must share its row and column registry".into(),
        ));
    }
    if k_g == 0 || k_g > n {
        return Err(Error::InvalidParams(format!(
            "k_g {k_g} out of range 1..={n}"
        )));
    }
    let base = plain_reciprocal(dgg, k_g);
    if !expand {
        return Ok(base);
    }
    let half = plain_reciprocal(dgg, k_g.div_ceil(2));
    Ok(base
        .par_iter()
        .map(|r| {
            let mut members = r.members.clone();
            for &x in &r.members {
                let candidate = &half[x];
                if 3 * candidate.intersection_len(r) >= 2 * candidate.len() {
                    members.extend_from_slice(&candidate.members);
                }
            }
            NeighborSet::new(r.owner, members)
        })
        .collect())
}

fn plain_reciprocal(dgg: &DistanceMatrix, k: usize) -> Vec<NeighborSet> {
    let n = dgg.rows().len();
    let knn: Vec<NeighborSet> = (0..n)
        .into_par_iter()
        .map(|g| NeighborSet::new(g, k_nearest_with_self(dgg.row(g), g, k)))
        .collect();
    knn.par_iter()
        .map(|forward| {
            let g = forward.owner;
            let members = forward
                .members
                .iter()
                .copied()
                .filter(|&x| knn[x].contains(g))
                .collect();
            NeighborSet::new(g, members)
        })
        .collect()
}

/// Jaccard distances, one row per query, each in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MnnrMatrix(Matrix);

impl MnnrMatrix {
    pub(crate) fn from_matrix(m: Matrix) -> Self {
        MnnrMatrix(m)
    }

    pub fn values(&self) -> &Matrix {
        &self.0
    }

    pub fn into_inner(self) -> Matrix {
        self.0
    }
}

#[inline]
pub fn jaccard_distance(a: &NeighborSet, b: &NeighborSet) -> f64 {
    let inter = a.intersection_len(b);
    let union = a.len() + b.len() - inter;
    if union == 0 {
        return 0.0;
    }
    1.0 - inter as f64 / union as f64
}

pub fn mnnr_distances(nc: &[NeighborSet], rstar: &[NeighborSet]) -> Result<MnnrMatrix> {
    let ng = rstar.len();
    if let Some(bad) = nc
        .iter()
        .chain(rstar)
        .flat_map(|s| s.members.last())
        .find(|&&m| m >= ng)
    {
        return Err(Error::RegistryMismatch(format!(
            "neighbor index {bad} outside gallery of {ng}"
        )));
    }
    let mut data = vec![0.0; nc.len() * ng];
    if ng > 0 {
        data.par_chunks_mut(ng)
            .zip(nc.par_iter())
            .for_each(|(out, n)| {
                for (o, r) in out.iter_mut().zip(rstar) {
                    *o = jaccard_distance(n, r);
                }
            });
    }
    Ok(MnnrMatrix(Matrix::new(nc.len(), ng, data)?))
}
