//! Pairwise Euclidean distances between embedding sets.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::types::{DistanceMatrix, EmbeddingSet, Matrix};

#[inline]
fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

fn l2_values(a: &EmbeddingSet, b: &EmbeddingSet) -> Result<Matrix> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    let (n, m) = (a.len(), b.len());
    let mut data = vec![0.0; n * m];
    if m > 0 {
        data.par_chunks_mut(m).enumerate().for_each(|(i, out)| {
            let x = a.vector(i);
            for (j, o) in out.iter_mut().enumerate() {
                *o = l2(x, b.vector(j));
            }
        });
    }
    Matrix::new(n, m, data)
}

/// Euclidean distance between every row of `a` and every row of `b`.
pub fn pairwise_l2(a: &EmbeddingSet, b: &EmbeddingSet) -> Result<DistanceMatrix> {
    let values = l2_values(a, b)?;
    DistanceMatrix::new(a.samples().clone(), b.samples().clone(), values)
}

/// Gallery-gallery distances: exactly symmetric, zero diagonal.
pub fn self_distances(g: &EmbeddingSet) -> Result<DistanceMatrix> {
    let raw = l2_values(g, g)?;
    let n = g.len();
    let mut data = raw.as_slice().to_vec();
    for i in 0..n {
        data[i * n + i] = 0.0;
        for j in (i + 1)..n {
            let v = (raw.get(i, j) + raw.get(j, i)) / 2.0;
            data[i * n + j] = v;
            data[j * n + i] = v;
        }
    }
    DistanceMatrix::new(
        g.samples().clone(),
        g.samples().clone(),
        Matrix::new(n, n, data)?,
    )
}
