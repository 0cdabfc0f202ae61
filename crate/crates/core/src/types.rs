//! Shared domain types: sample registries, dense matrices, embedding sets,
//! distance matrices and the re-ranking parameter set.
//!
//! Every type here is immutable once constructed and validated, so values
//! can be shared read-only between worker threads.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Sensor modality of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Modality {
    Ir,
    Rgb,
}

impl Modality {
    pub fn other(self) -> Modality {
        match self {
            Modality::Ir => Modality::Rgb,
            Modality::Rgb => Modality::Ir,
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modality::Ir => "IR",
            Modality::Rgb => "RGB",
        })
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "IR" => Ok(Modality::Ir),
            "RGB" => Ok(Modality::Rgb),
            other => Err(Error::InvalidRegistry(format!(
                "unknown modality {other:?} (expected IR or RGB)"
            ))),
        }
    }
}

/// Identity label. Opaque; only equality matters.
pub type PersonId = i64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SampleId {
    pub index: usize,
    pub person: PersonId,
    pub modality: Modality,
    pub camera: Option<i32>,
}

impl SampleId {
    pub fn new(index: usize, person: PersonId, modality: Modality) -> Self {
        SampleId {
            index,
            person,
            modality,
            camera: None,
        }
    }

    pub fn with_camera(mut self, camera: i32) -> Self {
        self.camera = Some(camera);
        self
    }
}

/// Ordered list of samples forming one side (query or gallery) of a problem.
///
/// Indices are unique and the modality is uniform across the set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Registry {
    samples: Vec<SampleId>,
}

impl Registry {
    pub fn new(samples: Vec<SampleId>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(samples.len());
        for s in &samples {
            if !seen.insert(s.index) {
                return Err(Error::InvalidRegistry(format!(
                    "duplicate sample index {}",
                    s.index
                )));
            }
        }
        if let Some(first) = samples.first() {
            if let Some(odd) = samples.iter().find(|s| s.modality != first.modality) {
                return Err(Error::InvalidRegistry(format!(
                    "mixed modalities: sample {} is {} but sample {} is {}",
                    first.index, first.modality, odd.index, odd.modality
                )));
            }
        }
        Ok(Registry { samples })
    }

    /// Registry of `n` samples whose identity is their position.
    pub fn anonymous(n: usize, modality: Modality) -> Self {
        Registry {
            samples: (0..n)
                .map(|i| SampleId::new(i, i as PersonId, modality))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[SampleId] {
        &self.samples
    }

    pub fn get(&self, i: usize) -> &SampleId {
        &self.samples[i]
    }

    pub fn modality(&self) -> Option<Modality> {
        self.samples.first().map(|s| s.modality)
    }

    pub fn persons(&self) -> impl Iterator<Item = PersonId> + '_ {
        self.samples.iter().map(|s| s.person)
    }

    /// Sub-registry of the given positions, in the given order.
    pub fn select(&self, positions: &[usize]) -> Registry {
        Registry {
            samples: positions.iter().map(|&p| self.samples[p]).collect(),
        }
    }
}

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds from nested rows; all rows must have equal length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    left: cols,
                    right: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn transpose(&self) -> Matrix {
        let mut data = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            data.extend((0..self.rows).map(|i| self.get(i, j)));
        }
        Matrix {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub(crate) fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(p) => Err(Error::NonFinite {
                row: p / self.cols.max(1),
                col: p % self.cols.max(1),
            }),
            None => Ok(()),
        }
    }
}

/// Feature vectors with their sample registry.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    samples: Registry,
    vectors: Matrix,
}

impl EmbeddingSet {
    pub fn new(samples: Registry, vectors: Matrix) -> Result<Self> {
        if vectors.cols() == 0 {
            return Err(Error::InvalidParams(
                "embedding dim must be positive".into(),
            ));
        }
        if vectors.rows() != samples.len() {
            return Err(Error::DimensionMismatch {
                left: samples.len(),
                right: vectors.rows(),
            });
        }
        vectors.check_finite()?;
        Ok(EmbeddingSet { samples, vectors })
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &Registry {
        &self.samples
    }

    pub fn vectors(&self) -> &Matrix {
        &self.vectors
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        self.vectors.row(i)
    }

    /// Rescales every vector to unit L2 norm. Zero vectors are left as is.
    pub fn normalized(&self) -> EmbeddingSet {
        let dim = self.dim();
        let mut data = self.vectors.as_slice().to_vec();
        for row in data.chunks_mut(dim) {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|v| *v /= norm);
            }
        }
        EmbeddingSet {
            samples: self.samples.clone(),
            vectors: Matrix {
                rows: self.vectors.rows,
                cols: dim,
                data,
            },
        }
    }

    /// Subset of samples at the given positions.
    pub fn select(&self, positions: &[usize]) -> EmbeddingSet {
        let dim = self.dim();
        let mut data = Vec::with_capacity(positions.len() * dim);
        for &p in positions {
            data.extend_from_slice(self.vector(p));
        }
        EmbeddingSet {
            samples: self.samples.select(positions),
            vectors: Matrix {
                rows: positions.len(),
                cols: dim,
                data,
            },
        }
    }
}

/// Nonnegative distances between a row registry and a column registry.
///
/// When both registries are the same set the matrix is additionally
/// symmetric with an exactly zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    rows: Registry,
    cols: Registry,
    values: Matrix,
}

impl DistanceMatrix {
    pub fn new(rows: Registry, cols: Registry, values: Matrix) -> Result<Self> {
        if values.rows() != rows.len() {
            return Err(Error::DimensionMismatch {
                left: rows.len(),
                right: values.rows(),
            });
        }
        if values.cols() != cols.len() {
            return Err(Error::DimensionMismatch {
                left: cols.len(),
                right: values.cols(),
            });
        }
        values.check_finite()?;
        for i in 0..values.rows() {
            for (j, &v) in values.row(i).iter().enumerate() {
                if v < 0.0 {
                    return Err(Error::NegativeDistance {
                        row: i,
                        col: j,
                        value: v,
                    });
                }
            }
        }
        if rows == cols {
            let n = values.rows();
            for i in 0..n {
                if values.get(i, i) != 0.0 {
                    return Err(Error::NonZeroDiagonal(i));
                }
                for j in (i + 1)..n {
                    if values.get(i, j) != values.get(j, i) {
                        return Err(Error::NotSymmetric { row: i, col: j });
                    }
                }
            }
        }
        Ok(DistanceMatrix { rows, cols, values })
    }

    /// Rectangular matrix with anonymous registries of the given modalities.
    pub fn anonymous(values: Matrix, rows: Modality, cols: Modality) -> Result<Self> {
        let r = Registry::anonymous(values.rows(), rows);
        let c = Registry::anonymous(values.cols(), cols);
        DistanceMatrix::new(r, c, values)
    }

    /// Square self-distance matrix with an anonymous registry.
    pub fn anonymous_square(values: Matrix, modality: Modality) -> Result<Self> {
        let r = Registry::anonymous(values.rows(), modality);
        DistanceMatrix::new(r.clone(), r, values)
    }

    pub fn rows(&self) -> &Registry {
        &self.rows
    }

    pub fn cols(&self) -> &Registry {
        &self.cols
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values.get(i, j)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.values.row(i)
    }

    pub fn is_self_distance(&self) -> bool {
        self.rows == self.cols
    }

    /// Exhaustive O(n³) triangle-inequality check with absolute tolerance.
    pub fn check_triangle_inequality(&self, tol: f64) -> Result<()> {
        let n = self.values.rows();
        if n != self.values.cols() {
            return Err(Error::DimensionMismatch {
                left: n,
                right: self.values.cols(),
            });
        }
        for i in 0..n {
            for j in 0..n {
                let ij = self.get(i, j);
                for t in 0..n {
                    if ij + self.get(j, t) < self.get(i, t) - tol {
                        return Err(Error::TriangleInequality(i, j, t));
                    }
                }
            }
        }
        Ok(())
    }

    /// Sub-matrix at the given row and column positions.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Result<DistanceMatrix> {
        let mut data = Vec::with_capacity(rows.len() * cols.len());
        for &i in rows {
            let row = self.values.row(i);
            data.extend(cols.iter().map(|&j| row[j]));
        }
        Ok(DistanceMatrix {
            rows: self.rows.select(rows),
            cols: self.cols.select(cols),
            values: Matrix::new(rows.len(), cols.len(), data)?,
        })
    }

    /// Same registries, values multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<DistanceMatrix> {
        DistanceMatrix::new(
            self.rows.clone(),
            self.cols.clone(),
            self.values.map(|v| v * c),
        )
    }
}

/// How a query's cross-modality neighbor set is ranked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CrossRanking {
    /// Rank by the graph-reasoning distance.
    #[default]
    Sgr,
    /// Rank by the raw query-gallery distance.
    Raw,
}

/// Re-ranking configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimParams {
    /// Scale applied to gallery-gallery edges, in `[0, 1]`.
    pub lambda: f64,
    /// Number of cheapest paths averaged per query-gallery pair.
    pub big_k: usize,
    /// Blend weight of the graph distance, in `[0, 1]`.
    pub alpha: f64,
    /// Cross-modality neighbor count.
    pub k_q: usize,
    /// Intra-modality reciprocal neighbor count.
    pub k_g: usize,
    /// Gallery neighbors kept per node (self included).
    pub prune_k: usize,
    pub expand_reciprocal: bool,
    pub cross_ranking: CrossRanking,
    /// Min-max normalize each query row of the graph distance before blending.
    pub normalize_sgr: bool,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            lambda: 0.01,
            big_k: 9,
            alpha: 0.3,
            k_q: 10,
            k_g: 10,
            prune_k: 9,
            expand_reciprocal: false,
            cross_ranking: CrossRanking::Sgr,
            normalize_sgr: false,
        }
    }
}

impl SimParams {
    /// Checks every constraint against a gallery of `n_gallery` samples and
    /// returns the parameters unchanged, or the first violation.
    pub fn validate(self, n_gallery: usize) -> Result<Self> {
        let fail = |msg: String| Err(Error::InvalidParams(msg));
        if !(0.0..=1.0).contains(&self.lambda) {
            return fail(format!("lambda {} outside [0, 1]", self.lambda));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return fail(format!("alpha {} outside [0, 1]", self.alpha));
        }
        for (name, v) in [
            ("bigK", self.big_k),
            ("prune_k", self.prune_k),
            ("k_q", self.k_q),
            ("k_g", self.k_g),
        ] {
            if v == 0 {
                return fail(format!("{name} must be positive"));
            }
        }
        if self.big_k > self.prune_k {
            return fail(format!(
                "bigK exceeds prune_k ({} > {})",
                self.big_k, self.prune_k
            ));
        }
        if n_gallery == 0 {
            return Err(Error::EmptyGallery);
        }
        for (name, v) in [("bigK", self.big_k), ("k_q", self.k_q), ("k_g", self.k_g)] {
            if v > n_gallery {
                return fail(format!("{name} exceeds gallery size ({v} > {n_gallery})"));
            }
        }
        Ok(self)
    }
}

/// Free-function form of [`SimParams::validate`].
pub fn validate_params(p: SimParams, n_gallery: usize) -> Result<SimParams> {
    p.validate(n_gallery)
}
