//! End-to-end re-ranking: graph reasoning, neighbor reasoning and the blend.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mnnr::{self, MnnrMatrix, NeighborSet};
use crate::sgr::{self, GalleryGraph, SgrMatrix};
use crate::types::{CrossRanking, DistanceMatrix, Matrix, Registry, SimParams};

/// Output of one re-ranking run.
///
/// `d_sim[i][j] == alpha * d_s[i][j] + (1 - alpha) * d_m[i][j]` exactly,
/// unless `normalize_sgr` is set, in which case the blend uses the
/// row-normalized graph distance while `d_s` keeps the raw values.
#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub d_sim: Matrix,
    pub d_s: Option<SgrMatrix>,
    pub d_m: Option<MnnrMatrix>,
    pub params: Option<SimParams>,
    pub rankings: Vec<Vec<usize>>,
}

/// Ascending argsort of every row, ties by ascending column index.
pub fn rank_rows(m: &Matrix) -> Vec<Vec<usize>> {
    (0..m.rows())
        .into_par_iter()
        .map(|i| {
            let row = m.row(i);
            let mut order: Vec<usize> = (0..row.len()).collect();
            order.sort_unstable_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
            order
        })
        .collect()
}

/// Gallery-only structures, built once and reused for every query batch.
#[derive(Debug, Clone)]
pub struct GalleryIndex {
    params: SimParams,
    graph: GalleryGraph,
    reciprocal: Vec<NeighborSet>,
}

impl GalleryIndex {
    pub fn build(dgg: &DistanceMatrix, p: &SimParams) -> Result<Self> {
        let params = p.validate(dgg.rows().len())?;
        let graph = GalleryGraph::build(dgg, params.lambda, params.prune_k)?;
        let reciprocal = mnnr::reciprocal_neighbors(dgg, params.k_g, params.expand_reciprocal)?;
        Ok(GalleryIndex {
            params,
            graph,
            reciprocal,
        })
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    pub fn registry(&self) -> &Registry {
        self.graph.registry()
    }

    pub fn graph(&self) -> &GalleryGraph {
        &self.graph
    }

    pub fn reciprocal(&self) -> &[NeighborSet] {
        &self.reciprocal
    }

    /// Re-ranks a batch of queries given their distances to this gallery.
    pub fn rerank(&self, dqg: &DistanceMatrix) -> Result<SimResult> {
        sgr::check_gallery_registry(dqg, self.registry())?;
        if let (Some(q), Some(g)) = (dqg.rows().modality(), dqg.cols().modality()) {
            if q == g {
                return Err(Error::RegistryMismatch(format!(
                    "query and gallery are both {q}"
                )));
            }
        }
        let p = &self.params;
        let d_s = sgr::sgr_values(dqg, &self.graph, p.big_k)?;
        let nc = match p.cross_ranking {
            CrossRanking::Sgr => mnnr::cross_knn(&d_s, p.k_q)?,
            CrossRanking::Raw => mnnr::cross_knn(dqg.values(), p.k_q)?,
        };
        let d_m = mnnr::mnnr_distances(&nc, &self.reciprocal)?.into_inner();

        let graph_term = if p.normalize_sgr {
            min_max_rows(&d_s)
        } else {
            d_s.clone()
        };
        let d_sim = blend(&graph_term, &d_m, p.alpha)?;
        let rankings = rank_rows(&d_sim);
        Ok(SimResult {
            d_sim,
            d_s: Some(SgrMatrix::from_matrix(d_s)),
            d_m: Some(MnnrMatrix::from_matrix(d_m)),
            params: Some(*p),
            rankings,
        })
    }
}

/// `alpha * a + (1 - alpha) * b`, elementwise.
pub fn blend(a: &Matrix, b: &Matrix, alpha: f64) -> Result<Matrix> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(Error::DimensionMismatch {
            left: a.as_slice().len(),
            right: b.as_slice().len(),
        });
    }
    let beta = 1.0 - alpha;
    let data = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(&s, &m)| alpha * s + beta * m)
        .collect();
    Matrix::new(a.rows(), a.cols(), data)
}

/// Per-row min-max scaling to `[0, 1]`; constant rows map to zero.
fn min_max_rows(m: &Matrix) -> Matrix {
    let mut data = Vec::with_capacity(m.as_slice().len());
    for i in 0..m.rows() {
        let row = m.row(i);
        let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        data.extend(
            row.iter()
                .map(|&v| if span > 0.0 { (v - lo) / span } else { 0.0 }),
        );
    }
    Matrix::new(m.rows(), m.cols(), data).expect("same shape as input")
}

/// Full re-ranking of `dqg` using gallery structure `dgg`.
pub fn run_sim(dqg: &DistanceMatrix, dgg: &DistanceMatrix, p: &SimParams) -> Result<SimResult> {
    sgr::check_gallery_registry(dqg, dgg.rows())?;
    GalleryIndex::build(dgg, p)?.rerank(dqg)
}

/// Ranking by the raw query-gallery distance.
pub fn run_baseline(dqg: &DistanceMatrix) -> SimResult {
    let d_sim = dqg.values().clone();
    let rankings = rank_rows(&d_sim);
    SimResult {
        d_sim,
        d_s: None,
        d_m: None,
        params: None,
        rankings,
    }
}

/// Re-ranking variants compared in ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Raw query-gallery distance.
    Baseline,
    /// Graph reasoning only (`alpha = 1`).
    SgrOnly,
    /// Neighbor reasoning only (`alpha = 0`), query neighbors ranked by the
    /// raw distance.
    MnnrOnly,
    /// Full blend with the given parameters.
    Sim,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Baseline,
        Method::SgrOnly,
        Method::MnnrOnly,
        Method::Sim,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::SgrOnly => "sgr",
            Method::MnnrOnly => "mnnr",
            Method::Sim => "sim",
        }
    }

    /// Parameters actually used by this variant.
    pub fn params(self, p: &SimParams) -> SimParams {
        match self {
            Method::Baseline | Method::Sim => *p,
            Method::SgrOnly => SimParams { alpha: 1.0, ..*p },
            Method::MnnrOnly => SimParams {
                alpha: 0.0,
                cross_ranking: CrossRanking::Raw,
                ..*p
            },
        }
    }

    pub fn run(
        self,
        dqg: &DistanceMatrix,
        dgg: &DistanceMatrix,
        p: &SimParams,
    ) -> Result<SimResult> {
        match self {
            Method::Baseline => Ok(run_baseline(dqg)),
            _ => run_sim(dqg, dgg, &self.params(p)),
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidParams(format!("unknown method {s:?}")))
    }
}
