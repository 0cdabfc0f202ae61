//! Similarity-graph reasoning.
//!
//! The graph has one node per query and per gallery sample. Query-gallery
//! edges carry the raw cross-modality distance; gallery-gallery edges carry
//! the intra-modality distance scaled by `lambda` and are pruned to each
//! gallery node's `prune_k` nearest neighbors (self included).
//!
//! Because the intra-gallery distance is a metric, any multi-hop route
//! `q -> g_t -> ... -> g_j` costs at least as much as the single-hop route
//! `q -> g_t -> g_j`, so the shortest path reduces to a minimum over one
//! intermediate gallery node. The graph distance of a pair is the mean of
//! the `big_k` cheapest single-intermediate routes. For `big_k > 1` this is
//! not the same as averaging the k shortest routes of the unpruned graph,
//! since multi-hop routes can interleave with single-hop ones.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::types::{DistanceMatrix, Matrix, Registry, SimParams};

/// Gallery-side edge: neighbor position and scaled weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub to: usize,
    pub weight: f64,
}

#[inline]
fn by_cost_then_index(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Pruned intra-gallery adjacency. Independent of the queries, so it can be
/// built once and reused for any number of query batches.
#[derive(Debug, Clone)]
pub struct GalleryGraph {
    registry: Registry,
    lambda: f64,
    adjacency: Vec<Vec<Edge>>,
}

impl GalleryGraph {
    /// Keeps, for every gallery node, itself plus its `prune_k - 1` nearest
    /// other nodes by raw distance (ties by ascending index).
    pub fn build(dgg: &DistanceMatrix, lambda: f64, prune_k: usize) -> Result<Self> {
        if !dgg.is_self_distance() {
            return Err(Error::RegistryMismatch(
                "gallery-gallery matrix must share its row and column registry".into(),
            ));
        }
        if prune_k == 0 {
            return Err(Error::InvalidParams("prune_k must be positive".into()));
        }
        let n = dgg.rows().len();
        let keep = prune_k.min(n);
        let adjacency = (0..n)
            .into_par_iter()
            .map(|j| {
                let row = dgg.row(j);
                let mut others: Vec<(f64, usize)> = row
                    .iter()
                    .enumerate()
                    .filter(|&(t, _)| t != j)
                    .map(|(t, &d)| (d, t))
                    .collect();
                let take = keep - 1;
                if take > 0 && take < others.len() {
                    others.select_nth_unstable_by(take - 1, by_cost_then_index);
                    others.truncate(take);
                }
                others.truncate(take);
                others.sort_unstable_by(by_cost_then_index);
                std::iter::once(Edge { to: j, weight: 0.0 })
                    .chain(others.into_iter().map(|(d, t)| Edge {
                        to: t,
                        weight: lambda * d,
                    }))
                    .collect()
            })
            .collect();
        Ok(GalleryGraph {
            registry: dgg.rows().clone(),
            lambda,
            adjacency,
        })
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    /// Neighbors of gallery node `j`, self first.
    pub fn neighbors(&self, j: usize) -> &[Edge] {
        &self.adjacency[j]
    }

    fn min_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).min().unwrap_or(0)
    }
}

/// Query-gallery graph: dense cross edges plus the pruned gallery adjacency.
#[derive(Debug, Clone)]
pub struct SimilarityGraph {
    cross_edges: DistanceMatrix,
    gallery: GalleryGraph,
}

impl SimilarityGraph {
    pub fn n_query(&self) -> usize {
        self.cross_edges.rows().len()
    }

    pub fn n_gallery(&self) -> usize {
        self.gallery.len()
    }

    pub fn cross_edges(&self) -> &DistanceMatrix {
        &self.cross_edges
    }

    pub fn gallery(&self) -> &GalleryGraph {
        &self.gallery
    }
}

/// Graph distances, one row per query.
#[derive(Debug, Clone, PartialEq)]
pub struct SgrMatrix(Matrix);

impl SgrMatrix {
    pub(crate) fn from_matrix(m: Matrix) -> Self {
        SgrMatrix(m)
    }

    pub fn values(&self) -> &Matrix {
        &self.0
    }

    pub fn into_inner(self) -> Matrix {
        self.0
    }
}

pub(crate) fn check_gallery_registry(dqg: &DistanceMatrix, gallery: &Registry) -> Result<()> {
    if dqg.cols() != gallery {
        return Err(Error::RegistryMismatch(format!(
            "query-gallery columns ({} samples) differ from gallery registry ({} samples)",
            dqg.cols().len(),
            gallery.len()
        )));
    }
    Ok(())
}

pub fn build_graph(
    dqg: &DistanceMatrix,
    dgg: &DistanceMatrix,
    p: &SimParams,
) -> Result<SimilarityGraph> {
    check_gallery_registry(dqg, dgg.rows())?;
    let p = p.validate(dgg.rows().len())?;
    let gallery = GalleryGraph::build(dgg, p.lambda, p.prune_k)?;
    Ok(SimilarityGraph {
        cross_edges: dqg.clone(),
        gallery,
    })
}

/// Mean of the `big_k` cheapest single-intermediate path costs for every
/// query-gallery pair.
pub(crate) fn sgr_values(
    cross: &DistanceMatrix,
    gallery: &GalleryGraph,
    big_k: usize,
) -> Result<Matrix> {
    let available = gallery.min_degree();
    if big_k == 0 || big_k > available {
        return Err(Error::TooFewCandidates {
            needed: big_k,
            available,
        });
    }
    let (nq, ng) = (cross.rows().len(), gallery.len());
    let mut data = vec![0.0; nq * ng];
    if ng > 0 {
        data.par_chunks_mut(ng).enumerate().for_each(|(i, out)| {
            let q = cross.row(i);
            let mut costs: Vec<(f64, usize)> = Vec::with_capacity(available);
            for (j, o) in out.iter_mut().enumerate() {
                costs.clear();
                costs.extend(
                    gallery
                        .neighbors(j)
                        .iter()
                        .map(|e| (q[e.to] + e.weight, e.to)),
                );
                costs.sort_unstable_by(by_cost_then_index);
                let sum: f64 = costs[..big_k].iter().map(|c| c.0).sum();
                *o = sum / big_k as f64;
            }
        });
    }
    Matrix::new(nq, ng, data)
}

pub fn sgr_distances(g: &SimilarityGraph, p: &SimParams) -> Result<SgrMatrix> {
    sgr_values(&g.cross_edges, &g.gallery, p.big_k).map(SgrMatrix)
}

/// True shortest-path cost from each query to each gallery node on the
/// unpruned graph, by dense Dijkstra. Multi-hop gallery routes are allowed.
///
/// Exists to check the single-intermediate reduction; not used for ranking.
pub fn oracle_shortest_path(dqg: &DistanceMatrix, dgg: &DistanceMatrix, lambda: f64) -> Matrix {
    let (nq, ng) = (dqg.rows().len(), dgg.rows().len());
    let mut data = Vec::with_capacity(nq * ng);
    for i in 0..nq {
        // The query only has outgoing edges, so the source's relaxation
        // step seeds every gallery node with its direct edge.
        let mut dist: Vec<f64> = dqg.row(i).to_vec();
        let mut done = vec![false; ng];
        for _ in 0..ng {
            let mut u = usize::MAX;
            for t in 0..ng {
                if !done[t] && (u == usize::MAX || dist[t] < dist[u]) {
                    u = t;
                }
            }
            done[u] = true;
            for v in 0..ng {
                if !done[v] {
                    let alt = dist[u] + lambda * dgg.get(u, v);
                    if alt < dist[v] {
                        dist[v] = alt;
                    }
                }
            }
        }
        data.extend(dist);
    }
    Matrix::new(nq, ng, data).expect("shape is nq x ng by construction")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Modality;

    fn dqg(rows: &[&[f64]]) -> DistanceMatrix {
        DistanceMatrix::anonymous(
            Matrix::from_rows(rows).unwrap(),
            Modality::Ir,
            Modality::Rgb,
        )
        .unwrap()
    }

    fn dgg(rows: &[&[f64]]) -> DistanceMatrix {
        DistanceMatrix::anonymous_square(Matrix::from_rows(rows).unwrap(), Modality::Rgb).unwrap()
    }

    fn params(lambda: f64, big_k: usize, prune_k: usize) -> SimParams {
        SimParams {
            lambda,
            big_k,
            prune_k,
            k_q: 1,
            k_g: 1,
            ..SimParams::default()
        }
    }

    fn edges(g: &GalleryGraph, j: usize) -> Vec<(usize, f64)> {
        g.neighbors(j).iter().map(|e| (e.to, e.weight)).collect()
    }

    const D3: [&[f64]; 3] = [&[0.0, 1.0, 4.0], &[1.0, 0.0, 2.0], &[4.0, 2.0, 0.0]];

    #[test]
    fn unpruned_unit_scale_reproduces_gallery_distances() {
        let g = dgg(&D3);
        let graph = build_graph(&dqg(&[&[1.0, 1.0, 1.0]]), &g, &params(1.0, 1, 3)).unwrap();
        for j in 0..3 {
            let adj = graph.gallery().neighbors(j);
            assert_eq!(adj.len(), 3);
            assert_eq!(adj[0], Edge { to: j, weight: 0.0 });
            for e in adj {
                assert_eq!(e.weight, g.get(e.to, j));
            }
        }
    }

    #[test]
    fn zero_lambda_zeroes_every_gallery_edge() {
        let graph = build_graph(&dqg(&[&[1.0, 1.0, 1.0]]), &dgg(&D3), &params(0.0, 1, 3)).unwrap();
        for j in 0..3 {
            assert!(graph.gallery().neighbors(j).iter().all(|e| e.weight == 0.0));
        }
    }

    #[test]
    fn pruning_keeps_nearest_columns() {
        let graph = build_graph(&dqg(&[&[1.0, 1.0, 1.0]]), &dgg(&D3), &params(0.5, 1, 2)).unwrap();
        assert_eq!(edges(graph.gallery(), 0), vec![(0, 0.0), (1, 0.5)]);
        assert_eq!(edges(graph.gallery(), 2), vec![(2, 0.0), (1, 1.0)]);
    }

    #[test]
    fn self_edge_first_even_with_duplicate_samples() {
        let g = dgg(&[&[0.0, 0.0, 3.0], &[0.0, 0.0, 3.0], &[3.0, 3.0, 0.0]]);
        let graph = GalleryGraph::build(&g, 1.0, 2).unwrap();
        assert_eq!(edges(&graph, 1), vec![(1, 0.0), (0, 0.0)]);
    }

    #[test]
    fn registry_mismatch_is_reported() {
        let q = dqg(&[&[1.0, 1.0]]);
        assert!(matches!(
            build_graph(&q, &dgg(&D3), &params(0.5, 1, 2)),
            Err(Error::RegistryMismatch(_))
        ));
    }

    #[test]
    fn single_self_edge_gives_baseline() {
        let q = dqg(&[&[5.0, 2.0, 7.0], &[1.0, 3.0, 0.5]]);
        let p = params(0.5, 1, 1);
        let graph = build_graph(&q, &dgg(&D3), &p).unwrap();
        let ds = sgr_distances(&graph, &p).unwrap();
        assert_eq!(ds.values(), q.values());
    }

    #[test]
    fn two_gallery_worked_example() {
        let q = dqg(&[&[5.0, 2.0]]);
        let g = dgg(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let p = params(0.5, 2, 2);
        let graph = build_graph(&q, &g, &p).unwrap();
        let ds = sgr_distances(&graph, &p).unwrap();
        // Target g_0: routes 5 + 0 and 2 + 0.5. Target g_1: 5 + 0.5 and 2 + 0.
        assert_eq!(ds.values().get(0, 0), 3.75);
        assert_eq!(ds.values().get(0, 1), 3.75);
        let oracle = oracle_shortest_path(&q, &g, 0.5);
        assert_eq!(oracle.get(0, 0), 2.5);
        assert_eq!(oracle.get(0, 1), 2.0);
    }

    #[test]
    fn too_few_candidates() {
        let q = dqg(&[&[5.0, 2.0]]);
        let g = dgg(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let gallery = GalleryGraph::build(&g, 0.5, 1).unwrap();
        assert!(matches!(
            sgr_values(&q, &gallery, 2),
            Err(Error::TooFewCandidates {
                needed: 2,
                available: 1
            })
        ));
    }

    #[test]
    fn oracle_single_gallery_is_direct_distance() {
        let q = dqg(&[&[3.0], &[0.25]]);
        let g = dgg(&[&[0.0]]);
        assert_eq!(oracle_shortest_path(&q, &g, 0.7), *q.values());
    }

    #[test]
    fn oracle_takes_multi_hop_route_when_gallery_is_not_metric() {
        // 0 -> 1 -> 2 is cheaper than 0 -> 2 directly.
        let q = dqg(&[&[0.0, 10.0, 10.0]]);
        let g = dgg(&[&[0.0, 1.0, 5.0], &[1.0, 0.0, 1.0], &[5.0, 1.0, 0.0]]);
        assert_eq!(oracle_shortest_path(&q, &g, 1.0).get(0, 2), 2.0);
    }
}
