//! Synthetic two-modality datasets and the ablation harness built on them.
//!
//! Each identity gets a mean on a sphere of radius [`SynthConfig::mean_scale`]
//! and its own random offset direction. Gallery samples scatter around the
//! mean; query samples scatter around the mean shifted by the offset, so no
//! single translation closes the modality gap.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::distance::{pairwise_l2, self_distances};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalOptions, EvalReport};
use crate::pipeline::{rank_rows, run_baseline, Method};
use crate::types::{EmbeddingSet, Matrix, Modality, PersonId, Registry, SampleId, SimParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub n_identities: usize,
    pub images_per_identity_per_modality: usize,
    pub dim: usize,
    /// Per-coordinate standard deviation of intra-identity noise.
    pub cluster_spread: f64,
    /// Length of each identity's query-side shift.
    pub modality_offset: f64,
    pub seed: u64,
    /// Radius of the sphere identity means are drawn on.
    pub mean_scale: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_identities: 40,
            images_per_identity_per_modality: 10,
            dim: 32,
            cluster_spread: 1.0,
            modality_offset: 6.0,
            seed: 0,
            mean_scale: 10.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_identities == 0 || self.images_per_identity_per_modality == 0 || self.dim == 0 {
            return Err(Error::InvalidParams(
                "identities, images and dim must be at least 1".into(),
            ));
        }
        for (name, v) in [
            ("cluster_spread", self.cluster_spread),
            ("modality_offset", self.modality_offset),
            ("mean_scale", self.mean_scale),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidParams(format!(
                    "{name} must be finite and nonnegative"
                )));
            }
        }
        Ok(())
    }
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v = gaussian(rng, dim);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Query (IR) and gallery (RGB) embeddings, deterministic in `cfg.seed`.
///
/// Draw order: per identity its mean direction then its offset direction;
/// then all gallery noise, identity-major; then all query noise.
pub fn generate(cfg: &SynthConfig) -> Result<(EmbeddingSet, EmbeddingSet)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (n, m, dim) = (
        cfg.n_identities,
        cfg.images_per_identity_per_modality,
        cfg.dim,
    );

    let mut means = Vec::with_capacity(n);
    let mut offsets = Vec::with_capacity(n);
    for _ in 0..n {
        means.push(
            unit(&mut rng, dim)
                .into_iter()
                .map(|x| x * cfg.mean_scale)
                .collect::<Vec<_>>(),
        );
        offsets.push(
            unit(&mut rng, dim)
                .into_iter()
                .map(|x| x * cfg.modality_offset)
                .collect::<Vec<_>>(),
        );
    }

    let mut side = |modality: Modality, shift: Option<&[Vec<f64>]>| -> Result<EmbeddingSet> {
        let mut data = Vec::with_capacity(n * m * dim);
        let mut samples = Vec::with_capacity(n * m);
        for id in 0..n {
            for _ in 0..m {
                let noise = gaussian(&mut rng, dim);
                samples.push(SampleId::new(samples.len(), id as PersonId, modality));
                for k in 0..dim {
                    let base = means[id][k] + shift.map_or(0.0, |s| s[id][k]);
                    data.push(base + cfg.cluster_spread * noise[k]);
                }
            }
        }
        EmbeddingSet::new(Registry::new(samples)?, Matrix::new(n * m, dim, data)?)
    };
    let gallery = side(Modality::Rgb, None)?;
    let query = side(Modality::Ir, Some(&offsets))?;
    Ok((query, gallery))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapReport {
    /// Queries from the other modality against the gallery.
    pub cross: EvalReport,
    /// Each gallery sample against the rest of the gallery.
    pub intra: EvalReport,
}

impl GapReport {
    pub fn cross_map(&self) -> f64 {
        self.cross.map
    }

    pub fn intra_map(&self) -> f64 {
        self.intra.map
    }
}

/// Compares cross-modality retrieval with leave-one-out intra-gallery
/// retrieval, both ranked by raw distance.
pub fn gap_report(q: &EmbeddingSet, g: &EmbeddingSet) -> Result<GapReport> {
    let distinct: std::collections::HashSet<PersonId> = g.samples().persons().collect();
    if distinct.len() < 2 {
        return Err(Error::InvalidParams(
            "gap report needs at least two identities".into(),
        ));
    }
    let opts = EvalOptions::default();
    let dqg = pairwise_l2(q, g)?;
    let cross = evaluate(
        &run_baseline(&dqg).rankings,
        q.samples(),
        g.samples(),
        &opts,
    );

    let dgg = self_distances(g)?;
    let rankings: Vec<Vec<usize>> = rank_rows(dgg.values())
        .into_iter()
        .enumerate()
        .map(|(i, r)| r.into_iter().filter(|&j| j != i).collect())
        .collect();
    let intra = evaluate(&rankings, g.samples(), g.samples(), &opts);
    Ok(GapReport { cross, intra })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub method: Method,
    pub map: f64,
    pub rank1: f64,
}

/// Evaluates every [`Method`] on one generated dataset (full gallery).
pub fn ablation_suite(cfg: &SynthConfig, p: &SimParams) -> Result<Vec<AblationRow>> {
    let (q, g) = generate(cfg)?;
    ablation_on(&q, &g, p)
}

/// [`ablation_suite`] on caller-supplied embeddings.
pub fn ablation_on(q: &EmbeddingSet, g: &EmbeddingSet, p: &SimParams) -> Result<Vec<AblationRow>> {
    let dqg = pairwise_l2(q, g)?;
    let dgg = self_distances(g)?;
    let opts = EvalOptions::default();
    Method::ALL
        .into_iter()
        .map(|method| {
            let result = method.run(&dqg, &dgg, p)?;
            let report = evaluate(&result.rankings, q.samples(), g.samples(), &opts);
            Ok(AblationRow {
                method,
                map: report.map,
                rank1: report.rank1(),
            })
        })
        .collect()
}
