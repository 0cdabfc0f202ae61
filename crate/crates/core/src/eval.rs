//! Retrieval metrics (CMC, mAP) and the multi-shot trial protocol.
//!
//! A gallery item is relevant to a query iff both carry the same person
//! label. Queries without any relevant item are excluded from mAP and
//! counted in [`EvalReport::excluded`].

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::distance;
use crate::error::{Error, Result};
use crate::pipeline::Method;
use crate::types::{DistanceMatrix, EmbeddingSet, PersonId, Registry, SimParams};

/// Ranks reported in text summaries.
pub const REPORT_RANKS: [usize; 4] = [1, 5, 10, 20];

/// Default images sampled per gallery identity in a multi-shot trial.
pub const DEFAULT_SHOT: usize = 10;
/// Default number of repeated trials.
pub const DEFAULT_TRIALS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub map: f64,
    /// `cmc[r]` is the fraction of queries matched within rank `r + 1`.
    pub cmc: Vec<f64>,
    /// Mean AP per query across trials; `None` for excluded queries.
    pub per_query_ap: Vec<Option<f64>>,
    pub trials: usize,
    pub seed: u64,
    pub excluded: usize,
}

impl EvalReport {
    pub fn rank(&self, r: usize) -> Option<f64> {
        r.checked_sub(1).and_then(|i| self.cmc.get(i)).copied()
    }

    pub fn rank1(&self) -> f64 {
        self.rank(1).unwrap_or(0.0)
    }
}

/// Mean of precision at each relevant item's (1-based) rank, or `None`
/// when nothing in `ranking` is relevant.
pub fn average_precision(ranking: &[usize], relevance: &[bool]) -> Option<f64> {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (pos, &g) in ranking.iter().enumerate() {
        if relevance[g] {
            hits += 1;
            sum += hits as f64 / (pos + 1) as f64;
        }
    }
    (hits > 0).then(|| sum / hits as f64)
}

/// Position of the first relevant item in `ranking`.
fn first_hit(ranking: &[usize], relevance: &[bool]) -> Option<usize> {
    ranking.iter().position(|&g| relevance[g])
}

pub fn cmc_curve(rankings: &[Vec<usize>], relevance: &[Vec<bool>], max_rank: usize) -> Vec<f64> {
    let mut counts = vec![0usize; max_rank];
    for (ranking, rel) in rankings.iter().zip(relevance) {
        if let Some(h) = first_hit(ranking, rel) {
            if h < max_rank {
                counts[h] += 1;
            }
        }
    }
    let n = rankings.len().max(1) as f64;
    let mut acc = 0usize;
    counts
        .into_iter()
        .map(|c| {
            acc += c;
            acc as f64 / n
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalOptions {
    pub max_rank: usize,
    /// Drop gallery items sharing both person and camera with the query.
    pub exclude_same_camera: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            max_rank: 20,
            exclude_same_camera: false,
        }
    }
}

/// Scores one set of rankings.
pub fn evaluate(
    rankings: &[Vec<usize>],
    query: &Registry,
    gallery: &Registry,
    opts: &EvalOptions,
) -> EvalReport {
    let gallery_persons: Vec<PersonId> = gallery.persons().collect();
    let mut kept_rankings = Vec::with_capacity(rankings.len());
    let mut relevance = Vec::with_capacity(rankings.len());
    let mut per_query_ap = Vec::with_capacity(rankings.len());
    for (i, ranking) in rankings.iter().enumerate() {
        let q = query.get(i);
        let ranking: Vec<usize> = if opts.exclude_same_camera && q.camera.is_some() {
            ranking
                .iter()
                .copied()
                .filter(|&g| {
                    let s = gallery.get(g);
                    !(s.person == q.person && s.camera == q.camera)
                })
                .collect()
        } else {
            ranking.clone()
        };
        let rel: Vec<bool> = gallery_persons.iter().map(|&p| p == q.person).collect();
        let ap = average_precision(&ranking, &rel);
        per_query_ap.push(ap);
        if ap.is_some() {
            kept_rankings.push(ranking);
            relevance.push(rel);
        }
    }
    let max_rank = opts.max_rank.min(gallery.len());
    let cmc = cmc_curve(&kept_rankings, &relevance, max_rank);
    finish(vec![per_query_ap], vec![cmc], 1, 0)
}

fn finish(
    per_trial_ap: Vec<Vec<Option<f64>>>,
    per_trial_cmc: Vec<Vec<f64>>,
    trials: usize,
    seed: u64,
) -> EvalReport {
    let nq = per_trial_ap.first().map_or(0, Vec::len);
    let per_query_ap: Vec<Option<f64>> = (0..nq)
        .map(|i| {
            let vals: Vec<f64> = per_trial_ap.iter().filter_map(|t| t[i]).collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        })
        .collect();
    let valid: Vec<f64> = per_query_ap.iter().flatten().copied().collect();
    let map = if valid.is_empty() {
        0.0
    } else {
        valid.iter().sum::<f64>() / valid.len() as f64
    };
    let len = per_trial_cmc.iter().map(Vec::len).min().unwrap_or(0);
    let cmc = (0..len)
        .map(|r| per_trial_cmc.iter().map(|c| c[r]).sum::<f64>() / per_trial_cmc.len() as f64)
        .collect();
    EvalReport {
        map,
        cmc,
        excluded: nq - valid.len(),
        per_query_ap,
        trials,
        seed,
    }
}

/// Configuration of a repeated evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialConfig {
    pub method: Method,
    pub params: SimParams,
    /// Gallery images sampled per identity; `None` keeps the full gallery.
    pub shot: Option<usize>,
    /// Unit-normalize embeddings before computing distances.
    pub normalize: bool,
    pub eval: EvalOptions,
}

impl Default for TrialConfig {
    fn default() -> Self {
        TrialConfig {
            method: Method::Sim,
            params: SimParams::default(),
            shot: Some(DEFAULT_SHOT),
            normalize: false,
            eval: EvalOptions::default(),
        }
    }
}

/// Per-trial generator: ChaCha8 keyed by the master seed, one stream per
/// trial, so results do not depend on how trials are scheduled.
pub fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

/// Gallery positions kept for one trial, ascending.
pub fn sample_gallery(gallery: &Registry, shot: Option<usize>, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let Some(shot) = shot else {
        return (0..gallery.len()).collect();
    };
    let mut by_person: BTreeMap<PersonId, Vec<usize>> = BTreeMap::new();
    for (pos, s) in gallery.samples().iter().enumerate() {
        by_person.entry(s.person).or_default().push(pos);
    }
    let mut keep = Vec::with_capacity(by_person.len() * shot);
    for positions in by_person.values() {
        if positions.len() <= shot {
            keep.extend_from_slice(positions);
        } else {
            keep.extend(
                rand::seq::index::sample(rng, positions.len(), shot)
                    .into_iter()
                    .map(|k| positions[k]),
            );
        }
    }
    keep.sort_unstable();
    keep
}

/// Samples a gallery per trial, re-ranks, scores, and averages over trials.
pub fn multi_shot_trials(
    query: &EmbeddingSet,
    gallery: &EmbeddingSet,
    cfg: &TrialConfig,
    trials: usize,
    seed: u64,
) -> Result<EvalReport> {
    if trials == 0 {
        return Err(Error::InvalidParams("trials must be positive".into()));
    }
    let (query, gallery) = if cfg.normalize {
        (query.normalized(), gallery.normalized())
    } else {
        (query.clone(), gallery.clone())
    };
    let dqg = distance::pairwise_l2(&query, &gallery)?;
    let dgg = distance::self_distances(&gallery)?;
    multi_shot_trials_on_distances(&dqg, &dgg, cfg, trials, seed)
}

/// [`multi_shot_trials`] on precomputed distances.
pub fn multi_shot_trials_on_distances(
    dqg: &DistanceMatrix,
    dgg: &DistanceMatrix,
    cfg: &TrialConfig,
    trials: usize,
    seed: u64,
) -> Result<EvalReport> {
    if trials == 0 {
        return Err(Error::InvalidParams("trials must be positive".into()));
    }
    let outcomes: Vec<Result<EvalReport>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let keep = sample_gallery(dgg.rows(), cfg.shot, &mut trial_rng(seed, t));
            if keep.is_empty() {
                return Err(Error::EmptyGallery);
            }
            let all_q: Vec<usize> = (0..dqg.rows().len()).collect();
            let sub_qg = dqg.select(&all_q, &keep)?;
            let sub_gg = dgg.select(&keep, &keep)?;
            let result = cfg.method.run(&sub_qg, &sub_gg, &cfg.params)?;
            Ok(evaluate(
                &result.rankings,
                sub_qg.rows(),
                sub_qg.cols(),
                &cfg.eval,
            ))
        })
        .collect();
    let mut aps = Vec::with_capacity(trials);
    let mut cmcs = Vec::with_capacity(trials);
    for o in outcomes {
        let r = o?;
        aps.push(r.per_query_ap);
        cmcs.push(r.cmc);
    }
    Ok(finish(aps, cmcs, trials, seed))
}
