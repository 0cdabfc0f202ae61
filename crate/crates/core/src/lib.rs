//! Similarity inference re-ranking for cross-modality retrieval.
//!
//! Given query-gallery distances `D_qg` and gallery-gallery distances
//! `D_gg`, the re-ranked distance blends two signals:
//!
//! * **graph reasoning** ([`sgr`]): the mean cost of the `K` cheapest routes
//!   `query -> g_t -> g_j`, where the second hop uses `lambda * D_gg`;
//! * **neighbor reasoning** ([`mnnr`]): the Jaccard distance between the
//!   query's nearest gallery items and `g_j`'s k-reciprocal gallery
//!   neighbors.
//!
//! `d = alpha * graph + (1 - alpha) * neighbor`, see [`pipeline::run_sim`].
//! [`eval`] scores rankings with CMC and mAP, and [`synth`] generates
//! seeded two-modality datasets for experiments.

pub mod distance;
pub mod error;
pub mod eval;
pub mod io;
pub mod mnnr;
pub mod pipeline;
pub mod sgr;
pub mod synth;
pub mod types;

pub use error::{Error, Result};
pub use eval::{EvalOptions, EvalReport, TrialConfig};
pub use pipeline::{run_baseline, run_sim, GalleryIndex, Method, SimResult};
pub use types::{
    validate_params, CrossRanking, DistanceMatrix, EmbeddingSet, Matrix, Modality, PersonId,
    Registry, SampleId, SimParams,
};
