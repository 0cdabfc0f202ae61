use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use sim_core::eval::{multi_shot_trials, EvalOptions, TrialConfig, DEFAULT_SHOT, DEFAULT_TRIALS};
use sim_core::io::{self, LabelMap};
use sim_core::synth::{self, SynthConfig};
use sim_core::{
    distance, CrossRanking, DistanceMatrix, EmbeddingSet, GalleryIndex, Method, Modality, Registry,
    SimParams,
};

#[derive(Parser)]
#[command(
    name = "sim",
    version,
    about = "Cross-modality re-ranking with similarity inference"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Re-rank a gallery for a set of queries.
    Rerank(RerankArgs),
    /// Evaluate CMC/mAP over repeated multi-shot trials.
    Eval(EvalArgs),
    /// Evaluate a one-at-a-time grid over lambda, alpha and K.
    Sweep(SweepArgs),
    /// Write a synthetic two-modality dataset.
    Synth(SynthArgs),
    /// Compare baseline, graph-only, neighbor-only and full re-ranking.
    Ablation(AblationArgs),
}

#[derive(Args, Clone)]
struct ParamArgs {
    /// Scale of gallery-gallery edges.
    #[arg(long, default_value_t = 0.01)]
    lambda: f64,
    /// Number of cheapest paths averaged.
    #[arg(long = "bigk", default_value_t = 9)]
    big_k: usize,
    /// Weight of the graph distance in the blend.
    #[arg(long, default_value_t = 0.3)]
    alpha: f64,
    /// Cross-modality neighbors per query (default is a tool choice).
    #[arg(long = "kq", default_value_t = 10)]
    k_q: usize,
    /// Reciprocal neighbors per gallery item (default is a tool choice).
    #[arg(long = "kg", default_value_t = 10)]
    k_g: usize,
    /// Gallery neighbors kept per node; defaults to --bigk.
    #[arg(long = "prune-k")]
    prune_k: Option<usize>,
    #[arg(long = "expand-reciprocal")]
    expand_reciprocal: bool,
    /// Rank query neighbors by the raw distance instead of the graph distance.
    #[arg(long = "raw-cross-ranking")]
    raw_cross_ranking: bool,
    /// Min-max normalize each query's graph distances before blending.
    #[arg(long = "normalize-sgr")]
    normalize_sgr: bool,
}

impl ParamArgs {
    fn params(&self) -> SimParams {
        SimParams {
            lambda: self.lambda,
            big_k: self.big_k,
            alpha: self.alpha,
            k_q: self.k_q,
            k_g: self.k_g,
            prune_k: self.prune_k.unwrap_or(self.big_k),
            expand_reciprocal: self.expand_reciprocal,
            cross_ranking: if self.raw_cross_ranking {
                CrossRanking::Raw
            } else {
                CrossRanking::Sgr
            },
            normalize_sgr: self.normalize_sgr,
        }
    }
}

#[derive(Args, Clone)]
struct EmbeddingArgs {
    /// Query embeddings (.simm or .csv), one row per sample.
    #[arg(long = "query-emb")]
    query_emb: Option<PathBuf>,
    /// Gallery embeddings (.simm or .csv), one row per sample.
    #[arg(long = "gallery-emb")]
    gallery_emb: Option<PathBuf>,
    /// Query registry (index,person,modality,camera per line).
    #[arg(long = "registry-q")]
    registry_q: Option<PathBuf>,
    /// Gallery registry.
    #[arg(long = "registry-g")]
    registry_g: Option<PathBuf>,
    /// Unit-L2 normalize embeddings before computing distances.
    #[arg(long)]
    normalize: bool,
}

#[derive(Args, Clone)]
struct SynthOptions {
    /// Use a generated dataset instead of embedding files.
    #[arg(long)]
    synthetic: bool,
    #[arg(long, default_value_t = 40)]
    identities: usize,
    /// Images per identity per modality.
    #[arg(long, default_value_t = 10)]
    images: usize,
    #[arg(long, default_value_t = 32)]
    dim: usize,
    /// Per-coordinate noise standard deviation.
    #[arg(long, default_value_t = 1.0)]
    spread: f64,
    /// Length of each identity's query-side shift.
    #[arg(long, default_value_t = 6.0)]
    offset: f64,
    /// Radius of the identity-mean sphere.
    #[arg(long = "mean-scale", default_value_t = 10.0)]
    mean_scale: f64,
    /// Generator seed; defaults to --seed.
    #[arg(long = "data-seed")]
    data_seed: Option<u64>,
}

impl SynthOptions {
    fn config(&self, seed: u64) -> SynthConfig {
        SynthConfig {
            n_identities: self.identities,
            images_per_identity_per_modality: self.images,
            dim: self.dim,
            cluster_spread: self.spread,
            modality_offset: self.offset,
            seed: self.data_seed.unwrap_or(seed),
            mean_scale: self.mean_scale,
        }
    }
}

#[derive(Args)]
struct RerankArgs {
    /// Query-gallery distances.
    #[arg(long)]
    dqg: Option<PathBuf>,
    /// Gallery-gallery distances.
    #[arg(long)]
    dgg: Option<PathBuf>,
    #[command(flatten)]
    emb: EmbeddingArgs,
    #[command(flatten)]
    params: ParamArgs,
    /// Also write the graph and neighbor components (d_s.simm, d_m.simm).
    #[arg(long = "emit-components")]
    emit_components: bool,
    #[arg(long = "out-dir", default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args, Clone)]
struct ProtocolArgs {
    /// Re-ranking variant: sim, sgr, mnnr or baseline.
    #[arg(long, default_value = "sim")]
    method: Method,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    trials: usize,
    /// Gallery images sampled per identity in each trial.
    #[arg(long, default_value_t = DEFAULT_SHOT)]
    shot: usize,
    /// Use the whole gallery in every trial instead of sampling.
    #[arg(long = "full-gallery")]
    full_gallery: bool,
    /// Ignore gallery items sharing person and camera with the query.
    #[arg(long = "exclude-same-camera")]
    exclude_same_camera: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    emb: EmbeddingArgs,
    #[command(flatten)]
    synth: SynthOptions,
    #[command(flatten)]
    params: ParamArgs,
    #[command(flatten)]
    protocol: ProtocolArgs,
    #[arg(long = "out-dir", default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    emb: EmbeddingArgs,
    #[command(flatten)]
    synth: SynthOptions,
    #[command(flatten)]
    params: ParamArgs,
    #[command(flatten)]
    protocol: ProtocolArgs,
    /// Comma-separated lambda values.
    #[arg(long = "lambda-grid", value_delimiter = ',')]
    lambda_grid: Vec<f64>,
    /// Comma-separated alpha values.
    #[arg(long = "alpha-grid", value_delimiter = ',')]
    alpha_grid: Vec<f64>,
    /// Comma-separated K values.
    #[arg(long = "bigk-grid", value_delimiter = ',')]
    bigk_grid: Vec<usize>,
    #[arg(long = "out-dir", default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    synth: SynthOptions,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "out-dir", default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct AblationArgs {
    #[command(flatten)]
    emb: EmbeddingArgs,
    #[command(flatten)]
    synth: SynthOptions,
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn read_matrix(path: &Path) -> Result<sim_core::Matrix> {
    Ok(io::read_matrix(path)?)
}

fn read_registry(
    path: Option<&Path>,
    n: usize,
    modality: Modality,
    labels: &mut LabelMap,
) -> Result<Registry> {
    let Some(path) = path else {
        return Ok(Registry::anonymous(n, modality));
    };
    let reg = io::read_registry(path, labels)?;
    if reg.len() != n {
        bail!(
            "{}: {} samples listed but the matrix has {} rows",
            path.display(),
            reg.len(),
            n
        );
    }
    Ok(reg)
}

fn load_embeddings(args: &EmbeddingArgs) -> Result<(EmbeddingSet, EmbeddingSet)> {
    let (Some(qp), Some(gp)) = (&args.query_emb, &args.gallery_emb) else {
        bail!("--query-emb and --gallery-emb are both required");
    };
    let qm = read_matrix(qp)?;
    let gm = read_matrix(gp)?;
    let mut labels = LabelMap::default();
    let qr = read_registry(
        args.registry_q.as_deref(),
        qm.rows(),
        Modality::Ir,
        &mut labels,
    )?;
    let gr = read_registry(
        args.registry_g.as_deref(),
        gm.rows(),
        Modality::Rgb,
        &mut labels,
    )?;
    let q = EmbeddingSet::new(qr, qm).with_context(|| format!("{}", qp.display()))?;
    let g = EmbeddingSet::new(gr, gm).with_context(|| format!("{}", gp.display()))?;
    if args.normalize {
        Ok((q.normalized(), g.normalized()))
    } else {
        Ok((q, g))
    }
}

fn load_dataset(
    emb: &EmbeddingArgs,
    synth: &SynthOptions,
    seed: u64,
) -> Result<(EmbeddingSet, EmbeddingSet)> {
    if synth.synthetic {
        let (q, g) = synth::generate(&synth.config(seed)).context("generating dataset")?;
        if emb.normalize {
            return Ok((q.normalized(), g.normalized()));
        }
        Ok((q, g))
    } else {
        load_embeddings(emb)
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_matrix(path: &Path, m: &sim_core::Matrix) -> Result<()> {
    io::write_matrix(path, m).with_context(|| format!("writing {}", path.display()))
}

fn rerank(args: RerankArgs) -> Result<()> {
    let (dqg, dgg) = match (&args.dqg, &args.dgg) {
        (Some(qp), Some(gp)) => {
            let qm = read_matrix(qp)?;
            let gm = read_matrix(gp)?;
            let mut labels = LabelMap::default();
            let qr = read_registry(
                args.emb.registry_q.as_deref(),
                qm.rows(),
                Modality::Ir,
                &mut labels,
            )?;
            let gr = read_registry(
                args.emb.registry_g.as_deref(),
                gm.rows(),
                Modality::Rgb,
                &mut labels,
            )?;
            if qm.cols() != gr.len() {
                bail!(
                    "{}: {} columns but the gallery has {} samples",
                    qp.display(),
                    qm.cols(),
                    gr.len()
                );
            }
            let dqg = DistanceMatrix::new(qr, gr.clone(), qm)
                .with_context(|| format!("{}", qp.display()))?;
            let dgg = DistanceMatrix::new(gr.clone(), gr, gm)
                .with_context(|| format!("{}", gp.display()))?;
            (dqg, dgg)
        }
        (None, None) => {
            let (q, g) = load_embeddings(&args.emb)?;
            (
                distance::pairwise_l2(&q, &g)?,
                distance::self_distances(&g)?,
            )
        }
        _ => bail!("--dqg and --dgg must be given together"),
    };
    let index = GalleryIndex::build(&dgg, &args.params.params()).context("invalid parameters")?;
    let result = index.rerank(&dqg)?;

    ensure_dir(&args.out_dir)?;
    write_matrix(&args.out_dir.join("d_sim.simm"), &result.d_sim)?;
    write_text(
        &args.out_dir.join("rankings.txt"),
        &io::format_rankings(&result.rankings, dqg.rows(), dqg.cols()),
    )?;
    if args.emit_components {
        if let Some(ds) = &result.d_s {
            write_matrix(&args.out_dir.join("d_s.simm"), ds.values())?;
        }
        if let Some(dm) = &result.d_m {
            write_matrix(&args.out_dir.join("d_m.simm"), dm.values())?;
        }
    }
    Ok(())
}

fn trial_config(params: &ParamArgs, protocol: &ProtocolArgs) -> TrialConfig {
    TrialConfig {
        method: protocol.method,
        params: params.params(),
        shot: (!protocol.full_gallery).then_some(protocol.shot),
        normalize: false,
        eval: EvalOptions {
            exclude_same_camera: protocol.exclude_same_camera,
            ..EvalOptions::default()
        },
    }
}

fn eval(args: EvalArgs) -> Result<()> {
    let (q, g) = load_dataset(&args.emb, &args.synth, args.protocol.seed)?;
    let cfg = trial_config(&args.params, &args.protocol);
    let report = multi_shot_trials(&q, &g, &cfg, args.protocol.trials, args.protocol.seed)?;
    let text = io::format_report(&report);
    ensure_dir(&args.out_dir)?;
    write_text(&args.out_dir.join("report.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let base = args.params.params();
    let mut grid: Vec<(&str, String, SimParams)> = Vec::new();
    for &v in &args.lambda_grid {
        grid.push(("lambda", v.to_string(), SimParams { lambda: v, ..base }));
    }
    for &v in &args.alpha_grid {
        grid.push(("alpha", v.to_string(), SimParams { alpha: v, ..base }));
    }
    for &v in &args.bigk_grid {
        let prune_k = args.params.prune_k.unwrap_or(v);
        grid.push((
            "bigk",
            v.to_string(),
            SimParams {
                big_k: v,
                prune_k,
                ..base
            },
        ));
    }
    if grid.is_empty() {
        bail!("empty grid: give at least one of --lambda-grid, --alpha-grid, --bigk-grid");
    }
    let (q, g) = load_dataset(&args.emb, &args.synth, args.protocol.seed)?;
    let mut csv = String::from("param,value,map,rank1\n");
    for (name, value, params) in grid {
        let cfg = TrialConfig {
            params,
            ..trial_config(&args.params, &args.protocol)
        };
        let report = multi_shot_trials(&q, &g, &cfg, args.protocol.trials, args.protocol.seed)
            .with_context(|| format!("{name}={value}"))?;
        csv.push_str(&format!(
            "{name},{value},{:.6},{:.6}\n",
            report.map,
            report.rank1()
        ));
    }
    ensure_dir(&args.out_dir)?;
    write_text(&args.out_dir.join("sweep.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

fn synth_cmd(args: SynthArgs) -> Result<()> {
    let (q, g) = synth::generate(&args.synth.config(args.seed))?;
    ensure_dir(&args.out_dir)?;
    write_matrix(&args.out_dir.join("query.simm"), q.vectors())?;
    write_matrix(&args.out_dir.join("gallery.simm"), g.vectors())?;
    write_text(
        &args.out_dir.join("registry_q.txt"),
        &io::format_registry(q.samples()),
    )?;
    write_text(
        &args.out_dir.join("registry_g.txt"),
        &io::format_registry(g.samples()),
    )?;
    Ok(())
}

fn ablation(args: AblationArgs) -> Result<()> {
    let (q, g) = load_dataset(&args.emb, &args.synth, args.seed)?;
    let rows = synth::ablation_on(&q, &g, &args.params.params())?;
    let gap = synth::gap_report(&q, &g)?;
    println!("method,map,rank1");
    for r in rows {
        println!("{},{:.6},{:.6}", r.method.name(), r.map, r.rank1);
    }
    println!(
        "intra_gallery,{:.6},{:.6}",
        gap.intra.map,
        gap.intra.rank1()
    );
    Ok(())
}

/// Installs a global pool of `SIM_THREADS` workers; 0 or unset means auto.
fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("SIM_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .with_context(|| format!("SIM_THREADS: not a count: {raw:?}"))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("SIM_THREADS: configuring worker pool")?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = configure_threads().and_then(|()| match cli.command {
        Command::Rerank(a) => rerank(a),
        Command::Eval(a) => eval(a),
        Command::Sweep(a) => sweep(a),
        Command::Synth(a) => synth_cmd(a),
        Command::Ablation(a) => ablation(a),
    });
    match run {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
