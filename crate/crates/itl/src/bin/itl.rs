//! Command-line front end: environment generation, expert batch rollouts,
//! dynamics estimation, constrained posterior sampling, and the full
//! experiment-plus-report pipeline.
//!
//! Exit codes: 0 on success, 2 when an experiment run aborts because too
//! many datasets flagged sampler failures, 1 on any other error.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;

use itl::data::{rollout_batch, DEFAULT_HORIZON};
use itl::envgen::{expert_for, find_env_with_structure, generate_env, EnvSpec};
use itl::experiment::{run_experiment, ExperimentConfig};
use itl::io::{
    env_hash, load_batch, load_mdp, save_batch, save_mdp, save_mle, save_sample_set,
    BatchDocument, MleDocument, SampleSetDocument,
};
use itl::posterior::{DirichletPosterior, DEFAULT_PRIOR};
use itl::report::{emit_outputs, plot_from_csv};
use itl::sampler::{build_context, sample_constrained, AnchorMode, BallSource, SamplerSettings};
use itl::{derive_seed, Error, Result, Stream};

#[derive(Parser)]
#[command(
    name = "itl",
    version,
    about = "Tabular-MDP toolkit: expert-constrained dynamics inference and its evaluation harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an environment, optionally searching seeds for a target
    /// stochastic-state structure.
    GenEnv(GenEnvArgs),
    /// Roll out expert batches from an environment.
    GenData(GenDataArgs),
    /// Fit the smoothed dynamics point estimate to a batch.
    FitMle(FitMleArgs),
    /// Draw constraint-filtered posterior samples from a batch.
    ItlSample(ItlSampleArgs),
    /// Run the full experiment grid from a JSON config and emit reports.
    Experiment(ExperimentArgs),
    /// Render histogram panels from a per-dataset metrics CSV.
    Plot(PlotArgs),
}

#[derive(clap::Args)]
struct GenEnvArgs {
    /// Decision states (a terminal state is appended).
    #[arg(long)]
    n_decision_states: Option<usize>,
    #[arg(long)]
    n_actions: Option<usize>,
    #[arg(long)]
    discount: Option<f64>,
    /// Probability that a transition row is drawn from the skewed component.
    #[arg(long)]
    skew_mix: Option<f64>,
    #[arg(long)]
    skew_concentration: Option<f64>,
    #[arg(long)]
    flat_concentration: Option<f64>,
    #[arg(long)]
    reward_low: Option<f64>,
    /// Upper reward bound; defaults to the decision-state count.
    #[arg(long)]
    reward_high: Option<f64>,
    /// Generation seed, or the seed a structure search starts from.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Stochastic-state targets as "eps:count,eps:count"; when given, seeds
    /// are searched upward from --seed until the structure matches.
    #[arg(long)]
    targets: Option<String>,
    /// Seed budget for the structure search.
    #[arg(long, default_value_t = 10_000)]
    max_tries: u64,
    /// Output path for the environment document.
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct GenDataArgs {
    /// Environment document to roll out in.
    #[arg(long)]
    env: PathBuf,
    /// Expert tolerance: the behavior policy mixes uniformly over all
    /// actions within this margin of optimal.
    #[arg(long)]
    expert_epsilon: f64,
    /// Episodes per dataset.
    #[arg(long)]
    episodes: usize,
    /// Step cap per episode.
    #[arg(long, default_value_t = DEFAULT_HORIZON)]
    horizon: usize,
    /// Number of independent datasets to write.
    #[arg(long, default_value_t = 1)]
    n_datasets: usize,
    /// Seed every dataset's rollout stream is derived from.
    #[arg(long, default_value_t = 0)]
    master_seed: u64,
    /// Directory for batch_NNNN.json files (created if missing).
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(clap::Args)]
struct FitMleArgs {
    /// Batch document to fit.
    #[arg(long)]
    batch: PathBuf,
    /// Symmetric Dirichlet prior pseudo-count.
    #[arg(long, default_value_t = DEFAULT_PRIOR)]
    prior: f64,
    /// Output path for the estimate document.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CliAnchor {
    Mle,
    Sample,
}

impl From<CliAnchor> for AnchorMode {
    fn from(a: CliAnchor) -> Self {
        match a {
            CliAnchor::Mle => AnchorMode::Mle,
            CliAnchor::Sample => AnchorMode::Sample,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CliBallSource {
    QStar,
    QExpert,
}

impl From<CliBallSource> for BallSource {
    fn from(b: CliBallSource) -> Self {
        match b {
            CliBallSource::QStar => BallSource::QStar,
            CliBallSource::QExpert => BallSource::QExpert,
        }
    }
}

#[derive(clap::Args)]
struct ItlSampleArgs {
    /// Environment document (provides rewards and discount).
    #[arg(long)]
    env: PathBuf,
    /// Expert tolerance the batch was collected under.
    #[arg(long)]
    expert_epsilon: f64,
    /// Batch document; must have been rolled out on --env.
    #[arg(long)]
    batch: PathBuf,
    /// Accepted samples to collect.
    #[arg(long, default_value_t = 100)]
    n_samples: usize,
    /// Anchor dynamics for the constraint system.
    #[arg(long, value_enum, default_value_t = CliAnchor::Mle)]
    anchor: CliAnchor,
    /// Q-table that defines the acceptance check's action balls.
    #[arg(long, value_enum, default_value_t = CliBallSource::QStar)]
    ball_source: CliBallSource,
    /// Symmetric Dirichlet prior pseudo-count.
    #[arg(long, default_value_t = DEFAULT_PRIOR)]
    prior: f64,
    /// Seed the sampler and anchor streams are derived from.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path for the sample-set document.
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct ExperimentArgs {
    /// JSON experiment config; missing fields take their defaults.
    #[arg(long)]
    config: PathBuf,
    /// Directory the report files are written into.
    #[arg(long)]
    out_dir: PathBuf,
    /// Worker threads for the dataset-level parallel map (default: all
    /// cores). Results are identical for any value.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(clap::Args)]
struct PlotArgs {
    /// Per-dataset metrics CSV (the qstar_per_dataset.csv format).
    #[arg(long)]
    metrics: PathBuf,
    /// Output path for the SVG.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::FlaggedOverflow { .. } => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenEnv(args) => gen_env(args),
        Command::GenData(args) => gen_data(args),
        Command::FitMle(args) => fit_mle(args),
        Command::ItlSample(args) => itl_sample(args),
        Command::Experiment(args) => experiment(args),
        Command::Plot(args) => plot(args),
    }
}

fn apply_spec_flags(args: &GenEnvArgs) -> EnvSpec {
    let mut spec = EnvSpec { seed: args.seed, ..EnvSpec::default() };
    if let Some(v) = args.n_decision_states {
        spec.n_decision_states = v;
    }
    if let Some(v) = args.n_actions {
        spec.n_actions = v;
    }
    if let Some(v) = args.discount {
        spec.discount = v;
    }
    if let Some(v) = args.skew_mix {
        spec.skew_mix = v;
    }
    if let Some(v) = args.skew_concentration {
        spec.skew_concentration = v;
    }
    if let Some(v) = args.flat_concentration {
        spec.flat_concentration = v;
    }
    if let Some(v) = args.reward_low {
        spec.reward_low = v;
    }
    if args.reward_high.is_some() {
        spec.reward_high = args.reward_high;
    }
    spec
}

fn parse_targets(text: &str) -> Result<Vec<(f64, usize)>> {
    text.split(',')
        .map(|pair| {
            let (eps, count) = pair
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("target '{pair}' is not 'eps:count'")))?;
            let eps: f64 = eps
                .trim()
                .parse()
                .map_err(|e| Error::Config(format!("bad epsilon in target '{pair}': {e}")))?;
            let count: usize = count
                .trim()
                .parse()
                .map_err(|e| Error::Config(format!("bad count in target '{pair}': {e}")))?;
            Ok((eps, count))
        })
        .collect()
}

fn gen_env(args: GenEnvArgs) -> Result<()> {
    let spec = apply_spec_flags(&args);
    let (env, seed) = match &args.targets {
        Some(text) => {
            let targets = parse_targets(text)?;
            find_env_with_structure(&spec, &targets, args.max_tries)?
        }
        None => (generate_env(&spec)?, spec.seed),
    };
    save_mdp(&args.out, &env)?;
    println!("seed {seed}");
    println!("env hash {}", env_hash(&env)?);
    println!("wrote {}", args.out.display());
    Ok(())
}

fn gen_data(args: GenDataArgs) -> Result<()> {
    if args.n_datasets == 0 {
        return Err(Error::Config("n-datasets must be positive".into()));
    }
    let env = load_mdp(&args.env)?;
    let digest = env_hash(&env)?;
    let expert = expert_for(&env, args.expert_epsilon)?;
    fs::create_dir_all(&args.out_dir)?;
    for i in 0..args.n_datasets {
        let rollout_seed = derive_seed(derive_seed(args.master_seed, i as u64), 0);
        let batch = rollout_batch(&env, &expert, args.episodes, args.horizon, rollout_seed)?;
        let doc = BatchDocument::from_batch(&batch, digest.clone(), rollout_seed, args.horizon);
        save_batch(&args.out_dir.join(format!("batch_{i:04}.json")), &doc)?;
    }
    println!("wrote {} batches to {}", args.n_datasets, args.out_dir.display());
    Ok(())
}

fn fit_mle(args: FitMleArgs) -> Result<()> {
    let doc = load_batch(&args.batch)?;
    let batch = doc.to_batch()?;
    let post = DirichletPosterior::from_batch(&batch, args.prior)?;
    let estimate =
        MleDocument::new(doc.env_hash.clone(), args.prior, doc.episodes, doc.terminal, &post.mean());
    save_mle(&args.out, &estimate)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn itl_sample(args: ItlSampleArgs) -> Result<()> {
    let env = load_mdp(&args.env)?;
    let digest = env_hash(&env)?;
    let doc = load_batch(&args.batch)?;
    if doc.env_hash != digest {
        return Err(Error::Config(format!(
            "batch was rolled out on a different environment \
             (batch hash {}, --env hash {digest})",
            doc.env_hash
        )));
    }
    let batch = doc.to_batch()?;
    let expert = expert_for(&env, args.expert_epsilon)?;
    let post = DirichletPosterior::from_batch(&batch, args.prior)?;
    let anchor: AnchorMode = args.anchor.into();
    let settings = SamplerSettings { ball_source: args.ball_source.into(), ..Default::default() };
    let ctx = build_context(
        &post,
        &expert,
        env.rewards(),
        env.discount(),
        args.expert_epsilon,
        anchor,
        &mut Stream::seed_from_u64(derive_seed(args.seed, 3)),
    )?;
    let set = sample_constrained(
        &post,
        &ctx,
        args.n_samples,
        &settings,
        &mut Stream::seed_from_u64(derive_seed(args.seed, 2)),
    )?;
    let anchor_label = match anchor {
        AnchorMode::Mle => "mle",
        AnchorMode::Sample => "sample",
    };
    let ball_label = match settings.ball_source {
        BallSource::QStar => "q_star",
        BallSource::QExpert => "q_expert",
    };
    let out_doc = SampleSetDocument::new(
        digest,
        args.expert_epsilon,
        args.seed,
        anchor_label.into(),
        ball_label.into(),
        env.terminal(),
        &set.samples,
        set.outer_rounds_used,
        &set.per_row_draw_counts,
        &set.final_deltas,
    )?;
    save_sample_set(&args.out, &out_doc)?;
    println!("accepted {} samples", set.accepted);
    println!("wrote {}", args.out.display());
    Ok(())
}

fn experiment(args: ExperimentArgs) -> Result<()> {
    let text = fs::read_to_string(&args.config)?;
    let config: ExperimentConfig =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("bad config: {e}")))?;
    let report = match args.jobs {
        None => run_experiment(&config)?,
        Some(0) => return Err(Error::Config("jobs must be positive".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(|| run_experiment(&config))?,
    };
    let files = emit_outputs(&report, &args.out_dir)?;
    let flagged = report.flagged_total();
    if flagged > 0 {
        println!("{flagged} of {} dataset runs flagged sampler failures", report.dataset_runs());
    }
    println!("wrote {} files to {}", files.len(), args.out_dir.display());
    Ok(())
}

fn plot(args: PlotArgs) -> Result<()> {
    let csv = fs::read_to_string(&args.metrics)?;
    fs::write(&args.out, plot_from_csv(&csv)?)?;
    println!("wrote {}", args.out.display());
    Ok(())
}
