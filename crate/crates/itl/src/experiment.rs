//! Dataset-level experiment pipeline.
//!
//! For every `(epsilon, episode count)` cell the runner generates expert
//! batches, fits each configured estimation method to the same batch, plans
//! on the fitted dynamics, and scores the resulting policy against the true
//! environment. Per-dataset results are aggregated into mean ± std summaries
//! per method; raw per-dataset values are kept for distribution plots.
//!
//! Datasets run in parallel; every random stream is derived from the master
//! seed and the dataset index, so results are identical regardless of
//! thread count or scheduling order.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use ndarray::{Array2, Array3};
use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{rollout_batch, DEFAULT_HORIZON};
use crate::envgen::{expert_for, generate_env, reference_env_spec, EnvSpec};
use crate::error::{Error, Result};
use crate::io::{canonical_hash, env_hash, load_mdp};
use crate::mdp::{
    classify_states, epsilon_ball, plan, EpsilonBallMap, Plan, Policy, QTable, StateKind,
    TabularMdp,
};
use crate::posterior::{DirichletPosterior, DEFAULT_PRIOR};
use crate::sampler::{build_context, sample_constrained, AnchorMode, SamplerSettings};
use crate::{derive_seed, Stream};

/// Epsilon grid evaluated when a config does not override it.
pub const DEFAULT_EPSILONS: [f64; 3] = [0.0, 3.0, 4.0];
/// Episode-count grid (the low- and high-data settings) for the default run.
pub const DEFAULT_EPISODE_COUNTS: [usize; 2] = [15, 300];
/// Datasets per cell in a full run.
pub const DEFAULT_N_DATASETS: usize = 1000;
/// Posterior draws (and constrained samples) per dataset in a full run.
pub const DEFAULT_N_POSTERIOR_SAMPLES: usize = 1000;
/// A run aborts when more than this fraction of dataset runs flag sampler
/// failures.
pub const FLAGGED_FRACTION_LIMIT: f64 = 0.01;

/// An estimation method compared by the harness.
///
/// The ordering is the row order used in reports: estimated dynamics first,
/// then the behavior policy itself as a planning-free reference row.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Plan on the smoothed point estimate of the dynamics.
    Mle,
    /// Average the greedy policies of unconstrained posterior draws.
    Posterior,
    /// Average the greedy policies of constraint-filtered posterior draws.
    Constrained,
    /// Score the expert policy itself, with no planning step.
    Expert,
}

impl Method {
    /// Every method, in report order.
    pub fn all() -> [Method; 4] {
        [Method::Mle, Method::Posterior, Method::Constrained, Method::Expert]
    }

    /// Stable lowercase name used in file names and report keys.
    pub fn label(&self) -> &'static str {
        match self {
            Method::Mle => "mle",
            Method::Posterior => "posterior",
            Method::Constrained => "constrained",
            Method::Expert => "expert",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Where the experiment's true environment comes from.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvSource {
    /// The pinned reference environment.
    #[default]
    Reference,
    /// An environment document on disk.
    Path { path: PathBuf },
    /// A freshly generated environment.
    Generate { spec: EnvSpec },
}

/// Full description of one experiment run. Every field has a serialized
/// default, so a partial JSON config (or `{}`) fills in the rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub env: EnvSource,
    pub epsilons: Vec<f64>,
    pub episode_counts: Vec<usize>,
    /// Step cap per episode when rolling out batches.
    pub horizon: usize,
    pub n_datasets: usize,
    pub n_posterior_samples: usize,
    pub master_seed: u64,
    /// Symmetric Dirichlet prior pseudo-count.
    pub prior: f64,
    pub methods: Vec<Method>,
    pub anchor: AnchorMode,
    pub sampler: SamplerSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            env: EnvSource::default(),
            epsilons: DEFAULT_EPSILONS.to_vec(),
            episode_counts: DEFAULT_EPISODE_COUNTS.to_vec(),
            horizon: DEFAULT_HORIZON,
            n_datasets: DEFAULT_N_DATASETS,
            n_posterior_samples: DEFAULT_N_POSTERIOR_SAMPLES,
            master_seed: 0,
            prior: DEFAULT_PRIOR,
            methods: Method::all().to_vec(),
            anchor: AnchorMode::default(),
            sampler: SamplerSettings::default(),
        }
    }
}

impl ExperimentConfig {
    /// Rejects configs the runner cannot execute.
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("method list is empty".into()));
        }
        let distinct: BTreeSet<Method> = self.methods.iter().copied().collect();
        if distinct.len() != self.methods.len() {
            return Err(Error::Config("method list contains duplicates".into()));
        }
        if self.epsilons.is_empty() {
            return Err(Error::Config("epsilon list is empty".into()));
        }
        for &eps in &self.epsilons {
            if !(eps.is_finite() && eps >= 0.0) {
                return Err(Error::Config(format!("epsilon {eps} is not finite and nonnegative")));
            }
        }
        if dedup_f64(&self.epsilons).len() != self.epsilons.len() {
            return Err(Error::Config("epsilon list contains duplicates".into()));
        }
        if self.episode_counts.is_empty() {
            return Err(Error::Config("episode-count list is empty".into()));
        }
        if self.episode_counts.contains(&0) {
            return Err(Error::Config("episode counts must be positive".into()));
        }
        let distinct: BTreeSet<usize> = self.episode_counts.iter().copied().collect();
        if distinct.len() != self.episode_counts.len() {
            return Err(Error::Config("episode-count list contains duplicates".into()));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be positive".into()));
        }
        if self.n_datasets == 0 {
            return Err(Error::Config("n_datasets must be positive".into()));
        }
        if self.n_posterior_samples == 0 {
            return Err(Error::Config("n_posterior_samples must be positive".into()));
        }
        if !(self.prior.is_finite() && self.prior > 0.0) {
            return Err(Error::Config(format!("prior must be positive, got {}", self.prior)));
        }
        if self.methods.contains(&Method::Constrained) {
            for &eps in &self.epsilons {
                self.sampler.validate(eps)?;
            }
        }
        Ok(())
    }

    /// Loads or generates the true environment and returns it with its hash.
    pub fn resolve_env(&self) -> Result<(TabularMdp, String)> {
        let mdp = match &self.env {
            EnvSource::Reference => generate_env(&reference_env_spec())?,
            EnvSource::Path { path } => load_mdp(path)?,
            EnvSource::Generate { spec } => generate_env(spec)?,
        };
        let hash = env_hash(&mdp)?;
        Ok((mdp, hash))
    }
}

fn dedup_f64(values: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(values.len());
    for &v in values {
        if !out.contains(&v) {
            out.push(v);
        }
    }
    out
}

/// Percentage scores of one policy against the true environment. Each
/// component is `None` when its denominator is empty (for example, no
/// stochastic states exist at `epsilon = 0`, and a policy with no mistakes
/// has no mistake set to rate).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyMetrics {
    /// Share of deterministic-policy states whose chosen action is the
    /// expert's sole supported action.
    pub det_acc: Option<f64>,
    /// Share of stochastic-policy states whose chosen action is the true
    /// optimal action.
    pub stoch_acc: Option<f64>,
    /// Share of mistaken states (chosen differs from the true optimal
    /// action) whose chosen action still lies in the true epsilon-ball.
    pub mistake_ball_rate: Option<f64>,
}

/// Everything about the true environment a cell's metrics need: the optimal
/// plan, the epsilon-ball map, and the per-state expert classification.
struct CellTruth {
    plan: Plan,
    balls: EpsilonBallMap,
    kinds: BTreeMap<usize, StateKind>,
    terminal: usize,
}

impl CellTruth {
    fn new(env: &TabularMdp, expert: &Policy, epsilon: f64) -> Result<Self> {
        let planned = plan(env)?;
        let balls = epsilon_ball(&planned.q, epsilon)?;
        let kinds = classify_states(expert, env.terminal())?;
        Ok(CellTruth { plan: planned, balls, kinds, terminal: env.terminal() })
    }

    /// Summed per-state optimality gap of `pi_hat` under the true optimal Q.
    fn q_star_metric(&self, pi_hat: &Policy) -> f64 {
        let q = &self.plan.q;
        (0..q.n_states())
            .filter(|&s| s != self.terminal)
            .map(|s| {
                let chosen: f64 =
                    (0..q.n_actions()).map(|a| pi_hat.prob(s, a) * q.get(s, a)).sum();
                q.row_max(s) - chosen
            })
            .sum()
    }

    /// Accuracy components of `pi_hat`'s argmax actions (ties to the lowest
    /// index) against the expert structure and the true optimum.
    fn accuracy_metrics(&self, expert: &Policy, pi_hat: &Policy) -> AccuracyMetrics {
        let mut det = Counter::default();
        let mut stoch = Counter::default();
        let mut ball = Counter::default();
        for (&s, kind) in &self.kinds {
            let chosen = pi_hat.argmax(s);
            let best = self.plan.greedy[s];
            match kind {
                StateKind::Deterministic => {
                    let a_star = expert.argmax(s);
                    det.tally(chosen == a_star);
                }
                StateKind::Stochastic => stoch.tally(chosen == best),
            }
            if chosen != best {
                ball.tally(self.balls.contains(s, chosen));
            }
        }
        AccuracyMetrics {
            det_acc: det.percent(),
            stoch_acc: stoch.percent(),
            mistake_ball_rate: ball.percent(),
        }
    }
}

#[derive(Default)]
struct Counter {
    hits: usize,
    total: usize,
}

impl Counter {
    fn tally(&mut self, hit: bool) {
        self.total += 1;
        self.hits += hit as usize;
    }

    fn percent(&self) -> Option<f64> {
        (self.total > 0).then(|| 100.0 * self.hits as f64 / self.total as f64)
    }
}

/// Summed per-state optimality gap of `pi_hat` measured against the true
/// environment's optimal Q-table: zero exactly when `pi_hat` puts all its
/// mass on optimal actions at every decision state, positive otherwise.
pub fn q_star_metric(true_mdp: &TabularMdp, pi_hat: &Policy) -> Result<f64> {
    check_policy_shape(true_mdp, pi_hat)?;
    let expert = pi_hat; // classification is unused by the metric
    let truth = CellTruth::new(true_mdp, expert, 0.0)?;
    Ok(truth.q_star_metric(pi_hat))
}

/// Scores `pi_hat` against the true environment: accuracy over the expert's
/// deterministic states, accuracy over its stochastic states, and the share
/// of mistakes that still land inside the true epsilon-ball.
pub fn accuracy_metrics(
    true_mdp: &TabularMdp,
    expert: &Policy,
    pi_hat: &Policy,
    epsilon: f64,
) -> Result<AccuracyMetrics> {
    check_policy_shape(true_mdp, expert)?;
    check_policy_shape(true_mdp, pi_hat)?;
    let truth = CellTruth::new(true_mdp, expert, epsilon)?;
    Ok(truth.accuracy_metrics(expert, pi_hat))
}

fn check_policy_shape(mdp: &TabularMdp, policy: &Policy) -> Result<()> {
    if policy.n_states() != mdp.n_states() || policy.n_actions() != mdp.n_actions() {
        return Err(Error::contract(format!(
            "policy shape ({}, {}) does not match the environment ({}, {})",
            policy.n_states(),
            policy.n_actions(),
            mdp.n_states(),
            mdp.n_actions()
        )));
    }
    Ok(())
}

/// Plans on every sampled transition tensor and averages the results: the
/// policy is the elementwise mean of the one-hot greedy policies, and the
/// Q-table is the elementwise mean of the per-sample optimal Q-tables.
pub fn mean_policy(
    samples: &[Array3<f64>],
    rewards: &Array2<f64>,
    discount: f64,
    terminal: usize,
) -> Result<(Policy, QTable)> {
    if samples.is_empty() {
        return Err(Error::contract("mean_policy needs at least one sample"));
    }
    let (n, m) = rewards.dim();
    let mut probs = Array2::<f64>::zeros((n, m));
    let mut q_acc = Array2::<f64>::zeros((n, m));
    for (i, tensor) in samples.iter().enumerate() {
        let mdp = TabularMdp::new(tensor.clone(), rewards.clone(), discount, terminal)
            .map_err(|e| Error::invalid(format!("sample {i}: {e}")))?;
        let planned =
            plan(&mdp).map_err(|e| Error::Numerics(format!("planning sample {i}: {e}")))?;
        for (s, &a) in planned.greedy.iter().enumerate() {
            probs[[s, a]] += 1.0;
        }
        q_acc += planned.q.values();
    }
    let count = samples.len() as f64;
    let policy = Policy::new(probs / count)?;
    let q = QTable::new(q_acc / count)?;
    Ok((policy, q))
}

/// One method's scores on one dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodRecord {
    pub accuracy: AccuracyMetrics,
    pub q_star_metric: f64,
}

/// One dataset's results: per-method scores, or a flag describing why the
/// constrained sampler gave up on this dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetOutcome {
    pub dataset: usize,
    /// Sampler failure description; the constrained method has no record
    /// on a flagged dataset, all other methods keep theirs.
    pub flagged: Option<String>,
    pub methods: BTreeMap<Method, MethodRecord>,
}

/// Population mean ± standard deviation over `n` defined values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    /// Aggregates the defined values; `None` when there are none.
    pub fn over(values: &[f64]) -> Option<MeanStd> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(MeanStd { mean, std: var.sqrt(), n: values.len() })
    }
}

/// Aggregated scores of one method over a cell's datasets. Accuracy
/// components inherit `None` when no dataset had a defined value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub det_acc: Option<MeanStd>,
    pub stoch_acc: Option<MeanStd>,
    pub mistake_ball_rate: Option<MeanStd>,
    pub q_star_metric: Option<MeanStd>,
}

/// Results of one `(epsilon, episode count)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub epsilon: f64,
    pub episodes: usize,
    pub summaries: BTreeMap<Method, MethodSummary>,
    pub datasets: Vec<DatasetOutcome>,
}

impl CellReport {
    /// Indices of datasets whose constrained sampler flagged a failure.
    pub fn flagged_datasets(&self) -> Vec<usize> {
        self.datasets
            .iter()
            .filter(|d| d.flagged.is_some())
            .map(|d| d.dataset)
            .collect()
    }

    /// Raw per-dataset metric values for one method, as
    /// `(dataset, q_star_metric)` pairs.
    pub fn q_star_values(&self, method: Method) -> Vec<(usize, f64)> {
        self.datasets
            .iter()
            .filter_map(|d| d.methods.get(&method).map(|r| (d.dataset, r.q_star_metric)))
            .collect()
    }
}

/// Full output of [`run_experiment`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub env_hash: String,
    /// Cells in config order: epsilons outer, episode counts inner.
    pub cells: Vec<CellReport>,
}

impl MetricsReport {
    /// Total flagged datasets across all cells.
    pub fn flagged_total(&self) -> usize {
        self.cells.iter().map(|c| c.flagged_datasets().len()).sum()
    }

    /// Total dataset runs across all cells.
    pub fn dataset_runs(&self) -> usize {
        self.cells.len() * self.config.n_datasets
    }
}

/// Runs the full grid. Datasets are processed in parallel; all streams are
/// derived from `master_seed` and the dataset index, so the report is
/// identical however the work is scheduled. Sampler failures flag their
/// dataset rather than aborting, but the run fails once more than
/// [`FLAGGED_FRACTION_LIMIT`] of all dataset runs have flagged.
pub fn run_experiment(config: &ExperimentConfig) -> Result<MetricsReport> {
    config.validate()?;
    let (env, env_digest) = config.resolve_env()?;
    let config_hash = canonical_hash(config)?;

    let mut cells = Vec::with_capacity(config.epsilons.len() * config.episode_counts.len());
    for &epsilon in &config.epsilons {
        let expert = expert_for(&env, epsilon)?;
        let truth = CellTruth::new(&env, &expert, epsilon)?;
        let expert_record = MethodRecord {
            accuracy: truth.accuracy_metrics(&expert, &expert),
            q_star_metric: truth.q_star_metric(&expert),
        };
        for &episodes in &config.episode_counts {
            let datasets: Vec<DatasetOutcome> = (0..config.n_datasets)
                .into_par_iter()
                .map(|i| run_dataset(&env, &expert, &truth, config, epsilon, episodes, i, &expert_record))
                .collect::<Result<_>>()?;
            let summaries = summarize(&config.methods, &datasets);
            cells.push(CellReport { epsilon, episodes, summaries, datasets });
        }
    }

    let report = MetricsReport { config: config.clone(), config_hash, env_hash: env_digest, cells };
    let flagged = report.flagged_total();
    let total = report.dataset_runs();
    if flagged as f64 > FLAGGED_FRACTION_LIMIT * total as f64 {
        return Err(Error::FlaggedOverflow { flagged, total });
    }
    Ok(report)
}

#[allow(clippy::too_many_arguments)]
fn run_dataset(
    env: &TabularMdp,
    expert: &Policy,
    truth: &CellTruth,
    config: &ExperimentConfig,
    epsilon: f64,
    episodes: usize,
    dataset: usize,
    expert_record: &MethodRecord,
) -> Result<DatasetOutcome> {
    let ds = derive_seed(config.master_seed, dataset as u64);
    let batch = rollout_batch(env, expert, episodes, config.horizon, derive_seed(ds, 0))?;
    let post = DirichletPosterior::from_batch(&batch, config.prior)?;

    let mut methods = BTreeMap::new();
    let mut flagged = None;
    for &method in &config.methods {
        let record = match method {
            Method::Expert => *expert_record,
            Method::Mle => {
                let mdp = env.with_transitions(post.mean())?;
                score(truth, expert, &plan(&mdp)?.greedy_policy())
            }
            Method::Posterior => {
                let mut rng = Stream::seed_from_u64(derive_seed(ds, 1));
                let samples: Vec<Array3<f64>> = (0..config.n_posterior_samples)
                    .map(|_| post.sample_full(&mut rng))
                    .collect::<Result<_>>()?;
                let (pi_hat, _) =
                    mean_policy(&samples, env.rewards(), env.discount(), env.terminal())?;
                score(truth, expert, &pi_hat)
            }
            Method::Constrained => {
                let ctx = build_context(
                    &post,
                    expert,
                    env.rewards(),
                    env.discount(),
                    epsilon,
                    config.anchor,
                    &mut Stream::seed_from_u64(derive_seed(ds, 3)),
                )?;
                let mut rng = Stream::seed_from_u64(derive_seed(ds, 2));
                match sample_constrained(
                    &post,
                    &ctx,
                    config.n_posterior_samples,
                    &config.sampler,
                    &mut rng,
                ) {
                    Ok(set) => {
                        let (pi_hat, _) = mean_policy(
                            &set.samples,
                            env.rewards(),
                            env.discount(),
                            env.terminal(),
                        )?;
                        score(truth, expert, &pi_hat)
                    }
                    Err(
                        e @ (Error::RowDrawsExhausted { .. } | Error::TuningRoundsExhausted { .. }),
                    ) => {
                        flagged = Some(e.to_string());
                        continue;
                    }
                    Err(e) => return Err(e),
                }
            }
        };
        methods.insert(method, record);
    }
    Ok(DatasetOutcome { dataset, flagged, methods })
}

fn score(truth: &CellTruth, expert: &Policy, pi_hat: &Policy) -> MethodRecord {
    MethodRecord {
        accuracy: truth.accuracy_metrics(expert, pi_hat),
        q_star_metric: truth.q_star_metric(pi_hat),
    }
}

fn summarize(
    methods: &[Method],
    datasets: &[DatasetOutcome],
) -> BTreeMap<Method, MethodSummary> {
    let mut out = BTreeMap::new();
    for &method in methods {
        let records: Vec<&MethodRecord> =
            datasets.iter().filter_map(|d| d.methods.get(&method)).collect();
        let component = |f: &dyn Fn(&MethodRecord) -> Option<f64>| {
            let values: Vec<f64> = records.iter().filter_map(|r| f(r)).collect();
            MeanStd::over(&values)
        };
        out.insert(
            method,
            MethodSummary {
                det_acc: component(&|r| r.accuracy.det_acc),
                stoch_acc: component(&|r| r.accuracy.stoch_acc),
                mistake_ball_rate: component(&|r| r.accuracy.mistake_ball_rate),
                q_star_metric: component(&|r| Some(r.q_star_metric)),
            },
        );
    }
    out
}
