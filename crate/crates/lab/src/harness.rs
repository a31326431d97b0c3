//! Experiment orchestration: scenario construction, seeded replications run
//! on a worker pool, and aggregation into mean and worst-case curves.

use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use pobandit_core::datasets::{fit_reward_params, make_sensing, ClassificationBandit, LabeledDataset, RewardSynthesis};
use pobandit_core::linalg::{dot, min_eigenvalue};
use pobandit_core::metrics::aggregate;
use pobandit_core::model::{estimate_margin, random_scenario};
use pobandit_core::policy::{regression_oracle_fit, HindsightSample};
use pobandit_core::simulation::{build_policy, hindsight_samples, run};
use pobandit_core::{AggregateCurves, Environment, MarginEstimate, PolicyKind, Purpose, RunTrace, StreamKey};

use crate::config::{ConfigError, ScenarioSpec};
use crate::csvio::LoadError;

/// Tag of the scenario key used when every run shares one environment.
const SHARED_SCENARIO_TAG: u64 = u64::MAX;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error(transparent)]
    Model(#[from] pobandit_core::Error),
    #[error("run {run}: {source}")]
    Run { run: usize, source: pobandit_core::Error },
}

/// The environment a run interacts with.
#[derive(Debug, Clone)]
pub enum Source {
    Synthetic(Environment),
    Classification(ClassificationBandit),
}

impl Source {
    pub fn is_classification(&self) -> bool {
        matches!(self, Source::Classification(_))
    }
}

/// Everything about an environment that is fixed before the interaction.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub source: Source,
    /// Posterior dispersion `v` handed to Thompson sampling and greedy.
    pub dispersion: f64,
    /// Hindsight least-squares parameters, when a regression oracle is needed.
    pub regression_eta: Option<Vec<Vec<f64>>>,
    pub margin: MarginEstimate,
    /// `lambda_min(Sigma_xi)`.
    pub noise_floor: f64,
}

/// One replication: a trace per policy, in the order of the spec's policy list.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub index: usize,
    /// Raw run key; `StreamKey::new(seed).child(index)`.
    pub seed: u64,
    pub dispersion: f64,
    pub margin: MarginEstimate,
    pub noise_floor: f64,
    pub traces: Vec<RunTrace>,
}

/// Named per-run quantities reported on the checkpoint grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Series {
    Regret,
    RegretNorm,
    ErrNorm(usize),
    Pulls(usize),
    EigRatio(usize),
    Cdr,
}

impl fmt::Display for Series {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Series::Regret => f.write_str("regret"),
            Series::RegretNorm => f.write_str("regret_norm"),
            Series::ErrNorm(i) => write!(f, "err_norm_arm_{i}"),
            Series::Pulls(i) => write!(f, "n_arm_{i}"),
            Series::EigRatio(i) => write!(f, "eig_ratio_arm_{i}"),
            Series::Cdr => f.write_str("cdr"),
        }
    }
}

impl Series {
    pub fn all(arms: usize, classification: bool) -> Vec<Series> {
        let mut out = vec![Series::Regret, Series::RegretNorm];
        out.extend((0..arms).map(Series::ErrNorm));
        out.extend((0..arms).map(Series::Pulls));
        out.extend((0..arms).map(Series::EigRatio));
        if classification {
            out.push(Series::Cdr);
        }
        out
    }

    pub fn value(self, trace: &RunTrace, t: u64) -> Option<f64> {
        match self {
            Series::Regret => trace.checkpoint(t).and_then(|_| trace.regret(t)),
            Series::RegretNorm => trace.checkpoint(t).and_then(|_| trace.normalized_regret(t)),
            Series::ErrNorm(i) => trace.normalized_estimation_error(i, t),
            Series::Pulls(i) => trace.checkpoint(t)?.arms.get(i).map(|a| a.pulls as f64),
            Series::EigRatio(i) => trace.eigen_growth_ratio(i, t),
            Series::Cdr => trace.checkpoint(t).and_then(|_| trace.correct_decision_rate(t)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SeriesCurves {
    pub policy: PolicyKind,
    pub series: Series,
    pub curves: AggregateCurves,
}

/// Fraction of checked pairs that satisfied a property.
#[derive(Debug, Clone, PartialEq)]
pub struct PassFraction {
    pub policy: PolicyKind,
    pub name: &'static str,
    pub passed: usize,
    pub checked: usize,
}

impl PassFraction {
    pub fn fraction(&self) -> Option<f64> {
        (self.checked > 0).then(|| self.passed as f64 / self.checked as f64)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub spec: ScenarioSpec,
    pub policies: Vec<PolicyKind>,
    pub grid: Vec<u64>,
    pub runs: Vec<RunOutcome>,
    pub curves: Vec<SeriesCurves>,
    /// Margin estimate of the shared scenario, or of run 0.
    pub margin: MarginEstimate,
    pub checks: Vec<PassFraction>,
    pub elapsed: Duration,
}

impl ExperimentReport {
    pub fn curve(&self, policy: PolicyKind, series: Series) -> Option<&AggregateCurves> {
        self.curves.iter().find(|c| c.policy == policy && c.series == series).map(|c| &c.curves)
    }

    pub fn traces(&self, policy: PolicyKind) -> Option<Vec<&RunTrace>> {
        let p = self.policies.iter().position(|&k| k == policy)?;
        Some(self.runs.iter().map(|r| &r.traces[p]).collect())
    }

    pub fn check(&self, policy: PolicyKind, name: &str) -> Option<&PassFraction> {
        self.checks.iter().find(|c| c.policy == policy && c.name == name)
    }
}

/// Optimality-probability floor below which arms are excluded from per-arm checks.
pub const P_HAT_FLOOR: f64 = 0.05;
/// Minimum pulls for the eigenvalue-growth check.
pub const EIGEN_MIN_PULLS: u64 = 200;

/// A spec with its dataset loaded and, when shared, its scenario built.
pub struct Experiment {
    spec: ScenarioSpec,
    policies: Vec<PolicyKind>,
    grid: Vec<u64>,
    base: StreamKey,
    data: Option<(LabeledDataset, RewardSynthesis)>,
    shared: Option<Scenario>,
}

impl Experiment {
    pub fn prepare(spec: &ScenarioSpec) -> Result<Self, HarnessError> {
        spec.validate()?;
        let data = match &spec.dataset {
            Some(path) => {
                let loaded = crate::recipes::load_dataset(path, &spec.label)?;
                let synthesis = fit_reward_params(&loaded.data, spec.reward_model()?, spec.noise_reward)?;
                Some((loaded.data, synthesis))
            }
            None => None,
        };
        let mut exp = Experiment {
            spec: spec.clone(),
            policies: spec.policy_kinds()?,
            grid: spec.checkpoint_grid()?,
            base: StreamKey::new(spec.seed),
            data,
            shared: None,
        };
        if !spec.scenario_per_run {
            exp.shared = Some(exp.build_scenario(exp.base.child(SHARED_SCENARIO_TAG))?);
        }
        Ok(exp)
    }

    pub fn spec(&self) -> &ScenarioSpec {
        &self.spec
    }

    pub fn grid(&self) -> &[u64] {
        &self.grid
    }

    pub fn run_key(&self, index: usize) -> StreamKey {
        self.base.child(index as u64)
    }

    /// The scenario run `index` interacts with.
    pub fn scenario(&self, index: usize) -> Result<Scenario, HarnessError> {
        match &self.shared {
            Some(s) => Ok(s.clone()),
            None => self.build_scenario(self.run_key(index)),
        }
    }

    fn needs_regression_oracle(&self) -> bool {
        self.policies.contains(&PolicyKind::RegressionOracle)
    }

    fn build_scenario(&self, key: StreamKey) -> Result<Scenario, HarnessError> {
        let spec = &self.spec;
        match &self.data {
            None => {
                let env = random_scenario(&spec.scenario_params()?, &mut key.stream(Purpose::Scenario))?;
                let dispersion = match spec.dispersion {
                    Some(v) => v,
                    None => env.dispersion_floor()?,
                };
                let regression_eta = if self.needs_regression_oracle() {
                    Some(regression_oracle_fit(&hindsight_samples(&env, spec.margin_samples, key))?)
                } else {
                    None
                };
                let margin = estimate_margin(&env, spec.margin_samples, &mut key.stream(Purpose::Margin))?;
                let noise_floor = min_eigenvalue(env.model().sigma_xi())?;
                Ok(Scenario { source: Source::Synthetic(env), dispersion, regression_eta, margin, noise_floor })
            }
            Some((data, synthesis)) => {
                let sensing = make_sensing(data.d_x(), spec.d_y, &mut key.stream(Purpose::Sensing))?;
                let mut bandit =
                    ClassificationBandit::new(data.clone(), synthesis.clone(), sensing, spec.sensing_noise)?;
                let samples = bandit.hindsight_samples(key);
                let eta = regression_oracle_fit(&samples)?;
                bandit = bandit.with_reference_eta(eta.clone())?;
                let dispersion = match spec.dispersion {
                    Some(v) => v,
                    None => residual_scale(&samples, &eta),
                };
                let margin = estimate_margin(&bandit, spec.margin_samples, &mut key.stream(Purpose::Margin))?;
                Ok(Scenario {
                    source: Source::Classification(bandit),
                    dispersion,
                    regression_eta: Some(eta),
                    margin,
                    noise_floor: spec.sensing_noise * spec.sensing_noise,
                })
            }
        }
    }

    /// Executes replication `index` for every policy, all under the same run key.
    pub fn run(&self, index: usize) -> Result<RunOutcome, HarnessError> {
        let key = self.run_key(index);
        let scenario = self.scenario(index)?;
        let traces = self
            .policies
            .iter()
            .map(|&kind| run_policy(&scenario, kind, self.spec.horizon, &self.grid, key))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|source| HarnessError::Run { run: index, source })?;
        Ok(RunOutcome {
            index,
            seed: key.raw(),
            dispersion: scenario.dispersion,
            margin: scenario.margin,
            noise_floor: scenario.noise_floor,
            traces,
        })
    }
}

/// `sqrt(max_i mean (r_i - y_i^T eta_i)^2)`: the residual scale of the
/// hindsight fit, used as the default dispersion on real data.
fn residual_scale(samples: &[HindsightSample], eta: &[Vec<f64>]) -> f64 {
    let n = samples.len().max(1) as f64;
    let worst = (0..eta.len())
        .map(|i| samples.iter().map(|s| (s.rewards[i] - dot(&s.y[i], &eta[i])).powi(2)).sum::<f64>() / n)
        .fold(0.0, f64::max);
    worst.sqrt().max(1e-6)
}

pub fn run_policy(
    scenario: &Scenario,
    kind: PolicyKind,
    horizon: u64,
    grid: &[u64],
    key: StreamKey,
) -> pobandit_core::Result<RunTrace> {
    let eta = scenario.regression_eta.as_deref();
    match &scenario.source {
        Source::Synthetic(env) => {
            let mut policy = build_policy(kind, env, scenario.dispersion, eta)?;
            run(env, &mut policy, horizon, grid, key)
        }
        Source::Classification(bandit) => {
            let mut policy = build_policy(kind, bandit, scenario.dispersion, eta)?;
            run(bandit, &mut policy, horizon, grid, key)
        }
    }
}

/// Runs replication `run_index` of `spec` on its own.
pub fn run_single(spec: &ScenarioSpec, run_index: usize) -> Result<RunOutcome, HarnessError> {
    Experiment::prepare(spec)?.run(run_index)
}

/// Runs all `spec.runs` replications on up to `spec.workers` threads. Results
/// are ordered by run index before aggregation, so the report does not
/// depend on scheduling.
pub fn run_experiment(spec: &ScenarioSpec) -> Result<ExperimentReport, HarnessError> {
    let started = Instant::now();
    let exp = Experiment::prepare(spec)?;
    let runs = run_indices(&exp, 0..spec.runs, spec.worker_count())?;
    Ok(build_report(&exp, runs, started.elapsed()))
}

/// Executes the given replications on a pool of `workers` threads.
pub fn run_indices(
    exp: &Experiment,
    indices: std::ops::Range<usize>,
    workers: usize,
) -> Result<Vec<RunOutcome>, HarnessError> {
    let todo: Vec<usize> = indices.collect();
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Result<RunOutcome, HarnessError>>> = Mutex::new(Vec::with_capacity(todo.len()));
    let workers = workers.clamp(1, todo.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let slot = next.fetch_add(1, Ordering::Relaxed);
                let Some(&index) = todo.get(slot) else { break };
                let outcome = exp.run(index);
                let failed = outcome.is_err();
                results.lock().expect("worker panicked").push(outcome);
                if failed {
                    next.store(todo.len(), Ordering::Relaxed);
                }
            });
        }
    });
    let mut runs = results.into_inner().expect("worker panicked").into_iter().collect::<Result<Vec<_>, _>>()?;
    runs.sort_by_key(|r| r.index);
    Ok(runs)
}

pub fn build_report(exp: &Experiment, runs: Vec<RunOutcome>, elapsed: Duration) -> ExperimentReport {
    let spec = exp.spec.clone();
    let policies = exp.policies.clone();
    let arms = runs.first().map_or(spec.arms, |r| r.margin.p_hat.len());
    let classification = spec.dataset.is_some();
    let horizon = spec.horizon;
    let mut curves = Vec::new();
    let mut checks = Vec::new();
    for (p, &policy) in policies.iter().enumerate() {
        for series in Series::all(arms, classification) {
            let c = aggregate(&runs, &exp.grid, |r, t| series.value(&r.traces[p], t));
            if !c.grid.is_empty() {
                curves.push(SeriesCurves { policy, series, curves: c });
            }
        }
        checks.push(arm_count_fraction(&runs, p, policy, horizon));
        if let Some(c) = eigen_fraction(&runs, p, policy, horizon) {
            checks.push(c);
        }
    }
    let margin = runs.first().map(|r| r.margin.clone()).unwrap_or(MarginEstimate {
        p_hat: Vec::new(),
        kappa_hat: 0.0,
        c_hat: 0.0,
        num_samples: 0,
    });
    ExperimentReport { spec, policies, grid: exp.grid.clone(), runs, curves, margin, checks, elapsed }
}

/// `n_i(T) >= p_i T / 4` over (run, arm) pairs with `p_i > 0.05`.
fn arm_count_fraction(runs: &[RunOutcome], p: usize, policy: PolicyKind, t: u64) -> PassFraction {
    let mut out = PassFraction { policy, name: "arm_count", passed: 0, checked: 0 };
    for r in runs {
        if let Some(flags) = r.traces[p].arm_count_check(&r.margin.p_hat, t, P_HAT_FLOOR) {
            for ok in flags.into_iter().flatten() {
                out.checked += 1;
                out.passed += usize::from(ok);
            }
        }
    }
    out
}

/// `lambda_min(B_i(T)) / n_i(T) >= lambda_min(Sigma_xi) / 2` over pairs with
/// at least [`EIGEN_MIN_PULLS`] pulls. `None` for policies without a posterior.
fn eigen_fraction(runs: &[RunOutcome], p: usize, policy: PolicyKind, t: u64) -> Option<PassFraction> {
    if !matches!(policy, PolicyKind::Thompson | PolicyKind::Greedy) {
        return None;
    }
    let mut out = PassFraction { policy, name: "eigen_growth", passed: 0, checked: 0 };
    for r in runs {
        let cp = r.traces[p].checkpoint(t)?;
        for a in &cp.arms {
            if a.pulls < EIGEN_MIN_PULLS {
                continue;
            }
            let ratio = a.min_eigenvalue? / a.pulls as f64;
            out.checked += 1;
            out.passed += usize::from(ratio >= 0.5 * r.noise_floor);
        }
    }
    Some(out)
}
