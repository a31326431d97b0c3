//! Decision policies.
//!
//! Thompson sampling keeps, per arm, the Gaussian posterior
//! `N(eta_hat_i, v^2 B_i^{-1})` with `B_i = I + sum y y^T` over the arm's pulls
//! and `eta_hat_i = B_i^{-1} sum r y`. Each round every arm draws a sample
//! and the arm with the largest `y_i^T eta_tilde_i` is pulled. In the shared
//! parameter setting one record serves all arms and learns from every pull.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{dot, sample_gaussian_with, DenseMatrix, SpdMatrix};
use crate::model::argmax_lowest;
use crate::rng::RandomStream;

/// Posterior record of one arm (or of the shared parameter).
#[derive(Debug, Clone, PartialEq)]
pub struct ArmPosterior {
    precision: SpdMatrix,
    eta_hat: Vec<f64>,
    pulls: u64,
}

impl ArmPosterior {
    pub fn prior(d_y: usize) -> Self {
        Self { precision: SpdMatrix::identity(d_y), eta_hat: vec![0.0; d_y], pulls: 0 }
    }

    /// `B` (unscaled posterior precision).
    pub fn precision(&self) -> &SpdMatrix {
        &self.precision
    }

    pub fn eta_hat(&self) -> &[f64] {
        &self.eta_hat
    }

    pub fn pulls(&self) -> u64 {
        self.pulls
    }

    /// `B <- B + y y^T`, `eta_hat <- B_new^{-1} (B_old eta_hat + y r)`.
    pub fn update(&mut self, y: &[f64], reward: f64) -> Result<()> {
        if y.len() != self.eta_hat.len() {
            return Err(Error::DimensionMismatch { expected: self.eta_hat.len(), found: y.len() });
        }
        let mut rhs = self.precision.mul_vec(&self.eta_hat)?;
        rhs.iter_mut().zip(y).for_each(|(a, y)| *a += y * reward);
        self.precision.rank_one_update(y)?;
        self.eta_hat = self.precision.solve(&rhs)?;
        self.pulls += 1;
        Ok(())
    }
}

/// Everything Thompson sampling (and greedy) remembers.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorState {
    records: Vec<ArmPosterior>,
    arms: usize,
    d_y: usize,
    dispersion: f64,
    shared: bool,
}

impl PosteriorState {
    /// Arm-specific prior: `B_i = I`, `eta_hat_i = 0` for every arm.
    pub fn new(arms: usize, d_y: usize, dispersion: f64) -> Result<Self> {
        Self::build(arms, d_y, dispersion, false)
    }

    /// A single record shared by all arms.
    pub fn new_shared(arms: usize, d_y: usize, dispersion: f64) -> Result<Self> {
        Self::build(arms, d_y, dispersion, true)
    }

    fn build(arms: usize, d_y: usize, dispersion: f64, shared: bool) -> Result<Self> {
        if !(dispersion > 0.0) || !dispersion.is_finite() {
            return Err(Error::InvalidDispersion(dispersion));
        }
        if arms == 0 || d_y == 0 {
            return Err(Error::InvalidDims("arms and d_y must be positive"));
        }
        let count = if shared { 1 } else { arms };
        Ok(Self { records: vec![ArmPosterior::prior(d_y); count], arms, d_y, dispersion, shared })
    }

    pub fn arms(&self) -> usize {
        self.arms
    }

    pub fn d_y(&self) -> usize {
        self.d_y
    }

    pub fn dispersion(&self) -> f64 {
        self.dispersion
    }

    pub fn is_shared(&self) -> bool {
        self.shared
    }

    /// The record arm `arm` reads from.
    pub fn record(&self, arm: usize) -> &ArmPosterior {
        if self.shared {
            &self.records[0]
        } else {
            &self.records[arm]
        }
    }

    pub fn records(&self) -> &[ArmPosterior] {
        &self.records
    }

    /// Folds the chosen arm's observation and reward into its record; in the
    /// shared setting into the single record. Other records are untouched.
    pub fn update(&mut self, chosen: usize, y_chosen: &[f64], reward: f64) -> Result<()> {
        self.check_arm(chosen)?;
        let idx = if self.shared { 0 } else { chosen };
        self.records[idx].update(y_chosen, reward)
    }

    fn check_arm(&self, arm: usize) -> Result<()> {
        if arm < self.arms {
            Ok(())
        } else {
            Err(Error::InvalidArm { arm, arms: self.arms })
        }
    }

    fn check_observations(&self, y: &[Vec<f64>]) -> Result<()> {
        if y.len() != self.arms {
            return Err(Error::DimensionMismatch { expected: self.arms, found: y.len() });
        }
        if let Some(bad) = y.iter().find(|v| v.len() != self.d_y) {
            return Err(Error::DimensionMismatch { expected: self.d_y, found: bad.len() });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyDecision {
    pub chosen: usize,
    /// Posterior draws, one per arm, when the policy samples.
    pub sampled_eta: Option<Vec<Vec<f64>>>,
    pub scores: Vec<f64>,
}

impl PolicyDecision {
    fn from_scores(scores: Vec<f64>, sampled_eta: Option<Vec<Vec<f64>>>) -> Self {
        let (chosen, _) = argmax_lowest(scores.iter().copied());
        Self { chosen, sampled_eta, scores }
    }
}

/// Thompson sampling decision with caller-supplied standard normals, one
/// vector per arm. All-zero normals reproduce [`greedy_decide`].
pub fn ts_decide_with_normals(state: &PosteriorState, y: &[Vec<f64>], z: &[Vec<f64>]) -> Result<PolicyDecision> {
    state.check_observations(y)?;
    if z.len() != state.arms {
        return Err(Error::DimensionMismatch { expected: state.arms, found: z.len() });
    }
    let mut draws = Vec::with_capacity(state.arms);
    let mut scores = Vec::with_capacity(state.arms);
    for (i, (y_i, z_i)) in y.iter().zip(z).enumerate() {
        let rec = state.record(i);
        let draw = sample_gaussian_with(rec.eta_hat(), rec.precision().cholesky(), state.dispersion, z_i)?;
        scores.push(dot(y_i, &draw));
        draws.push(draw);
    }
    Ok(PolicyDecision::from_scores(scores, Some(draws)))
}

/// Draws `eta_tilde_i ~ N(eta_hat_i, v^2 B_i^{-1})` independently per arm and
/// picks the arm maximizing `y_i^T eta_tilde_i`.
pub fn ts_decide(state: &PosteriorState, y: &[Vec<f64>], rng: &mut RandomStream) -> Result<PolicyDecision> {
    state.check_observations(y)?;
    let z: Vec<Vec<f64>> = (0..state.arms).map(|_| rng.standard_normal_vec(state.d_y)).collect();
    ts_decide_with_normals(state, y, &z)
}

/// Scores `y_i^T eta_hat_i`, no exploration.
pub fn greedy_decide(state: &PosteriorState, y: &[Vec<f64>]) -> Result<PolicyDecision> {
    state.check_observations(y)?;
    let scores = y.iter().enumerate().map(|(i, y_i)| dot(y_i, state.record(i).eta_hat())).collect();
    Ok(PolicyDecision::from_scores(scores, None))
}

/// Scores `y_i^T eta_i` with the given parameters: the benchmark arm when
/// `eta` is the truth, the hindsight regression oracle when it is a fitted
/// estimate.
pub fn oracle_decide(eta: &[Vec<f64>], y: &[Vec<f64>]) -> PolicyDecision {
    let scores = y.iter().zip(eta).map(|(y, e)| dot(y, e)).collect();
    PolicyDecision::from_scores(scores, None)
}

pub fn random_decide(arms: usize, rng: &mut RandomStream) -> PolicyDecision {
    let chosen = rng.index(arms);
    let mut scores = vec![0.0; arms];
    scores[chosen] = 1.0;
    PolicyDecision { chosen, sampled_eta: None, scores }
}

/// One interaction: which arm was pulled, what it showed, what it paid.
#[derive(Debug, Clone, PartialEq)]
pub struct Pull {
    pub arm: usize,
    pub y: Vec<f64>,
    pub reward: f64,
}

/// Batch posterior `B = I + sum y y^T`, `eta_hat = B^{-1} sum r y` over the
/// pulls of `arm`, or over every pull when `arm` is `None` (shared setting).
pub fn closed_form_posterior(history: &[Pull], arm: Option<usize>, d_y: usize) -> Result<(SpdMatrix, Vec<f64>)> {
    let mut b = DenseMatrix::identity(d_y);
    let mut s = vec![0.0; d_y];
    for pull in history.iter().filter(|p| arm.is_none_or(|a| a == p.arm)) {
        if pull.y.len() != d_y {
            return Err(Error::DimensionMismatch { expected: d_y, found: pull.y.len() });
        }
        b.add_outer(&pull.y);
        s.iter_mut().zip(&pull.y).for_each(|(acc, y)| *acc += y * pull.reward);
    }
    let b = SpdMatrix::new(b)?;
    let eta = b.solve(&s)?;
    Ok((b, eta))
}

/// One hindsight sample for the regression oracle: every arm's observation
/// and every arm's (synthesized) reward.
#[derive(Debug, Clone, PartialEq)]
pub struct HindsightSample {
    pub y: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
}

/// Per-arm ridge regression over all samples:
/// `eta_i = (I + sum y_i y_i^T)^{-1} sum r_i y_i`. Never updated afterwards.
pub fn regression_oracle_fit(data: &[HindsightSample]) -> Result<Vec<Vec<f64>>> {
    let first = data.first().ok_or(Error::EmptyDataset)?;
    let arms = first.y.len();
    let d_y = first.y.first().map_or(0, Vec::len);
    if arms == 0 || d_y == 0 {
        return Err(Error::InvalidDims("oracle samples need arms and observations"));
    }
    let mut gram = vec![DenseMatrix::identity(d_y); arms];
    let mut moment = vec![vec![0.0; d_y]; arms];
    for sample in data {
        if sample.y.len() != arms || sample.rewards.len() != arms {
            return Err(Error::DimensionMismatch { expected: arms, found: sample.y.len().min(sample.rewards.len()) });
        }
        for i in 0..arms {
            let y = &sample.y[i];
            if y.len() != d_y {
                return Err(Error::DimensionMismatch { expected: d_y, found: y.len() });
            }
            gram[i].add_outer(y);
            moment[i].iter_mut().zip(y).for_each(|(m, y)| *m += y * sample.rewards[i]);
        }
    }
    gram.into_iter()
        .zip(&moment)
        .map(|(g, m)| SpdMatrix::from_nearly_symmetric(g)?.solve(m))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    Thompson,
    Greedy,
    Oracle,
    Random,
    RegressionOracle,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] = [
        PolicyKind::Thompson,
        PolicyKind::Greedy,
        PolicyKind::Oracle,
        PolicyKind::Random,
        PolicyKind::RegressionOracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Thompson => "ts",
            PolicyKind::Greedy => "greedy",
            PolicyKind::Oracle => "oracle",
            PolicyKind::Random => "random",
            PolicyKind::RegressionOracle => "regression_oracle",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

/// A policy instance bound to one run.
#[derive(Debug, Clone)]
pub enum Policy {
    Thompson(PosteriorState),
    Greedy(PosteriorState),
    /// Knows the true transformed parameters.
    Oracle(Vec<Vec<f64>>),
    /// Fixed hindsight estimates.
    RegressionOracle(Vec<Vec<f64>>),
    Random(usize),
}

impl Policy {
    pub fn kind(&self) -> PolicyKind {
        match self {
            Policy::Thompson(_) => PolicyKind::Thompson,
            Policy::Greedy(_) => PolicyKind::Greedy,
            Policy::Oracle(_) => PolicyKind::Oracle,
            Policy::RegressionOracle(_) => PolicyKind::RegressionOracle,
            Policy::Random(_) => PolicyKind::Random,
        }
    }

    pub fn decide(&self, y: &[Vec<f64>], rng: &mut RandomStream) -> Result<PolicyDecision> {
        match self {
            Policy::Thompson(s) => ts_decide(s, y, rng),
            Policy::Greedy(s) => greedy_decide(s, y),
            Policy::Oracle(eta) | Policy::RegressionOracle(eta) => {
                if y.len() != eta.len() {
                    return Err(Error::DimensionMismatch { expected: eta.len(), found: y.len() });
                }
                Ok(oracle_decide(eta, y))
            }
            Policy::Random(n) => Ok(random_decide(*n, rng)),
        }
    }

    pub fn update(&mut self, chosen: usize, y_chosen: &[f64], reward: f64) -> Result<()> {
        match self {
            Policy::Thompson(s) | Policy::Greedy(s) => s.update(chosen, y_chosen, reward),
            _ => Ok(()),
        }
    }

    pub fn posterior(&self) -> Option<&PosteriorState> {
        match self {
            Policy::Thompson(s) | Policy::Greedy(s) => Some(s),
            _ => None,
        }
    }
}
