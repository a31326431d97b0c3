//! Classification data as a bandit.
//!
//! Each class is an arm. A context is a (standardized) feature row drawn
//! uniformly with replacement; every arm observes it through a 0/1 sensing
//! matrix plus its own sensing noise. Rewards come from per-class parameters
//! fitted on the data, either logistic (log-odds of the class equal
//! `x^T mu_i`) or a linear probability model whose realized reward is the
//! class indicator.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, DenseMatrix, SpdMatrix};
use crate::model::{optimal_arm, Round, RoundSource};
use crate::policy::{regression_oracle_fit, HindsightSample};
use crate::rng::{Purpose, RandomStream, StreamKey};

/// Columns with variance below this are zeroed instead of scaled.
pub const VARIANCE_FLOOR: f64 = 1e-12;
/// L2 penalty of the logistic and least-squares fits (per sample).
pub const RIDGE: f64 = 1e-4;
pub const LOGISTIC_GRADIENT_TOL: f64 = 1e-6;
pub const LOGISTIC_MAX_ITERATIONS: usize = 500;

/// Per-feature affine map to zero mean and unit variance.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub mean: Vec<f64>,
    /// Population standard deviation; zero marks a constant column.
    pub scale: Vec<f64>,
}

impl Standardization {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows.first().ok_or(Error::EmptyDataset)?;
        let d = first.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            if r.len() != d {
                return Err(Error::DimensionMismatch { expected: d, found: r.len() });
            }
            mean.iter_mut().zip(r).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in rows {
            var.iter_mut().zip(r).zip(&mean).for_each(|((s, v), m)| *s += (v - m) * (v - m));
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let v = s / n;
                if v > VARIANCE_FLOOR {
                    libm::sqrt(v)
                } else {
                    0.0
                }
            })
            .collect();
        Ok(Self { mean, scale })
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| if *s > 0.0 { (v - m) / s } else { 0.0 })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
    num_classes: usize,
    standardization: Standardization,
}

impl LabeledDataset {
    /// Standardizes `raw` features column-wise and keeps the parameters.
    pub fn new(raw: Vec<Vec<f64>>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if raw.len() != labels.len() {
            return Err(Error::DimensionMismatch { expected: raw.len(), found: labels.len() });
        }
        if num_classes < 2 {
            return Err(Error::InvalidArgument("at least two classes are required"));
        }
        if labels.iter().any(|&l| l >= num_classes) {
            return Err(Error::InvalidArgument("label out of range"));
        }
        if raw.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset features"));
        }
        let standardization = Standardization::fit(&raw)?;
        let features = raw.iter().map(|r| standardization.apply(r)).collect();
        Ok(Self { features, labels, num_classes, standardization })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn d_x(&self) -> usize {
        self.features[0].len()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn standardization(&self) -> &Standardization {
        &self.standardization
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.num_classes];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RewardModel {
    /// `log(p_i / (1 - p_i)) = x^T mu_i = E[r_i]`, one-vs-rest.
    Logistic,
    /// `r_i = x^T mu_i + eps = 1(l = i)`.
    SimpleLinear,
}

impl RewardModel {
    pub fn name(self) -> &'static str {
        match self {
            RewardModel::Logistic => "logistic",
            RewardModel::SimpleLinear => "simple_linear",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "logistic" => Some(RewardModel::Logistic),
            "simple_linear" => Some(RewardModel::SimpleLinear),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardSynthesis {
    pub model: RewardModel,
    pub mu: Vec<Vec<f64>>,
    /// Standard deviation of the Gaussian reward noise (logistic model).
    pub noise_scale: f64,
}

impl RewardSynthesis {
    /// Reward of arm `arm` for context `x` with true label `label`, given a
    /// standard normal draw `z`.
    pub fn reward(&self, arm: usize, x: &[f64], label: usize, z: f64) -> f64 {
        match self.model {
            RewardModel::Logistic => dot(x, &self.mu[arm]) + self.noise_scale * z,
            RewardModel::SimpleLinear => f64::from(u8::from(label == arm)),
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

/// Mean log-likelihood minus `RIDGE / 2 |mu|^2`.
fn logistic_objective(x: &[Vec<f64>], z: &[f64], mu: &[f64]) -> f64 {
    let n = x.len() as f64;
    let ll: f64 = x
        .iter()
        .zip(z)
        .map(|(row, &zi)| {
            let s = dot(row, mu);
            // z s - log(1 + e^s)
            let log1pexp = if s > 0.0 { s + libm::log1p(libm::exp(-s)) } else { libm::log1p(libm::exp(s)) };
            zi * s - log1pexp
        })
        .sum();
    ll / n - 0.5 * RIDGE * dot(mu, mu)
}

/// One-vs-rest ridge logistic regression by damped Newton ascent on the
/// penalized mean log-likelihood. Stops when the gradient norm reaches
/// [`LOGISTIC_GRADIENT_TOL`].
pub fn fit_logistic(x: &[Vec<f64>], targets: &[f64]) -> Result<Vec<f64>> {
    let first = x.first().ok_or(Error::EmptyDataset)?;
    let d = first.len();
    let n = x.len() as f64;
    let mut mu = vec![0.0; d];
    let mut grad_norm = f64::INFINITY;
    for _ in 0..LOGISTIC_MAX_ITERATIONS {
        let mut grad: Vec<f64> = mu.iter().map(|m| -RIDGE * m).collect();
        let mut hess = DenseMatrix::identity(d).scaled(RIDGE);
        for (row, &zi) in x.iter().zip(targets) {
            let p = sigmoid(dot(row, &mu));
            let w = p * (1.0 - p) / n;
            grad.iter_mut().zip(row).for_each(|(g, v)| *g += (zi - p) * v / n);
            for i in 0..d {
                for j in 0..=i {
                    hess[(i, j)] += w * row[i] * row[j];
                }
            }
        }
        grad_norm = norm(&grad);
        if grad_norm <= LOGISTIC_GRADIENT_TOL {
            return Ok(mu);
        }
        for i in 0..d {
            for j in 0..i {
                hess[(j, i)] = hess[(i, j)];
            }
        }
        let step = SpdMatrix::new(hess)?.solve(&grad)?;
        let base = logistic_objective(x, targets, &mu);
        let mut alpha = 1.0;
        loop {
            let trial: Vec<f64> = mu.iter().zip(&step).map(|(m, s)| m + alpha * s).collect();
            if logistic_objective(x, targets, &trial) >= base || alpha < 1e-8 {
                mu = trial;
                break;
            }
            alpha *= 0.5;
        }
    }
    Err(Error::NonConvergence { gradient_norm: grad_norm })
}

/// `mu = (X^T X + n RIDGE I)^{-1} X^T z`
pub fn fit_least_squares(x: &[Vec<f64>], targets: &[f64]) -> Result<Vec<f64>> {
    let first = x.first().ok_or(Error::EmptyDataset)?;
    let d = first.len();
    let n = x.len() as f64;
    let mut gram = DenseMatrix::identity(d).scaled(n * RIDGE);
    let mut moment = vec![0.0; d];
    for (row, &zi) in x.iter().zip(targets) {
        gram.add_outer(row);
        moment.iter_mut().zip(row).for_each(|(m, v)| *m += v * zi);
    }
    SpdMatrix::from_nearly_symmetric(gram)?.solve(&moment)
}

/// Fits one parameter vector per class.
pub fn fit_reward_params(data: &LabeledDataset, model: RewardModel, noise_scale: f64) -> Result<RewardSynthesis> {
    let mu = (0..data.num_classes())
        .map(|class| {
            let targets: Vec<f64> = data.labels().iter().map(|&l| f64::from(u8::from(l == class))).collect();
            match model {
                RewardModel::Logistic => fit_logistic(data.features(), &targets),
                RewardModel::SimpleLinear => fit_least_squares(data.features(), &targets),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RewardSynthesis { model, mu, noise_scale })
}

/// A `d_y x d_x` 0/1 matrix: a random partition of the input coordinates into
/// `d_y` non-empty groups, row `r` summing group `r`. Exactly one 1 per column.
pub fn make_sensing(d_x: usize, d_y: usize, rng: &mut RandomStream) -> Result<DenseMatrix> {
    if d_y == 0 || d_y > d_x {
        return Err(Error::InvalidDims("sensing needs 1 <= d_y <= d_x"));
    }
    let mut cols: Vec<usize> = (0..d_x).collect();
    rng.shuffle(&mut cols);
    let mut a = DenseMatrix::zeros(d_y, d_x);
    for (k, &c) in cols.iter().enumerate() {
        let row = if k < d_y { k } else { rng.index(d_y) };
        a[(row, c)] = 1.0;
    }
    Ok(a)
}

/// The classification protocol as a [`RoundSource`].
#[derive(Debug, Clone)]
pub struct ClassificationBandit {
    data: LabeledDataset,
    synthesis: RewardSynthesis,
    sensing: DenseMatrix,
    sensing_noise: f64,
    /// Regret is measured against these (the fitted regression oracle).
    reference_eta: Vec<Vec<f64>>,
}

impl ClassificationBandit {
    /// `sensing_noise` is the standard deviation of each (isotropic) sensing
    /// noise coordinate. The reference parameters start at zero; see
    /// [`ClassificationBandit::fit_oracle`].
    pub fn new(data: LabeledDataset, synthesis: RewardSynthesis, sensing: DenseMatrix, sensing_noise: f64) -> Result<Self> {
        if sensing.cols() != data.d_x() {
            return Err(Error::DimensionMismatch { expected: data.d_x(), found: sensing.cols() });
        }
        if synthesis.mu.len() != data.num_classes() {
            return Err(Error::DimensionMismatch { expected: data.num_classes(), found: synthesis.mu.len() });
        }
        if !(sensing_noise >= 0.0) {
            return Err(Error::InvalidArgument("sensing noise must be >= 0"));
        }
        let reference_eta = vec![vec![0.0; sensing.rows()]; data.num_classes()];
        Ok(Self { data, synthesis, sensing, sensing_noise, reference_eta })
    }

    pub fn data(&self) -> &LabeledDataset {
        &self.data
    }

    pub fn sensing(&self) -> &DenseMatrix {
        &self.sensing
    }

    pub fn synthesis(&self) -> &RewardSynthesis {
        &self.synthesis
    }

    /// One pass over every dataset row with fresh sensing and reward noise,
    /// every arm's reward realized.
    pub fn hindsight_samples(&self, key: StreamKey) -> Vec<HindsightSample> {
        (0..self.data.len())
            .map(|row| {
                let mut rng = key.stream_at(Purpose::Oracle, row as u64);
                let round = self.round_for_row(row, 0, &mut rng);
                let rewards = (0..self.arms()).map(|i| self.realize_reward(i, &round, &mut rng)).collect();
                HindsightSample { y: round.y, rewards }
            })
            .collect()
    }

    /// Fits the hindsight regression oracle and makes it the regret reference.
    pub fn fit_oracle(&mut self, key: StreamKey) -> Result<Vec<Vec<f64>>> {
        let eta = regression_oracle_fit(&self.hindsight_samples(key))?;
        self.reference_eta = eta.clone();
        Ok(eta)
    }

    pub fn with_reference_eta(mut self, eta: Vec<Vec<f64>>) -> Result<Self> {
        if eta.len() != self.arms() || eta.iter().any(|e| e.len() != self.sensing.rows()) {
            return Err(Error::DimensionMismatch { expected: self.arms(), found: eta.len() });
        }
        self.reference_eta = eta;
        Ok(self)
    }

    fn round_for_row(&self, row: usize, t: u64, rng: &mut RandomStream) -> Round {
        let x = self.data.features()[row].clone();
        let ax = self.sensing.mul_vec(&x).expect("dimension checked");
        let y: Vec<Vec<f64>> = (0..self.arms())
            .map(|_| ax.iter().map(|v| v + self.sensing_noise * rng.standard_normal()).collect())
            .collect();
        let (optimal_arm, optimal_value) = optimal_arm(&y, &self.reference_eta);
        Round {
            t,
            x: vec![x; self.arms()],
            y,
            optimal_arm,
            optimal_value,
            label: Some(self.data.labels()[row]),
        }
    }
}

impl RoundSource for ClassificationBandit {
    fn arms(&self) -> usize {
        self.data.num_classes()
    }

    fn d_y(&self) -> usize {
        self.sensing.rows()
    }

    fn reference_eta(&self) -> &[Vec<f64>] {
        &self.reference_eta
    }

    fn sample_round(&self, t: u64, rng: &mut RandomStream) -> Round {
        let row = rng.index(self.data.len());
        self.round_for_row(row, t, rng)
    }

    fn realize_reward(&self, arm: usize, round: &Round, rng: &mut RandomStream) -> f64 {
        let z = rng.standard_normal();
        let label = round.label.expect("classification rounds carry labels");
        self.synthesis.reward(arm, &round.x[arm], label, z)
    }
}

/// Iterator over rounds of a [`ClassificationBandit`], addressed like the
/// interaction loop: round `t` uses the `(Round, t)` stream of `key`.
pub struct RoundStream<'a> {
    source: &'a ClassificationBandit,
    key: StreamKey,
    t: u64,
}

pub fn stream_rounds(source: &ClassificationBandit, key: StreamKey) -> RoundStream<'_> {
    RoundStream { source, key, t: 0 }
}

impl Iterator for RoundStream<'_> {
    type Item = Round;

    fn next(&mut self) -> Option<Round> {
        self.t += 1;
        Some(self.source.sample_round(self.t, &mut self.key.stream_at(Purpose::Round, self.t)))
    }
}

/// Samples a labeled dataset from a known logistic model: features standard
/// normal, label `i` with probability proportional to `exp(x^T mu_i)`.
pub fn synthetic_logistic_dataset(rows: usize, mu: &[Vec<f64>], rng: &mut RandomStream) -> (Vec<Vec<f64>>, Vec<usize>) {
    let d = mu[0].len();
    let mut features = Vec::with_capacity(rows);
    let mut labels = Vec::with_capacity(rows);
    for _ in 0..rows {
        let x = rng.standard_normal_vec(d);
        let logits: Vec<f64> = mu.iter().map(|m| dot(&x, m)).collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = logits.iter().map(|l| libm::exp(l - max)).collect();
        let total: f64 = weights.iter().sum();
        let mut u = rng.uniform() * total;
        let mut label = weights.len() - 1;
        for (i, w) in weights.iter().enumerate() {
            if u < *w {
                label = i;
                break;
            }
            u -= w;
        }
        features.push(x);
        labels.push(label);
    }
    (features, labels)
}
