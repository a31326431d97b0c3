//! The generative environment.
//!
//! Contexts `x_i(t) ~ N(0, Sigma_x)` stay hidden; the policy sees
//! `y_i(t) = A x_i(t) + xi_i(t)` with `xi_i(t) ~ N(0, Sigma_xi)`, and the pulled
//! arm pays `x_a(t)^T mu_a + eps`. The best linear unbiased predictor of
//! `x^T mu` from `y` is `y^T D^T mu`, so the learnable parameters are
//! `eta_i = D^T mu_i` and the benchmark arm is `argmax_i y_i^T eta_i`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, DenseMatrix, SpdMatrix};
use crate::rng::RandomStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArmMode {
    /// Independent contexts, one reward parameter per arm.
    ArmSpecific,
    /// Independent contexts, one reward parameter shared by all arms.
    SharedParam,
    /// A single context per round shared by all arms, arm-specific parameters.
    SharedContext,
}

impl ArmMode {
    pub fn name(self) -> &'static str {
        match self {
            ArmMode::ArmSpecific => "arm_specific",
            ArmMode::SharedParam => "shared_param",
            ArmMode::SharedContext => "shared_context",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "arm_specific" => Some(ArmMode::ArmSpecific),
            "shared_param" => Some(ArmMode::SharedParam),
            "shared_context" => Some(ArmMode::SharedContext),
            _ => None,
        }
    }
}

/// `D = (A^T Sigma_xi^{-1} A + Sigma_x^{-1})^{-1} A^T Sigma_xi^{-1}`, the
/// information form of the best linear unbiased prediction matrix.
pub fn build_blup(a: &DenseMatrix, sigma_x: &SpdMatrix, sigma_xi: &SpdMatrix) -> Result<DenseMatrix> {
    check_blup_dims(a, sigma_x, sigma_xi)?;
    let (d_y, d_x) = (a.rows(), a.cols());
    // Sigma_xi^{-1} A, column by column
    let mut xi_inv_a = DenseMatrix::zeros(d_y, d_x);
    for j in 0..d_x {
        let col: Vec<f64> = (0..d_y).map(|i| a[(i, j)]).collect();
        let solved = sigma_xi.solve(&col)?;
        for i in 0..d_y {
            xi_inv_a[(i, j)] = solved[i];
        }
    }
    let info = a.transpose().matmul(&xi_inv_a)?.add(&sigma_x.inverse())?;
    let info = SpdMatrix::from_nearly_symmetric(info)?;
    // D = info^{-1} (Sigma_xi^{-1} A)^T
    let rhs = xi_inv_a.transpose();
    let mut d = DenseMatrix::zeros(d_x, d_y);
    for j in 0..d_y {
        let col: Vec<f64> = (0..d_x).map(|i| rhs[(i, j)]).collect();
        let solved = info.solve(&col)?;
        for i in 0..d_x {
            d[(i, j)] = solved[i];
        }
    }
    Ok(d)
}

/// `D = Sigma_x A^T (A Sigma_x A^T + Sigma_xi)^{-1}`, the gain form. Equal to
/// [`build_blup`] by the matrix inversion lemma; kept as an independent route.
pub fn build_blup_gain_form(
    a: &DenseMatrix,
    sigma_x: &SpdMatrix,
    sigma_xi: &SpdMatrix,
) -> Result<DenseMatrix> {
    check_blup_dims(a, sigma_x, sigma_xi)?;
    let sx_at = sigma_x.matrix().matmul(&a.transpose())?;
    let cov_y = SpdMatrix::from_nearly_symmetric(a.matmul(&sx_at)?.add(sigma_xi.matrix())?)?;
    // D^T = cov_y^{-1} (Sigma_x A^T)^T
    let (d_x, d_y) = (a.cols(), a.rows());
    let mut d = DenseMatrix::zeros(d_x, d_y);
    for i in 0..d_x {
        let solved = cov_y.solve(sx_at.row(i))?;
        for j in 0..d_y {
            d[(i, j)] = solved[j];
        }
    }
    Ok(d)
}

fn check_blup_dims(a: &DenseMatrix, sigma_x: &SpdMatrix, sigma_xi: &SpdMatrix) -> Result<()> {
    if sigma_x.dim() != a.cols() {
        return Err(Error::DimensionMismatch { expected: a.cols(), found: sigma_x.dim() });
    }
    if sigma_xi.dim() != a.rows() {
        return Err(Error::DimensionMismatch { expected: a.rows(), found: sigma_xi.dim() });
    }
    Ok(())
}

/// The hidden observation structure `(A, Sigma_x, Sigma_xi)` and its derived
/// prediction matrix `D`.
#[derive(Debug, Clone)]
pub struct ObservationModel {
    sensing: DenseMatrix,
    sigma_x: SpdMatrix,
    sigma_xi: SpdMatrix,
    blup: DenseMatrix,
}

impl ObservationModel {
    pub fn new(sensing: DenseMatrix, sigma_x: SpdMatrix, sigma_xi: SpdMatrix) -> Result<Self> {
        let blup = build_blup(&sensing, &sigma_x, &sigma_xi)?;
        Ok(Self { sensing, sigma_x, sigma_xi, blup })
    }

    pub fn d_x(&self) -> usize {
        self.sensing.cols()
    }

    pub fn d_y(&self) -> usize {
        self.sensing.rows()
    }

    pub fn sensing(&self) -> &DenseMatrix {
        &self.sensing
    }

    pub fn sigma_x(&self) -> &SpdMatrix {
        &self.sigma_x
    }

    pub fn sigma_xi(&self) -> &SpdMatrix {
        &self.sigma_xi
    }

    pub fn blup(&self) -> &DenseMatrix {
        &self.blup
    }

    /// `Cov(y) = A Sigma_x A^T + Sigma_xi`
    pub fn observation_covariance(&self) -> Result<DenseMatrix> {
        let mut c = self
            .sensing
            .matmul(self.sigma_x.matrix())?
            .matmul(&self.sensing.transpose())?
            .add(self.sigma_xi.matrix())?;
        c.symmetrize();
        Ok(c)
    }

    /// `Cov(x | y) = (A^T Sigma_xi^{-1} A + Sigma_x^{-1})^{-1} = (I - D A) Sigma_x`
    pub fn conditional_covariance(&self) -> Result<DenseMatrix> {
        let da = self.blup.matmul(&self.sensing)?;
        let i_minus = DenseMatrix::identity(self.d_x()).add(&da.scaled(-1.0))?;
        let mut c = i_minus.matmul(self.sigma_x.matrix())?;
        c.symmetrize();
        Ok(c)
    }

    /// `D^T mu`
    pub fn transform(&self, mu: &[f64]) -> Result<Vec<f64>> {
        self.blup.tr_mul_vec(mu)
    }

    /// `A x + xi` for given draws.
    pub fn observe(&self, x: &[f64], xi: &[f64]) -> Result<Vec<f64>> {
        let mut y = self.sensing.mul_vec(x)?;
        if xi.len() != y.len() {
            return Err(Error::DimensionMismatch { expected: y.len(), found: xi.len() });
        }
        y.iter_mut().zip(xi).for_each(|(a, b)| *a += b);
        Ok(y)
    }

    pub fn sample_context(&self, rng: &mut RandomStream) -> Vec<f64> {
        let z = rng.standard_normal_vec(self.d_x());
        self.sigma_x.cholesky().mul_lower(&z).expect("dimension fixed")
    }

    pub fn sample_sensing_noise(&self, rng: &mut RandomStream) -> Vec<f64> {
        let z = rng.standard_normal_vec(self.d_y());
        self.sigma_xi.cholesky().mul_lower(&z).expect("dimension fixed")
    }
}

/// Reward parameters and their transformed counterparts.
#[derive(Debug, Clone)]
pub struct ArmSet {
    mode: ArmMode,
    mu: Vec<Vec<f64>>,
    eta: Vec<Vec<f64>>,
    noise_r1: f64,
}

impl ArmSet {
    pub fn new(mode: ArmMode, mu: Vec<Vec<f64>>, model: &ObservationModel, noise_r1: f64) -> Result<Self> {
        if mu.is_empty() {
            return Err(Error::InvalidArgument("at least one arm is required"));
        }
        if !(noise_r1 >= 0.0) || !noise_r1.is_finite() {
            return Err(Error::InvalidArgument("reward noise scale must be finite and >= 0"));
        }
        if mode == ArmMode::SharedParam && mu.iter().any(|m| m != &mu[0]) {
            return Err(Error::InvalidArgument("shared_param mode needs identical parameters"));
        }
        let eta = mu.iter().map(|m| model.transform(m)).collect::<Result<Vec<_>>>()?;
        if eta.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("transformed parameters"));
        }
        Ok(Self { mode, mu, eta, noise_r1 })
    }

    pub fn mode(&self) -> ArmMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn mu(&self) -> &[Vec<f64>] {
        &self.mu
    }

    pub fn eta(&self) -> &[Vec<f64>] {
        &self.eta
    }

    pub fn noise_r1(&self) -> f64 {
        self.noise_r1
    }
}

/// One time step. `x` is the latent context and is kept only for
/// diagnostics; policies receive [`Round::observations`].
#[derive(Debug, Clone, PartialEq)]
pub struct Round {
    pub t: u64,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    pub optimal_arm: usize,
    pub optimal_value: f64,
    /// True class label in the classification protocol.
    pub label: Option<usize>,
}

impl Round {
    /// The policy view: observations only.
    pub fn observations(&self) -> &[Vec<f64>] {
        &self.y
    }
}

/// `argmax_i y_i^T eta_i` with the lowest index winning ties.
pub fn optimal_arm(y: &[Vec<f64>], eta: &[Vec<f64>]) -> (usize, f64) {
    argmax_lowest(y.iter().zip(eta).map(|(y, e)| dot(y, e)))
}

pub(crate) fn argmax_lowest(scores: impl IntoIterator<Item = f64>) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, s) in scores.into_iter().enumerate() {
        if s > best.1 {
            best = (i, s);
        }
    }
    best
}

/// `y_{a*}^T eta_{a*} - y_a^T eta_a`, never negative.
pub fn gap(round: &Round, eta: &[Vec<f64>], chosen: usize) -> f64 {
    let value = dot(&round.y[chosen], &eta[chosen]);
    let (_, best) = optimal_arm(&round.y, eta);
    (best - value).max(0.0)
}

/// Anything the interaction loop can draw rounds and rewards from.
pub trait RoundSource {
    fn arms(&self) -> usize;
    fn d_y(&self) -> usize;
    /// Parameters regret is measured against.
    fn reference_eta(&self) -> &[Vec<f64>];
    fn sample_round(&self, t: u64, rng: &mut RandomStream) -> Round;
    fn realize_reward(&self, arm: usize, round: &Round, rng: &mut RandomStream) -> f64;
    fn shared_parameter(&self) -> bool {
        false
    }
}

/// A complete synthetic environment.
#[derive(Debug, Clone)]
pub struct Environment {
    model: ObservationModel,
    arms: ArmSet,
}

impl Environment {
    pub fn new(model: ObservationModel, arms: ArmSet) -> Result<Self> {
        if arms.mu().iter().any(|m| m.len() != model.d_x()) {
            return Err(Error::DimensionMismatch {
                expected: model.d_x(),
                found: arms.mu().iter().map(Vec::len).find(|&l| l != model.d_x()).unwrap_or(0),
            });
        }
        Ok(Self { model, arms })
    }

    pub fn model(&self) -> &ObservationModel {
        &self.model
    }

    pub fn arm_set(&self) -> &ArmSet {
        &self.arms
    }

    pub fn num_arms(&self) -> usize {
        self.arms.len()
    }

    pub fn eta(&self) -> &[Vec<f64>] {
        self.arms.eta()
    }

    /// Builds a round from explicit context and sensing-noise draws.
    pub fn round_from_draws(&self, t: u64, x: Vec<Vec<f64>>, xi: &[Vec<f64>]) -> Result<Round> {
        if x.len() != self.num_arms() || xi.len() != self.num_arms() {
            return Err(Error::DimensionMismatch { expected: self.num_arms(), found: x.len().min(xi.len()) });
        }
        let y = x
            .iter()
            .zip(xi)
            .map(|(x, xi)| self.model.observe(x, xi))
            .collect::<Result<Vec<_>>>()?;
        let (optimal_arm, optimal_value) = optimal_arm(&y, self.eta());
        Ok(Round { t, x, y, optimal_arm, optimal_value, label: None })
    }

    /// Reward with explicit noise draw `eps`.
    pub fn reward_from_draw(&self, arm: usize, round: &Round, eps: f64) -> f64 {
        dot(&round.x[arm], &self.arms.mu()[arm]) + eps
    }

    /// `R = sqrt(R1^2 + R2^2)` with `R2^2 = max_i mu_i^T Cov(x | y) mu_i`, the
    /// exact conditional variance of the prediction error under Gaussian
    /// contexts. Thompson sampling needs a dispersion `v >= R`.
    pub fn dispersion_floor(&self) -> Result<f64> {
        let cond = self.model.conditional_covariance()?;
        let mut r2 = 0.0f64;
        for mu in self.arms.mu() {
            r2 = r2.max(dot(mu, &cond.mul_vec(mu)?));
        }
        Ok(libm::sqrt(self.arms.noise_r1() * self.arms.noise_r1() + r2.max(0.0)))
    }
}

impl RoundSource for Environment {
    fn arms(&self) -> usize {
        self.num_arms()
    }

    fn d_y(&self) -> usize {
        self.model.d_y()
    }

    fn reference_eta(&self) -> &[Vec<f64>] {
        self.eta()
    }

    fn shared_parameter(&self) -> bool {
        self.arms.mode() == ArmMode::SharedParam
    }

    fn sample_round(&self, t: u64, rng: &mut RandomStream) -> Round {
        let n = self.num_arms();
        let x: Vec<Vec<f64>> = match self.arms.mode() {
            ArmMode::SharedContext => {
                let shared = self.model.sample_context(rng);
                vec![shared; n]
            }
            _ => (0..n).map(|_| self.model.sample_context(rng)).collect(),
        };
        let xi: Vec<Vec<f64>> = (0..n).map(|_| self.model.sample_sensing_noise(rng)).collect();
        self.round_from_draws(t, x, &xi).expect("dimensions fixed at construction")
    }

    fn realize_reward(&self, arm: usize, round: &Round, rng: &mut RandomStream) -> f64 {
        let eps = if self.arms.noise_r1() > 0.0 { self.arms.noise_r1() * rng.standard_normal() } else { 0.0 };
        self.reward_from_draw(arm, round, eps)
    }
}

/// Monte-Carlo estimate of optimality probabilities and margin constants.
/// Diagnostic only; no policy consumes it.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginEstimate {
    pub p_hat: Vec<f64>,
    pub kappa_hat: f64,
    pub c_hat: f64,
    pub num_samples: usize,
}

pub const MIN_MARGIN_SAMPLES: usize = 1000;

/// Samples `num_samples` rounds. `p_hat[i]` is the fraction with optimal arm
/// `i`. For each arm the normalized gap `(y_i^T eta_i - max_{j!=i} y_j^T eta_j) / |y|`
/// (with `|y|` the norm of all observations stacked) is collected on rounds
/// where `i` is optimal; `kappa_hat` is the smallest per-arm median of those
/// gaps, and `c_hat` the largest per-arm ratio `P(gap <= u | i optimal) / u`
/// at `u` equal to the pooled 5% quantile of the gaps.
pub fn estimate_margin(env: &impl RoundSource, num_samples: usize, rng: &mut RandomStream) -> Result<MarginEstimate> {
    if num_samples < MIN_MARGIN_SAMPLES {
        return Err(Error::InvalidArgument("margin estimation needs at least 1000 samples"));
    }
    let n = env.arms();
    let eta = env.reference_eta();
    let mut counts = vec![0usize; n];
    let mut gaps: Vec<Vec<f64>> = vec![Vec::new(); n];
    for t in 0..num_samples {
        let round = env.sample_round(t as u64, rng);
        let a = round.optimal_arm;
        counts[a] += 1;
        if n > 1 {
            let total = libm::sqrt(round.y.iter().map(|y| dot(y, y)).sum::<f64>());
            if total > 0.0 {
                let runner_up = (0..n)
                    .filter(|&j| j != a)
                    .map(|j| dot(&round.y[j], &eta[j]))
                    .fold(f64::NEG_INFINITY, f64::max);
                gaps[a].push((round.optimal_value - runner_up) / total);
            }
        }
    }
    let p_hat: Vec<f64> = counts.iter().map(|&c| c as f64 / num_samples as f64).collect();
    if n == 1 {
        return Ok(MarginEstimate { p_hat, kappa_hat: 0.0, c_hat: 0.0, num_samples });
    }
    for g in gaps.iter_mut() {
        g.sort_by(f64::total_cmp);
    }
    let kappa_hat = gaps
        .iter()
        .filter(|g| !g.is_empty())
        .map(|g| median_sorted(g))
        .fold(f64::INFINITY, f64::min);
    let kappa_hat = if kappa_hat.is_finite() { kappa_hat.max(0.0) } else { 0.0 };

    let mut pooled: Vec<f64> = gaps.iter().flatten().copied().collect();
    pooled.sort_by(f64::total_cmp);
    let u = quantile_sorted(&pooled, 0.05);
    let c_hat = if u > 0.0 {
        gaps.iter()
            .filter(|g| !g.is_empty())
            .map(|g| g.partition_point(|&v| v <= u) as f64 / g.len() as f64 / u)
            .fold(0.0, f64::max)
    } else {
        0.0
    };
    Ok(MarginEstimate { p_hat, kappa_hat, c_hat, num_samples })
}

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn quantile_sorted(v: &[f64], q: f64) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let idx = ((v.len() - 1) as f64 * q) as usize;
    v[idx]
}

/// Knobs for [`random_scenario`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioParams {
    pub d_x: usize,
    pub d_y: usize,
    pub arms: usize,
    pub mode: ArmMode,
    /// Multiplies the random context covariance.
    pub sigma_x_scale: f64,
    /// Multiplies the random sensing-noise covariance.
    pub sigma_xi_scale: f64,
    /// Reward noise standard deviation `R1`.
    pub noise_r1: f64,
    /// Norm of every reward parameter.
    pub mu_radius: f64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            d_x: 10,
            d_y: 10,
            arms: 5,
            mode: ArmMode::ArmSpecific,
            sigma_x_scale: 1.0,
            sigma_xi_scale: 1.0,
            noise_r1: 0.1,
            mu_radius: 1.0,
        }
    }
}

/// `scale * (G G^T / d + 0.1 I)` with standard Gaussian `G`.
pub fn random_covariance(dim: usize, scale: f64, rng: &mut RandomStream) -> Result<SpdMatrix> {
    let g = DenseMatrix::from_fn(dim, dim, |_, _| rng.standard_normal());
    let mut m = g.matmul(&g.transpose())?.scaled(1.0 / dim as f64);
    for i in 0..dim {
        m[(i, i)] += 0.1;
    }
    SpdMatrix::from_nearly_symmetric(m.scaled(scale))
}

pub fn random_unit_sphere(dim: usize, radius: f64, rng: &mut RandomStream) -> Vec<f64> {
    loop {
        let v = rng.standard_normal_vec(dim);
        let n = norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|c| c * radius / n).collect();
        }
    }
}

/// Draws a random environment: Gaussian `A / sqrt(d_x)`, covariances from
/// [`random_covariance`], reward parameters uniform on a sphere.
pub fn random_scenario(params: &ScenarioParams, rng: &mut RandomStream) -> Result<Environment> {
    let ScenarioParams { d_x, d_y, arms, mode, .. } = *params;
    if d_x == 0 || d_y == 0 || arms == 0 {
        return Err(Error::InvalidDims("d_x, d_y and arms must be positive"));
    }
    if !(params.sigma_x_scale > 0.0) || !(params.sigma_xi_scale > 0.0) {
        return Err(Error::InvalidArgument("covariance scales must be positive"));
    }
    let inv_sqrt = 1.0 / libm::sqrt(d_x as f64);
    let a = DenseMatrix::from_fn(d_y, d_x, |_, _| rng.standard_normal() * inv_sqrt);
    let sigma_x = random_covariance(d_x, params.sigma_x_scale, rng)?;
    let sigma_xi = random_covariance(d_y, params.sigma_xi_scale, rng)?;
    let model = ObservationModel::new(a, sigma_x, sigma_xi)?;
    let mu: Vec<Vec<f64>> = match mode {
        ArmMode::SharedParam => {
            let shared = random_unit_sphere(d_x, params.mu_radius, rng);
            vec![shared; arms]
        }
        _ => (0..arms).map(|_| random_unit_sphere(d_x, params.mu_radius, rng)).collect(),
    };
    let arm_set = ArmSet::new(mode, mu, &model, params.noise_r1)?;
    Environment::new(model, arm_set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{sub, DenseMatrix};
    use crate::rng::{Purpose, StreamKey};
    use approx::assert_relative_eq;

    fn scalar_model(a: f64, sx: f64, sxi: f64) -> ObservationModel {
        ObservationModel::new(
            DenseMatrix::new(1, 1, vec![a]).unwrap(),
            SpdMatrix::new(DenseMatrix::new(1, 1, vec![sx]).unwrap()).unwrap(),
            SpdMatrix::new(DenseMatrix::new(1, 1, vec![sxi]).unwrap()).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn blup_scalar() {
        let m = scalar_model(1.0, 1.0, 1.0);
        assert_relative_eq!(m.blup()[(0, 0)], 0.5, max_relative = 1e-15);
    }

    #[test]
    fn blup_vanishing_noise_is_identity() {
        let d = 4;
        let eps = 1e-6;
        let sigma_x = SpdMatrix::identity(d);
        let sigma_xi = SpdMatrix::new(DenseMatrix::identity(d).scaled(eps)).unwrap();
        let blup = build_blup(&DenseMatrix::identity(d), &sigma_x, &sigma_xi).unwrap();
        assert!(blup.max_abs_diff(&DenseMatrix::identity(d)) < 2e-6);
    }

    #[test]
    fn blup_dimension_mismatch() {
        let a = DenseMatrix::zeros(2, 3);
        let err = build_blup(&a, &SpdMatrix::identity(2), &SpdMatrix::identity(2)).unwrap_err();
        assert_eq!(err, Error::DimensionMismatch { expected: 3, found: 2 });
    }

    #[test]
    fn blup_two_routes_agree() {
        let mut rng = RandomStream::from_seed(5);
        for _ in 0..50 {
            let d_x = 1 + rng.index(6);
            let d_y = 1 + rng.index(6);
            let a = DenseMatrix::from_fn(d_y, d_x, |_, _| rng.standard_normal());
            let sx = random_covariance(d_x, 1.0, &mut rng).unwrap();
            let sxi = random_covariance(d_y, 1.0, &mut rng).unwrap();
            let d1 = build_blup(&a, &sx, &sxi).unwrap();
            let d2 = build_blup_gain_form(&a, &sx, &sxi).unwrap();
            assert!(d1.relative_diff(&d2) < 1e-8);
        }
    }

    #[test]
    fn conditional_covariance_matches_information_form() {
        let mut rng = RandomStream::from_seed(8);
        let env = random_scenario(&ScenarioParams { d_x: 4, d_y: 3, ..Default::default() }, &mut rng).unwrap();
        let m = env.model();
        let cond = SpdMatrix::from_nearly_symmetric(m.conditional_covariance().unwrap()).unwrap();
        // inverse of A^T Sigma_xi^{-1} A + Sigma_x^{-1}
        let xi_inv = m.sigma_xi().inverse();
        let info = m
            .sensing()
            .transpose()
            .matmul(&xi_inv)
            .unwrap()
            .matmul(m.sensing())
            .unwrap()
            .add(&m.sigma_x().inverse())
            .unwrap();
        let prod = info.matmul(cond.matrix()).unwrap();
        assert!(prod.max_abs_diff(&DenseMatrix::identity(4)) < 1e-9);
    }

    fn two_arm_env() -> Environment {
        let model = ObservationModel::new(
            DenseMatrix::identity(2),
            SpdMatrix::identity(2),
            SpdMatrix::new(DenseMatrix::identity(2).scaled(1e-12)).unwrap(),
        )
        .unwrap();
        let arms = ArmSet::new(ArmMode::ArmSpecific, vec![vec![1.0, 0.0], vec![0.0, 1.0]], &model, 0.0).unwrap();
        Environment::new(model, arms).unwrap()
    }

    #[test]
    fn dominance_round() {
        let env = two_arm_env();
        let eta = env.eta();
        assert!((eta[0][0] - 1.0).abs() < 1e-9 && eta[0][1].abs() < 1e-9);
        let round = env
            .round_from_draws(0, vec![vec![3.0, 0.0], vec![0.0, 1.0]], &[vec![0.0, 0.0], vec![0.0, 0.0]])
            .unwrap();
        assert_eq!(round.y, vec![vec![3.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(round.optimal_arm, 0);
        assert!((round.optimal_value - 3.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_covariances_give_zero_observations() {
        let model = ObservationModel::new(
            DenseMatrix::identity(3),
            SpdMatrix::new(DenseMatrix::identity(3).scaled(1e-12)).unwrap(),
            SpdMatrix::new(DenseMatrix::identity(3).scaled(1e-12)).unwrap(),
        )
        .unwrap();
        let arms = ArmSet::new(ArmMode::ArmSpecific, vec![vec![1.0, 0.0, 0.0]; 3], &model, 0.0).unwrap();
        let env = Environment::new(model, arms).unwrap();
        let round = env.sample_round(0, &mut RandomStream::from_seed(1));
        assert!(round.y.iter().flatten().all(|v| v.abs() < 1e-4));
    }

    #[test]
    fn rewards() {
        let model = scalar_model(1.0, 1.0, 1.0);
        let arms = ArmSet::new(ArmMode::ArmSpecific, vec![vec![0.0]], &model, 0.0).unwrap();
        let env = Environment::new(model, arms).unwrap();
        let round = env.sample_round(0, &mut RandomStream::from_seed(2));
        assert_eq!(env.realize_reward(0, &round, &mut RandomStream::from_seed(3)), 0.0);

        let model = ObservationModel::new(DenseMatrix::identity(2), SpdMatrix::identity(2), SpdMatrix::identity(2)).unwrap();
        let arms = ArmSet::new(ArmMode::ArmSpecific, vec![vec![3.0, 4.0]], &model, 0.0).unwrap();
        let env = Environment::new(model, arms).unwrap();
        let round = env.round_from_draws(0, vec![vec![1.0, 2.0]], &[vec![0.0, 0.0]]).unwrap();
        assert_eq!(env.realize_reward(0, &round, &mut RandomStream::from_seed(3)), 11.0);
    }

    #[test]
    fn reward_noise_mean() {
        let model = ObservationModel::new(DenseMatrix::identity(2), SpdMatrix::identity(2), SpdMatrix::identity(2)).unwrap();
        let r1 = 0.7;
        let arms = ArmSet::new(ArmMode::ArmSpecific, vec![vec![3.0, 4.0]], &model, r1).unwrap();
        let env = Environment::new(model, arms).unwrap();
        let round = env.round_from_draws(0, vec![vec![1.0, 2.0]], &[vec![0.0, 0.0]]).unwrap();
        let mut rng = RandomStream::from_seed(4);
        let n = 100_000;
        let mean = (0..n).map(|_| env.realize_reward(0, &round, &mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 11.0).abs() <= 4.0 * r1 / libm::sqrt(n as f64));
    }

    #[test]
    fn gap_values() {
        let model = ObservationModel::new(DenseMatrix::identity(1), SpdMatrix::identity(1), SpdMatrix::identity(1)).unwrap();
        let arms = ArmSet::new(ArmMode::ArmSpecific, vec![vec![1.0], vec![1.0]], &model, 0.0).unwrap();
        let env = Environment::new(model, arms).unwrap();
        // eta = D^T mu = 0.5; y = (10, 6) gives scores (5, 3)
        let round = env.round_from_draws(0, vec![vec![10.0], vec![6.0]], &[vec![0.0], vec![0.0]]).unwrap();
        assert_eq!(gap(&round, env.eta(), round.optimal_arm), 0.0);
        assert_relative_eq!(gap(&round, env.eta(), 1), 2.0, max_relative = 1e-12);
    }

    #[test]
    fn gap_matches_exhaustive_scan() {
        let mut rng = RandomStream::from_seed(77);
        let env = random_scenario(&ScenarioParams { arms: 6, ..Default::default() }, &mut rng).unwrap();
        for t in 0..200 {
            let round = env.sample_round(t, &mut rng);
            let values: Vec<f64> = (0..6).map(|i| dot(&round.y[i], &env.eta()[i])).collect();
            let mut best = values[0];
            for v in &values {
                if *v > best {
                    best = *v;
                }
            }
            for c in 0..6 {
                assert_eq!(gap(&round, env.eta(), c), best - values[c]);
            }
            assert_eq!(values[round.optimal_arm], best);
        }
    }

    #[test]
    fn optimal_arm_scale_invariant() {
        let mut rng = RandomStream::from_seed(3);
        let env = random_scenario(&ScenarioParams::default(), &mut rng).unwrap();
        for t in 0..100 {
            let round = env.sample_round(t, &mut rng);
            for s in [1e-3, 0.5, 7.0, 1e4] {
                let scaled: Vec<Vec<f64>> = round.y.iter().map(|y| y.iter().map(|v| v * s).collect()).collect();
                assert_eq!(optimal_arm(&scaled, env.eta()).0, round.optimal_arm);
            }
        }
    }

    #[test]
    fn shared_context_rounds_share_x() {
        let mut rng = RandomStream::from_seed(4);
        let params = ScenarioParams { mode: ArmMode::SharedContext, ..Default::default() };
        let env = random_scenario(&params, &mut rng).unwrap();
        let round = env.sample_round(0, &mut rng);
        assert!(round.x.iter().all(|x| x == &round.x[0]));
        assert_ne!(round.y[0], round.y[1]);
    }

    #[test]
    fn shared_param_scenario() {
        let mut rng = RandomStream::from_seed(4);
        let params = ScenarioParams { mode: ArmMode::SharedParam, ..Default::default() };
        let env = random_scenario(&params, &mut rng).unwrap();
        assert!(env.arm_set().mu().iter().all(|m| m == &env.arm_set().mu()[0]));
        let bad = ArmSet::new(ArmMode::SharedParam, vec![vec![1.0; 10], vec![0.0; 10]], env.model(), 0.1);
        assert!(bad.is_err());
    }

    #[test]
    fn observation_covariance_monte_carlo() {
        let mut rng = RandomStream::from_seed(10);
        let params = ScenarioParams { d_x: 4, d_y: 3, arms: 2, ..Default::default() };
        let env = random_scenario(&params, &mut rng).unwrap();
        let expected = env.model().observation_covariance().unwrap();
        let n = 100_000;
        let mut acc = [DenseMatrix::zeros(3, 3), DenseMatrix::zeros(3, 3)];
        for t in 0..n {
            let round = env.sample_round(t, &mut rng);
            for (a, y) in acc.iter_mut().zip(&round.y) {
                a.add_outer(y);
            }
        }
        for a in &acc {
            let emp = a.scaled(1.0 / n as f64);
            for i in 0..3 {
                for j in 0..3 {
                    let tol = 0.05 * libm::sqrt(expected[(i, i)] * expected[(j, j)]);
                    assert!((emp[(i, j)] - expected[(i, j)]).abs() < tol, "({i},{j})");
                }
            }
        }
    }

    #[test]
    fn prediction_is_unbiased() {
        let mut rng = RandomStream::from_seed(12);
        let env = random_scenario(&ScenarioParams { d_x: 6, d_y: 4, arms: 3, ..Default::default() }, &mut rng).unwrap();
        let n = 100_000;
        let mut errs = Vec::with_capacity(n);
        for t in 0..n {
            let round = env.sample_round(t as u64, &mut rng);
            let i = t % 3;
            errs.push(dot(&round.x[i], &env.arm_set().mu()[i]) - dot(&round.y[i], &env.eta()[i]));
        }
        let mean = errs.iter().sum::<f64>() / n as f64;
        let var = errs.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() <= 4.0 * libm::sqrt(var / n as f64));
    }

    #[test]
    fn dispersion_floor_covers_reward_noise() {
        let mut rng = RandomStream::from_seed(1);
        let env = random_scenario(&ScenarioParams { noise_r1: 0.3, ..Default::default() }, &mut rng).unwrap();
        let r = env.dispersion_floor().unwrap();
        assert!(r >= 0.3);
        // R2^2 is the Monte-Carlo variance of x^T mu - y^T eta for the worst arm
        let n = 50_000;
        let mut worst = 0.0f64;
        for i in 0..env.num_arms() {
            let mut s2 = 0.0;
            for t in 0..n {
                let round = env.sample_round(t, &mut rng);
                let e = dot(&round.x[i], &env.arm_set().mu()[i]) - dot(&round.y[i], &env.eta()[i]);
                s2 += e * e;
            }
            worst = worst.max(s2 / n as f64);
        }
        assert_relative_eq!(r * r, 0.09 + worst, max_relative = 0.03);
    }

    #[test]
    fn margin_single_arm() {
        let model = scalar_model(1.0, 1.0, 1.0);
        let arms = ArmSet::new(ArmMode::ArmSpecific, vec![vec![1.0]], &model, 0.0).unwrap();
        let env = Environment::new(model, arms).unwrap();
        let m = estimate_margin(&env, 1000, &mut RandomStream::from_seed(0)).unwrap();
        assert_eq!(m.p_hat, vec![1.0]);
    }

    #[test]
    fn margin_requires_samples() {
        let env = two_arm_env();
        assert!(estimate_margin(&env, 999, &mut RandomStream::from_seed(0)).is_err());
    }

    #[test]
    fn margin_symmetric_two_arm() {
        let env = two_arm_env();
        let m = 20_000;
        let est = estimate_margin(&env, m, &mut RandomStream::from_seed(6)).unwrap();
        let tol = 3.0 / libm::sqrt(m as f64);
        assert!((est.p_hat[0] - 0.5).abs() < tol);
        assert!((est.p_hat[0] + est.p_hat[1] - 1.0).abs() < 1e-12);
        assert!(est.kappa_hat > 0.0);
        assert!(est.c_hat > 0.0);
    }

    #[test]
    fn random_scenario_deterministic_and_valid() {
        let params = ScenarioParams::default();
        let key = StreamKey::new(99);
        let a = random_scenario(&params, &mut key.stream(Purpose::Scenario)).unwrap();
        let b = random_scenario(&params, &mut key.stream(Purpose::Scenario)).unwrap();
        assert_eq!(a.model().sensing(), b.model().sensing());
        assert_eq!(a.eta(), b.eta());
        for (mu, eta) in a.arm_set().mu().iter().zip(a.eta()) {
            assert_relative_eq!(norm(mu), 1.0, max_relative = 1e-12);
            let again = a.model().blup().tr_mul_vec(mu).unwrap();
            assert!(norm(&sub(&again, eta)) < 1e-10);
        }
    }

    #[test]
    fn random_scenarios_always_factor() {
        let mut rng = RandomStream::from_seed(1234);
        for k in 0..100 {
            let params = ScenarioParams { d_x: 1 + k % 12, d_y: 1 + (k * 7) % 12, arms: 3, ..Default::default() };
            let env = random_scenario(&params, &mut rng).unwrap();
            assert!(crate::linalg::Cholesky::factor(env.model().sigma_x().matrix()).is_ok());
            assert!(crate::linalg::Cholesky::factor(env.model().sigma_xi().matrix()).is_ok());
        }
    }
}
