//! The verification suite: property checks on the estimators and shape checks
//! on simulated curves, each reported as a pass/fail entry with the measured
//! statistic.

use std::fmt;
use std::time::{Duration, Instant};

use pobandit_core::linalg::{dot, DenseMatrix};
use pobandit_core::model::{
    build_blup, build_blup_gain_form, random_covariance, random_scenario, random_unit_sphere, ObservationModel,
    RoundSource, ScenarioParams,
};
use pobandit_core::policy::{closed_form_posterior, Pull};
use pobandit_core::{PolicyKind, PosteriorState, RandomStream, StreamKey};

use crate::config::ScenarioSpec;
use crate::emit::render_csv;
use crate::harness::{run_experiment, ExperimentReport, Series, P_HAT_FLOOR};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    /// Sizes as stated for acceptance.
    Full,
    /// Smaller horizons and replication counts for a fast smoke run.
    Quick,
}

impl Scale {
    fn pick<T>(self, full: T, quick: T) -> T {
        match self {
            Scale::Full => full,
            Scale::Quick => quick,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {:>2} {}: {} ({:.1}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.elapsed.as_secs_f64()
        )
    }
}

fn outcome(id: u8, name: &'static str, started: Instant, result: Result<(bool, String), String>) -> CheckOutcome {
    let (passed, detail) = result.unwrap_or_else(|e| (false, format!("error: {e}")));
    CheckOutcome { id, name, passed, detail, elapsed: started.elapsed() }
}

const SEED: u64 = 2024;

/// Recursive posterior against the batch closed form on random pull sequences.
pub fn posterior_equivalence() -> CheckOutcome {
    let started = Instant::now();
    let (arms, d_y, steps) = (3, 5, 1000);
    let result = (|| -> pobandit_core::Result<(bool, String)> {
        let mut worst: f64 = 0.0;
        for seq in 0..20u64 {
            let mut rng = StreamKey::new(SEED).child(seq).stream(pobandit_core::Purpose::Misc);
            let theta: Vec<Vec<f64>> = (0..arms).map(|_| rng.standard_normal_vec(d_y)).collect();
            let mut state = PosteriorState::new(arms, d_y, 1.0)?;
            let mut history = Vec::with_capacity(steps);
            for _ in 0..steps {
                let arm = rng.index(arms);
                let y = rng.standard_normal_vec(d_y);
                let reward = dot(&y, &theta[arm]) + 0.1 * rng.standard_normal();
                state.update(arm, &y, reward)?;
                history.push(Pull { arm, y, reward });
            }
            for arm in 0..arms {
                let (b, eta) = closed_form_posterior(&history, Some(arm), d_y)?;
                let rec = state.record(arm);
                let scale = eta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let eta_dev = rec.eta_hat().iter().zip(&eta).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / scale;
                worst = worst.max(rec.precision().matrix().relative_diff(b.matrix())).max(eta_dev);
            }
        }
        Ok((worst <= 1e-8, format!("max relative deviation {worst:.3e} (limit 1e-8)")))
    })();
    outcome(1, "posterior recursion matches closed form", started, result.map_err(|e| e.to_string()))
}

/// Both closed forms of the prediction matrix on random models, and a
/// Monte-Carlo check that `D^T mu` beats perturbed linear predictors.
pub fn blup_correctness(scale: Scale) -> CheckOutcome {
    let started = Instant::now();
    let samples = scale.pick(100_000, 20_000);
    let result = (|| -> pobandit_core::Result<(bool, String)> {
        let mut rng = StreamKey::new(SEED).child(2).stream(pobandit_core::Purpose::Misc);
        let mut agree = 0;
        let mut worst_rel: f64 = 0.0;
        for _ in 0..200 {
            let d_x = 1 + rng.index(12);
            let d_y = 1 + rng.index(12);
            let a = DenseMatrix::from_fn(d_y, d_x, |_, _| rng.standard_normal());
            let sx = random_covariance(d_x, 0.2 + 2.0 * rng.uniform(), &mut rng)?;
            let sxi = random_covariance(d_y, 0.2 + 2.0 * rng.uniform(), &mut rng)?;
            let info = build_blup(&a, &sx, &sxi)?;
            let gain = build_blup_gain_form(&a, &sx, &sxi)?;
            let rel = info.max_abs_diff(&gain) / gain.max_abs().max(f64::MIN_POSITIVE);
            worst_rel = worst_rel.max(rel);
            agree += usize::from(rel <= 1e-8);
        }

        let (eps, directions) = (0.05, 8);
        let mut mc_pass = 0;
        let mut worst_z = f64::INFINITY;
        for _ in 0..10 {
            let (d_x, d_y) = (2 + rng.index(9), 2 + rng.index(9));
            let a = DenseMatrix::from_fn(d_y, d_x, |_, _| rng.standard_normal() / (d_x as f64).sqrt());
            let model = ObservationModel::new(
                a,
                random_covariance(d_x, 1.0, &mut rng)?,
                random_covariance(d_y, 1.0, &mut rng)?,
            )?;
            let mu = random_unit_sphere(d_x, 1.0, &mut rng);
            let best = model.transform(&mu)?;
            let rivals: Vec<Vec<f64>> = (0..directions)
                .map(|_| {
                    let u = random_unit_sphere(d_y, eps, &mut rng);
                    best.iter().zip(u).map(|(b, e)| b + e).collect()
                })
                .collect();
            // paired differences of squared errors, rival minus best
            let mut sum = vec![0.0; directions];
            let mut sum_sq = vec![0.0; directions];
            for _ in 0..samples {
                let x = model.sample_context(&mut rng);
                let xi = model.sample_sensing_noise(&mut rng);
                let y = model.observe(&x, &xi)?;
                let target = dot(&x, &mu);
                let base = (target - dot(&y, &best)).powi(2);
                for (k, rival) in rivals.iter().enumerate() {
                    let d = (target - dot(&y, rival)).powi(2) - base;
                    sum[k] += d;
                    sum_sq[k] += d * d;
                }
            }
            let n = samples as f64;
            let all = (0..directions).all(|k| {
                let mean = sum[k] / n;
                let se = ((sum_sq[k] / n - mean * mean).max(0.0) / n).sqrt();
                let z = if se > 0.0 { mean / se } else { f64::INFINITY };
                worst_z = worst_z.min(z);
                mean >= -2.0 * se
            });
            mc_pass += usize::from(all);
        }
        Ok((
            agree == 200 && mc_pass == 10,
            format!(
                "closed forms agree {agree}/200 (worst rel {worst_rel:.2e}); MC optimal {mc_pass}/10 \
                 (min excess/se {worst_z:.1}, {samples} samples)"
            ),
        ))
    })();
    outcome(2, "BLUP closed forms and MC optimality", started, result.map_err(|e| e.to_string()))
}

/// The fixed-environment scenario behind the estimation, regret-shape,
/// arm-count and eigenvalue checks.
pub fn shape_spec(scale: Scale) -> ScenarioSpec {
    ScenarioSpec {
        experiment: "verify_shapes".into(),
        d_x: 10,
        d_y: 10,
        arms: 5,
        horizon: scale.pick(20_000, 4_000),
        runs: scale.pick(50, 10),
        seed: SEED,
        policies: "ts".into(),
        checkpoints: "geometric+linear:20".into(),
        scenario_per_run: false,
        margin_samples: scale.pick(100_000, 20_000),
        ..Default::default()
    }
}

/// Checks 3, 4, 6 and 7 on a report produced from [`shape_spec`].
pub fn shape_checks(report: &ExperimentReport, started: Instant) -> Vec<CheckOutcome> {
    let t_end = report.spec.horizon;
    let ts = PolicyKind::Thompson;
    let p_hat = &report.margin.p_hat;

    let flatness = (|| -> Result<(bool, String), String> {
        let mut worst: f64 = 0.0;
        let mut parts = Vec::new();
        for (i, &p) in p_hat.iter().enumerate() {
            if p <= P_HAT_FLOOR {
                continue;
            }
            let c = report.curve(ts, Series::ErrNorm(i)).ok_or("missing error curve")?;
            let at_half = c.mean_at(t_end / 2).ok_or("T/2 not on the checkpoint grid")?;
            let tail: Vec<f64> =
                c.grid.iter().zip(&c.mean).filter(|(&t, _)| t >= t_end / 2 && t <= t_end).map(|(_, &v)| v).collect();
            let ratio = tail.iter().sum::<f64>() / tail.len() as f64 / at_half;
            worst = worst.max(ratio);
            parts.push(format!("arm {i}: {ratio:.3}"));
        }
        if parts.is_empty() {
            return Err("no arm with p_hat > 0.05".into());
        }
        Ok((worst <= 1.5, format!("tail-mean / value at T/2 <= 1.5; {}", parts.join(", "))))
    })();

    let regret_shape = (|| -> Result<(bool, String), String> {
        let c = report.curve(ts, Series::RegretNorm).ok_or("missing regret curve")?;
        let end = c.mean_at(t_end).ok_or("T not on grid")?;
        let quarter = c.mean_at(t_end / 4).ok_or("T/4 not on grid")?;
        let ratio = end / quarter;
        Ok((
            ratio <= 2.0,
            format!("mean Regret/log^2 t: {quarter:.3} at T/4, {end:.3} at T, ratio {ratio:.3} (limit 2)"),
        ))
    })();

    let fraction_check = |name: &str, label: &str| -> Result<(bool, String), String> {
        let c = report.check(ts, name).ok_or("missing pass fraction")?;
        let f = c.fraction().ok_or("no eligible (run, arm) pairs")?;
        Ok((f >= 0.9, format!("{label} holds for {}/{} pairs = {:.3} (need 0.9)", c.passed, c.checked, f)))
    };

    let done = started.elapsed();
    let mk = |id, name, r: Result<(bool, String), String>| {
        let (passed, detail) = r.unwrap_or_else(|e| (false, format!("error: {e}")));
        CheckOutcome { id, name, passed, detail, elapsed: done }
    };
    vec![
        mk(3, "normalized estimation error stays flat", flatness),
        mk(4, "normalized regret growth bounded", regret_shape),
        mk(6, "arm pull counts keep pace with optimality", fraction_check("arm_count", "n_i(T) >= p_i T / 4")),
        mk(7, "posterior precision grows linearly", fraction_check("eigen_growth", "lambda_min(B_i)/n_i >= lambda_min(Sigma_xi)/2")),
    ]
}

pub fn greedy_spec(scale: Scale) -> ScenarioSpec {
    ScenarioSpec {
        experiment: "verify_greedy".into(),
        d_x: 10,
        d_y: 10,
        arms: 20,
        horizon: scale.pick(20_000, 4_000),
        runs: scale.pick(50, 10),
        seed: SEED,
        policies: "ts,greedy".into(),
        checkpoints: "geometric".into(),
        margin_samples: 1000,
        ..Default::default()
    }
}

pub fn greedy_check(report: &ExperimentReport, started: Instant) -> CheckOutcome {
    let t = report.spec.horizon;
    let result = (|| -> Result<(bool, String), String> {
        let worst = |k| report.curve(k, Series::Regret).and_then(|c| c.worst_at(t)).ok_or("missing regret curve");
        let (ts, greedy) = (worst(PolicyKind::Thompson)?, worst(PolicyKind::Greedy)?);
        let ratio = greedy / ts;
        Ok((ratio >= 2.0, format!("worst regret at T: greedy {greedy:.1}, TS {ts:.1}, ratio {ratio:.2} (need 2)")))
    })();
    outcome(5, "greedy worst case far above Thompson sampling", started, result)
}

/// Empirical mean of `zeta * y` over sampled (round, arm) pairs.
pub fn residual_structure() -> CheckOutcome {
    let started = Instant::now();
    let pairs = 100_000;
    let result = (|| -> pobandit_core::Result<(bool, String)> {
        let key = StreamKey::new(SEED).child(8);
        let env = random_scenario(&ScenarioParams::default(), &mut key.stream(pobandit_core::Purpose::Scenario))?;
        let mut rng: RandomStream = key.stream(pobandit_core::Purpose::Misc);
        let (arms, d_y) = (env.arms(), env.d_y());
        let mu = env.arm_set().mu();
        let eta = env.eta();
        let mut sum = vec![0.0; d_y];
        let mut sum_sq = vec![0.0; d_y];
        let mut n = 0usize;
        let mut t = 0;
        while n < pairs {
            t += 1;
            let round = env.sample_round(t, &mut rng);
            for i in 0..arms.min(pairs - n) {
                let eps = env.arm_set().noise_r1() * rng.standard_normal();
                let zeta = dot(&round.x[i], &mu[i]) - dot(&round.y[i], &eta[i]) + eps;
                for (j, &yj) in round.y[i].iter().enumerate() {
                    let v = zeta * yj;
                    sum[j] += v;
                    sum_sq[j] += v * v;
                }
                n += 1;
            }
        }
        let nf = n as f64;
        let worst = (0..d_y)
            .map(|j| {
                let mean = sum[j] / nf;
                let se = ((sum_sq[j] / nf - mean * mean) / nf).sqrt();
                (mean / se).abs()
            })
            .fold(0.0f64, f64::max);
        Ok((worst <= 4.0, format!("max |mean(zeta y_j)| / se = {worst:.2} over {n} pairs (limit 4)")))
    })();
    outcome(8, "residual uncorrelated with observation", started, result.map_err(|e| e.to_string()))
}

pub fn realdata_spec(scale: Scale) -> ScenarioSpec {
    ScenarioSpec {
        experiment: "verify_realdata".into(),
        dataset: Some("bundled:egg".into()),
        label: "label".into(),
        d_y: 10,
        horizon: 5000,
        runs: scale.pick(20, 5),
        seed: SEED,
        policies: "ts,regression_oracle".into(),
        checkpoints: "geometric+linear:10".into(),
        scenario_per_run: false,
        ..Default::default()
    }
}

pub fn realdata_check(report: &ExperimentReport, started: Instant) -> CheckOutcome {
    let t = report.spec.horizon;
    let result = (|| -> Result<(bool, String), String> {
        let cdr = |k| report.curve(k, Series::Cdr).and_then(|c| c.mean_at(t)).ok_or("missing cdr curve");
        let (ts, oracle) = (cdr(PolicyKind::Thompson)?, cdr(PolicyKind::RegressionOracle)?);
        let diff = (ts - oracle).abs();
        Ok((diff <= 0.05, format!("mean CDR at t={t}: TS {ts:.4}, regression oracle {oracle:.4}, |diff| {diff:.4} (limit 0.05)")))
    })();
    outcome(9, "real-data correct decision rate near oracle", started, result)
}

pub fn determinism_spec() -> ScenarioSpec {
    ScenarioSpec {
        experiment: "verify_determinism".into(),
        arms: 4,
        horizon: 2000,
        runs: 6,
        seed: SEED,
        policies: "ts,greedy".into(),
        margin_samples: 2000,
        ..Default::default()
    }
}

/// Renders the same experiment twice, with different worker counts, and
/// compares the CSV bytes.
pub fn determinism() -> CheckOutcome {
    let started = Instant::now();
    let result = (|| -> Result<(bool, String), String> {
        let a = run_experiment(&ScenarioSpec { workers: 1, ..determinism_spec() }).map_err(|e| e.to_string())?;
        let b = run_experiment(&ScenarioSpec { workers: 4, ..determinism_spec() }).map_err(|e| e.to_string())?;
        let (ca, cb) = (render_csv(&a), render_csv(&b));
        Ok((ca == cb, format!("{} vs {} CSV bytes, identical: {}", ca.len(), cb.len(), ca == cb)))
    })();
    outcome(10, "identical config and seed give identical CSV", started, result)
}

/// Runs every check at the given scale.
pub fn verify(scale: Scale) -> Vec<CheckOutcome> {
    let mut out = vec![posterior_equivalence(), blup_correctness(scale)];

    let started = Instant::now();
    match run_experiment(&shape_spec(scale)) {
        Ok(report) => out.extend(shape_checks(&report, started)),
        Err(e) => {
            for (id, name) in [(3, "normalized estimation error stays flat"), (4, "normalized regret growth bounded"), (6, "arm pull counts keep pace with optimality"), (7, "posterior precision grows linearly")] {
                out.push(outcome(id, name, started, Err(e.to_string())));
            }
        }
    }

    let started = Instant::now();
    out.push(match run_experiment(&greedy_spec(scale)) {
        Ok(report) => greedy_check(&report, started),
        Err(e) => outcome(5, "greedy worst case far above Thompson sampling", started, Err(e.to_string())),
    });

    out.push(residual_structure());

    let started = Instant::now();
    out.push(match run_experiment(&realdata_spec(scale)) {
        Ok(report) => realdata_check(&report, started),
        Err(e) => outcome(9, "real-data correct decision rate near oracle", started, Err(e.to_string())),
    });

    out.push(determinism());
    out.sort_by_key(|c| c.id);
    out
}
