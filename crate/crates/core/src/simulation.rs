//! The interaction protocol for a single seeded run.
//!
//! Every random draw is addressed by `(run key, purpose, t)`: the round at
//! step `t` is the same for every policy evaluated under the same key, and
//! policy randomness never perturbs the environment.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{min_eigenvalue, norm, sub};
use crate::metrics::{ArmCheckpoint, Checkpoint, RunTrace, StepRecord};
use crate::model::{gap, RoundSource};
use crate::policy::{HindsightSample, Policy, PolicyKind, PosteriorState};
use crate::rng::{Purpose, StreamKey};

/// Instantiates a policy for `source`. `regression_eta` is required for
/// [`PolicyKind::RegressionOracle`].
pub fn build_policy(
    kind: PolicyKind,
    source: &impl RoundSource,
    dispersion: f64,
    regression_eta: Option<&[Vec<f64>]>,
) -> Result<Policy> {
    let (arms, d_y) = (source.arms(), source.d_y());
    let posterior = || {
        if source.shared_parameter() {
            PosteriorState::new_shared(arms, d_y, dispersion)
        } else {
            PosteriorState::new(arms, d_y, dispersion)
        }
    };
    Ok(match kind {
        PolicyKind::Thompson => Policy::Thompson(posterior()?),
        PolicyKind::Greedy => Policy::Greedy(posterior()?),
        PolicyKind::Oracle => Policy::Oracle(source.reference_eta().to_vec()),
        PolicyKind::Random => Policy::Random(arms),
        PolicyKind::RegressionOracle => Policy::RegressionOracle(
            regression_eta
                .ok_or(Error::InvalidArgument("regression oracle needs fitted parameters"))?
                .to_vec(),
        ),
    })
}

/// Draws `samples` rounds with every arm's reward realized, for fitting the
/// hindsight regression oracle.
pub fn hindsight_samples(source: &impl RoundSource, samples: usize, key: StreamKey) -> Vec<HindsightSample> {
    (0..samples as u64)
        .map(|s| {
            let mut rng = key.stream_at(Purpose::Oracle, s);
            let round = source.sample_round(s, &mut rng);
            let rewards = (0..source.arms()).map(|i| source.realize_reward(i, &round, &mut rng)).collect();
            HindsightSample { y: round.y, rewards }
        })
        .collect()
}

/// Runs `horizon` rounds of: sample round, decide from observations only,
/// realize the chosen arm's reward, update. Diagnostics are recorded at the
/// sorted `checkpoints` that fall within the horizon.
pub fn run(
    source: &impl RoundSource,
    policy: &mut Policy,
    horizon: u64,
    checkpoints: &[u64],
    key: StreamKey,
) -> Result<RunTrace> {
    let arms = source.arms();
    let eta = source.reference_eta();
    let mut pulls = vec![0u64; arms];
    let mut regret = 0.0;
    let mut trace = RunTrace { steps: Vec::with_capacity(horizon as usize), checkpoints: Vec::new() };
    let mut next_cp = checkpoints.iter().copied().filter(|&t| t >= 1 && t <= horizon).peekable();

    for t in 1..=horizon {
        let round = source.sample_round(t, &mut key.stream_at(Purpose::Round, t));
        let decision = policy.decide(round.observations(), &mut key.stream_at(Purpose::Policy, t))?;
        let chosen = decision.chosen;
        let reward = source.realize_reward(chosen, &round, &mut key.stream_at(Purpose::Reward, t));
        policy.update(chosen, &round.y[chosen], reward)?;

        let g = gap(&round, eta, chosen);
        regret += g;
        pulls[chosen] += 1;
        trace.steps.push(StepRecord {
            chosen,
            optimal: round.optimal_arm,
            gap: g,
            regret,
            correct: round.label.map(|l| l == chosen),
        });

        while next_cp.peek() == Some(&t) {
            next_cp.next();
            if trace.checkpoints.last().map(|c| c.t) != Some(t) {
                trace.checkpoints.push(checkpoint(t, policy, eta, &pulls)?);
            }
        }
    }
    Ok(trace)
}

fn checkpoint(t: u64, policy: &Policy, eta: &[Vec<f64>], pulls: &[u64]) -> Result<Checkpoint> {
    let arms = pulls
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            Ok(match policy.posterior() {
                Some(state) => {
                    let rec = state.record(i);
                    ArmCheckpoint {
                        pulls: n,
                        updates: rec.pulls(),
                        error: Some(norm(&sub(rec.eta_hat(), &eta[i]))),
                        min_eigenvalue: Some(min_eigenvalue(rec.precision())?),
                    }
                }
                None => ArmCheckpoint { pulls: n, updates: n, error: None, min_eigenvalue: None },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Checkpoint { t, arms })
}
