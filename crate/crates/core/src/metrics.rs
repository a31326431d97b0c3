//! Regret accounting and diagnostics for single runs, plus aggregation across
//! runs into mean and worst-case curves.

use alloc::vec::Vec;

/// One interaction step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub chosen: usize,
    pub optimal: usize,
    pub gap: f64,
    /// Cumulative regret through this step.
    pub regret: f64,
    /// Whether the chosen arm matched the true label, in the classification protocol.
    pub correct: Option<bool>,
}

/// Per-arm diagnostics at a checkpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmCheckpoint {
    /// `n_i(t)`: times the arm was pulled.
    pub pulls: u64,
    /// Updates absorbed by the posterior record the arm reads from; equals
    /// `pulls` except in the shared-parameter setting.
    pub updates: u64,
    /// `|eta_hat_i(t) - eta_i|`, when the policy keeps estimates.
    pub error: Option<f64>,
    /// `lambda_min(B_i(t))`, when the policy keeps a posterior.
    pub min_eigenvalue: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub t: u64,
    pub arms: Vec<ArmCheckpoint>,
}

/// The record of one seeded run. Step `t` (1-based) is `steps[t - 1]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunTrace {
    pub steps: Vec<StepRecord>,
    pub checkpoints: Vec<Checkpoint>,
}

impl RunTrace {
    pub fn horizon(&self) -> u64 {
        self.steps.len() as u64
    }

    pub fn regret(&self, t: u64) -> Option<f64> {
        match t {
            0 => Some(0.0),
            _ => self.steps.get(t as usize - 1).map(|s| s.regret),
        }
    }

    pub fn checkpoint(&self, t: u64) -> Option<&Checkpoint> {
        self.checkpoints.binary_search_by_key(&t, |c| c.t).ok().map(|i| &self.checkpoints[i])
    }

    pub fn checkpoint_times(&self) -> Vec<u64> {
        self.checkpoints.iter().map(|c| c.t).collect()
    }

    /// `Regret(t) / (log t)^2`, defined for `t >= 3`.
    pub fn normalized_regret(&self, t: u64) -> Option<f64> {
        if t < 3 {
            return None;
        }
        let l = libm::log(t as f64);
        self.regret(t).map(|r| r / (l * l))
    }

    /// `sqrt(t) |eta_hat_i(t) - eta_i|` at a checkpoint.
    pub fn normalized_estimation_error(&self, arm: usize, t: u64) -> Option<f64> {
        let err = self.checkpoint(t)?.arms.get(arm)?.error?;
        Some(libm::sqrt(t as f64) * err)
    }

    /// `n_i(t) >= p_i t / 4` per arm; `None` for arms whose optimality
    /// probability is at or below `floor`.
    pub fn arm_count_check(&self, p_hat: &[f64], t: u64, floor: f64) -> Option<Vec<Option<bool>>> {
        let cp = self.checkpoint(t)?;
        Some(
            cp.arms
                .iter()
                .zip(p_hat)
                .map(|(a, &p)| (p > floor).then(|| a.pulls as f64 >= p * t as f64 / 4.0))
                .collect(),
        )
    }

    /// `lambda_min(B_i(t)) / n_i(t)`; undefined before the first update.
    pub fn eigen_growth_ratio(&self, arm: usize, t: u64) -> Option<f64> {
        let a = self.checkpoint(t)?.arms.get(arm)?;
        if a.updates == 0 {
            return None;
        }
        Some(a.min_eigenvalue? / a.updates as f64)
    }

    /// `t^{-1} sum_{tau <= t} 1(a(tau) = l(tau))`.
    pub fn correct_decision_rate(&self, t: u64) -> Option<f64> {
        if t == 0 || t > self.horizon() {
            return None;
        }
        let mut hits = 0u64;
        for s in &self.steps[..t as usize] {
            hits += u64::from(s.correct?);
        }
        Some(hits as f64 / t as f64)
    }

    pub fn total_pulls(&self, t: u64) -> Option<u64> {
        Some(self.checkpoint(t)?.arms.iter().map(|a| a.pulls).sum())
    }
}

/// Powers of two up to `horizon`, plus `horizon` itself.
pub fn geometric_grid(horizon: u64) -> Vec<u64> {
    let mut grid = Vec::new();
    let mut t = 1u64;
    while t < horizon {
        grid.push(t);
        t *= 2;
    }
    if horizon > 0 {
        grid.push(horizon);
    }
    grid
}

/// [`geometric_grid`] merged with `points` evenly spaced multiples of
/// `horizon / points`.
pub fn geometric_linear_grid(horizon: u64, points: u64) -> Vec<u64> {
    let mut grid = geometric_grid(horizon);
    if points > 0 {
        for k in 1..=points {
            let t = horizon * k / points;
            if t > 0 {
                grid.push(t);
            }
        }
    }
    grid.sort_unstable();
    grid.dedup();
    grid
}

/// Mean and pointwise-worst curves over runs.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateCurves {
    pub grid: Vec<u64>,
    pub mean: Vec<f64>,
    pub worst: Vec<f64>,
    pub runs: usize,
}

/// Evaluates `select` on every run at every grid point. Grid points where any
/// run yields `None` are dropped. The result does not depend on run order:
/// values are sorted before summation.
pub fn aggregate<T>(runs: &[T], grid: &[u64], select: impl Fn(&T, u64) -> Option<f64>) -> AggregateCurves {
    let mut out = AggregateCurves { grid: Vec::new(), mean: Vec::new(), worst: Vec::new(), runs: runs.len() };
    if runs.is_empty() {
        return out;
    }
    let mut values = Vec::with_capacity(runs.len());
    'grid: for &t in grid {
        values.clear();
        for run in runs {
            match select(run, t) {
                Some(v) => values.push(v),
                None => continue 'grid,
            }
        }
        values.sort_by(f64::total_cmp);
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        out.grid.push(t);
        out.mean.push(mean);
        out.worst.push(*values.last().expect("non-empty"));
    }
    out
}

impl AggregateCurves {
    pub fn mean_at(&self, t: u64) -> Option<f64> {
        self.grid.iter().position(|&g| g == t).map(|i| self.mean[i])
    }

    pub fn worst_at(&self, t: u64) -> Option<f64> {
        self.grid.iter().position(|&g| g == t).map(|i| self.worst[i])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_relative_eq;

    fn trace_from_gaps(gaps: &[f64]) -> RunTrace {
        let mut regret = 0.0;
        let steps = gaps
            .iter()
            .map(|&g| {
                regret += g;
                StepRecord { chosen: 0, optimal: 0, gap: g, regret, correct: None }
            })
            .collect();
        RunTrace { steps, checkpoints: Vec::new() }
    }

    fn checkpoint(t: u64, arms: Vec<ArmCheckpoint>) -> Checkpoint {
        Checkpoint { t, arms }
    }

    fn arm(pulls: u64, error: f64, eig: f64) -> ArmCheckpoint {
        ArmCheckpoint { pulls, updates: pulls, error: Some(error), min_eigenvalue: Some(eig) }
    }

    #[test]
    fn normalized_regret_values() {
        let zero = trace_from_gaps(&[0.0; 10]);
        assert_eq!(zero.normalized_regret(5), Some(0.0));
        assert_eq!(zero.normalized_regret(2), None);
        // Regret(e^2) = 4 with log^2(e^2) = 4: check the formula at an integer t
        let gaps = [0.5; 20];
        let tr = trace_from_gaps(&gaps);
        let t = 7u64;
        let l = libm::log(7.0);
        assert_relative_eq!(tr.normalized_regret(t).unwrap(), 3.5 / (l * l));
        let e2 = core::f64::consts::E * core::f64::consts::E;
        assert_relative_eq!(4.0 / (libm::log(e2) * libm::log(e2)), 1.0, max_relative = 1e-15);
    }

    #[test]
    fn regret_is_sum_of_gaps() {
        let gaps = [0.1, 0.0, 2.5, 0.3, 0.0, 1.1];
        let tr = trace_from_gaps(&gaps);
        for t in 1..=6u64 {
            let direct: f64 = gaps[..t as usize].iter().sum();
            assert_relative_eq!(tr.regret(t).unwrap(), direct);
        }
        assert!(tr.steps.windows(2).all(|w| w[1].regret >= w[0].regret));
        assert_eq!(tr.regret(7), None);
    }

    #[test]
    fn estimation_error_normalization() {
        let tr = RunTrace { steps: vec![], checkpoints: vec![checkpoint(4, vec![arm(4, 0.5, 1.0), arm(0, 0.0, 1.0)])] };
        assert_eq!(tr.normalized_estimation_error(0, 4), Some(1.0));
        assert_eq!(tr.normalized_estimation_error(1, 4), Some(0.0));
        assert_eq!(tr.normalized_estimation_error(0, 5), None);
    }

    #[test]
    fn arm_count_flags() {
        let tr = RunTrace {
            steps: vec![],
            checkpoints: vec![checkpoint(100, vec![arm(60, 0.0, 1.0), arm(5, 0.0, 1.0), arm(35, 0.0, 1.0)])],
        };
        let flags = tr.arm_count_check(&[0.5, 0.4, 0.0], 100, 0.05).unwrap();
        assert_eq!(flags, vec![Some(true), Some(false), None]);
        let single = RunTrace { steps: vec![], checkpoints: vec![checkpoint(9, vec![arm(9, 0.0, 1.0)])] };
        assert_eq!(single.arm_count_check(&[1.0], 9, 0.05).unwrap(), vec![Some(true)]);
    }

    #[test]
    fn eigen_ratio_guard_and_value() {
        let tr = RunTrace {
            steps: vec![],
            checkpoints: vec![checkpoint(1, vec![arm(0, 0.0, 1.0), arm(1, 0.0, 1.0)])],
        };
        assert_eq!(tr.eigen_growth_ratio(0, 1), None);
        assert_eq!(tr.eigen_growth_ratio(1, 1), Some(1.0));
    }

    #[test]
    fn correct_decision_rates() {
        let mk = |c: &[bool]| RunTrace {
            steps: c
                .iter()
                .map(|&b| StepRecord { chosen: 0, optimal: 0, gap: 0.0, regret: 0.0, correct: Some(b) })
                .collect(),
            checkpoints: vec![],
        };
        assert_eq!(mk(&[true; 5]).correct_decision_rate(5), Some(1.0));
        assert_eq!(mk(&[false; 5]).correct_decision_rate(5), Some(0.0));
        assert_eq!(mk(&[true, false, true, false]).correct_decision_rate(4), Some(0.5));
        assert_eq!(trace_from_gaps(&[0.0]).correct_decision_rate(1), None);
    }

    #[test]
    fn grids() {
        assert_eq!(geometric_grid(10), vec![1, 2, 4, 8, 10]);
        assert_eq!(geometric_grid(8), vec![1, 2, 4, 8]);
        assert_eq!(geometric_grid(1), vec![1]);
        assert_eq!(geometric_linear_grid(10, 5), vec![1, 2, 4, 6, 8, 10]);
    }

    #[test]
    fn aggregate_examples() {
        let one = vec![vec![1.0, 2.0, 3.0]];
        let grid = [1u64, 2, 3];
        let sel = |r: &Vec<f64>, t: u64| r.get(t as usize - 1).copied();
        let a = aggregate(&one, &grid, sel);
        assert_eq!(a.mean, a.worst);

        let two = vec![vec![1.0; 3], vec![3.0; 3]];
        let a = aggregate(&two, &grid, sel);
        assert_eq!(a.mean, vec![2.0; 3]);
        assert_eq!(a.worst, vec![3.0; 3]);
        assert_eq!(a.runs, 2);

        let empty: Vec<Vec<f64>> = vec![];
        assert!(aggregate(&empty, &grid, sel).grid.is_empty());
    }

    #[test]
    fn aggregate_is_permutation_invariant() {
        let runs: Vec<Vec<f64>> = (0..7)
            .map(|k| (0..5).map(|t| libm::sin((k * 5 + t) as f64) * 1e3 + 0.1).collect())
            .collect();
        let grid = [1u64, 2, 3, 4, 5];
        let sel = |r: &Vec<f64>, t: u64| r.get(t as usize - 1).copied();
        let a = aggregate(&runs, &grid, sel);
        let mut rev = runs.clone();
        rev.reverse();
        rev.swap(0, 3);
        let b = aggregate(&rev, &grid, sel);
        assert_eq!(a, b);
        assert!(a.worst.iter().zip(&a.mean).all(|(w, m)| w >= m));
    }

    #[test]
    fn aggregate_drops_undefined_points() {
        let runs = vec![vec![1.0, 2.0], vec![5.0]];
        let a = aggregate(&runs, &[1, 2], |r: &Vec<f64>, t| r.get(t as usize - 1).copied());
        assert_eq!(a.grid, vec![1]);
    }
}
