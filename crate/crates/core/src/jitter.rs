//! Timing-imperfection models for one control loop.
//!
//! Three kinds of jitter are distinguished by where they originate:
//! hardware jitter is a constant offset `alpha_c`, software jitter is bounded by
//! the best- and worst-case execution times, and network jitter is random with
//! its statistics modulated by a discrete-time Markov chain over channel-loading
//! states.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Row-sum tolerance for transition matrices.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;

const MAX_REJECTIONS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JitterError {
    #[error("{name} must be finite and non-negative, got {value}")]
    Negative { name: &'static str, value: f64 },
    #[error("execution jitter {j_exec} exceeds nominal execution time {tau_s}")]
    ExecutionJitterTooLarge { tau_s: f64, j_exec: f64 },
    #[error("invalid delay distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid transition matrix: {0}")]
    InvalidTransition(String),
    #[error("chain is reducible: state {0} cannot reach every other state")]
    ReducibleChain(String),
    #[error("state index {index} out of range for {count} states")]
    InvalidState { index: usize, count: usize },
    #[error("duplicate or empty state label {0:?}")]
    InvalidLabel(String),
}

fn non_negative(name: &'static str, value: f64) -> Result<f64, JitterError> {
    if value.is_finite() && value >= 0.0 {
        Ok(value)
    } else {
        Err(JitterError::Negative { name, value })
    }
}

/// Constant hardware-induced timing offset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HardwareJitter {
    alpha_c: f64,
}

impl HardwareJitter {
    pub fn new(alpha_c: f64) -> Result<Self, JitterError> {
        Ok(Self {
            alpha_c: non_negative("alpha_c", alpha_c)?,
        })
    }

    pub fn alpha_c(&self) -> f64 {
        self.alpha_c
    }
}

/// Execution-time jitter of the control task: nominal time `tau_s` with a
/// symmetric half-width `j_exec`, so `BCET = tau_s - j_exec` and `WCET = tau_s + j_exec`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftwareJitter {
    tau_s: f64,
    j_exec: f64,
}

impl SoftwareJitter {
    pub fn new(tau_s: f64, j_exec: f64) -> Result<Self, JitterError> {
        let tau_s = non_negative("tau_s", tau_s)?;
        let j_exec = non_negative("j_exec", j_exec)?;
        if j_exec > tau_s {
            return Err(JitterError::ExecutionJitterTooLarge { tau_s, j_exec });
        }
        Ok(Self { tau_s, j_exec })
    }

    pub fn tau_s(&self) -> f64 {
        self.tau_s
    }

    pub fn j_exec(&self) -> f64 {
        self.j_exec
    }

    pub fn bcet(&self) -> f64 {
        self.tau_s - self.j_exec
    }

    pub fn wcet(&self) -> f64 {
        self.tau_s + self.j_exec
    }

    /// Spread contributed to the total jitter sum (the execution half-width).
    pub fn sigma_s(&self) -> f64 {
        self.j_exec
    }

    /// Execution time drawn uniformly from `[BCET, WCET]`.
    pub fn sample_execution_time<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.j_exec == 0.0 {
            self.tau_s
        } else {
            rng.random_range(self.bcet()..=self.wcet())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DelayFamily {
    #[default]
    TruncatedNormal,
    Uniform,
}

/// Delay distribution of one channel state with hard support `[min, max]`.
///
/// For the truncated-normal family `mean` and `std` are the parameters of the
/// parent normal; for the uniform family they are the moments of `U[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayDistribution {
    mean: f64,
    std: f64,
    min: f64,
    max: f64,
    family: DelayFamily,
}

impl DelayDistribution {
    pub fn new(mean: f64, std: f64, min: f64, max: f64, family: DelayFamily) -> Result<Self, JitterError> {
        let min = non_negative("delay min", min)?;
        let max = non_negative("delay max", max)?;
        let std = non_negative("delay std", std)?;
        if !mean.is_finite() || mean < min || mean > max {
            return Err(JitterError::InvalidDistribution(format!(
                "mean {mean} outside support [{min}, {max}]"
            )));
        }
        if family == DelayFamily::Uniform {
            let mid = 0.5 * (min + max);
            let width_std = (max - min) / 12f64.sqrt();
            let tol = 1e-9 * max.max(1e-300);
            if (mean - mid).abs() > tol || (std - width_std).abs() > tol {
                return Err(JitterError::InvalidDistribution(format!(
                    "uniform on [{min}, {max}] has mean {mid} and std {width_std}, declared {mean} and {std}"
                )));
            }
        }
        Ok(Self {
            mean,
            std,
            min,
            max,
            family,
        })
    }

    pub fn uniform(min: f64, max: f64) -> Result<Self, JitterError> {
        if !(min <= max) {
            return Err(JitterError::InvalidDistribution(format!(
                "empty support [{min}, {max}]"
            )));
        }
        Self::new(
            0.5 * (min + max),
            (max - min) / 12f64.sqrt(),
            min,
            max,
            DelayFamily::Uniform,
        )
    }

    pub fn truncated_normal(mean: f64, std: f64, min: f64, max: f64) -> Result<Self, JitterError> {
        Self::new(mean, std, min, max, DelayFamily::TruncatedNormal)
    }

    /// Point mass at `delay`.
    pub fn fixed(delay: f64) -> Result<Self, JitterError> {
        Self::truncated_normal(delay, 0.0, delay, delay)
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn std(&self) -> f64 {
        self.std
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    pub fn family(&self) -> DelayFamily {
        self.family
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.min == self.max {
            return self.min;
        }
        let raw = match self.family {
            DelayFamily::Uniform => rng.random_range(self.min..=self.max),
            DelayFamily::TruncatedNormal => {
                if self.std == 0.0 {
                    self.mean
                } else {
                    let normal = Normal::new(self.mean, self.std).expect("std checked finite and positive");
                    let mut draw = self.mean;
                    for _ in 0..MAX_REJECTIONS {
                        draw = normal.sample(rng);
                        if draw >= self.min && draw <= self.max {
                            break;
                        }
                    }
                    draw
                }
            }
        };
        raw.clamp(self.min, self.max)
    }
}

/// Network delay as a discrete-time Markov chain over channel-loading states,
/// each state carrying its own delay distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovDelayModel {
    states: Vec<String>,
    transition: Vec<Vec<f64>>,
    delays: Vec<DelayDistribution>,
}

impl MarkovDelayModel {
    pub fn new(
        states: Vec<String>,
        transition: Vec<Vec<f64>>,
        delays: Vec<DelayDistribution>,
    ) -> Result<Self, JitterError> {
        let n = states.len();
        if n == 0 {
            return Err(JitterError::InvalidTransition("no states".into()));
        }
        for (i, s) in states.iter().enumerate() {
            if s.is_empty() || states[..i].contains(s) {
                return Err(JitterError::InvalidLabel(s.clone()));
            }
        }
        if delays.len() != n {
            return Err(JitterError::InvalidDistribution(format!(
                "{} delay distributions for {n} states",
                delays.len()
            )));
        }
        if transition.len() != n || transition.iter().any(|row| row.len() != n) {
            return Err(JitterError::InvalidTransition(format!("matrix must be {n}x{n}")));
        }
        for (i, row) in transition.iter().enumerate() {
            if let Some(p) = row.iter().find(|p| !(p.is_finite() && (0.0..=1.0).contains(*p))) {
                return Err(JitterError::InvalidTransition(format!(
                    "row {i} has entry {p} outside [0, 1]"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(JitterError::InvalidTransition(format!("row {i} sums to {sum}")));
            }
        }
        let model = Self {
            states,
            transition,
            delays,
        };
        model.check_irreducible()?;
        Ok(model)
    }

    /// Single-state chain: a stationary delay distribution with no modulation.
    pub fn single(label: &str, delay: DelayDistribution) -> Result<Self, JitterError> {
        Self::new(vec![label.to_string()], vec![vec![1.0]], vec![delay])
    }

    /// Two-state `Low`/`High` loading chain used by the demo configuration.
    pub fn low_high_demo() -> Self {
        Self::new(
            vec!["Low".into(), "High".into()],
            vec![vec![0.9, 0.1], vec![0.2, 0.8]],
            vec![
                DelayDistribution::truncated_normal(0.002, 0.0005, 0.001, 0.003).unwrap(),
                DelayDistribution::truncated_normal(0.006, 0.001, 0.004, 0.008).unwrap(),
            ],
        )
        .expect("demo chain is valid")
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    pub fn delays(&self) -> &[DelayDistribution] {
        &self.delays
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state_index(&self, label: &str) -> Option<usize> {
        self.states.iter().position(|s| s == label)
    }

    fn reachable_from(&self, start: usize, forward: bool) -> Vec<bool> {
        let n = self.len();
        let mut seen = vec![false; n];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            for (j, visited) in seen.iter_mut().enumerate() {
                let p = if forward {
                    self.transition[i][j]
                } else {
                    self.transition[j][i]
                };
                if p > 0.0 && !*visited {
                    *visited = true;
                    stack.push(j);
                }
            }
        }
        seen
    }

    fn check_irreducible(&self) -> Result<(), JitterError> {
        for forward in [true, false] {
            if let Some(i) = self.reachable_from(0, forward).iter().position(|r| !r) {
                return Err(JitterError::ReducibleChain(self.states[i].clone()));
            }
        }
        Ok(())
    }

    /// Stationary distribution `pi = pi P`, `sum(pi) = 1`.
    ///
    /// Solves `(P^T - I) pi = 0` with one equation replaced by the normalization,
    /// followed by iterative refinement until the residual is below `1e-12`.
    pub fn stationary_distribution(&self) -> Result<Vec<f64>, JitterError> {
        let n = self.len();
        let mut m = DMatrix::<f64>::from_fn(n, n, |i, j| self.transition[j][i] - if i == j { 1.0 } else { 0.0 });
        for j in 0..n {
            m[(n - 1, j)] = 1.0;
        }
        let mut rhs = DVector::<f64>::zeros(n);
        rhs[n - 1] = 1.0;
        let lu = m.clone().lu();
        let mut pi = lu
            .solve(&rhs)
            .ok_or_else(|| JitterError::ReducibleChain(self.states[0].clone()))?;
        for _ in 0..4 {
            let residual = &rhs - &m * &pi;
            if residual.amax() <= 1e-15 {
                break;
            }
            if let Some(delta) = lu.solve(&residual) {
                pi += delta;
            }
        }
        if let Some(i) = pi.iter().position(|p| !(*p > 0.0)) {
            return Err(JitterError::ReducibleChain(self.states[i].clone()));
        }
        let total: f64 = pi.iter().sum();
        Ok(pi.iter().map(|p| p / total).collect())
    }

    /// Stationary mixture mean and standard deviation of the per-state delays.
    pub fn network_moments(&self) -> Result<(f64, f64), JitterError> {
        let pi = self.stationary_distribution()?;
        if self.len() == 1 {
            return Ok((self.delays[0].mean, self.delays[0].std));
        }
        let mean: f64 = pi.iter().zip(&self.delays).map(|(p, d)| p * d.mean).sum();
        let second: f64 = pi
            .iter()
            .zip(&self.delays)
            .map(|(p, d)| p * (d.std * d.std + d.mean * d.mean))
            .sum();
        Ok((mean, (second - mean * mean).max(0.0).sqrt()))
    }

    /// Draw the delay for `state` and the chain's next state.
    pub fn sample_delay<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> Result<(f64, usize), JitterError> {
        let row = self.transition.get(state).ok_or(JitterError::InvalidState {
            index: state,
            count: self.len(),
        })?;
        let delay = self.delays[state].sample(rng);
        Ok((delay, next_index(row, rng)))
    }
}

fn next_index<R: Rng + ?Sized>(row: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (j, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return j;
        }
    }
    row.iter().rposition(|&p| p > 0.0).unwrap_or(row.len() - 1)
}

/// Total jitter spread and mean latency of the loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositeJitterStats {
    pub sigma_t: f64,
    pub mu_t: f64,
}

/// `sigma_T = sigma_s + sigma_N + alpha_c` and `mu_T = mu_s + mu_N`, summed literally.
///
/// `alpha_c` enters the spread but not the mean.
pub fn composite_stats(
    hw: &HardwareJitter,
    sw: &SoftwareJitter,
    net: &MarkovDelayModel,
) -> Result<CompositeJitterStats, JitterError> {
    let (mu_n, sigma_n) = net.network_moments()?;
    Ok(CompositeJitterStats {
        sigma_t: sw.sigma_s() + sigma_n + hw.alpha_c(),
        mu_t: sw.tau_s() + mu_n,
    })
}
