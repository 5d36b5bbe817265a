//! Discrete-event simulation of one networked control loop.
//!
//! Each period the sensor samples the plant at `kh + delta_k`, the controller
//! finishes after an execution time `e_k`, and the command reaches the actuator
//! after a further network delay `d_k` plus the hardware offset `alpha_c`. The
//! plant evolves exactly between events (zero-order hold, matrix exponential).

use std::io::Write;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contract::{ContractError, ContractVerdict, TimingRecord, TimingTrace, TolcContract};
use crate::jitter::{
    composite_stats, CompositeJitterStats, HardwareJitter, JitterError, MarkovDelayModel, SoftwareJitter,
};
use crate::lti::{LtiError, StateSpace, TransferFunction};
use crate::mealy::{MealyError, MealySwitchingController};

/// Settling band as a fraction of the final value.
pub const SETTLING_BAND: f64 = 0.02;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("empty signal series")]
    EmptySignal,
    #[error(transparent)]
    Lti(#[from] LtiError),
    #[error(transparent)]
    Jitter(#[from] JitterError),
    #[error(transparent)]
    Mealy(#[from] MealyError),
    #[error(transparent)]
    Contract(#[from] ContractError),
    #[error("writing results: {0}")]
    Io(#[from] std::io::Error),
    #[error("writing results: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Reference {
    Constant { value: f64 },
    Step { amplitude: f64, time: f64 },
}

impl Reference {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            Self::Constant { value } => value,
            Self::Step { amplitude, time } => {
                if t >= time {
                    amplitude
                } else {
                    0.0
                }
            }
        }
    }

    pub fn final_value(&self) -> f64 {
        match *self {
            Self::Constant { value } => value,
            Self::Step { amplitude, .. } => amplitude,
        }
    }
}

impl Default for Reference {
    fn default() -> Self {
        Self::Step {
            amplitude: 1.0,
            time: 0.0,
        }
    }
}

/// Distribution of the sampling offset `delta_k` on `[0, J^h]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SamplingJitter {
    /// Sample exactly at `kh`.
    Zero,
    #[default]
    Uniform,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub plant: TransferFunction,
    pub controller: MealySwitchingController,
    pub hardware: HardwareJitter,
    pub software: SoftwareJitter,
    pub network: MarkovDelayModel,
    pub contract: TolcContract,
    pub reference: Reference,
    pub duration: f64,
    pub seed: u64,
    pub sampling_jitter: SamplingJitter,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return Err(SimError::InvalidScenario(format!(
                "duration {} must be positive",
                self.duration
            )));
        }
        if !self.plant.is_proper() {
            return Err(SimError::InvalidScenario(format!("plant {} is improper", self.plant)));
        }
        let violations = self.contract.validate_parameters();
        if !violations.is_empty() {
            return Err(ContractError::InvalidContract(violations).into());
        }
        self.controller.check_covers(&self.network)?;
        Ok(())
    }

    /// Number of sampling periods that fit in the horizon.
    pub fn sample_count(&self) -> usize {
        ((self.duration / self.contract.h) + 1e-9).floor() as usize
    }

    pub fn predicted_stats(&self) -> Result<CompositeJitterStats, SimError> {
        Ok(composite_stats(&self.hardware, &self.software, &self.network)?)
    }
}

/// One sampling event: sensor value, the command it produced and when that
/// command reached the actuator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalSample {
    pub t: f64,
    pub y: f64,
    pub u: f64,
    pub t_applied: f64,
    pub reference: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub iae: f64,
    pub ise: f64,
    /// Absent when the final value is zero.
    pub overshoot: Option<f64>,
    pub settling_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub trace: TimingTrace,
    pub signals: Vec<SignalSample>,
    /// Sensor-to-actuator latency `e_k + d_k + alpha_c` per sample.
    pub latencies: Vec<f64>,
    /// Channel state index in force at each sample.
    pub channel_states: Vec<usize>,
    /// Samples whose command arrived at or after the next sampling instant.
    pub late_actuations: Vec<u64>,
    pub metrics: Metrics,
    pub verdict: ContractVerdict,
}

struct Plant {
    ss: StateSpace,
    x: DVector<f64>,
    t: f64,
}

impl Plant {
    fn advance_to(&mut self, t: f64, u: f64) {
        let dt = t - self.t;
        if dt > 0.0 && self.ss.order() > 0 {
            let (ad, bd) = self.ss.zoh(dt);
            self.x = &ad * &self.x + bd.column(0) * u;
        }
        if t > self.t {
            self.t = t;
        }
    }

    fn output(&self, u: f64) -> f64 {
        let cx = if self.ss.order() > 0 {
            (self.ss.c() * &self.x)[(0, 0)]
        } else {
            0.0
        };
        cx + self.ss.d()[(0, 0)] * u
    }
}

#[derive(Debug, Clone, Copy)]
struct PendingCommand {
    t_a: f64,
    u: f64,
}

/// Simulate the scenario; fully determined by its seed.
pub fn run(sc: &Scenario) -> Result<SimResult, SimError> {
    sc.validate()?;
    let h = sc.contract.h;
    let n = sc.sample_count();
    let modes: Vec<usize> = sc
        .network
        .states()
        .iter()
        .map(|s| sc.controller.mode_index(s).expect("coverage validated"))
        .collect();
    let mut channel = sc.network.state_index(sc.controller.initial_mode()).unwrap_or(0);
    let mut machine = sc.controller.initialize();
    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);

    let ss = sc.plant.to_state_space()?;
    let order = ss.order();
    let mut plant = Plant {
        ss,
        x: DVector::zeros(order),
        t: 0.0,
    };
    let mut u_now = 0.0;
    let mut pending: Vec<PendingCommand> = Vec::new();

    let mut records: Vec<TimingRecord> = Vec::with_capacity(n);
    let mut signals = Vec::with_capacity(n);
    let mut latencies = Vec::with_capacity(n);
    let mut channel_states = Vec::with_capacity(n);
    let mut late = Vec::new();

    for k in 0..n {
        let offset = match sc.sampling_jitter {
            SamplingJitter::Zero => 0.0,
            SamplingJitter::Uniform if sc.contract.j_h > 0.0 => rng.random_range(0.0..=sc.contract.j_h),
            SamplingJitter::Uniform => 0.0,
        };
        let t_s = k as f64 * h + offset;
        apply_due(&mut plant, &mut pending, &mut u_now, t_s);
        if let Some(prev) = records.last() {
            if prev.t_a >= t_s {
                late.push(prev.k);
            }
        }
        plant.advance_to(t_s, u_now);
        let y = plant.output(u_now);

        channel_states.push(channel);
        let (d_k, next) = sc.network.sample_delay(channel, &mut rng)?;
        let e_k = sc.software.sample_execution_time(&mut rng);
        let latency = e_k + d_k + sc.hardware.alpha_c();
        let t_a = t_s + latency;
        let t_u = t_s + e_k;
        let r = sc.reference.at(t_s);
        let (u, m) = sc.controller.step_mode(machine, y, modes[channel], d_k, r);
        machine = m;
        channel = next;

        let at = pending.partition_point(|p| p.t_a <= t_a);
        pending.insert(at, PendingCommand { t_a, u });
        records.push(TimingRecord {
            k: k as u64,
            t_s,
            t_a,
            t_u,
        });
        signals.push(SignalSample {
            t: t_s,
            y,
            u,
            t_applied: t_a,
            reference: r,
        });
        latencies.push(latency);
    }
    if let Some(last) = records.last() {
        if last.t_a >= n as f64 * h {
            late.push(last.k);
        }
    }

    let trace = TimingTrace::new(records)?;
    let verdict = sc.contract.check_trace(&trace)?;
    let metrics = metrics(&signals, h)?;
    Ok(SimResult {
        trace,
        signals,
        latencies,
        channel_states,
        late_actuations: late,
        metrics,
        verdict,
    })
}

/// Apply every command whose actuation instant is not after `t`, in time order.
fn apply_due(plant: &mut Plant, pending: &mut Vec<PendingCommand>, u_now: &mut f64, t: f64) {
    let due = pending.partition_point(|p| p.t_a <= t);
    for cmd in pending.drain(..due) {
        plant.advance_to(cmd.t_a, *u_now);
        *u_now = cmd.u;
    }
}

/// Quality-of-control figures over the sampled error `r(t_k) - y_k`.
///
/// The final value is the last sampled output; overshoot and settling time are
/// absent when it is zero.
pub fn metrics(signals: &[SignalSample], h: f64) -> Result<Metrics, SimError> {
    let last = signals.last().ok_or(SimError::EmptySignal)?;
    let (iae, ise) = signals.iter().fold((0.0, 0.0), |(a, s), sig| {
        let e = sig.reference - sig.y;
        (a + e.abs() * h, s + e * e * h)
    });
    let y_final = last.y;
    if y_final == 0.0 || !y_final.is_finite() {
        return Ok(Metrics {
            iae,
            ise,
            overshoot: None,
            settling_time: None,
        });
    }
    let peak = signals.iter().map(|s| s.y).fold(f64::NEG_INFINITY, f64::max);
    let overshoot = ((peak - y_final) / y_final.abs()).max(0.0);
    let band = SETTLING_BAND * y_final.abs();
    let settled_from = signals
        .iter()
        .rposition(|s| (s.y - y_final).abs() > band)
        .map_or(0, |i| i + 1);
    Ok(Metrics {
        iae,
        ise,
        overshoot: Some(overshoot),
        settling_time: Some(signals[settled_from].t),
    })
}

impl SimResult {
    /// `t,y,u` at each sampling instant.
    pub fn write_signals_csv<W: Write>(&self, writer: W) -> Result<(), SimError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "y", "u"])?;
        for s in &self.signals {
            w.write_record([s.t.to_string(), s.y.to_string(), s.u.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn latency_moments(&self) -> (f64, f64) {
        mean_std(&self.latencies)
    }

    pub fn summary(&self, sc: &Scenario) -> String {
        let (mean, std) = self.latency_moments();
        let mut s = String::new();
        s.push_str(&format!("samples: {}\n", self.trace.len()));
        s.push_str(&format!("seed: {}\n", sc.seed));
        s.push_str(&format!("iae: {}\n", self.metrics.iae));
        s.push_str(&format!("ise: {}\n", self.metrics.ise));
        s.push_str(&format!("overshoot: {}\n", opt(self.metrics.overshoot)));
        s.push_str(&format!("settling_time: {}\n", opt(self.metrics.settling_time)));
        s.push_str(&format!("latency_mean: {mean}\n"));
        s.push_str(&format!("latency_std: {std}\n"));
        s.push_str(&format!("late_actuations: {}\n", self.late_actuations.len()));
        s.push_str(&self.verdict.report(&sc.contract, self.trace.len()));
        s
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "absent".to_string(), |x| x.to_string())
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    // Shifted by the first sample so a constant sequence has exactly zero spread.
    let n = xs.len() as f64;
    let shift = xs[0];
    let offset = xs.iter().map(|x| x - shift).sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - shift - offset).powi(2)).sum::<f64>() / n;
    (shift + offset, var.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub seed: u64,
    pub metrics: Metrics,
    pub satisfied: bool,
    pub violations: usize,
    pub samples: usize,
    pub latency_mean: f64,
    pub latency_std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloReport {
    pub runs: Vec<RunSummary>,
    /// Fraction of runs whose trace satisfied the contract.
    pub pass_fraction: f64,
    /// Latency statistics pooled over every sample of every run.
    pub latency_mean: f64,
    pub latency_std: f64,
    pub samples: usize,
    pub predicted: CompositeJitterStats,
    /// `mu_T + alpha_c`: the mean latency the simulator's composition implies.
    pub predicted_latency_mean: f64,
}

impl MonteCarloReport {
    pub fn summary(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("runs: {}\n", self.runs.len()));
        s.push_str(&format!("samples: {}\n", self.samples));
        s.push_str(&format!("contract_pass_fraction: {}\n", self.pass_fraction));
        s.push_str(&format!("latency_mean: {}\n", self.latency_mean));
        s.push_str(&format!("latency_std: {}\n", self.latency_std));
        s.push_str(&format!("predicted_mu_t: {}\n", self.predicted.mu_t));
        s.push_str(&format!("predicted_latency_mean: {}\n", self.predicted_latency_mean));
        s.push_str(&format!("predicted_sigma_t: {}\n", self.predicted.sigma_t));
        s
    }

    /// Per-run rows: `seed,satisfied,violations,iae,ise,overshoot,settling_time,latency_mean,latency_std`.
    pub fn write_runs_csv<W: Write>(&self, writer: W) -> Result<(), SimError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "seed",
            "satisfied",
            "violations",
            "iae",
            "ise",
            "overshoot",
            "settling_time",
            "latency_mean",
            "latency_std",
        ])?;
        for r in &self.runs {
            w.write_record([
                r.seed.to_string(),
                r.satisfied.to_string(),
                r.violations.to_string(),
                r.metrics.iae.to_string(),
                r.metrics.ise.to_string(),
                r.metrics.overshoot.map(|v| v.to_string()).unwrap_or_default(),
                r.metrics.settling_time.map(|v| v.to_string()).unwrap_or_default(),
                r.latency_mean.to_string(),
                r.latency_std.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Independent runs with seeds `seed, seed + 1, ...`, aggregated in seed order.
pub fn monte_carlo(sc: &Scenario, runs: usize) -> Result<MonteCarloReport, SimError> {
    if runs == 0 {
        return Err(SimError::InvalidScenario("runs must be at least 1".into()));
    }
    sc.validate()?;
    let results: Vec<RunSummary> = (0..runs as u64)
        .into_par_iter()
        .map(|i| {
            let mut this = sc.clone();
            this.seed = sc.seed.wrapping_add(i);
            let res = run(&this)?;
            let (mean, std) = res.latency_moments();
            Ok(RunSummary {
                seed: this.seed,
                metrics: res.metrics,
                satisfied: res.verdict.satisfied(),
                violations: res.verdict.violations().len(),
                samples: res.latencies.len(),
                latency_mean: mean,
                latency_std: std,
            })
        })
        .collect::<Result<_, SimError>>()?;

    let samples: usize = results.iter().map(|r| r.samples).sum();
    // Pooled moments from per-run means and spreads, accumulated in seed order and
    // shifted by the first run's mean so identical runs pool without rounding.
    let (mean, var) = if samples > 0 {
        let n_total = samples as f64;
        let shift = results[0].latency_mean;
        let offset = results
            .iter()
            .map(|r| r.samples as f64 * (r.latency_mean - shift))
            .sum::<f64>()
            / n_total;
        let mean = shift + offset;
        let var = results
            .iter()
            .map(|r| {
                let d = r.latency_mean - shift - offset;
                r.samples as f64 * (r.latency_std * r.latency_std + d * d)
            })
            .sum::<f64>()
            / n_total;
        (mean, var)
    } else {
        (0.0, 0.0)
    };
    let passed = results.iter().filter(|r| r.satisfied).count();
    let predicted = sc.predicted_stats()?;
    Ok(MonteCarloReport {
        pass_fraction: passed as f64 / runs as f64,
        latency_mean: mean,
        latency_std: var.max(0.0).sqrt(),
        samples,
        predicted_latency_mean: predicted.mu_t + sc.hardware.alpha_c(),
        predicted,
        runs: results,
    })
}
