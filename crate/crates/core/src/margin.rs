//! Jitter margins of a stable closed loop and contract synthesis from them.
//!
//! The loop `T(s)` tolerates any total timing jitter below
//! `inf_w 1 / (|T(jw)| w)`. The infimum is found with a logarithmic sweep, a
//! golden-section refinement around the best grid point, and analytic handling
//! of the `w -> inf` tail.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contract::{ParameterViolation, TolcContract};
use crate::jitter::CompositeJitterStats;
use crate::lti::{LtiError, TransferFunction};

const GOLDEN_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MarginError {
    #[error("closed loop{} is not Hurwitz stable", .state.as_ref().map(|s| format!(" for state {s}")).unwrap_or_default())]
    UnstableClosedLoop { state: Option<String> },
    #[error("invalid sweep: {0}")]
    InvalidRange(String),
    #[error("invalid synthesis input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Lti(#[from] LtiError),
}

/// Frequency sweep over `[omega_lo, omega_hi]` with log-spaced grid points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub omega_lo: f64,
    pub omega_hi: f64,
    pub grid_points: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            omega_lo: 1e-3,
            omega_hi: 1e6,
            grid_points: 2000,
        }
    }
}

impl SweepConfig {
    fn validate(&self) -> Result<(), MarginError> {
        if !(self.omega_lo > 0.0) || !self.omega_lo.is_finite() {
            return Err(MarginError::InvalidRange(format!(
                "omega_lo = {} must be positive",
                self.omega_lo
            )));
        }
        if !(self.omega_hi > self.omega_lo) || !self.omega_hi.is_finite() {
            return Err(MarginError::InvalidRange(format!(
                "omega_hi = {} must exceed omega_lo = {}",
                self.omega_hi, self.omega_lo
            )));
        }
        if self.grid_points < 2 {
            return Err(MarginError::InvalidRange(format!(
                "grid_points = {} < 2",
                self.grid_points
            )));
        }
        Ok(())
    }

    fn grid(&self) -> impl Iterator<Item = f64> + '_ {
        let (a, b) = (self.omega_lo.ln(), self.omega_hi.ln());
        let n = self.grid_points - 1;
        (0..=n).map(move |i| {
            if i == n {
                self.omega_hi
            } else {
                (a + (b - a) * i as f64 / n as f64).exp()
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginResult {
    /// Maximal total jitter `J^T_max`, in the loop's time unit.
    pub j_max: f64,
    /// Frequency achieving the infimum; `f64::INFINITY` when attained in the limit.
    pub omega_star: f64,
    /// `(omega, 1 / (|T(j omega)| omega))` on the sweep grid.
    pub profile: Vec<(f64, f64)>,
}

impl MarginResult {
    /// Writes the profile as `omega,bound` CSV.
    pub fn write_profile_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["omega", "bound"])?;
        for (omega, bound) in &self.profile {
            w.write_record([omega.to_string(), bound.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `1 / (|T(j w)| w)`; infinite at transmission zeros.
fn bound_at(t_u: &TransferFunction, omega: f64) -> f64 {
    match t_u.evaluate(omega) {
        Ok(v) => {
            let g = v.norm() * omega;
            if g == 0.0 {
                f64::INFINITY
            } else {
                1.0 / g
            }
        }
        Err(_) => 0.0,
    }
}

/// Golden-section minimization of `bound_at` over `[lo, hi]` in log-frequency.
fn refine(t_u: &TransferFunction, lo: f64, hi: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let f = |x: f64| bound_at(t_u, x.exp());
    let (mut a, mut b) = (lo.ln(), hi.ln());
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > GOLDEN_TOLERANCE {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x.exp(), f(x))
}

/// Maximal total jitter `inf_w 1/(|T(jw)| w)` of a stable closed loop.
pub fn jitter_margin(t_u: &TransferFunction, sweep: &SweepConfig) -> Result<MarginResult, MarginError> {
    sweep.validate()?;
    if !t_u.is_hurwitz_stable() {
        return Err(MarginError::UnstableClosedLoop { state: None });
    }
    let profile: Vec<(f64, f64)> = sweep.grid().map(|w| (w, bound_at(t_u, w))).collect();

    // |T| w grows without bound when T does not roll off.
    if t_u.relative_degree() == Some(0) {
        return Ok(MarginResult {
            j_max: 0.0,
            omega_star: f64::INFINITY,
            profile,
        });
    }

    let (best_idx, _) = profile
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .expect("grid has at least two points");
    let lo = profile[best_idx.saturating_sub(1)].0;
    let hi = profile[(best_idx + 1).min(profile.len() - 1)].0;
    let (mut omega_star, mut j_max) = refine(t_u, lo, hi);
    if profile[best_idx].1 < j_max {
        omega_star = profile[best_idx].0;
        j_max = profile[best_idx].1;
    }

    // Relative degree one: |T(jw)| w tends to |b_m / a_n|.
    if t_u.relative_degree() == Some(1) {
        let tail = (t_u.den().leading() / t_u.num().leading()).abs();
        if tail < j_max {
            j_max = tail;
            omega_star = f64::INFINITY;
        }
    }

    Ok(MarginResult {
        j_max,
        omega_star,
        profile,
    })
}

/// Lower bound `J^T_max + h` on the effective sampling period.
pub fn effective_period_bound(j_max: f64, h: f64) -> f64 {
    j_max + h
}

/// Controller bank entry: channel-loading label and its continuous-time controller.
pub type BankEntry = (String, TransferFunction);

/// Jitter margin of the loop closed with each state's controller, in bank order.
pub fn margin_per_state(
    plant: &TransferFunction,
    bank: &[BankEntry],
    sweep: &SweepConfig,
) -> Result<Vec<(String, MarginResult)>, MarginError> {
    bank.par_iter()
        .map(|(label, controller)| {
            let t_u = TransferFunction::closed_loop(plant, controller)?;
            let result = jitter_margin(&t_u, sweep).map_err(|e| match e {
                MarginError::UnstableClosedLoop { .. } => MarginError::UnstableClosedLoop {
                    state: Some(label.clone()),
                },
                other => other,
            })?;
            Ok((label.clone(), result))
        })
        .collect()
}

/// Split of the margin between sampling jitter and delay jitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthesisPolicy {
    /// Fraction of the usable margin assigned to `J^h`; the rest goes to `J^tau`.
    pub allocation: f64,
    /// Fraction of `J^T_max` that is usable at all.
    pub safety_factor: f64,
}

impl Default for SynthesisPolicy {
    fn default() -> Self {
        Self {
            allocation: 0.5,
            safety_factor: 0.8,
        }
    }
}

impl SynthesisPolicy {
    pub fn new(allocation: f64, safety_factor: f64) -> Result<Self, MarginError> {
        if !(0.0..=1.0).contains(&allocation) {
            return Err(MarginError::InvalidInput(format!(
                "allocation {allocation} outside [0, 1]"
            )));
        }
        if !(safety_factor > 0.0 && safety_factor < 1.0) {
            return Err(MarginError::InvalidInput(format!(
                "safety factor {safety_factor} outside (0, 1)"
            )));
        }
        Ok(Self {
            allocation,
            safety_factor,
        })
    }
}

/// Why a synthesized parameter set was rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct InfeasibilityReport {
    pub j_total: f64,
    pub j_h: f64,
    pub j_tau: f64,
    /// Realized jitter spread, when it exceeds `j_total`.
    pub jitter_exceeds_margin: Option<f64>,
    pub violations: Vec<ParameterViolation>,
    /// Any period strictly above this satisfies `J^h + tau + J^tau < h`.
    pub min_period_exclusive: f64,
}

impl InfeasibilityReport {
    pub fn describe(&self) -> String {
        let mut s = format!(
            "synthesis infeasible\nj_total = {}\nj_h = {}\nj_tau = {}\n",
            self.j_total, self.j_h, self.j_tau
        );
        if let Some(sigma) = self.jitter_exceeds_margin {
            s.push_str(&format!(
                "violated: realized jitter spread sigma_T = {sigma} exceeds usable margin {}\n",
                self.j_total
            ));
        }
        for v in &self.violations {
            s.push_str(&format!("violated: {v}\n"));
        }
        s.push_str(&format!(
            "smallest feasible period: h > {}\n",
            self.min_period_exclusive
        ));
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Synthesis {
    Feasible {
        contract: TolcContract,
        margins: Vec<(String, MarginResult)>,
    },
    Infeasible {
        report: InfeasibilityReport,
        margins: Vec<(String, MarginResult)>,
    },
}

impl Synthesis {
    pub fn contract(&self) -> Option<&TolcContract> {
        match self {
            Self::Feasible { contract, .. } => Some(contract),
            Self::Infeasible { .. } => None,
        }
    }
}

/// Parameters shared by every synthesis request.
#[derive(Debug, Clone)]
pub struct SynthesisRequest<'a> {
    pub machine_id: &'a str,
    pub plant: &'a TransferFunction,
    pub bank: &'a [BankEntry],
    pub stats: CompositeJitterStats,
    pub h: f64,
    pub tau: f64,
    pub policy: SynthesisPolicy,
    pub sweep: SweepConfig,
}

/// Derive `(J^h, J^tau)` from the smallest per-state margin.
///
/// `j_total = safety_factor * min_i J^T_max,i` is split by `allocation`; delay jitter
/// above `tau` is moved to the sampling jitter. The contract is returned only when
/// it validates and the realized spread `sigma_T` fits inside `j_total`.
pub fn synthesize_contract(req: &SynthesisRequest<'_>) -> Result<Synthesis, MarginError> {
    if !(req.h > 0.0) || !(req.tau > 0.0) {
        return Err(MarginError::InvalidInput(format!(
            "h = {} and tau = {} must be positive",
            req.h, req.tau
        )));
    }
    if req.bank.is_empty() {
        return Err(MarginError::InvalidInput("empty controller bank".into()));
    }
    let margins = margin_per_state(req.plant, req.bank, &req.sweep)?;
    let j_min = margins.iter().map(|(_, m)| m.j_max).fold(f64::INFINITY, f64::min);
    let j_total = req.policy.safety_factor * j_min;
    let mut j_h = req.policy.allocation * j_total;
    let mut j_tau = j_total - j_h;
    if j_tau > req.tau {
        j_h += j_tau - req.tau;
        j_tau = req.tau;
    }
    let contract = TolcContract::new(req.machine_id, req.h, req.tau, j_h, j_tau);
    let violations = contract.validate_parameters();
    let jitter_exceeds_margin = (req.stats.sigma_t > j_total).then_some(req.stats.sigma_t);
    if violations.is_empty() && jitter_exceeds_margin.is_none() {
        return Ok(Synthesis::Feasible { contract, margins });
    }
    Ok(Synthesis::Infeasible {
        report: InfeasibilityReport {
            j_total,
            j_h,
            j_tau,
            jitter_exceeds_margin,
            violations,
            min_period_exclusive: j_h + req.tau + j_tau,
        },
        margins,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tf(num: &[f64], den: &[f64]) -> TransferFunction {
        TransferFunction::from_coeffs(num, den).unwrap()
    }

    fn integrator() -> TransferFunction {
        tf(&[1.0], &[0.0, 1.0])
    }

    /// Dense log grid, independent of the sweep and refinement path.
    fn grid_oracle(t: &TransferFunction, lo: f64, hi: f64, n: usize) -> f64 {
        (0..n)
            .map(|i| {
                let w = 10f64.powf(lo.log10() + (hi / lo).log10() * i as f64 / (n - 1) as f64);
                let g = t.evaluate(w).unwrap().norm() * w;
                1.0 / g
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn first_order_lag_tail_limit() {
        let t = tf(&[1.0], &[1.0, 1.0]);
        let m = jitter_margin(&t, &SweepConfig::default()).unwrap();
        assert!((m.j_max - 1.0).abs() < 1e-9);
        assert!(m.omega_star.is_infinite());
        assert!((grid_oracle(&t, 1e-3, 1e6, 20_001) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn second_order_interior_minimum() {
        let t = tf(&[1.0], &[1.0, 1.0, 1.0]);
        let m = jitter_margin(&t, &SweepConfig::default()).unwrap();
        assert!((m.j_max - 1.0).abs() < 1e-9, "{}", m.j_max);
        assert!((m.omega_star - 1.0).abs() < 1e-3, "{}", m.omega_star);
        assert!(grid_oracle(&t, 1e-3, 1e6, 20_001) >= m.j_max - 1e-12);
    }

    #[test]
    fn static_loop_has_no_margin() {
        let m = jitter_margin(&TransferFunction::gain(1.0), &SweepConfig::default()).unwrap();
        assert_eq!(m.j_max, 0.0);
    }

    #[test]
    fn rejects_unstable_and_bad_ranges() {
        assert!(matches!(
            jitter_margin(&tf(&[1.0], &[-1.0, 1.0]), &SweepConfig::default()),
            Err(MarginError::UnstableClosedLoop { state: None })
        ));
        let lag = tf(&[1.0], &[1.0, 1.0]);
        for sweep in [
            SweepConfig {
                omega_lo: 0.0,
                ..Default::default()
            },
            SweepConfig {
                omega_hi: 1e-4,
                ..Default::default()
            },
            SweepConfig {
                grid_points: 1,
                ..Default::default()
            },
        ] {
            assert!(matches!(jitter_margin(&lag, &sweep), Err(MarginError::InvalidRange(_))));
        }
    }

    #[test]
    fn effective_period_examples() {
        assert!((effective_period_bound(1e-3, 10e-3) - 11e-3).abs() < 1e-15);
        assert_eq!(effective_period_bound(0.0, 10e-3), 10e-3);
        assert!((effective_period_bound(2.5e-3, 7.5e-3) - 10e-3).abs() < 1e-15);
    }

    #[test]
    fn per_state_examples() {
        let sweep = SweepConfig::default();
        let one = margin_per_state(&integrator(), &[("only".into(), TransferFunction::gain(1.0))], &sweep).unwrap();
        assert!((one[0].1.j_max - 1.0).abs() < 1e-9);

        let bank = vec![
            ("Low".to_string(), TransferFunction::gain(2.0)),
            ("High".to_string(), TransferFunction::gain(1.0)),
        ];
        let m = margin_per_state(&integrator(), &bank, &sweep).unwrap();
        assert_eq!(m[0].0, "Low");
        assert!((m[0].1.j_max - 0.5).abs() < 1e-9);
        assert!((m[1].1.j_max - 1.0).abs() < 1e-9);
    }

    #[test]
    fn per_state_tags_unstable_state() {
        let plant = tf(&[1.0], &[-1.0, 1.0]);
        let bank = vec![
            ("Low".to_string(), TransferFunction::gain(2.0)),
            ("High".to_string(), TransferFunction::gain(0.5)),
        ];
        let err = margin_per_state(&plant, &bank, &SweepConfig::default()).unwrap_err();
        assert_eq!(
            err,
            MarginError::UnstableClosedLoop {
                state: Some("High".into())
            }
        );
    }

    fn request<'a>(
        plant: &'a TransferFunction,
        bank: &'a [BankEntry],
        sigma_t: f64,
        h: f64,
        tau: f64,
    ) -> SynthesisRequest<'a> {
        SynthesisRequest {
            machine_id: "M",
            plant,
            bank,
            stats: CompositeJitterStats { sigma_t, mu_t: 0.0 },
            h,
            tau,
            policy: SynthesisPolicy::default(),
            sweep: SweepConfig::default(),
        }
    }

    #[test]
    fn synthesis_examples() {
        let plant = integrator();
        let bank = vec![("only".to_string(), TransferFunction::gain(1.0))];

        let s = synthesize_contract(&request(&plant, &bank, 0.5, 10.0, 2.0)).unwrap();
        let c = s.contract().expect("feasible");
        assert!((c.j_h - 0.4).abs() < 1e-8 && (c.j_tau - 0.4).abs() < 1e-8);
        assert!(c.is_valid());

        match synthesize_contract(&request(&plant, &bank, 0.5, 2.5, 2.0)).unwrap() {
            Synthesis::Infeasible { report, .. } => {
                assert!((report.min_period_exclusive - 2.8).abs() < 1e-8);
                assert!(matches!(
                    report.violations.as_slice(),
                    [ParameterViolation::PeriodBudgetExceeded { .. }]
                ));
            }
            other => panic!("expected infeasible, got {other:?}"),
        }

        match synthesize_contract(&request(&plant, &bank, 1.2, 10.0, 2.0)).unwrap() {
            Synthesis::Infeasible { report, .. } => {
                assert_eq!(report.jitter_exceeds_margin, Some(1.2));
                assert!(report.violations.is_empty());
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn synthesis_clamps_delay_jitter() {
        let plant = integrator();
        let bank = vec![("only".to_string(), TransferFunction::gain(1.0))];
        let mut req = request(&plant, &bank, 0.0, 10.0, 0.1);
        req.policy = SynthesisPolicy::new(0.0, 0.8).unwrap();
        let c = synthesize_contract(&req).unwrap().contract().cloned().unwrap();
        assert!((c.j_tau - 0.1).abs() < 1e-12);
        assert!((c.j_h - 0.7).abs() < 1e-8);
    }

    #[test]
    fn full_allocation_leaves_no_delay_jitter() {
        let plant = integrator();
        let bank = vec![("only".to_string(), TransferFunction::gain(1.0))];
        let mut req = request(&plant, &bank, 0.0, 10.0, 2.0);
        req.policy = SynthesisPolicy::new(1.0, 0.8).unwrap();
        match synthesize_contract(&req).unwrap() {
            Synthesis::Infeasible { report, .. } => {
                assert!((report.j_h - 0.8).abs() < 1e-8);
                assert_eq!(report.j_tau, 0.0);
                assert!(matches!(
                    report.violations.as_slice(),
                    [ParameterViolation::NotPositive { name: "J^tau", .. }]
                ));
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn policy_validation() {
        assert!(SynthesisPolicy::new(1.1, 0.5).is_err());
        assert!(SynthesisPolicy::new(0.5, 1.0).is_err());
        assert!(SynthesisPolicy::new(0.5, 0.0).is_err());
    }

    #[test]
    fn profile_csv() {
        let m = jitter_margin(
            &tf(&[1.0], &[1.0, 1.0]),
            &SweepConfig {
                grid_points: 3,
                ..Default::default()
            },
        )
        .unwrap();
        let mut buf = Vec::new();
        m.write_profile_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("omega,bound"));
        assert_eq!(text.lines().count(), 4);
    }
}
