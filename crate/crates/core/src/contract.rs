//! Timing-tolerance contracts `(M, h, tau, J^h, J^tau)` and verification of
//! timing traces against them.
//!
//! A contract admits sample `k` when the sampling instant lies in
//! `[kh, kh + J^h]`, the actuation instant lies in
//! `[t_s + tau - J^tau, t_s + tau + J^tau]`, and the state update of sample `k`
//! completes before the next sampling instant.

use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute slack on closed-interval membership, in seconds.
pub const WINDOW_SLACK: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ContractError {
    #[error("invalid contract: {}", join(.0))]
    InvalidContract(Vec<ParameterViolation>),
    #[error("malformed trace: {0}")]
    MalformedTrace(String),
    #[error("trace I/O: {0}")]
    Csv(#[from] csv::Error),
}

fn join(v: &[ParameterViolation]) -> String {
    v.iter().map(|p| p.to_string()).collect::<Vec<_>>().join("; ")
}

/// One broken constraint among positivity, `J^tau <= tau` and `J^h + tau + J^tau < h`.
#[derive(Debug, Clone, PartialEq)]
pub enum ParameterViolation {
    NotPositive { name: &'static str, value: f64 },
    DelayJitterExceedsDelay { j_tau: f64, tau: f64 },
    PeriodBudgetExceeded { budget: f64, h: f64 },
}

impl fmt::Display for ParameterViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NotPositive { name, value } => write!(f, "{name} = {value} is not strictly positive"),
            Self::DelayJitterExceedsDelay { j_tau, tau } => write!(f, "J^tau = {j_tau} exceeds tau = {tau}"),
            Self::PeriodBudgetExceeded { budget, h } => {
                write!(f, "J^h + tau + J^tau = {budget} is not below h = {h}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TolcContract {
    /// Identifier of the controller state machine the contract binds.
    pub machine_id: String,
    pub h: f64,
    pub tau: f64,
    pub j_h: f64,
    pub j_tau: f64,
}

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, t: f64) -> bool {
        t >= self.lo - WINDOW_SLACK && t <= self.hi + WINDOW_SLACK
    }
}

/// Windows that sample `k` must respect.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmissibleWindows {
    pub k: u64,
    pub sampling: Interval,
    /// Earliest admissible next sampling instant, `(k+1) h`.
    pub state_update_deadline: f64,
    tau: f64,
    j_tau: f64,
}

impl AdmissibleWindows {
    /// Actuation window for a realized sampling instant.
    pub fn actuation(&self, t_s: f64) -> Interval {
        Interval {
            lo: t_s + self.tau - self.j_tau,
            hi: t_s + self.tau + self.j_tau,
        }
    }
}

impl TolcContract {
    pub fn new(machine_id: impl Into<String>, h: f64, tau: f64, j_h: f64, j_tau: f64) -> Self {
        Self {
            machine_id: machine_id.into(),
            h,
            tau,
            j_h,
            j_tau,
        }
    }

    /// Every violated constraint; empty when the contract is valid.
    pub fn validate_parameters(&self) -> Vec<ParameterViolation> {
        let mut out = Vec::new();
        for (name, value) in [
            ("h", self.h),
            ("tau", self.tau),
            ("J^h", self.j_h),
            ("J^tau", self.j_tau),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                out.push(ParameterViolation::NotPositive { name, value });
            }
        }
        if !(self.j_tau <= self.tau) {
            out.push(ParameterViolation::DelayJitterExceedsDelay {
                j_tau: self.j_tau,
                tau: self.tau,
            });
        }
        let budget = self.j_h + self.tau + self.j_tau;
        if !(budget < self.h) {
            out.push(ParameterViolation::PeriodBudgetExceeded { budget, h: self.h });
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.validate_parameters().is_empty()
    }

    fn ensure_valid(&self) -> Result<(), ContractError> {
        let v = self.validate_parameters();
        if v.is_empty() {
            Ok(())
        } else {
            Err(ContractError::InvalidContract(v))
        }
    }

    pub fn admissible_windows(&self, k: u64) -> Result<AdmissibleWindows, ContractError> {
        self.ensure_valid()?;
        let start = k as f64 * self.h;
        Ok(AdmissibleWindows {
            k,
            sampling: Interval {
                lo: start,
                hi: start + self.j_h,
            },
            state_update_deadline: (k + 1) as f64 * self.h,
            tau: self.tau,
            j_tau: self.j_tau,
        })
    }

    /// Batch verification: the state update of record `k` is checked against the
    /// realized `t_s` of record `k+1`, and the last record against `(k+1) h`.
    pub fn check_trace(&self, trace: &TimingTrace) -> Result<ContractVerdict, ContractError> {
        self.ensure_valid()?;
        let records = trace.records();
        let mut violations = Vec::new();
        for (i, rec) in records.iter().enumerate() {
            let next = records.get(i + 1).map(|r| r.t_s);
            self.check_record(rec, next, &mut violations);
        }
        Ok(ContractVerdict::from_violations(violations))
    }

    fn check_record(&self, rec: &TimingRecord, next_sample: Option<f64>, out: &mut Vec<Violation>) {
        let w = self.admissible_windows(rec.k).expect("contract validated by caller");
        if !w.sampling.contains(rec.t_s) {
            out.push(Violation {
                k: rec.k,
                kind: ViolationKind::SamplingWindow,
                observed: rec.t_s,
                allowed: w.sampling,
            });
        }
        let act = w.actuation(rec.t_s);
        if !act.contains(rec.t_a) {
            out.push(Violation {
                k: rec.k,
                kind: ViolationKind::ActuationWindow,
                observed: rec.t_a,
                allowed: act,
            });
        }
        let deadline = next_sample.unwrap_or(w.state_update_deadline);
        if rec.t_u >= deadline {
            out.push(Violation {
                k: rec.k,
                kind: ViolationKind::StateUpdateDeadline,
                observed: rec.t_u,
                allowed: Interval {
                    lo: rec.t_s,
                    hi: deadline,
                },
            });
        }
    }
}

impl fmt::Display for TolcContract {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "TOLC({}, h = {}, tau = {}, J^h = {}, J^tau = {})",
            self.machine_id, self.h, self.tau, self.j_h, self.j_tau
        )
    }
}

/// Online verifier: each record is judged as it arrives, using the conservative
/// state-update deadline `(k+1) h` because the next sampling instant is not yet known.
#[derive(Debug, Clone)]
pub struct StreamingVerifier {
    contract: TolcContract,
    next_k: u64,
    violations: Vec<Violation>,
}

impl StreamingVerifier {
    pub fn new(contract: TolcContract) -> Result<Self, ContractError> {
        contract.ensure_valid()?;
        Ok(Self {
            contract,
            next_k: 0,
            violations: Vec::new(),
        })
    }

    /// Checks one record and returns the violations it produced.
    pub fn push(&mut self, rec: TimingRecord) -> Result<&[Violation], ContractError> {
        if rec.k != self.next_k {
            return Err(ContractError::MalformedTrace(format!(
                "expected sample {}, got {}",
                self.next_k, rec.k
            )));
        }
        rec.check_causal()?;
        let before = self.violations.len();
        self.contract.check_record(&rec, None, &mut self.violations);
        self.next_k += 1;
        Ok(&self.violations[before..])
    }

    pub fn finish(self) -> ContractVerdict {
        ContractVerdict::from_violations(self.violations)
    }
}

/// One sample's timing: sampling, actuation and state-update completion instants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub k: u64,
    pub t_s: f64,
    pub t_a: f64,
    pub t_u: f64,
}

impl TimingRecord {
    fn check_causal(&self) -> Result<(), ContractError> {
        let finite = self.t_s.is_finite() && self.t_a.is_finite() && self.t_u.is_finite();
        if !finite || self.t_a < self.t_s || self.t_u < self.t_s {
            return Err(ContractError::MalformedTrace(format!(
                "record {} is not causal: t_s = {}, t_a = {}, t_u = {}",
                self.k, self.t_s, self.t_a, self.t_u
            )));
        }
        Ok(())
    }
}

/// Records indexed `0, 1, 2, ...` without gaps, each causal.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TimingTrace {
    records: Vec<TimingRecord>,
}

impl TimingTrace {
    pub fn new(records: Vec<TimingRecord>) -> Result<Self, ContractError> {
        for (i, rec) in records.iter().enumerate() {
            if rec.k != i as u64 {
                return Err(ContractError::MalformedTrace(format!(
                    "record {i} has index {}, expected {i}",
                    rec.k
                )));
            }
            rec.check_causal()?;
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[TimingRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Parse a `k,t_s,t_a,t_u` CSV.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, ContractError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["k", "t_s", "t_a", "t_u"] {
            return Err(ContractError::MalformedTrace(format!(
                "expected header k,t_s,t_a,t_u, got {}",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let records = rdr
            .deserialize()
            .collect::<Result<Vec<TimingRecord>, _>>()
            .map_err(|e| ContractError::MalformedTrace(e.to_string()))?;
        Self::new(records)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), ContractError> {
        let mut w = csv::Writer::from_writer(writer);
        for rec in &self.records {
            w.serialize(rec)?;
        }
        if self.records.is_empty() {
            w.write_record(["k", "t_s", "t_a", "t_u"])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ViolationKind {
    SamplingWindow,
    ActuationWindow,
    StateUpdateDeadline,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::SamplingWindow => "SamplingWindow",
            Self::ActuationWindow => "ActuationWindow",
            Self::StateUpdateDeadline => "StateUpdateDeadline",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    pub k: u64,
    pub kind: ViolationKind,
    pub observed: f64,
    pub allowed: Interval,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ContractVerdict {
    violations: Vec<Violation>,
}

impl ContractVerdict {
    fn from_violations(violations: Vec<Violation>) -> Self {
        Self { violations }
    }

    pub fn satisfied(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn violations(&self) -> &[Violation] {
        &self.violations
    }

    /// `k,kind,observed,allowed_lo,allowed_hi`, one row per violation.
    pub fn write_violations_csv<W: Write>(&self, writer: W) -> Result<(), ContractError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["k", "kind", "observed", "allowed_lo", "allowed_hi"])?;
        for v in &self.violations {
            w.write_record([
                v.k.to_string(),
                v.kind.to_string(),
                v.observed.to_string(),
                v.allowed.lo.to_string(),
                v.allowed.hi.to_string(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Human-readable summary.
    pub fn report(&self, contract: &TolcContract, records: usize) -> String {
        let mut s = format!("contract: {contract}\nrecords: {records}\n");
        if self.satisfied() {
            s.push_str("verdict: SATISFIED\n");
        } else {
            s.push_str(&format!("verdict: VIOLATED ({} violations)\n", self.violations.len()));
            for v in &self.violations {
                let allowed = match v.kind {
                    ViolationKind::StateUpdateDeadline => format!("[{}, {})", v.allowed.lo, v.allowed.hi),
                    _ => format!("[{}, {}]", v.allowed.lo, v.allowed.hi),
                };
                s.push_str(&format!(
                    "  k = {}: {} observed {} allowed {}\n",
                    v.k, v.kind, v.observed, allowed
                ));
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MS: f64 = 1e-3;

    fn contract(h: f64, tau: f64, j_h: f64, j_tau: f64) -> TolcContract {
        TolcContract::new("M", h * MS, tau * MS, j_h * MS, j_tau * MS)
    }

    fn rec(k: u64, t_s: f64, t_a: f64, t_u: f64) -> TimingRecord {
        TimingRecord {
            k,
            t_s: t_s * MS,
            t_a: t_a * MS,
            t_u: t_u * MS,
        }
    }

    #[test]
    fn validate_examples() {
        assert!(contract(10.0, 2.0, 1.0, 1.0).validate_parameters().is_empty());
        assert!(matches!(
            contract(4.0, 2.0, 1.0, 1.0).validate_parameters().as_slice(),
            [ParameterViolation::PeriodBudgetExceeded { .. }]
        ));
        assert!(matches!(
            contract(10.0, 2.0, 1.0, 3.0).validate_parameters().as_slice(),
            [ParameterViolation::DelayJitterExceedsDelay { .. }]
        ));
        let v = contract(-1.0, 0.0, 1.0, 1.0).validate_parameters();
        assert!(v.len() >= 3, "{v:?}");
    }

    #[test]
    fn window_examples() {
        let c = contract(10.0, 2.0, 1.0, 1.0);
        let w = c.admissible_windows(3).unwrap();
        assert!((w.sampling.lo - 30.0 * MS).abs() < 1e-15 && (w.sampling.hi - 31.0 * MS).abs() < 1e-15);
        let a = w.actuation(30.5 * MS);
        assert!((a.lo - 31.5 * MS).abs() < 1e-15 && (a.hi - 33.5 * MS).abs() < 1e-15);
        let w0 = c.admissible_windows(0).unwrap();
        assert_eq!((w0.sampling.lo, w0.sampling.hi), (0.0, 1.0 * MS));
        assert!((w0.state_update_deadline - 10.0 * MS).abs() < 1e-15);
        assert!(matches!(
            contract(4.0, 2.0, 1.0, 1.0).admissible_windows(0),
            Err(ContractError::InvalidContract(_))
        ));
    }

    #[test]
    fn check_trace_examples() {
        let c = contract(10.0, 2.0, 1.0, 1.0);
        let ok = TimingTrace::new(vec![rec(0, 0.5, 2.7, 3.0), rec(1, 10.2, 12.1, 12.4)]).unwrap();
        assert!(c.check_trace(&ok).unwrap().satisfied());

        let late = TimingTrace::new(vec![rec(0, 0.5, 2.7, 3.0), rec(1, 11.5, 13.4, 12.4)]).unwrap();
        let v = c.check_trace(&late).unwrap();
        assert_eq!(v.violations().len(), 1);
        assert_eq!(v.violations()[0].k, 1);
        assert_eq!(v.violations()[0].kind, ViolationKind::SamplingWindow);
        assert!((v.violations()[0].allowed.hi - 11.0 * MS).abs() < 1e-15);

        let slow = TimingTrace::new(vec![rec(0, 0.5, 3.6, 3.0), rec(1, 10.2, 12.1, 12.4)]).unwrap();
        let v = c.check_trace(&slow).unwrap();
        assert_eq!(v.violations().len(), 1);
        assert_eq!(v.violations()[0].kind, ViolationKind::ActuationWindow);
        assert!((v.violations()[0].allowed.lo - 1.5 * MS).abs() < 1e-15);
        assert!((v.violations()[0].allowed.hi - 3.5 * MS).abs() < 1e-15);
    }

    #[test]
    fn boundaries_are_closed() {
        let c = contract(10.0, 2.0, 1.0, 1.0);
        let t = TimingTrace::new(vec![rec(0, 1.0, 4.0, 9.0)]).unwrap();
        assert!(c.check_trace(&t).unwrap().satisfied());
    }

    #[test]
    fn state_update_deadline_uses_realized_next_sample() {
        let c = contract(10.0, 2.0, 1.0, 1.0);
        // t_u^0 = 10.1ms is before the realized t_s^1 = 10.5ms: fine offline.
        let t = TimingTrace::new(vec![rec(0, 0.5, 2.5, 10.1), rec(1, 10.5, 12.5, 12.6)]).unwrap();
        assert!(c.check_trace(&t).unwrap().satisfied());
        // The streaming verifier only knows (k+1)h = 10ms and flags it.
        let mut online = StreamingVerifier::new(c.clone()).unwrap();
        assert_eq!(online.push(t.records()[0]).unwrap().len(), 1);
        assert!(online.push(t.records()[1]).unwrap().is_empty());
        let verdict = online.finish();
        assert_eq!(verdict.violations()[0].kind, ViolationKind::StateUpdateDeadline);
    }

    #[test]
    fn malformed_traces() {
        assert!(matches!(
            TimingTrace::new(vec![rec(1, 0.0, 1.0, 1.0)]),
            Err(ContractError::MalformedTrace(_))
        ));
        assert!(matches!(
            TimingTrace::new(vec![rec(0, 2.0, 1.0, 3.0)]),
            Err(ContractError::MalformedTrace(_))
        ));
        assert!(TimingTrace::read_csv("k,t_a,t_s,t_u\n0,1,0,1\n".as_bytes()).is_err());
        assert!(TimingTrace::read_csv("k,t_s,t_a,t_u\n0,x,0,1\n".as_bytes()).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let t = TimingTrace::new(vec![rec(0, 0.5, 2.7, 3.0), rec(1, 10.2, 12.1, 12.4)]).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().starts_with("k,t_s,t_a,t_u\n"));
        assert_eq!(TimingTrace::read_csv(buf.as_slice()).unwrap(), t);
    }

    #[test]
    fn violations_csv_and_report() {
        let c = contract(10.0, 2.0, 1.0, 1.0);
        let t = TimingTrace::new(vec![rec(0, 0.5, 3.6, 3.0)]).unwrap();
        let v = c.check_trace(&t).unwrap();
        let mut buf = Vec::new();
        v.write_violations_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.lines().nth(1).unwrap().starts_with("0,ActuationWindow,"));
        assert!(v.report(&c, 1).contains("VIOLATED"));
    }
}
