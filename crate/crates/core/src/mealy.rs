//! Switching controller as a Mealy machine with I/O interface functions.
//!
//! The machine's mode is the channel-loading state; its output function looks up
//! the discrete controller for that mode and advances it one sample. Each mode
//! keeps its own difference-equation memory across switches.

use std::collections::VecDeque;

use thiserror::Error;

use crate::jitter::MarkovDelayModel;
use crate::lti::{LtiError, Polynomial, TransferFunction};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MealyError {
    #[error("unknown channel state {0:?}")]
    UnknownChannelState(String),
    #[error("channel state {0:?} has no controller in the bank")]
    MissingMode(String),
    #[error("invalid controller: {0}")]
    InvalidController(String),
    #[error(transparent)]
    Lti(#[from] LtiError),
}

/// Difference equation `u_k = sum_i b_i e_{k-i} - sum_j a_j u_{k-j}` with
/// `feedback = [a_1, .., a_n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteController {
    feedforward: Vec<f64>,
    feedback: Vec<f64>,
    h: f64,
}

/// Past errors and outputs of one difference equation, most recent first.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ControllerMemory {
    errors: VecDeque<f64>,
    outputs: VecDeque<f64>,
}

impl ControllerMemory {
    pub fn is_zero(&self) -> bool {
        self.errors.iter().chain(&self.outputs).all(|v| *v == 0.0)
    }
}

impl DiscreteController {
    pub fn new(feedforward: Vec<f64>, feedback: Vec<f64>, h: f64) -> Result<Self, MealyError> {
        if feedforward.is_empty() {
            return Err(MealyError::InvalidController("empty feedforward coefficients".into()));
        }
        if feedforward.iter().chain(&feedback).any(|c| !c.is_finite()) {
            return Err(MealyError::InvalidController("non-finite coefficient".into()));
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(MealyError::InvalidController(format!(
                "sample period {h} must be positive"
            )));
        }
        Ok(Self {
            feedforward,
            feedback,
            h,
        })
    }

    /// Static gain `u_k = k e_k`.
    pub fn gain(k: f64, h: f64) -> Result<Self, MealyError> {
        Self::new(vec![k], Vec::new(), h)
    }

    /// Bilinear (trapezoidal) discretization `s <- (2/h)(z-1)/(z+1)`.
    pub fn discretize(c: &TransferFunction, h: f64) -> Result<Self, MealyError> {
        if !c.is_proper() {
            return Err(LtiError::ImproperTransferFunction {
                num_degree: c.num().degree(),
                den_degree: c.den().degree(),
            }
            .into());
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(MealyError::InvalidController(format!(
                "sample period {h} must be positive"
            )));
        }
        let n = c.den().degree();
        let k = 2.0 / h;
        let z_minus = Polynomial::new(vec![-1.0, 1.0]);
        let z_plus = Polynomial::new(vec![1.0, 1.0]);
        // p(s) * (z+1)^n with s substituted, as a polynomial in z.
        let map = |p: &Polynomial| {
            let mut acc = Polynomial::zero();
            for i in 0..=n {
                let coeff = p.coeff(i);
                if coeff == 0.0 {
                    continue;
                }
                let mut term = Polynomial::constant(coeff * k.powi(i as i32));
                for _ in 0..i {
                    term = &term * &z_minus;
                }
                for _ in i..n {
                    term = &term * &z_plus;
                }
                acc = &acc + &term;
            }
            acc
        };
        let num_z = map(c.num());
        let den_z = map(c.den());
        let lead = den_z.coeff(n);
        // Coefficient of z^(n-i) becomes the coefficient of z^-i.
        let feedforward = (0..=n).map(|i| num_z.coeff(n - i) / lead).collect();
        let feedback = (1..=n).map(|i| den_z.coeff(n - i) / lead).collect();
        Self::new(feedforward, feedback, h)
    }

    pub fn feedforward(&self) -> &[f64] {
        &self.feedforward
    }

    pub fn feedback(&self) -> &[f64] {
        &self.feedback
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn is_static(&self) -> bool {
        self.feedforward.len() == 1 && self.feedback.is_empty()
    }

    /// Steady-state gain `sum b / (1 + sum a)`, `None` for integrating controllers.
    pub fn dc_gain(&self) -> Option<f64> {
        let den = 1.0 + self.feedback.iter().sum::<f64>();
        (den != 0.0).then(|| self.feedforward.iter().sum::<f64>() / den)
    }

    pub fn zero_memory(&self) -> ControllerMemory {
        ControllerMemory {
            errors: VecDeque::from(vec![0.0; self.feedforward.len() - 1]),
            outputs: VecDeque::from(vec![0.0; self.feedback.len()]),
        }
    }

    /// Advance one sample with error `e`; returns the new output.
    pub fn step(&self, memory: &mut ControllerMemory, e: f64) -> f64 {
        let mut u = self.feedforward[0] * e;
        for (b, past) in self.feedforward[1..].iter().zip(&memory.errors) {
            u += b * past;
        }
        for (a, past) in self.feedback.iter().zip(&memory.outputs) {
            u -= a * past;
        }
        if !memory.errors.is_empty() {
            memory.errors.pop_back();
            memory.errors.push_front(e);
        }
        if !memory.outputs.is_empty() {
            memory.outputs.pop_back();
            memory.outputs.push_front(u);
        }
        u
    }
}

/// Mutable part of the machine: per-mode memories, the active mode and the
/// last observed inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct MachineState {
    pub memories: Vec<ControllerMemory>,
    pub active_mode: usize,
    pub last_delay: Option<f64>,
    pub last_output: f64,
}

/// Sensor-read binding of the machine.
pub trait SensorPort {
    fn read(&mut self) -> f64;
}

/// Actuator-write binding of the machine.
pub trait ActuatorPort {
    fn write(&mut self, command: f64);
}

/// Mealy machine whose modes are channel-loading states, dispatching to a
/// per-mode discrete controller (lookup-table switching).
#[derive(Debug, Clone, PartialEq)]
pub struct MealySwitchingController {
    id: String,
    bank: Vec<(String, DiscreteController)>,
    initial_mode: usize,
    reference: f64,
}

impl MealySwitchingController {
    pub const INPUTS: [&'static str; 4] = ["sensor_sample", "channel_state", "delay_sample", "reference"];
    pub const OUTPUTS: [&'static str; 1] = ["actuation_command"];

    pub fn new(
        id: impl Into<String>,
        bank: Vec<(String, DiscreteController)>,
        initial_mode: &str,
    ) -> Result<Self, MealyError> {
        if bank.is_empty() {
            return Err(MealyError::InvalidController("empty controller bank".into()));
        }
        let initial_mode = bank
            .iter()
            .position(|(label, _)| label == initial_mode)
            .ok_or_else(|| MealyError::UnknownChannelState(initial_mode.to_string()))?;
        Ok(Self {
            id: id.into(),
            bank,
            initial_mode,
            reference: 0.0,
        })
    }

    /// Discretize a bank of continuous-time controllers at period `h`.
    pub fn from_continuous(
        id: impl Into<String>,
        bank: &[(String, TransferFunction)],
        initial_mode: &str,
        h: f64,
    ) -> Result<Self, MealyError> {
        let discrete = bank
            .iter()
            .map(|(label, c)| Ok((label.clone(), DiscreteController::discretize(c, h)?)))
            .collect::<Result<Vec<_>, MealyError>>()?;
        Self::new(id, discrete, initial_mode)
    }

    /// Regulation setpoint used by [`step`](Self::step).
    pub fn with_reference(mut self, reference: f64) -> Self {
        self.reference = reference;
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn bank(&self) -> &[(String, DiscreteController)] {
        &self.bank
    }

    pub fn reference(&self) -> f64 {
        self.reference
    }

    pub fn initial_mode(&self) -> &str {
        &self.bank[self.initial_mode].0
    }

    pub fn mode_index(&self, label: &str) -> Option<usize> {
        self.bank.iter().position(|(l, _)| l == label)
    }

    /// Every channel state of `model` must have a controller.
    pub fn check_covers(&self, model: &MarkovDelayModel) -> Result<(), MealyError> {
        match model.states().iter().find(|s| self.mode_index(s).is_none()) {
            Some(missing) => Err(MealyError::MissingMode(missing.clone())),
            None => Ok(()),
        }
    }

    /// Zeroed memories, initial mode active.
    pub fn initialize(&self) -> MachineState {
        MachineState {
            memories: self.bank.iter().map(|(_, c)| c.zero_memory()).collect(),
            active_mode: self.initial_mode,
            last_delay: None,
            last_output: 0.0,
        }
    }

    /// Output function with the machine's own reference.
    pub fn step(
        &self,
        state: MachineState,
        sensor_sample: f64,
        channel_state: &str,
        delay_sample: f64,
    ) -> Result<(f64, MachineState), MealyError> {
        let mode = self
            .mode_index(channel_state)
            .ok_or_else(|| MealyError::UnknownChannelState(channel_state.to_string()))?;
        Ok(self.step_mode(state, sensor_sample, mode, delay_sample, self.reference))
    }

    /// Output function keyed by bank index and an explicit reference value.
    ///
    /// Panics if `mode` is out of range.
    pub fn step_mode(
        &self,
        mut state: MachineState,
        sensor_sample: f64,
        mode: usize,
        delay_sample: f64,
        reference: f64,
    ) -> (f64, MachineState) {
        let error = reference - sensor_sample;
        let u = self.bank[mode].1.step(&mut state.memories[mode], error);
        state.active_mode = mode;
        state.last_delay = Some(delay_sample);
        state.last_output = u;
        (u, state)
    }

    /// One full machine cycle: sample through the sensor binding, compute, and
    /// write through the actuator binding.
    pub fn cycle<S: SensorPort, A: ActuatorPort>(
        &self,
        state: MachineState,
        sensor: &mut S,
        actuator: &mut A,
        channel_state: &str,
        delay_sample: f64,
    ) -> Result<MachineState, MealyError> {
        let y = sensor.read();
        let (u, next) = self.step(state, y, channel_state, delay_sample)?;
        actuator.write(u);
        Ok(next)
    }
}
