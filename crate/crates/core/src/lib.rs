//! Co-design toolkit for networked control loops under timing jitter.
//!
//! * [`lti`]: transfer functions, closed loops, poles and realizations.
//! * [`jitter`]: hardware, software and Markov-modulated network jitter models.
//! * [`contract`]: timing-tolerance contracts and trace verification.
//! * [`margin`]: jitter margins and contract synthesis.
//! * [`mealy`]: the channel-state switching controller.
//! * [`sim`]: discrete-event loop simulation and Monte Carlo aggregation.
//! * [`config`] and [`cli`]: the declarative workspace file and the command-line workflows.

// Negated comparisons deliberately send NaN down the rejection path.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod contract;
pub mod jitter;
pub mod lti;
pub mod margin;
pub mod mealy;
pub mod sim;

pub use contract::{ContractVerdict, TimingRecord, TimingTrace, TolcContract};
pub use jitter::{
    composite_stats, CompositeJitterStats, DelayDistribution, HardwareJitter, MarkovDelayModel, SoftwareJitter,
};
pub use lti::{Polynomial, StateSpace, TransferFunction};
pub use margin::{jitter_margin, margin_per_state, synthesize_contract, MarginResult, SweepConfig, SynthesisPolicy};
pub use mealy::{DiscreteController, MealySwitchingController};
pub use sim::{monte_carlo, run, Reference, SamplingJitter, Scenario, SimResult};
