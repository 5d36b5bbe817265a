//! Declarative workspace file (TOML).
//!
//! ```toml
//! output_dir = "out"
//!
//! [plant]
//! num = [1.0]
//! den = [0.0, 1.0]
//!
//! [controller]
//! id = "M"
//! initial_state = "Low"
//! [[controller.bank]]
//! state = "Low"
//! num = [1.0]
//! den = [1.0]
//!
//! [markov]
//! states = ["Low"]
//! transition = [[1.0]]
//! [[markov.delays]]
//! family = "uniform"
//! min = 0.001
//! max = 0.003
//!
//! [software]
//! tau_s = 0.005
//! j_exec = 0.001
//!
//! [hardware]
//! alpha_c = 0.0001
//!
//! [contract]
//! h = 0.1
//! tau = 0.01
//! j_h = 0.005
//! j_tau = 0.005
//!
//! [scenario]
//! duration = 10.0
//! seed = 1
//! reference = { kind = "step", amplitude = 1.0, time = 0.0 }
//! ```
//!
//! All times are in seconds; transfer functions are ascending coefficient arrays.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contract::TolcContract;
use crate::jitter::{DelayDistribution, DelayFamily, HardwareJitter, JitterError, MarkovDelayModel, SoftwareJitter};
use crate::lti::{LtiError, TransferFunction};
use crate::margin::{BankEntry, SweepConfig, SynthesisPolicy};
use crate::mealy::{MealyError, MealySwitchingController};
use crate::sim::{Reference, SamplingJitter, Scenario};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("missing [{0}] section")]
    Missing(&'static str),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Lti(#[from] LtiError),
    #[error(transparent)]
    Jitter(#[from] JitterError),
    #[error(transparent)]
    Mealy(#[from] MealyError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TfSpec {
    pub num: Vec<f64>,
    pub den: Vec<f64>,
}

impl TfSpec {
    pub fn build(&self) -> Result<TransferFunction, ConfigError> {
        Ok(TransferFunction::from_coeffs(&self.num, &self.den)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BankSpec {
    pub state: String,
    pub num: Vec<f64>,
    pub den: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSpec {
    #[serde(default = "default_machine_id")]
    pub id: String,
    pub initial_state: Option<String>,
    pub bank: Vec<BankSpec>,
}

fn default_machine_id() -> String {
    "controller".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelaySpec {
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub min: f64,
    pub max: f64,
    #[serde(default)]
    pub family: DelayFamily,
}

impl DelaySpec {
    fn build(&self, index: usize) -> Result<DelayDistribution, ConfigError> {
        match self.family {
            DelayFamily::Uniform => {
                let base = DelayDistribution::uniform(self.min, self.max)?;
                DelayDistribution::new(
                    self.mean.unwrap_or(base.mean()),
                    self.std.unwrap_or(base.std()),
                    self.min,
                    self.max,
                    DelayFamily::Uniform,
                )
                .map_err(Into::into)
            }
            DelayFamily::TruncatedNormal => {
                let (Some(mean), Some(std)) = (self.mean, self.std) else {
                    return Err(ConfigError::Invalid(format!(
                        "markov.delays[{index}]: truncated_normal needs mean and std"
                    )));
                };
                Ok(DelayDistribution::truncated_normal(mean, std, self.min, self.max)?)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkovSpec {
    pub states: Vec<String>,
    pub transition: Vec<Vec<f64>>,
    pub delays: Vec<DelaySpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SoftwareSpec {
    pub tau_s: f64,
    pub j_exec: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareSpec {
    pub alpha_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContractSpec {
    pub machine_id: Option<String>,
    pub h: f64,
    pub tau: f64,
    pub j_h: f64,
    pub j_tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisSpec {
    pub h: Option<f64>,
    pub tau: Option<f64>,
    pub rho: Option<f64>,
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub reference: Reference,
    #[serde(default)]
    pub sampling_jitter: SamplingJitter,
}

/// Entire workspace file; every section is optional and checked by the
/// accessor that needs it.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkspaceConfig {
    pub output_dir: Option<PathBuf>,
    pub plant: Option<TfSpec>,
    pub controller: Option<ControllerSpec>,
    pub markov: Option<MarkovSpec>,
    pub software: Option<SoftwareSpec>,
    pub hardware: Option<HardwareSpec>,
    pub contract: Option<ContractSpec>,
    pub synthesis: Option<SynthesisSpec>,
    pub margin: Option<SweepConfig>,
    pub scenario: Option<ScenarioSpec>,
}

impl WorkspaceConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text).map_err(|e| match e {
            ConfigError::Parse { message, .. } => ConfigError::Parse {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: PathBuf::new(),
            message: e.to_string(),
        })
    }

    pub fn plant(&self) -> Result<TransferFunction, ConfigError> {
        self.plant.as_ref().ok_or(ConfigError::Missing("plant"))?.build()
    }

    fn controller_spec(&self) -> Result<&ControllerSpec, ConfigError> {
        let spec = self.controller.as_ref().ok_or(ConfigError::Missing("controller"))?;
        if spec.bank.is_empty() {
            return Err(ConfigError::Invalid("controller.bank is empty".into()));
        }
        Ok(spec)
    }

    pub fn machine_id(&self) -> String {
        self.controller
            .as_ref()
            .map_or_else(default_machine_id, |c| c.id.clone())
    }

    /// Continuous-time controller bank in file order.
    pub fn bank(&self) -> Result<Vec<BankEntry>, ConfigError> {
        let spec = self.controller_spec()?;
        let mut out: Vec<BankEntry> = Vec::with_capacity(spec.bank.len());
        for entry in &spec.bank {
            if out.iter().any(|(label, _)| *label == entry.state) {
                return Err(ConfigError::Invalid(format!("duplicate bank state {:?}", entry.state)));
            }
            let tf = TransferFunction::from_coeffs(&entry.num, &entry.den)?;
            out.push((entry.state.clone(), tf));
        }
        Ok(out)
    }

    pub fn network(&self) -> Result<MarkovDelayModel, ConfigError> {
        let spec = self.markov.as_ref().ok_or(ConfigError::Missing("markov"))?;
        let delays = spec
            .delays
            .iter()
            .enumerate()
            .map(|(i, d)| d.build(i))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(MarkovDelayModel::new(
            spec.states.clone(),
            spec.transition.clone(),
            delays,
        )?)
    }

    pub fn software(&self) -> Result<SoftwareJitter, ConfigError> {
        let s = self.software.as_ref().ok_or(ConfigError::Missing("software"))?;
        Ok(SoftwareJitter::new(s.tau_s, s.j_exec)?)
    }

    pub fn hardware(&self) -> Result<HardwareJitter, ConfigError> {
        let s = self.hardware.as_ref().ok_or(ConfigError::Missing("hardware"))?;
        Ok(HardwareJitter::new(s.alpha_c)?)
    }

    pub fn contract(&self) -> Result<TolcContract, ConfigError> {
        let c = self.contract.as_ref().ok_or(ConfigError::Missing("contract"))?;
        Ok(TolcContract::new(
            c.machine_id.clone().unwrap_or_else(|| self.machine_id()),
            c.h,
            c.tau,
            c.j_h,
            c.j_tau,
        ))
    }

    pub fn sweep(&self) -> SweepConfig {
        self.margin.unwrap_or_default()
    }

    /// Synthesis inputs `(h, tau, policy)` after applying flag overrides.
    pub fn synthesis_inputs(
        &self,
        h: Option<f64>,
        tau: Option<f64>,
        rho: Option<f64>,
        gamma: Option<f64>,
    ) -> Result<(f64, f64, SynthesisPolicy), ConfigError> {
        let spec = self.synthesis.as_ref();
        let pick = |flag: Option<f64>, field: fn(&SynthesisSpec) -> Option<f64>| flag.or_else(|| spec.and_then(field));
        let h = pick(h, |s| s.h).ok_or_else(|| ConfigError::Invalid("synthesis.h is required".into()))?;
        let tau = pick(tau, |s| s.tau).ok_or_else(|| ConfigError::Invalid("synthesis.tau is required".into()))?;
        let default = SynthesisPolicy::default();
        let policy = SynthesisPolicy::new(
            pick(rho, |s| s.rho).unwrap_or(default.allocation),
            pick(gamma, |s| s.gamma).unwrap_or(default.safety_factor),
        )
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok((h, tau, policy))
    }

    /// Full simulation scenario; the controller bank is discretized at the contract period.
    pub fn scenario(&self, seed_override: Option<u64>) -> Result<Scenario, ConfigError> {
        let spec = self.scenario.as_ref().ok_or(ConfigError::Missing("scenario"))?;
        let contract = self.contract()?;
        let network = self.network()?;
        let controller_spec = self.controller_spec()?;
        let initial = controller_spec
            .initial_state
            .clone()
            .unwrap_or_else(|| network.states()[0].clone());
        let controller =
            MealySwitchingController::from_continuous(controller_spec.id.clone(), &self.bank()?, &initial, contract.h)?;
        Ok(Scenario {
            plant: self.plant()?,
            controller,
            hardware: self.hardware()?,
            software: self.software()?,
            network,
            contract,
            reference: spec.reference,
            duration: spec.duration,
            seed: seed_override.unwrap_or(spec.seed),
            sampling_jitter: spec.sampling_jitter,
        })
    }
}

/// `[contract]` block suitable for appending to a workspace file.
pub fn contract_block(c: &TolcContract) -> String {
    #[derive(Serialize)]
    struct Block {
        contract: ContractSpec,
    }
    let block = Block {
        contract: ContractSpec {
            machine_id: Some(c.machine_id.clone()),
            h: c.h,
            tau: c.tau,
            j_h: c.j_h,
            j_tau: c.j_tau,
        },
    };
    toml::to_string(&block).expect("contract block serializes")
}
