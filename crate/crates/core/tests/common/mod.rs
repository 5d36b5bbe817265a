#![allow(dead_code)]

use tolc::jitter::{DelayDistribution, HardwareJitter, MarkovDelayModel, SoftwareJitter};
use tolc::mealy::{DiscreteController, MealySwitchingController};
use tolc::sim::{Reference, SamplingJitter, Scenario};
use tolc::{TolcContract, TransferFunction};

pub fn tf(num: &[f64], den: &[f64]) -> TransferFunction {
    TransferFunction::from_coeffs(num, den).unwrap()
}

/// P = 1/s under C = 1: j_max = 1 s. Period 1.5 s and nominal latency 0.5 s keep
/// the sampled loop well damped; every latency lies in [0.34, 0.58] s, inside the
/// synthesized actuation window [0.1, 0.9] s.
pub const TESTBED: &str = r#"
[plant]
num = [1.0]
den = [0.0, 1.0]

[controller]
id = "M"
initial_state = "Low"
[[controller.bank]]
state = "Low"
num = [1.0]
den = [1.0]
[[controller.bank]]
state = "High"
num = [1.0]
den = [1.0]

[markov]
states = ["Low", "High"]
transition = [[0.9, 0.1], [0.2, 0.8]]
[[markov.delays]]
family = "uniform"
min = 0.3
max = 0.4
[[markov.delays]]
family = "uniform"
min = 0.4
max = 0.5

[software]
tau_s = 0.05
j_exec = 0.02

[hardware]
alpha_c = 0.01

[synthesis]
h = 1.5
tau = 0.5
rho = 0.5
gamma = 0.8

[scenario]
duration = 15000.0
seed = 1
reference = { kind = "step", amplitude = 1.0, time = 0.0 }
"#;

/// Testbed contract: the synthesized one for [`TESTBED`].
pub fn testbed_contract() -> TolcContract {
    TolcContract::new("M", 1.5, 0.5, 0.4, 0.4)
}

/// Integrator under a static gain with every timing term jittered inside `contract`.
pub fn jittered_integrator(contract: TolcContract, samples: usize, seed: u64) -> Scenario {
    let h = contract.h;
    let controller = MealySwitchingController::new(
        "M",
        vec![
            ("Low".into(), DiscreteController::gain(1.0, h).unwrap()),
            ("High".into(), DiscreteController::gain(1.0, h).unwrap()),
        ],
        "Low",
    )
    .unwrap();
    let network = MarkovDelayModel::new(
        vec!["Low".into(), "High".into()],
        vec![vec![0.9, 0.1], vec![0.2, 0.8]],
        vec![
            DelayDistribution::uniform(0.3, 0.4).unwrap(),
            DelayDistribution::uniform(0.4, 0.5).unwrap(),
        ],
    )
    .unwrap();
    Scenario {
        plant: tf(&[1.0], &[0.0, 1.0]),
        controller,
        hardware: HardwareJitter::new(0.01).unwrap(),
        software: SoftwareJitter::new(0.05, 0.02).unwrap(),
        network,
        contract,
        reference: Reference::Step {
            amplitude: 1.0,
            time: 0.0,
        },
        duration: samples as f64 * h,
        seed,
        sampling_jitter: SamplingJitter::Uniform,
    }
}

/// Zero-jitter integrator loop with total latency `exec + delay` and gain `k`.
pub fn constant_latency(h: f64, exec: f64, delay: f64, k: f64, samples: usize) -> Scenario {
    let controller = MealySwitchingController::new(
        "M",
        vec![("only".into(), DiscreteController::gain(k, h).unwrap())],
        "only",
    )
    .unwrap();
    let tau = exec + delay;
    Scenario {
        plant: tf(&[1.0], &[0.0, 1.0]),
        controller,
        hardware: HardwareJitter::new(0.0).unwrap(),
        software: SoftwareJitter::new(exec, 0.0).unwrap(),
        network: MarkovDelayModel::single("only", DelayDistribution::fixed(delay).unwrap()).unwrap(),
        contract: TolcContract::new("M", h, tau, tau / 4.0, tau / 4.0),
        reference: Reference::Step {
            amplitude: 1.0,
            time: 0.0,
        },
        duration: samples as f64 * h,
        seed: 0,
        sampling_jitter: SamplingJitter::Zero,
    }
}

/// Sampled outputs of `y' = u` where `u_k = k (r - y_k)` takes effect `tau` after
/// each sampling instant: `y_{k+1} = y_k + tau u_{k-1} + (h - tau) u_k`.
pub fn delayed_integrator_oracle(h: f64, tau: f64, k: f64, r: f64, samples: usize) -> Vec<f64> {
    let mut ys = Vec::with_capacity(samples);
    let (mut y, mut u_prev) = (0.0_f64, 0.0_f64);
    for _ in 0..samples {
        ys.push(y);
        let u = k * (r - y);
        y += tau * u_prev + (h - tau) * u;
        u_prev = u;
    }
    ys
}
