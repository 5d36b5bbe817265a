mod common;

use proptest::prelude::*;
use tolc::jitter::CompositeJitterStats;
use tolc::margin::{
    effective_period_bound, jitter_margin, synthesize_contract, SweepConfig, Synthesis, SynthesisPolicy,
    SynthesisRequest,
};
use tolc::TransferFunction;

use common::tf;

/// Stable second-order loops `w^2 / (s^2 + 2 z w s + w^2)`.
fn second_order() -> impl Strategy<Value = TransferFunction> {
    (0.1..2.0f64, 0.1..20.0f64).prop_map(|(z, w)| tf(&[w * w], &[w * w, 2.0 * z * w, 1.0]))
}

fn loop_with_gain(k: f64) -> TransferFunction {
    TransferFunction::closed_loop(&tf(&[1.0], &[0.0, 1.0]), &TransferFunction::gain(k)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn result_is_a_lower_envelope(t in second_order(), probes in prop::collection::vec(-3.0..6.0f64, 50)) {
        let m = jitter_margin(&t, &SweepConfig::default()).unwrap();
        for (w, bound) in &m.profile {
            prop_assert!(m.j_max <= bound + 1e-8);
            let direct = 1.0 / (t.evaluate(*w).unwrap().norm() * w);
            prop_assert!((direct - bound).abs() <= 1e-9 * direct.max(1.0));
        }
        for e in probes {
            let w = 10f64.powf(e);
            prop_assert!(m.j_max <= 1.0 / (t.evaluate(w).unwrap().norm() * w) + 1e-8);
        }
    }

    #[test]
    fn feasible_synthesis_validates(
        k in 0.2..5.0f64,
        rho in 0.05..0.95f64,
        gamma in 0.1..1.0f64,
        h in 0.5..20.0f64,
        tau_frac in 0.01..0.9f64,
        sigma_frac in 0.0..1.2f64,
    ) {
        let plant = tf(&[1.0], &[0.0, 1.0]);
        let bank = vec![("only".to_string(), TransferFunction::gain(k))];
        let j_total = gamma / k;
        let req = SynthesisRequest {
            machine_id: "M",
            plant: &plant,
            bank: &bank,
            stats: CompositeJitterStats { sigma_t: sigma_frac * j_total, mu_t: 0.0 },
            h,
            tau: tau_frac * h,
            policy: SynthesisPolicy::new(rho, gamma).unwrap(),
            sweep: SweepConfig::default(),
        };
        match synthesize_contract(&req).unwrap() {
            Synthesis::Feasible { contract, .. } => {
                prop_assert!(contract.validate_parameters().is_empty());
                prop_assert!((contract.j_h + contract.j_tau - j_total).abs() < 1e-6);
            }
            Synthesis::Infeasible { report, .. } => {
                prop_assert!(report.jitter_exceeds_margin.is_some() || !report.violations.is_empty());
                prop_assert!(report.min_period_exclusive > 0.0);
            }
        }
    }

    #[test]
    fn period_bound_increases(j in 0.0..10.0f64, h in 0.01..10.0f64, d in 1e-6..1.0f64) {
        prop_assert!(effective_period_bound(j + d, h) > effective_period_bound(j, h));
        prop_assert!(effective_period_bound(j, h + d) > effective_period_bound(j, h));
    }
}

#[test]
fn gain_family_is_reciprocal() {
    for k in [0.5, 1.0, 2.0, 5.0] {
        let m = jitter_margin(&loop_with_gain(k), &SweepConfig::default()).unwrap();
        assert!((m.j_max - 1.0 / k).abs() <= 1e-6, "K = {k}: {}", m.j_max);
    }
}

#[test]
fn frequency_scaling_divides_the_margin() {
    // T(s/a) runs a times faster, so it tolerates a times less jitter.
    let t = tf(&[1.0], &[1.0, 1.0, 1.0]);
    let base = jitter_margin(&t, &SweepConfig::default()).unwrap().j_max;
    for a in [0.1, 10.0] {
        let scaled = jitter_margin(&t.scale_frequency(a).unwrap(), &SweepConfig::default()).unwrap();
        assert!((scaled.j_max * a - base).abs() <= 1e-6, "a = {a}: {}", scaled.j_max);
    }
}

#[test]
fn second_order_peak() {
    let m = jitter_margin(&tf(&[1.0], &[1.0, 1.0, 1.0]), &SweepConfig::default()).unwrap();
    assert!((m.j_max - 1.0).abs() <= 1e-6);
    assert!((m.omega_star - 1.0).abs() <= 1e-3);
}
