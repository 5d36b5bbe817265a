use proptest::prelude::*;
use tolc::mealy::{DiscreteController, MealySwitchingController};
use tolc::TransferFunction;

fn switching(bank: Vec<(&str, DiscreteController)>) -> MealySwitchingController {
    let first = bank[0].0.to_string();
    MealySwitchingController::new("M", bank.into_iter().map(|(l, c)| (l.to_string(), c)).collect(), &first).unwrap()
}

fn fir(taps: &[f64]) -> DiscreteController {
    DiscreteController::new(taps.to_vec(), vec![], 0.1).unwrap()
}

fn lag() -> DiscreteController {
    DiscreteController::discretize(&TransferFunction::from_coeffs(&[2.0], &[2.0, 1.0]).unwrap(), 0.1).unwrap()
}

proptest! {
    #[test]
    fn identical_inputs_identical_outputs(inputs in prop::collection::vec((-5.0..5.0f64, any::<bool>()), 1..50)) {
        let m = switching(vec![("Low", lag()), ("High", fir(&[1.0, -0.5]))]);
        let drive = || {
            let mut s = m.initialize();
            inputs
                .iter()
                .map(|&(y, high)| {
                    let (u, next) = m.step(s.clone(), y, if high { "High" } else { "Low" }, 0.0).unwrap();
                    s = next;
                    u.to_bits()
                })
                .collect::<Vec<_>>()
        };
        prop_assert_eq!(drive(), drive());
    }

    #[test]
    fn single_entry_bank_is_the_plain_controller(ys in prop::collection::vec(-5.0..5.0f64, 1..50)) {
        let c = lag();
        let m = switching(vec![("only", c.clone())]);
        let mut mem = c.zero_memory();
        let mut s = m.initialize();
        for y in ys {
            let (u, next) = m.step(s, y, "only", 0.0).unwrap();
            s = next;
            prop_assert_eq!(u.to_bits(), c.step(&mut mem, -y).to_bits());
        }
    }

    #[test]
    fn modes_keep_separate_memory(inputs in prop::collection::vec((-5.0..5.0f64, any::<bool>()), 1..50)) {
        let (a, b) = (fir(&[1.0, 0.5, -0.25]), fir(&[2.0, -1.0]));
        let m = switching(vec![("A", a.clone()), ("B", b.clone())]);
        let mut s = m.initialize();
        let (mut mem_a, mut mem_b) = (a.zero_memory(), b.zero_memory());
        for (y, use_b) in inputs {
            let (u, next) = m.step(s, y, if use_b { "B" } else { "A" }, 0.0).unwrap();
            s = next;
            let alone = if use_b { b.step(&mut mem_b, -y) } else { a.step(&mut mem_a, -y) };
            prop_assert_eq!(u.to_bits(), alone.to_bits());
        }
    }

    #[test]
    fn static_banks_are_memoryless(history in prop::collection::vec(-5.0..5.0f64, 0..20), y in -5.0..5.0f64) {
        let m = switching(vec![("Low", DiscreteController::gain(2.0, 0.1).unwrap()), ("High", DiscreteController::gain(1.0, 0.1).unwrap())]);
        let mut s = m.initialize();
        for h in history {
            s = m.step(s, h, "High", 0.0).unwrap().1;
        }
        prop_assert_eq!(m.step(s, y, "Low", 0.0).unwrap().0, -2.0 * y);
    }
}

#[test]
fn pure_gain_examples() {
    let m = switching(vec![
        ("Low", DiscreteController::gain(2.0, 0.1).unwrap()),
        ("High", DiscreteController::gain(1.0, 0.1).unwrap()),
    ]);
    assert_eq!(m.step(m.initialize(), -0.5, "Low", 0.0).unwrap().0, 1.0);
    assert_eq!(m.step(m.initialize(), -0.5, "High", 0.0).unwrap().0, 0.5);
}
