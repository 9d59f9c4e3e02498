//! False-alarm rate of a pointwise 3-standard-error band on the initial
//! squared error, where the exact mean is known (`w = 0`, so `E[e²] = ⟨f(x)²⟩`).
//!
//! ```text
//! cargo run --release -p satlms-core --example se_calibration
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use satlms_core::{closed_form_moments, MacroState, Nonlinearity};

const TRIALS: usize = 200;
const REPLICATES: usize = 20_000;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cases = [
        Nonlinearity::saturation(0.5),
        Nonlinearity::saturation(2.0),
        Nonlinearity::dead_zone(1.0),
        Nonlinearity::dead_zone(2.0),
    ];
    println!("nonlinearity,false_alarm_rate,nominal");
    for nl in cases {
        let exact = closed_form_moments(&nl, 1.0, 1.0, MacroState::ZERO).expect("valid state").fx2;
        let mut alarms = 0usize;
        let mut sample = vec![0.0f64; TRIALS];
        for _ in 0..REPLICATES {
            for v in sample.iter_mut() {
                let x: f64 = StandardNormal.sample(&mut rng);
                *v = nl.apply(x).powi(2);
            }
            let mean = sample.iter().sum::<f64>() / TRIALS as f64;
            let var = sample.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (TRIALS - 1) as f64;
            if (mean - exact).abs() > 3.0 * (var / TRIALS as f64).sqrt() {
                alarms += 1;
            }
        }
        println!("{nl},{:.4},0.0027", alarms as f64 / REPLICATES as f64);
    }
}
