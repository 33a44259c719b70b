//! Invariants of the full medium -> state -> detection pipeline.

use proptest::prelude::*;
use squeezesim::detection::{self, DetectionChain, PulseShape};
use squeezesim::gaussian::{self, ProbeInput};
use squeezesim::medium::{self, mhz, MediumConfig};

fn medium_strategy() -> impl Strategy<Value = MediumConfig> {
    (0.5f64..4.0, 1.0f64..20.0, -30.0f64..50.0, 0.0f64..1.0).prop_map(|(c, g, d, ratio)| {
        let gamma = mhz(g);
        let coupling = c * gamma / 5e-3;
        MediumConfig {
            gamma,
            delta: mhz(d),
            coupling_c: coupling,
            raman_a: ratio * coupling,
            ..MediumConfig::default()
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    // N_s - N_i is a constant of the lossless coupled-mode motion; the
    // linearised fluctuations inherit that at the carrier frequency.
    #[test]
    fn lossless_difference_noise_is_conserved(m in medium_strategy(), excess in 0.0f64..4.0) {
        let m = MediumConfig { raman_a: 0.0, ..m.on_raman_resonance().unwrap() };
        let input = gaussian::coherent_input(1e8, excess).unwrap();
        let out = gaussian::apply_transfer(&input, &medium::transfer_point(&m, 0.0).unwrap()).unwrap();
        let before = gaussian::intensity_noise(&input).unwrap().var_difference();
        let after = gaussian::intensity_noise(&out).unwrap().var_difference();
        prop_assert!((after - before).abs() <= 1e-9 * before, "{before} -> {after}");
    }

    // equal losses mix in vacuum: V_eta = eta V_1 + 1 - eta
    #[test]
    fn balanced_loss_is_linear_in_eta(m in medium_strategy(), eta in 0.05f64..1.0, excess in 0.0f64..3.0) {
        let input = ProbeInput { excess_noise_db: excess, ..ProbeInput::default() }.state().unwrap();
        let shape = PulseShape::default();
        let at = |eta| {
            let chain = DetectionChain { eta, ..DetectionChain::default() };
            detection::time_resolved_variance(&m, &input, &shape, &chain).unwrap()
        };
        let v1 = at(1.0);
        let v = at(eta);
        prop_assert!((v - (eta * v1 + 1.0 - eta)).abs() < 1e-9, "{v} vs {v1} at eta {eta}");
    }

    #[test]
    fn output_states_are_physical(m in medium_strategy(), omega in -200.0f64..200.0, eta in 0.0f64..1.0) {
        let p = medium::transfer_point(&m, mhz(omega)).unwrap();
        p.check_physical().unwrap();
        let carrier = medium::transfer_point(&m, 0.0).unwrap();
        let input = gaussian::coherent_input(1e8, 2.0).unwrap();
        let s = gaussian::sideband_state(&input, &p, &carrier).unwrap();
        let lossy = gaussian::apply_loss(&s, eta, eta).unwrap();
        prop_assert!(lossy.min_symplectic_eigenvalue() >= 1.0 - 1e-9);
    }
}

#[test]
fn empty_medium_pipeline_is_shot_noise_limited() {
    let m = MediumConfig::default().empty();
    let input = gaussian::coherent_input(1e8, 0.0).unwrap();
    let shape = PulseShape::default();
    assert!((detection::band_average_gain(&m, &shape).unwrap() - 1.0).abs() < 1e-12);
    let spec = gaussian::noise_spectrum(&m, &input, &[0.0, mhz(5.0), mhz(30.0)]).unwrap();
    assert!(spec.s.iter().all(|s| (s - 1.0).abs() < 1e-12));
    let v = detection::time_resolved_variance(&m, &input, &shape, &DetectionChain::default()).unwrap();
    assert!((v - 1.0).abs() < 1e-12);
}

#[test]
fn pulse_gain_approaches_cw_gain_for_long_pulses() {
    let gamma = mhz(6.5);
    let m = MediumConfig {
        gamma,
        coupling_c: 2.0 * gamma / 5e-3,
        ..MediumConfig::default()
    };
    let cw = medium::cw_gain(&m.on_raman_resonance().unwrap()).unwrap();
    let long = PulseShape {
        repetition_period: 1.0,
        ..PulseShape::square(20e-6)
    };
    let g = squeezesim::sweep::pulse_gain(&m, &long).unwrap();
    assert!((g - cw).abs() < 5e-3 * cw, "{g} vs {cw}");
}
