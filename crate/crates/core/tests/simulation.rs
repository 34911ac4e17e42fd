use proptest::prelude::*;
use sotkit::frames::rasterize_labels;
use sotkit::grammar::TokenClass;
use sotkit::sim::{run_error_study, simulate_trial, synth_dialogue, SimConfig};

fn config(seed: u64, spk: f64, ts: f64, lp: f64) -> SimConfig {
    SimConfig { seed, p_drop_speaker: spk, p_drop_timestamp: ts, p_loop: lp, ..SimConfig::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn forcing_leaves_no_missing_tokens(seed in any::<u64>(), spk in 0.0f64..=1.0, ts in 0.0f64..=1.0, lp in 0.0f64..=1.0) {
        let r = run_error_study(&config(seed, spk, ts, lp), 50).unwrap();
        prop_assert_eq!(r.with_fsm.missing_total(), 0.0);
    }

    #[test]
    fn forced_timestamps_avoid_silence(seed in any::<u64>(), trial in 0u64..1000) {
        let o = simulate_trial(&config(seed, 0.5, 0.5, 0.1), trial).unwrap();
        for tok in &o.forced.tokens {
            if let TokenClass::Timestamp(v) = tok {
                prop_assert!(!o.suppression.suppresses(*v));
            }
        }
    }

    #[test]
    fn synthetic_frames_match_transcript(seed in any::<u64>()) {
        let (t, f) = synth_dialogue(&SimConfig { seed, ..SimConfig::default() }).unwrap();
        let labels = rasterize_labels(&t, f.frame_period(), t.session_span());
        let argmax = f.argmax_labels();
        prop_assert_eq!(labels.labels, argmax.labels);
    }
}

#[test]
fn miss_timestamp_grows_with_drop_rate() {
    for seed in 0..5 {
        let rates: Vec<f64> = [0.0, 0.2, 0.5, 0.8, 1.0]
            .iter()
            .map(|p| run_error_study(&config(seed, 0.0, *p, 0.0), 300).unwrap().without_fsm.miss_timestamp)
            .collect();
        assert!(rates.windows(2).all(|w| w[0] <= w[1]), "seed {seed}: {rates:?}");
        assert_eq!(rates[0], 0.0);
    }
}

#[test]
fn loops_appear_without_forcing() {
    let r = run_error_study(&config(7, 0.0, 0.0, 0.1), 1000).unwrap();
    assert!(r.without_fsm.infinite_loop > 0.0);
}

#[test]
fn thread_count_does_not_change_results() {
    let c = config(3, 0.3, 0.4, 0.1);
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| run_error_study(&c, 200));
    let many = rayon::ThreadPoolBuilder::new().num_threads(8).build().unwrap().install(|| run_error_study(&c, 200));
    assert_eq!(one.unwrap(), many.unwrap());
}
