//! Randomized invariants.

use beta_dereverb::audio::AudioSignal;
use beta_dereverb::divergence::{divergence_entry, split_entry, Beta};
use beta_dereverb::dsp::convolve;
use beta_dereverb::experiments::job_seed;
use beta_dereverb::metrics::cepstral_distance;
use beta_dereverb::model::{synthesize, Activations, Dictionary, ModelState, ReverbKernel, EPSILON};
use beta_dereverb::stft::{istft_complex, stft_forward, StftConfig};
use beta_dereverb::updates::{cost, update_h, update_u, update_w, PenaltyWeights};
use ndarray::{Array1, Array2};
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize, lo: f64, hi: f64) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(lo..hi, rows * cols).prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
}

fn instance() -> impl Strategy<Value = (ModelState, Array2<f64>)> {
    (2usize..6, 1usize..4, 3usize..10, 1usize..5).prop_flat_map(|(k, j, n, m)| {
        (matrix(k, j, 0.01, 1.0), matrix(j, n, 0.01, 1.0), matrix(k, m, 0.01, 1.0), matrix(k, n, 0.0, 2.0)).prop_map(
            |(w, u, h, y)| {
                let state = ModelState::new(Dictionary(w), Activations(u), ReverbKernel(h)).unwrap();
                (state, y)
            },
        )
    })
}

fn naive_convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn divergence_is_nonnegative_and_vanishes_on_the_diagonal(
        y in 1e-3f64..1e3, x in 1e-3f64..1e3, b in 0.0f64..3.0
    ) {
        let beta = Beta::new(b).unwrap();
        prop_assert!(divergence_entry(y, x, beta) >= -1e-12 * (y + x));
        prop_assert!(divergence_entry(x, x, beta).abs() <= 1e-10 * x.powf(b).max(1.0));
    }

    #[test]
    fn split_parts_sum_to_the_divergence(y in 1e-2f64..10.0, x in 1e-2f64..10.0, b in 0.0f64..3.0) {
        let beta = Beta::new(b).unwrap();
        let (convex, concave) = split_entry(y, x, beta);
        let d = divergence_entry(y, x, beta);
        // magnitudes of the terms the split is assembled from
        let scale = if b == 0.0 || b == 1.0 {
            y / x + y.ln().abs() + x.ln().abs() + y + x + 1.0
        } else {
            (y.powf(b) / (b * (b - 1.0))).abs() + x.powf(b) / b + (y * x.powf(b - 1.0) / (b - 1.0)).abs()
        };
        prop_assert!((convex + concave - d).abs() <= 1e-10 * scale);
    }

    #[test]
    fn updates_keep_factors_nonnegative_and_do_not_raise_the_cost(
        (state, y) in instance(), b in prop::sample::select(vec![0.5, 0.75, 1.0, 1.5, 2.0])
    ) {
        let beta = Beta::new(b).unwrap();
        let (k, _, n, _) = state.dims();
        let zeros = PenaltyWeights::zeros(k, n);
        let before = cost(&state, &y, beta, &zeros).unwrap();
        let slack = 1e-9 * (1.0 + before.abs());

        let w = update_w(&state, &y, beta, EPSILON).unwrap();
        prop_assert!(w.0.iter().all(|v| *v >= 0.0 && v.is_finite()));
        let mut s = state.clone();
        s.set_dictionary(w).unwrap();
        prop_assert!(cost(&s, &y, beta, &zeros).unwrap() <= before + slack);

        let u = update_u(&state, &y, beta, &zeros.lambda_u, EPSILON).unwrap();
        prop_assert!(u.0.iter().all(|v| *v >= 0.0 && v.is_finite()));
        let mut s = state.clone();
        s.set_activations(u).unwrap();
        prop_assert!(cost(&s, &y, beta, &zeros).unwrap() <= before + slack);

        let lambda_h = Array1::from_elem(k, 0.5);
        let weights = PenaltyWeights::new(Array1::zeros(n), lambda_h.clone()).unwrap();
        let before = cost(&state, &y, beta, &weights).unwrap();
        let h = update_h(&state, &y, beta, &lambda_h).unwrap();
        prop_assert!(h.0.iter().all(|v| *v >= 0.0 && v.is_finite()));
        let mut s = state.clone();
        s.set_kernel(h).unwrap();
        prop_assert!(cost(&s, &y, beta, &weights).unwrap() <= before + 1e-9 * (1.0 + before.abs()));
    }

    #[test]
    fn dictionary_normalization_preserves_the_model((state, _) in instance()) {
        let before = synthesize(&state.dictionary, &state.activations, &state.kernel).unwrap();
        let mut s = state.clone();
        s.normalize_dictionary().unwrap();
        for col in s.dictionary.0.columns() {
            prop_assert!((col.sum() - 1.0).abs() < 1e-12);
        }
        let after = s.synthesis();
        for (a, b) in before.iter().zip(after.iter()) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn stft_round_trip_on_arbitrary_signals(
        samples in prop::collection::vec(-1.0f64..1.0, 600..3000),
        (len, hop) in prop::sample::select(vec![(512, 256), (256, 64), (400, 100)])
    ) {
        let signal = AudioSignal::new(samples, 16_000).unwrap();
        let config = StftConfig::new(len, hop).unwrap();
        let back = istft_complex(&stft_forward(&signal, &config).unwrap()).unwrap();
        prop_assert_eq!(back.len(), signal.len());
        let err: f64 = signal.samples.iter().zip(&back.samples).map(|(a, b)| (a - b).powi(2)).sum();
        let norm: f64 = signal.samples.iter().map(|a| a * a).sum();
        prop_assert!(err <= 1e-20 * norm.max(1e-12) + 1e-24);
    }

    #[test]
    fn convolution_matches_the_direct_sum(
        a in prop::collection::vec(-1.0f64..1.0, 1..400),
        b in prop::collection::vec(-1.0f64..1.0, 1..400)
    ) {
        let fast = convolve(&a, &b);
        let slow = naive_convolve(&a, &b);
        prop_assert_eq!(fast.len(), slow.len());
        for (x, y) in fast.iter().zip(&slow) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn job_seeds_are_distinct_per_index(master in any::<u64>(), i in 0u64..1000, j in 0u64..1000) {
        prop_assume!(i != j);
        prop_assert_ne!(job_seed(master, i), job_seed(master, j));
        prop_assert_eq!(job_seed(master, i), job_seed(master, i));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn cepstral_distance_is_symmetric(seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<f64> = (0..4000).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let b: Vec<f64> = a.iter().map(|v| 0.7 * v + rng.gen_range(-0.1..0.1)).collect();
        let a = AudioSignal::new(a, 8000).unwrap();
        let b = AudioSignal::new(b, 8000).unwrap();
        let ab = cepstral_distance(&a, &b).unwrap();
        let ba = cepstral_distance(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-9 * (1.0 + ab));
    }
}
