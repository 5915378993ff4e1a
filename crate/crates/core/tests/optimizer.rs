use corrqec_core::channel::{ErrorKind, RateProfile};
use corrqec_core::codes::CodePreset;
use corrqec_core::linalg::{random_hermitian, CMatrix};
use corrqec_core::optimize::{
    hadamard_generator, objective, optimize_code, replay_negativity, ObjectiveKind, OptimizeOptions,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TARGET: ObjectiveKind = ObjectiveKind::NegativityAt(0.5);

#[test]
fn never_worse_than_deterministic_starts() {
    let base = CodePreset::Repetition
        .build(3, ErrorKind::Dephasing)
        .unwrap();
    for gamma in [[0.5, 0.1, 0.7], [0.3, 0.9, 0.2]] {
        let rates = RateProfile::dephasing(&gamma).unwrap();
        let mut opts = OptimizeOptions::new(1, 5);
        opts.nelder_mead.max_evaluations = 300;
        let result = optimize_code(&rates, &base, TARGET, &opts).unwrap();
        let zero = CMatrix::zeros(8, 8);
        let id = objective(&zero, &rates, &base, TARGET).unwrap();
        let had = objective(&hadamard_generator(3, 0), &rates, &base, TARGET).unwrap();
        assert!(result.best_objective <= id.min(had));
        assert_eq!(result.seed, 5);
        assert!(result.objective_history.windows(2).all(|w| w[1] <= w[0]));
    }
}

#[test]
fn replayed_curve_tracks_better_preset() {
    let times: Vec<f64> = (1..=20).map(|i| i as f64 * 0.05).collect();
    let zero = CMatrix::zeros(8, 8);
    for gamma in [[0.2, 0.2, 1.0], [1.0, 1.0, 0.1]] {
        let rates = RateProfile::dephasing(&gamma).unwrap();
        let base = CodePreset::Repetition
            .build(3, ErrorKind::Dephasing)
            .unwrap();
        let result = optimize_code(&rates, &base, TARGET, &OptimizeOptions::new(2, 3)).unwrap();
        let curve = replay_negativity(&result.best_generator, &rates, &base, &times).unwrap();
        let rep = replay_negativity(&zero, &rates, &base, &times).unwrap();
        let rotated = CodePreset::Rotated(0)
            .build(3, ErrorKind::Dephasing)
            .unwrap();
        let rot = replay_negativity(&zero, &rates, &rotated, &times).unwrap();
        for i in 0..times.len() {
            let better = rep[i].max(rot[i]);
            assert!(
                (curve[i] - better).abs() < 1e-2,
                "gamma {gamma:?} t {}: {} vs {better}",
                times[i],
                curve[i]
            );
        }
    }
}

#[test]
fn objective_matches_across_error_kinds() {
    let gamma = [0.4, 0.3, 0.8];
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..5 {
        let h = random_hermitian(8, &mut rng);
        let values: Vec<f64> = [ErrorKind::Dephasing, ErrorKind::Bitflip]
            .into_iter()
            .map(|kind| {
                let rates = RateProfile::new(gamma.to_vec(), kind).unwrap();
                let base = CodePreset::Repetition.build(3, kind).unwrap();
                objective(&h, &rates, &base, TARGET).unwrap()
            })
            .collect();
        assert!((values[0] - values[1]).abs() < 1e-12);
    }
}
