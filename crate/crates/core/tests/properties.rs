use std::collections::HashMap;

use aigate::domain::FEATURE_DIM;
use aigate::student::{bkt_update, sample_truncated_normal};
use aigate::{featurize, FeatureCaps, GateObservation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn bkt_update_stays_a_probability_and_respects_evidence() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1_000_000 {
        let l: f64 = rng.random();
        let g: f64 = rng.random();
        let s: f64 = rng.random();
        let learn: f64 = rng.random();
        let att: f64 = rng.random();
        let correct = rng.random::<bool>();
        let ai = rng.random::<bool>();
        let out = bkt_update(l, correct, g, s, learn, ai, att);
        assert!((0.0..=1.0).contains(&out), "bkt_update({l}, {correct}, {g}, {s}, {learn}) = {out}");
        if correct && 1.0 - s > g {
            assert!(out >= l - 1e-12, "correct answer lowered belief: {l} → {out}");
        }
    }
}

fn random_observation(rng: &mut ChaCha8Rng) -> GateObservation {
    let task = rng.random_range(0..3);
    let failed_task = rng.random_range(0..40);
    GateObservation {
        failed_attempts_question: rng.random_range(0..=failed_task),
        time_on_task: rng.random_range(0.0..5_000.0),
        ai_used_history: (0..task).map(|_| rng.random()).collect(),
        failed_attempts_task: failed_task,
        task_index: task,
        question_index: rng.random_range(0..3),
        ai_currently_granted: rng.random(),
    }
}

#[test]
fn featurize_is_total_and_bounded() {
    let caps = FeatureCaps::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100_000 {
        let obs = random_observation(&mut rng);
        let x = featurize(&obs, &caps).unwrap_or_else(|e| panic!("{obs:?}: {e}"));
        assert!(x.iter().all(|v| (-1.0..=1.0).contains(v)), "{obs:?} → {x:?}");
    }
}

#[test]
fn featurize_is_injective_on_the_grid() {
    let caps = FeatureCaps::default();
    let mut seen: HashMap<[u64; FEATURE_DIM], GateObservation> = HashMap::new();
    for task in 0..3usize {
        for hist in 0..(1u32 << task) {
            let history: Vec<bool> = (0..task).map(|k| hist >> k & 1 == 1).collect();
            for fa in 0..=5u32 {
                for cu in fa..=10u32 {
                    for tick in 0..60 {
                        let obs = GateObservation {
                            failed_attempts_question: fa,
                            time_on_task: tick as f64 * 5.0,
                            ai_used_history: history.clone(),
                            failed_attempts_task: cu,
                            task_index: task,
                            question_index: 0,
                            ai_currently_granted: false,
                        };
                        let key = featurize(&obs, &caps).unwrap().map(f64::to_bits);
                        if let Some(prev) = seen.insert(key, obs.clone()) {
                            panic!("{prev:?} and {obs:?} collide");
                        }
                    }
                }
            }
        }
    }
    assert_eq!(seen.len(), 7 * 60 * (11 + 10 + 9 + 8 + 7 + 6));
}

#[test]
fn truncated_normal_samples_stay_in_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 100_000;
    let mut sum = 0.0;
    for _ in 0..n {
        let x = sample_truncated_normal(0.5, 0.1, 0.0, 1.0, &mut rng).unwrap();
        assert!((0.0..=1.0).contains(&x));
        sum += x;
    }
    assert!((sum / n as f64 - 0.5).abs() < 0.01);
}
