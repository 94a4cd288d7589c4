//! Desk-scale trend claims about the attack on a 200-node SBM. Slow (minutes
//! each on one core) and statistical; run with `cargo test -- --ignored`.

use vgfl::attack::AttackKind;
use vgfl::experiment::{execute, median, ExperimentConfig};
use vgfl::graph::SbmConfig;

const SEEDS: u64 = 7;

fn desk_sbm() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::from_sbm(SbmConfig {
        blocks: vec![50; 4],
        p_in: 0.1,
        p_out: 0.01,
        feature_dim: 32,
        feature_signal: 0.3,
        feature_noise: 1.0,
        ..SbmConfig::default()
    });
    cfg.train.train_frac = Some(0.1);
    cfg.train.test_frac = Some(0.4);
    cfg
}

fn poisoned_median(cfg: &ExperimentConfig) -> f64 {
    let acc: Vec<f64> = (0..SEEDS)
        .map(|s| execute(cfg, s).unwrap().metrics.poisoned_metrics.accuracy)
        .collect();
    median(&acc)
}

/// At most one inversion of at most half a point against `sign`.
fn assert_monotone(medians: &[f64], sign: f64) {
    let inversions: Vec<f64> = medians
        .windows(2)
        .map(|w| -sign * (w[1] - w[0]) * 100.0)
        .filter(|&d| d > 0.0)
        .collect();
    assert!(
        inversions.is_empty() || (inversions.len() == 1 && inversions[0] <= 0.5 + 1e-9),
        "medians {medians:?}"
    );
}

#[test]
#[ignore = "slow; statistical"]
fn accuracy_falls_with_budget() {
    let medians: Vec<f64> = [0.06, 0.10, 0.14]
        .iter()
        .map(|&alpha| {
            let mut cfg = desk_sbm();
            cfg.attack.alpha = alpha;
            poisoned_median(&cfg)
        })
        .collect();
    assert_monotone(&medians, -1.0);
}

#[test]
#[ignore = "fails at this scale: medians fall with K (0.75, 0.60, 0.55)"]
fn accuracy_recovers_with_more_clients() {
    let medians: Vec<f64> = [2, 3, 4]
        .iter()
        .map(|&k| {
            let mut cfg = desk_sbm();
            cfg.partition.k = k;
            cfg.attack.poisoned = vec![0];
            poisoned_median(&cfg)
        })
        .collect();
    assert_monotone(&medians, 1.0);
}

#[test]
#[ignore = "fails at this scale: medians rise with K' (0.55, 0.5625, 0.575)"]
fn accuracy_falls_with_more_poisoned_clients() {
    let medians: Vec<f64> = [1, 2, 3]
        .iter()
        .map(|&kp| {
            let mut cfg = desk_sbm();
            cfg.partition.k = 4;
            cfg.attack.poisoned = (0..kp).collect();
            poisoned_median(&cfg)
        })
        .collect();
    assert_monotone(&medians, -1.0);
}

#[test]
#[ignore = "fails at this scale: Random poisons at least as well (medians 0.55 vs 0.5625 at alpha 0.1)"]
fn vgfl_sa_beats_random() {
    let mut cfg = desk_sbm();
    let sa = poisoned_median(&cfg);
    cfg.attack.kind = AttackKind::Random;
    let random = poisoned_median(&cfg);
    assert!(sa < random, "VGFL-SA {sa} vs Random {random}");
}
