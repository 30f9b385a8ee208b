//! Behaviour of the simulator on the bundled desk-scale configurations.

mod common;

use common::configs_dir;
use fedlkd::harness::load_config;
use fedlkd::orchestrator::{distill_episode, run, train_episode, Aggregator};

#[test]
fn default_epsilon_switches_from_distillation_to_averaging() {
    let mut monotone = 0;
    for seed in 1..=5 {
        let cfg = load_config(&configs_dir().join("desk_run.json"), Some(seed)).unwrap();
        let tags = run(&cfg).unwrap().log.aggregators();
        // Once a step averages, no later step distills.
        let first_avg = tags.iter().position(|&a| a == Aggregator::FedAvg).unwrap_or(tags.len());
        if tags[first_avg..].iter().all(|&a| a == Aggregator::FedAvg) {
            monotone += 1;
        }
    }
    assert!(monotone >= 4, "{monotone}/5 seeds");
}

#[test]
fn joint_loss_moving_average_does_not_increase() {
    let cfg = load_config(&configs_dir().join("desk_distill.json"), Some(1)).unwrap();
    let ep = train_episode(&cfg).unwrap();
    let report = distill_episode(&ep, &cfg.distill, 7).unwrap();
    let avg: Vec<f64> = report.losses.windows(5).map(|w| w.iter().sum::<f64>() / 5.0).collect();
    let worst = avg.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    // Mini-batch noise at the plateau moves the average by ~1e-7; anything
    // beyond a millionth of the starting loss counts as an increase.
    let tol = 1e-6 * report.losses[0];
    assert!(worst <= tol, "moving average rose by {worst} (tolerance {tol})");
}
