//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary so the criteria execute in order and the
//! alignment audit (criterion 7) sees every `align_samples` call made by the
//! others. Criteria listed in `KNOWN_FAILURES` still print FAIL but do not
//! fail the process; any other failure does.

mod common;

use std::fs;
use std::process::Command;
use std::time::{Duration, Instant};

use common::*;
use fedlkd::datagen::sample_dirichlet;
use fedlkd::flcore::fedavg;
use fedlkd::harness::load_config;
use fedlkd::lkd::{alignment_audit, auc_ovr, lambda_schedule, DistillConfig, Epsilon, LambdaSpec};
use fedlkd::numerics::ModelParams;
use fedlkd::orchestrator::{distill_episode, run, train_episode, AggregationMode, Aggregator, Episode, RunConfig};
use fedlkd::rng::substream;
use fedlkd::theory::{
    check_theorems, dirichlet_covariance, gaussian_kl, lkd_optimal_student, random_ensemble, EnsembleOptions,
};
use rand::seq::SliceRandom;
use rand::Rng;

/// Criteria that fail for a documented reason. The stated closed-form
/// variance omits the spread of the teacher means, so it only agrees with
/// the true minimizer when those means coincide.
const KNOWN_FAILURES: &[u32] = &[2];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn config(name: &str, seed: u64) -> RunConfig {
    load_config(&configs_dir().join(name), Some(seed)).expect("bundled config loads")
}

fn theorems() -> Verdict {
    let start = Instant::now();
    let report = check_theorems(1000, 3, 5, 0).unwrap();
    let t = start.elapsed();
    verdict(
        report.violations_t1 == 0 && report.violations_t2 == 0 && within(t, 5.0),
        format!(
            "{} trials, violations T1={} T2={}, {:.2}s (limit 5s)",
            report.trials,
            report.violations_t1,
            report.violations_t2,
            t.as_secs_f64()
        ),
    )
}

fn student_grid() -> Verdict {
    let start = Instant::now();
    let mut rng = substream(0, "student-ensembles");
    let (mut err_mu, mut err_var, mut err_moment) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..50 {
        let ens = random_ensemble(3, 5, EnsembleOptions::default(), &mut rng);
        for c in 0..5 {
            let means: Vec<f64> = ens.teachers.iter().map(|t| t.means[c]).collect();
            let vars: Vec<f64> = ens.teachers.iter().map(|t| t.variances[c]).collect();
            let top = ens.tau.iter().map(|row| row[c]).fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = ens.tau.iter().map(|row| (row[c] - top).exp()).collect();
            let lo_m = means.iter().copied().fold(f64::INFINITY, f64::min);
            let hi_m = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo_v = vars.iter().copied().fold(f64::INFINITY, f64::min);
            let hi_v = vars.iter().copied().fold(0.0, f64::max);
            let obj = |m: f64, v: f64| weighted_kl_objective(&means, &vars, &w, m, v);
            let (gm, gv) = grid_minimize(&obj, (lo_m - 3.0, hi_m + 3.0), (0.5 * lo_v, 2.0 * hi_v), 400);

            let (mu, var) = lkd_optimal_student(&ens, c).unwrap();
            err_mu = err_mu.max(rel_err(mu, gm, 1.0));
            err_var = err_var.max(rel_err(var, gv, 1.0));
            let total: f64 = w.iter().sum();
            let moment = w.iter().zip(&vars).zip(&means).map(|((&wi, &v), &m)| wi * (v + (m - mu).powi(2))).sum::<f64>()
                / total;
            err_moment = err_moment.max(rel_err(moment.min(2.0 * hi_v), gv, 1.0));
        }
    }
    let t = start.elapsed();
    verdict(
        err_mu < 1e-3 && err_var < 1e-3 && within(t, 60.0),
        format!(
            "250 classes: max rel err mu*={err_mu:.2e}, sigma*^2={err_var:.2e} (moment-matching variance, clipped to the search box: {err_moment:.2e}), {:.1}s",
            t.as_secs_f64()
        ),
    )
}

fn kl_quadrature_check() -> Verdict {
    let mut rng = substream(1, "kl-pairs");
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (mp, mq) = (rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0));
        let (vp, vq) = (rng.random_range(0.1..5.0), rng.random_range(0.1..5.0));
        let closed: f64 = gaussian_kl((mp, vp), (mq, vq)).unwrap();
        worst = worst.max((closed - kl_quadrature(mp, vp, mq, vq)).abs());
    }
    verdict(worst < 1e-6, format!("100 pairs, max |closed - quadrature| = {worst:.2e}"))
}

fn auc_check() -> Verdict {
    let mut rng = substream(2, "auc-sets");
    let (mut worst, mut sets) = (0.0f64, 0);
    while sets < 200 {
        let n = rng.random_range(2..80);
        // Every other set draws from a handful of values to force ties.
        let levels = if sets % 2 == 0 { 4 } else { 1_000_000 };
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 / levels as f64).collect();
        let positives: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        if positives.iter().all(|&p| p) || positives.iter().all(|&p| !p) {
            continue;
        }
        let auc: f64 = auc_ovr(&scores, &positives).unwrap();
        worst = worst.max((auc - auc_pair_count(&scores, &positives)).abs());
        sets += 1;
    }
    verdict(worst <= 1e-12, format!("200 score sets (half tie-heavy), max |auc - pair count| = {worst:.2e}"))
}

fn gradient_check() -> Verdict {
    let mut rng = substream(3, "fd-nets");
    let mut worst = 0.0f64;
    for net in 0..20u64 {
        let model = jittered_net(&mut rng, net);
        let (batch, labels) = random_batch(&mut rng, 6, model.input_dim(), model.num_classes());
        let (_, grad) = model.cross_entropy_grad(&batch, &labels, 1.0).unwrap();
        let loss = |v: &[f64]| model.with_values(v.to_vec()).unwrap().cross_entropy_grad(&batch, &labels, 1.0).unwrap().0;
        let fd = central_differences(&loss, model.values(), 1e-5);
        for (&a, &f) in grad.iter().zip(&fd) {
            worst = worst.max(rel_err(a, f, 1e-3));
        }
    }
    verdict(worst < 1e-4, format!("20 nets, max rel err {worst:.2e} (h = 1e-5)"))
}

fn fedavg_check() -> Verdict {
    let mut rng = substream(4, "fedavg-models");
    let base = ModelParams::<f64>::mlp(6, 8, 4, 0).unwrap();
    let models: Vec<_> = (0..5)
        .map(|_| base.with_values((0..base.values().len()).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap())
        .collect();
    let avg = fedavg(&models, None).unwrap();
    let mut worst = 0.0f64;
    for j in 0..base.values().len() {
        let mut s = 0.0;
        for m in &models {
            s += m.values()[j];
        }
        worst = worst.max((avg.values()[j] - s / models.len() as f64).abs());
    }
    let mut shuffled = models.clone();
    let mut exact = true;
    for _ in 0..20 {
        shuffled.shuffle(&mut rng);
        exact &= fedavg(&shuffled, None).unwrap().values() == avg.values();
    }
    verdict(
        worst <= 1e-15 && exact,
        format!("max |fedavg - mean| = {worst:.2e}, 20 permutations bit-identical: {exact}"),
    )
}

fn alignment_check() -> Verdict {
    let audit = alignment_audit();
    verdict(
        audit.calls > 0 && audit.violations == 0,
        format!("{} align_samples calls in this suite, {} with sum of bucket sizes != pool size", audit.calls, audit.violations),
    )
}

fn dirichlet_check() -> Verdict {
    let configs: [&[f64]; 3] = [&[1.0, 1.0, 1.0], &[0.5, 2.0, 3.5, 1.0], &[0.1; 5]];
    let mut lines = Vec::new();
    let mut pass = true;
    for (k, nu) in configs.iter().enumerate() {
        let mut rng = substream(5 + k as u64, "dirichlet-draws");
        let draws: Vec<Vec<f64>> = (0..100_000).map(|_| sample_dirichlet(nu, &mut rng).unwrap()).collect();
        let mut worst_z = 0.0f64;
        for i in 0..nu.len() {
            for j in i + 1..nu.len() {
                let expected: f64 = dirichlet_covariance(nu, i, j).unwrap();
                let (cov, se) = sample_covariance(&draws, i, j);
                worst_z = worst_z.max((cov - expected).abs() / se);
            }
        }
        pass &= worst_z <= 3.0;
        lines.push(format!("nu={nu:?} max |z|={worst_z:.2}"));
    }
    verdict(pass, format!("100000 draws, all pairs; {}", lines.join("; ")))
}

fn lambda_check() -> Verdict {
    let mut worst = 0.0f64;
    let mut cases = 0;
    for regions in 1..=20 {
        for use_update in [false, true] {
            let r = regions as f64;
            let upper = if use_update { r / (r + 1.0) } else { 1.0 };
            for k in 0..=200 {
                let l1 = upper * k as f64 / 200.0;
                let (l2, l3) = lambda_schedule(regions, l1, use_update).unwrap();
                worst = worst.max((l1 + l2 + l3 - 1.0).abs());
                let [a, b, c] = LambdaSpec::HardWeight(k as f64 / 200.0).resolve(regions, use_update).unwrap();
                worst = worst.max((a + b + c - 1.0).abs());
                cases += 2;
            }
        }
    }
    verdict(worst <= 1e-12, format!("{cases} settings, max |l1 + l2 + l3 - 1| = {worst:.2e}"))
}

fn distill_episodes() -> Vec<(Episode, RunConfig)> {
    (1..=5)
        .map(|seed| {
            let cfg = config("desk_distill.json", seed);
            (train_episode(&cfg).unwrap(), cfg)
        })
        .collect()
}

fn student_vs_teachers(episodes: &[(Episode, RunConfig)], setup: Duration) -> Verdict {
    let start = Instant::now();
    let mut wins = 0;
    let mut pairs = Vec::new();
    for (ep, cfg) in episodes {
        let report = distill_episode(ep, &cfg.distill, 7).unwrap();
        if report.student_top1 >= report.best_teacher_top1() {
            wins += 1;
        }
        pairs.push(format!("{:.3}/{:.3}", report.student_top1, report.best_teacher_top1()));
    }
    let t = setup + start.elapsed();
    verdict(
        wins >= 4 && within(t, 600.0),
        format!("student >= best teacher in {wins}/5 seeds (student/teacher {}), {:.0}s", pairs.join(" "), t.as_secs_f64()),
    )
}

fn hard_weight_sweep(episodes: &[(Episode, RunConfig)]) -> Verdict {
    let (mut beats_one, mut beats_zero) = (0, 0);
    let mut rows = Vec::new();
    for (ep, cfg) in episodes {
        let acc = |l3: f64| {
            let d = DistillConfig { lambdas: LambdaSpec::HardWeight(l3), use_update_distillation: false, ..cfg.distill.clone() };
            distill_episode(ep, &d, 7).unwrap().student_top1
        };
        let (small, one, zero) = (acc(0.01), acc(1.0), acc(0.0));
        beats_one += usize::from(small >= one);
        beats_zero += usize::from(small >= zero);
        rows.push(format!("{small:.4}/{one:.4}/{zero:.4}"));
    }
    verdict(
        beats_one >= 4 && beats_zero >= 4,
        format!("l3=0.01 >= l3=1 in {beats_one}/5, >= l3=0 in {beats_zero}/5 (acc 0.01/1/0: {})", rows.join(" ")),
    )
}

fn switch_equivalence() -> Verdict {
    let base = config("desk_run.json", 1);
    let never = RunConfig { distill: DistillConfig { epsilon: Epsilon::NEVER, ..base.distill.clone() }, ..base.clone() };
    let plain = RunConfig { aggregation: AggregationMode::Fedavg, ..base.clone() };
    let always = RunConfig { distill: DistillConfig { epsilon: Epsilon::ALWAYS, ..base.distill.clone() }, ..base.clone() };
    let (a, b, c) = (run(&never).unwrap(), run(&plain).unwrap(), run(&always).unwrap());
    let identical = a.log == b.log
        && a.global.values() == b.global.values()
        && a.regions.iter().zip(&b.regions).all(|(x, y)| x.values() == y.values());
    let tags = c.log.aggregators();
    let all_lkd = !tags.is_empty() && tags.iter().all(|&t| t == Aggregator::Lkd);
    verdict(
        identical && all_lkd,
        format!(
            "eps=inf vs FedAvg run bit-identical: {identical}; eps=0 tags: {}",
            tags.iter().map(|t| if *t == Aggregator::Lkd { 'L' } else { 'F' }).collect::<String>()
        ),
    )
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs_dir().join("desk_run.json");
    let outs: Vec<_> = ["a", "b"]
        .iter()
        .map(|name| {
            let out = dir.path().join(name);
            let status = Command::new(env!("CARGO_BIN_EXE_fedlkd"))
                .args(["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
                .output()
                .unwrap()
                .status;
            assert!(status.success(), "fedlkd run failed");
            out
        })
        .collect();
    let same = |f: &str| fs::read(outs[0].join(f)).unwrap() == fs::read(outs[1].join(f)).unwrap();
    let (summary, runlog) = (same("summary.csv"), same("runlog.jsonl"));
    verdict(summary && runlog, format!("summary.csv identical: {summary}, runlog.jsonl identical: {runlog}"))
}

fn injection_dip() -> Verdict {
    let mut wins = 0;
    let mut rows = Vec::new();
    for seed in 1..=5 {
        let cfg = config("desk_injection.json", seed);
        let at = cfg.injections.iter().map(|i| i.round).min().unwrap();
        let dip = |mode: AggregationMode| {
            let out = run(&RunConfig { aggregation: mode, ..cfg.clone() }).unwrap();
            let before = out.log.records.iter().find(|r| r.round == at - 1).unwrap().global_top1;
            let after = out.log.records.iter().find(|r| r.round >= at && r.aggregator.is_some()).unwrap().global_top1;
            before - after
        };
        let (f2l, avg) = (dip(AggregationMode::F2l), dip(AggregationMode::Fedavg));
        wins += usize::from(f2l < avg);
        rows.push(format!("{f2l:+.4}/{avg:+.4}"));
    }
    verdict(wins >= 4, format!("F2L dip < FedAvg dip in {wins}/5 seeds (dips F2L/FedAvg: {})", rows.join(" ")))
}

fn main() {
    let setup = Instant::now();
    let episodes = distill_episodes();
    let setup = setup.elapsed();

    let criteria: Vec<(u32, &str, Box<dyn FnOnce() -> Verdict + '_>)> = vec![
        (1, "theorem verification", Box::new(theorems)),
        (2, "optimal student vs grid search", Box::new(student_grid)),
        (3, "Gaussian KL vs quadrature", Box::new(kl_quadrature_check)),
        (4, "AUC vs pair count", Box::new(auc_check)),
        (5, "MLP gradients vs finite differences", Box::new(gradient_check)),
        (6, "fedavg mean and permutation invariance", Box::new(fedavg_check)),
        (8, "Dirichlet covariance", Box::new(dirichlet_check)),
        (9, "lambda schedule sums to one", Box::new(lambda_check)),
        (10, "student vs regional teachers", Box::new(|| student_vs_teachers(&episodes, setup))),
        (11, "hard-loss weight sweep", Box::new(|| hard_weight_sweep(&episodes))),
        (12, "epsilon switch equivalence", Box::new(switch_equivalence)),
        (13, "determinism", Box::new(determinism)),
        (14, "region injection dip", Box::new(injection_dip)),
        // Last, so the audit covers every alignment made above.
        (7, "alignment invariant", Box::new(alignment_check)),
    ];

    let mut results = Vec::new();
    for (id, name, check) in criteria {
        let start = Instant::now();
        let v = check();
        let status = if v.pass { "PASS" } else { "FAIL" };
        let note = if !v.pass && KNOWN_FAILURES.contains(&id) { " [known]" } else { "" };
        println!("{status} {id:>2} {name}: {} ({:.1}s){note}", v.detail, start.elapsed().as_secs_f64());
        results.push((id, v.pass));
    }
    let passed = results.iter().filter(|r| r.1).count();
    println!("{passed}/{} criteria passed", results.len());
    let unexpected = results.iter().filter(|(id, pass)| !pass && !KNOWN_FAILURES.contains(id)).count();
    if unexpected > 0 {
        std::process::exit(1);
    }
}
