use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use super::{confusion_matrix, write_atomic};
use crate::orchestrator::{self, Aggregator, DataSource, RunConfig, RunLog};
use crate::theory::check_theorems;
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "fedlkd", version, about = "Hierarchical federated learning with label-driven distillation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Split the data into regions, clients and the server pool.
    Partition(RunArgs),
    /// Run the full training schedule.
    Run(RunArgs),
    /// Train one episode, then distill the regional models once.
    Distill(RunArgs),
    /// Check the LKD-versus-MTKD inequalities on random Gaussian ensembles.
    VerifyTheory(TheoryArgs),
    /// Tabulate a finished run's log for plotting.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configuration's seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TheoryArgs {
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    regions: usize,
    #[arg(long, default_value_t = 5)]
    classes: usize,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Directory holding `runlog.jsonl`; `report.csv` is written next to it.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

/// Process exit status for an error: 2 for configuration problems, 3 for
/// data problems, 1 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } => 2,
        Error::Io(_) | Error::Format(_) | Error::InfeasiblePartition(_) | Error::Csv(_) | Error::Json(_) => 3,
        Error::InvalidArgument(_) | Error::DegenerateClass => 1,
    }
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the exit status. Diagnostics go to stderr.
pub fn run_cli<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(line) => {
            println!("{line}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cmd: Command) -> Result<String> {
    match cmd {
        Command::Partition(a) => partition_cmd(&a),
        Command::Run(a) => run_cmd(&a),
        Command::Distill(a) => distill_cmd(&a),
        Command::VerifyTheory(a) => theory_cmd(&a),
        Command::Report(a) => report_cmd(&a),
    }
}

// Serde reports the offending key between backticks.
fn json_field(msg: &str) -> Option<&str> {
    let start = msg.find('`')? + 1;
    let len = msg[start..].find('`')?;
    Some(&msg[start..start + len])
}

/// Reads and validates a run configuration. Relative IDX paths are resolved
/// against the configuration file's directory.
pub fn load_config(path: &Path, seed: Option<u64>) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config {
        field: "--config".into(),
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    let mut cfg: RunConfig = serde_json::from_str(&text).map_err(|e| {
        let msg = e.to_string();
        Error::Config { field: json_field(&msg).unwrap_or("config").to_string(), message: msg }
    })?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let DataSource::Idx { train_images, train_labels, test_images, test_labels, .. } = &mut cfg.data {
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [train_images, train_labels, test_images, test_labels] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn partition_cmd(a: &RunArgs) -> Result<String> {
    let cfg = load_config(&a.config, a.seed)?;
    let data = orchestrator::prepare(&cfg)?;
    let classes = data.test.class_count();
    let path = a.out.join("partition.csv");
    write_atomic(&path, |w| {
        let mut csv = csv::Writer::from_writer(w);
        let mut header: Vec<String> = ["role", "region", "client", "samples"].map(String::from).to_vec();
        header.extend((0..classes).map(|c| format!("class_{c}")));
        csv.write_record(&header)?;
        let mut row = |role: &str, region: String, client: String, counts: Vec<usize>| {
            let mut rec = vec![role.to_string(), region, client, counts.iter().sum::<usize>().to_string()];
            rec.extend(counts.iter().map(usize::to_string));
            csv.write_record(&rec)
        };
        let mut id = 0;
        for (r, shards) in data.partition.regions.iter().enumerate() {
            for s in shards {
                row("client", r.to_string(), id.to_string(), s.data.class_counts())?;
                id += 1;
            }
        }
        for (k, (_, shards)) in data.injections.iter().enumerate() {
            for s in shards {
                row("injected", format!("injection_{k}"), id.to_string(), s.data.class_counts())?;
                id += 1;
            }
        }
        row("server", String::new(), String::new(), data.partition.server_pool.data.class_counts())?;
        csv.flush()?;
        Ok(())
    })?;
    Ok(format!(
        "partition: {} regions, {} clients, server pool {} -> {}",
        data.partition.regions.len(),
        data.partition.regions.iter().map(Vec::len).sum::<usize>(),
        data.partition.server_pool.len(),
        path.display()
    ))
}

fn run_cmd(a: &RunArgs) -> Result<String> {
    let cfg = load_config(&a.config, a.seed)?;
    let out = orchestrator::run(&cfg)?;
    write_atomic(&a.out.join("runlog.jsonl"), |w| out.log.write_jsonl(w))?;
    write_atomic(&a.out.join("summary.csv"), |w| out.log.write_summary_csv(w))?;
    if let Some(rel) = &out.reliability {
        write_atomic(&a.out.join("reliability.csv"), |w| rel.write_csv(w))?;
    }
    let cm = confusion_matrix(&out.global, &out.test)?;
    write_atomic(&a.out.join("confusion_global.csv"), |w| cm.write_csv(w))?;
    for (r, m) in out.regions.iter().enumerate() {
        let cm = confusion_matrix(m, &out.test)?;
        write_atomic(&a.out.join(format!("confusion_region_{r}.csv")), |w| cm.write_csv(w))?;
    }
    let tags = out.log.aggregators();
    let lkd = tags.iter().filter(|&&t| t == Aggregator::Lkd).count();
    Ok(format!(
        "run: {} rounds, final top-1 {:.4}, {} LKD / {} FedAvg global steps -> {}",
        out.log.records.len(),
        cm.top1(),
        lkd,
        tags.len() - lkd,
        a.out.display()
    ))
}

fn distill_cmd(a: &RunArgs) -> Result<String> {
    let cfg = load_config(&a.config, a.seed)?;
    let ep = orchestrator::train_episode(&cfg)?;
    let rep = orchestrator::distill_episode(&ep, &cfg.distill, crate::rng::derive_seed(cfg.seed, "distill"))?;
    write_atomic(&a.out.join("reliability.csv"), |w| rep.reliability.write_csv(w))?;
    let cm = confusion_matrix(&rep.student, &ep.test)?;
    write_atomic(&a.out.join("confusion_student.csv"), |w| cm.write_csv(w))?;
    for (r, m) in ep.teachers.iter().enumerate() {
        let cm = confusion_matrix(m, &ep.test)?;
        write_atomic(&a.out.join(format!("confusion_teacher_{r}.csv")), |w| cm.write_csv(w))?;
    }
    Ok(format!(
        "distill: student top-1 {:.4}, best teacher top-1 {:.4} -> {}",
        rep.student_top1,
        rep.best_teacher_top1(),
        a.out.display()
    ))
}

fn theory_cmd(a: &TheoryArgs) -> Result<String> {
    let report = check_theorems(a.trials, a.regions, a.classes, a.seed)?;
    write_atomic(&a.out.join("theory_report.json"), |w| {
        serde_json::to_writer_pretty(&mut *w, &report)?;
        Ok(w.write_all(b"\n")?)
    })?;
    Ok(serde_json::to_string(&report)?)
}

fn report_cmd(a: &ReportArgs) -> Result<String> {
    let file = fs::File::open(a.out.join("runlog.jsonl"))?;
    let log = RunLog::read_jsonl(std::io::BufReader::new(file))?;
    let last = log.records.last().ok_or_else(|| Error::Format("run log is empty".into()))?;
    let best = log
        .records
        .iter()
        .max_by(|x, y| x.global_top1.total_cmp(&y.global_top1).then(y.round.cmp(&x.round)))
        .expect("non-empty log");
    write_atomic(&a.out.join("report.csv"), |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record([
            "round",
            "global_top1",
            "region_mean_top1",
            "region_min_top1",
            "region_max_top1",
            "aggregator",
            "beta_spread",
        ])?;
        for r in &log.records {
            let n = r.region_top1.len().max(1) as f64;
            let mean = r.region_top1.iter().sum::<f64>() / n;
            let min = r.region_top1.iter().copied().fold(f64::INFINITY, f64::min);
            let max = r.region_top1.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let tag = match r.aggregator {
                Some(Aggregator::Lkd) => "LKD",
                Some(Aggregator::FedAvg) => "FedAvg",
                None => "",
            };
            let spread = r.beta_spread.map(|s| s.to_string()).unwrap_or_default();
            csv.write_record([
                r.round.to_string(),
                r.global_top1.to_string(),
                mean.to_string(),
                min.to_string(),
                max.to_string(),
                tag.to_string(),
                spread,
            ])?;
        }
        csv.flush()?;
        Ok(())
    })?;
    Ok(format!(
        "report: {} rounds, final top-1 {:.4}, best {:.4} at round {}",
        log.records.len(),
        last.global_top1,
        best.global_top1,
        best.round
    ))
}
