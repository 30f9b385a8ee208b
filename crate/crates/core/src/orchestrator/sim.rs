use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AggregationMode, DataSource, Injection, RunConfig};
use crate::datagen::{dirichlet_partition, gmm_sample, load_idx, Dataset, GmmSpec, Partition, PartitionPlan, Shard};
use crate::flcore::{fedavg, regional_round, sample_clients, ClientState, RegionState};
use crate::harness::{confusion_matrix, per_class_accuracy};
use crate::lkd::{class_reliability, distill_with_trace, DistillConfig, Epsilon, ReliabilityMatrix};
use crate::numerics::{accuracy, ModelParams};
use crate::rng::{derive_seed, substream};
use crate::{Error, Real, Result};

/// Largest per-class gap between the most and least reliable teacher.
pub fn beta_spread<T: Real>(rel: &ReliabilityMatrix<T>) -> T {
    (0..rel.classes())
        .map(|c| {
            let col = rel.beta.iter().map(|row| row[c]);
            let hi = col.clone().fold(T::neg_infinity(), T::max);
            let lo = col.fold(T::infinity(), T::min);
            hi - lo
        })
        .fold(T::zero(), T::max)
}

/// Which branch a global step took.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Aggregator {
    #[serde(rename = "LKD")]
    Lkd,
    #[serde(rename = "FedAvg")]
    FedAvg,
}

#[derive(Debug, Clone)]
pub struct GlobalStepOutcome<T> {
    pub model: ModelParams<T>,
    pub aggregator: Aggregator,
    /// `None` when ε is infinite and reliability was never computed.
    pub beta_spread: Option<f64>,
    pub reliability: Option<ReliabilityMatrix<T>>,
}

/// End-of-episode aggregation: distill the regional models into the global
/// one when their β spread reaches ε, otherwise average them uniformly.
pub fn global_step<T: Real>(
    regional: &[ModelParams<T>],
    global: &ModelParams<T>,
    pool: &Dataset<T>,
    valset: &Dataset<T>,
    cfg: &DistillConfig,
    seed: u64,
) -> Result<GlobalStepOutcome<T>> {
    if cfg.epsilon.is_infinite() {
        return Ok(GlobalStepOutcome {
            model: fedavg(regional, None)?,
            aggregator: Aggregator::FedAvg,
            beta_spread: None,
            reliability: None,
        });
    }
    let rel = class_reliability(regional, valset, T::lit(cfg.t_omega))?;
    let spread = beta_spread(&rel).as_f64();
    if spread >= cfg.epsilon.0 {
        let out = distill_with_trace(regional, global, global, pool, valset, cfg, seed)?;
        Ok(GlobalStepOutcome {
            model: out.model,
            aggregator: Aggregator::Lkd,
            beta_spread: Some(spread),
            reliability: Some(out.reliability),
        })
    } else {
        Ok(GlobalStepOutcome {
            model: fedavg(regional, None)?,
            aggregator: Aggregator::FedAvg,
            beta_spread: Some(spread),
            reliability: Some(rel),
        })
    }
}

/// Metrics after one communication round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub round: usize,
    /// Test top-1 of each regional model, in region order.
    pub region_top1: Vec<f64>,
    pub global_top1: f64,
    /// Global model recall per class; `None` for classes absent from the
    /// test set.
    pub per_class: Vec<Option<f64>>,
    pub beta_spread: Option<f64>,
    /// Set on rounds that end an episode.
    pub aggregator: Option<Aggregator>,
    pub seconds_global_step: Option<f64>,
}

/// One row of `summary.csv`; the column order is the field order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub round: usize,
    pub global_top1: f64,
    pub aggregator: Option<Aggregator>,
    pub beta_spread: Option<f64>,
    pub seconds_global_step: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub records: Vec<RunRecord>,
}

impl RunLog {
    pub fn summary(&self) -> Vec<SummaryRow> {
        self.records
            .iter()
            .map(|r| SummaryRow {
                round: r.round,
                global_top1: r.global_top1,
                aggregator: r.aggregator,
                beta_spread: r.beta_spread,
                seconds_global_step: r.seconds_global_step,
            })
            .collect()
    }

    /// One JSON object per line, one line per round.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self> {
        let mut records = Vec::new();
        for line in input.lines() {
            let line = line?;
            if !line.trim().is_empty() {
                records.push(serde_json::from_str(&line)?);
            }
        }
        Ok(Self { records })
    }

    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in self.summary() {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn aggregators(&self) -> Vec<Aggregator> {
        self.records.iter().filter_map(|r| r.aggregator).collect()
    }
}

pub fn read_summary_csv<R: std::io::Read>(input: R) -> Result<Vec<SummaryRow>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

/// Which clients each region trained in each round, checked against the
/// client-to-region ownership fixed at setup.
#[derive(Debug, Clone, Default)]
pub struct AccessAudit {
    owner: BTreeMap<usize, usize>,
    reads: Vec<(usize, usize, Vec<usize>)>,
}

impl AccessAudit {
    fn register(&mut self, region: &RegionState<f64>) {
        for c in &region.clients {
            self.owner.insert(c.id, region.id);
        }
    }

    /// `(round, region, client ids)` in the order they were recorded.
    pub fn reads(&self) -> &[(usize, usize, Vec<usize>)] {
        &self.reads
    }

    /// Reads of a client by a region that does not own it.
    pub fn violations(&self) -> usize {
        self.reads
            .iter()
            .flat_map(|(_, region, ids)| ids.iter().map(move |id| (region, id)))
            .filter(|(region, id)| self.owner.get(id) != Some(region))
            .count()
    }
}

/// Training/test data after partitioning, with each injected region's
/// client shards held out.
#[derive(Debug, Clone)]
pub struct RunData {
    pub test: Dataset<f64>,
    pub partition: Partition<f64>,
    pub injections: Vec<(Injection, Vec<Shard<f64>>)>,
}

fn load_sources(cfg: &RunConfig) -> Result<(Dataset<f64>, Dataset<f64>)> {
    match &cfg.data {
        DataSource::Gmm { classes, dim, separation, train_samples, test_samples } => {
            let spec = GmmSpec::isotropic(*classes, *dim, *separation, derive_seed(cfg.seed, "gmm-spec"))?;
            Ok((
                gmm_sample(&spec, *train_samples, derive_seed(cfg.seed, "gmm-train"))?,
                gmm_sample(&spec, *test_samples, derive_seed(cfg.seed, "gmm-test"))?,
            ))
        }
        DataSource::Idx { train_images, train_labels, test_images, test_labels, limit } => {
            let mut train: Dataset<f64> = load_idx(train_images, train_labels)?;
            let test: Dataset<f64> = load_idx(test_images, test_labels)?;
            if let Some(n) = limit {
                let keep: Vec<usize> = (0..train.len().min(*n)).collect();
                train = train.subset(&keep);
            }
            if train.dim() != test.dim() {
                return Err(Error::Format("train and test images differ in size".into()));
            }
            let classes = train.class_count().max(test.class_count());
            let widen = |d: Dataset<f64>| Dataset::new(d.features().clone(), d.labels().to_vec(), classes);
            Ok((widen(train)?, widen(test)?))
        }
    }
}

/// Loads the data, holds out injection samples and partitions the rest.
pub fn prepare(cfg: &RunConfig) -> Result<RunData> {
    cfg.validate()?;
    let (train, test) = load_sources(cfg)?;
    let mut taken = vec![false; train.len()];
    let mut held = Vec::with_capacity(cfg.injections.len());
    for (k, inj) in cfg.injections.iter().enumerate() {
        if let Some(&c) = inj.classes.iter().find(|&&c| c >= train.class_count()) {
            return Err(Error::Config {
                field: format!("injections[{k}].classes"),
                message: format!("class {c} does not exist"),
            });
        }
        let mut pool: Vec<usize> =
            (0..train.len()).filter(|&i| !taken[i] && inj.classes.contains(&train.labels()[i])).collect();
        if pool.len() < inj.samples {
            return Err(Error::InfeasiblePartition(format!(
                "injection {k} needs {} samples of classes {:?}, only {} available",
                inj.samples,
                inj.classes,
                pool.len()
            )));
        }
        pool.shuffle(&mut substream(cfg.seed, &format!("injection:{k}")));
        pool.truncate(inj.samples);
        pool.sort_unstable();
        for &i in &pool {
            taken[i] = true;
        }
        let data = train.subset(&pool);
        let plan = PartitionPlan {
            alpha: inj.alpha,
            regions: 1,
            clients_per_region: inj.clients,
            server_fraction: 0.0,
            seed: derive_seed(cfg.seed, &format!("injection-split:{k}")),
        };
        let mut split = dirichlet_partition(&data, &plan)?;
        held.push((inj.clone(), split.regions.remove(0)));
    }
    let remaining: Vec<usize> = (0..train.len()).filter(|&i| !taken[i]).collect();
    let base = train.subset(&remaining);
    let partition = dirichlet_partition(&base, &cfg.partition.plan(derive_seed(cfg.seed, "partition")))?;
    if partition.server_pool.is_empty() {
        return Err(Error::Config {
            field: "partition.server_fraction".into(),
            message: "server pool is empty; the global step needs a pool".into(),
        });
    }
    Ok(RunData { test, partition, injections: held })
}

fn new_region(id: usize, first_client: usize, shards: Vec<Shard<f64>>, model: &ModelParams<f64>) -> RegionState<f64> {
    let clients = shards
        .into_iter()
        .enumerate()
        .map(|(k, s)| ClientState::new(first_client + k, s, model.clone()))
        .collect();
    RegionState { id, clients, model: model.clone() }
}

/// One round of local training and regional FedAvg in every region.
/// Returns the selected client ids per region.
fn regional_phase(regions: &mut [RegionState<f64>], round: usize, cfg: &RunConfig) -> Result<Vec<Vec<usize>>> {
    let seed = cfg.seed;
    regions
        .par_iter_mut()
        .map(|region| {
            let n = region.clients.len();
            let k = cfg.clients_per_round.map_or(n, |k| k.min(n));
            let selected = sample_clients(region, k, derive_seed(seed, &format!("select:{}:{round}", region.id)))?;
            regional_round(region, &selected, &cfg.train, cfg.weighting, |id| {
                derive_seed(seed, &format!("client:{id}:{round}"))
            })?;
            Ok(selected)
        })
        .collect()
}

fn initial_model(cfg: &RunConfig, dim: usize, classes: usize) -> Result<ModelParams<f64>> {
    ModelParams::mlp(dim, cfg.hidden, classes, derive_seed(cfg.seed, "init"))
}

/// Final state of a run alongside its log.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub log: RunLog,
    pub global: ModelParams<f64>,
    pub regions: Vec<ModelParams<f64>>,
    /// Reliability from the last global step that computed one.
    pub reliability: Option<ReliabilityMatrix<f64>>,
    pub test: Dataset<f64>,
    pub audit: AccessAudit,
}

pub fn run(cfg: &RunConfig) -> Result<RunOutcome> {
    let data = prepare(cfg)?;
    run_prepared(cfg, data)
}

/// Runs the full schedule on already prepared data.
pub fn run_prepared(cfg: &RunConfig, data: RunData) -> Result<RunOutcome> {
    let RunData { test, partition, injections } = data;
    let pool = partition.server_pool.data;
    let mut global = initial_model(cfg, pool.dim(), pool.class_count())?;
    let mut audit = AccessAudit::default();
    let mut regions = Vec::new();
    let mut next_client = 0;
    for (r, shards) in partition.regions.into_iter().enumerate() {
        let n = shards.len();
        regions.push(new_region(r, next_client, shards, &global));
        next_client += n;
    }
    regions.iter().for_each(|r| audit.register(r));
    let mut pending = injections;

    let mut distill_cfg = cfg.distill.clone();
    if cfg.aggregation == AggregationMode::Fedavg {
        distill_cfg.epsilon = Epsilon::NEVER;
    }

    let mut log = RunLog::default();
    let mut reliability = None;
    for round in 1..=cfg.total_rounds {
        let (now, later): (Vec<_>, Vec<_>) = pending.into_iter().partition(|(inj, _)| inj.round == round);
        pending = later;
        for (_, shards) in now {
            let n = shards.len();
            let region = new_region(regions.len(), next_client, shards, &global);
            next_client += n;
            audit.register(&region);
            regions.push(region);
        }

        let selected = regional_phase(&mut regions, round, cfg)?;
        for (region, ids) in regions.iter().zip(selected) {
            audit.reads.push((round, region.id, ids));
        }

        let mut record_step = (None, None, None);
        if round % cfg.rounds_per_episode == 0 {
            let started = cfg.record_timing.then(Instant::now);
            let teachers: Vec<ModelParams<f64>> = regions.iter().map(|r| r.model.clone()).collect();
            let step = global_step(
                &teachers,
                &global,
                &pool,
                &pool,
                &distill_cfg,
                derive_seed(cfg.seed, &format!("distill:{round}")),
            )?;
            let seconds = started.map(|t| t.elapsed().as_secs_f64());
            global = step.model;
            for region in &mut regions {
                region.model = global.clone();
            }
            if step.reliability.is_some() {
                reliability = step.reliability;
            }
            record_step = (Some(step.aggregator), step.beta_spread, seconds);
        }

        let region_top1 = regions
            .iter()
            .map(|r| accuracy(&r.model, test.features(), test.labels()))
            .collect::<Result<Vec<_>>>()?;
        let cm = confusion_matrix(&global, &test)?;
        log.records.push(RunRecord {
            round,
            region_top1,
            global_top1: cm.top1(),
            per_class: per_class_accuracy(&cm),
            aggregator: record_step.0,
            beta_spread: record_step.1,
            seconds_global_step: record_step.2,
        });
    }

    Ok(RunOutcome {
        log,
        global,
        regions: regions.into_iter().map(|r| r.model).collect(),
        reliability,
        test,
        audit,
    })
}

/// Regional models after one episode, before any global step.
#[derive(Debug, Clone)]
pub struct Episode {
    pub teachers: Vec<ModelParams<f64>>,
    /// The shared initial model every region started from.
    pub global: ModelParams<f64>,
    pub pool: Dataset<f64>,
    pub test: Dataset<f64>,
}

/// Trains every region for `rounds_per_episode` rounds from a common
/// initial model (injections are ignored).
pub fn train_episode(cfg: &RunConfig) -> Result<Episode> {
    let RunData { test, partition, .. } = prepare(cfg)?;
    let pool = partition.server_pool.data;
    let global = initial_model(cfg, pool.dim(), pool.class_count())?;
    let mut next_client = 0;
    let mut regions: Vec<RegionState<f64>> = Vec::new();
    for (r, shards) in partition.regions.into_iter().enumerate() {
        let n = shards.len();
        regions.push(new_region(r, next_client, shards, &global));
        next_client += n;
    }
    for round in 1..=cfg.rounds_per_episode {
        regional_phase(&mut regions, round, cfg)?;
    }
    Ok(Episode { teachers: regions.into_iter().map(|r| r.model).collect(), global, pool, test })
}

/// Teacher and student test accuracy after distilling an episode's regional
/// models into its initial global model.
#[derive(Debug, Clone)]
pub struct DistillReport {
    pub teacher_top1: Vec<f64>,
    pub student_top1: f64,
    pub student: ModelParams<f64>,
    pub reliability: ReliabilityMatrix<f64>,
    pub losses: Vec<f64>,
}

impl DistillReport {
    pub fn best_teacher_top1(&self) -> f64 {
        self.teacher_top1.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn distill_episode(ep: &Episode, cfg: &DistillConfig, seed: u64) -> Result<DistillReport> {
    let out = distill_with_trace(&ep.teachers, &ep.global, &ep.global, &ep.pool, &ep.pool, cfg, seed)?;
    let teacher_top1 = ep
        .teachers
        .iter()
        .map(|m| accuracy(m, ep.test.features(), ep.test.labels()))
        .collect::<Result<Vec<_>>>()?;
    Ok(DistillReport {
        teacher_top1,
        student_top1: accuracy(&out.model, ep.test.features(), ep.test.labels())?,
        student: out.model,
        reliability: out.reliability,
        losses: out.losses,
    })
}
