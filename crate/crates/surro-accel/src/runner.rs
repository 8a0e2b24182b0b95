//! Multi-seed experiment execution and the report file.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use surro_accel_core::pipeline::{run_seed, Comparison, StabilizationCriterion, Summary};
use surro_accel_core::surrogate::RmseReport;

use crate::config::Resolved;
use crate::files::{read_curve, read_json, write_curve, write_json, write_surrogate, write_trajectories};
use crate::{AppError, Result};

pub const THREADS_ENV: &str = "SURRO_ACCEL_THREADS";
pub const REPORT_FORMAT_VERSION: u32 = 1;

/// Worker cap: `SURRO_ACCEL_THREADS` if set and positive, else the number of
/// available cores.
pub fn thread_limit() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Applies `f` to every item on up to `threads` workers; results keep the
/// input order.
pub fn parallel_map<T, R, F>(items: &[T], threads: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..threads.clamp(1, items.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(item) = items.get(i) else { break };
                let r = f(item);
                slots.lock().unwrap()[i] = Some(r);
            });
        }
    });
    slots.into_inner().unwrap().into_iter().map(|r| r.expect("every item processed")).collect()
}

/// Paths relative to the experiment directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedFiles {
    pub trajectories: String,
    pub surrogate: String,
    pub rmse: String,
    pub curves: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    pub rmse: RmseReport,
    pub original: Comparison,
    pub modified: Comparison,
    pub files: SeedFiles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub format_version: u32,
    pub stabilization: StabilizationCriterion,
    pub simulation_budget: usize,
    pub pretrain_surrogate_episodes: usize,
    pub seeds: Vec<SeedReport>,
    pub original: Summary,
    pub modified: Summary,
}

impl ExperimentReport {
    fn summarize(
        stabilization: StabilizationCriterion,
        simulation_budget: usize,
        pretrain_surrogate_episodes: usize,
        seeds: Vec<SeedReport>,
    ) -> Result<Self> {
        let pick = |f: fn(&SeedReport) -> Comparison| seeds.iter().map(f).collect::<Vec<_>>();
        let summary = |c: Vec<Comparison>| Summary::of(&c).ok_or_else(|| AppError::Runtime("no seeds".into()));
        Ok(Self {
            format_version: REPORT_FORMAT_VERSION,
            stabilization,
            simulation_budget,
            pretrain_surrogate_episodes,
            original: summary(pick(|s| s.original))?,
            modified: summary(pick(|s| s.modified))?,
            seeds,
        })
    }
}

/// Runs every seed of the experiment, writing each seed's trajectories,
/// surrogate, RMSE report and curves under `out/seed_<seed>/`, then
/// `out/report.json`.
pub fn run_experiment(cfg: &Resolved, out: &Path, threads: usize, progress: &(dyn Fn(&str) + Sync)) -> Result<ExperimentReport> {
    let seeds: Vec<u64> = (0..cfg.experiment.seeds as u64).map(|i| cfg.seed + i).collect();
    let results = parallel_map(&seeds, threads, |&seed| -> Result<SeedReport> {
        let o = run_seed(&cfg.call_center, &cfg.reward, &cfg.modified_reward, &cfg.dqn, &cfg.experiment, seed)
            .map_err(AppError::runtime)?;
        let dir = format!("seed_{seed}");
        let files = SeedFiles {
            trajectories: format!("{dir}/trajectories.jsonl"),
            surrogate: format!("{dir}/surrogate.json"),
            rmse: format!("{dir}/rmse.json"),
            curves: o
                .curves()
                .iter()
                .map(|(label, _)| (label.to_string(), format!("{dir}/curve_{label}.csv")))
                .collect(),
        };
        write_trajectories(&out.join(&files.trajectories), &o.trajectories)?;
        write_surrogate(&out.join(&files.surrogate), &o.surrogate)?;
        write_json(&out.join(&files.rmse), &o.rmse)?;
        for (label, curve) in o.curves() {
            write_curve(&out.join(&files.curves[label]), curve)?;
        }
        progress(&format!(
            "seed {seed}: original {:?}/{:?}, modified {:?}/{:?} (direct/pretrained stabilization)",
            o.original.direct.index,
            o.original.pretrain_finetune.index,
            o.modified.direct.index,
            o.modified.pretrain_finetune.index
        ));
        Ok(SeedReport {
            seed,
            rmse: o.rmse,
            original: o.original,
            modified: o.modified,
            files,
        })
    });
    let seeds = results.into_iter().collect::<Result<Vec<_>>>()?;
    let report = ExperimentReport::summarize(
        cfg.experiment.stabilization,
        cfg.dqn.episodes,
        cfg.experiment.pretrain_surrogate_episodes,
        seeds,
    )?;
    write_json(&out.join("report.json"), &report)?;
    Ok(report)
}

/// Recomputes stabilization and summaries of an experiment directory from
/// its curve files, optionally under a different criterion.
pub fn rebuild_report(dir: &Path, criterion: Option<StabilizationCriterion>) -> Result<ExperimentReport> {
    let old: ExperimentReport = read_json(&dir.join("report.json"))?;
    let crit = criterion.unwrap_or(old.stabilization);
    crit.validate()?;
    let mut seeds = Vec::with_capacity(old.seeds.len());
    for mut s in old.seeds {
        let curve = |label: &str| -> Result<_> {
            let rel = s
                .files
                .curves
                .get(label)
                .ok_or_else(|| AppError::Validation(format!("report lists no {label} curve for seed {}", s.seed)))?;
            read_curve(&dir.join(rel))
        };
        let compare = |d, p| -> Result<Comparison> { Comparison::of(&curve(d)?, &curve(p)?, &crit).map_err(AppError::runtime) };
        s.original = compare("direct_original", "pretrain_original")?;
        s.modified = compare("direct_modified", "pretrain_modified")?;
        seeds.push(s);
    }
    ExperimentReport::summarize(crit, old.simulation_budget, old.pretrain_surrogate_episodes, seeds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_map_keeps_order() {
        let items: Vec<u64> = (0..37).collect();
        for threads in [1, 3, 64] {
            assert_eq!(parallel_map(&items, threads, |&x| x * x), items.iter().map(|x| x * x).collect::<Vec<_>>());
        }
        assert!(parallel_map(&[] as &[u8], 4, |&x| x).is_empty());
    }
}
