//! Experiment specs, the strategy × seed grid runner, reports and dataset
//! generation behind the command-line front end.
//!
//! A spec is a TOML file:
//!
//! ```toml
//! out = "results/synthetic"
//! seeds = 5                 # or an explicit list, e.g. [0, 3, 7]
//!
//! [benchmark]
//! kind = "synthetic"        # remaining keys are SyntheticParams
//! tasks = 10
//!
//! [defaults]                # StrategyConfig keys applied to every strategy
//! lr_model = 0.5
//!
//! [[strategies]]
//! name = "emr"
//! quota = 10
//! ```
//!
//! `strategies` may also be a plain list of names.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bench::{
    build_stream, cluster_split, gen_synthetic, load_relation_dataset, write_dataset, write_manifest, Benchmark,
    LabelId, StreamManifest, SyntheticParams, SPLIT_SEED,
};
use crate::error::{Error, Result};
use crate::eval::{write_steps_csv, RunRecord};
use crate::strategies::{run_stream_with, Clock, FrozenClock, StrategyConfig, SystemClock};

/// Where tasks come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BenchmarkSource {
    Synthetic(SyntheticParams),
    Dataset {
        samples: PathBuf,
        embeddings: PathBuf,
        /// Number of tasks to cluster relations into.
        tasks: usize,
        /// Task label sets to use instead of clustering, as written by `gen`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        manifest: Option<PathBuf>,
    },
}

impl BenchmarkSource {
    fn resolve_paths(&mut self, base: &Path) {
        if let BenchmarkSource::Dataset {
            samples,
            embeddings,
            manifest,
            ..
        } = self
        {
            for p in [Some(samples), Some(embeddings), manifest.as_mut()].into_iter().flatten() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
    }

    pub fn load(&self) -> Result<Benchmark> {
        let descriptor = serde_json::to_value(self)?;
        match self {
            BenchmarkSource::Synthetic(p) => {
                let mut b: Benchmark = gen_synthetic(p)?.into();
                b.descriptor = descriptor;
                Ok(b)
            }
            BenchmarkSource::Dataset {
                samples,
                embeddings,
                tasks,
                manifest,
            } => {
                let data = load_relation_dataset(samples, embeddings)?;
                let split = match manifest {
                    Some(path) => split_from_manifest(path, data.relations.len())?,
                    None => cluster_split(&data.relations, *tasks, SPLIT_SEED)?,
                };
                let stream = build_stream(&data.samples, &split, 0)?;
                if stream.len() != *tasks {
                    return Err(Error::Config(format!(
                        "benchmark has {} tasks, spec says {tasks}",
                        stream.len()
                    )));
                }
                Ok(Benchmark {
                    stream,
                    relations: data.relations,
                    vocab: data.vocab,
                    descriptor,
                })
            }
        }
    }
}

fn split_from_manifest(path: &Path, n_rel: usize) -> Result<Vec<usize>> {
    let manifest: StreamManifest = serde_json::from_str(&fs::read_to_string(path)?)?;
    let mut split = vec![usize::MAX; n_rel];
    for (t, task) in manifest.tasks.iter().enumerate() {
        for &l in &task.labels {
            let slot = split
                .get_mut(l as usize)
                .ok_or_else(|| Error::Config(format!("manifest relation {l} is not in the dataset")))?;
            *slot = t;
        }
    }
    if let Some(l) = split.iter().position(|&t| t == usize::MAX) {
        return Err(Error::Config(format!("relation {l} is missing from the manifest")));
    }
    Ok(split)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockKind {
    #[default]
    System,
    /// Wall times recorded as 0, so reruns produce byte-identical files.
    Frozen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum Seeds {
    Count(u64),
    List(Vec<u64>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum StrategyEntry {
    Name(String),
    Table(toml::Table),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    benchmark: BenchmarkSource,
    #[serde(default)]
    defaults: toml::Table,
    strategies: Vec<StrategyEntry>,
    seeds: Seeds,
    out: PathBuf,
    #[serde(default)]
    clock: ClockKind,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSpec {
    pub benchmark: BenchmarkSource,
    pub strategies: Vec<StrategyConfig>,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub clock: ClockKind,
}

impl ExperimentSpec {
    /// Parses and validates a spec. Relative paths are taken relative to `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let raw: RawSpec = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut strategies = Vec::with_capacity(raw.strategies.len());
        for entry in raw.strategies {
            let mut table = raw.defaults.clone();
            match entry {
                StrategyEntry::Name(n) => {
                    table.insert("name".into(), toml::Value::String(n));
                }
                StrategyEntry::Table(t) => table.extend(t),
            }
            let cfg: StrategyConfig = toml::Value::Table(table)
                .try_into()
                .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
            strategies.push(cfg);
        }
        let seeds = match raw.seeds {
            Seeds::Count(n) => (0..n).collect(),
            Seeds::List(v) => v,
        };
        let mut benchmark = raw.benchmark;
        benchmark.resolve_paths(base);
        let out = if raw.out.is_relative() { base.join(raw.out) } else { raw.out };
        let spec = Self {
            benchmark,
            strategies,
            seeds,
            out,
            clock: raw.clock,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    pub fn validate(&self) -> Result<()> {
        if self.strategies.is_empty() {
            return Err(Error::Config("at least one strategy is required".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        for s in &self.strategies {
            s.validate()?;
        }
        if let BenchmarkSource::Dataset { tasks: 0, .. } = self.benchmark {
            return Err(Error::Config("dataset benchmark needs at least one task".into()));
        }
        Ok(())
    }

    /// Every (strategy, seed) cell, seeds shifted by `seed_offset`.
    pub fn cells(&self, seed_offset: u64) -> Vec<StrategyConfig> {
        self.strategies
            .iter()
            .flat_map(|s| {
                self.seeds
                    .iter()
                    .map(move |&seed| s.clone().with_seed(seed + seed_offset))
            })
            .collect()
    }
}

/// SHA-256 over the benchmark source, the cell config and the clock kind.
pub fn cell_hash(benchmark: &BenchmarkSource, config: &StrategyConfig, clock: ClockKind) -> Result<String> {
    let key = serde_json::json!({ "benchmark": benchmark, "config": config, "clock": clock });
    let digest = Sha256::digest(serde_json::to_vec(&key)?);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

fn cell_path(out: &Path, config: &StrategyConfig, hash: &str) -> PathBuf {
    out.join("runs")
        .join(format!("{}-seed{}-{}.json", config.name, config.seed, &hash[..12]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    /// Worker threads for grid cells; 0 uses one per core.
    pub jobs: usize,
    pub seed_offset: u64,
}

#[derive(Debug, Clone, Default)]
pub struct RunOutcome {
    pub ran: usize,
    pub skipped: usize,
    /// `(cell file, error)` for cells that did not finish.
    pub failed: Vec<(PathBuf, String)>,
    pub records: Vec<RunRecord>,
}

fn load_complete(path: &Path) -> Option<RunRecord> {
    let text = fs::read_to_string(path).ok()?;
    let record: RunRecord = serde_json::from_str(&text).ok()?;
    record.is_complete().then_some(record)
}

/// Runs the grid, skipping cells whose record already exists and is
/// complete, then writes `steps.csv` over all cells.
pub fn cmd_run(spec: &ExperimentSpec, opts: RunOptions) -> Result<RunOutcome> {
    spec.validate()?;
    fs::create_dir_all(spec.out.join("runs"))?;
    let base = spec.benchmark.load()?;
    let clock: Box<dyn Clock> = match spec.clock {
        ClockKind::System => Box::new(SystemClock::new()),
        ClockKind::Frozen => Box::new(FrozenClock),
    };
    let cells = spec.cells(opts.seed_offset);
    let mut jobs = Vec::with_capacity(cells.len());
    for cfg in cells {
        let hash = cell_hash(&spec.benchmark, &cfg, spec.clock)?;
        jobs.push((cell_path(&spec.out, &cfg, &hash), cfg));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let results: Vec<(PathBuf, bool, Result<RunRecord>)> = pool.install(|| {
        jobs.par_iter()
            .map(|(path, cfg)| {
                if let Some(r) = load_complete(path) {
                    log::info!("skipping {}", path.display());
                    return (path.clone(), true, Ok(r));
                }
                log::info!("running {} seed {}", cfg.name, cfg.seed);
                let res = run_stream_with(cfg, &base.permuted(cfg.seed), clock.as_ref())
                    .and_then(|r| fs::write(path, r.to_json()?).map(|_| r).map_err(Error::from));
                (path.clone(), false, res)
            })
            .collect()
    });
    let mut outcome = RunOutcome::default();
    for (path, skipped, res) in results {
        match res {
            Ok(r) => {
                if skipped {
                    outcome.skipped += 1;
                } else {
                    outcome.ran += 1;
                }
                if let Some(e) = &r.error {
                    outcome.failed.push((path, e.clone()));
                }
                outcome.records.push(r);
            }
            Err(e) => outcome.failed.push((path, e.to_string())),
        }
    }
    let mut csv = Vec::new();
    write_steps_csv(&mut csv, &outcome.records)?;
    fs::write(spec.out.join("steps.csv"), csv)?;
    Ok(outcome)
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub strategy: String,
    pub step: usize,
    pub runs: usize,
    pub acc_avg: (f64, f64),
    pub acc_whole: (f64, f64),
    pub acc_avg_full: (f64, f64),
    pub acc_whole_full: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub strategy: String,
    pub runs: usize,
    pub whole: (f64, f64),
    pub avg: (f64, f64),
    pub whole_full: (f64, f64),
    pub avg_full: (f64, f64),
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub curves: Vec<CurvePoint>,
    /// Sorted by final ACC_avg, best first.
    pub summary: Vec<SummaryRow>,
    /// Record files that were unreadable or incomplete.
    pub skipped: Vec<PathBuf>,
}

impl Report {
    pub fn curves_csv(&self) -> String {
        let mut s = String::from(
            "strategy,step,runs,acc_avg_mean,acc_avg_std,acc_whole_mean,acc_whole_std,\
             acc_avg_full_mean,acc_avg_full_std,acc_whole_full_mean,acc_whole_full_std\n",
        );
        for c in &self.curves {
            s.push_str(&format!(
                "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
                c.strategy,
                c.step,
                c.runs,
                c.acc_avg.0,
                c.acc_avg.1,
                c.acc_whole.0,
                c.acc_whole.1,
                c.acc_avg_full.0,
                c.acc_avg_full.1,
                c.acc_whole_full.0,
                c.acc_whole_full.1
            ));
        }
        s
    }

    pub fn summary_csv(&self) -> String {
        let mut s = String::from(
            "strategy,runs,whole_mean,whole_std,avg_mean,avg_std,whole_full_mean,avg_full_mean,wall_ms_mean\n",
        );
        for r in &self.summary {
            s.push_str(&format!(
                "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.1}\n",
                r.strategy, r.runs, r.whole.0, r.whole.1, r.avg.0, r.avg.1, r.whole_full.0, r.avg_full.0, r.wall_ms
            ));
        }
        s
    }

    /// Final-step table with Whole and Avg columns and mean wall time.
    pub fn summary_table(&self) -> String {
        let w = self.summary.iter().map(|r| r.strategy.len()).max().unwrap_or(8).max(8);
        let mut s = format!(
            "{:<w$}  {:>4}  {:>15}  {:>15}  {:>10}\n",
            "strategy", "runs", "Whole", "Avg", "time (s)"
        );
        for r in &self.summary {
            s.push_str(&format!(
                "{:<w$}  {:>4}  {:>7.3} ± {:<5.3}  {:>7.3} ± {:<5.3}  {:>10.2}\n",
                r.strategy,
                r.runs,
                r.whole.0,
                r.whole.1,
                r.avg.0,
                r.avg.1,
                r.wall_ms / 1000.0
            ));
        }
        s
    }
}

fn json_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            json_files(&path, out)?;
        } else if path.extension().is_some_and(|e| e == "json") {
            out.push(path);
        }
    }
    Ok(())
}

/// Aggregates the complete run records found anywhere under `dir`.
pub fn build_report(dir: &Path) -> Result<Report> {
    let mut files = Vec::new();
    json_files(dir, &mut files)?;
    files.sort();
    let mut by_strategy: BTreeMap<String, Vec<RunRecord>> = BTreeMap::new();
    let mut skipped = Vec::new();
    for f in files {
        match fs::read_to_string(&f)
            .ok()
            .and_then(|t| serde_json::from_str::<RunRecord>(&t).ok())
        {
            Some(r) if r.is_complete() => by_strategy.entry(r.config.name.to_string()).or_default().push(r),
            _ => skipped.push(f),
        }
    }
    if by_strategy.is_empty() {
        return Err(Error::Config(format!("no complete run records under {}", dir.display())));
    }
    let mut curves = Vec::new();
    let mut summary = Vec::new();
    for (name, runs) in &by_strategy {
        let steps = runs.iter().map(|r| r.steps.len()).max().unwrap_or(0);
        for step in 0..steps {
            let at: Vec<_> = runs.iter().filter_map(|r| r.steps.get(step)).collect();
            let col = |f: fn(&crate::eval::StepMetrics) -> f64| mean_std(&at.iter().map(|s| f(s)).collect::<Vec<_>>());
            curves.push(CurvePoint {
                strategy: name.clone(),
                step: step + 1,
                runs: at.len(),
                acc_avg: col(|s| s.acc_avg),
                acc_whole: col(|s| s.acc_whole),
                acc_avg_full: col(|s| s.acc_avg_full),
                acc_whole_full: col(|s| s.acc_whole_full),
            });
        }
        let fin = |f: fn(&crate::eval::RunSummary) -> f64| {
            mean_std(&runs.iter().filter_map(|r| r.summary.as_ref().map(f)).collect::<Vec<_>>())
        };
        summary.push(SummaryRow {
            strategy: name.clone(),
            runs: runs.len(),
            whole: fin(|s| s.final_acc_whole),
            avg: fin(|s| s.final_acc_avg),
            whole_full: fin(|s| s.final_acc_whole_full),
            avg_full: fin(|s| s.final_acc_avg_full),
            wall_ms: fin(|s| s.total_wall_ms as f64).0,
        });
    }
    summary.sort_by(|a, b| b.avg.0.total_cmp(&a.avg.0).then_with(|| a.strategy.cmp(&b.strategy)));
    Ok(Report {
        curves,
        summary,
        skipped,
    })
}

/// Builds the report for `dir` and writes `curves.csv`, `summary.csv` and
/// `summary.txt` next to the records.
pub fn cmd_report(dir: &Path) -> Result<Report> {
    let report = build_report(dir)?;
    fs::write(dir.join("curves.csv"), report.curves_csv())?;
    fs::write(dir.join("summary.csv"), report.summary_csv())?;
    fs::write(dir.join("summary.txt"), report.summary_table())?;
    Ok(report)
}

/// Writes a synthetic benchmark as `samples.jsonl`, `embeddings.txt` and
/// `manifest.json` (the planted task label sets).
pub fn cmd_gen(params: &SyntheticParams, dir: &Path) -> Result<Vec<PathBuf>> {
    let bench = gen_synthetic(params)?;
    let samples: Vec<_> = bench
        .stream
        .tasks()
        .iter()
        .flat_map(|t| t.train.iter().chain(&t.valid).chain(&t.test).cloned())
        .collect();
    let (sp, ep) = write_dataset(dir, &samples, &bench.relations, &bench.vocab)?;
    let mp = dir.join("manifest.json");
    write_manifest(&mp, &bench.stream)?;
    Ok(vec![sp, ep, mp])
}

/// Label sets of a manifest, for callers that want the planted partition.
pub fn manifest_labels(path: &Path) -> Result<Vec<Vec<LabelId>>> {
    let manifest: StreamManifest = serde_json::from_str(&fs::read_to_string(path)?)?;
    Ok(manifest.tasks.into_iter().map(|t| t.labels).collect())
}
