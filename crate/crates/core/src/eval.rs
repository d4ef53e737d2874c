//! Accuracy metrics over a lifelong run and the per-run record.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::bench::{LabelId, RelationVocab, Sample, TaskStream};
use crate::error::{Error, Result};
use crate::model::{predict_with_table, RelModel};
use crate::strategies::StrategyConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CandidateMode {
    /// Each sample's own candidate set.
    Fixed,
    /// Every relation observed so far.
    FullObserved,
}

/// Relation embeddings for one frozen model, shared by every prediction.
pub struct Scorer<'a> {
    model: &'a RelModel,
    table: Vec<Vec<f64>>,
    align: bool,
}

impl<'a> Scorer<'a> {
    pub fn new(model: &'a RelModel, relations: &RelationVocab, align: bool) -> Result<Self> {
        Ok(Self {
            model,
            table: model.relation_table(relations, align)?,
            align,
        })
    }

    pub fn predict(&self, sample: &Sample, candidates: &[LabelId]) -> Result<LabelId> {
        let s = self.model.encode_sentence(&sample.tokens, self.align)?;
        predict_with_table(&s, candidates, &self.table).ok_or_else(|| Error::invalid("empty candidate set"))
    }

    /// Number of samples predicted correctly.
    pub fn correct(&self, test: &[Sample], mode: CandidateMode, observed: &[LabelId]) -> Result<usize> {
        let mut n = 0;
        for s in test {
            let cands = match mode {
                CandidateMode::Fixed => s.candidates.as_slice(),
                CandidateMode::FullObserved => observed,
            };
            if self.predict(s, cands)? == s.gold {
                n += 1;
            }
        }
        Ok(n)
    }

    pub fn acc_task(&self, test: &[Sample], mode: CandidateMode, observed: &[LabelId]) -> Result<f64> {
        if test.is_empty() {
            return Err(Error::invalid("accuracy over an empty test set"));
        }
        Ok(self.correct(test, mode, observed)? as f64 / test.len() as f64)
    }
}

/// Fraction of `test` predicted correctly under `mode`.
pub fn acc_task(
    model: &RelModel,
    relations: &RelationVocab,
    align: bool,
    test: &[Sample],
    mode: CandidateMode,
    observed: &[LabelId],
) -> Result<f64> {
    Scorer::new(model, relations, align)?.acc_task(test, mode, observed)
}

/// Mean of per-task accuracies.
pub fn acc_avg(per_task: &[f64]) -> Result<f64> {
    if per_task.is_empty() {
        return Err(Error::invalid("average over no tasks"));
    }
    Ok(per_task.iter().sum::<f64>() / per_task.len() as f64)
}

/// Accuracy over the union of the given test sets.
pub fn acc_whole(
    model: &RelModel,
    relations: &RelationVocab,
    align: bool,
    tests: &[&[Sample]],
    mode: CandidateMode,
    observed: &[LabelId],
) -> Result<f64> {
    let scorer = Scorer::new(model, relations, align)?;
    whole_from(&scorer, tests, mode, observed)
}

fn whole_from(scorer: &Scorer<'_>, tests: &[&[Sample]], mode: CandidateMode, observed: &[LabelId]) -> Result<f64> {
    let total: usize = tests.iter().map(|t| t.len()).sum();
    if total == 0 {
        return Err(Error::invalid("accuracy over an empty test set"));
    }
    let mut correct = 0;
    for t in tests {
        correct += scorer.correct(t, mode, observed)?;
    }
    Ok(correct as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeMetrics {
    pub acc_per_task: Vec<f64>,
    pub acc_avg: f64,
    pub acc_whole: f64,
}

/// Both candidate modes after training on tasks `0..=k`.
pub fn evaluate_step(
    model: &RelModel,
    relations: &RelationVocab,
    align: bool,
    stream: &TaskStream,
    k: usize,
) -> Result<(ModeMetrics, ModeMetrics)> {
    let scorer = Scorer::new(model, relations, align)?;
    let observed = stream.observed_labels(k);
    let tests: Vec<&[Sample]> = stream.tasks()[..=k].iter().map(|t| t.test.as_slice()).collect();
    let mut out = Vec::with_capacity(2);
    for mode in [CandidateMode::Fixed, CandidateMode::FullObserved] {
        let per: Vec<f64> = tests
            .iter()
            .map(|t| scorer.acc_task(t, mode, &observed))
            .collect::<Result<_>>()?;
        out.push(ModeMetrics {
            acc_avg: acc_avg(&per)?,
            acc_whole: whole_from(&scorer, &tests, mode, &observed)?,
            acc_per_task: per,
        });
    }
    let full = out.pop().expect("two modes");
    let fixed = out.pop().expect("two modes");
    Ok((fixed, full))
}

/// Metrics after one task of a lifelong run. The headline `acc_*` fields use
/// each sample's fixed candidate set; `*_full` ones rank against every
/// observed relation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: usize,
    /// Smallest relation id of the task, a stable name across task orders.
    pub task_id: LabelId,
    pub acc_per_task: Vec<f64>,
    pub acc_avg: f64,
    pub acc_whole: f64,
    pub acc_per_task_full: Vec<f64>,
    pub acc_avg_full: f64,
    pub acc_whole_full: f64,
    pub wall_ms: u64,
    pub fb_passes: u64,
    pub align_passes: u64,
    pub gem_nonconverged: u64,
    pub cosine_warnings: u64,
    pub memory_size: usize,
    pub selection_clamped: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub joint_objective: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub final_acc_avg: f64,
    pub final_acc_whole: f64,
    pub final_acc_avg_full: f64,
    pub final_acc_whole_full: f64,
    pub total_wall_ms: u64,
    pub total_fb_passes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub version: String,
    pub config: StrategyConfig,
    /// Description of the benchmark the run used.
    pub benchmark: serde_json::Value,
    pub relation_tokenization: String,
    pub steps: Vec<StepMetrics>,
    pub summary: Option<RunSummary>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

impl RunRecord {
    pub fn is_complete(&self) -> bool {
        self.error.is_none() && self.summary.is_some()
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Copy with wall-clock fields zeroed, for comparisons across runs.
    pub fn without_timing(&self) -> Self {
        let mut r = self.clone();
        for s in &mut r.steps {
            s.wall_ms = 0;
        }
        if let Some(sum) = &mut r.summary {
            sum.total_wall_ms = 0;
        }
        r
    }
}

pub const CSV_HEADER: &str = "strategy,seed,step,task_id,acc_avg,acc_whole,acc_avg_full,acc_whole_full,wall_ms,fb_passes,align_passes,gem_nonconverged,memory_size,acc_per_task,acc_per_task_full";

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(";")
}

/// One CSV row per (strategy, seed, step).
pub fn write_steps_csv<'a>(mut w: impl Write, records: impl IntoIterator<Item = &'a RunRecord>) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in records {
        for s in &r.steps {
            writeln!(
                w,
                "{},{},{},{},{:.6},{:.6},{:.6},{:.6},{},{},{},{},{},{},{}",
                r.config.name.as_str(),
                r.config.seed,
                s.step,
                s.task_id,
                s.acc_avg,
                s.acc_whole,
                s.acc_avg_full,
                s.acc_whole_full,
                s.wall_ms,
                s.fb_passes,
                s.align_passes,
                s.gem_nonconverged,
                s.memory_size,
                join(&s.acc_per_task),
                join(&s.acc_per_task_full),
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn averages() {
        assert!((acc_avg(&[0.5, 0.7]).unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(acc_avg(&[0.3]).unwrap(), 0.3);
        assert!((acc_avg(&[0.25, 0.25, 0.25]).unwrap() - 0.25).abs() < 1e-15);
        assert!(acc_avg(&[]).is_err());
    }
}
