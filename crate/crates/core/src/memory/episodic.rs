use std::io::{BufRead, Write};

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bench::Sample;
use crate::error::{Error, Result};

/// A stored sample with the aligned embedding recorded at insertion time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub task_id: usize,
    pub sample: Sample,
    pub anchor: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ReplayMode {
    /// One previous task chosen uniformly per draw.
    #[default]
    TaskLevel,
    /// Uniform over every stored entry.
    SampleLevel,
}

/// Budgeted store of past-task samples: at most `quota` entries per task and
/// `budget` in total.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodicMemory {
    budget: usize,
    quota: usize,
    tasks: Vec<(usize, Vec<MemoryEntry>)>,
}

impl EpisodicMemory {
    pub fn new(budget: usize, quota: usize) -> Self {
        Self {
            budget,
            quota,
            tasks: Vec::new(),
        }
    }

    /// Fixed per-task quota `budget / expected_tasks`.
    pub fn with_expected_tasks(budget: usize, expected_tasks: usize) -> Self {
        Self::new(budget, budget / expected_tasks.max(1))
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn quota(&self) -> usize {
        self.quota
    }

    pub fn len(&self) -> usize {
        self.tasks.iter().map(|(_, e)| e.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Stored tasks in insertion order.
    pub fn tasks(&self) -> impl Iterator<Item = (usize, &[MemoryEntry])> {
        self.tasks.iter().map(|(t, e)| (*t, e.as_slice()))
    }

    pub fn task_entries(&self, task_id: usize) -> &[MemoryEntry] {
        self.tasks
            .iter()
            .find(|(t, _)| *t == task_id)
            .map(|(_, e)| e.as_slice())
            .unwrap_or(&[])
    }

    pub fn entries(&self) -> impl Iterator<Item = &MemoryEntry> {
        self.tasks.iter().flat_map(|(_, e)| e.iter())
    }

    pub fn entries_mut(&mut self) -> impl Iterator<Item = &mut MemoryEntry> {
        self.tasks.iter_mut().flat_map(|(_, e)| e.iter_mut())
    }

    pub fn store_task(&mut self, task_id: usize, selected: Vec<Sample>, anchors: Vec<Vec<f64>>) -> Result<()> {
        if selected.len() != anchors.len() {
            return Err(Error::DimensionMismatch {
                op: "store_task anchors",
                expected: selected.len(),
                got: anchors.len(),
            });
        }
        if selected.is_empty() {
            return Ok(());
        }
        let existing = self.task_entries(task_id).len();
        if existing + selected.len() > self.quota {
            return Err(Error::BudgetExceeded(format!(
                "task {task_id} would hold {} entries, quota is {}",
                existing + selected.len(),
                self.quota
            )));
        }
        if self.len() + selected.len() > self.budget {
            return Err(Error::BudgetExceeded(format!(
                "memory would hold {} entries, budget is {}",
                self.len() + selected.len(),
                self.budget
            )));
        }
        let entries = selected
            .into_iter()
            .zip(anchors)
            .map(|(sample, anchor)| MemoryEntry {
                task_id,
                sample,
                anchor,
            });
        match self.tasks.iter_mut().find(|(t, _)| *t == task_id) {
            Some((_, e)) => e.extend(entries),
            None => self.tasks.push((task_id, entries.collect())),
        }
        Ok(())
    }

    /// Replay mini-batch. Empty memory yields an empty batch.
    pub fn sample_replay<R: Rng + ?Sized>(
        &self,
        mode: ReplayMode,
        batch: usize,
        rng: &mut R,
    ) -> Vec<&MemoryEntry> {
        let nonempty: Vec<&[MemoryEntry]> = self
            .tasks
            .iter()
            .map(|(_, e)| e.as_slice())
            .filter(|e| !e.is_empty())
            .collect();
        if nonempty.is_empty() {
            return Vec::new();
        }
        match mode {
            ReplayMode::TaskLevel => {
                let pool = nonempty[rng.random_range(0..nonempty.len())];
                let m = batch.min(pool.len());
                sample(rng, pool.len(), m).into_iter().map(|i| &pool[i]).collect()
            }
            ReplayMode::SampleLevel => {
                let all: Vec<&MemoryEntry> = nonempty.iter().flat_map(|e| e.iter()).collect();
                let m = batch.min(all.len());
                sample(rng, all.len(), m).into_iter().map(|i| all[i]).collect()
            }
        }
    }

    /// `count` entries drawn uniformly over the whole memory.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<&MemoryEntry> {
        self.sample_replay(ReplayMode::SampleLevel, count, rng)
    }

    /// One JSON object per line: `{task_id, sample, anchor}`.
    pub fn export_jsonl(&self, mut w: impl Write) -> Result<()> {
        for e in self.entries() {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Rebuilds a memory from [`EpisodicMemory::export_jsonl`] output, re-checking budgets.
    pub fn import_jsonl(r: impl BufRead, budget: usize, quota: usize) -> Result<Self> {
        let mut mem = Self::new(budget, quota);
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let e: MemoryEntry = serde_json::from_str(&line).map_err(|err| Error::Parse {
                path: "<memory>".into(),
                line: i + 1,
                msg: err.to_string(),
            })?;
            mem.store_task(e.task_id, vec![e.sample], vec![e.anchor])?;
        }
        Ok(mem)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{rng_for, Purpose};

    fn s(g: u32) -> Sample {
        Sample::new(vec![1], g, vec![g]).unwrap()
    }

    #[test]
    fn storing_nothing_is_a_no_op() {
        let mut m = EpisodicMemory::new(10, 5);
        m.store_task(0, vec![], vec![]).unwrap();
        assert!(m.is_empty());
        assert_eq!(m.tasks().count(), 0);
    }

    #[test]
    fn budget_arithmetic() {
        let mut m = EpisodicMemory::with_expected_tasks(12, 4);
        assert_eq!(m.quota(), 3);
        for t in 0..4 {
            m.store_task(t, vec![s(t as u32); 3], vec![vec![0.0]; 3]).unwrap();
        }
        assert_eq!(m.len(), 12);
        assert!(m.store_task(4, vec![s(9)], vec![vec![0.0]]).is_err());
        assert!(m.store_task(0, vec![s(0)], vec![vec![0.0]]).is_err());
    }

    #[test]
    fn mismatched_anchor_count() {
        let mut m = EpisodicMemory::new(10, 5);
        assert!(m.store_task(0, vec![s(0), s(0)], vec![vec![0.0]]).is_err());
    }

    #[test]
    fn empty_memory_replays_nothing() {
        let m = EpisodicMemory::new(10, 5);
        let mut rng = rng_for(0, Purpose::Replay, 0);
        assert!(m.sample_replay(ReplayMode::TaskLevel, 4, &mut rng).is_empty());
    }

    #[test]
    fn single_task_modes_coincide() {
        let mut m = EpisodicMemory::new(10, 10);
        m.store_task(3, (0..6).map(s).collect(), vec![vec![0.0]; 6]).unwrap();
        let mut r1 = rng_for(1, Purpose::Replay, 0);
        let mut r2 = rng_for(1, Purpose::Replay, 0);
        let a: Vec<_> = m.sample_replay(ReplayMode::TaskLevel, 6, &mut r1);
        let b: Vec<_> = m.sample_replay(ReplayMode::SampleLevel, 6, &mut r2);
        assert_eq!(a.len(), 6);
        assert_eq!(b.len(), 6);
        let mut ga: Vec<_> = a.iter().map(|e| e.sample.gold).collect();
        let mut gb: Vec<_> = b.iter().map(|e| e.sample.gold).collect();
        ga.sort();
        gb.sort();
        assert_eq!(ga, gb);
    }

    #[test]
    fn jsonl_round_trip() {
        let mut m = EpisodicMemory::new(10, 5);
        m.store_task(0, vec![s(1), s(2)], vec![vec![0.5, 1.0], vec![-0.25, 3.0]]).unwrap();
        m.store_task(1, vec![s(7)], vec![vec![0.1, 0.2]]).unwrap();
        let mut buf = Vec::new();
        m.export_jsonl(&mut buf).unwrap();
        assert_eq!(String::from_utf8_lossy(&buf).lines().count(), 3);
        let back = EpisodicMemory::import_jsonl(buf.as_slice(), 10, 5).unwrap();
        assert_eq!(back, m);
    }
}
