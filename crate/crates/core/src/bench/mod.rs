//! Lifelong benchmark construction: samples, task streams, clustering-based
//! task splits, a synthetic generator and file ingestion.

mod io;
mod split;
mod synthetic;

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{TokenId, VocabEmbedding};
use crate::rng::{rng_for, Purpose};

pub use io::{
    load_relation_dataset, read_embeddings, read_samples, write_dataset, write_embeddings,
    write_manifest, write_samples, Dataset, ManifestTask, StreamManifest,
};
pub use split::{build_stream, cluster_split, SPLIT_SEED};
pub(crate) use synthetic::draw_candidates;
pub use synthetic::{gen_synthetic, SyntheticBenchmark, SyntheticParams, CANDIDATES_PER_SAMPLE};

pub type LabelId = u32;

/// Everything a lifelong run reads: the task stream, relation vocabulary,
/// word embeddings and a free-form description echoed into run records.
#[derive(Debug, Clone)]
pub struct Benchmark {
    pub stream: TaskStream,
    pub relations: RelationVocab,
    pub vocab: Arc<VocabEmbedding>,
    pub descriptor: serde_json::Value,
}

impl Benchmark {
    /// Same benchmark with tasks reordered by `seed`.
    pub fn permuted(&self, seed: u64) -> Self {
        Self {
            stream: self.stream.permuted(seed),
            ..self.clone()
        }
    }
}

impl From<SyntheticBenchmark> for Benchmark {
    fn from(b: SyntheticBenchmark) -> Self {
        Self {
            stream: b.stream,
            relations: b.relations,
            vocab: b.vocab,
            descriptor: serde_json::json!({ "kind": "synthetic" }),
        }
    }
}

/// One labeled instance: a token sequence, its gold relation and the
/// relations it is ranked against.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub tokens: Vec<TokenId>,
    pub gold: LabelId,
    pub candidates: Vec<LabelId>,
}

impl Sample {
    pub fn new(tokens: Vec<TokenId>, gold: LabelId, candidates: Vec<LabelId>) -> Result<Self> {
        let s = Self {
            tokens,
            gold,
            candidates,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tokens.is_empty() {
            return Err(Error::invalid("sample has no tokens"));
        }
        if !self.candidates.contains(&self.gold) {
            return Err(Error::invalid(format!(
                "candidate set does not contain gold label {}",
                self.gold
            )));
        }
        Ok(())
    }

    /// Candidates other than the gold label.
    pub fn negatives(&self) -> Vec<LabelId> {
        self.candidates
            .iter()
            .copied()
            .filter(|&c| c != self.gold)
            .collect()
    }
}

/// Relation names as token ids plus their averaged name embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationVocab {
    names: Vec<String>,
    tokens: Vec<Vec<TokenId>>,
    embeddings: Vec<Vec<f64>>,
}

impl RelationVocab {
    /// `names[i]` is the name of relation `i`; `tokens[i]` its token ids.
    pub fn new(names: Vec<String>, tokens: Vec<Vec<TokenId>>, vocab: &VocabEmbedding) -> Result<Self> {
        if names.len() != tokens.len() {
            return Err(Error::DimensionMismatch {
                op: "RelationVocab::new",
                expected: names.len(),
                got: tokens.len(),
            });
        }
        let embeddings = tokens
            .iter()
            .map(|t| vocab.mean_pool(t))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            names,
            tokens,
            embeddings,
        })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, id: LabelId) -> &str {
        &self.names[id as usize]
    }

    pub fn tokens(&self, id: LabelId) -> &[TokenId] {
        &self.tokens[id as usize]
    }

    pub fn embedding(&self, id: LabelId) -> &[f64] {
        &self.embeddings[id as usize]
    }

    pub fn embeddings(&self) -> &[Vec<f64>] {
        &self.embeddings
    }
}

/// One supervised task: its label set and splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub labels: Vec<LabelId>,
    pub train: Vec<Sample>,
    pub valid: Vec<Sample>,
    pub test: Vec<Sample>,
}

/// Ordered tasks with pairwise disjoint label sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskStream {
    tasks: Vec<Task>,
}

impl TaskStream {
    pub fn new(tasks: Vec<Task>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for (k, t) in tasks.iter().enumerate() {
            if t.train.is_empty() && t.valid.is_empty() && t.test.is_empty() {
                return Err(Error::invalid(format!("task {k} has no samples")));
            }
            for &l in &t.labels {
                if !seen.insert(l) {
                    return Err(Error::invalid(format!("label {l} appears in more than one task")));
                }
            }
            let labels: BTreeSet<_> = t.labels.iter().copied().collect();
            for s in t.train.iter().chain(&t.valid).chain(&t.test) {
                s.validate()?;
                if !labels.contains(&s.gold) {
                    return Err(Error::invalid(format!(
                        "task {k} holds a sample of label {} outside its label set",
                        s.gold
                    )));
                }
            }
        }
        Ok(Self { tasks })
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    /// Union of the label sets of tasks `0..=k`, sorted.
    pub fn observed_labels(&self, k: usize) -> Vec<LabelId> {
        let mut v: Vec<LabelId> = self.tasks[..=k]
            .iter()
            .flat_map(|t| t.labels.iter().copied())
            .collect();
        v.sort_unstable();
        v
    }

    /// Same tasks in an order drawn from `seed`.
    pub fn permuted(&self, seed: u64) -> Self {
        let mut tasks = self.tasks.clone();
        tasks.shuffle(&mut rng_for(seed, Purpose::TaskOrder, 0));
        Self { tasks }
    }
}
