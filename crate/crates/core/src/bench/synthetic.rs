//! Desk-scale lifelong benchmark with planted task structure.
//!
//! Each task owns a center in embedding space and its relations are
//! prototypes scattered around that center, so relation names of one task
//! tend to cluster together (the planted partition is used as is, not
//! re-derived by clustering). Sentences of a task are seen
//! through a task-specific random rotation of the prototypes (the
//! rotated-digits idea carried over to feature vectors), which makes tasks
//! compete for the same encoder weights.

use std::sync::Arc;

use rand::seq::index::sample;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{split::split_task_samples, LabelId, RelationVocab, Sample, Task, TaskStream};
use crate::error::{Error, Result};
use crate::model::VocabEmbedding;
use crate::rng::{rng_for, Purpose, Rng};

pub const CANDIDATES_PER_SAMPLE: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticParams {
    pub tasks: usize,
    pub relations_per_task: usize,
    pub samples_per_relation: usize,
    pub d_emb: usize,
    /// Per-coordinate standard deviation of token noise.
    pub noise: f64,
    pub seed: u64,
    /// Per-coordinate spread of relation prototypes around their task center.
    pub relation_spread: f64,
    /// Per-coordinate noise on relation-name embeddings.
    pub name_noise: f64,
    pub tokens_per_sample: usize,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self {
            tasks: 10,
            relations_per_task: 8,
            samples_per_relation: 60,
            d_emb: 25,
            noise: 0.35,
            seed: 0,
            relation_spread: 1.0,
            name_noise: 0.05,
            tokens_per_sample: 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticBenchmark {
    pub stream: TaskStream,
    pub relations: RelationVocab,
    pub vocab: Arc<VocabEmbedding>,
    /// Planted task index of every relation.
    pub planted: Vec<usize>,
}

fn gaussian(rng: &mut Rng, d: usize, std: f64) -> Vec<f64> {
    (0..d)
        .map(|_| std * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
        .collect()
}

/// Random orthogonal matrix (row-major) by Gram-Schmidt on a Gaussian draw.
fn random_rotation(rng: &mut Rng, d: usize) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(d);
    while rows.len() < d {
        let mut v = gaussian(rng, d, 1.0);
        for r in &rows {
            let p = crate::numgrad::dot(&v, r);
            crate::numgrad::axpy(-p, r, &mut v);
        }
        let n = crate::numgrad::norm(&v);
        if n > 1e-8 {
            rows.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    rows
}

/// `n` candidates including `gold`, drawn uniformly from `pool`; all of the
/// pool when it is smaller. Sorted ascending.
pub(crate) fn draw_candidates(rng: &mut Rng, gold: LabelId, pool: &[LabelId], n: usize) -> Vec<LabelId> {
    let others: Vec<LabelId> = pool.iter().copied().filter(|&l| l != gold).collect();
    let take = n.saturating_sub(1).min(others.len());
    let mut c: Vec<LabelId> = sample(rng, others.len(), take)
        .into_iter()
        .map(|i| others[i])
        .collect();
    c.push(gold);
    c.sort_unstable();
    c
}

pub fn gen_synthetic(p: &SyntheticParams) -> Result<SyntheticBenchmark> {
    if p.tasks == 0
        || p.relations_per_task == 0
        || p.samples_per_relation == 0
        || p.d_emb == 0
        || p.tokens_per_sample == 0
    {
        return Err(Error::invalid("synthetic benchmark counts must be positive"));
    }
    if !(p.noise >= 0.0 && p.relation_spread >= 0.0 && p.name_noise >= 0.0) {
        return Err(Error::invalid("synthetic noise levels must be non-negative"));
    }
    let d = p.d_emb;
    let n_rel = p.tasks * p.relations_per_task;
    let mut rng = rng_for(p.seed, Purpose::Synthetic, 0);

    let centers: Vec<Vec<f64>> = (0..p.tasks).map(|_| gaussian(&mut rng, d, 1.0)).collect();
    let rotations: Vec<Vec<Vec<f64>>> = (0..p.tasks).map(|_| random_rotation(&mut rng, d)).collect();
    let planted: Vec<usize> = (0..n_rel).map(|r| r / p.relations_per_task).collect();
    let prototypes: Vec<Vec<f64>> = planted
        .iter()
        .map(|&k| {
            let mut v = gaussian(&mut rng, d, p.relation_spread);
            crate::numgrad::axpy(1.0, &centers[k], &mut v);
            v
        })
        .collect();

    let mut rows: Vec<(String, Vec<f64>)> = Vec::new();
    let mut rel_names = Vec::with_capacity(n_rel);
    for (r, proto) in prototypes.iter().enumerate() {
        let mut e = gaussian(&mut rng, d, p.name_noise);
        crate::numgrad::axpy(1.0, proto, &mut e);
        let name = format!("rel{r}");
        rows.push((name.clone(), e));
        rel_names.push(name);
    }

    let all_labels: Vec<LabelId> = (0..n_rel as LabelId).collect();
    // (token names, gold, candidates) per sample, grouped by task
    let mut per_task: Vec<Vec<(Vec<String>, LabelId, Vec<LabelId>)>> = vec![Vec::new(); p.tasks];
    let mut next_token = 0usize;
    for (r, proto) in prototypes.iter().enumerate() {
        let k = planted[r];
        let seen = rotations[k]
            .iter()
            .map(|row| crate::numgrad::dot(row, proto))
            .collect::<Vec<f64>>();
        for _ in 0..p.samples_per_relation {
            let mut toks = Vec::with_capacity(p.tokens_per_sample);
            for _ in 0..p.tokens_per_sample {
                let mut e = gaussian(&mut rng, d, p.noise);
                crate::numgrad::axpy(1.0, &seen, &mut e);
                let name = format!("w{next_token}");
                next_token += 1;
                rows.push((name.clone(), e));
                toks.push(name);
            }
            let cands = draw_candidates(&mut rng, r as LabelId, &all_labels, CANDIDATES_PER_SAMPLE);
            per_task[k].push((toks, r as LabelId, cands));
        }
    }

    let vocab = Arc::new(VocabEmbedding::from_rows(d, rows)?);
    let rel_tokens = rel_names.iter().map(|n| vec![vocab.id(n)]).collect();
    let relations = RelationVocab::new(rel_names, rel_tokens, &vocab)?;

    let mut tasks = Vec::with_capacity(p.tasks);
    for (k, raw) in per_task.into_iter().enumerate() {
        let samples = raw
            .into_iter()
            .map(|(toks, gold, cands)| {
                Sample::new(toks.iter().map(|t| vocab.id(t)).collect(), gold, cands)
            })
            .collect::<Result<Vec<_>>>()?;
        let labels = (0..n_rel as LabelId)
            .filter(|&l| planted[l as usize] == k)
            .collect();
        tasks.push(split_task_samples(labels, samples, p.seed, k as u64));
    }

    Ok(SyntheticBenchmark {
        stream: TaskStream::new(tasks)?,
        relations,
        vocab,
        planted,
    })
}

impl SyntheticBenchmark {
    pub fn task(&self, k: usize) -> &Task {
        &self.stream.tasks()[k]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticParams {
        SyntheticParams {
            tasks: 3,
            relations_per_task: 4,
            samples_per_relation: 10,
            d_emb: 8,
            ..Default::default()
        }
    }

    #[test]
    fn shape_and_invariants() {
        let b = gen_synthetic(&small()).unwrap();
        assert_eq!(b.stream.len(), 3);
        assert_eq!(b.relations.len(), 12);
        for t in b.stream.tasks() {
            assert_eq!(t.labels.len(), 4);
            assert_eq!(t.train.len() + t.valid.len() + t.test.len(), 40);
            assert_eq!(t.train.len(), 32);
            for s in t.train.iter().chain(&t.test) {
                assert_eq!(s.candidates.len(), CANDIDATES_PER_SAMPLE);
                assert!(s.candidates.contains(&s.gold));
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = gen_synthetic(&small()).unwrap();
        let b = gen_synthetic(&small()).unwrap();
        assert_eq!(a.stream, b.stream);
        assert_eq!(*a.vocab, *b.vocab);
        let c = gen_synthetic(&SyntheticParams { seed: 1, ..small() }).unwrap();
        assert_ne!(*a.vocab, *c.vocab);
    }

    #[test]
    fn rotation_is_orthogonal() {
        let mut rng = rng_for(3, Purpose::Synthetic, 0);
        let r = random_rotation(&mut rng, 6);
        for i in 0..6 {
            for j in 0..6 {
                let d = crate::numgrad::dot(&r[i], &r[j]);
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((d - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn small_pool_candidates() {
        let mut rng = rng_for(0, Purpose::Candidates, 0);
        assert_eq!(draw_candidates(&mut rng, 2, &[0, 1, 2], 10), vec![0, 1, 2]);
        let c = draw_candidates(&mut rng, 5, &(0..40).collect::<Vec<_>>(), 10);
        assert_eq!(c.len(), 10);
        assert!(c.contains(&5));
    }
}
