use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use super::{LabelId, RelationVocab, Sample, Task, TaskStream};
use crate::error::{Error, Result};
use crate::memory::kmeans;
use crate::rng::{rng_for, Purpose};

const CLUSTER_MAX_ITERS: usize = 300;

/// Train/valid/test splits use one fixed seed so that every task order sees
/// the same split.
pub const SPLIT_SEED: u64 = 0;

/// Assigns every relation to one of `k` tasks by k-means over relation-name
/// embeddings. Tasks are numbered by their smallest relation id.
pub fn cluster_split(relations: &RelationVocab, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k == 0 || k > relations.len() {
        return Err(Error::invalid(format!(
            "cannot split {} relations into {k} tasks",
            relations.len()
        )));
    }
    let clusters = kmeans(relations.embeddings(), k, seed, CLUSTER_MAX_ITERS)?;
    let mut renumber = vec![usize::MAX; k];
    let mut next = 0;
    for &c in &clusters.assignment {
        if renumber[c] == usize::MAX {
            renumber[c] = next;
            next += 1;
        }
    }
    if next != k {
        return Err(Error::invalid(format!(
            "relation embeddings support only {next} non-empty clusters, {k} requested"
        )));
    }
    Ok(clusters.assignment.iter().map(|&c| renumber[c]).collect())
}

/// 80/10/10 train/valid/test split of one task after a seeded shuffle.
pub(crate) fn split_task_samples(labels: Vec<LabelId>, mut samples: Vec<Sample>, seed: u64, task: u64) -> Task {
    samples.shuffle(&mut rng_for(seed, Purpose::Split, task));
    let n = samples.len();
    let n_train = n * 8 / 10;
    let n_valid = n / 10;
    let test = samples.split_off(n_train + n_valid);
    let valid = samples.split_off(n_train);
    Task {
        labels,
        train: samples,
        valid,
        test,
    }
}

/// Partitions samples into tasks by their gold relation, splits each task
/// 80/10/10 and orders the tasks by `shuffle_seed`.
pub fn build_stream(samples: &[Sample], split: &[usize], shuffle_seed: u64) -> Result<TaskStream> {
    let n_tasks = split.iter().copied().max().map_or(0, |m| m + 1);
    let mut grouped: BTreeMap<usize, Vec<Sample>> = (0..n_tasks).map(|t| (t, Vec::new())).collect();
    for (i, s) in samples.iter().enumerate() {
        let Some(&t) = split.get(s.gold as usize) else {
            return Err(Error::invalid(format!(
                "sample {i} has relation {} outside the split",
                s.gold
            )));
        };
        grouped.get_mut(&t).expect("task index below max").push(s.clone());
    }
    let mut tasks = Vec::with_capacity(n_tasks);
    for (t, samples) in grouped {
        if samples.is_empty() {
            return Err(Error::invalid(format!("task {t} has no samples")));
        }
        let labels = (0..split.len() as LabelId)
            .filter(|&l| split[l as usize] == t)
            .collect();
        tasks.push(split_task_samples(labels, samples, SPLIT_SEED, t as u64));
    }
    Ok(TaskStream::new(tasks)?.permuted(shuffle_seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn samples(n_rel: u32, per: usize) -> Vec<Sample> {
        (0..n_rel)
            .flat_map(|r| (0..per).map(move |i| Sample::new(vec![i as u32 + 1], r, vec![r]).unwrap()))
            .collect()
    }

    #[test]
    fn one_cluster_is_one_task() {
        let s = samples(4, 10);
        let stream = build_stream(&s, &[0, 0, 0, 0], 3).unwrap();
        assert_eq!(stream.len(), 1);
        let t = &stream.tasks()[0];
        assert_eq!(t.train.len() + t.valid.len() + t.test.len(), 40);
        assert_eq!(t.labels, vec![0, 1, 2, 3]);
    }

    #[test]
    fn partition_and_disjointness() {
        let s = samples(6, 10);
        let split = [0, 1, 2, 0, 1, 2];
        let stream = build_stream(&s, &split, 1).unwrap();
        let total: usize = stream
            .tasks()
            .iter()
            .map(|t| t.train.len() + t.valid.len() + t.test.len())
            .sum();
        assert_eq!(total, s.len());
        let mut labels: Vec<_> = stream.tasks().iter().flat_map(|t| t.labels.clone()).collect();
        labels.sort();
        assert_eq!(labels, vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn seeds_permute_the_same_tasks() {
        let s = samples(8, 5);
        let split = [0, 1, 2, 3, 0, 1, 2, 3];
        let a = build_stream(&s, &split, 1).unwrap();
        let b = build_stream(&s, &split, 2).unwrap();
        let la: Vec<_> = a.tasks().iter().map(|t| t.labels.clone()).collect();
        let lb: Vec<_> = b.tasks().iter().map(|t| t.labels.clone()).collect();
        assert_ne!(la, lb);
        for t in a.tasks() {
            let same = b.tasks().iter().find(|u| u.labels == t.labels).unwrap();
            assert_eq!(t, same);
        }
    }

    #[test]
    fn empty_task_and_unknown_relation() {
        let s = samples(2, 5);
        assert!(build_stream(&s, &[0, 2, 1], 0).is_err());
        assert!(build_stream(&s, &[0], 0).is_err());
    }
}
