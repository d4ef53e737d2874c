//! Exemplar selection: uniform random, k-means centroid-nearest and herding.
//!
//! Every selector returns sample indices in selection order.

use rand::seq::index::sample;

use super::kmeans::kmeans;
use crate::error::{Error, Result};
use crate::numgrad::sq_dist;
use crate::rng::{rng_for, Purpose};

pub const KMEANS_MAX_ITERS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub indices: Vec<usize>,
    /// Set when more samples were requested than the task holds.
    pub clamped: bool,
}

fn clamp(b: usize, n: usize) -> (usize, bool) {
    if b > n {
        log::info!("selection quota {b} exceeds task size {n}; storing all samples");
        (n, true)
    } else {
        (b, false)
    }
}

fn check_embeddings(n: usize, embeddings: &[Vec<f64>]) -> Result<()> {
    if embeddings.len() != n {
        return Err(Error::DimensionMismatch {
            op: "selection embeddings",
            expected: n,
            got: embeddings.len(),
        });
    }
    Ok(())
}

/// `b` distinct indices drawn uniformly without replacement.
pub fn select_random(n: usize, b: usize, seed: u64) -> Selection {
    let (b, clamped) = clamp(b, n);
    let mut rng = rng_for(seed, Purpose::Selection, 0);
    Selection {
        indices: sample(&mut rng, n, b).into_vec(),
        clamped,
    }
}

/// One sample per k-means cluster (`k = b`): the member nearest its centroid.
/// A cluster with no unselected member falls back to the nearest unselected
/// sample overall, so the result always has `min(b, n)` distinct indices.
pub fn select_kmeans(embeddings: &[Vec<f64>], b: usize, seed: u64) -> Result<Selection> {
    let n = embeddings.len();
    let (b, clamped) = clamp(b, n);
    if b == 0 {
        return Ok(Selection { indices: vec![], clamped });
    }
    let clusters = kmeans(embeddings, b, seed, KMEANS_MAX_ITERS)?;
    let mut taken = vec![false; n];
    let mut indices = Vec::with_capacity(b);
    for (c, centroid) in clusters.centroids.iter().enumerate() {
        let nearest = |pool: &mut dyn Iterator<Item = usize>| {
            let mut best: Option<(usize, f64)> = None;
            for i in pool {
                let d = sq_dist(&embeddings[i], centroid);
                if best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((i, d));
                }
            }
            best.map(|(i, _)| i)
        };
        let pick = nearest(&mut clusters.members(c).filter(|&i| !taken[i]))
            .or_else(|| nearest(&mut (0..n).filter(|&i| !taken[i])))
            .expect("b <= n leaves an unselected sample");
        taken[pick] = true;
        indices.push(pick);
    }
    Ok(Selection { indices, clamped })
}

/// Greedy herding: each step adds the sample that brings the running mean of
/// the selection closest to the mean of all embeddings.
pub fn select_icarl(embeddings: &[Vec<f64>], b: usize) -> Result<Selection> {
    let n = embeddings.len();
    let (b, clamped) = clamp(b, n);
    if b == 0 {
        return Ok(Selection { indices: vec![], clamped });
    }
    let dim = embeddings[0].len();
    if embeddings.iter().any(|e| e.len() != dim) {
        return Err(Error::invalid("herding embeddings differ in dimension"));
    }
    let mut mean = vec![0.0; dim];
    for e in embeddings {
        for (m, v) in mean.iter_mut().zip(e) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let mut sum = vec![0.0; dim];
    let mut taken = vec![false; n];
    let mut indices = Vec::with_capacity(b);
    let mut cand = vec![0.0; dim];
    for t in 1..=b {
        let mut best: Option<(usize, f64)> = None;
        for (i, e) in embeddings.iter().enumerate() {
            if taken[i] {
                continue;
            }
            for ((c, s), v) in cand.iter_mut().zip(&sum).zip(e) {
                *c = (s + v) / t as f64;
            }
            let d = sq_dist(&mean, &cand);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        let (pick, _) = best.expect("b <= n leaves an unselected sample");
        taken[pick] = true;
        for (s, v) in sum.iter_mut().zip(&embeddings[pick]) {
            *s += v;
        }
        indices.push(pick);
    }
    Ok(Selection { indices, clamped })
}

/// Validates that `embeddings` line up with `n` samples before selecting.
pub fn select_checked(
    method: super::SelectionMethod,
    n: usize,
    embeddings: &[Vec<f64>],
    b: usize,
    seed: u64,
) -> Result<Selection> {
    match method {
        super::SelectionMethod::Random => Ok(select_random(n, b, seed)),
        super::SelectionMethod::Kmeans => {
            check_embeddings(n, embeddings)?;
            select_kmeans(embeddings, b, seed)
        }
        super::SelectionMethod::Icarl => {
            check_embeddings(n, embeddings)?;
            select_icarl(embeddings, b)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line() -> Vec<Vec<f64>> {
        (0..4).map(|i| vec![i as f64]).collect()
    }

    #[test]
    fn random_edge_cases() {
        let mut all = select_random(5, 5, 1).indices;
        all.sort();
        assert_eq!(all, vec![0, 1, 2, 3, 4]);
        assert!(select_random(5, 0, 1).indices.is_empty());
        assert_eq!(select_random(9, 4, 3), select_random(9, 4, 3));
        let c = select_random(3, 7, 0);
        assert!(c.clamped);
        assert_eq!(c.indices.len(), 3);
    }

    #[test]
    fn herding_on_a_line() {
        let s = select_icarl(&line(), 2).unwrap();
        assert_eq!(s.indices, vec![1, 2]);
        assert_eq!(select_icarl(&line(), 1).unwrap().indices, vec![1]);
        let mut all = select_icarl(&line(), 4).unwrap().indices;
        all.sort();
        assert_eq!(all, vec![0, 1, 2, 3]);
    }

    #[test]
    fn kmeans_selection_sizes() {
        let mut all = select_kmeans(&line(), 4, 0).unwrap().indices;
        all.sort();
        assert_eq!(all, vec![0, 1, 2, 3]);
        let degenerate = vec![vec![2.0, 2.0]; 6];
        let mut s = select_kmeans(&degenerate, 3, 5).unwrap().indices;
        s.sort();
        assert_eq!(s, vec![0, 1, 2]);
    }

    #[test]
    fn kmeans_picks_one_per_blob() {
        let pts = vec![
            vec![0.0, 0.0],
            vec![0.2, 0.0],
            vec![0.1, 0.1],
            vec![9.0, 9.0],
            vec![9.2, 9.0],
            vec![9.1, 9.1],
        ];
        let s = select_kmeans(&pts, 2, 1).unwrap().indices;
        let mut s = s.clone();
        s.sort();
        // the blob members nearest each blob mean
        assert_eq!(s, vec![2, 5]);
    }

    #[test]
    fn mismatched_embeddings_rejected() {
        let r = select_checked(super::super::SelectionMethod::Kmeans, 3, &line(), 2, 0);
        assert!(r.is_err());
    }
}
