//! Slow, obviously-correct reference computations used to check the fast
//! paths: central finite differences, an exhaustive active-set solver for
//! the GEM projection, exhaustive two-way clustering and the adjusted Rand
//! index.

use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::bench::{LabelId, RelationVocab};
use crate::error::{Error, Result};
use crate::model::{RankItem, RelModel, Side, VocabEmbedding};
use crate::numgrad::{dot, norm, sq_dist, Tape};
use crate::rng::{rng_for, Purpose, Rng};

/// Central differences `(f(x + h e_i) - f(x - h e_i)) / 2h` for every `i`.
pub fn central_difference(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|)`, 0 when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

fn gaussian(rng: &mut Rng) -> f64 {
    <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
}

struct GradInstance {
    model: RelModel,
    relations: RelationVocab,
    items: Vec<(Vec<u32>, LabelId, Vec<LabelId>)>,
    align: bool,
    target: Option<Vec<f64>>,
    margin: f64,
}

impl GradInstance {
    fn random(seed: u64) -> Result<Self> {
        let mut rng = rng_for(seed, Purpose::SelfTest, 0);
        let d_emb = rng.random_range(2..=5);
        let d_hid = rng.random_range(2..=6);
        let n_tokens = 6;
        let rows: Vec<(String, Vec<f64>)> = (0..n_tokens)
            .map(|i| (format!("t{i}"), (0..d_emb).map(|_| gaussian(&mut rng)).collect()))
            .collect();
        let vocab = Arc::new(VocabEmbedding::from_rows(d_emb, rows)?);
        let n_rel = rng.random_range(3..=5u32);
        let names = (0..n_rel).map(|r| format!("r{r}")).collect();
        let rel_tokens = (0..n_rel)
            .map(|_| {
                let len = rng.random_range(1..=2);
                (0..len).map(|_| rng.random_range(1..=n_tokens as u32)).collect()
            })
            .collect();
        let relations = RelationVocab::new(names, rel_tokens, &vocab)?;
        let mut model = RelModel::new(vocab, d_hid, seed)?;
        for v in model.params_mut().values_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        let n_items = rng.random_range(1..=3);
        let items = (0..n_items)
            .map(|_| {
                let len = rng.random_range(1..=3);
                let tokens = (0..len).map(|_| rng.random_range(1..=n_tokens as u32)).collect();
                let gold = rng.random_range(0..n_rel);
                let negatives: Vec<LabelId> = (0..n_rel)
                    .filter(|&l| l != gold && rng.random_bool(0.7))
                    .collect();
                let negatives = if negatives.is_empty() {
                    vec![(gold + 1) % n_rel]
                } else {
                    negatives
                };
                (tokens, gold, negatives)
            })
            .collect();
        let align = rng.random_bool(0.5);
        let target = rng
            .random_bool(0.3)
            .then(|| (0..d_hid).map(|_| gaussian(&mut rng)).collect());
        Ok(Self {
            model,
            relations,
            items,
            align,
            target,
            margin: 1.0,
        })
    }

    fn loss_and_grad(&self, model: &RelModel, want_grad: bool) -> Result<(f64, Vec<f64>)> {
        let mut tape = Tape::new(model.params());
        let items: Vec<RankItem<'_>> = self
            .items
            .iter()
            .map(|(t, g, n)| RankItem {
                tokens: t,
                gold: *g,
                negatives: n,
            })
            .collect();
        let mut loss = model.batch_loss(&mut tape, &items, self.margin, &self.relations, self.align)?;
        if let Some(target) = &self.target {
            let s = model.encode_on_tape(&mut tape, &self.items[0].0, Side::Sentence, self.align)?;
            let d = tape.sq_dist(s, target.clone())?;
            loss = tape.sum(&[loss, d])?;
        }
        let value = tape.scalar(loss);
        let grad = if want_grad {
            tape.backward(loss, 1.0)?.into_values()
        } else {
            Vec::new()
        };
        Ok((value, grad))
    }
}

/// Relative error between the tape gradient and central differences on a
/// random small model and batch drawn from `seed`.
pub fn gradient_check(seed: u64, h: f64) -> Result<f64> {
    let inst = GradInstance::random(seed)?;
    let (_, analytic) = inst.loss_and_grad(&inst.model, true)?;
    let mut probe = inst.model.clone();
    let x = inst.model.params().values().to_vec();
    let numeric = central_difference(
        |v| {
            probe.params_mut().values_mut().copy_from_slice(v);
            inst.loss_and_grad(&probe, false).map(|(l, _)| l).unwrap_or(f64::NAN)
        },
        &x,
        h,
    );
    Ok(relative_error(&analytic, &numeric))
}

/// Solves `A x = b` for a small dense system; `None` when `A` is singular.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() <= 1e-10 * scale {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for c in col..n {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Exact solution of `min |x - g|^2 s.t. G x >= 0` by trying every active
/// set. Only sensible for a handful of constraints.
pub fn gem_oracle(g: &[f64], rows: &[Vec<f64>]) -> Result<Vec<f64>> {
    let k = rows.len();
    if k > 16 {
        return Err(Error::invalid("active-set enumeration limited to 16 constraints"));
    }
    if rows.iter().any(|r| r.len() != g.len()) {
        return Err(Error::invalid("constraint rows must match the gradient length"));
    }
    let feasible = |x: &[f64]| {
        let scale = norm(x).max(1.0);
        rows.iter()
            .all(|r| dot(r, x) >= -1e-9 * scale * norm(r).max(1.0))
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << k) {
        let active: Vec<&Vec<f64>> = (0..k).filter(|i| mask >> i & 1 == 1).map(|i| &rows[i]).collect();
        let x = if active.is_empty() {
            g.to_vec()
        } else {
            // x = g + A' v with A x = 0, so (A A') v = -A g
            let gram = active
                .iter()
                .map(|ri| active.iter().map(|rj| dot(ri, rj)).collect())
                .collect();
            let rhs = active.iter().map(|r| -dot(r, g)).collect();
            let Some(v) = solve(gram, rhs) else { continue };
            let mut x = g.to_vec();
            for (r, vi) in active.iter().zip(&v) {
                crate::numgrad::axpy(*vi, r, &mut x);
            }
            x
        };
        if !feasible(&x) {
            continue;
        }
        let d = sq_dist(&x, g);
        if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
            best = Some((d, x));
        }
    }
    // x = 0 is always feasible, and some active set reaches the optimum
    Ok(best.map(|(_, x)| x).unwrap_or_else(|| vec![0.0; g.len()]))
}

/// Two-way partition of `points` with the smallest within-cluster sum of
/// squares, by enumeration. Point 0 is always in cluster 0.
pub fn best_two_partition(points: &[Vec<f64>]) -> Result<(Vec<usize>, f64)> {
    let n = points.len();
    if !(2..=20).contains(&n) {
        return Err(Error::invalid("exhaustive partition needs 2 to 20 points"));
    }
    let inertia = |assign: &[usize]| {
        let mut total = 0.0;
        for c in 0..2 {
            let members: Vec<&Vec<f64>> = (0..n).filter(|&i| assign[i] == c).map(|i| &points[i]).collect();
            let d = points[0].len();
            let mut mean = vec![0.0; d];
            for m in &members {
                crate::numgrad::axpy(1.0 / members.len() as f64, m, &mut mean);
            }
            total += members.iter().map(|m| sq_dist(m, &mean)).sum::<f64>();
        }
        total
    };
    let mut best: Option<(Vec<usize>, f64)> = None;
    for mask in 1u32..(1 << (n - 1)) {
        let assign: Vec<usize> = (0..n)
            .map(|i| if i == 0 { 0 } else { (mask >> (i - 1) & 1) as usize })
            .collect();
        let v = inertia(&assign);
        if best.as_ref().is_none_or(|(_, b)| v < *b) {
            best = Some((assign, v));
        }
    }
    Ok(best.expect("at least one two-way split"))
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            op: "adjusted_rand_index",
            expected: a.len(),
            got: b.len(),
        });
    }
    let n = a.len() as f64;
    let pairs = |c: f64| c * (c - 1.0) / 2.0;
    let mut table: HashMap<(usize, usize), f64> = HashMap::new();
    let mut rows: HashMap<usize, f64> = HashMap::new();
    let mut cols: HashMap<usize, f64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1.0;
        *rows.entry(x).or_default() += 1.0;
        *cols.entry(y).or_default() += 1.0;
    }
    let index: f64 = table.values().map(|&c| pairs(c)).sum();
    let sum_a: f64 = rows.values().map(|&c| pairs(c)).sum();
    let sum_b: f64 = cols.values().map(|&c| pairs(c)).sum();
    let expected = sum_a * sum_b / pairs(n);
    let max = 0.5 * (sum_a + sum_b);
    if max == expected {
        // both labelings trivial
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

/// Herding written against the residual `t * mean - sum`: the sample whose
/// vector is nearest that residual is the one that brings the running mean
/// closest to the target.
pub fn herding_reference(embeddings: &[Vec<f64>], b: usize) -> Vec<usize> {
    let n = embeddings.len();
    if n == 0 {
        return Vec::new();
    }
    let dim = embeddings[0].len();
    let mean: Vec<f64> = (0..dim)
        .map(|j| embeddings.iter().map(|e| e[j]).sum::<f64>() / n as f64)
        .collect();
    let mut sum = vec![0.0; dim];
    let mut picked: Vec<usize> = Vec::new();
    for t in 1..=b.min(n) {
        let residual: Vec<f64> = (0..dim).map(|j| t as f64 * mean[j] - sum[j]).collect();
        let pick = (0..n)
            .filter(|i| !picked.contains(i))
            .min_by(|&i, &j| {
                sq_dist(&embeddings[i], &residual).total_cmp(&sq_dist(&embeddings[j], &residual))
            })
            .expect("unpicked sample remains");
        crate::numgrad::axpy(1.0, &embeddings[pick], &mut sum);
        picked.push(pick);
    }
    picked
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn central_difference_of_quadratic() {
        let g = central_difference(|x| x[0] * x[0] + 3.0 * x[1], &[2.0, 5.0], 1e-4);
        assert!((g[0] - 4.0).abs() < 1e-8);
        assert!((g[1] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn oracle_on_known_projections() {
        let x = gem_oracle(&[1.0, -1.0], &[vec![0.0, 1.0]]).unwrap();
        assert!(sq_dist(&x, &[1.0, 0.0]) < 1e-20);
        let x = gem_oracle(&[1.0, 1.0], &[vec![0.0, 1.0]]).unwrap();
        assert_eq!(x, vec![1.0, 1.0]);
        let x = gem_oracle(&[1.0, 0.0], &[vec![-1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        assert!(norm(&x) < 1e-12);
    }

    #[test]
    fn two_partition_of_separated_groups() {
        let pts = vec![vec![0.0], vec![0.1], vec![5.0], vec![5.2]];
        let (a, v) = best_two_partition(&pts).unwrap();
        assert_eq!(a, vec![0, 0, 1, 1]);
        assert!((v - (0.005 + 0.02)).abs() < 1e-12);
    }

    #[test]
    fn ari_values() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[5, 5, 7, 7]).unwrap(), 1.0);
        let v = adjusted_rand_index(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap();
        assert!(v < 0.0);
    }

    #[test]
    fn gradient_check_passes_on_a_few_instances() {
        for seed in 0..5 {
            let e = gradient_check(seed, 1e-6).unwrap();
            assert!(e < 1e-4, "seed {seed}: {e}");
        }
    }
}
