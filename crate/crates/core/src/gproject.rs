//! Constrained gradient updates: the GEM quadratic program and the A-GEM
//! single-constraint projection.
//!
//! GEM looks for the `g~` closest to `g` with `<g~, r_j> >= 0` for every
//! constraint row `r_j`. With `G` stacking the rows, the dual is
//!
//! ```text
//! min_{v >= 0}  1/2 v' (G G') v + v' G g,        g~ = g + G' v
//! ```
//!
//! which has one variable per previous task and is solved here by
//! accelerated projected gradient with step `1 / lambda_max(G G')`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::memory::MemoryEntry;
use crate::numgrad::{dot, GradVector};

pub const GEM_TOL: f64 = 1e-6;
pub const GEM_MAX_ITERS: usize = 1000;

/// One row per previous task, each the average memory gradient of that task.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    rows: Vec<Vec<f64>>,
    dim: usize,
}

impl ConstraintSet {
    pub fn new(dim: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        for r in &rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    op: "ConstraintSet row",
                    expected: dim,
                    got: r.len(),
                });
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("ConstraintSet row"));
            }
        }
        Ok(Self { rows, dim })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// `max_j max(0, -<x, r_j>)`
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.rows
            .iter()
            .map(|r| (-dot(x, r)).max(0.0))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionResult {
    pub g_tilde: Vec<f64>,
    pub dual: Vec<f64>,
    pub iterations: usize,
    pub max_violation: f64,
    pub converged: bool,
}

/// Computes the mean loss gradient over a list of memory entries.
pub trait LossGradient {
    fn mean_gradient(&mut self, entries: &[&MemoryEntry]) -> Result<GradVector>;
}

/// Average gradient over the stored entries of one previous task.
pub fn task_gradient(eval: &mut impl LossGradient, entries: &[&MemoryEntry]) -> Result<GradVector> {
    let Some(first) = entries.first() else {
        return Err(Error::invalid("task gradient over no entries"));
    };
    if entries.iter().any(|e| e.task_id != first.task_id) {
        return Err(Error::invalid("task gradient entries span several tasks"));
    }
    eval.mean_gradient(entries)
}

/// Solves the GEM projection. Feasible `g` is returned bit-for-bit with a zero
/// dual. When `max_iters` runs out the best iterate is returned with
/// `converged = false`.
pub fn gem_project(g: &[f64], constraints: &ConstraintSet, tol: f64, max_iters: usize) -> Result<ProjectionResult> {
    if g.len() != constraints.dim() {
        return Err(Error::DimensionMismatch {
            op: "gem_project",
            expected: constraints.dim(),
            got: g.len(),
        });
    }
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("tolerance must be positive, got {tol}")));
    }
    let rows = constraints.rows();
    let k = rows.len();
    let p: Vec<f64> = rows.iter().map(|r| dot(r, g)).collect();
    if p.iter().all(|&x| x >= 0.0) {
        return Ok(ProjectionResult {
            g_tilde: g.to_vec(),
            dual: vec![0.0; k],
            iterations: 0,
            max_violation: 0.0,
            converged: true,
        });
    }

    let mut q = vec![0.0; k * k];
    for i in 0..k {
        for j in i..k {
            let v = dot(&rows[i], &rows[j]);
            q[i * k + j] = v;
            q[j * k + i] = v;
        }
    }
    let lipschitz = lambda_max(&q, k) * (1.0 + 1e-9);
    if !(lipschitz > 0.0) {
        // every row is zero; the constraints are vacuous
        return Ok(ProjectionResult {
            g_tilde: g.to_vec(),
            dual: vec![0.0; k],
            iterations: 0,
            max_violation: 0.0,
            converged: true,
        });
    }
    let step = 1.0 / lipschitz;

    let grad_at = |v: &[f64], out: &mut [f64]| {
        for i in 0..k {
            out[i] = dot(&q[i * k..(i + 1) * k], v) + p[i];
        }
    };
    let objective = |v: &[f64], grad: &[f64]| {
        // 1/2 v'Qv + v'p = 1/2 v'(Qv + p) + 1/2 v'p
        0.5 * (dot(v, grad) + dot(v, &p))
    };
    let primal = |v: &[f64]| {
        let mut x = g.to_vec();
        for (r, vj) in rows.iter().zip(v) {
            if *vj != 0.0 {
                crate::numgrad::axpy(*vj, r, &mut x);
            }
        }
        x
    };
    // natural residual of the complementarity conditions
    let residual = |v: &[f64], grad: &[f64]| {
        v.iter()
            .zip(grad)
            .map(|(vi, gi)| vi.min(*gi).abs())
            .fold(0.0, f64::max)
    };

    let mut v = vec![0.0; k];
    let mut y = v.clone();
    let mut t = 1.0f64;
    let mut gy = vec![0.0; k];
    let mut gv = vec![0.0; k];
    grad_at(&v, &mut gv);
    let mut f_prev = objective(&v, &gv);
    let mut best = (residual(&v, &gv), v.clone());
    let mut iterations = 0;

    while iterations < max_iters {
        iterations += 1;
        grad_at(&y, &mut gy);
        let next: Vec<f64> = y
            .iter()
            .zip(&gy)
            .map(|(yi, gi)| (yi - step * gi).max(0.0))
            .collect();
        grad_at(&next, &mut gv);
        let f_next = objective(&next, &gv);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        if f_next > f_prev {
            // adaptive restart
            y = next.clone();
            t = 1.0;
        } else {
            let beta = (t - 1.0) / t_next;
            y = next
                .iter()
                .zip(&v)
                .map(|(n, o)| n + beta * (n - o))
                .collect();
            t = t_next;
        }
        v = next;
        f_prev = f_next;

        let res = residual(&v, &gv);
        if res < best.0 {
            best = (res, v.clone());
        }
        let viol = gv.iter().map(|x| (-x).max(0.0)).fold(0.0, f64::max);
        if viol <= tol && res <= tol {
            let x = primal(&v);
            return Ok(ProjectionResult {
                max_violation: constraints.max_violation(&x),
                g_tilde: x,
                dual: v,
                iterations,
                converged: true,
            });
        }
    }

    let v = best.1;
    let x = primal(&v);
    let max_violation = constraints.max_violation(&x);
    log::warn!(
        "GEM projection stopped after {iterations} iterations with violation {max_violation:.3e}"
    );
    Ok(ProjectionResult {
        g_tilde: x,
        dual: v,
        iterations,
        max_violation,
        converged: max_violation <= tol,
    })
}

/// Largest eigenvalue of a symmetric PSD `k x k` matrix by power iteration.
fn lambda_max(q: &[f64], k: usize) -> f64 {
    let mut x = vec![1.0 / (k as f64).sqrt(); k];
    let mut lambda = 0.0;
    for _ in 0..200 {
        let y: Vec<f64> = (0..k).map(|i| dot(&q[i * k..(i + 1) * k], &x)).collect();
        let n = dot(&y, &y).sqrt();
        if n == 0.0 {
            return 0.0;
        }
        let next = dot(&x, &y);
        x = y.into_iter().map(|v| v / n).collect();
        if (next - lambda).abs() <= 1e-12 * next.abs() {
            lambda = next;
            break;
        }
        lambda = next;
    }
    // the Rayleigh quotient underestimates; the max row sum bounds from above
    let gershgorin = (0..k)
        .map(|i| q[i * k..(i + 1) * k].iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    if lambda <= 0.0 {
        gershgorin
    } else {
        lambda.min(gershgorin)
    }
}

/// A-GEM: if `<g, g_ref> < 0`, removes the component of `g` along `g_ref`.
/// A zero reference leaves `g` unchanged.
pub fn agem_project(g: &[f64], g_ref: &[f64]) -> Result<Vec<f64>> {
    if g.len() != g_ref.len() {
        return Err(Error::DimensionMismatch {
            op: "agem_project",
            expected: g.len(),
            got: g_ref.len(),
        });
    }
    let rr = dot(g_ref, g_ref);
    if rr == 0.0 {
        log::warn!("A-GEM reference gradient is zero; update left unprojected");
        return Ok(g.to_vec());
    }
    let gr = dot(g, g_ref);
    if gr >= 0.0 {
        return Ok(g.to_vec());
    }
    let coef = gr / rr;
    Ok(g.iter().zip(g_ref).map(|(gi, ri)| gi - coef * ri).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cs(rows: Vec<Vec<f64>>) -> ConstraintSet {
        ConstraintSet::new(rows[0].len(), rows).unwrap()
    }

    #[test]
    fn feasible_input_returned_unchanged() {
        let r = gem_project(&[1.0, 0.0], &cs(vec![vec![1.0, 0.0]]), GEM_TOL, GEM_MAX_ITERS).unwrap();
        assert_eq!(r.g_tilde, vec![1.0, 0.0]);
        assert_eq!(r.dual, vec![0.0]);
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn single_constraint_closed_form() {
        let r = gem_project(&[-1.0, 0.0], &cs(vec![vec![1.0, 0.0]]), GEM_TOL, GEM_MAX_ITERS).unwrap();
        assert!(r.converged);
        assert!(r.g_tilde.iter().all(|v| v.abs() < 1e-6));
        assert!(r.dual[0] > 0.0);
    }

    #[test]
    fn two_constraints() {
        let r = gem_project(
            &[1.0, -1.0],
            &cs(vec![vec![1.0, 0.0], vec![0.0, 1.0]]),
            GEM_TOL,
            GEM_MAX_ITERS,
        )
        .unwrap();
        assert!((r.g_tilde[0] - 1.0).abs() < 1e-6);
        assert!(r.g_tilde[1].abs() < 1e-6);
        assert!(r.dual.iter().all(|d| *d >= 0.0));
    }

    #[test]
    fn opposing_constraints_force_zero() {
        let r = gem_project(&[-0.3], &cs(vec![vec![2.0], vec![-1.0]]), GEM_TOL, GEM_MAX_ITERS).unwrap();
        assert!(r.g_tilde[0].abs() < 1e-6);
    }

    #[test]
    fn dimension_checks() {
        assert!(gem_project(&[1.0], &cs(vec![vec![1.0, 0.0]]), 1e-6, 10).is_err());
        assert!(gem_project(&[1.0, 0.0], &cs(vec![vec![1.0, 0.0]]), 0.0, 10).is_err());
        assert!(ConstraintSet::new(2, vec![vec![1.0]]).is_err());
    }

    #[test]
    fn agem_examples() {
        assert_eq!(agem_project(&[1.0, 1.0], &[1.0, 0.0]).unwrap(), vec![1.0, 1.0]);
        assert_eq!(agem_project(&[-1.0, 1.0], &[1.0, 0.0]).unwrap(), vec![0.0, 1.0]);
        assert_eq!(agem_project(&[-2.0, 0.0], &[2.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(agem_project(&[-2.0, 0.0], &[0.0, 0.0]).unwrap(), vec![-2.0, 0.0]);
    }

    #[test]
    fn task_gradient_rejects_empty_and_mixed() {
        struct Never;
        impl LossGradient for Never {
            fn mean_gradient(&mut self, _: &[&MemoryEntry]) -> Result<GradVector> {
                unreachable!()
            }
        }
        assert!(task_gradient(&mut Never, &[]).is_err());
        let s = crate::bench::Sample::new(vec![1], 0, vec![0]).unwrap();
        let a = MemoryEntry { task_id: 0, sample: s.clone(), anchor: vec![] };
        let b = MemoryEntry { task_id: 1, sample: s, anchor: vec![] };
        assert!(task_gradient(&mut Never, &[&a, &b]).is_err());
    }
}
