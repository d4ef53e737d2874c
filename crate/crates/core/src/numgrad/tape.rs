//! Reverse-mode differentiation over a linear record of vector operations.
//!
//! A [`Tape`] borrows the [`ParamVector`] it reads weights from, so parameters
//! cannot change between the forward pass and [`Tape::backward`]. Every
//! recorded node keeps its forward value; the reverse sweep walks the records
//! from the loss back to the inputs and scatters weight gradients into a
//! [`GradVector`] sharing the parameter layout.

use super::matrix::{axpy, dot, norm};
use super::params::{GradVector, ParamVector, SegId};
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Affine {
        x: Var,
        w: SegId,
        b: Option<SegId>,
    },
    Tanh(Var),
    Cosine {
        u: Var,
        v: Var,
        // 0 when either norm vanished
        inv_nu_nv: f64,
        inv_nu2: f64,
        inv_nv2: f64,
    },
    Hinge {
        pos: Var,
        neg: Var,
    },
    Sum(Vec<Var>),
    Scale(Var, f64),
    SqDist {
        x: Var,
        target: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Vec<f64>,
    op: Op,
}

pub struct Tape<'p> {
    params: &'p ParamVector,
    nodes: Vec<Node>,
    frozen: Vec<bool>,
    warnings: usize,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamVector) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            frozen: vec![false; params.layout().segments().len()],
            warnings: 0,
        }
    }

    /// Excludes a segment from gradient accumulation. Gradients still flow
    /// through it to upstream nodes.
    pub fn freeze(&mut self, seg: SegId) {
        self.frozen[seg.0] = true;
    }

    pub fn params(&self) -> &ParamVector {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Zero-norm cosine evaluations seen so far.
    pub fn warnings(&self) -> usize {
        self.warnings
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn input(&mut self, x: Vec<f64>) -> Var {
        self.push(x, Op::Input)
    }

    /// `W x + b`, reading `W` (rows x cols) and `b` from the borrowed parameters.
    pub fn affine(&mut self, x: Var, w: SegId, b: Option<SegId>) -> Result<Var> {
        let layout = self.params.layout();
        let ws = layout.segment(w);
        let xv = &self.nodes[x.0].value;
        if xv.len() != ws.cols {
            return Err(Error::DimensionMismatch {
                op: "affine",
                expected: ws.cols,
                got: xv.len(),
            });
        }
        if let Some(b) = b {
            let bs = layout.segment(b);
            if bs.len() != ws.rows {
                return Err(Error::DimensionMismatch {
                    op: "affine bias",
                    expected: ws.rows,
                    got: bs.len(),
                });
            }
        }
        let wd = self.params.seg(w);
        let cols = ws.cols;
        let mut out: Vec<f64> = (0..ws.rows)
            .map(|i| dot(&wd[i * cols..(i + 1) * cols], xv))
            .collect();
        if let Some(b) = b {
            for (o, bi) in out.iter_mut().zip(self.params.seg(b)) {
                *o += bi;
            }
        }
        Ok(self.push(out, Op::Affine { x, w, b }))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.nodes[x.0].value.iter().map(|v| v.tanh()).collect();
        self.push(out, Op::Tanh(x))
    }

    /// Cosine similarity. A zero-norm operand yields 0 with zero gradient and
    /// bumps [`Tape::warnings`].
    pub fn cosine(&mut self, u: Var, v: Var) -> Result<Var> {
        let uv = &self.nodes[u.0].value;
        let vv = &self.nodes[v.0].value;
        if uv.len() != vv.len() {
            return Err(Error::DimensionMismatch {
                op: "cosine",
                expected: uv.len(),
                got: vv.len(),
            });
        }
        let nu = norm(uv);
        let nv = norm(vv);
        let (c, inv_nu_nv, inv_nu2, inv_nv2) = if nu > 0.0 && nv > 0.0 {
            let inv = 1.0 / (nu * nv);
            ((dot(uv, vv) * inv).clamp(-1.0, 1.0), inv, 1.0 / (nu * nu), 1.0 / (nv * nv))
        } else {
            self.warnings += 1;
            log::warn!("cosine of a zero-norm vector; returning 0");
            (0.0, 0.0, 0.0, 0.0)
        };
        Ok(self.push(
            vec![c],
            Op::Cosine {
                u,
                v,
                inv_nu_nv,
                inv_nu2,
                inv_nv2,
            },
        ))
    }

    /// `max(0, margin - pos + neg)` over two scalar nodes.
    pub fn hinge(&mut self, pos: Var, neg: Var, margin: f64) -> Var {
        let val = margin_rank_loss(self.scalar(pos), self.scalar(neg), margin);
        self.push(vec![val], Op::Hinge { pos, neg })
    }

    /// Elementwise sum of equally sized nodes.
    pub fn sum(&mut self, xs: &[Var]) -> Result<Var> {
        let Some(first) = xs.first() else {
            return Err(Error::invalid("sum over no nodes"));
        };
        let n = self.nodes[first.0].value.len();
        let mut out = vec![0.0; n];
        for x in xs {
            let xv = &self.nodes[x.0].value;
            if xv.len() != n {
                return Err(Error::DimensionMismatch {
                    op: "sum",
                    expected: n,
                    got: xv.len(),
                });
            }
            for (o, v) in out.iter_mut().zip(xv) {
                *o += v;
            }
        }
        Ok(self.push(out, Op::Sum(xs.to_vec())))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let out = self.nodes[x.0].value.iter().map(|v| v * s).collect();
        self.push(out, Op::Scale(x, s))
    }

    /// `||x - target||^2` against a constant target.
    pub fn sq_dist(&mut self, x: Var, target: Vec<f64>) -> Result<Var> {
        let xv = &self.nodes[x.0].value;
        if xv.len() != target.len() {
            return Err(Error::DimensionMismatch {
                op: "sq_dist",
                expected: xv.len(),
                got: target.len(),
            });
        }
        let val = super::matrix::sq_dist(xv, &target);
        Ok(self.push(vec![val], Op::SqDist { x, target }))
    }

    /// Gradient of the scalar `loss` node scaled by `seed`, for every parameter.
    /// Parameters never read on this tape (or frozen) get 0.
    pub fn backward(&self, loss: Var, seed: f64) -> Result<GradVector> {
        let mut grad = GradVector::zeros(self.params.layout().clone());
        self.backward_into(loss, seed, &mut grad)?;
        Ok(grad)
    }

    /// Like [`Tape::backward`] but accumulates into `grad`.
    pub fn backward_into(&self, loss: Var, seed: f64, grad: &mut GradVector) -> Result<()> {
        if loss.0 + 1 != self.nodes.len() {
            return Err(Error::TapeMutated);
        }
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::DimensionMismatch {
                op: "backward loss",
                expected: 1,
                got: self.nodes[loss.0].value.len(),
            });
        }
        if grad.len() != self.params.len() {
            return Err(Error::DimensionMismatch {
                op: "backward gradient buffer",
                expected: self.params.len(),
                got: grad.len(),
            });
        }
        let mut adj: Vec<Vec<f64>> = vec![Vec::new(); self.nodes.len()];
        adj[loss.0] = vec![seed];

        for idx in (0..=loss.0).rev() {
            if adj[idx].is_empty() {
                continue;
            }
            let g = std::mem::take(&mut adj[idx]);
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input => {}
                Op::Affine { x, w, b } => {
                    let ws = self.params.layout().segment(*w);
                    let cols = ws.cols;
                    let wd = self.params.seg(*w);
                    let xv = &self.nodes[x.0].value;
                    let dx = accum(&mut adj[x.0], cols);
                    for (i, gi) in g.iter().enumerate() {
                        if *gi != 0.0 {
                            axpy(*gi, &wd[i * cols..(i + 1) * cols], dx);
                        }
                    }
                    if !self.frozen[w.0] {
                        let dw = grad.seg_mut(*w);
                        for (i, gi) in g.iter().enumerate() {
                            if *gi != 0.0 {
                                axpy(*gi, xv, &mut dw[i * cols..(i + 1) * cols]);
                            }
                        }
                    }
                    if let Some(b) = b {
                        if !self.frozen[b.0] {
                            for (d, gi) in grad.seg_mut(*b).iter_mut().zip(&g) {
                                *d += gi;
                            }
                        }
                    }
                }
                Op::Tanh(x) => {
                    let n = g.len();
                    let dx = accum(&mut adj[x.0], n);
                    for ((d, gi), y) in dx.iter_mut().zip(&g).zip(&node.value) {
                        *d += gi * (1.0 - y * y);
                    }
                }
                Op::Cosine {
                    u,
                    v,
                    inv_nu_nv,
                    inv_nu2,
                    inv_nv2,
                } => {
                    if *inv_nu_nv == 0.0 {
                        continue;
                    }
                    let c = node.value[0];
                    let gs = g[0];
                    // d cos / du = v / (|u||v|) - cos * u / |u|^2
                    let (uv, vv) = (&self.nodes[u.0].value, &self.nodes[v.0].value);
                    let n = uv.len();
                    let du: Vec<f64> = uv
                        .iter()
                        .zip(vv)
                        .map(|(ui, vi)| gs * (vi * inv_nu_nv - c * ui * inv_nu2))
                        .collect();
                    let dv: Vec<f64> = uv
                        .iter()
                        .zip(vv)
                        .map(|(ui, vi)| gs * (ui * inv_nu_nv - c * vi * inv_nv2))
                        .collect();
                    axpy(1.0, &du, accum(&mut adj[u.0], n));
                    axpy(1.0, &dv, accum(&mut adj[v.0], n));
                }
                Op::Hinge { pos, neg } => {
                    if node.value[0] > 0.0 {
                        accum(&mut adj[pos.0], 1)[0] -= g[0];
                        accum(&mut adj[neg.0], 1)[0] += g[0];
                    }
                }
                Op::Sum(xs) => {
                    for x in xs {
                        axpy(1.0, &g, accum(&mut adj[x.0], g.len()));
                    }
                }
                Op::Scale(x, s) => {
                    axpy(*s, &g, accum(&mut adj[x.0], g.len()));
                }
                Op::SqDist { x, target } => {
                    let xv = &self.nodes[x.0].value;
                    let dx = accum(&mut adj[x.0], xv.len());
                    for ((d, xi), ti) in dx.iter_mut().zip(xv).zip(target) {
                        *d += 2.0 * g[0] * (xi - ti);
                    }
                }
            }
        }
        Ok(())
    }
}

fn accum(slot: &mut Vec<f64>, n: usize) -> &mut [f64] {
    if slot.is_empty() {
        *slot = vec![0.0; n];
    }
    slot
}

/// Cosine similarity of two plain vectors; 0 when either has zero norm.
pub fn cosine(u: &[f64], v: &[f64]) -> f64 {
    let nu = norm(u);
    let nv = norm(v);
    if nu == 0.0 || nv == 0.0 {
        log::warn!("cosine of a zero-norm vector; returning 0");
        return 0.0;
    }
    (dot(u, v) / (nu * nv)).clamp(-1.0, 1.0)
}

/// `max(0, margin - score_pos + score_neg)`
pub fn margin_rank_loss(score_pos: f64, score_neg: f64, margin: f64) -> f64 {
    (margin - score_pos + score_neg).max(0.0)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::numgrad::params::Layout;

    fn affine_params(w: &[f64], rows: usize, cols: usize, b: &[f64]) -> (ParamVector, SegId, SegId) {
        let mut l = Layout::new();
        let ws = l.push("w", rows, cols);
        let bs = l.push("b", rows, 1);
        let mut values = w.to_vec();
        values.extend_from_slice(b);
        (ParamVector::from_values(Arc::new(l), values).unwrap(), ws, bs)
    }

    #[test]
    fn affine_identity() {
        let (p, w, b) = affine_params(&[1.0, 0.0, 0.0, 1.0], 2, 2, &[0.0, 0.0]);
        let mut t = Tape::new(&p);
        let x = t.input(vec![3.0, -1.0]);
        let y = t.affine(x, w, Some(b)).unwrap();
        assert_eq!(t.value(y), &[3.0, -1.0]);
    }

    #[test]
    fn affine_direct_evaluation() {
        let (p, w, b) = affine_params(&[1.0, 2.0, 0.0, 1.0], 2, 2, &[1.0, 0.0]);
        let mut t = Tape::new(&p);
        let x = t.input(vec![1.0, 1.0]);
        let y = t.affine(x, w, Some(b)).unwrap();
        assert_eq!(t.value(y), &[4.0, 1.0]);
    }

    #[test]
    fn affine_dimension_mismatch() {
        let (p, w, b) = affine_params(&[0.0; 6], 2, 3, &[0.0, 0.0]);
        let mut t = Tape::new(&p);
        let x = t.input(vec![1.0, 1.0]);
        assert!(matches!(
            t.affine(x, w, Some(b)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]) - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]), 0.0);
        assert!((cosine(&[1.0, 1.0], &[1.0, 0.0]) - 0.707_106_781_186_547_5).abs() < 1e-6);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]), 0.0);
    }

    #[test]
    fn zero_norm_cosine_records_warning() {
        let p = ParamVector::zeros(Arc::new(Layout::new()));
        let mut t = Tape::new(&p);
        let u = t.input(vec![0.0, 0.0]);
        let v = t.input(vec![1.0, 0.0]);
        let c = t.cosine(u, v).unwrap();
        assert_eq!(t.scalar(c), 0.0);
        assert_eq!(t.warnings(), 1);
    }

    #[test]
    fn hinge_examples() {
        assert_eq!(margin_rank_loss(1.0, 0.0, 0.2), 0.0);
        assert!((margin_rank_loss(0.1, 0.3, 0.2) - 0.4).abs() < 1e-15);
        assert!((margin_rank_loss(0.5, 0.5, 0.2) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn half_squared_norm_gradient() {
        // loss = 0.5 * ||W x||^2, W = [1], x = 2  =>  dL/dW = W x * x = 4
        let mut l = Layout::new();
        let w = l.push("w", 1, 1);
        let unused = l.push("unused", 3, 1);
        let p = ParamVector::from_values(Arc::new(l), vec![1.0, 5.0, 5.0, 5.0]).unwrap();
        let mut t = Tape::new(&p);
        let x = t.input(vec![2.0]);
        let y = t.affine(x, w, None).unwrap();
        let sq = t.sq_dist(y, vec![0.0]).unwrap();
        let loss = t.scale(sq, 0.5);
        let g = t.backward(loss, 1.0).unwrap();
        assert_eq!(g.seg(w), &[4.0]);
        assert_eq!(g.seg(unused), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn backward_after_extension_is_rejected() {
        let (p, w, b) = affine_params(&[1.0], 1, 1, &[0.0]);
        let mut t = Tape::new(&p);
        let x = t.input(vec![1.0]);
        let y = t.affine(x, w, Some(b)).unwrap();
        let loss = t.sq_dist(y, vec![0.0]).unwrap();
        t.input(vec![0.0]);
        assert!(matches!(t.backward(loss, 1.0), Err(Error::TapeMutated)));
    }

    #[test]
    fn frozen_segment_gets_no_gradient_but_passes_it_through() {
        let mut l = Layout::new();
        let w1 = l.push("w1", 1, 1);
        let w2 = l.push("w2", 1, 1);
        let p = ParamVector::from_values(Arc::new(l), vec![2.0, 3.0]).unwrap();
        let mut t = Tape::new(&p);
        t.freeze(w2);
        let x = t.input(vec![1.0]);
        let h = t.affine(x, w1, None).unwrap();
        let y = t.affine(h, w2, None).unwrap();
        let loss = t.scale(y, 1.0);
        let g = t.backward(loss, 1.0).unwrap();
        assert_eq!(g.seg(w1), &[3.0]);
        assert_eq!(g.seg(w2), &[0.0]);
    }
}
