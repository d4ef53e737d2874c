use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of a named segment inside a [`Layout`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SegId(pub usize);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Ordered `(name, shape)` segments of a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Layout {
    segments: Vec<Segment>,
    total: usize,
}

impl Layout {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a `rows x cols` segment. Vectors are `n x 1`.
    pub fn push(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> SegId {
        let id = SegId(self.segments.len());
        self.segments.push(Segment {
            name: name.into(),
            rows,
            cols,
            offset: self.total,
        });
        self.total += rows * cols;
        id
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment(&self, id: SegId) -> &Segment {
        &self.segments[id.0]
    }

    pub fn find(&self, name: &str) -> Option<SegId> {
        self.segments.iter().position(|s| s.name == name).map(SegId)
    }

    pub fn total_len(&self) -> usize {
        self.total
    }
}

/// Flat vector of every trainable parameter, laid out by a fixed [`Layout`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    layout: Arc<Layout>,
    values: Vec<f64>,
}

impl ParamVector {
    pub fn zeros(layout: Arc<Layout>) -> Self {
        let values = vec![0.0; layout.total_len()];
        Self { layout, values }
    }

    pub fn from_values(layout: Arc<Layout>, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.total_len() {
            return Err(Error::DimensionMismatch {
                op: "ParamVector::from_values",
                expected: layout.total_len(),
                got: values.len(),
            });
        }
        Ok(Self { layout, values })
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn seg(&self, id: SegId) -> &[f64] {
        &self.values[self.layout.segment(id).range()]
    }

    pub fn seg_mut(&mut self, id: SegId) -> &mut [f64] {
        let r = self.layout.segment(id).range();
        &mut self.values[r]
    }

    /// Bitwise equality of values, distinguishing `0.0` from `-0.0`.
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Gradient aligned to a [`ParamVector`] layout.
#[derive(Debug, Clone, PartialEq)]
pub struct GradVector {
    layout: Arc<Layout>,
    values: Vec<f64>,
}

impl GradVector {
    pub fn zeros(layout: Arc<Layout>) -> Self {
        let values = vec![0.0; layout.total_len()];
        Self { layout, values }
    }

    pub fn from_values(layout: Arc<Layout>, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.total_len() {
            return Err(Error::DimensionMismatch {
                op: "GradVector::from_values",
                expected: layout.total_len(),
                got: values.len(),
            });
        }
        Ok(Self { layout, values })
    }

    /// A gradient over an anonymous single-segment layout; handy for projections.
    pub fn from_vec(values: Vec<f64>) -> Self {
        let mut layout = Layout::new();
        layout.push("g", values.len(), 1);
        Self {
            layout: Arc::new(layout),
            values,
        }
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn seg(&self, id: SegId) -> &[f64] {
        &self.values[self.layout.segment(id).range()]
    }

    pub fn seg_mut(&mut self, id: SegId) -> &mut [f64] {
        let r = self.layout.segment(id).range();
        &mut self.values[r]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn add_assign(&mut self, other: &GradVector) -> Result<()> {
        if other.len() != self.len() {
            return Err(Error::DimensionMismatch {
                op: "GradVector::add_assign",
                expected: self.len(),
                got: other.len(),
            });
        }
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.values {
            *v *= s;
        }
    }

    pub fn dot(&self, other: &GradVector) -> f64 {
        super::matrix::dot(&self.values, &other.values)
    }
}

/// `params <- params - lr * grad`. Rejects the whole step if any gradient entry is non-finite.
pub fn sgd_step(params: &mut ParamVector, grad: &GradVector, lr: f64) -> Result<()> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::invalid(format!("learning rate must be positive, got {lr}")));
    }
    if grad.len() != params.len() {
        return Err(Error::DimensionMismatch {
            op: "sgd_step",
            expected: params.len(),
            got: grad.len(),
        });
    }
    if !grad.is_finite() {
        return Err(Error::NonFinite("sgd_step gradient"));
    }
    for (p, g) in params.values.iter_mut().zip(&grad.values) {
        *p -= lr * g;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two() -> Arc<Layout> {
        let mut l = Layout::new();
        l.push("w", 2, 1);
        Arc::new(l)
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = ParamVector::from_values(two(), vec![1.0, 1.0]).unwrap();
        let g = GradVector::zeros(two());
        sgd_step(&mut p, &g, 0.1).unwrap();
        assert_eq!(p.values(), &[1.0, 1.0]);
    }

    #[test]
    fn plain_step() {
        let mut p = ParamVector::from_values(two(), vec![1.0, 1.0]).unwrap();
        let g = GradVector::from_values(two(), vec![1.0, -1.0]).unwrap();
        sgd_step(&mut p, &g, 0.5).unwrap();
        assert_eq!(p.values(), &[0.5, 1.5]);
    }

    #[test]
    fn nan_gradient_rejected_without_touching_params() {
        let mut p = ParamVector::from_values(two(), vec![1.0, 1.0]).unwrap();
        let g = GradVector::from_values(two(), vec![f64::NAN, 0.0]).unwrap();
        assert!(matches!(sgd_step(&mut p, &g, 0.5), Err(Error::NonFinite(_))));
        assert_eq!(p.values(), &[1.0, 1.0]);
    }

    #[test]
    fn layout_offsets() {
        let mut l = Layout::new();
        let a = l.push("a", 2, 3);
        let b = l.push("b", 4, 1);
        assert_eq!(l.segment(a).range(), 0..6);
        assert_eq!(l.segment(b).range(), 6..10);
        assert_eq!(l.total_len(), 10);
        assert_eq!(l.find("b"), Some(b));
    }
}
