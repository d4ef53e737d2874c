use crate::error::{Error, Result};
use crate::numgrad::{GradVector, ParamVector};

/// Diagonal Fisher estimate with the parameters it was computed at.
#[derive(Debug, Clone)]
pub struct FisherDiag {
    values: Vec<f64>,
    anchor: ParamVector,
}

impl FisherDiag {
    pub fn new(values: Vec<f64>, anchor: ParamVector) -> Result<Self> {
        if values.len() != anchor.len() {
            return Err(Error::DimensionMismatch {
                op: "FisherDiag",
                expected: anchor.len(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::invalid("Fisher entries must be finite and non-negative"));
        }
        Ok(Self { values, anchor })
    }

    /// Mean of squared per-sample gradients.
    pub fn from_gradients(grads: &[GradVector], anchor: ParamVector) -> Result<Self> {
        let Some(first) = grads.first() else {
            return Err(Error::invalid("Fisher estimate from no samples"));
        };
        let mut values = vec![0.0; first.len()];
        for g in grads {
            if g.len() != values.len() {
                return Err(Error::DimensionMismatch {
                    op: "FisherDiag::from_gradients",
                    expected: values.len(),
                    got: g.len(),
                });
            }
            for (f, gi) in values.iter_mut().zip(g.values()) {
                *f += gi * gi;
            }
        }
        let n = grads.len() as f64;
        for f in &mut values {
            *f /= n;
        }
        Self::new(values, anchor)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn anchor(&self) -> &ParamVector {
        &self.anchor
    }

    /// `alpha * sum_i F_i (theta_i - theta*_i)^2`
    pub fn penalty(&self, params: &ParamVector, alpha: f64) -> f64 {
        let mut acc = 0.0;
        for ((f, t), a) in self.values.iter().zip(params.values()).zip(self.anchor.values()) {
            let d = t - a;
            acc += f * d * d;
        }
        alpha * acc
    }

    /// Adds `2 alpha F (theta - theta*)` to `grad`.
    pub fn add_penalty_grad(&self, params: &ParamVector, alpha: f64, grad: &mut GradVector) -> Result<()> {
        if grad.len() != self.values.len() || params.len() != self.values.len() {
            return Err(Error::DimensionMismatch {
                op: "ewc penalty gradient",
                expected: self.values.len(),
                got: grad.len(),
            });
        }
        let g = grad.values_mut();
        for (i, ((f, t), a)) in self
            .values
            .iter()
            .zip(params.values())
            .zip(self.anchor.values())
            .enumerate()
        {
            g[i] += 2.0 * alpha * f * (t - a);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::numgrad::Layout;

    fn pv(v: &[f64]) -> ParamVector {
        let mut l = Layout::new();
        l.push("w", v.len(), 1);
        ParamVector::from_values(Arc::new(l), v.to_vec()).unwrap()
    }

    #[test]
    fn worked_example() {
        let f = FisherDiag::new(vec![1.0, 2.0], pv(&[0.0, 0.0])).unwrap();
        let theta = pv(&[1.0, 1.0]);
        assert_eq!(f.penalty(&theta, 100.0), 300.0);
        let mut g = GradVector::zeros(theta.layout().clone());
        f.add_penalty_grad(&theta, 100.0, &mut g).unwrap();
        assert_eq!(g.values(), &[200.0, 400.0]);
    }

    #[test]
    fn zero_at_anchor() {
        let f = FisherDiag::new(vec![3.0, 5.0], pv(&[0.5, -1.0])).unwrap();
        let theta = pv(&[0.5, -1.0]);
        assert_eq!(f.penalty(&theta, 100.0), 0.0);
        let mut g = GradVector::zeros(theta.layout().clone());
        f.add_penalty_grad(&theta, 100.0, &mut g).unwrap();
        assert_eq!(g.values(), &[0.0, 0.0]);
    }

    #[test]
    fn mean_of_squares() {
        let a = pv(&[0.0, 0.0]);
        let g1 = GradVector::from_values(a.layout().clone(), vec![1.0, -2.0]).unwrap();
        let g2 = GradVector::from_values(a.layout().clone(), vec![3.0, 0.0]).unwrap();
        let f = FisherDiag::from_gradients(&[g1, g2], a).unwrap();
        assert_eq!(f.values(), &[5.0, 2.0]);
        assert!(FisherDiag::new(vec![-1.0, 0.0], pv(&[0.0, 0.0])).is_err());
    }
}
