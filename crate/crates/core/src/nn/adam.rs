use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Adam with bias-corrected first and second moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    steps: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(lr: f32, params: &[Tensor]) -> Self {
        Self::with_betas(lr, 0.9, 0.999, 1e-8, params)
    }

    pub fn with_betas(lr: f32, beta1: f32, beta2: f32, eps: f32, params: &[Tensor]) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self {
            lr,
            beta1,
            beta2,
            eps,
            steps: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// Restores saved moments; shapes must match `params`.
    pub fn restore(&mut self, steps: u64, m: Vec<Tensor>, v: Vec<Tensor>) -> Result<()> {
        let ok = |s: &[Tensor]| s.len() == self.m.len() && s.iter().zip(&self.m).all(|(a, b)| a.shape() == b.shape());
        if !ok(&m) || !ok(&v) {
            return Err(Error::CheckpointMismatch("optimizer state does not match parameters".into()));
        }
        self.steps = steps;
        self.m = m;
        self.v = v;
        Ok(())
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn moments(&self) -> (&[Tensor], &[Tensor]) {
        (&self.m, &self.v)
    }

    /// Applies one update. Non-finite gradients abort the step before any
    /// parameter or moment changes.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(Error::CountMismatch {
                expected: self.m.len(),
                found: grads.len(),
            });
        }
        for (p, g) in params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(Error::shape(format!("{:?}", p.shape()), format!("{:?}", g.shape())));
            }
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteDetected("optimizer gradients".into()));
        }
        self.steps += 1;
        let t = self.steps as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for (((pi, gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let mhat = *mi / c1;
                let vhat = *vi / c2;
                *pi -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_param(x: f32) -> Vec<Tensor> {
        vec![Tensor::new(vec![1], vec![x]).unwrap()]
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = scalar_param(0.7);
        let mut opt = Adam::new(0.1, &p);
        for _ in 0..5 {
            opt.step(&mut p, &scalar_param(0.0)).unwrap();
        }
        assert_eq!(p[0].data(), &[0.7]);
    }

    #[test]
    fn constant_gradient_decreases_monotonically() {
        let mut p = scalar_param(1.0);
        let mut opt = Adam::new(0.01, &p);
        let mut last = 1.0;
        for _ in 0..50 {
            opt.step(&mut p, &scalar_param(0.5)).unwrap();
            let x = p[0].data()[0];
            assert!(x < last);
            last = x;
        }
    }

    /// Scalar Adam written out independently in f64.
    fn simulate_bowl(lr: f64, steps: usize) -> Vec<f64> {
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8f64);
        let (mut x, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        let mut path = Vec::new();
        for t in 1..=steps {
            let g = 2.0 * x;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t as i32));
            let vh = v / (1.0 - b2.powi(t as i32));
            x -= lr * mh / (vh.sqrt() + eps);
            path.push(x);
        }
        path
    }

    #[test]
    fn quadratic_bowl_converges_like_reference() {
        let oracle = simulate_bowl(0.05, 500);
        let first_hit = oracle.iter().position(|x| x.abs() < 1e-2).expect("oracle converges");
        assert!(first_hit < 500);

        let mut p = scalar_param(1.0);
        let mut opt = Adam::new(0.05, &p);
        let mut hit = None;
        for (i, want) in oracle.iter().enumerate() {
            let g = 2.0 * p[0].data()[0];
            opt.step(&mut p, &scalar_param(g)).unwrap();
            let x = p[0].data()[0] as f64;
            assert!((x - want).abs() < 1e-3, "step {i}: {x} vs {want}");
            if hit.is_none() && x.abs() < 1e-2 {
                hit = Some(i);
            }
        }
        assert!(hit.is_some());
    }

    #[test]
    fn non_finite_gradient_rejected_without_update() {
        let mut p = scalar_param(1.0);
        let mut opt = Adam::new(0.1, &p);
        assert!(matches!(
            opt.step(&mut p, &scalar_param(f32::NAN)),
            Err(Error::NonFiniteDetected(_))
        ));
        assert_eq!(p[0].data(), &[1.0]);
        assert_eq!(opt.steps(), 0);
    }
}
