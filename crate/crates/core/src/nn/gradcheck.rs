//! Central finite-difference gradient checking.

use super::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub epsilon: f64,
    pub tolerance: f64,
    /// Lower bound on the denominator of the relative error, so that
    /// near-zero gradients are compared absolutely.
    pub floor: f64,
}

impl Default for GradCheck {
    fn default() -> Self {
        GradCheck {
            epsilon: 1e-5,
            tolerance: 1e-4,
            floor: 1e-6,
        }
    }
}

impl GradCheck {
    pub fn with_tolerance(tolerance: f64) -> GradCheck {
        GradCheck {
            tolerance,
            ..GradCheck::default()
        }
    }

    /// Compare `analytic[k]` against central differences of `f` around
    /// `inputs[k]`, for every tensor.
    pub fn run(&self, f: impl Fn(&[Tensor]) -> f64, inputs: &[Tensor], analytic: &[Tensor]) -> GradCheckReport {
        let mut probe = inputs.to_vec();
        let mut max_rel_error = Vec::with_capacity(inputs.len());
        for (k, grad) in analytic.iter().enumerate() {
            let mut worst = 0.0f64;
            for idx in 0..probe[k].len() {
                let orig = probe[k].data()[idx];
                probe[k].data_mut()[idx] = orig + self.epsilon;
                let up = f(&probe);
                probe[k].data_mut()[idx] = orig - self.epsilon;
                let down = f(&probe);
                probe[k].data_mut()[idx] = orig;
                let numeric = (up - down) / (2.0 * self.epsilon);
                let a = grad.data()[idx];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(self.floor);
                worst = worst.max(rel);
            }
            max_rel_error.push(worst);
        }
        GradCheckReport {
            tolerance: self.tolerance,
            max_rel_error,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub tolerance: f64,
    /// Worst relative error per checked tensor.
    pub max_rel_error: Vec<f64>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error.iter().all(|&e| e < self.tolerance)
    }

    pub fn worst(&self) -> f64 {
        self.max_rel_error.iter().copied().fold(0.0, f64::max)
    }
}
