//! Adam optimizer over a flat parameter vector, with optional update masks
//! for scoped fine-tuning.

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(lr: f64, n_params: usize) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    /// One update. Masked-out coordinates are left bit-identical (their
    /// moments are not advanced either).
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], mask: Option<&[bool]>) {
        assert_eq!(params.len(), grad.len());
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            if let Some(m) = mask {
                if !m[i] {
                    continue;
                }
            }
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mhat = self.m[i] / b1t;
            let vhat = self.v[i] / b2t;
            params[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn converges_on_a_quadratic() {
        let mut x = vec![3.0, -2.0];
        let mut opt = Adam::new(0.1, 2);
        for _ in 0..500 {
            let grad: Vec<f64> = x.iter().map(|&v| 2.0 * v).collect();
            opt.step(&mut x, &grad, None);
        }
        assert!(x.iter().all(|&v| v.abs() < 1e-3), "x = {x:?}");
    }

    #[test]
    fn mask_freezes_coordinates_exactly() {
        let mut x = vec![1.0f64, 1.0];
        let before = x[0].to_bits();
        let mut opt = Adam::new(0.05, 2);
        let mask = vec![false, true];
        for _ in 0..100 {
            opt.step(&mut x, &[0.7, 0.7], Some(&mask));
        }
        assert_eq!(x[0].to_bits(), before);
        assert_ne!(x[1], 1.0);
    }
}
