//! Feed-forward encoder with explicit backward pass.
//!
//! Hidden layers use tanh (smooth, so finite-difference gradient checks are
//! clean everywhere); the final projection to feature space is linear.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::{ParamSet, ParamSetBuilder};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Tanh,
    Relu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub out_dim: usize,
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden: Vec<usize>, out_dim: usize) -> Self {
        MlpSpec {
            input_dim,
            hidden,
            out_dim,
            activation: Activation::Tanh,
        }
    }

    /// Layer dimensions including input and output.
    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.input_dim];
        d.extend_from_slice(&self.hidden);
        d.push(self.out_dim);
        d
    }

    pub fn n_layers(&self) -> usize {
        self.hidden.len() + 1
    }

    /// Register this encoder's blocks under `prefix`.
    pub fn register(&self, mut b: ParamSetBuilder, prefix: &str) -> ParamSetBuilder {
        let dims = self.dims();
        for l in 0..self.n_layers() {
            b = b
                .matrix(&format!("{prefix}.l{l}.w"), dims[l + 1], dims[l])
                .vector(&format!("{prefix}.l{l}.b"), dims[l + 1]);
        }
        b
    }

    /// Xavier-uniform init of this encoder's blocks; biases stay zero.
    pub fn init(&self, params: &mut ParamSet, prefix: &str, rng: &mut ChaCha8Rng) {
        let dims = self.dims();
        for l in 0..self.n_layers() {
            let a = (6.0 / (dims[l] + dims[l + 1]) as f64).sqrt();
            for v in params.slice_mut(&format!("{prefix}.l{l}.w")) {
                *v = (rng.random::<f64>() * 2.0 - 1.0) * a;
            }
        }
    }
}

/// Post-activation values per layer; `acts[0]` is the input batch.
pub struct MlpCache {
    pub acts: Vec<Array2<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &Array2<f64> {
        self.acts.last().expect("forward ran")
    }
}

fn apply_activation(h: &mut Array2<f64>, act: Activation) {
    match act {
        Activation::Tanh => h.mapv_inplace(f64::tanh),
        Activation::Relu => h.mapv_inplace(|v| v.max(0.0)),
    }
}

/// Batched forward pass: rows of `x` are flattened sample windows.
pub fn mlp_forward(
    spec: &MlpSpec,
    params: &ParamSet,
    prefix: &str,
    x: &Array2<f64>,
) -> Result<MlpCache> {
    if x.ncols() != spec.input_dim {
        return Err(Error::ShapeMismatch(format!(
            "encoder {prefix} expects {} inputs, got {}",
            spec.input_dim,
            x.ncols()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Usage("non-finite values in encoder input".into()));
    }
    let n_layers = spec.n_layers();
    let mut acts = Vec::with_capacity(n_layers + 1);
    acts.push(x.clone());
    for l in 0..n_layers {
        let w = params.view2(&format!("{prefix}.l{l}.w"));
        let b = params.view1(&format!("{prefix}.l{l}.b"));
        let mut h = acts[l].dot(&w.t());
        h += &b;
        if l + 1 < n_layers {
            apply_activation(&mut h, spec.activation);
        }
        acts.push(h);
    }
    Ok(MlpCache { acts })
}

/// Backpropagate `grad_out` (dL/d output), accumulating parameter gradients
/// into `grad` and returning dL/d input.
pub fn mlp_backward(
    spec: &MlpSpec,
    params: &ParamSet,
    prefix: &str,
    cache: &MlpCache,
    grad_out: &Array2<f64>,
    grad: &mut [f64],
) -> Array2<f64> {
    let n_layers = spec.n_layers();
    let mut dh = grad_out.clone();
    for l in (0..n_layers).rev() {
        // final layer is linear; hidden layers need the activation derivative
        if l + 1 < n_layers {
            match spec.activation {
                Activation::Tanh => {
                    let post = &cache.acts[l + 1];
                    dh.zip_mut_with(post, |g, &a| *g *= 1.0 - a * a);
                }
                Activation::Relu => {
                    let post = &cache.acts[l + 1];
                    dh.zip_mut_with(post, |g, &a| {
                        if a <= 0.0 {
                            *g = 0.0
                        }
                    });
                }
            }
        }
        let w_name = format!("{prefix}.l{l}.w");
        let b_name = format!("{prefix}.l{l}.b");
        let w = params.view2(&w_name);
        let dw = dh.t().dot(&cache.acts[l]);
        let db: Array1<f64> = dh.sum_axis(Axis(0));
        let dx = dh.dot(&w);

        let wr = params.range(&w_name);
        for (g, v) in grad[wr].iter_mut().zip(dw.iter()) {
            *g += v;
        }
        let br = params.range(&b_name);
        for (g, v) in grad[br].iter_mut().zip(db.iter()) {
            *g += v;
        }
        dh = dx;
    }
    dh
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;

    fn toy() -> (MlpSpec, ParamSet) {
        let spec = MlpSpec::new(3, vec![5, 4], 2);
        let mut params = spec.register(ParamSet::builder(), "bb").build();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        spec.init(&mut params, "bb", &mut rng);
        (spec, params)
    }

    #[test]
    fn zeroed_final_layer_gives_zero_features() {
        let (spec, mut params) = toy();
        params.slice_mut("bb.l2.w").fill(0.0);
        params.slice_mut("bb.l2.b").fill(0.0);
        let x = array![[0.3, -0.2, 0.5], [1.0, 0.0, -1.0]];
        let out = mlp_forward(&spec, &params, "bb", &x).unwrap();
        assert!(out.output().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_is_deterministic() {
        let (spec, params) = toy();
        let x = array![[0.3, -0.2, 0.5]];
        let a = mlp_forward(&spec, &params, "bb", &x).unwrap();
        let b = mlp_forward(&spec, &params, "bb", &x).unwrap();
        assert_eq!(a.output(), b.output());
    }

    #[test]
    fn rejects_bad_shape_and_non_finite() {
        let (spec, params) = toy();
        let bad = array![[1.0, 2.0]];
        assert!(mlp_forward(&spec, &params, "bb", &bad).is_err());
        let nan = array![[f64::NAN, 0.0, 0.0]];
        assert!(mlp_forward(&spec, &params, "bb", &nan).is_err());
    }

    #[test]
    fn outputs_stay_finite_under_fuzz() {
        use rand::Rng;
        let spec = MlpSpec::new(4, vec![8], 3);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..200 {
            let mut params = spec.register(ParamSet::builder(), "bb").build();
            spec.init(&mut params, "bb", &mut rng);
            let x = Array2::from_shape_fn((50, 4), |_| (rng.random::<f64>() - 0.5) * 20.0);
            let out = mlp_forward(&spec, &params, "bb", &x).unwrap();
            assert!(
                out.output().iter().all(|v| v.is_finite()),
                "non-finite output in trial {trial}"
            );
        }
    }
}
