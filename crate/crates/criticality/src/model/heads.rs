//! Output heads: scalar reward head and the (optionally normalized) linear
//! classifier.

use ndarray::{Array1, Array2};

use super::params::ParamSet;
use crate::error::{Error, Result};

/// r = f·w + b for each row of `f`. Block layout: `{prefix}.w` (1 x d),
/// `{prefix}.b` (1).
pub fn scalar_head_forward(params: &ParamSet, prefix: &str, f: &Array2<f64>) -> Array1<f64> {
    let w = params.view2(&format!("{prefix}.w"));
    let b = params.view1(&format!("{prefix}.b"))[0];
    f.dot(&w.row(0)) + b
}

/// Backward for the scalar head; returns dL/df.
pub fn scalar_head_backward(
    params: &ParamSet,
    prefix: &str,
    f: &Array2<f64>,
    dr: &Array1<f64>,
    grad: &mut [f64],
) -> Array2<f64> {
    let w_name = format!("{prefix}.w");
    let b_name = format!("{prefix}.b");
    let w = params.view2(&w_name);
    let dw = dr.dot(f); // (d,)
    let wr = params.range(&w_name);
    for (g, v) in grad[wr].iter_mut().zip(dw.iter()) {
        *g += v;
    }
    grad[params.range(&b_name)][0] += dr.sum();
    let d = f.ncols();
    let mut df = Array2::zeros((f.nrows(), d));
    for (mut row, &g) in df.rows_mut().into_iter().zip(dr.iter()) {
        row.scaled_add(g, &w.row(0));
    }
    df
}

/// How classifier logits are produced from mixed features.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClassifierKind {
    /// Cosine-style scores: each class weight is rescaled to unit norm before
    /// the dot product, then multiplied by a fixed temperature.
    Normalized { scale: f64 },
    /// Ordinary linear logits.
    Plain,
}

/// Rescale each row of the classifier block to unit Euclidean norm.
pub fn normalize_classifier(params: &mut ParamSet, name: &str) -> Result<()> {
    let mut w = params.view2_mut(name);
    for mut row in w.rows_mut() {
        let norm = row.dot(&row).sqrt();
        if norm == 0.0 {
            return Err(Error::Usage(
                "cannot normalize a zero-norm classifier weight vector".into(),
            ));
        }
        row.mapv_inplace(|v| v / norm);
    }
    Ok(())
}

/// Logits for each row of `z`. Block layout: `{name}` (n_classes x d).
pub fn classifier_forward(
    params: &ParamSet,
    name: &str,
    kind: ClassifierKind,
    z: &Array2<f64>,
) -> Result<Array2<f64>> {
    let w = params.view2(name);
    match kind {
        ClassifierKind::Plain => Ok(z.dot(&w.t())),
        ClassifierKind::Normalized { scale } => {
            let mut w_hat = w.to_owned();
            for mut row in w_hat.rows_mut() {
                let norm = row.dot(&row).sqrt();
                if norm == 0.0 {
                    return Err(Error::Usage(
                        "cannot normalize a zero-norm classifier weight vector".into(),
                    ));
                }
                row.mapv_inplace(|v| v / norm);
            }
            Ok(z.dot(&w_hat.t()) * scale)
        }
    }
}

/// Backward through the classifier; returns dL/dz.
///
/// For the normalized head the gradient of w = raw weights flows through the
/// normalization Jacobian (I - ŵŵᵀ)/‖w‖ per class.
pub fn classifier_backward(
    params: &ParamSet,
    name: &str,
    kind: ClassifierKind,
    z: &Array2<f64>,
    dlogits: &Array2<f64>,
    grad: &mut [f64],
) -> Array2<f64> {
    let w = params.view2(name);
    let range = params.range(name);
    match kind {
        ClassifierKind::Plain => {
            let dw = dlogits.t().dot(z);
            for (g, v) in grad[range].iter_mut().zip(dw.iter()) {
                *g += v;
            }
            dlogits.dot(&w)
        }
        ClassifierKind::Normalized { scale } => {
            let n_classes = w.nrows();
            let d = w.ncols();
            let mut w_hat = w.to_owned();
            let mut norms = Vec::with_capacity(n_classes);
            for mut row in w_hat.rows_mut() {
                let norm = row.dot(&row).sqrt();
                norms.push(norm);
                row.mapv_inplace(|v| v / norm);
            }
            // dz = scale * dlogits · Ŵ
            let dz = dlogits.dot(&w_hat) * scale;
            // per class: d_ŵ = scale * Σ_b dlogits[b, c] * z_b
            let dwhat = dlogits.t().dot(z) * scale; // (n_classes x d)
            let gslice = &mut grad[range];
            for c in 0..n_classes {
                let wh = w_hat.row(c);
                let dwh = dwhat.row(c);
                let proj = dwh.dot(&wh);
                for j in 0..d {
                    gslice[c * d + j] += (dwh[j] - proj * wh[j]) / norms[c];
                }
            }
            dz
        }
    }
}

/// Row-wise softmax with the max-subtraction trick.
pub fn softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn normalize_three_four_five() {
        let mut p = ParamSet::builder().matrix("cls.w", 1, 2).build();
        p.slice_mut("cls.w").copy_from_slice(&[3.0, 4.0]);
        normalize_classifier(&mut p, "cls.w").unwrap();
        let w = p.view2("cls.w");
        assert!((w[[0, 0]] - 0.6).abs() < 1e-15);
        assert!((w[[0, 1]] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn normalize_is_idempotent() {
        let mut p = ParamSet::builder().matrix("cls.w", 2, 3).build();
        p.slice_mut("cls.w")
            .copy_from_slice(&[0.3, -0.4, 0.1, 1.0, 2.0, -2.0]);
        normalize_classifier(&mut p, "cls.w").unwrap();
        let first: Vec<f64> = p.slice("cls.w").to_vec();
        normalize_classifier(&mut p, "cls.w").unwrap();
        for (a, b) in first.iter().zip(p.slice("cls.w")) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn normalize_rejects_zero_rows() {
        let mut p = ParamSet::builder().matrix("cls.w", 1, 2).build();
        assert!(normalize_classifier(&mut p, "cls.w").is_err());
    }

    #[test]
    fn normalized_unit_norm_under_fuzz() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let mut p = ParamSet::builder().matrix("cls.w", 2, 64).build();
            for v in p.slice_mut("cls.w") {
                *v = (rng.random::<f64>() - 0.5) * 10.0;
            }
            normalize_classifier(&mut p, "cls.w").unwrap();
            let w = p.view2("cls.w");
            for row in w.rows() {
                let norm = row.dot(&row).sqrt();
                assert!((norm - 1.0).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn cosine_logits_invariant_to_per_class_scale() {
        let mut p = ParamSet::builder().matrix("cls.w", 2, 3).build();
        p.slice_mut("cls.w")
            .copy_from_slice(&[0.5, -1.0, 2.0, 1.5, 0.4, -0.2]);
        let z = array![[0.3, 0.7, -0.1], [1.0, -1.0, 0.5]];
        let kind = ClassifierKind::Normalized { scale: 10.0 };
        let base = classifier_forward(&p, "cls.w", kind, &z).unwrap();
        // scale class 0 by 3.7, class 1 by 0.04
        {
            let mut w = p.view2_mut("cls.w");
            for j in 0..3 {
                w[[0, j]] *= 3.7;
                w[[1, j]] *= 0.04;
            }
        }
        let scaled = classifier_forward(&p, "cls.w", kind, &z).unwrap();
        for (a, b) in base.iter().zip(scaled.iter()) {
            assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let logits = Array2::from_shape_fn((200, 2), |_| (rng.random::<f64>() - 0.5) * 30.0);
        let p = softmax(&logits);
        for row in p.rows() {
            assert!((row.sum() - 1.0).abs() <= 1e-9);
            assert!(row.iter().all(|&v| v >= 0.0));
        }
    }
}
