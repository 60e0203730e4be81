//! Central finite-difference verification of analytic gradients.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Compare `analytic` against central differences of `loss` over a random
/// subset of at least `n_coords` coordinates (all of them if fewer exist).
/// Returns the maximum relative error; non-finite losses are an error.
pub fn grad_check<F>(
    mut loss: F,
    params: &mut [f64],
    analytic: &[f64],
    eps: f64,
    n_coords: usize,
    seed: u64,
) -> Result<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(params.len(), analytic.len());
    let mut coords: Vec<usize> = (0..params.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    coords.shuffle(&mut rng);
    coords.truncate(n_coords.min(params.len()));

    let mut max_rel = 0.0f64;
    for &i in &coords {
        let orig = params[i];
        params[i] = orig + eps;
        let up = loss(params);
        params[i] = orig - eps;
        let down = loss(params);
        params[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::Usage(format!(
                "non-finite loss while perturbing coordinate {i}"
            )));
        }
        let fd = (up - down) / (2.0 * eps);
        let an = analytic[i];
        let denom = an.abs().max(fd.abs()).max(1e-6);
        let rel = (an - fd).abs() / denom;
        if rel > max_rel {
            max_rel = rel;
        }
    }
    Ok(max_rel)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_probe_is_exact() {
        let mut params: Vec<f64> = (0..50).map(|i| 0.1 * i as f64 - 2.0).collect();
        let analytic: Vec<f64> = params.iter().map(|&v| 2.0 * v).collect();
        let rel = grad_check(
            |p| p.iter().map(|&v| v * v).sum(),
            &mut params,
            &analytic,
            1e-5,
            50,
            0,
        )
        .unwrap();
        assert!(rel <= 1e-8, "rel err {rel}");
    }

    #[test]
    fn detects_a_wrong_gradient() {
        let mut params = vec![1.0, 2.0, 3.0];
        let wrong = vec![2.0, 4.0, 0.0]; // last coordinate off
        let rel = grad_check(
            |p| p.iter().map(|&v| v * v).sum(),
            &mut params,
            &wrong,
            1e-5,
            3,
            0,
        )
        .unwrap();
        assert!(rel > 0.9);
    }
}
