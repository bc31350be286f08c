//! Linear RSS prediction model: the signal-map predictor the service provider
//! fits on (obfuscated) measurements, plus the differentiable least-squares
//! path the adversarial privatizer trains through.

use serde::{Deserialize, Serialize};

use crate::dataset::{NormStats, COL_RSS};
use crate::error::{Error, Result};
use crate::linalg::{solve_spd, Mat};

/// Ridge strength used on the differentiable path; keeps the implicit
/// differentiation well conditioned.
pub const DIFF_RIDGE: f64 = 1e-6;

/// Parameter vector of the linear RSS predictor:
/// `rss = alpha[0] + sum_j alpha[j] * feature_j` over all features except RSS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RssModel {
    pub alpha: Vec<f64>,
    /// Set when a rank-deficient plain fit fell back to a small ridge.
    pub ridge_fallback: bool,
}

/// Design matrix: intercept column of ones followed by every feature column
/// except RSS, preserving order.
fn design(values: &Mat) -> (Mat, Vec<f64>) {
    let n = values.rows;
    let m = values.cols;
    let mut a = Mat::zeros(n, m);
    let mut b = vec![0.0; n];
    for i in 0..n {
        let row = values.row(i);
        let arow = a.row_mut(i);
        arow[0] = 1.0;
        let mut c = 1;
        for (j, &v) in row.iter().enumerate() {
            if j == COL_RSS {
                b[i] = v;
            } else {
                arow[c] = v;
                c += 1;
            }
        }
    }
    (a, b)
}

fn solve_normal_equations(a: &Mat, b: &[f64], ridge: f64) -> Result<Vec<f64>> {
    let mut ata = a.t_matmul(a);
    for i in 0..ata.rows {
        *ata.at_mut(i, i) += ridge;
    }
    let b_mat = Mat { rows: b.len(), cols: 1, data: b.to_vec() };
    let atb = a.t_matmul(&b_mat);
    solve_spd(&ata, &atb.data)
}

/// Least-squares fit of the RSS model, optionally ridge-regularized.
/// A singular plain fit retries with a small ridge and flags the result.
pub fn fit(values: &Mat, ridge: f64) -> Result<RssModel> {
    let (n, m) = (values.rows, values.cols);
    if n <= m {
        return Err(Error::Dimension(format!("need n > m rows for regression, got n={n}, m={m}")));
    }
    let (a, b) = design(values);
    match solve_normal_equations(&a, &b, ridge) {
        Ok(alpha) => Ok(RssModel { alpha, ridge_fallback: false }),
        Err(_) if ridge == 0.0 => {
            let alpha = solve_normal_equations(&a, &b, DIFF_RIDGE)?;
            Ok(RssModel { alpha, ridge_fallback: true })
        }
        Err(e) => Err(e),
    }
}

/// Row-wise affine prediction of normalized RSS.
pub fn predict(model: &RssModel, values: &Mat) -> Result<Vec<f64>> {
    if model.alpha.len() != values.cols {
        return Err(Error::Dimension(format!(
            "model has {} parameters, matrix has {} features",
            model.alpha.len(),
            values.cols
        )));
    }
    let (a, _) = design(values);
    Ok(a.matvec(&model.alpha))
}

/// Root-mean-square prediction error in dBm (rescaled via the RSS std).
pub fn rmse(model: &RssModel, values: &Mat, stats: &NormStats) -> Result<f64> {
    let pred = predict(model, values)?;
    let actual = values.col(COL_RSS);
    let mse: f64 = pred
        .iter()
        .zip(&actual)
        .map(|(p, a)| (p - a).powi(2))
        .sum::<f64>()
        / pred.len() as f64;
    Ok(mse.sqrt() * stats.std[COL_RSS])
}

/// Fit with the fixed differentiable ridge and propagate an upstream gradient
/// on `alpha` back to the matrix entries via implicit differentiation of the
/// normal equations.
///
/// With `M = A^T A + r I`, `alpha = M^{-1} A^T b`, `z = M^{-1} g` and
/// residual `res = b - A alpha`, the adjoints are
/// `dL/dA = res z^T - (A z) alpha^T` and `dL/db = A z`.
pub fn fit_differentiable(values: &Mat, upstream_grad: &[f64]) -> Result<(RssModel, Mat)> {
    let (n, m) = (values.rows, values.cols);
    if n <= m {
        return Err(Error::Dimension(format!("need n > m rows for regression, got n={n}, m={m}")));
    }
    if upstream_grad.len() != m {
        return Err(Error::Dimension(format!(
            "upstream gradient has {} entries, expected {m}",
            upstream_grad.len()
        )));
    }
    let (a, b) = design(values);
    let mut ata = a.t_matmul(&a);
    for i in 0..ata.rows {
        *ata.at_mut(i, i) += DIFF_RIDGE;
    }
    let b_mat = Mat { rows: b.len(), cols: 1, data: b.clone() };
    let atb = a.t_matmul(&b_mat);
    let alpha = solve_spd(&ata, &atb.data)?;
    let z = solve_spd(&ata, upstream_grad)?;
    let a_alpha = a.matvec(&alpha);
    let a_z = a.matvec(&z);

    // gradients in design-matrix coordinates
    let mut grad = Mat::zeros(n, m);
    for i in 0..n {
        let res_i = b[i] - a_alpha[i];
        let grow = grad.row_mut(i);
        // design column c maps back to feature column: c=0 is the intercept
        // (constant, no gradient); c>=1 walks feature columns skipping RSS.
        let mut c = 1;
        for (j, g) in grow.iter_mut().enumerate() {
            if j == COL_RSS {
                *g = a_z[i]; // dL/db
            } else {
                *g = res_i * z[c] - a_z[i] * alpha[c];
                c += 1;
            }
        }
    }
    Ok((RssModel { alpha, ridge_fallback: false }, grad))
}

/// Gradient of `U2(x, y) = -||alpha_x - alpha_y||_1` with respect to the
/// entries of `y`. Returns `(u2, grad)`.
pub fn u2_with_grad(x: &Mat, y: &Mat) -> Result<(f64, Mat)> {
    let model_x = fit(x, DIFF_RIDGE)?;
    // d U2 / d alpha_y = sign(alpha_x - alpha_y)
    let model_y = fit(y, DIFF_RIDGE)?;
    let upstream: Vec<f64> = model_x
        .alpha
        .iter()
        .zip(&model_y.alpha)
        .map(|(ax, ay)| (ax - ay).signum())
        .collect();
    let (model_y, grad) = fit_differentiable(y, &upstream)?;
    let u2: f64 = -model_x
        .alpha
        .iter()
        .zip(&model_y.alpha)
        .map(|(ax, ay)| (ax - ay).abs())
        .sum::<f64>();
    Ok((u2, grad))
}

/// Flat JSON export of the model parameters alongside feature names.
pub fn export_json(model: &RssModel, feature_names: &[String]) -> String {
    serde_json::json!({
        "alpha": model.alpha,
        "feature_names": feature_names,
        "ridge_fallback": model.ridge_fallback,
    })
    .to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Mat {
        let mut values = Mat::zeros(n, m);
        for v in values.data.iter_mut() {
            *v = <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng);
        }
        values
    }

    #[test]
    fn recovers_planted_coefficients() {
        // rss = 2 + 3 * lat, all other coefficients zero
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut values = random_matrix(&mut rng, 200, 5);
        for i in 0..values.rows {
            let lat = values.at(i, 0);
            *values.at_mut(i, COL_RSS) = 2.0 + 3.0 * lat;
        }
        let model = fit(&values, 0.0).unwrap();
        assert!(!model.ridge_fallback);
        let expect = [2.0, 3.0, 0.0, 0.0, 0.0];
        for (a, e) in model.alpha.iter().zip(&expect) {
            assert_abs_diff_eq!(a, e, epsilon = 1e-9);
        }
    }

    #[test]
    fn duplicate_columns_trigger_ridge_fallback() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut values = random_matrix(&mut rng, 100, 4);
        for i in 0..values.rows {
            let lat = values.at(i, 0);
            *values.at_mut(i, 3) = lat; // aux duplicates lat exactly
        }
        let model = fit(&values, 0.0).unwrap();
        assert!(model.ridge_fallback);
    }

    /// Independent iterative oracle: plain gradient descent on the
    /// least-squares objective.
    fn gradient_descent_lsq(values: &Mat, iters: usize, lr: f64) -> Vec<f64> {
        let (a, b) = design(values);
        let mut alpha = vec![0.0; values.cols];
        for _ in 0..iters {
            let pred = a.matvec(&alpha);
            let resid: Vec<f64> = pred.iter().zip(&b).map(|(p, t)| p - t).collect();
            let grad = a.t_matvec(&resid);
            for (w, g) in alpha.iter_mut().zip(&grad) {
                *w -= lr * g / values.rows as f64;
            }
        }
        alpha
    }

    #[test]
    fn agrees_with_gradient_descent_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut values = random_matrix(&mut rng, 500, 6);
        for i in 0..values.rows {
            let row: Vec<f64> = values.row(i).to_vec();
            let noise: f64 = 0.1 * rng.random::<f64>();
            *values.at_mut(i, COL_RSS) = 1.0 + 0.5 * row[0] - 0.8 * row[1] + 0.3 * row[4] + noise;
        }
        let model = fit(&values, 0.0).unwrap();
        let oracle = gradient_descent_lsq(&values, 60_000, 0.5);
        for (a, o) in model.alpha.iter().zip(&oracle) {
            assert_abs_diff_eq!(a, o, epsilon = 1e-6);
        }
    }

    #[test]
    fn zero_alpha_predicts_zero_and_exact_fit_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut values = random_matrix(&mut rng, 50, 4);
        let zero = RssModel { alpha: vec![0.0; 4], ridge_fallback: false };
        assert!(predict(&zero, &values).unwrap().iter().all(|&p| p == 0.0));

        for i in 0..values.rows {
            let lat = values.at(i, 0);
            let lon = values.at(i, 1);
            *values.at_mut(i, COL_RSS) = -1.0 + 0.2 * lat + 0.7 * lon;
        }
        let model = fit(&values, 0.0).unwrap();
        let pred = predict(&model, &values).unwrap();
        for (p, a) in pred.iter().zip(values.col(COL_RSS)) {
            assert_abs_diff_eq!(p, &a, epsilon = 1e-9);
        }
    }

    #[test]
    fn rmse_zero_on_exact_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut values = random_matrix(&mut rng, 80, 4);
        for i in 0..values.rows {
            let lat = values.at(i, 0);
            *values.at_mut(i, COL_RSS) = 0.5 + 2.0 * lat;
        }
        let model = fit(&values, 0.0).unwrap();
        let stats = NormStats { mean: vec![0.0; 4], std: vec![1.0, 1.0, 6.5, 1.0] };
        assert_abs_diff_eq!(rmse(&model, &values, &stats).unwrap(), 0.0, epsilon = 1e-8);
    }

    #[test]
    fn fit_is_row_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let values = random_matrix(&mut rng, 60, 4);
        let mut rows: Vec<Vec<f64>> = (0..60).map(|i| values.row(i).to_vec()).collect();
        rows.reverse();
        let permuted = Mat::from_rows(&rows);
        let a = fit(&values, 0.0).unwrap();
        let b = fit(&permuted, 0.0).unwrap();
        for (x, y) in a.alpha.iter().zip(&b.alpha) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-9);
        }
    }

    #[test]
    fn least_squares_beats_mean_predictor() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let values = random_matrix(&mut rng, 120, 5);
        let stats = NormStats { mean: vec![0.0; 5], std: vec![1.0; 5] };
        let model = fit(&values, 0.0).unwrap();
        let lsq = rmse(&model, &values, &stats).unwrap();
        let rss = values.col(COL_RSS);
        let mean = rss.iter().sum::<f64>() / rss.len() as f64;
        let mean_rmse =
            (rss.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / rss.len() as f64).sqrt();
        assert!(lsq <= mean_rmse + 1e-12);
    }

    #[test]
    fn implicit_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let values = random_matrix(&mut rng, 30, 4);
        let upstream: Vec<f64> = (0..4)
            .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
            .collect();
        let (_, grad) = fit_differentiable(&values, &upstream).unwrap();
        let h = 1e-5;
        let scalar = |v: &Mat| -> f64 {
            let (a, _) = design(v);
            let mut ata = a.t_matmul(&a);
            for i in 0..ata.rows {
                *ata.at_mut(i, i) += DIFF_RIDGE;
            }
            let b = v.col(COL_RSS);
            let b_mat = Mat { rows: b.len(), cols: 1, data: b };
            let atb = a.t_matmul(&b_mat);
            let alpha = solve_spd(&ata, &atb.data).unwrap();
            alpha.iter().zip(&upstream).map(|(a, u)| a * u).sum()
        };
        for &(i, j) in &[(0usize, 0usize), (3, 1), (10, 2), (20, 3), (29, 0)] {
            let mut plus = values.clone();
            *plus.at_mut(i, j) += h;
            let mut minus = values.clone();
            *minus.at_mut(i, j) -= h;
            let fd = (scalar(&plus) - scalar(&minus)) / (2.0 * h);
            let g = grad.at(i, j);
            let tol = 1e-4 * fd.abs().max(1e-6);
            assert!((g - fd).abs() <= tol, "entry ({i},{j}): implicit {g} vs fd {fd}");
        }
    }

    #[test]
    fn zero_upstream_gradient_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let values = random_matrix(&mut rng, 20, 4);
        let (_, grad) = fit_differentiable(&values, &[0.0; 4]).unwrap();
        assert!(grad.data.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn u2_gradient_is_a_descent_direction_for_map_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = random_matrix(&mut rng, 40, 4);
        let mut y = x.clone();
        for v in y.data.iter_mut() {
            *v += 0.3 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng);
        }
        let (u2, grad) = u2_with_grad(&x, &y).unwrap();
        assert!(u2 < 0.0);
        // step along the gradient of U2 should increase U2 (reduce map error)
        let step = 1e-3;
        let mut y2 = y.clone();
        for (v, g) in y2.data.iter_mut().zip(&grad.data) {
            *v += step * g;
        }
        let (u2_after, _) = u2_with_grad(&x, &y2).unwrap();
        assert!(u2_after > u2, "U2 {u2} -> {u2_after} not improved");
    }

    #[test]
    fn identical_matrices_give_zero_map_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random_matrix(&mut rng, 40, 4);
        let (u2, _) = u2_with_grad(&x, &x.clone()).unwrap();
        assert_abs_diff_eq!(u2, 0.0, epsilon = 1e-12);
    }
}
