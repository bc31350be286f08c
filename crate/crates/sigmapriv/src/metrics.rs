//! Privacy and utility metrics: user-ID error, location error, cross entropy,
//! adversary loss, distortion, map error, composites, and a plug-in mutual
//! information estimator over binned symbols.
//!
//! Everything here is a pure function; logs are in nats.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::rssmap;

/// Floor applied to probabilities before taking logs.
pub const PROB_CLAMP: f64 = 1e-12;

/// Privacy weights (v1, v2) and utility weights (w1, w2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricWeights {
    pub v1: f64,
    pub v2: f64,
    pub w1: f64,
    pub w2: f64,
}

impl Default for MetricWeights {
    fn default() -> Self {
        MetricWeights { v1: 1.0, v2: 1.0, w1: 1.0, w2: 1.0 }
    }
}

/// Privacy side of one evaluation: P1 (user-ID error rate), P2 (mean location
/// error), cross entropy, and the weighted composite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyReport {
    pub p1: f64,
    pub p2: f64,
    pub p1_ce: f64,
    pub composite: f64,
}

/// Utility side of one evaluation: U1 (negative distortion), U2 (negative map
/// error), and the weighted composite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityReport {
    pub u1: f64,
    pub u2: f64,
    pub composite: f64,
}

/// Fraction of wrong user-ID estimates: `1 - accuracy`.
pub fn p1_error(est_labels: &[usize], true_labels: &[usize]) -> Result<f64> {
    if est_labels.len() != true_labels.len() || est_labels.is_empty() {
        return Err(Error::Dimension(format!(
            "label vectors of lengths {} and {}",
            est_labels.len(),
            true_labels.len()
        )));
    }
    let correct = est_labels.iter().zip(true_labels).filter(|(a, b)| a == b).count();
    Ok(1.0 - correct as f64 / est_labels.len() as f64)
}

/// Mean Euclidean distance between estimated and true locations (n x 2).
pub fn p2_error(est_locs: &Mat, true_locs: &Mat) -> Result<f64> {
    if est_locs.rows != true_locs.rows || est_locs.cols != 2 || true_locs.cols != 2 {
        return Err(Error::Dimension("location matrices must be matching n x 2".into()));
    }
    let n = est_locs.rows;
    let sum: f64 = (0..n)
        .map(|i| {
            let dl = est_locs.at(i, 0) - true_locs.at(i, 0);
            let dn = est_locs.at(i, 1) - true_locs.at(i, 1);
            (dl * dl + dn * dn).sqrt()
        })
        .sum();
    Ok(sum / n as f64)
}

/// Mean negative log-likelihood of the true labels, in nats.
pub fn p1_cross_entropy(probs: &Mat, true_labels: &[usize]) -> Result<f64> {
    if probs.rows != true_labels.len() {
        return Err(Error::Dimension("probability rows must match label count".into()));
    }
    for i in 0..probs.rows {
        let s: f64 = probs.row(i).iter().sum();
        if (s - 1.0).abs() > 1e-6 {
            return Err(Error::Range(format!("row {i} sums to {s}, not stochastic")));
        }
    }
    let sum: f64 = true_labels
        .iter()
        .enumerate()
        .map(|(i, &label)| probs.at(i, label).max(PROB_CLAMP).ln())
        .sum();
    Ok(-sum / probs.rows as f64)
}

/// Adversary training loss: `v1 * P1ce + v2 * P2`.
pub fn adversary_loss(
    probs: &Mat,
    est_locs: &Mat,
    true_labels: &[usize],
    true_locs: &Mat,
    w: &MetricWeights,
) -> Result<f64> {
    Ok(w.v1 * p1_cross_entropy(probs, true_labels)? + w.v2 * p2_error(est_locs, true_locs)?)
}

/// Negative mean row-wise L2 distortion between input and obfuscated data.
pub fn u1_distortion(x: &Mat, y: &Mat) -> Result<f64> {
    if x.rows != y.rows || x.cols != y.cols {
        return Err(Error::Dimension(format!(
            "matrices {}x{} vs {}x{}",
            x.rows, x.cols, y.rows, y.cols
        )));
    }
    let n = x.rows;
    let sum: f64 = (0..n)
        .map(|i| {
            x.row(i)
                .iter()
                .zip(y.row(i))
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .sum();
    Ok(-sum / n as f64)
}

/// Gradient of `u1_distortion` with respect to `y`.
pub fn u1_distortion_grad(x: &Mat, y: &Mat) -> Result<Mat> {
    if x.rows != y.rows || x.cols != y.cols {
        return Err(Error::Dimension("shape mismatch".into()));
    }
    let n = x.rows as f64;
    let mut grad = Mat::zeros(y.rows, y.cols);
    for i in 0..y.rows {
        let norm: f64 = x
            .row(i)
            .iter()
            .zip(y.row(i))
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        if norm < 1e-12 {
            continue;
        }
        for j in 0..y.cols {
            *grad.at_mut(i, j) = -(y.at(i, j) - x.at(i, j)) / (norm * n);
        }
    }
    Ok(grad)
}

/// Negative L1 distance between the RSS-model parameters fit on `x` and `y`.
pub fn u2_map_error(x: &Mat, y: &Mat) -> Result<f64> {
    let ax = rssmap::fit(x, 0.0)?;
    let ay = rssmap::fit(y, 0.0)?;
    Ok(-ax.alpha.iter().zip(&ay.alpha).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

pub fn composite_privacy(p1: f64, p2: f64, w: &MetricWeights) -> f64 {
    w.v1 * p1 + w.v2 * p2
}

pub fn composite_utility(u1: f64, u2: f64, w: &MetricWeights) -> f64 {
    w.w1 * u1 + w.w2 * u2
}

/// Equal-width binning of a real vector into `bins` symbols.
pub fn quantize_equal_width(values: &[f64], bins: usize) -> Vec<usize> {
    assert!(bins >= 1);
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    values
        .iter()
        .map(|&v| {
            if width <= 0.0 {
                0
            } else {
                (((v - lo) / width) as usize).min(bins - 1)
            }
        })
        .collect()
}

/// Plug-in mutual information estimate over discrete symbol pairs, in nats.
pub fn mutual_information_plugin(xs: &[usize], ys: &[usize]) -> Result<f64> {
    if xs.len() != ys.len() || xs.is_empty() {
        return Err(Error::Dimension("symbol vectors must be equal-length and non-empty".into()));
    }
    let n = xs.len() as f64;
    let mut joint: HashMap<(usize, usize), f64> = HashMap::new();
    let mut px: HashMap<usize, f64> = HashMap::new();
    let mut py: HashMap<usize, f64> = HashMap::new();
    for (&x, &y) in xs.iter().zip(ys) {
        *joint.entry((x, y)).or_insert(0.0) += 1.0;
        *px.entry(x).or_insert(0.0) += 1.0;
        *py.entry(y).or_insert(0.0) += 1.0;
    }
    let mi: f64 = joint
        .iter()
        .map(|(&(x, y), &c)| {
            let pxy = c / n;
            pxy * (pxy * n * n / (px[&x] * py[&y])).ln()
        })
        .sum();
    Ok(mi.max(0.0))
}
