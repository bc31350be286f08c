//! Adversarial privatizer: an obfuscator network trained in a minimax loop
//! against an adversary network. The privatizer descends
//! `Lp = -rho * U - (1 - rho) * La`, so it trades data fidelity against how
//! badly it can mislead the adversary.

use serde::{Deserialize, Serialize};

use crate::dataset::{batch_iter, FeatureMatrix};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::metrics::{self, MetricWeights};
use crate::nncore::{self, AdamState, Mlp};
use crate::rssmap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapParams {
    /// Penalty on utility loss; 1 trains fidelity only, 0 privacy only.
    pub rho: f64,
    pub weights: MetricWeights,
    /// Epochs per alternation phase.
    pub k_epochs: usize,
    pub max_rounds: usize,
    /// Convergence tolerance on per-round loss deltas.
    pub tolerance: f64,
    pub hidden: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Train the privatizer as `y = x + net(x)` instead of `y = net(x)`.
    pub residual: bool,
    pub seed: u64,
}

impl Default for GapParams {
    fn default() -> Self {
        GapParams {
            rho: 0.5,
            weights: MetricWeights::default(),
            k_epochs: 5,
            max_rounds: 200,
            tolerance: 1e-4,
            hidden: 256,
            batch_size: 1024,
            learning_rate: 0.001,
            residual: false,
            seed: 0,
        }
    }
}

impl GapParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::Config(format!("rho must lie in [0, 1], got {}", self.rho)));
        }
        if self.k_epochs < 1 {
            return Err(Error::Config("k_epochs must be >= 1".into()));
        }
        Ok(())
    }
}

/// Trained privatizer/adversary pair with per-round loss history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapModel {
    pub privatizer: Mlp,
    pub adversary: Mlp,
    /// (adversary loss, privatizer loss) after each outer round.
    pub history: Vec<(f64, f64)>,
    pub residual: bool,
    pub k: usize,
}

/// Privatizer loss `Lp = -rho U - (1 - rho) La` from precomputed adversary
/// outputs on the obfuscated batch.
pub fn gap_privatizer_loss(
    x: &Mat,
    y: &Mat,
    probs: &Mat,
    est_locs: &Mat,
    true_labels: &[usize],
    true_locs: &Mat,
    p: &GapParams,
) -> Result<f64> {
    let u1 = metrics::u1_distortion(x, y)?;
    let u2 = if p.weights.w2 != 0.0 { metrics::u2_map_error(x, y)? } else { 0.0 };
    let u = metrics::composite_utility(u1, u2, &p.weights);
    let la = metrics::adversary_loss(probs, est_locs, true_labels, true_locs, &p.weights)?;
    Ok(-p.rho * u - (1.0 - p.rho) * la)
}

fn privatizer_forward(priv_net: &Mlp, x: &Mat, residual: bool) -> Result<(nncore::ForwardCache, Mat)> {
    let cache = nncore::forward(priv_net, x)?;
    let mut y = cache.output().clone();
    if residual {
        for (v, xi) in y.data.iter_mut().zip(&x.data) {
            *v += xi;
        }
    }
    Ok((cache, y))
}

/// La and its gradient with respect to the adversary's raw output matrix.
fn adversary_loss_grad(
    output: &Mat,
    k: usize,
    labels: &[usize],
    true_locs: &Mat,
    w: &MetricWeights,
) -> Result<(f64, Mat)> {
    let n = output.rows;
    let mut logits = Mat::zeros(n, k);
    let mut locs = Mat::zeros(n, 2);
    for i in 0..n {
        let row = output.row(i);
        logits.row_mut(i).copy_from_slice(&row[..k]);
        locs.row_mut(i).copy_from_slice(&row[k..k + 2]);
    }
    let probs = nncore::softmax_head(&logits);
    let loss = metrics::adversary_loss(&probs, &locs, labels, true_locs, w)?;
    let ce_grad = nncore::softmax_ce_grad(&probs, labels);
    let mut grad = Mat::zeros(n, k + 2);
    for i in 0..n {
        let grow = grad.row_mut(i);
        for j in 0..k {
            grow[j] = w.v1 * ce_grad.at(i, j);
        }
        let dl = locs.at(i, 0) - true_locs.at(i, 0);
        let dn = locs.at(i, 1) - true_locs.at(i, 1);
        let dist = (dl * dl + dn * dn).sqrt();
        if dist > 1e-12 {
            grow[k] = w.v2 * dl / (dist * n as f64);
            grow[k + 1] = w.v2 * dn / (dist * n as f64);
        }
    }
    Ok((loss, grad))
}

/// Gradient of `Lp` with respect to the obfuscated batch `y`, holding the
/// adversary fixed. Returns `(lp, dLp/dy)`.
pub fn gap_loss_grad_wrt_y(
    x: &Mat,
    y: &Mat,
    adv: &Mlp,
    k: usize,
    labels: &[usize],
    true_locs: &Mat,
    p: &GapParams,
) -> Result<(f64, Mat)> {
    let adv_cache = nncore::forward(adv, y)?;
    let (la, la_out_grad) = adversary_loss_grad(adv_cache.output(), k, labels, true_locs, &p.weights)?;
    let la_y_grad = nncore::backward(adv, &adv_cache, &la_out_grad)?.input;

    let u1 = metrics::u1_distortion(x, y)?;
    let u1_grad = metrics::u1_distortion_grad(x, y)?;
    let (u2, u2_grad) = if p.weights.w2 != 0.0 {
        rssmap::u2_with_grad(x, y)?
    } else {
        (0.0, Mat::zeros(y.rows, y.cols))
    };
    let u = metrics::composite_utility(u1, u2, &p.weights);
    let lp = -p.rho * u - (1.0 - p.rho) * la;

    let mut grad = Mat::zeros(y.rows, y.cols);
    for i in 0..grad.data.len() {
        grad.data[i] = -p.rho * (p.weights.w1 * u1_grad.data[i] + p.weights.w2 * u2_grad.data[i])
            - (1.0 - p.rho) * la_y_grad.data[i];
    }
    Ok((lp, grad))
}

/// Alternating minimax training: `k_epochs` of adversary descent on La, then
/// `k_epochs` of privatizer descent on Lp, until both stall or `max_rounds`.
pub fn train_gap(train: &FeatureMatrix, p: &GapParams) -> Result<GapModel> {
    p.validate()?;
    let k = train.user_ids.iter().max().map_or(0, |&m| m + 1);
    if k < 2 {
        return Err(Error::Config("GAP training needs at least 2 users".into()));
    }
    let m = train.m();
    let mut priv_net = Mlp::new(&[m, p.hidden, p.hidden, m], p.seed);
    let mut adv_net = Mlp::new(&[m, p.hidden, p.hidden, k + 2], p.seed.wrapping_add(0x9e3779b9));
    if p.residual {
        // start near the identity map
        for w in priv_net.weights.iter_mut() {
            for v in w.data.iter_mut() {
                *v *= 0.1;
            }
        }
    }
    let mut priv_state = AdamState::new(&priv_net, p.learning_rate);
    let mut adv_state = AdamState::new(&adv_net, p.learning_rate);

    let batches = batch_iter(train, p.batch_size);
    let batch_truth: Vec<(Vec<usize>, Mat)> =
        batches.iter().map(|b| (b.user_ids.clone(), b.locations())).collect();

    let mut history = Vec::new();
    let (mut prev_la, mut prev_lp) = (f64::INFINITY, f64::INFINITY);
    for _round in 0..p.max_rounds {
        // adversary phase: privatizer frozen
        let mut round_la = 0.0;
        for _ in 0..p.k_epochs {
            round_la = 0.0;
            for (batch, (labels, locs)) in batches.iter().zip(&batch_truth) {
                let (_, y) = privatizer_forward(&priv_net, &batch.values, p.residual)?;
                let cache = nncore::forward(&adv_net, &y)?;
                let (la, out_grad) =
                    adversary_loss_grad(cache.output(), k, labels, locs, &p.weights)?;
                let grads = nncore::backward(&adv_net, &cache, &out_grad)?;
                nncore::adam_step(&mut adv_net, &grads, &mut adv_state)?;
                round_la += la * batch.n() as f64;
            }
            round_la /= train.n() as f64;
        }
        // privatizer phase: adversary frozen
        let mut round_lp = 0.0;
        for _ in 0..p.k_epochs {
            round_lp = 0.0;
            for (batch, (labels, locs)) in batches.iter().zip(&batch_truth) {
                let (cache, y) = privatizer_forward(&priv_net, &batch.values, p.residual)?;
                let (lp, y_grad) =
                    gap_loss_grad_wrt_y(&batch.values, &y, &adv_net, k, labels, locs, p)?;
                if !lp.is_finite() {
                    return Err(Error::Diverged(format!(
                        "privatizer loss became {lp} after {} rounds",
                        history.len()
                    )));
                }
                // residual connection is additive, so dLp/d(net output) = dLp/dy
                let grads = nncore::backward(&priv_net, &cache, &y_grad)?;
                nncore::adam_step(&mut priv_net, &grads, &mut priv_state)?;
                round_lp += lp * batch.n() as f64;
            }
            round_lp /= train.n() as f64;
        }
        history.push((round_la, round_lp));
        if (prev_la - round_la).abs() < p.tolerance && (prev_lp - round_lp).abs() < p.tolerance {
            break;
        }
        prev_la = round_la;
        prev_lp = round_lp;
    }
    Ok(GapModel { privatizer: priv_net, adversary: adv_net, history, residual: p.residual, k })
}

/// Deterministic row-wise forward pass of the trained privatizer.
pub fn gap_obfuscate(model: &GapModel, x: &FeatureMatrix) -> Result<FeatureMatrix> {
    let (_, y) = privatizer_forward(&model.privatizer, &x.values, model.residual)?;
    Ok(FeatureMatrix { values: y, user_ids: x.user_ids.clone() })
}
