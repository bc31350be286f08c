//! The inference adversary: an MLP that maps an obfuscated measurement to
//! user-ID likelihoods and a location estimate, trained on 70% of the
//! obfuscated data and evaluated on the rest. Also provides the common
//! adversary variants used for cross-evaluation.

use serde::{Deserialize, Serialize};

use crate::dataset::{batch_iter, FeatureMatrix};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::metrics::{self, MetricWeights, PrivacyReport};
use crate::nncore::{self, AdamState, Mlp};

/// Training schedule. The loss plateau rule stops when the epoch loss moves
/// less than `tolerance` over `patience` consecutive epochs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSchedule {
    pub max_epochs: usize,
    pub patience: usize,
    pub tolerance: f64,
    pub batch_size: usize,
    pub hidden: usize,
    pub learning_rate: f64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            max_epochs: 500,
            patience: 10,
            tolerance: 1e-4,
            batch_size: 1024,
            hidden: 256,
            learning_rate: 0.001,
        }
    }
}

/// Trained adversary: an `m -> hidden -> hidden -> (k+2)` network whose first
/// `k` outputs are user-ID logits and last 2 are the location estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversaryModel {
    pub net: Mlp,
    pub weights: MetricWeights,
    pub k: usize,
}

/// Per-measurement estimates: row-stochastic user probabilities, argmax
/// labels (ties broken by lowest index), and location estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdversaryEstimate {
    pub user_probs: Mat,
    pub labels: Vec<usize>,
    pub locations: Mat,
}

/// Which data the adversary trains on (everything else is fixed).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariantKind {
    /// Trained on the scoring privatizer's own obfuscated output.
    Baseline,
    /// Trained on raw (unobfuscated) features.
    Unobfuscated,
    /// Trained on the pooled obfuscated outputs of all privatizers.
    Aggregate,
    /// Trained with different loss weights (v1, v2).
    Alternative,
}

fn split_heads(output: &Mat, k: usize) -> (Mat, Mat) {
    let n = output.rows;
    let mut logits = Mat::zeros(n, k);
    let mut locs = Mat::zeros(n, 2);
    for i in 0..n {
        let row = output.row(i);
        logits.row_mut(i).copy_from_slice(&row[..k]);
        locs.row_mut(i).copy_from_slice(&row[k..k + 2]);
    }
    (logits, locs)
}

/// Gradient of `La = v1 * P1ce + v2 * P2` with respect to the raw network
/// output (logits head via the softmax shortcut, location head directly).
fn loss_and_grad(
    output: &Mat,
    k: usize,
    true_labels: &[usize],
    true_locs: &Mat,
    w: &MetricWeights,
) -> Result<(f64, Mat)> {
    let n = output.rows;
    let (logits, locs) = split_heads(output, k);
    let probs = nncore::softmax_head(&logits);
    let loss = metrics::adversary_loss(&probs, &locs, true_labels, true_locs, w)?;
    let ce_grad = nncore::softmax_ce_grad(&probs, true_labels);
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

/// Train an adversary on obfuscated features with the true labels/locations,
/// full-batch Adam over fixed-size batches, until the loss plateaus.
pub fn train_adversary(
    obf_train: &FeatureMatrix,
    true_labels: &[usize],
    true_locs: &Mat,
    k: usize,
    weights: &MetricWeights,
    schedule: &TrainSchedule,
    seed: u64,
) -> Result<AdversaryModel> {
    if k < 2 {
        return Err(Error::Config(format!("adversary needs k >= 2 users, got {k}")));
    }
    if obf_train.n() == 0 || obf_train.n() != true_labels.len() {
        return Err(Error::Dimension("training set empty or label count mismatch".into()));
    }
    let m = obf_train.m();
    let dims = [m, schedule.hidden, schedule.hidden, k + 2];
    let mut net = Mlp::new(&dims, seed);
    let mut state = AdamState::new(&net, schedule.learning_rate);

    // pre-slice batches of (features, labels, locations)
    let batches = batch_iter(obf_train, schedule.batch_size);
    let mut offsets = Vec::with_capacity(batches.len());
    let mut start = 0;
    for b in &batches {
        offsets.push(start..start + b.n());
        start += b.n();
    }

    let mut prev_loss = f64::INFINITY;
    let mut plateau = 0;
    for _epoch in 0..schedule.max_epochs {
        let mut epoch_loss = 0.0;
        for (batch, range) in batches.iter().zip(&offsets) {
            let labels = &true_labels[range.clone()];
            let loc_rows: Vec<Vec<f64>> =
                range.clone().map(|i| true_locs.row(i).to_vec()).collect();
            let locs = Mat::from_rows(&loc_rows);
            let cache = nncore::forward(&net, &batch.values)?;
            let (loss, grad) = loss_and_grad(cache.output(), k, labels, &locs, weights)?;
            if !loss.is_finite() {
                return Err(Error::Diverged(format!("adversary loss became {loss}")));
            }
            let grads = nncore::backward(&net, &cache, &grad)?;
            nncore::adam_step(&mut net, &grads, &mut state)?;
            epoch_loss += loss * batch.n() as f64;
        }
        epoch_loss /= obf_train.n() as f64;
        if (prev_loss - epoch_loss).abs() < schedule.tolerance {
            plateau += 1;
            if plateau >= schedule.patience {
                break;
            }
        } else {
            plateau = 0;
        }
        prev_loss = epoch_loss;
    }
    Ok(AdversaryModel { net, weights: *weights, k })
}

/// Forward pass: softmax user head, argmax labels, linear location head.
pub fn estimate(model: &AdversaryModel, obf: &FeatureMatrix) -> Result<AdversaryEstimate> {
    let cache = nncore::forward(&model.net, &obf.values)?;
    let (logits, locations) = split_heads(cache.output(), model.k);
    let user_probs = nncore::softmax_head(&logits);
    let labels = (0..user_probs.rows)
        .map(|i| {
            let row = user_probs.row(i);
            let mut best = 0;
            for (j, &p) in row.iter().enumerate() {
                if p > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect();
    Ok(AdversaryEstimate { user_probs, labels, locations })
}

/// Evaluate privacy on a held-out obfuscated block against the truth.
pub fn evaluate(
    model: &AdversaryModel,
    obf_test: &FeatureMatrix,
    true_labels: &[usize],
    true_locs: &Mat,
    weights: &MetricWeights,
) -> Result<PrivacyReport> {
    let est = estimate(model, obf_test)?;
    let p1 = metrics::p1_error(&est.labels, true_labels)?;
    let p2 = metrics::p2_error(&est.locations, true_locs)?;
    let p1_ce = metrics::p1_cross_entropy(&est.user_probs, true_labels)?;
    Ok(PrivacyReport { p1, p2, p1_ce, composite: metrics::composite_privacy(p1, p2, weights) })
}

/// Training inputs for one adversary variant. `Baseline` uses the scoring
/// privatizer's own output, `Unobfuscated` the raw features, `Aggregate` the
/// concatenation of all privatizers' outputs, `Alternative` the baseline data
/// with different loss weights.
pub struct VariantInputs<'a> {
    pub own_obf: &'a FeatureMatrix,
    pub raw: &'a FeatureMatrix,
    pub all_obf: &'a [&'a FeatureMatrix],
    pub true_labels: &'a [usize],
    pub true_locs: &'a Mat,
    pub alternative_weights: MetricWeights,
}

/// Train one of the common adversary variants.
pub fn make_variant(
    kind: VariantKind,
    inputs: &VariantInputs,
    k: usize,
    weights: &MetricWeights,
    schedule: &TrainSchedule,
    seed: u64,
) -> Result<AdversaryModel> {
    match kind {
        VariantKind::Baseline => {
            train_adversary(inputs.own_obf, inputs.true_labels, inputs.true_locs, k, weights, schedule, seed)
        }
        VariantKind::Unobfuscated => {
            train_adversary(inputs.raw, inputs.true_labels, inputs.true_locs, k, weights, schedule, seed)
        }
        VariantKind::Alternative => train_adversary(
            inputs.own_obf,
            inputs.true_labels,
            inputs.true_locs,
            k,
            &inputs.alternative_weights,
            schedule,
            seed,
        ),
        VariantKind::Aggregate => {
            if inputs.all_obf.is_empty() {
                return Err(Error::Config("aggregate variant needs at least one input set".into()));
            }
            let m = inputs.all_obf[0].m();
            let mut rows = Vec::new();
            let mut labels = Vec::new();
            let mut loc_rows = Vec::new();
            for obf in inputs.all_obf {
                if obf.m() != m {
                    return Err(Error::Dimension("aggregate inputs disagree on feature count".into()));
                }
                for i in 0..obf.n() {
                    rows.push(obf.values.row(i).to_vec());
                    labels.push(inputs.true_labels[i]);
                    loc_rows.push(inputs.true_locs.row(i).to_vec());
                }
            }
            let pooled = FeatureMatrix { values: Mat::from_rows(&rows), user_ids: labels.clone() };
            let locs = Mat::from_rows(&loc_rows);
            train_adversary(&pooled, &labels, &locs, k, weights, schedule, seed)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{self, SynthConfig};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn small_schedule() -> TrainSchedule {
        TrainSchedule { hidden: 32, max_epochs: 300, ..Default::default() }
    }

    /// Normalized synthetic data plus truth, ready for adversary training.
    fn prepared(k: usize, n: usize, seed: u64) -> (FeatureMatrix, Vec<usize>, Mat) {
        let d = dataset::synthesize(k, n, seed, &SynthConfig::default()).unwrap();
        let idx: Vec<usize> = (0..d.n()).collect();
        let stats = dataset::fit_normalizer(&d, &idx).unwrap();
        let f = dataset::normalize(&d, &stats).unwrap();
        let labels = f.user_ids.clone();
        let locs = f.locations();
        (f, labels, locs)
    }

    #[test]
    fn estimates_are_row_stochastic_and_deterministic() {
        let (f, labels, locs) = prepared(3, 300, 1);
        let model = train_adversary(
            &f,
            &labels,
            &locs,
            3,
            &MetricWeights::default(),
            &TrainSchedule { max_epochs: 5, hidden: 16, ..Default::default() },
            7,
        )
        .unwrap();
        let est = estimate(&model, &f).unwrap();
        for i in 0..est.user_probs.rows {
            let s: f64 = est.user_probs.row(i).iter().sum();
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-6);
        }
        assert_eq!(est, estimate(&model, &f).unwrap());
    }

    #[test]
    fn separable_data_yields_low_errors() {
        let (f, labels, locs) = prepared(5, 3000, 2);
        let train_idx: Vec<usize> = (0..2100).collect();
        let test_idx: Vec<usize> = (2100..3000).collect();
        let train = f.subset(&train_idx);
        let test = f.subset(&test_idx);
        let test_labels: Vec<usize> = test_idx.iter().map(|&i| labels[i]).collect();
        let test_locs = test.locations();
        let model = train_adversary(
            &train,
            &labels[..2100],
            &locs,
            5,
            &MetricWeights::default(),
            &small_schedule(),
            3,
        )
        .unwrap();
        let report =
            evaluate(&model, &test, &test_labels, &test_locs, &MetricWeights::default()).unwrap();
        assert!(report.p1 < 0.2, "P1 = {}", report.p1);
        assert!(report.p2 < 0.3, "P2 = {}", report.p2);
    }

    #[test]
    fn pure_noise_obfuscation_reduces_to_majority_guessing() {
        let (f, labels, locs) = prepared(5, 1500, 3);
        // y independent of x entirely
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut noise = f.clone();
        for v in noise.values.data.iter_mut() {
            *v = <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng);
        }
        let model = train_adversary(
            &noise,
            &labels,
            &locs,
            5,
            &MetricWeights::default(),
            &small_schedule(),
            5,
        )
        .unwrap();
        // fresh independent noise for the test side
        let mut noise_test = f.clone();
        for v in noise_test.values.data.iter_mut() {
            *v = <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng);
        }
        let report =
            evaluate(&model, &noise_test, &labels, &locs, &MetricWeights::default()).unwrap();
        // majority share with round-robin users is 1/k
        let mut counts = vec![0usize; 5];
        for &l in &labels {
            counts[l] += 1;
        }
        let majority = *counts.iter().max().unwrap() as f64 / labels.len() as f64;
        assert!(
            (report.p1 - (1.0 - majority)).abs() < 0.1,
            "P1 = {} vs 1 - majority = {}",
            report.p1,
            1.0 - majority
        );
    }

    #[test]
    fn v2_zero_leaves_location_head_near_mean_predictor() {
        let (f, labels, locs) = prepared(4, 1200, 6);
        let w = MetricWeights { v1: 1.0, v2: 0.0, w1: 1.0, w2: 1.0 };
        let untrained_head = train_adversary(&f, &labels, &locs, 4, &w, &small_schedule(), 9).unwrap();
        let joint = train_adversary(
            &f,
            &labels,
            &locs,
            4,
            &MetricWeights::default(),
            &small_schedule(),
            9,
        )
        .unwrap();
        let eval_w = MetricWeights::default();
        let r0 = evaluate(&untrained_head, &f, &labels, &locs, &eval_w).unwrap();
        let r1 = evaluate(&joint, &f, &labels, &locs, &eval_w).unwrap();
        // dropping the location term must not hurt classification, but the
        // location head never receives a learning signal
        assert!(r0.p1 < 0.2, "P1 = {}", r0.p1);
        assert!(r0.p2 > r1.p2, "P2 without location loss {} vs joint {}", r0.p2, r1.p2);
    }

    #[test]
    fn constant_output_model_closed_form() {
        // zeroed network predicts uniform probabilities and the origin
        let (f, labels, locs) = prepared(4, 400, 8);
        let model = AdversaryModel {
            net: Mlp::zeroed(&[f.m(), 8, 8, 6]),
            weights: MetricWeights::default(),
            k: 4,
        };
        let report = evaluate(&model, &f, &labels, &locs, &MetricWeights::default()).unwrap();
        // argmax of uniform rows is label 0 by the lowest-index rule
        let share0 = labels.iter().filter(|&&l| l == 0).count() as f64 / labels.len() as f64;
        assert_abs_diff_eq!(report.p1, 1.0 - share0, epsilon = 1e-12);
        let origin = Mat::zeros(locs.rows, 2);
        let expect_p2 = metrics::p2_error(&origin, &locs).unwrap();
        assert_abs_diff_eq!(report.p2, expect_p2, epsilon = 1e-12);
    }

    #[test]
    fn retraining_same_seed_reproduces_report() {
        let (f, labels, locs) = prepared(3, 600, 10);
        let sched = TrainSchedule { max_epochs: 20, hidden: 16, ..Default::default() };
        let run = || {
            let model = train_adversary(
                &f,
                &labels,
                &locs,
                3,
                &MetricWeights::default(),
                &sched,
                11,
            )
            .unwrap();
            evaluate(&model, &f, &labels, &locs, &MetricWeights::default()).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn aggregate_of_identical_copies_is_baseline_equivalent() {
        let (f, labels, locs) = prepared(3, 450, 12);
        let sched = TrainSchedule { max_epochs: 10, hidden: 16, ..Default::default() };
        let w = MetricWeights::default();
        let inputs = VariantInputs {
            own_obf: &f,
            raw: &f,
            all_obf: &[&f],
            true_labels: &labels,
            true_locs: &locs,
            alternative_weights: w,
        };
        let agg = make_variant(VariantKind::Aggregate, &inputs, 3, &w, &sched, 13).unwrap();
        let base = make_variant(VariantKind::Baseline, &inputs, 3, &w, &sched, 13).unwrap();
        assert_eq!(agg.net, base.net);
    }

    #[test]
    fn overfit_model_has_near_zero_training_loss() {
        // deliberately overfit a tiny set
        let (f, labels, locs) = prepared(2, 40, 14);
        let sched = TrainSchedule {
            max_epochs: 2000,
            patience: 50,
            tolerance: 1e-9,
            hidden: 32,
            ..Default::default()
        };
        let model =
            train_adversary(&f, &labels, &locs, 2, &MetricWeights::default(), &sched, 15).unwrap();
        let est = estimate(&model, &f).unwrap();
        let la = metrics::adversary_loss(
            &est.user_probs,
            &est.locations,
            &labels,
            &locs,
            &MetricWeights::default(),
        )
        .unwrap();
        assert!(la < 0.1, "training La = {la}");
    }

    #[test]
    fn variant_empty_input_rejected() {
        let (f, labels, locs) = prepared(3, 300, 16);
        let inputs = VariantInputs {
            own_obf: &f,
            raw: &f,
            all_obf: &[],
            true_labels: &labels,
            true_locs: &locs,
            alternative_weights: MetricWeights::default(),
        };
        let res = make_variant(
            VariantKind::Aggregate,
            &inputs,
            3,
            &MetricWeights::default(),
            &small_schedule(),
            1,
        );
        assert!(res.is_err());
    }
}
