//! Minimal feed-forward network engine: dense layers, ReLU, softmax head,
//! manual backprop and Adam. Shared by the adversary and the adversarial
//! privatizer; nothing here knows about privacy.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;

/// Fully connected network. `weights[l]` is `dims[l] x dims[l+1]` so a batch
/// activates as `a_{l+1} = relu(a_l * W_l + b_l)`; the output layer is linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layer_dims: Vec<usize>,
    pub weights: Vec<Mat>,
    pub biases: Vec<Vec<f64>>,
}

impl Mlp {
    /// Seeded He-uniform initialization (`limit = sqrt(6 / fan_in)`), zero biases.
    pub fn new(layer_dims: &[usize], seed: u64) -> Self {
        assert!(layer_dims.len() >= 2, "need at least input and output dims");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in layer_dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / fan_in as f64).sqrt();
            let mut mat = Mat::zeros(fan_in, fan_out);
            for v in mat.data.iter_mut() {
                *v = rng.random_range(-limit..limit);
            }
            weights.push(mat);
            biases.push(vec![0.0; fan_out]);
        }
        Mlp { layer_dims: layer_dims.to_vec(), weights, biases }
    }

    pub fn zeroed(layer_dims: &[usize]) -> Self {
        let mut net = Mlp::new(layer_dims, 0);
        for w in net.weights.iter_mut() {
            w.data.fill(0.0);
        }
        net
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn save_json(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load_json(path: &std::path::Path) -> Result<Mlp> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Post-activation values per layer; `activations[0]` is the input batch.
pub struct ForwardCache {
    pub activations: Vec<Mat>,
}

impl ForwardCache {
    pub fn output(&self) -> &Mat {
        self.activations.last().unwrap()
    }
}

/// Batch forward pass with cached activations for backprop.
pub fn forward(net: &Mlp, batch: &Mat) -> Result<ForwardCache> {
    if batch.cols != net.input_dim() {
        return Err(Error::Dimension(format!(
            "batch has {} features, network expects {}",
            batch.cols,
            net.input_dim()
        )));
    }
    let n_layers = net.weights.len();
    let mut activations = Vec::with_capacity(n_layers + 1);
    activations.push(batch.clone());
    for (l, (w, b)) in net.weights.iter().zip(&net.biases).enumerate() {
        let mut z = activations[l].matmul(w);
        for i in 0..z.rows {
            for (v, bias) in z.row_mut(i).iter_mut().zip(b) {
                *v += bias;
            }
        }
        if l + 1 < n_layers {
            for v in z.data.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
        activations.push(z);
    }
    Ok(ForwardCache { activations })
}

/// Parameter gradients plus the gradient with respect to the input batch.
pub struct Gradients {
    pub weights: Vec<Mat>,
    pub biases: Vec<Vec<f64>>,
    pub input: Mat,
}

/// Backpropagate `loss_grad` (d loss / d output, shape n x d_out) through the
/// cached forward pass.
pub fn backward(net: &Mlp, cache: &ForwardCache, loss_grad: &Mat) -> Result<Gradients> {
    let n_layers = net.weights.len();
    let out = cache.output();
    if loss_grad.rows != out.rows || loss_grad.cols != out.cols {
        return Err(Error::Dimension("loss gradient shape mismatch".into()));
    }
    let mut w_grads = vec![Mat::zeros(0, 0); n_layers];
    let mut b_grads = vec![Vec::new(); n_layers];
    let mut delta = loss_grad.clone();
    for l in (0..n_layers).rev() {
        // output layer is linear; hidden layers gate the incoming delta
        // through the ReLU mask of their own activation
        if l + 1 < n_layers {
            let act = &cache.activations[l + 1];
            for (d, a) in delta.data.iter_mut().zip(&act.data) {
                if *a <= 0.0 {
                    *d = 0.0;
                }
            }
        }
        w_grads[l] = cache.activations[l].t_matmul(&delta);
        let mut bg = vec![0.0; delta.cols];
        for i in 0..delta.rows {
            for (g, d) in bg.iter_mut().zip(delta.row(i)) {
                *g += d;
            }
        }
        b_grads[l] = bg;
        delta = delta.matmul(&net.weights[l].transpose());
    }
    Ok(Gradients { weights: w_grads, biases: b_grads, input: delta })
}

/// Adam optimizer state, shaped like the network parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub m_w: Vec<Mat>,
    pub v_w: Vec<Mat>,
    pub m_b: Vec<Vec<f64>>,
    pub v_b: Vec<Vec<f64>>,
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(net: &Mlp, lr: f64) -> Self {
        AdamState {
            m_w: net.weights.iter().map(|w| Mat::zeros(w.rows, w.cols)).collect(),
            v_w: net.weights.iter().map(|w| Mat::zeros(w.rows, w.cols)).collect(),
            m_b: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            v_b: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

fn adam_update(p: &mut f64, g: f64, m: &mut f64, v: &mut f64, s: &AdamState, corr1: f64, corr2: f64) {
    *m = s.beta1 * *m + (1.0 - s.beta1) * g;
    *v = s.beta2 * *v + (1.0 - s.beta2) * g * g;
    let m_hat = *m / corr1;
    let v_hat = *v / corr2;
    *p -= s.lr * m_hat / (v_hat.sqrt() + s.eps);
}

/// One bias-corrected Adam step. Rejects non-finite gradients.
pub fn adam_step(net: &mut Mlp, grads: &Gradients, state: &mut AdamState) -> Result<()> {
    let finite = grads.weights.iter().all(|g| !g.has_non_finite())
        && grads.biases.iter().flatten().all(|g| g.is_finite());
    if !finite {
        return Err(Error::Diverged("non-finite gradient in Adam step".into()));
    }
    state.t += 1;
    let corr1 = 1.0 - state.beta1.powi(state.t as i32);
    let corr2 = 1.0 - state.beta2.powi(state.t as i32);
    let s = state.clone();
    for l in 0..net.weights.len() {
        for i in 0..net.weights[l].data.len() {
            adam_update(
                &mut net.weights[l].data[i],
                grads.weights[l].data[i],
                &mut state.m_w[l].data[i],
                &mut state.v_w[l].data[i],
                &s,
                corr1,
                corr2,
            );
        }
        for i in 0..net.biases[l].len() {
            adam_update(
                &mut net.biases[l][i],
                grads.biases[l][i],
                &mut state.m_b[l][i],
                &mut state.v_b[l][i],
                &s,
                corr1,
                corr2,
            );
        }
    }
    if net.weights.iter().any(|w| w.has_non_finite()) {
        return Err(Error::Diverged("non-finite parameter after Adam step".into()));
    }
    Ok(())
}

/// Row-wise softmax with max-subtraction for stability.
pub fn softmax_head(logits: &Mat) -> Mat {
    let mut out = logits.clone();
    for i in 0..out.rows {
        let row = out.row_mut(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Gradient of mean cross entropy w.r.t. the logits: `(probs - onehot) / n`.
pub fn softmax_ce_grad(probs: &Mat, true_labels: &[usize]) -> Mat {
    let n = probs.rows as f64;
    let mut grad = probs.clone();
    for (i, &label) in true_labels.iter().enumerate() {
        *grad.at_mut(i, label) -= 1.0;
    }
    for v in grad.data.iter_mut() {
        *v /= n;
    }
    grad
}
