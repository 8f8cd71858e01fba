//! The BiLSTM + attention classifier, built from scratch: forward pass,
//! class-weighted cross-entropy, exact backpropagation through time, and
//! Adam. No autodiff — gradients are hand-derived for this fixed
//! architecture and verified against finite differences in the test suite.

mod adam;
mod backward;
mod linalg;

pub use adam::{adam_step, AdamHyper, AdamState};
pub use backward::{
    backward, backward_detailed, batch_loss, global_grad_norm, scale_gradients, BatchBackward,
    Gradients,
};
pub use linalg::{softmax, Mat};

use linalg::{add_assign, sigmoid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::ClassWeights;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
}

/// Architecture hyperparameters. Defaults follow the tuned configuration:
/// hidden 256, 3 layers, dropout 0.47.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_channels: usize,
    pub seq_len: usize,
    pub num_classes: usize,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub dropout_rate: f64,
    pub attention_dim: usize,
}

impl ModelConfig {
    pub fn new(input_channels: usize, seq_len: usize, num_classes: usize) -> Self {
        Self {
            input_channels,
            seq_len,
            num_classes,
            hidden_dim: 256,
            num_layers: 3,
            dropout_rate: 0.47,
            attention_dim: 256,
        }
    }

    pub fn with_hidden(mut self, hidden_dim: usize) -> Self {
        self.hidden_dim = hidden_dim;
        self.attention_dim = hidden_dim;
        self
    }

    pub fn with_layers(mut self, num_layers: usize) -> Self {
        self.num_layers = num_layers;
        self
    }

    pub fn with_dropout(mut self, dropout_rate: f64) -> Self {
        self.dropout_rate = dropout_rate;
        self
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |m: String| Err(NnError::InvalidConfig(m));
        if self.hidden_dim == 0 || self.num_layers == 0 || self.attention_dim == 0 {
            return bad("hidden_dim, num_layers, attention_dim must be >= 1".into());
        }
        if self.num_classes < 2 {
            return bad(format!("num_classes {} must be >= 2", self.num_classes));
        }
        if self.input_channels == 0 || self.seq_len == 0 {
            return bad("input_channels and seq_len must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout_rate {} outside [0, 1)", self.dropout_rate));
        }
        Ok(())
    }

    /// Input width of layer `l`: raw channels for layer 0, 2H above.
    fn layer_input_dim(&self, l: usize) -> usize {
        if l == 0 {
            self.input_channels
        } else {
            2 * self.hidden_dim
        }
    }

    /// Total trainable parameter count implied by the shape rules.
    pub fn param_count(&self) -> usize {
        let h = self.hidden_dim;
        let mut count = 0;
        for l in 0..self.num_layers {
            let d = self.layer_input_dim(l);
            count += 2 * (4 * h * d + 4 * h * h + 4 * h); // both directions
        }
        count += self.attention_dim * 2 * h + 2 * self.attention_dim; // W_a, b_a, v
        count += self.num_classes * 2 * h + self.num_classes; // classifier
        count
    }
}

/// One LSTM cell's weights. Gate order within the 4H axis: input, forget,
/// cell, output.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCellParams {
    pub w_x: Mat, // 4H × D_in
    pub w_h: Mat, // 4H × H
    pub b: Vec<f64>,
}

impl LstmCellParams {
    fn zeros(hidden: usize, input: usize) -> Self {
        Self { w_x: Mat::zeros(4 * hidden, input), w_h: Mat::zeros(4 * hidden, hidden), b: vec![0.0; 4 * hidden] }
    }
}

/// Additive attention: score_t = vᵀ·tanh(W_a·h_t + b_a).
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub w_a: Mat, // A × 2H
    pub b_a: Vec<f64>,
    pub v: Vec<f64>,
}

impl AttentionParams {
    fn zeros(attention: usize, hidden: usize) -> Self {
        Self { w_a: Mat::zeros(attention, 2 * hidden), b_a: vec![0.0; attention], v: vec![0.0; attention] }
    }
}

/// Forward and backward cells of one stacked layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub fwd: LstmCellParams,
    pub bwd: LstmCellParams,
}

/// All trainable weights plus the architecture they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub layers: Vec<LayerParams>,
    pub attention: AttentionParams,
    pub w_c: Mat, // M × 2H
    pub b_c: Vec<f64>,
    pub config: ModelConfig,
}

impl ModelParams {
    pub fn zeros(config: &ModelConfig) -> Self {
        let h = config.hidden_dim;
        let layers = (0..config.num_layers)
            .map(|l| {
                let d = config.layer_input_dim(l);
                LayerParams { fwd: LstmCellParams::zeros(h, d), bwd: LstmCellParams::zeros(h, d) }
            })
            .collect();
        Self {
            layers,
            attention: AttentionParams::zeros(config.attention_dim, h),
            w_c: Mat::zeros(config.num_classes, 2 * h),
            b_c: vec![0.0; config.num_classes],
            config: config.clone(),
        }
    }

    /// Seeded initialization: weights uniform in [-1/√H, 1/√H], biases zero
    /// except the forget gate, which starts at 1 so early training does not
    /// flush cell state.
    pub fn init(config: &ModelConfig, seed: u64) -> Self {
        let mut params = Self::zeros(config);
        let bound = 1.0 / (config.hidden_dim as f64).sqrt();
        let h = config.hidden_dim;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        fn fill(rng: &mut ChaCha20Rng, m: &mut Mat, bound: f64) {
            for v in m.data.iter_mut() {
                *v = rng.random_range(-bound..bound);
            }
        }
        for layer in params.layers.iter_mut() {
            for cell in [&mut layer.fwd, &mut layer.bwd] {
                fill(&mut rng, &mut cell.w_x, bound);
                fill(&mut rng, &mut cell.w_h, bound);
                for fb in cell.b[h..2 * h].iter_mut() {
                    *fb = 1.0;
                }
            }
        }
        fill(&mut rng, &mut params.attention.w_a, bound);
        for v in params.attention.v.iter_mut() {
            *v = rng.random_range(-bound..bound);
        }
        fill(&mut rng, &mut params.w_c, bound);
        params
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Tensors in canonical (checkpoint) order: per layer fwd then bwd
    /// (w_x, w_h, b), then attention (w_a, b_a, v), then classifier (w, b).
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for layer in &self.layers {
            for cell in [&layer.fwd, &layer.bwd] {
                out.push(cell.w_x.data.as_slice());
                out.push(cell.w_h.data.as_slice());
                out.push(cell.b.as_slice());
            }
        }
        out.push(self.attention.w_a.data.as_slice());
        out.push(self.attention.b_a.as_slice());
        out.push(self.attention.v.as_slice());
        out.push(self.w_c.data.as_slice());
        out.push(self.b_c.as_slice());
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for layer in self.layers.iter_mut() {
            for cell in [&mut layer.fwd, &mut layer.bwd] {
                out.push(cell.w_x.data.as_mut_slice());
                out.push(cell.w_h.data.as_mut_slice());
                out.push(cell.b.as_mut_slice());
            }
        }
        out.push(self.attention.w_a.data.as_mut_slice());
        out.push(self.attention.b_a.as_mut_slice());
        out.push(self.attention.v.as_mut_slice());
        out.push(self.w_c.data.as_mut_slice());
        out.push(self.b_c.as_mut_slice());
        out
    }

    /// Names aligned with [`ModelParams::tensors`].
    pub fn tensor_names(config: &ModelConfig) -> Vec<String> {
        let mut out = Vec::new();
        for l in 0..config.num_layers {
            for dir in ["fwd", "bwd"] {
                out.push(format!("lstm{l}.{dir}.w_x"));
                out.push(format!("lstm{l}.{dir}.w_h"));
                out.push(format!("lstm{l}.{dir}.b"));
            }
        }
        out.extend(["attention.w_a".into(), "attention.b_a".into(), "attention.v".into()]);
        out.extend(["classifier.w".into(), "classifier.b".into()]);
        out
    }
}

/// Train mode applies seeded dropout masks; Eval is deterministic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train { seed: u64 },
    Eval,
}

// --- forward pass with caches ---------------------------------------------

pub(crate) struct CellStep {
    pub gates: Vec<f64>, // activated [i | f | g | o], 4H
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

pub(crate) struct LayerCache {
    pub input: Mat, // what this layer consumed (post-dropout), T × D
    pub fwd: Vec<CellStep>,
    pub bwd: Vec<CellStep>,
}

pub(crate) struct ForwardCache {
    pub layers: Vec<LayerCache>,
    pub inter_masks: Vec<Vec<f64>>, // L-1 masks, empty in Eval
    pub hidden: Mat,                // final layer output, T × 2H
    pub att_u: Mat,                 // T × A
    pub alpha: Vec<f64>,
    pub ctx_mask: Option<Vec<f64>>,
    pub ctx_input: Vec<f64>, // context after dropout, as the classifier saw it
    pub probs: Vec<f64>,
}

fn cell_step(x: &[f64], h_prev: &[f64], c_prev: &[f64], p: &LstmCellParams, hidden: usize) -> CellStep {
    let mut z = p.b.clone();
    p.w_x.addmv(x, &mut z);
    p.w_h.addmv(h_prev, &mut z);
    let mut gates = vec![0.0; 4 * hidden];
    let mut c = vec![0.0; hidden];
    let mut tanh_c = vec![0.0; hidden];
    let mut h = vec![0.0; hidden];
    for j in 0..hidden {
        let i = sigmoid(z[j]);
        let f = sigmoid(z[hidden + j]);
        let g = z[2 * hidden + j].tanh();
        let o = sigmoid(z[3 * hidden + j]);
        gates[j] = i;
        gates[hidden + j] = f;
        gates[2 * hidden + j] = g;
        gates[3 * hidden + j] = o;
        c[j] = f * c_prev[j] + i * g;
        tanh_c[j] = c[j].tanh();
        h[j] = o * tanh_c[j];
    }
    CellStep { gates, c, tanh_c, h }
}

/// Run one direction over the layer input; steps are stored by time index
/// regardless of processing order.
fn run_direction(input: &Mat, p: &LstmCellParams, hidden: usize, reverse: bool) -> Vec<CellStep> {
    let t_steps = input.rows;
    let mut h_prev = vec![0.0; hidden];
    let mut c_prev = vec![0.0; hidden];
    let mut steps: Vec<Option<CellStep>> = (0..t_steps).map(|_| None).collect();
    let order: Vec<usize> =
        if reverse { (0..t_steps).rev().collect() } else { (0..t_steps).collect() };
    for t in order {
        let step = cell_step(input.row(t), &h_prev, &c_prev, p, hidden);
        h_prev.copy_from_slice(&step.h);
        c_prev.copy_from_slice(&step.c);
        steps[t] = Some(step);
    }
    steps.into_iter().map(Option::unwrap).collect()
}

fn dropout_mask(rng: &mut ChaCha20Rng, len: usize, rate: f64) -> Vec<f64> {
    let keep = 1.0 - rate;
    (0..len)
        .map(|_| if rng.random_range(0.0..1.0) < rate { 0.0 } else { 1.0 / keep })
        .collect()
}

pub(crate) fn forward_full(
    x: &[f64],
    params: &ModelParams,
    mut mask_rng: Option<&mut ChaCha20Rng>,
) -> ForwardCache {
    let cfg = &params.config;
    let (t_steps, channels, h) = (cfg.seq_len, cfg.input_channels, cfg.hidden_dim);
    debug_assert_eq!(x.len(), t_steps * channels);

    let mut input = Mat { rows: t_steps, cols: channels, data: x.to_vec() };
    let mut caches = Vec::with_capacity(cfg.num_layers);
    let mut inter_masks = Vec::new();
    let mut hidden = Mat::zeros(0, 0);
    for l in 0..cfg.num_layers {
        let fwd = run_direction(&input, &params.layers[l].fwd, h, false);
        let bwd = run_direction(&input, &params.layers[l].bwd, h, true);
        let mut out = Mat::zeros(t_steps, 2 * h);
        for t in 0..t_steps {
            let row = out.row_mut(t);
            row[..h].copy_from_slice(&fwd[t].h);
            row[h..].copy_from_slice(&bwd[t].h);
        }
        let consumed = std::mem::replace(&mut input, Mat::zeros(0, 0));
        caches.push(LayerCache { input: consumed, fwd, bwd });
        if l + 1 < cfg.num_layers {
            let next = match (&mut mask_rng, cfg.dropout_rate > 0.0) {
                (Some(rng), true) => {
                    let mask = dropout_mask(rng, out.data.len(), cfg.dropout_rate);
                    let mut dropped = out.clone();
                    for (v, m) in dropped.data.iter_mut().zip(&mask) {
                        *v *= m;
                    }
                    inter_masks.push(mask);
                    dropped
                }
                _ => out.clone(),
            };
            input = next;
        } else {
            hidden = out;
        }
    }

    // additive attention over the final hidden sequence
    let a_dim = cfg.attention_dim;
    let mut att_u = Mat::zeros(t_steps, a_dim);
    let mut scores = vec![0.0; t_steps];
    for t in 0..t_steps {
        let mut u = params.attention.b_a.clone();
        params.attention.w_a.addmv(hidden.row(t), &mut u);
        for uv in u.iter_mut() {
            *uv = uv.tanh();
        }
        scores[t] = u.iter().zip(&params.attention.v).map(|(a, b)| a * b).sum();
        att_u.row_mut(t).copy_from_slice(&u);
    }
    let alpha = softmax(&scores);
    let mut context = vec![0.0; 2 * h];
    for t in 0..t_steps {
        for (c, hv) in context.iter_mut().zip(hidden.row(t)) {
            *c += alpha[t] * hv;
        }
    }

    let (ctx_input, ctx_mask) = match (&mut mask_rng, cfg.dropout_rate > 0.0) {
        (Some(rng), true) => {
            let mask = dropout_mask(rng, context.len(), cfg.dropout_rate);
            let dropped: Vec<f64> = context.iter().zip(&mask).map(|(v, m)| v * m).collect();
            (dropped, Some(mask))
        }
        _ => (context.clone(), None),
    };

    let mut logits = params.b_c.clone();
    params.w_c.addmv(&ctx_input, &mut logits);
    let probs = softmax(&logits);

    ForwardCache { layers: caches, inter_masks, hidden, att_u, alpha, ctx_mask, ctx_input, probs }
}

fn mode_rng(mode: Mode) -> Option<ChaCha20Rng> {
    match mode {
        Mode::Train { seed } => Some(ChaCha20Rng::seed_from_u64(seed)),
        Mode::Eval => None,
    }
}

// --- public operations -----------------------------------------------------

/// One LSTM cell step: (h, c) from input, previous state, and cell weights.
pub fn lstm_cell(
    x_t: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    p: &LstmCellParams,
) -> Result<(Vec<f64>, Vec<f64>), NnError> {
    let hidden = h_prev.len();
    if p.w_x.rows != 4 * hidden || p.w_x.cols != x_t.len() || p.w_h.rows != 4 * hidden
        || p.w_h.cols != hidden || p.b.len() != 4 * hidden || c_prev.len() != hidden
    {
        return Err(NnError::ShapeMismatch(format!(
            "cell expects x {} h {}, got w_x {}x{} w_h {}x{}",
            x_t.len(),
            hidden,
            p.w_x.rows,
            p.w_x.cols,
            p.w_h.rows,
            p.w_h.cols
        )));
    }
    let step = cell_step(x_t, h_prev, c_prev, p, hidden);
    Ok((step.h, step.c))
}

fn check_input(x: &[f64], params: &ModelParams) -> Result<(), NnError> {
    let expect = params.config.seq_len * params.config.input_channels;
    if x.len() != expect {
        return Err(NnError::ShapeMismatch(format!(
            "input has {} values, config implies {} ({}x{})",
            x.len(),
            expect,
            params.config.seq_len,
            params.config.input_channels
        )));
    }
    Ok(())
}

/// Full stacked bidirectional pass; row t of the result is the forward
/// hidden state at t concatenated with the backward hidden state at t.
pub fn bilstm_forward(x: &[f64], params: &ModelParams, mode: Mode) -> Result<Mat, NnError> {
    check_input(x, params)?;
    let mut rng = mode_rng(mode);
    Ok(forward_full(x, params, rng.as_mut()).hidden)
}

/// Attention pooling: softmax-weighted sum of hidden rows.
pub fn attention(hidden: &Mat, p: &AttentionParams) -> (Vec<f64>, Vec<f64>) {
    assert!(hidden.rows >= 1, "attention needs at least one time step");
    let mut scores = vec![0.0; hidden.rows];
    for t in 0..hidden.rows {
        let mut u = p.b_a.clone();
        p.w_a.addmv(hidden.row(t), &mut u);
        scores[t] = u.iter().zip(&p.v).map(|(a, b)| a.tanh() * b).sum();
    }
    let alpha = softmax(&scores);
    let mut context = vec![0.0; hidden.cols];
    for t in 0..hidden.rows {
        for (c, hv) in context.iter_mut().zip(hidden.row(t)) {
            *c += alpha[t] * hv;
        }
    }
    (context, alpha)
}

/// End-to-end forward: class probability distribution for one window.
pub fn classifier_forward(x: &[f64], params: &ModelParams, mode: Mode) -> Result<Vec<f64>, NnError> {
    check_input(x, params)?;
    let mut rng = mode_rng(mode);
    Ok(forward_full(x, params, rng.as_mut()).probs)
}

/// Per-sample weighted cross-entropy: -w_label · log(p_label), with the
/// probability clamped at 1e-12.
pub fn weighted_ce(probs: &[f64], label: usize, weights: &ClassWeights) -> f64 {
    -weights.w[label] * probs[label].max(1e-12).ln()
}

pub(crate) fn add_gate_backward(
    step: &CellStep,
    h_prev: &[f64],
    c_prev: &[f64],
    dh: &[f64],
    dc_carry: &mut Vec<f64>,
    input_row: &[f64],
    p: &LstmCellParams,
    g: &mut LstmCellParams,
    d_input_row: &mut [f64],
    dh_prev_out: &mut Vec<f64>,
    hidden: usize,
) {
    // dh arrives from above plus recurrence; dc_carry is the running cell grad
    let mut dz = vec![0.0; 4 * hidden];
    for j in 0..hidden {
        let i = step.gates[j];
        let f = step.gates[hidden + j];
        let gg = step.gates[2 * hidden + j];
        let o = step.gates[3 * hidden + j];
        let tc = step.tanh_c[j];
        let do_ = dh[j] * tc;
        let mut dc = dc_carry[j] + dh[j] * o * (1.0 - tc * tc);
        dz[3 * hidden + j] = do_ * o * (1.0 - o);
        let di = dc * gg;
        let df = dc * c_prev[j];
        let dg = dc * i;
        dz[j] = di * i * (1.0 - i);
        dz[hidden + j] = df * f * (1.0 - f);
        dz[2 * hidden + j] = dg * (1.0 - gg * gg);
        dc *= f;
        dc_carry[j] = dc;
    }
    g.w_x.add_outer(&dz, input_row);
    g.w_h.add_outer(&dz, h_prev);
    add_assign(&mut g.b, &dz);
    p.w_x.addmv_t(&dz, d_input_row);
    dh_prev_out.iter_mut().for_each(|v| *v = 0.0);
    p.w_h.addmv_t(&dz, dh_prev_out);
}
