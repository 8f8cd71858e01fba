//! Exact reverse-mode gradients for the full model (BPTT through both
//! directions of every stacked layer, attention, and the classifier head).

use rayon::prelude::*;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::linalg::{add_assign, Mat};
use super::{
    add_gate_backward, forward_full, AttentionParams, LayerParams, Mode, ModelConfig, ModelParams,
    NnError,
};
use crate::dataset::ClassWeights;

/// Same tensor tree as [`ModelParams`], holding ∂L/∂θ.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerParams>,
    pub attention: AttentionParams,
    pub w_c: Mat,
    pub b_c: Vec<f64>,
}

impl Gradients {
    pub fn zeros(config: &ModelConfig) -> Self {
        let p = ModelParams::zeros(config);
        Self { layers: p.layers, attention: p.attention, w_c: p.w_c, b_c: p.b_c }
    }

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

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn accumulate(&mut self, other: &Gradients) {
        for (mine, theirs) in self.tensors_mut().into_iter().zip(other.tensors()) {
            add_assign(mine, theirs);
        }
    }
}

/// Euclidean norm over every gradient coordinate.
pub fn global_grad_norm(grads: &Gradients) -> f64 {
    grads.tensors().iter().flat_map(|t| t.iter()).map(|g| g * g).sum::<f64>().sqrt()
}

pub fn scale_gradients(grads: &mut Gradients, factor: f64) {
    for t in grads.tensors_mut() {
        for g in t.iter_mut() {
            *g *= factor;
        }
    }
}

/// Per-sample dropout stream: all samples of a batch share the seed but get
/// distinct ChaCha streams, so forward-for-loss and backward see identical
/// masks and batches are reproducible.
fn sample_rng(mode: Mode, index: usize) -> Option<ChaCha20Rng> {
    match mode {
        Mode::Train { seed } => {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(1 + index as u64);
            Some(rng)
        }
        Mode::Eval => None,
    }
}

/// Batch gradient plus the training-mode argmax hit count.
pub struct BatchBackward {
    pub loss: f64,
    pub grads: Gradients,
    pub correct: usize,
}

/// Accumulates one sample's gradient of the batch-mean weighted CE.
/// Returns (loss, predicted-correctly).
fn backward_one(
    x: &[f64],
    label: usize,
    params: &ModelParams,
    weights: &ClassWeights,
    rng: Option<&mut ChaCha20Rng>,
    inv_batch: f64,
    g: &mut Gradients,
) -> (f64, bool) {
    let cfg = &params.config;
    let (t_steps, h) = (cfg.seq_len, cfg.hidden_dim);
    let fc = forward_full(x, params, rng);
    let loss = super::weighted_ce(&fc.probs, label, weights);
    let argmax = fc
        .probs
        .iter()
        .enumerate()
        .fold((0usize, f64::NEG_INFINITY), |best, (i, &p)| if p > best.1 { (i, p) } else { best })
        .0;

    // classifier head: d logits = w_label · (p - onehot) / B
    let scale = weights.w[label] * inv_batch;
    let mut dlogits = fc.probs.clone();
    for d in dlogits.iter_mut() {
        *d *= scale;
    }
    dlogits[label] -= scale;
    g.w_c.add_outer(&dlogits, &fc.ctx_input);
    add_assign(&mut g.b_c, &dlogits);
    let mut dctx = vec![0.0; 2 * h];
    params.w_c.addmv_t(&dlogits, &mut dctx);
    if let Some(mask) = &fc.ctx_mask {
        for (d, m) in dctx.iter_mut().zip(mask) {
            *d *= m;
        }
    }

    // attention: context = Σ α_t h_t, α = softmax(vᵀ·tanh(W_a h_t + b_a))
    let mut dalpha = vec![0.0; t_steps];
    for t in 0..t_steps {
        dalpha[t] = dctx.iter().zip(fc.hidden.row(t)).map(|(a, b)| a * b).sum();
    }
    let weighted_sum: f64 = fc.alpha.iter().zip(&dalpha).map(|(a, d)| a * d).sum();
    let mut d_hidden = Mat::zeros(t_steps, 2 * h);
    let a_dim = cfg.attention_dim;
    let mut dz_a = vec![0.0; a_dim];
    for t in 0..t_steps {
        let de = fc.alpha[t] * (dalpha[t] - weighted_sum);
        let u = fc.att_u.row(t);
        for a in 0..a_dim {
            g.attention.v[a] += de * u[a];
            dz_a[a] = de * params.attention.v[a] * (1.0 - u[a] * u[a]);
        }
        g.attention.w_a.add_outer(&dz_a, fc.hidden.row(t));
        add_assign(&mut g.attention.b_a, &dz_a);
        let row = d_hidden.row_mut(t);
        for (j, r) in row.iter_mut().enumerate() {
            *r += fc.alpha[t] * dctx[j];
        }
        params.attention.w_a.addmv_t(&dz_a, d_hidden.row_mut(t));
    }

    // stacked BiLSTM layers, top down
    let zeros_h = vec![0.0; h];
    for l in (0..cfg.num_layers).rev() {
        let cache = &fc.layers[l];
        let d_in_width = cache.input.cols;
        let mut d_input = Mat::zeros(t_steps, d_in_width);

        // forward direction ran t = 0..T, so unroll t = T-1..0
        let mut carry_dh = vec![0.0; h];
        let mut carry_dc = vec![0.0; h];
        let mut dh = vec![0.0; h];
        let mut dh_prev = vec![0.0; h];
        for t in (0..t_steps).rev() {
            for j in 0..h {
                dh[j] = d_hidden.row(t)[j] + carry_dh[j];
            }
            let (h_prev, c_prev) = if t > 0 {
                (cache.fwd[t - 1].h.as_slice(), cache.fwd[t - 1].c.as_slice())
            } else {
                (zeros_h.as_slice(), zeros_h.as_slice())
            };
            add_gate_backward(
                &cache.fwd[t],
                h_prev,
                c_prev,
                &dh,
                &mut carry_dc,
                cache.input.row(t),
                &params.layers[l].fwd,
                &mut g.layers[l].fwd,
                d_input.row_mut(t),
                &mut dh_prev,
                h,
            );
            std::mem::swap(&mut carry_dh, &mut dh_prev);
        }

        // backward direction ran t = T-1..0, so unroll t = 0..T
        carry_dh.iter_mut().for_each(|v| *v = 0.0);
        carry_dc.iter_mut().for_each(|v| *v = 0.0);
        for t in 0..t_steps {
            for j in 0..h {
                dh[j] = d_hidden.row(t)[h + j] + carry_dh[j];
            }
            let (h_prev, c_prev) = if t + 1 < t_steps {
                (cache.bwd[t + 1].h.as_slice(), cache.bwd[t + 1].c.as_slice())
            } else {
                (zeros_h.as_slice(), zeros_h.as_slice())
            };
            add_gate_backward(
                &cache.bwd[t],
                h_prev,
                c_prev,
                &dh,
                &mut carry_dc,
                cache.input.row(t),
                &params.layers[l].bwd,
                &mut g.layers[l].bwd,
                d_input.row_mut(t),
                &mut dh_prev,
                h,
            );
            std::mem::swap(&mut carry_dh, &mut dh_prev);
        }

        if l > 0 {
            // through the inter-layer dropout into the next hidden below
            if let Some(mask) = fc.inter_masks.get(l - 1) {
                for (v, m) in d_input.data.iter_mut().zip(mask) {
                    *v *= m;
                }
            }
            d_hidden = d_input;
        }
    }

    (loss, argmax == label)
}

fn check_batch(batch: &[(&[f64], usize)], params: &ModelParams) -> Result<(), NnError> {
    if batch.is_empty() {
        return Err(NnError::ShapeMismatch("empty batch".into()));
    }
    let expect = params.config.seq_len * params.config.input_channels;
    for (x, label) in batch {
        if x.len() != expect {
            return Err(NnError::ShapeMismatch(format!(
                "window has {} values, model expects {expect}",
                x.len()
            )));
        }
        if *label >= params.config.num_classes {
            return Err(NnError::ShapeMismatch(format!(
                "label {label} out of range for {} classes",
                params.config.num_classes
            )));
        }
    }
    Ok(())
}

// Fixed chunk size keeps the gradient summation tree independent of the
// worker count, so results are bit-reproducible on any machine.
const GRAD_CHUNK: usize = 8;

pub fn backward_detailed(
    batch: &[(&[f64], usize)],
    params: &ModelParams,
    weights: &ClassWeights,
    mode: Mode,
) -> Result<BatchBackward, NnError> {
    check_batch(batch, params)?;
    let inv_batch = 1.0 / batch.len() as f64;
    let partials: Vec<(f64, usize, Gradients)> = batch
        .par_chunks(GRAD_CHUNK)
        .enumerate()
        .map(|(chunk_idx, chunk)| {
            let mut grads = Gradients::zeros(&params.config);
            let mut loss = 0.0;
            let mut correct = 0;
            for (j, (x, label)) in chunk.iter().enumerate() {
                let mut rng = sample_rng(mode, chunk_idx * GRAD_CHUNK + j);
                let (l, ok) =
                    backward_one(x, *label, params, weights, rng.as_mut(), inv_batch, &mut grads);
                loss += l;
                correct += ok as usize;
            }
            (loss, correct, grads)
        })
        .collect();

    let mut grads = Gradients::zeros(&params.config);
    let mut loss = 0.0;
    let mut correct = 0;
    for (l, c, g) in &partials {
        loss += l;
        correct += c;
        grads.accumulate(g);
    }
    Ok(BatchBackward { loss: loss * inv_batch, grads, correct })
}

/// Mean weighted cross-entropy over the batch and its exact gradient.
pub fn backward(
    batch: &[(&[f64], usize)],
    params: &ModelParams,
    weights: &ClassWeights,
    mode: Mode,
) -> Result<(f64, Gradients), NnError> {
    let out = backward_detailed(batch, params, weights, mode)?;
    Ok((out.loss, out.grads))
}

/// Forward-only batch-mean loss with the same per-sample dropout streams as
/// [`backward`]; this is what a finite-difference probe must call.
pub fn batch_loss(
    batch: &[(&[f64], usize)],
    params: &ModelParams,
    weights: &ClassWeights,
    mode: Mode,
) -> Result<f64, NnError> {
    check_batch(batch, params)?;
    let mut loss = 0.0;
    for (i, (x, label)) in batch.iter().enumerate() {
        let mut rng = sample_rng(mode, i);
        let fc = forward_full(x, params, rng.as_mut());
        loss += super::weighted_ce(&fc.probs, *label, weights);
    }
    Ok(loss / batch.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ModelConfig;

    fn tiny_model(dropout: f64, seed: u64) -> ModelParams {
        let cfg = ModelConfig::new(2, 4, 3).with_hidden(3).with_layers(2).with_dropout(dropout);
        ModelParams::init(&cfg, seed)
    }

    fn toy_input(n: usize, phase: f64) -> Vec<f64> {
        (0..n).map(|i| (i as f64 * 0.43 + phase).sin()).collect()
    }

    #[test]
    fn duplicated_sample_equals_single_sample_gradient() {
        let params = tiny_model(0.0, 3);
        let weights = ClassWeights::uniform(3);
        let x = toy_input(8, 0.0);
        let single = backward(&[(&x, 1)], &params, &weights, Mode::Eval).unwrap();
        let doubled = backward(&[(&x, 1), (&x, 1)], &params, &weights, Mode::Eval).unwrap();
        assert!((single.0 - doubled.0).abs() < 1e-12);
        for (a, b) in single.1.tensors().iter().zip(doubled.1.tensors()) {
            for (va, vb) in a.iter().zip(b.iter()) {
                assert!((va - vb).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn one_hot_probs_zero_classifier_bias_gradient() {
        let mut params = tiny_model(0.0, 4);
        // drive the softmax to an exact one-hot at class 2
        params.b_c = vec![-2e4, -2e4, 2e4];
        let weights = ClassWeights::uniform(3);
        let x = toy_input(8, 0.3);
        let (_, grads) = backward(&[(&x, 2)], &params, &weights, Mode::Eval).unwrap();
        for b in &grads.b_c {
            assert!(b.abs() < 1e-12, "classifier bias gradient {b} should vanish");
        }
    }

    #[test]
    fn rejects_empty_and_misshapen_batches() {
        let params = tiny_model(0.0, 5);
        let weights = ClassWeights::uniform(3);
        assert!(backward(&[], &params, &weights, Mode::Eval).is_err());
        let short = vec![1.0; 3];
        assert!(backward(&[(&short, 0)], &params, &weights, Mode::Eval).is_err());
        let x = toy_input(8, 0.0);
        assert!(backward(&[(&x, 7)], &params, &weights, Mode::Eval).is_err());
    }

    /// Central finite differences over every coordinate.
    fn finite_difference_check(params: &ModelParams, mode: Mode, weights: &ClassWeights) {
        let x1 = toy_input(8, 0.0);
        let x2 = toy_input(8, 1.1);
        let batch: Vec<(&[f64], usize)> = vec![(&x1, 0), (&x2, 2)];
        let (_, grads) = backward(&batch, params, weights, mode).unwrap();

        let h = 1e-4;
        let flat_grads: Vec<f64> =
            grads.tensors().iter().flat_map(|t| t.iter().cloned()).collect::<Vec<_>>();
        let mut failures = 0;
        let mut worst: f64 = 0.0;
        let mut idx = 0;
        let n_tensors = params.tensors().len();
        for ti in 0..n_tensors {
            let len = params.tensors()[ti].len();
            for j in 0..len {
                let mut plus = params.clone();
                plus.tensors_mut()[ti][j] += h;
                let lp = batch_loss(&batch, &plus, weights, mode).unwrap();
                let mut minus = params.clone();
                minus.tensors_mut()[ti][j] -= h;
                let lm = batch_loss(&batch, &minus, weights, mode).unwrap();
                let fd = (lp - lm) / (2.0 * h);
                let g = flat_grads[idx];
                let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(1e-6);
                worst = worst.max(rel);
                if rel >= 1e-4 {
                    failures += 1;
                }
                idx += 1;
            }
        }
        let frac = 1.0 - failures as f64 / idx as f64;
        assert!(frac >= 0.99, "only {frac:.4} of coordinates within 1e-4");
        assert!(worst < 1e-2, "worst relative error {worst:.2e}");
    }

    #[test]
    fn gradients_match_finite_differences_eval_mode() {
        let params = tiny_model(0.0, 7);
        finite_difference_check(&params, Mode::Eval, &ClassWeights { w: vec![0.8, 1.1, 1.4] });
    }

    #[test]
    fn gradients_match_finite_differences_with_dropout() {
        let params = tiny_model(0.3, 8);
        finite_difference_check(
            &params,
            Mode::Train { seed: 42 },
            &ClassWeights::uniform(3),
        );
    }

    #[test]
    fn batch_gradient_is_mean_of_per_sample_gradients() {
        let params = tiny_model(0.0, 9);
        let weights = ClassWeights { w: vec![1.5, 0.7, 1.0] };
        let xs: Vec<Vec<f64>> = (0..5).map(|i| toy_input(8, i as f64)).collect();
        let batch: Vec<(&[f64], usize)> = xs.iter().enumerate().map(|(i, x)| (x.as_slice(), i % 3)).collect();
        let (loss, grads) = backward(&batch, &params, &weights, Mode::Eval).unwrap();

        let mut expected = Gradients::zeros(&params.config);
        let mut expected_loss = 0.0;
        for item in &batch {
            let (l, g) = backward(std::slice::from_ref(item), &params, &weights, Mode::Eval).unwrap();
            expected_loss += l / 5.0;
            for (mine, theirs) in expected.tensors_mut().into_iter().zip(g.tensors()) {
                for (a, b) in mine.iter_mut().zip(theirs) {
                    *a += b / 5.0;
                }
            }
        }
        assert!((loss - expected_loss).abs() < 1e-12);
        for (a, b) in grads.tensors().iter().zip(expected.tensors()) {
            for (va, vb) in a.iter().zip(b.iter()) {
                assert!((va - vb).abs() < 1e-10);
            }
        }
    }
}
