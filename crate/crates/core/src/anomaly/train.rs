//! Minibatch gradient descent with backpropagation through time over the
//! whole autoencoder.

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EventWindow;
use crate::error::{Error, Result};
use crate::lstm::{
    cell_step_with_gates, CellState, GateActivations, LstmWeights, Matrix, ModelSpec,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Global gradient norm cap per step.
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 40,
            lr: 0.1,
            batch_size: 16,
            clip_norm: 1.0,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean loss over the training set after each epoch; entry 0 is before training.
    pub epoch_loss: Vec<f64>,
    pub steps: usize,
}

struct LayerTape {
    xs: Vec<Vec<f64>>,
    states: Vec<CellState>,
    gates: Vec<GateActivations>,
}

fn forward_tape(
    model: &ModelSpec,
    input: &[Vec<f64>],
) -> Result<(Vec<LayerTape>, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let ts = model.timesteps();
    let mut seq = input.to_vec();
    let mut tapes = Vec::with_capacity(model.layers.len());
    for (i, layer) in model.layers.iter().enumerate() {
        let mut state = CellState::zeros(layer.spec.lh);
        let mut states = vec![state.clone()];
        let mut gates = Vec::with_capacity(ts);
        for x in &seq {
            let (s, g) = cell_step_with_gates(x, &state, &layer.weights)?;
            state = s;
            states.push(state.clone());
            gates.push(g);
        }
        let out = if model.repeat_vector_after == Some(i) {
            vec![state.h.clone(); ts]
        } else {
            states[1..].iter().map(|s| s.h.clone()).collect()
        };
        tapes.push(LayerTape {
            xs: std::mem::replace(&mut seq, out),
            states,
            gates,
        });
    }
    let hidden = seq;
    let out = match &model.dense {
        Some(d) => hidden
            .iter()
            .map(|h| crate::lstm::dense_forward(d, h))
            .collect(),
        None => hidden.clone(),
    };
    Ok((tapes, hidden, out))
}

/// Mean squared reconstruction error of one window.
pub fn window_loss(model: &ModelSpec, input: &[Vec<f64>]) -> Result<f64> {
    let (_, _, out) = forward_tape(model, input)?;
    Ok(sq_err(&out, input).0)
}

fn sq_err(out: &[Vec<f64>], input: &[Vec<f64>]) -> (f64, usize) {
    let n: usize = input.iter().map(Vec::len).sum();
    let s: f64 = out
        .iter()
        .zip(input)
        .flat_map(|(o, x)| o.iter().zip(x).map(|(a, b)| (a - b) * (a - b)))
        .sum();
    (s / n.max(1) as f64, n)
}

fn add_outer(m: &mut Matrix, a: &[f64], x: &[f64]) {
    for (r, &ar) in a.iter().enumerate() {
        if ar != 0.0 {
            m.data[r * m.cols..(r + 1) * m.cols]
                .iter_mut()
                .zip(x)
                .for_each(|(g, &xv)| *g += ar * xv);
        }
    }
}

fn matvec_t(m: &Matrix, a: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m.cols];
    for (r, &ar) in a.iter().enumerate() {
        m.row(r)
            .iter()
            .zip(out.iter_mut())
            .for_each(|(&w, o)| *o += w * ar);
    }
    out
}

/// Backpropagate one layer; `dh_out[t]` is the loss gradient on `h_t`.
/// Returns the gradient on the layer's inputs.
fn layer_backward(
    w: &LstmWeights,
    tape: &LayerTape,
    dh_out: &[Vec<f64>],
    grad: &mut LstmWeights,
) -> Vec<Vec<f64>> {
    let lh = w.wh.cols;
    let ts = tape.xs.len();
    let mut dxs = vec![Vec::new(); ts];
    let mut dh_next = vec![0.0; lh];
    let mut dc_next = vec![0.0; lh];
    let mut da = vec![0.0; 4 * lh];
    for t in (0..ts).rev() {
        let g = &tape.gates[t];
        let (prev, cur) = (&tape.states[t], &tape.states[t + 1]);
        for k in 0..lh {
            let dh = dh_out[t][k] + dh_next[k];
            let tc = cur.c[k].tanh();
            let dc = dc_next[k] + dh * g.o[k] * (1.0 - tc * tc);
            da[k] = dc * g.g[k] * g.i[k] * (1.0 - g.i[k]);
            da[lh + k] = dc * prev.c[k] * g.f[k] * (1.0 - g.f[k]);
            da[2 * lh + k] = dc * g.i[k] * (1.0 - g.g[k] * g.g[k]);
            da[3 * lh + k] = dh * tc * g.o[k] * (1.0 - g.o[k]);
            dc_next[k] = dc * g.f[k];
        }
        add_outer(&mut grad.wx, &da, &tape.xs[t]);
        add_outer(&mut grad.wh, &da, &prev.h);
        grad.b.iter_mut().zip(&da).for_each(|(g, d)| *g += d);
        dxs[t] = matvec_t(&w.wx, &da);
        dh_next = matvec_t(&w.wh, &da);
    }
    dxs
}

fn zeroed(model: &ModelSpec) -> ModelSpec {
    let mut g = model.clone();
    for_each_param_mut(&mut g, |v| v.iter_mut().for_each(|x| *x = 0.0));
    g
}

fn for_each_param_mut(m: &mut ModelSpec, mut f: impl FnMut(&mut [f64])) {
    for l in &mut m.layers {
        f(&mut l.weights.wx.data);
        f(&mut l.weights.wh.data);
        f(&mut l.weights.b);
    }
    if let Some(d) = &mut m.dense {
        f(&mut d.w.data);
        f(&mut d.b);
    }
}

fn params(m: &ModelSpec) -> Vec<&[f64]> {
    let mut v: Vec<&[f64]> = Vec::new();
    for l in &m.layers {
        v.extend([
            l.weights.wx.data.as_slice(),
            &l.weights.wh.data,
            &l.weights.b,
        ]);
    }
    if let Some(d) = &m.dense {
        v.extend([d.w.data.as_slice(), &d.b]);
    }
    v
}

/// Loss of one window and its gradient, returned as a model-shaped tensor
/// whose weights hold the partial derivatives.
pub fn loss_and_gradient(model: &ModelSpec, input: &[Vec<f64>]) -> Result<(f64, ModelSpec)> {
    let mut grad = zeroed(model);
    let loss = accumulate(model, input, 1.0, &mut grad)?;
    Ok((loss, grad))
}

fn accumulate(
    model: &ModelSpec,
    input: &[Vec<f64>],
    weight: f64,
    grad: &mut ModelSpec,
) -> Result<f64> {
    let (tapes, hidden, out) = forward_tape(model, input)?;
    let (loss, n) = sq_err(&out, input);
    let scale = 2.0 * weight / n as f64;
    let dy: Vec<Vec<f64>> = out
        .iter()
        .zip(input)
        .map(|(o, x)| o.iter().zip(x).map(|(a, b)| scale * (a - b)).collect())
        .collect();
    let mut dseq = match (&model.dense, &mut grad.dense) {
        (Some(d), Some(gd)) => {
            for (t, h) in hidden.iter().enumerate() {
                add_outer(&mut gd.w, &dy[t], h);
                gd.b.iter_mut().zip(&dy[t]).for_each(|(g, d)| *g += d);
            }
            dy.iter().map(|v| matvec_t(&d.w, v)).collect::<Vec<_>>()
        }
        _ => dy,
    };
    for i in (0..model.layers.len()).rev() {
        let lh = model.layers[i].spec.lh;
        if model.repeat_vector_after == Some(i) {
            // every repeated copy feeds back into the final state
            let mut last = vec![0.0; lh];
            dseq.iter()
                .for_each(|d| last.iter_mut().zip(d).for_each(|(a, b)| *a += b));
            let ts = dseq.len();
            dseq = vec![vec![0.0; lh]; ts];
            dseq[ts - 1] = last;
        }
        dseq = layer_backward(
            &model.layers[i].weights,
            &tapes[i],
            &dseq,
            &mut grad.layers[i].weights,
        );
    }
    Ok(loss)
}

/// Train on background windows, returning the updated model.
pub fn train_autoencoder(
    data: &[EventWindow],
    model: &ModelSpec,
    cfg: &TrainConfig,
) -> Result<(ModelSpec, TrainReport)> {
    if data.is_empty() {
        return Err(Error::arg("training set is empty"));
    }
    if cfg.batch_size == 0 || !(cfg.lr.is_finite() && cfg.lr >= 0.0) || !(cfg.clip_norm > 0.0) {
        return Err(Error::arg(format!("invalid training settings {cfg:?}")));
    }
    model.validate()?;
    let width = model.input_width();
    if model.output_width() != width {
        return Err(Error::dim(
            "autoencoder output width must equal its input width",
        ));
    }
    let want = model.timesteps() * width;
    if let Some(bad) = data.iter().position(|e| e.samples.len() != want) {
        return Err(Error::dim(format!(
            "window {bad} has {} samples, model expects {want}",
            data[bad].samples.len()
        )));
    }
    let seqs: Vec<Vec<Vec<f64>>> = data.iter().map(|e| e.to_sequence(width)).collect();
    let mean_loss = |m: &ModelSpec| -> Result<f64> {
        let mut s = 0.0;
        for x in &seqs {
            s += window_loss(m, x)?;
        }
        Ok(s / seqs.len() as f64)
    };

    let mut model = model.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..seqs.len()).collect();
    let mut report = TrainReport {
        epoch_loss: vec![mean_loss(&model)?],
        steps: 0,
    };
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let mut grad = zeroed(&model);
            let weight = 1.0 / batch.len() as f64;
            for &k in batch {
                accumulate(&model, &seqs[k], weight, &mut grad)?;
            }
            let norm = params(&grad)
                .iter()
                .flat_map(|v| v.iter())
                .map(|g| g * g)
                .sum::<f64>()
                .sqrt();
            if !norm.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    loss: f64::NAN,
                });
            }
            let step = cfg.lr
                * if norm > cfg.clip_norm {
                    cfg.clip_norm / norm
                } else {
                    1.0
                };
            let gs: Vec<Vec<f64>> = params(&grad).into_iter().map(<[f64]>::to_vec).collect();
            let mut gi = gs.iter();
            for_each_param_mut(&mut model, |v| {
                let g = gi.next().unwrap();
                v.iter_mut().zip(g).for_each(|(w, g)| *w -= step * g);
            });
            report.steps += 1;
        }
        let loss = mean_loss(&model)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch, loss });
        }
        report.epoch_loss.push(loss);
    }
    Ok((model, report))
}
