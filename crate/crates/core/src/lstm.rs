//! LSTM cells, layers and the repeat-vector autoencoder, in `f64` reference
//! arithmetic and in bit-exact fixed point.
//!
//! Weight rows are stored gate-major in the order (i, f, g, o): rows
//! `[0, lh)` belong to the input gate, `[lh, 2lh)` to the forget gate and so
//! on. Every layer starts from a zero hidden and cell state.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixedpoint::{
    fx_add, fx_dot, fx_mul, logistic, q, sigmoid_lut, tanh_pwl, ActParams, ActTables, FixedFormat,
    FixedValue,
};

/// Storage order of the four gate blocks.
pub const GATE_ORDER: &str = "ifgo";

/// Dimensions of one LSTM layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    /// Input vector length.
    pub lx: usize,
    /// Hidden vector length.
    pub lh: usize,
    /// Return every `h_t` (true) or only the last one.
    pub return_sequences: bool,
    pub timesteps: usize,
}

impl LayerSpec {
    pub fn new(lx: usize, lh: usize, return_sequences: bool, timesteps: usize) -> Result<Self> {
        let spec = LayerSpec {
            lx,
            lh,
            return_sequences,
            timesteps,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lx == 0 || self.lh == 0 || self.timesteps == 0 {
            return Err(Error::dim(format!(
                "layer dimensions must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim(format!(
                "matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn matvec_into(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            *o += dot(self.row(r), x);
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gate weights of one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmWeights {
    /// `[4 lh x lx]`
    pub wx: Matrix,
    /// `[4 lh x lh]`
    pub wh: Matrix,
    /// `[4 lh]`
    pub b: Vec<f64>,
}

impl LstmWeights {
    pub fn zeros(spec: &LayerSpec) -> Self {
        LstmWeights {
            wx: Matrix::zeros(4 * spec.lh, spec.lx),
            wh: Matrix::zeros(4 * spec.lh, spec.lh),
            b: vec![0.0; 4 * spec.lh],
        }
    }

    pub fn check(&self, spec: &LayerSpec) -> Result<()> {
        let g = 4 * spec.lh;
        if self.wx.rows != g
            || self.wx.cols != spec.lx
            || self.wh.rows != g
            || self.wh.cols != spec.lh
            || self.b.len() != g
        {
            return Err(Error::dim(format!(
                "weights Wx {}x{}, Wh {}x{}, b {} do not match layer (lx={}, lh={})",
                self.wx.rows,
                self.wx.cols,
                self.wh.rows,
                self.wh.cols,
                self.b.len(),
                spec.lx,
                spec.lh
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseWeights {
    /// `[out x in]`
    pub w: Matrix,
    pub b: Vec<f64>,
}

impl DenseWeights {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        DenseWeights {
            w: Matrix::zeros(outputs, inputs),
            b: vec![0.0; outputs],
        }
    }

    pub fn inputs(&self) -> usize {
        self.w.cols
    }

    pub fn outputs(&self) -> usize {
        self.w.rows
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub spec: LayerSpec,
    pub weights: LstmWeights,
}

/// Per-tensor fixed-point formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorFormats {
    pub input: FixedFormat,
    pub weight: FixedFormat,
    pub bias: FixedFormat,
    pub hidden: FixedFormat,
    pub cell: FixedFormat,
    /// Gate pre-activations and dense accumulators.
    pub accum: FixedFormat,
    pub output: FixedFormat,
}

impl Default for TensorFormats {
    fn default() -> Self {
        TensorFormats {
            input: FixedFormat::Q4_12,
            weight: FixedFormat::Q4_12,
            bias: FixedFormat::Q8_24,
            hidden: FixedFormat::Q4_12,
            cell: FixedFormat::Q8_24,
            accum: FixedFormat::Q8_24,
            output: FixedFormat::Q4_12,
        }
    }
}

impl TensorFormats {
    pub fn validate(&self) -> Result<()> {
        for f in [
            self.input,
            self.weight,
            self.bias,
            self.hidden,
            self.cell,
            self.accum,
            self.output,
        ] {
            f.validate()?;
        }
        Ok(())
    }
}

/// A complete LSTM model: stacked layers, an optional repeat-vector
/// bottleneck after one layer, and an optional per-timestep dense head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub layers: Vec<Layer>,
    /// Index of the layer whose last hidden vector is repeated `timesteps`
    /// times to feed the next layer.
    pub repeat_vector_after: Option<usize>,
    pub dense: Option<DenseWeights>,
    pub formats: TensorFormats,
}

impl ModelSpec {
    /// Zero-weight model from layer specs.
    pub fn from_specs(
        specs: &[LayerSpec],
        repeat_vector_after: Option<usize>,
        dense_out: Option<usize>,
    ) -> Result<Self> {
        let layers = specs
            .iter()
            .map(|s| Layer {
                spec: *s,
                weights: LstmWeights::zeros(s),
            })
            .collect::<Vec<_>>();
        let dense = match (dense_out, specs.last()) {
            (Some(out), Some(last)) => Some(DenseWeights::zeros(last.lh, out)),
            _ => None,
        };
        let model = ModelSpec {
            layers,
            repeat_vector_after,
            dense,
            formats: TensorFormats::default(),
        };
        model.validate()?;
        Ok(model)
    }

    /// Repeat-vector autoencoder: encoder layers (the last one returns only
    /// its final state), repeat, decoder layers, dense head back to
    /// `input_width`.
    pub fn autoencoder(
        input_width: usize,
        encoder: &[usize],
        decoder: &[usize],
        timesteps: usize,
    ) -> Result<Self> {
        if encoder.is_empty() || decoder.is_empty() {
            return Err(Error::dim(
                "autoencoder needs at least one encoder and one decoder layer",
            ));
        }
        let mut specs = Vec::new();
        let mut lx = input_width;
        for (i, &lh) in encoder.iter().enumerate() {
            specs.push(LayerSpec::new(lx, lh, i + 1 < encoder.len(), timesteps)?);
            lx = lh;
        }
        for &lh in decoder {
            specs.push(LayerSpec::new(lx, lh, true, timesteps)?);
            lx = lh;
        }
        Self::from_specs(&specs, Some(encoder.len() - 1), Some(input_width))
    }

    pub fn input_width(&self) -> usize {
        self.layers.first().map_or(0, |l| l.spec.lx)
    }

    pub fn output_width(&self) -> usize {
        match (&self.dense, self.layers.last()) {
            (Some(d), _) => d.outputs(),
            (None, Some(l)) => l.spec.lh,
            (None, None) => 0,
        }
    }

    pub fn timesteps(&self) -> usize {
        self.layers.first().map_or(0, |l| l.spec.timesteps)
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.formats.validate()?;
        if self.layers.is_empty() {
            return Ok(());
        }
        let ts = self.timesteps();
        for (i, layer) in self.layers.iter().enumerate() {
            let s = &layer.spec;
            s.validate()?;
            layer
                .weights
                .check(s)
                .map_err(|e| Error::dim(format!("layer {i}: {e}")))?;
            if s.timesteps != ts {
                return Err(Error::dim(format!(
                    "layer {i} has {} timesteps, model uses {ts}",
                    s.timesteps
                )));
            }
            if i > 0 && self.layers[i - 1].spec.lh != s.lx {
                return Err(Error::dim(format!(
                    "layer {} outputs {} values but layer {i} expects lx = {}",
                    i - 1,
                    self.layers[i - 1].spec.lh,
                    s.lx
                )));
            }
            let is_repeat = self.repeat_vector_after == Some(i);
            if is_repeat && s.return_sequences {
                return Err(Error::dim(format!(
                    "repeat-vector layer {i} must return only its last state"
                )));
            }
            if !is_repeat && !s.return_sequences {
                return Err(Error::dim(format!(
                    "layer {i} returns only its last state but is not followed by a repeat vector"
                )));
            }
        }
        if let Some(r) = self.repeat_vector_after {
            if r + 1 >= self.layers.len() {
                return Err(Error::dim(format!(
                    "repeat vector after layer {r} needs a following layer"
                )));
            }
        }
        if let Some(d) = &self.dense {
            let last = self.layers.last().unwrap().spec.lh;
            if d.inputs() != last || d.b.len() != d.outputs() {
                return Err(Error::dim(format!(
                    "dense head is {}x{} but the last layer has lh = {last}",
                    d.outputs(),
                    d.inputs()
                )));
            }
        }
        Ok(())
    }

    /// Fill every weight uniformly in `[-scale, scale]`.
    pub fn randomize(&mut self, seed: u64, scale: f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |v: &mut [f64]| {
            v.iter_mut()
                .for_each(|x| *x = rng.random_range(-scale..=scale))
        };
        for layer in &mut self.layers {
            fill(&mut layer.weights.wx.data);
            fill(&mut layer.weights.wh.data);
            fill(&mut layer.weights.b);
        }
        if let Some(d) = &mut self.dense {
            fill(&mut d.w.data);
            fill(&mut d.b);
        }
    }

    /// Training initialization: uniform `±1/sqrt(fan_in)` weights, zero
    /// biases except a forget-gate bias of 1.
    pub fn init_for_training(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut self.layers {
            let lh = layer.spec.lh;
            let a = 1.0 / ((layer.spec.lx + lh) as f64).sqrt();
            layer
                .weights
                .wx
                .data
                .iter_mut()
                .for_each(|x| *x = rng.random_range(-a..=a));
            layer
                .weights
                .wh
                .data
                .iter_mut()
                .for_each(|x| *x = rng.random_range(-a..=a));
            for (j, b) in layer.weights.b.iter_mut().enumerate() {
                *b = if (lh..2 * lh).contains(&j) { 1.0 } else { 0.0 };
            }
        }
        if let Some(d) = &mut self.dense {
            let a = 1.0 / (d.inputs() as f64).sqrt();
            d.w.data
                .iter_mut()
                .for_each(|x| *x = rng.random_range(-a..=a));
            d.b.iter_mut().for_each(|x| *x = 0.0);
        }
    }
}

/// Hidden and cell state of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct CellState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl CellState {
    pub fn zeros(lh: usize) -> Self {
        CellState {
            h: vec![0.0; lh],
            c: vec![0.0; lh],
        }
    }
}

/// Gate activations of one step, kept for backpropagation.
#[derive(Debug, Clone, PartialEq)]
pub struct GateActivations {
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub o: Vec<f64>,
}

/// One float LSTM step, also returning the gate activations.
pub fn cell_step_with_gates(
    x: &[f64],
    state: &CellState,
    w: &LstmWeights,
) -> Result<(CellState, GateActivations)> {
    let lh = state.h.len();
    if state.c.len() != lh
        || w.wh.cols != lh
        || w.wh.rows != 4 * lh
        || w.wx.rows != 4 * lh
        || w.b.len() != 4 * lh
    {
        return Err(Error::dim(format!(
            "state of size {lh} does not match weights ({}x{})",
            w.wh.rows, w.wh.cols
        )));
    }
    if x.len() != w.wx.cols {
        return Err(Error::dim(format!(
            "input of length {} but Wx has {} columns",
            x.len(),
            w.wx.cols
        )));
    }
    let mut pre = w.b.clone();
    w.wx.matvec_into(x, &mut pre);
    w.wh.matvec_into(&state.h, &mut pre);

    let gates = GateActivations {
        i: pre[0..lh].iter().map(|&v| logistic(v)).collect(),
        f: pre[lh..2 * lh].iter().map(|&v| logistic(v)).collect(),
        g: pre[2 * lh..3 * lh].iter().map(|&v| v.tanh()).collect(),
        o: pre[3 * lh..4 * lh].iter().map(|&v| logistic(v)).collect(),
    };
    let c: Vec<f64> = (0..lh)
        .map(|k| gates.f[k] * state.c[k] + gates.i[k] * gates.g[k])
        .collect();
    let h = (0..lh).map(|k| gates.o[k] * c[k].tanh()).collect();
    Ok((CellState { h, c }, gates))
}

/// One float LSTM step.
pub fn cell_step(x: &[f64], state: &CellState, w: &LstmWeights) -> Result<CellState> {
    cell_step_with_gates(x, state, w).map(|(s, _)| s)
}

/// Output of a layer: the full hidden sequence or only the final vector.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerOutput {
    Sequence(Vec<Vec<f64>>),
    Last(Vec<f64>),
}

impl LayerOutput {
    pub fn last(&self) -> &[f64] {
        match self {
            LayerOutput::Sequence(s) => s.last().map(Vec::as_slice).unwrap_or(&[]),
            LayerOutput::Last(v) => v,
        }
    }
}

pub fn layer_forward(xs: &[Vec<f64>], spec: &LayerSpec, w: &LstmWeights) -> Result<LayerOutput> {
    if xs.len() != spec.timesteps {
        return Err(Error::dim(format!(
            "layer expects {} timesteps, got {}",
            spec.timesteps,
            xs.len()
        )));
    }
    w.check(spec)?;
    let mut state = CellState::zeros(spec.lh);
    let mut seq = Vec::with_capacity(xs.len());
    for x in xs {
        state = cell_step(x, &state, w)?;
        if spec.return_sequences {
            seq.push(state.h.clone());
        }
    }
    Ok(if spec.return_sequences {
        LayerOutput::Sequence(seq)
    } else {
        LayerOutput::Last(state.h)
    })
}

pub fn dense_forward(d: &DenseWeights, h: &[f64]) -> Vec<f64> {
    let mut out = d.b.clone();
    d.w.matvec_into(h, &mut out);
    out
}

/// Arithmetic used for a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Numerics {
    Float,
    Fixed,
}

impl std::str::FromStr for Numerics {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "float" => Ok(Numerics::Float),
            "fixed" => Ok(Numerics::Fixed),
            other => Err(Error::arg(format!(
                "unknown numerics `{other}` (expected float or fixed)"
            ))),
        }
    }
}

fn check_input(input: &[Vec<f64>], model: &ModelSpec) -> Result<()> {
    if input.len() != model.timesteps() {
        return Err(Error::dim(format!(
            "model expects {} timesteps, got {}",
            model.timesteps(),
            input.len()
        )));
    }
    let w = model.input_width();
    if let Some(bad) = input.iter().position(|x| x.len() != w) {
        return Err(Error::dim(format!(
            "timestep {bad} has {} features, model expects {w}",
            input[bad].len()
        )));
    }
    Ok(())
}

/// Float forward pass of the whole model. The output has one vector per
/// input timestep.
pub fn model_forward(input: &[Vec<f64>], model: &ModelSpec) -> Result<Vec<Vec<f64>>> {
    model.validate()?;
    check_input(input, model)?;
    let ts = model.timesteps();
    let mut seq = input.to_vec();
    for (i, layer) in model.layers.iter().enumerate() {
        seq = match layer_forward(&seq, &layer.spec, &layer.weights)? {
            LayerOutput::Sequence(s) => s,
            LayerOutput::Last(h) => {
                debug_assert_eq!(model.repeat_vector_after, Some(i));
                vec![h; ts]
            }
        };
    }
    Ok(match &model.dense {
        Some(d) => seq.iter().map(|h| dense_forward(d, h)).collect(),
        None => seq,
    })
}

/// Forward pass in the requested arithmetic, with real-valued input and output.
pub fn model_forward_with(
    input: &[Vec<f64>],
    model: &ModelSpec,
    numerics: Numerics,
) -> Result<Vec<Vec<f64>>> {
    match numerics {
        Numerics::Float => model_forward(input, model),
        Numerics::Fixed => FixedModel::new(model)?.forward_f64(input),
    }
}

/// Fixed-point state of one layer; `c` is held at the wide cell format.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedCellState {
    pub h: Vec<FixedValue>,
    pub c: Vec<FixedValue>,
}

/// Quantized weights of one layer, `[Wx | Wh]` concatenated per gate row.
#[derive(Debug, Clone)]
pub struct FixedLayer {
    pub spec: LayerSpec,
    rows: Vec<Vec<FixedValue>>,
    bias: Vec<FixedValue>,
}

/// A model with every tensor quantized to its manifest format.
#[derive(Debug, Clone)]
pub struct FixedModel {
    pub formats: TensorFormats,
    pub layers: Vec<FixedLayer>,
    repeat_vector_after: Option<usize>,
    dense: Option<(Vec<Vec<FixedValue>>, Vec<FixedValue>)>,
    tables: ActTables,
}

impl FixedModel {
    pub fn new(model: &ModelSpec) -> Result<Self> {
        model.validate()?;
        let f = model.formats;
        let layers = model
            .layers
            .iter()
            .map(|l| {
                let w = &l.weights;
                let rows = (0..4 * l.spec.lh)
                    .map(|r| {
                        w.wx.row(r)
                            .iter()
                            .chain(w.wh.row(r))
                            .map(|&v| q(v, f.weight))
                            .collect()
                    })
                    .collect();
                let bias = w.b.iter().map(|&v| q(v, f.bias)).collect();
                FixedLayer {
                    spec: l.spec,
                    rows,
                    bias,
                }
            })
            .collect();
        let dense = model.dense.as_ref().map(|d| {
            let rows = (0..d.outputs())
                .map(|r| d.w.row(r).iter().map(|&v| q(v, f.weight)).collect())
                .collect();
            (rows, d.b.iter().map(|&v| q(v, f.bias)).collect())
        });
        Ok(FixedModel {
            formats: f,
            layers,
            repeat_vector_after: model.repeat_vector_after,
            dense,
            tables: ActTables::with_params(f.hidden, f.hidden, &ActParams::datapath())?,
        })
    }

    /// Like [`FixedModel::new`] with activation tables supplied by the caller.
    pub fn with_tables(model: &ModelSpec, tables: ActTables) -> Result<Self> {
        tables.validate()?;
        let mut m = Self::new(model)?;
        m.tables = tables;
        Ok(m)
    }

    pub fn tables(&self) -> &ActTables {
        &self.tables
    }

    /// One fixed-point step. Pre-activations accumulate exactly and are
    /// rescaled once; `f * c` is a wide multiply at the cell format.
    pub fn cell_step(
        &self,
        layer: usize,
        x: &[FixedValue],
        state: &FixedCellState,
    ) -> Result<FixedCellState> {
        let l = &self.layers[layer];
        let lh = l.spec.lh;
        if x.len() != l.spec.lx || state.h.len() != lh || state.c.len() != lh {
            return Err(Error::dim(format!(
                "fixed step: input {} / state {} vs layer (lx={}, lh={})",
                x.len(),
                state.h.len(),
                l.spec.lx,
                lh
            )));
        }
        let f = self.formats;
        let xh: Vec<FixedValue> = x.iter().chain(&state.h).copied().collect();
        let pre: Vec<FixedValue> = l
            .rows
            .iter()
            .zip(&l.bias)
            .map(|(row, &b)| fx_dot(row, &xh, b, f.accum))
            .collect();
        let t = &self.tables;
        let mut h = Vec::with_capacity(lh);
        let mut c = Vec::with_capacity(lh);
        for k in 0..lh {
            let ig = sigmoid_lut(pre[k], t);
            let fg = sigmoid_lut(pre[lh + k], t);
            let gg = tanh_pwl(pre[2 * lh + k], t);
            let og = sigmoid_lut(pre[3 * lh + k], t);
            let ck = fx_add(fx_mul(fg, state.c[k], f.cell), fx_mul(ig, gg, f.cell));
            h.push(fx_mul(og, tanh_pwl(ck, t), f.hidden));
            c.push(ck);
        }
        Ok(FixedCellState { h, c })
    }

    pub fn zero_state(&self, layer: usize) -> FixedCellState {
        let lh = self.layers[layer].spec.lh;
        FixedCellState {
            h: vec![FixedValue::zero(self.formats.hidden); lh],
            c: vec![FixedValue::zero(self.formats.cell); lh],
        }
    }

    pub fn quantize_input(&self, input: &[Vec<f64>]) -> Vec<Vec<FixedValue>> {
        input
            .iter()
            .map(|x| x.iter().map(|&v| q(v, self.formats.input)).collect())
            .collect()
    }

    pub fn forward(&self, input: &[Vec<FixedValue>]) -> Result<Vec<Vec<FixedValue>>> {
        let ts = self.layers.first().map_or(0, |l| l.spec.timesteps);
        if input.len() != ts {
            return Err(Error::dim(format!(
                "model expects {ts} timesteps, got {}",
                input.len()
            )));
        }
        let mut seq = input.to_vec();
        for (i, l) in self.layers.iter().enumerate() {
            let mut state = self.zero_state(i);
            let mut out = Vec::with_capacity(ts);
            for x in &seq {
                state = self.cell_step(i, x, &state)?;
                if l.spec.return_sequences {
                    out.push(state.h.clone());
                }
            }
            seq = if self.repeat_vector_after == Some(i) {
                vec![state.h; ts]
            } else {
                out
            };
        }
        Ok(match &self.dense {
            Some((rows, bias)) => seq
                .iter()
                .map(|h| {
                    rows.iter()
                        .zip(bias)
                        .map(|(row, &b)| fx_dot(row, h, b, self.formats.output))
                        .collect()
                })
                .collect(),
            None => seq,
        })
    }

    pub fn forward_f64(&self, input: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        if let Some(l) = self.layers.first() {
            if let Some(bad) = input.iter().position(|x| x.len() != l.spec.lx) {
                return Err(Error::dim(format!(
                    "timestep {bad} has {} features, model expects {}",
                    input[bad].len(),
                    l.spec.lx
                )));
            }
        }
        let out = self.forward(&self.quantize_input(input))?;
        Ok(out
            .iter()
            .map(|v| v.iter().map(FixedValue::to_f64).collect())
            .collect())
    }
}
