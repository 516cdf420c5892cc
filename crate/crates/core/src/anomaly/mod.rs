//! Reconstruction-error anomaly detection: a synthetic chirp-injection
//! dataset, scoring, threshold selection and ROC analysis.

mod train;

use std::f64::consts::PI;
use std::io::{Read, Write};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lstm::{model_forward, FixedModel, ModelSpec, Numerics};

pub use train::{loss_and_gradient, train_autoencoder, window_loss, TrainConfig, TrainReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Background,
    Signal,
}

impl Label {
    pub fn name(&self) -> &'static str {
        match self {
            Label::Background => "background",
            Label::Signal => "signal",
        }
    }
}

impl std::str::FromStr for Label {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "background" | "0" => Ok(Label::Background),
            "signal" | "1" => Ok(Label::Signal),
            other => Err(Error::Data(format!("unknown label `{other}`"))),
        }
    }
}

/// One detector window, `timesteps * width` samples laid out timestep-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventWindow {
    pub samples: Vec<f64>,
    pub label: Label,
}

impl EventWindow {
    pub fn to_sequence(&self, width: usize) -> Vec<Vec<f64>> {
        self.samples
            .chunks(width.max(1))
            .map(<[f64]>::to_vec)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredEvent {
    pub loss: f64,
    pub label: Label,
}

/// Generator settings. Background is Gaussian noise through a two-pole
/// low-pass filter; signals add a Hann-tapered linear chirp whose norm is
/// `snr` times the noise standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetParams {
    pub timesteps: usize,
    pub width: usize,
    pub snr: f64,
    /// Pole radius of the noise filter, in `[0, 1)`.
    pub pole: f64,
    /// Chirp start and end frequency in cycles per sample.
    pub f_start: f64,
    pub f_end: f64,
}

impl Default for DatasetParams {
    fn default() -> Self {
        DatasetParams {
            timesteps: 8,
            width: 1,
            snr: 8.0,
            pole: 0.6,
            f_start: 0.15,
            f_end: 0.45,
        }
    }
}

impl DatasetParams {
    pub fn validate(&self) -> Result<()> {
        if self.timesteps < 1 || self.width < 1 {
            return Err(Error::arg("dataset needs timesteps >= 1 and width >= 1"));
        }
        if !(0.0..1.0).contains(&self.pole) {
            return Err(Error::arg(format!(
                "noise pole {} must lie in [0, 1)",
                self.pole
            )));
        }
        if !(self.snr.is_finite() && self.snr >= 0.0) {
            return Err(Error::arg(format!(
                "snr {} must be finite and >= 0",
                self.snr
            )));
        }
        Ok(())
    }

    fn len(&self) -> usize {
        self.timesteps * self.width
    }

    /// Stationary standard deviation of the filtered noise.
    pub fn noise_std(&self) -> f64 {
        let (a1, a2) = (2.0 * self.pole, -self.pole * self.pole);
        ((1.0 - a2) / ((1.0 + a2) * ((1.0 - a2).powi(2) - a1 * a1))).sqrt()
    }
}

fn noise(p: &DatasetParams, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let (a1, a2) = (2.0 * p.pole, -p.pole * p.pole);
    let burn_in = 64;
    let (mut y1, mut y2) = (0.0, 0.0);
    let mut out = Vec::with_capacity(p.len());
    for n in 0..burn_in + p.len() {
        let e: f64 = rng.sample(StandardNormal);
        let y = a1 * y1 + a2 * y2 + e;
        (y2, y1) = (y1, y);
        if n >= burn_in {
            out.push(y);
        }
    }
    out
}

fn chirp(p: &DatasetParams, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = p.len();
    let phase0 = rng.random_range(0.0..2.0 * PI);
    let span = (n.max(2) - 1) as f64;
    let raw: Vec<f64> = (0..n)
        .map(|k| {
            let t = k as f64;
            let taper = (PI * (t + 0.5) / n as f64).sin().powi(2);
            taper
                * (2.0 * PI * (p.f_start * t + (p.f_end - p.f_start) * t * t / (2.0 * span))
                    + phase0)
                    .sin()
        })
        .collect();
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale = if norm > 0.0 {
        p.snr * p.noise_std() / norm
    } else {
        0.0
    };
    raw.into_iter().map(|v| v * scale).collect()
}

/// Rescale to zero mean and unit variance in place.
pub fn normalize(samples: &mut [f64]) {
    let n = samples.len() as f64;
    if n == 0.0 {
        return;
    }
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let inv = if var > 0.0 { 1.0 / var.sqrt() } else { 0.0 };
    samples.iter_mut().for_each(|v| *v = (*v - mean) * inv);
}

/// `n_background` background windows followed by `n_signal` signal windows.
pub fn gen_dataset(n_background: usize, n_signal: usize, seed: u64) -> Vec<EventWindow> {
    gen_dataset_with(&DatasetParams::default(), n_background, n_signal, seed)
        .expect("default parameters are valid")
}

pub fn gen_dataset_with(
    p: &DatasetParams,
    n_background: usize,
    n_signal: usize,
    seed: u64,
) -> Result<Vec<EventWindow>> {
    p.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_background + n_signal);
    for k in 0..n_background + n_signal {
        let mut samples = noise(p, &mut rng);
        let label = if k < n_background {
            Label::Background
        } else {
            Label::Signal
        };
        if label == Label::Signal {
            samples
                .iter_mut()
                .zip(chirp(p, &mut rng))
                .for_each(|(s, c)| *s += c);
        }
        normalize(&mut samples);
        out.push(EventWindow { samples, label });
    }
    Ok(out)
}

fn mse(out: &[Vec<f64>], input: &[Vec<f64>]) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for (o, x) in out.iter().zip(input) {
        for (a, b) in o.iter().zip(x) {
            sum += (a - b).powi(2);
            n += 1;
        }
    }
    sum / n.max(1) as f64
}

/// Mean squared reconstruction error of every event.
pub fn score(
    events: &[EventWindow],
    model: &ModelSpec,
    numerics: Numerics,
) -> Result<Vec<ScoredEvent>> {
    model.validate()?;
    let (ts, width) = (model.timesteps(), model.input_width());
    if model.output_width() != width {
        return Err(Error::dim(format!(
            "model maps {width} features to {}; cannot reconstruct",
            model.output_width()
        )));
    }
    if let Some(bad) = events.iter().position(|e| e.samples.len() != ts * width) {
        return Err(Error::dim(format!(
            "event {bad} has {} samples, model expects {ts} x {width}",
            events[bad].samples.len()
        )));
    }
    let fixed = match numerics {
        Numerics::Fixed => Some(FixedModel::new(model)?),
        Numerics::Float => None,
    };
    events
        .par_iter()
        .map(|e| {
            let input = e.to_sequence(width);
            let out = match &fixed {
                Some(f) => f.forward_f64(&input)?,
                None => model_forward(&input, model)?,
            };
            Ok(ScoredEvent {
                loss: mse(&out, &input),
                label: e.label,
            })
        })
        .collect()
}

/// Smallest loss value `v` such that the fraction of losses strictly above
/// `v` is at most `target_fpr`.
pub fn threshold_from_fpr(background_losses: &[f64], target_fpr: f64) -> Result<f64> {
    if !(target_fpr > 0.0 && target_fpr < 1.0) {
        return Err(Error::arg(format!(
            "target fpr {target_fpr} must lie in (0, 1)"
        )));
    }
    if background_losses.is_empty() {
        return Err(Error::arg("no background losses"));
    }
    if background_losses.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite loss".into()));
    }
    let mut sorted = background_losses.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    // Losses above sorted[i] are those past the last copy of its value.
    let allowed = (target_fpr * n as f64 + 1e-9).floor() as usize;
    let idx = n - 1 - allowed.min(n - 1);
    Ok(sorted[idx])
}

/// Fraction of `losses` strictly above `threshold`.
pub fn empirical_fpr(losses: &[f64], threshold: f64) -> f64 {
    losses.iter().filter(|&&v| v > threshold).count() as f64 / losses.len().max(1) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// ROC curve over every distinct loss (an event is flagged when its loss is
/// at least the threshold) and its trapezoid area.
pub fn roc_auc(scored: &[ScoredEvent]) -> Result<(f64, Vec<RocPoint>)> {
    let pos = scored.iter().filter(|s| s.label == Label::Signal).count();
    let neg = scored.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    if scored.iter().any(|s| !s.loss.is_finite()) {
        return Err(Error::Data("non-finite loss".into()));
    }
    let mut sorted: Vec<&ScoredEvent> = scored.iter().collect();
    sorted.sort_by(|a, b| b.loss.total_cmp(&a.loss));
    let mut curve = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let thr = sorted[i].loss;
        while i < sorted.len() && sorted[i].loss == thr {
            match sorted[i].label {
                Label::Signal => tp += 1,
                Label::Background => fp += 1,
            }
            i += 1;
        }
        let p = RocPoint {
            threshold: thr,
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        };
        let prev = curve.last().unwrap();
        auc += (p.fpr - prev.fpr) * (p.tpr + prev.tpr) / 2.0;
        curve.push(p);
    }
    Ok((auc, curve))
}

/// `id,label,s0,s1,...`
pub fn write_dataset_csv<W: Write>(events: &[EventWindow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
    let len = events.first().map_or(0, |e| e.samples.len());
    let mut header = vec!["id".to_string(), "label".to_string()];
    header.extend((0..len).map(|i| format!("s{i}")));
    w.write_record(&header)?;
    for (id, e) in events.iter().enumerate() {
        let mut rec = vec![id.to_string(), e.label.name().to_string()];
        rec.extend(e.samples.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset_csv<R: Read>(input: R) -> Result<Vec<EventWindow>> {
    let mut r = csv::ReaderBuilder::new().flexible(true).from_reader(input);
    let mut out = Vec::new();
    let mut width = None;
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = row + 2;
        if rec.len() < 3 {
            return Err(Error::Data(format!(
                "line {line}: expected id, label and at least one sample"
            )));
        }
        let label: Label = rec[1]
            .trim()
            .parse()
            .map_err(|e| Error::Data(format!("line {line}: {e}")))?;
        let samples = rec
            .iter()
            .skip(2)
            .enumerate()
            .map(|(c, f)| match f.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::Data(format!(
                    "line {line}, column {}: `{f}` is not a finite number",
                    c + 3
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        if *width.get_or_insert(samples.len()) != samples.len() {
            return Err(Error::Data(format!(
                "line {line}: {} samples, earlier rows have {}",
                samples.len(),
                width.unwrap()
            )));
        }
        out.push(EventWindow { samples, label });
    }
    Ok(out)
}

/// `threshold,fpr,tpr`
pub fn write_roc_csv<W: Write>(curve: &[RocPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["threshold", "fpr", "tpr"])?;
    for p in curve {
        w.write_record([
            p.threshold.to_string(),
            p.fpr.to_string(),
            p.tpr.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
