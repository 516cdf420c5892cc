//! Closed-form timing and DSP model of a multi-layer LSTM pipeline.
//!
//! Each layer is split into an `mvm_x` sub-layer (input-vector products, no
//! feedback) and a recurrent sub-layer (`mvm_h`, activations and the
//! element-wise tail). With loop rewinding the layer interval is exactly
//! `ii * TS` and the system interval is the slowest layer's interval.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lstm::{LayerSpec, ModelSpec};

/// Latency constants and DSP budget of a target device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HwProfile {
    pub name: String,
    /// Multiplier latency in cycles.
    pub lt_mult: u64,
    /// Multiplier initiation interval in cycles.
    pub ii_mult: u64,
    /// Sigmoid latency in cycles.
    pub lt_sigma: u64,
    /// Element-wise tail latency in cycles.
    pub lt_tail: u64,
    pub dsp_total: u64,
    /// Only used for reporting wall-clock figures.
    pub freq_mhz: f64,
}

impl HwProfile {
    /// Zynq 7045 at 100 MHz.
    pub fn zynq7045() -> Self {
        HwProfile {
            name: "zynq7045-100MHz".into(),
            lt_mult: 1,
            ii_mult: 1,
            lt_sigma: 3,
            lt_tail: 5,
            dsp_total: 900,
            freq_mhz: 100.0,
        }
    }

    /// Alveo U250 at 300 MHz. `lt_mult` is set so a fully unrolled layer has
    /// a 12-cycle loop.
    pub fn u250() -> Self {
        HwProfile {
            name: "u250-300MHz".into(),
            lt_mult: 4,
            ii_mult: 1,
            lt_sigma: 3,
            lt_tail: 5,
            dsp_total: 12288,
            freq_mhz: 300.0,
        }
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "zynq7045-100MHz" | "zynq7045" | "zynq" => Some(Self::zynq7045()),
            "u250-300MHz" | "u250" => Some(Self::u250()),
            _ => None,
        }
    }

    pub fn builtin_names() -> &'static [&'static str] {
        &["zynq7045-100MHz", "u250-300MHz"]
    }

    pub fn validate(&self) -> Result<()> {
        if self.lt_mult < 1 || self.ii_mult < 1 || self.lt_sigma < 1 {
            return Err(Error::arg(format!(
                "profile `{}`: lt_mult, ii_mult and lt_sigma must be >= 1",
                self.name
            )));
        }
        if !(self.freq_mhz > 0.0) {
            return Err(Error::arg(format!(
                "profile `{}`: freq_mhz must be positive",
                self.name
            )));
        }
        Ok(())
    }

    /// `LT_sigma + LT_tail`, the gap between the two sub-layer latencies.
    pub fn activation_tail(&self) -> u64 {
        self.lt_sigma + self.lt_tail
    }
}

fn one() -> u64 {
    1
}

/// Per-layer reuse factors: how many times each multiplier is time-shared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ReuseFactors {
    pub rx: u64,
    pub rh: u64,
    #[serde(default = "one")]
    pub rt: u64,
}

impl ReuseFactors {
    pub fn new(rx: u64, rh: u64) -> Result<Self> {
        let rf = ReuseFactors { rx, rh, rt: 1 };
        rf.validate()?;
        Ok(rf)
    }

    /// `(balanced_rx(rh), rh, 1)`.
    pub fn balanced(rh: u64, hw: &HwProfile) -> Result<Self> {
        Self::new(balanced_rx(rh, hw), rh)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rx < 1 || self.rh < 1 || self.rt < 1 {
            return Err(Error::InvalidReuse(format!(
                "all reuse factors must be >= 1, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn is_balanced(&self, hw: &HwProfile) -> bool {
        self.rx == balanced_rx(self.rh, hw)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceEstimate {
    pub dsp_per_layer: Vec<u64>,
    pub dsp_dense: u64,
    pub dsp_model: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimingEstimate {
    /// Timestep loop interval of each layer.
    pub ii_per_layer: Vec<u64>,
    /// `ii * TS` for each layer.
    #[serde(rename = "II_per_layer")]
    pub interval_per_layer: Vec<u64>,
    #[serde(rename = "II_sys")]
    pub system_interval: u64,
    /// First-input to first-output latency without inter-layer overlap; an
    /// upper bound that the simulator tightens.
    pub latency_cycles: u64,
}

/// Latency of a pipelined MVM with reuse factor `r`.
pub fn mvm_latency(r: u64, hw: &HwProfile) -> Result<u64> {
    if r < 1 {
        return Err(Error::InvalidReuse(format!(
            "reuse factor must be >= 1, got {r}"
        )));
    }
    Ok(hw.lt_mult + (r - 1) * hw.ii_mult)
}

/// Input-side reuse that makes `mvm_x` exactly as long as the recurrent loop.
pub fn balanced_rx(rh: u64, hw: &HwProfile) -> u64 {
    rh + hw.lt_sigma + hw.lt_tail
}

/// Timestep loop interval of the recurrent sub-layer.
pub fn layer_ii(rh: u64, hw: &HwProfile) -> Result<u64> {
    Ok(mvm_latency(rh, hw)? + hw.lt_sigma + hw.lt_tail)
}

/// Loop interval of a layer given both sub-layers: the recurrent loop, or
/// `mvm_x` when it is reused so much that it becomes the slower stage.
pub fn effective_ii(rf: &ReuseFactors, hw: &HwProfile) -> Result<u64> {
    rf.validate()?;
    Ok(layer_ii(rf.rh, hw)?.max(mvm_latency(rf.rx, hw)?))
}

pub fn layer_interval(ii: u64, timesteps: u64) -> u64 {
    ii * timesteps
}

pub fn system_interval(intervals: &[u64]) -> Result<u64> {
    intervals
        .iter()
        .copied()
        .max()
        .ok_or_else(|| Error::arg("system interval of an empty pipeline"))
}

fn ceil_div(a: u64, b: u64) -> u64 {
    a.div_ceil(b)
}

/// DSPs of one layer: `4 Lx Lh / Rx + 4 Lh^2 / Rh + 4 Lh / Rt`, each term
/// rounded up. The tail has `2 Lh` wide multiplies at two DSPs each.
pub fn dsp_layer(spec: &LayerSpec, rf: &ReuseFactors) -> u64 {
    let (lx, lh) = (spec.lx as u64, spec.lh as u64);
    ceil_div(4 * lx * lh, rf.rx) + ceil_div(4 * lh * lh, rf.rh) + ceil_div(4 * lh, rf.rt)
}

/// Fully parallel dense head: one multiplier per weight.
pub fn dsp_dense(model: &ModelSpec) -> u64 {
    model
        .dense
        .as_ref()
        .map_or(0, |d| (d.outputs() * d.inputs()) as u64)
}

fn check_rfs(model: &ModelSpec, rfs: &[ReuseFactors]) -> Result<()> {
    if rfs.len() != model.layers.len() {
        return Err(Error::dim(format!(
            "{} reuse-factor sets for {} layers",
            rfs.len(),
            model.layers.len()
        )));
    }
    rfs.iter().try_for_each(ReuseFactors::validate)
}

pub fn dsp_model(model: &ModelSpec, rfs: &[ReuseFactors]) -> Result<ResourceEstimate> {
    check_rfs(model, rfs)?;
    let dsp_per_layer: Vec<u64> = model
        .layers
        .iter()
        .zip(rfs)
        .map(|(l, rf)| dsp_layer(&l.spec, rf))
        .collect();
    let dsp_dense = dsp_dense(model);
    let dsp_model = dsp_per_layer.iter().sum::<u64>() + dsp_dense;
    Ok(ResourceEstimate {
        dsp_per_layer,
        dsp_dense,
        dsp_model,
    })
}

pub fn timing(model: &ModelSpec, rfs: &[ReuseFactors], hw: &HwProfile) -> Result<TimingEstimate> {
    check_rfs(model, rfs)?;
    let mut ii_per_layer = Vec::with_capacity(rfs.len());
    let mut interval_per_layer = Vec::with_capacity(rfs.len());
    let mut latency = 0;
    for (l, rf) in model.layers.iter().zip(rfs) {
        let ii = effective_ii(rf, hw)?;
        let interval = layer_interval(ii, l.spec.timesteps as u64);
        ii_per_layer.push(ii);
        interval_per_layer.push(interval);
        latency += mvm_latency(rf.rx, hw)? + interval;
    }
    if model.dense.is_some() {
        latency += 1;
    }
    let system_interval = if interval_per_layer.is_empty() {
        0
    } else {
        system_interval(&interval_per_layer)?
    };
    Ok(TimingEstimate {
        ii_per_layer,
        interval_per_layer,
        system_interval,
        latency_cycles: latency,
    })
}

/// Resources and timing of one configuration, plus the inputs that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub profile: HwProfile,
    pub reuse: Vec<ReuseFactors>,
    pub resources: ResourceEstimate,
    pub timing: TimingEstimate,
    pub fits_budget: bool,
}

pub fn estimate(model: &ModelSpec, rfs: &[ReuseFactors], hw: &HwProfile) -> Result<Estimate> {
    hw.validate()?;
    let resources = dsp_model(model, rfs)?;
    let timing = timing(model, rfs, hw)?;
    Ok(Estimate {
        profile: hw.clone(),
        reuse: rfs.to_vec(),
        fits_budget: resources.dsp_model <= hw.dsp_total,
        resources,
        timing,
    })
}

impl Estimate {
    /// One CSV row per layer plus a `dense` row.
    pub fn write_csv<W: Write>(&self, model: &ModelSpec, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "layer",
            "lx",
            "lh",
            "timesteps",
            "rx",
            "rh",
            "rt",
            "ii",
            "II_layer",
            "dsp",
        ])?;
        for (i, l) in model.layers.iter().enumerate() {
            let rf = self.reuse[i];
            w.write_record([
                i.to_string(),
                l.spec.lx.to_string(),
                l.spec.lh.to_string(),
                l.spec.timesteps.to_string(),
                rf.rx.to_string(),
                rf.rh.to_string(),
                rf.rt.to_string(),
                self.timing.ii_per_layer[i].to_string(),
                self.timing.interval_per_layer[i].to_string(),
                self.resources.dsp_per_layer[i].to_string(),
            ])?;
        }
        if let Some(d) = &model.dense {
            w.write_record([
                "dense".to_string(),
                d.inputs().to_string(),
                d.outputs().to_string(),
                model.timesteps().to_string(),
                "1".into(),
                "1".into(),
                "1".into(),
                "1".into(),
                String::new(),
                self.resources.dsp_dense.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference;
    use proptest::prelude::*;

    fn layer(lx: usize, lh: usize) -> LayerSpec {
        LayerSpec::new(lx, lh, true, 8).unwrap()
    }

    fn rf(rx: u64, rh: u64) -> ReuseFactors {
        ReuseFactors::new(rx, rh).unwrap()
    }

    #[test]
    fn mvm_latency_examples() {
        let z = HwProfile::zynq7045();
        assert_eq!(mvm_latency(1, &z).unwrap(), 1);
        assert_eq!(mvm_latency(9, &z).unwrap(), 9);
        let hw = HwProfile {
            lt_mult: 4,
            ..z.clone()
        };
        assert_eq!(mvm_latency(4, &hw).unwrap(), 7);
        assert!(matches!(mvm_latency(0, &z), Err(Error::InvalidReuse(_))));
    }

    #[test]
    fn balanced_rx_examples() {
        let z = HwProfile::zynq7045();
        assert_eq!(balanced_rx(1, &z), 9);
        assert_eq!(balanced_rx(4, &z), 12);
        assert_eq!(balanced_rx(2, &z), 10);
    }

    #[test]
    fn layer_ii_examples() {
        let z = HwProfile::zynq7045();
        assert_eq!(layer_ii(1, &z).unwrap(), 9);
        assert_eq!(layer_ii(2, &z).unwrap(), 10);
        assert_eq!(layer_ii(1, &HwProfile::u250()).unwrap(), 12);
    }

    #[test]
    fn interval_examples() {
        assert_eq!(layer_interval(9, 8), 72);
        assert_eq!(layer_interval(13, 8), 104);
        assert_eq!(layer_interval(1, 1), 1);
        assert_eq!(system_interval(&[72, 72]).unwrap(), 72);
        assert_eq!(system_interval(&[96, 96, 96, 96]).unwrap(), 96);
        assert_eq!(system_interval(&[10, 80, 72]).unwrap(), 80);
        assert!(system_interval(&[]).is_err());
    }

    #[test]
    fn dsp_layer_examples() {
        assert_eq!(dsp_layer(&layer(1, 9), &rf(9, 1)), 364);
        assert_eq!(dsp_layer(&layer(32, 32), &rf(1, 1)), 8320);
        assert_eq!(dsp_layer(&layer(8, 8), &rf(12, 4)), 118);
        let tail4 = ReuseFactors {
            rx: 1,
            rh: 1,
            rt: 4,
        };
        assert_eq!(dsp_layer(&layer(1, 9), &tail4), 36 + 324 + 9);
    }

    #[test]
    fn dsp_model_examples() {
        let u = reference::nominal_model();
        let ones = vec![rf(1, 1); 4];
        let est = dsp_model(&u, &ones).unwrap();
        assert_eq!(est.dsp_per_layer, vec![4352, 1312, 544, 5248]);
        assert_eq!(est.dsp_dense, 32);
        assert_eq!(est.dsp_model, 11488);
        assert_eq!(dsp_model(&u, &[rf(12, 4); 4]).unwrap().dsp_model, 2733);
        assert_eq!(dsp_model(&u, &[rf(9, 1); 4]).unwrap().dsp_model, 9328);
        let empty = ModelSpec::from_specs(&[], None, None).unwrap();
        assert_eq!(dsp_model(&empty, &[]).unwrap().dsp_model, 0);
        assert!(dsp_model(&u, &ones[..3]).is_err());
    }

    #[test]
    fn small_model_columns() {
        let m = reference::small_model();
        let z = HwProfile::zynq7045();
        for (rx, rh, dsp, ii) in [(1, 1, 1089, 9), (2, 2, 585, 10), (9, 1, 769, 9)] {
            let e = estimate(&m, &[rf(rx, rh); 2], &z).unwrap();
            assert_eq!(e.resources.dsp_model, dsp);
            assert_eq!(e.timing.ii_per_layer, vec![ii, ii]);
            assert_eq!(e.timing.system_interval, ii * 8);
        }
    }

    #[test]
    fn over_reused_mvm_x_sets_the_pace() {
        let z = HwProfile::zynq7045();
        assert_eq!(effective_ii(&rf(20, 1), &z).unwrap(), 20);
        assert_eq!(effective_ii(&rf(9, 1), &z).unwrap(), 9);
        assert_eq!(effective_ii(&rf(1, 1), &z).unwrap(), 9);
    }

    #[test]
    fn csv_has_row_per_layer() {
        let m = reference::small_model();
        let e = estimate(&m, &[rf(9, 1); 2], &HwProfile::zynq7045()).unwrap();
        let mut buf = Vec::new();
        e.write_csv(&m, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.lines().nth(1).unwrap().ends_with(",9,72,364"));
    }

    proptest! {
        #[test]
        fn dsp_monotone_in_reuse(lx in 1usize..40, lh in 1usize..40, rx in 1u64..50, rh in 1u64..50) {
            let s = layer(lx, lh);
            let base = dsp_layer(&s, &rf(rx, rh));
            prop_assert!(dsp_layer(&s, &rf(rx + 1, rh)) <= base);
            prop_assert!(dsp_layer(&s, &rf(rx, rh + 1)) <= base);
        }

        #[test]
        fn fully_unrolled_closed_form(lx in 1usize..64, lh in 1usize..64) {
            prop_assert_eq!(dsp_layer(&layer(lx, lh), &rf(1, 1)) as usize, 4 * lh * (lx + lh + 1));
        }

        #[test]
        fn balanced_pair_equalizes_sub_layers(rh in 1u64..200, lt_mult in 1u64..8, lt_sigma in 1u64..8, lt_tail in 0u64..8) {
            let hw = HwProfile { lt_mult, lt_sigma, lt_tail, ..HwProfile::zynq7045() };
            let rx = balanced_rx(rh, &hw);
            prop_assert_eq!(mvm_latency(rx, &hw).unwrap(), layer_ii(rh, &hw).unwrap());
            prop_assert!(layer_ii(rh + 1, &hw).unwrap() >= layer_ii(rh, &hw).unwrap());
        }
    }
}
