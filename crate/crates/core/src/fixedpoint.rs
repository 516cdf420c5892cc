//! Two's-complement fixed-point arithmetic and the activation approximations
//! used by the hardware datapath.
//!
//! Every operation rounds to nearest (ties to even) and saturates instead of
//! wrapping. Products and dot products are formed exactly in 128-bit integers
//! and rescaled once, which mirrors a DSP multiplier feeding a wide
//! accumulator.
//!
//! The sigmoid is a uniformly sampled lookup table. The hyperbolic tangent is a
//! continuous piecewise-linear function evaluated on `|x|` and mirrored, so
//! `tanh(-x) == -tanh(x)` holds exactly on raw values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A signed fixed-point format: `word_bits` total bits (sign included), of
/// which `frac_bits` are fractional.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FixedFormat {
    pub word_bits: u32,
    pub frac_bits: u32,
}

impl FixedFormat {
    /// 16-bit word, 12 fractional bits. Default for weights, inputs and hidden vectors.
    pub const Q4_12: FixedFormat = FixedFormat {
        word_bits: 16,
        frac_bits: 12,
    };
    /// 32-bit word, 24 fractional bits. Default for biases and the cell state.
    pub const Q8_24: FixedFormat = FixedFormat {
        word_bits: 32,
        frac_bits: 24,
    };

    pub fn new(word_bits: u32, frac_bits: u32) -> Result<Self> {
        let fmt = FixedFormat {
            word_bits,
            frac_bits,
        };
        fmt.validate()?;
        Ok(fmt)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frac_bits >= 1 && self.frac_bits < self.word_bits && self.word_bits <= 64 {
            Ok(())
        } else {
            Err(Error::InvalidFormat {
                word_bits: self.word_bits,
                frac_bits: self.frac_bits,
            })
        }
    }

    pub fn max_raw(&self) -> i64 {
        ((1i128 << (self.word_bits - 1)) - 1) as i64
    }

    pub fn min_raw(&self) -> i64 {
        (-(1i128 << (self.word_bits - 1))) as i64
    }

    /// Value of one least significant bit.
    pub fn lsb(&self) -> f64 {
        (-(self.frac_bits as f64)).exp2()
    }

    pub fn max_value(&self) -> f64 {
        self.max_raw() as f64 * self.lsb()
    }

    pub fn min_value(&self) -> f64 {
        self.min_raw() as f64 * self.lsb()
    }

    /// Clamp a wide integer into the word, reporting whether it was clamped.
    pub fn saturate(&self, raw: i128) -> (i64, bool) {
        let (lo, hi) = (self.min_raw() as i128, self.max_raw() as i128);
        if raw > hi {
            (hi as i64, true)
        } else if raw < lo {
            (lo as i64, true)
        } else {
            (raw as i64, false)
        }
    }

    pub fn fits(&self, raw: i64) -> bool {
        raw >= self.min_raw() && raw <= self.max_raw()
    }
}

impl std::fmt::Display for FixedFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Q{}.{}", self.word_bits - self.frac_bits, self.frac_bits)
    }
}

/// A raw two's-complement word tagged with its format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FixedValue {
    raw: i64,
    fmt: FixedFormat,
}

impl FixedValue {
    pub fn from_raw(raw: i64, fmt: FixedFormat) -> Result<Self> {
        if fmt.fits(raw) {
            Ok(FixedValue { raw, fmt })
        } else {
            Err(Error::RawOutOfRange {
                raw,
                word_bits: fmt.word_bits,
            })
        }
    }

    pub fn saturating_from_raw(raw: i128, fmt: FixedFormat) -> Self {
        FixedValue {
            raw: fmt.saturate(raw).0,
            fmt,
        }
    }

    pub fn zero(fmt: FixedFormat) -> Self {
        FixedValue { raw: 0, fmt }
    }

    pub fn max(fmt: FixedFormat) -> Self {
        FixedValue {
            raw: fmt.max_raw(),
            fmt,
        }
    }

    pub fn min(fmt: FixedFormat) -> Self {
        FixedValue {
            raw: fmt.min_raw(),
            fmt,
        }
    }

    pub fn raw(&self) -> i64 {
        self.raw
    }

    pub fn fmt(&self) -> FixedFormat {
        self.fmt
    }

    pub fn to_f64(&self) -> f64 {
        self.raw as f64 * self.fmt.lsb()
    }

    /// Convert to another format with round-to-nearest-even and saturation.
    pub fn rescale(&self, fmt: FixedFormat) -> FixedValue {
        let wide = shift_round(
            self.raw as i128,
            self.fmt.frac_bits as i32 - fmt.frac_bits as i32,
        );
        FixedValue::saturating_from_raw(wide, fmt)
    }

    /// Saturating negation.
    pub fn neg(&self) -> FixedValue {
        FixedValue::saturating_from_raw(-(self.raw as i128), self.fmt)
    }
}

/// Divide by `2^shift` rounding to nearest, ties to even. Negative shifts
/// multiply (saturating at the i128 bounds).
pub(crate) fn shift_round(v: i128, shift: i32) -> i128 {
    if shift <= 0 {
        let s = (-shift) as u32;
        if s >= 127 {
            return if v == 0 {
                0
            } else if v > 0 {
                i128::MAX
            } else {
                i128::MIN
            };
        }
        return v
            .checked_mul(1i128 << s)
            .unwrap_or(if v > 0 { i128::MAX } else { i128::MIN });
    }
    if shift >= 127 {
        // |v| < 2^126 for any product of two i64 words, so the quotient is below one half.
        return 0;
    }
    let s = shift as u32;
    let q = v >> s;
    let rem = v - (q << s);
    let half = 1i128 << (s - 1);
    if rem > half || (rem == half && (q & 1) == 1) {
        q + 1
    } else {
        q
    }
}

/// Quantize a real number. Returns the value and whether it saturated.
/// NaN maps to zero and is reported as saturated.
pub fn quantize(x: f64, fmt: FixedFormat) -> (FixedValue, bool) {
    if x.is_nan() {
        return (FixedValue::zero(fmt), true);
    }
    let scaled = (x * (fmt.frac_bits as f64).exp2()).round_ties_even();
    // Anything beyond 2^100 saturates every supported word.
    let wide = if scaled >= 1e30 {
        i128::MAX
    } else if scaled <= -1e30 {
        i128::MIN
    } else {
        scaled as i128
    };
    let (raw, sat) = fmt.saturate(wide);
    (FixedValue { raw, fmt }, sat)
}

/// Shorthand for [`quantize`] when the saturation flag is not needed.
pub fn q(x: f64, fmt: FixedFormat) -> FixedValue {
    quantize(x, fmt).0
}

pub fn dequantize(v: FixedValue) -> f64 {
    v.to_f64()
}

/// One multiplier: exact integer product, rescaled into `out`.
pub fn fx_mul(a: FixedValue, b: FixedValue, out: FixedFormat) -> FixedValue {
    let prod = a.raw as i128 * b.raw as i128;
    let shift = (a.fmt.frac_bits + b.fmt.frac_bits) as i32 - out.frac_bits as i32;
    FixedValue::saturating_from_raw(shift_round(prod, shift), out)
}

/// Saturating addition in `a`'s format. `b` is rescaled first if its format
/// differs.
pub fn fx_add(a: FixedValue, b: FixedValue) -> FixedValue {
    let b = if b.fmt == a.fmt { b } else { b.rescale(a.fmt) };
    FixedValue::saturating_from_raw(a.raw as i128 + b.raw as i128, a.fmt)
}

/// Dot product plus bias, accumulated exactly and rescaled once into `out`.
pub fn fx_dot(
    weights: &[FixedValue],
    xs: &[FixedValue],
    bias: FixedValue,
    out: FixedFormat,
) -> FixedValue {
    debug_assert_eq!(weights.len(), xs.len());
    let mut acc: i128 = 0;
    let mut acc_frac: Option<u32> = None;
    for (w, x) in weights.iter().zip(xs) {
        let frac = w.fmt.frac_bits + x.fmt.frac_bits;
        let prod = w.raw as i128 * x.raw as i128;
        match acc_frac {
            None => {
                acc_frac = Some(frac);
                acc = prod;
            }
            Some(f) if f == frac => acc = acc.saturating_add(prod),
            Some(f) => acc = acc.saturating_add(shift_round(prod, frac as i32 - f as i32)),
        }
    }
    let frac = acc_frac.unwrap_or(bias.fmt.frac_bits);
    let total = acc.saturating_add(shift_round(
        bias.raw as i128,
        bias.fmt.frac_bits as i32 - frac as i32,
    ));
    FixedValue::saturating_from_raw(shift_round(total, frac as i32 - out.frac_bits as i32), out)
}

/// Fractional bits used for tanh segment slopes.
pub const SLOPE_FRAC_BITS: u32 = 24;

/// One piece of the piecewise-linear tanh on `x >= breakpoint`:
/// `y = intercept + slope * (x - breakpoint)`.
///
/// `breakpoint` is raw in the input format, `slope` raw with
/// [`SLOPE_FRAC_BITS`] fractional bits, `intercept` raw in the output format
/// (the value at the breakpoint).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TanhSegment {
    pub breakpoint: i64,
    pub slope: i64,
    pub intercept: i64,
}

/// Shape parameters for [`ActTables`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActParams {
    pub sigmoid_size: usize,
    /// The table spans `[-sigmoid_half_range, sigmoid_half_range)`.
    pub sigmoid_half_range: f64,
    /// Positive tanh breakpoints; the last one starts the saturation segment.
    pub tanh_breakpoints: Vec<f64>,
}

impl Default for ActParams {
    fn default() -> Self {
        ActParams {
            sigmoid_size: 1024,
            sigmoid_half_range: 8.0,
            tanh_breakpoints: vec![0.6, 1.25, 2.4],
        }
    }
}

impl ActParams {
    /// Tables used by the fixed-point LSTM: the default sigmoid with a
    /// 65-segment tanh (knots every 0.125 up to 4). The 7-segment tanh is off
    /// by up to 0.018, which compounds through the recurrence to about 0.1 on
    /// the small reference model.
    pub fn datapath() -> Self {
        ActParams {
            tanh_breakpoints: (1..=32).map(|i| i as f64 * 0.125).collect(),
            ..ActParams::default()
        }
    }
}

/// Precomputed activation tables for one (input, output) format pair.
///
/// Only the non-negative half of the tanh is stored; the center segment spans
/// `[-b1, b1]`, so `n` stored pieces describe `2n - 1` segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActTables {
    pub in_fmt: FixedFormat,
    pub out_fmt: FixedFormat,
    pub sigmoid_range: [f64; 2],
    pub sigmoid_table: Vec<i64>,
    pub tanh_segments: Vec<TanhSegment>,
}

impl ActTables {
    pub fn new(in_fmt: FixedFormat, out_fmt: FixedFormat) -> Self {
        Self::with_params(in_fmt, out_fmt, &ActParams::default())
            .expect("default activation parameters are valid")
    }

    pub fn with_params(
        in_fmt: FixedFormat,
        out_fmt: FixedFormat,
        params: &ActParams,
    ) -> Result<Self> {
        in_fmt.validate()?;
        out_fmt.validate()?;
        let n = params.sigmoid_size;
        let half = params.sigmoid_half_range;
        if n < 2 || !n.is_multiple_of(2) {
            return Err(Error::arg(format!(
                "sigmoid table size must be even and >= 2, got {n}"
            )));
        }
        if !(half > 0.0 && half.is_finite()) {
            return Err(Error::arg("sigmoid range must be positive"));
        }
        let bps = &params.tanh_breakpoints;
        if bps.is_empty() || bps[0] <= 0.0 || bps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::arg(
                "tanh breakpoints must be positive and strictly increasing",
            ));
        }

        let step = 2.0 * half / n as f64;
        let sigmoid_table = (0..n)
            .map(|i| q(logistic(-half + i as f64 * step), out_fmt).raw())
            .collect();

        Ok(ActTables {
            in_fmt,
            out_fmt,
            sigmoid_range: [-half, half],
            sigmoid_table,
            tanh_segments: fit_tanh(in_fmt, out_fmt, bps),
        })
    }

    /// Structural checks for tables read from a file.
    pub fn validate(&self) -> Result<()> {
        self.in_fmt.validate()?;
        self.out_fmt.validate()?;
        let n = self.sigmoid_table.len();
        if n < 2 || !n.is_multiple_of(2) {
            return Err(Error::arg(format!(
                "sigmoid table size must be even and >= 2, got {n}"
            )));
        }
        let [lo, hi] = self.sigmoid_range;
        if !(lo.is_finite() && hi.is_finite() && lo == -hi && hi > 0.0) {
            return Err(Error::arg("sigmoid range must be symmetric around zero"));
        }
        if let Some(&bad) = self.sigmoid_table.iter().find(|&&r| !self.out_fmt.fits(r)) {
            return Err(Error::RawOutOfRange {
                raw: bad,
                word_bits: self.out_fmt.word_bits,
            });
        }
        if self.tanh_segments.is_empty() {
            return Err(Error::arg("tanh table has no segments"));
        }
        Ok(())
    }

    /// Number of linear segments over the whole real line.
    pub fn tanh_segment_count(&self) -> usize {
        2 * self.tanh_segments.len() - 1
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tables serialize")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Table sigmoid. The index is the table center plus `x / step` rounded half
/// away from zero; indices past either end clamp to 0 or 1.
pub fn sigmoid_lut(x: FixedValue, tables: &ActTables) -> FixedValue {
    let x = if x.fmt == tables.in_fmt {
        x
    } else {
        x.rescale(tables.in_fmt)
    };
    let n = tables.sigmoid_table.len() as i64;
    let [lo, hi] = tables.sigmoid_range;
    let step = (hi - lo) / n as f64;
    let offset = (x.to_f64() / step).round() as i64;
    let idx = n / 2 + offset;
    let out = tables.out_fmt;
    if idx < 0 {
        FixedValue::zero(out)
    } else if idx >= n {
        q(1.0, out)
    } else {
        FixedValue {
            raw: tables.sigmoid_table[idx as usize],
            fmt: out,
        }
    }
}

/// Piecewise-linear tanh with exact odd symmetry.
pub fn tanh_pwl(x: FixedValue, tables: &ActTables) -> FixedValue {
    let x = if x.fmt == tables.in_fmt {
        x
    } else {
        x.rescale(tables.in_fmt)
    };
    let mag = if x.raw == x.fmt.min_raw() {
        x.fmt.max_raw()
    } else {
        x.raw.abs()
    };
    let seg = tables
        .tanh_segments
        .iter()
        .rev()
        .find(|s| s.breakpoint <= mag)
        .unwrap_or(&tables.tanh_segments[0]);
    let delta = (mag - seg.breakpoint) as i128 * seg.slope as i128;
    let shift = (x.fmt.frac_bits + SLOPE_FRAC_BITS) as i32 - tables.out_fmt.frac_bits as i32;
    let y = FixedValue::saturating_from_raw(
        seg.intercept as i128 + shift_round(delta, shift),
        tables.out_fmt,
    );
    if x.raw < 0 {
        y.neg()
    } else {
        y
    }
}

/// Continuous piecewise-linear tanh through `(0, 0)` that reaches 1.0 at the
/// last breakpoint and stays there. The inner knot values are a minimax fit
/// (Lawson's iteratively reweighted least squares) against `tanh` on a dense grid.
fn fit_tanh(in_fmt: FixedFormat, out_fmt: FixedFormat, breakpoints: &[f64]) -> Vec<TanhSegment> {
    let knots: Vec<f64> = std::iter::once(0.0)
        .chain(breakpoints.iter().map(|&b| q(b, in_fmt).to_f64()))
        .collect();
    let sat = *knots.last().unwrap();
    let free = knots.len() - 2;

    let grid: Vec<f64> = (0..=4096).map(|i| sat * i as f64 / 4096.0).collect();
    let hat = |k: usize, x: f64| -> f64 {
        let c = knots[k];
        if k > 0 && x >= knots[k - 1] && x <= c {
            (x - knots[k - 1]) / (c - knots[k - 1])
        } else if k + 1 < knots.len() && x > c && x <= knots[k + 1] {
            (knots[k + 1] - x) / (knots[k + 1] - c)
        } else {
            0.0
        }
    };
    // Sparse design rows over the free knots (1..=free, stored 0-based); the
    // last knot is pinned to 1.
    let design: Vec<Vec<(usize, f64)>> = grid
        .iter()
        .map(|&x| {
            (1..=free)
                .filter_map(|k| Some((k - 1, hat(k, x))).filter(|e| e.1 != 0.0))
                .collect()
        })
        .collect();
    let target: Vec<f64> = grid
        .iter()
        .map(|&x| x.tanh() - hat(knots.len() - 1, x))
        .collect();

    let floor = 1e-9 / grid.len() as f64;
    let mut weights = vec![1.0 / grid.len() as f64; grid.len()];
    let mut ys = vec![0.0; free];
    for _ in 0..400 {
        ys = weighted_lstsq(free, &design, &target, &weights);
        let mut total = 0.0;
        for (i, row) in design.iter().enumerate() {
            let fit: f64 = row.iter().map(|&(k, a)| a * ys[k]).sum();
            weights[i] *= (fit - target[i]).abs().max(1e-12);
            total += weights[i];
        }
        // keep every knot's support weighted so the system stays regular
        weights
            .iter_mut()
            .for_each(|w| *w = (*w / total).max(floor));
    }

    let values: Vec<f64> = std::iter::once(0.0)
        .chain(ys)
        .chain(std::iter::once(1.0))
        .collect();
    let ys_raw: Vec<i64> = values.iter().map(|&v| q(v, out_fmt).raw()).collect();
    let xs_raw: Vec<i64> = knots.iter().map(|&k| q(k, in_fmt).raw()).collect();

    let mut segments = Vec::with_capacity(knots.len());
    for k in 0..knots.len() - 1 {
        let dy = (ys_raw[k + 1] - ys_raw[k]) as f64 * out_fmt.lsb();
        let dx = (xs_raw[k + 1] - xs_raw[k]) as f64 * in_fmt.lsb();
        segments.push(TanhSegment {
            breakpoint: xs_raw[k],
            slope: (dy / dx * (SLOPE_FRAC_BITS as f64).exp2()).round_ties_even() as i64,
            intercept: ys_raw[k],
        });
    }
    segments.push(TanhSegment {
        breakpoint: xs_raw[knots.len() - 1],
        slope: 0,
        intercept: ys_raw[knots.len() - 1],
    });
    segments
}

/// Solve the weighted normal equations by Gaussian elimination.
fn weighted_lstsq(
    n: usize,
    design: &[Vec<(usize, f64)>],
    target: &[f64],
    weights: &[f64],
) -> Vec<f64> {
    let mut a = vec![vec![0.0; n + 1]; n];
    for ((row, &t), &w) in design.iter().zip(target).zip(weights) {
        for &(i, ai) in row {
            for &(j, aj) in row {
                a[i][j] += w * ai * aj;
            }
            a[i][n] += w * ai * t;
        }
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..=n {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    (0..n).map(|i| a[i][n] / a[i][i]).collect()
}
