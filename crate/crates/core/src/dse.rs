//! Design-space exploration over reuse factors.
//!
//! Because a layer's loop interval depends only on `Rh`, and every layer
//! shares the same timestep count, equal layer intervals force one common
//! `Rh`. The explorer therefore walks `Rh` upward and, for each candidate,
//! gives every layer the balanced `Rx`, stopping at the first configuration
//! that fits the DSP budget.

use std::io::Write;
use std::ops::RangeInclusive;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lstm::{LayerSpec, ModelSpec};
use crate::perf::{
    balanced_rx, dsp_layer, dsp_model, layer_ii, timing, HwProfile, ResourceEstimate, ReuseFactors,
    TimingEstimate,
};

/// One evaluated configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignPoint {
    pub rfs: Vec<ReuseFactors>,
    pub resources: ResourceEstimate,
    pub timing: TimingEstimate,
    /// Every layer uses `Rx = Rh + LT_sigma + LT_tail`.
    pub balanced: bool,
}

impl DesignPoint {
    pub fn evaluate(model: &ModelSpec, rfs: Vec<ReuseFactors>, hw: &HwProfile) -> Result<Self> {
        let resources = dsp_model(model, &rfs)?;
        let timing = timing(model, &rfs, hw)?;
        let balanced = rfs.iter().all(|rf| rf.is_balanced(hw));
        Ok(DesignPoint {
            rfs,
            resources,
            timing,
            balanced,
        })
    }

    pub fn system_interval(&self) -> u64 {
        self.timing.system_interval
    }

    pub fn dsp(&self) -> u64 {
        self.resources.dsp_model
    }

    /// No worse on both axes and strictly better on one.
    pub fn dominates(&self, other: &DesignPoint) -> bool {
        let (a, b) = (
            (self.system_interval(), self.dsp()),
            (other.system_interval(), other.dsp()),
        );
        a.0 <= b.0 && a.1 <= b.1 && a != b
    }
}

/// Non-dominated points sorted by system interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoSet {
    pub points: Vec<DesignPoint>,
}

/// Largest useful reuse: past `4 Lh max(Lx, Lh)` every gate already runs on
/// a single multiplier.
pub fn rh_search_bound(specs: &[LayerSpec]) -> u64 {
    specs
        .iter()
        .map(|s| 4 * s.lh as u64 * s.lx.max(s.lh) as u64)
        .max()
        .unwrap_or(1)
}

/// Smallest `Rh` whose balanced configuration fits `budget` DSPs on one layer.
///
/// Dropping the ceilings, `4 Lx Lh / (Rh + s) + 4 Lh^2 / Rh + 4 Lh <= budget`
/// with `s = LT_sigma + LT_tail` is a quadratic inequality in `Rh`; its
/// positive root is a lower bound, which is then checked with the integer
/// cost and walked upward.
pub fn min_rh_for_budget(spec: &LayerSpec, budget: u64, hw: &HwProfile) -> Result<u64> {
    spec.validate()?;
    let (lx, lh) = (spec.lx as f64, spec.lh as f64);
    let tail = 4 * spec.lh as u64;
    if budget <= tail {
        return Err(Error::Infeasible(format!(
            "budget {budget} does not exceed the tail floor of {tail} DSPs"
        )));
    }
    let s = hw.activation_tail() as f64;
    let avail = (budget - tail) as f64;
    // avail*R^2 + (avail*s - 4LxLh - 4Lh^2)*R - 4Lh^2*s >= 0
    let b = avail * s - 4.0 * lx * lh - 4.0 * lh * lh;
    let c = -4.0 * lh * lh * s;
    let root = (-b + (b * b - 4.0 * avail * c).sqrt()) / (2.0 * avail);
    let start = (root.ceil() as u64).max(1);

    let bound = rh_search_bound(std::slice::from_ref(spec));
    let fits = |rh: u64| {
        dsp_layer(
            spec,
            &ReuseFactors {
                rx: balanced_rx(rh, hw),
                rh,
                rt: 1,
            },
        ) <= budget
    };
    // The real-valued root can overshoot by rounding; step back while it still fits.
    let mut rh = start.min(bound);
    while rh > 1 && fits(rh - 1) {
        rh -= 1;
    }
    while rh <= bound {
        if fits(rh) {
            return Ok(rh);
        }
        rh += 1;
    }
    Err(Error::Infeasible(format!(
        "no Rh <= {bound} fits {budget} DSPs"
    )))
}

/// Balanced reuse factors for the whole model under `hw.dsp_total`.
pub fn balance_model(model: &ModelSpec, hw: &HwProfile) -> Result<DesignPoint> {
    hw.validate()?;
    if model.layers.is_empty() {
        return Err(Error::arg("cannot balance an empty model"));
    }
    let bound = rh_search_bound(&model.specs());
    let n = model.layers.len();
    let candidate = |rh: u64| -> Result<DesignPoint> {
        DesignPoint::evaluate(model, vec![ReuseFactors::balanced(rh, hw)?; n], hw)
    };

    // DSP cost is nonincreasing in Rh, so the feasible set is a suffix; find
    // its start by bisection.
    let feasible = |rh: u64| -> Result<bool> { Ok(candidate(rh)?.dsp() <= hw.dsp_total) };
    if !feasible(bound)? {
        return Err(Error::Infeasible(format!(
            "no balanced configuration with Rh <= {bound} fits {} DSPs (minimum {})",
            hw.dsp_total,
            candidate(bound)?.dsp()
        )));
    }
    let (mut lo, mut hi) = (1u64, bound);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if feasible(mid)? {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let point = candidate(lo)?;
    debug_assert!(point
        .timing
        .interval_per_layer
        .windows(2)
        .all(|w| w[0] == w[1]));
    debug_assert_eq!(point.timing.ii_per_layer[0], layer_ii(lo, hw)?);
    Ok(point)
}

/// Which reuse rule a sweep point follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// `Rx = Rh`
    Naive,
    /// `Rx = Rh + LT_sigma + LT_tail`
    Balanced,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::Naive => "naive",
            Variant::Balanced => "balanced",
        }
    }

    pub fn reuse(&self, rh: u64, hw: &HwProfile) -> Result<ReuseFactors> {
        match self {
            Variant::Naive => ReuseFactors::new(rh, rh),
            Variant::Balanced => ReuseFactors::balanced(rh, hw),
        }
    }
}

/// Every point of a uniform-`Rh` sweep, in `Rh` order.
pub fn sweep_points(
    model: &ModelSpec,
    hw: &HwProfile,
    variant: Variant,
    rh_range: RangeInclusive<u64>,
) -> Result<Vec<DesignPoint>> {
    let n = model.layers.len();
    let rhs: Vec<u64> = rh_range.collect();
    rhs.par_iter()
        .map(|&rh| DesignPoint::evaluate(model, vec![variant.reuse(rh, hw)?; n], hw))
        .collect()
}

/// Drop dominated points; ties on both axes keep the first occurrence.
pub fn pareto_front(points: &[DesignPoint]) -> ParetoSet {
    let mut keep: Vec<DesignPoint> = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let dominated = points.iter().any(|o| o.dominates(p));
        let duplicate = points[..i]
            .iter()
            .any(|o| o.system_interval() == p.system_interval() && o.dsp() == p.dsp());
        if !dominated && !duplicate {
            keep.push(p.clone());
        }
    }
    keep.sort_by_key(|p| (p.system_interval(), p.dsp()));
    ParetoSet { points: keep }
}

/// Naive and balanced frontiers over `rh_range`.
pub fn pareto_sweep(
    model: &ModelSpec,
    hw: &HwProfile,
    rh_range: RangeInclusive<u64>,
) -> Result<(ParetoSet, ParetoSet)> {
    if rh_range.is_empty() || *rh_range.start() < 1 {
        return Err(Error::arg(format!(
            "Rh sweep range {rh_range:?} must be nonempty and start at 1 or more"
        )));
    }
    let naive = sweep_points(model, hw, Variant::Naive, rh_range.clone())?;
    let balanced = sweep_points(model, hw, Variant::Balanced, rh_range)?;
    Ok((pareto_front(&naive), pareto_front(&balanced)))
}

/// Frontier CSV: `variant,Rh,Rx,ii,II_layer,II_sys,dsp_model,balanced`.
pub fn write_frontier_csv<W: Write>(sets: &[(Variant, &ParetoSet)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "variant",
        "Rh",
        "Rx",
        "ii",
        "II_layer",
        "II_sys",
        "dsp_model",
        "balanced",
    ])?;
    for (variant, set) in sets {
        for p in &set.points {
            let rf = p.rfs.first().copied().unwrap_or(ReuseFactors {
                rx: 1,
                rh: 1,
                rt: 1,
            });
            let ii = p.timing.ii_per_layer.iter().max().copied().unwrap_or(0);
            let interval = p
                .timing
                .interval_per_layer
                .iter()
                .max()
                .copied()
                .unwrap_or(0);
            w.write_record([
                variant.name().to_string(),
                rf.rh.to_string(),
                rf.rx.to_string(),
                ii.to_string(),
                interval.to_string(),
                p.system_interval().to_string(),
                p.dsp().to_string(),
                p.balanced.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perf::effective_ii;
    use crate::reference;

    fn single(lx: usize, lh: usize) -> ModelSpec {
        ModelSpec::from_specs(&[LayerSpec::new(lx, lh, true, 8).unwrap()], None, None).unwrap()
    }

    /// Brute-force scan for the smallest feasible Rh.
    fn scan_min_rh(spec: &LayerSpec, budget: u64, hw: &HwProfile, upto: u64) -> Option<u64> {
        (1..=upto).find(|&rh| {
            dsp_layer(
                spec,
                &ReuseFactors {
                    rx: rh + hw.lt_sigma + hw.lt_tail,
                    rh,
                    rt: 1,
                },
            ) <= budget
        })
    }

    #[test]
    fn min_rh_examples() {
        let z = HwProfile::zynq7045();
        let s = LayerSpec::new(32, 32, true, 8).unwrap();
        assert_eq!(scan_min_rh(&s, 2000, &z, 64), Some(3));
        assert_eq!(min_rh_for_budget(&s, 2000, &z).unwrap(), 3);
        assert_eq!(min_rh_for_budget(&s, 100_000, &z).unwrap(), 1);
        let s9 = LayerSpec::new(9, 9, true, 8).unwrap();
        assert!(matches!(
            min_rh_for_budget(&s9, 36, &z),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn min_rh_agrees_with_scan() {
        let z = HwProfile::zynq7045();
        for lx in [1, 3, 8, 9, 32] {
            for lh in [1, 4, 9, 16, 32] {
                let s = LayerSpec::new(lx, lh, true, 8).unwrap();
                let bound = rh_search_bound(&[s]);
                for budget in
                    (4 * lh as u64 + 1..=4 * lh as u64 * (lx + lh + 1) as u64 + 5).step_by(7)
                {
                    let got = min_rh_for_budget(&s, budget, &z).ok();
                    assert_eq!(
                        got,
                        scan_min_rh(&s, budget, &z, bound),
                        "lx={lx} lh={lh} budget={budget}"
                    );
                }
            }
        }
    }

    #[test]
    fn balance_small_model_gives_z3() {
        let p = balance_model(&reference::small_model(), &HwProfile::zynq7045()).unwrap();
        assert_eq!(
            p.rfs,
            vec![
                ReuseFactors {
                    rx: 9,
                    rh: 1,
                    rt: 1
                };
                2
            ]
        );
        assert_eq!(p.dsp(), 769);
        assert_eq!(p.timing.ii_per_layer, vec![9, 9]);
        assert_eq!(p.system_interval(), 72);
        assert!(p.balanced);
    }

    #[test]
    fn balance_nominal_on_u250() {
        let p = balance_model(&reference::nominal_model(), &HwProfile::u250()).unwrap();
        assert_eq!(
            p.rfs[0],
            ReuseFactors {
                rx: 9,
                rh: 1,
                rt: 1
            }
        );
        assert_eq!(p.timing.ii_per_layer, vec![12; 4]);
        assert_eq!(p.system_interval(), 96);
    }

    #[test]
    fn unlimited_budget_gives_rh_one() {
        let hw = HwProfile {
            dsp_total: u64::MAX / 4,
            ..HwProfile::zynq7045()
        };
        let p = balance_model(&single(5, 7), &hw).unwrap();
        assert_eq!(p.rfs[0].rh, 1);
    }

    #[test]
    fn tiny_budget_is_infeasible() {
        let hw = HwProfile {
            dsp_total: 10,
            ..HwProfile::zynq7045()
        };
        assert!(matches!(
            balance_model(&reference::small_model(), &hw),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn balance_matches_exhaustive_search() {
        // Oracle: every (Rh, Rx) per layer, minimize system interval then DSP.
        let z = HwProfile::zynq7045();
        let models = [
            ModelSpec::from_specs(
                &[
                    LayerSpec::new(3, 5, true, 4).unwrap(),
                    LayerSpec::new(5, 6, true, 4).unwrap(),
                ],
                None,
                Some(2),
            )
            .unwrap(),
            ModelSpec::autoencoder(2, &[7], &[4], 6).unwrap(),
            single(16, 16),
        ];
        for m in &models {
            let full: u64 = dsp_model(
                m,
                &vec![
                    ReuseFactors {
                        rx: 1,
                        rh: 1,
                        rt: 1
                    };
                    m.layers.len()
                ],
            )
            .unwrap()
            .dsp_model;
            for budget in [full, full * 3 / 4, full / 2, full / 3, full / 5, full / 9] {
                let hw = HwProfile {
                    dsp_total: budget,
                    ..z.clone()
                };
                let per_layer: Vec<Vec<(u64, u64, u64)>> = m
                    .layers
                    .iter()
                    .map(|l| {
                        let mut v = Vec::new();
                        for rh in 1..=64 {
                            for rx in 1..=rh + 12 {
                                let rf = ReuseFactors { rx, rh, rt: 1 };
                                v.push((
                                    effective_ii(&rf, &hw).unwrap() * l.spec.timesteps as u64,
                                    dsp_layer(&l.spec, &rf),
                                    rh,
                                ));
                            }
                        }
                        v
                    })
                    .collect();
                let dense = crate::perf::dsp_dense(m);
                let mut best: Option<(u64, u64)> = None;
                let mut consider = |ii: u64, dsp: u64| {
                    if dsp <= budget && best.is_none_or(|b| (ii, dsp) < b) {
                        best = Some((ii, dsp));
                    }
                };
                if per_layer.len() == 1 {
                    for &(a, d, _) in &per_layer[0] {
                        consider(a, d + dense);
                    }
                } else {
                    for &(a, da, _) in &per_layer[0] {
                        for &(b, db, _) in &per_layer[1] {
                            consider(a.max(b), da + db + dense);
                        }
                    }
                }
                match (best, balance_model(m, &hw)) {
                    (Some((ii, dsp)), Ok(p)) => {
                        assert_eq!((p.system_interval(), p.dsp()), (ii, dsp), "budget {budget}");
                        assert!(p.dsp() <= budget);
                    }
                    (None, Err(Error::Infeasible(_))) => {}
                    (b, r) => panic!("budget {budget}: oracle {b:?} vs explorer {r:?}"),
                }
            }
        }
    }

    #[test]
    fn pareto_fig7_layer() {
        let z = HwProfile::zynq7045();
        let m = single(32, 32);
        let naive = sweep_points(&m, &z, Variant::Naive, 1..=10).unwrap();
        let bal = sweep_points(&m, &z, Variant::Balanced, 1..=10).unwrap();
        assert_eq!(naive[0].dsp(), 8320);
        assert_eq!(bal[0].dsp(), 4680);
        assert_eq!(naive[0].system_interval(), bal[0].system_interval());
        for (n, b) in naive.iter().zip(&bal) {
            assert_eq!(n.system_interval(), b.system_interval());
            assert!(b.dsp() <= n.dsp());
        }
        let (nf, bf) = pareto_sweep(&m, &z, 1..=10).unwrap();
        for set in [&nf, &bf] {
            assert!(set.points.len() <= 10);
            for a in &set.points {
                assert!(!set.points.iter().any(|b| b.dominates(a)));
            }
            assert!(set
                .points
                .windows(2)
                .all(|w| w[0].system_interval() <= w[1].system_interval()));
        }
        assert!(bf.points.iter().all(|p| p.balanced));
        assert!(pareto_sweep(&m, &z, std::ops::RangeInclusive::new(5, 4)).is_err());
    }

    #[test]
    fn forty_two_percent_layer() {
        let z = HwProfile::zynq7045();
        let s = LayerSpec::new(9, 9, true, 8).unwrap();
        let naive = dsp_layer(
            &s,
            &ReuseFactors {
                rx: 1,
                rh: 1,
                rt: 1,
            },
        );
        let bal = dsp_layer(&s, &ReuseFactors::balanced(1, &z).unwrap());
        assert_eq!((naive, bal), (684, 396));
    }

    #[test]
    fn frontier_csv_layout() {
        let z = HwProfile::zynq7045();
        let (nf, bf) = pareto_sweep(&reference::small_model(), &z, 1..=3).unwrap();
        let mut buf = Vec::new();
        write_frontier_csv(&[(Variant::Naive, &nf), (Variant::Balanced, &bf)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next(),
            Some("variant,Rh,Rx,ii,II_layer,II_sys,dsp_model,balanced")
        );
        assert!(text.contains("balanced,1,9,9,72,72,769,true"));
    }
}
