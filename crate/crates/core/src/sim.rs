//! Event-driven simulator of the coarse-grained layer pipeline.
//!
//! The unit of work is one loop iteration: one timestep of one layer for one
//! inference. Each layer has two units, the feed-forward `mvm_x` sub-layer
//! and the recurrent sub-layer, plus an optional dense head. Every unit
//! serves its jobs in order (inference-major, then timestep) and can start a
//! new job once per initiation interval.
//!
//! Dependencies:
//! - recurrent step `t` needs `mvm_x` step `t` and the recurrent step `t - 1`
//!   of the same inference (the fed-back `h`);
//! - a new inference rewinds straight into timestep 0, only one interval after
//!   the previous inference's last issue;
//! - `mvm_x` runs ahead of the recurrent unit as soon as its input exists,
//!   including across inference boundaries;
//! - a consumer of a sequence-returning layer needs only the producer's step
//!   `t`; a consumer of a last-only layer needs the producer's final step.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lstm::ModelSpec;
use crate::perf::{layer_ii, mvm_latency, HwProfile, ReuseFactors};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerStage {
    /// Interval between recurrent iterations.
    pub ii: u64,
    /// Cycles from a recurrent issue until its `h_t` is available.
    pub body_latency: u64,
    pub timesteps: usize,
    pub return_sequences: bool,
    /// Interval (and latency) of the `mvm_x` sub-layer.
    pub mvmx_ii: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageConfig {
    pub layers: Vec<LayerStage>,
    /// `None` when the model has no dense head.
    pub dense_ii: Option<u64>,
}

impl StageConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::arg("pipeline has no layers"));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.ii < 1 || l.mvmx_ii < 1 || l.body_latency < 1 || l.timesteps < 1 {
                return Err(Error::arg(format!(
                    "layer {i}: intervals, latency and timesteps must be >= 1 ({l:?})"
                )));
            }
            if i > 0
                && self.layers[i - 1].return_sequences
                && self.layers[i - 1].timesteps != l.timesteps
            {
                return Err(Error::arg(format!(
                    "layer {i} consumes a sequence of a different length"
                )));
            }
        }
        if self.dense_ii == Some(0) {
            return Err(Error::arg("dense interval must be >= 1"));
        }
        Ok(())
    }
}

/// Stage timings implied by the analytical model for the given reuse factors.
pub fn derive_stage_config(
    model: &ModelSpec,
    rfs: &[ReuseFactors],
    hw: &HwProfile,
) -> Result<StageConfig> {
    if rfs.len() != model.layers.len() {
        return Err(Error::dim(format!(
            "{} reuse-factor sets for {} layers",
            rfs.len(),
            model.layers.len()
        )));
    }
    let layers = model
        .layers
        .iter()
        .zip(rfs)
        .map(|(l, rf)| {
            rf.validate()?;
            let ii = layer_ii(rf.rh, hw)?;
            Ok(LayerStage {
                ii,
                body_latency: ii,
                timesteps: l.spec.timesteps,
                return_sequences: l.spec.return_sequences,
                mvmx_ii: mvm_latency(rf.rx, hw)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StageConfig {
        layers,
        dense_ii: model.dense.as_ref().map(|_| 1),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    MvmX,
    Recurrent,
    Dense,
}

impl Unit {
    pub fn name(&self) -> &'static str {
        match self {
            Unit::MvmX => "mvm_x",
            Unit::Recurrent => "recurrent",
            Unit::Dense => "dense",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub inference: usize,
    /// The dense head is reported as layer `num_layers`.
    pub layer: usize,
    pub timestep: usize,
    pub unit: Unit,
    pub issue: u64,
    pub finish: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleTrace {
    pub events: Vec<TraceEvent>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimReport {
    pub inferences: usize,
    /// First input arrival to the first complete model output.
    pub latency_first: u64,
    /// Gap between the last two completions; `None` with a single inference.
    pub steady_interval: Option<u64>,
    pub completions: Vec<u64>,
    /// Idle cycles of each recurrent loop between its first and last issue.
    pub stall_cycles: Vec<u64>,
}

#[derive(Debug, Clone, Copy)]
struct UnitDef {
    unit: Unit,
    layer: usize,
    interval: u64,
    latency: u64,
    timesteps: usize,
    /// Dense head after a last-only layer runs once per inference.
    last_only: bool,
}

struct UnitState {
    def: UnitDef,
    next: usize,
    free_at: u64,
    finish: Vec<Option<u64>>,
}

impl UnitDef {
    fn jobs_per_inference(&self) -> usize {
        if self.last_only {
            1
        } else {
            self.timesteps
        }
    }

    fn job(&self, j: usize) -> (usize, usize) {
        let per = self.jobs_per_inference();
        let t = if self.last_only {
            self.timesteps - 1
        } else {
            j % per
        };
        (j / per, t)
    }
}

/// Run `num_inferences` inferences arriving every `arrival_gap` cycles.
pub fn simulate(
    cfg: &StageConfig,
    num_inferences: usize,
    arrival_gap: u64,
) -> Result<(ScheduleTrace, SimReport)> {
    cfg.validate()?;
    if num_inferences < 1 {
        return Err(Error::arg("need at least one inference"));
    }
    let nl = cfg.layers.len();
    let mut defs = Vec::with_capacity(2 * nl + 1);
    for (l, s) in cfg.layers.iter().enumerate() {
        defs.push(UnitDef {
            unit: Unit::MvmX,
            layer: l,
            interval: s.mvmx_ii,
            latency: s.mvmx_ii,
            timesteps: s.timesteps,
            last_only: false,
        });
        defs.push(UnitDef {
            unit: Unit::Recurrent,
            layer: l,
            interval: s.ii,
            latency: s.body_latency,
            timesteps: s.timesteps,
            last_only: false,
        });
    }
    if let Some(d) = cfg.dense_ii {
        let last = cfg.layers[nl - 1];
        defs.push(UnitDef {
            unit: Unit::Dense,
            layer: nl,
            interval: d,
            latency: d,
            timesteps: last.timesteps,
            last_only: !last.return_sequences,
        });
    }
    let mut units: Vec<UnitState> = defs
        .iter()
        .map(|&def| UnitState {
            def,
            next: 0,
            free_at: 0,
            finish: vec![None; num_inferences * def.jobs_per_inference()],
        })
        .collect();

    let mut wake: BinaryHeap<Reverse<u64>> = (0..num_inferences)
        .map(|k| Reverse(k as u64 * arrival_gap))
        .collect();
    let mut events = Vec::new();

    while let Some(Reverse(now)) = wake.pop() {
        while wake.peek() == Some(&Reverse(now)) {
            wake.pop();
        }
        // Issue until nothing else can start this cycle; a finish at `now`
        // only unblocks work issued at `now` via a later pass.
        let mut progressed = true;
        while progressed {
            progressed = false;
            for u in 0..units.len() {
                let UnitState {
                    def, next, free_at, ..
                } = units[u];
                if next >= units[u].finish.len() || free_at > now {
                    continue;
                }
                let (k, t) = def.job(next);
                let Some(ready) = ready_time(cfg, &units, u, k, t, arrival_gap) else {
                    continue;
                };
                if ready > now {
                    continue;
                }
                let finish = now + def.latency;
                let st = &mut units[u];
                st.finish[next] = Some(finish);
                st.next += 1;
                st.free_at = now + def.interval;
                wake.push(Reverse(st.free_at));
                wake.push(Reverse(finish));
                events.push(TraceEvent {
                    inference: k,
                    layer: def.layer,
                    timestep: t,
                    unit: def.unit,
                    issue: now,
                    finish,
                });
                progressed = true;
            }
        }
    }
    debug_assert!(units.iter().all(|u| u.next == u.finish.len()));

    events.sort_by_key(|e| (e.issue, e.layer, e.timestep, e.unit, e.inference));
    let trace = ScheduleTrace { events };
    let completions = completions(&trace, num_inferences);
    let stall_cycles = (0..nl)
        .map(|l| {
            let issues: Vec<u64> = trace
                .events
                .iter()
                .filter(|e| e.layer == l && e.unit == Unit::Recurrent)
                .map(|e| e.issue)
                .collect();
            issues
                .windows(2)
                .map(|w| w[1] - w[0] - cfg.layers[l].ii)
                .sum()
        })
        .collect();
    let report = SimReport {
        inferences: num_inferences,
        latency_first: completions[0],
        steady_interval: (num_inferences >= 2)
            .then(|| completions[num_inferences - 1] - completions[num_inferences - 2]),
        completions,
        stall_cycles,
    };
    Ok((trace, report))
}

/// Earliest cycle job `(k, t)` of unit `u` may issue, or `None` while an
/// input has not been scheduled yet.
fn ready_time(
    cfg: &StageConfig,
    units: &[UnitState],
    u: usize,
    k: usize,
    t: usize,
    arrival_gap: u64,
) -> Option<u64> {
    let def = units[u].def;
    // Finish of layer `l`'s recurrent step feeding step `t` of its consumer.
    let produced = |l: usize, t: usize| -> Option<u64> {
        let st = &units[2 * l + 1];
        let s = cfg.layers[l];
        let pt = if s.return_sequences {
            t
        } else {
            s.timesteps - 1
        };
        st.finish[k * s.timesteps + pt]
    };
    match def.unit {
        Unit::MvmX if def.layer == 0 => Some(k as u64 * arrival_gap),
        Unit::MvmX => produced(def.layer - 1, t),
        Unit::Recurrent => {
            let ts = def.timesteps;
            let x = units[u - 1].finish[k * ts + t]?;
            if t == 0 {
                Some(x)
            } else {
                Some(x.max(units[u].finish[k * ts + t - 1]?))
            }
        }
        Unit::Dense => produced(def.layer - 1, t),
    }
}

fn completions(trace: &ScheduleTrace, n: usize) -> Vec<u64> {
    let mut done = vec![0u64; n];
    for e in &trace.events {
        done[e.inference] = done[e.inference].max(e.finish);
    }
    done
}

/// Gap between the completions of the last two inferences in a trace.
pub fn steady_interval(trace: &ScheduleTrace) -> Result<u64> {
    let n = trace
        .events
        .iter()
        .map(|e| e.inference + 1)
        .max()
        .unwrap_or(0);
    if n < 3 {
        return Err(Error::TooFewInferences { got: n, need: 3 });
    }
    let done = completions(trace, n);
    Ok(done[n - 1] - done[n - 2])
}

impl ScheduleTrace {
    /// `inference,layer,timestep,issue,finish,unit`
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["inference", "layer", "timestep", "issue", "finish", "unit"])?;
        for e in &self.events {
            w.write_record([
                e.inference.to_string(),
                e.layer.to_string(),
                e.timestep.to_string(),
                e.issue.to_string(),
                e.finish.to_string(),
                e.unit.name().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// ASCII timeline, one row per unit. Each column covers `ceil(span / width)`
    /// cycles and shows the inference (mod 10) occupying the unit, `.` when idle.
    pub fn gantt(&self, width: usize) -> String {
        let end = self.events.iter().map(|e| e.finish).max().unwrap_or(0);
        let width = width.max(1);
        let scale = end.div_ceil(width as u64).max(1);
        let cols = end.div_ceil(scale) as usize;
        let mut rows: Vec<((usize, Unit), Vec<u8>)> = Vec::new();
        let mut keys: Vec<(usize, Unit)> = self.events.iter().map(|e| (e.layer, e.unit)).collect();
        keys.sort();
        keys.dedup();
        for key in keys {
            let mut line = vec![b'.'; cols];
            for e in self.events.iter().filter(|e| (e.layer, e.unit) == key) {
                let (a, b) = (
                    e.issue / scale,
                    e.finish.div_ceil(scale).max(e.issue / scale + 1),
                );
                for c in a..b.min(cols as u64) {
                    line[c as usize] = b'0' + (e.inference % 10) as u8;
                }
            }
            rows.push((key, line));
        }
        let mut out = format!("cycles per column: {scale}, span: {end}\n");
        for ((layer, unit), line) in rows {
            let label = match unit {
                Unit::Dense => "dense".to_string(),
                _ => format!("L{layer} {}", unit.name()),
            };
            out.push_str(&format!(
                "{label:<14}|{}|\n",
                String::from_utf8(line).unwrap()
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference;
    use proptest::prelude::*;

    fn stage(ii: u64, ts: usize, seq: bool) -> LayerStage {
        LayerStage {
            ii,
            body_latency: ii,
            timesteps: ts,
            return_sequences: seq,
            mvmx_ii: ii,
        }
    }

    /// Closed-form greedy schedule: each job issues at the max of its inputs
    /// and its unit's previous issue plus interval. Returns per-inference completion.
    fn recurrence_oracle(cfg: &StageConfig, n: usize, gap: u64) -> Vec<u64> {
        let mut prev_out: Vec<Vec<u64>> = (0..n)
            .map(|k| vec![k as u64 * gap; cfg.layers[0].timesteps])
            .collect();
        let mut prev_seq = true;
        for s in &cfg.layers {
            let ts = s.timesteps;
            let (mut x_free, mut r_free) = (0u64, 0u64);
            let mut outs = Vec::with_capacity(n);
            for inputs in prev_out.iter().take(n) {
                let mut hs = vec![0u64; ts];
                let mut h_prev: Option<u64> = None;
                for t in 0..ts {
                    let avail = if prev_seq {
                        inputs[t]
                    } else {
                        *inputs.last().unwrap()
                    };
                    let xi = avail.max(x_free);
                    x_free = xi + s.mvmx_ii;
                    let xf = xi + s.mvmx_ii;
                    let ri = xf.max(h_prev.unwrap_or(0)).max(r_free);
                    r_free = ri + s.ii;
                    let rf = ri + s.body_latency;
                    h_prev = Some(rf);
                    hs[t] = rf;
                }
                outs.push(hs);
            }
            prev_out = outs;
            prev_seq = s.return_sequences;
        }
        let mut done = Vec::with_capacity(n);
        let mut d_free = 0u64;
        for outs in &prev_out {
            match cfg.dense_ii {
                None => done.push(*outs.last().unwrap()),
                Some(d) => {
                    let steps: Vec<u64> = if prev_seq {
                        outs.clone()
                    } else {
                        vec![*outs.last().unwrap()]
                    };
                    let mut last = 0;
                    for a in steps {
                        let i = a.max(d_free);
                        d_free = i + d;
                        last = i + d;
                    }
                    done.push(last);
                }
            }
        }
        done
    }

    #[test]
    fn single_layer_rewind() {
        let cfg = StageConfig {
            layers: vec![stage(9, 3, true)],
            dense_ii: None,
        };
        let (trace, rep) = simulate(&cfg, 2, 0).unwrap();
        assert_eq!(rep.steady_interval, Some(27));
        assert_eq!(rep.completions, vec![36, 63]);
        let rec: Vec<u64> = trace
            .events
            .iter()
            .filter(|e| e.unit == Unit::Recurrent)
            .map(|e| e.issue)
            .collect();
        assert!(rec.windows(2).all(|w| w[1] - w[0] == 9));
    }

    #[test]
    fn derive_matches_perf_model() {
        let z = HwProfile::zynq7045();
        let m = reference::small_model();
        let cfg = derive_stage_config(&m, &[ReuseFactors::new(9, 1).unwrap(); 2], &z).unwrap();
        assert!(cfg
            .layers
            .iter()
            .all(|l| l.ii == 9 && l.mvmx_ii == 9 && l.body_latency == 9));
        let cfg = derive_stage_config(&m, &[ReuseFactors::new(2, 2).unwrap(); 2], &z).unwrap();
        assert_eq!(cfg.layers[0].ii, 10);
        let one = ModelSpec::from_specs(
            &[crate::lstm::LayerSpec::new(1, 1, true, 1).unwrap()],
            None,
            None,
        )
        .unwrap();
        let hw = HwProfile { lt_mult: 3, ..z };
        let cfg = derive_stage_config(&one, &[ReuseFactors::new(1, 1).unwrap()], &hw).unwrap();
        assert_eq!(cfg.layers[0].ii, 3 + 8);
        assert!(derive_stage_config(&m, &[ReuseFactors::new(1, 1).unwrap()], &hw).is_err());
    }

    #[test]
    fn z3_stream_and_unbalanced_pair() {
        let z = HwProfile::zynq7045();
        let m = reference::small_model();
        let cfg = derive_stage_config(&m, &[ReuseFactors::new(9, 1).unwrap(); 2], &z).unwrap();
        let (trace, _) = simulate(&cfg, 8, 0).unwrap();
        assert_eq!(steady_interval(&trace).unwrap(), 72);

        let cfg = StageConfig {
            layers: vec![stage(9, 8, true), stage(10, 8, true)],
            dense_ii: Some(1),
        };
        let (trace, _) = simulate(&cfg, 8, 0).unwrap();
        assert_eq!(steady_interval(&trace).unwrap(), 80);
        let (trace, _) = simulate(&cfg, 1, 0).unwrap();
        assert!(matches!(
            steady_interval(&trace),
            Err(Error::TooFewInferences { got: 1, .. })
        ));
    }

    #[test]
    fn cascaded_sequences_overlap() {
        let cfg = StageConfig {
            layers: vec![stage(9, 8, true), stage(9, 8, true)],
            dense_ii: None,
        };
        let (trace, rep) = simulate(&cfg, 1, 0).unwrap();
        let rec = |l: usize, t: usize| {
            trace
                .events
                .iter()
                .find(|e| e.layer == l && e.timestep == t && e.unit == Unit::Recurrent)
                .unwrap()
        };
        for t in 0..8 {
            // the consumer's mvm_x starts as soon as producer step t is done
            let x = trace
                .events
                .iter()
                .find(|e| e.layer == 1 && e.timestep == t && e.unit == Unit::MvmX)
                .unwrap();
            assert_eq!(x.issue, rec(0, t).finish);
        }
        assert!(rep.latency_first < 2 * 9 * 8);
    }

    #[test]
    fn last_only_producer_blocks_consumer() {
        let cfg = StageConfig {
            layers: vec![stage(9, 8, false), stage(9, 8, true)],
            dense_ii: Some(1),
        };
        let (trace, _) = simulate(&cfg, 3, 0).unwrap();
        for k in 0..3 {
            let producer_done = trace
                .events
                .iter()
                .filter(|e| e.inference == k && e.layer == 0)
                .map(|e| e.finish)
                .max()
                .unwrap();
            let consumer_start = trace
                .events
                .iter()
                .filter(|e| e.inference == k && e.layer == 1)
                .map(|e| e.issue)
                .min()
                .unwrap();
            assert!(consumer_start >= producer_done);
        }
    }

    #[test]
    fn matches_recurrence_oracle() {
        let cases = vec![
            StageConfig {
                layers: vec![stage(9, 8, false), stage(9, 8, true)],
                dense_ii: Some(1),
            },
            StageConfig {
                layers: vec![
                    LayerStage {
                        mvmx_ii: 3,
                        ..stage(9, 5, true)
                    },
                    stage(4, 5, false),
                    stage(12, 5, true),
                ],
                dense_ii: Some(2),
            },
            StageConfig {
                layers: vec![LayerStage {
                    mvmx_ii: 20,
                    ..stage(9, 4, true)
                }],
                dense_ii: None,
            },
            StageConfig {
                layers: vec![
                    LayerStage {
                        body_latency: 15,
                        ..stage(9, 4, true)
                    },
                    stage(9, 4, true),
                ],
                dense_ii: Some(1),
            },
        ];
        for cfg in cases {
            for gap in [0, 7, 100] {
                let (_, rep) = simulate(&cfg, 6, gap).unwrap();
                assert_eq!(
                    rep.completions,
                    recurrence_oracle(&cfg, 6, gap),
                    "{cfg:?} gap {gap}"
                );
            }
        }
    }

    #[test]
    fn slow_arrivals_set_the_interval() {
        let cfg = StageConfig {
            layers: vec![stage(9, 8, true)],
            dense_ii: Some(1),
        };
        let (trace, _) = simulate(&cfg, 5, 200).unwrap();
        assert_eq!(steady_interval(&trace).unwrap(), 200);
    }

    #[test]
    fn trace_outputs() {
        let cfg = StageConfig {
            layers: vec![stage(3, 2, true)],
            dense_ii: Some(1),
        };
        let (trace, _) = simulate(&cfg, 2, 0).unwrap();
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("inference,layer,timestep,issue,finish,unit\n0,0,0,0,3,mvm_x\n"));
        let g = trace.gantt(40);
        assert_eq!(g.lines().count(), 4);
        assert!(g.contains("L0 recurrent"));
        let keys: Vec<_> = trace
            .events
            .iter()
            .map(|e| (e.issue, e.layer, e.timestep))
            .collect();
        assert!(keys.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn steady_interval_matches_analytical_model() {
        for model in [reference::small_model(), reference::nominal_model()] {
            for hw in [HwProfile::zynq7045(), HwProfile::u250()] {
                for rh in 1..=10 {
                    for rx in [rh, crate::perf::balanced_rx(rh, &hw), 1] {
                        let rfs = vec![ReuseFactors::new(rx, rh).unwrap(); model.layers.len()];
                        let cfg = derive_stage_config(&model, &rfs, &hw).unwrap();
                        let (trace, _) = simulate(&cfg, 6, 0).unwrap();
                        let want = crate::perf::timing(&model, &rfs, &hw)
                            .unwrap()
                            .system_interval;
                        assert_eq!(
                            steady_interval(&trace).unwrap(),
                            want,
                            "{} rh {rh} rx {rx}",
                            hw.name
                        );
                    }
                }
            }
        }
    }

    fn arb_cfg() -> impl Strategy<Value = StageConfig> {
        (1usize..4, 1usize..6).prop_flat_map(|(n, ts)| {
            (
                prop::collection::vec((1u64..15, 1u64..15, 0u64..6, any::<bool>()), n),
                Just(ts),
                prop::option::of(1u64..3),
            )
                .prop_map(move |(ls, ts, dense)| {
                    let count = ls.len();
                    let layers = ls
                        .into_iter()
                        .enumerate()
                        .map(|(i, (ii, mx, extra, seq))| LayerStage {
                            ii,
                            body_latency: ii + extra,
                            timesteps: ts,
                            return_sequences: seq || i + 1 == count,
                            mvmx_ii: mx,
                        })
                        .collect();
                    StageConfig {
                        layers,
                        dense_ii: dense,
                    }
                })
        })
    }

    proptest! {
        #[test]
        fn issue_gaps_respect_intervals(cfg in arb_cfg(), n in 1usize..5, gap in 0u64..40) {
            let (trace, rep) = simulate(&cfg, n, gap).unwrap();
            prop_assert_eq!(rep.completions.clone(), recurrence_oracle(&cfg, n, gap));
            for (l, s) in cfg.layers.iter().enumerate() {
                let rec: Vec<u64> = trace.events.iter().filter(|e| e.layer == l && e.unit == Unit::Recurrent).map(|e| e.issue).collect();
                prop_assert!(rec.windows(2).all(|w| w[1] - w[0] >= s.ii));
                let xs: Vec<u64> = trace.events.iter().filter(|e| e.layer == l && e.unit == Unit::MvmX).map(|e| e.issue).collect();
                prop_assert!(xs.windows(2).all(|w| w[1] - w[0] >= s.mvmx_ii));
            }
            let (again, _) = simulate(&cfg, n, gap).unwrap();
            prop_assert_eq!(again, trace);
        }

        #[test]
        fn slower_layer_never_helps(cfg in arb_cfg(), which in 0usize..4, bump in 1u64..6) {
            let which = which % cfg.layers.len();
            let mut slower = cfg.clone();
            slower.layers[which].ii += bump;
            slower.layers[which].body_latency += bump;
            let (_, a) = simulate(&cfg, 4, 0).unwrap();
            let (_, b) = simulate(&slower, 4, 0).unwrap();
            prop_assert!(b.latency_first >= a.latency_first);
            prop_assert!(b.steady_interval.unwrap() >= a.steady_interval.unwrap());
        }
    }
}
