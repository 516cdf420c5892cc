use std::fs::File;
use std::path::PathBuf;

use rewind_core::anomaly::{self, DatasetParams, EventWindow, Label, ScoredEvent, TrainConfig};
use rewind_core::dse::{self, DesignPoint, ParetoSet, Variant};
use rewind_core::lstm::{model_forward, FixedModel, LayerSpec, ModelSpec, Numerics};
use rewind_core::manifest::{read_sequence_csv, write_sequence_csv, Manifest};
use rewind_core::perf::{self, balanced_rx, Estimate, HwProfile, ReuseFactors};
use rewind_core::sim::{self, SimReport, StageConfig, Unit};
use rewind_core::Error;
use serde::Serialize;

use crate::config::{
    parse_range, pick, pick_list, BenchArgs, ExploreArgs, InferArgs, NumericsArg, ReuseArgs,
    SimulateArgs,
};
use crate::{CliError, Common, Ctx, EXIT_INFEASIBLE};

#[derive(Serialize)]
struct ModelSummary {
    name: Option<String>,
    input_width: usize,
    timesteps: usize,
    layers: Vec<LayerSpec>,
    repeat_vector_after: Option<usize>,
    dense_outputs: Option<usize>,
}

fn summary(ctx: &Ctx) -> ModelSummary {
    let m = &ctx.model;
    ModelSummary {
        name: ctx.manifest.name.clone(),
        input_width: m.input_width(),
        timesteps: m.timesteps(),
        layers: m.specs(),
        repeat_vector_after: m.repeat_vector_after,
        dense_outputs: m.dense.as_ref().map(|d| d.outputs()),
    }
}

#[derive(Serialize)]
struct ReuseConfig {
    rh: Vec<u64>,
    rx: Vec<u64>,
    rt: Vec<u64>,
    rx_defaulted: bool,
}

fn broadcast(values: Vec<u64>, n: usize, flag: &str) -> Result<Vec<u64>, CliError> {
    match values.len() {
        1 => Ok(vec![values[0]; n]),
        len if len == n => Ok(values),
        len => Err(CliError::usage(format!("{len} values for --{flag} but the model has {n} layers (give one value or one per layer)"))),
    }
}

fn resolve_reuse(ctx: &Ctx, a: &ReuseArgs) -> Result<(Vec<ReuseFactors>, ReuseConfig), CliError> {
    let n = ctx.model.layers.len();
    let (frh, frx, frt) = ctx.file.reuse();
    let mut rh = pick_list(&a.rh, frh);
    if rh.is_empty() {
        rh = vec![1];
    }
    let rh = broadcast(rh, n, "rh")?;
    let rx_given = pick_list(&a.rx, frx);
    let rx_defaulted = rx_given.is_empty();
    let rx = if rx_defaulted {
        let rx: Vec<u64> = rh.iter().map(|&r| balanced_rx(r, &ctx.profile)).collect();
        eprintln!(
            "note: Rx not given; using the balanced value Rx = Rh + LT_sigma + LT_tail = {rx:?}"
        );
        rx
    } else {
        broadcast(rx_given, n, "rx")?
    };
    let mut rt = pick_list(&a.rt, frt);
    if rt.is_empty() {
        rt = vec![1];
    }
    let rt = broadcast(rt, n, "rt")?;
    let rfs = (0..n)
        .map(|i| {
            let rf = ReuseFactors {
                rx: rx[i],
                rh: rh[i],
                rt: rt[i],
            };
            rf.validate().map(|_| rf)
        })
        .collect::<Result<Vec<_>, Error>>()?;
    Ok((
        rfs,
        ReuseConfig {
            rh,
            rx,
            rt,
            rx_defaulted,
        },
    ))
}

#[derive(Serialize)]
struct EstimateReport<'a> {
    config: EstimateConfig<'a>,
    model: ModelSummary,
    #[serde(flatten)]
    estimate: &'a Estimate,
}

#[derive(Serialize)]
struct EstimateConfig<'a> {
    #[serde(flatten)]
    common: &'a Common,
    #[serde(flatten)]
    reuse: ReuseConfig,
}

pub fn estimate(ctx: &Ctx, a: &ReuseArgs) -> Result<(), CliError> {
    let (rfs, reuse) = resolve_reuse(ctx, a)?;
    let est = perf::estimate(&ctx.model, &rfs, &ctx.profile)?;
    let mut csv = Vec::new();
    est.write_csv(&ctx.model, &mut csv)?;
    ctx.write("estimate.csv", &csv)?;
    let json = ctx.write_json(
        "estimate.json",
        &EstimateReport {
            config: EstimateConfig {
                common: &ctx.common,
                reuse,
            },
            model: summary(ctx),
            estimate: &est,
        },
    )?;
    ctx.emit(&json, &csv);
    Ok(())
}

#[derive(Serialize)]
struct ExploreConfig<'a> {
    #[serde(flatten)]
    common: &'a Common,
    budget: u64,
    sweep: [u64; 2],
}

#[derive(Serialize)]
struct Frontiers<'a> {
    naive: &'a ParetoSet,
    balanced: &'a ParetoSet,
}

#[derive(Serialize)]
struct ExploreReport<'a> {
    config: ExploreConfig<'a>,
    model: ModelSummary,
    profile: &'a HwProfile,
    feasible: bool,
    point: Option<DesignPoint>,
    infeasible_reason: Option<String>,
    fully_unrolled: DesignPoint,
    frontier: Frontiers<'a>,
}

pub fn explore(ctx: &Ctx, a: &ExploreArgs) -> Result<(), CliError> {
    let f = &ctx.file;
    let budget = pick(a.budget, f.budget, ctx.profile.dsp_total);
    let sweep = pick(a.sweep.clone(), f.sweep.clone(), "1..10".to_string());
    let (lo, hi) = parse_range(&sweep)?;
    let hw = HwProfile {
        dsp_total: budget,
        ..ctx.profile.clone()
    };
    hw.validate()?;
    let n = ctx.model.layers.len();

    let (point, reason) = match dse::balance_model(&ctx.model, &hw) {
        Ok(p) => (Some(p), None),
        Err(Error::Infeasible(msg)) => (None, Some(msg)),
        Err(e) => return Err(e.into()),
    };
    let unrolled = DesignPoint::evaluate(&ctx.model, vec![ReuseFactors::new(1, 1)?; n], &hw)?;
    let (naive, balanced) = dse::pareto_sweep(&ctx.model, &hw, lo..=hi)?;

    let mut csv = Vec::new();
    dse::write_frontier_csv(
        &[(Variant::Naive, &naive), (Variant::Balanced, &balanced)],
        &mut csv,
    )?;
    ctx.write("frontier.csv", &csv)?;
    let report = ExploreReport {
        config: ExploreConfig {
            common: &ctx.common,
            budget,
            sweep: [lo, hi],
        },
        model: summary(ctx),
        profile: &hw,
        feasible: point.is_some(),
        point,
        infeasible_reason: reason.clone(),
        fully_unrolled: unrolled,
        frontier: Frontiers {
            naive: &naive,
            balanced: &balanced,
        },
    };
    let json = ctx.write_json("explore.json", &report)?;
    ctx.emit(&json, &csv);
    match reason {
        Some(msg) => Err(CliError {
            code: EXIT_INFEASIBLE,
            message: format!("{msg}; raise --budget or shrink the model"),
        }),
        None => Ok(()),
    }
}

#[derive(Serialize)]
struct SimConfig<'a> {
    #[serde(flatten)]
    common: &'a Common,
    #[serde(flatten)]
    reuse: ReuseConfig,
    inferences: usize,
    arrival_gap: u64,
}

#[derive(Serialize)]
#[allow(non_snake_case)]
struct LayerComparison {
    layer: usize,
    model_ii: u64,
    model_II_layer: u64,
    /// Gap between the last two inferences' final-step completions.
    sim_II_layer: Option<u64>,
}

#[derive(Serialize)]
#[allow(non_snake_case)]
struct SimComparison {
    layers: Vec<LayerComparison>,
    model_II_sys: u64,
    sim_steady_II: Option<u64>,
    steady_II_status: String,
    agrees: Option<bool>,
    model_serial_latency: u64,
    sim_latency_first: u64,
}

#[derive(Serialize)]
struct SimulateReport<'a> {
    config: SimConfig<'a>,
    model: ModelSummary,
    profile: &'a HwProfile,
    reuse: &'a [ReuseFactors],
    stages: &'a StageConfig,
    report: &'a SimReport,
    comparison: SimComparison,
}

pub fn simulate(ctx: &Ctx, a: &SimulateArgs) -> Result<(), CliError> {
    let f = &ctx.file;
    let (rfs, reuse) = resolve_reuse(ctx, &a.reuse)?;
    let n = pick(a.inferences, f.inferences, 8);
    let gap = pick(a.arrival_gap, f.arrival_gap, 0);
    let width = pick(a.gantt_width, f.gantt_width, 100);
    if n < 1 {
        return Err(CliError::usage("--inferences must be at least 1"));
    }
    let stages = sim::derive_stage_config(&ctx.model, &rfs, &ctx.profile)?;
    let (trace, rep) = sim::simulate(&stages, n, gap)?;
    let timing = perf::timing(&ctx.model, &rfs, &ctx.profile)?;

    let layers = (0..stages.layers.len())
        .map(|l| {
            let last_t = stages.layers[l].timesteps - 1;
            let done = |k: usize| {
                trace
                    .events
                    .iter()
                    .find(|e| {
                        e.unit == Unit::Recurrent
                            && e.layer == l
                            && e.inference == k
                            && e.timestep == last_t
                    })
                    .map(|e| e.finish)
            };
            let sim_ii = if n >= 2 {
                done(n - 1).zip(done(n - 2)).map(|(a, b)| a - b)
            } else {
                None
            };
            LayerComparison {
                layer: l,
                model_ii: timing.ii_per_layer[l],
                model_II_layer: timing.interval_per_layer[l],
                sim_II_layer: sim_ii,
            }
        })
        .collect();
    let status = match rep.steady_interval {
        Some(_) if gap > timing.system_interval => "measured (arrival-limited)".to_string(),
        Some(_) => "measured".to_string(),
        None => "unavailable: needs at least 2 inferences".to_string(),
    };
    let comparison = SimComparison {
        layers,
        model_II_sys: timing.system_interval,
        sim_steady_II: rep.steady_interval,
        steady_II_status: status,
        agrees: rep
            .steady_interval
            .map(|s| s == timing.system_interval.max(gap)),
        model_serial_latency: timing.latency_cycles,
        sim_latency_first: rep.latency_first,
    };

    let mut csv = Vec::new();
    trace.write_csv(&mut csv)?;
    ctx.write("trace.csv", &csv)?;
    ctx.write("gantt.txt", trace.gantt(width).as_bytes())?;
    let report = SimulateReport {
        config: SimConfig {
            common: &ctx.common,
            reuse,
            inferences: n,
            arrival_gap: gap,
        },
        model: summary(ctx),
        profile: &ctx.profile,
        reuse: &rfs,
        stages: &stages,
        report: &rep,
        comparison,
    };
    let json = ctx.write_json("simulate.json", &report)?;
    ctx.emit(&json, &csv);
    Ok(())
}

fn numerics(arg: NumericsArg) -> Numerics {
    match arg {
        NumericsArg::Float => Numerics::Float,
        NumericsArg::Fixed => Numerics::Fixed,
    }
}

fn fixed_model(ctx: &Ctx, model: &ModelSpec) -> Result<FixedModel, Error> {
    match &ctx.manifest.act_tables {
        Some(t) => FixedModel::with_tables(model, t.clone()),
        None => FixedModel::new(model),
    }
}

#[derive(Serialize)]
struct InferConfig<'a> {
    #[serde(flatten)]
    common: &'a Common,
    input: PathBuf,
    numerics: Numerics,
}

#[derive(Serialize)]
struct InferReport<'a> {
    config: InferConfig<'a>,
    model: ModelSummary,
    weights_present: bool,
    timesteps: usize,
    output_width: usize,
    reconstruction_mse: Option<f64>,
    output: &'a [Vec<f64>],
}

pub fn infer(ctx: &Ctx, a: &InferArgs) -> Result<(), CliError> {
    let f = &ctx.file;
    let input = a
        .input
        .clone()
        .or(f.input.clone())
        .ok_or_else(|| CliError::usage("infer needs --input <sequence.csv>"))?;
    let num = numerics(pick(a.numerics, f.numerics, NumericsArg::Float));
    let file = File::open(&input)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", input.display())))?;
    let seq =
        read_sequence_csv(file).map_err(|e| CliError::data(format!("{}: {e}", input.display())))?;
    if ctx.manifest.weights.is_none() {
        eprintln!("warning: manifest has no weights; running with zero weights");
    }
    let out = match num {
        Numerics::Float => model_forward(&seq, &ctx.model)?,
        Numerics::Fixed => fixed_model(ctx, &ctx.model)?.forward_f64(&seq)?,
    };
    let mse = (ctx.model.output_width() == ctx.model.input_width()).then(|| {
        let n: usize = seq.iter().map(Vec::len).sum();
        out.iter()
            .zip(&seq)
            .flat_map(|(o, x)| o.iter().zip(x).map(|(a, b)| (a - b) * (a - b)))
            .sum::<f64>()
            / n.max(1) as f64
    });
    let mut csv = Vec::new();
    write_sequence_csv(&out, &mut csv)?;
    ctx.write("output.csv", &csv)?;
    let report = InferReport {
        config: InferConfig {
            common: &ctx.common,
            input,
            numerics: num,
        },
        model: summary(ctx),
        weights_present: ctx.manifest.weights.is_some(),
        timesteps: out.len(),
        output_width: ctx.model.output_width(),
        reconstruction_mse: mse,
        output: &out,
    };
    let json = ctx.write_json("infer.json", &report)?;
    ctx.emit(&json, &csv);
    Ok(())
}

#[derive(Serialize)]
struct BenchConfig<'a> {
    #[serde(flatten)]
    common: &'a Common,
    dataset: Option<PathBuf>,
    n_train: usize,
    n_background: usize,
    n_signal: usize,
    snr: f64,
    fpr: f64,
    epochs: usize,
    lr: f64,
    batch_size: usize,
    train: bool,
}

#[derive(Serialize)]
struct Seeds {
    train_data: u64,
    eval_data: u64,
    init: u64,
    shuffle: u64,
}

#[derive(Serialize)]
struct Detection {
    auc: f64,
    threshold: f64,
    empirical_fpr: f64,
    tpr: f64,
}

#[derive(Serialize)]
struct BenchReport<'a> {
    config: BenchConfig<'a>,
    seeds: Seeds,
    model: ModelSummary,
    profile: &'a HwProfile,
    train_timesteps: usize,
    train_windows: usize,
    epoch_loss: Vec<f64>,
    eval_background: usize,
    eval_signal: usize,
    float: Detection,
    fixed: Detection,
    auc_gap: f64,
}

/// Training windows: generated at the manifest's training length and cut
/// into model-length pieces when the two differ.
fn training_windows(
    ctx: &Ctx,
    p: &DatasetParams,
    n: usize,
    seed: u64,
) -> Result<(usize, Vec<EventWindow>), CliError> {
    let ts = ctx.model.timesteps();
    let train_ts = ctx.manifest.train_timesteps.unwrap_or(ts);
    if train_ts < ts {
        return Err(CliError::usage(format!(
            "train_timesteps {train_ts} is shorter than the model's {ts} timesteps"
        )));
    }
    let long = anomaly::gen_dataset_with(
        &DatasetParams {
            timesteps: train_ts,
            ..*p
        },
        n,
        0,
        seed,
    )?;
    if train_ts == ts {
        return Ok((train_ts, long));
    }
    let piece = ts * p.width;
    let windows = long
        .iter()
        .flat_map(|w| w.samples.chunks_exact(piece))
        .map(|c| {
            let mut samples = c.to_vec();
            anomaly::normalize(&mut samples);
            EventWindow {
                samples,
                label: Label::Background,
            }
        })
        .collect();
    Ok((train_ts, windows))
}

fn detection(
    scored: &[ScoredEvent],
    fpr: f64,
) -> Result<(Detection, Vec<anomaly::RocPoint>), Error> {
    let (auc, curve) = anomaly::roc_auc(scored)?;
    let bg: Vec<f64> = scored
        .iter()
        .filter(|s| s.label == Label::Background)
        .map(|s| s.loss)
        .collect();
    let sig: Vec<f64> = scored
        .iter()
        .filter(|s| s.label == Label::Signal)
        .map(|s| s.loss)
        .collect();
    let threshold = anomaly::threshold_from_fpr(&bg, fpr)?;
    Ok((
        Detection {
            auc,
            threshold,
            empirical_fpr: anomaly::empirical_fpr(&bg, threshold),
            tpr: anomaly::empirical_fpr(&sig, threshold),
        },
        curve,
    ))
}

pub fn bench(ctx: &Ctx, a: &BenchArgs) -> Result<(), CliError> {
    let f = &ctx.file;
    let seed = ctx.common.seed;
    let cfg = BenchConfig {
        common: &ctx.common,
        dataset: a.dataset.clone().or(f.dataset.clone()),
        n_train: pick(a.n_train, f.n_train, 2000),
        n_background: pick(a.n_background, f.n_background, 500),
        n_signal: pick(a.n_signal, f.n_signal, 500),
        snr: pick(a.snr, f.snr, 8.0),
        fpr: pick(a.fpr, f.fpr, 0.1),
        epochs: pick(a.epochs, f.epochs, 20),
        lr: pick(a.lr, f.lr, 0.1),
        batch_size: pick(a.batch_size, f.batch_size, 16),
        train: !(a.no_train || f.no_train.unwrap_or(false)),
    };
    if !(cfg.fpr > 0.0 && cfg.fpr < 1.0) {
        return Err(CliError::usage(format!(
            "--fpr {} must lie in (0, 1)",
            cfg.fpr
        )));
    }
    let seeds = Seeds {
        train_data: seed,
        eval_data: seed.wrapping_add(1),
        init: seed.wrapping_add(2),
        shuffle: seed.wrapping_add(3),
    };
    let params = DatasetParams {
        timesteps: ctx.model.timesteps(),
        width: ctx.model.input_width(),
        snr: cfg.snr,
        ..DatasetParams::default()
    };
    params.validate()?;

    let eval = match &cfg.dataset {
        Some(path) => {
            let file = File::open(path)
                .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
            anomaly::read_dataset_csv(file)
                .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?
        }
        None => {
            anomaly::gen_dataset_with(&params, cfg.n_background, cfg.n_signal, seeds.eval_data)?
        }
    };
    let eval_signal = eval.iter().filter(|e| e.label == Label::Signal).count();
    if eval_signal == 0 || eval_signal == eval.len() {
        return Err(CliError::data(
            "evaluation set needs both background and signal events",
        ));
    }

    let mut model = ctx.model.clone();
    let (train_ts, train_windows, epoch_loss) = if cfg.train {
        if cfg.n_train == 0 {
            return Err(CliError::usage("--n-train must be at least 1"));
        }
        let (train_ts, windows) = training_windows(ctx, &params, cfg.n_train, seeds.train_data)?;
        model.init_for_training(seeds.init);
        let tc = TrainConfig {
            epochs: cfg.epochs,
            lr: cfg.lr,
            batch_size: cfg.batch_size,
            clip_norm: 1.0,
            seed: seeds.shuffle,
        };
        let (trained, rep) = anomaly::train_autoencoder(&windows, &model, &tc)?;
        model = trained;
        (train_ts, windows.len(), rep.epoch_loss)
    } else {
        (model.timesteps(), 0, Vec::new())
    };

    let float_scores = anomaly::score(&eval, &model, Numerics::Float)?;
    let fixed_scores = match &ctx.manifest.act_tables {
        None => anomaly::score(&eval, &model, Numerics::Fixed)?,
        Some(_) => {
            let fm = fixed_model(ctx, &model)?;
            let width = model.input_width();
            eval.iter()
                .map(|e| {
                    let x = e.to_sequence(width);
                    let y = fm.forward_f64(&x)?;
                    let n = e.samples.len().max(1) as f64;
                    let loss = y
                        .iter()
                        .zip(&x)
                        .flat_map(|(o, i)| o.iter().zip(i).map(|(a, b)| (a - b) * (a - b)))
                        .sum::<f64>()
                        / n;
                    Ok(ScoredEvent {
                        loss,
                        label: e.label,
                    })
                })
                .collect::<Result<Vec<_>, Error>>()?
        }
    };
    let (float, float_curve) = detection(&float_scores, cfg.fpr)?;
    let (fixed, fixed_curve) = detection(&fixed_scores, cfg.fpr)?;

    let mut float_csv = Vec::new();
    anomaly::write_roc_csv(&float_curve, &mut float_csv)?;
    ctx.write("roc_float.csv", &float_csv)?;
    let mut fixed_csv = Vec::new();
    anomaly::write_roc_csv(&fixed_curve, &mut fixed_csv)?;
    ctx.write("roc_fixed.csv", &fixed_csv)?;
    let mut trained = Manifest::from_model(&model, Some("trained"), true);
    trained.train_timesteps = ctx.manifest.train_timesteps;
    trained.act_tables = ctx.manifest.act_tables.clone();
    ctx.write("model.json", format!("{}\n", trained.to_json()).as_bytes())?;

    let report = BenchReport {
        config: cfg,
        seeds,
        model: summary(ctx),
        profile: &ctx.profile,
        train_timesteps: train_ts,
        train_windows,
        epoch_loss,
        eval_background: eval.len() - eval_signal,
        eval_signal,
        auc_gap: (float.auc - fixed.auc).abs(),
        float,
        fixed,
    };
    let json = ctx.write_json("bench.json", &report)?;
    ctx.emit(&json, &float_csv);
    Ok(())
}
