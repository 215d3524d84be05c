//! Subcommand bodies. Each writes its artifacts under `cfg.out` and returns
//! the one-line summary printed on success.

use std::fmt;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use streamperc::data::{resample_speed, resample_stream, write_stream_dataset, PredictionDump, Triplet, VideoStream};
use streamperc::dfp::{dfp_grad_check_with, DfpObjective};
use streamperc::experiment::{compare_csv, run_compare, Agent, AgentKind, CompareAgent, CompareSpec};
use streamperc::forecast::linear::{object_losses, sample_trend_weights, samples_from_triplets};
use streamperc::forecast::{
    evaluate_forecaster, grad_check_with, train_linear_forecaster, GradBatch, LinearForecaster, ModelFile,
    ModelMetadata,
};
use streamperc::metrics::{evaluate_ap, evaluate_runs, ApResult, EvalInstance, PairingMode, ResultRow};
use streamperc::rng::derive_seed;
use streamperc::stream_sim::{pair_for_sap, ScheduleTrace};
use streamperc::trend_loss::trend_factor;

use crate::config::RunConfig;

/// Failure of a numerical check; maps to exit code 3.
#[derive(Debug)]
pub struct NumericalFailure(pub String);

impl fmt::Display for NumericalFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NumericalFailure {}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let p = dir.join(name);
    fs::write(&p, text).with_context(|| format!("writing {}", p.display()))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_text(dir, name, &s)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn fmt_ap(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.6}"))
}

fn streams_at_speed(cfg: &RunConfig) -> Result<Vec<VideoStream>> {
    Ok(cfg.base_streams()?.iter().map(|s| resample_stream(s, cfg.speed)).collect())
}

fn triplets_of(streams: &[VideoStream], factor: u32) -> Result<Vec<Triplet<'_>>> {
    let mut out = Vec::new();
    for s in streams {
        out.extend(resample_speed(s, factor)?);
    }
    Ok(out)
}

fn agent(cfg: &RunConfig, kind: AgentKind) -> Result<Agent> {
    let model = cfg.load_model()?;
    Ok(Agent::build(kind, cfg.detector, cfg.kalman, model.as_ref())?)
}

pub fn generate(cfg: &RunConfig) -> Result<String> {
    let streams = cfg.base_streams()?;
    fs::create_dir_all(&cfg.out)?;
    write_stream_dataset(&streams, cfg.out.join("dataset.json"))?;
    let frames: usize = streams.iter().map(|s| s.len()).sum();
    let boxes: usize = streams.iter().flat_map(|s| &s.frames).map(|f| f.gt.len()).sum();
    Ok(format!(
        "generate: {} streams, {frames} frames, {boxes} boxes, seed {} -> {}",
        streams.len(),
        cfg.seed,
        cfg.out.join("dataset.json").display()
    ))
}

/// Streaming predictions: what the agent shows at each frame's timestamp.
fn streaming_dump(traces: &[ScheduleTrace], streams: &[VideoStream]) -> Result<PredictionDump> {
    let mut dump = PredictionDump::new();
    for (t, s) in traces.iter().zip(streams) {
        for p in pair_for_sap(t, s)? {
            if let Some(r) = p.source {
                dump.insert(&s.video_id, p.frame_index, t.records[r].detections.clone());
            }
        }
    }
    Ok(dump)
}

fn simulate_all(cfg: &RunConfig, streams: &[VideoStream]) -> Result<Vec<ScheduleTrace>> {
    let a = agent(cfg, cfg.agent)?;
    Ok(streams.iter().map(|s| a.simulate(s, &cfg.latency)).collect::<Result<_, _>>()?)
}

pub fn simulate(cfg: &RunConfig) -> Result<String> {
    let streams = streams_at_speed(cfg)?;
    let traces = simulate_all(cfg, &streams)?;
    write_json(&cfg.out, "trace.json", &traces)?;
    streaming_dump(&traces, &streams)?.persist(cfg.out.join("predictions.json"))?;
    let processed: usize = traces.iter().map(|t| t.records.len()).sum();
    let frames: usize = streams.iter().map(|s| s.len()).sum();
    Ok(format!(
        "simulate: agent {}, latency {} ms, speed {}x, {processed} of {frames} frames processed, seed {}",
        cfg.agent,
        cfg.latency_ms(),
        cfg.speed.as_u32(),
        cfg.seed
    ))
}

#[derive(Serialize)]
struct EvalReport<'a> {
    seed: u64,
    agent: Option<AgentKind>,
    pairing: PairingMode,
    latency_ms: Option<f64>,
    speed_factor: u32,
    pooled: ApResult,
    streams: &'a [ResultRow],
}

const RESULT_CSV_HEADER: &str = "video_id,latency_ms,speed_factor,ap,ap50,ap75,ap_s,ap_m,ap_l";

fn result_csv(rows: &[ResultRow]) -> String {
    let mut s = format!("{RESULT_CSV_HEADER}\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.video_id,
            r.latency_ms,
            r.speed_factor,
            opt(r.ap),
            opt(r.ap50),
            opt(r.ap75),
            opt(r.ap_s),
            opt(r.ap_m),
            opt(r.ap_l)
        ));
    }
    s
}

fn write_results(cfg: &RunConfig, report: &EvalReport<'_>) -> Result<()> {
    let mut rows = report.streams.to_vec();
    rows.push(ResultRow::new("all", report.latency_ms.unwrap_or(0.0), report.speed_factor, &report.pooled));
    write_json(&cfg.out, "results.json", report)?;
    write_text(&cfg.out, "results.csv", &result_csv(&rows))
}

fn eval_traces(cfg: &RunConfig, mode: PairingMode, latency_ms: f64) -> Result<(ApResult, Vec<ResultRow>)> {
    let streams = streams_at_speed(cfg)?;
    let a = agent(cfg, cfg.agent)?;
    let traces: Vec<ScheduleTrace> = match mode {
        PairingMode::Streaming => streams.iter().map(|s| a.simulate(s, &cfg.latency)).collect::<Result<_, _>>()?,
        PairingMode::Offline => streams.iter().map(|s| a.simulate_offline(s)).collect::<Result<_, _>>()?,
    };
    let speed = cfg.speed.as_u32();
    let mut rows = Vec::new();
    for (t, s) in traces.iter().zip(&streams) {
        let r = evaluate_runs(&[(t, s)], mode, &cfg.ap)?;
        rows.push(ResultRow::new(&s.video_id, latency_ms, speed, &r));
    }
    let runs: Vec<_> = traces.iter().zip(&streams).collect();
    Ok((evaluate_runs(&runs, mode, &cfg.ap)?, rows))
}

pub fn eval_sap(cfg: &RunConfig) -> Result<String> {
    let latency_ms = cfg.latency_ms();
    let (pooled, rows) = eval_traces(cfg, PairingMode::Streaming, latency_ms)?;
    let report = EvalReport {
        seed: cfg.seed,
        agent: Some(cfg.agent),
        pairing: PairingMode::Streaming,
        latency_ms: Some(latency_ms),
        speed_factor: cfg.speed.as_u32(),
        pooled,
        streams: &rows,
    };
    write_results(cfg, &report)?;
    Ok(format!(
        "eval-sap: sAP {} (AP50 {}, AP75 {}), agent {}, latency {latency_ms} ms, speed {}x, {} streams, seed {}",
        fmt_ap(pooled.ap),
        fmt_ap(pooled.ap50),
        fmt_ap(pooled.ap75),
        cfg.agent,
        cfg.speed.as_u32(),
        rows.len(),
        cfg.seed
    ))
}

fn eval_dump(cfg: &RunConfig, path: &Path) -> Result<(ApResult, Vec<ResultRow>)> {
    let streams = streams_at_speed(cfg)?;
    let dump = PredictionDump::load(path)?;
    dump.validate_against(&streams)?;
    let speed = cfg.speed.as_u32();
    let mut rows = Vec::new();
    let mut all = Vec::new();
    for s in &streams {
        let inst: Vec<EvalInstance<'_>> = s
            .frames
            .iter()
            .enumerate()
            .map(|(i, f)| EvalInstance { dets: dump.get(&s.video_id, i), gts: &f.gt })
            .collect();
        rows.push(ResultRow::new(&s.video_id, 0.0, speed, &evaluate_ap(&inst, &cfg.ap)?));
        all.extend(inst);
    }
    Ok((evaluate_ap(&all, &cfg.ap)?, rows))
}

pub fn eval_offline(cfg: &RunConfig) -> Result<String> {
    let (pooled, rows, source) = match &cfg.predictions {
        Some(p) => {
            let (pooled, rows) = eval_dump(cfg, p)?;
            (pooled, rows, format!("predictions {}", p.display()))
        }
        None => {
            let (pooled, rows) = eval_traces(cfg, PairingMode::Offline, 0.0)?;
            (pooled, rows, format!("agent {}", cfg.agent))
        }
    };
    let report = EvalReport {
        seed: cfg.seed,
        agent: cfg.predictions.is_none().then_some(cfg.agent),
        pairing: PairingMode::Offline,
        latency_ms: None,
        speed_factor: cfg.speed.as_u32(),
        pooled,
        streams: &rows,
    };
    write_results(cfg, &report)?;
    Ok(format!(
        "eval-offline: AP {} (AP50 {}, AP75 {}), {source}, speed {}x, {} streams, seed {}",
        fmt_ap(pooled.ap),
        fmt_ap(pooled.ap50),
        fmt_ap(pooled.ap75),
        cfg.speed.as_u32(),
        rows.len(),
        cfg.seed
    ))
}

fn video_of<'a>(streams: &'a [VideoStream], t: &Triplet<'_>) -> &'a str {
    streams.iter().find(|s| s.frames.iter().any(|f| std::ptr::eq(f, t.cur))).map_or("", |s| s.video_id.as_str())
}

pub fn triplets(cfg: &RunConfig) -> Result<String> {
    let streams = cfg.base_streams()?;
    let factor = cfg.speed.as_u32();
    let ts = triplets_of(&streams, factor)?;
    let mut csv = String::from("video_id,speed_factor,prev_frame,cur_frame,target_frame,target_boxes\n");
    for t in &ts {
        csv.push_str(&format!(
            "{},{factor},{},{},{},{}\n",
            video_of(&streams, t),
            t.prev.frame_index,
            t.cur.frame_index,
            t.target_index,
            t.target_gt.len()
        ));
    }
    write_text(&cfg.out, "triplets.csv", &csv)?;
    Ok(format!("triplets: {} triplets at speed {factor}x from {} streams, seed {}", ts.len(), streams.len(), cfg.seed))
}

pub fn tal_weights(cfg: &RunConfig) -> Result<String> {
    let streams = cfg.base_streams()?;
    let factor = cfg.speed.as_u32();
    let ts = triplets_of(&streams, factor)?;
    // Without a model the loss is that of predicting no motion.
    let model = cfg.load_model()?.unwrap_or_else(LinearForecaster::zeros);
    let samples = samples_from_triplets(&ts);
    let losses = object_losses(&model, &samples);
    let trend = &cfg.train.trend;
    let hats = sample_trend_weights(&samples, &losses, trend, cfg.train.normalization)?;
    let mut csv = String::from("video_id,target_frame,object,m_iou,omega,omega_hat,loss\n");
    let mut object = 0;
    for (i, s) in samples.iter().enumerate() {
        if i > 0 && samples[i - 1].group == s.group {
            object += 1;
        } else {
            object = 0;
        }
        let t = &ts[s.group];
        csv.push_str(&format!(
            "{},{},{object},{},{},{},{}\n",
            video_of(&streams, t),
            t.target_index,
            s.m_iou,
            trend_factor(s.m_iou, trend),
            hats[i],
            losses[i]
        ));
    }
    write_text(&cfg.out, "tal_weights.csv", &csv)?;
    Ok(format!(
        "tal-weights: {} objects in {} triplets, tau {}, nu {}, seed {}",
        samples.len(),
        ts.len(),
        trend.tau,
        trend.nu,
        cfg.seed
    ))
}

pub fn train_forecaster(cfg: &RunConfig) -> Result<String> {
    let streams = cfg.base_streams()?;
    let ts = triplets_of(&streams, cfg.speed.as_u32())?;
    let (model, log) = train_linear_forecaster(&ts, &cfg.train)?;
    let last = log.epochs.last();
    let final_loss = last.map_or(f64::NAN, |e| e.mean_l1);
    if !model.is_finite() || !final_loss.is_finite() {
        return Err(NumericalFailure("training produced non-finite weights or loss".into()).into());
    }
    let meta = ModelMetadata {
        epochs: cfg.train.epochs,
        learning_rate: cfg.train.learning_rate,
        seed: cfg.train.seed,
        tal_enabled: cfg.train.tal_enabled,
        tau: cfg.train.trend.tau,
        nu: cfg.train.trend.nu,
        final_loss,
    };
    write_json(&cfg.out, "model.json", &ModelFile::new(&model, meta))?;
    let mut csv = String::from("epoch,loss_before,loss,mean_l1,mean_w_fast,mean_w_slow\n");
    for e in &log.epochs {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            e.epoch,
            e.loss_before,
            e.loss,
            e.mean_l1,
            opt(e.mean_w_fast),
            opt(e.mean_w_slow)
        ));
    }
    write_text(&cfg.out, "train_log.csv", &csv)?;
    let errs = evaluate_forecaster(&model, &samples_from_triplets(&ts), log.fast_miou_split);
    Ok(format!(
        "train-forecaster: {} samples, {} epochs, tal {}, final mean L1 {final_loss:.6e} (fast {}, slow {}), seed {}",
        log.samples,
        cfg.train.epochs,
        cfg.train.tal_enabled,
        errs.mean_l1_fast.map_or_else(|| "-".into(), |v| format!("{v:.6e}")),
        errs.mean_l1_slow.map_or_else(|| "-".into(), |v| format!("{v:.6e}")),
        cfg.seed
    ))
}

#[derive(Serialize)]
struct GradcheckRow {
    instance: u64,
    seed: u64,
    forecaster_rel_err: f64,
    dfp_rel_err: f64,
}

#[derive(Serialize)]
struct GradcheckReport {
    seed: u64,
    tolerance: f64,
    forecaster_max_rel_err: f64,
    dfp_max_rel_err: f64,
    passed: bool,
    instances: Vec<GradcheckRow>,
}

/// `bias` is added to every analytic component; non-zero only through the
/// hidden test flag.
pub fn gradcheck(cfg: &RunConfig, assert: bool, bias: f64) -> Result<String> {
    let g = &cfg.gradcheck;
    let mut rows = Vec::new();
    for k in 0..g.seeds {
        let seed = derive_seed(cfg.seed, "gradcheck", k);
        let model = LinearForecaster::random(seed, 0.5);
        let batch = GradBatch::random(&model, seed, g.samples);
        let (obj, p) = DfpObjective::random(seed, g.channels, g.height, g.width, cfg.dfp);
        rows.push(GradcheckRow {
            instance: k,
            seed,
            forecaster_rel_err: grad_check_with(&model, &batch, 1e-5, bias),
            dfp_rel_err: dfp_grad_check_with(&p, &obj, 1e-5, bias)?,
        });
    }
    // NaN must fail the check, hence the explicit comparisons.
    let worst = |f: fn(&GradcheckRow) -> f64| rows.iter().map(f).fold(0.0, |a: f64, b| if b.is_nan() { b } else { a.max(b) });
    let (lin, dfp) = (worst(|r| r.forecaster_rel_err), worst(|r| r.dfp_rel_err));
    let passed = lin < g.tolerance && dfp < g.tolerance;
    let report = GradcheckReport {
        seed: cfg.seed,
        tolerance: g.tolerance,
        forecaster_max_rel_err: lin,
        dfp_max_rel_err: dfp,
        passed,
        instances: rows,
    };
    write_json(&cfg.out, "gradcheck.json", &report)?;
    let line = format!(
        "gradcheck: forecaster max rel err {lin:.3e}, fusion max rel err {dfp:.3e}, tolerance {:e}, {} instances, {}, seed {}",
        g.tolerance,
        g.seeds,
        if passed { "pass" } else { "FAIL" },
        cfg.seed
    );
    if assert && !passed {
        return Err(NumericalFailure(line).into());
    }
    Ok(line)
}

pub fn compare(cfg: &RunConfig) -> Result<String> {
    let c = &cfg.compare;
    if c.agents.is_empty() {
        bail!("compare.agents must not be empty");
    }
    let agents = c
        .agents
        .iter()
        .map(|&kind| {
            Ok(CompareAgent {
                kind,
                agent: agent(cfg, kind)?,
                extra_latency_ms: c.extra_latency_ms.get(kind.name()).copied().unwrap_or(0.0),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if cfg.dataset.is_some() {
        bail!("compare runs on generated scenes; remove `dataset` from the config");
    }
    let spec = CompareSpec {
        scenes: cfg.scene_configs(),
        agents,
        latencies_ms: c.latencies_ms.clone(),
        speeds: c.speeds.clone(),
        ap: cfg.ap.clone(),
    };
    let rows = run_compare(&spec)?;
    write_text(&cfg.out, "compare.csv", &compare_csv(&rows))?;
    write_json(&cfg.out, "compare.json", &rows)?;
    Ok(format!(
        "compare: {} agents x {} latencies x {} speeds over {} scenes, seed {} -> {}",
        c.agents.len(),
        c.latencies_ms.len(),
        c.speeds.len(),
        cfg.scenes,
        cfg.seed,
        cfg.out.join("compare.csv").display()
    ))
}
