//! Command drivers behind the CLI binary: manifest resolution, the
//! compile / simulate / compare / sweep pipelines, cost-model calibration
//! and trace validation. Every file written here is byte-stable for a
//! fixed (manifest, seed) pair, with one documented exception: the compile
//! stats carry a wall-clock field.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baselines::{baseline_plan, ideal_roofline, BaselineKind};
use crate::cost::{
    fit_calibrated, max_rel_error, CalibratedModel, ComputeSample, CostModel, TransferSample,
};
use crate::hw::{load_config, ChipConfig, TopologyKind};
use crate::model::{load_model, ModelGraph};
use crate::plans::{enumerate_partition_plans, enumerate_preload_plans};
use crate::schedule::{
    compile_ops, schedule_with_order, CompiledOp, EndToEndPlan, EvalEnv, Timeline,
};
use crate::sim::{simulate, validate_trace, SimOptions, SimReport};
use crate::synth;
use crate::{Error, Result};

pub const SCHEDULE_FORMAT_VERSION: u32 = 1;

/// Cost-model selection: the built-in analytic model or a calibrated
/// model previously written by `fit-cost`.
#[derive(Debug, Clone, Default)]
pub enum CostMode {
    #[default]
    Analytic,
    Calibrated(PathBuf),
}

/// Hardware axes swept by `cmd_sweep`. Empty axes stay at the config's
/// base value.
#[derive(Debug, Clone, Default)]
pub struct SweepAxes {
    pub hbm_bandwidth: Vec<f64>,
    pub noc_bandwidth: Vec<f64>,
    pub num_cores: Vec<usize>,
}

impl SweepAxes {
    pub fn is_empty(&self) -> bool {
        self.hbm_bandwidth.is_empty() && self.noc_bandwidth.is_empty() && self.num_cores.is_empty()
    }
}

/// Everything one run needs. `model` is a file path or a `fixture:` URI
/// (`fixture:gpt-like-8`, `fixture:opt-30b`, `fixture:llama2-70b`,
/// `fixture:two-layer`, `fixture:random-{small,order,alloc,sim}`).
/// Random fixtures derive from `seed` and carry their own chip config,
/// which then takes precedence over `config`.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub model: String,
    pub config: String,
    pub scheduler: BaselineKind,
    pub cost: CostMode,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub sweep: SweepAxes,
    pub order_limit: usize,
    pub no_reorder: bool,
}

impl RunManifest {
    pub fn new(model: impl Into<String>, config: impl Into<String>) -> Self {
        RunManifest {
            model: model.into(),
            config: config.into(),
            scheduler: BaselineKind::ScaleFull,
            cost: CostMode::Analytic,
            seed: 0,
            out_dir: PathBuf::from("."),
            sweep: SweepAxes::default(),
            order_limit: 720,
            no_reorder: false,
        }
    }
}

fn resolve_fixture(name: &str, seed: u64) -> Result<(ModelGraph, Option<ChipConfig>)> {
    if let Some(n) = name.strip_prefix("gpt-like-") {
        let layers: usize = n
            .parse()
            .map_err(|_| Error::InvalidInput(format!("bad fixture layer count '{n}'")))?;
        if layers == 0 {
            return Err(Error::InvalidInput("fixture needs at least 1 layer".into()));
        }
        return Ok((synth::gpt_like(layers), None));
    }
    match name {
        "opt-30b" => Ok((synth::opt_30b_shaped(), None)),
        "llama2-70b" => Ok((synth::llama2_70b_shaped(), None)),
        "two-layer" => Ok((synth::two_layer_transformer(), None)),
        "random-small" => {
            let (g, cfg) = synth::random_small_case(&mut synth::seeded(seed));
            Ok((g, Some(cfg)))
        }
        "random-order" => {
            let (g, cfg) = synth::random_order_case(&mut synth::seeded(seed));
            Ok((g, Some(cfg)))
        }
        "random-alloc" => {
            let (g, cfg) = synth::random_alloc_case(&mut synth::seeded(seed));
            Ok((g, Some(cfg)))
        }
        "random-sim" => {
            let (g, cfg) = synth::random_sim_case(&mut synth::seeded(seed));
            Ok((g, Some(cfg)))
        }
        _ => Err(Error::InvalidInput(format!("unknown fixture '{name}'"))),
    }
}

/// Resolve the manifest into a loaded model, chip config and cost model.
pub fn load_inputs(m: &RunManifest) -> Result<(ModelGraph, ChipConfig, CostModel)> {
    let (model, fixture_cfg) = match m.model.strip_prefix("fixture:") {
        Some(name) => resolve_fixture(name, m.seed)?,
        None => (load_model(Path::new(&m.model))?, None),
    };
    let cfg = match fixture_cfg {
        Some(c) => c,
        None => load_config(&m.config)?,
    };
    let cm = match &m.cost {
        CostMode::Analytic => CostModel::analytic(),
        CostMode::Calibrated(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::io(path.display().to_string(), e))?;
            let model: CalibratedModel = toml::from_str(&text)
                .map_err(|e| Error::InvalidInput(format!("calibrated model parse: {e}")))?;
            CostModel::calibrated(model)
        }
    };
    Ok((model, cfg, cm))
}

// ── schedule files ───────────────────────────────────────────────────────

#[derive(Debug, Serialize, Deserialize)]
struct ScheduleStep {
    op: usize,
    target: usize,
    exec_option: usize,
    factors: Vec<u64>,
    preload_option: usize,
    chunk_factor: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ScheduleFile {
    format_version: u32,
    model: String,
    chip: String,
    scheduler: String,
    /// Operator indices (0-based) in preload order.
    sigma: Vec<usize>,
    step: Vec<ScheduleStep>,
}

/// Serialize a bound plan, spelling out the partition factors and preload
/// chunking inline so the file reads as a plan, not just as indices.
pub fn schedule_to_string(
    plan: &EndToEndPlan,
    model: &ModelGraph,
    cfg: &ChipConfig,
    scheduler: BaselineKind,
    ops: &[CompiledOp],
) -> Result<String> {
    let mut steps = Vec::with_capacity(model.operators.len());
    for (i, op) in model.operators.iter().enumerate() {
        let copt = &ops[i];
        let x = plan.exec_choice[i];
        let y = plan.preload_choice[i];
        let opt = &copt.options[x];
        let plans = enumerate_partition_plans(op, cfg)?;
        let pplan = &plans[opt.plan_ref];
        let pres = enumerate_preload_plans(pplan);
        let chunk = pres[opt.preloads[y].plan_ref].chunk_factor;
        steps.push(ScheduleStep {
            op: op.id,
            target: plan.targets[i],
            exec_option: x,
            factors: pplan.factors.clone(),
            preload_option: y,
            chunk_factor: chunk,
        });
    }
    let file = ScheduleFile {
        format_version: SCHEDULE_FORMAT_VERSION,
        model: model.name.clone(),
        chip: cfg.name.clone(),
        scheduler: scheduler.to_string(),
        sigma: plan.sigma.clone(),
        step: steps,
    };
    toml::to_string(&file).map_err(|e| Error::InvalidInput(format!("schedule serialize: {e}")))
}

/// Parse a schedule file against freshly compiled operators. Index ranges
/// and the inline factors are checked so a schedule cannot silently bind
/// to a different model or chip than it was produced for.
pub fn parse_schedule(
    text: &str,
    model: &ModelGraph,
    cfg: &ChipConfig,
    ops: &[CompiledOp],
) -> Result<EndToEndPlan> {
    let file: ScheduleFile =
        toml::from_str(text).map_err(|e| Error::InvalidInput(format!("schedule parse: {e}")))?;
    if file.format_version != SCHEDULE_FORMAT_VERSION {
        return Err(Error::FormatVersion {
            found: file.format_version,
            expected: SCHEDULE_FORMAT_VERSION,
        });
    }
    let n = model.operators.len();
    if file.step.len() != n || file.sigma.len() != n {
        return Err(Error::InvalidInput(format!(
            "schedule covers {} operators, model has {n}",
            file.step.len()
        )));
    }
    let mut seen = vec![false; n];
    for &s in &file.sigma {
        if s >= n || seen[s] {
            return Err(Error::InvalidInput("sigma is not a permutation".into()));
        }
        seen[s] = true;
    }
    let mut plan = EndToEndPlan {
        sigma: file.sigma,
        targets: Vec::with_capacity(n),
        exec_choice: Vec::with_capacity(n),
        preload_choice: Vec::with_capacity(n),
    };
    for (i, step) in file.step.iter().enumerate() {
        let op = &model.operators[i];
        if step.op != op.id {
            return Err(Error::InvalidInput(format!(
                "step {i} names operator {}, expected {}",
                step.op, op.id
            )));
        }
        let copt = &ops[i];
        let opt = copt.options.get(step.exec_option).ok_or_else(|| {
            Error::InvalidInput(format!("operator {}: exec_option out of range", op.id))
        })?;
        if opt.preloads.get(step.preload_option).is_none() {
            return Err(Error::InvalidInput(format!(
                "operator {}: preload_option out of range",
                op.id
            )));
        }
        let plans = enumerate_partition_plans(op, cfg)?;
        if plans[opt.plan_ref].factors != step.factors {
            return Err(Error::InvalidInput(format!(
                "operator {}: schedule factors {:?} do not match this model/config",
                op.id, step.factors
            )));
        }
        if step.target >= n {
            return Err(Error::InvalidInput(format!(
                "operator {}: target {} out of range",
                op.id, step.target
            )));
        }
        plan.targets.push(step.target);
        plan.exec_choice.push(step.exec_option);
        plan.preload_choice.push(step.preload_option);
    }
    Ok(plan)
}

// ── compile ──────────────────────────────────────────────────────────────

/// What `cmd_compile` writes next to the schedule. `wall_ms` is the one
/// non-deterministic field in any output file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompileReport {
    pub scheduler: String,
    pub analytic_makespan: f64,
    pub peak_sram_bytes: u64,
    pub candidate_orders: usize,
    pub alloc_calls: usize,
    pub repairs: usize,
    pub wall_ms: f64,
}

fn plan_for(
    kind: BaselineKind,
    model: &ModelGraph,
    ops: &[CompiledOp],
    env: &EvalEnv,
    order_limit: usize,
    no_reorder: bool,
) -> Result<(EndToEndPlan, Timeline, usize)> {
    let kind = match kind {
        BaselineKind::ScaleFull if no_reorder => BaselineKind::ScaleDynamic,
        k => k,
    };
    let orders = match kind {
        BaselineKind::ScaleFull => {
            let (_, _, stats) =
                crate::order::schedule_best_order(model, ops, env, order_limit)?;
            stats.orders_evaluated
        }
        _ => 1,
    };
    let (plan, timeline) = baseline_plan(kind, model, ops, env, order_limit)?;
    Ok((plan, timeline, orders))
}

pub fn cmd_compile(m: &RunManifest) -> Result<CompileReport> {
    if m.scheduler == BaselineKind::Ideal {
        return Err(Error::InvalidInput(
            "ideal is a bound, not a scheduler; use compare".into(),
        ));
    }
    let t0 = Instant::now();
    let (model, cfg, cm) = load_inputs(m)?;
    let ops = compile_ops(&model, &cfg, &cm)?;
    let env = EvalEnv::from_config(&cfg);
    let (plan, timeline, orders) =
        plan_for(m.scheduler, &model, &ops, &env, m.order_limit, m.no_reorder)?;
    // re-derive the allocator counters for the winning order
    let stats = match m.scheduler {
        BaselineKind::ScaleFull | BaselineKind::ScaleDynamic => {
            schedule_with_order(&ops, &plan.sigma, &env)?.2
        }
        _ => Default::default(),
    };

    std::fs::create_dir_all(&m.out_dir)
        .map_err(|e| Error::io(m.out_dir.display().to_string(), e))?;
    let text = schedule_to_string(&plan, &model, &cfg, m.scheduler, &ops)?;
    let spath = m.out_dir.join("schedule.toml");
    std::fs::write(&spath, text).map_err(|e| Error::io(spath.display().to_string(), e))?;

    let report = CompileReport {
        scheduler: m.scheduler.to_string(),
        analytic_makespan: timeline.makespan,
        peak_sram_bytes: timeline.peak_bytes,
        candidate_orders: orders,
        alloc_calls: stats.alloc_calls,
        repairs: stats.repairs,
        wall_ms: t0.elapsed().as_secs_f64() * 1e3,
    };
    let rpath = m.out_dir.join("compile_stats.toml");
    let rtext = toml::to_string(&report)
        .map_err(|e| Error::InvalidInput(format!("stats serialize: {e}")))?;
    std::fs::write(&rpath, rtext).map_err(|e| Error::io(rpath.display().to_string(), e))?;
    Ok(report)
}

// ── simulate / validate ──────────────────────────────────────────────────

pub fn cmd_simulate(m: &RunManifest, schedule: &Path) -> Result<SimReport> {
    let (model, cfg, cm) = load_inputs(m)?;
    let ops = compile_ops(&model, &cfg, &cm)?;
    let text = std::fs::read_to_string(schedule)
        .map_err(|e| Error::io(schedule.display().to_string(), e))?;
    let plan = parse_schedule(&text, &model, &cfg, &ops)?;
    let out = simulate(&plan, &model, &cfg, &cm, &SimOptions::default())?;
    std::fs::create_dir_all(&m.out_dir)
        .map_err(|e| Error::io(m.out_dir.display().to_string(), e))?;
    let rpath = m.out_dir.join("sim_report.toml");
    let rtext = toml::to_string(&out.report)
        .map_err(|e| Error::InvalidInput(format!("report serialize: {e}")))?;
    std::fs::write(&rpath, rtext).map_err(|e| Error::io(rpath.display().to_string(), e))?;
    Ok(out.report)
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidateReport {
    pub events: usize,
    pub total_time: f64,
}

/// Schedule with the manifest's scheduler, simulate with trace recording
/// and run the conservation/causality checks on the result.
pub fn cmd_validate(m: &RunManifest) -> Result<ValidateReport> {
    if m.scheduler == BaselineKind::Ideal {
        return Err(Error::InvalidInput("ideal produces no trace".into()));
    }
    let (model, cfg, cm) = load_inputs(m)?;
    let ops = compile_ops(&model, &cfg, &cm)?;
    let env = EvalEnv::from_config(&cfg);
    let (plan, _, _) = plan_for(m.scheduler, &model, &ops, &env, m.order_limit, m.no_reorder)?;
    let out = simulate(&plan, &model, &cfg, &cm, &SimOptions { record_trace: true })?;
    let trace = out.trace.as_ref().expect("trace requested");
    validate_trace(trace)?;
    Ok(ValidateReport {
        events: trace.events.len(),
        total_time: out.report.total_time,
    })
}

// ── compare / sweep ──────────────────────────────────────────────────────

const METRIC_COLUMNS: [&str; 14] = [
    "scheduler",
    "total_time",
    "preload_only",
    "execute_only",
    "overlapped",
    "interconnect_stall",
    "hbm_utilization",
    "interconnect_utilization_preload",
    "interconnect_utilization_intercore",
    "achieved_flop_rate",
    "peak_sram_bytes",
    "hbm_bytes",
    "preload_link_bytes",
    "intercore_bytes",
];

pub const COMPARE_SCHEDULERS: [BaselineKind; 5] = [
    BaselineKind::NaiveOverlap,
    BaselineKind::StaticPartition,
    BaselineKind::ScaleDynamic,
    BaselineKind::ScaleFull,
    BaselineKind::Ideal,
];

fn metric_cells(
    kind: BaselineKind,
    model: &ModelGraph,
    ops: &[CompiledOp],
    cfg: &ChipConfig,
    cm: &CostModel,
    order_limit: usize,
) -> Result<Vec<String>> {
    if kind == BaselineKind::Ideal {
        let bound = ideal_roofline(model, ops, cfg);
        let mut cells = vec![kind.to_string(), bound.to_string()];
        cells.extend(std::iter::repeat(String::new()).take(METRIC_COLUMNS.len() - 2));
        return Ok(cells);
    }
    let env = EvalEnv::from_config(cfg);
    let (plan, _) = baseline_plan(kind, model, ops, &env, order_limit)?;
    let r = simulate(&plan, model, cfg, cm, &SimOptions::default())?.report;
    Ok(vec![
        kind.to_string(),
        r.total_time.to_string(),
        r.breakdown.preload_only.to_string(),
        r.breakdown.execute_only.to_string(),
        r.breakdown.overlapped.to_string(),
        r.breakdown.interconnect_stall.to_string(),
        r.hbm_utilization.to_string(),
        r.interconnect_utilization_preload.to_string(),
        r.interconnect_utilization_intercore.to_string(),
        r.achieved_flop_rate.to_string(),
        r.peak_sram_bytes.to_string(),
        r.hbm_bytes.to_string(),
        r.preload_link_bytes.to_string(),
        r.intercore_bytes.to_string(),
    ])
}

fn write_csv(rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.write_record(row)
            .map_err(|e| Error::InvalidInput(format!("csv write: {e}")))?;
    }
    let buf = w
        .into_inner()
        .map_err(|e| Error::InvalidInput(format!("csv flush: {e}")))?;
    String::from_utf8(buf).map_err(|e| Error::InvalidInput(format!("csv utf8: {e}")))
}

/// One row per scheduler kind on the manifest's model and config. Returns
/// the CSV text and writes `compare.csv`.
pub fn cmd_compare(m: &RunManifest) -> Result<String> {
    let (model, cfg, cm) = load_inputs(m)?;
    let ops = compile_ops(&model, &cfg, &cm)?;
    let mut rows = vec![METRIC_COLUMNS.iter().map(|s| s.to_string()).collect::<Vec<_>>()];
    for kind in COMPARE_SCHEDULERS {
        rows.push(metric_cells(kind, &model, &ops, &cfg, &cm, m.order_limit)?);
    }
    let text = write_csv(&rows)?;
    std::fs::create_dir_all(&m.out_dir)
        .map_err(|e| Error::io(m.out_dir.display().to_string(), e))?;
    let path = m.out_dir.join("compare.csv");
    std::fs::write(&path, &text).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(text)
}

#[derive(Debug, Clone, Copy)]
struct SweepPoint {
    hbm: Option<f64>,
    noc: Option<f64>,
    cores: Option<usize>,
}

fn apply_point(base: &ChipConfig, p: SweepPoint) -> Result<ChipConfig> {
    let mut cfg = base.clone();
    if let Some(bw) = p.hbm {
        cfg.hbm.total_bandwidth = bw;
    }
    if let Some(bw) = p.noc {
        cfg.topology.per_core_link_bandwidth = bw;
    }
    if let Some(nc) = p.cores {
        if cfg.topology.kind == TopologyKind::Mesh2d {
            return Err(Error::InvalidConfig(
                "num_cores sweep needs explicit mesh dims; use an all-to-all config".into(),
            ));
        }
        cfg.num_cores = nc;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Cartesian sweep over the manifest axes x scheduler kinds, simulated in
/// a bounded worker pool (`ICCA_WORKERS`, default: all cores). Rows keep
/// axis order regardless of worker completion; per-point failures become
/// rows with the error column set and the run continues. Returns the CSV
/// text and writes `sweep.csv`.
pub fn cmd_sweep(m: &RunManifest) -> Result<String> {
    if m.sweep.is_empty() {
        return Err(Error::InvalidInput(
            "sweep needs at least one non-empty axis".into(),
        ));
    }
    let (model, base, cm) = load_inputs(m)?;

    let some_or_one = |v: &[f64]| -> Vec<Option<f64>> {
        if v.is_empty() {
            vec![None]
        } else {
            v.iter().copied().map(Some).collect()
        }
    };
    let cores_axis: Vec<Option<usize>> = if m.sweep.num_cores.is_empty() {
        vec![None]
    } else {
        m.sweep.num_cores.iter().copied().map(Some).collect()
    };
    let mut points = Vec::new();
    for &hbm in &some_or_one(&m.sweep.hbm_bandwidth) {
        for &noc in &some_or_one(&m.sweep.noc_bandwidth) {
            for &cores in &cores_axis {
                points.push(SweepPoint { hbm, noc, cores });
            }
        }
    }

    let workers = std::env::var("ICCA_WORKERS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidInput(format!("worker pool: {e}")))?;

    let point_rows = |p: SweepPoint| -> Vec<Vec<String>> {
        let axis_cells = |cfg: &ChipConfig| -> Vec<String> {
            vec![
                p.hbm.unwrap_or(base.hbm.total_bandwidth).to_string(),
                p.noc
                    .unwrap_or(base.topology.per_core_link_bandwidth)
                    .to_string(),
                p.cores.unwrap_or(cfg.num_cores).to_string(),
            ]
        };
        let error_rows = |e: &Error| -> Vec<Vec<String>> {
            COMPARE_SCHEDULERS
                .iter()
                .map(|kind| {
                    let mut row = axis_cells(&base);
                    row.push(kind.to_string());
                    row.extend(std::iter::repeat(String::new()).take(METRIC_COLUMNS.len() - 1));
                    row.push(e.to_string());
                    row
                })
                .collect()
        };
        let cfg = match apply_point(&base, p) {
            Ok(c) => c,
            Err(e) => return error_rows(&e),
        };
        let ops = match compile_ops(&model, &cfg, &cm) {
            Ok(o) => o,
            Err(e) => return error_rows(&e),
        };
        COMPARE_SCHEDULERS
            .iter()
            .map(|&kind| {
                let mut row = axis_cells(&cfg);
                match metric_cells(kind, &model, &ops, &cfg, &cm, m.order_limit) {
                    Ok(cells) => {
                        row.extend(cells);
                        row.push(String::new());
                    }
                    Err(e) => {
                        row.push(kind.to_string());
                        row.extend(
                            std::iter::repeat(String::new()).take(METRIC_COLUMNS.len() - 1),
                        );
                        row.push(e.to_string());
                    }
                }
                row
            })
            .collect()
    };

    let results: Vec<Vec<Vec<String>>> = pool.install(|| {
        use rayon::prelude::*;
        points.par_iter().map(|&p| point_rows(p)).collect()
    });

    let mut header = vec![
        "hbm_bandwidth".to_string(),
        "noc_bandwidth".to_string(),
        "num_cores".to_string(),
    ];
    header.extend(METRIC_COLUMNS.iter().map(|s| s.to_string()));
    header.push("error".to_string());
    let mut rows = vec![header];
    rows.extend(results.into_iter().flatten());

    let text = write_csv(&rows)?;
    std::fs::create_dir_all(&m.out_dir)
        .map_err(|e| Error::io(m.out_dir.display().to_string(), e))?;
    let path = m.out_dir.join("sweep.csv");
    std::fs::write(&path, &text).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(text)
}

// ── cost-model calibration ───────────────────────────────────────────────

/// Per-curve worst relative error of a calibration, over its own samples.
#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub compute_errors: BTreeMap<String, f64>,
    pub transfer_error: Option<f64>,
}

/// Fit a calibrated cost model from a sample CSV with columns
/// `kind,op_type,x,seconds`: `compute` rows carry an operator type and
/// tile FLOPs in `x`, `transfer` rows leave `op_type` empty and put the
/// flow volume in bytes in `x`. Writes the model as TOML to `out`.
pub fn cmd_fit_cost(samples: &Path, out: &Path) -> Result<FitReport> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(samples)
        .map_err(|e| Error::InvalidInput(format!("samples csv: {e}")))?;
    let headers = rdr
        .headers()
        .map_err(|e| Error::InvalidInput(format!("samples csv: {e}")))?;
    let expect = ["kind", "op_type", "x", "seconds"];
    if headers.iter().collect::<Vec<_>>() != expect {
        return Err(Error::InvalidInput(format!(
            "samples header must be {}",
            expect.join(",")
        )));
    }
    let mut compute = Vec::new();
    let mut transfer = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::InvalidInput(format!("samples csv: {e}")))?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let x: f64 = field(2)
            .parse()
            .map_err(|_| Error::InvalidInput(format!("row {}: bad x", line + 2)))?;
        let seconds: f64 = field(3)
            .parse()
            .map_err(|_| Error::InvalidInput(format!("row {}: bad seconds", line + 2)))?;
        match field(0) {
            "compute" => {
                if field(1).is_empty() {
                    return Err(Error::InvalidInput(format!(
                        "row {}: compute sample needs op_type",
                        line + 2
                    )));
                }
                compute.push(ComputeSample {
                    op_type: field(1).to_string(),
                    feature: x,
                    seconds,
                });
            }
            "transfer" => transfer.push(TransferSample {
                volume_bytes: x,
                seconds,
            }),
            other => {
                return Err(Error::InvalidInput(format!(
                    "row {}: unknown kind '{other}'",
                    line + 2
                )))
            }
        }
    }
    let model = fit_calibrated(&compute, &transfer)?;

    let mut report = FitReport {
        compute_errors: BTreeMap::new(),
        transfer_error: None,
    };
    for (key, pwl) in &model.compute {
        let pts: Vec<(f64, f64)> = compute
            .iter()
            .filter(|s| &s.op_type == key)
            .map(|s| (s.feature, s.seconds))
            .collect();
        report.compute_errors.insert(key.clone(), max_rel_error(pwl, &pts));
    }
    if let Some(pwl) = &model.transfer {
        let pts: Vec<(f64, f64)> = transfer.iter().map(|s| (s.volume_bytes, s.seconds)).collect();
        report.transfer_error = Some(max_rel_error(pwl, &pts));
    }

    let text = toml::to_string(&model)
        .map_err(|e| Error::InvalidInput(format!("model serialize: {e}")))?;
    if let Some(dir) = out.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        }
    }
    std::fs::write(out, text).map_err(|e| Error::io(out.display().to_string(), e))?;
    Ok(report)
}
