//! Reference schedulers for ablation. NaiveOverlap maximizes execution
//! space and spends whatever is left preloading one operator ahead.
//! StaticPartition grid-searches a single global split of SRAM into
//! execution and preload regions and fills the preload region greedily in
//! operator order. The ideal roofline relaxes every resource constraint
//! except data dependencies and the aggregate HBM bandwidth, giving an
//! unachievable lower bound. ScaleDynamic and ScaleFull are the full
//! pipeline with and without preload reordering.
//!
//! All baselines share the compiled per-operator curves, so differences in
//! end-to-end time come from scheduling policy alone, not from different
//! plan enumerations or cost models.

use std::fmt;
use std::str::FromStr;

use crate::hw::ChipConfig;
use crate::model::ModelGraph;
use crate::order::schedule_best_order;
use crate::schedule::{evaluate_timeline, schedule_model, CompiledOp, EndToEndPlan, EvalEnv, Timeline};
use crate::{Error, Result};

/// Grid resolution for `static_partition`: the SRAM split is searched over
/// this many evenly spaced execution-space fractions.
pub const STATIC_SPLIT_GRID: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    NaiveOverlap,
    StaticPartition,
    /// Full pipeline with preload reordering disabled.
    ScaleDynamic,
    /// Full pipeline.
    ScaleFull,
    Ideal,
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BaselineKind::NaiveOverlap => "naive",
            BaselineKind::StaticPartition => "static",
            BaselineKind::ScaleDynamic => "dynamic",
            BaselineKind::ScaleFull => "full",
            BaselineKind::Ideal => "ideal",
        };
        f.write_str(s)
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(BaselineKind::NaiveOverlap),
            "static" => Ok(BaselineKind::StaticPartition),
            "dynamic" => Ok(BaselineKind::ScaleDynamic),
            "full" => Ok(BaselineKind::ScaleFull),
            "ideal" => Ok(BaselineKind::Ideal),
            other => Err(Error::InvalidInput(format!(
                "unknown scheduler '{other}' (expected naive|static|dynamic|full|ideal)"
            ))),
        }
    }
}

/// Per operator: the fastest execute plan, plus one operator of lookahead
/// preloaded into whatever space the execute state leaves free. When the
/// next operator's smallest preload point does not fit the leftover, that
/// operator preloads serially before its own window.
pub fn naive_overlap(ops: &[CompiledOp], env: &EvalEnv) -> Result<(EndToEndPlan, Timeline)> {
    let n = ops.len();
    if n == 0 {
        return Err(Error::EmptyModel);
    }
    let mut exec_choice = Vec::with_capacity(n);
    let mut preload_choice = Vec::with_capacity(n);
    for op in ops {
        let x = op.exec_curve.fastest().index;
        exec_choice.push(x);
        // overwritten below when the operator is preloaded one window early
        preload_choice.push(op.options[x].preload_curve.fastest().index);
    }

    let mut targets = vec![0usize; n];
    for i in 0..n {
        targets[i] = i;
        if i + 1 < n {
            let leftover = env.capacity - ops[i].options[exec_choice[i]].exec_mem;
            let curve = &ops[i + 1].options[exec_choice[i + 1]].preload_curve;
            // points run memory-descending, so the first fit is the fastest
            if let Some(p) = curve.points.iter().find(|p| p.memory_bytes <= leftover) {
                preload_choice[i + 1] = p.index;
                targets[i] = i + 1;
            }
        }
    }

    let plan = EndToEndPlan {
        sigma: (0..n).collect(),
        targets,
        exec_choice,
        preload_choice,
    };
    let timeline = evaluate_timeline(&plan, ops, env)?;
    Ok((plan, timeline))
}

/// Grid-search one global (execution space, preload space) split. Within a
/// split every operator takes its fastest plan fitting the execution
/// region, and upcoming operators are preloaded in order while their
/// footprints fit the preload region. Preload states are either all the
/// largest-footprint point or all the smallest; the faster variant wins.
pub fn static_partition(ops: &[CompiledOp], env: &EvalEnv) -> Result<(EndToEndPlan, Timeline)> {
    static_partition_with_grid(ops, env, STATIC_SPLIT_GRID)
}

pub fn static_partition_with_grid(
    ops: &[CompiledOp],
    env: &EvalEnv,
    grid: usize,
) -> Result<(EndToEndPlan, Timeline)> {
    let n = ops.len();
    if n == 0 {
        return Err(Error::EmptyModel);
    }
    let mut best: Option<(f64, EndToEndPlan, Timeline)> = None;

    for k in 1..=grid {
        let exec_cap = env.capacity / grid as u64 * k as u64;
        let pre_cap = env.capacity - exec_cap;

        let mut exec_choice = Vec::with_capacity(n);
        for op in ops {
            match op.exec_curve.points.iter().find(|p| p.memory_bytes <= exec_cap) {
                Some(p) => exec_choice.push(p.index),
                None => break,
            }
        }
        if exec_choice.len() < n {
            continue;
        }

        for largest in [true, false] {
            let preload_choice: Vec<usize> = ops
                .iter()
                .zip(&exec_choice)
                .map(|(op, &x)| {
                    let curve = &op.options[x].preload_curve;
                    if largest { curve.fastest().index } else { curve.smallest().index }
                })
                .collect();
            let pre_mem =
                |j: usize| ops[j].options[exec_choice[j]].preloads[preload_choice[j]].pre_mem;

            // slide the preloaded prefix: resident = sum of pre_mem over
            // (i, t], operators at or before i have released theirs
            let mut targets = vec![0usize; n];
            let mut t = 0usize;
            let mut resident = 0u64;
            for i in 0..n {
                if t < i {
                    t = i;
                    resident = 0;
                } else if i > 0 {
                    resident -= pre_mem(i);
                }
                while t + 1 < n && resident + pre_mem(t + 1) <= pre_cap {
                    t += 1;
                    resident += pre_mem(t);
                }
                targets[i] = t;
            }

            let plan = EndToEndPlan {
                sigma: (0..n).collect(),
                targets,
                exec_choice: exec_choice.clone(),
                preload_choice,
            };
            let Ok(timeline) = evaluate_timeline(&plan, ops, env) else { continue };
            if best.as_ref().is_none_or(|(m, _, _)| timeline.makespan < *m) {
                best = Some((timeline.makespan, plan, timeline));
            }
        }
    }

    match best {
        Some((_, plan, timeline)) => Ok((plan, timeline)),
        None => Err(Error::ScheduleInfeasible(
            "no static split admits every operator".into(),
        )),
    }
}

/// Unachievable lower bound: every operator uses its fastest execute plan
/// with zero distribution latency, the preload stream runs at full HBM
/// bandwidth with no capacity or interconnect limits, and execution waits
/// only for the previous operator and its own preload.
pub fn ideal_roofline(model: &ModelGraph, ops: &[CompiledOp], cfg: &ChipConfig) -> f64 {
    let bw = cfg.hbm.total_bandwidth;
    let mut pre_cum = 0.0f64;
    let mut exe_end = 0.0f64;
    for (op, compiled) in model.operators.iter().zip(ops) {
        pre_cum += op.hbm_load_bytes as f64 / bw;
        exe_end = exe_end.max(pre_cum) + compiled.exec_curve.fastest().time_seconds;
    }
    exe_end
}

/// Produce the end-to-end plan of a plan-generating baseline. `Ideal` is a
/// bound, not a plan; request it via `ideal_roofline`.
pub fn baseline_plan(
    kind: BaselineKind,
    model: &ModelGraph,
    ops: &[CompiledOp],
    env: &EvalEnv,
    order_limit: usize,
) -> Result<(EndToEndPlan, Timeline)> {
    match kind {
        BaselineKind::NaiveOverlap => naive_overlap(ops, env),
        BaselineKind::StaticPartition => static_partition(ops, env),
        BaselineKind::ScaleDynamic => {
            let (plan, timeline, _) = schedule_model(ops, env)?;
            Ok((plan, timeline))
        }
        BaselineKind::ScaleFull => {
            let (plan, timeline, _) = schedule_best_order(model, ops, env, order_limit)?;
            Ok((plan, timeline))
        }
        BaselineKind::Ideal => Err(Error::InvalidInput(
            "ideal is a bound, not a plan; use ideal_roofline".into(),
        )),
    }
}
