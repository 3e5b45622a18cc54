//! End-to-end scheduling: forward timeline evaluation (the ground truth
//! for every reported makespan) and the backward-induction scheduler that
//! chooses, per operator, how deep to preload ahead and which plan points
//! to hold.
//!
//! Operators execute in model order. A preload order sigma (a permutation
//! of operator indices) fixes the sequence in which HBM preloads are
//! issued. Per executed operator i the plan commits a target: the highest
//! sigma position whose preload may be in flight or resident while i
//! executes. Targets are monotone non-decreasing and at least the position
//! of every operator executed so far, so nothing executes before it is
//! preloaded.

use crate::alloc::{allocate, AllocMember, AllocationProblem};
use crate::cost::CostModel;
use crate::hw::{ChipConfig, SramContention};
use crate::model::ModelGraph;
use crate::plans::{enumerate_partition_plans, enumerate_preload_plans, pareto_frontier, ParetoCurve, ParetoPoint};
use crate::{Error, Result};

/// One preload state of one partition plan, reduced to the numbers the
/// scheduler needs. `plan_ref` is the preload-plan id inside the partition
/// plan's enumeration.
#[derive(Debug, Clone, PartialEq)]
pub struct PreloadOption {
    pub pre_mem: u64,
    pub dist_time: f64,
    pub pre_duration: f64,
    pub plan_ref: usize,
}

/// One partition plan of one operator, with its preload alternatives.
/// `plan_ref` is the partition-plan id from the enumeration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExecOption {
    pub exec_mem: u64,
    pub exec_time: f64,
    pub preloads: Vec<PreloadOption>,
    /// Frontier over `preloads` (memory = preload footprint, time =
    /// distribution cost); point indices refer into `preloads`.
    pub preload_curve: ParetoCurve,
    pub plan_ref: usize,
}

/// All compiled alternatives of one operator. `exec_curve` point indices
/// refer into `options`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledOp {
    pub options: Vec<ExecOption>,
    pub exec_curve: ParetoCurve,
}

impl CompiledOp {
    /// Smallest preload footprint over every option (static feasibility).
    pub fn min_preload_mem(&self) -> u64 {
        self.options
            .iter()
            .map(|o| o.preload_curve.smallest().memory_bytes)
            .min()
            .unwrap_or(0)
    }

    pub fn min_exec_mem(&self) -> u64 {
        self.exec_curve.smallest().memory_bytes
    }
}

/// Compile one operator: enumerate partition plans, preload states and
/// build both curve levels.
pub fn compile_op(
    op: &crate::model::OperatorSpec,
    cfg: &ChipConfig,
    cm: &CostModel,
) -> Result<CompiledOp> {
    let plans = enumerate_partition_plans(op, cfg)?;
    let mut options = Vec::with_capacity(plans.len());
    for plan in &plans {
        let pres = enumerate_preload_plans(plan);
        let preloads: Vec<PreloadOption> = pres
            .iter()
            .map(|p| PreloadOption {
                pre_mem: p.preload_space_per_core,
                dist_time: cm.distribution_time(plan, p, cfg),
                pre_duration: cm.preload_time(plan, p, cfg),
                plan_ref: p.id,
            })
            .collect();
        let pts: Vec<ParetoPoint> = preloads
            .iter()
            .enumerate()
            .map(|(i, p)| ParetoPoint {
                memory_bytes: p.pre_mem,
                time_seconds: p.dist_time,
                index: i,
            })
            .collect();
        options.push(ExecOption {
            exec_mem: plan.exec_space_per_core,
            exec_time: cm.execution_time(op, plan, cfg),
            preloads,
            preload_curve: pareto_frontier(&pts),
            plan_ref: plan.id,
        });
    }
    let pts: Vec<ParetoPoint> = options
        .iter()
        .enumerate()
        .map(|(i, o)| ParetoPoint {
            memory_bytes: o.exec_mem,
            time_seconds: o.exec_time,
            index: i,
        })
        .collect();
    Ok(CompiledOp { options, exec_curve: pareto_frontier(&pts) })
}

/// Compile every operator of a model.
pub fn compile_ops(model: &ModelGraph, cfg: &ChipConfig, cm: &CostModel) -> Result<Vec<CompiledOp>> {
    use rayon::prelude::*;
    model
        .operators
        .par_iter()
        .map(|op| compile_op(op, cfg, cm))
        .collect()
}

/// A fully bound end-to-end plan: preload order, per-operator targets and
/// the chosen option/preload indices.
#[derive(Debug, Clone, PartialEq)]
pub struct EndToEndPlan {
    /// Operator indices in preload order.
    pub sigma: Vec<usize>,
    /// Per executed operator: highest sigma position preloading or
    /// resident during its window.
    pub targets: Vec<usize>,
    /// Per operator: index into `CompiledOp::options`.
    pub exec_choice: Vec<usize>,
    /// Per operator: index into the chosen option's `preloads`.
    pub preload_choice: Vec<usize>,
}

/// Forward-resolved times, one entry per operator (execution order).
#[derive(Debug, Clone, PartialEq)]
pub struct Timeline {
    pub pre_start: Vec<f64>,
    pub pre_end: Vec<f64>,
    pub exe_start: Vec<f64>,
    pub exe_end: Vec<f64>,
    pub makespan: f64,
    pub peak_bytes: u64,
}

/// Capacity/contention environment for timeline evaluation.
#[derive(Debug, Clone, Copy)]
pub struct EvalEnv {
    pub capacity: u64,
    pub link_bandwidth: f64,
    pub blocking: bool,
}

impl EvalEnv {
    pub fn from_config(cfg: &ChipConfig) -> Self {
        EvalEnv {
            capacity: cfg.usable_sram_per_core(),
            link_bandwidth: cfg.topology.per_core_link_bandwidth,
            blocking: cfg.sram_contention == SramContention::Blocking,
        }
    }
}

/// Forward ASAP evaluation of a bound plan. Preloads issue sequentially in
/// sigma order, gated per executed operator by the running maximum of the
/// committed targets (non-monotone target vectors are thereby normalized);
/// a batch issued for window i cannot start before window i-1 ended.
/// Execution i starts once the previous execution ended and its own
/// preload completed; under blocking SRAM contention a preload only counts
/// as complete once the receiving core has served the inbound bytes, so
/// the gate extends by pre_mem over the link bandwidth. The window length
/// is its distribution plus compute plus the contention and blocking terms
/// of the operators then resident.
/// Memory occupancy is checked across the whole timeline: preload
/// footprints are held from preload start until execution start, execute
/// footprints during execution.
pub fn evaluate_timeline(plan: &EndToEndPlan, ops: &[CompiledOp], env: &EvalEnv) -> Result<Timeline> {
    let n = ops.len();
    if plan.sigma.len() != n
        || plan.targets.len() != n
        || plan.exec_choice.len() != n
        || plan.preload_choice.len() != n
    {
        return Err(Error::ScheduleInfeasible("plan arity mismatch".into()));
    }
    let mut pos = vec![0usize; n];
    for (q, &j) in plan.sigma.iter().enumerate() {
        pos[j] = q;
    }

    let exec_mem = |j: usize| ops[j].options[plan.exec_choice[j]].exec_mem;
    let exec_time = |j: usize| ops[j].options[plan.exec_choice[j]].exec_time;
    let pre = |j: usize| &ops[j].options[plan.exec_choice[j]].preloads[plan.preload_choice[j]];

    let mut pre_start = vec![0.0f64; n];
    let mut pre_end = vec![0.0f64; n];
    let mut exe_start = vec![0.0f64; n];
    let mut exe_end = vec![0.0f64; n];
    let mut issued = vec![false; n];

    let mut run_tgt = 0usize;
    let mut q_next = 0usize;
    let mut pre_clock = 0.0f64;
    let mut prev_exe_end = 0.0f64;

    for i in 0..n {
        run_tgt = run_tgt.max(plan.targets[i]).max(pos[i]);
        pre_clock = pre_clock.max(prev_exe_end);
        while q_next <= run_tgt {
            let j = plan.sigma[q_next];
            pre_start[j] = pre_clock;
            pre_clock += pre(j).pre_duration;
            pre_end[j] = pre_clock;
            issued[j] = true;
            q_next += 1;
        }

        let serve = if env.blocking {
            pre(i).pre_mem as f64 / env.link_bandwidth
        } else {
            0.0
        };
        exe_start[i] = prev_exe_end.max(pre_end[i] + serve);

        // residents: issued, not yet executed, other than i
        let mut pre_sum = 0u64;
        let mut pre_max = 0u64;
        for j in (i + 1)..n {
            if issued[j] {
                let m = pre(j).pre_mem;
                pre_sum += m;
                pre_max = pre_max.max(m);
            }
        }
        let contention = (pre_sum - pre_max) as f64 / env.link_bandwidth;
        let blocking = if env.blocking {
            pre_sum as f64 / env.link_bandwidth
        } else {
            0.0
        };
        let window = pre(i).dist_time + exec_time(i) + contention + blocking;
        exe_end[i] = exe_start[i] + window;
        prev_exe_end = exe_end[i];
    }

    // occupancy sweep: (time, delta); releases before acquires at ties
    let mut events: Vec<(f64, i8, i64)> = Vec::with_capacity(4 * n);
    for j in 0..n {
        let pm = pre(j).pre_mem as i64;
        if pm > 0 {
            events.push((pre_start[j], 1, pm));
            events.push((exe_start[j], 0, -pm));
        }
        let em = exec_mem(j) as i64;
        if em > 0 {
            events.push((exe_start[j], 1, em));
            events.push((exe_end[j], 0, -em));
        }
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut occ = 0i64;
    let mut peak = 0i64;
    for (t, _, d) in events {
        occ += d;
        peak = peak.max(occ);
        if occ > 0 && occ as u64 > env.capacity {
            return Err(Error::MemoryOverflow {
                time: t,
                occupancy: occ as u64,
                capacity: env.capacity,
            });
        }
    }

    Ok(Timeline {
        makespan: exe_end[n - 1],
        pre_start,
        pre_end,
        exe_start,
        exe_end,
        peak_bytes: peak as u64,
    })
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ScheduleStats {
    pub alloc_calls: usize,
    pub repairs: usize,
    pub candidate_targets: usize,
}

/// Backward-induction scheduler for a fixed preload order. Walks the
/// execution order from the last operator to the first; per step it scans
/// the admissible targets (monotone, at least every executed operator's
/// position, statically memory-feasible), solves the window allocation for
/// each and keeps the target that lets the window start latest. Window
/// allocations overwrite the preload selections of their residents, so the
/// earliest window holding an operator (where its preload begins) makes
/// the binding choice. The committed plan is then resolved forward; if the
/// mixed bindings overflow memory, a repair pass steps the largest
/// contributor down its curve until the plan fits.
pub fn schedule_with_order(
    ops: &[CompiledOp],
    sigma: &[usize],
    env: &EvalEnv,
) -> Result<(EndToEndPlan, Timeline, ScheduleStats)> {
    let n = ops.len();
    if n == 0 {
        return Err(Error::EmptyModel);
    }
    if sigma.len() != n {
        return Err(Error::ScheduleInfeasible("sigma arity mismatch".into()));
    }
    let mut pos = vec![0usize; n];
    for (q, &j) in sigma.iter().enumerate() {
        pos[j] = q;
    }
    // prefix_max_pos[i] = max sigma position over operators executed <= i
    let mut prefix_max_pos = vec![0usize; n];
    let mut run = 0usize;
    for i in 0..n {
        run = run.max(pos[i]);
        prefix_max_pos[i] = run;
    }

    let mut stats = ScheduleStats::default();

    // working selections: exec choice fixed at the op's own step, preload
    // choice overwritten by every window holding the op (earliest wins)
    let mut exec_choice = vec![usize::MAX; n];
    let mut preload_choice = vec![0usize; n];
    let mut targets = vec![0usize; n];
    let mut t_s_exe = vec![f64::NEG_INFINITY; n];
    // pinned ALAP preload start per sigma position (positions beyond the
    // committed target of the step below)
    let mut pin_start = vec![f64::INFINITY; n + 1];

    let pre_duration = |j: usize, xc: &[usize], yc: &[usize]| -> f64 {
        let x = if xc[j] == usize::MAX {
            // exec plan not committed yet: fastest exec point
            ops[j].exec_curve.fastest().index
        } else {
            xc[j]
        };
        let p = &ops[j].options[x].preloads[yc[j].min(ops[j].options[x].preloads.len() - 1)];
        let serve = if env.blocking {
            p.pre_mem as f64 / env.link_bandwidth
        } else {
            0.0
        };
        p.pre_duration + serve
    };

    let mut t_hi = n.saturating_sub(1); // committed target of step i+1
    let mut t_s_exe_next = f64::INFINITY;

    for i in (0..n).rev() {
        let q_min = prefix_max_pos[i];
        if i == n - 1 {
            t_hi = n - 1;
        }

        // static feasibility: smallest preload footprints of the would-be
        // residents plus the executing op's smallest execute footprint
        let mut max_t = q_min;
        {
            let mut sum: u64 = 0;
            for q in 0..=t_hi {
                let j = sigma[q];
                if j > i {
                    sum += ops[j].min_preload_mem();
                }
                if q >= q_min {
                    if sum + ops[i].min_exec_mem() <= env.capacity {
                        max_t = q;
                    } else {
                        break;
                    }
                }
            }
        }

        // ALAP preload chain over (q_min, t_hi]: chain_start[q] = start of
        // sigma[q]'s preload given everything after it
        let mut chain_start = vec![f64::INFINITY; t_hi + 2];
        chain_start[t_hi + 1] = pin_start[t_hi + 1];
        for q in (q_min + 1..=t_hi).rev() {
            let j = sigma[q];
            let exec_anchor = if j > i { t_s_exe[j] } else { f64::INFINITY };
            let e = exec_anchor.min(chain_start[q + 1]);
            let d = pre_duration(j, &exec_choice, &preload_choice);
            chain_start[q] = if e.is_finite() { e - d } else { f64::INFINITY };
        }

        // candidate targets: both bounds plus every position adding a
        // resident with a real footprint or a real choice
        let mut cands: Vec<usize> = Vec::new();
        for t in q_min..=max_t {
            let j = sigma[t];
            let marginal = j > i
                && (ops[j].min_preload_mem() > 0
                    || ops[j]
                        .options
                        .iter()
                        .any(|o| o.preload_curve.len() > 1 || o.preload_curve.fastest().memory_bytes > 0));
            if t == q_min || t == max_t || marginal {
                cands.push(t);
            }
        }
        stats.candidate_targets += cands.len();

        let mut best: Option<(f64, usize, crate::alloc::AllocationSolution, Vec<usize>)> = None;
        for &t in &cands {
            // residents: sigma positions <= t, not yet executed
            let mut resident_ops: Vec<usize> = (0..=t)
                .map(|q| sigma[q])
                .filter(|&j| j > i)
                .collect();
            resident_ops.sort_unstable();

            let problem = AllocationProblem {
                executing: AllocMember { op_id: i, curve: ops[i].exec_curve.clone() },
                residents: resident_ops
                    .iter()
                    .map(|&j| {
                        let x = if exec_choice[j] == usize::MAX {
                            ops[j].exec_curve.fastest().index
                        } else {
                            exec_choice[j]
                        };
                        AllocMember { op_id: j, curve: ops[j].options[x].preload_curve.clone() }
                    })
                    .collect(),
                capacity: env.capacity,
                link_bandwidth: env.link_bandwidth,
                blocking: env.blocking,
            };
            stats.alloc_calls += 1;
            let sol = match allocate(&problem) {
                Ok(s) => s,
                Err(_) => continue,
            };

            // window length: own distribution estimate (fastest preload
            // point of the chosen option), compute, contention, blocking
            let xopt = ops[i].exec_curve.points[sol.exec_point].index;
            let own_dist = ops[i].options[xopt].preload_curve.fastest().time_seconds;
            let mut pre_sum = 0u64;
            let mut pre_max = 0u64;
            for (ridx, &j) in resident_ops.iter().enumerate() {
                let x = if exec_choice[j] == usize::MAX {
                    ops[j].exec_curve.fastest().index
                } else {
                    exec_choice[j]
                };
                let pt = ops[j].options[x].preload_curve.points[sol.resident_points[ridx]];
                pre_sum += pt.memory_bytes;
                pre_max = pre_max.max(pt.memory_bytes);
            }
            let contention = (pre_sum - pre_max) as f64 / env.link_bandwidth;
            let blocking = if env.blocking {
                pre_sum as f64 / env.link_bandwidth
            } else {
                0.0
            };
            let window = own_dist + ops[i].options[xopt].exec_time + contention + blocking;

            let t_e = if i == n - 1 {
                0.0
            } else {
                t_s_exe_next.min(chain_start[t + 1])
            };
            let t_s = t_e - window;
            let better = match &best {
                None => true,
                Some((bs, bt, _, _)) => t_s > *bs || (t_s == *bs && t < *bt),
            };
            if better {
                best = Some((t_s, t, sol, resident_ops));
            }
        }

        let (t_s, t, sol, resident_ops) = best.ok_or_else(|| {
            Error::ScheduleInfeasible(format!(
                "no feasible window for operator {i}: residents up to position {q_min} exceed capacity"
            ))
        })?;

        // commit
        targets[i] = t;
        t_s_exe[i] = t_s;
        exec_choice[i] = ops[i].exec_curve.points[sol.exec_point].index;
        for (ridx, &j) in resident_ops.iter().enumerate() {
            let x = if exec_choice[j] == usize::MAX {
                ops[j].exec_curve.fastest().index
            } else {
                exec_choice[j]
            };
            let curve = &ops[j].options[x].preload_curve;
            preload_choice[j] = curve.points[sol.resident_points[ridx]].index;
        }
        // pin the preload chain for positions now beyond this window
        for q in (t + 1..=t_hi).rev() {
            let j = sigma[q];
            let exec_anchor = if j > i { t_s_exe[j] } else { f64::INFINITY };
            let e = exec_anchor.min(pin_start[q + 1]);
            let d = pre_duration(j, &exec_choice, &preload_choice);
            pin_start[q] = if e.is_finite() { e - d } else { f64::INFINITY };
        }
        t_hi = t;
        t_s_exe_next = t_s;
    }

    // operators never bound by any window keep their fastest preload point
    for j in 0..n {
        if exec_choice[j] == usize::MAX {
            exec_choice[j] = ops[j].exec_curve.fastest().index;
        }
        let plen = ops[j].options[exec_choice[j]].preloads.len();
        if preload_choice[j] >= plen {
            preload_choice[j] = ops[j].options[exec_choice[j]].preload_curve.fastest().index;
        }
    }

    let mut plan = EndToEndPlan {
        sigma: sigma.to_vec(),
        targets,
        exec_choice,
        preload_choice,
    };

    // forward resolution is the ground truth; repair mixed bindings that
    // overflow by stepping the largest contributor down its curve
    let timeline = loop {
        match evaluate_timeline(&plan, ops, env) {
            Ok(t) => break t,
            Err(Error::MemoryOverflow { time, .. }) => {
                stats.repairs += 1;
                if stats.repairs > 4 * total_curve_points(ops) {
                    return Err(Error::ScheduleInfeasible(
                        "repair pass did not converge".into(),
                    ));
                }
                if !repair_step(&mut plan, ops, env, time)? {
                    return Err(Error::ScheduleInfeasible(
                        "memory overflow with no remaining downgrade".into(),
                    ));
                }
            }
            Err(e) => return Err(e),
        }
    };

    Ok((plan, timeline, stats))
}

fn total_curve_points(ops: &[CompiledOp]) -> usize {
    ops.iter()
        .map(|o| o.exec_curve.len() + o.options.iter().map(|x| x.preload_curve.len()).sum::<usize>())
        .sum()
}

/// One repair move: at the overflow instant, step the resident with the
/// largest preload footprint down its curve, or failing that the executing
/// operator down its execute curve. Returns false when nothing can move.
fn repair_step(
    plan: &mut EndToEndPlan,
    ops: &[CompiledOp],
    env: &EvalEnv,
    over_time: f64,
) -> Result<bool> {
    // recompute times without the occupancy check to locate the residents
    let n = ops.len();
    let relaxed = EvalEnv { capacity: u64::MAX, ..*env };
    let t = evaluate_timeline(plan, ops, &relaxed)?;

    // resident at the overflow instant: preload started, execution not yet
    let mut worst: Option<(u64, usize)> = None;
    for j in 0..n {
        let x = plan.exec_choice[j];
        let opt = &ops[j].options[x];
        if t.pre_start[j] <= over_time && over_time < t.exe_start[j] {
            let curve = &opt.preload_curve;
            let cur_mem = opt.preloads[plan.preload_choice[j]].pre_mem;
            let cur_pos = curve
                .points
                .iter()
                .position(|p| p.index == plan.preload_choice[j]);
            if let Some(cp) = cur_pos {
                if cp + 1 < curve.len() && worst.map_or(true, |(m, _)| cur_mem > m) {
                    worst = Some((cur_mem, j));
                }
            }
        }
    }
    if let Some((_, j)) = worst {
        let x = plan.exec_choice[j];
        let curve = &ops[j].options[x].preload_curve;
        let cp = curve
            .points
            .iter()
            .position(|p| p.index == plan.preload_choice[j])
            .expect("checked above");
        plan.preload_choice[j] = curve.points[cp + 1].index;
        return Ok(true);
    }

    // no resident can shrink: downgrade the executing operator
    for i in 0..n {
        if t.exe_start[i] <= over_time && over_time < t.exe_end[i] {
            let curve = &ops[i].exec_curve;
            let cp = curve.points.iter().position(|p| p.index == plan.exec_choice[i]);
            if let Some(cp) = cp {
                if cp + 1 < curve.len() {
                    plan.exec_choice[i] = curve.points[cp + 1].index;
                    // remap the preload choice onto the new option
                    let opt = &ops[i].options[plan.exec_choice[i]];
                    plan.preload_choice[i] = opt.preload_curve.smallest().index;
                    return Ok(true);
                }
            }
        }
    }
    Ok(false)
}

/// Schedule with the in-order preload sequence (sigma = execution order).
pub fn schedule_model(ops: &[CompiledOp], env: &EvalEnv) -> Result<(EndToEndPlan, Timeline, ScheduleStats)> {
    let sigma: Vec<usize> = (0..ops.len()).collect();
    schedule_with_order(ops, &sigma, env)
}
