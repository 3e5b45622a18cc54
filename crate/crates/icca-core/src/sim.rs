//! Event-driven chip simulator: replays a bound end-to-end plan at tile
//! and chunk granularity over explicit core, link and HBM-pipe resources.
//!
//! Every piece of work is a task occupying zero, one or two serialization
//! resources for a duration. Resources serve tasks first-come-first-served;
//! a task holding two resources (an all-to-all transfer holds the source
//! egress and destination ingress ports together) is granted only when it
//! heads both queues and both ports are idle. The HBM pipe reads each
//! distinct chunk once at aggregate bandwidth; controllers then fan copies
//! out to the receiving cores over ordinary links. Synchronization follows
//! the analytic timeline model: preloads issue sequentially in sigma order,
//! a window's preload batch waits for the previous execution to finish, an
//! operator executes only after the previous operator and its own preload,
//! and the execute phase runs distribution, compute and the ring allreduce
//! as bulk-synchronous stages.
//!
//! Blocking SRAM contention posts a service slot on the destination core's
//! compute resource for every preload delivery: inbound writes steal
//! compute cycles from the victim core. Distribution and reduce traffic is
//! exempt (cores are not computing during those stages).

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap, VecDeque};

use serde::Serialize;

use crate::cost::{inter_chip_time, CostModel};
use crate::hw::{route, ChipConfig, LinkKey, NodeId, SramContention, TopologyKind};
use crate::model::ModelGraph;
use crate::plans::{
    enumerate_partition_plans, enumerate_preload_plans, map_tiles_to_cores, tile_coords,
    PartitionPlan, PreloadStatePlan, SharedInput,
};
use crate::schedule::EndToEndPlan;
use crate::{Error, Result};

/// Serialization resource a task occupies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Resource {
    Core(NodeId),
    Link(LinkKey),
    /// The single off-chip pipe at aggregate HBM bandwidth.
    HbmPipe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    ComputeTile,
    TransferTile,
    HbmFetch,
    PreloadDone,
    ExecDone,
}

/// Which stage of an operator a task belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Preload,
    Dist,
    Compute,
    Reduce,
    Service,
    InterChip,
    Sync,
}

/// One trace record. `deps` are event ids; internal synchronization points
/// that are not themselves events are collapsed onto the dependency that
/// resolved them, so `start >= max(dep ends)` holds exactly.
#[derive(Debug, Clone)]
pub struct Event {
    pub id: usize,
    pub kind: EventKind,
    pub phase: Phase,
    pub resource: Option<Resource>,
    pub op: usize,
    /// Destination core for transfers, executing core for compute.
    pub core: Option<NodeId>,
    pub bytes: u64,
    pub start: f64,
    pub end: f64,
    /// True on the last hop of a transfer: the bytes land at `core`.
    pub final_leg: bool,
    pub deps: Vec<usize>,
}

/// One memory reservation on one core.
#[derive(Debug, Clone, Copy)]
pub struct Residency {
    pub core: NodeId,
    pub bytes: u64,
    pub start: f64,
    pub end: f64,
    pub op: usize,
}

/// Volumes recomputed from the plan alone, against which the trace is
/// checked for conservation.
#[derive(Debug, Clone, Default)]
pub struct ExpectedVolumes {
    pub hbm_unique_bytes: u64,
    pub preload_by_op_core: BTreeMap<(usize, NodeId), u64>,
    pub dist_by_op_core: BTreeMap<(usize, NodeId), u64>,
}

#[derive(Debug, Clone)]
pub struct Trace {
    pub events: Vec<Event>,
    pub residencies: Vec<Residency>,
    pub expected: ExpectedVolumes,
    pub capacity_per_core: u64,
    pub num_ops: usize,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SimOptions {
    /// Record the full event trace. Costs memory proportional to the event
    /// count; leave off for large models.
    pub record_trace: bool,
}

/// Where the wall-clock went. The four components partition [0, total]:
/// overlapped counts instants where both an execute window and preload
/// traffic are active, the `_only` parts count exclusive activity, and the
/// stall is the remainder (synchronization gaps).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Breakdown {
    pub preload_only: f64,
    pub execute_only: f64,
    pub overlapped: f64,
    pub interconnect_stall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub total_time: f64,
    pub breakdown: Breakdown,
    /// Fraction of the run the HBM pipe is busy.
    pub hbm_utilization: f64,
    /// Link busy time from preload deliveries over all links on the chip.
    pub interconnect_utilization_preload: f64,
    /// Link busy time from distribution and reduce traffic.
    pub interconnect_utilization_intercore: f64,
    /// Model FLOPs divided by total time.
    pub achieved_flop_rate: f64,
    /// Peak bytes resident on the most loaded core.
    pub peak_sram_bytes: u64,
    pub hbm_bytes: u64,
    pub preload_link_bytes: u64,
    pub intercore_bytes: u64,
}

pub struct SimOutput {
    pub report: SimReport,
    pub trace: Option<Trace>,
}

/// Number of link serialization resources on the chip (the utilization
/// denominator): every egress and ingress port in all-to-all, every
/// directed mesh hop plus both directions of each controller attach.
pub fn link_resource_count(cfg: &ChipConfig) -> usize {
    match cfg.topology.kind {
        TopologyKind::AllToAll => 2 * (cfg.num_cores + cfg.num_controllers()),
        TopologyKind::Mesh2d => {
            let (r, c) = cfg.mesh_dims();
            2 * (r * (c - 1) + c * (r - 1)) + 2 * cfg.num_controllers()
        }
    }
}

// ── task graph ───────────────────────────────────────────────────────────

struct Task {
    res: [Option<Resource>; 2],
    duration: f64,
    pending: u32,
    /// Dependency that completed last; resolves sync points to real events.
    binding: u32,
    dependents: Vec<u32>,
    deps: Vec<u32>,
    kind: EventKind,
    phase: Phase,
    emit: bool,
    final_leg: bool,
    op: u32,
    core: Option<NodeId>,
    bytes: u64,
    start: f64,
    end: f64,
}

const NONE_TASK: u32 = u32::MAX;

struct Builder {
    tasks: Vec<Task>,
    record: bool,
}

impl Builder {
    fn add(
        &mut self,
        res: [Option<Resource>; 2],
        duration: f64,
        deps: &[u32],
        kind: EventKind,
        phase: Phase,
        op: u32,
        core: Option<NodeId>,
        bytes: u64,
        final_leg: bool,
        emit: bool,
    ) -> u32 {
        let id = self.tasks.len() as u32;
        for &d in deps {
            self.tasks[d as usize].dependents.push(id);
        }
        self.tasks.push(Task {
            res,
            duration,
            pending: deps.len() as u32,
            binding: NONE_TASK,
            dependents: Vec::new(),
            deps: if self.record { deps.to_vec() } else { Vec::new() },
            kind,
            phase,
            emit,
            final_leg,
            op,
            core,
            bytes,
            start: 0.0,
            end: 0.0,
        });
        id
    }

    fn sync(&mut self, deps: &[u32], kind: EventKind, op: u32, emit: bool) -> u32 {
        self.add([None, None], 0.0, deps, kind, Phase::Sync, op, None, 0, false, emit)
    }

    /// Store-and-forward transfer along a route: one task per leg, each
    /// `bytes/bandwidth + latency`, chained. Returns the final leg.
    fn transfer(
        &mut self,
        cfg: &ChipConfig,
        src: NodeId,
        dst: NodeId,
        bytes: u64,
        deps: &[u32],
        phase: Phase,
        op: u32,
    ) -> u32 {
        let legs = route(cfg, src, dst);
        debug_assert!(!legs.is_empty(), "zero-length transfer route");
        let dur = bytes as f64 / cfg.topology.per_core_link_bandwidth + cfg.topology.link_latency;
        let mut prev: Option<u32> = None;
        let n = legs.len();
        for (i, leg) in legs.iter().enumerate() {
            let keys = leg.resources();
            let res = [Some(Resource::Link(keys[0])), keys.get(1).map(|&k| Resource::Link(k))];
            let deps_buf;
            let d: &[u32] = match prev {
                Some(p) => {
                    deps_buf = [p];
                    &deps_buf
                }
                None => deps,
            };
            let t = self.add(
                res,
                dur,
                d,
                EventKind::TransferTile,
                phase,
                op,
                Some(dst),
                bytes,
                i + 1 == n,
                true,
            );
            prev = Some(t);
        }
        prev.expect("route has at least one leg")
    }
}

// ── per-operator precomputation ──────────────────────────────────────────

struct OpSim {
    plan: PartitionPlan,
    pstate: PreloadStatePlan,
    cores: Vec<NodeId>,
    compute_time: f64,
    ic_time: f64,
}

/// Members of each sharing group for one shared input, keyed by the fixed
/// coordinates; members are ordered by their coordinate along the varying
/// axis. Values are tile indices.
fn sharing_groups(plan: &PartitionPlan, s: &SharedInput) -> Vec<Vec<usize>> {
    let mut groups: BTreeMap<Vec<u64>, Vec<(u64, usize)>> = BTreeMap::new();
    for tile in 0..plan.num_tiles as usize {
        let mut coords = tile_coords(plan, tile);
        let member = coords[s.varies_axis];
        coords[s.varies_axis] = 0;
        groups.entry(coords).or_default().push((member, tile));
    }
    groups
        .into_values()
        .map(|mut members| {
            members.sort_unstable();
            members.into_iter().map(|(_, tile)| tile).collect()
        })
        .collect()
}

/// Size of chunk `j` when `total` bytes split into `parts` even pieces
/// (remainder spread over the first chunks). Sums exactly to `total`.
fn chunk_size(total: u64, parts: u64, j: u64) -> u64 {
    total / parts + u64::from(j < total % parts)
}

fn controller_for(cfg: &ChipConfig, core: NodeId) -> NodeId {
    cfg.controller_node(core % cfg.num_controllers())
}

// ── engine ───────────────────────────────────────────────────────────────

#[derive(Clone, Copy, PartialEq)]
struct Tk(f64);
impl Eq for Tk {}
impl PartialOrd for Tk {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Tk {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

const ACT_READY: u8 = 0;
const ACT_DONE: u8 = 1;

struct ResState {
    busy: bool,
    queue: VecDeque<u32>,
}

struct Engine {
    heap: BinaryHeap<Reverse<(Tk, u64, u32, u8)>>,
    seq: u64,
    res_index: HashMap<Resource, usize>,
    res: Vec<ResState>,
}

impl Engine {
    fn new() -> Self {
        Engine {
            heap: BinaryHeap::new(),
            seq: 0,
            res_index: HashMap::new(),
            res: Vec::new(),
        }
    }

    fn push(&mut self, t: f64, task: u32, act: u8) {
        self.seq += 1;
        self.heap.push(Reverse((Tk(t), self.seq, task, act)));
    }

    fn res_id(&mut self, r: Resource) -> usize {
        if let Some(&i) = self.res_index.get(&r) {
            return i;
        }
        let i = self.res.len();
        self.res_index.insert(r, i);
        self.res.push(ResState { busy: false, queue: VecDeque::new() });
        i
    }

    fn can_grant(&self, tasks: &[Task], tid: u32) -> bool {
        tasks[tid as usize].res.iter().flatten().all(|r| {
            let i = self.res_index[r];
            !self.res[i].busy && self.res[i].queue.front() == Some(&tid)
        })
    }

    fn grant(&mut self, tasks: &mut [Task], tid: u32, now: f64) {
        let task = &mut tasks[tid as usize];
        for r in task.res.iter().flatten() {
            let i = self.res_index[r];
            let head = self.res[i].queue.pop_front();
            debug_assert_eq!(head, Some(tid));
            self.res[i].busy = true;
        }
        task.start = now;
        task.end = now + task.duration;
        let end = task.end;
        self.push(end, tid, ACT_DONE);
    }
}

// ── simulation ───────────────────────────────────────────────────────────

/// Replay a bound plan on the chip. The plan's exec/preload choices index
/// the per-operator plan enumerations (the same indices the compiler
/// emits). Errors if a core's SRAM overflows during the replay.
pub fn simulate(
    plan: &EndToEndPlan,
    model: &ModelGraph,
    cfg: &ChipConfig,
    cm: &CostModel,
    opts: &SimOptions,
) -> Result<SimOutput> {
    let n = model.operators.len();
    if plan.sigma.len() != n
        || plan.targets.len() != n
        || plan.exec_choice.len() != n
        || plan.preload_choice.len() != n
    {
        return Err(Error::InvalidInput("plan arity does not match the model".into()));
    }
    if n == 0 {
        return Ok(empty_output(opts, cfg));
    }

    // resolve the chosen plans
    let mut ops: Vec<OpSim> = Vec::with_capacity(n);
    for (i, op) in model.operators.iter().enumerate() {
        let plans = enumerate_partition_plans(op, cfg)?;
        let pplan = plans
            .get(plan.exec_choice[i])
            .ok_or_else(|| {
                Error::InvalidInput(format!(
                    "operator {}: exec choice {} out of range ({} plans)",
                    op.id,
                    plan.exec_choice[i],
                    plans.len()
                ))
            })?
            .clone();
        let pres = enumerate_preload_plans(&pplan);
        let pstate = pres
            .get(plan.preload_choice[i])
            .ok_or_else(|| {
                Error::InvalidInput(format!(
                    "operator {}: preload choice {} out of range ({} states)",
                    op.id,
                    plan.preload_choice[i],
                    pres.len()
                ))
            })?
            .clone();
        let cores = map_tiles_to_cores(&pplan, cfg);
        ops.push(OpSim {
            compute_time: cm.compute_time(op, &pplan, cfg),
            ic_time: inter_chip_time(op, cfg),
            plan: pplan,
            pstate,
            cores,
        });
    }

    // preload batches per execute window (running-max target normalization)
    let mut pos = vec![0usize; n];
    for (q, &j) in plan.sigma.iter().enumerate() {
        pos[j] = q;
    }
    let mut batch_window = vec![0usize; n];
    {
        let mut run = 0usize;
        let mut next_q = 0usize;
        for i in 0..n {
            run = run.max(plan.targets[i]).max(pos[i]);
            while next_q <= run {
                batch_window[next_q] = i;
                next_q += 1;
            }
        }
        debug_assert_eq!(next_q, n, "every operator is batched");
    }

    let blocking = cfg.sram_contention == SramContention::Blocking;
    let lbw = cfg.topology.per_core_link_bandwidth;
    let mut b = Builder { tasks: Vec::new(), record: opts.record_trace };
    let mut expected = ExpectedVolumes::default();

    // exec-order milestones, filled as construction walks sigma/windows
    let mut preload_done = vec![NONE_TASK; n];
    let mut exec_done = vec![NONE_TASK; n];

    // Build preload sub-DAGs in sigma order and execute windows in model
    // order, interleaved so every dependency already exists: window i's
    // batch depends on exec_done[i-1], and exec window i depends on
    // preload_done[i], whose batch index is <= i.
    let mut q_next = 0usize;
    for i in 0..n {
        // issue every preload batched for this window
        while q_next < n && batch_window[q_next] == i {
            let j = plan.sigma[q_next];
            let o = &ops[j];
            let mut gate: Vec<u32> = Vec::with_capacity(2);
            if q_next > 0 {
                gate.push(preload_done[plan.sigma[q_next - 1]]);
            }
            if i > 0 {
                gate.push(exec_done[i - 1]);
            }
            let mut finals: Vec<u32> = Vec::new();
            build_preload(&mut b, cfg, &mut expected, j as u32, o, &gate, &mut finals, blocking, lbw, opts.record_trace);
            preload_done[j] = b.sync(
                if finals.is_empty() { &gate } else { &finals },
                EventKind::PreloadDone,
                j as u32,
                true,
            );
            q_next += 1;
        }

        // execute window
        let mut win_deps: Vec<u32> = vec![preload_done[i]];
        if i > 0 {
            win_deps.push(exec_done[i - 1]);
        }
        let window_start = b.sync(&win_deps, EventKind::ExecDone, i as u32, false);
        let tail = build_window(&mut b, cfg, &mut expected, i as u32, &ops[i], window_start, opts.record_trace);
        exec_done[i] = b.sync(&tail, EventKind::ExecDone, i as u32, true);
    }

    run_engine(b, ops, expected, model, cfg, opts)
}

/// Post one operator's preload: per shared input, each sharing group's
/// chunks are read from the pipe once and fanned out to their cohort; per
/// tile, private slices are read and delivered whole. In blocking mode
/// every delivery posts a service slot on the destination core.
#[allow(clippy::too_many_arguments)]
fn build_preload(
    b: &mut Builder,
    cfg: &ChipConfig,
    expected: &mut ExpectedVolumes,
    op: u32,
    o: &OpSim,
    gate: &[u32],
    finals: &mut Vec<u32>,
    blocking: bool,
    lbw: f64,
    record: bool,
) {
    let hbm_bw = cfg.hbm.total_bandwidth;
    let mut deliver = |b: &mut Builder, expected: &mut ExpectedVolumes, read: u32, core: NodeId, bytes: u64| {
        let ctrl = controller_for(cfg, core);
        let leg = b.transfer(cfg, ctrl, core, bytes, &[read], Phase::Preload, op);
        finals.push(leg);
        if blocking {
            b.add(
                [Some(Resource::Core(core)), None],
                bytes as f64 / lbw,
                &[leg],
                EventKind::ComputeTile,
                Phase::Service,
                op,
                Some(core),
                bytes,
                false,
                true,
            );
        }
        if record {
            *expected.preload_by_op_core.entry((op as usize, core)).or_insert(0) += bytes;
        }
    };

    for s in o.plan.shared.iter().filter(|s| s.from_hbm) {
        let g = s.group_size;
        let f = o.pstate.chunk_factor;
        let cohort = (g / f) as usize;
        for group in sharing_groups(&o.plan, s) {
            for j in 0..f {
                let bytes = chunk_size(s.slice_bytes, f, j);
                if bytes == 0 {
                    continue;
                }
                expected.hbm_unique_bytes += bytes;
                let read = b.add(
                    [Some(Resource::HbmPipe), None],
                    bytes as f64 / hbm_bw,
                    gate,
                    EventKind::HbmFetch,
                    Phase::Preload,
                    op,
                    None,
                    bytes,
                    false,
                    true,
                );
                for &tile in &group[j as usize * cohort..(j as usize + 1) * cohort] {
                    deliver(b, expected, read, o.cores[tile], bytes);
                }
            }
        }
    }

    let private = o.plan.private_hbm_bytes_per_core();
    if private > 0 {
        for tile in 0..o.plan.num_tiles as usize {
            expected.hbm_unique_bytes += private;
            let read = b.add(
                [Some(Resource::HbmPipe), None],
                private as f64 / hbm_bw,
                gate,
                EventKind::HbmFetch,
                Phase::Preload,
                op,
                None,
                private,
                false,
                true,
            );
            deliver(b, expected, read, o.cores[tile], private);
        }
    }
}

/// Post one execute window: distribution fetches, bulk-synchronous compute,
/// the ring allreduce over contraction groups, and the inter-chip
/// collective. Returns the tasks the window's completion depends on.
fn build_window(
    b: &mut Builder,
    cfg: &ChipConfig,
    expected: &mut ExpectedVolumes,
    op: u32,
    o: &OpSim,
    window_start: u32,
    record: bool,
) -> Vec<u32> {
    // distribution: each core pulls the chunks it does not hold from the
    // peers holding them, spread across the holding cohort
    let mut dist_finals: Vec<u32> = Vec::new();
    if o.pstate.chunk_factor > 1 {
        for s in o.plan.shared.iter().filter(|s| s.from_hbm) {
            let g = s.group_size;
            let f = o.pstate.chunk_factor;
            let cohort = g / f;
            for group in sharing_groups(&o.plan, s) {
                for (r, &tile) in group.iter().enumerate() {
                    let own = r as u64 / cohort;
                    let dst = o.cores[tile];
                    for j in (0..f).filter(|&j| j != own) {
                        let bytes = chunk_size(s.slice_bytes, f, j);
                        if bytes == 0 {
                            continue;
                        }
                        let holder = group[(j * cohort + r as u64 % cohort) as usize];
                        let leg = b.transfer(
                            cfg,
                            o.cores[holder],
                            dst,
                            bytes,
                            &[window_start],
                            Phase::Dist,
                            op,
                        );
                        dist_finals.push(leg);
                        if record {
                            *expected.dist_by_op_core.entry((op as usize, dst)).or_insert(0) +=
                                bytes;
                        }
                    }
                }
            }
        }
    }
    let compute_gate = if dist_finals.is_empty() {
        window_start
    } else {
        b.sync(&dist_finals, EventKind::ExecDone, op, false)
    };

    let computes: Vec<u32> = (0..o.plan.num_tiles as usize)
        .map(|tile| {
            b.add(
                [Some(Resource::Core(o.cores[tile])), None],
                o.compute_time,
                &[compute_gate],
                EventKind::ComputeTile,
                Phase::Compute,
                op,
                Some(o.cores[tile]),
                0,
                false,
                true,
            )
        })
        .collect();

    // ring allreduce over each contraction group: 2(c-1) rounds, every
    // member forwarding one rotating chunk of its output tile per round
    let mut tails: Vec<u32> = Vec::new();
    match o.plan.reduce_axis {
        Some(ax) if o.plan.factors[ax] > 1 => {
            let c = o.plan.factors[ax];
            let out_tile = o.plan.reduce_bytes_per_core * c / (2 * (c - 1));
            let ring_input = SharedInput {
                input_index: usize::MAX,
                varies_axis: ax,
                group_size: c,
                slice_bytes: 0,
                from_hbm: false,
            };
            for group in sharing_groups(&o.plan, &ring_input) {
                debug_assert_eq!(group.len() as u64, c);
                let group_computes: Vec<u32> = group.iter().map(|&t| computes[t]).collect();
                let mut round_gate = b.sync(&group_computes, EventKind::ExecDone, op, false);
                for round in 0..2 * (c - 1) {
                    let legs: Vec<u32> = group
                        .iter()
                        .enumerate()
                        .map(|(m, &tile)| {
                            let next = group[(m + 1) % group.len()];
                            let bytes = chunk_size(out_tile, c, (m as u64 + round) % c);
                            b.transfer(
                                cfg,
                                o.cores[tile],
                                o.cores[next],
                                bytes.max(1),
                                &[round_gate],
                                Phase::Reduce,
                                op,
                            )
                        })
                        .collect();
                    round_gate = b.sync(&legs, EventKind::ExecDone, op, false);
                }
                tails.push(round_gate);
            }
        }
        _ => tails = computes,
    }

    if o.ic_time > 0.0 {
        let ic = b.add(
            [None, None],
            o.ic_time,
            &tails,
            EventKind::TransferTile,
            Phase::InterChip,
            op,
            None,
            0,
            false,
            true,
        );
        tails = vec![ic];
    }
    tails
}

fn empty_output(opts: &SimOptions, cfg: &ChipConfig) -> SimOutput {
    let report = SimReport {
        total_time: 0.0,
        breakdown: Breakdown {
            preload_only: 0.0,
            execute_only: 0.0,
            overlapped: 0.0,
            interconnect_stall: 0.0,
        },
        hbm_utilization: 0.0,
        interconnect_utilization_preload: 0.0,
        interconnect_utilization_intercore: 0.0,
        achieved_flop_rate: 0.0,
        peak_sram_bytes: 0,
        hbm_bytes: 0,
        preload_link_bytes: 0,
        intercore_bytes: 0,
    };
    let trace = opts.record_trace.then(|| Trace {
        events: Vec::new(),
        residencies: Vec::new(),
        expected: ExpectedVolumes::default(),
        capacity_per_core: cfg.usable_sram_per_core(),
        num_ops: 0,
    });
    SimOutput { report, trace }
}

fn run_engine(
    b: Builder,
    ops: Vec<OpSim>,
    expected: ExpectedVolumes,
    model: &ModelGraph,
    cfg: &ChipConfig,
    opts: &SimOptions,
) -> Result<SimOutput> {
    let mut tasks = b.tasks;
    let n = ops.len();
    let mut eng = Engine::new();

    // pre-register resources in deterministic first-use (task id) order
    for t in &tasks {
        for r in t.res.iter().flatten() {
            eng.res_id(*r);
        }
    }

    for (tid, t) in tasks.iter().enumerate() {
        if t.pending == 0 {
            eng.push(0.0, tid as u32, ACT_READY);
        }
    }

    // accumulators
    let mut hbm_busy = 0.0f64;
    let mut link_busy_pre = 0.0f64;
    let mut link_busy_ic = 0.0f64;
    let mut hbm_bytes = 0u64;
    let mut pre_bytes = 0u64;
    let mut ic_bytes = 0u64;
    let mut t_max = 0.0f64;
    let mut pre_lo = vec![f64::INFINITY; n];
    let mut pre_done = vec![0.0f64; n];
    let mut win_start = vec![0.0f64; n];
    let mut win_end = vec![0.0f64; n];

    while let Some(Reverse((Tk(now), _seq, tid, act))) = eng.heap.pop() {
        if act == ACT_READY {
            let has_res = tasks[tid as usize].res[0].is_some();
            if !has_res {
                let task = &mut tasks[tid as usize];
                task.start = now;
                task.end = now + task.duration;
                let end = task.end;
                eng.push(end, tid, ACT_DONE);
            } else {
                for r in tasks[tid as usize].res.iter().flatten() {
                    let i = eng.res_index[r];
                    eng.res[i].queue.push_back(tid);
                }
                if eng.can_grant(&tasks, tid) {
                    eng.grant(&mut tasks, tid, now);
                }
            }
            continue;
        }

        // ACT_DONE
        {
            let task = &tasks[tid as usize];
            t_max = t_max.max(task.end);
            let op = task.op as usize;
            match task.phase {
                Phase::Preload => {
                    pre_lo[op] = pre_lo[op].min(task.start);
                    if task.kind == EventKind::HbmFetch {
                        hbm_bytes += task.bytes;
                    } else if task.final_leg {
                        pre_bytes += task.bytes;
                    }
                }
                Phase::Dist | Phase::Reduce => {
                    if task.final_leg {
                        ic_bytes += task.bytes;
                    }
                }
                Phase::Sync if task.emit => {
                    if task.kind == EventKind::PreloadDone {
                        pre_done[op] = task.end;
                    } else if task.kind == EventKind::ExecDone {
                        win_end[op] = task.end;
                    }
                }
                _ => {}
            }
            for r in task.res.iter().flatten() {
                match r {
                    Resource::HbmPipe => hbm_busy += task.duration,
                    Resource::Link(_) => match task.phase {
                        Phase::Preload => link_busy_pre += task.duration,
                        Phase::Dist | Phase::Reduce => link_busy_ic += task.duration,
                        _ => {}
                    },
                    Resource::Core(_) => {}
                }
            }
        }

        let dep_count = tasks[tid as usize].dependents.len();
        for k in 0..dep_count {
            let d = tasks[tid as usize].dependents[k];
            let dep = &mut tasks[d as usize];
            dep.pending -= 1;
            if dep.pending == 0 {
                dep.binding = tid;
                eng.push(now, d, ACT_READY);
            }
        }
        for ri in 0..2 {
            let Some(r) = tasks[tid as usize].res[ri] else { continue };
            let i = eng.res_index[&r];
            eng.res[i].busy = false;
            if let Some(&head) = eng.res[i].queue.front() {
                if eng.can_grant(&tasks, head) {
                    eng.grant(&mut tasks, head, now);
                }
            }
        }
    }

    // window start = the window-start gate's resolved time
    for i in 0..n {
        let prev = if i > 0 { win_end[i - 1] } else { 0.0 };
        win_start[i] = pre_done[i].max(prev);
    }

    // memory reservations and the dominating-core occupancy sweep: the
    // tile maps anchor every operator at the chip origin, so the origin
    // core's occupancy bounds all others
    let mut sweep: Vec<(f64, i8, i64)> = Vec::with_capacity(4 * n);
    for i in 0..n {
        let pre_mem = ops[i].pstate.preload_space_per_core as i64;
        let start = if pre_lo[i].is_finite() { pre_lo[i] } else { pre_done[i] };
        if pre_mem > 0 {
            sweep.push((start, 1, pre_mem));
            sweep.push((win_start[i], 0, -pre_mem));
        }
        let exec_mem = ops[i].plan.exec_space_per_core as i64;
        if exec_mem > 0 {
            sweep.push((win_start[i], 1, exec_mem));
            sweep.push((win_end[i], 0, -exec_mem));
        }
    }
    sweep.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let capacity = cfg.usable_sram_per_core();
    let mut occ = 0i64;
    let mut peak = 0i64;
    for &(t, _, d) in &sweep {
        occ += d;
        peak = peak.max(occ);
        if occ > 0 && occ as u64 > capacity {
            return Err(Error::MemoryOverflow {
                time: t,
                occupancy: occ as u64,
                capacity,
            });
        }
    }

    // activity unions for the breakdown
    let mut pre_iv: Vec<(f64, f64)> = Vec::new();
    let mut exe_iv: Vec<(f64, f64)> = Vec::new();
    for i in 0..n {
        if pre_lo[i].is_finite() && pre_done[i] > pre_lo[i] {
            pre_iv.push((pre_lo[i], pre_done[i]));
        }
        if win_end[i] > win_start[i] {
            exe_iv.push((win_start[i], win_end[i]));
        }
    }
    let pre_iv = merge_intervals(pre_iv);
    let exe_iv = merge_intervals(exe_iv);
    let overlapped = intersect_measure(&pre_iv, &exe_iv);
    let pre_len = measure(&pre_iv);
    let exe_len = measure(&exe_iv);
    let total = t_max;
    let union = pre_len + exe_len - overlapped;
    let breakdown = Breakdown {
        preload_only: pre_len - overlapped,
        execute_only: exe_len - overlapped,
        overlapped,
        interconnect_stall: (total - union).max(0.0),
    };

    let links = link_resource_count(cfg) as f64;
    let flops: f64 = model.operators.iter().map(|o| o.flops).sum();
    let report = SimReport {
        total_time: total,
        breakdown,
        hbm_utilization: if total > 0.0 { hbm_busy / total } else { 0.0 },
        interconnect_utilization_preload: if total > 0.0 { link_busy_pre / (links * total) } else { 0.0 },
        interconnect_utilization_intercore: if total > 0.0 { link_busy_ic / (links * total) } else { 0.0 },
        achieved_flop_rate: if total > 0.0 { flops / total } else { 0.0 },
        peak_sram_bytes: peak.max(0) as u64,
        hbm_bytes,
        preload_link_bytes: pre_bytes,
        intercore_bytes: ic_bytes,
    };

    let trace = if opts.record_trace {
        Some(build_trace(&tasks, &ops, &pre_lo, &pre_done, &win_start, &win_end, expected, capacity, n))
    } else {
        None
    };
    Ok(SimOutput { report, trace })
}

#[allow(clippy::too_many_arguments)]
fn build_trace(
    tasks: &[Task],
    ops: &[OpSim],
    pre_lo: &[f64],
    pre_done: &[f64],
    win_start: &[f64],
    win_end: &[f64],
    expected: ExpectedVolumes,
    capacity: u64,
    n: usize,
) -> Trace {
    // event ids for emitted tasks
    let mut event_id = vec![usize::MAX; tasks.len()];
    let mut count = 0usize;
    for (tid, t) in tasks.iter().enumerate() {
        if t.emit {
            event_id[tid] = count;
            count += 1;
        }
    }
    // resolve a task to the emitted event bounding its completion
    let resolve = |mut tid: u32| -> Option<usize> {
        loop {
            let t = &tasks[tid as usize];
            if t.emit {
                return Some(event_id[tid as usize]);
            }
            if t.binding == NONE_TASK {
                return None;
            }
            tid = t.binding;
        }
    };
    let mut events = Vec::with_capacity(count);
    for (tid, t) in tasks.iter().enumerate() {
        if !t.emit {
            continue;
        }
        let deps: Vec<usize> = t.deps.iter().filter_map(|&d| resolve(d)).collect();
        events.push(Event {
            id: event_id[tid],
            kind: t.kind,
            phase: t.phase,
            resource: t.res[0],
            op: t.op as usize,
            core: t.core,
            bytes: t.bytes,
            start: t.start,
            end: t.end,
            final_leg: t.final_leg,
            deps,
        });
    }

    let mut residencies = Vec::new();
    for i in 0..n {
        let pre_mem = ops[i].pstate.preload_space_per_core;
        let exec_mem = ops[i].plan.exec_space_per_core;
        let start = if pre_lo[i].is_finite() { pre_lo[i] } else { pre_done[i] };
        for &core in &ops[i].cores {
            if pre_mem > 0 {
                residencies.push(Residency {
                    core,
                    bytes: pre_mem,
                    start,
                    end: win_start[i],
                    op: i,
                });
            }
            if exec_mem > 0 {
                residencies.push(Residency {
                    core,
                    bytes: exec_mem,
                    start: win_start[i],
                    end: win_end[i],
                    op: i,
                });
            }
        }
    }

    Trace {
        events,
        residencies,
        expected,
        capacity_per_core: capacity,
        num_ops: n,
    }
}

fn merge_intervals(mut iv: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    iv.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(iv.len());
    for (s, e) in iv {
        match out.last_mut() {
            Some(last) if s <= last.1 => last.1 = last.1.max(e),
            _ => out.push((s, e)),
        }
    }
    out
}

fn measure(iv: &[(f64, f64)]) -> f64 {
    iv.iter().map(|&(s, e)| e - s).sum()
}

fn intersect_measure(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let mut i = 0;
    let mut j = 0;
    let mut acc = 0.0;
    while i < a.len() && j < b.len() {
        let lo = a[i].0.max(b[j].0);
        let hi = a[i].1.min(b[j].1);
        if hi > lo {
            acc += hi - lo;
        }
        if a[i].1 < b[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    acc
}

// ── trace validation ─────────────────────────────────────────────────────

/// Check a recorded trace: causality (no event starts before its
/// dependencies end), per-resource non-overlap, execute-barrier
/// monotonicity, byte conservation against the plan-derived expectations,
/// and per-core SRAM occupancy within capacity. Returns the first
/// violation found.
pub fn validate_trace(trace: &Trace) -> Result<()> {
    let eps = 1e-9;
    for e in &trace.events {
        if !(e.start.is_finite() && e.end.is_finite()) || e.start < -eps || e.end < e.start - eps {
            return Err(Error::TraceInvalid(format!(
                "event {} has invalid bounds [{}, {}]",
                e.id, e.start, e.end
            )));
        }
        for &d in &e.deps {
            let dep = trace
                .events
                .get(d)
                .ok_or_else(|| Error::TraceInvalid(format!("event {} depends on missing event {d}", e.id)))?;
            if e.start < dep.end - eps {
                return Err(Error::TraceInvalid(format!(
                    "causality: event {} starts at {} before dependency {} ends at {}",
                    e.id, e.start, d, dep.end
                )));
            }
        }
    }

    // per-resource non-overlap
    let mut by_res: BTreeMap<Resource, Vec<(f64, f64, usize)>> = BTreeMap::new();
    for e in &trace.events {
        if let Some(r) = e.resource {
            if e.end > e.start {
                by_res.entry(r).or_default().push((e.start, e.end, e.id));
            }
        }
    }
    for (r, mut iv) in by_res {
        iv.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in iv.windows(2) {
            if w[1].0 < w[0].1 - eps {
                return Err(Error::TraceInvalid(format!(
                    "resource {r:?}: events {} and {} overlap ([{}, {}] vs [{}, {}])",
                    w[0].2, w[1].2, w[0].0, w[0].1, w[1].0, w[1].1
                )));
            }
        }
    }

    // execute barriers are monotone and no compute starts before the
    // previous operator's barrier
    let mut exec_end = vec![f64::NEG_INFINITY; trace.num_ops];
    for e in &trace.events {
        if e.kind == EventKind::ExecDone {
            exec_end[e.op] = exec_end[e.op].max(e.end);
        }
    }
    for w in exec_end.windows(2) {
        if w[1] < w[0] - eps {
            return Err(Error::TraceInvalid("execute barriers are not monotone".into()));
        }
    }
    for e in &trace.events {
        if e.kind == EventKind::ComputeTile && e.phase == Phase::Compute && e.op > 0 {
            if e.start < exec_end[e.op - 1] - eps {
                return Err(Error::TraceInvalid(format!(
                    "compute event {} of operator {} starts before the previous barrier",
                    e.id, e.op
                )));
            }
        }
    }

    // byte conservation
    let hbm_total: u64 = trace
        .events
        .iter()
        .filter(|e| e.kind == EventKind::HbmFetch)
        .map(|e| e.bytes)
        .sum();
    if hbm_total != trace.expected.hbm_unique_bytes {
        return Err(Error::TraceInvalid(format!(
            "HBM bytes out {} != expected {}",
            hbm_total, trace.expected.hbm_unique_bytes
        )));
    }
    let mut pre_by: BTreeMap<(usize, NodeId), u64> = BTreeMap::new();
    let mut dist_by: BTreeMap<(usize, NodeId), u64> = BTreeMap::new();
    for e in &trace.events {
        if e.kind == EventKind::TransferTile && e.final_leg {
            if let Some(core) = e.core {
                match e.phase {
                    Phase::Preload => *pre_by.entry((e.op, core)).or_insert(0) += e.bytes,
                    Phase::Dist => *dist_by.entry((e.op, core)).or_insert(0) += e.bytes,
                    _ => {}
                }
            }
        }
    }
    if pre_by != trace.expected.preload_by_op_core {
        return Err(Error::TraceInvalid(
            "per-core preload deliveries do not match the plan".into(),
        ));
    }
    if dist_by != trace.expected.dist_by_op_core {
        return Err(Error::TraceInvalid(
            "per-core distribution shares do not match the plan".into(),
        ));
    }

    // occupancy within capacity on every core
    let mut by_core: BTreeMap<NodeId, Vec<(f64, i8, i64)>> = BTreeMap::new();
    for r in &trace.residencies {
        if r.bytes == 0 || r.end <= r.start {
            continue;
        }
        let v = by_core.entry(r.core).or_default();
        v.push((r.start, 1, r.bytes as i64));
        v.push((r.end, 0, -(r.bytes as i64)));
    }
    for (core, mut v) in by_core {
        v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut occ = 0i64;
        for (t, _, d) in v {
            occ += d;
            if occ > 0 && occ as u64 > trace.capacity_per_core {
                return Err(Error::TraceInvalid(format!(
                    "core {core}: occupancy {occ} exceeds capacity {} at t={t}",
                    trace.capacity_per_core
                )));
            }
        }
    }

    Ok(())
}
