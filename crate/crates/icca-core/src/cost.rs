//! Cost model: analytic time estimates for compute, data distribution,
//! HBM preload and link contention, plus an optional calibrated mode that
//! replaces the analytic compute and transfer terms with piecewise-linear
//! models fitted to measured samples.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::hw::{route, ChipConfig, LinkKey, NodeId};
use crate::model::{ModelGraph, OperatorSpec, OpType};
use crate::plans::{ParetoCurve, ParetoPoint, PartitionPlan, PreloadStatePlan};
use crate::{Error, Result};

/// One directed transfer used for contention estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Flow {
    pub src: NodeId,
    pub dst: NodeId,
    pub bytes: u64,
}

#[derive(Debug, Clone, Default)]
pub enum CostKind {
    #[default]
    Analytic,
    Calibrated(CalibratedModel),
}

#[derive(Debug, Clone, Default)]
pub struct CostModel {
    pub kind: CostKind,
}

impl CostModel {
    pub fn analytic() -> Self {
        CostModel { kind: CostKind::Analytic }
    }

    pub fn calibrated(model: CalibratedModel) -> Self {
        CostModel { kind: CostKind::Calibrated(model) }
    }

    /// Per-core compute time for one tile: the roofline maximum of the
    /// arithmetic time and the local SRAM streaming time.
    pub fn compute_time(&self, op: &OperatorSpec, plan: &PartitionPlan, cfg: &ChipConfig) -> f64 {
        if let CostKind::Calibrated(m) = &self.kind {
            if let Some(pwl) = m.compute.get(&op.op_type.to_string()) {
                return pwl.eval(plan.tile_flops);
            }
        }
        let rate = if op.op_type.is_matmul_class() {
            cfg.core_flops_matmul
        } else {
            cfg.core_flops_other
        };
        let arith = plan.tile_flops / rate;
        let stream = plan.touch_bytes_per_core as f64 / cfg.sram_read_bandwidth;
        arith.max(stream)
    }

    /// Partial-sum exchange time when the contraction dimension is split:
    /// a ring allreduce over the K group.
    pub fn reduce_time(&self, plan: &PartitionPlan, cfg: &ChipConfig) -> f64 {
        if plan.reduce_bytes_per_core == 0 {
            return 0.0;
        }
        let c = plan.reduce_axis.map(|ax| plan.factors[ax]).unwrap_or(1);
        let steps = 2 * (c - 1);
        self.transfer_time(plan.reduce_bytes_per_core, cfg)
            + steps as f64 * cfg.topology.link_latency
    }

    /// Execute-phase time: tile compute plus the reduction exchange plus
    /// the inter-chip collective when the model is sharded across chips.
    pub fn execution_time(&self, op: &OperatorSpec, plan: &PartitionPlan, cfg: &ChipConfig) -> f64 {
        self.compute_time(op, plan, cfg) + self.reduce_time(plan, cfg) + inter_chip_time(op, cfg)
    }

    /// Data-distribution time at execution start: each core pulls the
    /// chunks it does not hold from its peers.
    pub fn distribution_time(
        &self,
        plan: &PartitionPlan,
        pre: &PreloadStatePlan,
        cfg: &ChipConfig,
    ) -> f64 {
        if pre.dist_bytes_per_core == 0 {
            return 0.0;
        }
        let inbound_chunks: u64 = plan
            .shared
            .iter()
            .filter(|s| s.from_hbm)
            .map(|_| pre.chunk_factor - 1)
            .sum();
        self.transfer_time(pre.dist_bytes_per_core, cfg)
            + inbound_chunks as f64 * cfg.topology.link_latency
    }

    /// Preload duration for one operator: the slower of the HBM pipe
    /// (each distinct byte read once at aggregate bandwidth; copies fan out
    /// on chip) and the bottleneck controller egress (cores are assigned to
    /// controllers round-robin, and every copy crosses a link).
    pub fn preload_time(
        &self,
        plan: &PartitionPlan,
        pre: &PreloadStatePlan,
        cfg: &ChipConfig,
    ) -> f64 {
        if pre.preload_bytes_per_core == 0 {
            return 0.0;
        }
        let tiles = plan.num_tiles;
        let hbm = plan.hbm_unique_bytes_total() as f64 / cfg.hbm.total_bandwidth;
        let per_ctrl = tiles.div_ceil(cfg.num_controllers() as u64);
        let egress_bytes = per_ctrl * pre.preload_bytes_per_core;
        let delivery = self.transfer_time(egress_bytes, cfg) + cfg.topology.link_latency;
        hbm.max(delivery)
    }

    /// Time to move `bytes` across one link.
    pub fn transfer_time(&self, bytes: u64, cfg: &ChipConfig) -> f64 {
        if let CostKind::Calibrated(m) = &self.kind {
            if let Some(pwl) = &m.transfer {
                return pwl.eval(bytes as f64);
            }
        }
        bytes as f64 / cfg.topology.per_core_link_bandwidth
    }

    /// Build the execute-state Pareto curve for an operator: memory is the
    /// per-core execute footprint, time the execute-phase estimate. Point
    /// indices refer into `plans`.
    pub fn build_exec_curve(
        &self,
        op: &OperatorSpec,
        plans: &[PartitionPlan],
        cfg: &ChipConfig,
    ) -> ParetoCurve {
        let pts: Vec<ParetoPoint> = plans
            .iter()
            .enumerate()
            .map(|(i, p)| ParetoPoint {
                memory_bytes: p.exec_space_per_core,
                time_seconds: self.execution_time(op, p, cfg),
                index: i,
            })
            .collect();
        crate::plans::pareto_frontier(&pts)
    }

    /// Build the preload-state Pareto curve for one partition plan: memory
    /// is the per-core preload footprint, time the distribution cost paid
    /// at execution start. Point indices refer into `pres`.
    pub fn build_preload_curve(
        &self,
        plan: &PartitionPlan,
        pres: &[PreloadStatePlan],
        cfg: &ChipConfig,
    ) -> ParetoCurve {
        let pts: Vec<ParetoPoint> = pres
            .iter()
            .enumerate()
            .map(|(i, p)| ParetoPoint {
                memory_bytes: p.preload_space_per_core,
                time_seconds: self.distribution_time(plan, p, cfg),
                index: i,
            })
            .collect();
        crate::plans::pareto_frontier(&pts)
    }
}

/// Inter-chip collective time added to every operator when the model is
/// sharded across chips: matmul-class operators allreduce their partial
/// outputs (ring, both directions), everything else allgathers its split
/// output.
pub fn inter_chip_time(op: &OperatorSpec, cfg: &ChipConfig) -> f64 {
    if cfg.num_chips <= 1 {
        return 0.0;
    }
    let c = cfg.num_chips as f64;
    let out = op.output.byte_size() as f64;
    let ratio = if op.op_type.is_matmul_class() {
        2.0 * (c - 1.0) / c
    } else {
        (c - 1.0) / c
    };
    ratio * out / cfg.inter_chip_bandwidth
}

/// Shard a model across `num_chips` chips (tensor parallel). Matmul-class
/// operators split the contraction dimension: weight and activation slices
/// shrink accordingly. Other operators keep their shapes (footprints stay
/// conservative) and scale arithmetic only.
pub fn shard_for_chips(graph: &ModelGraph, num_chips: usize) -> ModelGraph {
    if num_chips <= 1 {
        return graph.clone();
    }
    let chips = num_chips as u64;
    let mut out = graph.clone();
    for op in &mut out.operators {
        match op.op_type {
            OpType::MatMul | OpType::BatchMatMul => {
                let k_a = op.inputs[0].dims.len() - 1;
                let k_b = op.inputs[1].dims.len() - 2;
                let k = op.inputs[0].dims[k_a];
                let k_shard = k.div_ceil(chips).max(1);
                op.inputs[0].dims[k_a] = k_shard;
                op.inputs[1].dims[k_b] = k_shard;
                op.flops *= k_shard as f64 / k as f64;
            }
            _ => {
                op.flops /= chips as f64;
            }
        }
        op.hbm_load_bytes = op
            .inputs
            .iter()
            .filter(|t| t.residence == crate::model::Residence::Hbm)
            .map(|t| t.byte_size())
            .sum();
    }
    out
}

/// Per-link traffic totals for a set of flows: (total bytes, largest
/// single flow) per serialization resource.
pub fn link_traffic(flows: &[Flow], cfg: &ChipConfig) -> BTreeMap<LinkKey, (u64, u64)> {
    let mut map: BTreeMap<LinkKey, (u64, u64)> = BTreeMap::new();
    for f in flows {
        if f.src == f.dst || f.bytes == 0 {
            continue;
        }
        for link in route(cfg, f.src, f.dst) {
            for key in link.resources() {
                let e = map.entry(key).or_insert((0, 0));
                e.0 += f.bytes;
                e.1 = e.1.max(f.bytes);
            }
        }
    }
    map
}

/// Serialization overhead caused by flows competing for links: per link the
/// queueing delay beyond the largest single flow, reported as the maximum
/// over all links. Zero when no link carries more than one flow.
pub fn estimate_contention_overhead(flows: &[Flow], cfg: &ChipConfig) -> f64 {
    let bw = cfg.topology.per_core_link_bandwidth;
    link_traffic(flows, cfg)
        .values()
        .map(|&(total, largest)| (total - largest) as f64 / bw)
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------------
// Calibrated mode
// ---------------------------------------------------------------------

/// One linear segment, active for x >= x0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub x0: f64,
    pub slope: f64,
    pub intercept: f64,
}

/// Piecewise-linear model with one or two segments, sorted by x0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinear {
    pub segments: Vec<Segment>,
}

impl PiecewiseLinear {
    pub fn eval(&self, x: f64) -> f64 {
        let seg = self
            .segments
            .iter()
            .rev()
            .find(|s| x >= s.x0)
            .unwrap_or(&self.segments[0]);
        (seg.slope * x + seg.intercept).max(0.0)
    }
}

/// Measured compute sample: one operator execution on one core.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComputeSample {
    pub op_type: String,
    /// Tile FLOPs of the executed plan.
    pub feature: f64,
    pub seconds: f64,
}

/// Measured transfer sample: one flow across one link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferSample {
    pub volume_bytes: f64,
    pub seconds: f64,
}

/// Calibrated replacement for the analytic compute and transfer terms.
/// Missing op types fall back to the analytic model.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CalibratedModel {
    pub compute: BTreeMap<String, PiecewiseLinear>,
    pub transfer: Option<PiecewiseLinear>,
}

fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let var: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let cov: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if var > 0.0 { cov / var } else { 0.0 };
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - (slope * x + intercept);
            e * e
        })
        .sum();
    (slope, intercept, sse)
}

fn clamp_monotone(slope: f64, intercept: f64, xs: &[f64], ys: &[f64]) -> (f64, f64) {
    if slope >= 0.0 {
        (slope, intercept)
    } else {
        (0.0, ys.iter().sum::<f64>() / xs.len() as f64)
    }
}

/// Fit a one- or two-segment piecewise-linear model by least squares. The
/// breakpoint is chosen by exhaustive search over sample boundaries; the
/// split is kept only when it strictly reduces the squared error. Slopes
/// are clamped non-negative (times never shrink with more work).
pub fn fit_piecewise(samples: &[(f64, f64)]) -> Result<PiecewiseLinear> {
    if samples.len() < 2 {
        return Err(Error::Calibration(format!(
            "need at least 2 samples, got {}",
            samples.len()
        )));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let xs: Vec<f64> = sorted.iter().map(|s| s.0).collect();
    let ys: Vec<f64> = sorted.iter().map(|s| s.1).collect();

    let (s1, i1, sse1) = least_squares(&xs, &ys);
    let (s1, i1) = clamp_monotone(s1, i1, &xs, &ys);
    let single = PiecewiseLinear {
        segments: vec![Segment { x0: 0.0, slope: s1, intercept: i1 }],
    };

    let n = xs.len();
    if n < 4 {
        return Ok(single);
    }
    let mut best: Option<(f64, PiecewiseLinear)> = None;
    for split in 2..=(n - 2) {
        if xs[split] == xs[split - 1] {
            continue;
        }
        let (ls, li, lsse) = least_squares(&xs[..split], &ys[..split]);
        let (rs, ri, rsse) = least_squares(&xs[split..], &ys[split..]);
        let (ls, li) = clamp_monotone(ls, li, &xs[..split], &ys[..split]);
        let (rs, ri) = clamp_monotone(rs, ri, &xs[split..], &ys[split..]);
        let sse = lsse + rsse;
        if best.as_ref().map_or(true, |(b, _)| sse < *b) {
            best = Some((
                sse,
                PiecewiseLinear {
                    segments: vec![
                        Segment { x0: 0.0, slope: ls, intercept: li },
                        Segment { x0: xs[split], slope: rs, intercept: ri },
                    ],
                },
            ));
        }
    }
    match best {
        Some((sse2, two)) if sse2 < sse1 * 0.999 => Ok(two),
        _ => Ok(single),
    }
}

/// Fit a calibrated model from measured samples: one compute curve per
/// operator type plus one link transfer curve.
pub fn fit_calibrated(
    compute: &[ComputeSample],
    transfer: &[TransferSample],
) -> Result<CalibratedModel> {
    let mut by_type: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for s in compute {
        by_type
            .entry(s.op_type.clone())
            .or_default()
            .push((s.feature, s.seconds));
    }
    let mut model = CalibratedModel::default();
    for (key, pts) in by_type {
        model.compute.insert(key, fit_piecewise(&pts)?);
    }
    if !transfer.is_empty() {
        let pts: Vec<(f64, f64)> = transfer.iter().map(|s| (s.volume_bytes, s.seconds)).collect();
        model.transfer = Some(fit_piecewise(&pts)?);
    }
    Ok(model)
}

/// Largest relative prediction error of a fitted curve over its own
/// training samples.
pub fn max_rel_error(pwl: &PiecewiseLinear, samples: &[(f64, f64)]) -> f64 {
    samples
        .iter()
        .map(|&(x, y)| {
            let p = pwl.eval(x);
            if y.abs() > 0.0 {
                ((p - y) / y).abs()
            } else {
                p.abs()
            }
        })
        .fold(0.0, f64::max)
}
