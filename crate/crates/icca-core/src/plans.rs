//! Intra-operator plans: partition plans (execute state), preload-state
//! plans (chunked residency before execution) and Pareto frontiers over
//! (memory, time) points.
//!
//! Partition plans tile an operator across cores. MatMul-class operators
//! partition along (M, N, K) (plus the batch dim for BatchMatMul); all
//! other operator types partition the flattened output. Factor candidates
//! per dimension are the divisors of that dimension plus powers of two, so
//! ragged tiles only arise from the power-of-two candidates and are padded
//! with ceil division (padding costs compute but carries no HBM traffic).
//!
//! A preload-state plan fixes a power-of-two chunk factor `f` over every
//! shared HBM input: each core receives `1/f` of its shared slices at
//! preload and fetches the remaining `(f-1)/f` from peer cores during the
//! data-distribution phase at execution start.

use crate::hw::{ChipConfig, NodeId, TopologyKind};
use crate::model::{OperatorSpec, OpType, Residence};
use crate::{Error, Result};

/// One shared input slice: the cores that differ only along `varies_axis`
/// of the factor grid hold identical copies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SharedInput {
    pub input_index: usize,
    pub varies_axis: usize,
    pub group_size: u64,
    pub slice_bytes: u64,
    pub from_hbm: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionPlan {
    pub id: usize,
    /// Split factor per partitionable dimension (see `partition_dims`).
    pub factors: Vec<u64>,
    pub num_tiles: u64,
    /// Per-core execute-state footprint: tile inputs + output tile + one
    /// tile-sized scratch region (+ nothing else).
    pub exec_space_per_core: u64,
    /// FLOPs of one (padded) tile.
    pub tile_flops: f64,
    /// Bytes a core streams through its local SRAM for one tile: inputs
    /// once, output twice.
    pub touch_bytes_per_core: u64,
    /// Partial-sum bytes exchanged per core when the contraction dim is
    /// split (allreduce over the K group), zero otherwise.
    pub reduce_bytes_per_core: u64,
    /// Axis index of the contraction split when factors[axis] > 1.
    pub reduce_axis: Option<usize>,
    pub shared: Vec<SharedInput>,
    /// Unshared HBM inputs each core receives whole at preload, as
    /// (input index, slice bytes) pairs.
    pub private_hbm_inputs: Vec<(usize, u64)>,
}

impl PartitionPlan {
    pub fn shared_hbm_bytes_per_core(&self) -> u64 {
        self.shared
            .iter()
            .filter(|s| s.from_hbm)
            .map(|s| s.slice_bytes)
            .sum()
    }

    pub fn private_hbm_bytes_per_core(&self) -> u64 {
        self.private_hbm_inputs.iter().map(|&(_, b)| b).sum()
    }

    /// Distinct HBM bytes read for the whole operator: every private slice
    /// once per tile plus each shared slice once per sharing group. The
    /// pipe reads each byte once regardless of how many cores receive a
    /// copy, so this is independent of the chunk factor.
    pub fn hbm_unique_bytes_total(&self) -> u64 {
        let mut total = self.num_tiles * self.private_hbm_bytes_per_core();
        for s in self.shared.iter().filter(|s| s.from_hbm) {
            total += (self.num_tiles / s.group_size) * s.slice_bytes;
        }
        total
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreloadStatePlan {
    pub id: usize,
    pub plan_id: usize,
    pub chunk_factor: u64,
    /// Per-core bytes resident while the operator waits for execution.
    pub preload_space_per_core: u64,
    /// Per-core bytes delivered from HBM controllers at preload (equals the
    /// preload-state footprint: only HBM data is preloaded).
    pub preload_bytes_per_core: u64,
    /// Per-core bytes fetched from peers during data distribution.
    pub dist_bytes_per_core: u64,
}

/// Generic (memory, time) point; `index` refers back into the plan list the
/// curve was built from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParetoPoint {
    pub memory_bytes: u64,
    pub time_seconds: f64,
    pub index: usize,
}

/// Non-dominated points sorted by memory descending; time is strictly
/// increasing as memory decreases.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParetoCurve {
    pub points: Vec<ParetoPoint>,
}

impl ParetoCurve {
    pub fn fastest(&self) -> &ParetoPoint {
        &self.points[0]
    }

    pub fn smallest(&self) -> &ParetoPoint {
        self.points.last().expect("empty pareto curve")
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Partitionable dimensions of an operator, in factor-vector order.
///
/// MatMul: [M, N, K]. BatchMatMul: [B, M, N, K]. Everything else: the
/// flattened output length.
pub fn partition_dims(op: &OperatorSpec) -> Result<Vec<u64>> {
    match op.op_type {
        OpType::MatMul => {
            let (a, b) = matmul_inputs(op)?;
            let (m, k) = (a.dims[0], a.dims[1]);
            let (k2, n) = (b.dims[0], b.dims[1]);
            if k != k2 {
                return Err(Error::InvalidInput(format!(
                    "operator {}: contraction mismatch {k} vs {k2}",
                    op.id
                )));
            }
            Ok(vec![m, n, k])
        }
        OpType::BatchMatMul => {
            let (a, b) = matmul_inputs(op)?;
            if a.dims.len() != 3 || b.dims.len() != 3 || a.dims[0] != b.dims[0] {
                return Err(Error::InvalidInput(format!(
                    "operator {}: batch_matmul needs [B,M,K] x [B,K,N] inputs",
                    op.id
                )));
            }
            let (bt, m, k) = (a.dims[0], a.dims[1], a.dims[2]);
            let (k2, n) = (b.dims[1], b.dims[2]);
            if k != k2 {
                return Err(Error::InvalidInput(format!(
                    "operator {}: contraction mismatch {k} vs {k2}",
                    op.id
                )));
            }
            Ok(vec![bt, m, n, k])
        }
        _ => Ok(vec![op.output.num_elements()]),
    }
}

fn matmul_inputs(op: &OperatorSpec) -> Result<(&crate::model::TensorSpec, &crate::model::TensorSpec)> {
    if op.inputs.len() != 2 {
        return Err(Error::InvalidInput(format!(
            "operator {}: matmul-class needs exactly 2 inputs, got {}",
            op.id,
            op.inputs.len()
        )));
    }
    let a = &op.inputs[0];
    let b = &op.inputs[1];
    let want = if op.op_type == OpType::MatMul { 2 } else { 3 };
    if a.dims.len() != want || b.dims.len() != want {
        return Err(Error::InvalidInput(format!(
            "operator {}: expected rank-{want} matmul inputs",
            op.id
        )));
    }
    Ok((a, b))
}

fn div_ceil(a: u64, b: u64) -> u64 {
    a.div_ceil(b)
}

/// Factor candidates for one dimension: its divisors plus powers of two,
/// capped at min(dim, num_cores).
fn factor_candidates(dim: u64, num_cores: u64) -> Vec<u64> {
    let cap = dim.min(num_cores);
    let mut out: Vec<u64> = Vec::new();
    let mut d = 1u64;
    while d * d <= dim {
        if dim % d == 0 {
            if d <= cap {
                out.push(d);
            }
            let q = dim / d;
            if q <= cap {
                out.push(q);
            }
        }
        d += 1;
    }
    let mut p = 1u64;
    while p <= cap {
        out.push(p);
        p *= 2;
    }
    out.sort_unstable();
    out.dedup();
    out
}

fn build_plan(op: &OperatorSpec, dims: &[u64], factors: &[u64], id: usize) -> PartitionPlan {
    let num_tiles: u64 = factors.iter().product();
    let tile_dims: Vec<u64> = dims
        .iter()
        .zip(factors)
        .map(|(&d, &f)| div_ceil(d, f))
        .collect();

    let padded_frac: f64 = tile_dims
        .iter()
        .zip(factors)
        .zip(dims)
        .map(|((&t, &f), &d)| (t * f) as f64 / d as f64)
        .product();
    let tile_flops = op.flops * padded_frac / num_tiles as f64;

    let mut shared: Vec<SharedInput> = Vec::new();
    let mut private_hbm: Vec<(usize, u64)> = Vec::new();
    let mut input_bytes = 0u64;

    match op.op_type {
        OpType::MatMul | OpType::BatchMatMul => {
            let batch_off = if op.op_type == OpType::BatchMatMul { 1 } else { 0 };
            let (m_ax, n_ax, k_ax) = (batch_off, batch_off + 1, batch_off + 2);
            let bt = if batch_off == 1 { tile_dims[0] } else { 1 };
            let ea = op.inputs[0].element_size;
            let eb = op.inputs[1].element_size;
            // A slice: (bt) x m x k, identical across the N axis
            let a_bytes = bt * tile_dims[m_ax] * tile_dims[k_ax] * ea;
            // B slice: (bt) x k x n, identical across the M axis
            let b_bytes = bt * tile_dims[k_ax] * tile_dims[n_ax] * eb;
            input_bytes = a_bytes + b_bytes;
            for (idx, bytes, axis) in [(0usize, a_bytes, n_ax), (1usize, b_bytes, m_ax)] {
                let group = factors[axis];
                let from_hbm = op.inputs[idx].residence == Residence::Hbm;
                if group > 1 {
                    shared.push(SharedInput {
                        input_index: idx,
                        varies_axis: axis,
                        group_size: group,
                        slice_bytes: bytes,
                        from_hbm,
                    });
                } else if from_hbm {
                    private_hbm.push((idx, bytes));
                }
            }
        }
        _ => {
            let out_elems = op.output.num_elements();
            let tile_len = tile_dims[0];
            for (idx, inp) in op.inputs.iter().enumerate() {
                let elems = inp.num_elements();
                if elems % out_elems == 0 {
                    // sliced alongside the output (ratio 1 for same-shape
                    // inputs, larger for reductions); private
                    let bytes = (elems / out_elems) * tile_len * inp.element_size;
                    input_bytes += bytes;
                    if inp.residence == Residence::Hbm {
                        private_hbm.push((idx, bytes));
                    }
                } else {
                    // broadcast parameter shared by every tile
                    let bytes = inp.byte_size();
                    input_bytes += bytes;
                    let from_hbm = inp.residence == Residence::Hbm;
                    if factors[0] > 1 {
                        shared.push(SharedInput {
                            input_index: idx,
                            varies_axis: 0,
                            group_size: factors[0],
                            slice_bytes: bytes,
                            from_hbm,
                        });
                    } else if from_hbm {
                        private_hbm.push((idx, bytes));
                    }
                }
            }
        }
    }

    let out_tile_bytes = match op.op_type {
        OpType::MatMul => tile_dims[0] * tile_dims[1] * op.output.element_size,
        OpType::BatchMatMul => tile_dims[0] * tile_dims[1] * tile_dims[2] * op.output.element_size,
        _ => tile_dims[0] * op.output.element_size,
    };

    let (reduce_axis, reduce_bytes) = match op.op_type {
        OpType::MatMul | OpType::BatchMatMul => {
            let k_ax = factors.len() - 1;
            let c = factors[k_ax];
            if c > 1 {
                // allreduce over the K group: reduce-scatter + allgather
                let bytes = 2 * out_tile_bytes * (c - 1) / c;
                (Some(k_ax), bytes)
            } else {
                (None, 0)
            }
        }
        _ => (None, 0),
    };

    let exec_space = input_bytes + 2 * out_tile_bytes;
    let touch = input_bytes + 2 * out_tile_bytes;

    PartitionPlan {
        id,
        factors: factors.to_vec(),
        num_tiles,
        exec_space_per_core: exec_space,
        tile_flops,
        touch_bytes_per_core: touch,
        reduce_bytes_per_core: reduce_bytes,
        reduce_axis,
        shared,
        private_hbm_inputs: private_hbm,
    }
}

/// Enumerate feasible partition plans for an operator on a chip: every
/// factor combination with `num_tiles <= num_cores` whose execute-state
/// footprint fits in usable SRAM. Mesh topologies additionally require at
/// most two partitioned dimensions, fitting the grid shape.
pub fn enumerate_partition_plans(op: &OperatorSpec, cfg: &ChipConfig) -> Result<Vec<PartitionPlan>> {
    let dims = partition_dims(op)?;
    let cores = cfg.num_cores as u64;
    let usable = cfg.usable_sram_per_core();
    let cands: Vec<Vec<u64>> = dims.iter().map(|&d| factor_candidates(d, cores)).collect();

    let mut plans = Vec::new();
    let mut factors = vec![1u64; dims.len()];
    enumerate_rec(&dims, &cands, cores, 0, &mut factors, &mut |factors| {
        if let TopologyKind::Mesh2d = cfg.topology.kind {
            let split: Vec<u64> = factors.iter().copied().filter(|&f| f > 1).collect();
            let (rows, cols) = cfg.mesh_dims();
            match split.len() {
                0 => {}
                // one axis snakes row-major across the whole grid
                1 => {
                    if split[0] > (rows * cols) as u64 {
                        return;
                    }
                }
                2 => {
                    if split[0] > rows as u64 || split[1] > cols as u64 {
                        return;
                    }
                }
                _ => return,
            }
        }
        let plan = build_plan(op, &dims, factors, plans.len());
        if plan.exec_space_per_core <= usable {
            plans.push(plan);
        }
    });

    if plans.is_empty() {
        return Err(Error::NoFeasiblePlan {
            op: op.id,
            reason: format!(
                "no factor combination fits {} usable bytes per core",
                usable
            ),
        });
    }
    Ok(plans)
}

fn enumerate_rec(
    dims: &[u64],
    cands: &[Vec<u64>],
    budget: u64,
    axis: usize,
    factors: &mut Vec<u64>,
    emit: &mut impl FnMut(&[u64]),
) {
    if axis == dims.len() {
        emit(factors);
        return;
    }
    for &f in &cands[axis] {
        if f > budget {
            break;
        }
        factors[axis] = f;
        enumerate_rec(dims, cands, budget / f, axis + 1, factors, emit);
    }
    factors[axis] = 1;
}

/// Deterministic tile-to-core mapping. All-to-all assigns tiles to cores
/// sequentially; the mesh places a two-axis split on a row-major sub-grid
/// anchored at the top-left corner and snakes a single-axis split row-major
/// across the full grid.
pub fn map_tiles_to_cores(plan: &PartitionPlan, cfg: &ChipConfig) -> Vec<NodeId> {
    let n = plan.num_tiles as usize;
    match cfg.topology.kind {
        TopologyKind::AllToAll => (0..n).collect(),
        TopologyKind::Mesh2d => {
            let split: Vec<u64> = plan.factors.iter().copied().filter(|&f| f > 1).collect();
            let (_, cols) = cfg.mesh_dims();
            if split.len() <= 1 {
                return (0..n).map(|i| cfg.core_at((i / cols, i % cols))).collect();
            }
            let rdim = split[0] as usize;
            let cdim = split[1] as usize;
            let mut out = Vec::with_capacity(n);
            for i in 0..rdim {
                for j in 0..cdim {
                    out.push(cfg.core_at((i, j)));
                }
            }
            debug_assert_eq!(out.len(), n);
            out
        }
    }
}

/// Tile index (row-major over the factor grid) of each coordinate axis.
pub fn tile_coords(plan: &PartitionPlan, tile: usize) -> Vec<u64> {
    let mut rem = tile as u64;
    let mut coords = vec![0u64; plan.factors.len()];
    for ax in (0..plan.factors.len()).rev() {
        coords[ax] = rem % plan.factors[ax];
        rem /= plan.factors[ax];
    }
    coords
}

/// Enumerate preload-state plans for a fixed partition plan: every power-
/// of-two chunk factor dividing all shared-HBM group sizes. Operators with
/// no shared HBM data get the single trivial plan (chunk 1, no
/// distribution).
pub fn enumerate_preload_plans(plan: &PartitionPlan) -> Vec<PreloadStatePlan> {
    let groups: Vec<u64> = plan
        .shared
        .iter()
        .filter(|s| s.from_hbm)
        .map(|s| s.group_size)
        .collect();

    let max_f = groups.iter().copied().min().unwrap_or(1);
    let mut out = Vec::new();
    let mut f = 1u64;
    while f <= max_f {
        if groups.iter().all(|&g| g % f == 0) {
            let mut preload = plan.private_hbm_bytes_per_core();
            let mut dist = 0u64;
            for s in plan.shared.iter().filter(|s| s.from_hbm) {
                preload += div_ceil(s.slice_bytes, f);
                dist += s.slice_bytes - s.slice_bytes / f;
            }
            out.push(PreloadStatePlan {
                id: out.len(),
                plan_id: plan.id,
                chunk_factor: f,
                preload_space_per_core: preload,
                preload_bytes_per_core: preload,
                dist_bytes_per_core: dist,
            });
        }
        f *= 2;
    }
    out
}

/// Filter to the non-dominated points. A point dominates another when its
/// memory and time are both no larger and at least one is strictly
/// smaller; exact ties on both axes keep the lowest index. The result is
/// sorted by memory descending with time strictly increasing.
pub fn pareto_frontier(points: &[ParetoPoint]) -> ParetoCurve {
    let mut sorted: Vec<ParetoPoint> = points.to_vec();
    sorted.sort_by(|a, b| {
        a.memory_bytes
            .cmp(&b.memory_bytes)
            .then(a.time_seconds.total_cmp(&b.time_seconds))
            .then(a.index.cmp(&b.index))
    });
    let mut kept: Vec<ParetoPoint> = Vec::new();
    let mut best_time = f64::INFINITY;
    for p in sorted {
        if p.time_seconds < best_time {
            best_time = p.time_seconds;
            kept.push(p);
        }
    }
    kept.reverse();
    ParetoCurve { points: kept }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hw::preset;
    use crate::model::{Residence, TensorSpec};

    fn tensor(name: &str, dims: &[u64], res: Residence) -> TensorSpec {
        TensorSpec {
            name: name.into(),
            dims: dims.to_vec(),
            element_size: 2,
            residence: res,
        }
    }

    fn matmul_op(m: u64, n: u64, k: u64) -> OperatorSpec {
        OperatorSpec {
            id: 1,
            op_type: OpType::MatMul,
            inputs: vec![
                tensor("a", &[m, k], Residence::Intermediate),
                tensor("w", &[k, n], Residence::Hbm),
            ],
            output: tensor("o", &[m, n], Residence::Intermediate),
            flops: 2.0 * m as f64 * n as f64 * k as f64,
            hbm_load_bytes: k * n * 2,
        }
    }

    fn small_chip(num_cores: usize) -> ChipConfig {
        let mut cfg = preset("ipu-mk2-a2a").unwrap();
        cfg.num_cores = num_cores;
        cfg.hbm.num_controllers = 2;
        cfg
    }

    #[test]
    fn factors_90_by_9_give_810_tiles() {
        let cfg = small_chip(1024);
        let op = matmul_op(1440, 144, 64);
        let plans = enumerate_partition_plans(&op, &cfg).unwrap();
        let p = plans
            .iter()
            .find(|p| p.factors == vec![90, 9, 1])
            .expect("missing (90,9,1) plan");
        assert_eq!(p.num_tiles, 810);
    }

    #[test]
    fn single_tile_plan_included_when_it_fits() {
        let cfg = small_chip(16);
        let op = matmul_op(64, 64, 64);
        let plans = enumerate_partition_plans(&op, &cfg).unwrap();
        assert!(plans.iter().any(|p| p.num_tiles == 1));
    }

    #[test]
    fn enumeration_matches_brute_force_triple_loop() {
        let cfg = small_chip(4);
        let op = matmul_op(64, 64, 64);
        let plans = enumerate_partition_plans(&op, &cfg).unwrap();
        let usable = cfg.usable_sram_per_core();
        let mut expect = 0;
        for a in [1u64, 2, 4] {
            for b in [1u64, 2, 4] {
                for c in [1u64, 2, 4] {
                    if a * b * c > 4 {
                        continue;
                    }
                    let m = 64 / a;
                    let n = 64 / b;
                    let kk = 64 / c;
                    let fits = (m * kk * 2 + kk * n * 2 + 2 * m * n * 2) <= usable;
                    if fits {
                        expect += 1;
                    }
                }
            }
        }
        assert_eq!(plans.len(), expect);
    }

    #[test]
    fn matmul_sharing_groups() {
        let cfg = small_chip(16);
        let op = matmul_op(64, 64, 64);
        let plans = enumerate_partition_plans(&op, &cfg).unwrap();
        let p = plans.iter().find(|p| p.factors == vec![4, 4, 1]).unwrap();
        // A is shared across the N axis (group 4), W across the M axis
        assert_eq!(p.shared.len(), 2);
        let a = &p.shared[0];
        assert_eq!((a.input_index, a.group_size, a.from_hbm), (0, 4, false));
        assert_eq!(a.slice_bytes, 16 * 64 * 2);
        let w = &p.shared[1];
        assert_eq!((w.input_index, w.group_size, w.from_hbm), (1, 4, true));
        assert_eq!(w.slice_bytes, 64 * 16 * 2);
    }

    #[test]
    fn preload_fractions_follow_chunk_factor() {
        let cfg = small_chip(16);
        let op = matmul_op(64, 64, 64);
        let plans = enumerate_partition_plans(&op, &cfg).unwrap();
        let p = plans.iter().find(|p| p.factors == vec![4, 4, 1]).unwrap();
        let shared_hbm = p.shared_hbm_bytes_per_core();
        assert_eq!(shared_hbm, 64 * 16 * 2);
        let pres = enumerate_preload_plans(p);
        assert_eq!(pres.len(), 3); // chunk factors 1, 2, 4
        for (pp, f) in pres.iter().zip([1u64, 2, 4]) {
            assert_eq!(pp.chunk_factor, f);
            assert_eq!(pp.preload_space_per_core, shared_hbm / f);
            assert_eq!(pp.dist_bytes_per_core, shared_hbm - shared_hbm / f);
            // conservation: preload + distribution covers the working set
            assert_eq!(
                pp.preload_bytes_per_core + pp.dist_bytes_per_core,
                shared_hbm + p.private_hbm_bytes_per_core()
            );
        }
        // monotone: space shrinks, distribution grows
        for w in pres.windows(2) {
            assert!(w[1].preload_space_per_core < w[0].preload_space_per_core);
            assert!(w[1].dist_bytes_per_core > w[0].dist_bytes_per_core);
        }
    }

    #[test]
    fn no_shared_data_gives_trivial_preload_plan() {
        let cfg = small_chip(16);
        let mut op = matmul_op(64, 64, 64);
        op.inputs[1].residence = Residence::Intermediate;
        let plans = enumerate_partition_plans(&op, &cfg).unwrap();
        let p = plans.iter().find(|p| p.factors == vec![4, 4, 1]).unwrap();
        let pres = enumerate_preload_plans(p);
        assert_eq!(pres.len(), 1);
        assert_eq!(pres[0].chunk_factor, 1);
        assert_eq!(pres[0].dist_bytes_per_core, 0);
        assert_eq!(pres[0].preload_space_per_core, 0);
    }

    #[test]
    fn elementwise_broadcast_param_is_shared() {
        let cfg = small_chip(8);
        let op = OperatorSpec {
            id: 1,
            op_type: OpType::LayerNorm,
            inputs: vec![
                tensor("x", &[32, 64], Residence::Intermediate),
                tensor("gamma", &[64], Residence::Hbm),
            ],
            output: tensor("y", &[32, 64], Residence::Intermediate),
            flops: 32.0 * 64.0 * 8.0,
            hbm_load_bytes: 64 * 2,
        };
        let plans = enumerate_partition_plans(&op, &cfg).unwrap();
        let p = plans.iter().find(|p| p.factors == vec![8]).unwrap();
        assert_eq!(p.shared.len(), 1);
        assert_eq!(p.shared[0].group_size, 8);
        assert_eq!(p.shared[0].slice_bytes, 64 * 2);
        assert!(p.shared[0].from_hbm);
    }

    #[test]
    fn a2a_mapping_is_sequential() {
        let cfg = small_chip(16);
        let op = matmul_op(64, 64, 64);
        let plans = enumerate_partition_plans(&op, &cfg).unwrap();
        let p = plans.iter().find(|p| p.num_tiles == 8).unwrap();
        assert_eq!(map_tiles_to_cores(p, &cfg), (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn mesh_mapping_uses_top_left_subgrid() {
        let mut cfg = small_chip(16);
        cfg.topology.kind = TopologyKind::Mesh2d;
        cfg.topology.mesh_dims = Some((4, 4));
        cfg.topology.hbm_edge_coords = vec![(0, 0), (0, 3)];
        cfg.validate().unwrap();
        let op = matmul_op(64, 96, 64);
        let plans = enumerate_partition_plans(&op, &cfg).unwrap();
        let p = plans.iter().find(|p| p.factors == vec![2, 3, 1]).unwrap();
        // 2x3 tile grid lands on rows 0..2, cols 0..3
        assert_eq!(map_tiles_to_cores(p, &cfg), vec![0, 1, 2, 4, 5, 6]);
    }

    #[test]
    fn mesh_rejects_three_way_splits() {
        let mut cfg = small_chip(16);
        cfg.topology.kind = TopologyKind::Mesh2d;
        cfg.topology.mesh_dims = Some((4, 4));
        cfg.topology.hbm_edge_coords = vec![(0, 0), (0, 3)];
        let op = matmul_op(64, 64, 64);
        let plans = enumerate_partition_plans(&op, &cfg).unwrap();
        assert!(plans
            .iter()
            .all(|p| p.factors.iter().filter(|&&f| f > 1).count() <= 2));
    }

    #[test]
    fn pareto_matches_brute_force_on_fixed_set() {
        let pts = vec![
            ParetoPoint { memory_bytes: 10, time_seconds: 1.0, index: 0 },
            ParetoPoint { memory_bytes: 6, time_seconds: 2.0, index: 1 },
            ParetoPoint { memory_bytes: 8, time_seconds: 1.5, index: 2 },
            ParetoPoint { memory_bytes: 12, time_seconds: 0.9, index: 3 },
            ParetoPoint { memory_bytes: 6, time_seconds: 2.0, index: 4 }, // tie with 1
            ParetoPoint { memory_bytes: 7, time_seconds: 3.0, index: 5 }, // dominated by 1
        ];
        let frontier = pareto_frontier(&pts);
        let idx: Vec<usize> = frontier.points.iter().map(|p| p.index).collect();
        assert_eq!(idx, vec![3, 0, 2, 1]);
        for w in frontier.points.windows(2) {
            assert!(w[0].memory_bytes > w[1].memory_bytes);
            assert!(w[0].time_seconds < w[1].time_seconds);
        }
    }

    #[test]
    fn tile_coords_row_major() {
        let cfg = small_chip(16);
        let op = matmul_op(64, 64, 64);
        let plans = enumerate_partition_plans(&op, &cfg).unwrap();
        let p = plans.iter().find(|p| p.factors == vec![2, 4, 2]).unwrap();
        assert_eq!(tile_coords(p, 0), vec![0, 0, 0]);
        assert_eq!(tile_coords(p, 1), vec![0, 0, 1]);
        assert_eq!(tile_coords(p, 2), vec![0, 1, 0]);
        assert_eq!(tile_coords(p, 15), vec![1, 3, 1]);
    }
}
