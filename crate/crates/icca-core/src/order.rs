//! Preload-order enumeration and search.
//!
//! A preload order sigma is statically valid when just-in-time targets do
//! not overflow memory: for every operator m, its smallest execute
//! footprint plus the smallest preload footprints of every operator that
//! executes after m but preloads no later than P(m) must fit, where P(m)
//! is the highest sigma position among operators executed up to m. This is
//! the weakest requirement any target assignment must satisfy, so orders
//! failing it are unusable at any depth.
//!
//! Orders are enumerated backwards (last preload slot first) over the
//! positions originally held by HBM-heavy operators; light operators keep
//! their positions. Placing an operator fixes its validity check exactly
//! once, so each tree node does O(n) work. Whole-model search derives a
//! pattern on one representative layer and replays it across every
//! identical layer.

use rayon::prelude::*;

use crate::schedule::{schedule_with_order, CompiledOp, EndToEndPlan, EvalEnv, Timeline};
use crate::{Error, Result};

/// Static validity of a preload order (see module docs). O(n^2).
pub fn order_is_valid(sigma: &[usize], ops: &[CompiledOp], capacity: u64) -> bool {
    let n = ops.len();
    let mut pos = vec![0usize; n];
    for (q, &j) in sigma.iter().enumerate() {
        pos[j] = q;
    }
    let mut p_run = 0usize;
    for m in 0..n {
        p_run = p_run.max(pos[m]);
        let mut occ = ops[m].min_exec_mem();
        for j in (m + 1)..n {
            if pos[j] <= p_run {
                occ = occ.saturating_add(ops[j].min_preload_mem());
            }
        }
        if occ > capacity {
            return false;
        }
    }
    true
}

/// Enumerate statically valid preload orders. Operators flagged in
/// `heavy` may permute across the positions those operators originally
/// hold; everything else keeps its position. Candidates at each slot are
/// tried in descending index order, so the in-order sigma (when valid) is
/// emitted first. At most `limit` orders are returned.
pub fn enumerate_valid_orders(
    ops: &[CompiledOp],
    heavy: &[bool],
    capacity: u64,
    limit: usize,
) -> Vec<Vec<usize>> {
    let n = ops.len();
    assert_eq!(heavy.len(), n);
    let mut out = Vec::new();
    if n == 0 || limit == 0 {
        return out;
    }
    let mut assigned: Vec<Option<usize>> = vec![None; n]; // position -> op
    let mut used = vec![false; n];
    fill(ops, heavy, capacity, limit, n, &mut assigned, &mut used, &mut out);
    out
}

#[allow(clippy::too_many_arguments)]
fn fill(
    ops: &[CompiledOp],
    heavy: &[bool],
    capacity: u64,
    limit: usize,
    q: usize, // next position to fill is q-1
    assigned: &mut Vec<Option<usize>>,
    used: &mut Vec<bool>,
    out: &mut Vec<Vec<usize>>,
) {
    if out.len() >= limit {
        return;
    }
    if q == 0 {
        out.push(assigned.iter().map(|o| o.unwrap()).collect());
        return;
    }
    let slot = q - 1;
    let candidates: Vec<usize> = if heavy[slot] {
        (0..ops.len()).rev().filter(|&m| heavy[m] && !used[m]).collect()
    } else {
        vec![slot]
    };
    for m in candidates {
        if placement_fits(ops, capacity, slot, m, assigned, used) {
            assigned[slot] = Some(m);
            used[m] = true;
            fill(ops, heavy, capacity, limit, slot, assigned, used, out);
            assigned[slot] = None;
            used[m] = false;
            if out.len() >= limit {
                return;
            }
        }
    }
}

/// Check operator m placed at position `slot`: its execute instant must
/// fit alongside the smallest preload footprints of every later-executing
/// operator that is either still unassigned (it will preload earlier) or
/// already assigned at a position not beyond P(m).
fn placement_fits(
    ops: &[CompiledOp],
    capacity: u64,
    slot: usize,
    m: usize,
    assigned: &[Option<usize>],
    used: &[bool],
) -> bool {
    let mut p_m = slot;
    for (qq, a) in assigned.iter().enumerate().skip(slot + 1) {
        if let Some(j) = a {
            if *j < m {
                p_m = p_m.max(qq);
            }
        }
    }
    let mut occ = ops[m].min_exec_mem();
    for j in (m + 1)..ops.len() {
        let resident = if used[j] {
            // assigned somewhere above slot; resident iff within P(m)
            assigned
                .iter()
                .enumerate()
                .skip(slot + 1)
                .any(|(qq, a)| *a == Some(j) && qq <= p_m)
        } else {
            true // will land below slot: preloads before m
        };
        if resident {
            occ = occ.saturating_add(ops[j].min_preload_mem());
        }
    }
    occ <= capacity
}

#[derive(Debug, Clone, Default)]
pub struct OrderSearchStats {
    pub orders_evaluated: usize,
    pub patterns_per_group: Vec<usize>,
}

/// Search preload orders for the whole model. Layer boundaries are
/// half-open index ranges (0-based) over the compiled operator list;
/// `identical_groups` lists layer indices sharing a shape signature. One
/// group at a time, patterns enumerated on its first layer are replayed
/// across all its layers and scheduled; the best patterns of all groups
/// are then combined once. The in-order schedule is always a candidate.
pub fn search_best_order(
    ops: &[CompiledOp],
    layers: &[(usize, usize)],
    identical_groups: &[Vec<usize>],
    heavy: &[bool],
    env: &EvalEnv,
    limit: usize,
) -> Result<(EndToEndPlan, Timeline, OrderSearchStats)> {
    let n = ops.len();
    let mut stats = OrderSearchStats::default();

    let in_order: Vec<usize> = (0..n).collect();
    let mut best = schedule_with_order(ops, &in_order, env)?;
    stats.orders_evaluated = 1;

    let mut best_group_patterns: Vec<Option<Vec<usize>>> = vec![None; identical_groups.len()];

    for (gi, group) in identical_groups.iter().enumerate() {
        let (s, e) = layers[group[0]];
        let span = e - s;
        if span == 0 {
            continue;
        }
        let sub_heavy = &heavy[s..e];
        if sub_heavy.iter().filter(|&&h| h).count() < 2 {
            continue;
        }
        let patterns = enumerate_valid_orders(&ops[s..e], sub_heavy, env.capacity, limit);
        stats.patterns_per_group.push(patterns.len());

        let scored: Vec<Option<(f64, usize)>> = patterns
            .par_iter()
            .enumerate()
            .map(|(pi, pattern)| {
                if pattern.iter().enumerate().all(|(k, &v)| k == v) {
                    return None; // in-order already scheduled
                }
                let sigma = apply_pattern(n, layers, group, pattern);
                match schedule_with_order(ops, &sigma, env) {
                    Ok((_, t, _)) => Some((t.makespan, pi)),
                    Err(_) => None,
                }
            })
            .collect();
        stats.orders_evaluated += scored.iter().flatten().count();

        let mut group_best: Option<(f64, usize)> = None;
        for s in scored.into_iter().flatten() {
            let better = match group_best {
                None => true,
                Some(b) => s.0 < b.0 || (s.0 == b.0 && s.1 < b.1),
            };
            if better {
                group_best = Some(s);
            }
        }
        if let Some((mk, pi)) = group_best {
            if mk < best.1.makespan {
                let sigma = apply_pattern(n, layers, group, &patterns[pi]);
                best = schedule_with_order(ops, &sigma, env)?;
                best_group_patterns[gi] = Some(patterns[pi].clone());
            }
        }
    }

    // combine the winning patterns of every group into one candidate
    if best_group_patterns.iter().filter(|p| p.is_some()).count() > 1 {
        let mut sigma = in_order.clone();
        for (gi, pat) in best_group_patterns.iter().enumerate() {
            if let Some(pat) = pat {
                overlay_pattern(&mut sigma, layers, &identical_groups[gi], pat);
            }
        }
        if let Ok(combined) = schedule_with_order(ops, &sigma, env) {
            stats.orders_evaluated += 1;
            if combined.1.makespan < best.1.makespan {
                best = combined;
            }
        }
    }

    Ok((best.0, best.1, stats))
}

fn apply_pattern(
    n: usize,
    layers: &[(usize, usize)],
    group: &[usize],
    pattern: &[usize],
) -> Vec<usize> {
    let mut sigma: Vec<usize> = (0..n).collect();
    overlay_pattern(&mut sigma, layers, group, pattern);
    sigma
}

fn overlay_pattern(sigma: &mut [usize], layers: &[(usize, usize)], group: &[usize], pattern: &[usize]) {
    for &li in group {
        let (s, e) = layers[li];
        debug_assert_eq!(e - s, pattern.len());
        for (k, &v) in pattern.iter().enumerate() {
            sigma[s + k] = s + v;
        }
    }
}

/// Layer boundaries of a model as 0-based half-open index ranges. Models
/// without declared layers are treated as one single layer.
pub fn layer_index_ranges(model: &crate::model::ModelGraph) -> Vec<(usize, usize)> {
    if model.layer_boundaries.is_empty() {
        vec![(0, model.num_operators())]
    } else {
        model
            .layer_boundaries
            .iter()
            .map(|&(start, end)| (start - 1, end))
            .collect()
    }
}

/// Convenience: schedule a model with order search when it has identical
/// layers, falling back to the in-order schedule otherwise.
pub fn schedule_best_order(
    model: &crate::model::ModelGraph,
    ops: &[CompiledOp],
    env: &EvalEnv,
    limit: usize,
) -> Result<(EndToEndPlan, Timeline, OrderSearchStats)> {
    if ops.is_empty() {
        return Err(Error::EmptyModel);
    }
    let heavy_set = crate::model::classify_hbm_heavy(model);
    let heavy: Vec<bool> = (0..ops.len()).map(|i| heavy_set.ids.contains(&(i + 1))).collect();
    let layers = layer_index_ranges(model);
    let groups = if model.layer_boundaries.is_empty() {
        vec![vec![0usize]]
    } else {
        crate::model::detect_identical_layers(model)
    };
    search_best_order(ops, &layers, &groups, &heavy, env, limit)
}
