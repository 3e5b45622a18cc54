//! Window allocator: distributes per-core SRAM between the executing
//! operator's execute state and the resident operators' preload states.
//!
//! Every member starts at the fastest (largest) point of its Pareto curve;
//! a greedy walk then repeatedly moves one member a step down its curve
//! until the selection fits. Steps are ranked by delta = space reduced per
//! unit of objective time added; steps that add no time are taken first.
//! The walk stops at the first fitting selection and records a step log so
//! the decision sequence can be replayed and audited.

use crate::plans::ParetoCurve;
use crate::{Error, Result};

/// One member of an allocation window: the executing operator uses its
/// execute-state curve, residents use preload-state curves.
#[derive(Debug, Clone)]
pub struct AllocMember {
    pub op_id: usize,
    pub curve: ParetoCurve,
}

#[derive(Debug, Clone)]
pub struct AllocationProblem {
    pub executing: AllocMember,
    pub residents: Vec<AllocMember>,
    /// Usable bytes per core.
    pub capacity: u64,
    /// Per-link bandwidth used by the contention terms.
    pub link_bandwidth: f64,
    /// Whether inbound traffic steals SRAM cycles from the executing cores.
    pub blocking: bool,
}

/// One step of the greedy walk: `member` 0 is the executing operator,
/// residents follow in problem order. Points index into that member's
/// curve.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocStep {
    pub member: usize,
    pub from_point: usize,
    pub to_point: usize,
    pub space_reduced: u64,
    pub time_increased: f64,
}

#[derive(Debug, Clone)]
pub struct AllocationSolution {
    /// Chosen point index on the executing curve.
    pub exec_point: usize,
    /// Chosen point index per resident, in problem order.
    pub resident_points: Vec<usize>,
    /// Window objective at the final selection.
    pub total_time: f64,
    pub used_bytes: u64,
    pub steps: Vec<AllocStep>,
}

impl AllocationProblem {
    fn member_curve(&self, member: usize) -> &ParetoCurve {
        if member == 0 {
            &self.executing.curve
        } else {
            &self.residents[member - 1].curve
        }
    }

    fn num_members(&self) -> usize {
        1 + self.residents.len()
    }
}

/// Bytes used by a selection: execute footprint plus every resident's
/// preload footprint.
pub fn selection_bytes(problem: &AllocationProblem, exec_point: usize, resident_points: &[usize]) -> u64 {
    let mut total = problem.executing.curve.points[exec_point].memory_bytes;
    for (m, &pt) in problem.residents.iter().zip(resident_points) {
        total += m.curve.points[pt].memory_bytes;
    }
    total
}

/// Window objective for a selection, four components: the executing
/// operator's execute time, the residents' distribution times, the
/// serialization overhead of the resident preload deliveries beyond the
/// largest single delivery, and (blocking SRAM only) the service time the
/// executing cores spend receiving those deliveries.
pub fn window_objective(
    problem: &AllocationProblem,
    exec_point: usize,
    resident_points: &[usize],
) -> f64 {
    let exec = problem.executing.curve.points[exec_point].time_seconds;
    let mut dist_sum = 0.0;
    let mut pre_sum = 0u64;
    let mut pre_max = 0u64;
    for (m, &pt) in problem.residents.iter().zip(resident_points) {
        let p = m.curve.points[pt];
        dist_sum += p.time_seconds;
        pre_sum += p.memory_bytes;
        pre_max = pre_max.max(p.memory_bytes);
    }
    let contention = (pre_sum - pre_max) as f64 / problem.link_bandwidth;
    let blocking = if problem.blocking {
        pre_sum as f64 / problem.link_bandwidth
    } else {
        0.0
    };
    exec + dist_sum + contention + blocking
}

/// Run the greedy walk. Errors with `AllocInfeasible` when even the
/// smallest points of every curve exceed capacity.
pub fn allocate(problem: &AllocationProblem) -> Result<AllocationSolution> {
    let n = problem.num_members();
    let min_needed: u64 = (0..n)
        .map(|m| problem.member_curve(m).smallest().memory_bytes)
        .sum();
    if min_needed > problem.capacity {
        return Err(Error::AllocInfeasible {
            needed: min_needed,
            capacity: problem.capacity,
        });
    }

    let mut exec_point = 0usize;
    let mut resident_points = vec![0usize; problem.residents.len()];
    let mut steps = Vec::new();

    loop {
        let used = selection_bytes(problem, exec_point, &resident_points);
        if used <= problem.capacity {
            let total_time = window_objective(problem, exec_point, &resident_points);
            return Ok(AllocationSolution {
                exec_point,
                resident_points,
                total_time,
                used_bytes: used,
                steps,
            });
        }

        let base = window_objective(problem, exec_point, &resident_points);
        // best = (is_free, delta, space_reduced, member): free steps beat
        // everything; ties prefer more space, then the lower member index
        let mut best: Option<(bool, f64, u64, usize)> = None;
        for member in 0..n {
            let cur = if member == 0 { exec_point } else { resident_points[member - 1] };
            let curve = problem.member_curve(member);
            if cur + 1 >= curve.len() {
                continue;
            }
            let space = curve.points[cur].memory_bytes - curve.points[cur + 1].memory_bytes;
            let after = if member == 0 {
                window_objective(problem, cur + 1, &resident_points)
            } else {
                let mut rp = resident_points.clone();
                rp[member - 1] = cur + 1;
                window_objective(problem, exec_point, &rp)
            };
            let dt = after - base;
            let free = dt <= 0.0;
            let delta = if free { f64::INFINITY } else { space as f64 / dt };
            let cand = (free, delta, space, member);
            let better = match &best {
                None => true,
                Some(b) => {
                    (cand.0, cand.1, cand.2, std::cmp::Reverse(cand.3))
                        > (b.0, b.1, b.2, std::cmp::Reverse(b.3))
                }
            };
            if better {
                best = Some(cand);
            }
        }

        let (_, _, space, member) = best.expect("feasibility check guarantees a step exists");
        let (from, to, dt) = if member == 0 {
            let after = window_objective(problem, exec_point + 1, &resident_points);
            exec_point += 1;
            (exec_point - 1, exec_point, after - base)
        } else {
            let i = member - 1;
            resident_points[i] += 1;
            let after = window_objective(problem, exec_point, &resident_points);
            (resident_points[i] - 1, resident_points[i], after - base)
        };
        steps.push(AllocStep {
            member,
            from_point: from,
            to_point: to,
            space_reduced: space,
            time_increased: dt,
        });
    }
}
