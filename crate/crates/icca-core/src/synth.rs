//! Synthetic workloads: deterministic transformer-shaped models for
//! end-to-end comparisons and small randomized cases for oracle tests.
//!
//! The transformer builders emit per-layer tensors with distinct names but
//! identical shapes, so layer detection groups them while serialization
//! stays collision-free. HBM load per operator is derived the same way the
//! model loader derives it: the byte sum of HBM-resident inputs.

use crate::hw::{ChipConfig, HbmSpec, SramContention, Topology, TopologyKind};
use crate::model::{ModelGraph, OpType, OperatorSpec, Residence, TensorSpec};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Deterministic RNG for fixture families.
pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn t(name: String, dims: &[u64], residence: Residence) -> TensorSpec {
    TensorSpec { name, dims: dims.to_vec(), element_size: 2, residence }
}

struct Builder {
    name: String,
    ops: Vec<OperatorSpec>,
    layers: Vec<(usize, usize)>,
}

impl Builder {
    fn new(name: &str) -> Self {
        Builder { name: name.to_string(), ops: Vec::new(), layers: Vec::new() }
    }

    fn push(
        &mut self,
        op_type: OpType,
        inputs: Vec<TensorSpec>,
        output: TensorSpec,
        flops: f64,
    ) -> usize {
        let id = self.ops.len() + 1;
        let hbm_load_bytes = inputs
            .iter()
            .filter(|x| x.residence == Residence::Hbm)
            .map(|x| x.byte_size())
            .sum();
        self.ops.push(OperatorSpec { id, op_type, inputs, output, flops, hbm_load_bytes });
        id
    }

    fn begin_layer(&self) -> usize {
        self.ops.len() + 1
    }

    fn end_layer(&mut self, start: usize) {
        self.layers.push((start, self.ops.len()));
    }

    fn build(self) -> ModelGraph {
        ModelGraph { name: self.name, operators: self.ops, layer_boundaries: self.layers }
    }
}

/// GPT-shaped stack of identical decoder layers. Each layer is a layernorm
/// followed by six (elementwise, projection matmul) pairs; the projection
/// weights live in HBM, everything else is intermediate. Weight and
/// activation shapes are chosen so the fastest matmul partition on a
/// 1472-core chip splits the output columns into 1458 tiles, the weight
/// slice per core stays ~100 KB, and two preloaded weight slices fit next
/// to the execution footprint.
pub fn gpt_like(num_layers: usize) -> ModelGraph {
    const HEAVY_M: u64 = 211;
    const HEAVY_K: u64 = 512;
    const HEAVY_N: u64 = 145_800;
    const LIGHT_ELEMS: u64 = 1 << 24;
    const NORM_ELEMS: u64 = 1 << 21;
    const HEAVY_NAMES: [&str; 6] = ["q_proj", "k_proj", "v_proj", "o_proj", "ffn_up", "ffn_down"];
    const LIGHT_NAMES: [&str; 6] = ["rope_q", "rope_k", "attn_mix", "resid_attn", "act_mul", "resid_ffn"];

    let heavy_flops = 2.0 * (HEAVY_M * HEAVY_K * HEAVY_N) as f64;
    let mut b = Builder::new(&format!("gpt-like-{num_layers}l"));
    for l in 0..num_layers {
        let start = b.begin_layer();
        b.push(
            OpType::LayerNorm,
            vec![
                t(format!("l{l}_ln_x"), &[NORM_ELEMS], Residence::Intermediate),
                t(format!("l{l}_ln_g"), &[NORM_ELEMS], Residence::Hbm),
            ],
            t(format!("l{l}_ln_out"), &[NORM_ELEMS], Residence::Intermediate),
            1.0e7,
        );
        for u in 0..6 {
            let ew = LIGHT_NAMES[u];
            let mm = HEAVY_NAMES[u];
            b.push(
                OpType::Elementwise,
                vec![
                    t(format!("l{l}_{ew}_x"), &[LIGHT_ELEMS], Residence::Intermediate),
                    t(format!("l{l}_{ew}_y"), &[LIGHT_ELEMS], Residence::Intermediate),
                ],
                t(format!("l{l}_{ew}_out"), &[LIGHT_ELEMS], Residence::Intermediate),
                1.5e7,
            );
            b.push(
                OpType::MatMul,
                vec![
                    t(format!("l{l}_{mm}_a"), &[HEAVY_M, HEAVY_K], Residence::Intermediate),
                    t(format!("l{l}_{mm}_w"), &[HEAVY_K, HEAVY_N], Residence::Hbm),
                ],
                t(format!("l{l}_{mm}_out"), &[HEAVY_M, HEAVY_N], Residence::Intermediate),
                heavy_flops,
            );
        }
        b.end_layer(start);
    }
    b.build()
}

/// OPT-30B-shaped graph: an embedding projection, 48 identical decoder
/// layers of 47 operators (6 weight matmuls, 41 small elementwise ops with
/// tiny HBM-resident scale vectors), and a 12-operator tail. 289 of the
/// 2269 operators carry ~99.8% of the total HBM traffic.
pub fn opt_30b_shaped() -> ModelGraph {
    const D: u64 = 8192;
    const M: u64 = 64;
    const LIGHT_ELEMS: u64 = 9_856;
    const LIGHTS_AFTER: [usize; 6] = [7, 7, 7, 7, 7, 6];

    let mut b = Builder::new("opt-30b-shaped");
    b.push(
        OpType::MatMul,
        vec![
            t("embed_a".into(), &[M, D], Residence::Intermediate),
            t("embed_w".into(), &[D, D], Residence::Hbm),
        ],
        t("embed_out".into(), &[M, D], Residence::Intermediate),
        2.0 * (M * D * D) as f64,
    );
    for l in 0..48 {
        let start = b.begin_layer();
        let mut e = 0;
        for (u, &lights) in LIGHTS_AFTER.iter().enumerate() {
            b.push(
                OpType::MatMul,
                vec![
                    t(format!("l{l}_h{u}_a"), &[M, D], Residence::Intermediate),
                    t(format!("l{l}_h{u}_w"), &[D, D / 2], Residence::Hbm),
                ],
                t(format!("l{l}_h{u}_out"), &[M, D / 2], Residence::Intermediate),
                2.0 * (M * D * (D / 2)) as f64,
            );
            for _ in 0..lights {
                b.push(
                    OpType::Elementwise,
                    vec![
                        t(format!("l{l}_e{e}_x"), &[LIGHT_ELEMS], Residence::Intermediate),
                        t(format!("l{l}_e{e}_s"), &[LIGHT_ELEMS], Residence::Hbm),
                    ],
                    t(format!("l{l}_e{e}_out"), &[LIGHT_ELEMS], Residence::Intermediate),
                    2.0e4,
                );
                e += 1;
            }
        }
        b.end_layer(start);
    }
    for i in 0..12 {
        b.push(
            OpType::Elementwise,
            vec![
                t(format!("tail{i}_x"), &[LIGHT_ELEMS], Residence::Intermediate),
                t(format!("tail{i}_s"), &[LIGHT_ELEMS], Residence::Hbm),
            ],
            t(format!("tail{i}_out"), &[LIGHT_ELEMS], Residence::Intermediate),
            2.0e4,
        );
    }
    b.build()
}

/// Llama2-70B-shaped stack, depth reduced to 16 identical layers to keep
/// the fixture desk-scale. Same 13-operator layer skeleton as [`gpt_like`]
/// but with mixed projection widths: four attention projections and two
/// wider feed-forward matmuls, all HBM-heavy.
pub fn llama2_70b_shaped() -> ModelGraph {
    const M: u64 = 256;
    const K: u64 = 1024;
    const ATTN_N: u64 = 12_288;
    const FFN_N: u64 = 28_672;
    const LIGHT_ELEMS: u64 = 1 << 22;
    const NORM_ELEMS: u64 = 1 << 20;
    const HEAVY_NAMES: [&str; 6] = ["q_proj", "k_proj", "v_proj", "o_proj", "gate_up", "gate_down"];
    const LIGHT_NAMES: [&str; 6] = ["rope_q", "rope_k", "attn_mix", "resid_attn", "silu_mul", "resid_ffn"];

    let mut b = Builder::new("llama2-70b-shaped");
    for l in 0..16 {
        let start = b.begin_layer();
        b.push(
            OpType::LayerNorm,
            vec![
                t(format!("l{l}_ln_x"), &[NORM_ELEMS], Residence::Intermediate),
                t(format!("l{l}_ln_g"), &[NORM_ELEMS], Residence::Hbm),
            ],
            t(format!("l{l}_ln_out"), &[NORM_ELEMS], Residence::Intermediate),
            5.0e6,
        );
        for u in 0..6 {
            let ew = LIGHT_NAMES[u];
            let mm = HEAVY_NAMES[u];
            let n = if u < 4 { ATTN_N } else { FFN_N };
            b.push(
                OpType::Elementwise,
                vec![
                    t(format!("l{l}_{ew}_x"), &[LIGHT_ELEMS], Residence::Intermediate),
                    t(format!("l{l}_{ew}_y"), &[LIGHT_ELEMS], Residence::Intermediate),
                ],
                t(format!("l{l}_{ew}_out"), &[LIGHT_ELEMS], Residence::Intermediate),
                4.0e6,
            );
            b.push(
                OpType::MatMul,
                vec![
                    t(format!("l{l}_{mm}_a"), &[M, K], Residence::Intermediate),
                    t(format!("l{l}_{mm}_w"), &[K, n], Residence::Hbm),
                ],
                t(format!("l{l}_{mm}_out"), &[M, n], Residence::Intermediate),
                2.0 * (M * K * n) as f64,
            );
        }
        b.end_layer(start);
    }
    b.build()
}

/// Tiny two-layer fixture for graph-level tests: two identical layers of
/// [layernorm, matmul, softmax, matmul, elementwise].
pub fn two_layer_transformer() -> ModelGraph {
    const SEQ: u64 = 128;
    const D: u64 = 64;
    let mut b = Builder::new("two-layer-transformer");
    for l in 0..2 {
        let start = b.begin_layer();
        b.push(
            OpType::LayerNorm,
            vec![
                t(format!("l{l}_ln_x"), &[SEQ * D], Residence::Intermediate),
                t(format!("l{l}_ln_g"), &[SEQ * D], Residence::Hbm),
            ],
            t(format!("l{l}_ln_out"), &[SEQ * D], Residence::Intermediate),
            4.0e4,
        );
        b.push(
            OpType::MatMul,
            vec![
                t(format!("l{l}_qk_a"), &[SEQ, D], Residence::Intermediate),
                t(format!("l{l}_qk_w"), &[D, SEQ], Residence::Hbm),
            ],
            t(format!("l{l}_scores"), &[SEQ, SEQ], Residence::Intermediate),
            2.0 * (SEQ * D * SEQ) as f64,
        );
        b.push(
            OpType::Softmax,
            vec![t(format!("l{l}_scores_in"), &[SEQ * SEQ], Residence::Intermediate)],
            t(format!("l{l}_probs"), &[SEQ * SEQ], Residence::Intermediate),
            5.0 * (SEQ * SEQ) as f64,
        );
        b.push(
            OpType::MatMul,
            vec![
                t(format!("l{l}_out_a"), &[SEQ, SEQ], Residence::Intermediate),
                t(format!("l{l}_out_w"), &[SEQ, D], Residence::Hbm),
            ],
            t(format!("l{l}_attn_out"), &[SEQ, D], Residence::Intermediate),
            2.0 * (SEQ * SEQ * D) as f64,
        );
        b.push(
            OpType::Elementwise,
            vec![
                t(format!("l{l}_res_x"), &[SEQ * D], Residence::Intermediate),
                t(format!("l{l}_res_y"), &[SEQ * D], Residence::Intermediate),
            ],
            t(format!("l{l}_res_out"), &[SEQ * D], Residence::Intermediate),
            (SEQ * D) as f64,
        );
        b.end_layer(start);
    }
    b.build()
}

fn a2a_chip(
    name: &str,
    cores: usize,
    ctrls: usize,
    sram: u64,
    link_bw: f64,
    hbm_bw: f64,
    latency: f64,
) -> ChipConfig {
    ChipConfig {
        name: name.to_string(),
        num_cores: cores,
        sram_per_core: sram,
        reserve_buffer: 0,
        core_flops_matmul: 1.0e9,
        core_flops_other: 1.0e9,
        sram_read_bandwidth: 1.0e15,
        sram_contention: SramContention::Free,
        topology: Topology {
            kind: TopologyKind::AllToAll,
            per_core_link_bandwidth: link_bw,
            link_latency: latency,
            mesh_dims: None,
            hbm_edge_coords: Vec::new(),
        },
        hbm: HbmSpec { total_bandwidth: hbm_bw, num_controllers: ctrls },
        num_chips: 1,
        inter_chip_bandwidth: 1.0e12,
    }
}

/// Random chain of elementwise ops on a single-core chip. Every operator
/// has exactly one partition plan and one preload state there, so a
/// scheduler's answer can be checked against exhaustive enumeration of
/// preload targets alone. Capacity is drawn between "only the widest op
/// fits" and "everything fits at once".
pub fn random_small_case(rng: &mut ChaCha8Rng) -> (ModelGraph, ChipConfig) {
    let n = rng.gen_range(2..=6);
    let mut b = Builder::new("rand-small");
    let mut max_exec = 0u64;
    let mut pre_sum = 0u64;
    for i in 0..n {
        let elems = 2 * rng.gen_range(64..=1024u64);
        let flops = elems as f64 * rng.gen_range(0.5..=500.0);
        b.push(
            OpType::Elementwise,
            vec![
                t(format!("op{i}_x"), &[elems], Residence::Intermediate),
                t(format!("op{i}_w"), &[elems], Residence::Hbm),
            ],
            t(format!("op{i}_out"), &[elems], Residence::Intermediate),
            flops,
        );
        max_exec = max_exec.max(8 * elems);
        pre_sum += 2 * elems;
    }
    let sram = max_exec + rng.gen_range(0..=pre_sum);
    let link = 10f64.powi(rng.gen_range(6..=9));
    let hbm = 10f64.powi(rng.gen_range(5..=8));
    let lat = if rng.gen_bool(0.5) { 0.0 } else { 1.0e-7 };
    (b.build(), a2a_chip("rand-small-chip", 1, 1, sram, link, hbm, lat))
}

/// Random single-layer model with one to five HBM-heavy ops and a few
/// weightless ones, on a single-core chip whose capacity makes some
/// preload orders overflow. Fixture family for order-search tests.
pub fn random_order_case(rng: &mut ChaCha8Rng) -> (ModelGraph, ChipConfig) {
    let heavy = rng.gen_range(1..=5usize);
    let light = rng.gen_range(0..=3usize);
    let mut kinds = vec![true; heavy];
    kinds.extend(vec![false; light]);
    kinds.shuffle(rng);

    let mut b = Builder::new("rand-order");
    let mut max_exec = 0u64;
    let mut pre_min = u64::MAX;
    let mut pre_sum = 0u64;
    for (i, &is_heavy) in kinds.iter().enumerate() {
        if is_heavy {
            let elems = 2 * rng.gen_range(2048..=8192u64);
            b.push(
                OpType::Elementwise,
                vec![
                    t(format!("op{i}_x"), &[elems], Residence::Intermediate),
                    t(format!("op{i}_w"), &[elems], Residence::Hbm),
                ],
                t(format!("op{i}_out"), &[elems], Residence::Intermediate),
                elems as f64,
            );
            max_exec = max_exec.max(8 * elems);
            pre_min = pre_min.min(2 * elems);
            pre_sum += 2 * elems;
        } else {
            let elems = 2 * rng.gen_range(256..=1024u64);
            b.push(
                OpType::Elementwise,
                vec![
                    t(format!("op{i}_x"), &[elems], Residence::Intermediate),
                    t(format!("op{i}_y"), &[elems], Residence::Intermediate),
                ],
                t(format!("op{i}_out"), &[elems], Residence::Intermediate),
                elems as f64,
            );
            max_exec = max_exec.max(8 * elems);
        }
    }
    let n = b.ops.len();
    b.layers.push((1, n));
    let sram = max_exec + rng.gen_range(pre_min..=pre_sum);
    let chip = a2a_chip("rand-order-chip", 1, 1, sram, 1.0e9, 1.0e7, 0.0);
    (b.build(), chip)
}

/// Random one-to-three-op model on a 2..4 core chip. Factor candidates cap
/// at the core count, so execution curves have at most four points and
/// preload curves one; small enough for exhaustive allocation search.
pub fn random_alloc_case(rng: &mut ChaCha8Rng) -> (ModelGraph, ChipConfig) {
    let cores = rng.gen_range(2..=4usize);
    let n = rng.gen_range(1..=3);
    let mut b = Builder::new("rand-alloc");
    let mut lo = 0u64;
    let mut hi = 0u64;
    let mut pre_sum = 0u64;
    for i in 0..n {
        let elems = rng.gen_range(24..=240u64) * cores as u64;
        let flops = elems as f64 * rng.gen_range(1.0..=100.0);
        b.push(
            OpType::Elementwise,
            vec![
                t(format!("op{i}_x"), &[elems], Residence::Intermediate),
                t(format!("op{i}_w"), &[elems], Residence::Hbm),
            ],
            t(format!("op{i}_out"), &[elems], Residence::Intermediate),
            flops,
        );
        lo = lo.max(8 * elems.div_ceil(cores as u64));
        hi = hi.max(8 * elems);
        pre_sum += 2 * elems;
    }
    let sram = rng.gen_range(lo..=hi + pre_sum);
    let hbm = 10f64.powi(rng.gen_range(6..=8));
    let chip = a2a_chip("rand-alloc-chip", cores, 1, sram, 1.0e9, hbm, 0.0);
    (b.build(), chip)
}

/// Random mixed matmul/elementwise model on a small multi-core chip with
/// plenty of SRAM, drawn in one of two bandwidth regimes (fetch-bound or
/// delivery-bound) so analytic and simulated preload times stay aligned.
pub fn random_sim_case(rng: &mut ChaCha8Rng) -> (ModelGraph, ChipConfig) {
    let cores = *[2usize, 4].choose(rng).unwrap();
    let ctrls = *[1usize, 2].choose(rng).unwrap();
    let n = rng.gen_range(2..=5);
    let mut b = Builder::new("rand-sim");
    for i in 0..n {
        if rng.gen_bool(0.4) {
            let m = 4 * rng.gen_range(2..=8u64);
            let k = 8 * rng.gen_range(2..=8u64);
            let nn = 8 * rng.gen_range(2..=8u64);
            b.push(
                OpType::MatMul,
                vec![
                    t(format!("op{i}_a"), &[m, k], Residence::Intermediate),
                    t(format!("op{i}_w"), &[k, nn], Residence::Hbm),
                ],
                t(format!("op{i}_out"), &[m, nn], Residence::Intermediate),
                2.0 * (m * k * nn) as f64,
            );
        } else {
            let elems = 2 * rng.gen_range(1024..=8192u64);
            let weighted = rng.gen_bool(0.5);
            let second = if weighted {
                t(format!("op{i}_w"), &[elems], Residence::Hbm)
            } else {
                t(format!("op{i}_y"), &[elems], Residence::Intermediate)
            };
            b.push(
                OpType::Elementwise,
                vec![t(format!("op{i}_x"), &[elems], Residence::Intermediate), second],
                t(format!("op{i}_out"), &[elems], Residence::Intermediate),
                elems as f64 * rng.gen_range(1.0..=20.0),
            );
        }
    }
    let (link, hbm) = if rng.gen_bool(0.5) { (1.0e8, 1.0e11) } else { (1.0e10, 1.0e8) };
    let lat = if rng.gen_bool(0.5) { 0.0 } else { 1.0e-7 };
    let chip = a2a_chip("rand-sim-chip", cores, ctrls, 1 << 21, link, hbm, lat);
    (b.build(), chip)
}
