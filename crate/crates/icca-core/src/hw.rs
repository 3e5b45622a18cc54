//! Chip description: cores, SRAM, interconnect topology and HBM controllers.
//!
//! Network nodes are numbered `0..num_cores` for cores and
//! `num_cores..num_cores + num_controllers` for HBM controllers. In the
//! all-to-all topology every ordered node pair is connected directly, and a
//! transfer serializes on the source egress port and the destination ingress
//! port, each at the per-core link bandwidth. In the 2-D mesh, cores form a
//! grid with full-duplex neighbor links and controllers attach to boundary
//! coordinates; routing is dimension ordered (X then Y).

use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const CONFIG_FORMAT_VERSION: u32 = 1;

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    AllToAll,
    Mesh2d,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SramContention {
    /// Local SRAM accesses are blocked by inter-core accesses: inbound
    /// service time pauses the victim core's compute.
    Blocking,
    /// Local accesses proceed at full speed regardless of remote traffic.
    Free,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub kind: TopologyKind,
    /// Bytes per second on one link (or one a2a port).
    pub per_core_link_bandwidth: f64,
    /// Fixed seconds added per transfer per link.
    pub link_latency: f64,
    /// Mesh grid shape (rows, cols); required for Mesh2d.
    pub mesh_dims: Option<(usize, usize)>,
    /// Boundary coordinates where HBM controllers attach; required for
    /// Mesh2d, one entry per controller.
    pub hbm_edge_coords: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HbmSpec {
    /// Aggregate HBM bandwidth per chip, bytes per second.
    pub total_bandwidth: f64,
    pub num_controllers: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChipConfig {
    pub name: String,
    pub num_cores: usize,
    pub sram_per_core: u64,
    /// Bytes per core kept free for runtime bookkeeping; never allocatable.
    pub reserve_buffer: u64,
    pub core_flops_matmul: f64,
    pub core_flops_other: f64,
    /// Per-core local SRAM streaming bandwidth, bytes per second.
    pub sram_read_bandwidth: f64,
    pub sram_contention: SramContention,
    pub topology: Topology,
    pub hbm: HbmSpec,
    pub num_chips: usize,
    /// Bytes per second between chips; only used when num_chips > 1.
    pub inter_chip_bandwidth: f64,
}

/// One step of a route.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    /// Direct all-to-all connection between two nodes.
    Direct { src: NodeId, dst: NodeId },
    /// One directed mesh hop between adjacent nodes (controller attach
    /// links use the controller node id on one end).
    Hop { from: NodeId, to: NodeId },
}

/// Serialization resource a transfer occupies. All-to-all transfers hold
/// the source egress port and destination ingress port together; each mesh
/// hop is its own resource.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LinkKey {
    Egress(NodeId),
    Ingress(NodeId),
    Hop { from: NodeId, to: NodeId },
}

impl Link {
    pub fn resources(&self) -> Vec<LinkKey> {
        match *self {
            Link::Direct { src, dst } => vec![LinkKey::Egress(src), LinkKey::Ingress(dst)],
            Link::Hop { from, to } => vec![LinkKey::Hop { from, to }],
        }
    }
}

impl ChipConfig {
    pub fn usable_sram_per_core(&self) -> u64 {
        self.sram_per_core.saturating_sub(self.reserve_buffer)
    }

    pub fn num_controllers(&self) -> usize {
        self.hbm.num_controllers
    }

    pub fn controller_node(&self, k: usize) -> NodeId {
        self.num_cores + k
    }

    pub fn is_controller(&self, node: NodeId) -> bool {
        node >= self.num_cores
    }

    pub fn mesh_dims(&self) -> (usize, usize) {
        self.topology.mesh_dims.expect("mesh dims on a2a config")
    }

    pub fn core_at(&self, coord: (usize, usize)) -> NodeId {
        let (_, cols) = self.mesh_dims();
        coord.0 * cols + coord.1
    }

    pub fn coord_of(&self, core: NodeId) -> (usize, usize) {
        let (_, cols) = self.mesh_dims();
        (core / cols, core % cols)
    }

    /// Coordinate a node occupies in the mesh (controllers map to their
    /// attach coordinate).
    fn mesh_coord(&self, node: NodeId) -> (usize, usize) {
        if self.is_controller(node) {
            self.topology.hbm_edge_coords[node - self.num_cores]
        } else {
            self.coord_of(node)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_cores == 0 {
            return Err(Error::InvalidConfig("num_cores must be positive".into()));
        }
        if self.sram_per_core <= self.reserve_buffer {
            return Err(Error::InvalidConfig(
                "sram_per_core must exceed reserve_buffer".into(),
            ));
        }
        for (label, v) in [
            ("core_flops_matmul", self.core_flops_matmul),
            ("core_flops_other", self.core_flops_other),
            ("sram_read_bandwidth", self.sram_read_bandwidth),
            ("per_core_link_bandwidth", self.topology.per_core_link_bandwidth),
            ("hbm.total_bandwidth", self.hbm.total_bandwidth),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!("{label} must be positive")));
            }
        }
        if self.topology.link_latency < 0.0 || !self.topology.link_latency.is_finite() {
            return Err(Error::InvalidConfig("link_latency must be non-negative".into()));
        }
        if self.hbm.num_controllers == 0 {
            return Err(Error::InvalidConfig("at least one HBM controller required".into()));
        }
        if self.num_chips == 0 {
            return Err(Error::InvalidConfig("num_chips must be positive".into()));
        }
        if self.num_chips > 1 && !(self.inter_chip_bandwidth > 0.0) {
            return Err(Error::InvalidConfig(
                "inter_chip_bandwidth must be positive for multi-chip configs".into(),
            ));
        }
        match self.topology.kind {
            TopologyKind::AllToAll => {
                if self.topology.mesh_dims.is_some() {
                    return Err(Error::InvalidConfig(
                        "mesh_dims set on an all-to-all topology".into(),
                    ));
                }
            }
            TopologyKind::Mesh2d => {
                let (rows, cols) = self.topology.mesh_dims.ok_or_else(|| {
                    Error::InvalidConfig("mesh topology requires mesh_dims".into())
                })?;
                if rows * cols != self.num_cores {
                    return Err(Error::InvalidConfig(format!(
                        "mesh {rows}x{cols} does not cover {} cores",
                        self.num_cores
                    )));
                }
                if self.topology.hbm_edge_coords.len() != self.hbm.num_controllers {
                    return Err(Error::InvalidConfig(format!(
                        "{} hbm_edge_coords for {} controllers",
                        self.topology.hbm_edge_coords.len(),
                        self.hbm.num_controllers
                    )));
                }
                for &(r, c) in &self.topology.hbm_edge_coords {
                    if r >= rows || c >= cols {
                        return Err(Error::InvalidConfig(format!(
                            "controller coordinate ({r},{c}) outside the mesh"
                        )));
                    }
                    let on_boundary = r == 0 || c == 0 || r == rows - 1 || c == cols - 1;
                    if !on_boundary {
                        return Err(Error::InvalidConfig(format!(
                            "controller coordinate ({r},{c}) not on the mesh boundary"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Dimension-ordered route between two nodes: the full ordered list of
/// links a transfer traverses. All-to-all routes are a single direct link;
/// mesh routes move along X (columns) first, then Y (rows), with controller
/// attach hops at the ends.
pub fn route(cfg: &ChipConfig, src: NodeId, dst: NodeId) -> Vec<Link> {
    if src == dst {
        return Vec::new();
    }
    match cfg.topology.kind {
        TopologyKind::AllToAll => vec![Link::Direct { src, dst }],
        TopologyKind::Mesh2d => {
            let mut links = Vec::new();
            let src_coord = cfg.mesh_coord(src);
            let dst_coord = cfg.mesh_coord(dst);
            let mut cur = src_coord;
            let mut cur_node = src;
            if cfg.is_controller(src) {
                let entry = cfg.core_at(src_coord);
                links.push(Link::Hop { from: src, to: entry });
                cur_node = entry;
            }
            while cur.1 != dst_coord.1 {
                let next = if dst_coord.1 > cur.1 {
                    (cur.0, cur.1 + 1)
                } else {
                    (cur.0, cur.1 - 1)
                };
                let next_node = cfg.core_at(next);
                links.push(Link::Hop { from: cur_node, to: next_node });
                cur = next;
                cur_node = next_node;
            }
            while cur.0 != dst_coord.0 {
                let next = if dst_coord.0 > cur.0 {
                    (cur.0 + 1, cur.1)
                } else {
                    (cur.0 - 1, cur.1)
                };
                let next_node = cfg.core_at(next);
                links.push(Link::Hop { from: cur_node, to: next_node });
                cur = next;
                cur_node = next_node;
            }
            if cfg.is_controller(dst) {
                links.push(Link::Hop { from: cur_node, to: dst });
            }
            links
        }
    }
}

/// Peak aggregate inter-core bandwidth of the chip. All-to-all counts each
/// core's port once; the mesh counts every directed internal link.
pub fn aggregate_intercore_bandwidth(cfg: &ChipConfig) -> f64 {
    let bw = cfg.topology.per_core_link_bandwidth;
    match cfg.topology.kind {
        TopologyKind::AllToAll => cfg.num_cores as f64 * bw,
        TopologyKind::Mesh2d => {
            let (rows, cols) = cfg.mesh_dims();
            let directed = 2 * (rows * (cols - 1) + cols * (rows - 1));
            directed as f64 * bw
        }
    }
}

// ── config file format ───────────────────────────────────────────────────

#[derive(Debug, Serialize, Deserialize)]
struct ConfigFile {
    format_version: u32,
    chip: ChipSection,
    topology: TopologySection,
    hbm: HbmSection,
}

#[derive(Debug, Serialize, Deserialize)]
struct ChipSection {
    name: String,
    num_cores: usize,
    sram_per_core: u64,
    reserve_buffer: u64,
    core_flops_matmul: f64,
    core_flops_other: f64,
    sram_read_bandwidth: f64,
    sram_contention: SramContention,
    #[serde(default = "one")]
    num_chips: usize,
    #[serde(default)]
    inter_chip_bandwidth: f64,
}

fn one() -> usize {
    1
}

#[derive(Debug, Serialize, Deserialize)]
struct TopologySection {
    kind: TopologyKind,
    per_core_link_bandwidth: f64,
    link_latency: f64,
    #[serde(default)]
    mesh_rows: Option<usize>,
    #[serde(default)]
    mesh_cols: Option<usize>,
    #[serde(default)]
    hbm_edge_coords: Vec<[usize; 2]>,
}

#[derive(Debug, Serialize, Deserialize)]
struct HbmSection {
    total_bandwidth: f64,
    num_controllers: usize,
}

/// Load a chip config from a file path, or resolve a built-in preset name
/// ("ipu-mk2-a2a", "mesh-1472").
pub fn load_config(path_or_preset: &str) -> Result<ChipConfig> {
    if let Some(preset) = preset(path_or_preset) {
        return Ok(preset);
    }
    let path = Path::new(path_or_preset);
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    load_config_str(&text)
}

pub fn load_config_str(text: &str) -> Result<ChipConfig> {
    let file: ConfigFile =
        toml::from_str(text).map_err(|e| Error::InvalidConfig(format!("config parse: {e}")))?;
    if file.format_version != CONFIG_FORMAT_VERSION {
        return Err(Error::FormatVersion {
            found: file.format_version,
            expected: CONFIG_FORMAT_VERSION,
        });
    }
    let mesh_dims = match (file.topology.mesh_rows, file.topology.mesh_cols) {
        (Some(r), Some(c)) => Some((r, c)),
        (None, None) => None,
        _ => {
            return Err(Error::InvalidConfig(
                "mesh_rows and mesh_cols must be given together".into(),
            ))
        }
    };
    let cfg = ChipConfig {
        name: file.chip.name,
        num_cores: file.chip.num_cores,
        sram_per_core: file.chip.sram_per_core,
        reserve_buffer: file.chip.reserve_buffer,
        core_flops_matmul: file.chip.core_flops_matmul,
        core_flops_other: file.chip.core_flops_other,
        sram_read_bandwidth: file.chip.sram_read_bandwidth,
        sram_contention: file.chip.sram_contention,
        topology: Topology {
            kind: file.topology.kind,
            per_core_link_bandwidth: file.topology.per_core_link_bandwidth,
            link_latency: file.topology.link_latency,
            mesh_dims,
            hbm_edge_coords: file
                .topology
                .hbm_edge_coords
                .iter()
                .map(|&[r, c]| (r, c))
                .collect(),
        },
        hbm: HbmSpec {
            total_bandwidth: file.hbm.total_bandwidth,
            num_controllers: file.hbm.num_controllers,
        },
        num_chips: file.chip.num_chips,
        inter_chip_bandwidth: file.chip.inter_chip_bandwidth,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn config_to_string(cfg: &ChipConfig) -> String {
    let file = ConfigFile {
        format_version: CONFIG_FORMAT_VERSION,
        chip: ChipSection {
            name: cfg.name.clone(),
            num_cores: cfg.num_cores,
            sram_per_core: cfg.sram_per_core,
            reserve_buffer: cfg.reserve_buffer,
            core_flops_matmul: cfg.core_flops_matmul,
            core_flops_other: cfg.core_flops_other,
            sram_read_bandwidth: cfg.sram_read_bandwidth,
            sram_contention: cfg.sram_contention,
            num_chips: cfg.num_chips,
            inter_chip_bandwidth: cfg.inter_chip_bandwidth,
        },
        topology: TopologySection {
            kind: cfg.topology.kind,
            per_core_link_bandwidth: cfg.topology.per_core_link_bandwidth,
            link_latency: cfg.topology.link_latency,
            mesh_rows: cfg.topology.mesh_dims.map(|d| d.0),
            mesh_cols: cfg.topology.mesh_dims.map(|d| d.1),
            hbm_edge_coords: cfg
                .topology
                .hbm_edge_coords
                .iter()
                .map(|&(r, c)| [r, c])
                .collect(),
        },
        hbm: HbmSection {
            total_bandwidth: cfg.hbm.total_bandwidth,
            num_controllers: cfg.hbm.num_controllers,
        },
    };
    toml::to_string(&file).expect("config serialization cannot fail")
}

/// Built-in presets.
pub fn preset(name: &str) -> Option<ChipConfig> {
    match name {
        "ipu-mk2-a2a" => Some(ChipConfig {
            name: "ipu-mk2-a2a".into(),
            num_cores: 1472,
            sram_per_core: 624 * 1024,
            reserve_buffer: 8 * 1024,
            core_flops_matmul: 1.70e11,
            core_flops_other: 5.3e9,
            sram_read_bandwidth: 3.2e10,
            sram_contention: SramContention::Blocking,
            topology: Topology {
                kind: TopologyKind::AllToAll,
                per_core_link_bandwidth: 5.5e9,
                link_latency: 1.0e-7,
                mesh_dims: None,
                hbm_edge_coords: Vec::new(),
            },
            hbm: HbmSpec {
                total_bandwidth: 4.0e12,
                num_controllers: 728,
            },
            num_chips: 1,
            inter_chip_bandwidth: 6.4e11,
        }),
        "mesh-1472" => {
            let rows = 32;
            let cols = 46;
            let num_controllers = 128;
            Some(ChipConfig {
                name: "mesh-1472".into(),
                num_cores: rows * cols,
                sram_per_core: 624 * 1024,
                reserve_buffer: 8 * 1024,
                core_flops_matmul: 1.70e11,
                core_flops_other: 5.3e9,
                sram_read_bandwidth: 3.2e10,
                sram_contention: SramContention::Blocking,
                topology: Topology {
                    kind: TopologyKind::Mesh2d,
                    per_core_link_bandwidth: 5.5e9,
                    link_latency: 5.0e-8,
                    mesh_dims: Some((rows, cols)),
                    hbm_edge_coords: boundary_coords(rows, cols, num_controllers),
                },
                hbm: HbmSpec {
                    total_bandwidth: 7.04e11,
                    num_controllers,
                },
                num_chips: 1,
                inter_chip_bandwidth: 6.4e11,
            })
        }
        _ => None,
    }
}

/// Evenly spaced boundary coordinates (clockwise from the north-west
/// corner) for mesh controller placement.
pub fn boundary_coords(rows: usize, cols: usize, count: usize) -> Vec<(usize, usize)> {
    let mut ring = Vec::new();
    for c in 0..cols {
        ring.push((0, c));
    }
    for r in 1..rows {
        ring.push((r, cols - 1));
    }
    if rows > 1 {
        for c in (0..cols - 1).rev() {
            ring.push((rows - 1, c));
        }
    }
    if cols > 1 {
        for r in (1..rows - 1).rev() {
            ring.push((r, 0));
        }
    }
    assert!(count <= ring.len(), "more controllers than boundary cells");
    (0..count)
        .map(|k| ring[k * ring.len() / count])
        .collect()
}
