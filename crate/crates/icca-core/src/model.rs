//! Model graph IR: an ordered list of operators over named tensors.
//!
//! Graphs are stored as structured text (TOML). The file carries a
//! `format_version`, a `model` name, a `tensors` table, an ordered
//! `operators` list and optional `layers` ranges. Operator ids are assigned
//! 1..N in file order regardless of any ids present in the source.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Residence {
    /// Parameter data resident in off-chip HBM; must be preloaded.
    Hbm,
    /// Produced on chip by an earlier operator; never fetched from HBM.
    Intermediate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpType {
    #[serde(rename = "matmul")]
    MatMul,
    #[serde(rename = "batch_matmul")]
    BatchMatMul,
    Elementwise,
    Softmax,
    LayerNorm,
    Reduce,
    Other,
}

impl OpType {
    /// MatMul-class operators run on the dense pipelines and get the
    /// MatMul FLOP rate; everything else gets the scalar rate.
    pub fn is_matmul_class(self) -> bool {
        matches!(self, OpType::MatMul | OpType::BatchMatMul)
    }
}

impl fmt::Display for OpType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            OpType::MatMul => "matmul",
            OpType::BatchMatMul => "batch_matmul",
            OpType::Elementwise => "elementwise",
            OpType::Softmax => "softmax",
            OpType::LayerNorm => "layer_norm",
            OpType::Reduce => "reduce",
            OpType::Other => "other",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub dims: Vec<u64>,
    pub element_size: u64,
    pub residence: Residence,
}

impl TensorSpec {
    pub fn num_elements(&self) -> u64 {
        self.dims.iter().product()
    }

    pub fn byte_size(&self) -> u64 {
        self.num_elements() * self.element_size
    }
}

#[derive(Debug, Clone)]
pub struct OperatorSpec {
    /// 1-based position in the model order.
    pub id: usize,
    pub op_type: OpType,
    pub inputs: Vec<TensorSpec>,
    pub output: TensorSpec,
    pub flops: f64,
    /// Total bytes this operator pulls from HBM (sum of its HBM-resident
    /// input tensors).
    pub hbm_load_bytes: u64,
}

impl OperatorSpec {
    /// Signature used for identical-layer detection: op type plus the dims
    /// and element sizes of every input and the output.
    fn shape_signature(&self) -> (OpType, Vec<(Vec<u64>, u64, Residence)>, Vec<u64>, u64) {
        (
            self.op_type,
            self.inputs
                .iter()
                .map(|t| (t.dims.clone(), t.element_size, t.residence))
                .collect(),
            self.output.dims.clone(),
            self.output.element_size,
        )
    }
}

#[derive(Debug, Clone)]
pub struct ModelGraph {
    pub name: String,
    pub operators: Vec<OperatorSpec>,
    /// Inclusive 1-based operator id ranges, non-overlapping, ascending.
    pub layer_boundaries: Vec<(usize, usize)>,
}

impl ModelGraph {
    pub fn num_operators(&self) -> usize {
        self.operators.len()
    }

    pub fn total_hbm_bytes(&self) -> u64 {
        self.operators.iter().map(|o| o.hbm_load_bytes).sum()
    }

    pub fn op(&self, id: usize) -> &OperatorSpec {
        &self.operators[id - 1]
    }
}

/// Result of HBM-heavy classification.
#[derive(Debug, Clone)]
pub struct HbmHeavySet {
    /// Classification cutoff: mean HBM load per operator.
    pub threshold_bytes: f64,
    pub ids: BTreeSet<usize>,
}

// ── file format ──────────────────────────────────────────────────────────

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    model: String,
    #[serde(default)]
    tensors: Vec<TensorSpec>,
    #[serde(default)]
    layers: Vec<LayerRange>,
    #[serde(default)]
    operators: Vec<OperatorEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LayerRange {
    start: usize,
    end: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct OperatorEntry {
    op_type: OpType,
    inputs: Vec<String>,
    output: String,
    flops: f64,
}

pub fn load_model(path: &Path) -> Result<ModelGraph> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    load_model_str(&text)
}

pub fn load_model_str(text: &str) -> Result<ModelGraph> {
    let file: ModelFile =
        toml::from_str(text).map_err(|e| Error::InvalidInput(format!("model parse: {e}")))?;
    if file.format_version != FORMAT_VERSION {
        return Err(Error::FormatVersion {
            found: file.format_version,
            expected: FORMAT_VERSION,
        });
    }
    if file.operators.is_empty() {
        return Err(Error::EmptyModel);
    }

    let mut tensors: BTreeMap<&str, &TensorSpec> = BTreeMap::new();
    for t in &file.tensors {
        if t.dims.is_empty() || t.dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidInput(format!(
                "tensor '{}' has empty or zero dims",
                t.name
            )));
        }
        if t.element_size == 0 {
            return Err(Error::InvalidInput(format!(
                "tensor '{}' has element_size 0",
                t.name
            )));
        }
        if tensors.insert(t.name.as_str(), t).is_some() {
            return Err(Error::InvalidInput(format!(
                "duplicate tensor name '{}'",
                t.name
            )));
        }
    }

    let resolve = |name: &str| -> Result<TensorSpec> {
        tensors
            .get(name)
            .map(|t| (*t).clone())
            .ok_or_else(|| Error::UnknownTensor(name.to_string()))
    };

    let mut operators = Vec::with_capacity(file.operators.len());
    for (idx, entry) in file.operators.iter().enumerate() {
        if !entry.flops.is_finite() || entry.flops < 0.0 {
            return Err(Error::InvalidInput(format!(
                "operator {} has invalid flops {}",
                idx + 1,
                entry.flops
            )));
        }
        let inputs = entry
            .inputs
            .iter()
            .map(|n| resolve(n))
            .collect::<Result<Vec<_>>>()?;
        let output = resolve(&entry.output)?;
        let hbm_load_bytes = inputs
            .iter()
            .filter(|t| t.residence == Residence::Hbm)
            .map(|t| t.byte_size())
            .sum();
        operators.push(OperatorSpec {
            id: idx + 1,
            op_type: entry.op_type,
            inputs,
            output,
            flops: entry.flops,
            hbm_load_bytes,
        });
    }

    let n = operators.len();
    let mut layer_boundaries = Vec::with_capacity(file.layers.len());
    let mut prev_end = 0usize;
    for l in &file.layers {
        if l.start == 0 || l.end < l.start || l.end > n {
            return Err(Error::InvalidInput(format!(
                "layer range {}..{} out of bounds (model has {} operators)",
                l.start, l.end, n
            )));
        }
        if l.start <= prev_end {
            return Err(Error::InvalidInput(format!(
                "layer range {}..{} overlaps or is out of order",
                l.start, l.end
            )));
        }
        prev_end = l.end;
        layer_boundaries.push((l.start, l.end));
    }

    Ok(ModelGraph {
        name: file.model,
        operators,
        layer_boundaries,
    })
}

/// Serialize a graph back to the structured-text format. Tensors are
/// emitted in first-use order; operators keep model order.
pub fn model_to_string(g: &ModelGraph) -> String {
    let mut tensors: Vec<TensorSpec> = Vec::new();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    for op in &g.operators {
        for t in op.inputs.iter().chain(std::iter::once(&op.output)) {
            if seen.insert(t.name.clone()) {
                tensors.push(t.clone());
            }
        }
    }
    let file = ModelFile {
        format_version: FORMAT_VERSION,
        model: g.name.clone(),
        tensors,
        layers: g
            .layer_boundaries
            .iter()
            .map(|&(start, end)| LayerRange { start, end })
            .collect(),
        operators: g
            .operators
            .iter()
            .map(|o| OperatorEntry {
                op_type: o.op_type,
                inputs: o.inputs.iter().map(|t| t.name.clone()).collect(),
                output: o.output.name.clone(),
                flops: o.flops,
            })
            .collect(),
    };
    toml::to_string(&file).expect("model serialization cannot fail")
}

pub fn save_model(g: &ModelGraph, path: &Path) -> Result<()> {
    std::fs::write(path, model_to_string(g))
        .map_err(|e| Error::io(path.display().to_string(), e))
}

/// Group identical layers: two layers match when their operator sequences
/// agree position by position on op type, input dims/element sizes and
/// output shape. Returns groups of indices into `layer_boundaries`; layers
/// without a match form singleton groups.
pub fn detect_identical_layers(g: &ModelGraph) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut signatures: Vec<Vec<_>> = Vec::new();
    for (li, &(start, end)) in g.layer_boundaries.iter().enumerate() {
        let sig: Vec<_> = (start..=end)
            .map(|id| g.op(id).shape_signature())
            .collect();
        match signatures.iter().position(|s| *s == sig) {
            Some(gi) => groups[gi].push(li),
            None => {
                signatures.push(sig);
                groups.push(vec![li]);
            }
        }
    }
    groups
}

/// Classify operators as HBM-heavy: load at or above the per-operator mean.
/// When every operator loads zero bytes the set is empty (a zero threshold
/// only admits strictly positive loaders).
pub fn classify_hbm_heavy(g: &ModelGraph) -> HbmHeavySet {
    let n = g.num_operators() as f64;
    let total = g.total_hbm_bytes() as f64;
    let threshold_bytes = total / n;
    let ids = g
        .operators
        .iter()
        .filter(|o| {
            let load = o.hbm_load_bytes as f64;
            load > 0.0 && load >= threshold_bytes
        })
        .map(|o| o.id)
        .collect();
    HbmHeavySet {
        threshold_bytes,
        ids,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_model_text() -> String {
        r#"
format_version = 1
model = "tiny"

[[tensors]]
name = "x0"
dims = [32, 64]
element_size = 2
residence = "intermediate"

[[tensors]]
name = "w1"
dims = [64, 64]
element_size = 2
residence = "hbm"

[[tensors]]
name = "x1"
dims = [32, 64]
element_size = 2
residence = "intermediate"

[[operators]]
op_type = "matmul"
inputs = ["x0", "w1"]
output = "x1"
flops = 2.62144e5
"#
        .to_string()
    }

    #[test]
    fn loads_tiny_model() {
        let g = load_model_str(&tiny_model_text()).unwrap();
        assert_eq!(g.num_operators(), 1);
        let op = g.op(1);
        assert_eq!(op.id, 1);
        assert_eq!(op.op_type, OpType::MatMul);
        assert_eq!(op.hbm_load_bytes, 64 * 64 * 2);
        assert_eq!(op.output.byte_size(), 32 * 64 * 2);
    }

    #[test]
    fn empty_model_rejected() {
        let text = "format_version = 1\nmodel = \"empty\"\n";
        match load_model_str(text) {
            Err(Error::EmptyModel) => {}
            other => panic!("expected EmptyModel, got {other:?}"),
        }
    }

    #[test]
    fn unknown_tensor_rejected() {
        let text = tiny_model_text().replace("\"x0\", \"w1\"", "\"x0\", \"nope\"");
        match load_model_str(&text) {
            Err(Error::UnknownTensor(name)) => assert_eq!(name, "nope"),
            other => panic!("expected UnknownTensor, got {other:?}"),
        }
    }

    #[test]
    fn wrong_format_version_rejected() {
        let text = tiny_model_text().replace("format_version = 1", "format_version = 7");
        match load_model_str(&text) {
            Err(Error::FormatVersion { found: 7, expected: 1 }) => {}
            other => panic!("expected FormatVersion, got {other:?}"),
        }
    }

    #[test]
    fn negative_flops_rejected() {
        let text = tiny_model_text().replace("flops = 2.62144e5", "flops = -1.0");
        assert!(matches!(load_model_str(&text), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn round_trip_preserves_structure() {
        let g = load_model_str(&tiny_model_text()).unwrap();
        let g2 = load_model_str(&model_to_string(&g)).unwrap();
        assert_eq!(g2.num_operators(), g.num_operators());
        assert_eq!(g2.op(1).hbm_load_bytes, g.op(1).hbm_load_bytes);
        assert_eq!(g2.op(1).op_type, g.op(1).op_type);
    }

    #[test]
    fn classify_zero_load_model_is_empty() {
        let text = tiny_model_text().replace("residence = \"hbm\"", "residence = \"intermediate\"");
        let g = load_model_str(&text).unwrap();
        let heavy = classify_hbm_heavy(&g);
        assert_eq!(heavy.threshold_bytes, 0.0);
        assert!(heavy.ids.is_empty());
    }

    #[test]
    fn overlapping_layers_rejected() {
        let mut text = tiny_model_text();
        text.push_str("\n[[layers]]\nstart = 1\nend = 1\n\n[[layers]]\nstart = 1\nend = 1\n");
        assert!(matches!(load_model_str(&text), Err(Error::InvalidInput(_))));
    }
}
