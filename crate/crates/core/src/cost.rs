//! Closed-form MAC and parameter counts.
//!
//! Cell costs are computed on the mapped block: a node's cost depends only on
//! its aggregated input width, so costs never increase when an edge is removed
//! (as long as the cell input is no wider than the stage filters - removing a
//! node's last in-edge re-feeds it from the cell input). Architecture costs
//! walk the staged plan from [`crate::builder`] and add stem, projection,
//! residual, and classifier terms.

use serde::{Deserialize, Serialize};

use crate::builder::{ArchitectureSpec, CnnArchitecture, RnnArchitecture};
use crate::error::{Error, Result};
use crate::topology::{CellKind, CellTopology, CnnOp, NodeOp};

/// Which resource the search metric penalizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResourceKind {
    Macs,
    Params,
}

impl std::fmt::Display for ResourceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ResourceKind::Macs => "macs",
            ResourceKind::Params => "params",
        })
    }
}

/// Spatial and channel context a CNN cell is costed in. `input_channels` is
/// the width of the tensor feeding the cell; every node emits `stage_filters`
/// channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CnnShape {
    pub height: usize,
    pub width: usize,
    pub stage_filters: usize,
    pub input_channels: usize,
}

impl CnnShape {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("height", self.height),
            ("width", self.width),
            ("stage_filters", self.stage_filters),
            ("input_channels", self.input_channels),
        ] {
            if v == 0 {
                return Err(Error::invalid(format!("CnnShape.{name} must be >= 1")));
            }
        }
        Ok(())
    }
}

/// Dimensions a recurrent cell is costed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RnnShape {
    pub hidden_dim: usize,
    pub vocab_size: usize,
    pub embed_dim: usize,
}

impl RnnShape {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("hidden_dim", self.hidden_dim),
            ("vocab_size", self.vocab_size),
            ("embed_dim", self.embed_dim),
        ] {
            if v == 0 {
                return Err(Error::invalid(format!("RnnShape.{name} must be >= 1")));
            }
        }
        Ok(())
    }
}

/// One costed component: a cell node, or a named architecture layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostRow {
    /// Node id (`node3`) or layer path (`stage1.cell1.proj`).
    pub id: String,
    pub op: String,
    pub macs: u64,
    pub params: u64,
}

/// A cost breakdown whose totals always equal the sum of the rows.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceReport {
    rows: Vec<CostRow>,
    macs: u64,
    params: u64,
}

impl ResourceReport {
    pub fn from_rows(rows: Vec<CostRow>) -> ResourceReport {
        let macs = rows.iter().map(|r| r.macs).sum();
        let params = rows.iter().map(|r| r.params).sum();
        ResourceReport { rows, macs, params }
    }

    pub fn rows(&self) -> &[CostRow] {
        &self.rows
    }

    pub fn macs(&self) -> u64 {
        self.macs
    }

    pub fn params(&self) -> u64 {
        self.params
    }

    pub fn get(&self, kind: ResourceKind) -> u64 {
        match kind {
            ResourceKind::Macs => self.macs,
            ResourceKind::Params => self.params,
        }
    }

    /// CSV rows `node_id,op,macs,params`, one per component.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("node_id,op,macs,params\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{}\n", r.id, r.op, r.macs, r.params));
        }
        out
    }
}

fn cnn_op_cost(op: CnnOp, c_in: u64, shape: &CnnShape) -> (u64, u64) {
    let hw = (shape.height * shape.width) as u64;
    let f = shape.stage_filters as u64;
    match op {
        // Pointwise convolution plus the norm's scale/shift pair.
        CnnOp::Conv1x1 => (hw * c_in * f, c_in * f + 2 * f),
        // Depthwise 3x3 followed by a pointwise mix, plus the norm pair.
        CnnOp::SepConv3x3 => (hw * c_in * 9 + hw * c_in * f, 9 * c_in + c_in * f + 2 * f),
    }
}

/// Per-live-node (id, op, macs, params) for a CNN cell. Input-fed nodes read
/// `input_channels`; every predecessor contributes `stage_filters` channels.
pub(crate) fn cnn_node_costs(
    g: &CellTopology,
    shape: &CnnShape,
) -> Vec<(usize, &'static str, u64, u64)> {
    let block = g.map_to_block();
    block
        .live_nodes()
        .iter()
        .map(|&v| {
            let c_in = if block.is_input_fed(v) {
                shape.input_channels as u64
            } else {
                (shape.stage_filters * block.predecessors(v).len()) as u64
            };
            let op = match g.ops()[v] {
                NodeOp::Cnn(op) => op,
                NodeOp::Rnn(_) => unreachable!("kind checked by caller"),
            };
            let (macs, params) = cnn_op_cost(op, c_in, shape);
            (v, g.ops()[v].name(), macs, params)
        })
        .collect()
}

/// Per-live-node (id, op, macs, params) for a recurrent cell. Every
/// (input, node) pair - cell-input feeds included - carries a gate and a
/// transform: `2*d^2 + 2*d` parameters and `2*d^2` per-step MACs.
pub(crate) fn rnn_node_costs(
    g: &CellTopology,
    shape: &RnnShape,
) -> Vec<(usize, &'static str, u64, u64)> {
    let block = g.map_to_block();
    let d = shape.hidden_dim as u64;
    block
        .live_nodes()
        .iter()
        .map(|&v| {
            let pairs = block.aggregands(v).len() as u64;
            (v, g.ops()[v].name(), pairs * 2 * d * d, pairs * (2 * d * d + 2 * d))
        })
        .collect()
}

fn node_rows(items: Vec<(usize, &'static str, u64, u64)>) -> Vec<CostRow> {
    items
        .into_iter()
        .map(|(v, op, macs, params)| CostRow {
            id: format!("node{v}"),
            op: op.to_string(),
            macs,
            params,
        })
        .collect()
}

/// Cost of one CNN cell instance in the given shape. An empty block (every
/// node isolated) is an identity cell and costs zero.
pub fn cnn_cell_cost(g: &CellTopology, shape: &CnnShape) -> Result<ResourceReport> {
    shape.validate()?;
    if g.kind() != CellKind::Cnn {
        return Err(Error::invalid("cnn_cell_cost needs a cnn cell"));
    }
    Ok(ResourceReport::from_rows(node_rows(cnn_node_costs(g, shape))))
}

/// Cost of one recurrent cell instance in the given dimensions.
pub fn rnn_cell_cost(g: &CellTopology, shape: &RnnShape) -> Result<ResourceReport> {
    shape.validate()?;
    if g.kind() != CellKind::Rnn {
        return Err(Error::invalid("rnn_cell_cost needs an rnn cell"));
    }
    Ok(ResourceReport::from_rows(node_rows(rnn_node_costs(g, shape))))
}

/// Dispatches on the cell kind with the matching shape.
pub fn cell_cost(g: &CellTopology, cnn: &CnnShape, rnn: &RnnShape) -> Result<ResourceReport> {
    match g.kind() {
        CellKind::Cnn => cnn_cell_cost(g, cnn),
        CellKind::Rnn => rnn_cell_cost(g, rnn),
    }
}

fn conv1x1_row(id: String, hw: u64, c_in: u64, c_out: u64) -> CostRow {
    CostRow {
        id,
        op: "conv1x1".to_string(),
        macs: hw * c_in * c_out,
        params: c_in * c_out + 2 * c_out,
    }
}

fn cnn_architecture_rows(arch: &CnnArchitecture) -> Result<Vec<CostRow>> {
    let (h0, w0) = arch.input_resolution;
    let hw0 = (h0 * w0) as u64;
    let stem_out = (2 * arch.base_filters) as u64;
    let c_img = arch.input_channels as u64;
    let mut rows = vec![CostRow {
        id: "stem".to_string(),
        op: "conv3x3".to_string(),
        macs: hw0 * 9 * c_img * stem_out,
        params: 9 * c_img * stem_out + 2 * stem_out,
    }];
    for stage in arch.plan()? {
        let shape = CnnShape {
            height: stage.height,
            width: stage.width,
            stage_filters: stage.filters,
            input_channels: 0, // replaced per cell below
        };
        let hw = (stage.height * stage.width) as u64;
        for (ci, cell) in stage.cells.iter().enumerate() {
            let prefix = format!("stage{}.cell{}", stage.index + 1, ci + 1);
            let cell_shape = CnnShape { input_channels: cell.c_in, ..shape };
            for (v, op, macs, params) in cnn_node_costs(&arch.cell, &cell_shape) {
                rows.push(CostRow {
                    id: format!("{prefix}.node{v}"),
                    op: op.to_string(),
                    macs,
                    params,
                });
            }
            if cell.projected {
                rows.push(conv1x1_row(
                    format!("{prefix}.proj"),
                    hw,
                    cell.c_raw as u64,
                    stage.filters as u64,
                ));
            }
            if cell.residual_projected {
                rows.push(conv1x1_row(
                    format!("{prefix}.res"),
                    hw,
                    cell.c_in as u64,
                    stage.filters as u64,
                ));
            }
        }
    }
    // Global average pool is MAC-free by convention; the classifier is a
    // biased linear map on the pooled channels.
    let c_last = arch.output_channels() as u64;
    let classes = arch.num_classes as u64;
    rows.push(CostRow {
        id: "classifier".to_string(),
        op: "avgpool+fc".to_string(),
        macs: c_last * classes,
        params: c_last * classes + classes,
    });
    Ok(rows)
}

fn rnn_architecture_rows(arch: &RnnArchitecture) -> Result<Vec<CostRow>> {
    let d = arch.hidden_dim as u64;
    let v = arch.vocab_size as u64;
    let e = arch.embed_dim as u64;
    let mut rows = vec![CostRow {
        id: "embedding".to_string(),
        op: "lookup".to_string(),
        macs: 0,
        params: v * e,
    }];
    let shape =
        RnnShape { hidden_dim: arch.hidden_dim, vocab_size: arch.vocab_size, embed_dim: arch.embed_dim };
    for (nv, op, macs, params) in rnn_node_costs(&arch.cell, &shape) {
        rows.push(CostRow { id: format!("cell.node{nv}"), op: op.to_string(), macs, params });
    }
    // Untied decoder: hidden -> vocab with bias, applied once per step.
    rows.push(CostRow {
        id: "decoder".to_string(),
        op: "linear".to_string(),
        macs: d * v,
        params: d * v + v,
    });
    Ok(rows)
}

/// Static cost of a whole architecture: stem, every cell instance with its
/// projections and residual shortcuts, and the classifier (CNN); or the
/// embedding, the cell, and the decoder (RNN). MAC counts for recurrent parts
/// are per timestep.
pub fn architecture_cost(arch: &ArchitectureSpec) -> Result<ResourceReport> {
    arch.validate()?;
    let rows = match arch {
        ArchitectureSpec::Cnn(a) => cnn_architecture_rows(a)?,
        ArchitectureSpec::Rnn(a) => rnn_architecture_rows(a)?,
    };
    Ok(ResourceReport::from_rows(rows))
}
