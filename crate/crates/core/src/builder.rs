//! Macro-architecture assembly: wrap a searched cell in a fixed skeleton.
//!
//! The CNN skeleton is `stem -> [stage]* -> classifier`; each stage repeats
//! the same cell, and a 2x2 max-pool sits between adjacent stages so stage
//! `s` runs at `input_resolution / 2^s` with `base_filters * 2^s` filters.
//! Per cell, all leaf outputs are concatenated; a 1x1 projection restores the
//! stage width whenever the concat width differs from it, and a residual
//! shortcut (projected when the input width differs) adds the cell input back
//! onto its output. The RNN skeleton is `embedding -> cell (unrolled) ->
//! decoder`. Only the cell is searched; the skeleton is bookkeeping.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cost;
use crate::error::{Error, Result};
use crate::topology::{CellKind, CellTopology};

fn default_input_channels() -> usize {
    3
}

fn default_num_classes() -> usize {
    10
}

fn default_residual() -> bool {
    true
}

/// Image-classification skeleton around a convolutional cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnArchitecture {
    pub cell: CellTopology,
    /// Number of resolution stages; pooling halves the grid between stages.
    pub stages: usize,
    /// Cell instances stacked per stage.
    pub cells_per_stage: usize,
    /// Filters of the first stage; stage `s` uses `base_filters * 2^s`.
    pub base_filters: usize,
    /// `(height, width)` of the input image.
    pub input_resolution: (usize, usize),
    #[serde(default = "default_input_channels")]
    pub input_channels: usize,
    #[serde(default = "default_num_classes")]
    pub num_classes: usize,
    /// Add a shortcut from each cell's input to its output.
    #[serde(default = "default_residual")]
    pub residual: bool,
}

/// Sequence-model skeleton around a recurrent cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RnnArchitecture {
    pub cell: CellTopology,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    pub vocab_size: usize,
}

/// A complete buildable model: a cell plus its skeleton parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ArchitectureSpec {
    Cnn(CnnArchitecture),
    Rnn(RnnArchitecture),
}

/// Channel bookkeeping for one cell instance inside a stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellInstance {
    /// Channels entering the cell.
    pub c_in: usize,
    /// Channels after concatenating leaf outputs (equals `c_in` when the
    /// block is empty and the cell is an identity).
    pub c_raw: usize,
    /// Channels leaving the cell.
    pub c_out: usize,
    /// A 1x1 projection restores the stage width (`c_raw != filters`).
    pub projected: bool,
    /// The residual shortcut is active (non-empty block, residual enabled).
    pub residual: bool,
    /// The shortcut itself needs a 1x1 projection (`c_in != filters`).
    pub residual_projected: bool,
}

/// Resolved geometry of one stage: where it runs and what each cell sees.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StagePlan {
    /// Zero-based stage index.
    pub index: usize,
    pub height: usize,
    pub width: usize,
    pub filters: usize,
    pub cells: Vec<CellInstance>,
}

impl CnnArchitecture {
    pub fn validate(&self) -> Result<()> {
        if self.cell.kind() != CellKind::Cnn {
            return Err(Error::invalid("a cnn architecture needs a cnn cell"));
        }
        if self.stages > 0 && self.cells_per_stage == 0 {
            return Err(Error::invalid("cells_per_stage must be >= 1"));
        }
        if self.base_filters == 0 {
            return Err(Error::invalid("base_filters must be >= 1"));
        }
        if self.input_channels == 0 {
            return Err(Error::invalid("input_channels must be >= 1"));
        }
        if self.num_classes < 2 {
            return Err(Error::invalid("num_classes must be >= 2"));
        }
        let (h, w) = self.input_resolution;
        if h == 0 || w == 0 {
            return Err(Error::invalid("input_resolution must be >= 1x1"));
        }
        if self.stages > 0 {
            let pools = self.stages - 1;
            let div = 1usize << pools;
            if h % div != 0 || w % div != 0 {
                return Err(Error::invalid(format!(
                    "input_resolution {h}x{w} is not divisible by 2^{pools} \
                     (one pool between each pair of stages)"
                )));
            }
        }
        Ok(())
    }

    /// Per-stage geometry and per-cell channel bookkeeping, in order.
    pub fn plan(&self) -> Result<Vec<StagePlan>> {
        self.validate()?;
        let block = self.cell.map_to_block();
        let leaves = block.leaves().len();
        let (h0, w0) = self.input_resolution;
        let mut channels = 2 * self.base_filters; // stem output
        let mut plan = Vec::with_capacity(self.stages);
        for s in 0..self.stages {
            let filters = self.base_filters << s;
            let mut cells = Vec::with_capacity(self.cells_per_stage);
            for _ in 0..self.cells_per_stage {
                let c_in = channels;
                let inst = if block.is_empty() {
                    // Identity cell: nothing to project onto, nothing to add.
                    CellInstance {
                        c_in,
                        c_raw: c_in,
                        c_out: c_in,
                        projected: false,
                        residual: false,
                        residual_projected: false,
                    }
                } else {
                    let c_raw = filters * leaves;
                    CellInstance {
                        c_in,
                        c_raw,
                        c_out: filters,
                        projected: c_raw != filters,
                        residual: self.residual,
                        residual_projected: self.residual && c_in != filters,
                    }
                };
                channels = inst.c_out;
                cells.push(inst);
            }
            plan.push(StagePlan { index: s, height: h0 >> s, width: w0 >> s, filters, cells });
        }
        Ok(plan)
    }

    /// Channel count entering the classifier.
    pub fn output_channels(&self) -> usize {
        let mut channels = 2 * self.base_filters;
        if let Ok(plan) = self.plan() {
            if let Some(last) = plan.last().and_then(|s| s.cells.last()) {
                channels = last.c_out;
            }
        }
        channels
    }
}

impl RnnArchitecture {
    pub fn validate(&self) -> Result<()> {
        if self.cell.kind() != CellKind::Rnn {
            return Err(Error::invalid("an rnn architecture needs an rnn cell"));
        }
        if self.hidden_dim == 0 || self.embed_dim == 0 {
            return Err(Error::invalid("hidden_dim and embed_dim must be >= 1"));
        }
        if self.vocab_size < 2 {
            return Err(Error::invalid("vocab_size must be >= 2"));
        }
        Ok(())
    }
}

impl ArchitectureSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            ArchitectureSpec::Cnn(a) => a.validate(),
            ArchitectureSpec::Rnn(a) => a.validate(),
        }
    }

    pub fn kind(&self) -> CellKind {
        match self {
            ArchitectureSpec::Cnn(_) => CellKind::Cnn,
            ArchitectureSpec::Rnn(_) => CellKind::Rnn,
        }
    }

    pub fn cell(&self) -> &CellTopology {
        match self {
            ArchitectureSpec::Cnn(a) => &a.cell,
            ArchitectureSpec::Rnn(a) => &a.cell,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("architecture serializes")
    }

    pub fn from_json(text: &str) -> Result<ArchitectureSpec> {
        let spec: ArchitectureSpec = serde_json::from_str(text)
            .map_err(|e| Error::parse("architecture", e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Default CNN skeleton parameters around a given cell.
pub fn build_cnn(
    cell: CellTopology,
    stages: usize,
    cells_per_stage: usize,
    base_filters: usize,
    input_resolution: (usize, usize),
) -> Result<ArchitectureSpec> {
    let arch = CnnArchitecture {
        cell,
        stages,
        cells_per_stage,
        base_filters,
        input_resolution,
        input_channels: default_input_channels(),
        num_classes: default_num_classes(),
        residual: default_residual(),
    };
    arch.validate()?;
    Ok(ArchitectureSpec::Cnn(arch))
}

/// Default RNN skeleton parameters around a given cell.
pub fn build_rnn(
    cell: CellTopology,
    hidden_dim: usize,
    embed_dim: usize,
    vocab_size: usize,
) -> Result<ArchitectureSpec> {
    let arch = RnnArchitecture { cell, hidden_dim, embed_dim, vocab_size };
    arch.validate()?;
    Ok(ArchitectureSpec::Rnn(arch))
}

/// Output encodings for a built architecture.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Json,
    Dot,
    Summary,
}

impl FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<ExportFormat> {
        match s {
            "json" => Ok(ExportFormat::Json),
            "dot" => Ok(ExportFormat::Dot),
            "summary" => Ok(ExportFormat::Summary),
            other => Err(Error::invalid(format!(
                "unknown format {other:?} (expected json, dot, or summary)"
            ))),
        }
    }
}

impl std::fmt::Display for ExportFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ExportFormat::Json => "json",
            ExportFormat::Dot => "dot",
            ExportFormat::Summary => "summary",
        })
    }
}

/// Renders an architecture. `Json` is the full spec, `Dot` the searched
/// cell's graph (the skeleton is fixed), `Summary` a per-layer cost table.
pub fn export(arch: &ArchitectureSpec, format: ExportFormat) -> Result<String> {
    arch.validate()?;
    match format {
        ExportFormat::Json => Ok(arch.to_json()),
        ExportFormat::Dot => Ok(arch.cell().to_dot()),
        ExportFormat::Summary => summary(arch),
    }
}

/// Aggregates cost rows by their first path segment (`stage1.cell1.node0`
/// groups under `stage1`), preserving first-seen order.
fn grouped_rows(arch: &ArchitectureSpec) -> Result<Vec<(String, u64, u64)>> {
    let report = cost::architecture_cost(arch)?;
    let mut order: Vec<String> = Vec::new();
    let mut totals: std::collections::HashMap<String, (u64, u64)> = std::collections::HashMap::new();
    for row in report.rows() {
        let group = row.id.split('.').next().unwrap_or(&row.id).to_string();
        let entry = totals.entry(group.clone()).or_insert_with(|| {
            order.push(group.clone());
            (0, 0)
        });
        entry.0 += row.macs;
        entry.1 += row.params;
    }
    Ok(order
        .into_iter()
        .map(|g| {
            let (m, p) = totals[&g];
            (g, m, p)
        })
        .collect())
}

/// Human-readable per-layer table with grand totals.
pub fn summary(arch: &ArchitectureSpec) -> Result<String> {
    let groups = grouped_rows(arch)?;
    let (total_m, total_p) =
        groups.iter().fold((0u64, 0u64), |(m, p), g| (m + g.1, p + g.2));
    let kind_line = match arch {
        ArchitectureSpec::Cnn(a) => {
            let (h, w) = a.input_resolution;
            format!(
                "cnn: {} stages x {} cells, base_filters {}, input {}x{}x{}, {} classes\n",
                a.stages, a.cells_per_stage, a.base_filters, h, w, a.input_channels, a.num_classes
            )
        }
        ArchitectureSpec::Rnn(a) => format!(
            "rnn: hidden {}, embed {}, vocab {}\n",
            a.hidden_dim, a.embed_dim, a.vocab_size
        ),
    };
    let width = groups.iter().map(|g| g.0.len()).chain(["layer".len(), "total".len()]).max().unwrap();
    let mut out = kind_line;
    out.push_str(&format!("{:width$}  {:>12}  {:>12}\n", "layer", "macs", "params"));
    for (name, m, p) in &groups {
        out.push_str(&format!("{name:width$}  {m:>12}  {p:>12}\n"));
    }
    out.push_str(&format!("{:width$}  {total_m:>12}  {total_p:>12}\n", "total"));
    Ok(out)
}
