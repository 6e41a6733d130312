//! Configuration loading and resolution.
//!
//! One TOML document with four optional sections — `[search]`, `[evaluator]`,
//! `[arch]`, `[priors]` — where every key has a kind-aware default: a missing
//! file or empty document resolves to the standard CNN search (8 nodes, 10
//! candidates per step, λ = 0.1, surrogate evaluator), and `kind = "rnn"`
//! swaps in the recurrent defaults (6 nodes, 5 candidates). Unknown keys are
//! rejected with the offending field named, so typos fail loudly instead of
//! silently falling back to defaults.

use std::fs;
use std::path::Path;

use serde::Deserialize;
use shrinknas_core::builder::{ArchitectureSpec, CnnArchitecture, RnnArchitecture};
use shrinknas_core::cost::ResourceKind;
use shrinknas_core::eval::dataset::DatasetSpec;
use shrinknas_core::eval::{EvaluatorConfig, EvaluatorKind};
use shrinknas_core::priors::{PriorFamily, PriorSpec};
use shrinknas_core::shrink::SearchConfig;
use shrinknas_core::topology::{CellKind, CellTopology};

use crate::Failure;

// ---------------------------------------------------------------------------
// Raw document schema
// ---------------------------------------------------------------------------

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    search: SearchSection,
    evaluator: EvaluatorSection,
    arch: ArchSection,
    priors: PriorsSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SearchSection {
    kind: Option<String>,
    nodes: Option<usize>,
    k: Option<usize>,
    lambda: Option<f64>,
    resource: Option<String>,
    seed: Option<u64>,
    workers: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EvaluatorSection {
    kind: Option<String>,
    live_weight: Option<f64>,
    log_paths_weight: Option<f64>,
    diversity_weight: Option<f64>,
    epochs: Option<usize>,
    batch_size: Option<usize>,
    learning_rate: Option<f64>,
    window: Option<usize>,
    desk_stages: Option<usize>,
    desk_cells_per_stage: Option<usize>,
    desk_base_filters: Option<usize>,
    desk_hidden_dim: Option<usize>,
    desk_embed_dim: Option<usize>,
    dataset: Option<DatasetSpec>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchSection {
    pub stages: Option<usize>,
    pub cells_per_stage: Option<usize>,
    pub base_filters: Option<usize>,
    pub input_height: Option<usize>,
    pub input_width: Option<usize>,
    pub input_channels: Option<usize>,
    pub num_classes: Option<usize>,
    pub residual: Option<bool>,
    pub hidden_dim: Option<usize>,
    pub embed_dim: Option<usize>,
    pub vocab_size: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PriorsSection {
    nodes: Option<usize>,
    trials: Option<usize>,
    families: Option<Vec<String>>,
    ws_ring_degree: Option<usize>,
    ws_rewire_prob: Option<f64>,
    er_edge_prob: Option<f64>,
    ba_attachment: Option<usize>,
}

// ---------------------------------------------------------------------------
// Loading
// ---------------------------------------------------------------------------

/// Reads and parses the config document. `None` means "all defaults"; a path
/// that is missing or malformed is a usage error naming the problem.
pub fn load(path: Option<&Path>) -> Result<FileConfig, Failure> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| {
        Failure::Usage(format!("cannot read config {}: {e}", path.display()))
    })?;
    toml::from_str(&text)
        .map_err(|e| Failure::Usage(format!("invalid config {}: {e}", path.display())))
}

fn parse_kind(raw: Option<&str>) -> Result<CellKind, Failure> {
    match raw.map(str::to_ascii_lowercase).as_deref() {
        None | Some("cnn") => Ok(CellKind::Cnn),
        Some("rnn") => Ok(CellKind::Rnn),
        Some(other) => Err(Failure::Usage(format!(
            "search.kind must be \"cnn\" or \"rnn\", got \"{other}\""
        ))),
    }
}

fn parse_resource(raw: Option<&str>, default: ResourceKind) -> Result<ResourceKind, Failure> {
    match raw.map(str::to_ascii_lowercase).as_deref() {
        None => Ok(default),
        Some("macs") => Ok(ResourceKind::Macs),
        Some("params") => Ok(ResourceKind::Params),
        Some(other) => Err(Failure::Usage(format!(
            "search.resource must be \"macs\" or \"params\", got \"{other}\""
        ))),
    }
}

fn parse_evaluator_kind(raw: Option<&str>) -> Result<Option<EvaluatorKind>, Failure> {
    match raw.map(str::to_ascii_lowercase).as_deref() {
        None => Ok(None),
        Some("surrogate") => Ok(Some(EvaluatorKind::Surrogate)),
        Some("train") => Ok(Some(EvaluatorKind::Train)),
        Some(other) => Err(Failure::Usage(format!(
            "evaluator.kind must be \"surrogate\" or \"train\", got \"{other}\""
        ))),
    }
}

// ---------------------------------------------------------------------------
// Resolution
// ---------------------------------------------------------------------------

impl FileConfig {
    /// Folds the `[search]` and `[evaluator]` sections over the kind's
    /// defaults, then applies command-line overrides and validates.
    pub fn resolve_search(
        &self,
        seed_override: Option<u64>,
        workers_override: Option<usize>,
    ) -> Result<SearchConfig, Failure> {
        let kind = parse_kind(self.search.kind.as_deref())?;
        let mut cfg = match kind {
            CellKind::Cnn => SearchConfig::default_cnn(),
            CellKind::Rnn => SearchConfig::default_rnn(),
        };
        let s = &self.search;
        if let Some(n) = s.nodes {
            cfg.nodes = n;
        }
        if let Some(k) = s.k {
            cfg.k = k;
        }
        if let Some(lambda) = s.lambda {
            cfg.lambda = lambda;
        }
        cfg.resource = parse_resource(s.resource.as_deref(), cfg.resource)?;
        if let Some(seed) = seed_override.or(s.seed) {
            cfg.seed = seed;
        }
        if let Some(workers) = workers_override.or(s.workers) {
            cfg.workers = workers;
        }
        cfg.evaluator = self.resolve_evaluator(kind)?;
        cfg.validate().map_err(|e| Failure::Usage(format!("invalid search config: {e}")))?;
        Ok(cfg)
    }

    fn resolve_evaluator(&self, kind: CellKind) -> Result<EvaluatorConfig, Failure> {
        let e = &self.evaluator;
        let mut cfg = match parse_evaluator_kind(e.kind.as_deref())? {
            None | Some(EvaluatorKind::Surrogate) => EvaluatorConfig::surrogate(kind),
            Some(EvaluatorKind::Train) => EvaluatorConfig::trained(kind),
        };
        if let Some(w) = e.live_weight {
            cfg.weights.live = w;
        }
        if let Some(w) = e.log_paths_weight {
            cfg.weights.log_paths = w;
        }
        if let Some(w) = e.diversity_weight {
            cfg.weights.diversity = w;
        }
        if let Some(v) = e.epochs {
            cfg.trainer.epochs = v;
        }
        if let Some(v) = e.batch_size {
            cfg.trainer.batch_size = v;
        }
        if let Some(v) = e.learning_rate {
            cfg.trainer.learning_rate = v;
        }
        if let Some(v) = e.window {
            cfg.trainer.window = v;
        }
        if let Some(v) = e.desk_stages {
            cfg.desk_cnn.stages = v;
        }
        if let Some(v) = e.desk_cells_per_stage {
            cfg.desk_cnn.cells_per_stage = v;
        }
        if let Some(v) = e.desk_base_filters {
            cfg.desk_cnn.base_filters = v;
        }
        if let Some(v) = e.desk_hidden_dim {
            cfg.desk_rnn.hidden_dim = v;
        }
        if let Some(v) = e.desk_embed_dim {
            cfg.desk_rnn.embed_dim = v;
        }
        if let Some(spec) = &e.dataset {
            cfg.dataset = spec.clone();
        }
        cfg.validate(kind).map_err(|e| Failure::Usage(format!("invalid evaluator config: {e}")))?;
        Ok(cfg)
    }

    /// Builds the prior sample specs from `[priors]`, with optional node and
    /// family overrides; the seed anchors per-trial derivation.
    pub fn resolve_priors(
        &self,
        seed: u64,
        nodes_override: Option<usize>,
    ) -> Result<(Vec<PriorSpec>, usize), Failure> {
        let p = &self.priors;
        let nodes = nodes_override.or(p.nodes).unwrap_or(15);
        let trials = p.trials.unwrap_or(10);
        let names = p.families.clone().unwrap_or_else(|| {
            vec!["ws".to_string(), "er".to_string(), "ba".to_string()]
        });
        let mut specs = Vec::with_capacity(names.len());
        for name in &names {
            let family = match name.to_ascii_lowercase().as_str() {
                "ws" => PriorFamily::WattsStrogatz {
                    ring_degree: p.ws_ring_degree.unwrap_or(4),
                    rewire_prob: p.ws_rewire_prob.unwrap_or(0.75),
                },
                "er" => PriorFamily::ErdosRenyi { edge_prob: p.er_edge_prob.unwrap_or(0.2) },
                "ba" => PriorFamily::BarabasiAlbert { attachment: p.ba_attachment.unwrap_or(2) },
                other => {
                    return Err(Failure::Usage(format!(
                        "priors.families: unknown family \"{other}\" (expected ws, er, or ba)"
                    )))
                }
            };
            let spec = PriorSpec { family, nodes, seed };
            spec.validate().map_err(|e| Failure::Usage(format!("invalid priors config: {e}")))?;
            specs.push(spec);
        }
        if trials < 1 {
            return Err(Failure::Usage("priors.trials must be at least 1".to_string()));
        }
        Ok((specs, trials))
    }

    /// Wraps a cell into a full architecture using `[arch]` plus overrides
    /// (command-line flags win over the file, the file over defaults).
    pub fn build_arch(
        &self,
        cell: CellTopology,
        overrides: &ArchSection,
    ) -> Result<ArchitectureSpec, Failure> {
        let a = &self.arch;
        let pick = |x: Option<usize>, y: Option<usize>, d: usize| x.or(y).unwrap_or(d);
        let spec = match cell.kind() {
            CellKind::Cnn => {
                let arch = CnnArchitecture {
                    cell,
                    stages: pick(overrides.stages, a.stages, 3),
                    cells_per_stage: pick(overrides.cells_per_stage, a.cells_per_stage, 1),
                    base_filters: pick(overrides.base_filters, a.base_filters, 16),
                    input_resolution: (
                        pick(overrides.input_height, a.input_height, 32),
                        pick(overrides.input_width, a.input_width, 32),
                    ),
                    input_channels: pick(overrides.input_channels, a.input_channels, 3),
                    num_classes: pick(overrides.num_classes, a.num_classes, 10),
                    residual: overrides.residual.or(a.residual).unwrap_or(true),
                };
                ArchitectureSpec::Cnn(arch)
            }
            CellKind::Rnn => {
                let arch = RnnArchitecture {
                    cell,
                    hidden_dim: pick(overrides.hidden_dim, a.hidden_dim, 200),
                    embed_dim: pick(overrides.embed_dim, a.embed_dim, 200),
                    vocab_size: pick(overrides.vocab_size, a.vocab_size, 10_000),
                };
                ArchitectureSpec::Rnn(arch)
            }
        };
        spec.validate().map_err(|e| Failure::Usage(format!("invalid architecture: {e}")))?;
        Ok(spec)
    }
}
