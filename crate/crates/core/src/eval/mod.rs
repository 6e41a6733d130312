//! Evaluators: turn a cell topology into a performance estimate.
//!
//! Two interchangeable backends. The *surrogate* scores structure only -
//! live-node count, input-to-leaf path mass, operation diversity - and is
//! instant. The *trainer* maps the cell into a desk-scale network and trains
//! it on a synthetic task, reporting validated task performance. Both return
//! the same [`EvalResult`] shape so the search loop does not care which one
//! is running.

pub mod dataset;
pub mod nn;
pub mod tape;
pub mod tensor;

use serde::{Deserialize, Serialize};

use crate::builder::{ArchitectureSpec, CnnArchitecture, RnnArchitecture};
use crate::cost::{self, CnnShape, RnnShape};
use crate::error::{Error, Result};
use crate::topology::{CellKind, CellTopology};
use dataset::{DatasetSpec, ProxyData};
use nn::TrainerConfig;

/// Coefficients of the structural surrogate:
/// `perf = clamp(live*L + ln(1+paths)*P + diversity*D, 0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateWeights {
    pub live: f64,
    pub log_paths: f64,
    pub diversity: f64,
}

impl Default for SurrogateWeights {
    fn default() -> SurrogateWeights {
        SurrogateWeights { live: 0.03, log_paths: 0.10, diversity: 0.10 }
    }
}

/// Structure-only performance estimate in [0, 1]. Rewards live capacity,
/// input-to-leaf path mass (log-damped), and operation variety; an empty
/// block scores 0.
pub fn surrogate_perf(g: &CellTopology, w: &SurrogateWeights) -> f64 {
    let block = g.map_to_block();
    let live = block.live_nodes().len() as f64;
    let paths = block.path_count() as f64;
    let mut seen: Vec<&str> = block.live_nodes().iter().map(|&v| g.ops()[v].name()).collect();
    seen.sort_unstable();
    seen.dedup();
    let diversity = seen.len() as f64 / g.kind().alphabet_size() as f64;
    (w.live * live + w.log_paths * (1.0 + paths).ln() + w.diversity * diversity).clamp(0.0, 1.0)
}

/// Which backend scores candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvaluatorKind {
    Surrogate,
    Train,
}

/// Desk CNN skeleton used by the trainer (input geometry and class count
/// come from the dataset).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeskCnn {
    pub stages: usize,
    pub cells_per_stage: usize,
    pub base_filters: usize,
}

impl Default for DeskCnn {
    fn default() -> DeskCnn {
        DeskCnn { stages: 2, cells_per_stage: 1, base_filters: 6 }
    }
}

/// Desk RNN dimensions used by the trainer (vocabulary from the dataset).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeskRnn {
    pub hidden_dim: usize,
    pub embed_dim: usize,
}

impl Default for DeskRnn {
    fn default() -> DeskRnn {
        DeskRnn { hidden_dim: 16, embed_dim: 16 }
    }
}

/// Full evaluator selection plus everything the trainer backend needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluatorConfig {
    pub kind: EvaluatorKind,
    pub weights: SurrogateWeights,
    pub dataset: DatasetSpec,
    pub trainer: TrainerConfig,
    pub desk_cnn: DeskCnn,
    pub desk_rnn: DeskRnn,
}

impl EvaluatorConfig {
    pub fn surrogate(kind: CellKind) -> EvaluatorConfig {
        EvaluatorConfig {
            kind: EvaluatorKind::Surrogate,
            weights: SurrogateWeights::default(),
            dataset: match kind {
                CellKind::Cnn => DatasetSpec::default_cnn(),
                CellKind::Rnn => DatasetSpec::default_rnn(),
            },
            trainer: match kind {
                CellKind::Cnn => TrainerConfig::desk_cnn(),
                CellKind::Rnn => TrainerConfig::desk_rnn(),
            },
            desk_cnn: DeskCnn::default(),
            desk_rnn: DeskRnn::default(),
        }
    }

    pub fn trained(kind: CellKind) -> EvaluatorConfig {
        EvaluatorConfig { kind: EvaluatorKind::Train, ..EvaluatorConfig::surrogate(kind) }
    }

    pub fn validate(&self, cell_kind: CellKind) -> Result<()> {
        if self.kind == EvaluatorKind::Train {
            self.dataset.validate()?;
            self.trainer.validate()?;
            let image_task = self.dataset.is_image();
            let image_cell = cell_kind == CellKind::Cnn;
            if image_task != image_cell {
                return Err(Error::invalid(format!(
                    "dataset task ({}) does not match cell kind ({cell_kind})",
                    if image_task { "images" } else { "tokens" },
                )));
            }
        }
        Ok(())
    }
}

/// Cell-level resource shapes the search metric charges against (the
/// deployment-scale context, independent of the desk trainer's sizes).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreShapes {
    pub cnn: CnnShape,
    pub rnn: RnnShape,
}

impl Default for ScoreShapes {
    fn default() -> ScoreShapes {
        ScoreShapes {
            // input_channels == stage_filters keeps node cost monotone under
            // edge removal (an input-fed promotion never widens its read).
            cnn: CnnShape { height: 32, width: 32, stage_filters: 16, input_channels: 16 },
            rnn: RnnShape { hidden_dim: 200, vocab_size: 10_000, embed_dim: 200 },
        }
    }
}

/// One candidate's evaluation: performance, the raw task metric behind it,
/// and the resource footprint at score shapes. `wallclock_ms` is advisory
/// and never lands in deterministic artifacts.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub perf: f64,
    pub raw_metric: f64,
    pub macs: u64,
    pub params: u64,
    pub wallclock_ms: u64,
}

/// Wraps the cell into the desk-scale skeleton matching the dataset.
pub fn desk_architecture(
    g: &CellTopology,
    cfg: &EvaluatorConfig,
    data: &ProxyData,
) -> Result<ArchitectureSpec> {
    match (g.kind(), data) {
        (CellKind::Cnn, ProxyData::Images(images)) => {
            let arch = CnnArchitecture {
                cell: g.clone(),
                stages: cfg.desk_cnn.stages,
                cells_per_stage: cfg.desk_cnn.cells_per_stage,
                base_filters: cfg.desk_cnn.base_filters,
                input_resolution: (images.height, images.width),
                input_channels: images.channels,
                num_classes: images.classes,
                residual: true,
            };
            arch.validate()?;
            Ok(ArchitectureSpec::Cnn(arch))
        }
        (CellKind::Rnn, ProxyData::Tokens(tokens)) => {
            let arch = RnnArchitecture {
                cell: g.clone(),
                hidden_dim: cfg.desk_rnn.hidden_dim,
                embed_dim: cfg.desk_rnn.embed_dim,
                vocab_size: tokens.vocab,
            };
            arch.validate()?;
            Ok(ArchitectureSpec::Rnn(arch))
        }
        _ => Err(Error::invalid("dataset task does not match cell kind")),
    }
}

/// Scores one cell. Training failures surface as [`Error::Eval`]; the
/// surrogate never fails. `data` is required for the trainer backend and
/// must be generated once per search (all candidates see identical data).
pub fn evaluate(
    g: &CellTopology,
    cfg: &EvaluatorConfig,
    shapes: &ScoreShapes,
    data: Option<&ProxyData>,
    seed: u64,
) -> Result<EvalResult> {
    let started = std::time::Instant::now();
    let report = cost::cell_cost(g, &shapes.cnn, &shapes.rnn)?;
    let (perf, raw_metric) = match cfg.kind {
        EvaluatorKind::Surrogate => {
            let p = surrogate_perf(g, &cfg.weights);
            (p, p)
        }
        EvaluatorKind::Train => {
            let data = data.ok_or_else(|| {
                Error::Eval("trainer backend needs a generated dataset".to_string())
            })?;
            let arch = desk_architecture(g, cfg, data)?;
            let outcome = match &arch {
                ArchitectureSpec::Cnn(a) => nn::train_cnn(
                    a,
                    data.images().map_err(|e| Error::Eval(e.to_string()))?,
                    &cfg.trainer,
                    seed,
                ),
                ArchitectureSpec::Rnn(a) => nn::train_rnn(
                    a,
                    data.tokens().map_err(|e| Error::Eval(e.to_string()))?,
                    &cfg.trainer,
                    seed,
                ),
            }
            .map_err(|e| Error::Eval(format!("training failed: {e}")))?;
            (outcome.perf, outcome.raw_metric)
        }
    };
    Ok(EvalResult {
        perf,
        raw_metric,
        macs: report.macs(),
        params: report.params(),
        wallclock_ms: started.elapsed().as_millis() as u64,
    })
}
