//! Browser bindings for the interactive demo page.
//!
//! Three operations are exported, all JSON-string in / JSON-string out so the
//! JavaScript side stays a thin render layer:
//!
//! - [`run_search`]: the full shrinking loop with the structural surrogate.
//! - [`sample_prior`]: one seeded random-graph baseline, scored the same way.
//! - [`describe_architecture`]: expand a cell into a staged network and
//!   report per-layer MACs/params.
//!
//! Every reply is an envelope `{"ok": true, ...}` or `{"ok": false,
//! "error": "..."}`; the functions never throw. Search always runs with
//! `workers = 1`, which evaluates inline — browser runtimes cannot spawn the
//! engine's native worker threads.

use serde::{Deserialize, Serialize};
use serde_json::json;
use wasm_bindgen::prelude::wasm_bindgen;

use shrinknas_core::builder::{self, ArchitectureSpec, CnnArchitecture, RnnArchitecture};
use shrinknas_core::cost::{self, ResourceKind};
use shrinknas_core::eval::{self, EvaluatorConfig, ScoreShapes};
use shrinknas_core::priors::{generate_prior, PriorFamily, PriorSpec};
use shrinknas_core::rng::{self, Stream};
use shrinknas_core::shrink::{run_shrink, score, SearchConfig};
use shrinknas_core::topology::{CellKind, CellTopology};
use shrinknas_core::Result;

fn envelope(result: Result<serde_json::Value>) -> String {
    let value = match result {
        Ok(mut body) => {
            body["ok"] = json!(true);
            body
        }
        Err(e) => json!({ "ok": false, "error": e.to_string() }),
    };
    value.to_string()
}

fn parse_kind(raw: &str) -> Result<CellKind> {
    match raw.to_ascii_lowercase().as_str() {
        "cnn" => Ok(CellKind::Cnn),
        "rnn" => Ok(CellKind::Rnn),
        other => Err(shrinknas_core::Error::invalid(format!(
            "kind must be \"cnn\" or \"rnn\", got \"{other}\""
        ))),
    }
}

/// Structural facts the page needs to draw a cell: which nodes survive the
/// mapping, who feeds from the block input, and which nodes form the output.
fn cell_view(g: &CellTopology) -> serde_json::Value {
    let block = g.map_to_block();
    json!({
        "doc": serde_json::from_str::<serde_json::Value>(&g.to_json()).unwrap_or_default(),
        "dot": g.to_dot(),
        "live": block.live_nodes(),
        "input_fed": block.input_fed(),
        "leaves": block.leaves(),
        "edges": g.edge_count(),
        "paths": block.path_count().to_string(),
    })
}

// ---------------------------------------------------------------------------
// run_search
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SearchRequest {
    #[serde(default = "default_kind")]
    kind: String,
    #[serde(default = "default_nodes")]
    nodes: usize,
    #[serde(default = "default_k")]
    k: usize,
    #[serde(default = "default_lambda")]
    lambda: f64,
    #[serde(default = "default_seed")]
    seed: u64,
}

fn default_kind() -> String {
    "cnn".to_string()
}
fn default_nodes() -> usize {
    8
}
fn default_k() -> usize {
    10
}
fn default_lambda() -> f64 {
    0.1
}
fn default_seed() -> u64 {
    7
}

#[derive(Serialize)]
struct TrajectoryPoint {
    t: usize,
    removed_edge: Option<String>,
    score: f64,
    perf: f64,
    macs: u64,
    params: u64,
    live_nodes: usize,
    edges_remaining: usize,
}

/// Runs the surrogate-scored shrinking search. Input: `{"kind", "nodes",
/// "k", "lambda", "seed"}`, all optional. The reply carries the winner-only
/// trajectory (one point per iteration) plus the initial and best cells.
#[wasm_bindgen]
pub fn run_search(request_json: &str) -> String {
    envelope((|| {
        let req: SearchRequest = serde_json::from_str(request_json)
            .map_err(|e| shrinknas_core::Error::invalid(format!("bad request: {e}")))?;
        let kind = parse_kind(&req.kind)?;
        let mut cfg = match kind {
            CellKind::Cnn => SearchConfig::default_cnn(),
            CellKind::Rnn => SearchConfig::default_rnn(),
        };
        cfg.nodes = req.nodes;
        cfg.k = req.k;
        cfg.lambda = req.lambda;
        cfg.seed = req.seed;
        cfg.workers = 1;
        let outcome = run_shrink(&cfg)?;
        let winners: Vec<TrajectoryPoint> = outcome
            .trajectory
            .iter()
            .filter(|r| r.winner)
            .map(|r| TrajectoryPoint {
                t: r.t,
                removed_edge: r.removed_edge.map(|e| format!("{}-{}", e.from, e.to)),
                score: r.score,
                perf: r.perf,
                macs: r.macs,
                params: r.params,
                live_nodes: r.live_nodes,
                edges_remaining: r.edges_remaining,
            })
            .collect();
        Ok(json!({
            "trajectory": winners,
            "initial": cell_view(&outcome.initial),
            "best": cell_view(&outcome.best),
            "best_score": outcome.best_score,
            "evaluations": outcome.evaluations,
        }))
    })())
}

// ---------------------------------------------------------------------------
// sample_prior
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PriorRequest {
    family: String,
    #[serde(default = "default_prior_nodes")]
    nodes: usize,
    #[serde(default = "default_seed")]
    seed: u64,
    #[serde(default = "default_kind")]
    kind: String,
    #[serde(default = "default_ring_degree")]
    ring_degree: usize,
    #[serde(default = "default_rewire_prob")]
    rewire_prob: f64,
    #[serde(default = "default_edge_prob")]
    edge_prob: f64,
    #[serde(default = "default_attachment")]
    attachment: usize,
}

fn default_prior_nodes() -> usize {
    15
}
fn default_ring_degree() -> usize {
    4
}
fn default_rewire_prob() -> f64 {
    0.75
}
fn default_edge_prob() -> f64 {
    0.2
}
fn default_attachment() -> usize {
    2
}

/// Samples one random-graph baseline cell and scores it with the surrogate.
/// Input: `{"family": "ws"|"er"|"ba", "nodes", "seed", "kind"}` plus the
/// family parameter (`ring_degree`/`rewire_prob`, `edge_prob`, or
/// `attachment`).
#[wasm_bindgen]
pub fn sample_prior(request_json: &str) -> String {
    envelope((|| {
        let req: PriorRequest = serde_json::from_str(request_json)
            .map_err(|e| shrinknas_core::Error::invalid(format!("bad request: {e}")))?;
        let kind = parse_kind(&req.kind)?;
        let family = match req.family.to_ascii_lowercase().as_str() {
            "ws" => PriorFamily::WattsStrogatz {
                ring_degree: req.ring_degree,
                rewire_prob: req.rewire_prob,
            },
            "er" => PriorFamily::ErdosRenyi { edge_prob: req.edge_prob },
            "ba" => PriorFamily::BarabasiAlbert { attachment: req.attachment },
            other => {
                return Err(shrinknas_core::Error::invalid(format!(
                    "unknown family \"{other}\" (expected ws, er, or ba)"
                )))
            }
        };
        let spec = PriorSpec { family, nodes: req.nodes, seed: req.seed };
        let cell = generate_prior(&spec, kind)?;

        // Same scoring path as the search: surrogate perf, cell-level MACs,
        // evaluation seed keyed to the cell's content.
        let cfg = match kind {
            CellKind::Cnn => SearchConfig::default_cnn(),
            CellKind::Rnn => SearchConfig::default_rnn(),
        };
        let eval_seed = rng::derive(cfg.seed, Stream::Eval, &[cell.fingerprint()]);
        let result = eval::evaluate(
            &cell,
            &EvaluatorConfig::surrogate(kind),
            &ScoreShapes::default(),
            None,
            eval_seed,
        )?;
        let resource = match cfg.resource {
            ResourceKind::Macs => result.macs,
            ResourceKind::Params => result.params,
        };
        Ok(json!({
            "family": family.code(),
            "cell": cell_view(&cell),
            "perf": result.perf,
            "macs": result.macs,
            "params": result.params,
            "score": score(result.perf, resource, cfg.lambda),
        }))
    })())
}

// ---------------------------------------------------------------------------
// describe_architecture
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct ArchRequest {
    stages: usize,
    cells_per_stage: usize,
    base_filters: usize,
    input_height: usize,
    input_width: usize,
    input_channels: usize,
    num_classes: usize,
    residual: bool,
    hidden_dim: usize,
    embed_dim: usize,
    vocab_size: usize,
}

impl Default for ArchRequest {
    fn default() -> ArchRequest {
        ArchRequest {
            stages: 3,
            cells_per_stage: 1,
            base_filters: 16,
            input_height: 32,
            input_width: 32,
            input_channels: 3,
            num_classes: 10,
            residual: true,
            hidden_dim: 200,
            embed_dim: 200,
            vocab_size: 10_000,
        }
    }
}

/// Expands a cell document into a staged architecture and reports the
/// per-layer cost table. Inputs: the cell document itself and an optional
/// parameter object (stages, filters, dimensions...).
#[wasm_bindgen]
pub fn describe_architecture(cell_json: &str, params_json: &str) -> String {
    envelope((|| {
        let cell = CellTopology::from_json(cell_json)?;
        let raw = if params_json.trim().is_empty() { "{}" } else { params_json };
        let req: ArchRequest = serde_json::from_str(raw)
            .map_err(|e| shrinknas_core::Error::invalid(format!("bad parameters: {e}")))?;
        let arch = match cell.kind() {
            CellKind::Cnn => ArchitectureSpec::Cnn(CnnArchitecture {
                cell,
                stages: req.stages,
                cells_per_stage: req.cells_per_stage,
                base_filters: req.base_filters,
                input_resolution: (req.input_height, req.input_width),
                input_channels: req.input_channels,
                num_classes: req.num_classes,
                residual: req.residual,
            }),
            CellKind::Rnn => ArchitectureSpec::Rnn(RnnArchitecture {
                cell,
                hidden_dim: req.hidden_dim,
                embed_dim: req.embed_dim,
                vocab_size: req.vocab_size,
            }),
        };
        arch.validate()?;
        let report = cost::architecture_cost(&arch)?;
        let rows: Vec<serde_json::Value> = report
            .rows()
            .iter()
            .map(|r| json!({ "id": r.id, "op": r.op, "macs": r.macs, "params": r.params }))
            .collect();
        Ok(json!({
            "summary": builder::summary(&arch)?,
            "doc": serde_json::from_str::<serde_json::Value>(&arch.to_json()).unwrap_or_default(),
            "rows": rows,
            "macs": report.macs(),
            "params": report.params(),
        }))
    })())
}
