//! The progressive edge-shrinking loop.
//!
//! Starting from the complete DAG, each iteration enumerates every
//! one-edge-removed variant (the shrink space), samples at most `k` of them
//! without replacement, scores each as `S = perf - lambda * ln(max(res, 1))`,
//! and continues from the winner. The returned optimum is the best-scoring
//! graph among the start point and all iteration winners.
//!
//! Determinism: candidate selection draws from a per-iteration stream,
//! evaluation seeds derive from each graph's content fingerprint, and
//! candidates are scored in ascending-edge order with ties broken toward the
//! smallest removed edge - so results are byte-identical across repeats and
//! across `workers` settings.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::ResourceKind;
use crate::error::{Error, Result};
use crate::eval::dataset::{self, ProxyData};
use crate::eval::{self, EvalResult, EvaluatorConfig, EvaluatorKind, ScoreShapes};
use crate::rng::{self, Stream};
use crate::topology::{CellKind, CellTopology, Edge};

/// Everything one search run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub kind: CellKind,
    /// Nodes in the cell; the search starts from the complete DAG on them.
    pub nodes: usize,
    /// Candidates sampled per iteration.
    pub k: usize,
    /// Resource pressure in the score.
    pub lambda: f64,
    /// Which resource the score penalizes.
    pub resource: ResourceKind,
    pub seed: u64,
    /// Worker threads for candidate evaluation; 0 means one per core.
    pub workers: usize,
    pub evaluator: EvaluatorConfig,
    pub shapes: ScoreShapes,
}

impl SearchConfig {
    /// Convolutional search defaults: 8 nodes, 10 candidates, MAC pressure.
    pub fn default_cnn() -> SearchConfig {
        SearchConfig {
            kind: CellKind::Cnn,
            nodes: 8,
            k: 10,
            lambda: 0.1,
            resource: ResourceKind::Macs,
            seed: 7,
            workers: 0,
            evaluator: EvaluatorConfig::surrogate(CellKind::Cnn),
            shapes: ScoreShapes::default(),
        }
    }

    /// Recurrent search defaults: 6 nodes, 5 candidates, parameter pressure.
    pub fn default_rnn() -> SearchConfig {
        SearchConfig {
            kind: CellKind::Rnn,
            nodes: 6,
            k: 5,
            lambda: 0.1,
            resource: ResourceKind::Params,
            seed: 7,
            workers: 0,
            evaluator: EvaluatorConfig::surrogate(CellKind::Rnn),
            shapes: ScoreShapes::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes < 2 {
            return Err(Error::invalid("search: nodes must be >= 2"));
        }
        if self.k == 0 {
            return Err(Error::invalid("search: k must be >= 1"));
        }
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::invalid("search: lambda must be finite and >= 0"));
        }
        self.shapes.cnn.validate()?;
        self.shapes.rnn.validate()?;
        self.evaluator.validate(self.kind)?;
        Ok(())
    }
}

/// The combined search metric: performance minus log-damped resource
/// pressure. An empty block has zero resource and scores exactly `perf`.
pub fn score(perf: f64, resource: u64, lambda: f64) -> f64 {
    perf - lambda * (resource.max(1) as f64).ln()
}

/// All one-edge-removed variants of `g`, ascending by removed edge.
pub fn shrink_space(g: &CellTopology) -> Vec<CellTopology> {
    g.edges()
        .iter()
        .map(|&e| g.remove_edge(e).expect("edge is present"))
        .collect()
}

/// Samples `min(k, space)` indices uniformly without replacement (partial
/// Fisher-Yates), returned ascending so evaluation order is canonical.
pub fn select_candidates(space: usize, k: usize, r: &mut rand_chacha::ChaCha8Rng) -> Vec<usize> {
    let take = k.min(space);
    let mut pool: Vec<usize> = (0..space).collect();
    for i in 0..take {
        let j = r.gen_range(i..space);
        pool.swap(i, j);
    }
    let mut chosen = pool[..take].to_vec();
    chosen.sort_unstable();
    chosen
}

/// One evaluated candidate in the trajectory log: either the starting graph
/// (`t = 0`, no removed edge) or one sampled variant at iteration `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: usize,
    pub removed_edge: Option<Edge>,
    pub score: f64,
    pub perf: f64,
    pub raw_metric: f64,
    pub macs: u64,
    pub params: u64,
    pub live_nodes: usize,
    pub edges_remaining: usize,
    /// True on the row the iteration continued from (and on the start row).
    pub winner: bool,
}

/// A finished search: the start point, the per-candidate log, and the best
/// graph over the start and all iteration winners.
#[derive(Debug, Clone, PartialEq)]
pub struct ShrinkOutcome {
    pub initial: CellTopology,
    pub best: CellTopology,
    pub best_score: f64,
    pub best_eval: EvalResult,
    pub trajectory: Vec<TrajectoryRow>,
    /// Candidate evaluations performed, excluding the start point.
    pub evaluations: usize,
}

pub(crate) fn eval_seeded(
    g: &CellTopology,
    cfg: &SearchConfig,
    data: Option<&ProxyData>,
) -> Result<(EvalResult, f64)> {
    let eval_seed = rng::derive(cfg.seed, Stream::Eval, &[g.fingerprint()]);
    let result = eval::evaluate(g, &cfg.evaluator, &cfg.shapes, data, eval_seed)?;
    let resource = match cfg.resource {
        ResourceKind::Macs => result.macs,
        ResourceKind::Params => result.params,
    };
    let s = score(result.perf, resource, cfg.lambda);
    Ok((result, s))
}

fn row_for(
    t: usize,
    removed: Option<Edge>,
    g: &CellTopology,
    result: &EvalResult,
    s: f64,
) -> TrajectoryRow {
    TrajectoryRow {
        t,
        removed_edge: removed,
        score: s,
        perf: result.perf,
        raw_metric: result.raw_metric,
        macs: result.macs,
        params: result.params,
        live_nodes: g.map_to_block().live_nodes().len(),
        edges_remaining: g.edge_count(),
        winner: false,
    }
}

/// Runs the full shrinking search to the edge-free graph.
pub fn run_shrink(cfg: &SearchConfig) -> Result<ShrinkOutcome> {
    cfg.validate()?;
    // workers == 1 evaluates inline without spawning any OS thread, which
    // also keeps the loop usable on targets without threads (browsers).
    // Results are identical either way: candidates are scored in canonical
    // ascending-edge order with per-graph seeds.
    let pool = match cfg.workers {
        1 => None,
        n => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::invalid(format!("worker pool: {e}")))?,
        ),
    };
    let data = match cfg.evaluator.kind {
        EvaluatorKind::Train => Some(dataset::generate(&cfg.evaluator.dataset, cfg.seed)?),
        EvaluatorKind::Surrogate => None,
    };
    let data = data.as_ref();

    let initial = CellTopology::complete(cfg.nodes, cfg.kind, cfg.seed)?;
    let (init_result, init_score) = eval_seeded(&initial, cfg, data)?;
    let mut trajectory = Vec::new();
    let mut start_row = row_for(0, None, &initial, &init_result, init_score);
    start_row.winner = true;
    trajectory.push(start_row);

    let mut best = initial.clone();
    let mut best_score = init_score;
    let mut best_eval = init_result;
    let mut current = initial.clone();
    let mut evaluations = 0usize;

    let mut t = 0usize;
    while current.edge_count() > 0 {
        t += 1;
        let space = shrink_space(&current);
        let mut select_rng = rng::rng(cfg.seed, Stream::Select, &[t as u64]);
        let chosen = select_candidates(space.len(), cfg.k, &mut select_rng);
        let candidates: Vec<(Edge, &CellTopology)> =
            chosen.iter().map(|&i| (current.edges()[i], &space[i])).collect();

        // Order-preserving map: results come back in the canonical
        // ascending-edge order regardless of thread scheduling.
        let scored: Vec<(EvalResult, f64)> = match &pool {
            Some(pool) => pool.install(|| {
                candidates
                    .par_iter()
                    .map(|(_, g)| eval_seeded(g, cfg, data))
                    .collect::<Result<Vec<_>>>()
            })?,
            None => candidates
                .iter()
                .map(|(_, g)| eval_seeded(g, cfg, data))
                .collect::<Result<Vec<_>>>()?,
        };
        evaluations += scored.len();

        let mut winner_at = 0usize;
        for (i, (_, s)) in scored.iter().enumerate() {
            // Strict comparison keeps the smallest removed edge on ties.
            if *s > scored[winner_at].1 {
                winner_at = i;
            }
        }
        for (i, ((edge, g), (result, s))) in candidates.iter().zip(&scored).enumerate() {
            let mut row = row_for(t, Some(*edge), g, result, *s);
            row.winner = i == winner_at;
            trajectory.push(row);
        }

        let (winner_edge, winner_graph) = candidates[winner_at];
        let (winner_result, winner_score) = scored[winner_at].clone();
        log::debug!(
            "t={t}: removed {winner_edge}, score {winner_score:.6}, {} edges left",
            winner_graph.edge_count()
        );
        if winner_score > best_score {
            best = winner_graph.clone();
            best_score = winner_score;
            best_eval = winner_result;
        }
        current = winner_graph.clone();
    }

    Ok(ShrinkOutcome { initial, best, best_score, best_eval, trajectory, evaluations })
}

/// CSV encoding of a trajectory. Edges render as `from-to`; floats use
/// Rust's shortest round-trip formatting.
pub fn write_trajectory_csv(rows: &[TrajectoryRow]) -> String {
    let mut out = String::from(
        "t,removed_edge,score,perf,raw_metric,macs,params,live_nodes,edges_remaining,winner\n",
    );
    for r in rows {
        let edge = r
            .removed_edge
            .map(|e| format!("{}-{}", e.from, e.to))
            .unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.t,
            edge,
            r.score,
            r.perf,
            r.raw_metric,
            r.macs,
            r.params,
            r.live_nodes,
            r.edges_remaining,
            r.winner
        ));
    }
    out
}

/// One k-sweep measurement: search effort and outcome at a given `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSweepRow {
    pub k: usize,
    pub evaluations: usize,
    pub best_score: f64,
    pub best_perf: f64,
    pub best_macs: u64,
    pub best_params: u64,
    pub best_edges: usize,
}

/// Outcomes of the same search at different candidate budgets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSweepReport {
    pub rows: Vec<KSweepRow>,
}

impl KSweepReport {
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("k,evaluations,best_score,best_perf,best_macs,best_params,best_edges\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.k, r.evaluations, r.best_score, r.best_perf, r.best_macs, r.best_params,
                r.best_edges
            ));
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:>6}  {:>12}  {:>12}  {:>10}  {:>12}  {:>12}  {:>6}\n",
            "k", "evaluations", "best_score", "best_perf", "best_macs", "best_params", "edges"
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:>6}  {:>12}  {:>12.6}  {:>10.6}  {:>12}  {:>12}  {:>6}\n",
                r.k, r.evaluations, r.best_score, r.best_perf, r.best_macs, r.best_params,
                r.best_edges
            ));
        }
        out
    }
}

/// Runs the search once per `k` (same seed and evaluator each time).
pub fn k_sweep(base: &SearchConfig, ks: &[usize]) -> Result<KSweepReport> {
    if ks.is_empty() {
        return Err(Error::invalid("k-sweep needs at least one k"));
    }
    let mut rows = Vec::with_capacity(ks.len());
    for &k in ks {
        let cfg = SearchConfig { k, ..base.clone() };
        let outcome = run_shrink(&cfg)?;
        rows.push(KSweepRow {
            k,
            evaluations: outcome.evaluations,
            best_score: outcome.best_score,
            best_perf: outcome.best_eval.perf,
            best_macs: outcome.best_eval.macs,
            best_params: outcome.best_eval.params,
            best_edges: outcome.best.edge_count(),
        });
    }
    Ok(KSweepReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;

    #[test]
    fn score_pins() {
        // perf 0.9, resource 1e6, lambda 0.1.
        let s = score(0.9, 1_000_000, 0.1);
        assert!((s - (0.9 - 0.1 * 1_000_000f64.ln())).abs() < 1e-15);
        assert!((s + 0.481_551_055_796_427_44).abs() < 1e-12);
        // Empty block: resource 0 clamps to 1, so S = perf exactly.
        assert_eq!(score(0.25, 0, 0.1), 0.25);
    }

    #[test]
    fn shrink_space_is_ascending_and_complete() {
        let g = CellTopology::complete(4, CellKind::Cnn, 1).unwrap();
        let space = shrink_space(&g);
        assert_eq!(space.len(), 6);
        for (i, smaller) in space.iter().enumerate() {
            assert_eq!(smaller.edge_count(), 5);
            // Variant i is g minus edge i.
            assert!(!smaller.contains_edge(g.edges()[i]));
        }
    }

    #[test]
    fn selection_is_uniform_without_replacement() {
        let mut r = rng_from(5);
        for _ in 0..50 {
            let chosen = select_candidates(12, 5, &mut r);
            assert_eq!(chosen.len(), 5);
            assert!(chosen.windows(2).all(|w| w[0] < w[1]), "ascending, distinct");
            assert!(chosen.iter().all(|&i| i < 12));
        }
        // k >= space takes everything.
        let mut r = rng_from(5);
        assert_eq!(select_candidates(4, 99, &mut r), vec![0, 1, 2, 3]);
    }

    #[test]
    fn run_reaches_the_empty_graph_and_logs_every_candidate() {
        let cfg = SearchConfig { nodes: 5, k: 3, ..SearchConfig::default_cnn() };
        let out = run_shrink(&cfg).unwrap();
        // 10 edges: space sizes 10..1, min(3, e) each.
        let expected: usize = (1..=10).map(|e: usize| e.min(3)).sum();
        assert_eq!(out.evaluations, expected);
        assert_eq!(out.trajectory.len(), 1 + expected);
        assert_eq!(out.trajectory[0].t, 0);
        assert!(out.trajectory[0].winner);
        assert_eq!(out.trajectory[0].edges_remaining, 10);
        // Exactly one winner per iteration.
        for t in 1..=10 {
            let winners =
                out.trajectory.iter().filter(|r| r.t == t && r.winner).count();
            assert_eq!(winners, 1, "iteration {t}");
        }
        // The last winner row has zero edges remaining.
        assert_eq!(out.trajectory.last().unwrap().edges_remaining, 0);
        // Best is at least as good as the start.
        assert!(out.best_score >= out.trajectory[0].score);
    }

    #[test]
    fn repeat_runs_are_byte_identical_across_worker_counts() {
        let base = SearchConfig { nodes: 6, k: 4, ..SearchConfig::default_cnn() };
        let a = run_shrink(&base).unwrap();
        let b = run_shrink(&base).unwrap();
        assert_eq!(a.trajectory, b.trajectory);
        let serial = SearchConfig { workers: 1, ..base.clone() };
        let wide = SearchConfig { workers: 4, ..base };
        let c = run_shrink(&serial).unwrap();
        let d = run_shrink(&wide).unwrap();
        assert_eq!(
            write_trajectory_csv(&c.trajectory),
            write_trajectory_csv(&d.trajectory)
        );
        assert_eq!(c.best, d.best);
    }

    #[test]
    fn evaluation_counts_match_the_budget_formula() {
        // Candidate evaluations: sum over iterations of min(k, edges left).
        let cfg = SearchConfig { ..SearchConfig::default_cnn() };
        let out = run_shrink(&cfg).unwrap();
        assert_eq!(out.evaluations, 235, "n=8, k=10");
        let cfg = SearchConfig { k: 28, ..SearchConfig::default_cnn() };
        assert_eq!(run_shrink(&cfg).unwrap().evaluations, 406, "n=8, k=28");
        let cfg = SearchConfig { ..SearchConfig::default_rnn() };
        assert_eq!(run_shrink(&cfg).unwrap().evaluations, 65, "n=6, k=5");
    }

    #[test]
    fn k_sweep_reports_one_row_per_k() {
        let base = SearchConfig { nodes: 5, ..SearchConfig::default_cnn() };
        let report = k_sweep(&base, &[1, 3, 10]).unwrap();
        assert_eq!(report.rows.len(), 3);
        assert_eq!(report.rows[0].k, 1);
        // Larger k never reduces the evaluation count.
        assert!(report.rows[0].evaluations <= report.rows[1].evaluations);
        assert!(report.rows[1].evaluations <= report.rows[2].evaluations);
        let csv = report.to_csv();
        assert!(csv.starts_with("k,evaluations,"));
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn trajectory_csv_shape() {
        let cfg = SearchConfig { nodes: 3, k: 2, ..SearchConfig::default_cnn() };
        let out = run_shrink(&cfg).unwrap();
        let csv = write_trajectory_csv(&out.trajectory);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "t,removed_edge,score,perf,raw_metric,macs,params,live_nodes,edges_remaining,winner"
        );
        let first = lines.next().unwrap();
        assert!(first.starts_with("0,,"), "start row has no removed edge: {first}");
        assert!(first.ends_with(",true"));
        // Edge cells use from-to.
        assert!(csv.contains(",0-1,") || csv.contains(",0-2,") || csv.contains(",1-2,"));
    }

    #[test]
    fn tie_break_prefers_the_smallest_removed_edge() {
        // With lambda = 0 and the surrogate, symmetric candidates tie
        // exactly; the winner must be the variant missing the smallest edge.
        let cfg = SearchConfig {
            nodes: 3,
            k: 3,
            lambda: 0.0,
            ..SearchConfig::default_cnn()
        };
        let out = run_shrink(&cfg).unwrap();
        let first_winner = out
            .trajectory
            .iter()
            .find(|r| r.t == 1 && r.winner)
            .expect("iteration 1 has a winner");
        // Removing (0,1) or (0,2) can tie; (0,1) sorts first among ties.
        // Whatever the scores, the winner's removed edge is the smallest
        // among rows sharing the maximal score.
        let max = out
            .trajectory
            .iter()
            .filter(|r| r.t == 1)
            .map(|r| r.score)
            .fold(f64::NEG_INFINITY, f64::max);
        let smallest_tied = out
            .trajectory
            .iter()
            .filter(|r| r.t == 1 && r.score == max)
            .map(|r| r.removed_edge.unwrap())
            .min()
            .unwrap();
        assert_eq!(first_winner.removed_edge.unwrap(), smallest_tied);
    }
}
