//! Acceptance gate: one test per release criterion, each printing a single
//! `[acceptance] C<n> <name>: PASS|FAIL` verdict line (visible with
//! `cargo test --test acceptance -- --nocapture`).
//!
//! The criteria deliberately cross-check the engine against independent
//! re-derivations: closed-form counts, a brute-force greedy, finite
//! differences, and byte-level artifact comparison.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use rand::Rng;
use shrinknas_core::cost::{cell_cost, ResourceKind};
use shrinknas_core::eval::{self, dataset, EvaluatorConfig, ScoreShapes};
use shrinknas_core::priors::{compare_topologies, default_prior_specs};
use shrinknas_core::rng::{self, Stream};
use shrinknas_core::shrink::{k_sweep, run_shrink, score, SearchConfig};
use shrinknas_core::topology::{
    search_space_size, CellKind, CellTopology, CnnOp, Edge, NodeOp, RnnActivation,
};
use shrinknas_core::{selfcheck, Result};
use tempfile::TempDir;

fn verdict(n: u32, name: &str, passed: bool, detail: &str) {
    println!("[acceptance] C{n} {name}: {}", if passed { "PASS" } else { "FAIL" });
    assert!(passed, "C{n} {name}: {detail}");
}

#[test]
fn c1_search_space_cardinality() {
    let got = search_space_size(28, 8, 2);
    let expected = num_bigint::BigUint::from(68_719_476_736u64);
    verdict(
        1,
        "search-space cardinality",
        got == expected,
        &format!("expected {expected}, got {got}"),
    );
}

#[test]
fn c2_iteration_counts() {
    let run = |cfg: SearchConfig| -> Result<(usize, usize)> {
        let outcome = run_shrink(&cfg)?;
        let iterations = outcome.trajectory.iter().map(|r| r.t).max().unwrap_or(0);
        let final_edges = outcome
            .trajectory
            .iter()
            .rev()
            .find(|r| r.winner)
            .map_or(usize::MAX, |r| r.edges_remaining);
        Ok((iterations, final_edges))
    };
    let outcome = (|| -> Result<bool> {
        let (cnn_iters, cnn_final) = run(SearchConfig::default_cnn())?;
        let (rnn_iters, rnn_final) = run(SearchConfig::default_rnn())?;
        Ok(cnn_iters == 28 && cnn_final == 0 && rnn_iters == 15 && rnn_final == 0)
    })();
    match outcome {
        Ok(passed) => verdict(2, "iteration counts", passed, "expected 28 CNN / 15 RNN iterations ending at 0 edges"),
        Err(e) => verdict(2, "iteration counts", false, &format!("errored: {e}")),
    }
}

#[test]
fn c3_resource_monotonicity() {
    let sweep = |kind: CellKind, tag: u64| -> Result<Option<String>> {
        let shapes = ScoreShapes::default();
        for i in 0..1000u64 {
            let mut r = rng::rng(0xacce97, Stream::Eval, &[tag, i]);
            let n = r.gen_range(3..=8);
            let mut g = CellTopology::complete(n, kind, r.gen())?;
            let drop = r.gen_range(0..g.edge_count());
            for _ in 0..drop {
                let e = g.edges()[r.gen_range(0..g.edge_count())];
                g = g.remove_edge(e)?;
            }
            let before = cell_cost(&g, &shapes.cnn, &shapes.rnn)?;
            let e = g.edges()[r.gen_range(0..g.edge_count())];
            let after = cell_cost(&g.remove_edge(e)?, &shapes.cnn, &shapes.rnn)?;
            if after.macs() > before.macs() || after.params() > before.params() {
                return Ok(Some(format!(
                    "{kind:?}: removing {}-{} raised macs {} -> {} or params {} -> {}",
                    e.from,
                    e.to,
                    before.macs(),
                    after.macs(),
                    before.params(),
                    after.params()
                )));
            }
        }
        Ok(None)
    };
    let outcome = (|| -> Result<Option<String>> {
        if let Some(v) = sweep(CellKind::Cnn, 0)? {
            return Ok(Some(v));
        }
        sweep(CellKind::Rnn, 1)
    })();
    match outcome {
        Ok(None) => verdict(3, "resource monotonicity", true, ""),
        Ok(Some(violation)) => verdict(3, "resource monotonicity", false, &violation),
        Err(e) => verdict(3, "resource monotonicity", false, &format!("errored: {e}")),
    }
}

/// Independent greedy: evaluate the *entire* shrink space at every step and
/// keep the strict argmax (ties resolved by the earlier, i.e. smaller, edge).
fn brute_force_winners(cfg: &SearchConfig) -> Result<Vec<(Edge, f64)>> {
    let mut g = CellTopology::complete(cfg.nodes, cfg.kind, cfg.seed)?;
    let mut winners = Vec::new();
    while g.edge_count() > 0 {
        let mut best: Option<(f64, Edge, CellTopology)> = None;
        for e in g.edges().to_vec() {
            let candidate = g.remove_edge(e)?;
            let eval_seed = rng::derive(cfg.seed, Stream::Eval, &[candidate.fingerprint()]);
            let result =
                eval::evaluate(&candidate, &cfg.evaluator, &cfg.shapes, None, eval_seed)?;
            let resource = match cfg.resource {
                ResourceKind::Macs => result.macs,
                ResourceKind::Params => result.params,
            };
            let s = score(result.perf, resource, cfg.lambda);
            if best.as_ref().is_none_or(|(bs, _, _)| s > *bs) {
                best = Some((s, e, candidate));
            }
        }
        let (s, e, next) = best.expect("non-empty shrink space");
        winners.push((e, s));
        g = next;
    }
    Ok(winners)
}

#[test]
fn c4_exhaustive_greedy_equivalence() {
    let outcome = (|| -> Result<Option<String>> {
        for n in 3..=5usize {
            // k exceeds any possible shrink-space size, so the engine must
            // consider every candidate, exactly like the brute force.
            let cfg = SearchConfig { nodes: n, k: 28, ..SearchConfig::default_cnn() };
            let expected = brute_force_winners(&cfg)?;
            let outcome = run_shrink(&cfg)?;
            let got: Vec<(Edge, f64)> = outcome
                .trajectory
                .iter()
                .filter(|r| r.t > 0 && r.winner)
                .map(|r| (r.removed_edge.expect("winner rows record the removed edge"), r.score))
                .collect();
            if expected != got {
                return Ok(Some(format!("n={n}: expected {expected:?}, got {got:?}")));
            }
        }
        Ok(None)
    })();
    match outcome {
        Ok(None) => verdict(4, "exhaustive-greedy equivalence", true, ""),
        Ok(Some(diff)) => verdict(4, "exhaustive-greedy equivalence", false, &diff),
        Err(e) => verdict(4, "exhaustive-greedy equivalence", false, &format!("errored: {e}")),
    }
}

#[test]
fn c5_gradient_correctness() {
    let report = selfcheck::run(false);
    let gradient_checks: Vec<_> =
        report.checks.iter().filter(|c| c.group == "gradients").collect();
    let failures: Vec<String> = gradient_checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| format!("{}: {}", c.name, c.detail))
        .collect();
    // 19 primitive tape ops plus the two composite node expressions.
    let passed = failures.is_empty() && gradient_checks.len() >= 21;
    verdict(
        5,
        "gradient correctness",
        passed,
        &format!("{} checks, failures: {failures:?}", gradient_checks.len()),
    );
}

#[test]
fn c6_desk_scale_trainability() {
    let outcome = (|| -> Result<Option<String>> {
        let shapes = ScoreShapes::default();
        let seed = 7u64;

        let cnn_cfg = EvaluatorConfig::trained(CellKind::Cnn);
        let cnn_data = dataset::generate(&cnn_cfg.dataset, seed)?;
        for a in [CnnOp::Conv1x1, CnnOp::SepConv3x3] {
            for b in [CnnOp::Conv1x1, CnnOp::SepConv3x3] {
                let cell = CellTopology::new(
                    CellKind::Cnn,
                    vec![NodeOp::Cnn(a), NodeOp::Cnn(b)],
                    vec![Edge::new(0, 1)],
                )?;
                let result = eval::evaluate(&cell, &cnn_cfg, &shapes, Some(&cnn_data), seed)?;
                if result.perf < 0.90 {
                    return Ok(Some(format!(
                        "CNN cell {a:?}->{b:?} reached accuracy {:.3} < 0.90",
                        result.perf
                    )));
                }
            }
        }

        let rnn_cfg = EvaluatorConfig::trained(CellKind::Rnn);
        let rnn_data = dataset::generate(&rnn_cfg.dataset, seed)?;
        let cell = CellTopology::new(
            CellKind::Rnn,
            vec![NodeOp::Rnn(RnnActivation::Tanh), NodeOp::Rnn(RnnActivation::Tanh)],
            vec![Edge::new(0, 1)],
        )?;
        let result = eval::evaluate(&cell, &rnn_cfg, &shapes, Some(&rnn_data), seed)?;
        if result.raw_metric > 1.5 {
            return Ok(Some(format!(
                "RNN perplexity {:.3} > 1.5 on the repeating-token task",
                result.raw_metric
            )));
        }
        Ok(None)
    })();
    match outcome {
        Ok(None) => verdict(6, "desk-scale trainability", true, ""),
        Ok(Some(miss)) => verdict(6, "desk-scale trainability", false, &miss),
        Err(e) => verdict(6, "desk-scale trainability", false, &format!("errored: {e}")),
    }
}

fn cli_search(config: &Path, out: &Path, workers: &str) -> Option<PathBuf> {
    let output = Command::new(env!("CARGO_BIN_EXE_shrinknas"))
        .arg("search")
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .arg("--workers")
        .arg(workers)
        .output()
        .ok()?;
    if !output.status.success() {
        return None;
    }
    Some(PathBuf::from(String::from_utf8(output.stdout).ok()?.trim()))
}

#[test]
fn c7_artifact_determinism() {
    let tmp = TempDir::new().unwrap();
    let config = tmp.path().join("config.toml");
    fs::write(&config, "[search]\nnodes = 8\nk = 10\nseed = 7\n").unwrap();

    let runs: Vec<PathBuf> = ["1", "1", "4"]
        .iter()
        .filter_map(|workers| cli_search(&config, tmp.path(), workers))
        .collect();
    if runs.len() != 3 {
        verdict(7, "artifact determinism", false, "a search invocation failed");
        return;
    }
    let mut mismatch = String::new();
    for name in ["trajectory.csv", "gopt.json"] {
        let baseline = fs::read(runs[0].join(name)).unwrap();
        for run in &runs[1..] {
            if fs::read(run.join(name)).unwrap() != baseline {
                mismatch = format!("{name} differs between {:?} and {run:?}", runs[0]);
            }
        }
    }
    verdict(7, "artifact determinism", mismatch.is_empty(), &mismatch);
}

#[test]
fn c8_shrink_beats_random_priors() {
    let outcome = (|| -> Result<(bool, String)> {
        let cfg = SearchConfig::default_cnn();
        let searched = run_shrink(&cfg)?;
        let specs = default_prior_specs(15, cfg.seed);
        let report = compare_topologies(&specs, &searched.best, &cfg, 10)?;
        let mut detail = format!("searched score {:.4};", report.shrink.score);
        let mut passed = true;
        for f in &report.families {
            detail.push_str(&format!(" {} median {:.4};", f.family, f.score_median));
            passed &= report.shrink.score > f.score_median;
        }
        Ok((passed, detail))
    })();
    match outcome {
        Ok((passed, detail)) => verdict(8, "shrink beats random priors", passed, &detail),
        Err(e) => verdict(8, "shrink beats random priors", false, &format!("errored: {e}")),
    }
}

#[test]
fn c9_k_sweep_accounting() {
    let outcome = (|| -> Result<(bool, String)> {
        let report = k_sweep(&SearchConfig::default_cnn(), &[10, 28])?;
        let evals: Vec<(usize, usize)> =
            report.rows.iter().map(|r| (r.k, r.evaluations)).collect();
        Ok((evals == [(10, 235), (28, 406)], format!("got {evals:?}")))
    })();
    match outcome {
        Ok((passed, detail)) => verdict(9, "k-sweep accounting", passed, &detail),
        Err(e) => verdict(9, "k-sweep accounting", false, &format!("errored: {e}")),
    }
}
