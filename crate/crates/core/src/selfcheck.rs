//! Runtime verification suites.
//!
//! [`run`] executes named groups of checks that re-derive the crate's load
//! bearing guarantees from first principles at runtime, independent of the
//! unit-test suite:
//!
//! - `gradients`: every tape operation (and the composite CNN-node and
//!   highway-node expressions) against central finite differences.
//! - `cardinality`: closed-form search-space and evaluation-count pins.
//! - `cost_monotonicity`: removing an edge never increases MACs or params.
//! - `determinism`: repeated runs produce byte-identical artifacts.
//! - `conservation`: the zero-parameter highway node halves its input sum.
//!
//! The `corrupt` flag deliberately poisons one expected value so callers can
//! verify that failures actually propagate to a non-zero exit.

use num_bigint::BigUint;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cost::cell_cost;
use crate::eval::tape::{Tape, ValueId};
use crate::eval::tensor::Tensor;
use crate::eval::{dataset, ScoreShapes};
use crate::rng::{self, Stream};
use crate::shrink::{run_shrink, write_trajectory_csv, SearchConfig};
use crate::topology::{search_space_size, CellKind, CellTopology};
use crate::Result;

/// Outcome of a single named check.
#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub group: &'static str,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// All check outcomes from one [`run`] invocation.
#[derive(Debug, Clone, Serialize)]
pub struct SelfcheckReport {
    pub checks: Vec<CheckResult>,
}

impl SelfcheckReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// One line per check: `[group] name: PASS (detail)`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let verdict = if c.passed { "PASS" } else { "FAIL" };
            out.push_str(&format!("[{}] {}: {} ({})\n", c.group, c.name, verdict, c.detail));
        }
        out
    }
}

/// Runs every check group. `corrupt` poisons the headline cardinality pin to
/// prove failure detection works end to end.
pub fn run(corrupt: bool) -> SelfcheckReport {
    let mut checks = Vec::new();
    gradient_checks(&mut checks);
    cardinality_checks(&mut checks, corrupt);
    monotonicity_checks(&mut checks);
    determinism_checks(&mut checks);
    conservation_checks(&mut checks);
    SelfcheckReport { checks }
}

fn record(checks: &mut Vec<CheckResult>, group: &'static str, name: &'static str, outcome: Result<(bool, String)>) {
    let (passed, detail) = match outcome {
        Ok(pair) => pair,
        Err(e) => (false, format!("errored: {e}")),
    };
    checks.push(CheckResult { group, name, passed, detail });
}

// ---------------------------------------------------------------------------
// Gradients vs. central finite differences
// ---------------------------------------------------------------------------

const FD_STEP: f64 = 1e-5;
const FD_TOLERANCE: f64 = 1e-4;
const FD_POINTS: usize = 100;

/// One differentiable expression under test: a set of leaf tensors and a
/// builder from those leaves to an output value (any shape; non-scalars are
/// reduced by sum-of-squares before differentiation).
struct GradCase {
    name: &'static str,
    make_inputs: fn(&mut ChaCha8Rng) -> Vec<Tensor>,
    build: fn(&mut Tape, &[ValueId]) -> Result<ValueId>,
}

fn uniform(r: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let len: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..len).map(|_| r.gen_range(lo..hi)).collect()).unwrap()
}

/// Values with magnitude in `[0.05, 1]` and random sign: far enough from the
/// ReLU kink that a 1e-5 finite-difference step cannot cross it.
fn kink_free(r: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let len: usize = shape.iter().product();
    let data = (0..len)
        .map(|_| {
            let v = r.gen_range(0.05..1.0);
            if r.gen_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Well-separated values for max-pool windows: a shuffled grid of multiples
/// of 0.05 with jitter below 0.005, so the window argmax is finite-difference
/// stable.
fn spaced(r: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let len: usize = shape.iter().product();
    let mut ranks: Vec<usize> = (0..len).collect();
    for i in (1..len).rev() {
        ranks.swap(i, r.gen_range(0..=i));
    }
    let data = ranks.iter().map(|&k| k as f64 * 0.05 + r.gen_range(0.0..0.005)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

fn scalar_loss(tape: &mut Tape, out: ValueId) -> Result<ValueId> {
    if tape.value(out).shape().is_empty() {
        Ok(out)
    } else {
        tape.sum_squares(out)
    }
}

fn loss_at(case: &GradCase, inputs: &[Tensor]) -> Result<f64> {
    let mut tape = Tape::new();
    let ids: Vec<ValueId> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = (case.build)(&mut tape, &ids)?;
    let loss = scalar_loss(&mut tape, out)?;
    Ok(tape.value(loss).item())
}

/// Largest normalized deviation between analytic and central-difference
/// gradients over every element of every input, at one random point.
fn max_rel_err_at(case: &GradCase, point: u64) -> Result<f64> {
    let mut r = rng::rng(0x5e1f, Stream::Eval, &[case.name.len() as u64, point]);
    let inputs = (case.make_inputs)(&mut r);

    let mut tape = Tape::new();
    let ids: Vec<ValueId> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = (case.build)(&mut tape, &ids)?;
    let loss = scalar_loss(&mut tape, out)?;
    let grads = tape.backward(loss)?;

    let mut worst = 0.0f64;
    for (slot, id) in ids.iter().enumerate() {
        let grad = grads[id.index()].clone();
        for e in 0..inputs[slot].len() {
            let analytic = grad.as_ref().map_or(0.0, |g| g.data()[e]);
            let mut plus = inputs.clone();
            plus[slot].data_mut()[e] += FD_STEP;
            let mut minus = inputs.clone();
            minus[slot].data_mut()[e] -= FD_STEP;
            let numeric = (loss_at(case, &plus)? - loss_at(case, &minus)?) / (2.0 * FD_STEP);
            let err = (analytic - numeric).abs() / 1.0f64.max(analytic.abs()).max(numeric.abs());
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

fn grad_cases() -> Vec<GradCase> {
    vec![
        GradCase {
            name: "add",
            make_inputs: |r| vec![uniform(r, &[6], -1.0, 1.0), uniform(r, &[6], -1.0, 1.0)],
            build: |t, ids| t.add(ids[0], ids[1]),
        },
        GradCase {
            name: "add_n",
            make_inputs: |r| (0..3).map(|_| uniform(r, &[5], -1.0, 1.0)).collect(),
            build: |t, ids| t.add_n(ids),
        },
        GradCase {
            name: "mul",
            make_inputs: |r| vec![uniform(r, &[6], -1.0, 1.0), uniform(r, &[6], -1.0, 1.0)],
            build: |t, ids| t.mul(ids[0], ids[1]),
        },
        GradCase {
            name: "scale",
            make_inputs: |r| vec![uniform(r, &[7], -1.0, 1.0)],
            build: |t, ids| t.scale(ids[0], 1.7),
        },
        GradCase {
            name: "one_minus",
            make_inputs: |r| vec![uniform(r, &[7], -1.0, 1.0)],
            build: |t, ids| t.one_minus(ids[0]),
        },
        GradCase {
            name: "relu",
            make_inputs: |r| vec![kink_free(r, &[8])],
            build: |t, ids| t.relu(ids[0]),
        },
        GradCase {
            name: "sigmoid",
            make_inputs: |r| vec![uniform(r, &[8], -2.0, 2.0)],
            build: |t, ids| t.sigmoid(ids[0]),
        },
        GradCase {
            name: "tanh",
            make_inputs: |r| vec![uniform(r, &[8], -2.0, 2.0)],
            build: |t, ids| t.tanh(ids[0]),
        },
        GradCase {
            name: "matvec",
            make_inputs: |r| vec![uniform(r, &[3, 4], -1.0, 1.0), uniform(r, &[4], -1.0, 1.0)],
            build: |t, ids| t.matvec(ids[0], ids[1]),
        },
        GradCase {
            name: "conv3x3",
            make_inputs: |r| {
                vec![uniform(r, &[2, 2, 3, 3], -0.5, 0.5), uniform(r, &[2, 4, 4], -1.0, 1.0)]
            },
            build: |t, ids| t.conv3x3(ids[0], ids[1]),
        },
        GradCase {
            name: "channel_mix",
            make_inputs: |r| vec![uniform(r, &[3, 2], -0.5, 0.5), uniform(r, &[2, 4, 4], -1.0, 1.0)],
            build: |t, ids| t.channel_mix(ids[0], ids[1]),
        },
        GradCase {
            name: "depthwise3x3",
            make_inputs: |r| vec![uniform(r, &[2, 3, 3], -0.5, 0.5), uniform(r, &[2, 4, 4], -1.0, 1.0)],
            build: |t, ids| t.depthwise3x3(ids[0], ids[1]),
        },
        GradCase {
            name: "channel_affine",
            make_inputs: |r| {
                vec![
                    uniform(r, &[2], 0.5, 1.5),
                    uniform(r, &[2], -0.5, 0.5),
                    uniform(r, &[2, 3, 3], -1.0, 1.0),
                ]
            },
            build: |t, ids| t.channel_affine(ids[0], ids[1], ids[2]),
        },
        GradCase {
            name: "concat_channels",
            make_inputs: |r| vec![uniform(r, &[1, 3, 3], -1.0, 1.0), uniform(r, &[2, 3, 3], -1.0, 1.0)],
            build: |t, ids| t.concat_channels(ids),
        },
        GradCase {
            name: "max_pool2",
            make_inputs: |r| vec![spaced(r, &[2, 4, 4])],
            build: |t, ids| t.max_pool2(ids[0]),
        },
        GradCase {
            name: "global_avg_pool",
            make_inputs: |r| vec![uniform(r, &[3, 4, 4], -1.0, 1.0)],
            build: |t, ids| t.global_avg_pool(ids[0]),
        },
        GradCase {
            name: "embed_row",
            make_inputs: |r| vec![uniform(r, &[5, 4], -1.0, 1.0)],
            build: |t, ids| t.embed_row(ids[0], 2),
        },
        GradCase {
            name: "softmax_ce_loss",
            make_inputs: |r| vec![uniform(r, &[5], -1.0, 1.0)],
            build: |t, ids| t.softmax_ce_loss(ids[0], 3),
        },
        GradCase {
            name: "sum_squares",
            make_inputs: |r| vec![uniform(r, &[7], -1.0, 1.0)],
            build: |t, ids| t.sum_squares(ids[0]),
        },
        // Composite CNN node: 1x1 channel mix, affine, ReLU. The affine shift
        // is biased to +2 while |mix| <= 1, keeping pre-activations away from
        // the ReLU kink.
        GradCase {
            name: "cnn_node",
            make_inputs: |r| {
                vec![
                    uniform(r, &[3, 2], -0.25, 0.25),
                    uniform(r, &[3], 0.5, 1.0),
                    uniform(r, &[3], 1.5, 2.5),
                    uniform(r, &[2, 3, 3], -1.0, 1.0),
                ]
            },
            build: |t, ids| {
                let mixed = t.channel_mix(ids[0], ids[3])?;
                let scaled = t.channel_affine(ids[1], ids[2], mixed)?;
                t.relu(scaled)
            },
        },
        // Composite highway node: gate c = sigmoid(W1 x + b1), transform
        // a = tanh(W2 x + b2), output c (*) a + (1 - c) (*) x.
        GradCase {
            name: "highway_node",
            make_inputs: |r| {
                vec![
                    uniform(r, &[3, 3], -0.5, 0.5),
                    uniform(r, &[3], -0.5, 0.5),
                    uniform(r, &[3, 3], -0.5, 0.5),
                    uniform(r, &[3], -0.5, 0.5),
                    uniform(r, &[3], -1.0, 1.0),
                ]
            },
            build: |t, ids| {
                let gate_pre = t.matvec(ids[0], ids[4])?;
                let gate_pre = t.add(gate_pre, ids[1])?;
                let gate = t.sigmoid(gate_pre)?;
                let trans_pre = t.matvec(ids[2], ids[4])?;
                let trans_pre = t.add(trans_pre, ids[3])?;
                let trans = t.tanh(trans_pre)?;
                let carried = t.mul(gate, trans)?;
                let keep = t.one_minus(gate)?;
                let kept = t.mul(keep, ids[4])?;
                t.add(carried, kept)
            },
        },
    ]
}

fn gradient_checks(checks: &mut Vec<CheckResult>) {
    for case in grad_cases() {
        let outcome = (0..FD_POINTS as u64)
            .try_fold(0.0f64, |worst, p| Ok(worst.max(max_rel_err_at(&case, p)?)))
            .map(|worst| {
                (worst < FD_TOLERANCE, format!("max rel err {worst:.2e} over {FD_POINTS} points"))
            });
        record(checks, "gradients", case.name, outcome);
    }
}

// ---------------------------------------------------------------------------
// Cardinality pins
// ---------------------------------------------------------------------------

fn cardinality_checks(checks: &mut Vec<CheckResult>, corrupt: bool) {
    let expected_cnn: u64 = 68_719_476_736 + u64::from(corrupt);
    let got = search_space_size(28, 8, 2);
    record(
        checks,
        "cardinality",
        "cnn_complete8_space",
        Ok((got == BigUint::from(expected_cnn), format!("expected {expected_cnn}, got {got}"))),
    );

    let got = search_space_size(15, 6, 4);
    record(
        checks,
        "cardinality",
        "rnn_complete6_space",
        Ok((got == BigUint::from(134_217_728u64), format!("expected 134217728, got {got}"))),
    );

    let outcome = (|| {
        let cnn = CellTopology::complete(8, CellKind::Cnn, 0)?.edge_count();
        let rnn = CellTopology::complete(6, CellKind::Rnn, 0)?.edge_count();
        Ok((cnn == 28 && rnn == 15, format!("complete(8)={cnn} edges, complete(6)={rnn} edges")))
    })();
    record(checks, "cardinality", "complete_edge_counts", outcome);

    // Candidate-evaluation accounting: sum over iterations of
    // min(k, edges remaining), which has the closed form below.
    for (name, k, expected) in [
        ("k10_candidate_evaluations", 10, 235),
        ("k28_candidate_evaluations", 28, 406),
    ] {
        let outcome = (|| {
            let cfg = SearchConfig { k, ..SearchConfig::default_cnn() };
            let outcome = run_shrink(&cfg)?;
            let edges = 28usize;
            let closed_form: usize = (1..=edges).map(|e| e.min(k)).sum();
            Ok((
                outcome.evaluations == expected && closed_form == expected,
                format!("expected {expected}, ran {}, closed form {closed_form}", outcome.evaluations),
            ))
        })();
        record(checks, "cardinality", name, outcome);
    }
}

// ---------------------------------------------------------------------------
// Cost monotonicity under edge removal
// ---------------------------------------------------------------------------

fn monotonicity_sweep(kind: CellKind, pairs: usize) -> Result<(bool, String)> {
    let shapes = ScoreShapes::default();
    let tag = match kind {
        CellKind::Cnn => 0u64,
        CellKind::Rnn => 1u64,
    };
    let mut checked = 0usize;
    for i in 0..pairs {
        let mut r = rng::rng(0x6d6f6e6f, Stream::Eval, &[tag, i as u64]);
        let n = r.gen_range(3..=8);
        let mut g = CellTopology::complete(n, kind, r.gen())?;
        // Thin the graph to a random survivor set, keeping at least one edge.
        let drop = r.gen_range(0..g.edge_count());
        for _ in 0..drop {
            let e = g.edges()[r.gen_range(0..g.edge_count())];
            g = g.remove_edge(e)?;
        }
        let before = cell_cost(&g, &shapes.cnn, &shapes.rnn)?;
        let e = g.edges()[r.gen_range(0..g.edge_count())];
        let after = cell_cost(&g.remove_edge(e)?, &shapes.cnn, &shapes.rnn)?;
        if after.macs() > before.macs() || after.params() > before.params() {
            return Ok((
                false,
                format!(
                    "removing {}-{} raised cost: macs {} -> {}, params {} -> {}",
                    e.from,
                    e.to,
                    before.macs(),
                    after.macs(),
                    before.params(),
                    after.params()
                ),
            ));
        }
        checked += 1;
    }
    Ok((true, format!("{checked} random (topology, edge) pairs, zero violations")))
}

fn monotonicity_checks(checks: &mut Vec<CheckResult>) {
    record(checks, "cost_monotonicity", "cnn_random_pairs", monotonicity_sweep(CellKind::Cnn, 200));
    record(checks, "cost_monotonicity", "rnn_random_pairs", monotonicity_sweep(CellKind::Rnn, 200));
}

// ---------------------------------------------------------------------------
// Determinism
// ---------------------------------------------------------------------------

fn determinism_checks(checks: &mut Vec<CheckResult>) {
    let outcome = (|| {
        let cfg = SearchConfig { nodes: 5, k: 3, ..SearchConfig::default_cnn() };
        let a = write_trajectory_csv(&run_shrink(&cfg)?.trajectory);
        let b = write_trajectory_csv(&run_shrink(&cfg)?.trajectory);
        Ok((a == b, format!("two runs, {} trajectory bytes", a.len())))
    })();
    record(checks, "determinism", "shrink_trajectory_bytes", outcome);

    let outcome = (|| {
        let spec = dataset::DatasetSpec::default_cnn();
        let a = dataset_digest(&dataset::generate(&spec, 7)?);
        let b = dataset_digest(&dataset::generate(&spec, 7)?);
        Ok((a == b, format!("digest {a:#018x}")))
    })();
    record(checks, "determinism", "dataset_regeneration", outcome);
}

/// Order-sensitive digest of every value and label in a generated dataset.
fn dataset_digest(data: &dataset::ProxyData) -> u64 {
    let mut bytes = Vec::new();
    match data {
        dataset::ProxyData::Images(images) => {
            for (x, y) in images.train.iter().chain(&images.val) {
                for v in x.data() {
                    bytes.extend_from_slice(&v.to_bits().to_le_bytes());
                }
                bytes.extend_from_slice(&(*y as u64).to_le_bytes());
            }
        }
        dataset::ProxyData::Tokens(tokens) => {
            for t in tokens.train.iter().chain(&tokens.val) {
                bytes.extend_from_slice(&(*t as u64).to_le_bytes());
            }
        }
    }
    rng::fnv1a64(&bytes)
}

// ---------------------------------------------------------------------------
// Conservation: zero-parameter highway nodes halve their input
// ---------------------------------------------------------------------------

fn conservation_checks(checks: &mut Vec<CheckResult>) {
    let outcome = (|| {
        let dim = 4usize;
        let mut r = rng::rng(0xc0a5, Stream::Eval, &[]);
        let xs: Vec<Tensor> = (0..3).map(|_| uniform(&mut r, &[dim], -1.0, 1.0)).collect();

        // With identity activation and all gate/transform parameters at zero,
        // each input contributes c (*) a + (1 - c) (*) x = 0.5 x, so the node
        // output must equal half the input sum exactly (both sides round
        // identically in binary floating point).
        let mut tape = Tape::new();
        let zero_mat = tape.leaf(Tensor::zeros(&[dim, dim]));
        let zero_bias = tape.leaf(Tensor::zeros(&[dim]));
        let mut per_input = Vec::new();
        let mut ids = Vec::new();
        for x in &xs {
            let id = tape.leaf(x.clone());
            ids.push(id);
            let gate_pre = tape.matvec(zero_mat, id)?;
            let gate_pre = tape.add(gate_pre, zero_bias)?;
            let gate = tape.sigmoid(gate_pre)?;
            let trans = tape.matvec(zero_mat, id)?; // identity activation, zero weights
            let trans = tape.add(trans, zero_bias)?;
            let carried = tape.mul(gate, trans)?;
            let keep = tape.one_minus(gate)?;
            let kept = tape.mul(keep, id)?;
            per_input.push(tape.add(carried, kept)?);
        }
        let out = tape.add_n(&per_input)?;
        let sum = tape.add_n(&ids)?;
        let half_sum = tape.scale(sum, 0.5)?;
        let exact = tape.value(out) == tape.value(half_sum);
        Ok((exact, format!("{} inputs of dim {dim}, exact bit equality", xs.len())))
    })();
    record(checks, "conservation", "zero_param_highway_halves_input", outcome);
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn fresh_build_passes_every_check() {
        let report = run(false);
        assert!(
            report.all_passed(),
            "failing checks:\n{}",
            report
                .checks
                .iter()
                .filter(|c| !c.passed)
                .map(|c| format!("[{}] {}: {}", c.group, c.name, c.detail))
                .collect::<Vec<_>>()
                .join("\n")
        );
    }

    #[test]
    fn report_names_at_least_three_groups() {
        let report = run(false);
        let groups: BTreeSet<&str> = report.checks.iter().map(|c| c.group).collect();
        assert!(groups.len() >= 3, "groups: {groups:?}");
        for g in ["gradients", "cardinality", "cost_monotonicity"] {
            assert!(groups.contains(g));
        }
    }

    #[test]
    fn corruption_is_detected() {
        let report = run(true);
        assert!(!report.all_passed());
        let poisoned = report
            .checks
            .iter()
            .find(|c| c.name == "cnn_complete8_space")
            .expect("headline pin present");
        assert!(!poisoned.passed);
    }

    #[test]
    fn text_report_has_one_line_per_check() {
        let report = run(false);
        let text = report.to_text();
        assert_eq!(text.lines().count(), report.checks.len());
        assert!(text.contains("[gradients] conv3x3: PASS"));
    }
}
