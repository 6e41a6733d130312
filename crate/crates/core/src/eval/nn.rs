//! Desk-scale networks and training: just large enough that topology changes
//! move the validation metric, small enough to run inside a test.
//!
//! The CNN follows the staged plan from [`crate::builder`] exactly
//! (stem, per-stage cells with projections and residuals, pooled classifier).
//! The recurrent net preprocesses each step as `s = tanh(Wx x + Wh h)` and
//! runs the cell on `s`; note the analytic resource model in [`crate::cost`]
//! counts per-(input, node) pair terms only, so this preprocessing is a
//! trainer detail, not a costed quantity.

use std::collections::BTreeMap;

use rand::Rng;

use crate::builder::{CnnArchitecture, RnnArchitecture};
use crate::error::{Error, Result};
use crate::eval::dataset::{ImageData, TokenData};
use crate::eval::tape::{Tape, ValueId};
use crate::eval::tensor::Tensor;
use crate::rng::{self, Stream};
use crate::topology::{Aggregand, CellTopology, CnnOp, NodeOp, RnnActivation};

/// How a parameter tensor is filled at registration.
#[derive(Debug, Clone, Copy)]
pub enum Init {
    /// Uniform in `+-sqrt(6 / (fan_in + fan_out))`.
    Xavier { fan_in: usize, fan_out: usize },
    /// Uniform in `+-limit`.
    Uniform(f64),
    Const(f64),
}

/// Named model parameters. Initialization derives a generator per name, so
/// values do not depend on registration order.
#[derive(Debug, Clone, Default)]
pub struct ParamTable {
    values: BTreeMap<String, Tensor>,
}

/// Tape handles for every parameter, staged once per training step.
pub struct StagedParams {
    ids: BTreeMap<String, ValueId>,
}

impl StagedParams {
    pub fn id(&self, name: &str) -> ValueId {
        *self.ids.get(name).unwrap_or_else(|| panic!("unregistered parameter {name}"))
    }
}

impl ParamTable {
    pub fn new() -> ParamTable {
        ParamTable::default()
    }

    pub fn register(&mut self, name: &str, shape: &[usize], init: Init, seed: u64) {
        let mut r = rng::rng(seed, Stream::Eval, &[rng::fnv1a64(name.as_bytes())]);
        let len: usize = shape.iter().product();
        let data: Vec<f64> = match init {
            Init::Xavier { fan_in, fan_out } => {
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                (0..len).map(|_| r.gen_range(-limit..limit)).collect()
            }
            Init::Uniform(limit) => (0..len).map(|_| r.gen_range(-limit..limit)).collect(),
            Init::Const(c) => vec![c; len],
        };
        let tensor = Tensor::new(shape.to_vec(), data).expect("sized above");
        self.values.insert(name.to_string(), tensor);
    }

    pub fn tensor(&self, name: &str) -> &Tensor {
        self.values.get(name).unwrap_or_else(|| panic!("unregistered parameter {name}"))
    }

    /// Total scalar parameter count.
    pub fn param_count(&self) -> usize {
        self.values.values().map(Tensor::len).sum()
    }

    /// Leafs every parameter onto `tape`.
    pub fn stage(&self, tape: &mut Tape) -> StagedParams {
        let ids = self
            .values
            .iter()
            .map(|(name, value)| (name.clone(), tape.leaf(value.clone())))
            .collect();
        StagedParams { ids }
    }

    /// One plain gradient-descent step over every staged parameter.
    pub fn sgd_step(&mut self, staged: &StagedParams, grads: &[Option<Tensor>], lr: f64) {
        for (name, id) in &staged.ids {
            if let Some(g) = grads.get(id.index()).and_then(Option::as_ref) {
                let value = self.values.get_mut(name).expect("staged from this table");
                for (v, d) in value.data_mut().iter_mut().zip(g.data()) {
                    *v -= lr * d;
                }
            }
        }
    }
}

/// Conv nodes read this many channels given the cell context.
fn cnn_node_in_channels(
    g: &CellTopology,
    v: usize,
    cell_in: usize,
    filters: usize,
) -> usize {
    let block = g.map_to_block();
    if block.is_input_fed(v) {
        cell_in
    } else {
        filters * block.predecessors(v).len()
    }
}

/// Image classifier assembled from the architecture's staged plan.
pub struct CnnNet {
    arch: CnnArchitecture,
    pub params: ParamTable,
}

impl CnnNet {
    pub fn new(arch: CnnArchitecture, seed: u64) -> Result<CnnNet> {
        arch.validate()?;
        let plan = arch.plan()?;
        let mut params = ParamTable::new();
        let stem_out = 2 * arch.base_filters;
        params.register(
            "stem.w",
            &[stem_out, arch.input_channels, 3, 3],
            Init::Xavier { fan_in: 9 * arch.input_channels, fan_out: 9 * stem_out },
            seed,
        );
        params.register("stem.g", &[stem_out], Init::Const(1.0), seed);
        params.register("stem.b", &[stem_out], Init::Const(0.0), seed);

        let block = arch.cell.map_to_block();
        for stage in &plan {
            let f = stage.filters;
            for (t, cell) in stage.cells.iter().enumerate() {
                let prefix = format!("s{}.c{}", stage.index + 1, t + 1);
                for &v in block.live_nodes() {
                    let c_in = cnn_node_in_channels(&arch.cell, v, cell.c_in, f);
                    let node = format!("{prefix}.n{v}");
                    match arch.cell.ops()[v] {
                        NodeOp::Cnn(CnnOp::Conv1x1) => {
                            params.register(
                                &format!("{node}.w"),
                                &[f, c_in],
                                Init::Xavier { fan_in: c_in, fan_out: f },
                                seed,
                            );
                        }
                        NodeOp::Cnn(CnnOp::SepConv3x3) => {
                            params.register(
                                &format!("{node}.dw"),
                                &[c_in, 3, 3],
                                Init::Xavier { fan_in: 9, fan_out: 9 },
                                seed,
                            );
                            params.register(
                                &format!("{node}.pw"),
                                &[f, c_in],
                                Init::Xavier { fan_in: c_in, fan_out: f },
                                seed,
                            );
                        }
                        NodeOp::Rnn(_) => unreachable!("validated cnn cell"),
                    }
                    params.register(&format!("{node}.g"), &[f], Init::Const(1.0), seed);
                    params.register(&format!("{node}.b"), &[f], Init::Const(0.0), seed);
                }
                if cell.projected {
                    params.register(
                        &format!("{prefix}.proj.w"),
                        &[f, cell.c_raw],
                        Init::Xavier { fan_in: cell.c_raw, fan_out: f },
                        seed,
                    );
                    params.register(&format!("{prefix}.proj.g"), &[f], Init::Const(1.0), seed);
                    params.register(&format!("{prefix}.proj.b"), &[f], Init::Const(0.0), seed);
                }
                if cell.residual_projected {
                    params.register(
                        &format!("{prefix}.res.w"),
                        &[f, cell.c_in],
                        Init::Xavier { fan_in: cell.c_in, fan_out: f },
                        seed,
                    );
                    params.register(&format!("{prefix}.res.g"), &[f], Init::Const(1.0), seed);
                    params.register(&format!("{prefix}.res.b"), &[f], Init::Const(0.0), seed);
                }
            }
        }
        let c_last = arch.output_channels();
        params.register(
            "fc.w",
            &[arch.num_classes, c_last],
            Init::Xavier { fan_in: c_last, fan_out: arch.num_classes },
            seed,
        );
        params.register("fc.b", &[arch.num_classes], Init::Const(0.0), seed);
        Ok(CnnNet { arch, params })
    }

    fn conv_norm(
        tape: &mut Tape,
        staged: &StagedParams,
        prefix: &str,
        x: ValueId,
        relu: bool,
    ) -> Result<ValueId> {
        let mixed = tape.channel_mix(staged.id(&format!("{prefix}.w")), x)?;
        let out = tape.channel_affine(
            staged.id(&format!("{prefix}.g")),
            staged.id(&format!("{prefix}.b")),
            mixed,
        )?;
        if relu { tape.relu(out) } else { Ok(out) }
    }

    #[allow(clippy::too_many_arguments)]
    fn cell_forward(
        &self,
        tape: &mut Tape,
        staged: &StagedParams,
        prefix: &str,
        input: ValueId,
        projected: bool,
        residual: bool,
        residual_projected: bool,
    ) -> Result<ValueId> {
        let block = self.arch.cell.map_to_block();
        if block.is_empty() {
            return Ok(input);
        }
        let mut outputs: BTreeMap<usize, ValueId> = BTreeMap::new();
        for &v in block.live_nodes() {
            let feeds: Vec<ValueId> = block
                .aggregands(v)
                .iter()
                .map(|a| match a {
                    Aggregand::CellInput => input,
                    Aggregand::Node(u) => outputs[u],
                })
                .collect();
            let x = if feeds.len() == 1 { feeds[0] } else { tape.concat_channels(&feeds)? };
            let node = format!("{prefix}.n{v}");
            let y = match self.arch.cell.ops()[v] {
                NodeOp::Cnn(CnnOp::Conv1x1) => {
                    let mixed = tape.channel_mix(staged.id(&format!("{node}.w")), x)?;
                    let normed = tape.channel_affine(
                        staged.id(&format!("{node}.g")),
                        staged.id(&format!("{node}.b")),
                        mixed,
                    )?;
                    tape.relu(normed)?
                }
                NodeOp::Cnn(CnnOp::SepConv3x3) => {
                    let depth = tape.depthwise3x3(staged.id(&format!("{node}.dw")), x)?;
                    let mixed = tape.channel_mix(staged.id(&format!("{node}.pw")), depth)?;
                    let normed = tape.channel_affine(
                        staged.id(&format!("{node}.g")),
                        staged.id(&format!("{node}.b")),
                        mixed,
                    )?;
                    tape.relu(normed)?
                }
                NodeOp::Rnn(_) => unreachable!("validated cnn cell"),
            };
            outputs.insert(v, y);
        }
        let leaf_ids: Vec<ValueId> = block.leaves().iter().map(|v| outputs[v]).collect();
        let mut out =
            if leaf_ids.len() == 1 { leaf_ids[0] } else { tape.concat_channels(&leaf_ids)? };
        if projected {
            out = Self::conv_norm(tape, staged, &format!("{prefix}.proj"), out, false)?;
        }
        if residual {
            let shortcut = if residual_projected {
                Self::conv_norm(tape, staged, &format!("{prefix}.res"), input, false)?
            } else {
                input
            };
            out = tape.add(out, shortcut)?;
        }
        Ok(out)
    }

    /// Class logits for one image.
    pub fn logits(&self, tape: &mut Tape, staged: &StagedParams, image: &Tensor) -> Result<ValueId> {
        let x = tape.leaf(image.clone());
        let stem = tape.conv3x3(staged.id("stem.w"), x)?;
        let stem = tape.channel_affine(staged.id("stem.g"), staged.id("stem.b"), stem)?;
        let mut h = tape.relu(stem)?;
        let plan = self.arch.plan()?;
        for stage in &plan {
            if stage.index > 0 {
                h = tape.max_pool2(h)?;
            }
            for (t, cell) in stage.cells.iter().enumerate() {
                let prefix = format!("s{}.c{}", stage.index + 1, t + 1);
                h = self.cell_forward(
                    tape,
                    staged,
                    &prefix,
                    h,
                    cell.projected,
                    cell.residual,
                    cell.residual_projected,
                )?;
            }
        }
        let pooled = tape.global_avg_pool(h)?;
        let scores = tape.matvec(staged.id("fc.w"), pooled)?;
        tape.add(scores, staged.id("fc.b"))
    }
}

fn rnn_source_name(a: &Aggregand) -> String {
    match a {
        Aggregand::CellInput => "in".to_string(),
        Aggregand::Node(u) => format!("p{u}"),
    }
}

/// Next-token language model assembled around a recurrent cell.
pub struct RnnNet {
    arch: RnnArchitecture,
    pub params: ParamTable,
}

impl RnnNet {
    pub fn new(arch: RnnArchitecture, seed: u64) -> Result<RnnNet> {
        arch.validate()?;
        let (d, e, v) = (arch.hidden_dim, arch.embed_dim, arch.vocab_size);
        let mut params = ParamTable::new();
        params.register("embed", &[v, e], Init::Uniform(0.1), seed);
        params.register("inx.w", &[d, e], Init::Xavier { fan_in: e, fan_out: d }, seed);
        params.register("inh.w", &[d, d], Init::Xavier { fan_in: d, fan_out: d }, seed);
        params.register("in.b", &[d], Init::Const(0.0), seed);
        let block = arch.cell.map_to_block();
        for &nv in block.live_nodes() {
            for a in block.aggregands(nv) {
                let base = format!("cell.n{nv}.{}", rnn_source_name(&a));
                params.register(&format!("{base}.gw"), &[d, d], Init::Xavier { fan_in: d, fan_out: d }, seed);
                params.register(&format!("{base}.gb"), &[d], Init::Const(0.0), seed);
                params.register(&format!("{base}.tw"), &[d, d], Init::Xavier { fan_in: d, fan_out: d }, seed);
                params.register(&format!("{base}.tb"), &[d], Init::Const(0.0), seed);
            }
        }
        params.register("dec.w", &[v, d], Init::Xavier { fan_in: d, fan_out: v }, seed);
        params.register("dec.b", &[v], Init::Const(0.0), seed);
        Ok(RnnNet { arch, params })
    }

    /// One recurrent step: preprocess the input token embedding with the
    /// previous hidden state, run the cell, return the new hidden state.
    pub fn step(
        &self,
        tape: &mut Tape,
        staged: &StagedParams,
        token: usize,
        h_prev: ValueId,
    ) -> Result<ValueId> {
        let block = self.arch.cell.map_to_block();
        if block.is_empty() {
            return Ok(h_prev);
        }
        let x = tape.embed_row(staged.id("embed"), token)?;
        let from_x = tape.matvec(staged.id("inx.w"), x)?;
        let from_h = tape.matvec(staged.id("inh.w"), h_prev)?;
        let pre = tape.add(from_x, from_h)?;
        let pre = tape.add(pre, staged.id("in.b"))?;
        let s = tape.tanh(pre)?;

        let mut outputs: BTreeMap<usize, ValueId> = BTreeMap::new();
        for &nv in block.live_nodes() {
            let mut parts = Vec::new();
            for a in block.aggregands(nv) {
                let src = match a {
                    Aggregand::CellInput => s,
                    Aggregand::Node(u) => outputs[&u],
                };
                let base = format!("cell.n{nv}.{}", rnn_source_name(&a));
                let gate_pre = tape.matvec(staged.id(&format!("{base}.gw")), src)?;
                let gate_pre = tape.add(gate_pre, staged.id(&format!("{base}.gb")))?;
                let gate = tape.sigmoid(gate_pre)?;
                let tr_pre = tape.matvec(staged.id(&format!("{base}.tw")), src)?;
                let tr_pre = tape.add(tr_pre, staged.id(&format!("{base}.tb")))?;
                let tr = match self.arch.cell.ops()[nv] {
                    NodeOp::Rnn(RnnActivation::Relu) => tape.relu(tr_pre)?,
                    NodeOp::Rnn(RnnActivation::Sigmoid) => tape.sigmoid(tr_pre)?,
                    NodeOp::Rnn(RnnActivation::Tanh) => tape.tanh(tr_pre)?,
                    NodeOp::Rnn(RnnActivation::Identity) => tr_pre,
                    NodeOp::Cnn(_) => unreachable!("validated rnn cell"),
                };
                let gated = tape.mul(gate, tr)?;
                let keep = tape.one_minus(gate)?;
                let kept = tape.mul(keep, src)?;
                parts.push(tape.add(gated, kept)?);
            }
            outputs.insert(nv, tape.add_n(&parts)?);
        }
        let leaf_ids: Vec<ValueId> = block.leaves().iter().map(|v| outputs[v]).collect();
        let summed = tape.add_n(&leaf_ids)?;
        tape.scale(summed, 1.0 / leaf_ids.len() as f64)
    }

    /// Mean next-token cross-entropy over `window` (predicting each token
    /// from its predecessors, hidden state threaded through).
    pub fn window_loss(
        &self,
        tape: &mut Tape,
        staged: &StagedParams,
        window: &[usize],
    ) -> Result<ValueId> {
        if window.len() < 2 {
            return Err(Error::invalid("window needs at least two tokens"));
        }
        let mut h = tape.leaf(Tensor::zeros(&[self.arch.hidden_dim]));
        let mut losses = Vec::with_capacity(window.len() - 1);
        for i in 0..window.len() - 1 {
            h = self.step(tape, staged, window[i], h)?;
            let logits = tape.matvec(staged.id("dec.w"), h)?;
            let logits = tape.add(logits, staged.id("dec.b"))?;
            losses.push(tape.softmax_ce_loss(logits, window[i + 1])?);
        }
        let total = tape.add_n(&losses)?;
        tape.scale(total, 1.0 / losses.len() as f64)
    }
}

/// Shared optimizer settings for the desk trainers.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainerConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Tokens consumed per recurrent sample (predictions = window - 1).
    /// Ignored by image tasks.
    pub window: usize,
}

impl TrainerConfig {
    pub fn desk_cnn() -> TrainerConfig {
        TrainerConfig { epochs: 10, batch_size: 16, learning_rate: 0.08, window: 8 }
    }

    pub fn desk_rnn() -> TrainerConfig {
        TrainerConfig { epochs: 16, batch_size: 8, learning_rate: 0.5, window: 9 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("trainer: epochs and batch_size must be >= 1"));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::invalid("trainer: learning_rate must be > 0"));
        }
        if self.window < 2 {
            return Err(Error::invalid("trainer: window must be >= 2 tokens"));
        }
        Ok(())
    }
}

/// What a training run produced: `perf` in [0, 1] (higher better), the raw
/// task metric behind it, and the per-epoch validation history.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub perf: f64,
    pub raw_metric: f64,
    pub history: Vec<f64>,
}

fn shuffle<T>(items: &mut [T], rng: &mut rand_chacha::ChaCha8Rng) {
    for i in (1..items.len()).rev() {
        let j = rng.gen_range(0..=i);
        items.swap(i, j);
    }
}

/// Validation accuracy of the current parameters.
fn cnn_accuracy(net: &CnnNet, data: &ImageData) -> Result<f64> {
    let mut tape = Tape::new();
    let staged = net.params.stage(&mut tape);
    let mut hits = 0usize;
    for (image, label) in &data.val {
        let logits = net.logits(&mut tape, &staged, image)?;
        let scores = tape.value(logits).data();
        let pred = scores
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        if pred == *label {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.val.len() as f64)
}

/// Trains the CNN with plain minibatch gradient descent; `perf` is the best
/// validation accuracy over epochs.
pub fn train_cnn(
    arch: &CnnArchitecture,
    data: &ImageData,
    cfg: &TrainerConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.train.is_empty() || data.val.is_empty() {
        return Err(Error::invalid("image data has empty splits"));
    }
    let mut net = CnnNet::new(arch.clone(), seed)?;
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best = 0.0f64;
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..data.train.len()).collect();
        let mut r = rng::rng(seed, Stream::Eval, &[0x45504f43, epoch as u64]);
        shuffle(&mut order, &mut r);
        for batch in order.chunks(cfg.batch_size) {
            let mut tape = Tape::new();
            let staged = net.params.stage(&mut tape);
            let mut losses = Vec::with_capacity(batch.len());
            for &i in batch {
                let (image, label) = &data.train[i];
                let logits = net.logits(&mut tape, &staged, image)?;
                losses.push(tape.softmax_ce_loss(logits, *label)?);
            }
            let total = tape.add_n(&losses)?;
            let mean = tape.scale(total, 1.0 / batch.len() as f64)?;
            let grads = tape.backward(mean)?;
            net.params.sgd_step(&staged, &grads, cfg.learning_rate);
        }
        let acc = cnn_accuracy(&net, data)?;
        history.push(acc);
        best = best.max(acc);
    }
    Ok(TrainOutcome { perf: best, raw_metric: best, history })
}

/// Mean validation cross-entropy of the current parameters over
/// non-overlapping windows.
fn rnn_val_ce(net: &RnnNet, data: &TokenData, window: usize) -> Result<f64> {
    let mut tape = Tape::new();
    let staged = net.params.stage(&mut tape);
    let mut total = 0.0;
    let mut count = 0usize;
    let mut start = 0;
    while start + window <= data.val.len() {
        let loss = net.window_loss(&mut tape, &staged, &data.val[start..start + window])?;
        total += tape.value(loss).item() * (window - 1) as f64;
        count += window - 1;
        start += window;
    }
    if count == 0 {
        return Err(Error::invalid("validation stream shorter than one window"));
    }
    Ok(total / count as f64)
}

/// Trains the recurrent net; `perf = 1 / (1 + ce)` where `ce` is the best
/// validation cross-entropy (so `raw_metric`, the perplexity, is `exp(ce)`).
pub fn train_rnn(
    arch: &RnnArchitecture,
    data: &TokenData,
    cfg: &TrainerConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.train.len() < cfg.window || data.val.len() < cfg.window {
        return Err(Error::invalid("token stream shorter than one window"));
    }
    let mut net = RnnNet::new(arch.clone(), seed)?;
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best_ce = f64::INFINITY;
    let starts: Vec<usize> = (0..=data.train.len() - cfg.window).step_by(cfg.window).collect();
    for epoch in 0..cfg.epochs {
        let mut order = starts.clone();
        let mut r = rng::rng(seed, Stream::Eval, &[0x45504f43, epoch as u64]);
        shuffle(&mut order, &mut r);
        for batch in order.chunks(cfg.batch_size) {
            let mut tape = Tape::new();
            let staged = net.params.stage(&mut tape);
            let mut losses = Vec::with_capacity(batch.len());
            for &s in batch {
                losses.push(net.window_loss(&mut tape, &staged, &data.train[s..s + cfg.window])?);
            }
            let total = tape.add_n(&losses)?;
            let mean = tape.scale(total, 1.0 / batch.len() as f64)?;
            let grads = tape.backward(mean)?;
            net.params.sgd_step(&staged, &grads, cfg.learning_rate);
        }
        let ce = rnn_val_ce(&net, data, cfg.window)?;
        history.push(ce);
        best_ce = best_ce.min(ce);
    }
    Ok(TrainOutcome {
        perf: 1.0 / (1.0 + best_ce),
        raw_metric: best_ce.exp(),
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builder::build_cnn;
    use crate::eval::dataset::{self, DatasetSpec};
    use crate::topology::{CellKind, Edge};

    fn tiny_cnn_arch(cell: CellTopology) -> CnnArchitecture {
        CnnArchitecture {
            cell,
            stages: 2,
            cells_per_stage: 1,
            base_filters: 6,
            input_resolution: (8, 8),
            input_channels: 3,
            num_classes: 4,
            residual: true,
        }
    }

    fn chain2_cnn() -> CellTopology {
        CellTopology::new(
            CellKind::Cnn,
            vec![NodeOp::Cnn(CnnOp::Conv1x1), NodeOp::Cnn(CnnOp::SepConv3x3)],
            vec![Edge::new(0, 1)],
        )
        .unwrap()
    }

    fn chain2_rnn() -> CellTopology {
        CellTopology::new(
            CellKind::Rnn,
            vec![NodeOp::Rnn(RnnActivation::Tanh), NodeOp::Rnn(RnnActivation::Relu)],
            vec![Edge::new(0, 1)],
        )
        .unwrap()
    }

    #[test]
    fn param_init_is_name_keyed_not_order_keyed() {
        let mut a = ParamTable::new();
        a.register("x", &[4], Init::Uniform(1.0), 7);
        a.register("y", &[4], Init::Uniform(1.0), 7);
        let mut b = ParamTable::new();
        b.register("y", &[4], Init::Uniform(1.0), 7);
        b.register("x", &[4], Init::Uniform(1.0), 7);
        assert_eq!(a.tensor("x"), b.tensor("x"));
        assert_eq!(a.tensor("y"), b.tensor("y"));
        assert_ne!(a.tensor("x"), a.tensor("y"));
    }

    #[test]
    fn cnn_forward_shapes_and_determinism() {
        let arch = tiny_cnn_arch(chain2_cnn());
        let net = CnnNet::new(arch.clone(), 3).unwrap();
        let image = Tensor::zeros(&[3, 8, 8]);
        let mut tape = Tape::new();
        let staged = net.params.stage(&mut tape);
        let logits = net.logits(&mut tape, &staged, &image).unwrap();
        assert_eq!(tape.value(logits).shape(), &[4]);

        let net2 = CnnNet::new(arch, 3).unwrap();
        assert_eq!(net.params.tensor("stem.w"), net2.params.tensor("stem.w"));
    }

    #[test]
    fn empty_cell_net_still_classifies() {
        let cell = CellTopology::new(
            CellKind::Cnn,
            vec![NodeOp::Cnn(CnnOp::Conv1x1), NodeOp::Cnn(CnnOp::Conv1x1)],
            vec![],
        )
        .unwrap();
        let arch = tiny_cnn_arch(cell);
        let net = CnnNet::new(arch, 3).unwrap();
        let mut tape = Tape::new();
        let staged = net.params.stage(&mut tape);
        let logits = net.logits(&mut tape, &staged, &Tensor::zeros(&[3, 8, 8])).unwrap();
        assert_eq!(tape.value(logits).shape(), &[4]);
    }

    #[test]
    fn cnn_learns_the_blob_task() {
        let data = dataset::generate(&DatasetSpec::default_cnn(), 5).unwrap();
        let arch = tiny_cnn_arch(chain2_cnn());
        let cfg = TrainerConfig::desk_cnn();
        let out = train_cnn(&arch, data.images().unwrap(), &cfg, 11).unwrap();
        assert!(out.perf > 0.9, "blob accuracy {:.3} too low: {:?}", out.perf, out.history);
        // Deterministic: same seed, same history.
        let again = train_cnn(&arch, data.images().unwrap(), &cfg, 11).unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn rnn_learns_the_repeating_task() {
        let spec = DatasetSpec::RepeatingTokens { vocab: 6, period: 4, train: 256, val: 128 };
        let data = dataset::generate(&spec, 5).unwrap();
        let arch = RnnArchitecture {
            cell: chain2_rnn(),
            hidden_dim: 16,
            embed_dim: 16,
            vocab_size: 6,
        };
        let cfg = TrainerConfig { epochs: 10, ..TrainerConfig::desk_rnn() };
        let out = train_rnn(&arch, data.tokens().unwrap(), &cfg, 11).unwrap();
        assert!(
            out.raw_metric < 1.5,
            "repeating-pattern perplexity {:.3} too high: {:?}",
            out.raw_metric,
            out.history
        );
        let again = train_rnn(&arch, data.tokens().unwrap(), &cfg, 11).unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn empty_rnn_cell_keeps_hidden_state() {
        let cell = CellTopology::new(
            CellKind::Rnn,
            vec![NodeOp::Rnn(RnnActivation::Tanh), NodeOp::Rnn(RnnActivation::Tanh)],
            vec![],
        )
        .unwrap();
        let arch = RnnArchitecture { cell, hidden_dim: 8, embed_dim: 8, vocab_size: 4 };
        let net = RnnNet::new(arch, 1).unwrap();
        let mut tape = Tape::new();
        let staged = net.params.stage(&mut tape);
        let h0 = tape.leaf(Tensor::zeros(&[8]));
        let h1 = net.step(&mut tape, &staged, 0, h0).unwrap();
        assert_eq!(h0, h1, "empty block must pass the hidden state through");
    }

    #[test]
    fn builder_and_trainer_agree_on_the_plan() {
        // The staged-plan invariants (projection and residual flags) drive
        // both parameter registration and the forward pass; a cell with two
        // leaves must introduce a projection.
        let cell = CellTopology::new(
            CellKind::Cnn,
            vec![
                NodeOp::Cnn(CnnOp::Conv1x1),
                NodeOp::Cnn(CnnOp::Conv1x1),
                NodeOp::Cnn(CnnOp::Conv1x1),
            ],
            vec![Edge::new(0, 1), Edge::new(0, 2)],
        )
        .unwrap();
        let crate::builder::ArchitectureSpec::Cnn(arch) =
            build_cnn(cell, 1, 1, 4, (4, 4)).unwrap()
        else {
            unreachable!()
        };
        let net = CnnNet::new(arch, 9).unwrap();
        assert_eq!(net.params.tensor("s1.c1.proj.w").shape(), &[4, 8]);
        let mut tape = Tape::new();
        let staged = net.params.stage(&mut tape);
        let logits = net.logits(&mut tape, &staged, &Tensor::zeros(&[3, 4, 4])).unwrap();
        assert_eq!(tape.value(logits).shape(), &[10]);
    }
}
