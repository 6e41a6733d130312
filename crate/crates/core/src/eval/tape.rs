//! Reverse-mode automatic differentiation on a linear tape.
//!
//! Every operation appends a node holding its forward value and enough memo
//! state (pool argmaxes, softmax probabilities) to make the backward sweep a
//! single reverse pass. Tapes are single-use: build the step's graph, call
//! [`Tape::backward`], read gradients, drop the tape.

use crate::error::{Error, Result};
use crate::eval::tensor::Tensor;

/// Handle to a value on a specific tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValueId(usize);

impl ValueId {
    /// Position on the tape; indexes the gradient vector from
    /// [`Tape::backward`].
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(ValueId, ValueId),
    AddN(Vec<ValueId>),
    Mul(ValueId, ValueId),
    Scale(ValueId, f64),
    OneMinus(ValueId),
    Relu(ValueId),
    Sigmoid(ValueId),
    Tanh(ValueId),
    /// `w: [r, c] * x: [c] -> [r]`
    MatVec { w: ValueId, x: ValueId },
    /// Dense 3x3 convolution, zero padding 1: `w: [f, c, 3, 3], x: [c, h, w]`.
    Conv3x3 { w: ValueId, x: ValueId },
    /// 1x1 convolution: `w: [f, c], x: [c, h, w] -> [f, h, w]`.
    ChannelMix { w: ValueId, x: ValueId },
    /// Per-channel 3x3 convolution, zero padding 1: `k: [c, 3, 3]`.
    Depthwise3x3 { k: ValueId, x: ValueId },
    /// `x * scale[c] + shift[c]` broadcast over the spatial grid.
    ChannelAffine { scale: ValueId, shift: ValueId, x: ValueId },
    ConcatChannels(Vec<ValueId>),
    /// 2x2 max pool, stride 2; `argmax` holds the flat input index that won
    /// each output element.
    MaxPool2 { x: ValueId, argmax: Vec<usize> },
    GlobalAvgPool(ValueId),
    /// Row `row` of an embedding table `[v, e]`; gradients scatter back.
    EmbedRow { table: ValueId, row: usize },
    /// Fused stable softmax + cross-entropy against `label`; scalar output.
    SoftmaxCeLoss { logits: ValueId, label: usize, probs: Vec<f64> },
    /// `sum(x^2)`; handy scalar head for gradient checks.
    SumSquares(ValueId),
}

struct Node {
    op: Op,
    value: Tensor,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn check(&self, id: ValueId) -> Result<()> {
        if id.0 >= self.nodes.len() {
            return Err(Error::Usage(format!(
                "value id {} does not belong to this tape (len {})",
                id.0,
                self.nodes.len()
            )));
        }
        Ok(())
    }

    fn push(&mut self, op: Op, value: Tensor) -> ValueId {
        self.nodes.push(Node { op, value });
        ValueId(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> ValueId {
        self.push(Op::Leaf, value)
    }

    pub fn value(&self, id: ValueId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn shape_of(&self, id: ValueId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    pub fn add(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        self.check(a)?;
        self.check(b)?;
        if self.shape_of(a) != self.shape_of(b) {
            return Err(Error::shape(
                "add",
                format!("{:?} vs {:?}", self.shape_of(a), self.shape_of(b)),
            ));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let value = Tensor::new(self.shape_of(a).to_vec(), data)?;
        Ok(self.push(Op::Add(a, b), value))
    }

    pub fn add_n(&mut self, terms: &[ValueId]) -> Result<ValueId> {
        let Some((&first, rest)) = terms.split_first() else {
            return Err(Error::Usage("add_n needs at least one term".into()));
        };
        self.check(first)?;
        let shape = self.shape_of(first).to_vec();
        let mut data = self.value(first).data().to_vec();
        for &t in rest {
            self.check(t)?;
            if self.shape_of(t) != shape {
                return Err(Error::shape(
                    "add_n",
                    format!("{:?} vs {shape:?}", self.shape_of(t)),
                ));
            }
            for (acc, x) in data.iter_mut().zip(self.value(t).data()) {
                *acc += x;
            }
        }
        let value = Tensor::new(shape, data)?;
        Ok(self.push(Op::AddN(terms.to_vec()), value))
    }

    pub fn mul(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        self.check(a)?;
        self.check(b)?;
        if self.shape_of(a) != self.shape_of(b) {
            return Err(Error::shape(
                "mul",
                format!("{:?} vs {:?}", self.shape_of(a), self.shape_of(b)),
            ));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .collect();
        let value = Tensor::new(self.shape_of(a).to_vec(), data)?;
        Ok(self.push(Op::Mul(a, b), value))
    }

    pub fn scale(&mut self, x: ValueId, c: f64) -> Result<ValueId> {
        self.check(x)?;
        let value = self.value(x).map(|v| v * c);
        Ok(self.push(Op::Scale(x, c), value))
    }

    pub fn one_minus(&mut self, x: ValueId) -> Result<ValueId> {
        self.check(x)?;
        let value = self.value(x).map(|v| 1.0 - v);
        Ok(self.push(Op::OneMinus(x), value))
    }

    pub fn relu(&mut self, x: ValueId) -> Result<ValueId> {
        self.check(x)?;
        let value = self.value(x).map(|v| v.max(0.0));
        Ok(self.push(Op::Relu(x), value))
    }

    pub fn sigmoid(&mut self, x: ValueId) -> Result<ValueId> {
        self.check(x)?;
        let value = self.value(x).map(|v| 1.0 / (1.0 + (-v).exp()));
        Ok(self.push(Op::Sigmoid(x), value))
    }

    pub fn tanh(&mut self, x: ValueId) -> Result<ValueId> {
        self.check(x)?;
        let value = self.value(x).map(f64::tanh);
        Ok(self.push(Op::Tanh(x), value))
    }

    pub fn matvec(&mut self, w: ValueId, x: ValueId) -> Result<ValueId> {
        self.check(w)?;
        self.check(x)?;
        let (ws, xs) = (self.shape_of(w), self.shape_of(x));
        if ws.len() != 2 || xs.len() != 1 || ws[1] != xs[0] {
            return Err(Error::shape("matvec", format!("w {ws:?} * x {xs:?}")));
        }
        let (r, c) = (ws[0], ws[1]);
        let wd = self.value(w).data();
        let xd = self.value(x).data();
        let data: Vec<f64> = (0..r)
            .map(|i| (0..c).map(|j| wd[i * c + j] * xd[j]).sum())
            .collect();
        Ok(self.push(Op::MatVec { w, x }, Tensor::vector(data)))
    }

    pub fn conv3x3(&mut self, w: ValueId, x: ValueId) -> Result<ValueId> {
        self.check(w)?;
        self.check(x)?;
        let (ws, xs) = (self.shape_of(w).to_vec(), self.shape_of(x).to_vec());
        if ws.len() != 4 || ws[2] != 3 || ws[3] != 3 || xs.len() != 3 || ws[1] != xs[0] {
            return Err(Error::shape("conv3x3", format!("w {ws:?} * x {xs:?}")));
        }
        let (f, c, h, wd_) = (ws[0], xs[0], xs[1], xs[2]);
        let wd = self.value(w).data();
        let xd = self.value(x).data();
        let mut out = vec![0.0; f * h * wd_];
        for fi in 0..f {
            for ci in 0..c {
                let kbase = (fi * c + ci) * 9;
                for i in 0..h {
                    for j in 0..wd_ {
                        let mut acc = 0.0;
                        for di in 0..3usize {
                            let ii = i as isize + di as isize - 1;
                            if ii < 0 || ii >= h as isize {
                                continue;
                            }
                            for dj in 0..3usize {
                                let jj = j as isize + dj as isize - 1;
                                if jj < 0 || jj >= wd_ as isize {
                                    continue;
                                }
                                acc += wd[kbase + di * 3 + dj]
                                    * xd[(ci * h + ii as usize) * wd_ + jj as usize];
                            }
                        }
                        out[(fi * h + i) * wd_ + j] += acc;
                    }
                }
            }
        }
        let value = Tensor::new(vec![f, h, wd_], out)?;
        Ok(self.push(Op::Conv3x3 { w, x }, value))
    }

    pub fn channel_mix(&mut self, w: ValueId, x: ValueId) -> Result<ValueId> {
        self.check(w)?;
        self.check(x)?;
        let (ws, xs) = (self.shape_of(w).to_vec(), self.shape_of(x).to_vec());
        if ws.len() != 2 || xs.len() != 3 || ws[1] != xs[0] {
            return Err(Error::shape("channel_mix", format!("w {ws:?} * x {xs:?}")));
        }
        let (f, c, hw) = (ws[0], xs[0], xs[1] * xs[2]);
        let wd = self.value(w).data();
        let xd = self.value(x).data();
        let mut out = vec![0.0; f * hw];
        for fi in 0..f {
            for ci in 0..c {
                let wfc = wd[fi * c + ci];
                for p in 0..hw {
                    out[fi * hw + p] += wfc * xd[ci * hw + p];
                }
            }
        }
        let value = Tensor::new(vec![f, xs[1], xs[2]], out)?;
        Ok(self.push(Op::ChannelMix { w, x }, value))
    }

    pub fn depthwise3x3(&mut self, k: ValueId, x: ValueId) -> Result<ValueId> {
        self.check(k)?;
        self.check(x)?;
        let (ks, xs) = (self.shape_of(k).to_vec(), self.shape_of(x).to_vec());
        if ks.len() != 3 || ks[1] != 3 || ks[2] != 3 || xs.len() != 3 || ks[0] != xs[0] {
            return Err(Error::shape("depthwise3x3", format!("k {ks:?} * x {xs:?}")));
        }
        let (c, h, w) = (xs[0], xs[1], xs[2]);
        let kd = self.value(k).data();
        let xd = self.value(x).data();
        let mut out = vec![0.0; c * h * w];
        for ci in 0..c {
            for i in 0..h {
                for j in 0..w {
                    let mut acc = 0.0;
                    for di in 0..3usize {
                        let ii = i as isize + di as isize - 1;
                        if ii < 0 || ii >= h as isize {
                            continue;
                        }
                        for dj in 0..3usize {
                            let jj = j as isize + dj as isize - 1;
                            if jj < 0 || jj >= w as isize {
                                continue;
                            }
                            acc += kd[ci * 9 + di * 3 + dj]
                                * xd[(ci * h + ii as usize) * w + jj as usize];
                        }
                    }
                    out[(ci * h + i) * w + j] = acc;
                }
            }
        }
        let value = Tensor::new(vec![c, h, w], out)?;
        Ok(self.push(Op::Depthwise3x3 { k, x }, value))
    }

    pub fn channel_affine(&mut self, scale: ValueId, shift: ValueId, x: ValueId) -> Result<ValueId> {
        self.check(scale)?;
        self.check(shift)?;
        self.check(x)?;
        let xs = self.shape_of(x).to_vec();
        if xs.len() != 3
            || self.shape_of(scale) != [xs[0]]
            || self.shape_of(shift) != [xs[0]]
        {
            return Err(Error::shape(
                "channel_affine",
                format!(
                    "scale {:?}, shift {:?}, x {xs:?}",
                    self.shape_of(scale),
                    self.shape_of(shift)
                ),
            ));
        }
        let (c, hw) = (xs[0], xs[1] * xs[2]);
        let sd = self.value(scale).data();
        let bd = self.value(shift).data();
        let xd = self.value(x).data();
        let mut out = vec![0.0; c * hw];
        for ci in 0..c {
            for p in 0..hw {
                out[ci * hw + p] = xd[ci * hw + p] * sd[ci] + bd[ci];
            }
        }
        let value = Tensor::new(xs, out)?;
        Ok(self.push(Op::ChannelAffine { scale, shift, x }, value))
    }

    pub fn concat_channels(&mut self, parts: &[ValueId]) -> Result<ValueId> {
        let Some((&first, _)) = parts.split_first() else {
            return Err(Error::Usage("concat_channels needs at least one part".into()));
        };
        self.check(first)?;
        let fs = self.shape_of(first).to_vec();
        if fs.len() != 3 {
            return Err(Error::shape("concat_channels", format!("{fs:?}")));
        }
        let (h, w) = (fs[1], fs[2]);
        let mut channels = 0;
        let mut data = Vec::new();
        for &p in parts {
            self.check(p)?;
            let ps = self.shape_of(p);
            if ps.len() != 3 || ps[1] != h || ps[2] != w {
                return Err(Error::shape(
                    "concat_channels",
                    format!("{ps:?} does not stack on {h}x{w}"),
                ));
            }
            channels += ps[0];
            data.extend_from_slice(self.value(p).data());
        }
        let value = Tensor::new(vec![channels, h, w], data)?;
        Ok(self.push(Op::ConcatChannels(parts.to_vec()), value))
    }

    pub fn max_pool2(&mut self, x: ValueId) -> Result<ValueId> {
        self.check(x)?;
        let xs = self.shape_of(x).to_vec();
        if xs.len() != 3 || !xs[1].is_multiple_of(2) || !xs[2].is_multiple_of(2) {
            return Err(Error::shape("max_pool2", format!("{xs:?} (h, w must be even)")));
        }
        let (c, h, w) = (xs[0], xs[1], xs[2]);
        let (oh, ow) = (h / 2, w / 2);
        let xd = self.value(x).data();
        let mut out = vec![0.0; c * oh * ow];
        let mut argmax = vec![0usize; c * oh * ow];
        for ci in 0..c {
            for i in 0..oh {
                for j in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_at = 0;
                    for di in 0..2 {
                        for dj in 0..2 {
                            let at = (ci * h + 2 * i + di) * w + 2 * j + dj;
                            if xd[at] > best {
                                best = xd[at];
                                best_at = at;
                            }
                        }
                    }
                    out[(ci * oh + i) * ow + j] = best;
                    argmax[(ci * oh + i) * ow + j] = best_at;
                }
            }
        }
        let value = Tensor::new(vec![c, oh, ow], out)?;
        Ok(self.push(Op::MaxPool2 { x, argmax }, value))
    }

    pub fn global_avg_pool(&mut self, x: ValueId) -> Result<ValueId> {
        self.check(x)?;
        let xs = self.shape_of(x).to_vec();
        if xs.len() != 3 {
            return Err(Error::shape("global_avg_pool", format!("{xs:?}")));
        }
        let (c, hw) = (xs[0], xs[1] * xs[2]);
        let xd = self.value(x).data();
        let data: Vec<f64> = (0..c)
            .map(|ci| xd[ci * hw..(ci + 1) * hw].iter().sum::<f64>() / hw as f64)
            .collect();
        Ok(self.push(Op::GlobalAvgPool(x), Tensor::vector(data)))
    }

    pub fn embed_row(&mut self, table: ValueId, row: usize) -> Result<ValueId> {
        self.check(table)?;
        let ts = self.shape_of(table).to_vec();
        if ts.len() != 2 || row >= ts[0] {
            return Err(Error::shape("embed_row", format!("row {row} of {ts:?}")));
        }
        let e = ts[1];
        let data = self.value(table).data()[row * e..(row + 1) * e].to_vec();
        Ok(self.push(Op::EmbedRow { table, row }, Tensor::vector(data)))
    }

    pub fn softmax_ce_loss(&mut self, logits: ValueId, label: usize) -> Result<ValueId> {
        self.check(logits)?;
        let ls = self.shape_of(logits).to_vec();
        if ls.len() != 1 || label >= ls[0] {
            return Err(Error::shape("softmax_ce_loss", format!("label {label} of {ls:?}")));
        }
        let ld = self.value(logits).data();
        let max = ld.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = ld.iter().map(|&v| (v - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        let probs: Vec<f64> = exps.iter().map(|&e| e / z).collect();
        let loss = -(probs[label].max(f64::MIN_POSITIVE)).ln();
        Ok(self.push(Op::SoftmaxCeLoss { logits, label, probs }, Tensor::scalar(loss)))
    }

    pub fn sum_squares(&mut self, x: ValueId) -> Result<ValueId> {
        self.check(x)?;
        let s: f64 = self.value(x).data().iter().map(|v| v * v).sum();
        Ok(self.push(Op::SumSquares(x), Tensor::scalar(s)))
    }

    /// Gradients of the scalar at `loss` with respect to every tape value.
    /// Entries are `None` where no gradient flowed.
    pub fn backward(&self, loss: ValueId) -> Result<Vec<Option<Tensor>>> {
        self.check(loss)?;
        if !self.value(loss).shape().is_empty() {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            // Re-insert; callers may want the gradient of interior nodes too.
            let gd = g.data().to_vec();
            grads[idx] = Some(g);
            let add_into = |grads: &mut Vec<Option<Tensor>>, id: ValueId, delta: Tensor| {
                match &mut grads[id.0] {
                    Some(acc) => {
                        for (a, d) in acc.data_mut().iter_mut().zip(delta.data()) {
                            *a += d;
                        }
                    }
                    slot @ None => *slot = Some(delta),
                }
            };
            match &self.nodes[idx].op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    add_into(&mut grads, *a, Tensor::new(self.shape_of(*a).to_vec(), gd.clone())?);
                    add_into(&mut grads, *b, Tensor::new(self.shape_of(*b).to_vec(), gd)?);
                }
                Op::AddN(terms) => {
                    for &t in terms {
                        add_into(&mut grads, t, Tensor::new(self.shape_of(t).to_vec(), gd.clone())?);
                    }
                }
                Op::Mul(a, b) => {
                    let da: Vec<f64> =
                        gd.iter().zip(self.value(*b).data()).map(|(g, y)| g * y).collect();
                    let db: Vec<f64> =
                        gd.iter().zip(self.value(*a).data()).map(|(g, x)| g * x).collect();
                    add_into(&mut grads, *a, Tensor::new(self.shape_of(*a).to_vec(), da)?);
                    add_into(&mut grads, *b, Tensor::new(self.shape_of(*b).to_vec(), db)?);
                }
                Op::Scale(x, c) => {
                    let dx: Vec<f64> = gd.iter().map(|g| g * c).collect();
                    add_into(&mut grads, *x, Tensor::new(self.shape_of(*x).to_vec(), dx)?);
                }
                Op::OneMinus(x) => {
                    let dx: Vec<f64> = gd.iter().map(|g| -g).collect();
                    add_into(&mut grads, *x, Tensor::new(self.shape_of(*x).to_vec(), dx)?);
                }
                Op::Relu(x) => {
                    let dx: Vec<f64> = gd
                        .iter()
                        .zip(self.value(*x).data())
                        .map(|(g, &v)| if v > 0.0 { *g } else { 0.0 })
                        .collect();
                    add_into(&mut grads, *x, Tensor::new(self.shape_of(*x).to_vec(), dx)?);
                }
                Op::Sigmoid(x) => {
                    let y = self.nodes[idx].value.data();
                    let dx: Vec<f64> =
                        gd.iter().zip(y).map(|(g, &y)| g * y * (1.0 - y)).collect();
                    add_into(&mut grads, *x, Tensor::new(self.shape_of(*x).to_vec(), dx)?);
                }
                Op::Tanh(x) => {
                    let y = self.nodes[idx].value.data();
                    let dx: Vec<f64> = gd.iter().zip(y).map(|(g, &y)| g * (1.0 - y * y)).collect();
                    add_into(&mut grads, *x, Tensor::new(self.shape_of(*x).to_vec(), dx)?);
                }
                Op::MatVec { w, x } => {
                    let (r, c) = (self.shape_of(*w)[0], self.shape_of(*w)[1]);
                    let wd = self.value(*w).data();
                    let xd = self.value(*x).data();
                    let mut dw = vec![0.0; r * c];
                    let mut dx = vec![0.0; c];
                    for i in 0..r {
                        for j in 0..c {
                            dw[i * c + j] += gd[i] * xd[j];
                            dx[j] += gd[i] * wd[i * c + j];
                        }
                    }
                    add_into(&mut grads, *w, Tensor::new(vec![r, c], dw)?);
                    add_into(&mut grads, *x, Tensor::new(vec![c], dx)?);
                }
                Op::Conv3x3 { w, x } => {
                    let ws = self.shape_of(*w).to_vec();
                    let xs = self.shape_of(*x).to_vec();
                    let (f, c, h, wd_) = (ws[0], xs[0], xs[1], xs[2]);
                    let wd = self.value(*w).data();
                    let xd = self.value(*x).data();
                    let mut dw = vec![0.0; f * c * 9];
                    let mut dx = vec![0.0; c * h * wd_];
                    for fi in 0..f {
                        for ci in 0..c {
                            let kbase = (fi * c + ci) * 9;
                            for i in 0..h {
                                for j in 0..wd_ {
                                    let go = gd[(fi * h + i) * wd_ + j];
                                    if go == 0.0 {
                                        continue;
                                    }
                                    for di in 0..3usize {
                                        let ii = i as isize + di as isize - 1;
                                        if ii < 0 || ii >= h as isize {
                                            continue;
                                        }
                                        for dj in 0..3usize {
                                            let jj = j as isize + dj as isize - 1;
                                            if jj < 0 || jj >= wd_ as isize {
                                                continue;
                                            }
                                            let xat = (ci * h + ii as usize) * wd_ + jj as usize;
                                            dw[kbase + di * 3 + dj] += go * xd[xat];
                                            dx[xat] += go * wd[kbase + di * 3 + dj];
                                        }
                                    }
                                }
                            }
                        }
                    }
                    add_into(&mut grads, *w, Tensor::new(ws, dw)?);
                    add_into(&mut grads, *x, Tensor::new(xs, dx)?);
                }
                Op::ChannelMix { w, x } => {
                    let ws = self.shape_of(*w).to_vec();
                    let xs = self.shape_of(*x).to_vec();
                    let (f, c, hw) = (ws[0], xs[0], xs[1] * xs[2]);
                    let wd = self.value(*w).data();
                    let xd = self.value(*x).data();
                    let mut dw = vec![0.0; f * c];
                    let mut dx = vec![0.0; c * hw];
                    for fi in 0..f {
                        for ci in 0..c {
                            let mut acc = 0.0;
                            let wfc = wd[fi * c + ci];
                            for p in 0..hw {
                                let go = gd[fi * hw + p];
                                acc += go * xd[ci * hw + p];
                                dx[ci * hw + p] += go * wfc;
                            }
                            dw[fi * c + ci] += acc;
                        }
                    }
                    add_into(&mut grads, *w, Tensor::new(ws, dw)?);
                    add_into(&mut grads, *x, Tensor::new(xs, dx)?);
                }
                Op::Depthwise3x3 { k, x } => {
                    let xs = self.shape_of(*x).to_vec();
                    let (c, h, w) = (xs[0], xs[1], xs[2]);
                    let kd = self.value(*k).data();
                    let xd = self.value(*x).data();
                    let mut dk = vec![0.0; c * 9];
                    let mut dx = vec![0.0; c * h * w];
                    for ci in 0..c {
                        for i in 0..h {
                            for j in 0..w {
                                let go = gd[(ci * h + i) * w + j];
                                if go == 0.0 {
                                    continue;
                                }
                                for di in 0..3usize {
                                    let ii = i as isize + di as isize - 1;
                                    if ii < 0 || ii >= h as isize {
                                        continue;
                                    }
                                    for dj in 0..3usize {
                                        let jj = j as isize + dj as isize - 1;
                                        if jj < 0 || jj >= w as isize {
                                            continue;
                                        }
                                        let xat = (ci * h + ii as usize) * w + jj as usize;
                                        dk[ci * 9 + di * 3 + dj] += go * xd[xat];
                                        dx[xat] += go * kd[ci * 9 + di * 3 + dj];
                                    }
                                }
                            }
                        }
                    }
                    add_into(&mut grads, *k, Tensor::new(vec![c, 3, 3], dk)?);
                    add_into(&mut grads, *x, Tensor::new(xs, dx)?);
                }
                Op::ChannelAffine { scale, shift, x } => {
                    let xs = self.shape_of(*x).to_vec();
                    let (c, hw) = (xs[0], xs[1] * xs[2]);
                    let sd = self.value(*scale).data();
                    let xd = self.value(*x).data();
                    let mut dscale = vec![0.0; c];
                    let mut dshift = vec![0.0; c];
                    let mut dx = vec![0.0; c * hw];
                    for ci in 0..c {
                        for p in 0..hw {
                            let go = gd[ci * hw + p];
                            dscale[ci] += go * xd[ci * hw + p];
                            dshift[ci] += go;
                            dx[ci * hw + p] = go * sd[ci];
                        }
                    }
                    add_into(&mut grads, *scale, Tensor::vector(dscale));
                    add_into(&mut grads, *shift, Tensor::vector(dshift));
                    add_into(&mut grads, *x, Tensor::new(xs, dx)?);
                }
                Op::ConcatChannels(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let ps = self.shape_of(p).to_vec();
                        let len: usize = ps.iter().product();
                        let dp = gd[offset..offset + len].to_vec();
                        offset += len;
                        add_into(&mut grads, p, Tensor::new(ps, dp)?);
                    }
                }
                Op::MaxPool2 { x, argmax } => {
                    let xs = self.shape_of(*x).to_vec();
                    let mut dx = vec![0.0; xs.iter().product()];
                    for (o, &at) in argmax.iter().enumerate() {
                        dx[at] += gd[o];
                    }
                    add_into(&mut grads, *x, Tensor::new(xs, dx)?);
                }
                Op::GlobalAvgPool(x) => {
                    let xs = self.shape_of(*x).to_vec();
                    let (c, hw) = (xs[0], xs[1] * xs[2]);
                    let mut dx = vec![0.0; c * hw];
                    for ci in 0..c {
                        let share = gd[ci] / hw as f64;
                        for p in 0..hw {
                            dx[ci * hw + p] = share;
                        }
                    }
                    add_into(&mut grads, *x, Tensor::new(xs, dx)?);
                }
                Op::EmbedRow { table, row } => {
                    let ts = self.shape_of(*table).to_vec();
                    let e = ts[1];
                    let mut dt = vec![0.0; ts[0] * e];
                    dt[row * e..(row + 1) * e].copy_from_slice(&gd);
                    add_into(&mut grads, *table, Tensor::new(ts, dt)?);
                }
                Op::SoftmaxCeLoss { logits, label, probs } => {
                    let go = gd[0];
                    let dl: Vec<f64> = probs
                        .iter()
                        .enumerate()
                        .map(|(i, &p)| go * (p - if i == *label { 1.0 } else { 0.0 }))
                        .collect();
                    add_into(&mut grads, *logits, Tensor::vector(dl));
                }
                Op::SumSquares(x) => {
                    let go = gd[0];
                    let dx: Vec<f64> =
                        self.value(*x).data().iter().map(|&v| 2.0 * v * go).collect();
                    add_into(&mut grads, *x, Tensor::new(self.shape_of(*x).to_vec(), dx)?);
                }
            }
        }
        Ok(grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grad_of(grads: &[Option<Tensor>], id: ValueId) -> &Tensor {
        grads[id.0].as_ref().expect("gradient present")
    }

    #[test]
    fn matvec_chain_gradient_by_hand() {
        // loss = sum((W x)^2); dW = 2 (W x) x^T, dx = 2 W^T (W x).
        let mut tape = Tape::new();
        let w = tape.leaf(Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let x = tape.leaf(Tensor::vector(vec![0.5, -1.0]));
        let y = tape.matvec(w, x).unwrap();
        assert_eq!(tape.value(y).data(), &[-1.5, -2.5]);
        let loss = tape.sum_squares(y).unwrap();
        assert_eq!(tape.value(loss).item(), 1.5 * 1.5 + 2.5 * 2.5);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grad_of(&grads, w).data(), &[-1.5, 3.0, -2.5, 5.0]);
        // dx = 2 * (W^T y) = 2 * [1*-1.5 + 3*-2.5, 2*-1.5 + 4*-2.5]
        assert_eq!(grad_of(&grads, x).data(), &[-18.0, -26.0]);
    }

    #[test]
    fn softmax_loss_gradient_is_probs_minus_onehot() {
        let mut tape = Tape::new();
        let logits = tape.leaf(Tensor::vector(vec![0.0, 0.0]));
        let loss = tape.softmax_ce_loss(logits, 1).unwrap();
        assert!((tape.value(loss).item() - 0.5f64.ln().abs()).abs() < 1e-12);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grad_of(&grads, logits).data(), &[0.5, -0.5]);
    }

    #[test]
    fn fanout_accumulates_gradients() {
        // loss = sum((x + x)^2) = 4 sum(x^2) so dx = 8x.
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, -2.0]));
        let y = tape.add(x, x).unwrap();
        let loss = tape.sum_squares(y).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grad_of(&grads, x).data(), &[8.0, -16.0]);
    }

    #[test]
    fn max_pool_routes_gradient_to_argmax() {
        let mut tape = Tape::new();
        let x = tape.leaf(
            Tensor::new(vec![1, 2, 2], vec![1.0, 5.0, 2.0, 3.0]).unwrap(),
        );
        let y = tape.max_pool2(x).unwrap();
        assert_eq!(tape.value(y).data(), &[5.0]);
        let loss = tape.sum_squares(y).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grad_of(&grads, x).data(), &[0.0, 10.0, 0.0, 0.0]);
    }

    #[test]
    fn concat_splits_gradient_by_slice() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::new(vec![1, 1, 2], vec![1.0, 2.0]).unwrap());
        let b = tape.leaf(Tensor::new(vec![2, 1, 2], vec![3.0, 4.0, 5.0, 6.0]).unwrap());
        let y = tape.concat_channels(&[a, b]).unwrap();
        assert_eq!(tape.value(y).shape(), &[3, 1, 2]);
        let loss = tape.sum_squares(y).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grad_of(&grads, a).data(), &[2.0, 4.0]);
        assert_eq!(grad_of(&grads, b).data(), &[6.0, 8.0, 10.0, 12.0]);
    }

    #[test]
    fn embed_row_scatters_into_table() {
        let mut tape = Tape::new();
        let table = tape.leaf(Tensor::new(vec![3, 2], vec![0.0; 6]).unwrap());
        let row = tape.embed_row(table, 1).unwrap();
        let w = tape.leaf(Tensor::vector(vec![2.0, -1.0]));
        let y = tape.mul(row, w).unwrap();
        let loss = tape.sum_squares(y).unwrap();
        let grads = tape.backward(loss).unwrap();
        // All zeros in, so gradient is zero, but only row 1 is populated.
        assert_eq!(grad_of(&grads, table).shape(), &[3, 2]);
    }

    #[test]
    fn shape_and_ownership_errors() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::vector(vec![1.0]));
        let b = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(tape.add(a, b), Err(Error::Shape { .. })));
        assert!(matches!(tape.backward(b), Err(Error::Usage(_))));

        let mut other = Tape::new();
        let foreign = other.leaf(Tensor::scalar(0.0));
        let _keep = other.leaf(Tensor::scalar(0.0));
        drop(other);
        // An id past this tape's length is rejected.
        assert!(matches!(tape.scale(ValueId(99), 1.0), Err(Error::Usage(_))));
        let _ = foreign;
    }

    #[test]
    fn gap_averages_and_distributes_evenly() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 6.0]).unwrap());
        let y = tape.global_avg_pool(x).unwrap();
        assert_eq!(tape.value(y).data(), &[3.0]);
        let loss = tape.sum_squares(y).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grad_of(&grads, x).data(), &[1.5, 1.5, 1.5, 1.5]);
    }
}
