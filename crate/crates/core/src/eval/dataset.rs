//! Synthetic proxy datasets, regenerated bit-identically from a seed.
//!
//! Image tasks carry the class signal in per-channel amplitudes (position is
//! randomized), so a globally pooled classifier can always read it. Token
//! tasks are a repeating pattern (phase tracking) and a first-order Markov
//! chain (distribution matching). Train and validation splits come from
//! disjoint index ranges of a single generated stream.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::tensor::Tensor;
use crate::rng::{self, Stream};

/// What to synthesize. All fields are sizes or noise scales; everything else
/// is derived deterministically from the generation seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum DatasetSpec {
    /// Images whose class sets a per-channel amplitude pattern on a Gaussian
    /// bump at a random position, plus pixel noise.
    GaussianBlobs {
        classes: usize,
        channels: usize,
        height: usize,
        width: usize,
        train: usize,
        val: usize,
        noise: f64,
    },
    /// 2D points on interleaved spiral arms, encoded as 1x1 two-channel
    /// images (the stem sees them as pixels).
    Spiral { classes: usize, train: usize, val: usize, noise: f64 },
    /// A fixed random pattern of `period` distinct tokens, tiled. Next-token
    /// prediction is solvable exactly once the phase is tracked.
    RepeatingTokens { vocab: usize, period: usize, train: usize, val: usize },
    /// A first-order Markov chain with softmax-of-Gaussian transition rows;
    /// `sharpness` scales the logits (higher = more predictable).
    MarkovTokens { vocab: usize, train: usize, val: usize, sharpness: f64 },
}

impl DatasetSpec {
    /// Small image task that any non-degenerate cell learns quickly.
    pub fn default_cnn() -> DatasetSpec {
        DatasetSpec::GaussianBlobs {
            classes: 4,
            channels: 3,
            height: 8,
            width: 8,
            train: 192,
            val: 96,
            noise: 0.15,
        }
    }

    /// Small phase-tracking task for recurrent cells.
    pub fn default_rnn() -> DatasetSpec {
        DatasetSpec::RepeatingTokens { vocab: 6, period: 4, train: 512, val: 256 }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            DatasetSpec::GaussianBlobs { classes, channels, height, width, train, val, noise } => {
                if classes < 2 {
                    return Err(Error::invalid("blobs: classes must be >= 2"));
                }
                if channels == 0 || height == 0 || width == 0 {
                    return Err(Error::invalid("blobs: channels/height/width must be >= 1"));
                }
                if train == 0 || val == 0 {
                    return Err(Error::invalid("blobs: train and val must be >= 1"));
                }
                if noise.is_nan() || noise < 0.0 {
                    return Err(Error::invalid("blobs: noise must be >= 0"));
                }
            }
            DatasetSpec::Spiral { classes, train, val, noise } => {
                if classes < 2 {
                    return Err(Error::invalid("spiral: classes must be >= 2"));
                }
                if train == 0 || val == 0 {
                    return Err(Error::invalid("spiral: train and val must be >= 1"));
                }
                if noise.is_nan() || noise < 0.0 {
                    return Err(Error::invalid("spiral: noise must be >= 0"));
                }
            }
            DatasetSpec::RepeatingTokens { vocab, period, train, val } => {
                if vocab < 2 {
                    return Err(Error::invalid("repeating_tokens: vocab must be >= 2"));
                }
                if period == 0 || period > vocab {
                    // Distinct tokens keep the phase readable from one token.
                    return Err(Error::invalid(
                        "repeating_tokens: period must be in 1..=vocab",
                    ));
                }
                if train < 2 || val < 2 {
                    return Err(Error::invalid("repeating_tokens: train and val must be >= 2"));
                }
            }
            DatasetSpec::MarkovTokens { vocab, train, val, sharpness } => {
                if vocab < 2 {
                    return Err(Error::invalid("markov_tokens: vocab must be >= 2"));
                }
                if train < 2 || val < 2 {
                    return Err(Error::invalid("markov_tokens: train and val must be >= 2"));
                }
                if sharpness.is_nan() || sharpness < 0.0 {
                    return Err(Error::invalid("markov_tokens: sharpness must be >= 0"));
                }
            }
        }
        Ok(())
    }

    /// True for image tasks (CNN cells), false for token tasks (RNN cells).
    pub fn is_image(&self) -> bool {
        matches!(self, DatasetSpec::GaussianBlobs { .. } | DatasetSpec::Spiral { .. })
    }
}

/// Labeled image samples with their common geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageData {
    pub classes: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub train: Vec<(Tensor, usize)>,
    pub val: Vec<(Tensor, usize)>,
}

/// Token streams over a shared vocabulary; train and val are index-disjoint
/// halves of one generated stream.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenData {
    pub vocab: usize,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProxyData {
    Images(ImageData),
    Tokens(TokenData),
}

impl ProxyData {
    pub fn images(&self) -> Result<&ImageData> {
        match self {
            ProxyData::Images(d) => Ok(d),
            ProxyData::Tokens(_) => Err(Error::invalid("expected an image dataset")),
        }
    }

    pub fn tokens(&self) -> Result<&TokenData> {
        match self {
            ProxyData::Tokens(d) => Ok(d),
            ProxyData::Images(_) => Err(Error::invalid("expected a token dataset")),
        }
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Class `k`'s channel amplitude: a triangular bump in channel space whose
/// center moves with the class, on a 0.2 floor. Distinct classes get
/// distinct, linearly separable patterns.
fn class_amplitude(k: usize, c: usize, classes: usize, channels: usize) -> f64 {
    let center = if classes == 1 {
        0.0
    } else {
        k as f64 * (channels.max(2) - 1) as f64 / (classes - 1) as f64
    };
    0.2 + 0.8 * (1.0 - (c as f64 - center).abs()).max(0.0)
}

fn gen_blobs(
    classes: usize,
    channels: usize,
    height: usize,
    width: usize,
    count: usize,
    noise: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<(Tensor, usize)> {
    let sigma = (height.min(width) as f64 / 4.0).max(1.0);
    (0..count)
        .map(|_| {
            let k = rng.gen_range(0..classes);
            // Centers stay in the middle half so edge clipping does not
            // modulate the pooled bump mass.
            let ci = rng.gen_range(0.25 * height as f64..0.75 * height as f64);
            let cj = rng.gen_range(0.25 * width as f64..0.75 * width as f64);
            let mut data = Vec::with_capacity(channels * height * width);
            for c in 0..channels {
                let amp = class_amplitude(k, c, classes, channels);
                for i in 0..height {
                    for j in 0..width {
                        let d2 = (i as f64 - ci).powi(2) + (j as f64 - cj).powi(2);
                        let bump = (-d2 / (2.0 * sigma * sigma)).exp();
                        data.push(amp * bump + noise * normal(rng));
                    }
                }
            }
            (Tensor::new(vec![channels, height, width], data).expect("sized above"), k)
        })
        .collect()
}

fn gen_spiral(classes: usize, count: usize, noise: f64, rng: &mut ChaCha8Rng) -> Vec<(Tensor, usize)> {
    (0..count)
        .map(|_| {
            let k = rng.gen_range(0..classes);
            let t: f64 = rng.gen_range(0.2..1.0);
            let theta = 2.0 * std::f64::consts::PI * (t + k as f64 / classes as f64)
                + noise * normal(rng);
            let (x, y) = (t * theta.cos(), t * theta.sin());
            (Tensor::new(vec![2, 1, 1], vec![x, y]).expect("two channels"), k)
        })
        .collect()
}

fn gen_repeating(vocab: usize, period: usize, len: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    // Draw `period` distinct tokens (partial Fisher-Yates over the vocab).
    let mut pool: Vec<usize> = (0..vocab).collect();
    for i in 0..period {
        let j = rng.gen_range(i..vocab);
        pool.swap(i, j);
    }
    (0..len).map(|i| pool[i % period]).collect()
}

fn gen_markov(vocab: usize, len: usize, sharpness: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    // Transition rows: softmax of scaled Gaussian logits.
    let rows: Vec<Vec<f64>> = (0..vocab)
        .map(|_| {
            let logits: Vec<f64> = (0..vocab).map(|_| sharpness * normal(rng)).collect();
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            exps.iter().map(|&e| e / z).collect()
        })
        .collect();
    let mut state = rng.gen_range(0..vocab);
    (0..len)
        .map(|_| {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut next = vocab - 1;
            for (t, &p) in rows[state].iter().enumerate() {
                acc += p;
                if u < acc {
                    next = t;
                    break;
                }
            }
            state = next;
            state
        })
        .collect()
}

/// Synthesizes the dataset for `spec`. The same `(spec, seed)` pair always
/// yields bit-identical data; train/val come from disjoint stretches of one
/// generation pass.
pub fn generate(spec: &DatasetSpec, seed: u64) -> Result<ProxyData> {
    spec.validate()?;
    let mut r = rng::rng(seed, Stream::Dataset, &[]);
    Ok(match *spec {
        DatasetSpec::GaussianBlobs { classes, channels, height, width, train, val, noise } => {
            let mut all = gen_blobs(classes, channels, height, width, train + val, noise, &mut r);
            let val_part = all.split_off(train);
            ProxyData::Images(ImageData {
                classes,
                channels,
                height,
                width,
                train: all,
                val: val_part,
            })
        }
        DatasetSpec::Spiral { classes, train, val, noise } => {
            let mut all = gen_spiral(classes, train + val, noise, &mut r);
            let val_part = all.split_off(train);
            ProxyData::Images(ImageData {
                classes,
                channels: 2,
                height: 1,
                width: 1,
                train: all,
                val: val_part,
            })
        }
        DatasetSpec::RepeatingTokens { vocab, period, train, val } => {
            let mut stream = gen_repeating(vocab, period, train + val, &mut r);
            let val_part = stream.split_off(train);
            ProxyData::Tokens(TokenData { vocab, train: stream, val: val_part })
        }
        DatasetSpec::MarkovTokens { vocab, train, val, sharpness } => {
            let mut stream = gen_markov(vocab, train + val, sharpness, &mut r);
            let val_part = stream.split_off(train);
            ProxyData::Tokens(TokenData { vocab, train: stream, val: val_part })
        }
    })
}
