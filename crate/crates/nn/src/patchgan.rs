//! Conditional PatchGAN discriminator.

use candle_core::{Result, Tensor};
use serde::{Deserialize, Serialize};

use crate::layers::{leaky_relu, sigmoid, BatchNorm2d, Conv2d, Init, Pass};

/// Scores are clamped into `[SCORE_EPS, 1 - SCORE_EPS]`.
pub const SCORE_EPS: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorSpec {
    /// Condition channels plus candidate channels.
    pub in_channels: usize,
    pub base_width: usize,
    /// Stride-2 stages before the two stride-1 stages.
    pub n_down: usize,
}

impl DiscriminatorSpec {
    pub fn new(in_channels: usize) -> Self {
        Self {
            in_channels,
            base_width: 64,
            n_down: 3,
        }
    }

    fn widths(&self) -> Vec<usize> {
        let cap = self.base_width * 8;
        (0..=self.n_down).map(|i| (self.base_width << i).min(cap)).collect()
    }

    /// (kernel, stride) of every conv, input to output.
    pub fn layers(&self) -> Vec<(usize, usize)> {
        let mut l = vec![(4, 2); self.n_down];
        l.extend([(4, 1), (4, 1)]);
        l
    }

    /// Receptive field of one score cell in input pixels.
    pub fn patch_size(&self) -> usize {
        self.layers().iter().rev().fold(1, |rf, (k, s)| (rf - 1) * s + k)
    }

    /// Score map side for a square input of side `n`.
    pub fn score_side(&self, n: usize) -> usize {
        self.layers().iter().fold(n as i64, |n, (k, s)| (n + 2 - *k as i64) / *s as i64 + 1).max(0) as usize
    }

    pub fn param_count(&self) -> usize {
        let w = self.widths();
        let mut n = self.in_channels * w[0] * 16 + w[0];
        for i in 1..w.len() {
            n += w[i - 1] * w[i] * 16 + 2 * w[i];
        }
        n + w[self.n_down] * 16 + 1
    }
}

struct Stage {
    conv: Conv2d,
    bn: Option<BatchNorm2d>,
}

pub struct Discriminator {
    pub spec: DiscriminatorSpec,
    stages: Vec<Stage>,
    head: Conv2d,
}

impl Discriminator {
    pub fn new(spec: DiscriminatorSpec, init: &mut Init) -> Result<Self> {
        let w = spec.widths();
        let strides = spec.layers();
        let mut stages = Vec::with_capacity(w.len());
        for (i, &c) in w.iter().enumerate() {
            let c_in = if i == 0 { spec.in_channels } else { w[i - 1] };
            let conv = Conv2d::new(init, &format!("l{i}.conv"), c_in, c, 4, strides[i].1, 1, i == 0)?;
            let bn = if i == 0 { None } else { Some(BatchNorm2d::new(init, &format!("l{i}.bn"), c)?) };
            stages.push(Stage { conv, bn });
        }
        let head = Conv2d::new(init, "head", w[spec.n_down], 1, 4, 1, 1, true)?;
        Ok(Self { spec, stages, head })
    }

    /// Raw logits `(n, 1, s, s)` for the concatenation of condition and candidate.
    pub fn logits(&self, condition: &Tensor, candidate: &Tensor, pass: Pass) -> Result<Tensor> {
        let x = Tensor::cat(&[condition, candidate], 1)?;
        let c = x.dim(1)?;
        if c != self.spec.in_channels {
            return Err(candle_core::Error::Msg(format!(
                "discriminator expects {} channels, got {c}",
                self.spec.in_channels
            )));
        }
        let mut x = ((x * 2.0)? - 1.0)?;
        for s in &self.stages {
            x = s.conv.forward(&x)?;
            if let Some(bn) = &s.bn {
                x = bn.forward(&x, pass)?;
            }
            x = leaky_relu(&x, 0.2)?;
        }
        self.head.forward(&x)
    }

    /// Per-patch probabilities of being real, clamped away from 0 and 1.
    pub fn forward(&self, condition: &Tensor, candidate: &Tensor, pass: Pass) -> Result<Tensor> {
        sigmoid(&self.logits(condition, candidate, pass)?)?.clamp(SCORE_EPS, 1.0 - SCORE_EPS)
    }
}
