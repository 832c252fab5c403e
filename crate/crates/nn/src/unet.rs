//! U-Net generator with optional squeeze-and-excitation blocks.

use candle_core::{Result, Tensor};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::layers::{
    dropout, leaky_relu, se_param_count, BatchNorm2d, Conv2d, ConvT2d, Init, Pass, SqueezeExcite,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Unet,
    UnetSe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub variant: Variant,
    pub in_channels: usize,
    pub out_channels: usize,
    pub base_width: usize,
    /// Number of down (and up) stages.
    pub depth: usize,
    /// Channel cap for the deep stages.
    pub max_width: usize,
    pub dropout_p: f64,
}

/// Decoder stages (counted from the innermost) that apply dropout.
pub const DROPOUT_STAGES: usize = 3;

impl GeneratorSpec {
    pub fn new(variant: Variant, in_channels: usize, out_channels: usize) -> Self {
        Self {
            variant,
            in_channels,
            out_channels,
            base_width: 64,
            depth: 8,
            max_width: 208,
            dropout_p: 0.5,
        }
    }

    pub fn width(&self, stage: usize) -> usize {
        (self.base_width << stage).min(self.max_width)
    }

    /// Smallest input side the spec accepts; inputs must be multiples of it.
    pub fn granularity(&self) -> usize {
        1 << self.depth
    }

    /// Parameter count by arithmetic over the stage layout.
    pub fn param_count(&self) -> usize {
        let d = self.depth;
        let w = |i| self.width(i);
        let conv = |ci: usize, co: usize| ci * co * 16;
        let bn = |c: usize| 2 * c;
        let se = |c: usize| if self.variant == Variant::UnetSe { se_param_count(c) } else { 0 };
        let mut n = conv(self.in_channels, w(0)) + w(0) + se(w(0));
        for i in 1..d {
            n += conv(w(i - 1), w(i)) + se(w(i));
            n += if i == d - 1 { w(i) } else { bn(w(i)) };
        }
        for i in (1..d).rev() {
            let c_in = if i == d - 1 { w(i) } else { 2 * w(i) };
            n += conv(c_in, w(i - 1)) + bn(w(i - 1)) + se(w(i - 1));
        }
        let c_in = if d == 1 { w(0) } else { 2 * w(0) };
        n + conv(c_in, self.out_channels) + self.out_channels
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.depth == 0 || self.base_width == 0 || self.max_width < self.base_width {
            return Err(format!("degenerate generator layout {self:?}"));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err("generator needs channels".into());
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(format!("dropout {} outside [0, 1)", self.dropout_p));
        }
        Ok(())
    }
}

struct Down {
    conv: Conv2d,
    bn: Option<BatchNorm2d>,
    se: Option<SqueezeExcite>,
    act: bool,
}

struct Up {
    conv: ConvT2d,
    bn: Option<BatchNorm2d>,
    se: Option<SqueezeExcite>,
    dropout: bool,
}

pub struct Generator {
    pub spec: GeneratorSpec,
    down: Vec<Down>,
    /// Innermost stage first.
    up: Vec<Up>,
}

impl Generator {
    pub fn new(spec: GeneratorSpec, init: &mut Init) -> Result<Self> {
        let d = spec.depth;
        let se_on = spec.variant == Variant::UnetSe;
        let w = |i| spec.width(i);
        let mut down = Vec::with_capacity(d);
        for i in 0..d {
            let c_in = if i == 0 { spec.in_channels } else { w(i - 1) };
            let edge = i == 0 || i == d - 1;
            let conv = Conv2d::new(init, &format!("down{i}.conv"), c_in, w(i), 4, 2, 1, edge)?;
            let bn = if edge { None } else { Some(BatchNorm2d::new(init, &format!("down{i}.bn"), w(i))?) };
            let se = if se_on { Some(SqueezeExcite::new(init, &format!("down{i}.se"), w(i))?) } else { None };
            down.push(Down { conv, bn, se, act: i > 0 });
        }
        let mut up = Vec::with_capacity(d);
        for i in (0..d).rev() {
            let c_in = if i == d - 1 { w(i) } else { 2 * w(i) };
            let stage = if i == 0 {
                Up {
                    conv: ConvT2d::new(init, "up0.conv", c_in, spec.out_channels, 4, 2, 1, true)?,
                    bn: None,
                    se: None,
                    dropout: false,
                }
            } else {
                Up {
                    conv: ConvT2d::new(init, &format!("up{i}.conv"), c_in, w(i - 1), 4, 2, 1, false)?,
                    bn: Some(BatchNorm2d::new(init, &format!("up{i}.bn"), w(i - 1))?),
                    se: if se_on { Some(SqueezeExcite::new(init, &format!("up{i}.se"), w(i - 1))?) } else { None },
                    dropout: i + DROPOUT_STAGES >= d,
                }
            };
            up.push(stage);
        }
        Ok(Self { spec, down, up })
    }

    /// Maps `[0,1]` inputs of shape `(n, in, h, w)` to `[0,1]` outputs.
    pub fn forward(&self, x: &Tensor, pass: Pass, rng: &mut ChaCha8Rng) -> Result<Tensor> {
        let (_, c, h, w) = x.dims4()?;
        let g = self.spec.granularity();
        if c != self.spec.in_channels || h % g != 0 || w % g != 0 || h == 0 || w == 0 {
            return Err(candle_core::Error::Msg(format!(
                "generator expects {} channels with sides divisible by {g}, got {c}x{h}x{w}",
                self.spec.in_channels
            )));
        }
        let mut x = ((x * 2.0)? - 1.0)?;
        let mut skips = Vec::with_capacity(self.down.len());
        for stage in &self.down {
            if stage.act {
                x = leaky_relu(&x, 0.2)?;
            }
            x = stage.conv.forward(&x)?;
            if let Some(bn) = &stage.bn {
                x = bn.forward(&x, pass)?;
            }
            if let Some(se) = &stage.se {
                x = se.forward(&x)?;
            }
            skips.push(x.clone());
        }
        skips.pop();
        for stage in &self.up {
            x = stage.conv.forward(&x.relu()?)?;
            if let Some(bn) = &stage.bn {
                x = bn.forward(&x, pass)?;
            }
            if stage.dropout && pass.dropout {
                x = dropout(&x, self.spec.dropout_p, rng)?;
            }
            if let Some(se) = &stage.se {
                x = se.forward(&x)?;
            }
            if let Some(skip) = skips.pop() {
                x = Tensor::cat(&[&x, &skip], 1)?;
            }
        }
        (x.tanh()? + 1.0)? * 0.5
    }
}
