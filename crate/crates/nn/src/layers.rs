//! Convolution, normalisation and attention layers over candle `Var`s, with
//! initialisation and dropout driven by our own seeded generator.

use std::collections::BTreeMap;

use candle_core::{DType, Device, Result, Tensor, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

/// How a forward pass treats batch statistics and dropout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pass {
    /// Normalise with batch statistics instead of running averages.
    pub batch_stats: bool,
    /// Fold batch statistics into the running averages.
    pub update_stats: bool,
    pub dropout: bool,
}

impl Pass {
    pub const TRAIN: Pass = Pass {
        batch_stats: true,
        update_stats: true,
        dropout: true,
    };
    /// Training pass that leaves running statistics alone.
    pub const TRAIN_FROZEN: Pass = Pass {
        batch_stats: true,
        update_stats: false,
        dropout: true,
    };
    /// Inference with dropout kept on as a noise source.
    pub const SAMPLE: Pass = Pass {
        batch_stats: false,
        update_stats: false,
        dropout: true,
    };
    pub const EVAL: Pass = Pass {
        batch_stats: false,
        update_stats: false,
        dropout: false,
    };
}

/// Named trainable variables plus non-trainable buffers.
#[derive(Debug, Clone, Default)]
pub struct Params {
    pub vars: BTreeMap<String, Var>,
    pub buffers: BTreeMap<String, Var>,
}

impl Params {
    pub fn trainable(&self) -> Vec<Var> {
        self.vars.values().cloned().collect()
    }

    pub fn count(&self) -> usize {
        self.vars.values().map(|v| v.elem_count()).sum()
    }

    /// Every tensor, buffers included, by name.
    pub fn all(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter().chain(self.buffers.iter())
    }

    /// SHA-256 over names and values of the trainable variables.
    pub fn hash(&self) -> Result<String> {
        hash_vars(self.vars.iter())
    }

    /// SHA-256 over buffers only.
    pub fn buffer_hash(&self) -> Result<String> {
        hash_vars(self.buffers.iter())
    }

    fn extend_prefixed(&mut self, prefix: &str, other: Params) {
        for (k, v) in other.vars {
            self.vars.insert(format!("{prefix}.{k}"), v);
        }
        for (k, v) in other.buffers {
            self.buffers.insert(format!("{prefix}.{k}"), v);
        }
    }
}

fn hash_vars<'a>(it: impl Iterator<Item = (&'a String, &'a Var)>) -> Result<String> {
    let mut h = Sha256::new();
    for (name, v) in it {
        h.update(name.as_bytes());
        for x in v.as_tensor().flatten_all()?.to_dtype(DType::F64)?.to_vec1::<f64>()? {
            h.update(x.to_le_bytes());
        }
    }
    Ok(hex::encode(h.finalize()))
}

/// Creates variables under a name prefix, drawing initial values from a
/// seeded generator.
pub struct Init {
    rng: ChaCha8Rng,
    pub dtype: DType,
    pub device: Device,
    params: Params,
    prefix: Vec<String>,
}

impl Init {
    pub fn new(rng: ChaCha8Rng, dtype: DType, device: Device) -> Self {
        Self {
            rng,
            dtype,
            device,
            params: Params::default(),
            prefix: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>) {
        self.prefix.push(name.into());
    }

    pub fn pop(&mut self) {
        self.prefix.pop();
    }

    fn key(&self, name: &str) -> String {
        let mut parts = self.prefix.clone();
        parts.push(name.to_string());
        parts.join(".")
    }

    fn tensor(&self, values: Vec<f64>, shape: &[usize]) -> Result<Tensor> {
        Tensor::from_vec(values, shape, &self.device)?.to_dtype(self.dtype)
    }

    pub fn normal(&mut self, name: &str, shape: &[usize], mean: f64, std: f64) -> Result<Var> {
        let n: usize = shape.iter().product();
        let dist = Normal::new(mean, std).expect("finite std");
        let values = (0..n).map(|_| dist.sample(&mut self.rng)).collect();
        let v = Var::from_tensor(&self.tensor(values, shape)?)?;
        self.params.vars.insert(self.key(name), v.clone());
        Ok(v)
    }

    pub fn constant(&mut self, name: &str, shape: &[usize], value: f64) -> Result<Var> {
        let v = Var::from_tensor(&self.tensor(vec![value; shape.iter().product()], shape)?)?;
        self.params.vars.insert(self.key(name), v.clone());
        Ok(v)
    }

    pub fn buffer(&mut self, name: &str, shape: &[usize], value: f64) -> Result<Var> {
        let v = Var::from_tensor(&self.tensor(vec![value; shape.iter().product()], shape)?)?;
        self.params.buffers.insert(self.key(name), v.clone());
        Ok(v)
    }

    pub fn finish(self) -> Params {
        self.params
    }

    /// Moves the variables of `other` under `prefix`.
    pub fn merge(target: &mut Params, prefix: &str, other: Params) {
        target.extend_prefixed(prefix, other);
    }
}

const WEIGHT_STD: f64 = 0.02;

fn channel_view(v: &Var) -> Result<Tensor> {
    let c = v.elem_count();
    v.as_tensor().reshape((1, c, 1, 1))
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: Var,
    pub bias: Option<Var>,
    pub stride: usize,
    pub padding: usize,
}

impl Conv2d {
    pub fn new(init: &mut Init, name: &str, c_in: usize, c_out: usize, k: usize, stride: usize, padding: usize, bias: bool) -> Result<Self> {
        init.push(name);
        let weight = init.normal("weight", &[c_out, c_in, k, k], 0.0, WEIGHT_STD)?;
        let bias = if bias { Some(init.constant("bias", &[c_out], 0.0)?) } else { None };
        init.pop();
        Ok(Self {
            weight,
            bias,
            stride,
            padding,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = crate::patch::conv2d(x, self.weight.as_tensor(), self.stride, self.padding)?;
        match &self.bias {
            Some(b) => y.broadcast_add(&channel_view(b)?),
            None => Ok(y),
        }
    }
}

/// Transposed convolution; kernel layout `(c_in, c_out, k, k)`.
#[derive(Debug, Clone)]
pub struct ConvT2d {
    pub weight: Var,
    pub bias: Option<Var>,
    pub stride: usize,
    pub padding: usize,
}

impl ConvT2d {
    pub fn new(init: &mut Init, name: &str, c_in: usize, c_out: usize, k: usize, stride: usize, padding: usize, bias: bool) -> Result<Self> {
        init.push(name);
        let weight = init.normal("weight", &[c_in, c_out, k, k], 0.0, WEIGHT_STD)?;
        let bias = if bias { Some(init.constant("bias", &[c_out], 0.0)?) } else { None };
        init.pop();
        Ok(Self {
            weight,
            bias,
            stride,
            padding,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = crate::patch::conv_transpose2d(x, self.weight.as_tensor(), self.stride, self.padding)?;
        match &self.bias {
            Some(b) => y.broadcast_add(&channel_view(b)?),
            None => Ok(y),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    pub gamma: Var,
    pub beta: Var,
    pub running_mean: Var,
    pub running_var: Var,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNorm2d {
    pub fn new(init: &mut Init, name: &str, c: usize) -> Result<Self> {
        init.push(name);
        let gamma = init.normal("weight", &[c], 1.0, WEIGHT_STD)?;
        let beta = init.constant("bias", &[c], 0.0)?;
        let running_mean = init.buffer("running_mean", &[c], 0.0)?;
        let running_var = init.buffer("running_var", &[c], 1.0)?;
        init.pop();
        Ok(Self {
            gamma,
            beta,
            running_mean,
            running_var,
            momentum: 0.1,
            eps: 1e-5,
        })
    }

    pub fn forward(&self, x: &Tensor, pass: Pass) -> Result<Tensor> {
        let (n, c, h, w) = x.dims4()?;
        let (mean, var) = if pass.batch_stats {
            let flat = x.transpose(0, 1)?.reshape((c, n * h * w))?;
            let mean = flat.mean_keepdim(1)?;
            let var = flat.broadcast_sub(&mean)?.sqr()?.mean_keepdim(1)?;
            if pass.update_stats {
                let m = self.momentum;
                let count = (n * h * w) as f64;
                let unbiased = if count > 1.0 { (var.detach() * (count / (count - 1.0)))? } else { var.detach() };
                let rm = ((self.running_mean.as_tensor() * (1.0 - m))? + (mean.detach().flatten_all()? * m)?)?;
                let rv = ((self.running_var.as_tensor() * (1.0 - m))? + (unbiased.flatten_all()? * m)?)?;
                self.running_mean.set(&rm)?;
                self.running_var.set(&rv)?;
            }
            (mean.reshape((1, c, 1, 1))?, var.reshape((1, c, 1, 1))?)
        } else {
            (channel_view(&self.running_mean)?, channel_view(&self.running_var)?)
        };
        let xhat = x.broadcast_sub(&mean)?.broadcast_div(&(var + self.eps)?.sqrt()?)?;
        xhat.broadcast_mul(&channel_view(&self.gamma)?)?
            .broadcast_add(&channel_view(&self.beta)?)
    }
}

/// Squeeze-and-excitation channel gating.
#[derive(Debug, Clone)]
pub struct SqueezeExcite {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

pub const SE_REDUCTION: usize = 16;

pub fn se_hidden(c: usize) -> usize {
    (c / SE_REDUCTION).max(1)
}

/// Parameters of one SE block on `c` channels.
pub fn se_param_count(c: usize) -> usize {
    let r = se_hidden(c);
    c * r + r + r * c + c
}

impl SqueezeExcite {
    pub fn new(init: &mut Init, name: &str, c: usize) -> Result<Self> {
        let r = se_hidden(c);
        init.push(name);
        let w1 = init.normal("fc1.weight", &[r, c], 0.0, WEIGHT_STD)?;
        let b1 = init.constant("fc1.bias", &[r], 0.0)?;
        let w2 = init.normal("fc2.weight", &[c, r], 0.0, WEIGHT_STD)?;
        let b2 = init.constant("fc2.bias", &[c], 0.0)?;
        init.pop();
        Ok(Self { w1, b1, w2, b2 })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (n, c, _, _) = x.dims4()?;
        let z = x.mean_keepdim(3)?.mean_keepdim(2)?.reshape((n, c))?;
        let h = z
            .matmul(&self.w1.as_tensor().t()?)?
            .broadcast_add(self.b1.as_tensor())?
            .relu()?;
        let g = sigmoid(
            &h.matmul(&self.w2.as_tensor().t()?)?
                .broadcast_add(self.b2.as_tensor())?,
        )?;
        x.broadcast_mul(&g.reshape((n, c, 1, 1))?)
    }
}

pub fn sigmoid(x: &Tensor) -> Result<Tensor> {
    (x.neg()?.exp()? + 1.0)?.recip()
}

pub fn leaky_relu(x: &Tensor, slope: f64) -> Result<Tensor> {
    let zeros = x.zeros_like()?;
    x.maximum(&zeros)? + (x.minimum(&zeros)? * slope)?
}

/// Inverted dropout with a mask drawn from `rng`.
pub fn dropout(x: &Tensor, p: f64, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    if p <= 0.0 {
        return Ok(x.clone());
    }
    let keep = 1.0 / (1.0 - p);
    let mask: Vec<f64> = (0..x.elem_count())
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
        .collect();
    let mask = Tensor::from_vec(mask, x.shape(), x.device())?.to_dtype(x.dtype())?;
    x.mul(&mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn init() -> Init {
        Init::new(ChaCha8Rng::seed_from_u64(0), DType::F64, Device::Cpu)
    }

    #[test]
    fn conv_shapes_and_names() {
        let mut i = init();
        let c = Conv2d::new(&mut i, "c", 3, 5, 4, 2, 1, true).unwrap();
        let t = ConvT2d::new(&mut i, "t", 5, 2, 4, 2, 1, false).unwrap();
        let x = Tensor::zeros((2, 3, 8, 8), DType::F64, &Device::Cpu).unwrap();
        let y = c.forward(&x).unwrap();
        assert_eq!(y.dims(), &[2, 5, 4, 4]);
        assert_eq!(t.forward(&y).unwrap().dims(), &[2, 2, 8, 8]);
        let p = i.finish();
        let names: Vec<_> = p.vars.keys().cloned().collect();
        assert_eq!(names, vec!["c.bias", "c.weight", "t.weight"]);
        assert_eq!(p.count(), 5 + 5 * 3 * 16 + 5 * 2 * 16);
    }

    #[test]
    fn batch_norm_normalises_and_tracks() {
        let mut i = init();
        let bn = BatchNorm2d::new(&mut i, "bn", 1).unwrap();
        bn.gamma.set(&Tensor::new(&[1.0f64], &Device::Cpu).unwrap()).unwrap();
        let x = Tensor::new(&[1.0f64, 2.0, 3.0, 4.0], &Device::Cpu).unwrap().reshape((4, 1, 1, 1)).unwrap();
        let y = bn.forward(&x, Pass::TRAIN).unwrap().flatten_all().unwrap().to_vec1::<f64>().unwrap();
        let mean: f64 = y.iter().sum::<f64>() / 4.0;
        let var: f64 = y.iter().map(|v| v * v).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-4);
        let rm = bn.running_mean.as_tensor().to_vec1::<f64>().unwrap()[0];
        let rv = bn.running_var.as_tensor().to_vec1::<f64>().unwrap()[0];
        assert!((rm - 0.25).abs() < 1e-12);
        // unbiased variance of 1..4 is 5/3
        assert!((rv - (0.9 + 0.1 * 5.0 / 3.0)).abs() < 1e-12);
        let before = i.finish().buffer_hash().unwrap();
        bn.forward(&x, Pass::TRAIN_FROZEN).unwrap();
        let mut j = Params::default();
        j.buffers.insert("bn.running_mean".into(), bn.running_mean.clone());
        j.buffers.insert("bn.running_var".into(), bn.running_var.clone());
        assert_eq!(before, j.buffer_hash().unwrap());
    }

    #[test]
    fn se_param_formula() {
        let mut i = init();
        SqueezeExcite::new(&mut i, "se", 64).unwrap();
        assert_eq!(i.finish().count(), se_param_count(64));
        assert_eq!(se_hidden(8), 1);
    }

    #[test]
    fn dropout_is_seeded() {
        let x = Tensor::ones((1, 1, 16, 16), DType::F32, &Device::Cpu).unwrap();
        let a = dropout(&x, 0.5, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = dropout(&x, 0.5, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let va = a.flatten_all().unwrap().to_vec1::<f32>().unwrap();
        assert_eq!(va, b.flatten_all().unwrap().to_vec1::<f32>().unwrap());
        assert!(va.iter().all(|v| *v == 0.0 || *v == 2.0));
        assert!(va.contains(&0.0));
    }
}
