//! Small CNN that predicts the solid count of a sketch; the default
//! classifier behind the inception score.

use std::collections::HashMap;
use std::path::Path;

use candle_core::{DType, Device, Result, Tensor, D};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use rand::seq::SliceRandom;
use safetensors::tensor::{Dtype, TensorView};
use safetensors::SafeTensors;
use shad3s_core::metrics::Classifier;
use shad3s_core::raster::GrayImage;

use crate::bundle::stream;
use crate::checkpoint::CheckpointError;
use crate::layers::{leaky_relu, Conv2d, Init, Params};

pub const CLASSIFIER_SIDE: usize = 64;
const WIDTHS: [usize; 4] = [16, 32, 64, 64];

pub struct SketchClassifier {
    pub classes: usize,
    convs: Vec<Conv2d>,
    fc_w: candle_core::Var,
    fc_b: candle_core::Var,
    pub params: Params,
}

/// Training settings for [`SketchClassifier::fit`].
#[derive(Debug, Clone, Copy)]
pub struct ClassifierConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 16,
            lr: 1e-3,
            seed: 0,
        }
    }
}

fn prepare(images: &[&GrayImage]) -> Result<Tensor> {
    let n = CLASSIFIER_SIDE;
    let mut data = Vec::with_capacity(images.len() * n * n);
    for img in images {
        if img.width == n && img.height == n {
            data.extend_from_slice(&img.data);
        } else {
            data.extend(img.resize(n, n, true).data);
        }
    }
    (Tensor::from_vec(data, (images.len(), 1, n, n), &Device::Cpu)? * 2.0)? - 1.0
}

/// Mirrors a prepared batch left to right; the solid count is unchanged.
fn mirror(x: &Tensor) -> Result<Tensor> {
    let n = x.dim(D::Minus1)?;
    let idx = Tensor::from_vec((0..n as u32).rev().collect::<Vec<_>>(), n, x.device())?;
    x.index_select(&idx, 3)
}

impl SketchClassifier {
    pub fn new(classes: usize, seed: u64) -> Result<Self> {
        let mut init = Init::new(stream(seed, 0), DType::F32, Device::Cpu);
        let mut convs = Vec::new();
        let mut c_in = 1;
        for (i, &c) in WIDTHS.iter().enumerate() {
            convs.push(Conv2d::new(&mut init, &format!("conv{i}"), c_in, c, 4, 2, 1, true)?);
            c_in = c;
        }
        // Wider init than the generator: the net is shallow and has no norm layers.
        let fc_w = init.normal("fc.weight", &[classes, c_in], 0.0, 0.1)?;
        let fc_b = init.constant("fc.bias", &[classes], 0.0)?;
        for conv in &convs {
            let fan_in = conv.weight.dims()[1..].iter().product::<usize>() as f64;
            let scaled = (conv.weight.as_tensor() * ((2.0 / fan_in).sqrt() / 0.02))?;
            conv.weight.set(&scaled)?;
        }
        Ok(Self {
            classes,
            convs,
            fc_w,
            fc_b,
            params: init.finish(),
        })
    }

    pub fn logits(&self, x: &Tensor) -> Result<Tensor> {
        let mut x = x.clone();
        for conv in &self.convs {
            x = leaky_relu(&conv.forward(&x)?, 0.2)?;
        }
        let pooled = x.mean(D::Minus1)?.mean(D::Minus1)?;
        pooled.matmul(&self.fc_w.as_tensor().t()?)?.broadcast_add(self.fc_b.as_tensor())
    }

    /// Trains on `(image, class index)` pairs; returns the final epoch's mean loss.
    pub fn fit(&mut self, data: &[(GrayImage, usize)], cfg: &ClassifierConfig) -> Result<f64> {
        if data.is_empty() {
            return Err(candle_core::Error::Msg("no classifier training data".into()));
        }
        if let Some((_, c)) = data.iter().find(|(_, c)| *c >= self.classes) {
            return Err(candle_core::Error::Msg(format!("label {c} >= {} classes", self.classes)));
        }
        let mut opt = AdamW::new(
            self.params.trainable(),
            ParamsAdamW {
                lr: cfg.lr,
                weight_decay: 0.0,
                ..ParamsAdamW::default()
            },
        )?;
        let prepared: Vec<Tensor> = data
            .iter()
            .map(|(img, _)| prepare(&[img]))
            .collect::<Result<_>>()?;
        let mut last = 0.0;
        for epoch in 0..cfg.epochs {
            let mut order: Vec<usize> = (0..data.len()).collect();
            order.shuffle(&mut stream(cfg.seed, 100 + epoch as u64));
            let (mut sum, mut n) = (0.0, 0);
            for (b, chunk) in order.chunks(cfg.batch_size.max(1)).enumerate() {
                let mut x = Tensor::cat(&chunk.iter().map(|i| &prepared[*i]).collect::<Vec<_>>(), 0)?;
                if (b + epoch) % 2 == 1 {
                    x = mirror(&x)?;
                }
                let y = Tensor::from_vec(chunk.iter().map(|i| data[*i].1 as u32).collect::<Vec<_>>(), chunk.len(), &Device::Cpu)?;
                let loss = candle_nn::loss::cross_entropy(&self.logits(&x)?, &y)?;
                opt.backward_step(&loss)?;
                sum += loss.to_scalar::<f32>()? as f64;
                n += 1;
            }
            last = sum / n as f64;
        }
        Ok(last)
    }

    pub fn probabilities(&self, images: &[GrayImage]) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(images.len());
        for chunk in images.chunks(64) {
            let x = prepare(&chunk.iter().collect::<Vec<_>>())?;
            let p = candle_nn::ops::softmax(&self.logits(&x)?.to_dtype(DType::F64)?, D::Minus1)?;
            out.extend(p.to_vec2::<f64>()?);
        }
        Ok(out)
    }

    /// Fraction of `data` whose arg-max class matches the label.
    pub fn accuracy(&self, data: &[(GrayImage, usize)]) -> Result<f64> {
        let images: Vec<GrayImage> = data.iter().map(|(i, _)| i.clone()).collect();
        let probs = self.probabilities(&images)?;
        let hits = probs
            .iter()
            .zip(data)
            .filter(|(p, (_, label))| {
                p.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i) == Some(*label)
            })
            .count();
        Ok(hits as f64 / data.len().max(1) as f64)
    }

    pub fn to_bytes(&self) -> std::result::Result<Vec<u8>, CheckpointError> {
        let raw: Vec<(String, Vec<usize>, Vec<u8>)> = self
            .params
            .vars
            .iter()
            .map(|(k, v)| {
                let vals = v.as_tensor().flatten_all()?.to_vec1::<f32>()?;
                Ok((k.clone(), v.dims().to_vec(), vals.iter().flat_map(|x| x.to_le_bytes()).collect()))
            })
            .collect::<Result<_>>()?;
        let views = raw
            .iter()
            .map(|(n, s, b)| Ok((n.as_str(), TensorView::new(Dtype::F32, s.clone(), b)?)))
            .collect::<std::result::Result<Vec<_>, safetensors::SafeTensorError>>()?;
        let meta = HashMap::from([
            ("format".to_string(), "shad3s-classifier".to_string()),
            ("classes".to_string(), self.classes.to_string()),
        ]);
        Ok(safetensors::serialize(views, Some(meta))?)
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, CheckpointError> {
        let (_, meta) = SafeTensors::read_metadata(bytes)?;
        let info = meta.metadata().clone().unwrap_or_default();
        if info.get("format").map(String::as_str) != Some("shad3s-classifier") {
            return Err(CheckpointError::Format("not a classifier checkpoint".into()));
        }
        let classes: usize = info
            .get("classes")
            .and_then(|c| c.parse().ok())
            .ok_or_else(|| CheckpointError::Format("missing class count".into()))?;
        let model = Self::new(classes, 0)?;
        let stored = candle_core::safetensors::load_buffer(bytes, &Device::Cpu)?;
        for (name, var) in &model.params.vars {
            let t = stored.get(name).ok_or_else(|| CheckpointError::Tensor {
                name: name.clone(),
                problem: "missing".into(),
            })?;
            if t.dims() != var.dims() {
                return Err(CheckpointError::Tensor {
                    name: name.clone(),
                    problem: format!("shape {:?}", t.dims()),
                });
            }
            var.set(t)?;
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> std::result::Result<(), CheckpointError> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> std::result::Result<Self, CheckpointError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

impl Classifier for SketchClassifier {
    fn num_classes(&self) -> usize {
        self.classes
    }

    fn predict_proba(&self, images: &[GrayImage]) -> Vec<Vec<f64>> {
        self.probabilities(images).expect("classifier forward on CPU tensors")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bars(class: usize, shift: usize) -> GrayImage {
        // Class c: c+1 dark vertical bars.
        GrayImage::from_fn(64, 64, |x, _| {
            let bar = (x + shift) / 8;
            if bar % 2 == 1 && bar / 2 <= class {
                0.0
            } else {
                1.0
            }
        })
    }

    #[test]
    fn mirror_reverses_columns() {
        let x = Tensor::arange(0f32, 6.0, &Device::Cpu).unwrap().reshape((1, 1, 2, 3)).unwrap();
        let m = mirror(&x).unwrap().flatten_all().unwrap().to_vec1::<f32>().unwrap();
        assert_eq!(m, vec![2.0, 1.0, 0.0, 5.0, 4.0, 3.0]);
    }

    #[test]
    fn learns_a_separable_toy_problem() {
        let data: Vec<(GrayImage, usize)> = (0..60).map(|i| (bars(i % 3, i % 4), i % 3)).collect();
        let mut c = SketchClassifier::new(3, 1).unwrap();
        c.fit(
            &data,
            &ClassifierConfig {
                epochs: 30,
                ..ClassifierConfig::default()
            },
        )
        .unwrap();
        assert!(c.accuracy(&data).unwrap() > 0.9);
        let p = c.predict_proba(&[bars(0, 0)]);
        assert!((p[0].iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let back = SketchClassifier::from_bytes(&c.to_bytes().unwrap()).unwrap();
        assert_eq!(back.predict_proba(&[bars(2, 1)]), c.predict_proba(&[bars(2, 1)]));
    }
}
