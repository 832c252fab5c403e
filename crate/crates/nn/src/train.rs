//! Alternating adversarial training for both bundle kinds.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use candle_core::{DType, Tensor};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bundle::{stream, Bundle, ModelKind};
use crate::checkpoint::{self, CheckpointError};
use crate::data::{Batch, Sample};
use crate::layers::Pass;
use crate::loss::{adversarial, generator_adversarial, l1, scalar};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("empty training set")]
    EmptyData,
    #[error("invalid config: {0}")]
    Config(String),
    #[error("generator L1 became non-finite at epoch {epoch}, step {step}")]
    Diverged { epoch: usize, step: usize },
    #[error(transparent)]
    Candle(#[from] candle_core::Error),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Weight of the generator's adversarial term.
    pub adv_weight: f64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Split kind: feed ground-truth masks to the second stage.
    pub teacher_forcing: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            adv_weight: 0.01,
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            batch_size: 4,
            epochs: 20,
            teacher_forcing: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.adv_weight >= 0.0) {
            return Err(TrainError::Config(format!("adversarial weight {} < 0", self.adv_weight)));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch size must be at least 1".into()));
        }
        if !(self.lr >= 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(TrainError::Config("optimiser settings out of range".into()));
        }
        Ok(())
    }
}

/// One line of the metrics log. Epoch 0 is the state before training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub epoch: usize,
    pub step: usize,
    pub d_loss: Option<f64>,
    pub g_adv: Option<f64>,
    pub g_l1: Option<f64>,
    pub val_l1: Option<f64>,
    /// Mean real-vs-fake accuracy of the discriminator(s) over the epoch.
    pub d_acc: Option<f64>,
}

/// Generator outputs of one step, still attached to the graph.
pub struct Generated {
    pub masks: Option<Tensor>,
    pub sketch: Tensor,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub d_loss: f64,
    pub d_acc: f64,
    pub g_adv: f64,
    pub g_l1: f64,
}

pub struct Trainer {
    pub bundle: Bundle,
    pub cfg: TrainConfig,
    opt_g: AdamW,
    opt_d: AdamW,
    noise: ChaCha8Rng,
    pub step: usize,
}

fn fraction(scores: &Tensor, real: bool) -> candle_core::Result<(f64, usize)> {
    let v = scores.to_dtype(DType::F64)?.flatten_all()?.to_vec1::<f64>()?;
    let hits = v.iter().filter(|s| if real { **s > 0.5 } else { **s < 0.5 }).count();
    Ok((hits as f64, v.len()))
}

impl Trainer {
    pub fn new(bundle: Bundle, cfg: TrainConfig) -> Result<Self, TrainError> {
        cfg.validate()?;
        let params = ParamsAdamW {
            lr: cfg.lr,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: 1e-8,
            weight_decay: 0.0,
        };
        let opt_g = AdamW::new(bundle.gen_params.trainable(), params.clone())?;
        let opt_d = AdamW::new(bundle.disc_params.trainable(), params)?;
        let noise = stream(cfg.seed, 1000);
        Ok(Self {
            bundle,
            cfg,
            opt_g,
            opt_d,
            noise,
            step: 0,
        })
    }

    /// Training-mode generator forward; updates generator batch statistics.
    pub fn generate(&mut self, batch: &Batch) -> Result<Generated, TrainError> {
        Ok(match self.bundle.kind() {
            ModelKind::Direct => Generated {
                masks: None,
                sketch: self.bundle.forward_direct(&batch.inputs, Pass::TRAIN, &mut self.noise)?,
            },
            ModelKind::Split => {
                let teacher = self.cfg.teacher_forcing.then_some(&batch.masks);
                let out = self.bundle.forward_split(&batch.inputs, teacher, Pass::TRAIN, &mut self.noise)?;
                Generated {
                    masks: Some(out.masks),
                    sketch: out.sketch,
                }
            }
        })
    }

    /// (condition, real, fake) triples per discriminator.
    fn pairs(&self, batch: &Batch, g: &Generated, detach: bool) -> candle_core::Result<Vec<(Tensor, Tensor, Tensor)>> {
        let d = |t: &Tensor| if detach { t.detach() } else { t.clone() };
        Ok(match self.bundle.kind() {
            ModelKind::Direct => vec![(batch.inputs.full()?, batch.sketch.clone(), d(&g.sketch))],
            ModelKind::Split => {
                let masks = g.masks.as_ref().expect("split output has masks");
                vec![
                    (batch.inputs.sketch_condition()?, batch.masks.clone(), d(masks)),
                    (
                        Tensor::cat(&[&batch.masks, &batch.inputs.textures], 1)?,
                        batch.sketch.clone(),
                        d(&g.sketch),
                    ),
                ]
            }
        })
    }

    /// One discriminator update. Returns (d_loss, accuracy before the update).
    pub fn d_step(&mut self, batch: &Batch, g: &Generated) -> Result<(f64, f64), TrainError> {
        let mut objective: Option<Tensor> = None;
        let (mut hits, mut cells) = (0.0, 0);
        for (i, (cond, real, fake)) in self.pairs(batch, g, true)?.into_iter().enumerate() {
            let sr = self.bundle.discriminate(i, &cond, &real, Pass::TRAIN)?;
            let sf = self.bundle.discriminate(i, &cond, &fake, Pass::TRAIN)?;
            for (s, is_real) in [(&sr, true), (&sf, false)] {
                let (h, n) = fraction(s, is_real)?;
                hits += h;
                cells += n;
            }
            let o = adversarial(&sr, &sf)?.objective;
            objective = Some(match objective {
                Some(acc) => (acc + o)?,
                None => o,
            });
        }
        let d_loss = objective.expect("at least one discriminator").neg()?;
        self.opt_d.backward_step(&d_loss)?;
        Ok((scalar(&d_loss)?, hits / cells as f64))
    }

    /// One generator update on `L1 + adv_weight * adversarial`. Returns
    /// (adversarial term, L1 term).
    pub fn g_step(&mut self, batch: &Batch, g: &Generated) -> Result<(f64, f64), TrainError> {
        let mut adv: Option<Tensor> = None;
        for (i, (cond, _, fake)) in self.pairs(batch, g, false)?.into_iter().enumerate() {
            let sf = self.bundle.discriminate(i, &cond, &fake, Pass::TRAIN_FROZEN)?;
            let a = generator_adversarial(&sf)?;
            adv = Some(match adv {
                Some(acc) => (acc + a)?,
                None => a,
            });
        }
        let adv = adv.expect("at least one discriminator");
        let mut rec = l1(&batch.sketch, &g.sketch)?;
        if let Some(m) = &g.masks {
            rec = (rec + l1(&batch.masks, m)?)?;
        }
        let g_l1 = scalar(&rec)?;
        if !g_l1.is_finite() {
            return Err(TrainError::Diverged {
                epoch: 0,
                step: self.step,
            });
        }
        let total = (rec + (&adv * self.cfg.adv_weight)?)?;
        self.opt_g.backward_step(&total)?;
        Ok((scalar(&adv)?, g_l1))
    }

    pub fn train_step(&mut self, batch: &Batch) -> Result<StepStats, TrainError> {
        let g = self.generate(batch)?;
        let (d_loss, d_acc) = self.d_step(batch, &g)?;
        let (g_adv, g_l1) = self.g_step(batch, &g)?;
        self.step += 1;
        Ok(StepStats {
            d_loss,
            d_acc,
            g_adv,
            g_l1,
        })
    }

    /// Mean sketch L1 of eval-mode predictions.
    pub fn validate(&mut self, samples: &[Sample]) -> Result<f64, TrainError> {
        validation_l1(&self.bundle, samples, self.cfg.batch_size)
    }

    /// Runs all epochs over `train` in a seeded shuffled order. When `out`
    /// is set, appends `metrics.jsonl` there and writes `ckpt_e{epoch}.bin`
    /// after each epoch.
    pub fn fit(&mut self, train: &[Sample], val: &[Sample], out: Option<&Path>) -> Result<Vec<LogRecord>, TrainError> {
        if train.is_empty() {
            return Err(TrainError::EmptyData);
        }
        let mut log = match out {
            Some(dir) => {
                std::fs::create_dir_all(dir)?;
                Some(OpenOptions::new().create(true).append(true).open(dir.join("metrics.jsonl"))?)
            }
            None => None,
        };
        let mut records = Vec::with_capacity(self.cfg.epochs + 1);
        let first = LogRecord {
            epoch: 0,
            step: self.step,
            d_loss: None,
            g_adv: None,
            g_l1: None,
            val_l1: if val.is_empty() { None } else { Some(self.validate(val)?) },
            d_acc: None,
        };
        emit(&mut log, &first)?;
        records.push(first);
        let dtype = self.bundle.gen_params.vars.values().next().map(|v| v.dtype()).unwrap_or(DType::F32);
        let device = candle_core::Device::Cpu;
        for epoch in 1..=self.cfg.epochs {
            let mut order: Vec<usize> = (0..train.len()).collect();
            order.shuffle(&mut stream(self.cfg.seed, 2000 + epoch as u64));
            let mut sums = [0.0f64; 4];
            let mut n = 0usize;
            for chunk in order.chunks(self.cfg.batch_size) {
                let refs: Vec<&Sample> = chunk.iter().map(|i| &train[*i]).collect();
                let batch = Batch::new(&refs, dtype, &device)?;
                let s = self.train_step(&batch).map_err(|e| match e {
                    TrainError::Diverged { step, .. } => TrainError::Diverged { epoch, step },
                    other => other,
                })?;
                for (acc, v) in sums.iter_mut().zip([s.d_loss, s.g_adv, s.g_l1, s.d_acc]) {
                    *acc += v;
                }
                n += 1;
            }
            let mean = |i: usize| Some(sums[i] / n as f64);
            let rec = LogRecord {
                epoch,
                step: self.step,
                d_loss: mean(0),
                g_adv: mean(1),
                g_l1: mean(2),
                val_l1: if val.is_empty() { None } else { Some(self.validate(val)?) },
                d_acc: mean(3),
            };
            log::info!(
                "epoch {epoch}: d_loss {:.4} g_adv {:.4} g_l1 {:.4} val_l1 {:?} d_acc {:.3}",
                sums[0] / n as f64,
                sums[1] / n as f64,
                sums[2] / n as f64,
                rec.val_l1,
                sums[3] / n as f64
            );
            emit(&mut log, &rec)?;
            records.push(rec);
            if let Some(dir) = out {
                checkpoint::save(&self.bundle, &checkpoint_path(dir, epoch))?;
            }
        }
        Ok(records)
    }
}

pub fn checkpoint_path(dir: &Path, epoch: usize) -> PathBuf {
    dir.join(format!("ckpt_e{epoch}.bin"))
}

fn emit(log: &mut Option<File>, rec: &LogRecord) -> Result<(), TrainError> {
    if let Some(f) = log {
        writeln!(f, "{}", serde_json::to_string(rec)?)?;
    }
    Ok(())
}

/// Mean sketch L1 of eval-mode predictions over `samples`.
pub fn validation_l1(bundle: &Bundle, samples: &[Sample], batch_size: usize) -> Result<f64, TrainError> {
    let dtype = bundle.gen_params.vars.values().next().map(|v| v.dtype()).unwrap_or(DType::F32);
    let mut rng = stream(0, 0);
    let (mut total, mut count) = (0.0, 0usize);
    for chunk in samples.chunks(batch_size.max(1)) {
        let refs: Vec<&Sample> = chunk.iter().collect();
        let batch = Batch::new(&refs, dtype, &candle_core::Device::Cpu)?;
        let pred = bundle.complete(&batch.inputs, Pass::EVAL, &mut rng)?;
        total += scalar(&l1(&batch.sketch, &pred)?)? * chunk.len() as f64;
        count += chunk.len();
    }
    Ok(total / count.max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_checks() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            adv_weight: -1.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
