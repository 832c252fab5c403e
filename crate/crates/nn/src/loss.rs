//! Reconstruction and adversarial objectives.

use candle_core::{Result, Tensor};

use crate::patchgan::SCORE_EPS;

/// Mean absolute difference per element.
pub fn l1(target: &Tensor, pred: &Tensor) -> Result<Tensor> {
    if target.dims() != pred.dims() {
        return Err(candle_core::Error::Msg(format!(
            "l1 shape mismatch: {:?} vs {:?}",
            target.dims(),
            pred.dims()
        )));
    }
    (target - pred)?.abs()?.mean_all()
}

/// Adversarial terms from discriminator scores on real and generated pairs.
pub struct AdvLoss {
    /// `mean log D(real) + mean log(1 - D(fake))`; the discriminator maximises it.
    pub objective: Tensor,
    /// Negated objective, minimised by the discriminator optimiser.
    pub d_loss: Tensor,
}

fn clamp(s: &Tensor) -> Result<Tensor> {
    s.clamp(SCORE_EPS, 1.0 - SCORE_EPS)
}

pub fn adversarial(real_scores: &Tensor, fake_scores: &Tensor) -> Result<AdvLoss> {
    let real = clamp(real_scores)?.log()?.mean_all()?;
    let fake = clamp(fake_scores)?.affine(-1.0, 1.0)?.log()?.mean_all()?;
    let objective = (real + fake)?;
    let d_loss = objective.neg()?;
    Ok(AdvLoss { objective, d_loss })
}

/// Non-saturating generator term `-mean log D(fake)`.
pub fn generator_adversarial(fake_scores: &Tensor) -> Result<Tensor> {
    clamp(fake_scores)?.log()?.mean_all()?.neg()
}

/// Loss components of the two-stage model.
pub struct SplitLoss {
    pub l1_masks: Tensor,
    pub l1_sketch: Tensor,
    pub objective: Tensor,
}

impl SplitLoss {
    pub fn new(
        masks: (&Tensor, &Tensor),
        sketch: (&Tensor, &Tensor),
        stage1_scores: (&Tensor, &Tensor),
        stage2_scores: (&Tensor, &Tensor),
    ) -> Result<Self> {
        let a1 = adversarial(stage1_scores.0, stage1_scores.1)?;
        let a2 = adversarial(stage2_scores.0, stage2_scores.1)?;
        Ok(Self {
            l1_masks: l1(masks.0, masks.1)?,
            l1_sketch: l1(sketch.0, sketch.1)?,
            objective: (a1.objective + a2.objective)?,
        })
    }

    pub fn l1(&self) -> Result<Tensor> {
        &self.l1_masks + &self.l1_sketch
    }
}

pub fn scalar(t: &Tensor) -> Result<f64> {
    t.to_dtype(candle_core::DType::F64)?.to_scalar::<f64>()
}
