//! Model bundles: the direct model and the two-stage split model, each with
//! its discriminators, built from one seeded spec.

use candle_core::{DType, Device, Result, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::layers::{Init, Params, Pass};
use crate::patchgan::{Discriminator, DiscriminatorSpec};
use crate::unet::{Generator, GeneratorSpec, Variant};

pub const CONTOUR_CHANNELS: usize = 1;
pub const HINT_CHANNELS: usize = 1;
pub const TEXTURE_CHANNELS: usize = 4;
pub const MASK_CHANNELS: usize = 4;
pub const SKETCH_CHANNELS: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Direct,
    Split,
}

/// Command-line model names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelId {
    Dm,
    Sp,
    Se,
}

impl ModelId {
    pub fn kind(self) -> ModelKind {
        match self {
            ModelId::Dm => ModelKind::Direct,
            ModelId::Sp | ModelId::Se => ModelKind::Split,
        }
    }

    pub fn variant(self) -> Variant {
        match self {
            ModelId::Se => Variant::UnetSe,
            _ => Variant::Unet,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelId::Dm => "dm",
            ModelId::Sp => "sp",
            ModelId::Se => "se",
        }
    }
}

impl std::str::FromStr for ModelId {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "dm" => Ok(ModelId::Dm),
            "sp" => Ok(ModelId::Sp),
            "se" => Ok(ModelId::Se),
            _ => Err(format!("unknown model `{s}` (expected dm, sp or se)")),
        }
    }
}

/// Width and depth settings shared by every network of a bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub base_width: usize,
    pub depth: usize,
    pub max_width: usize,
    pub dropout_p: f64,
    pub disc_base_width: usize,
    pub disc_n_down: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            base_width: 64,
            depth: 8,
            max_width: 208,
            dropout_p: 0.5,
            disc_base_width: 64,
            disc_n_down: 3,
        }
    }
}

impl Architecture {
    /// Reduced layout for 64x64 experiments.
    pub fn toy() -> Self {
        Self {
            base_width: 16,
            depth: 6,
            max_width: 64,
            dropout_p: 0.5,
            disc_base_width: 16,
            disc_n_down: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleSpec {
    pub model: ModelId,
    pub arch: Architecture,
    /// Square input side the bundle is trained at.
    pub resolution: usize,
}

/// A named network slot of a bundle with its spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkLayout {
    pub generators: Vec<(String, GeneratorSpec)>,
    pub discriminators: Vec<(String, DiscriminatorSpec)>,
}

impl BundleSpec {
    pub fn new(model: ModelId, arch: Architecture, resolution: usize) -> Self {
        Self { model, arch, resolution }
    }

    fn generator(&self, c_in: usize, c_out: usize) -> GeneratorSpec {
        GeneratorSpec {
            base_width: self.arch.base_width,
            depth: self.arch.depth,
            max_width: self.arch.max_width,
            dropout_p: self.arch.dropout_p,
            ..GeneratorSpec::new(self.model.variant(), c_in, c_out)
        }
    }

    fn discriminator(&self, c_in: usize) -> DiscriminatorSpec {
        DiscriminatorSpec {
            in_channels: c_in,
            base_width: self.arch.disc_base_width,
            n_down: self.arch.disc_n_down,
        }
    }

    /// Channel wiring of every network.
    pub fn layout(&self) -> NetworkLayout {
        let cond = CONTOUR_CHANNELS + HINT_CHANNELS;
        match self.model.kind() {
            ModelKind::Direct => NetworkLayout {
                generators: vec![("g".into(), self.generator(cond + TEXTURE_CHANNELS, SKETCH_CHANNELS))],
                discriminators: vec![(
                    "d".into(),
                    self.discriminator(cond + TEXTURE_CHANNELS + SKETCH_CHANNELS),
                )],
            },
            ModelKind::Split => NetworkLayout {
                generators: vec![
                    ("g1".into(), self.generator(cond, MASK_CHANNELS)),
                    ("g2".into(), self.generator(MASK_CHANNELS + TEXTURE_CHANNELS, SKETCH_CHANNELS)),
                ],
                discriminators: vec![
                    ("d1".into(), self.discriminator(cond + MASK_CHANNELS)),
                    ("d2".into(), self.discriminator(MASK_CHANNELS + TEXTURE_CHANNELS + SKETCH_CHANNELS)),
                ],
            },
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        let g = self.generator(1, 1);
        g.validate()?;
        if self.resolution == 0 || !self.resolution.is_multiple_of(g.granularity()) {
            return Err(format!(
                "resolution {} is not a multiple of {}",
                self.resolution,
                g.granularity()
            ));
        }
        if self.discriminator(1).score_side(self.resolution) == 0 {
            return Err(format!("resolution {} too small for the discriminator", self.resolution));
        }
        Ok(())
    }

    pub fn generator_param_count(&self) -> usize {
        self.layout().generators.iter().map(|(_, s)| s.param_count()).sum()
    }
}

/// Direct-model inputs or split-model stage inputs, all `(n, c, h, w)` in `[0,1]`.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub contour: Tensor,
    pub hint: Tensor,
    pub textures: Tensor,
}

impl Inputs {
    /// `concat(c, l)`.
    pub fn sketch_condition(&self) -> Result<Tensor> {
        Tensor::cat(&[&self.contour, &self.hint], 1)
    }

    /// `concat(c, l, t1..t4)`.
    pub fn full(&self) -> Result<Tensor> {
        Tensor::cat(&[&self.contour, &self.hint, &self.textures], 1)
    }

    fn check(&self) -> Result<()> {
        let (n, c, h, w) = self.contour.dims4()?;
        let ok = c == CONTOUR_CHANNELS
            && self.hint.dims4()? == (n, HINT_CHANNELS, h, w)
            && self.textures.dims4()? == (n, TEXTURE_CHANNELS, h, w);
        if ok {
            Ok(())
        } else {
            Err(candle_core::Error::Msg(format!(
                "plane shapes disagree: contour {:?}, hint {:?}, textures {:?}",
                self.contour.dims(),
                self.hint.dims(),
                self.textures.dims()
            )))
        }
    }
}

pub struct SplitOutput {
    pub masks: Tensor,
    pub sketch: Tensor,
}

pub struct Bundle {
    pub spec: BundleSpec,
    pub generators: Vec<Generator>,
    pub discriminators: Vec<Discriminator>,
    pub gen_params: Params,
    pub disc_params: Params,
}

impl Bundle {
    pub fn new(spec: BundleSpec, seed: u64, dtype: DType, device: &Device) -> Result<Self> {
        spec.validate().map_err(candle_core::Error::Msg)?;
        let layout = spec.layout();
        let mut gen_params = Params::default();
        let mut disc_params = Params::default();
        let mut generators = Vec::new();
        let mut discriminators = Vec::new();
        // Each network gets its own stream so that changing one leaves the
        // others' initial weights alone.
        for (i, (name, gs)) in layout.generators.into_iter().enumerate() {
            let mut init = Init::new(stream(seed, i as u64), dtype, device.clone());
            generators.push(Generator::new(gs, &mut init)?);
            Init::merge(&mut gen_params, &name, init.finish());
        }
        for (i, (name, ds)) in layout.discriminators.into_iter().enumerate() {
            let mut init = Init::new(stream(seed, 16 + i as u64), dtype, device.clone());
            discriminators.push(Discriminator::new(ds, &mut init)?);
            Init::merge(&mut disc_params, &name, init.finish());
        }
        Ok(Self {
            spec,
            generators,
            discriminators,
            gen_params,
            disc_params,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.spec.model.kind()
    }

    fn expect(&self, kind: ModelKind) -> Result<()> {
        if self.kind() == kind {
            Ok(())
        } else {
            Err(candle_core::Error::Msg(format!("operation needs a {kind:?} bundle")))
        }
    }

    pub fn forward_direct(&self, x: &Inputs, pass: Pass, rng: &mut ChaCha8Rng) -> Result<Tensor> {
        self.expect(ModelKind::Direct)?;
        x.check()?;
        self.generators[0].forward(&x.full()?, pass, rng)
    }

    /// Masks from `(c, l)`, then the sketch from `(masks, t)`. With
    /// `teacher` set, the second stage reads those masks instead of the
    /// predicted ones.
    pub fn forward_split(&self, x: &Inputs, teacher: Option<&Tensor>, pass: Pass, rng: &mut ChaCha8Rng) -> Result<SplitOutput> {
        self.expect(ModelKind::Split)?;
        x.check()?;
        let masks = self.generators[0].forward(&x.sketch_condition()?, pass, rng)?;
        let stage2_masks = teacher.unwrap_or(&masks);
        let sketch = self.generators[1].forward(&Tensor::cat(&[stage2_masks, &x.textures], 1)?, pass, rng)?;
        Ok(SplitOutput { masks, sketch })
    }

    /// Sketch prediction for either kind.
    pub fn complete(&self, x: &Inputs, pass: Pass, rng: &mut ChaCha8Rng) -> Result<Tensor> {
        match self.kind() {
            ModelKind::Direct => self.forward_direct(x, pass, rng),
            ModelKind::Split => Ok(self.forward_split(x, None, pass, rng)?.sketch),
        }
    }

    /// Patch scores of discriminator `index` for `candidate` under `condition`.
    pub fn discriminate(&self, index: usize, condition: &Tensor, candidate: &Tensor, pass: Pass) -> Result<Tensor> {
        let d = self
            .discriminators
            .get(index)
            .ok_or_else(|| candle_core::Error::Msg(format!("no discriminator {index}")))?;
        let (cd, kd) = (condition.dims4()?, candidate.dims4()?);
        if (cd.0, cd.2, cd.3) != (kd.0, kd.2, kd.3) {
            return Err(candle_core::Error::Msg(format!(
                "condition {:?} and candidate {:?} disagree",
                condition.dims(),
                candidate.dims()
            )));
        }
        d.forward(condition, candidate, pass)
    }

    /// Named tensors of all networks, buffers included.
    pub fn named_tensors(&self) -> Vec<(String, Tensor)> {
        self.gen_params
            .all()
            .chain(self.disc_params.all())
            .map(|(k, v)| (k.clone(), v.as_tensor().clone()))
            .collect()
    }
}

/// ChaCha generator on `index` of the stream family keyed by `seed`.
pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(model: ModelId) -> BundleSpec {
        BundleSpec::new(
            model,
            Architecture {
                base_width: 4,
                depth: 3,
                max_width: 8,
                dropout_p: 0.5,
                disc_base_width: 4,
                disc_n_down: 1,
            },
            16,
        )
    }

    fn inputs(n: usize, side: usize) -> Inputs {
        let r = |c| Tensor::rand(0f32, 1.0, (n, c, side, side), &Device::Cpu).unwrap();
        Inputs {
            contour: r(1),
            hint: r(1),
            textures: r(4),
        }
    }

    #[test]
    fn split_wiring_composes() {
        let layout = tiny(ModelId::Sp).layout();
        let (g1, g2) = (&layout.generators[0].1, &layout.generators[1].1);
        assert_eq!(g1.out_channels + TEXTURE_CHANNELS, g2.in_channels);
        let ins: Vec<usize> = layout.discriminators.iter().map(|(_, d)| d.in_channels).collect();
        assert_eq!(ins, vec![6, 9]);
        let direct = tiny(ModelId::Dm).layout();
        assert_eq!(direct.generators[0].1.in_channels, 6);
        assert_eq!(direct.discriminators[0].1.in_channels, 7);
    }

    #[test]
    fn forwards_have_contracted_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = Bundle::new(tiny(ModelId::Se), 1, DType::F32, &Device::Cpu).unwrap();
        let x = inputs(2, 16);
        let out = b.forward_split(&x, None, Pass::EVAL, &mut rng).unwrap();
        assert_eq!(out.masks.dims(), &[2, 4, 16, 16]);
        assert_eq!(out.sketch.dims(), &[2, 1, 16, 16]);
        let gt = Tensor::zeros((2, 4, 16, 16), DType::F32, &Device::Cpu).unwrap();
        let forced = b.forward_split(&x, Some(&gt), Pass::EVAL, &mut rng).unwrap();
        assert_ne!(
            forced.sketch.flatten_all().unwrap().to_vec1::<f32>().unwrap(),
            out.sketch.flatten_all().unwrap().to_vec1::<f32>().unwrap()
        );
        assert!(b.forward_direct(&x, Pass::EVAL, &mut rng).is_err());
        let scores = b.discriminate(1, &Tensor::cat(&[&out.masks, &x.textures], 1).unwrap(), &out.sketch, Pass::EVAL).unwrap();
        assert_eq!(scores.dims(), &[2, 1, 6, 6]);
    }

    #[test]
    fn eval_is_pure_and_sampling_varies() {
        let b = Bundle::new(tiny(ModelId::Dm), 3, DType::F32, &Device::Cpu).unwrap();
        let x = inputs(1, 16);
        let run = |pass, seed| {
            b.forward_direct(&x, pass, &mut ChaCha8Rng::seed_from_u64(seed))
                .unwrap()
                .flatten_all()
                .unwrap()
                .to_vec1::<f32>()
                .unwrap()
        };
        assert_eq!(run(Pass::EVAL, 1), run(Pass::EVAL, 2));
        let (a, c) = (run(Pass::SAMPLE, 1), run(Pass::SAMPLE, 2));
        let diff: f32 = a.iter().zip(&c).map(|(p, q)| (p - q).abs()).sum::<f32>() / a.len() as f32;
        assert!(diff > 0.0);
    }

    #[test]
    fn bad_resolution_is_rejected() {
        let mut s = tiny(ModelId::Dm);
        s.resolution = 12;
        assert!(Bundle::new(s, 0, DType::F32, &Device::Cpu).is_err());
    }
}
