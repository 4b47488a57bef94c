//! Stage (c): 4× super-resolution trained on pseudo-pairs, and the
//! end-user `super_resolve` operation.

use crate::datasets::BatchStream;
use crate::dsn::{domain_distance_weight, Critic, DsnState};
use crate::error::{Error, Result};
use crate::imaging::{batch_to_images, images_to_batch, resize_bicubic, Image, Scale};
use crate::losses::{loss_adv_ls, loss_pix_weighted, Target};
use crate::nets::{AdamConfig, Family, NetworkSpec};
use crate::rng::{derive_seed, indexed_seed, purpose, stage};
use crate::tensor::Tensor;
use crate::train::{check_finite, LossRecord, Model, Schedule};
use crate::translator::TranslatorState;

pub const SRN_TERMS: [&str; 4] = ["loss_pix", "loss_g_adv", "loss_d_hr", "mean_weight"];

/// Smallest LR side `super_resolve` accepts.
pub const MIN_LR_SIDE: usize = 8;

/// An image-to-image stage of the pipeline, applied to a batch of equally
/// sized `[0,1]` images.
pub trait ImageMap {
    fn map_images(&self, imgs: &[Image]) -> Result<Vec<Image>>;
}

impl ImageMap for Model {
    fn map_images(&self, imgs: &[Image]) -> Result<Vec<Image>> {
        let x = images_to_batch::<f32>(imgs)?;
        batch_to_images(&self.infer(&x)?)
    }
}

/// Sunny → rainy generator of a trained translator.
impl ImageMap for TranslatorState {
    fn map_images(&self, imgs: &[Image]) -> Result<Vec<Image>> {
        self.g_s2r.map_images(imgs)
    }
}

impl ImageMap for DsnState {
    fn map_images(&self, imgs: &[Image]) -> Result<Vec<Image>> {
        self.dsn.map_images(imgs)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PseudoPair {
    pub lr_rainy: Image,
    pub hr_clean: Image,
    /// 1×1×h×w at the LR size, in `[0,1]`.
    pub weight_map: Option<Tensor<f32>>,
}

/// A training batch of pseudo-pairs in model range.
#[derive(Clone, Debug)]
pub struct PairBatch {
    /// N×3×h×w.
    pub lr: Tensor<f32>,
    /// N×3×4h×4w.
    pub hr: Tensor<f32>,
    /// N×1×h×w.
    pub weights: Option<Tensor<f32>>,
}

/// Composes the first two stages over sunny HR patches.
pub struct PairSource<'a> {
    pub translator: &'a dyn ImageMap,
    pub degrader: &'a dyn ImageMap,
    /// Present when domain-distance weighting is enabled.
    pub critic: Option<&'a dyn Critic>,
}

impl PairSource<'_> {
    /// `(degrade(translate(h)), h)` for a batch of clean HR patches.
    pub fn pair_batch(&self, hr: &[Image]) -> Result<PairBatch> {
        let rainy = self.translator.map_images(hr)?;
        let lr_imgs = self.degrader.map_images(&rainy)?;
        for (l, h) in lr_imgs.iter().zip(hr) {
            if (4 * l.height(), 4 * l.width()) != h.dims() {
                return Err(Error::dim(format!(
                    "degrader produced {:?} from {:?}; expected a quarter",
                    l.dims(),
                    h.dims()
                )));
            }
        }
        let lr = images_to_batch::<f32>(&lr_imgs)?;
        let weights = match self.critic {
            Some(c) => Some(domain_distance_weight(c, &lr)?),
            None => None,
        };
        Ok(PairBatch {
            lr,
            hr: images_to_batch::<f32>(hr)?,
            weights,
        })
    }
}

/// `count` pseudo-pairs from sunny HR patches of size `patch` sampled
/// deterministically from `seed`. Only the sunny pool is read.
pub fn make_pseudo_pairs(
    source: &PairSource<'_>,
    sunny: &[Image],
    patch: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<PseudoPair>> {
    let stream = BatchStream::from_images(sunny, patch, 1, seed)?;
    let mut out = Vec::with_capacity(count);
    for i in 0..count as u64 {
        let hr = stream.patches(i);
        let b = source.pair_batch(&hr)?;
        let lr_rainy = batch_to_images(&b.lr)?.remove(0);
        out.push(PseudoPair {
            lr_rainy,
            hr_clean: hr.into_iter().next().expect("batch of one"),
            weight_map: b.weights,
        });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SrnSettings {
    pub srn: NetworkSpec,
    pub discriminator: NetworkSpec,
    pub lambda_pix: f64,
    pub lambda_adv: f64,
    pub use_domain_weights: bool,
    pub adam: AdamConfig,
    pub schedule: Schedule,
}

impl SrnSettings {
    pub fn desk() -> Self {
        SrnSettings {
            srn: NetworkSpec::new(Family::Srn, 32, 4).expect("valid spec"),
            discriminator: NetworkSpec::new(Family::PatchDisc, 16, 0).expect("valid spec"),
            lambda_pix: 1.0,
            lambda_adv: 0.05,
            use_domain_weights: false,
            adam: AdamConfig {
                lr: 2e-3,
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
            },
            schedule: Schedule::Constant,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.srn.family != Family::Srn || self.discriminator.family != Family::PatchDisc {
            return Err(Error::State("srn stage needs srn and patch_disc specs".into()));
        }
        if !(self.lambda_pix > 0.0) || !(self.lambda_adv >= 0.0) {
            return Err(Error::Range(format!(
                "need λ_pix > 0 and λ_adv ≥ 0, got {} and {}",
                self.lambda_pix, self.lambda_adv
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SrnState {
    pub settings: SrnSettings,
    pub srn: Model,
    /// Least-squares critic on clean HR patches.
    pub d_hr: Model,
    pub step: u64,
    pub seed: u64,
}

impl SrnState {
    pub fn new(settings: SrnSettings, seed: u64) -> Result<Self> {
        settings.validate()?;
        let init = derive_seed(seed, stage::SRN, purpose::INIT);
        Ok(SrnState {
            srn: Model::build(settings.srn, indexed_seed(init, 0), settings.adam)?,
            d_hr: Model::build(settings.discriminator, indexed_seed(init, 1), settings.adam)?,
            step: 0,
            settings,
            seed,
        })
    }
}

/// One SRN update on `λ_pix·weighted L1 + λ_adv·adversarial`, then one
/// critic update on (clean HR, SRN output).
pub fn train_step_srn(state: &mut SrnState, batch: &PairBatch) -> Result<LossRecord> {
    let mut st = state.clone();
    let step = st.step + 1;
    let lr = st.settings.schedule.factor(step);
    let SrnSettings {
        lambda_pix,
        lambda_adv,
        ..
    } = st.settings;

    st.srn.params.zero_grads();
    st.d_hr.params.zero_grads();
    let (sr, tape) = st.srn.net.forward(&st.srn.params, &batch.lr)?;
    let (pix, g_pix) = loss_pix_weighted(&sr, &batch.hr, batch.weights.as_ref())?;
    let (d_out, d_tape) = st.d_hr.net.forward(&st.d_hr.params, &sr)?;
    let (adv, g_adv) = loss_adv_ls(&d_out, Target::Real);
    let mean_weight = batch.weights.as_ref().map_or(1.0, |w| w.mean());
    check_finite(step, &[("loss_pix", pix), ("loss_g_adv", adv), ("mean_weight", mean_weight)])?;

    let mut grad = g_pix.map(|v| v * lambda_pix as f32);
    if lambda_adv != 0.0 {
        let via_d = st
            .d_hr
            .net
            .backward(&mut st.d_hr.params, d_tape, &g_adv.map(|v| v * lambda_adv as f32), true)?
            .expect("input gradient requested");
        grad.add_assign(&via_d);
    }
    st.srn.net.backward(&mut st.srn.params, tape, &grad, false)?;
    st.srn.update(lr, step)?;

    st.d_hr.params.zero_grads();
    let (out_real, t_real) = st.d_hr.net.forward(&st.d_hr.params, &batch.hr)?;
    let (l_real, g_real) = loss_adv_ls(&out_real, Target::Real);
    let (out_fake, t_fake) = st.d_hr.net.forward(&st.d_hr.params, &sr)?;
    let (l_fake, g_fake) = loss_adv_ls(&out_fake, Target::Fake);
    st.d_hr.net.backward(&mut st.d_hr.params, t_real, &g_real.map(|v| 0.5 * v), false)?;
    st.d_hr.net.backward(&mut st.d_hr.params, t_fake, &g_fake.map(|v| 0.5 * v), false)?;
    let loss_d_hr = 0.5 * (l_real + l_fake);
    check_finite(step, &[("loss_d_hr", loss_d_hr)])?;
    st.d_hr.update(lr, step)?;

    st.step = step;
    *state = st;
    Ok(LossRecord {
        step,
        terms: vec![
            ("loss_pix", pix),
            ("loss_g_adv", adv),
            ("loss_d_hr", loss_d_hr),
            ("mean_weight", mean_weight),
        ],
    })
}

/// Anything that maps an LR image to a 4× image.
pub trait Upscaler {
    fn upscale(&self, lr: &Image) -> Result<Image>;
}

impl Upscaler for SrnState {
    fn upscale(&self, lr: &Image) -> Result<Image> {
        super_resolve(&self.srn, lr)
    }
}

/// Plain bicubic ×4, the baseline every report compares against.
pub struct Bicubic;

impl Upscaler for Bicubic {
    fn upscale(&self, lr: &Image) -> Result<Image> {
        resize_bicubic(lr, Scale::FOUR)
    }
}

/// 4× super-resolution of one LR image (sides ≥ 8); output in `[0,1]`.
pub fn super_resolve(srn: &Model, lr: &Image) -> Result<Image> {
    let (h, w) = lr.dims();
    if h < MIN_LR_SIDE || w < MIN_LR_SIDE {
        return Err(Error::dim(format!(
            "LR input {h}×{w} is below the {MIN_LR_SIDE}×{MIN_LR_SIDE} minimum"
        )));
    }
    if srn.spec().family != Family::Srn {
        return Err(Error::State("super_resolve needs an srn network".into()));
    }
    srn.apply_image(lr)
}

/// Derived seed for the sunny patch stream feeding pseudo-pairs.
pub fn pair_seed(master: u64) -> u64 {
    derive_seed(master, stage::SRN, purpose::PAIRS)
}
