//! Stage (b): the learned ÷4 degradation into the real-LR domain.

use crate::error::{Error, Result};
use crate::imaging::{images_to_batch, resize_bilinear, Image};
use crate::losses::{loss_adv_ls, loss_content_lowfreq, Target};
use crate::nets::{AdamConfig, Family, NetworkSpec};
use crate::rng::{derive_seed, indexed_seed, purpose, stage};
use crate::tensor::Tensor;
use crate::train::{check_finite, LossRecord, Model, Schedule};

pub const DSN_TERMS: [&str; 3] = ["loss_content", "loss_g_adv", "loss_d_lr"];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DsnSettings {
    pub dsn: NetworkSpec,
    pub discriminator: NetworkSpec,
    pub lambda_content: f64,
    pub lambda_adv: f64,
    pub adam: AdamConfig,
    pub schedule: Schedule,
}

impl DsnSettings {
    pub fn desk() -> Self {
        DsnSettings {
            dsn: NetworkSpec::new(Family::Dsn, 16, 2).expect("valid spec"),
            discriminator: NetworkSpec::new(Family::PatchDisc, 16, 0).expect("valid spec"),
            lambda_content: 1.0,
            lambda_adv: 0.05,
            adam: AdamConfig {
                lr: 2e-4,
                beta1: 0.5,
                beta2: 0.999,
                eps: 1e-8,
            },
            schedule: Schedule::Constant,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dsn.family != Family::Dsn || self.discriminator.family != Family::PatchDisc {
            return Err(Error::State("dsn stage needs dsn and patch_disc specs".into()));
        }
        if !(self.lambda_content > 0.0) || !(self.lambda_adv >= 0.0) {
            return Err(Error::Range(format!(
                "need λ_content > 0 and λ_adv ≥ 0, got {} and {}",
                self.lambda_content, self.lambda_adv
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct DsnState {
    pub settings: DsnSettings,
    pub dsn: Model,
    /// Least-squares critic on LR-domain patches.
    pub d_lr: Model,
    pub step: u64,
    pub seed: u64,
}

impl DsnState {
    pub fn new(settings: DsnSettings, seed: u64) -> Result<Self> {
        settings.validate()?;
        let init = derive_seed(seed, stage::DSN, purpose::INIT);
        Ok(DsnState {
            dsn: Model::build(settings.dsn, indexed_seed(init, 0), settings.adam)?,
            d_lr: Model::build(settings.discriminator, indexed_seed(init, 1), settings.adam)?,
            step: 0,
            settings,
            seed,
        })
    }
}

/// One DSN update on `λ_content·content + λ_adv·adversarial`, then one
/// critic update separating `real_lr` from the DSN outputs.
///
/// `rainy_hr` is N×3×H×W and `real_lr` N'×3×(H/4)×(W/4), both in model
/// range.
pub fn train_step_dsn(state: &mut DsnState, rainy_hr: &Tensor<f32>, real_lr: &Tensor<f32>) -> Result<LossRecord> {
    let (_, _, h, w) = rainy_hr.dims4()?;
    let (_, _, lh, lw) = real_lr.dims4()?;
    if h != 4 * lh || w != 4 * lw {
        return Err(Error::dim(format!(
            "rainy HR {h}×{w} is not 4× real LR {lh}×{lw}"
        )));
    }
    let mut st = state.clone();
    let step = st.step + 1;
    let lr = st.settings.schedule.factor(step);
    let DsnSettings {
        lambda_content,
        lambda_adv,
        ..
    } = st.settings;

    st.dsn.params.zero_grads();
    st.d_lr.params.zero_grads();
    let (fake_lr, tape) = st.dsn.net.forward(&st.dsn.params, rainy_hr)?;
    let (content, g_content) = loss_content_lowfreq(&fake_lr, rainy_hr)?;
    let (d_out, d_tape) = st.d_lr.net.forward(&st.d_lr.params, &fake_lr)?;
    let (adv, g_adv) = loss_adv_ls(&d_out, Target::Real);
    check_finite(step, &[("loss_content", content), ("loss_g_adv", adv)])?;

    let mut grad = g_content.map(|v| v * lambda_content as f32);
    if lambda_adv != 0.0 {
        let via_d = st
            .d_lr
            .net
            .backward(&mut st.d_lr.params, d_tape, &g_adv.map(|v| v * lambda_adv as f32), true)?
            .expect("input gradient requested");
        grad.add_assign(&via_d);
    }
    st.dsn.net.backward(&mut st.dsn.params, tape, &grad, false)?;
    st.dsn.update(lr, step)?;

    st.d_lr.params.zero_grads();
    let (out_real, t_real) = st.d_lr.net.forward(&st.d_lr.params, real_lr)?;
    let (l_real, g_real) = loss_adv_ls(&out_real, Target::Real);
    let (out_fake, t_fake) = st.d_lr.net.forward(&st.d_lr.params, &fake_lr)?;
    let (l_fake, g_fake) = loss_adv_ls(&out_fake, Target::Fake);
    st.d_lr.net.backward(&mut st.d_lr.params, t_real, &g_real.map(|v| 0.5 * v), false)?;
    st.d_lr.net.backward(&mut st.d_lr.params, t_fake, &g_fake.map(|v| 0.5 * v), false)?;
    let loss_d_lr = 0.5 * (l_real + l_fake);
    check_finite(step, &[("loss_d_lr", loss_d_lr)])?;
    st.d_lr.update(lr, step)?;

    st.step = step;
    *state = st;
    Ok(LossRecord {
        step,
        terms: vec![("loss_content", content), ("loss_g_adv", adv), ("loss_d_lr", loss_d_lr)],
    })
}

/// Learned ÷4 reduction of one image with sides divisible by 4; output
/// clamped into `[0,1]`.
pub fn degrade(state: &DsnState, img: &Image) -> Result<Image> {
    degrade_with(&state.dsn, img)
}

pub(crate) fn degrade_with(dsn: &Model, img: &Image) -> Result<Image> {
    let (h, w) = img.dims();
    if h % 4 != 0 || w % 4 != 0 {
        return Err(Error::dim(format!("DSN input {h}×{w} must have sides divisible by 4")));
    }
    dsn.apply_image(img)
}

/// Anything that scores model-range LR batches with an N×1×h×w map.
pub trait Critic {
    fn score(&self, lr: &Tensor<f32>) -> Result<Tensor<f32>>;
}

impl Critic for Model {
    fn score(&self, lr: &Tensor<f32>) -> Result<Tensor<f32>> {
        self.infer(lr)
    }
}

impl Critic for DsnState {
    fn score(&self, lr: &Tensor<f32>) -> Result<Tensor<f32>> {
        self.d_lr.infer(lr)
    }
}

/// Per-pixel confidence that an LR batch looks like the real-LR domain:
/// the critic map clamped to `[0,1]`, bilinearly resized to the LR size.
/// Returns N×1×H×W.
pub fn domain_distance_weight(critic: &dyn Critic, lr: &Tensor<f32>) -> Result<Tensor<f32>> {
    let (_, _, h, w) = lr.dims4()?;
    let raw = critic.score(lr)?;
    let (_, c, ..) = raw.dims4()?;
    if c != 1 {
        return Err(Error::dim(format!("critic map has {c} channels, expected 1")));
    }
    let clamped = raw.map(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) });
    resize_bilinear(&clamped, h, w)
}

/// Weight map of a single LR image, row-major at the image size.
pub fn domain_distance_weight_image(critic: &dyn Critic, lr: &Image) -> Result<Vec<f32>> {
    let x = images_to_batch::<f32>(std::slice::from_ref(lr))?;
    Ok(domain_distance_weight(critic, &x)?.into_data())
}
