//! Stage (a): cycle-consistent sunny↔rainy translation.

use crate::error::{Error, Result};
use crate::imaging::Image;
use crate::losses::{loss_adv_ls, loss_l1, Target};
use crate::nets::{AdamConfig, Family, NetworkSpec};
use crate::rng::{derive_seed, indexed_seed, purpose, rng_from, stage};
use crate::tensor::Tensor;
use crate::train::{check_finite, LossRecord, Model, ReplayBuffer, Schedule};

/// Loss names in CSV column order.
pub const TRANSLATOR_TERMS: [&str; 5] = ["loss_g_adv", "loss_cycle", "loss_id", "loss_d_rainy", "loss_d_sunny"];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TranslatorSettings {
    pub generator: NetworkSpec,
    pub discriminator: NetworkSpec,
    pub lambda_cyc: f64,
    pub lambda_id: f64,
    pub adam: AdamConfig,
    pub buffer_capacity: usize,
    pub schedule: Schedule,
}

impl TranslatorSettings {
    pub fn desk() -> Self {
        TranslatorSettings {
            generator: NetworkSpec::new(Family::TranslatorGen, 16, 3).expect("valid spec"),
            discriminator: NetworkSpec::new(Family::PatchDisc, 16, 0).expect("valid spec"),
            lambda_cyc: 10.0,
            lambda_id: 5.0,
            adam: AdamConfig {
                lr: 2e-4,
                beta1: 0.5,
                beta2: 0.999,
                eps: 1e-8,
            },
            buffer_capacity: 50,
            schedule: Schedule::Constant,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.generator.family != Family::TranslatorGen || self.discriminator.family != Family::PatchDisc {
            return Err(Error::State("translator needs translator_gen and patch_disc specs".into()));
        }
        if !(self.lambda_cyc > 0.0) || !(self.lambda_id >= 0.0) {
            return Err(Error::Range(format!(
                "need λ_cyc > 0 and λ_id ≥ 0, got {} and {}",
                self.lambda_cyc, self.lambda_id
            )));
        }
        Ok(())
    }
}

/// Both generators, both discriminators, their optimizers and the replay
/// buffers of past fakes.
#[derive(Clone, Debug)]
pub struct TranslatorState {
    pub settings: TranslatorSettings,
    pub g_s2r: Model,
    pub g_r2s: Model,
    pub d_rainy: Model,
    pub d_sunny: Model,
    pub buffer_rainy: ReplayBuffer,
    pub buffer_sunny: ReplayBuffer,
    /// Completed training steps.
    pub step: u64,
    pub seed: u64,
}

impl TranslatorState {
    pub fn new(settings: TranslatorSettings, seed: u64) -> Result<Self> {
        settings.validate()?;
        let init = derive_seed(seed, stage::TRANSLATOR, purpose::INIT);
        let build = |spec, k| Model::build(spec, indexed_seed(init, k), settings.adam);
        Ok(TranslatorState {
            g_s2r: build(settings.generator, 0)?,
            g_r2s: build(settings.generator, 1)?,
            d_rainy: build(settings.discriminator, 2)?,
            d_sunny: build(settings.discriminator, 3)?,
            buffer_rainy: ReplayBuffer::new(settings.buffer_capacity),
            buffer_sunny: ReplayBuffer::new(settings.buffer_capacity),
            step: 0,
            settings,
            seed,
        })
    }

    fn models_mut(&mut self) -> [&mut Model; 4] {
        [&mut self.g_s2r, &mut self.g_r2s, &mut self.d_rainy, &mut self.d_sunny]
    }
}

fn scaled(t: &Tensor<f32>, s: f64) -> Tensor<f32> {
    t.map(|v| v * s as f32)
}

/// One discriminator update on ½(real + fake) least-squares terms.
fn disc_update(d: &mut Model, real: &Tensor<f32>, fake: &Tensor<f32>, lr: f64, step: u64) -> Result<f64> {
    d.params.zero_grads();
    let (out_real, tape_real) = d.net.forward(&d.params, real)?;
    let (l_real, g_real) = loss_adv_ls(&out_real, Target::Real);
    let (out_fake, tape_fake) = d.net.forward(&d.params, fake)?;
    let (l_fake, g_fake) = loss_adv_ls(&out_fake, Target::Fake);
    d.net.backward(&mut d.params, tape_real, &scaled(&g_real, 0.5), false)?;
    d.net.backward(&mut d.params, tape_fake, &scaled(&g_fake, 0.5), false)?;
    let loss = 0.5 * (l_real + l_fake);
    check_finite(step, &[("discriminator loss", loss)])?;
    d.update(lr, step)?;
    Ok(loss)
}

/// One generator update followed by one update of each discriminator.
///
/// `sunny` and `rainy` are equally shaped model-range batches. The state
/// advances only when the whole step succeeds.
pub fn train_step_translator(
    state: &mut TranslatorState,
    sunny: &Tensor<f32>,
    rainy: &Tensor<f32>,
) -> Result<LossRecord> {
    if sunny.shape() != rainy.shape() {
        return Err(Error::dim(format!(
            "sunny batch {:?} and rainy batch {:?} differ",
            sunny.shape(),
            rainy.shape()
        )));
    }
    let mut next = state.clone();
    let record = step_in_place(&mut next, sunny, rainy)?;
    *state = next;
    Ok(record)
}

fn step_in_place(st: &mut TranslatorState, s: &Tensor<f32>, r: &Tensor<f32>) -> Result<LossRecord> {
    let step = st.step + 1;
    let lr = st.settings.schedule.factor(step);
    let (lc, li) = (st.settings.lambda_cyc, st.settings.lambda_id);
    for m in st.models_mut() {
        m.params.zero_grads();
    }

    // Generator objective.
    let (fake_r, t_fake_r) = st.g_s2r.net.forward(&st.g_s2r.params, s)?;
    let (rec_s, t_rec_s) = st.g_r2s.net.forward(&st.g_r2s.params, &fake_r)?;
    let (fake_s, t_fake_s) = st.g_r2s.net.forward(&st.g_r2s.params, r)?;
    let (rec_r, t_rec_r) = st.g_s2r.net.forward(&st.g_s2r.params, &fake_s)?;
    let (id_r, t_id_r) = st.g_s2r.net.forward(&st.g_s2r.params, r)?;
    let (id_s, t_id_s) = st.g_r2s.net.forward(&st.g_r2s.params, s)?;
    let (d_out_r, t_d_r) = st.d_rainy.net.forward(&st.d_rainy.params, &fake_r)?;
    let (d_out_s, t_d_s) = st.d_sunny.net.forward(&st.d_sunny.params, &fake_s)?;

    let (adv_r, g_adv_r) = loss_adv_ls(&d_out_r, Target::Real);
    let (adv_s, g_adv_s) = loss_adv_ls(&d_out_s, Target::Real);
    let (cyc_s, g_cyc_s) = loss_l1(&rec_s, s)?;
    let (cyc_r, g_cyc_r) = loss_l1(&rec_r, r)?;
    let (idt_r, g_id_r) = loss_l1(&id_r, r)?;
    let (idt_s, g_id_s) = loss_l1(&id_s, s)?;
    let loss_g_adv = adv_r + adv_s;
    let loss_cycle = cyc_s + cyc_r;
    let loss_id = idt_r + idt_s;
    check_finite(
        step,
        &[("loss_g_adv", loss_g_adv), ("loss_cycle", loss_cycle), ("loss_id", loss_id)],
    )?;

    // sunny → rainy → sunny
    let mut d_fake_r = st
        .g_r2s
        .net
        .backward(&mut st.g_r2s.params, t_rec_s, &scaled(&g_cyc_s, lc), true)?
        .expect("input gradient requested");
    let via_d = st
        .d_rainy
        .net
        .backward(&mut st.d_rainy.params, t_d_r, &g_adv_r, true)?
        .expect("input gradient requested");
    d_fake_r.add_assign(&via_d);
    st.g_s2r.net.backward(&mut st.g_s2r.params, t_fake_r, &d_fake_r, false)?;

    // rainy → sunny → rainy
    let mut d_fake_s = st
        .g_s2r
        .net
        .backward(&mut st.g_s2r.params, t_rec_r, &scaled(&g_cyc_r, lc), true)?
        .expect("input gradient requested");
    let via_d = st
        .d_sunny
        .net
        .backward(&mut st.d_sunny.params, t_d_s, &g_adv_s, true)?
        .expect("input gradient requested");
    d_fake_s.add_assign(&via_d);
    st.g_r2s.net.backward(&mut st.g_r2s.params, t_fake_s, &d_fake_s, false)?;

    if li != 0.0 {
        st.g_s2r.net.backward(&mut st.g_s2r.params, t_id_r, &scaled(&g_id_r, li), false)?;
        st.g_r2s.net.backward(&mut st.g_r2s.params, t_id_s, &scaled(&g_id_s, li), false)?;
    }
    st.g_s2r.update(lr, step)?;
    st.g_r2s.update(lr, step)?;

    // Discriminators see fakes from the generators before this update,
    // mixed with older ones from the replay buffers.
    let mut rng = rng_from(indexed_seed(derive_seed(st.seed, stage::TRANSLATOR, purpose::REPLAY), step));
    let pool_r = st.buffer_rainy.query(&fake_r, &mut rng)?;
    let pool_s = st.buffer_sunny.query(&fake_s, &mut rng)?;
    let loss_d_rainy = disc_update(&mut st.d_rainy, r, &pool_r, lr, step)?;
    let loss_d_sunny = disc_update(&mut st.d_sunny, s, &pool_s, lr, step)?;

    st.step = step;
    Ok(LossRecord {
        step,
        terms: vec![
            ("loss_g_adv", loss_g_adv),
            ("loss_cycle", loss_cycle),
            ("loss_id", loss_id),
            ("loss_d_rainy", loss_d_rainy),
            ("loss_d_sunny", loss_d_sunny),
        ],
    })
}

/// Sunny → rainy inference on one image whose sides are multiples of 4.
pub fn translate_sunny_to_rainy(state: &TranslatorState, img: &Image) -> Result<Image> {
    let (h, w) = img.dims();
    if h % 4 != 0 || w % 4 != 0 {
        return Err(Error::dim(format!(
            "translator input {h}×{w} must have sides divisible by 4 (crop first)"
        )));
    }
    state.g_s2r.apply_image(img)
}
