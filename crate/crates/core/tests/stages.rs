use rainsr::datasets::{render_scene, BatchStream};
use rainsr::dsn::*;
use rainsr::imaging::{images_to_batch, resize_bicubic, Image, Scale};
use rainsr::losses::loss_l1;
use rainsr::nets::{Family, NetworkSpec};
use rainsr::srn::*;
use rainsr::tensor::Tensor;
use rainsr::train::Model;
use rainsr::translator::*;
use rainsr::Error;

fn scenes(n: usize, side: usize, first: u64) -> Vec<Image> {
    (0..n as u64).map(|i| render_scene(side, side, first + i)).collect()
}

fn batch(n: usize, side: usize, first: u64) -> Tensor<f32> {
    images_to_batch(&scenes(n, side, first)).unwrap()
}

fn mean_abs_diff(a: &Image, b: &Image) -> f64 {
    assert_eq!(a.dims(), b.dims());
    let n = a.data().len() as f64;
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs() as f64).sum::<f64>() / n
}

fn same_model(a: &Model, b: &Model) -> bool {
    a.params.same_values(&b.params) && a.opt == b.opt
}

fn tiny_translator() -> TranslatorSettings {
    let mut s = TranslatorSettings::desk();
    s.generator = NetworkSpec::minimal(Family::TranslatorGen);
    s.discriminator = NetworkSpec::minimal(Family::PatchDisc);
    s.buffer_capacity = 3;
    s
}

fn tiny_dsn() -> DsnSettings {
    let mut s = DsnSettings::desk();
    s.dsn = NetworkSpec::minimal(Family::Dsn);
    s.discriminator = NetworkSpec::minimal(Family::PatchDisc);
    s
}

fn tiny_srn() -> SrnSettings {
    let mut s = SrnSettings::desk();
    s.srn = NetworkSpec::minimal(Family::Srn);
    s.discriminator = NetworkSpec::minimal(Family::PatchDisc);
    s
}

struct Identity;

impl ImageMap for Identity {
    fn map_images(&self, imgs: &[Image]) -> rainsr::Result<Vec<Image>> {
        Ok(imgs.to_vec())
    }
}

struct BicubicQuarter;

impl ImageMap for BicubicQuarter {
    fn map_images(&self, imgs: &[Image]) -> rainsr::Result<Vec<Image>> {
        imgs.iter().map(|i| resize_bicubic(i, Scale::QUARTER)).collect()
    }
}

/// Scores every LR pixel with the same raw value.
struct ConstCritic(f32);

impl Critic for ConstCritic {
    fn score(&self, lr: &Tensor<f32>) -> rainsr::Result<Tensor<f32>> {
        let (n, _, h, w) = lr.dims4()?;
        Ok(Tensor::full(&[n, 1, h / 8, w / 8], self.0))
    }
}

#[test]
fn translator_zero_step_size_keeps_parameters() {
    let mut settings = tiny_translator();
    settings.adam.lr = 0.0;
    let mut st = TranslatorState::new(settings, 3).unwrap();
    let before = st.clone();
    let rec = train_step_translator(&mut st, &batch(2, 16, 0), &batch(2, 16, 10)).unwrap();
    assert_eq!(rec.step, 1);
    for name in TRANSLATOR_TERMS {
        assert!(rec.get(name).unwrap().is_finite(), "{name}");
    }
    for (a, b) in [
        (&st.g_s2r, &before.g_s2r),
        (&st.g_r2s, &before.g_r2s),
        (&st.d_rainy, &before.d_rainy),
        (&st.d_sunny, &before.d_sunny),
    ] {
        assert!(a.params.same_values(&b.params));
    }
    assert_eq!(st.step, 1);
    assert_eq!(st.buffer_rainy.len(), 2);
}

#[test]
fn translator_step_is_deterministic_and_inputs_untouched() {
    let st0 = TranslatorState::new(tiny_translator(), 5).unwrap();
    let (s, r) = (batch(2, 16, 0), batch(2, 16, 10));
    let (s_copy, r_copy) = (s.clone(), r.clone());
    let mut a = st0.clone();
    let mut b = st0.clone();
    for _ in 0..3 {
        let ra = train_step_translator(&mut a, &s, &r).unwrap();
        let rb = train_step_translator(&mut b, &s, &r).unwrap();
        assert_eq!(ra, rb);
    }
    assert!(same_model(&a.g_s2r, &b.g_s2r) && same_model(&a.d_sunny, &b.d_sunny));
    assert_eq!(a.buffer_sunny, b.buffer_sunny);
    assert_eq!((s, r), (s_copy, r_copy));
}

#[test]
fn translator_terms_match_direct_evaluation() {
    let st = TranslatorState::new(tiny_translator(), 9).unwrap();
    let (s, r) = (batch(2, 16, 0), batch(2, 16, 10));
    let fwd = |m: &Model, x: &Tensor<f32>| m.infer(x).unwrap();
    let cycle = loss_l1(&fwd(&st.g_r2s, &fwd(&st.g_s2r, &s)), &s).unwrap().0
        + loss_l1(&fwd(&st.g_s2r, &fwd(&st.g_r2s, &r)), &r).unwrap().0;
    let id = loss_l1(&fwd(&st.g_s2r, &r), &r).unwrap().0 + loss_l1(&fwd(&st.g_r2s, &s), &s).unwrap().0;
    let mut st = st;
    let rec = train_step_translator(&mut st, &s, &r).unwrap();
    assert!((rec.get("loss_cycle").unwrap() - cycle).abs() < 1e-9);
    assert!((rec.get("loss_id").unwrap() - id).abs() < 1e-9);
}

#[test]
fn translator_rejects_mismatched_batches_without_advancing() {
    let mut st = TranslatorState::new(tiny_translator(), 0).unwrap();
    let err = train_step_translator(&mut st, &batch(2, 16, 0), &batch(1, 16, 0)).unwrap_err();
    assert!(matches!(err, Error::Dimension(_)));
    assert_eq!(st.step, 0);
}

#[test]
fn translator_divergence_names_term_and_keeps_state() {
    let mut st = TranslatorState::new(tiny_translator(), 0).unwrap();
    let before = st.clone();
    let bad = Tensor::full(&[1, 3, 16, 16], f32::NAN);
    match train_step_translator(&mut st, &bad, &batch(1, 16, 0)) {
        Err(Error::Divergence { term, step }) => {
            assert_eq!(step, 1);
            assert!(TRANSLATOR_TERMS.contains(&term.as_str()), "{term}");
        }
        other => panic!("expected divergence, got {other:?}"),
    }
    assert_eq!(st.step, 0);
    assert!(st.g_s2r.params.same_values(&before.g_s2r.params));
}

#[test]
fn translate_keeps_size_and_range_and_init_is_mild() {
    let st = TranslatorState::new(TranslatorSettings::desk(), 0).unwrap();
    let img = render_scene(64, 64, 1);
    let out = translate_sunny_to_rainy(&st, &img).unwrap();
    assert_eq!(out.dims(), img.dims());
    assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
    let delta = mean_abs_diff(&out, &img);
    println!("untrained translator mean |delta| = {delta:.4}");
    assert!(delta <= 0.5);
    let odd = render_scene(62, 64, 1);
    assert!(matches!(translate_sunny_to_rainy(&st, &odd), Err(Error::Dimension(_))));
}

#[test]
fn degrade_is_quarter_size_and_close_to_bicubic_at_init() {
    let st = DsnState::new(DsnSettings::desk(), 0).unwrap();
    let img = render_scene(64, 64, 2);
    let lr = degrade(&st, &img).unwrap();
    assert_eq!(lr.dims(), (16, 16));
    assert!(lr.data().iter().all(|v| (0.0..=1.0).contains(v)));
    let gap = mean_abs_diff(&lr, &resize_bicubic(&img, Scale::QUARTER).unwrap());
    println!("untrained dsn L1 to bicubic = {gap:.5}");
    assert!(gap <= 0.1);
    for (h, w) in [(8, 8), (32, 48), (20, 4)] {
        let out = degrade(&st, &render_scene(h, w, 0)).unwrap();
        assert_eq!(out.dims(), (h / 4, w / 4));
    }
    assert!(matches!(degrade(&st, &render_scene(30, 32, 0)), Err(Error::Dimension(_))));
}

#[test]
fn dsn_zero_step_size_and_determinism() {
    let (hr, lr) = (batch(2, 32, 0), images_to_batch(&scenes(2, 8, 20)).unwrap());
    let mut settings = tiny_dsn();
    settings.adam.lr = 0.0;
    let mut st = DsnState::new(settings, 1).unwrap();
    let before = st.clone();
    let rec = train_step_dsn(&mut st, &hr, &lr).unwrap();
    for name in DSN_TERMS {
        assert!(rec.get(name).is_some(), "{name}");
    }
    assert!(st.dsn.params.same_values(&before.dsn.params));
    assert!(st.d_lr.params.same_values(&before.d_lr.params));

    let st0 = DsnState::new(tiny_dsn(), 1).unwrap();
    let (mut a, mut b) = (st0.clone(), st0);
    for _ in 0..3 {
        assert_eq!(train_step_dsn(&mut a, &hr, &lr).unwrap(), train_step_dsn(&mut b, &hr, &lr).unwrap());
    }
    assert!(same_model(&a.dsn, &b.dsn) && same_model(&a.d_lr, &b.d_lr));
}

#[test]
fn dsn_rejects_non_quarter_lr_batches() {
    let mut st = DsnState::new(tiny_dsn(), 1).unwrap();
    let err = train_step_dsn(&mut st, &batch(1, 32, 0), &batch(1, 16, 0)).unwrap_err();
    assert!(matches!(err, Error::Dimension(_)));
    assert_eq!(st.step, 0);
}

#[test]
fn domain_weight_stubs_hit_clamp_endpoints() {
    let lr = batch(2, 16, 0);
    for (raw, want) in [(1.0, 1.0), (0.0, 0.0), (1.7, 1.0), (-0.3, 0.0), (0.25, 0.25)] {
        let w = domain_distance_weight(&ConstCritic(raw), &lr).unwrap();
        assert_eq!(w.shape(), &[2, 1, 16, 16]);
        assert!(w.data().iter().all(|&v| v == want), "raw {raw}");
    }
    let img = render_scene(16, 16, 0);
    assert_eq!(domain_distance_weight_image(&ConstCritic(3.0), &img).unwrap(), vec![1.0; 256]);
}

#[test]
fn domain_weight_is_monotone_in_critic_output() {
    let lr = batch(1, 16, 0);
    let levels = [-1.0, 0.0, 0.2, 0.6, 1.0, 2.0];
    let maps: Vec<f32> = levels
        .iter()
        .map(|&r| domain_distance_weight(&ConstCritic(r), &lr).unwrap().data()[0])
        .collect();
    assert!(maps.windows(2).all(|p| p[0] <= p[1]), "{maps:?}");
}

#[test]
fn super_resolve_scales_by_four_and_starts_near_bicubic() {
    let st = SrnState::new(SrnSettings::desk(), 0).unwrap();
    for (h, w) in [(16, 16), (32, 48), (8, 9)] {
        let lr = render_scene(h, w, 4);
        let sr = super_resolve(&st.srn, &lr).unwrap();
        assert_eq!(sr.dims(), (4 * h, 4 * w));
        assert!(sr.data().iter().all(|v| (0.0..=1.0).contains(v)));
        let gap = mean_abs_diff(&sr, &resize_bicubic(&lr, Scale::FOUR).unwrap());
        assert!(gap <= 0.1, "{h}x{w}: {gap}");
    }
    let small = render_scene(7, 16, 0);
    assert!(matches!(super_resolve(&st.srn, &small), Err(Error::Dimension(_))));
}

#[test]
fn stub_pipeline_reproduces_bicubic_pairs() {
    let sunny = scenes(3, 80, 30);
    let source = PairSource {
        translator: &Identity,
        degrader: &BicubicQuarter,
        critic: None,
    };
    let pairs = make_pseudo_pairs(&source, &sunny, 64, 5, 11).unwrap();
    assert_eq!(pairs.len(), 5);
    let stream = BatchStream::from_images(&sunny, 64, 1, 11).unwrap();
    for (i, p) in pairs.iter().enumerate() {
        assert_eq!(p.hr_clean.dims(), (64, 64));
        assert_eq!(p.lr_rainy.dims(), (16, 16));
        assert!(p.weight_map.is_none());
        // The HR side is a crop of a sunny image at the stream's origin.
        assert_eq!(p.hr_clean, stream.patches(i as u64)[0]);
        let want = resize_bicubic(&p.hr_clean, Scale::QUARTER).unwrap();
        let worst = p
            .lr_rainy
            .data()
            .iter()
            .zip(want.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(worst <= 1e-6, "pair {i}: {worst}");
    }
    let again = make_pseudo_pairs(&source, &sunny, 64, 5, 11).unwrap();
    assert!(pairs.iter().zip(&again).all(|(a, b)| a.lr_rainy == b.lr_rainy && a.hr_clean == b.hr_clean));
}

#[test]
fn pseudo_pairs_through_untrained_stages_carry_weights() {
    let tr = TranslatorState::new(tiny_translator(), 0).unwrap();
    let dsn = DsnState::new(tiny_dsn(), 0).unwrap();
    let source = PairSource {
        translator: &tr,
        degrader: &dsn,
        critic: Some(&dsn),
    };
    let pairs = make_pseudo_pairs(&source, &scenes(2, 64, 0), 32, 2, 0).unwrap();
    for p in &pairs {
        assert_eq!(p.lr_rainy.dims(), (8, 8));
        let w = p.weight_map.as_ref().unwrap();
        assert_eq!(w.shape(), &[1, 1, 8, 8]);
        assert!(w.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn srn_zero_step_size_and_determinism() {
    let source = PairSource {
        translator: &Identity,
        degrader: &BicubicQuarter,
        critic: None,
    };
    let pb = source.pair_batch(&scenes(2, 32, 0)).unwrap();
    let mut settings = tiny_srn();
    settings.adam.lr = 0.0;
    let mut st = SrnState::new(settings, 2).unwrap();
    let before = st.clone();
    let rec = train_step_srn(&mut st, &pb).unwrap();
    for name in SRN_TERMS {
        assert!(rec.get(name).is_some(), "{name}");
    }
    assert_eq!(rec.get("mean_weight"), Some(1.0));
    assert!(st.srn.params.same_values(&before.srn.params));
    assert!(st.d_hr.params.same_values(&before.d_hr.params));

    let st0 = SrnState::new(tiny_srn(), 2).unwrap();
    let (mut a, mut b) = (st0.clone(), st0);
    for _ in 0..3 {
        assert_eq!(train_step_srn(&mut a, &pb).unwrap(), train_step_srn(&mut b, &pb).unwrap());
    }
    assert!(same_model(&a.srn, &b.srn) && same_model(&a.d_hr, &b.d_hr));
}

#[test]
fn stage_settings_reject_bad_weights() {
    let mut t = tiny_translator();
    t.lambda_cyc = 0.0;
    assert!(TranslatorState::new(t, 0).is_err());
    let mut d = tiny_dsn();
    d.lambda_adv = -1.0;
    assert!(DsnState::new(d, 0).is_err());
    let mut s = tiny_srn();
    s.lambda_pix = 0.0;
    assert!(SrnState::new(s, 0).is_err());
}
