//! Run configuration: the `key = value` text format, per-profile defaults
//! and the settings fingerprint.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::datasets::{MicroSizes, RainParams};
use crate::dsn::DsnSettings;
use crate::error::{Error, Result};
use crate::kv;
use crate::nets::{AdamConfig, Family, NetworkSpec};
use crate::srn::SrnSettings;
use crate::train::Schedule;
use crate::translator::TranslatorSettings;

/// Environment variable consulted when no dataset root is configured.
pub const DATA_ROOT_ENV: &str = "RAINSR_DATA_ROOT";
/// The only supported upscaling factor.
pub const SCALE: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Profile {
    Paper,
    Desk,
}

impl Profile {
    fn name(self) -> &'static str {
        match self {
            Profile::Paper => "paper",
            Profile::Desk => "desk",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScheduleKind {
    Constant,
    LinearDecayFinalHalf,
}

impl ScheduleKind {
    fn name(self) -> &'static str {
        match self {
            ScheduleKind::Constant => "constant",
            ScheduleKind::LinearDecayFinalHalf => "linear_decay_final_half",
        }
    }

    pub fn with_total(self, total: u64) -> Schedule {
        match self {
            ScheduleKind::Constant => Schedule::Constant,
            ScheduleKind::LinearDecayFinalHalf => Schedule::LinearDecayFinalHalf { total },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataConfig {
    /// Dataset root holding `sunny_hr/`, `rainy_hr/`, `real_lr/`, `eval/`.
    pub root: Option<PathBuf>,
    /// Micro-dataset sizes used by `synth-data`.
    pub sunny: usize,
    pub rainy: usize,
    pub real_lr: usize,
    pub eval: usize,
    pub image_size: usize,
    pub patch_hr: usize,
    pub patch_lr: usize,
    /// Image counts the ingested folders are expected to hold (0 = any).
    pub expect_sunny: usize,
    pub expect_rainy: usize,
    pub rain_streaks: usize,
    pub rain_length: f64,
    pub rain_width: f64,
    pub rain_angle: f64,
    pub rain_opacity: f64,
    pub rain_contrast_dim: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TranslatorConfig {
    /// Training steps when `epochs` is 0.
    pub steps: u64,
    /// Passes over the smaller training folder; overrides `steps` when > 0.
    pub epochs: u64,
    pub batch_size: usize,
    pub base_channels: usize,
    pub residual_blocks: usize,
    pub disc_channels: usize,
    pub lambda_cyc: f64,
    pub lambda_id: f64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub buffer_capacity: usize,
    pub schedule: ScheduleKind,
    pub checkpoint_every: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DsnConfig {
    pub steps: u64,
    pub batch_size: usize,
    pub base_channels: usize,
    pub residual_blocks: usize,
    pub disc_channels: usize,
    pub lambda_content: f64,
    pub lambda_adv: f64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub schedule: ScheduleKind,
    pub checkpoint_every: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SrnConfig {
    pub steps: u64,
    pub batch_size: usize,
    pub base_channels: usize,
    pub residual_blocks: usize,
    pub disc_channels: usize,
    pub lambda_pix: f64,
    pub lambda_adv: f64,
    pub use_domain_weights: bool,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub schedule: ScheduleKind,
    pub checkpoint_every: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub profile: Profile,
    pub seed: u64,
    pub scale: usize,
    /// Directory receiving checkpoints, loss logs and the run manifest.
    pub out_dir: PathBuf,
    pub data: DataConfig,
    pub translator: TranslatorConfig,
    pub dsn: DsnConfig,
    pub srn: SrnConfig,
}

enum Field<'a> {
    U64(&'a mut u64),
    Usize(&'a mut usize),
    F64(&'a mut f64),
    Bool(&'a mut bool),
    Path(&'a mut PathBuf),
    OptPath(&'a mut Option<PathBuf>),
    Schedule(&'a mut ScheduleKind),
}

impl Field<'_> {
    fn render(&self) -> String {
        match self {
            Field::U64(v) => v.to_string(),
            Field::Usize(v) => v.to_string(),
            Field::F64(v) => format!("{:?}", **v),
            Field::Bool(v) => v.to_string(),
            Field::Path(p) => p.display().to_string(),
            Field::OptPath(p) => p.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            Field::Schedule(s) => s.name().to_string(),
        }
    }

    fn set(&mut self, text: &str) -> std::result::Result<(), String> {
        fn num<T: std::str::FromStr>(text: &str, what: &str) -> std::result::Result<T, String> {
            text.parse().map_err(|_| format!("expected {what}, got `{text}`"))
        }
        match self {
            Field::U64(v) => **v = num(text, "a non-negative integer")?,
            Field::Usize(v) => **v = num(text, "a non-negative integer")?,
            Field::F64(v) => {
                let x: f64 = num(text, "a number")?;
                if !x.is_finite() {
                    return Err(format!("expected a finite number, got `{text}`"));
                }
                **v = x;
            }
            Field::Bool(v) => **v = num(text, "true or false")?,
            Field::Path(p) => **p = PathBuf::from(text),
            Field::OptPath(p) => **p = if text.is_empty() { None } else { Some(PathBuf::from(text)) },
            Field::Schedule(s) => {
                **s = match text {
                    "constant" => ScheduleKind::Constant,
                    "linear_decay_final_half" => ScheduleKind::LinearDecayFinalHalf,
                    _ => return Err(format!("expected constant or linear_decay_final_half, got `{text}`")),
                }
            }
        }
        Ok(())
    }
}

impl TrainConfig {
    /// Laptop-scale defaults: the procedural micro-dataset and short runs.
    pub fn desk() -> Self {
        TrainConfig {
            profile: Profile::Desk,
            seed: 0,
            scale: SCALE,
            out_dir: PathBuf::from("runs/desk"),
            data: DataConfig {
                root: Some(PathBuf::from("data/micro")),
                sunny: 40,
                rainy: 40,
                real_lr: 40,
                eval: 8,
                image_size: 64,
                patch_hr: 64,
                patch_lr: 16,
                expect_sunny: 0,
                expect_rainy: 0,
                rain_streaks: 40,
                rain_length: 9.0,
                rain_width: 1.0,
                rain_angle: 15.0,
                rain_opacity: 0.35,
                rain_contrast_dim: 0.25,
            },
            translator: TranslatorConfig {
                steps: 300,
                epochs: 0,
                batch_size: 4,
                base_channels: 16,
                residual_blocks: 3,
                disc_channels: 16,
                lambda_cyc: 10.0,
                lambda_id: 5.0,
                lr: 2e-4,
                beta1: 0.5,
                beta2: 0.999,
                buffer_capacity: 50,
                schedule: ScheduleKind::Constant,
                checkpoint_every: 100,
            },
            dsn: DsnConfig {
                steps: 200,
                batch_size: 4,
                base_channels: 16,
                residual_blocks: 2,
                disc_channels: 16,
                lambda_content: 1.0,
                lambda_adv: 0.05,
                lr: 2e-4,
                beta1: 0.5,
                beta2: 0.999,
                schedule: ScheduleKind::Constant,
                checkpoint_every: 100,
            },
            srn: SrnConfig {
                steps: 300,
                batch_size: 4,
                base_channels: 32,
                residual_blocks: 4,
                disc_channels: 16,
                lambda_pix: 1.0,
                lambda_adv: 0.05,
                use_domain_weights: false,
                lr: 2e-3,
                beta1: 0.9,
                beta2: 0.999,
                schedule: ScheduleKind::Constant,
                checkpoint_every: 100,
            },
        }
    }

    /// Full-scale settings for a user-supplied BDD100K subset. The dataset
    /// root must come from the config file or `RAINSR_DATA_ROOT`.
    pub fn paper() -> Self {
        let mut c = Self::desk();
        c.profile = Profile::Paper;
        c.out_dir = PathBuf::from("runs/paper");
        c.data.root = None;
        c.data.patch_hr = 256;
        c.data.patch_lr = 64;
        c.data.expect_sunny = 344;
        c.data.expect_rainy = 306;
        c.translator.steps = 0;
        c.translator.epochs = 3750;
        c.translator.batch_size = 1;
        c.translator.base_channels = 64;
        c.translator.residual_blocks = 9;
        c.translator.disc_channels = 64;
        c.translator.schedule = ScheduleKind::LinearDecayFinalHalf;
        c.translator.checkpoint_every = 10_000;
        c.dsn.steps = 20_000;
        c.dsn.batch_size = 16;
        c.dsn.base_channels = 64;
        c.dsn.residual_blocks = 8;
        c.dsn.disc_channels = 64;
        c.dsn.checkpoint_every = 5_000;
        c.srn.steps = 20_000;
        c.srn.batch_size = 16;
        c.srn.base_channels = 64;
        c.srn.residual_blocks = 16;
        c.srn.disc_channels = 64;
        c.srn.use_domain_weights = true;
        c.srn.lr = 2e-4;
        c.srn.checkpoint_every = 5_000;
        c
    }

    pub fn defaults(profile: Profile) -> Self {
        match profile {
            Profile::Paper => Self::paper(),
            Profile::Desk => Self::desk(),
        }
    }

    fn fields(&mut self) -> Vec<(&'static str, &'static str, Field<'_>)> {
        let TrainConfig {
            seed,
            scale,
            out_dir,
            data: d,
            translator: t,
            dsn: b,
            srn: c,
            ..
        } = self;
        vec![
            ("", "seed", Field::U64(seed)),
            ("", "scale", Field::Usize(scale)),
            ("", "out_dir", Field::Path(out_dir)),
            ("data", "root", Field::OptPath(&mut d.root)),
            ("data", "sunny", Field::Usize(&mut d.sunny)),
            ("data", "rainy", Field::Usize(&mut d.rainy)),
            ("data", "real_lr", Field::Usize(&mut d.real_lr)),
            ("data", "eval", Field::Usize(&mut d.eval)),
            ("data", "image_size", Field::Usize(&mut d.image_size)),
            ("data", "patch_hr", Field::Usize(&mut d.patch_hr)),
            ("data", "patch_lr", Field::Usize(&mut d.patch_lr)),
            ("data", "expect_sunny", Field::Usize(&mut d.expect_sunny)),
            ("data", "expect_rainy", Field::Usize(&mut d.expect_rainy)),
            ("data", "rain_streaks", Field::Usize(&mut d.rain_streaks)),
            ("data", "rain_length", Field::F64(&mut d.rain_length)),
            ("data", "rain_width", Field::F64(&mut d.rain_width)),
            ("data", "rain_angle", Field::F64(&mut d.rain_angle)),
            ("data", "rain_opacity", Field::F64(&mut d.rain_opacity)),
            ("data", "rain_contrast_dim", Field::F64(&mut d.rain_contrast_dim)),
            ("translator", "steps", Field::U64(&mut t.steps)),
            ("translator", "epochs", Field::U64(&mut t.epochs)),
            ("translator", "batch_size", Field::Usize(&mut t.batch_size)),
            ("translator", "base_channels", Field::Usize(&mut t.base_channels)),
            ("translator", "residual_blocks", Field::Usize(&mut t.residual_blocks)),
            ("translator", "disc_channels", Field::Usize(&mut t.disc_channels)),
            ("translator", "lambda_cyc", Field::F64(&mut t.lambda_cyc)),
            ("translator", "lambda_id", Field::F64(&mut t.lambda_id)),
            ("translator", "lr", Field::F64(&mut t.lr)),
            ("translator", "beta1", Field::F64(&mut t.beta1)),
            ("translator", "beta2", Field::F64(&mut t.beta2)),
            ("translator", "buffer_capacity", Field::Usize(&mut t.buffer_capacity)),
            ("translator", "schedule", Field::Schedule(&mut t.schedule)),
            ("translator", "checkpoint_every", Field::U64(&mut t.checkpoint_every)),
            ("dsn", "steps", Field::U64(&mut b.steps)),
            ("dsn", "batch_size", Field::Usize(&mut b.batch_size)),
            ("dsn", "base_channels", Field::Usize(&mut b.base_channels)),
            ("dsn", "residual_blocks", Field::Usize(&mut b.residual_blocks)),
            ("dsn", "disc_channels", Field::Usize(&mut b.disc_channels)),
            ("dsn", "lambda_content", Field::F64(&mut b.lambda_content)),
            ("dsn", "lambda_adv", Field::F64(&mut b.lambda_adv)),
            ("dsn", "lr", Field::F64(&mut b.lr)),
            ("dsn", "beta1", Field::F64(&mut b.beta1)),
            ("dsn", "beta2", Field::F64(&mut b.beta2)),
            ("dsn", "schedule", Field::Schedule(&mut b.schedule)),
            ("dsn", "checkpoint_every", Field::U64(&mut b.checkpoint_every)),
            ("srn", "steps", Field::U64(&mut c.steps)),
            ("srn", "batch_size", Field::Usize(&mut c.batch_size)),
            ("srn", "base_channels", Field::Usize(&mut c.base_channels)),
            ("srn", "residual_blocks", Field::Usize(&mut c.residual_blocks)),
            ("srn", "disc_channels", Field::Usize(&mut c.disc_channels)),
            ("srn", "lambda_pix", Field::F64(&mut c.lambda_pix)),
            ("srn", "lambda_adv", Field::F64(&mut c.lambda_adv)),
            ("srn", "use_domain_weights", Field::Bool(&mut c.use_domain_weights)),
            ("srn", "lr", Field::F64(&mut c.lr)),
            ("srn", "beta1", Field::F64(&mut c.beta1)),
            ("srn", "beta2", Field::F64(&mut c.beta2)),
            ("srn", "schedule", Field::Schedule(&mut c.schedule)),
            ("srn", "checkpoint_every", Field::U64(&mut c.checkpoint_every)),
        ]
    }

    /// Parse config text. Relative paths are resolved against `base_dir`;
    /// a missing dataset root falls back to `RAINSR_DATA_ROOT`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        Self::parse_with_env(text, base_dir, std::env::var_os(DATA_ROOT_ENV).map(PathBuf::from))
    }

    /// [`TrainConfig::parse`] with an explicit environment fallback.
    pub fn parse_with_env(text: &str, base_dir: &Path, env_root: Option<PathBuf>) -> Result<Self> {
        let entries = kv::parse(text).map_err(|e| Error::Config {
            key: String::new(),
            line: e.line,
            message: format!("expected `key = value` or `[section]`, got `{}`", e.text.trim()),
        })?;
        let mut profile = (Profile::Desk, 0);
        for e in entries.iter().filter(|e| e.section.is_empty() && e.key == "profile") {
            profile.0 = match e.value.as_str() {
                "desk" => Profile::Desk,
                "paper" => Profile::Paper,
                other => {
                    return Err(Error::Config {
                        key: "profile".into(),
                        line: e.line,
                        message: format!("expected desk or paper, got `{other}`"),
                    })
                }
            };
            profile.1 = e.line;
        }
        let mut cfg = Self::defaults(profile.0);
        let mut lines: HashMap<String, usize> = HashMap::new();
        lines.insert("profile".into(), profile.1);
        let mut root_set = false;
        {
            let mut fields = cfg.fields();
            for e in entries.iter().filter(|e| !(e.section.is_empty() && e.key == "profile")) {
                let full = qualified(&e.section, &e.key);
                let field = fields
                    .iter_mut()
                    .find(|(s, k, _)| *s == e.section && *k == e.key)
                    .ok_or_else(|| Error::Config {
                        key: full.clone(),
                        line: e.line,
                        message: "unknown key".into(),
                    })?;
                field.2.set(&e.value).map_err(|message| Error::Config {
                    key: full.clone(),
                    line: e.line,
                    message,
                })?;
                root_set |= full == "data.root";
                lines.insert(full, e.line);
            }
        }
        if !root_set && cfg.data.root.is_none() {
            cfg.data.root = env_root;
        }
        let line_of = |k: &str| lines.get(k).copied().unwrap_or(profile.1);
        cfg.validate(&line_of)?;
        if let Some(root) = &cfg.data.root {
            if root.is_relative() && root_set {
                cfg.data.root = Some(base_dir.join(root));
            }
        }
        if cfg.out_dir.is_relative() && lines.contains_key("out_dir") {
            cfg.out_dir = base_dir.join(&cfg.out_dir);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    fn validate(&self, line_of: &dyn Fn(&str) -> usize) -> Result<()> {
        let err = |key: &str, message: String| Error::Config {
            key: key.into(),
            line: line_of(key),
            message,
        };
        if self.scale != SCALE {
            return Err(err("scale", format!("the scale factor is fixed at {SCALE}")));
        }
        if self.data.root.is_none() {
            return Err(err(
                "data.root",
                format!("no dataset root: set data.root or {DATA_ROOT_ENV}"),
            ));
        }
        let d = &self.data;
        if d.image_size % 4 != 0 || d.image_size < 16 {
            return Err(err("data.image_size", "must be a multiple of 4 and at least 16".into()));
        }
        if d.patch_lr * SCALE != d.patch_hr {
            return Err(err("data.patch_lr", format!("must be data.patch_hr / {SCALE}")));
        }
        if d.patch_hr % 8 != 0 || d.patch_lr % 8 != 0 {
            return Err(err("data.patch_hr", "patches must be multiples of 8 (32 at HR)".into()));
        }
        for (k, v) in [
            ("translator.batch_size", self.translator.batch_size),
            ("dsn.batch_size", self.dsn.batch_size),
            ("srn.batch_size", self.srn.batch_size),
            ("translator.base_channels", self.translator.base_channels),
            ("translator.disc_channels", self.translator.disc_channels),
            ("dsn.base_channels", self.dsn.base_channels),
            ("dsn.disc_channels", self.dsn.disc_channels),
            ("srn.base_channels", self.srn.base_channels),
            ("srn.disc_channels", self.srn.disc_channels),
        ] {
            if v == 0 {
                return Err(err(k, "must be positive".into()));
            }
        }
        for (k, v, strict) in [
            ("translator.lambda_cyc", self.translator.lambda_cyc, true),
            ("translator.lambda_id", self.translator.lambda_id, false),
            ("dsn.lambda_content", self.dsn.lambda_content, true),
            ("dsn.lambda_adv", self.dsn.lambda_adv, false),
            ("srn.lambda_pix", self.srn.lambda_pix, true),
            ("srn.lambda_adv", self.srn.lambda_adv, false),
            ("translator.lr", self.translator.lr, false),
            ("dsn.lr", self.dsn.lr, false),
            ("srn.lr", self.srn.lr, false),
        ] {
            if v < 0.0 || (strict && v == 0.0) {
                return Err(err(k, format!("must be {}", if strict { "positive" } else { "non-negative" })));
            }
        }
        for (k, v) in [
            ("translator.beta1", self.translator.beta1),
            ("translator.beta2", self.translator.beta2),
            ("dsn.beta1", self.dsn.beta1),
            ("dsn.beta2", self.dsn.beta2),
            ("srn.beta1", self.srn.beta1),
            ("srn.beta2", self.srn.beta2),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(err(k, "must lie in [0,1)".into()));
            }
        }
        self.rain().validate().map_err(|e| err("data.rain_contrast_dim", e.to_string()))?;
        Ok(())
    }

    /// Every setting that can influence results, one `key = value` per
    /// line in a fixed order. The output directory is left out so that
    /// identical runs written to different places share a fingerprint.
    pub fn canonical_text(&self) -> String {
        let mut s = format!("profile = {}\n", self.profile.name());
        let mut copy = self.clone();
        for (section, key, field) in copy.fields() {
            if key == "out_dir" {
                continue;
            }
            let _ = writeln!(s, "{} = {}", qualified(section, key), field.render());
        }
        s
    }

    /// Hex SHA-256 of [`TrainConfig::canonical_text`].
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_text().as_bytes()))
    }

    pub fn data_root(&self) -> &Path {
        self.data.root.as_deref().expect("validated configs have a dataset root")
    }

    pub fn rain(&self) -> RainParams {
        let d = &self.data;
        RainParams {
            streak_count: d.rain_streaks,
            length_px: d.rain_length,
            width_px: d.rain_width,
            angle_deg: d.rain_angle,
            opacity: d.rain_opacity,
            contrast_dim: d.rain_contrast_dim,
            seed: 0,
        }
    }

    pub fn micro_sizes(&self) -> MicroSizes {
        let d = &self.data;
        MicroSizes {
            sunny: d.sunny,
            rainy: d.rainy,
            real_lr: d.real_lr,
            eval: d.eval,
            height: d.image_size,
            width: d.image_size,
        }
    }

    /// Translator steps: `epochs` passes over the smaller pool when set,
    /// otherwise `steps`.
    pub fn translator_steps(&self, sunny_count: usize, rainy_count: usize) -> u64 {
        let t = &self.translator;
        if t.epochs == 0 {
            return t.steps;
        }
        let per_epoch = sunny_count.min(rainy_count).div_ceil(t.batch_size).max(1) as u64;
        t.epochs * per_epoch
    }

    pub fn translator_settings(&self, total_steps: u64) -> Result<TranslatorSettings> {
        let t = &self.translator;
        Ok(TranslatorSettings {
            generator: NetworkSpec::new(Family::TranslatorGen, t.base_channels, t.residual_blocks)?,
            discriminator: NetworkSpec::new(Family::PatchDisc, t.disc_channels, 0)?,
            lambda_cyc: t.lambda_cyc,
            lambda_id: t.lambda_id,
            adam: AdamConfig {
                lr: t.lr,
                beta1: t.beta1,
                beta2: t.beta2,
                eps: 1e-8,
            },
            buffer_capacity: t.buffer_capacity,
            schedule: t.schedule.with_total(total_steps),
        })
    }

    pub fn dsn_settings(&self) -> Result<DsnSettings> {
        let b = &self.dsn;
        Ok(DsnSettings {
            dsn: NetworkSpec::new(Family::Dsn, b.base_channels, b.residual_blocks)?,
            discriminator: NetworkSpec::new(Family::PatchDisc, b.disc_channels, 0)?,
            lambda_content: b.lambda_content,
            lambda_adv: b.lambda_adv,
            adam: AdamConfig {
                lr: b.lr,
                beta1: b.beta1,
                beta2: b.beta2,
                eps: 1e-8,
            },
            schedule: b.schedule.with_total(b.steps),
        })
    }

    pub fn srn_settings(&self) -> Result<SrnSettings> {
        let c = &self.srn;
        Ok(SrnSettings {
            srn: NetworkSpec::new(Family::Srn, c.base_channels, c.residual_blocks)?,
            discriminator: NetworkSpec::new(Family::PatchDisc, c.disc_channels, 0)?,
            lambda_pix: c.lambda_pix,
            lambda_adv: c.lambda_adv,
            use_domain_weights: c.use_domain_weights,
            adam: AdamConfig {
                lr: c.lr,
                beta1: c.beta1,
                beta2: c.beta2,
                eps: 1e-8,
            },
            schedule: c.schedule.with_total(c.steps),
        })
    }
}

fn qualified(section: &str, key: &str) -> String {
    if section.is_empty() {
        key.to_string()
    } else {
        format!("{section}.{key}")
    }
}
