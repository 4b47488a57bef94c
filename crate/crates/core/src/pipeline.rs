//! Stage sequencing over a run directory: translator, then DSN, then SRN,
//! each writing a checkpoint, a CSV loss log and a manifest record.

use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::checkpoint::{write_atomic, Checkpoint, StageKind};
use crate::config::TrainConfig;
use crate::datasets::{ingest_folder, make_micro_dataset, save_png, BatchStream, DatasetIndex, Domain, MicroDatasetManifest};
use crate::dsn::{train_step_dsn, DsnState};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_pipeline, MetricsReport};
use crate::imaging::{crop_to_multiple, images_to_batch, Image};
use crate::kv;
use crate::rng::{derive_seed, purpose, stage};
use crate::srn::{make_pseudo_pairs, pair_seed, super_resolve, train_step_srn, ImageMap, PairSource, PseudoPair, SrnState};
use crate::train::{LossLog, LossRecord, Model};
use crate::translator::{train_step_translator, TranslatorState};

pub const LOCK_FILE: &str = ".rainsr.lock";
pub const RUN_MANIFEST_FILE: &str = "run_manifest.txt";

pub fn checkpoint_path(out_dir: &Path, stage: StageKind) -> PathBuf {
    out_dir.join(format!("{stage}.ckpt"))
}

/// Intermediate checkpoint written every `checkpoint_every` steps.
pub fn snapshot_path(out_dir: &Path, stage: StageKind, step: u64) -> PathBuf {
    out_dir.join(format!("{stage}.step{step:06}.ckpt"))
}

pub fn loss_log_path(out_dir: &Path, stage: StageKind) -> PathBuf {
    out_dir.join(format!("{stage}_loss.csv"))
}

/// Exclusive ownership of a run directory, released on drop.
#[derive(Debug)]
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(RunLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::State(format!(
                "{} is locked by another run (remove {} if that run is gone)",
                dir.display(),
                path.display()
            ))),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageRecord {
    pub stage: StageKind,
    pub fingerprint: String,
    /// Relative to the run directory.
    pub checkpoint: PathBuf,
    pub loss_log: PathBuf,
    pub steps: u64,
    pub wall_time_s: f64,
}

/// Completed stages of a run, always in pipeline order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunManifest {
    pub records: Vec<StageRecord>,
}

impl RunManifest {
    /// Record a finished stage. Records of that stage and of the stages
    /// after it are dropped, since they were built on older inputs.
    pub fn record(&mut self, rec: StageRecord) {
        self.records.retain(|r| r.stage.tag() < rec.stage.tag());
        self.records.push(rec);
    }

    pub fn get(&self, stage: StageKind) -> Option<&StageRecord> {
        self.records.iter().find(|r| r.stage == stage)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            s.push_str(&format!(
                "[{}]\nfingerprint = {}\ncheckpoint = {}\nloss_log = {}\nsteps = {}\nwall_time_s = {:.3}\n",
                r.stage,
                r.fingerprint,
                r.checkpoint.display(),
                r.loss_log.display(),
                r.steps,
                r.wall_time_s
            ));
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: &str| Error::Manifest(format!("run manifest line {line}: {msg}"));
        let entries = kv::parse(text).map_err(|e| bad(e.line, "malformed line"))?;
        let mut records: Vec<StageRecord> = Vec::new();
        for e in entries {
            let stage: StageKind = e.section.parse().map_err(|_| bad(e.line, "unknown stage section"))?;
            if records.last().map(|r| r.stage) != Some(stage) {
                if records.iter().any(|r| r.stage.tag() >= stage.tag()) {
                    return Err(bad(e.line, "stages out of order"));
                }
                records.push(StageRecord {
                    stage,
                    fingerprint: String::new(),
                    checkpoint: PathBuf::new(),
                    loss_log: PathBuf::new(),
                    steps: 0,
                    wall_time_s: 0.0,
                });
            }
            let r = records.last_mut().expect("pushed above");
            match e.key.as_str() {
                "fingerprint" => r.fingerprint = e.value,
                "checkpoint" => r.checkpoint = PathBuf::from(e.value),
                "loss_log" => r.loss_log = PathBuf::from(e.value),
                "steps" => r.steps = e.value.parse().map_err(|_| bad(e.line, "bad step count"))?,
                "wall_time_s" => r.wall_time_s = e.value.parse().map_err(|_| bad(e.line, "bad wall time"))?,
                _ => return Err(bad(e.line, "unknown key")),
            }
        }
        Ok(RunManifest { records })
    }

    /// An absent file reads as an empty manifest.
    pub fn load(out_dir: &Path) -> Result<Self> {
        let path = out_dir.join(RUN_MANIFEST_FILE);
        match std::fs::read_to_string(&path) {
            Ok(text) => Self::parse(&text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => Err(Error::io(&path, e)),
        }
    }

    pub fn save(&self, out_dir: &Path) -> Result<()> {
        write_atomic(&out_dir.join(RUN_MANIFEST_FILE), self.to_text().as_bytes())
    }
}

pub struct StageOutcome {
    pub checkpoint: Checkpoint,
    pub checkpoint_path: PathBuf,
    pub loss_log: PathBuf,
    /// Loss records of the steps run by this call.
    pub records: Vec<LossRecord>,
}

/// Render the procedural dataset described by the config into its root.
pub fn synth_data(cfg: &TrainConfig) -> Result<MicroDatasetManifest> {
    make_micro_dataset(cfg.data_root(), cfg.seed, &cfg.micro_sizes(), &cfg.rain())
}

fn ingest(cfg: &TrainConfig, domain: Domain) -> Result<DatasetIndex> {
    let index = ingest_folder(&cfg.data_root().join(domain.dir_name()), domain)?;
    let expected = match domain {
        Domain::SunnyHr => cfg.data.expect_sunny,
        Domain::RainyHr => cfg.data.expect_rainy,
        Domain::RealLr => 0,
    };
    if expected != 0 && index.len() != expected {
        log::warn!(
            "{domain}: expected {expected} images under {}, found {}",
            index.root.display(),
            index.len()
        );
    }
    Ok(index)
}

/// Ingest the two unpaired training pools.
pub fn ingest_unpaired(cfg: &TrainConfig) -> Result<(DatasetIndex, DatasetIndex)> {
    Ok((ingest(cfg, Domain::SunnyHr)?, ingest(cfg, Domain::RainyHr)?))
}

fn prerequisite(cfg: &TrainConfig, needed: StageKind, by: StageKind) -> Result<Checkpoint> {
    let path = checkpoint_path(&cfg.out_dir, needed);
    if !path.is_file() {
        return Err(Error::Sequencing(format!(
            "the {by} stage needs the {needed} checkpoint at {}; run `train {needed}` first",
            path.display()
        )));
    }
    Checkpoint::load(&path)
}

pub fn load_translator(cfg: &TrainConfig, by: StageKind) -> Result<TranslatorState> {
    let ck = prerequisite(cfg, StageKind::Translator, by)?;
    let step = ck.step;
    ck.into_translator(cfg.translator_settings(step)?)
}

pub fn load_dsn(cfg: &TrainConfig, by: StageKind) -> Result<DsnState> {
    prerequisite(cfg, StageKind::Dsn, by)?.into_dsn(cfg.dsn_settings()?)
}

pub fn load_srn(cfg: &TrainConfig, by: StageKind) -> Result<SrnState> {
    prerequisite(cfg, StageKind::Srn, by)?.into_srn(cfg.srn_settings()?)
}

fn resume_from(path: &Path, stage: StageKind, fingerprint: &str) -> Result<Checkpoint> {
    let ck = Checkpoint::load(path)?;
    if ck.stage != stage {
        return Err(Error::State(format!(
            "cannot resume the {stage} stage from a {} checkpoint",
            ck.stage
        )));
    }
    if ck.fingerprint != fingerprint {
        return Err(Error::State(format!(
            "{} was written under a different configuration (fingerprint {}, current {fingerprint})",
            path.display(),
            ck.fingerprint
        )));
    }
    Ok(ck)
}

/// Open the loss log for a run continuing after `step` completed steps:
/// rows past `step` are dropped, and a fresh run starts an empty file.
/// A resumed run without an earlier log starts one at the resume point.
fn open_log(path: &Path, step: u64) -> Result<LossLog> {
    let kept = if step == 0 {
        String::new()
    } else {
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(Error::io(path, e)),
        };
        let mut kept = String::new();
        for (i, line) in text.lines().enumerate() {
            let row_step = line.split(',').next().and_then(|s| s.parse::<u64>().ok());
            if i == 0 || row_step.is_some_and(|s| s <= step) {
                kept.push_str(line);
                kept.push('\n');
            }
        }
        kept
    };
    write_atomic(path, kept.as_bytes())?;
    LossLog::open(path)
}

struct Loop<'a> {
    cfg: &'a TrainConfig,
    stage: StageKind,
    every: u64,
    log: LossLog,
    records: Vec<LossRecord>,
}

impl Loop<'_> {
    fn after_step(&mut self, rec: LossRecord, total: u64, snapshot: impl FnOnce() -> Checkpoint) -> Result<()> {
        self.log.append(&rec)?;
        if rec.step % 50 == 0 || rec.step == total {
            let terms: Vec<String> = rec.terms.iter().map(|(k, v)| format!("{k}={v:.4}")).collect();
            log::info!("{} step {}/{}: {}", self.stage, rec.step, total, terms.join(" "));
        }
        if self.every > 0 && rec.step % self.every == 0 && rec.step < total {
            snapshot().save(&snapshot_path(&self.cfg.out_dir, self.stage, rec.step))?;
        }
        self.records.push(rec);
        Ok(())
    }
}

/// Run one stage to its configured length, optionally continuing from a
/// checkpoint of the same stage written under the same configuration.
pub fn run_stage(cfg: &TrainConfig, stage_kind: StageKind, resume: Option<&Path>) -> Result<StageOutcome> {
    let _lock = RunLock::acquire(&cfg.out_dir)?;
    let start = Instant::now();
    let fp = cfg.fingerprint();
    let seed = cfg.seed;
    let resumed = match resume {
        Some(p) => Some(resume_from(p, stage_kind, &fp)?),
        None => None,
    };
    let log_path = loss_log_path(&cfg.out_dir, stage_kind);
    let start_step = resumed.as_ref().map_or(0, |c| c.step);
    let mut lp = Loop {
        cfg,
        stage: stage_kind,
        every: 0,
        log: open_log(&log_path, start_step)?,
        records: Vec::new(),
    };
    let (checkpoint, total) = match stage_kind {
        StageKind::Translator => {
            let (sunny, rainy) = ingest_unpaired(cfg)?;
            let total = cfg.translator_steps(sunny.len(), rainy.len());
            let settings = cfg.translator_settings(total)?;
            let mut state = match resumed {
                Some(ck) => ck.into_translator(settings)?,
                None => TranslatorState::new(settings, seed)?,
            };
            let t = &cfg.translator;
            let p = cfg.data.patch_hr;
            let s_stream = BatchStream::new(&sunny, p, t.batch_size, derive_seed(seed, stage::TRANSLATOR, purpose::DATA_A))?;
            let r_stream = BatchStream::new(&rainy, p, t.batch_size, derive_seed(seed, stage::TRANSLATOR, purpose::DATA_B))?;
            lp.every = t.checkpoint_every;
            while state.step < total {
                let i = state.step;
                let rec = train_step_translator(&mut state, &s_stream.batch(i).tensor, &r_stream.batch(i).tensor)?;
                lp.after_step(rec, total, || Checkpoint::from_translator(&state, &fp))?;
            }
            (Checkpoint::from_translator(&state, &fp), total)
        }
        StageKind::Dsn => {
            let translator = load_translator(cfg, stage_kind)?;
            let sunny = ingest(cfg, Domain::SunnyHr)?;
            let real_lr = ingest(cfg, Domain::RealLr)?;
            let d = &cfg.dsn;
            let total = d.steps;
            let mut state = match resumed {
                Some(ck) => ck.into_dsn(cfg.dsn_settings()?)?,
                None => DsnState::new(cfg.dsn_settings()?, seed)?,
            };
            let hr_stream = BatchStream::new(&sunny, cfg.data.patch_hr, d.batch_size, derive_seed(seed, stage::DSN, purpose::DATA_A))?;
            let lr_stream = BatchStream::new(&real_lr, cfg.data.patch_lr, d.batch_size, derive_seed(seed, stage::DSN, purpose::DATA_B))?;
            lp.every = d.checkpoint_every;
            while state.step < total {
                let i = state.step;
                let rainy = images_to_batch::<f32>(&translator.map_images(&hr_stream.patches(i))?)?;
                let rec = train_step_dsn(&mut state, &rainy, &lr_stream.batch(i).tensor)?;
                lp.after_step(rec, total, || Checkpoint::from_dsn(&state, &fp))?;
            }
            (Checkpoint::from_dsn(&state, &fp), total)
        }
        StageKind::Srn => {
            let translator = load_translator(cfg, stage_kind)?;
            let dsn = load_dsn(cfg, stage_kind)?;
            let sunny = ingest(cfg, Domain::SunnyHr)?;
            let c = &cfg.srn;
            let total = c.steps;
            let mut state = match resumed {
                Some(ck) => ck.into_srn(cfg.srn_settings()?)?,
                None => SrnState::new(cfg.srn_settings()?, seed)?,
            };
            let source = PairSource {
                translator: &translator,
                degrader: &dsn,
                critic: if c.use_domain_weights { Some(&dsn) } else { None },
            };
            let stream = BatchStream::new(&sunny, cfg.data.patch_hr, c.batch_size, pair_seed(seed))?;
            lp.every = c.checkpoint_every;
            while state.step < total {
                let batch = source.pair_batch(&stream.patches(state.step))?;
                let rec = train_step_srn(&mut state, &batch)?;
                lp.after_step(rec, total, || Checkpoint::from_srn(&state, &fp))?;
            }
            (Checkpoint::from_srn(&state, &fp), total)
        }
    };
    let ckpt_path = checkpoint_path(&cfg.out_dir, stage_kind);
    checkpoint.save(&ckpt_path)?;
    let mut manifest = RunManifest::load(&cfg.out_dir)?;
    manifest.record(StageRecord {
        stage: stage_kind,
        fingerprint: fp,
        checkpoint: ckpt_path.file_name().map(PathBuf::from).unwrap_or_default(),
        loss_log: log_path.file_name().map(PathBuf::from).unwrap_or_default(),
        steps: total,
        wall_time_s: start.elapsed().as_secs_f64(),
    });
    manifest.save(&cfg.out_dir)?;
    Ok(StageOutcome {
        checkpoint,
        checkpoint_path: ckpt_path,
        loss_log: log_path,
        records: lp.records,
    })
}

/// Score the trained SRN on the paired eval split, writing the report
/// under `<out_dir>/report`.
pub fn evaluate_run(cfg: &TrainConfig) -> Result<MetricsReport> {
    let srn = load_srn(cfg, StageKind::Srn)?;
    let root = cfg.data_root();
    let manifest = MicroDatasetManifest::load(root)?;
    evaluate_pipeline(&srn, root, &manifest, &cfg.out_dir.join("report"), &cfg.fingerprint())
}

/// Load the SRN from a checkpoint file without any configuration.
pub fn load_srn_model(path: &Path) -> Result<Model> {
    let ck = Checkpoint::load(path)?;
    if ck.stage != StageKind::Srn {
        return Err(Error::Version(format!("{} is a {} checkpoint, not srn", path.display(), ck.stage)));
    }
    ck.into_model("srn")
}

/// Crop an LR image to a multiple of 4 on each side and upscale it 4×.
pub fn infer_image(srn: &Model, lr: &Image) -> Result<Image> {
    super_resolve(srn, &crop_to_multiple(lr, 4)?)
}

/// Write `count` pseudo-pairs from the trained first two stages as
/// `NNNN_lr.png` / `NNNN_hr.png` under `out`.
pub fn bake_pairs(cfg: &TrainConfig, count: usize, out: &Path) -> Result<Vec<PseudoPair>> {
    let translator = load_translator(cfg, StageKind::Srn)?;
    let dsn = load_dsn(cfg, StageKind::Srn)?;
    let sunny = ingest(cfg, Domain::SunnyHr)?.load_all()?;
    let source = PairSource {
        translator: &translator,
        degrader: &dsn,
        critic: if cfg.srn.use_domain_weights { Some(&dsn) } else { None },
    };
    let pairs = make_pseudo_pairs(&source, &sunny, cfg.data.patch_hr, count, pair_seed(cfg.seed))?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    for (i, p) in pairs.iter().enumerate() {
        save_png(&p.lr_rainy, &out.join(format!("{i:04}_lr.png")))?;
        save_png(&p.hr_clean, &out.join(format!("{i:04}_hr.png")))?;
    }
    Ok(pairs)
}
