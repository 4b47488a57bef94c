//! Single-file checkpoints with an explicit little-endian layout.
//!
//! ```text
//! magic       8 bytes  "RAINSRCK"
//! version     u32      FORMAT_VERSION
//! stage       u8       1 translator, 2 dsn, 3 srn
//! step        u64      completed training steps
//! seed        u64      master seed
//! fingerprint str      config fingerprint
//! models      u32 count, then per model:
//!   role      str
//!   family    u8, base_channels u32, residual_blocks u32
//!   init_seed u64
//!   adam      f64 lr, f64 beta1, f64 beta2, f64 eps, u64 step
//!   params    table
//!   first     table (Adam first moments, same names)
//!   second    table (Adam second moments, same names)
//! buffers     u32 count, then per buffer: role str, capacity u32, table
//! checksum    32 bytes SHA-256 of everything above
//!
//! str   = u32 byte length + UTF-8
//! table = u32 count, then per tensor: name str, rank u32,
//!         dims u64 × rank, values f32 × product(dims)
//! ```
//! Integers and floats are little-endian.

use std::io::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::dsn::{DsnSettings, DsnState};
use crate::error::{Error, Result};
use crate::nets::{AdamConfig, Family, NetworkSpec};
use crate::srn::{SrnSettings, SrnState};
use crate::tensor::Tensor;
use crate::train::{Model, ReplayBuffer};
use crate::translator::{TranslatorSettings, TranslatorState};

pub const MAGIC: &[u8; 8] = b"RAINSRCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StageKind {
    Translator,
    Dsn,
    Srn,
}

impl StageKind {
    pub const ALL: [StageKind; 3] = [StageKind::Translator, StageKind::Dsn, StageKind::Srn];

    pub fn tag(self) -> u8 {
        match self {
            StageKind::Translator => 1,
            StageKind::Dsn => 2,
            StageKind::Srn => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.tag() == tag)
    }

    pub fn name(self) -> &'static str {
        match self {
            StageKind::Translator => "translator",
            StageKind::Dsn => "dsn",
            StageKind::Srn => "srn",
        }
    }
}

impl std::fmt::Display for StageKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for StageKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::State(format!("unknown stage `{s}`")))
    }
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub stage: StageKind,
    pub step: u64,
    pub seed: u64,
    pub fingerprint: String,
    pub models: Vec<(String, Model)>,
    pub buffers: Vec<(String, ReplayBuffer)>,
}

impl Checkpoint {
    pub fn from_translator(state: &TranslatorState, fingerprint: &str) -> Self {
        Checkpoint {
            stage: StageKind::Translator,
            step: state.step,
            seed: state.seed,
            fingerprint: fingerprint.to_string(),
            models: vec![
                ("g_s2r".into(), state.g_s2r.clone()),
                ("g_r2s".into(), state.g_r2s.clone()),
                ("d_rainy".into(), state.d_rainy.clone()),
                ("d_sunny".into(), state.d_sunny.clone()),
            ],
            buffers: vec![
                ("rainy".into(), state.buffer_rainy.clone()),
                ("sunny".into(), state.buffer_sunny.clone()),
            ],
        }
    }

    pub fn from_dsn(state: &DsnState, fingerprint: &str) -> Self {
        Checkpoint {
            stage: StageKind::Dsn,
            step: state.step,
            seed: state.seed,
            fingerprint: fingerprint.to_string(),
            models: vec![("dsn".into(), state.dsn.clone()), ("d_lr".into(), state.d_lr.clone())],
            buffers: Vec::new(),
        }
    }

    pub fn from_srn(state: &SrnState, fingerprint: &str) -> Self {
        Checkpoint {
            stage: StageKind::Srn,
            step: state.step,
            seed: state.seed,
            fingerprint: fingerprint.to_string(),
            models: vec![("srn".into(), state.srn.clone()), ("d_hr".into(), state.d_hr.clone())],
            buffers: Vec::new(),
        }
    }

    fn expect_stage(&self, stage: StageKind) -> Result<()> {
        if self.stage != stage {
            return Err(Error::Version(format!(
                "expected a {stage} checkpoint, found a {} checkpoint",
                self.stage
            )));
        }
        Ok(())
    }

    /// Remove the model stored under `role`, checking it against `spec`.
    /// The optimizer settings are taken from `adam`.
    fn take_model(&mut self, role: &str, spec: NetworkSpec, adam: AdamConfig) -> Result<Model> {
        let i = self
            .models
            .iter()
            .position(|(r, _)| r == role)
            .ok_or_else(|| Error::Version(format!("checkpoint lacks model `{role}`")))?;
        let (_, mut model) = self.models.remove(i);
        if model.spec() != spec {
            return Err(Error::Version(format!(
                "model `{role}` is {:?}, configuration expects {:?}",
                model.spec(),
                spec
            )));
        }
        model.opt.config = adam;
        Ok(model)
    }

    fn take_buffer(&mut self, role: &str) -> Result<ReplayBuffer> {
        let i = self
            .buffers
            .iter()
            .position(|(r, _)| r == role)
            .ok_or_else(|| Error::Version(format!("checkpoint lacks buffer `{role}`")))?;
        Ok(self.buffers.remove(i).1)
    }

    pub fn into_translator(mut self, settings: TranslatorSettings) -> Result<TranslatorState> {
        self.expect_stage(StageKind::Translator)?;
        settings.validate()?;
        let (g, d, a) = (settings.generator, settings.discriminator, settings.adam);
        let buffer_rainy = self.take_buffer("rainy")?;
        let buffer_sunny = self.take_buffer("sunny")?;
        if buffer_rainy.capacity() != settings.buffer_capacity || buffer_sunny.capacity() != settings.buffer_capacity {
            return Err(Error::Version("replay buffer capacity differs from the configuration".into()));
        }
        Ok(TranslatorState {
            g_s2r: self.take_model("g_s2r", g, a)?,
            g_r2s: self.take_model("g_r2s", g, a)?,
            d_rainy: self.take_model("d_rainy", d, a)?,
            d_sunny: self.take_model("d_sunny", d, a)?,
            buffer_rainy,
            buffer_sunny,
            step: self.step,
            seed: self.seed,
            settings,
        })
    }

    pub fn into_dsn(mut self, settings: DsnSettings) -> Result<DsnState> {
        self.expect_stage(StageKind::Dsn)?;
        settings.validate()?;
        Ok(DsnState {
            dsn: self.take_model("dsn", settings.dsn, settings.adam)?,
            d_lr: self.take_model("d_lr", settings.discriminator, settings.adam)?,
            step: self.step,
            seed: self.seed,
            settings,
        })
    }

    pub fn into_srn(mut self, settings: SrnSettings) -> Result<SrnState> {
        self.expect_stage(StageKind::Srn)?;
        settings.validate()?;
        Ok(SrnState {
            srn: self.take_model("srn", settings.srn, settings.adam)?,
            d_hr: self.take_model("d_hr", settings.discriminator, settings.adam)?,
            step: self.step,
            seed: self.seed,
            settings,
        })
    }

    /// Take the model stored under `role` without any configuration.
    pub fn into_model(mut self, role: &str) -> Result<Model> {
        let i = self
            .models
            .iter()
            .position(|(r, _)| r == role)
            .ok_or_else(|| Error::Version(format!("checkpoint lacks model `{role}`")))?;
        Ok(self.models.remove(i).1)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Vec::new();
        w.extend_from_slice(MAGIC);
        put_u32(&mut w, FORMAT_VERSION);
        w.push(self.stage.tag());
        put_u64(&mut w, self.step);
        put_u64(&mut w, self.seed);
        put_str(&mut w, &self.fingerprint);
        put_u32(&mut w, self.models.len() as u32);
        for (role, m) in &self.models {
            put_str(&mut w, role);
            let spec = m.spec();
            w.push(spec.family.tag());
            put_u32(&mut w, spec.base_channels as u32);
            put_u32(&mut w, spec.residual_blocks as u32);
            put_u64(&mut w, m.params.seed());
            let c = m.opt.config;
            for v in [c.lr, c.beta1, c.beta2, c.eps] {
                w.extend_from_slice(&v.to_le_bytes());
            }
            put_u64(&mut w, m.opt.step);
            let names = m.params.names();
            put_table(&mut w, names, m.params.values());
            put_table(&mut w, names, &m.opt.first);
            put_table(&mut w, names, &m.opt.second);
        }
        put_u32(&mut w, self.buffers.len() as u32);
        for (role, b) in &self.buffers {
            put_str(&mut w, role);
            put_u32(&mut w, b.capacity() as u32);
            let names: Vec<String> = (0..b.len()).map(|i| i.to_string()).collect();
            put_table(&mut w, &names, b.items());
        }
        let digest = Sha256::digest(&w);
        w.extend_from_slice(&digest);
        w
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 4 || &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::Version("not a checkpoint file".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::Version(format!(
                "format version {version}, this build reads version {FORMAT_VERSION}"
            )));
        }
        if bytes.len() < 12 + 32 {
            return Err(Error::Version("truncated checkpoint".into()));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::Version("checksum mismatch (corrupt or truncated file)".into()));
        }
        let mut r = Reader { buf: body, pos: 12 };
        let stage = StageKind::from_tag(r.u8()?).ok_or_else(|| Error::Version("unknown stage tag".into()))?;
        let step = r.u64()?;
        let seed = r.u64()?;
        let fingerprint = r.string()?;
        let n_models = r.u32()?;
        let mut models = Vec::new();
        for _ in 0..n_models {
            let role = r.string()?;
            let family = Family::from_tag(r.u8()?).ok_or_else(|| Error::Version("unknown network family".into()))?;
            let base = r.u32()? as usize;
            let blocks = r.u32()? as usize;
            let spec = NetworkSpec::new(family, base, blocks).map_err(|e| Error::Version(e.to_string()))?;
            let init_seed = r.u64()?;
            let adam = AdamConfig {
                lr: r.f64()?,
                beta1: r.f64()?,
                beta2: r.f64()?,
                eps: r.f64()?,
            };
            let opt_step = r.u64()?;
            let mut model = Model::build(spec, init_seed, adam)?;
            let params = r.table()?;
            let first = r.table()?;
            let second = r.table()?;
            if params.len() != model.params.len() || first.len() != params.len() || second.len() != params.len() {
                return Err(Error::Version(format!(
                    "model `{role}` stores {} tensors, its network has {}",
                    params.len(),
                    model.params.len()
                )));
            }
            for (i, (name, value)) in params.into_iter().enumerate() {
                if model.params.names()[i] != name || model.params.value(i).shape() != value.shape() {
                    return Err(Error::Version(format!("model `{role}`: unexpected tensor `{name}`")));
                }
                model.params.set_value(i, value)?;
            }
            model.opt.step = opt_step;
            model.opt.first = first.into_iter().map(|(_, t)| t).collect();
            model.opt.second = second.into_iter().map(|(_, t)| t).collect();
            if !model.opt.matches(&model.params) {
                return Err(Error::Version(format!("model `{role}`: optimizer moments mismatch")));
            }
            models.push((role, model));
        }
        let n_buffers = r.u32()?;
        let mut buffers = Vec::new();
        for _ in 0..n_buffers {
            let role = r.string()?;
            let capacity = r.u32()? as usize;
            let items = r.table()?.into_iter().map(|(_, t)| t).collect();
            buffers.push((role, ReplayBuffer::restore(capacity, items)?));
        }
        if r.pos != body.len() {
            return Err(Error::Version("trailing bytes after checkpoint body".into()));
        }
        Ok(Checkpoint {
            stage,
            step,
            seed,
            fingerprint,
            models,
            buffers,
        })
    }

    /// Write atomically: the bytes go to a temporary file in the target
    /// directory which is then renamed over `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Version(m) => Error::Version(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

/// Replace `path` with `bytes` via a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(tmp.path(), e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn put_u32(w: &mut Vec<u8>, v: u32) {
    w.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(w: &mut Vec<u8>, v: u64) {
    w.extend_from_slice(&v.to_le_bytes());
}

fn put_str(w: &mut Vec<u8>, s: &str) {
    put_u32(w, s.len() as u32);
    w.extend_from_slice(s.as_bytes());
}

fn put_table(w: &mut Vec<u8>, names: &[String], tensors: &[Tensor<f32>]) {
    put_u32(w, tensors.len() as u32);
    for (name, t) in names.iter().zip(tensors) {
        put_str(w, name);
        put_u32(w, t.shape().len() as u32);
        for &d in t.shape() {
            put_u64(w, d as u64);
        }
        for v in t.data() {
            w.extend_from_slice(&v.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Version("truncated checkpoint".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Version("invalid UTF-8 in checkpoint".into()))
    }

    fn table(&mut self) -> Result<Vec<(String, Tensor<f32>)>> {
        let n = self.u32()?;
        let mut out = Vec::new();
        for _ in 0..n {
            let name = self.string()?;
            let rank = self.u32()? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(usize::try_from(self.u64()?).map_err(|_| Error::Version("dimension overflow".into()))?);
            }
            let len = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| Error::Version("dimension overflow".into()))?;
            let raw = self.take(len.checked_mul(4).ok_or_else(|| Error::Version("dimension overflow".into()))?)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            out.push((name, Tensor::from_vec(&shape, data)?));
        }
        Ok(out)
    }
}
