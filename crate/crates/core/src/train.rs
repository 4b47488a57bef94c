//! Pieces shared by the three training stages: a trainable network bundle,
//! per-step loss records, the step-size schedule and the fake-image replay
//! buffer.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;

use crate::error::{Error, Result};
use crate::imaging::{from_model_range, images_to_batch, Image};
use crate::nets::{opt_step, AdamConfig, Network, NetworkSpec, OptimizerState, ParamStore};
use crate::tensor::Tensor;

/// A network together with its 32-bit parameters and optimizer moments.
#[derive(Clone, Debug)]
pub struct Model {
    pub net: Network,
    pub params: ParamStore<f32>,
    pub opt: OptimizerState<f32>,
}

impl Model {
    pub fn build(spec: NetworkSpec, seed: u64, adam: AdamConfig) -> Result<Self> {
        let (net, params) = Network::build::<f32>(spec, seed)?;
        let opt = OptimizerState::new(&params, adam);
        Ok(Model { net, params, opt })
    }

    pub fn spec(&self) -> NetworkSpec {
        self.net.spec().expect("models are built from a spec")
    }

    pub fn infer(&self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        self.net.infer(&self.params, x)
    }

    /// Apply the network to one `[0,1]` image and map the result back,
    /// clamping into `[0,1]`.
    pub fn apply_image(&self, img: &Image) -> Result<Image> {
        let x = images_to_batch::<f32>(std::slice::from_ref(img))?;
        from_model_range(&self.infer(&x)?, 0)
    }

    /// Adam step at `lr_factor` times the configured step size. A
    /// divergence error is re-labelled with the training step.
    pub(crate) fn update(&mut self, lr_factor: f64, step: u64) -> Result<()> {
        let base = self.opt.config.lr;
        self.opt.config.lr = base * lr_factor;
        let r = opt_step(&mut self.params, &mut self.opt);
        self.opt.config.lr = base;
        r.map_err(|e| match e {
            Error::Divergence { term, .. } => Error::Divergence { term, step },
            other => other,
        })
    }
}

/// Step-size multiplier over a stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Schedule {
    Constant,
    /// Full step size for the first half, then linear decay to zero at
    /// `total` steps.
    LinearDecayFinalHalf { total: u64 },
}

impl Schedule {
    /// Multiplier for the update that completes step `step` (1-based).
    pub fn factor(&self, step: u64) -> f64 {
        match *self {
            Schedule::Constant => 1.0,
            Schedule::LinearDecayFinalHalf { total } => {
                let half = total / 2;
                if step <= half || total == 0 {
                    1.0
                } else {
                    let remaining = total.saturating_sub(step - 1) as f64;
                    (remaining / (total - half) as f64).clamp(0.0, 1.0)
                }
            }
        }
    }
}

/// Named loss terms of one training step.
#[derive(Clone, Debug, PartialEq)]
pub struct LossRecord {
    pub step: u64,
    pub terms: Vec<(&'static str, f64)>,
}

impl LossRecord {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.terms.iter().find(|(n, _)| *n == name).map(|&(_, v)| v)
    }

    pub fn csv_header(&self) -> String {
        let mut s = String::from("step");
        for (n, _) in &self.terms {
            s.push(',');
            s.push_str(n);
        }
        s
    }

    /// Values are written with round-trip precision.
    pub fn csv_row(&self) -> String {
        let mut s = self.step.to_string();
        for (_, v) in &self.terms {
            let _ = write!(s, ",{v:?}");
        }
        s
    }
}

/// Fail with a divergence error naming the first non-finite term.
pub(crate) fn check_finite(step: u64, terms: &[(&str, f64)]) -> Result<()> {
    match terms.iter().find(|(_, v)| !v.is_finite()) {
        Some((name, _)) => Err(Error::Divergence {
            term: name.to_string(),
            step,
        }),
        None => Ok(()),
    }
}

/// Appends loss records to a CSV file, writing the header when the file
/// is new.
pub struct LossLog {
    path: PathBuf,
    file: std::fs::File,
    header_written: bool,
}

impl LossLog {
    pub fn open(path: &Path) -> Result<Self> {
        let header_written = path.metadata().map(|m| m.len() > 0).unwrap_or(false);
        let file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(LossLog {
            path: path.to_path_buf(),
            file,
            header_written,
        })
    }

    pub fn append(&mut self, rec: &LossRecord) -> Result<()> {
        let mut text = String::new();
        if !self.header_written {
            text.push_str(&rec.csv_header());
            text.push('\n');
            self.header_written = true;
        }
        text.push_str(&rec.csv_row());
        text.push('\n');
        self.file
            .write_all(text.as_bytes())
            .map_err(|e| Error::io(&self.path, e))
    }
}

/// Pool of past generator outputs. Once full, each incoming fake is
/// returned as-is or, with probability ½, swapped for a random stored one.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Tensor<f32>>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer {
            capacity,
            items: Vec::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn items(&self) -> &[Tensor<f32>] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Rebuild from saved contents.
    pub fn restore(capacity: usize, items: Vec<Tensor<f32>>) -> Result<Self> {
        if items.len() > capacity {
            return Err(Error::State(format!(
                "{} buffered images exceed capacity {capacity}",
                items.len()
            )));
        }
        Ok(ReplayBuffer { capacity, items })
    }

    /// Push the samples of an N×C×H×W batch and return the batch the
    /// discriminator should see.
    pub fn query(&mut self, fakes: &Tensor<f32>, rng: &mut impl Rng) -> Result<Tensor<f32>> {
        let (n, ..) = fakes.dims4()?;
        if self.capacity == 0 {
            return Ok(fakes.clone());
        }
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let sample = fakes.sample(i)?;
            if self.items.len() < self.capacity {
                self.items.push(sample.clone());
                out.push(sample);
            } else if rng.gen::<f64>() < 0.5 {
                let j = rng.gen_range(0..self.capacity as u64) as usize;
                out.push(std::mem::replace(&mut self.items[j], sample));
            } else {
                out.push(sample);
            }
        }
        Tensor::concat(&out)
    }
}
