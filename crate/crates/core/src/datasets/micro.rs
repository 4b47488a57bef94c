use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;

use crate::error::{Error, Result};
use crate::imaging::{resize_bicubic, Image, Scale};
use crate::kv;
use crate::rng::{derive_seed, indexed_seed, purpose, rng_from, stage};

use super::io::{quantize, save_png, Domain};
use super::rain::{synth_rain, RainParams};

pub const MANIFEST_FILE: &str = "manifest.txt";
const FORMAT: &str = "rainsr-micro/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MicroSizes {
    pub sunny: usize,
    pub rainy: usize,
    /// Held-out rainy scenes reduced ÷4 to form the real-LR pool.
    pub real_lr: usize,
    pub eval: usize,
    pub height: usize,
    pub width: usize,
}

impl MicroSizes {
    pub fn desk() -> Self {
        MicroSizes {
            sunny: 40,
            rainy: 40,
            real_lr: 40,
            eval: 8,
            height: 64,
            width: 64,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.height < 16 || self.width < 16 || self.height % 4 != 0 || self.width % 4 != 0 {
            return Err(Error::dim(format!(
                "scene size {}×{} must be a multiple of 4 and at least 16",
                self.height, self.width
            )));
        }
        Ok(())
    }

    fn count(&self, domain: Domain) -> usize {
        match domain {
            Domain::SunnyHr => self.sunny,
            Domain::RainyHr => self.rainy,
            Domain::RealLr => self.real_lr,
        }
    }

    /// First scene identifier of each block; blocks never overlap.
    fn first_scene(&self, domain: Option<Domain>) -> u64 {
        let s = self.sunny as u64;
        let r = s + self.rainy as u64;
        let l = r + self.real_lr as u64;
        match domain {
            Some(Domain::SunnyHr) => 0,
            Some(Domain::RainyHr) => s,
            Some(Domain::RealLr) => r,
            None => l,
        }
    }
}

/// A training file and the procedural scene it was rendered from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrainFile {
    pub name: String,
    pub scene: u64,
}

/// A paired evaluation triplet; paths are relative to the dataset root.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvalRecord {
    pub name: String,
    pub scene: u64,
    pub hr: PathBuf,
    pub rainy_hr: PathBuf,
    pub lr: PathBuf,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MicroDatasetManifest {
    pub seed: u64,
    pub sizes: MicroSizes,
    /// Template rain settings; image `scene` uses seed
    /// `indexed_seed(rain.seed, scene)`.
    pub rain: RainParams,
    pub paired_eval: bool,
    pub sunny_hr: Vec<TrainFile>,
    pub rainy_hr: Vec<TrainFile>,
    pub real_lr: Vec<TrainFile>,
    pub eval: Vec<EvalRecord>,
}

impl MicroDatasetManifest {
    pub fn files(&self, domain: Domain) -> &[TrainFile] {
        match domain {
            Domain::SunnyHr => &self.sunny_hr,
            Domain::RainyHr => &self.rainy_hr,
            Domain::RealLr => &self.real_lr,
        }
    }

    fn files_mut(&mut self, domain: Domain) -> &mut Vec<TrainFile> {
        match domain {
            Domain::SunnyHr => &mut self.sunny_hr,
            Domain::RainyHr => &mut self.rainy_hr,
            Domain::RealLr => &mut self.real_lr,
        }
    }

    /// Scene identifiers used by one training pool.
    pub fn scenes(&self, domain: Domain) -> BTreeSet<u64> {
        self.files(domain).iter().map(|f| f.scene).collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let r = &self.rain;
        let z = &self.sizes;
        let _ = writeln!(s, "format = {FORMAT}");
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "height = {}", z.height);
        let _ = writeln!(s, "width = {}", z.width);
        let _ = writeln!(s, "paired_eval = {}", self.paired_eval);
        let _ = writeln!(s, "count.sunny_hr = {}", z.sunny);
        let _ = writeln!(s, "count.rainy_hr = {}", z.rainy);
        let _ = writeln!(s, "count.real_lr = {}", z.real_lr);
        let _ = writeln!(s, "count.eval = {}", z.eval);
        let _ = writeln!(s, "rain.streak_count = {}", r.streak_count);
        let _ = writeln!(s, "rain.length_px = {:?}", r.length_px);
        let _ = writeln!(s, "rain.width_px = {:?}", r.width_px);
        let _ = writeln!(s, "rain.angle_deg = {:?}", r.angle_deg);
        let _ = writeln!(s, "rain.opacity = {:?}", r.opacity);
        let _ = writeln!(s, "rain.contrast_dim = {:?}", r.contrast_dim);
        let _ = writeln!(s, "rain.seed = {}", r.seed);
        for domain in Domain::ALL {
            let _ = writeln!(s, "\n[{domain}]");
            for f in self.files(domain) {
                let _ = writeln!(s, "{} = scene {}", f.name, f.scene);
            }
        }
        let _ = writeln!(s, "\n[eval]");
        for e in &self.eval {
            let _ = writeln!(
                s,
                "{} = scene {}; hr {}; rainy_hr {}; lr {}",
                e.name,
                e.scene,
                e.hr.display(),
                e.rainy_hr.display(),
                e.lr.display()
            );
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let entries = kv::parse(text).map_err(|e| Error::Manifest(format!("line {}: `{}`", e.line, e.text)))?;
        let bad = |e: &kv::Entry, what: &str| Error::Manifest(format!("line {}: {what} `{}`", e.line, e.value));
        let int = |e: &kv::Entry| e.value.parse::<u64>().map_err(|_| bad(e, "expected an integer"));
        let float = |e: &kv::Entry| e.value.parse::<f64>().map_err(|_| bad(e, "expected a number"));

        let mut m = MicroDatasetManifest {
            seed: 0,
            sizes: MicroSizes {
                sunny: 0,
                rainy: 0,
                real_lr: 0,
                eval: 0,
                height: 0,
                width: 0,
            },
            rain: RainParams::desk(0),
            paired_eval: false,
            sunny_hr: Vec::new(),
            rainy_hr: Vec::new(),
            real_lr: Vec::new(),
            eval: Vec::new(),
        };
        let mut format_seen = false;
        for e in &entries {
            match (e.section.as_str(), e.key.as_str()) {
                ("", "format") => {
                    if e.value != FORMAT {
                        return Err(bad(e, "unsupported manifest format"));
                    }
                    format_seen = true;
                }
                ("", "seed") => m.seed = int(e)?,
                ("", "height") => m.sizes.height = int(e)? as usize,
                ("", "width") => m.sizes.width = int(e)? as usize,
                ("", "paired_eval") => {
                    m.paired_eval = e.value.parse().map_err(|_| bad(e, "expected true/false"))?
                }
                ("", "count.sunny_hr") => m.sizes.sunny = int(e)? as usize,
                ("", "count.rainy_hr") => m.sizes.rainy = int(e)? as usize,
                ("", "count.real_lr") => m.sizes.real_lr = int(e)? as usize,
                ("", "count.eval") => m.sizes.eval = int(e)? as usize,
                ("", "rain.streak_count") => m.rain.streak_count = int(e)? as usize,
                ("", "rain.length_px") => m.rain.length_px = float(e)?,
                ("", "rain.width_px") => m.rain.width_px = float(e)?,
                ("", "rain.angle_deg") => m.rain.angle_deg = float(e)?,
                ("", "rain.opacity") => m.rain.opacity = float(e)?,
                ("", "rain.contrast_dim") => m.rain.contrast_dim = float(e)?,
                ("", "rain.seed") => m.rain.seed = int(e)?,
                ("eval", name) => {
                    let mut rec = EvalRecord {
                        name: name.to_string(),
                        scene: 0,
                        hr: PathBuf::new(),
                        rainy_hr: PathBuf::new(),
                        lr: PathBuf::new(),
                    };
                    for field in e.value.split(';') {
                        let (k, v) = field.trim().split_once(' ').ok_or_else(|| bad(e, "malformed eval field"))?;
                        match k {
                            "scene" => rec.scene = v.trim().parse().map_err(|_| bad(e, "bad scene id"))?,
                            "hr" => rec.hr = PathBuf::from(v.trim()),
                            "rainy_hr" => rec.rainy_hr = PathBuf::from(v.trim()),
                            "lr" => rec.lr = PathBuf::from(v.trim()),
                            _ => return Err(bad(e, "unknown eval field")),
                        }
                    }
                    if rec.hr.as_os_str().is_empty() || rec.lr.as_os_str().is_empty() {
                        return Err(Error::Manifest(format!(
                            "line {}: eval entry `{name}` lacks ground truth or input",
                            e.line
                        )));
                    }
                    m.eval.push(rec);
                }
                (section, name) => {
                    let domain = Domain::ALL
                        .into_iter()
                        .find(|d| d.dir_name() == section)
                        .ok_or_else(|| Error::Manifest(format!("line {}: unknown key `{name}`", e.line)))?;
                    let scene = e
                        .value
                        .strip_prefix("scene ")
                        .and_then(|v| v.trim().parse().ok())
                        .ok_or_else(|| bad(e, "expected `scene <id>`"))?;
                    m.files_mut(domain).push(TrainFile {
                        name: name.to_string(),
                        scene,
                    });
                }
            }
        }
        if !format_seen {
            return Err(Error::Manifest("missing format line".into()));
        }
        Ok(m)
    }

    pub fn load(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Self::parse(&text)
    }
}

fn jitter(rng: &mut impl Rng, base: [f64; 3], spread: f64) -> [f64; 3] {
    std::array::from_fn(|k| (base[k] + spread * (2.0 * rng.gen::<f64>() - 1.0)).clamp(0.0, 1.0))
}

#[derive(Clone, Copy)]
enum Shape {
    Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
    Disc { cx: f64, cy: f64, r: f64 },
}

impl Shape {
    fn contains(&self, px: f64, py: f64) -> bool {
        match *self {
            Shape::Rect { x0, y0, x1, y1 } => px >= x0 && px < x1 && py >= y0 && py < y1,
            Shape::Disc { cx, cy, r } => (px - cx).powi(2) + (py - cy).powi(2) <= r * r,
        }
    }
}

/// A procedural clean street scene: sky gradient above a horizon, building
/// blocks standing on it, a road with lane dashes, a few cars and trees,
/// and low-amplitude per-pixel texture noise.
pub fn render_scene(height: usize, width: usize, seed: u64) -> Image {
    let mut rng = rng_from(seed);
    let (h, w) = (height as f64, width as f64);
    let horizon = h * (0.35 + 0.2 * rng.gen::<f64>());
    let sky_top = jitter(&mut rng, [0.45, 0.6, 0.85], 0.1);
    let sky_low = jitter(&mut rng, [0.75, 0.8, 0.9], 0.08);
    let road_near = jitter(&mut rng, [0.3, 0.3, 0.32], 0.06);
    let road_far = jitter(&mut rng, [0.45, 0.45, 0.47], 0.06);

    // Painter's order: later shapes cover earlier ones.
    let mut shapes: Vec<(Shape, [f64; 3])> = Vec::new();
    let buildings = 2 + (rng.gen::<f64>() * 4.0) as usize;
    for _ in 0..buildings {
        let bw = w * (0.12 + 0.25 * rng.gen::<f64>());
        let x0 = rng.gen::<f64>() * w - 0.5 * bw;
        let top = horizon * (0.1 + 0.7 * rng.gen::<f64>());
        let shade = 0.25 + 0.45 * rng.gen::<f64>();
        let tint = jitter(&mut rng, [shade, shade * 0.95, shade * 0.9], 0.08);
        shapes.push((
            Shape::Rect {
                x0,
                y0: top,
                x1: x0 + bw,
                y1: horizon,
            },
            tint,
        ));
    }
    let dash_y = horizon + 0.55 * (h - horizon);
    let mut x = rng.gen::<f64>() * 0.2 * w;
    while x < w {
        shapes.push((
            Shape::Rect {
                x0: x,
                y0: dash_y,
                x1: x + 0.08 * w,
                y1: dash_y + (0.025 * h).max(1.0),
            },
            jitter(&mut rng, [0.92, 0.9, 0.75], 0.05),
        ));
        x += 0.2 * w;
    }
    let trees = (rng.gen::<f64>() * 3.0) as usize;
    for _ in 0..trees {
        let r = h * (0.06 + 0.06 * rng.gen::<f64>());
        shapes.push((
            Shape::Disc {
                cx: rng.gen::<f64>() * w,
                cy: horizon - 0.6 * r,
                r,
            },
            jitter(&mut rng, [0.2, 0.45, 0.2], 0.08),
        ));
    }
    let cars = 1 + (rng.gen::<f64>() * 3.0) as usize;
    for _ in 0..cars {
        let depth = rng.gen::<f64>();
        let cw = w * (0.12 + 0.14 * depth);
        let ch = 0.45 * cw;
        let base = horizon + (0.15 + 0.8 * depth) * (h - horizon);
        let x0 = rng.gen::<f64>() * (w - cw);
        let paint: [f64; 3] = std::array::from_fn(|_| rng.gen::<f64>());
        shapes.push((
            Shape::Rect {
                x0,
                y0: base - ch,
                x1: x0 + cw,
                y1: base,
            },
            paint,
        ));
    }

    let mut data = vec![0f32; height * width * 3];
    const SS: usize = 2;
    for y in 0..height {
        for x in 0..width {
            let mut acc = [0.0; 3];
            for sy in 0..SS {
                for sx in 0..SS {
                    let px = x as f64 + (sx as f64 + 0.5) / SS as f64;
                    let py = y as f64 + (sy as f64 + 0.5) / SS as f64;
                    let mut c: [f64; 3] = if py < horizon {
                        let t = py / horizon;
                        std::array::from_fn(|k| sky_top[k] + (sky_low[k] - sky_top[k]) * t)
                    } else {
                        let t = (py - horizon) / (h - horizon);
                        std::array::from_fn(|k| road_far[k] + (road_near[k] - road_far[k]) * t)
                    };
                    for (shape, fill) in &shapes {
                        if shape.contains(px, py) {
                            c = *fill;
                        }
                    }
                    for k in 0..3 {
                        acc[k] += c[k];
                    }
                }
            }
            for k in 0..3 {
                let noise = 0.04 * (rng.gen::<f64>() - 0.5);
                data[(y * width + x) * 3 + k] = (acc[k] / (SS * SS) as f64 + noise).clamp(0.0, 1.0) as f32;
            }
        }
    }
    Image::new(height, width, data).expect("scene samples are clamped")
}

/// An evaluation triplet before its LR member is written to disk.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalTriplet {
    /// Clean HR, 8-bit quantized.
    pub hr: Image,
    /// Rain applied to `hr`, 8-bit quantized.
    pub rainy_hr: Image,
    /// `resize_bicubic(rainy_hr, 1/4)` before 8-bit storage.
    pub lr: Image,
}

fn scene_seed(seed: u64, scene: u64) -> u64 {
    indexed_seed(derive_seed(seed, stage::DATA, purpose::SCENES), scene)
}

fn rain_template(seed: u64, rain: &RainParams) -> RainParams {
    RainParams {
        seed: derive_seed(seed, stage::DATA, purpose::RAIN),
        ..*rain
    }
}

fn rainy_scene(seed: u64, scene: u64, sizes: &MicroSizes, rain: &RainParams) -> Result<(Image, Image)> {
    let clean = quantize(&render_scene(sizes.height, sizes.width, scene_seed(seed, scene)));
    let template = rain_template(seed, rain);
    let p = RainParams {
        seed: indexed_seed(template.seed, scene),
        ..template
    };
    let rainy = quantize(&synth_rain(&clean, &p)?);
    Ok((clean, rainy))
}

/// The `index`-th evaluation triplet of the dataset `make_micro_dataset`
/// would write for these arguments.
pub fn eval_triplet(seed: u64, index: usize, sizes: &MicroSizes, rain: &RainParams) -> Result<EvalTriplet> {
    sizes.validate()?;
    let scene = sizes.first_scene(None) + index as u64;
    let (hr, rainy_hr) = rainy_scene(seed, scene, sizes, rain)?;
    let lr = resize_bicubic(&rainy_hr, Scale::QUARTER)?;
    Ok(EvalTriplet { hr, rainy_hr, lr })
}

/// Render the procedural micro-dataset into `out_dir`:
/// `sunny_hr/`, `rainy_hr/`, `real_lr/`, `eval/` and `manifest.txt`.
///
/// Every pool draws from its own block of scene identifiers, so the
/// training pools are unpaired by construction; eval triplets share one
/// scene each.
pub fn make_micro_dataset(
    out_dir: &Path,
    seed: u64,
    sizes: &MicroSizes,
    rain: &RainParams,
) -> Result<MicroDatasetManifest> {
    sizes.validate()?;
    rain.validate()?;
    let mut manifest = MicroDatasetManifest {
        seed,
        sizes: *sizes,
        rain: rain_template(seed, rain),
        paired_eval: true,
        sunny_hr: Vec::new(),
        rainy_hr: Vec::new(),
        real_lr: Vec::new(),
        eval: Vec::new(),
    };
    let mkdir = |p: &Path| std::fs::create_dir_all(p).map_err(|e| Error::io(p, e));
    mkdir(out_dir)?;
    for domain in Domain::ALL {
        let dir = out_dir.join(domain.dir_name());
        mkdir(&dir)?;
        for i in 0..sizes.count(domain) {
            let scene = sizes.first_scene(Some(domain)) + i as u64;
            let name = format!("{i:04}.png");
            let img = match domain {
                Domain::SunnyHr => quantize(&render_scene(sizes.height, sizes.width, scene_seed(seed, scene))),
                Domain::RainyHr => rainy_scene(seed, scene, sizes, rain)?.1,
                Domain::RealLr => resize_bicubic(&rainy_scene(seed, scene, sizes, rain)?.1, Scale::QUARTER)?,
            };
            save_png(&img, &dir.join(&name))?;
            manifest.files_mut(domain).push(TrainFile { name, scene });
        }
    }
    let eval_dir = out_dir.join("eval");
    mkdir(&eval_dir)?;
    for i in 0..sizes.eval {
        let t = eval_triplet(seed, i, sizes, rain)?;
        let name = format!("{i:04}");
        let rec = EvalRecord {
            name: name.clone(),
            scene: sizes.first_scene(None) + i as u64,
            hr: PathBuf::from(format!("eval/{name}_hr.png")),
            rainy_hr: PathBuf::from(format!("eval/{name}_rainy_hr.png")),
            lr: PathBuf::from(format!("eval/{name}_lr.png")),
        };
        save_png(&t.hr, &out_dir.join(&rec.hr))?;
        save_png(&t.rainy_hr, &out_dir.join(&rec.rainy_hr))?;
        save_png(&t.lr, &out_dir.join(&rec.lr))?;
        manifest.eval.push(rec);
    }
    let path = out_dir.join(MANIFEST_FILE);
    std::fs::write(&path, manifest.to_text()).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}
