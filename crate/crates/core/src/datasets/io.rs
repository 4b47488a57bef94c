use std::fmt;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::{ImageReader, RgbImage};

use crate::error::{Error, Result};
use crate::imaging::Image;

/// The three image pools of the pipeline, named after their folders.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Domain {
    SunnyHr,
    RainyHr,
    RealLr,
}

impl Domain {
    pub const ALL: [Domain; 3] = [Domain::SunnyHr, Domain::RainyHr, Domain::RealLr];

    pub fn dir_name(self) -> &'static str {
        match self {
            Domain::SunnyHr => "sunny_hr",
            Domain::RainyHr => "rainy_hr",
            Domain::RealLr => "real_lr",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.dir_name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexEntry {
    pub path: PathBuf,
    pub height: usize,
    pub width: usize,
}

#[derive(Clone, Debug)]
pub struct DatasetIndex {
    pub domain: Domain,
    pub root: PathBuf,
    /// Decodable images, ordered byte-wise by file name.
    pub entries: Vec<IndexEntry>,
    /// Files that were read but could not be decoded, with the reason.
    pub rejected: Vec<(PathBuf, String)>,
}

impl DatasetIndex {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn load(&self, i: usize) -> Result<Image> {
        load_image(&self.entries[i].path)
    }

    pub fn load_all(&self) -> Result<Vec<Image>> {
        (0..self.len()).map(|i| self.load(i)).collect()
    }
}

fn decode(bytes: &[u8]) -> std::result::Result<RgbImage, String> {
    let reader = ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| e.to_string())?;
    if reader.format().is_none() {
        return Err("unrecognized image format".into());
    }
    reader.decode().map(|d| d.to_rgb8()).map_err(|e| e.to_string())
}

fn from_rgb8(rgb: &RgbImage) -> Image {
    let (w, h) = rgb.dimensions();
    let data = rgb.as_raw().iter().map(|&b| b as f32 / 255.0).collect();
    Image::new(h as usize, w as usize, data).expect("8-bit samples are in range")
}

fn to_rgb8(img: &Image) -> RgbImage {
    let (h, w) = img.dims();
    let raw = img.data().iter().map(|&v| quantize_sample(v)).collect();
    RgbImage::from_raw(w as u32, h as u32, raw).expect("buffer matches dimensions")
}

#[inline]
fn quantize_sample(v: f32) -> u8 {
    (v as f64 * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Round every sample to the nearest 8-bit level, as a PNG round trip would.
pub fn quantize(img: &Image) -> Image {
    let (h, w) = img.dims();
    let data = img.data().iter().map(|&v| quantize_sample(v) as f32 / 255.0).collect();
    Image::new(h, w, data).expect("quantized samples are in range")
}

/// Decode any supported raster file into an RGB image (gray and alpha are
/// converted to plain RGB).
pub fn load_image(path: &Path) -> Result<Image> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
        .map(|rgb| from_rgb8(&rgb))
        .map_err(|reason| Error::Ingest {
            path: path.to_path_buf(),
            reason,
        })
}

/// Write an 8-bit RGB PNG with samples quantized by `round(255·v)`.
pub fn save_png(img: &Image, path: &Path) -> Result<()> {
    to_rgb8(img)
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| Error::Codec {
            path: path.to_path_buf(),
            source,
        })
}

/// Index every decodable raster directly inside `path`.
///
/// Files that cannot be read fail the whole call; files that read but do
/// not decode are collected in [`DatasetIndex::rejected`] and logged.
pub fn ingest_folder(path: &Path, domain: Domain) -> Result<DatasetIndex> {
    let dir = std::fs::read_dir(path).map_err(|e| Error::io(path, e))?;
    let mut files = Vec::new();
    for entry in dir {
        let entry = entry.map_err(|e| Error::io(path, e))?;
        let file_type = entry.file_type().map_err(|e| Error::io(entry.path(), e))?;
        if file_type.is_file() || (file_type.is_symlink() && entry.path().is_file()) {
            files.push(entry.path());
        }
    }
    files.sort_by(|a, b| {
        let name = |p: &PathBuf| p.file_name().map(|n| n.as_encoded_bytes().to_vec()).unwrap_or_default();
        name(a).cmp(&name(b))
    });

    let mut entries = Vec::new();
    let mut rejected = Vec::new();
    for file in files {
        let bytes = std::fs::read(&file).map_err(|e| Error::Ingest {
            path: file.clone(),
            reason: e.to_string(),
        })?;
        match decode(&bytes) {
            Ok(rgb) => entries.push(IndexEntry {
                path: file,
                height: rgb.height() as usize,
                width: rgb.width() as usize,
            }),
            Err(reason) => {
                log::warn!("skipping undecodable {}: {reason}", file.display());
                rejected.push((file, reason));
            }
        }
    }
    if entries.is_empty() {
        return Err(Error::EmptyDataset {
            root: path.to_path_buf(),
        });
    }
    Ok(DatasetIndex {
        domain,
        root: path.to_path_buf(),
        entries,
        rejected,
    })
}
