use rand::Rng;

use crate::error::{Error, Result};
use crate::imaging::{Image, CHANNELS};
use crate::rng::{indexed_seed, rng_from};
use crate::tensor::Tensor;

use super::io::{quantize, DatasetIndex};

/// Where one batch row was cut from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchOrigin {
    /// Position in the index the stream was built from.
    pub image: usize,
    pub top: usize,
    pub left: usize,
}

#[derive(Clone, Debug)]
pub struct Batch {
    pub index: u64,
    /// N×3×P×P in model range.
    pub tensor: Tensor<f32>,
    pub origins: Vec<PatchOrigin>,
}

/// 8-bit copy of a source image; keeps large pools affordable in memory.
#[derive(Clone, Debug)]
struct Raster {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

/// Infinite, random-access stream of patch batches. Batch `i` draws each
/// row's image, then row, then column from an RNG seeded by
/// `indexed_seed(seed, i)`, so it depends only on (images, sizes, seed, i).
#[derive(Clone, Debug)]
pub struct BatchStream {
    images: Vec<Raster>,
    patch_size: usize,
    batch_size: usize,
    seed: u64,
}

impl BatchStream {
    pub fn new(index: &DatasetIndex, patch_size: usize, batch_size: usize, seed: u64) -> Result<Self> {
        for e in &index.entries {
            if e.height < patch_size || e.width < patch_size {
                return Err(Error::dim(format!(
                    "{} is {}×{}, smaller than patch size {patch_size}",
                    e.path.display(),
                    e.height,
                    e.width
                )));
            }
        }
        Self::from_images(&index.load_all()?, patch_size, batch_size, seed)
    }

    /// Stream over in-memory images. Samples are stored at 8 bits, so
    /// images that are not already 8-bit quantized are rounded.
    pub fn from_images(images: &[Image], patch_size: usize, batch_size: usize, seed: u64) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::dim("batch stream needs at least one image"));
        }
        if patch_size == 0 || batch_size == 0 {
            return Err(Error::dim("patch and batch sizes must be positive"));
        }
        let mut rasters = Vec::with_capacity(images.len());
        for (i, img) in images.iter().enumerate() {
            let (h, w) = img.dims();
            if h < patch_size || w < patch_size {
                return Err(Error::dim(format!(
                    "image {i} is {h}×{w}, smaller than patch size {patch_size}"
                )));
            }
            let q = quantize(img);
            rasters.push(Raster {
                height: h,
                width: w,
                data: q.data().iter().map(|&v| (v * 255.0).round() as u8).collect(),
            });
        }
        Ok(BatchStream {
            images: rasters,
            patch_size,
            batch_size,
            seed,
        })
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn image_count(&self) -> usize {
        self.images.len()
    }

    pub fn origins(&self, i: u64) -> Vec<PatchOrigin> {
        let mut rng = rng_from(indexed_seed(self.seed, i));
        (0..self.batch_size)
            .map(|_| {
                let image = rng.gen_range(0..self.images.len() as u64) as usize;
                let r = &self.images[image];
                let top = rng.gen_range(0..=(r.height - self.patch_size) as u64) as usize;
                let left = rng.gen_range(0..=(r.width - self.patch_size) as u64) as usize;
                PatchOrigin { image, top, left }
            })
            .collect()
    }

    fn cut(&self, o: &PatchOrigin) -> Vec<f32> {
        let p = self.patch_size;
        let r = &self.images[o.image];
        let mut out = Vec::with_capacity(p * p * CHANNELS);
        for y in o.top..o.top + p {
            let start = (y * r.width + o.left) * CHANNELS;
            out.extend(r.data[start..start + p * CHANNELS].iter().map(|&b| b as f32 / 255.0));
        }
        out
    }

    /// The patches of batch `i` as images.
    pub fn patches(&self, i: u64) -> Vec<Image> {
        self.origins(i)
            .iter()
            .map(|o| Image::new(self.patch_size, self.patch_size, self.cut(o)).expect("8-bit samples are in range"))
            .collect()
    }

    pub fn batch(&self, i: u64) -> Batch {
        let origins = self.origins(i);
        let p = self.patch_size;
        let plane = p * p;
        let mut data = vec![0f32; origins.len() * CHANNELS * plane];
        for (n, o) in origins.iter().enumerate() {
            for (k, v) in self.cut(o).into_iter().enumerate() {
                let (px, c) = (k / CHANNELS, k % CHANNELS);
                data[(n * CHANNELS + c) * plane + px] = (2.0 * v as f64 - 1.0) as f32;
            }
        }
        Batch {
            index: i,
            tensor: Tensor::from_vec(&[origins.len(), CHANNELS, p, p], data).expect("batch shape"),
            origins,
        }
    }

    /// Batches 0, 1, 2, … without end.
    pub fn iter(&self) -> impl Iterator<Item = Batch> + '_ {
        (0u64..).map(|i| self.batch(i))
    }
}
