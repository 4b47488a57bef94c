//! Unpaired folder ingestion, procedural rain, the synthetic micro-dataset
//! and deterministic patch batching.

mod io;
mod micro;
mod rain;
mod stream;

pub use io::{ingest_folder, load_image, quantize, save_png, DatasetIndex, Domain, IndexEntry};
pub use micro::{
    eval_triplet, make_micro_dataset, render_scene, EvalRecord, EvalTriplet, MicroDatasetManifest, MicroSizes,
    TrainFile, MANIFEST_FILE,
};
pub use rain::{rain_layer, streaks, synth_rain, RainParams, Streak};
pub use stream::{Batch, BatchStream, PatchOrigin};
