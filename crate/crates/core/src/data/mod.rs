//! Image codecs, manifests, batching and synthetic data.

pub mod batch;
pub mod dataset;
pub mod manifest;
pub mod pnm;
pub mod synth;

pub use batch::{apply_mask, make_batches, BatchStream};
pub use dataset::{read_image, read_mask, Dataset, Require};
pub use manifest::{load_manifest, parse_manifest, SampleRecord, Split};
pub use pnm::{decode_pgm, decode_ppm, encode_pgm, encode_ppm, quantize, CodecError, ImageBuffer};
pub use synth::{gen_synthetic, synth_sample, SynthConfig, SynthKind};
