//! Tensor containers, manifests, in-memory datasets and the synthetic corpus.

pub mod container;
pub mod dataset;
pub mod manifest;
pub mod synth;

pub use container::{read_tensor, write_tensor};
pub use dataset::Dataset;
pub use manifest::{check_labels, load_manifest, read_manifest, write_manifest, Filter, Lang, Record, Split};
pub use synth::{synth_generate, SynthConfig};
