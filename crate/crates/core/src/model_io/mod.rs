//! Model container (`manifest.json` + `weights.bin`), `.nnd` datasets, the global
//! weight enumeration shared by every other module, and seeded fixtures.

mod container;
mod dataset;
mod fixture;
mod index;

pub use container::{
    decode, load_model, manifest_for, read_manifest, save_model, BlobRef, LayerDescriptor,
    ModelHash, ModelManifest, FORMAT_VERSION, MANIFEST_FILE, WEIGHTS_FILE,
};
pub use dataset::{decode_dataset, encode_dataset, load_dataset, save_dataset, DATASET_MAGIC};
pub use fixture::{generate_fixture, random_dataset, random_dense, Architecture};
pub use index::{WeightIndex, WeightLocation};
