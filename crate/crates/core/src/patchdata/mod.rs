//! Normal-aligned patch sampling and training-pair generation.

mod frame;
mod generate;
mod patch;
mod store;

pub use frame::{wrap_angle, PatchFrame};
pub use generate::{
    arc_length_samples, augment, augment_with, generate_training_set, GenConfig, TrainingPair,
};
pub use patch::{local_target_vector, sample_patch, sample_patch_sized, Patch, PATCH_SIZE};
pub use store::{
    read_dataset, read_manifest, write_dataset, Dataset, Manifest, MANIFEST_FILE, RECORDS_FILE,
};
