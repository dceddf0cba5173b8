//! Volume and image I/O, slice extraction, splitting, batching and phantoms.

pub mod batch;
pub mod manifest;
pub mod nifti;
pub mod pgm;
pub mod phantom;
pub mod slices;
pub mod split;

pub use batch::{batch_iter, epoch_order, to_tensor, BatchIter};
pub use manifest::{load_prepared, read_manifest, write_manifest, write_prepared, ManifestRow, SplitPart, MANIFEST_FILE};
pub use nifti::{encode_nifti, parse_nifti, read_nifti, write_nifti, NiftiDtype, NiftiWriteOptions, Volume};
pub use pgm::{grid, read_pgm, write_pgm16, GrayImage};
pub use phantom::{make_phantom_dataset, make_phantom_dataset_split, make_phantom_volume, phantom_image};
pub use slices::{
    extract_slices, min_max, resize_bilinear, resize_image, slice_indices, standardize, DomainTag,
    Provenance, SliceImage, SlicePolicy,
};
pub use split::{split_by_volume, split_dataset, train_count, SliceDataset, DEFAULT_TRAIN_FRACTION};
