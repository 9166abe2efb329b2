//! Tensor files, scene manifests, synthetic scenes and augmentation.

mod augment;
mod dataset;
mod fgmr;
mod manifest;
mod synth;

pub use augment::{
    augment, crop_resize, flip_width, horizontal_flip, mixup, mixup_with, random_resized_crop, resize_bilinear,
    sample_crop_box, zero_pad_channels, AugmentationConfig,
};
pub use dataset::{
    location_id, mask_path, write_synthetic_dataset, SyntheticDatasetConfig, MANIFEST_FILE, SEASONS,
};
pub use fgmr::{decode_tensor, encode_tensor, read_tensor, read_tensor_stored, write_tensor, StoredTensor, MAGIC, VERSION};
pub(crate) use fgmr::write_atomic;
pub use manifest::{select_season, Modality, SceneEntry, SceneManifest};
pub use synth::{
    ms_signature, sar_texture, speckle, synth_multispectral_scene, synth_sar_scene, synth_scene, Scene,
    SyntheticSceneParams, MS_CLASSES, MS_CLASS_NAMES, SAR_CLASSES, SAR_MEAN,
};
