//! The masked autoencoder: patchify, masking, encoder, decoder, heads, loss.

mod config;
mod masking;
mod net;
mod params;
mod patch;
pub mod render;

pub use config::{InputNorm, ModelConfig, Preset};
pub use masking::{keep_count, random_masking, MaskPlan};
pub use net::{linear, masked_l2_loss, sincos_pos_embed, standardize_channels, Bound, FgMae};
pub use params::{ParamStore, INIT_STD};
pub use patch::{patchify, unpatchify, PatchGrid};

/// Layer index for layer-wise lr decay: patch embedding 0, encoder block
/// `i` → `i + 1`, everything after the encoder blocks `depth + 1`.
pub fn layer_id(name: &str, depth: usize) -> usize {
    if name.starts_with("enc.patch_embed") {
        0
    } else if let Some(rest) = name.strip_prefix("enc.blocks.") {
        rest.split('.').next().and_then(|i| i.parse::<usize>().ok()).map_or(depth + 1, |i| i + 1)
    } else {
        depth + 1
    }
}

/// `decay^(depth + 1 − layer_id)`: heads and final norm at 1, top block at
/// `decay`, and so on down to the patch embedding.
pub fn layer_decay_scale(name: &str, depth: usize, decay: f64) -> f64 {
    decay.powi((depth + 1 - layer_id(name, depth)) as i32)
}

/// Weight decay applies to matrices only: biases, norm gains and the mask
/// token are exempt.
pub fn uses_weight_decay(dims: &[usize]) -> bool {
    dims.len() >= 2
}
