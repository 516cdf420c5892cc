//! Built-in reference autoencoders.

use crate::lstm::ModelSpec;

/// Timesteps used by both reference designs.
pub const TIMESTEPS: usize = 8;

/// Two-layer autoencoder with 9 hidden units per layer: `1 -> 9` encoder,
/// repeat vector, `9 -> 9` decoder, `9 -> 1` dense head.
pub fn small_model() -> ModelSpec {
    ModelSpec::autoencoder(1, &[9], &[9], TIMESTEPS).expect("valid reference model")
}

/// Four-layer autoencoder with 32, 8, 8 and 32 hidden units and a `32 -> 1`
/// dense head.
pub fn nominal_model() -> ModelSpec {
    ModelSpec::autoencoder(1, &[32, 8], &[8, 32], TIMESTEPS).expect("valid reference model")
}

/// Look up a reference model by name.
pub fn builtin(name: &str) -> Option<ModelSpec> {
    match name {
        "small" => Some(small_model()),
        "nominal" | "u250" => Some(nominal_model()),
        _ => None,
    }
}
