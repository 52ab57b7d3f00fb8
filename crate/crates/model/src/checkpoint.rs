//! Parameter checkpoints tagged with the hash of the config that built them.

use std::path::Path;

use egopose_core::hash::config_hash;
use egopose_core::tensorio::TensorBundle;
use egopose_nn::{Float, ParamStore};
use serde::Serialize;

use crate::{ModelError, Result};

/// Writes the entries under `prefix` ("" for all), tagged with `config`'s hash.
pub fn save_checkpoint<T: Float, C: Serialize>(
    store: &ParamStore<T>,
    prefix: &str,
    config: &C,
    path: &Path,
) -> Result<()> {
    store.to_bundle_prefixed(&config_hash(config), prefix).save(path)?;
    Ok(())
}

/// Loads entries under `prefix`, refusing checkpoints built from another config.
pub fn load_checkpoint<T: Float, C: Serialize>(
    store: &mut ParamStore<T>,
    prefix: &str,
    config: &C,
    path: &Path,
) -> Result<()> {
    let bundle = TensorBundle::load(path)?;
    let expected = config_hash(config);
    if bundle.tag != expected {
        return Err(ModelError::ConfigMismatch {
            path: path.display().to_string(),
            expected,
            found: bundle.tag,
        });
    }
    store.load_bundle_prefixed(&bundle, prefix)?;
    Ok(())
}
