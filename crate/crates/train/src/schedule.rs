use crate::{Result, TrainError};

/// Learning rate at a fraction of training: `base` for the first half, then
/// linear decay reaching 0 at the end.
pub fn lr_at(fraction: f64, base: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(TrainError::Config(format!("schedule fraction {fraction} outside [0, 1]")));
    }
    Ok(if fraction <= 0.5 {
        base
    } else {
        base * (1.0 - fraction) / 0.5
    })
}

/// Rate used for a whole epoch, sampled at the epoch's midpoint.
pub fn epoch_lr(epoch: usize, epochs: usize, base: f64) -> f64 {
    lr_at((epoch as f64 + 0.5) / epochs as f64, base).expect("epoch within schedule")
}
