use rand::Rng;

use crate::error::{Error, Result};

/// Probability that sensing a target at `distance` meters succeeds.
pub fn sensing_success_prob(distance: f64, lambda: f64) -> Result<f64> {
    if distance < 0.0 {
        return Err(Error::NegativeDistance(distance));
    }
    Ok((-lambda * distance).exp())
}

/// Draws whether this cycle's sensory data is valid.
pub fn sample_sensing<R: Rng + ?Sized>(rng: &mut R, p: f64) -> bool {
    rng.random::<f64>() < p
}
