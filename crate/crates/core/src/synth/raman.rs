use rand_distr::{Distribution, Normal};

use super::{substream, Domain};
use crate::error::{invalid, Result};

/// Raman mode shifts `coefficient·ε + noise` (cm⁻¹) for each strain, with
/// 1σ Gaussian noise drawn per index.
pub fn generate_raman_shifts(strains: &[f64], coefficient: f64, noise: f64, seed: u64) -> Result<Vec<f64>> {
    if !coefficient.is_finite() || coefficient == 0.0 {
        return Err(invalid("Raman coefficient must be finite and nonzero"));
    }
    if !(noise >= 0.0) || !noise.is_finite() {
        return Err(invalid("noise must be finite and non-negative"));
    }
    let normal = Normal::new(0.0, noise).map_err(|e| invalid(e.to_string()))?;
    Ok(strains
        .iter()
        .enumerate()
        .map(|(i, &eps)| {
            let jitter = if noise > 0.0 {
                normal.sample(&mut substream(seed, Domain::Raman, i as u64))
            } else {
                0.0
            };
            coefficient * eps + jitter
        })
        .collect())
}
