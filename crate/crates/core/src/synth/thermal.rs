use rand_distr::{Distribution, Normal};

use super::population::QdRecord;
use super::{substream, Domain};
use crate::error::{invalid, Result};
use crate::phonon::{odonnell_energy, Emitter, PhononFit, TemperaturePoint};

/// Emission energies of `record` at each temperature with Gaussian noise
/// of 1σ `noise` meV. Points carry `energy_err = noise` when noise is
/// positive and no error otherwise.
pub fn generate_temperature_series(
    record: &QdRecord,
    temperatures: &[f64],
    noise: f64,
    seed: u64,
) -> Result<Vec<TemperaturePoint>> {
    if temperatures.is_empty() {
        return Err(invalid("temperature list is empty"));
    }
    if !(noise >= 0.0) || !noise.is_finite() {
        return Err(invalid("noise must be finite and non-negative"));
    }
    let truth = PhononFit::exact(
        record.energy,
        record.huang_rhys,
        record.phonon_energy,
        Emitter::Qd(record.location_id.to_string()),
    )?;
    let normal = Normal::new(0.0, noise).map_err(|e| invalid(e.to_string()))?;
    temperatures
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let clean = odonnell_energy(&truth, t)?;
            let jitter = if noise > 0.0 {
                normal.sample(&mut substream(seed, Domain::Thermal, k as u64))
            } else {
                0.0
            };
            Ok(TemperaturePoint {
                temperature: t,
                energy: clean + jitter,
                energy_err: (noise > 0.0).then_some(noise),
            })
        })
        .collect()
}
