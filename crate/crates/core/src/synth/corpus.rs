use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{substream, Domain};
use crate::ensemble::{BroadeningPoint, GaugeSample};
use crate::error::{invalid, Result};
use crate::strain::{strain_from_shift, GaugeFactor, ShiftMeasurement, Species};

/// Per-sample ensemble energies against strains measured through X0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaugeCorpusConfig {
    /// True mean strain per sample, %.
    pub strains: Vec<f64>,
    /// True QD gauge factor, meV/%.
    pub gauge_qd: f64,
    /// Ensemble energy at zero strain, meV.
    pub e_base: f64,
    /// 1σ scatter of ensemble energies, meV.
    pub sigma_y: f64,
    /// X0 gauge used both to generate and to invert shifts.
    pub x0_gauge: f64,
    pub x0_gauge_err: f64,
    /// 1σ noise on each measured X0 shift, meV.
    pub x0_shift_err: f64,
    pub material: String,
    pub seed: u64,
}

/// For each sample, measures an X0 shift `G_X0·ε + noise`, converts it back
/// to strain with propagated error, and draws an ensemble energy
/// `e_base + G_QD·ε + noise` with `energy_err = sigma_y`.
pub fn generate_gauge_corpus(config: &GaugeCorpusConfig) -> Result<Vec<GaugeSample>> {
    if config.strains.is_empty() {
        return Err(invalid("gauge corpus needs at least one strain"));
    }
    if !(config.sigma_y >= 0.0) || !(config.x0_shift_err >= 0.0) {
        return Err(invalid("noise levels must be non-negative"));
    }
    let gauge = GaugeFactor::new(config.x0_gauge, config.x0_gauge_err, Species::X0, config.material.clone())?;
    let shift_noise = Normal::new(0.0, config.x0_shift_err).map_err(|e| invalid(e.to_string()))?;
    let energy_noise = Normal::new(0.0, config.sigma_y).map_err(|e| invalid(e.to_string()))?;
    config
        .strains
        .iter()
        .enumerate()
        .map(|(i, &eps)| {
            let mut rng = substream(config.seed, Domain::Corpus, i as u64);
            let delta_e = config.x0_gauge * eps + shift_noise.sample(&mut rng);
            let strain = strain_from_shift(&ShiftMeasurement::new(delta_e, config.x0_shift_err)?, &gauge)?;
            let energy = config.e_base + config.gauge_qd * eps + energy_noise.sample(&mut rng);
            Ok(GaugeSample {
                strain,
                energy,
                energy_err: config.sigma_y,
            })
        })
        .collect()
}

/// Ensemble linewidths following `omega0 + rate·ε` with noise on both axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BroadeningCorpusConfig {
    /// True strain per sample, %.
    pub strains: Vec<f64>,
    /// 1σ noise on the observed strain, %.
    pub strain_err: f64,
    /// meV per %.
    pub rate: f64,
    /// meV.
    pub omega0: f64,
    /// 1σ noise on each FWHM, meV.
    pub fwhm_err: f64,
    pub seed: u64,
}

pub fn generate_broadening_corpus(config: &BroadeningCorpusConfig) -> Result<Vec<BroadeningPoint>> {
    if config.strains.is_empty() {
        return Err(invalid("broadening corpus needs at least one strain"));
    }
    let strain_noise = Normal::new(0.0, config.strain_err).map_err(|e| invalid(e.to_string()))?;
    let fwhm_noise = Normal::new(0.0, config.fwhm_err).map_err(|e| invalid(e.to_string()))?;
    Ok(config
        .strains
        .iter()
        .enumerate()
        .map(|(i, &eps)| {
            let mut rng = substream(config.seed, Domain::Corpus, i as u64);
            BroadeningPoint {
                strain: eps + strain_noise.sample(&mut rng),
                strain_err: config.strain_err,
                fwhm: config.omega0 + config.rate * eps + fwhm_noise.sample(&mut rng),
                fwhm_err: config.fwhm_err,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_gauge_corpus_is_exact() {
        let c = GaugeCorpusConfig {
            strains: vec![0.0, 0.15, 0.3, 0.45, 0.6, 0.75],
            gauge_qd: -149.0,
            e_base: 1990.0,
            sigma_y: 0.0,
            x0_gauge: -38.2,
            x0_gauge_err: 3.8,
            x0_shift_err: 0.0,
            material: "WS2".into(),
            seed: 0,
        };
        let s = generate_gauge_corpus(&c).unwrap();
        for (sample, eps) in s.iter().zip(&c.strains) {
            assert!((sample.strain.epsilon - eps).abs() < 1e-12);
            assert!((sample.energy - (1990.0 - 149.0 * eps)).abs() < 1e-9);
        }
        assert!((s[5].strain.epsilon_err - 0.75 * 3.8 / 38.2).abs() < 1e-12);
    }

    #[test]
    fn noiseless_broadening_corpus_is_exact() {
        let c = BroadeningCorpusConfig {
            strains: vec![0.1, 0.4],
            strain_err: 0.0,
            rate: 108.0,
            omega0: 67.5,
            fwhm_err: 0.0,
            seed: 1,
        };
        let p = generate_broadening_corpus(&c).unwrap();
        assert_eq!(p[1].fwhm, 67.5 + 108.0 * 0.4);
    }
}
