use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{substream, Domain};
use crate::error::{invalid, Result};

/// Number of QDs drawn per location.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QdCount {
    Fixed { n: usize },
    /// Uniform over `min..=max`.
    Uniform { min: usize, max: usize },
}

impl QdCount {
    fn validate(&self) -> Result<()> {
        match *self {
            QdCount::Fixed { n: 0 } => Err(invalid("QDs per location must be at least 1")),
            QdCount::Uniform { min, max } if min == 0 || max < min => {
                Err(invalid("QD count range must satisfy 1 <= min <= max"))
            }
            _ => Ok(()),
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        match *self {
            QdCount::Fixed { n } => n,
            QdCount::Uniform { min, max } => rng.random_range(min..=max),
        }
    }
}

/// Truncated normal strain distribution in %.
///
/// Bounds default to four spreads either side of the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrainDistribution {
    pub mean: f64,
    pub spread: f64,
    #[serde(default)]
    pub min: Option<f64>,
    #[serde(default)]
    pub max: Option<f64>,
}

impl StrainDistribution {
    pub fn fixed(value: f64) -> Self {
        StrainDistribution {
            mean: value,
            spread: 0.0,
            min: None,
            max: None,
        }
    }

    pub fn bounds(&self) -> (f64, f64) {
        (
            self.min.unwrap_or(self.mean - 4.0 * self.spread),
            self.max.unwrap_or(self.mean + 4.0 * self.spread),
        )
    }

    fn validate(&self) -> Result<()> {
        if !self.mean.is_finite() || !(self.spread >= 0.0) || !self.spread.is_finite() {
            return Err(invalid("strain mean must be finite and spread non-negative"));
        }
        let (lo, hi) = self.bounds();
        if !(lo <= self.mean && self.mean <= hi) {
            return Err(invalid("strain mean must lie within its truncation bounds"));
        }
        Ok(())
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        if self.spread == 0.0 {
            return self.mean;
        }
        let (lo, hi) = self.bounds();
        let normal = Normal::new(self.mean, self.spread).expect("validated spread");
        for _ in 0..10_000 {
            let x = normal.sample(rng);
            if (lo..=hi).contains(&x) {
                return x;
            }
        }
        rng.random_range(lo..=hi)
    }
}

/// Huang–Rhys factor as a power law in emission energy,
/// `S = s_ref·(E/e_ref)^exponent`, optionally with multiplicative scatter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingModel {
    pub s_ref: f64,
    /// meV.
    pub e_ref: f64,
    #[serde(default = "default_exponent")]
    pub exponent: f64,
    /// Average phonon energy assigned to every QD, meV.
    #[serde(default = "default_phonon_energy")]
    pub phonon_energy: f64,
    /// Relative 1σ scatter of S about the power law.
    #[serde(default)]
    pub scatter: f64,
}

fn default_exponent() -> f64 {
    1.0
}

fn default_phonon_energy() -> f64 {
    13.35
}

impl Default for CouplingModel {
    fn default() -> Self {
        CouplingModel {
            s_ref: 3.0,
            e_ref: 1900.0,
            exponent: default_exponent(),
            phonon_energy: default_phonon_energy(),
            scatter: 0.0,
        }
    }
}

impl CouplingModel {
    pub fn huang_rhys(&self, energy: f64) -> f64 {
        self.s_ref * (energy / self.e_ref).powf(self.exponent)
    }

    fn validate(&self) -> Result<()> {
        if !(self.s_ref >= 0.0) || !(self.e_ref > 0.0) || !(self.exponent > 0.0) {
            return Err(invalid("coupling needs s_ref >= 0, e_ref > 0 and exponent > 0"));
        }
        if !(self.phonon_energy > 0.0) || !(self.scatter >= 0.0) {
            return Err(invalid("phonon energy must be positive and scatter non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationConfig {
    pub n_locations: usize,
    pub qds_per_location: QdCount,
    pub strain: StrainDistribution,
    /// Unstrained QD emission energy, meV.
    pub e_base: f64,
    /// meV/%.
    pub gauge_qd: f64,
    /// meV/%.
    pub gauge_x0: f64,
    /// Unstrained X0 energy, meV.
    #[serde(default = "default_x0_energy")]
    pub x0_energy: f64,
    /// 1σ emission-energy jitter per QD, meV.
    pub jitter: f64,
    #[serde(default)]
    pub coupling: CouplingModel,
    /// Integrated line intensity drawn uniformly from this range.
    #[serde(default = "default_intensity_range")]
    pub intensity_range: (f64, f64),
    pub seed: u64,
}

fn default_x0_energy() -> f64 {
    2020.0
}

fn default_intensity_range() -> (f64, f64) {
    (500.0, 2000.0)
}

impl PopulationConfig {
    /// X0 emission energy at a given local strain.
    pub fn x0_energy_at(&self, strain: f64) -> f64 {
        self.x0_energy + self.gauge_x0 * strain
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_locations == 0 {
            return Err(invalid("n_locations must be at least 1"));
        }
        self.qds_per_location.validate()?;
        self.strain.validate()?;
        self.coupling.validate()?;
        if !(self.jitter >= 0.0) || !self.jitter.is_finite() {
            return Err(invalid("jitter must be finite and non-negative"));
        }
        if ![self.e_base, self.gauge_qd, self.gauge_x0, self.x0_energy]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(invalid("energies and gauge factors must be finite"));
        }
        let (lo, hi) = self.intensity_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(invalid("intensity range must satisfy 0 < min <= max"));
        }
        Ok(())
    }
}

/// Ground truth for one synthetic QD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QdRecord {
    pub location_id: usize,
    /// Local strain, %.
    pub strain: f64,
    /// Zero-temperature emission energy, meV.
    pub energy: f64,
    pub huang_rhys: f64,
    /// meV.
    pub phonon_energy: f64,
    /// Integrated line intensity.
    pub intensity: f64,
}

/// Draws QDs location by location. A location's strain is shared by all of
/// its QDs; energies follow `e_base + gauge_qd·strain + jitter`.
pub fn generate_population(config: &PopulationConfig) -> Result<Vec<QdRecord>> {
    config.validate()?;
    let jitter = Normal::new(0.0, config.jitter).map_err(|e| invalid(e.to_string()))?;
    let scatter = Normal::new(0.0, config.coupling.scatter).map_err(|e| invalid(e.to_string()))?;
    let (i_lo, i_hi) = config.intensity_range;
    let mut out = Vec::new();
    for loc in 0..config.n_locations {
        let mut rng = substream(config.seed, Domain::Location, loc as u64);
        let count = config.qds_per_location.sample(&mut rng);
        let strain = config.strain.sample(&mut rng);
        for k in 0..count {
            let mut rng = substream(config.seed, Domain::Emitter, ((loc as u64) << 24) | k as u64);
            let energy = config.e_base + config.gauge_qd * strain + jitter.sample(&mut rng);
            if !(energy > 0.0) {
                return Err(invalid(format!("non-positive emission energy {energy} at location {loc}")));
            }
            let intensity = if i_lo == i_hi { i_lo } else { rng.random_range(i_lo..i_hi) };
            let factor = (1.0 + scatter.sample(&mut rng)).max(0.0);
            out.push(QdRecord {
                location_id: loc,
                strain,
                energy,
                huang_rhys: config.coupling.huang_rhys(energy) * factor,
                phonon_energy: config.coupling.phonon_energy,
                intensity,
            });
        }
    }
    Ok(out)
}

/// Records grouped by location id in ascending order.
pub fn location_groups(records: &[QdRecord]) -> BTreeMap<usize, Vec<&QdRecord>> {
    let mut groups: BTreeMap<usize, Vec<&QdRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.location_id).or_default().push(r);
    }
    groups
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> PopulationConfig {
        PopulationConfig {
            n_locations: 10,
            qds_per_location: QdCount::Uniform { min: 1, max: 4 },
            strain: StrainDistribution {
                mean: 0.4,
                spread: 0.15,
                min: Some(0.0),
                max: Some(0.8),
            },
            e_base: 1990.0,
            gauge_qd: -149.0,
            gauge_x0: -38.2,
            x0_energy: 2020.0,
            jitter: 20.0,
            coupling: CouplingModel::default(),
            intensity_range: (500.0, 2000.0),
            seed: 11,
        }
    }

    #[test]
    fn zero_jitter_single_strain_gives_identical_energies() {
        let mut c = base();
        c.jitter = 0.0;
        c.strain = StrainDistribution::fixed(0.3);
        let pop = generate_population(&c).unwrap();
        assert!(pop.len() >= 10);
        let e = 1990.0 - 149.0 * 0.3;
        assert!(pop.iter().all(|r| r.energy == e));
    }

    #[test]
    fn strain_respects_truncation() {
        let mut c = base();
        c.n_locations = 500;
        let pop = generate_population(&c).unwrap();
        assert!(pop.iter().all(|r| (0.0..=0.8).contains(&r.strain)));
    }

    #[test]
    fn span_across_ws2_strain_range() {
        let energies: Vec<f64> = [-0.10, 0.75]
            .iter()
            .map(|&s| {
                let mut c = base();
                c.jitter = 0.0;
                c.strain = StrainDistribution::fixed(s);
                generate_population(&c).unwrap()[0].energy
            })
            .collect();
        assert!((energies[0] - energies[1] - 126.65).abs() < 1e-9);
    }

    #[test]
    fn same_seed_same_population() {
        let a = generate_population(&base()).unwrap();
        let b = generate_population(&base()).unwrap();
        assert_eq!(a, b);
        let mut c = base();
        c.seed = 12;
        assert_ne!(a, generate_population(&c).unwrap());
    }

    #[test]
    fn huang_rhys_follows_power_law() {
        let mut c = base();
        c.coupling.exponent = 2.0;
        for r in generate_population(&c).unwrap() {
            let expect = 3.0 * (r.energy / 1900.0).powi(2);
            assert!((r.huang_rhys - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_configs() {
        let mut c = base();
        c.n_locations = 0;
        assert!(generate_population(&c).is_err());
        let mut c = base();
        c.jitter = -1.0;
        assert!(generate_population(&c).is_err());
        let mut c = base();
        c.strain.max = Some(0.1);
        assert!(generate_population(&c).is_err());
        let mut c = base();
        c.coupling.exponent = 0.0;
        assert!(generate_population(&c).is_err());
        let mut c = base();
        c.qds_per_location = QdCount::Uniform { min: 3, max: 2 };
        assert!(generate_population(&c).is_err());
    }

    #[test]
    fn groups_by_location() {
        let pop = generate_population(&base()).unwrap();
        let groups = location_groups(&pop);
        assert_eq!(groups.len(), 10);
        assert_eq!(groups.values().map(Vec::len).sum::<usize>(), pop.len());
    }
}
