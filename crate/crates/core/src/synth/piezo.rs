use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::population::{location_groups, QdRecord};
use super::{substream, Domain};
use crate::error::{invalid, Result};
use crate::strain::{ShiftContext, ShiftMeasurement};

/// Piezo sweep parameters.
///
/// Shifts grow linearly with `field / max|field|`. At the largest field the
/// largest X0 shift equals `shift_scale`, the largest QD blueshift equals
/// `blue_ratio·shift_scale` and the largest QD redshift magnitude equals
/// `red_ratio·shift_scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiezoSweepConfig {
    /// kV/cm.
    pub fields: Vec<f64>,
    pub blueshift_fraction: f64,
    /// meV.
    pub shift_scale: f64,
    #[serde(default = "default_blue_ratio")]
    pub blue_ratio: f64,
    #[serde(default = "default_red_ratio")]
    pub red_ratio: f64,
    /// Smallest X0 response relative to the largest.
    #[serde(default = "default_x0_min_fraction")]
    pub x0_min_fraction: f64,
    /// Uncertainty attached to every shift, meV.
    #[serde(default = "default_shift_err")]
    pub shift_err: f64,
    pub seed: u64,
}

fn default_blue_ratio() -> f64 {
    1.9
}

fn default_red_ratio() -> f64 {
    0.8
}

fn default_x0_min_fraction() -> f64 {
    0.3
}

fn default_shift_err() -> f64 {
    0.1
}

impl PiezoSweepConfig {
    pub fn new(fields: Vec<f64>, blueshift_fraction: f64, shift_scale: f64, seed: u64) -> Self {
        PiezoSweepConfig {
            fields,
            blueshift_fraction,
            shift_scale,
            blue_ratio: default_blue_ratio(),
            red_ratio: default_red_ratio(),
            x0_min_fraction: default_x0_min_fraction(),
            shift_err: default_shift_err(),
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.blueshift_fraction) {
            return Err(invalid("blueshift fraction must lie in [0, 1]"));
        }
        if self.fields.is_empty() || self.fields.iter().any(|f| !f.is_finite()) {
            return Err(invalid("field list must be non-empty and finite"));
        }
        if !(self.shift_scale >= 0.0) || !(self.blue_ratio >= 0.0) || !(self.red_ratio >= 0.0) {
            return Err(invalid("shift scale and ratios must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.x0_min_fraction) || !(self.shift_err >= 0.0) {
            return Err(invalid("x0_min_fraction must lie in [0, 1] and shift_err be non-negative"));
        }
        Ok(())
    }
}

/// Shifts per field. `qd[f][i]` follows population order; `x0[f][j]`
/// follows `x0_locations`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiezoSweep {
    pub fields: Vec<f64>,
    pub qd: Vec<Vec<ShiftMeasurement>>,
    pub x0: Vec<Vec<ShiftMeasurement>>,
    pub x0_locations: Vec<usize>,
    /// Per-QD response at the largest field, meV.
    pub qd_response: Vec<f64>,
    /// Per-location X0 response at the largest field, meV.
    pub x0_response: Vec<f64>,
}

/// Divides by the largest value so the maximum becomes exactly one.
fn normalize_max(values: &mut [f64]) {
    let max = values.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        values.iter_mut().for_each(|v| *v /= max);
    }
}

/// Linear field response for every QD and every location's X0.
///
/// Exactly `round(blueshift_fraction·n)` QDs blueshift, chosen by a seeded
/// shuffle. QD weights are the record intensities; X0 shifts are unweighted.
pub fn generate_piezo_sweep(population: &[QdRecord], config: &PiezoSweepConfig) -> Result<PiezoSweep> {
    config.validate()?;
    let n = population.len();
    let x0_locations: Vec<usize> = location_groups(population).into_keys().collect();

    let mut x0_unit: Vec<f64> = x0_locations
        .iter()
        .map(|&loc| {
            substream(config.seed, Domain::PiezoX0, loc as u64).random_range(config.x0_min_fraction..=1.0)
        })
        .collect();
    normalize_max(&mut x0_unit);

    let n_blue = (config.blueshift_fraction * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut substream(config.seed, Domain::PiezoSign, 0));
    let mut is_blue = vec![false; n];
    for &i in &order[..n_blue] {
        is_blue[i] = true;
    }
    let draws: Vec<f64> = (0..n)
        .map(|i| substream(config.seed, Domain::PiezoQd, i as u64).random_range(f64::EPSILON..=1.0))
        .collect();
    let mut blue: Vec<f64> = (0..n).map(|i| if is_blue[i] { draws[i] } else { 0.0 }).collect();
    let mut red: Vec<f64> = (0..n).map(|i| if is_blue[i] { 0.0 } else { draws[i] }).collect();
    normalize_max(&mut blue);
    normalize_max(&mut red);

    let qd_response: Vec<f64> = (0..n)
        .map(|i| {
            if is_blue[i] {
                config.blue_ratio * config.shift_scale * blue[i]
            } else {
                -config.red_ratio * config.shift_scale * red[i]
            }
        })
        .collect();
    let x0_response: Vec<f64> = x0_unit.iter().map(|u| config.shift_scale * u).collect();

    let f_max = config.fields.iter().fold(0.0f64, |m, f| m.max(f.abs()));
    let mut qd = Vec::with_capacity(config.fields.len());
    let mut x0 = Vec::with_capacity(config.fields.len());
    for &field in &config.fields {
        let scale = if f_max > 0.0 { field / f_max } else { 0.0 };
        let context = ShiftContext::PiezoField { kv_per_cm: field };
        qd.push(
            population
                .iter()
                .zip(&qd_response)
                .map(|(r, resp)| {
                    Ok(ShiftMeasurement::new(scale * resp, config.shift_err)?
                        .with_weight(r.intensity)?
                        .with_context(context.clone()))
                })
                .collect::<Result<Vec<_>>>()?,
        );
        x0.push(
            x0_response
                .iter()
                .map(|resp| Ok(ShiftMeasurement::new(scale * resp, config.shift_err)?.with_context(context.clone())))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    Ok(PiezoSweep {
        fields: config.fields.clone(),
        qd,
        x0,
        x0_locations,
        qd_response,
        x0_response,
    })
}
