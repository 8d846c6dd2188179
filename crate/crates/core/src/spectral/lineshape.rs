use serde::{Deserialize, Serialize};

/// `2 sqrt(2 ln 2)`, the Gaussian FWHM in units of sigma.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

/// Unit-height line profile. The width parameter is the standard deviation
/// for a Gaussian and the half width at half maximum for a Lorentzian.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineShape {
    #[default]
    Gaussian,
    Lorentzian,
}

impl LineShape {
    pub fn fwhm(&self, width: f64) -> f64 {
        match self {
            LineShape::Gaussian => FWHM_PER_SIGMA * width,
            LineShape::Lorentzian => 2.0 * width,
        }
    }

    pub fn width_from_fwhm(&self, fwhm: f64) -> f64 {
        match self {
            LineShape::Gaussian => fwhm / FWHM_PER_SIGMA,
            LineShape::Lorentzian => fwhm / 2.0,
        }
    }

    pub fn value(&self, x: f64, center: f64, width: f64) -> f64 {
        let d = x - center;
        match self {
            LineShape::Gaussian => (-0.5 * d * d / (width * width)).exp(),
            LineShape::Lorentzian => {
                let w2 = width * width;
                w2 / (d * d + w2)
            }
        }
    }

    /// Profile value with partial derivatives `(f, ∂f/∂center, ∂f/∂width)`.
    pub fn value_and_grad(&self, x: f64, center: f64, width: f64) -> (f64, f64, f64) {
        let d = x - center;
        match self {
            LineShape::Gaussian => {
                let w2 = width * width;
                let f = (-0.5 * d * d / w2).exp();
                (f, f * d / w2, f * d * d / (w2 * width))
            }
            LineShape::Lorentzian => {
                let w2 = width * width;
                let q = d * d + w2;
                let f = w2 / q;
                (f, 2.0 * w2 * d / (q * q), 2.0 * width * d * d / (q * q))
            }
        }
    }

    /// Area under a profile of height `amplitude`.
    pub fn area(&self, amplitude: f64, width: f64) -> f64 {
        match self {
            LineShape::Gaussian => amplitude * width * (2.0 * std::f64::consts::PI).sqrt(),
            LineShape::Lorentzian => amplitude * width * std::f64::consts::PI,
        }
    }
}
