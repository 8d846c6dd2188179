use super::Spectrum;
use crate::error::{invalid, Result};

/// Locates candidate emission lines.
///
/// A candidate is a local maximum (plateaus resolve to their middle sample)
/// whose topographic prominence reaches `min_prominence`. Prominence is the
/// height above the higher of the two minima found walking outwards until
/// the trace rises above the peak or the grid ends. Candidates closer than
/// `min_separation` keep the more intense one, the lower energy on exact
/// ties. Output is sorted by energy.
pub fn detect_peaks(spectrum: &Spectrum, min_prominence: f64, min_separation: f64) -> Result<Vec<f64>> {
    if !(min_prominence > 0.0) {
        return Err(invalid("min_prominence must be positive"));
    }
    if !(min_separation > 0.0) {
        return Err(invalid("min_separation must be positive"));
    }
    let x = spectrum.energy();
    let y = spectrum.intensity();
    let n = y.len();
    let mut candidates: Vec<usize> = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if y[i] > y[i - 1] {
            let mut j = i;
            while j + 1 < n && y[j + 1] == y[i] {
                j += 1;
            }
            if j + 1 < n && y[j + 1] < y[i] {
                let mid = (i + j) / 2;
                if prominence(y, i, j) >= min_prominence {
                    candidates.push(mid);
                }
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }

    candidates.sort_by(|&a, &b| y[b].total_cmp(&y[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for c in candidates {
        if kept.iter().all(|&k| (x[k] - x[c]).abs() >= min_separation) {
            kept.push(c);
        }
    }
    kept.sort_unstable();
    Ok(kept.into_iter().map(|k| x[k]).collect())
}

/// Prominence of the plateau `y[left..=right]`.
fn prominence(y: &[f64], left: usize, right: usize) -> f64 {
    let h = y[left];
    let mut left_min = h;
    for k in (0..left).rev() {
        if y[k] > h {
            break;
        }
        left_min = left_min.min(y[k]);
    }
    let mut right_min = h;
    for &v in &y[right + 1..] {
        if v > h {
            break;
        }
        right_min = right_min.min(v);
    }
    h - left_min.max(right_min)
}
