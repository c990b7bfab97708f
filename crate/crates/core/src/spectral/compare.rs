//! Comparison of an estimated spectrum with the closed-form prediction.

use serde::{Deserialize, Serialize};

use super::fit::Lineshape;
use super::Spectrum;
use crate::error::{Error, Result};
use crate::telegraph::SpectralPrediction;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub freq_offsets: Vec<f64>,
    /// `(estimate − model)/model` per bin of the spectrum.
    pub relative_deviation: Vec<f64>,
    /// RMS relative deviation over bins with `lo ≤ |ν| ≤ hi`.
    pub band_rms: f64,
    pub band: (f64, f64),
    pub n_bins: usize,
    /// `3/√n_averages`.
    pub tolerance: f64,
    pub within: bool,
}

/// Expected Welch estimate for the prediction on the grid of `template`:
/// floor + line through the window response + window-smeared pedestal.
pub fn render_analytic(
    template: &Spectrum,
    pred: &SpectralPrediction,
    total_power: f64,
    noise_floor: f64,
) -> Spectrum {
    let shape = Lineshape::new(template);
    let line = total_power * pred.line_weight;
    let ped = total_power * pred.pedestal_weight;
    let psd = template
        .freq_offsets
        .iter()
        .map(|&f| noise_floor + line * shape.line(f) + ped * shape.pedestal(f, pred.delta_l))
        .collect();
    Spectrum {
        psd,
        ..template.clone()
    }
}

pub fn oracle_compare(
    spec: &Spectrum,
    pred: &SpectralPrediction,
    total_power: f64,
    noise_floor: f64,
    band: (f64, f64),
) -> Result<ComparisonReport> {
    let (lo, hi) = band;
    if !(lo >= 0.0 && hi > lo) {
        return Err(Error::invalid(format!("invalid comparison band ({lo}, {hi})")));
    }
    if hi > spec.max_abs_offset() + 0.5 * spec.bin_width() {
        return Err(Error::invalid(format!(
            "band edge {hi} Hz lies outside the spectrum (±{:.2} Hz)",
            spec.max_abs_offset()
        )));
    }
    let model = render_analytic(spec, pred, total_power, noise_floor);
    let relative_deviation: Vec<f64> = spec
        .psd
        .iter()
        .zip(&model.psd)
        .map(|(s, m)| (s - m) / m)
        .collect();
    let in_band: Vec<f64> = spec
        .freq_offsets
        .iter()
        .zip(&relative_deviation)
        .filter(|(f, _)| (lo..=hi).contains(&f.abs()))
        .map(|(_, d)| *d)
        .collect();
    if in_band.is_empty() {
        return Err(Error::InsufficientData(format!("no bins in band ({lo}, {hi}) Hz")));
    }
    let band_rms = (in_band.iter().map(|d| d * d).sum::<f64>() / in_band.len() as f64).sqrt();
    let tolerance = 3.0 / (spec.n_averages.max(1) as f64).sqrt();
    Ok(ComparisonReport {
        freq_offsets: spec.freq_offsets.clone(),
        relative_deviation,
        band_rms,
        band,
        n_bins: in_band.len(),
        tolerance,
        within: band_rms <= tolerance,
    })
}
