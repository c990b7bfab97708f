//! wasm-bindgen entry points for the static demo page in `www/`. Every
//! function takes times in milliseconds and returns a JSON string.

use jumpspec::jump_stats::{detect_periods, make_histogram, summarize};
use jumpspec::photon::low_pass;
use jumpspec::pipeline::{simulate, RunConfig};
use jumpspec::spectral::{estimate_baseband_psd, fit_pedestal, model_curve};
use jumpspec::telegraph::predict_pedestal;
use jumpspec::{State, TelegraphParams};
use serde_json::json;
use wasm_bindgen::prelude::*;

fn config(tau_bright_ms: f64, tau_dark_ms: f64, seconds: f64, seed: u64) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.telegraph.tau_bright = Some(tau_bright_ms * 1e-3);
    cfg.telegraph.tau_dark = Some(tau_dark_ms * 1e-3);
    cfg.run.duration = seconds;
    cfg.run.seed = seed;
    cfg
}

fn to_js(r: Result<serde_json::Value, jumpspec::Error>) -> Result<String, JsValue> {
    r.map(|v| v.to_string()).map_err(|e| JsValue::from_str(&e.to_string()))
}

pub fn predict_value(tau_bright_ms: f64, tau_dark_ms: f64) -> Result<serde_json::Value, jumpspec::Error> {
    let params = TelegraphParams::new(tau_bright_ms * 1e-3, tau_dark_ms * 1e-3)?;
    let pred = predict_pedestal(&params, 1.0)?;
    let span = (6.0 * pred.delta_l).max(10.0);
    let n = 801;
    let nu: Vec<f64> = (0..n).map(|i| -span + 2.0 * span * i as f64 / (n - 1) as f64).collect();
    let density: Vec<f64> = nu.iter().map(|&f| pred.density(1.0, f)).collect();
    Ok(json!({
        "prediction": pred,
        "weight_ratio": pred.weight_ratio(),
        "nu": nu,
        "density": density,
    }))
}

/// Closed-form width, height ratio and line + pedestal curve at 1 Hz
/// resolution.
#[wasm_bindgen]
pub fn predict(tau_bright_ms: f64, tau_dark_ms: f64) -> Result<String, JsValue> {
    to_js(predict_value(tau_bright_ms, tau_dark_ms))
}

pub fn dwell_value(tau_bright_ms: f64, tau_dark_ms: f64, seconds: f64, seed: u64) -> Result<serde_json::Value, jumpspec::Error> {
    let cfg = config(tau_bright_ms, tau_dark_ms, seconds, seed);
    let (params, _) = cfg.telegraph.params()?;
    let seeds = jumpspec::pipeline::stage_seeds(seed);
    let traj = jumpspec::telegraph::sample_trajectory(&params, seconds, seeds["telegraph"], cfg.telegraph.initial_state)?;
    let counts = jumpspec::photon::synthesize_counts(&traj, &cfg.detection, seeds["photon"])?;
    let trace = low_pass(&counts, cfg.threshold.filter_time_constant)?;
    let periods = detect_periods(&trace, &cfg.threshold)?;
    let stats = summarize(&periods, &cfg.threshold, seeds["bootstrap"]);
    let hist = make_histogram(
        &periods,
        State::Dark,
        cfg.threshold.histogram_bin_width,
        cfg.threshold.min_duration,
    )
    .ok();
    // first two seconds of the trace for display
    let shown = trace.values.len().min((2.0 / counts.bin_width) as usize);
    Ok(json!({
        "time": (0..shown).map(|i| trace.time(i)).collect::<Vec<_>>(),
        "intensity": &trace.values[..shown],
        "dark_level": periods.dark_level,
        "bright_level": periods.bright_level,
        "histogram": hist.map(|h| json!({ "centres": h.bin_centres(), "counts": h.counts })),
        "stats": stats,
    }))
}

/// Photon-counting branch: intensity trace, dark-period histogram and the
/// exponential fit.
#[wasm_bindgen]
pub fn dwell(tau_bright_ms: f64, tau_dark_ms: f64, seconds: f64, seed: u32) -> Result<String, JsValue> {
    to_js(dwell_value(tau_bright_ms, tau_dark_ms, seconds, seed as u64))
}

pub fn spectrum_value(tau_bright_ms: f64, tau_dark_ms: f64, seconds: f64, seed: u64) -> Result<serde_json::Value, jumpspec::Error> {
    let cfg = config(tau_bright_ms, tau_dark_ms, seconds, seed);
    let sim = simulate(&cfg)?;
    let spec = estimate_baseband_psd(&sim.baseband, &cfg.welch.welch())?;
    let fit = fit_pedestal(&spec, None)?;
    let pred = predict_pedestal(&sim.params, spec.delta_r)?;
    Ok(json!({
        "nu": spec.freq_offsets,
        "psd": spec.psd,
        "model": model_curve(&spec, &fit),
        "n_averages": spec.n_averages,
        "fit": fit,
        "prediction": pred,
    }))
}

/// Full heterodyne path on a short record: beat, down-conversion, Welch
/// spectrum and the line + pedestal fit.
#[wasm_bindgen]
pub fn spectrum(tau_bright_ms: f64, tau_dark_ms: f64, seconds: f64, seed: u32) -> Result<String, JsValue> {
    to_js(spectrum_value(tau_bright_ms, tau_dark_ms, seconds, seed as u64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn predict_curve_peaks_at_zero() {
        let v = predict_value(171.0, 21.0).unwrap();
        let d: Vec<f64> = serde_json::from_value(v["density"].clone()).unwrap();
        let k = d.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(k, d.len() / 2);
        assert!((v["prediction"]["delta_L"].as_f64().unwrap() - 17.02).abs() < 0.01);
        assert!(predict_value(-1.0, 21.0).is_err());
    }

    #[test]
    fn dwell_returns_histogram() {
        let v = dwell_value(171.0, 21.0, 20.0, 1).unwrap();
        assert!(v["histogram"]["counts"].as_array().unwrap().len() > 1);
        assert!(v["stats"]["tau_dark_hat"].as_f64().unwrap() > 0.0);
    }

    #[test]
    fn spectrum_fits_a_short_record() {
        let v = spectrum_value(103.0, 8.0, 30.0, 2).unwrap();
        let dl = v["fit"]["delta_L_hat"].as_f64().unwrap();
        assert!((dl / 42.88 - 1.0).abs() < 0.3, "{dl}");
        assert_eq!(v["psd"].as_array().unwrap().len(), v["model"].as_array().unwrap().len());
    }
}
