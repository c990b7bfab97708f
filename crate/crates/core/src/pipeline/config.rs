//! Run configuration.
//!
//! A TOML file with one flat section per stage:
//!
//! ```toml
//! [telegraph]
//! tau_bright = 0.171
//! tau_dark = 0.021        # or: repump_power_mw = 0.4
//!
//! [heterodyne]
//! snr = 1000.0
//!
//! [run]
//! duration = 600.0
//! seed = 1
//! ```
//!
//! Every key is optional except the telegraph time constants. Command-line
//! flags override the file, and the file overrides the built-in defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dsp::WindowKind;
use crate::error::{Error, Result};
use crate::heterodyne::{HeterodyneParams, DEFAULT_CARRIER, DEFAULT_SAMPLE_RATE};
use crate::jump_stats::ThresholdConfig;
use crate::photon::DetectionParams;
use crate::spectral::{DownconvertPlan, WelchConfig};
use crate::telegraph::{
    calibrate_rate_model, InitialState, RepumpRateModel, TelegraphParams, SPONTANEOUS_LIFETIME,
};

/// Repump calibration points (power mW, τ_D s) used when no deshelving
/// rate is given: the two ends of the observed dark-time range.
pub const DEFAULT_CALIBRATION: [(f64, f64); 2] = [(2.0, 0.008), (0.2, 0.040)];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TelegraphSection {
    pub tau_bright: Option<f64>,
    pub tau_dark: Option<f64>,
    pub repump_power_mw: Option<f64>,
    pub tau_spont: f64,
    /// Deshelving rate per mW; calibrated from `calibration` when unset.
    pub k_deshelve: Option<f64>,
    pub calibration: Vec<(f64, f64)>,
    pub initial_state: InitialState,
    /// Hold the system bright for the whole record (no quantum jumps).
    pub no_jumps: bool,
}

impl Default for TelegraphSection {
    fn default() -> Self {
        Self {
            tau_bright: None,
            tau_dark: None,
            repump_power_mw: None,
            tau_spont: SPONTANEOUS_LIFETIME,
            k_deshelve: None,
            calibration: DEFAULT_CALIBRATION.to_vec(),
            initial_state: InitialState::Stationary,
            no_jumps: false,
        }
    }
}

impl TelegraphSection {
    pub fn rate_model(&self) -> Result<(RepumpRateModel, Vec<String>)> {
        match self.k_deshelve {
            Some(k) => Ok((RepumpRateModel::new(self.tau_spont, k)?, Vec::new())),
            None => {
                let cal = calibrate_rate_model(&self.calibration, self.tau_spont)?;
                Ok((cal.model, cal.warnings))
            }
        }
    }

    /// Resolves the time constants, returning any calibration warnings.
    pub fn params(&self) -> Result<(TelegraphParams, Vec<String>)> {
        let tb = self
            .tau_bright
            .ok_or_else(|| Error::invalid("telegraph.tau_bright is required"))?;
        match (self.tau_dark, self.repump_power_mw) {
            (Some(td), None) => Ok((TelegraphParams::new(tb, td)?, Vec::new())),
            (None, Some(power)) => {
                let (model, warnings) = self.rate_model()?;
                Ok((TelegraphParams::new(tb, model.tau_dark_of_power(power)?)?, warnings))
            }
            (Some(_), Some(_)) => Err(Error::invalid(
                "give either telegraph.tau_dark or telegraph.repump_power_mw, not both",
            )),
            (None, None) => Err(Error::invalid(
                "telegraph.tau_dark or telegraph.repump_power_mw is required",
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeterodyneSection {
    pub nu_l: f64,
    pub sample_rate: f64,
    pub carrier_amplitude: f64,
    /// Ungated carrier power over the noise power in `snr_bandwidth`.
    pub snr: f64,
    pub snr_bandwidth: f64,
    /// Explicit one-sided noise density; overrides `snr`.
    pub noise_density: Option<f64>,
    pub phase_walk_rate: f64,
    /// Add the ±50 Hz acoustic pickup pair.
    pub acoustic_pair: bool,
}

impl Default for HeterodyneSection {
    fn default() -> Self {
        Self {
            nu_l: DEFAULT_CARRIER,
            sample_rate: DEFAULT_SAMPLE_RATE,
            carrier_amplitude: 1.0,
            snr: 1e3,
            snr_bandwidth: 1.0,
            noise_density: None,
            phase_walk_rate: 0.0,
            acoustic_pair: false,
        }
    }
}

impl HeterodyneSection {
    pub fn params(&self, seed: u64) -> Result<HeterodyneParams> {
        let mut p = HeterodyneParams {
            nu_l: self.nu_l,
            sample_rate: self.sample_rate,
            carrier_amplitude: self.carrier_amplitude,
            phase_walk_rate: self.phase_walk_rate,
            seed,
            ..Default::default()
        };
        match self.noise_density {
            Some(n0) => p.noise_density = n0,
            None => {
                if !(self.snr > 0.0 && self.snr_bandwidth > 0.0) {
                    return Err(Error::invalid("heterodyne.snr and snr_bandwidth must be > 0"));
                }
                p.set_snr(self.snr, self.snr_bandwidth);
            }
        }
        if self.acoustic_pair {
            p = p.with_acoustic_pair();
        }
        p.validate()?;
        Ok(p)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WelchSection {
    pub segment_length: usize,
    pub overlap_fraction: f64,
    pub window: WindowKind,
    pub detrend: bool,
    pub span: Option<f64>,
    /// Resolution the decimation plan aims for, Hz.
    pub target_delta_r: f64,
    /// Alias-free half-band of the decimated stream, Hz.
    pub passband: f64,
    /// Segment length for the bright-only spectrum, whose qualifying
    /// periods are too short for full-resolution segments.
    pub conditional_segment_length: usize,
    /// Bright periods used by the conditional spectrum are at least this
    /// many mean bright times long.
    pub conditional_min_bright: f64,
}

impl Default for WelchSection {
    fn default() -> Self {
        let w = WelchConfig::default();
        Self {
            segment_length: w.segment_length,
            overlap_fraction: w.overlap_fraction,
            window: w.window,
            detrend: w.detrend,
            span: w.span,
            target_delta_r: 1.0,
            passband: 280.0,
            conditional_segment_length: 256,
            conditional_min_bright: 5.0,
        }
    }
}

impl WelchSection {
    pub fn welch(&self) -> WelchConfig {
        WelchConfig {
            segment_length: self.segment_length,
            overlap_fraction: self.overlap_fraction,
            window: self.window,
            detrend: self.detrend,
            span: self.span,
        }
    }

    pub fn conditional_welch(&self) -> WelchConfig {
        WelchConfig {
            segment_length: self.conditional_segment_length,
            ..self.welch()
        }
    }

    pub fn plan(&self, het: &HeterodyneParams) -> Result<DownconvertPlan> {
        DownconvertPlan::for_resolution(
            het.sample_rate,
            het.nu_l,
            self.segment_length,
            self.window,
            self.target_delta_r,
            self.passband,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub duration: f64,
    pub seed: u64,
    pub out: Option<PathBuf>,
    /// Also write the full-rate beat record (large: 8 bytes per sample).
    pub write_signal: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            duration: 600.0,
            seed: 0,
            out: None,
            write_signal: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub telegraph: TelegraphSection,
    pub detection: DetectionParams,
    pub heterodyne: HeterodyneSection,
    pub welch: WelchSection,
    pub threshold: ThresholdConfig,
    pub run: RunSection,
}

impl RunConfig {
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(1);
            Error::Parse {
                path: origin.to_string(),
                line,
                msg: e.message().to_string(),
            }
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Built-in parameter sets.
    pub fn preset(name: &str) -> Result<Self> {
        let (tb, td) = match name {
            "fig4b" => (0.103, 0.008),
            "fig4c" | "no-jump" => (0.171, 0.021),
            "fig4d" => (0.160, 0.039),
            "fig3" => (0.171, 0.021),
            other => {
                return Err(Error::invalid(format!(
                    "unknown preset `{other}` (expected fig3, fig4b, fig4c, fig4d or no-jump)"
                )))
            }
        };
        let mut cfg = RunConfig::default();
        cfg.telegraph.tau_bright = Some(tb);
        cfg.telegraph.tau_dark = Some(td);
        cfg.telegraph.no_jumps = name == "no-jump";
        if name == "fig3" {
            cfg.run.duration = 60.0;
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.run.duration.is_finite() && self.run.duration > 0.0) {
            return Err(Error::invalid(format!(
                "run.duration must be > 0, got {}",
                self.run.duration
            )));
        }
        self.telegraph.params()?;
        self.detection.validate()?;
        let het = self.heterodyne.params(0)?;
        self.welch.welch().validate()?;
        self.welch.conditional_welch().validate()?;
        self.welch.plan(&het)?;
        self.threshold.validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_parses_with_defaults() {
        let cfg = RunConfig::from_toml_str("[telegraph]\ntau_bright = 0.16\ntau_dark = 0.039\n", "x").unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.run.duration, 600.0);
        let (p, _) = cfg.telegraph.params().unwrap();
        assert_eq!(p.tau_dark(), 0.039);
    }

    #[test]
    fn repump_power_resolves_through_rate_model() {
        let text = "[telegraph]\ntau_bright = 0.171\nrepump_power_mw = 0.4\n";
        let cfg = RunConfig::from_toml_str(text, "x").unwrap();
        let (p, _) = cfg.telegraph.params().unwrap();
        assert!((p.tau_dark() - 0.021).abs() / 0.021 < 0.25, "{}", p.tau_dark());
    }

    #[test]
    fn exactly_one_dark_source() {
        let both = "[telegraph]\ntau_bright = 0.1\ntau_dark = 0.01\nrepump_power_mw = 1.0\n";
        assert!(RunConfig::from_toml_str(both, "x").unwrap().validate().is_err());
        let none = "[telegraph]\ntau_bright = 0.1\n";
        assert!(RunConfig::from_toml_str(none, "x").unwrap().validate().is_err());
    }

    #[test]
    fn unknown_key_reports_line() {
        let text = "[telegraph]\ntau_bright = 0.1\n\n[run]\nduraton = 5\n";
        let err = RunConfig::from_toml_str(text, "cfg.toml").unwrap_err().to_string();
        assert!(err.starts_with("cfg.toml:5"), "{err}");
    }

    #[test]
    fn presets_and_round_trip() {
        for name in ["fig3", "fig4b", "fig4c", "fig4d", "no-jump"] {
            let cfg = RunConfig::preset(name).unwrap();
            cfg.validate().unwrap();
            let back = RunConfig::from_toml_str(&cfg.to_toml(), "x").unwrap();
            assert_eq!(back, cfg);
        }
        assert!(RunConfig::preset("fig9").is_err());
    }

    #[test]
    fn zero_duration_is_rejected() {
        let mut cfg = RunConfig::preset("fig4c").unwrap();
        cfg.run.duration = 0.0;
        assert!(cfg.validate().is_err());
    }
}
