//! Spectral estimation of the beat signal.
//!
//! Two routes produce a [`Spectrum`] on an offset grid centered on the
//! carrier:
//!
//! * [`estimate_psd`] runs Welch directly on the real full-rate record and
//!   returns the one-sided PSD.
//! * [`decimate::Downconverter`] mixes the record to complex baseband and
//!   decimates it to a narrow analysis band; [`estimate_baseband_psd`] then
//!   runs Welch on the complex stream. This is the route used for long
//!   records, where the full-rate signal never needs to be held in memory.
//!
//! Both routes use the same density convention: a sinusoid of power `P`
//! integrates to `P`, and white noise of one-sided density `N₀` reads `N₀`.

pub mod compare;
pub mod decimate;
pub mod fit;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::dsp::WindowKind;
use crate::error::{Error, Result};
use crate::heterodyne::SampledSignal;
use crate::telegraph::JumpTrajectory;

pub use compare::{oracle_compare, render_analytic, ComparisonReport};
pub use decimate::{downconvert, BasebandSignal, DownconvertPlan, Downconverter};
pub use fit::{
    fit_pedestal, fit_pedestal_with, model_curve, peak_convention_factor, FitOptions, FitUncertainties, PedestalFit,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WelchConfig {
    pub segment_length: usize,
    pub overlap_fraction: f64,
    pub window: WindowKind,
    pub detrend: bool,
    /// Keep only offsets with `|ν| ≤ span`.
    pub span: Option<f64>,
}

impl Default for WelchConfig {
    fn default() -> Self {
        Self {
            segment_length: 1024,
            overlap_fraction: 0.5,
            window: WindowKind::Hann,
            detrend: false,
            span: Some(256.0),
        }
    }
}

impl WelchConfig {
    pub fn validate(&self) -> Result<()> {
        let n = self.segment_length;
        if n < 256 || !n.is_power_of_two() {
            return Err(Error::invalid(format!(
                "segment length must be a power of two >= 256, got {n}"
            )));
        }
        if !(0.0..1.0).contains(&self.overlap_fraction) {
            return Err(Error::invalid("overlap fraction must be in [0, 1)"));
        }
        if let Some(s) = self.span {
            if !(s > 0.0) {
                return Err(Error::invalid("span must be > 0"));
            }
        }
        Ok(())
    }

    pub fn hop(&self) -> usize {
        let overlap = (self.segment_length as f64 * self.overlap_fraction).round() as usize;
        (self.segment_length - overlap).max(1)
    }

    fn starts(&self, len: usize) -> impl Iterator<Item = usize> {
        let n = self.segment_length;
        (0..).step_by(self.hop()).take_while(move |s| s + n <= len)
    }
}

/// Power spectral density on an ascending, uniform offset grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub freq_offsets: Vec<f64>,
    pub psd: Vec<f64>,
    /// FWHM of the window's line response, Hz.
    pub delta_r: f64,
    /// Equivalent noise bandwidth, Hz.
    pub enbw: f64,
    pub n_averages: usize,
    pub window: WindowKind,
    pub segment_length: usize,
    /// Rate of the stream the periodograms were taken from.
    pub sample_rate: f64,
}

impl Spectrum {
    pub fn bin_width(&self) -> f64 {
        self.sample_rate / self.segment_length as f64
    }

    /// Peak-normalized line response of the analysis window at offset `df`.
    pub fn line_response(&self, df: f64) -> f64 {
        let theta = 2.0 * std::f64::consts::PI * df / self.sample_rate;
        self.window.power_response(self.segment_length, theta)
    }

    /// Rectangle-rule integral of the PSD over the grid.
    pub fn integral(&self) -> f64 {
        self.psd.iter().sum::<f64>() * self.bin_width()
    }

    pub fn peak_index(&self) -> usize {
        self.psd
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }

    pub fn max_abs_offset(&self) -> f64 {
        self.freq_offsets
            .iter()
            .fold(0.0f64, |m, f| m.max(f.abs()))
    }

    /// Median of the PSD over bins with `|ν| ≥ min_offset`.
    pub fn median_beyond(&self, min_offset: f64) -> Option<f64> {
        let mut v: Vec<f64> = self
            .freq_offsets
            .iter()
            .zip(&self.psd)
            .filter(|(f, _)| f.abs() >= min_offset)
            .map(|(_, p)| *p)
            .collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        Some(v[v.len() / 2])
    }

    fn crop(mut self, span: Option<f64>) -> Self {
        if let Some(s) = span {
            let keep: Vec<bool> = self.freq_offsets.iter().map(|f| f.abs() <= s).collect();
            let mut it = keep.iter();
            self.freq_offsets.retain(|_| *it.next().unwrap());
            let mut it = keep.iter();
            self.psd.retain(|_| *it.next().unwrap());
        }
        self
    }
}

/// Binary-counter pairwise summation of equal-length vectors.
struct PairwiseSum {
    levels: Vec<Option<Vec<f64>>>,
    count: usize,
}

impl PairwiseSum {
    fn new() -> Self {
        Self {
            levels: Vec::new(),
            count: 0,
        }
    }

    fn push(&mut self, mut v: Vec<f64>) {
        self.count += 1;
        let mut level = 0;
        loop {
            if level == self.levels.len() {
                self.levels.push(None);
            }
            match self.levels[level].take() {
                None => {
                    self.levels[level] = Some(v);
                    return;
                }
                Some(other) => {
                    v.iter_mut().zip(&other).for_each(|(a, b)| *a += b);
                    level += 1;
                }
            }
        }
    }

    fn finish(self) -> Option<(Vec<f64>, usize)> {
        let mut acc: Option<Vec<f64>> = None;
        for v in self.levels.into_iter().flatten() {
            acc = Some(match acc {
                None => v,
                Some(mut a) => {
                    a.iter_mut().zip(&v).for_each(|(x, y)| *x += y);
                    a
                }
            });
        }
        acc.map(|a| (a, self.count))
    }
}

/// Averages `|FFT(window · segment)|²` over the given segment starts.
fn average_periodogram<F>(cfg: &WelchConfig, starts: impl Iterator<Item = usize>, fill: F) -> Option<(Vec<f64>, usize)>
where
    F: Fn(usize, &mut [Complex64]),
{
    let n = cfg.segment_length;
    let window = cfg.window.coefficients(n);
    let fft = FftPlanner::new().plan_fft_forward(n);
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    let mut buf = vec![Complex64::default(); n];
    let mut acc = PairwiseSum::new();
    for s in starts {
        fill(s, &mut buf);
        if cfg.detrend {
            let mean = buf.iter().sum::<Complex64>() / n as f64;
            buf.iter_mut().for_each(|z| *z -= mean);
        }
        buf.iter_mut().zip(&window).for_each(|(z, w)| *z *= w);
        fft.process_with_scratch(&mut buf, &mut scratch);
        acc.push(buf.iter().map(|z| z.norm_sqr()).collect());
    }
    acc.finish()
}

fn window_constants(cfg: &WelchConfig, sample_rate: f64) -> (f64, f64, f64) {
    let n = cfg.segment_length;
    let w = cfg.window.coefficients(n);
    let s2: f64 = w.iter().map(|x| x * x).sum();
    let bin = sample_rate / n as f64;
    (s2, cfg.window.fwhm_bins(n) * bin, cfg.window.enbw_bins(n) * bin)
}

fn check_finite(samples: &[f64]) -> Result<()> {
    match samples.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::invalid(format!("non-finite sample at index {i}"))),
        None => Ok(()),
    }
}

fn real_spectrum(signal: &SampledSignal, cfg: &WelchConfig, starts: impl Iterator<Item = usize>) -> Result<Spectrum> {
    let n = cfg.segment_length;
    let x = &signal.samples;
    let (sum, count) = average_periodogram(cfg, starts, |s, buf| {
        for (b, v) in buf.iter_mut().zip(&x[s..s + n]) {
            *b = Complex64::new(*v, 0.0);
        }
    })
    .ok_or_else(|| Error::InsufficientData("no segments to average".into()))?;
    let fs = signal.sample_rate;
    let (s2, delta_r, enbw) = window_constants(cfg, fs);
    let scale = 1.0 / (fs * s2 * count as f64);
    let half = n / 2;
    let bin = fs / n as f64;
    let psd = (0..=half)
        .map(|k| {
            let one_sided = if k == 0 || k == half { 1.0 } else { 2.0 };
            one_sided * sum[k] * scale
        })
        .collect();
    let freq_offsets = (0..=half).map(|k| k as f64 * bin - signal.carrier_hint).collect();
    Ok(Spectrum {
        freq_offsets,
        psd,
        delta_r,
        enbw,
        n_averages: count,
        window: cfg.window,
        segment_length: n,
        sample_rate: fs,
    }
    .crop(cfg.span))
}

/// Welch one-sided PSD of a real record, offsets relative to its carrier hint.
pub fn estimate_psd(signal: &SampledSignal, cfg: &WelchConfig) -> Result<Spectrum> {
    cfg.validate()?;
    check_finite(&signal.samples)?;
    if signal.samples.len() < cfg.segment_length {
        return Err(Error::InsufficientData(format!(
            "signal of {} samples is shorter than one {}-sample segment",
            signal.samples.len(),
            cfg.segment_length
        )));
    }
    real_spectrum(signal, cfg, cfg.starts(signal.samples.len()))
}

fn baseband_spectrum(bb: &BasebandSignal, cfg: &WelchConfig, starts: impl Iterator<Item = usize>) -> Result<Spectrum> {
    let n = cfg.segment_length;
    let (sum, count) = average_periodogram(cfg, starts, |s, buf| {
        buf.copy_from_slice(&bb.samples[s..s + n]);
    })
    .ok_or_else(|| Error::InsufficientData("no segments to average".into()))?;
    let fs = bb.sample_rate;
    let (s2, delta_r, enbw) = window_constants(cfg, fs);
    let scale = 1.0 / (fs * s2 * count as f64);
    let bin = fs / n as f64;
    let shift = bb.center - bb.carrier_hint;
    let mut freq_offsets = Vec::with_capacity(n);
    let mut psd = Vec::with_capacity(n);
    for i in 0..n {
        // fftshift: negative frequencies first
        let k = (i + n / 2 + n % 2) % n;
        let f = if k >= n.div_ceil(2) {
            k as f64 - n as f64
        } else {
            k as f64
        };
        freq_offsets.push(f * bin + shift);
        psd.push(sum[k] * scale);
    }
    let span = match cfg.span {
        Some(s) => Some(s.min(bb.passband)),
        None => Some(bb.passband),
    };
    Ok(Spectrum {
        freq_offsets,
        psd,
        delta_r,
        enbw,
        n_averages: count,
        window: cfg.window,
        segment_length: n,
        sample_rate: fs,
    }
    .crop(span))
}

/// Welch PSD of a complex baseband record, cropped to its usable passband.
pub fn estimate_baseband_psd(bb: &BasebandSignal, cfg: &WelchConfig) -> Result<Spectrum> {
    cfg.validate()?;
    if let Some(i) = bb.samples.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::invalid(format!("non-finite sample at index {i}")));
    }
    if bb.samples.len() < cfg.segment_length {
        return Err(Error::InsufficientData(format!(
            "baseband record of {} samples is shorter than one {}-sample segment",
            bb.samples.len(),
            cfg.segment_length
        )));
    }
    baseband_spectrum(bb, cfg, cfg.starts(bb.samples.len()))
}

/// Segment starts on the regular Welch grid whose span, widened by `guard`
/// seconds on each side, lies inside a single bright period of observed
/// length at least `min_bright`.
fn bright_segment_starts(
    traj: &JumpTrajectory,
    cfg: &WelchConfig,
    n_samples: usize,
    t0: f64,
    dt: f64,
    guard: f64,
    min_bright: f64,
) -> Result<Vec<usize>> {
    let seg_time = (cfg.segment_length - 1) as f64 * dt + 2.0 * guard;
    let need = min_bright.max(seg_time);
    let bright: Vec<(f64, f64)> = traj
        .periods()
        .filter(|(s, a, b)| s.is_bright() && b - a >= min_bright)
        .map(|(_, a, b)| (a, b))
        .collect();
    if !bright.iter().any(|(a, b)| b - a >= need) {
        return Err(Error::InsufficientData(format!(
            "no bright period of at least {need:.4} s"
        )));
    }
    let n = cfg.segment_length;
    let mut out = Vec::new();
    let mut k = 0;
    for s in cfg.starts(n_samples) {
        let lo = t0 + s as f64 * dt - guard;
        let hi = t0 + (s + n - 1) as f64 * dt + guard;
        while k < bright.len() && bright[k].1 < hi {
            k += 1;
        }
        if k < bright.len() && bright[k].0 <= lo {
            out.push(s);
        }
    }
    if out.is_empty() {
        return Err(Error::InsufficientData(
            "no analysis segment fits inside a qualifying bright period".into(),
        ));
    }
    Ok(out)
}

/// Welch PSD restricted to segments lying wholly inside bright periods of
/// at least `min_bright` seconds.
pub fn conditional_psd(
    signal: &SampledSignal,
    traj: &JumpTrajectory,
    cfg: &WelchConfig,
    min_bright: f64,
) -> Result<Spectrum> {
    cfg.validate()?;
    check_finite(&signal.samples)?;
    let starts = bright_segment_starts(
        traj,
        cfg,
        signal.samples.len(),
        0.0,
        1.0 / signal.sample_rate,
        0.0,
        min_bright,
    )?;
    real_spectrum(signal, cfg, starts.into_iter())
}

/// Baseband counterpart of [`conditional_psd`]; segments keep a margin of
/// the decimation filter's half-length from the period boundaries.
pub fn conditional_baseband_psd(
    bb: &BasebandSignal,
    traj: &JumpTrajectory,
    cfg: &WelchConfig,
    min_bright: f64,
) -> Result<Spectrum> {
    cfg.validate()?;
    let starts = bright_segment_starts(
        traj,
        cfg,
        bb.samples.len(),
        bb.start_time,
        1.0 / bb.sample_rate,
        bb.guard,
        min_bright,
    )?;
    baseband_spectrum(bb, cfg, starts.into_iter())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heterodyne::{synthesize_beat, HeterodyneParams};
    use crate::telegraph::State;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    use std::f64::consts::PI;

    fn full_band(n: usize) -> WelchConfig {
        WelchConfig {
            segment_length: n,
            span: None,
            ..Default::default()
        }
    }

    fn white(n: usize, sigma: f64, seed: u64) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                sigma * z
            })
            .collect()
    }

    #[test]
    fn config_validation() {
        assert!(full_band(200).validate().is_err());
        assert!(full_band(300).validate().is_err());
        assert!(WelchConfig {
            overlap_fraction: 1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(WelchConfig::default().validate().is_ok());
    }

    #[test]
    fn short_or_nan_signal_errors() {
        let s = SampledSignal::new(1000.0, vec![0.0; 100], 0.0).unwrap();
        assert!(estimate_psd(&s, &full_band(256)).is_err());
        let mut bad = SampledSignal::new(1000.0, vec![0.0; 1000], 0.0).unwrap();
        bad.samples[5] = f64::NAN;
        assert!(estimate_psd(&bad, &full_band(256)).is_err());
    }

    #[test]
    fn rectangular_parseval() {
        let fs = 1000.0;
        let x = white(1 << 16, 1.7, 1);
        let var = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        let s = SampledSignal::new(fs, x, 0.0).unwrap();
        let cfg = WelchConfig {
            segment_length: 1024,
            overlap_fraction: 0.0,
            window: WindowKind::Rectangular,
            detrend: false,
            span: None,
        };
        let spec = estimate_psd(&s, &cfg).unwrap();
        assert!((spec.integral() - var).abs() / var < 0.01);
    }

    #[test]
    fn hann_line_sits_at_zero_with_resolution_width() {
        let fs = 4096.0;
        let f0 = 1000.0;
        let n = 1 << 16;
        let x: Vec<f64> = (0..n).map(|i| (2.0 * PI * f0 * i as f64 / fs).cos()).collect();
        let s = SampledSignal::new(fs, x, f0).unwrap();
        let spec = estimate_psd(&s, &full_band(1024)).unwrap();
        let k = spec.peak_index();
        assert!(spec.freq_offsets[k].abs() < 1e-9);
        // −3 dB width from linear interpolation of the sampled response
        let peak = spec.psd[k];
        let bin = spec.bin_width();
        let mut width = 0.0;
        for dir in [-1isize, 1] {
            let mut j = k as isize;
            while spec.psd[(j + dir) as usize] > peak / 2.0 {
                j += dir;
            }
            let a = spec.psd[j as usize];
            let b = spec.psd[(j + dir) as usize];
            width += ((j - k as isize).abs() as f64 + (a - peak / 2.0) / (a - b)) * bin;
        }
        assert!((width - spec.delta_r).abs() / spec.delta_r < 0.10, "width {width} vs {}", spec.delta_r);
        // line power P appears with peak P / ENBW
        assert_relative_eq!(peak, 0.5 / spec.enbw, max_relative = 1e-6);
        assert_relative_eq!(spec.enbw, 1.5 * bin, max_relative = 1e-12);
    }

    #[test]
    fn white_noise_level() {
        let fs = 8192.0;
        let n0: f64 = 3e-3;
        let x = white(1 << 18, (n0 * fs / 2.0).sqrt(), 2);
        let s = SampledSignal::new(fs, x, 0.0).unwrap();
        let spec = estimate_psd(&s, &full_band(512)).unwrap();
        let interior = &spec.psd[1..spec.psd.len() - 1];
        let mean = interior.iter().sum::<f64>() / interior.len() as f64;
        assert!((mean - n0).abs() / n0 < 3.0 / (spec.n_averages as f64).sqrt());
    }

    #[test]
    fn pairwise_sum_matches_plain_sum() {
        let mut p = PairwiseSum::new();
        for i in 0..37 {
            p.push(vec![i as f64, 1.0]);
        }
        let (v, c) = p.finish().unwrap();
        assert_eq!(c, 37);
        assert_eq!(v, vec![666.0, 37.0]);
    }

    #[test]
    fn conditional_on_always_bright_equals_unconditioned() {
        let traj = JumpTrajectory::constant(0.5, State::Bright).unwrap();
        let het = HeterodyneParams {
            noise_density: 1e-4,
            ..Default::default()
        };
        let s = synthesize_beat(&traj, &het).unwrap();
        let cfg = full_band(4096);
        let a = estimate_psd(&s, &cfg).unwrap();
        let b = conditional_psd(&s, &traj, &cfg, 0.1).unwrap();
        assert_eq!(a, b);
        assert!(conditional_psd(&s, &traj, &cfg, 1.0).is_err());
    }

    #[test]
    fn conditional_picks_only_bright_segments() {
        let traj = JumpTrajectory::new(1.0, State::Dark, vec![0.2, 0.7]).unwrap();
        let cfg = WelchConfig {
            segment_length: 256,
            overlap_fraction: 0.0,
            ..full_band(256)
        };
        let starts = bright_segment_starts(&traj, &cfg, 1024, 0.0, 1.0 / 1024.0, 0.0, 0.3).unwrap();
        // segments of 0.25 s at 0, 0.25, 0.5, 0.75: only [0.25, 0.5) and
        // [0.5, 0.75) would fit, and the latter crosses 0.7
        assert_eq!(starts, vec![256]);
    }
}
