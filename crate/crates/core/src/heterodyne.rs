//! The down-converted heterodyne beat.
//!
//! The record is `s[n] = A·g(tₙ)·cos(2πν_L tₙ + φ₀ + φ_w(tₙ)) + sidebands + w[n]`
//! where `g` is the jump gate (amplitude and intensity gating coincide for a
//! {0,1} gate), `φ_w` an optional Wiener phase walk standing in for optical
//! path-length drift, and `w` white Gaussian noise of one-sided density
//! `noise_density` (LO shot noise dominates, so the Gaussian limit applies).

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dsp::{kaiser_beta, kaiser_length, kaiser_lowpass};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, SimRng};
use crate::telegraph::JumpTrajectory;

/// Down-converted carrier frequency, Hz.
pub const DEFAULT_CARRIER: f64 = 70.0e3;
/// 2¹⁸ Hz.
pub const DEFAULT_SAMPLE_RATE: f64 = 262_144.0;
/// Optical heterodyne frequency before down-conversion. Provenance only.
pub const OPTICAL_HETERODYNE_FREQUENCY: f64 = 21.4e6;

/// Phasor recurrences are re-anchored to the exact phase at multiples of
/// this absolute sample index, which keeps output independent of chunking.
pub(crate) const ANCHOR_INTERVAL: u64 = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sideband {
    pub offset: f64,
    pub relative_amplitude: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeterodyneParams {
    pub nu_l: f64,
    pub sample_rate: f64,
    pub carrier_amplitude: f64,
    /// One-sided noise power density, units²/Hz.
    pub noise_density: f64,
    /// Diffusion constant of the phase walk, rad²/s. Zero disables it.
    pub phase_walk_rate: f64,
    pub acoustic_sidebands: Vec<Sideband>,
    pub seed: u64,
}

impl Default for HeterodyneParams {
    fn default() -> Self {
        let mut p = Self {
            nu_l: DEFAULT_CARRIER,
            sample_rate: DEFAULT_SAMPLE_RATE,
            carrier_amplitude: 1.0,
            noise_density: 0.0,
            phase_walk_rate: 0.0,
            acoustic_sidebands: Vec::new(),
            seed: 0,
        };
        p.set_snr(1e3, 1.0);
        p
    }
}

impl HeterodyneParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return Err(Error::invalid("sample_rate must be > 0"));
        }
        if !(self.nu_l.is_finite() && self.nu_l > 0.0) {
            return Err(Error::invalid("nu_L must be > 0"));
        }
        if self.sample_rate <= 2.0 * self.nu_l {
            return Err(Error::invalid(format!(
                "sample rate {} Hz violates Nyquist for a {} Hz carrier",
                self.sample_rate, self.nu_l
            )));
        }
        if !(self.noise_density.is_finite() && self.noise_density >= 0.0) {
            return Err(Error::invalid("noise_density must be >= 0"));
        }
        if !(self.phase_walk_rate.is_finite() && self.phase_walk_rate >= 0.0) {
            return Err(Error::invalid("phase_walk_rate must be >= 0"));
        }
        if !self.carrier_amplitude.is_finite() {
            return Err(Error::invalid("carrier amplitude must be finite"));
        }
        for sb in &self.acoustic_sidebands {
            let f = self.nu_l + sb.offset;
            if !(f > 0.0 && f < self.sample_rate / 2.0) || !sb.relative_amplitude.is_finite() {
                return Err(Error::invalid(format!("sideband {sb:?} outside the band")));
            }
        }
        Ok(())
    }

    /// Carrier power `A²/2` of the ungated field.
    pub fn carrier_power(&self) -> f64 {
        0.5 * self.carrier_amplitude * self.carrier_amplitude
    }

    /// Sets the noise density so that the ungated carrier power over the
    /// noise power in `delta_r` equals `snr`.
    pub fn set_snr(&mut self, snr: f64, delta_r: f64) {
        self.noise_density = self.carrier_power() / (snr * delta_r);
    }

    /// Per-sample noise standard deviation, `sqrt(N₀·fs/2)`.
    pub fn noise_sigma(&self) -> f64 {
        (self.noise_density * self.sample_rate / 2.0).sqrt()
    }

    /// The optional ±50 Hz acoustic pickup pair at −40 dB.
    pub fn with_acoustic_pair(mut self) -> Self {
        self.acoustic_sidebands = vec![
            Sideband {
                offset: 50.0,
                relative_amplitude: 1e-2,
            },
            Sideband {
                offset: -50.0,
                relative_amplitude: 1e-2,
            },
        ];
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampledSignal {
    pub sample_rate: f64,
    pub samples: Vec<f64>,
    /// Frequency of the carrier, mapped to offset zero in spectra.
    pub carrier_hint: f64,
}

impl SampledSignal {
    pub fn new(sample_rate: f64, samples: Vec<f64>, carrier_hint: f64) -> Result<Self> {
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(Error::invalid("sample rate must be > 0"));
        }
        if samples.len() < 2 {
            return Err(Error::InsufficientData("signal needs at least 2 samples".into()));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            sample_rate,
            samples,
            carrier_hint,
        })
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    pub fn mean_square(&self) -> f64 {
        self.samples.iter().map(|x| x * x).sum::<f64>() / self.samples.len() as f64
    }
}

/// Resumable state at a chunk boundary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BeatState {
    pub next_index: u64,
    pub wiener_phase: f64,
}

/// Chunked beat synthesis. Concatenated chunks are bit-identical to a single
/// full-length call regardless of chunk sizes.
pub struct BeatSynthesizer<'a> {
    traj: &'a JumpTrajectory,
    het: HeterodyneParams,
    total: u64,
    n: u64,
    switch_k: usize,
    phi0: f64,
    wiener: f64,
    walk_sigma: f64,
    noise_sigma: f64,
    noise_rng: SimRng,
    phase_rng: SimRng,
    carrier: Complex64,
    carrier_step: Complex64,
    sidebands: Vec<SidebandOscillator>,
}

struct SidebandOscillator {
    freq: f64,
    amplitude: f64,
    phase0: f64,
    phasor: Complex64,
    step: Complex64,
}

impl<'a> BeatSynthesizer<'a> {
    pub fn new(traj: &'a JumpTrajectory, het: &HeterodyneParams) -> Result<Self> {
        het.validate()?;
        let total = (traj.duration() * het.sample_rate + 1e-9).floor() as u64;
        if total < 2 {
            return Err(Error::InsufficientData(format!(
                "trajectory of {} s is shorter than two samples",
                traj.duration()
            )));
        }
        let mut init_rng = rng_from_seed(derive_seed(het.seed, "beat/init"));
        let phi0 = 2.0 * PI * init_rng.random::<f64>();
        let sidebands = het
            .acoustic_sidebands
            .iter()
            .map(|sb| {
                let freq = het.nu_l + sb.offset;
                SidebandOscillator {
                    freq,
                    amplitude: sb.relative_amplitude,
                    phase0: 2.0 * PI * init_rng.random::<f64>(),
                    phasor: Complex64::new(1.0, 0.0),
                    step: Complex64::from_polar(1.0, 2.0 * PI * freq / het.sample_rate),
                }
            })
            .collect();
        Ok(Self {
            traj,
            total,
            n: 0,
            switch_k: 0,
            phi0,
            wiener: 0.0,
            walk_sigma: (het.phase_walk_rate / het.sample_rate).sqrt(),
            noise_sigma: het.noise_sigma(),
            noise_rng: rng_from_seed(derive_seed(het.seed, "beat/noise")),
            phase_rng: rng_from_seed(derive_seed(het.seed, "beat/phase")),
            carrier: Complex64::new(1.0, 0.0),
            carrier_step: Complex64::from_polar(1.0, 2.0 * PI * het.nu_l / het.sample_rate),
            sidebands,
            het: het.clone(),
        })
    }

    pub fn total_samples(&self) -> u64 {
        self.total
    }

    pub fn remaining(&self) -> u64 {
        self.total - self.n
    }

    pub fn state(&self) -> BeatState {
        BeatState {
            next_index: self.n,
            wiener_phase: self.wiener,
        }
    }

    fn exact_phasor(freq: f64, fs: f64, n: u64, offset: f64) -> Complex64 {
        let cycles = (n as f64 * (freq / fs)).fract();
        Complex64::from_polar(1.0, 2.0 * PI * cycles + offset)
    }

    /// Fills `out` with the next samples; returns how many were written
    /// (fewer than `out.len()` only at the end of the record).
    pub fn fill(&mut self, out: &mut [f64]) -> usize {
        let fs = self.het.sample_rate;
        let amp = self.het.carrier_amplitude;
        let walking = self.het.phase_walk_rate > 0.0;
        let switches = self.traj.switch_times();
        let count = (out.len() as u64).min(self.remaining()) as usize;
        for slot in out.iter_mut().take(count) {
            let n = self.n;
            if n.is_multiple_of(ANCHOR_INTERVAL) {
                self.carrier = Self::exact_phasor(self.het.nu_l, fs, n, self.phi0);
                for sb in self.sidebands.iter_mut() {
                    sb.phasor = Self::exact_phasor(sb.freq, fs, n, sb.phase0);
                }
            }
            let t = n as f64 / fs;
            while self.switch_k < switches.len() && switches[self.switch_k] <= t {
                self.switch_k += 1;
            }
            let bright = self.switch_k.is_multiple_of(2) == self.traj.initial_state().is_bright();
            let mut v = 0.0;
            if bright {
                let field = if walking {
                    self.carrier * Complex64::from_polar(1.0, self.wiener)
                } else {
                    self.carrier
                };
                v = amp * field.re;
                for sb in &self.sidebands {
                    v += amp * sb.amplitude * sb.phasor.re;
                }
            }
            if self.noise_sigma > 0.0 {
                let z: f64 = self.noise_rng.sample(StandardNormal);
                v += self.noise_sigma * z;
            }
            *slot = v;
            if walking {
                let z: f64 = self.phase_rng.sample(StandardNormal);
                self.wiener += self.walk_sigma * z;
            }
            self.carrier *= self.carrier_step;
            for sb in self.sidebands.iter_mut() {
                sb.phasor *= sb.step;
            }
            self.n += 1;
        }
        count
    }
}

/// Full-length beat record.
pub fn synthesize_beat(traj: &JumpTrajectory, het: &HeterodyneParams) -> Result<SampledSignal> {
    let mut synth = BeatSynthesizer::new(traj, het)?;
    let mut samples = vec![0.0; synth.total_samples() as usize];
    synth.fill(&mut samples);
    SampledSignal::new(het.sample_rate, samples, het.nu_l)
}

/// Zero-phase band-pass: a Kaiser low-pass prototype with its 6 dB point at
/// `bandwidth/2`, shifted to `center` and applied centered so the carrier
/// phase is preserved.
///
/// The transition band is 10% of `bandwidth` wide and straddles the band
/// edges, so the flat passband is `center ± 0.45·bandwidth` and the noise
/// bandwidth is `bandwidth`.
pub fn bandpass(signal: &SampledSignal, center: f64, bandwidth: f64) -> Result<SampledSignal> {
    let fs = signal.sample_rate;
    let lo = center - bandwidth / 2.0;
    let hi = center + bandwidth / 2.0;
    if !(bandwidth > 0.0 && lo > 0.0 && hi < fs / 2.0) {
        return Err(Error::OutOfRange(format!(
            "band [{lo}, {hi}] Hz outside (0, {}) Hz",
            fs / 2.0
        )));
    }
    let atten = 60.0;
    let transition = 0.1 * bandwidth;
    let n_taps = kaiser_length(atten, transition, fs);
    let proto = kaiser_lowpass(bandwidth / 2.0, fs, n_taps, kaiser_beta(atten));
    let m = (n_taps / 2) as isize;
    let taps: Vec<f64> = proto
        .iter()
        .enumerate()
        .map(|(i, h)| 2.0 * h * (2.0 * PI * center / fs * (i as isize - m) as f64).cos())
        .collect();
    let x = &signal.samples;
    let len = x.len() as isize;
    let out: Vec<f64> = (0..len)
        .map(|n| {
            let lo = (n - m).max(0);
            let hi = (n + m).min(len - 1);
            (lo..=hi)
                .map(|k| taps[(k - n + m) as usize] * x[k as usize])
                .sum()
        })
        .collect();
    SampledSignal::new(fs, out, signal.carrier_hint)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::telegraph::State;
    use approx::assert_relative_eq;

    fn quiet() -> HeterodyneParams {
        HeterodyneParams {
            noise_density: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn nyquist_and_params_checked() {
        let traj = JumpTrajectory::constant(0.1, State::Bright).unwrap();
        let bad = HeterodyneParams {
            sample_rate: 100e3,
            ..Default::default()
        };
        assert!(synthesize_beat(&traj, &bad).is_err());
        let bad = HeterodyneParams {
            noise_density: -1.0,
            ..Default::default()
        };
        assert!(synthesize_beat(&traj, &bad).is_err());
        let short = JumpTrajectory::constant(1e-6, State::Bright).unwrap();
        assert!(synthesize_beat(&short, &HeterodyneParams::default()).is_err());
    }

    #[test]
    fn noiseless_bright_beat_is_a_cosine() {
        let traj = JumpTrajectory::constant(0.05, State::Bright).unwrap();
        let het = quiet();
        let s = synthesize_beat(&traj, &het).unwrap();
        let fs = het.sample_rate;
        let phi = s.samples[0].acos();
        // sign of the phase from the second sample
        let phi = if ((2.0 * PI * het.nu_l / fs + phi).cos() - s.samples[1]).abs() < 1e-9 {
            phi
        } else {
            -phi
        };
        for (n, &v) in s.samples.iter().enumerate().step_by(997) {
            let expect = (2.0 * PI * het.nu_l * n as f64 / fs + phi).cos();
            assert!((v - expect).abs() < 1e-9, "n={n}");
        }
    }

    #[test]
    fn gated_carrier_power_matches_bright_fraction() {
        let traj = JumpTrajectory::new(1.0, State::Dark, vec![0.123, 0.5, 0.61, 0.9]).unwrap();
        let het = quiet();
        let s = synthesize_beat(&traj, &het).unwrap();
        let expected = het.carrier_power() * traj.bright_fraction();
        assert_relative_eq!(s.mean_square(), expected, max_relative = 1e-3);
    }

    #[test]
    fn chunked_synthesis_is_bit_identical() {
        let traj = JumpTrajectory::new(0.2, State::Bright, vec![0.05, 0.07]).unwrap();
        let het = HeterodyneParams {
            phase_walk_rate: 50.0,
            seed: 9,
            ..Default::default()
        }
        .with_acoustic_pair();
        let full = synthesize_beat(&traj, &het).unwrap();
        let mut synth = BeatSynthesizer::new(&traj, &het).unwrap();
        let mut parts = Vec::new();
        let mut buf = vec![0.0; 1234];
        let mut boundary = Vec::new();
        loop {
            let k = synth.fill(&mut buf);
            if k == 0 {
                break;
            }
            parts.extend_from_slice(&buf[..k]);
            boundary.push(synth.state());
        }
        assert_eq!(parts, full.samples);
        assert_eq!(boundary.last().unwrap().next_index, full.samples.len() as u64);
    }

    #[test]
    fn dark_record_is_pure_noise() {
        let traj = JumpTrajectory::constant(1.0, State::Dark).unwrap();
        let het = HeterodyneParams {
            noise_density: 2e-4,
            ..Default::default()
        };
        let s = synthesize_beat(&traj, &het).unwrap();
        let var = s.mean_square();
        let expected = het.noise_density * het.sample_rate / 2.0;
        let n = s.samples.len() as f64;
        assert!((var - expected).abs() < 3.0 * expected * (2.0 / n).sqrt());
    }

    fn tone(f: f64, fs: f64, n: usize) -> SampledSignal {
        let samples = (0..n).map(|i| (2.0 * PI * f * i as f64 / fs).cos()).collect();
        SampledSignal::new(fs, samples, f).unwrap()
    }

    fn rms_middle(s: &SampledSignal) -> f64 {
        let n = s.samples.len();
        let mid = &s.samples[n / 4..3 * n / 4];
        (mid.iter().map(|x| x * x).sum::<f64>() / mid.len() as f64).sqrt()
    }

    #[test]
    fn bandpass_passband_and_stopband() {
        let fs = DEFAULT_SAMPLE_RATE;
        let n = 1 << 16;
        for f in [68.3e3, 70e3, 71.7e3] {
            let out = bandpass(&tone(f, fs, n), 70e3, 4e3).unwrap();
            let gain_db = 20.0 * (rms_middle(&out) / (0.5f64).sqrt()).log10();
            assert!(gain_db.abs() < 0.5, "f={f}: {gain_db} dB");
        }
        // 2·bandwidth outside the band edge
        for f in [70e3 + 2e3 + 8e3, 70e3 - 2e3 - 8e3] {
            let out = bandpass(&tone(f, fs, n), 70e3, 4e3).unwrap();
            let gain_db = 20.0 * (rms_middle(&out) / (0.5f64).sqrt()).log10();
            assert!(gain_db < -40.0, "f={f}: {gain_db} dB");
        }
        assert!(bandpass(&tone(1e3, fs, 1024), 1e3, 4e3).is_err());
        assert!(bandpass(&tone(1e3, fs, 1024), 130e3, 4e3).is_err());
    }

    #[test]
    fn bandpass_preserves_carrier_phase() {
        let fs = DEFAULT_SAMPLE_RATE;
        let input = tone(70e3, fs, 1 << 15);
        let out = bandpass(&input, 70e3, 4e3).unwrap();
        let n = input.samples.len();
        for i in (n / 4..3 * n / 4).step_by(1001) {
            assert!((out.samples[i] - input.samples[i]).abs() < 0.01);
        }
    }

    #[test]
    fn bandpassed_noise_variance_tracks_bandwidth() {
        let traj = JumpTrajectory::constant(2.0, State::Dark).unwrap();
        let het = HeterodyneParams {
            noise_density: 1e-3,
            ..Default::default()
        };
        let s = synthesize_beat(&traj, &het).unwrap();
        let out = bandpass(&s, 70e3, 4e3).unwrap();
        let expected = het.noise_density * 4e3;
        let var = rms_middle(&out).powi(2);
        assert!((var - expected).abs() / expected < 0.05, "var {var} vs {expected}");
    }
}
