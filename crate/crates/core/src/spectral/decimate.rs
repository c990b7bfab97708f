//! Down-conversion of the real beat to a narrow complex baseband.
//!
//! The record is mixed with `exp(−2πi·center·t)`, scaled by √2 so that the
//! carrier power and the one-sided noise density carry over unchanged, and
//! decimated in two Kaiser FIR stages. Both stages are centered
//! (zero-phase), so output sample `j` is the filtered value at time
//! `start_time + j / sample_rate` of the input record.

use std::f64::consts::{PI, SQRT_2};

use num_complex::Complex64;

use crate::dsp::{kaiser_beta, kaiser_length, kaiser_lowpass, FirDecimator, WindowKind};
use crate::error::{Error, Result};
use crate::heterodyne::{SampledSignal, ANCHOR_INTERVAL};

const STOPBAND_DB: f64 = 90.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DownconvertPlan {
    pub input_rate: f64,
    pub center: f64,
    pub stage1: usize,
    pub stage2: usize,
    /// Edge of the alias-free passband, Hz from the center.
    pub passband: f64,
}

impl DownconvertPlan {
    /// Plan whose output rate gives a window FWHM as close as possible to
    /// `target_delta_r` for segments of `segment_length` samples.
    pub fn for_resolution(
        input_rate: f64,
        center: f64,
        segment_length: usize,
        window: WindowKind,
        target_delta_r: f64,
        passband: f64,
    ) -> Result<Self> {
        let factor = input_rate * window.fwhm_bins(segment_length) / (segment_length as f64 * target_delta_r);
        if factor < 1.0 {
            return Err(Error::invalid(format!(
                "a {target_delta_r} Hz resolution needs a higher input rate than {input_rate} Hz"
            )));
        }
        let stage1 = if factor >= 64.0 { 16 } else { 1 };
        let stage2 = ((factor / stage1 as f64).round() as usize).max(1);
        let plan = Self {
            input_rate,
            center,
            stage1,
            stage2,
            passband,
        };
        plan.validate()?;
        Ok(plan)
    }

    /// ~1 Hz resolution with 1024-sample Hann segments and a ±280 Hz
    /// passband.
    pub fn default_for(input_rate: f64, center: f64) -> Result<Self> {
        Self::for_resolution(input_rate, center, 1024, WindowKind::Hann, 1.0, 280.0)
    }

    pub fn output_rate(&self) -> f64 {
        self.input_rate / (self.stage1 * self.stage2) as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.stage1 == 0 || self.stage2 == 0 {
            return Err(Error::invalid("decimation factors must be >= 1"));
        }
        if !(self.passband > 0.0 && self.passband < self.output_rate() / 2.0) {
            return Err(Error::invalid(format!(
                "passband {} Hz must be below half the output rate {} Hz",
                self.passband,
                self.output_rate()
            )));
        }
        if !(self.center > 0.0 && self.center < self.input_rate / 2.0) {
            return Err(Error::invalid("mixing frequency outside the input band"));
        }
        Ok(())
    }

    fn stage_filter(&self, rate: f64, factor: usize) -> Vec<f64> {
        if factor == 1 {
            return vec![1.0];
        }
        let out_rate = rate / factor as f64;
        // aliases must not land inside ±passband
        let transition = out_rate - 2.0 * self.passband;
        let n = kaiser_length(STOPBAND_DB, transition, rate);
        kaiser_lowpass(out_rate / 2.0, rate, n, kaiser_beta(STOPBAND_DB))
    }
}

/// Complex baseband record.
#[derive(Clone, Debug, PartialEq)]
pub struct BasebandSignal {
    pub sample_rate: f64,
    pub samples: Vec<Complex64>,
    /// Input-record time of sample 0, seconds.
    pub start_time: f64,
    /// Mixing frequency.
    pub center: f64,
    pub carrier_hint: f64,
    /// Usable half-bandwidth, Hz.
    pub passband: f64,
    /// Half-length of the combined decimation filter, seconds.
    pub guard: f64,
}

impl BasebandSignal {
    pub fn time(&self, i: usize) -> f64 {
        self.start_time + i as f64 / self.sample_rate
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }
}

/// Streaming mixer + two-stage decimator.
pub struct Downconverter {
    plan: DownconvertPlan,
    carrier_hint: f64,
    n: u64,
    lo: Complex64,
    lo_step: Complex64,
    stage1: FirDecimator,
    stage2: FirDecimator,
    mixed: Vec<Complex64>,
    mid: Vec<Complex64>,
    out: Vec<Complex64>,
}

impl Downconverter {
    pub fn new(plan: DownconvertPlan, carrier_hint: f64) -> Result<Self> {
        plan.validate()?;
        let fs1 = plan.input_rate / plan.stage1 as f64;
        Ok(Self {
            stage1: FirDecimator::new(plan.stage_filter(plan.input_rate, plan.stage1), plan.stage1),
            stage2: FirDecimator::new(plan.stage_filter(fs1, plan.stage2), plan.stage2),
            plan,
            carrier_hint,
            n: 0,
            lo: Complex64::new(1.0, 0.0),
            lo_step: Complex64::from_polar(1.0, -2.0 * PI * plan.center / plan.input_rate),
            mixed: Vec::new(),
            mid: Vec::new(),
            out: Vec::new(),
        })
    }

    pub fn push(&mut self, chunk: &[f64]) {
        let fs = self.plan.input_rate;
        self.mixed.clear();
        for &x in chunk {
            if self.n.is_multiple_of(ANCHOR_INTERVAL) {
                let cycles = (self.n as f64 * (self.plan.center / fs)).fract();
                self.lo = Complex64::from_polar(1.0, -2.0 * PI * cycles);
            }
            self.mixed.push(self.lo * (SQRT_2 * x));
            self.lo *= self.lo_step;
            self.n += 1;
        }
        self.mid.clear();
        self.stage1.push(&self.mixed, &mut self.mid);
        self.stage2.push(&self.mid, &mut self.out);
    }

    pub fn finish(self) -> Result<BasebandSignal> {
        let d1 = self.plan.stage1;
        let fs = self.plan.input_rate;
        let first = self.stage1.first_center() + self.stage2.first_center() * d1;
        let guard = (self.stage1.half_length() + self.stage2.half_length() * d1) as f64 / fs;
        if self.out.len() < 2 {
            return Err(Error::InsufficientData(
                "record too short for the decimation filters".into(),
            ));
        }
        Ok(BasebandSignal {
            sample_rate: self.plan.output_rate(),
            samples: self.out,
            start_time: first as f64 / fs,
            center: self.plan.center,
            carrier_hint: self.carrier_hint,
            passband: self.plan.passband,
            guard,
        })
    }
}

pub fn downconvert(signal: &SampledSignal, plan: DownconvertPlan) -> Result<BasebandSignal> {
    if (signal.sample_rate - plan.input_rate).abs() > 1e-9 * plan.input_rate {
        return Err(Error::invalid(format!(
            "plan expects {} Hz input, record is {} Hz",
            plan.input_rate, signal.sample_rate
        )));
    }
    let mut dc = Downconverter::new(plan, signal.carrier_hint)?;
    for chunk in signal.samples.chunks(1 << 16) {
        dc.push(chunk);
    }
    dc.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heterodyne::{synthesize_beat, BeatSynthesizer, HeterodyneParams};
    use crate::spectral::{estimate_baseband_psd, WelchConfig};
    use crate::telegraph::{JumpTrajectory, State};
    use approx::assert_relative_eq;

    #[test]
    fn default_plan_gives_one_hertz() {
        let plan = DownconvertPlan::default_for(262_144.0, 70e3).unwrap();
        assert_eq!((plan.stage1, plan.stage2), (16, 23));
        let bin = plan.output_rate() / 1024.0;
        let dr = WindowKind::Hann.fwhm_bins(1024) * bin;
        assert!((dr - 1.0).abs() < 0.005, "delta_R {dr}");
    }

    #[test]
    fn plan_rejects_impossible_band() {
        assert!(DownconvertPlan::for_resolution(1000.0, 100.0, 1024, WindowKind::Hann, 10.0, 280.0).is_err());
        assert!(DownconvertPlan::for_resolution(262_144.0, 70e3, 1024, WindowKind::Hann, 1.0, 400.0).is_err());
    }

    #[test]
    fn carrier_power_and_noise_density_carry_over() {
        let het = HeterodyneParams {
            noise_density: 1e-3,
            seed: 4,
            ..Default::default()
        };
        let traj = JumpTrajectory::constant(30.0, State::Bright).unwrap();
        let plan = DownconvertPlan::default_for(het.sample_rate, het.nu_l).unwrap();
        let mut synth = BeatSynthesizer::new(&traj, &het).unwrap();
        let mut dc = Downconverter::new(plan, het.nu_l).unwrap();
        let mut buf = vec![0.0; 1 << 16];
        loop {
            let k = synth.fill(&mut buf);
            if k == 0 {
                break;
            }
            dc.push(&buf[..k]);
        }
        let bb = dc.finish().unwrap();
        let spec = estimate_baseband_psd(&bb, &WelchConfig::default()).unwrap();
        let k = spec.peak_index();
        assert!(spec.freq_offsets[k].abs() < 1e-9);
        // carrier of power A²/2 = 0.5 spread over the main lobe
        let floor = spec.median_beyond(50.0).unwrap();
        let line: f64 = spec.psd[k - 3..=k + 3].iter().map(|p| p - floor).sum::<f64>() * spec.bin_width();
        // the carrier × noise cross term scatters the line power by ~1% here
        assert_relative_eq!(line, 0.5, max_relative = 0.03);
        // median of a χ²₂-like average sits slightly below the mean
        assert!((floor - 1e-3).abs() / 1e-3 < 0.05, "floor {floor}");
    }

    #[test]
    fn chunked_and_whole_downconversion_agree() {
        let het = HeterodyneParams {
            noise_density: 1e-4,
            seed: 5,
            ..Default::default()
        };
        let traj = JumpTrajectory::new(2.0, State::Bright, vec![0.5, 0.9]).unwrap();
        let signal = synthesize_beat(&traj, &het).unwrap();
        let plan = DownconvertPlan::default_for(het.sample_rate, het.nu_l).unwrap();
        let whole = downconvert(&signal, plan).unwrap();
        let mut dc = Downconverter::new(plan, het.nu_l).unwrap();
        for c in signal.samples.chunks(9999) {
            dc.push(c);
        }
        assert_eq!(dc.finish().unwrap(), whole);
        assert!(whole.start_time > 0.0 && whole.start_time >= whole.guard - 1e-12);
    }

    #[test]
    fn baseband_timing_follows_the_gate() {
        let het = HeterodyneParams {
            noise_density: 0.0,
            ..Default::default()
        };
        let traj = JumpTrajectory::new(3.0, State::Dark, vec![1.0, 2.0]).unwrap();
        let signal = synthesize_beat(&traj, &het).unwrap();
        let plan = DownconvertPlan::default_for(het.sample_rate, het.nu_l).unwrap();
        let bb = downconvert(&signal, plan).unwrap();
        let amp = het.carrier_power().sqrt();
        for (i, z) in bb.samples.iter().enumerate() {
            let t = bb.time(i);
            let distance = (t - 1.0).abs().min((t - 2.0).abs());
            if distance > bb.guard {
                let expect = if (1.0..2.0).contains(&t) { amp } else { 0.0 };
                assert!((z.norm() - expect).abs() < 1e-3, "t={t} |z|={}", z.norm());
            }
        }
    }
}
