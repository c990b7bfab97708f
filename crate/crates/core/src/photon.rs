//! Photon counting and the low-pass intensity channel.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::telegraph::JumpTrajectory;

/// Default stray-light plus dark-count rate, counts/s. Not a measured value.
pub const DEFAULT_STRAY_RATE: f64 = 500.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectionParams {
    /// Detected count rate while bright, on top of the stray rate.
    pub rate_bright: f64,
    pub rate_stray: f64,
    pub bin_width: f64,
}

impl Default for DetectionParams {
    fn default() -> Self {
        Self {
            rate_bright: 3.5e4,
            rate_stray: DEFAULT_STRAY_RATE,
            bin_width: 1e-3,
        }
    }
}

impl DetectionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.rate_bright.is_finite() && self.rate_bright >= 0.0) {
            return Err(Error::invalid("rate_bright must be >= 0"));
        }
        if !(self.rate_stray.is_finite() && self.rate_stray >= 0.0) {
            return Err(Error::invalid("rate_stray must be >= 0"));
        }
        if !(self.bin_width.is_finite() && self.bin_width > 0.0) {
            return Err(Error::invalid("bin_width must be > 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CountTrace {
    pub bin_width: f64,
    pub counts: Vec<u64>,
    pub origin_time: f64,
}

impl CountTrace {
    pub fn duration(&self) -> f64 {
        self.counts.len() as f64 * self.bin_width
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Low-pass filtered count rate, counts/s.
#[derive(Clone, Debug, PartialEq)]
pub struct IntensityTrace {
    pub sample_period: f64,
    pub values: Vec<f64>,
    pub origin_time: f64,
}

impl IntensityTrace {
    /// Time stamp of sample `i` (the end of the bin it summarizes).
    pub fn time(&self, i: usize) -> f64 {
        self.origin_time + (i + 1) as f64 * self.sample_period
    }

    pub fn duration(&self) -> f64 {
        self.values.len() as f64 * self.sample_period
    }
}

/// Poisson counts per bin with mean `rate_stray·w + rate_bright·t_bright`,
/// where `t_bright` is the exact bright time inside the bin.
pub fn synthesize_counts(traj: &JumpTrajectory, det: &DetectionParams, seed: u64) -> Result<CountTrace> {
    det.validate()?;
    let n_bins = (traj.duration() / det.bin_width + 1e-9).floor() as usize;
    if n_bins == 0 {
        return Err(Error::InsufficientData(format!(
            "trajectory of {} s is shorter than one {} s bin",
            traj.duration(),
            det.bin_width
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut counts = Vec::with_capacity(n_bins);
    let mut bright = BrightSweep::new(traj);
    for i in 0..n_bins {
        let t0 = i as f64 * det.bin_width;
        let t1 = t0 + det.bin_width;
        let mean = det.rate_stray * det.bin_width + det.rate_bright * bright.until(t0, t1);
        counts.push(poisson(&mut rng, mean));
    }
    Ok(CountTrace {
        bin_width: det.bin_width,
        counts,
        origin_time: 0.0,
    })
}

fn poisson<R: Rng>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let d = Poisson::new(mean).expect("finite positive mean");
    d.sample(rng) as u64
}

/// Incremental bright-time integration over consecutive, ascending windows.
struct BrightSweep<'a> {
    traj: &'a JumpTrajectory,
    k: usize,
}

impl<'a> BrightSweep<'a> {
    fn new(traj: &'a JumpTrajectory) -> Self {
        Self { traj, k: 0 }
    }

    fn until(&mut self, t0: f64, t1: f64) -> f64 {
        let sw = self.traj.switch_times();
        while self.k < sw.len() && sw[self.k] <= t0 {
            self.k += 1;
        }
        let mut state = if self.k.is_multiple_of(2) {
            self.traj.initial_state()
        } else {
            self.traj.initial_state().flip()
        };
        let mut t = t0;
        let mut k = self.k;
        let mut total = 0.0;
        while t < t1 {
            let next = sw.get(k).copied().unwrap_or(f64::INFINITY).min(t1);
            if state.is_bright() {
                total += next - t;
            }
            t = next;
            state = state.flip();
            k += 1;
        }
        total
    }
}

/// Single-pole recursive low-pass of the count rate,
/// `y[n] = α·x[n]/w + (1−α)·y[n−1]`, `α = 1 − exp(−w/τ)`, `y[0] = x[0]/w`.
pub fn low_pass(trace: &CountTrace, time_constant: f64) -> Result<IntensityTrace> {
    if !(time_constant.is_finite() && time_constant > 0.0) {
        return Err(Error::invalid("time constant must be > 0"));
    }
    let Some(&first) = trace.counts.first() else {
        return Err(Error::InsufficientData("empty count trace".into()));
    };
    let w = trace.bin_width;
    let alpha = 1.0 - (-w / time_constant).exp();
    let mut y = first as f64 / w;
    let mut values = Vec::with_capacity(trace.counts.len());
    values.push(y);
    for &c in &trace.counts[1..] {
        y = alpha * (c as f64 / w) + (1.0 - alpha) * y;
        values.push(y);
    }
    Ok(IntensityTrace {
        sample_period: w,
        values,
        origin_time: trace.origin_time,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::telegraph::{sample_trajectory, InitialState, State, TelegraphParams};
    use approx::assert_relative_eq;

    fn trace_of(counts: Vec<u64>, w: f64) -> CountTrace {
        CountTrace {
            bin_width: w,
            counts,
            origin_time: 0.0,
        }
    }

    #[test]
    fn zero_rates_give_zero_counts() {
        let traj = JumpTrajectory::constant(1.0, State::Bright).unwrap();
        let det = DetectionParams {
            rate_bright: 0.0,
            rate_stray: 0.0,
            bin_width: 1e-3,
        };
        let c = synthesize_counts(&traj, &det, 1).unwrap();
        assert_eq!(c.counts.len(), 1000);
        assert_eq!(c.total(), 0);
    }

    #[test]
    fn too_short_trajectory_errors() {
        let traj = JumpTrajectory::constant(0.0005, State::Bright).unwrap();
        assert!(synthesize_counts(&traj, &DetectionParams::default(), 1).is_err());
        let bad = DetectionParams {
            bin_width: 0.0,
            ..Default::default()
        };
        let long = JumpTrajectory::constant(1.0, State::Bright).unwrap();
        assert!(synthesize_counts(&long, &bad, 1).is_err());
    }

    #[test]
    fn always_bright_total_concentrates() {
        let traj = JumpTrajectory::constant(60.0, State::Bright).unwrap();
        let det = DetectionParams {
            rate_bright: 3.5e4,
            rate_stray: 0.0,
            bin_width: 1e-3,
        };
        let c = synthesize_counts(&traj, &det, 2).unwrap();
        let expected = 2.1e6;
        assert!((c.total() as f64 - expected).abs() < 3.0 * expected.sqrt());
    }

    #[test]
    fn grand_mean_follows_duty_cycle() {
        // τ_B/(τ_B+τ_D) = 0.89
        let params = TelegraphParams::new(0.171, 0.0211348).unwrap();
        assert_relative_eq!(params.duty_cycle(), 0.89, max_relative = 1e-4);
        let traj = sample_trajectory(&params, 600.0, 17, InitialState::Stationary).unwrap();
        let det = DetectionParams::default();
        let c = synthesize_counts(&traj, &det, 3).unwrap();
        let rate = c.total() as f64 / c.duration();
        let expected = params.duty_cycle() * det.rate_bright + det.rate_stray;
        // the telegraph time average dominates the error: var = 2p(1−p)/(γT)
        let p = params.duty_cycle();
        let se_gate = (2.0 * p * (1.0 - p) / (params.gamma() * 600.0)).sqrt() * det.rate_bright;
        let se_poisson = (expected / 600.0).sqrt();
        let se = (se_gate * se_gate + se_poisson * se_poisson).sqrt();
        assert!((rate - expected).abs() < 3.0 * se, "rate {rate} vs {expected} (se {se})");
    }

    #[test]
    fn poisson_dispersion_is_unity() {
        let traj = JumpTrajectory::constant(100.0, State::Bright).unwrap();
        let det = DetectionParams {
            rate_bright: 2.0e4,
            rate_stray: 0.0,
            bin_width: 1e-3,
        };
        let c = synthesize_counts(&traj, &det, 4).unwrap();
        let n = c.counts.len() as f64;
        let mean = c.total() as f64 / n;
        let var = c.counts.iter().map(|&k| (k as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let ratio = var / mean;
        assert!((0.9..1.1).contains(&ratio), "dispersion {ratio}");
    }

    #[test]
    fn partial_bins_use_exact_bright_fraction() {
        let traj = JumpTrajectory::new(0.004, State::Bright, vec![0.0015, 0.0032]).unwrap();
        let mut sweep = BrightSweep::new(&traj);
        let fr: Vec<f64> = (0..4)
            .map(|i| sweep.until(i as f64 * 1e-3, (i + 1) as f64 * 1e-3) / 1e-3)
            .collect();
        for (a, b) in fr.iter().zip([1.0, 0.5, 0.0, 0.8]) {
            assert!((a - b).abs() < 1e-9, "{fr:?}");
        }
    }

    #[test]
    fn low_pass_dc_gain_is_unity() {
        let w = 1e-4;
        let trace = trace_of(vec![5; 2000], w);
        let y = low_pass(&trace, 1e-3).unwrap();
        assert_relative_eq!(*y.values.last().unwrap(), 5.0 / w, max_relative = 1e-12);

        // starting from zero, 5 time constants brings the output within 1%
        let mut counts = vec![0u64; 1];
        counts.extend(std::iter::repeat_n(5, 100));
        let y = low_pass(&trace_of(counts, w), 1e-3).unwrap();
        let at = y.values[50];
        assert!((at - 5.0 / w).abs() / (5.0 / w) < 0.01);
    }

    #[test]
    fn impulse_response_decays_with_time_constant() {
        let w = 1e-4;
        let tau = 1e-3;
        let mut counts = vec![0u64; 200];
        counts[10] = 1;
        let y = low_pass(&trace_of(counts, w), tau).unwrap();
        let decay = (y.values[11] / y.values[31]).ln() / (20.0 * w);
        assert_relative_eq!(1.0 / decay, tau, max_relative = 1e-9);
    }

    #[test]
    fn step_fall_time_matches_first_order() {
        let w = 1e-4;
        let tau = 1e-3;
        let level = 35u64; // 3.5e4 /s over 1 ms bins
        let mut counts = vec![level; 100];
        counts.extend(vec![0; 200]);
        let y = low_pass(&trace_of(counts, w), tau).unwrap();
        let hi = level as f64 / w;
        let t90 = y.values.iter().position(|&v| v < 0.9 * hi).unwrap();
        let t10 = y.values.iter().position(|&v| v < 0.1 * hi).unwrap();
        let fall = (t10 - t90) as f64 * w;
        assert!((fall - 9f64.ln() * tau).abs() <= w + 1e-12, "fall {fall}");
    }

    #[test]
    fn low_pass_rejects_bad_input() {
        assert!(low_pass(&trace_of(vec![], 1e-3), 1e-3).is_err());
        assert!(low_pass(&trace_of(vec![1], 1e-3), 0.0).is_err());
    }
}
