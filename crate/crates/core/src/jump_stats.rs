//! Bright/dark period detection on the filtered intensity and dwell-time
//! statistics.

use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::photon::IntensityTrace;
use crate::rng::rng_from_seed;
use crate::telegraph::State;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThresholdConfig {
    pub low_fraction: f64,
    pub high_fraction: f64,
    /// Explicit levels in counts/s; both unset means automatic levels.
    pub dark_level: Option<f64>,
    pub bright_level: Option<f64>,
    /// Shorter periods are merged into their neighbours; also the
    /// truncation point of the dwell-time fits.
    pub min_duration: f64,
    pub histogram_bin_width: f64,
    /// Time constant of the intensity low-pass.
    pub filter_time_constant: f64,
    pub n_bootstrap: usize,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self {
            low_fraction: 0.3,
            high_fraction: 0.7,
            dark_level: None,
            bright_level: None,
            min_duration: 0.005,
            histogram_bin_width: 0.005,
            filter_time_constant: 1e-3,
            n_bootstrap: 199,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LevelReference {
    Auto,
    Explicit { dark: f64, bright: f64 },
}

impl ThresholdConfig {
    pub fn reference(&self) -> LevelReference {
        match (self.dark_level, self.bright_level) {
            (Some(dark), Some(bright)) => LevelReference::Explicit { dark, bright },
            _ => LevelReference::Auto,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.low_fraction && self.low_fraction < self.high_fraction && self.high_fraction < 1.0) {
            return Err(Error::invalid(format!(
                "need 0 < low_fraction < high_fraction < 1, got {} and {}",
                self.low_fraction, self.high_fraction
            )));
        }
        if self.dark_level.is_some() != self.bright_level.is_some() {
            return Err(Error::invalid("set both dark_level and bright_level, or neither"));
        }
        if let LevelReference::Explicit { dark, bright } = self.reference() {
            if !(bright > dark) {
                return Err(Error::invalid("bright_level must exceed dark_level"));
            }
        }
        if !(self.min_duration >= 0.0) {
            return Err(Error::invalid("min_duration must be >= 0"));
        }
        if !(self.histogram_bin_width > 0.0) {
            return Err(Error::invalid("histogram_bin_width must be > 0"));
        }
        if !(self.filter_time_constant > 0.0) {
            return Err(Error::invalid("filter_time_constant must be > 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Period {
    pub state: State,
    pub start: f64,
    pub duration: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodList {
    pub periods: Vec<Period>,
    pub trace_duration: f64,
    /// False when the trace showed no switching; `periods` then holds a
    /// single bright period spanning the trace.
    pub jumps_detected: bool,
    pub dark_level: f64,
    pub bright_level: f64,
}

impl PeriodList {
    pub fn durations(&self, state: State) -> Vec<f64> {
        self.periods
            .iter()
            .filter(|p| p.state == state)
            .map(|p| p.duration)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        for w in self.periods.windows(2) {
            if w[0].state == w[1].state {
                return Err(Error::invalid("periods must alternate"));
            }
            if w[0].start + w[0].duration > w[1].start + 1e-9 {
                return Err(Error::invalid("periods overlap or are out of order"));
            }
        }
        if self.periods.iter().any(|p| !(p.duration >= 0.0)) {
            return Err(Error::invalid("negative period duration"));
        }
        Ok(())
    }
}

/// Two class levels by Otsu's split of the value histogram, each taken as
/// the median of its class. `None` when the split does not show two
/// well-separated populations.
pub fn auto_levels(values: &[f64]) -> Option<(f64, f64)> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.len() < 16 {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let (lo, hi) = (v[0], v[n - 1]);
    if !(hi > lo) {
        return None;
    }
    let nb = 256;
    let width = (hi - lo) / nb as f64;
    let mut hist = vec![0usize; nb];
    for &x in &v {
        hist[(((x - lo) / width) as usize).min(nb - 1)] += 1;
    }
    let centre = |i: usize| lo + (i as f64 + 0.5) * width;
    let total_sum: f64 = hist.iter().enumerate().map(|(i, &c)| c as f64 * centre(i)).sum();
    let (mut w0, mut s0) = (0.0, 0.0);
    let mut best = (f64::NEG_INFINITY, 0);
    for (i, &c) in hist.iter().enumerate().take(nb - 1) {
        w0 += c as f64;
        s0 += c as f64 * centre(i);
        let w1 = n as f64 - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let between = w0 * w1 * (s0 / w0 - (total_sum - s0) / w1).powi(2);
        if between > best.0 {
            best = (between, i);
        }
    }
    let split = lo + (best.1 + 1) as f64 * width;
    let k = v.partition_point(|&x| x < split);
    let (a, b) = v.split_at(k);
    if a.len() < n / 100 || b.len() < n / 100 || a.is_empty() || b.is_empty() {
        return None;
    }
    let stats = |s: &[f64]| {
        let m = s.iter().sum::<f64>() / s.len() as f64;
        let var = s.iter().map(|x| (x - m).powi(2)).sum::<f64>() / s.len() as f64;
        (s[s.len() / 2], var)
    };
    let (dark, va) = stats(a);
    let (bright, vb) = stats(b);
    let pooled = ((a.len() as f64 * va + b.len() as f64 * vb) / n as f64).sqrt();
    if bright - dark > 3.0 * pooled {
        Some((dark, bright))
    } else {
        None
    }
}

/// Hysteresis detection: a dark period starts where the trace falls
/// through the low threshold and ends where it rises through the high one.
/// Crossing times are interpolated between samples. Periods shorter than
/// `min_duration` are merged into their neighbours, shortest first, and the
/// partial first and last periods are dropped.
pub fn detect_periods(trace: &IntensityTrace, cfg: &ThresholdConfig) -> Result<PeriodList> {
    cfg.validate()?;
    let y = &trace.values;
    if y.is_empty() {
        return Err(Error::InsufficientData("empty intensity trace".into()));
    }
    let trace_start = trace.origin_time;
    let trace_end = trace.time(y.len() - 1);
    let levels = match cfg.reference() {
        LevelReference::Explicit { dark, bright } => Some((dark, bright)),
        LevelReference::Auto => auto_levels(y),
    };
    let Some((dark, bright)) = levels else {
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        return Ok(PeriodList {
            periods: vec![Period {
                state: State::Bright,
                start: trace_start,
                duration: trace_end - trace_start,
            }],
            trace_duration: trace_end - trace_start,
            jumps_detected: false,
            dark_level: mean,
            bright_level: mean,
        });
    };
    let lo = dark + cfg.low_fraction * (bright - dark);
    let hi = dark + cfg.high_fraction * (bright - dark);

    let mut state = if y[0] < 0.5 * (lo + hi) {
        State::Dark
    } else {
        State::Bright
    };
    let crossing = |i: usize, level: f64| {
        let (a, b) = (y[i - 1], y[i]);
        let frac = if b != a { (level - a) / (b - a) } else { 1.0 };
        trace.time(i - 1) + frac.clamp(0.0, 1.0) * trace.sample_period
    };
    // (state, start, end)
    let mut raw: Vec<(State, f64, f64)> = Vec::new();
    let mut start = trace_start;
    for i in 1..y.len() {
        let t = match state {
            State::Bright if y[i] < lo => crossing(i, lo),
            State::Dark if y[i] > hi => crossing(i, hi),
            _ => continue,
        };
        raw.push((state, start, t));
        start = t;
        state = state.flip();
    }
    raw.push((state, start, trace_end));

    merge_short(&mut raw, cfg.min_duration);
    let jumps_detected = raw.len() > 1;
    let interior = if raw.len() > 2 { &raw[1..raw.len() - 1] } else { &[][..] };
    Ok(PeriodList {
        periods: interior
            .iter()
            .map(|&(state, a, b)| Period {
                state,
                start: a,
                duration: b - a,
            })
            .collect(),
        trace_duration: trace_end - trace_start,
        jumps_detected,
        dark_level: dark,
        bright_level: bright,
    })
}

fn merge_short(p: &mut Vec<(State, f64, f64)>, min_duration: f64) {
    loop {
        let Some((k, len)) = p
            .iter()
            .enumerate()
            .map(|(k, q)| (k, q.2 - q.1))
            .min_by(|a, b| a.1.total_cmp(&b.1))
        else {
            return;
        };
        if len >= min_duration || p.len() == 1 {
            return;
        }
        if k == 0 {
            let end = p[1].2;
            let st = p[1].0;
            p[0] = (st, p[0].1, end);
            p.remove(1);
        } else if k == p.len() - 1 {
            p[k - 1].2 = p[k].2;
            p.remove(k);
        } else {
            p[k - 1].2 = p[k + 1].2;
            p.drain(k..=k + 1);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DurationHistogram {
    pub state: State,
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub t_min: f64,
}

impl DurationHistogram {
    pub fn bin_centres(&self) -> Vec<f64> {
        self.bin_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }
}

pub fn make_histogram(periods: &PeriodList, state: State, bin_width: f64, t_min: f64) -> Result<DurationHistogram> {
    if !(bin_width > 0.0) {
        return Err(Error::invalid("bin width must be > 0"));
    }
    if !(t_min >= 0.0) {
        return Err(Error::invalid("t_min must be >= 0"));
    }
    let d: Vec<f64> = periods
        .durations(state)
        .into_iter()
        .filter(|&x| x >= t_min)
        .collect();
    if d.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no {} periods of at least {t_min} s",
            state.as_str()
        )));
    }
    // relative slack keeps durations that sit on an edge in the upper bin
    let index = |x: f64| ((x - t_min) / bin_width * (1.0 + 1e-12) + 1e-9).floor() as usize;
    let nb = d.iter().map(|&x| index(x)).max().unwrap_or(0) + 1;
    let mut counts = vec![0u64; nb];
    for &x in &d {
        counts[index(x)] += 1;
    }
    Ok(DurationHistogram {
        state,
        bin_edges: (0..=nb).map(|i| t_min + i as f64 * bin_width).collect(),
        counts,
        t_min,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentialFit {
    pub tau: f64,
    /// `tau/√n`.
    pub sigma: f64,
    pub n: usize,
}

fn exp_mle(x: &[f64], t_min: f64) -> f64 {
    x.iter().map(|v| v - t_min).sum::<f64>() / x.len() as f64
}

/// Truncated-exponential maximum likelihood on durations `≥ t_min`:
/// `τ̂ = mean − t_min`.
pub fn fit_exponential(periods: &PeriodList, state: State, t_min: f64) -> Result<ExponentialFit> {
    let d: Vec<f64> = periods
        .durations(state)
        .into_iter()
        .filter(|&x| x >= t_min)
        .collect();
    fit_durations(&d, t_min)
}

pub fn fit_durations(d: &[f64], t_min: f64) -> Result<ExponentialFit> {
    if d.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} qualifying durations, need at least 2",
            d.len()
        )));
    }
    let tau = exp_mle(d, t_min);
    Ok(ExponentialFit {
        tau,
        sigma: tau / (d.len() as f64).sqrt(),
        n: d.len(),
    })
}

/// Kolmogorov–Smirnov distance of `x` (sorted, already shifted by `t_min`)
/// from Exponential(`tau`).
pub fn ks_exponential(sorted: &[f64], tau: f64) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = 1.0 - (-x / tau).exp();
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GofResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
    pub n_bootstrap: usize,
}

/// KS test of exponentiality with a parametric-bootstrap p-value; each
/// bootstrap sample re-estimates its own mean so the estimated-parameter
/// effect is included.
pub fn gof_exponential(
    periods: &PeriodList,
    state: State,
    tau_hat: f64,
    t_min: f64,
    n_bootstrap: usize,
    seed: u64,
) -> Result<GofResult> {
    let d: Vec<f64> = periods
        .durations(state)
        .into_iter()
        .filter(|&x| x >= t_min)
        .collect();
    gof_durations(&d, tau_hat, t_min, n_bootstrap, seed)
}

pub fn gof_durations(d: &[f64], tau_hat: f64, t_min: f64, n_bootstrap: usize, seed: u64) -> Result<GofResult> {
    if d.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "{} durations, the KS test needs at least 10",
            d.len()
        )));
    }
    if !(tau_hat > 0.0) {
        return Err(Error::invalid("tau_hat must be > 0"));
    }
    if n_bootstrap == 0 {
        return Err(Error::invalid("n_bootstrap must be >= 1"));
    }
    let mut x: Vec<f64> = d.iter().map(|v| v - t_min).collect();
    x.sort_by(f64::total_cmp);
    let statistic = ks_exponential(&x, tau_hat);
    let mut rng = rng_from_seed(seed);
    let mut buf = vec![0.0; x.len()];
    let mut exceed = 0usize;
    for _ in 0..n_bootstrap {
        for b in buf.iter_mut() {
            let e: f64 = Exp1.sample(&mut rng);
            *b = tau_hat * e;
        }
        buf.sort_by(f64::total_cmp);
        let tau_b = buf.iter().sum::<f64>() / buf.len() as f64;
        if ks_exponential(&buf, tau_b) >= statistic {
            exceed += 1;
        }
    }
    Ok(GofResult {
        statistic,
        p_value: (1 + exceed) as f64 / (n_bootstrap + 1) as f64,
        n: x.len(),
        n_bootstrap,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpStatsResult {
    pub tau_dark_hat: Option<f64>,
    pub tau_dark_sigma: Option<f64>,
    pub tau_bright_hat: Option<f64>,
    pub tau_bright_sigma: Option<f64>,
    pub n_dark: usize,
    pub n_bright: usize,
    pub ks_pvalue_dark: Option<f64>,
    pub ks_pvalue_bright: Option<f64>,
    pub t_min: f64,
    pub jumps_detected: bool,
}

/// Fits and KS tests for both states; quantities that lack data are left
/// empty rather than failing the whole analysis.
pub fn summarize(periods: &PeriodList, cfg: &ThresholdConfig, seed: u64) -> JumpStatsResult {
    let t_min = cfg.min_duration;
    let one = |state: State, seed: u64| {
        let d: Vec<f64> = periods
            .durations(state)
            .into_iter()
            .filter(|&x| x >= t_min)
            .collect();
        let fit = fit_durations(&d, t_min).ok();
        let p = fit
            .and_then(|f| gof_durations(&d, f.tau, t_min, cfg.n_bootstrap.max(1), seed).ok())
            .map(|g| g.p_value);
        (d.len(), fit, p)
    };
    let (n_dark, fd, pd) = one(State::Dark, seed);
    let (n_bright, fb, pb) = one(State::Bright, seed ^ 0x9e37_79b9_7f4a_7c15);
    JumpStatsResult {
        tau_dark_hat: fd.map(|f| f.tau),
        tau_dark_sigma: fd.map(|f| f.sigma),
        tau_bright_hat: fb.map(|f| f.tau),
        tau_bright_sigma: fb.map(|f| f.sigma),
        n_dark,
        n_bright,
        ks_pvalue_dark: pd,
        ks_pvalue_bright: pb,
        t_min,
        jumps_detected: periods.jumps_detected,
    }
}
