//! The bright/dark switching process and its spectral signature.
//!
//! The fluorescence gate `g(t)` is a stationary two-state Markov process with
//! exponentially distributed sojourns of mean `tau_bright` and `tau_dark`.
//! Its autocorrelation is `p² + p(1−p)·exp(−γ|τ|)` with `γ = 1/τ_B + 1/τ_D`
//! and `p = τ_B/(τ_B+τ_D)`. Gating a monochromatic field therefore yields a
//! line of weight `p²` on top of a Lorentzian pedestal of weight `p(1−p)` and
//! full width `γ/π`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Natural lifetime of the metastable shelving level, seconds.
pub const SPONTANEOUS_LIFETIME: f64 = 0.053;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum State {
    Bright,
    Dark,
}

impl State {
    pub fn flip(self) -> Self {
        match self {
            State::Bright => State::Dark,
            State::Dark => State::Bright,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            State::Bright => "bright",
            State::Dark => "dark",
        }
    }

    pub fn is_bright(self) -> bool {
        self == State::Bright
    }
}

impl std::str::FromStr for State {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bright" => Ok(State::Bright),
            "dark" => Ok(State::Dark),
            other => Err(Error::invalid(format!("unknown state `{other}`"))),
        }
    }
}

/// How the first sojourn of a sampled trajectory is chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialState {
    Bright,
    Dark,
    /// Bright with the stationary probability `p`.
    #[default]
    Stationary,
}

/// Mean bright and dark period lengths, seconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTelegraphParams")]
pub struct TelegraphParams {
    tau_bright: f64,
    tau_dark: f64,
}

#[derive(Deserialize)]
struct RawTelegraphParams {
    tau_bright: f64,
    tau_dark: f64,
}

impl TryFrom<RawTelegraphParams> for TelegraphParams {
    type Error = Error;

    fn try_from(raw: RawTelegraphParams) -> Result<Self> {
        TelegraphParams::new(raw.tau_bright, raw.tau_dark)
    }
}

impl TelegraphParams {
    pub fn new(tau_bright: f64, tau_dark: f64) -> Result<Self> {
        for (name, v) in [("tau_bright", tau_bright), ("tau_dark", tau_dark)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(Self {
            tau_bright,
            tau_dark,
        })
    }

    pub fn tau_bright(&self) -> f64 {
        self.tau_bright
    }

    pub fn tau_dark(&self) -> f64 {
        self.tau_dark
    }

    pub fn mean(&self, state: State) -> f64 {
        match state {
            State::Bright => self.tau_bright,
            State::Dark => self.tau_dark,
        }
    }

    /// Stationary bright probability `τ_B/(τ_B+τ_D)`.
    pub fn duty_cycle(&self) -> f64 {
        self.tau_bright / (self.tau_bright + self.tau_dark)
    }

    /// Relaxation rate `1/τ_B + 1/τ_D` of the gate correlation, 1/s.
    pub fn gamma(&self) -> f64 {
        1.0 / self.tau_bright + 1.0 / self.tau_dark
    }
}

/// One realization of the gate over `[0, duration]`.
///
/// Occupancy is right-continuous: at a switch instant the state is already
/// the post-switch state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpTrajectory {
    duration: f64,
    initial_state: State,
    switch_times: Vec<f64>,
}

impl JumpTrajectory {
    pub fn new(duration: f64, initial_state: State, switch_times: Vec<f64>) -> Result<Self> {
        if !(duration.is_finite() && duration >= 0.0) {
            return Err(Error::invalid(format!("duration must be >= 0, got {duration}")));
        }
        let mut prev = 0.0;
        for &t in &switch_times {
            if !(t > prev && t < duration) {
                return Err(Error::invalid(format!(
                    "switch times must be strictly increasing inside (0, {duration}); offending value {t}"
                )));
            }
            prev = t;
        }
        Ok(Self {
            duration,
            initial_state,
            switch_times,
        })
    }

    /// A trajectory that never switches.
    pub fn constant(duration: f64, state: State) -> Result<Self> {
        Self::new(duration, state, Vec::new())
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn initial_state(&self) -> State {
        self.initial_state
    }

    pub fn switch_times(&self) -> &[f64] {
        &self.switch_times
    }

    /// State at `t`; errors outside `[0, duration]`.
    pub fn occupancy(&self, t: f64) -> Result<State> {
        if !(0.0..=self.duration).contains(&t) {
            return Err(Error::OutOfRange(format!(
                "t = {t} outside [0, {}]",
                self.duration
            )));
        }
        Ok(self.state_at(t))
    }

    pub(crate) fn state_at(&self, t: f64) -> State {
        let k = self.switch_times.partition_point(|&s| s <= t);
        if k % 2 == 0 {
            self.initial_state
        } else {
            self.initial_state.flip()
        }
    }

    /// Iterator over `(state, start, end)` of every sojourn, the first and
    /// last ones possibly truncated by the record boundaries.
    pub fn periods(&self) -> impl Iterator<Item = (State, f64, f64)> + '_ {
        let n = self.switch_times.len();
        (0..=n).map(move |k| {
            let start = if k == 0 { 0.0 } else { self.switch_times[k - 1] };
            let end = if k == n {
                self.duration
            } else {
                self.switch_times[k]
            };
            let state = if k % 2 == 0 {
                self.initial_state
            } else {
                self.initial_state.flip()
            };
            (state, start, end)
        })
    }

    /// Durations of the complete sojourns in `state`, i.e. those bounded by
    /// switches on both sides.
    pub fn complete_sojourns(&self, state: State) -> Vec<f64> {
        self.switch_times
            .windows(2)
            .enumerate()
            .filter(|(k, _)| {
                // sojourn k+1 starts at switch k
                let s = if (k + 1) % 2 == 0 {
                    self.initial_state
                } else {
                    self.initial_state.flip()
                };
                s == state
            })
            .map(|(_, w)| w[1] - w[0])
            .collect()
    }

    /// Total bright time inside `[t0, t1]`, computed exactly from the switch
    /// times.
    pub fn bright_time(&self, t0: f64, t1: f64) -> f64 {
        let t0 = t0.max(0.0);
        let t1 = t1.min(self.duration);
        if t1 <= t0 {
            return 0.0;
        }
        let mut k = self.switch_times.partition_point(|&s| s <= t0);
        let mut state = if k % 2 == 0 {
            self.initial_state
        } else {
            self.initial_state.flip()
        };
        let mut t = t0;
        let mut total = 0.0;
        while t < t1 {
            let next = self.switch_times.get(k).copied().unwrap_or(f64::INFINITY).min(t1);
            if state.is_bright() {
                total += next - t;
            }
            t = next;
            state = state.flip();
            k += 1;
        }
        total
    }

    /// Realized bright fraction of the whole record.
    pub fn bright_fraction(&self) -> f64 {
        if self.duration == 0.0 {
            return if self.initial_state.is_bright() { 1.0 } else { 0.0 };
        }
        self.bright_time(0.0, self.duration) / self.duration
    }
}

/// Draws a trajectory with independent exponential sojourns.
pub fn sample_trajectory(
    params: &TelegraphParams,
    duration: f64,
    seed: u64,
    initial: InitialState,
) -> Result<JumpTrajectory> {
    if !(duration.is_finite() && duration >= 0.0) {
        return Err(Error::invalid(format!("duration must be >= 0, got {duration}")));
    }
    let mut rng = rng_from_seed(seed);
    let first = match initial {
        InitialState::Bright => State::Bright,
        InitialState::Dark => State::Dark,
        InitialState::Stationary => {
            if rng.random::<f64>() < params.duty_cycle() {
                State::Bright
            } else {
                State::Dark
            }
        }
    };
    let mut switches = Vec::with_capacity((duration / (params.tau_bright + params.tau_dark) * 2.2) as usize + 4);
    let mut state = first;
    let mut t = 0.0;
    loop {
        let dwell: f64 = loop {
            let x: f64 = rng.sample(Exp1);
            if x > 0.0 {
                break x * params.mean(state);
            }
        };
        t += dwell;
        if t >= duration {
            break;
        }
        switches.push(t);
        state = state.flip();
    }
    JumpTrajectory::new(duration, first, switches)
}

/// Closed-form line + pedestal prediction for a given resolution bandwidth.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralPrediction {
    /// Pedestal FWHM, Hz.
    #[serde(rename = "delta_L")]
    pub delta_l: f64,
    /// Pedestal-to-line peak height ratio for a Lorentzian resolution filter
    /// of FWHM `delta_r`.
    #[serde(rename = "A_L")]
    pub a_l: f64,
    #[serde(rename = "delta_R")]
    pub delta_r: f64,
    pub p: f64,
    pub line_weight: f64,
    pub pedestal_weight: f64,
    pub gamma: f64,
    /// Set when `delta_r > delta_l / 10`, where the peak-ratio formula stops
    /// being a good approximation.
    pub resolution_warning: bool,
}

impl SpectralPrediction {
    /// Pedestal to line weight ratio, `(1−p)/p = τ_D/τ_B`.
    pub fn weight_ratio(&self) -> f64 {
        self.pedestal_weight / self.line_weight
    }

    /// Power density at offset `nu` for total gated-field power
    /// `total_power`, with the line rendered as a Lorentzian of FWHM
    /// `delta_r`.
    pub fn density(&self, total_power: f64, nu: f64) -> f64 {
        total_power
            * (self.line_weight * lorentzian(nu, self.delta_r)
                + self.pedestal_weight * lorentzian(nu, self.delta_l))
    }

    /// The pedestal term alone.
    pub fn pedestal_density(&self, total_power: f64, nu: f64) -> f64 {
        total_power * self.pedestal_weight * lorentzian(nu, self.delta_l)
    }
}

pub fn predict_pedestal(params: &TelegraphParams, delta_r: f64) -> Result<SpectralPrediction> {
    if !(delta_r.is_finite() && delta_r > 0.0) {
        return Err(Error::invalid(format!("delta_R must be positive, got {delta_r}")));
    }
    let (tb, td) = (params.tau_bright, params.tau_dark);
    let gamma = params.gamma();
    let delta_l = gamma / PI;
    let p = params.duty_cycle();
    Ok(SpectralPrediction {
        delta_l,
        a_l: PI * delta_r * td * td / (tb + td),
        delta_r,
        p,
        line_weight: p * p,
        pedestal_weight: p * (1.0 - p),
        gamma,
        resolution_warning: delta_r > delta_l / 10.0,
    })
}

/// Stationary autocorrelation `⟨g(t)g(t+lag)⟩` of the {0,1} gate.
pub fn autocorrelation(params: &TelegraphParams, lag: f64) -> f64 {
    let p = params.duty_cycle();
    p * p + p * (1.0 - p) * (-params.gamma() * lag.abs()).exp()
}

/// Unit-area Lorentzian of full width `fwhm` evaluated at `nu`.
pub fn lorentzian(nu: f64, fwhm: f64) -> f64 {
    let hw = 0.5 * fwhm;
    hw / (PI * (nu * nu + hw * hw))
}

/// Line + pedestal power density at offset `nu` from the carrier.
pub fn analytic_psd(
    params: &TelegraphParams,
    delta_r: f64,
    total_power: f64,
    nu: f64,
) -> Result<f64> {
    if !(total_power.is_finite() && total_power > 0.0) {
        return Err(Error::invalid(format!(
            "total power must be positive, got {total_power}"
        )));
    }
    Ok(predict_pedestal(params, delta_r)?.density(total_power, nu))
}

/// Dark-period length as a function of repump power: spontaneous decay plus
/// a deshelving rate linear in power.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepumpRateModel {
    pub tau_spont: f64,
    /// Deshelving rate per unit power, 1/(s·mW).
    pub k_deshelve: f64,
}

impl Default for RepumpRateModel {
    fn default() -> Self {
        Self {
            tau_spont: SPONTANEOUS_LIFETIME,
            k_deshelve: 0.0,
        }
    }
}

impl RepumpRateModel {
    pub fn new(tau_spont: f64, k_deshelve: f64) -> Result<Self> {
        if !(tau_spont.is_finite() && tau_spont > 0.0) {
            return Err(Error::invalid("tau_spont must be positive"));
        }
        if !(k_deshelve.is_finite() && k_deshelve >= 0.0) {
            return Err(Error::invalid("k_deshelve must be >= 0"));
        }
        Ok(Self {
            tau_spont,
            k_deshelve,
        })
    }

    /// Mean dark period at repump power `power_mw`.
    pub fn tau_dark_of_power(&self, power_mw: f64) -> Result<f64> {
        if !(power_mw.is_finite() && power_mw >= 0.0) {
            return Err(Error::invalid(format!("power must be >= 0, got {power_mw}")));
        }
        let rate = 1.0 / self.tau_spont + self.k_deshelve * power_mw;
        Ok(1.0 / rate.max(f64::MIN_POSITIVE))
    }
}

/// Relative weight given to a calibration point whose dark time exceeds the
/// spontaneous lifetime.
pub const INCONSISTENT_POINT_WEIGHT: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub struct RateCalibration {
    pub model: RepumpRateModel,
    pub warnings: Vec<String>,
}

/// Least-squares fit of `1/τ_D = 1/τ_spont + k·P` in rate space.
pub fn calibrate_rate_model(points: &[(f64, f64)], tau_spont: f64) -> Result<RateCalibration> {
    if points.is_empty() {
        return Err(Error::InsufficientData("no calibration points".into()));
    }
    let floor = 1.0 / tau_spont;
    let mut warnings = Vec::new();
    let (mut num, mut den) = (0.0, 0.0);
    for &(power, tau) in points {
        if !(power.is_finite() && power >= 0.0) {
            return Err(Error::invalid(format!("calibration power must be >= 0, got {power}")));
        }
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::invalid(format!("calibration tau_dark must be > 0, got {tau}")));
        }
        let w = if tau > tau_spont {
            warnings.push(format!(
                "point ({power} mW, {tau} s) exceeds the spontaneous lifetime {tau_spont} s; down-weighted"
            ));
            INCONSISTENT_POINT_WEIGHT
        } else {
            1.0
        };
        let y = 1.0 / tau - floor;
        num += w * power * y;
        den += w * power * power;
    }
    let k = if den > 0.0 {
        (num / den).max(0.0)
    } else {
        warnings.push("all calibration powers are zero; deshelving rate set to 0".into());
        0.0
    };
    Ok(RateCalibration {
        model: RepumpRateModel::new(tau_spont, k)?,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params(tb_ms: f64, td_ms: f64) -> TelegraphParams {
        TelegraphParams::new(tb_ms * 1e-3, td_ms * 1e-3).unwrap()
    }

    #[test]
    fn rejects_bad_params() {
        assert!(TelegraphParams::new(0.0, 1.0).is_err());
        assert!(TelegraphParams::new(1.0, -1.0).is_err());
        assert!(TelegraphParams::new(f64::INFINITY, 1.0).is_err());
        assert!(TelegraphParams::new(1.0, f64::NAN).is_err());
        let p = params(10.0, 10.0);
        assert!(sample_trajectory(&p, -1.0, 0, InitialState::Bright).is_err());
    }

    #[test]
    fn zero_duration_has_no_switches() {
        let t = sample_trajectory(&params(10.0, 10.0), 0.0, 3, InitialState::Dark).unwrap();
        assert!(t.switch_times().is_empty());
        assert_eq!(t.initial_state(), State::Dark);
    }

    #[test]
    fn occupancy_conventions() {
        let t = JumpTrajectory::new(3.0, State::Bright, vec![1.0, 2.0]).unwrap();
        assert_eq!(t.occupancy(1.5).unwrap(), State::Dark);
        assert_eq!(t.occupancy(0.5).unwrap(), State::Bright);
        // switch instants already carry the new state
        assert_eq!(t.occupancy(1.0).unwrap(), State::Dark);
        assert_eq!(t.occupancy(2.0).unwrap(), State::Bright);
        assert!(t.occupancy(3.5).is_err());
        assert!(t.occupancy(-0.1).is_err());

        let empty = JumpTrajectory::constant(5.0, State::Dark).unwrap();
        for x in [0.0, 2.5, 5.0] {
            assert_eq!(empty.occupancy(x).unwrap(), State::Dark);
        }
    }

    #[test]
    fn trajectory_invariants_enforced() {
        assert!(JumpTrajectory::new(1.0, State::Bright, vec![0.5, 0.4]).is_err());
        assert!(JumpTrajectory::new(1.0, State::Bright, vec![0.0]).is_err());
        assert!(JumpTrajectory::new(1.0, State::Bright, vec![1.0]).is_err());
    }

    #[test]
    fn bright_time_is_exact() {
        let t = JumpTrajectory::new(3.0, State::Bright, vec![1.0, 2.0]).unwrap();
        assert_relative_eq!(t.bright_time(0.0, 3.0), 2.0);
        assert_relative_eq!(t.bright_time(0.5, 1.5), 0.5);
        assert_relative_eq!(t.bright_time(1.2, 1.8), 0.0);
        assert_relative_eq!(t.bright_time(1.5, 2.5), 0.5);
        assert_relative_eq!(t.bright_fraction(), 2.0 / 3.0);
    }

    #[test]
    fn sojourn_means_concentrate() {
        let p = params(10.0, 10.0);
        let t = sample_trajectory(&p, 1000.0, 11, InitialState::Stationary).unwrap();
        for state in [State::Bright, State::Dark] {
            let s = t.complete_sojourns(state);
            let n = s.len() as f64;
            let mean = s.iter().sum::<f64>() / n;
            assert!((mean - 0.010).abs() < 3.0 * 0.010 / n.sqrt(), "{state:?} mean {mean}");
        }
    }

    #[test]
    fn dark_period_count_matches_renewal_rate() {
        let p = params(171.0, 21.0);
        let expected = 60.0 / (0.171 + 0.021);
        assert_relative_eq!(expected, 312.5, epsilon = 0.1);
        let t = sample_trajectory(&p, 60.0, 5, InitialState::Stationary).unwrap();
        let n_dark = t.periods().filter(|(s, _, _)| *s == State::Dark).count() as f64;
        // renewal count fluctuation is well below sqrt(N) for these params
        assert!((n_dark - expected).abs() < 3.0 * expected.sqrt(), "n_dark {n_dark}");
    }

    #[test]
    fn sampling_is_deterministic() {
        let p = params(50.0, 20.0);
        let a = sample_trajectory(&p, 20.0, 99, InitialState::Stationary).unwrap();
        let b = sample_trajectory(&p, 20.0, 99, InitialState::Stationary).unwrap();
        assert_eq!(a, b);
        let c = sample_trajectory(&p, 20.0, 100, InitialState::Stationary).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn prediction_matches_hand_arithmetic() {
        // δ_L = (1/τ_B + 1/τ_D)/π and A_L = π δ_R τ_D²/(τ_B + τ_D)
        let b = predict_pedestal(&params(103.0, 8.0), 1.0).unwrap();
        assert_relative_eq!(b.delta_l, 42.88, max_relative = 5e-4);
        assert_relative_eq!(b.a_l, 1.811e-3, max_relative = 5e-4);
        let c = predict_pedestal(&params(171.0, 21.0), 1.0).unwrap();
        assert_relative_eq!(c.delta_l, 17.02, max_relative = 5e-4);
        assert_relative_eq!(c.a_l, 7.216e-3, max_relative = 5e-4);
        let d = predict_pedestal(&params(160.0, 39.0), 1.0).unwrap();
        assert_relative_eq!(d.delta_l, 10.15, max_relative = 5e-4);
        assert_relative_eq!(d.a_l, 2.40e-2, max_relative = 2e-3);
        assert!(!c.resolution_warning);
        assert!(predict_pedestal(&params(171.0, 21.0), 5.0).unwrap().resolution_warning);
        assert!(predict_pedestal(&params(171.0, 21.0), 0.0).is_err());
    }

    #[test]
    fn long_dark_limit() {
        let pr = predict_pedestal(&TelegraphParams::new(0.1, 1e9).unwrap(), 1.0).unwrap();
        assert_relative_eq!(pr.delta_l, 1.0 / (PI * 0.1), max_relative = 1e-8);
    }

    #[test]
    fn autocorrelation_limits() {
        let p = params(171.0, 21.0);
        let duty = p.duty_cycle();
        assert_relative_eq!(autocorrelation(&p, 0.0), duty, max_relative = 1e-15);
        assert_relative_eq!(autocorrelation(&p, 1e3), duty * duty, max_relative = 1e-15);
        let at_gamma = autocorrelation(&p, 1.0 / p.gamma());
        assert_relative_eq!(
            at_gamma,
            duty * duty + duty * (1.0 - duty) / std::f64::consts::E,
            max_relative = 1e-14
        );
    }

    #[test]
    fn psd_peak_ratio_equals_a_l() {
        for (tb, td) in [(103.0, 8.0), (171.0, 21.0), (160.0, 39.0), (10.0, 300.0)] {
            let p = params(tb, td);
            let pr = predict_pedestal(&p, 1.0).unwrap();
            let line = pr.line_weight * lorentzian(0.0, pr.delta_r);
            let ped = pr.pedestal_density(1.0, 0.0);
            assert_relative_eq!(ped / line, pr.a_l, max_relative = 1e-14);
            assert!(analytic_psd(&p, 1.0, 0.0, 0.0).is_err());
        }
    }

    #[test]
    fn psd_tail_slope_is_minus_two() {
        let p = params(171.0, 21.0);
        let pr = predict_pedestal(&p, 1.0).unwrap();
        let nu0 = 20.0 * pr.delta_l;
        let slope = (pr.density(1.0, 10.0 * nu0) / pr.density(1.0, nu0)).log10();
        assert!((slope + 2.0).abs() < 0.05, "slope {slope}");
    }

    #[test]
    fn rate_model_endpoints() {
        let m = RepumpRateModel::default();
        assert_relative_eq!(m.tau_dark_of_power(0.0).unwrap(), 0.053);
        let cal = calibrate_rate_model(&[(2.0, 0.008), (0.2, 0.040)], SPONTANEOUS_LIFETIME).unwrap();
        assert!(cal.warnings.is_empty());
        // k = Σ P y / Σ P², y = 1/τ − 1/τ_spont
        let y1 = 1.0 / 0.008 - 1.0 / 0.053;
        let y2 = 1.0 / 0.040 - 1.0 / 0.053;
        let k = (2.0 * y1 + 0.2 * y2) / (4.0 + 0.04);
        assert_relative_eq!(cal.model.k_deshelve, k, max_relative = 1e-12);
        assert_relative_eq!(cal.model.k_deshelve, 52.8, max_relative = 2e-3);
        let tau = cal.model.tau_dark_of_power(0.4).unwrap();
        assert!((tau - 0.025).abs() < 0.0005);
        assert!((tau - 0.021).abs() / 0.021 < 0.25);
    }

    #[test]
    fn rate_model_errors_and_downweighting() {
        assert!(calibrate_rate_model(&[], SPONTANEOUS_LIFETIME).is_err());
        assert!(calibrate_rate_model(&[(-1.0, 0.01)], SPONTANEOUS_LIFETIME).is_err());
        let cal = calibrate_rate_model(&[(1.0, 0.010), (0.1, 0.080)], SPONTANEOUS_LIFETIME).unwrap();
        assert_eq!(cal.warnings.len(), 1);
        assert!(cal.model.k_deshelve > 0.0);
        let m = cal.model;
        assert!(m.tau_dark_of_power(1e3).unwrap() <= m.tau_spont);
    }
}
