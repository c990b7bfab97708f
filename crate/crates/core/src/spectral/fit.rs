//! Line + Lorentzian pedestal fit.
//!
//! The model for the expected periodogram is
//!
//! ```text
//! m(ν) = B + P_line·K(ν−c)/ENBW + P_ped·(L_δL ∗ k)(ν−c)
//! ```
//!
//! where `K` is the window's peak-normalized power response, `k = K/ENBW`
//! the same response as a unit-area kernel, and `L_δL` a unit-area
//! Lorentzian of FWHM `δ_L`. The line keeps the window shape rather than a
//! Lorentzian because that is what a Welch estimate of a monochromatic
//! component looks like.
//!
//! Height ratios are reported in the convention where the resolution filter
//! is a Lorentzian of FWHM `δ_R`, i.e. a line of power `P` peaks at
//! `2P/(πδ_R)`. The measured Welch peak is `P/ENBW`, so
//! `A_L = measured_ratio · πδ_R/(2·ENBW)`, which reduces to
//! `A_L = (P_ped/P_line)·δ_R/δ_L`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::Spectrum;
use crate::dsp::WindowKind;
use crate::error::{Error, Result};
use crate::telegraph::lorentzian;

/// `πδ_R/(2·ENBW)`: converts a Welch-peak ratio to the Lorentzian-filter
/// peak convention.
pub fn peak_convention_factor(delta_r: f64, enbw: f64) -> f64 {
    PI * delta_r / (2.0 * enbw)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitUncertainties {
    pub center: f64,
    pub peak_height: f64,
    pub pedestal_height: f64,
    pub delta_l: f64,
    pub baseline: f64,
    pub a_l: f64,
    pub weight_ratio: f64,
    pub line_power: f64,
    pub pedestal_power: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PedestalFit {
    pub center: f64,
    /// Welch peak height of the line, `P_line/ENBW`.
    pub peak_height: f64,
    /// Peak of the (unsmeared) pedestal Lorentzian, `2P_ped/(πδ_L)`.
    pub pedestal_height: f64,
    #[serde(rename = "delta_L_hat")]
    pub delta_l_hat: f64,
    pub baseline: f64,
    #[serde(rename = "A_L_hat")]
    pub a_l_hat: f64,
    /// `P_ped/P_line`.
    pub weight_ratio_hat: f64,
    /// `max(ŵ, 0) + 2σ_w`.
    pub weight_ratio_upper: f64,
    pub line_power: f64,
    pub pedestal_power: f64,
    pub uncertainties: FitUncertainties,
    pub residual_rms: f64,
    pub chi2_reduced: f64,
    pub iterations: usize,
    /// Pedestal not distinguishable from the baseline, or singular normal
    /// matrix. Pedestal quantities are then reported as zero and only the
    /// upper bound is meaningful.
    pub degenerate: bool,
    pub delta_l_fixed: bool,
    #[serde(rename = "delta_R")]
    pub delta_r: f64,
    pub enbw: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitOptions {
    pub init: Option<PedestalFit>,
    /// Starting pedestal width when `init` is absent.
    pub delta_l_guess: Option<f64>,
    /// Hold the pedestal width at this value.
    pub fixed_delta_l: Option<f64>,
    pub max_iterations: usize,
    /// Rounds of inverse-variance reweighting with `var ∝ m²/n_averages`.
    pub reweight_rounds: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            init: None,
            delta_l_guess: None,
            fixed_delta_l: None,
            max_iterations: 200,
            reweight_rounds: 3,
        }
    }
}

/// Fits line + pedestal, optionally starting from a previous fit.
pub fn fit_pedestal(spec: &Spectrum, init: Option<&PedestalFit>) -> Result<PedestalFit> {
    fit_pedestal_with(
        spec,
        &FitOptions {
            init: init.cloned(),
            ..Default::default()
        },
    )
}

/// Window response sampled on a sub-bin grid, for smearing the pedestal.
pub(crate) struct Lineshape<'a> {
    spec: &'a Spectrum,
    offsets: Vec<f64>,
    weights: Vec<f64>,
}

impl<'a> Lineshape<'a> {
    pub(crate) fn new(spec: &'a Spectrum) -> Self {
        let bin = spec.bin_width();
        let reach_bins = match spec.window {
            WindowKind::Hann => 16,
            WindowKind::Rectangular => 64,
        };
        let sub = 8;
        let j_max = (reach_bins * sub) as isize;
        let step = bin / sub as f64;
        let offsets: Vec<f64> = (-j_max..=j_max).map(|j| j as f64 * step).collect();
        let mut weights: Vec<f64> = offsets.iter().map(|&d| spec.line_response(d)).collect();
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Self {
            spec,
            offsets,
            weights,
        }
    }

    /// Welch density of a unit-power line at offset `df`.
    pub(crate) fn line(&self, df: f64) -> f64 {
        self.spec.line_response(df) / self.spec.enbw
    }

    /// Window-smeared unit-area Lorentzian at offset `df`.
    pub(crate) fn pedestal(&self, df: f64, fwhm: f64) -> f64 {
        self.offsets
            .iter()
            .zip(&self.weights)
            .map(|(d, w)| w * lorentzian(df - d, fwhm))
            .sum()
    }
}

// parameter order: baseline, line power, center, pedestal power, δ_L
const B: usize = 0;
const PL: usize = 1;
const C: usize = 2;
const PP: usize = 3;
const DL: usize = 4;

struct Problem<'a> {
    shape: Lineshape<'a>,
    freqs: &'a [f64],
    data: &'a [f64],
    fix_dl: bool,
}

impl Problem<'_> {
    fn model(&self, th: &[f64; 5]) -> Vec<f64> {
        self.freqs
            .iter()
            .map(|&f| {
                th[B] + th[PL] * self.shape.line(f - th[C]) + th[PP] * self.shape.pedestal(f - th[C], th[DL])
            })
            .collect()
    }

    fn free(&self) -> Vec<usize> {
        if self.fix_dl {
            vec![B, PL, C, PP]
        } else {
            vec![B, PL, C, PP, DL]
        }
    }

    /// Jacobian columns for the free parameters.
    fn jacobian(&self, th: &[f64; 5]) -> Vec<Vec<f64>> {
        let bin = self.shape.spec.bin_width();
        let hc = 1e-4 * bin;
        let hd = 1e-5 * th[DL].max(bin);
        let mut cols = Vec::new();
        for p in self.free() {
            let col: Vec<f64> = match p {
                B => vec![1.0; self.freqs.len()],
                PL => self.freqs.iter().map(|&f| self.shape.line(f - th[C])).collect(),
                PP => self
                    .freqs
                    .iter()
                    .map(|&f| self.shape.pedestal(f - th[C], th[DL]))
                    .collect(),
                C => self
                    .freqs
                    .iter()
                    .map(|&f| {
                        let up = th[PL] * self.shape.line(f - th[C] - hc)
                            + th[PP] * self.shape.pedestal(f - th[C] - hc, th[DL]);
                        let dn = th[PL] * self.shape.line(f - th[C] + hc)
                            + th[PP] * self.shape.pedestal(f - th[C] + hc, th[DL]);
                        (up - dn) / (2.0 * hc)
                    })
                    .collect(),
                _ => self
                    .freqs
                    .iter()
                    .map(|&f| {
                        let up = self.shape.pedestal(f - th[C], th[DL] + hd);
                        let dn = self.shape.pedestal(f - th[C], th[DL] - hd);
                        th[PP] * (up - dn) / (2.0 * hd)
                    })
                    .collect(),
            };
            cols.push(col);
        }
        cols
    }

    fn chi2(&self, model: &[f64], w: &[f64]) -> f64 {
        self.data
            .iter()
            .zip(model)
            .zip(w)
            .map(|((d, m), w)| w * (d - m) * (d - m))
            .sum()
    }
}

struct LmOutcome {
    theta: [f64; 5],
    iterations: usize,
}

fn levenberg_marquardt(prob: &Problem, w: &[f64], mut th: [f64; 5], max_iter: usize) -> Result<LmOutcome> {
    let free = prob.free();
    let np = free.len();
    let min_dl = 0.05 * prob.shape.spec.bin_width();
    let mut lambda = 1e-3;
    let mut model = prob.model(&th);
    let mut chi2 = prob.chi2(&model, w);
    for iter in 1..=max_iter {
        let cols = prob.jacobian(&th);
        let mut a = DMatrix::<f64>::zeros(np, np);
        let mut g = DVector::<f64>::zeros(np);
        for k in 0..prob.freqs.len() {
            let r = prob.data[k] - model[k];
            for i in 0..np {
                let ji = cols[i][k] * w[k];
                g[i] += ji * r;
                for j in i..np {
                    a[(i, j)] += ji * cols[j][k];
                }
            }
        }
        for i in 0..np {
            for j in 0..i {
                a[(i, j)] = a[(j, i)];
            }
        }
        let mut accepted = false;
        let mut step_small = false;
        while lambda < 1e14 {
            let mut damped = a.clone();
            for i in 0..np {
                damped[(i, i)] += lambda * a[(i, i)].max(1e-300);
            }
            let Some(chol) = damped.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let delta = chol.solve(&g);
            let mut trial = th;
            for (i, &p) in free.iter().enumerate() {
                trial[p] += delta[i];
            }
            if trial[DL] <= min_dl || !trial.iter().all(|v| v.is_finite()) {
                lambda *= 10.0;
                continue;
            }
            let trial_model = prob.model(&trial);
            let trial_chi2 = prob.chi2(&trial_model, w);
            if trial_chi2 <= chi2 {
                step_small = free.iter().enumerate().all(|(i, &p)| {
                    let scale = match p {
                        C | DL => prob.shape.spec.bin_width(),
                        PP => th[PL].abs(),
                        _ => th[p].abs(),
                    };
                    delta[i].abs() <= 1e-9 * (th[p].abs() + scale)
                });
                let rel = (chi2 - trial_chi2) / chi2.max(1e-300);
                th = trial;
                model = trial_model;
                chi2 = trial_chi2;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if rel < 1e-12 {
                    step_small = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted || step_small {
            return Ok(LmOutcome {
                theta: th,
                iterations: iter,
            });
        }
    }
    Err(Error::FitFailed(format!(
        "no convergence after {max_iter} iterations"
    )))
}

/// Starting point from the spectrum alone: baseline from the outer bins,
/// line from the peak, pedestal from the half-maximum of the residual wings.
fn initial_guess(spec: &Spectrum, shape: &Lineshape, delta_l_guess: Option<f64>) -> [f64; 5] {
    let bin = spec.bin_width();
    let span = spec.max_abs_offset();
    let baseline = spec.median_beyond(0.8 * span).unwrap_or(0.0);
    let k = spec.peak_index();
    let center = spec.freq_offsets[k];
    let line_power = ((spec.psd[k] - baseline) * spec.enbw).max(f64::MIN_POSITIVE);

    // residual wings, folded onto |ν − c| in units of bins
    let n_wing = ((span / bin) as usize).max(8);
    let mut folded = vec![(0.0, 0usize); n_wing + 1];
    for (f, p) in spec.freq_offsets.iter().zip(&spec.psd) {
        let d = ((f - center).abs() / bin).round() as usize;
        if (3..=n_wing).contains(&d) {
            let r = p - baseline - line_power * shape.line(f - center);
            folded[d].0 += r;
            folded[d].1 += 1;
        }
    }
    let wing: Vec<f64> = folded
        .iter()
        .map(|(s, c)| if *c > 0 { s / *c as f64 } else { 0.0 })
        .collect();
    let head = wing[3..=6.min(n_wing)].iter().sum::<f64>() / (6.min(n_wing) - 2) as f64;
    let delta_l = match delta_l_guess {
        Some(d) => d,
        None if head > 0.0 => {
            // first point where a 5-bin running mean drops below half the head
            let mut found = None;
            for d in 4..n_wing.saturating_sub(2) {
                let m = wing[d - 2..=d + 2].iter().sum::<f64>() / 5.0;
                if m < head / 2.0 {
                    found = Some(d as f64 * bin);
                    break;
                }
            }
            2.0 * found.unwrap_or(0.25 * span)
        }
        None => 10.0 * bin,
    };
    let pedestal_power = (head.max(0.0)) * PI * delta_l / 2.0;
    [baseline, line_power, center, pedestal_power, delta_l]
}

pub fn fit_pedestal_with(spec: &Spectrum, opts: &FitOptions) -> Result<PedestalFit> {
    if spec.psd.len() < 8 {
        return Err(Error::InsufficientData("spectrum has too few bins to fit".into()));
    }
    let shape = Lineshape::new(spec);
    let mut th = match &opts.init {
        Some(f) => [f.baseline, f.line_power, f.center, f.pedestal_power, f.delta_l_hat],
        None => initial_guess(spec, &shape, opts.delta_l_guess),
    };
    if let Some(d) = opts.fixed_delta_l {
        if !(d > 0.0) {
            return Err(Error::invalid("fixed delta_L must be > 0"));
        }
        th[DL] = d;
    }
    if spec.max_abs_offset() < 5.0 * th[DL] {
        return Err(Error::InsufficientData(format!(
            "spectrum spans ±{:.1} Hz, less than 5× the pedestal width guess {:.2} Hz",
            spec.max_abs_offset(),
            th[DL]
        )));
    }
    let prob = Problem {
        shape,
        freqs: &spec.freq_offsets,
        data: &spec.psd,
        fix_dl: opts.fixed_delta_l.is_some(),
    };
    let n_avg = spec.n_averages.max(1) as f64;
    let mut iterations = 0;
    let mut weights = Vec::new();
    for _ in 0..opts.reweight_rounds.max(1) {
        let m = prob.model(&th);
        let floor = m.iter().cloned().fold(f64::INFINITY, f64::min).abs().max(f64::MIN_POSITIVE);
        weights = m.iter().map(|v| n_avg / v.abs().max(floor * 1e-3).powi(2)).collect();
        let out = levenberg_marquardt(&prob, &weights, th, opts.max_iterations)?;
        th = out.theta;
        iterations += out.iterations;
    }

    // covariance of the free parameters, scaled by the reduced χ²
    let model = prob.model(&th);
    let free = prob.free();
    let np = free.len();
    let cols = prob.jacobian(&th);
    let mut a = DMatrix::<f64>::zeros(np, np);
    for k in 0..prob.freqs.len() {
        for i in 0..np {
            for j in 0..np {
                a[(i, j)] += cols[i][k] * weights[k] * cols[j][k];
            }
        }
    }
    let dof = (prob.freqs.len() as f64 - np as f64).max(1.0);
    let chi2_reduced = prob.chi2(&model, &weights) / dof;
    let mut degenerate = false;
    let inv = match a.clone().cholesky() {
        Some(ch) => ch.inverse(),
        None => {
            degenerate = true;
            a.clone()
                .pseudo_inverse(1e-12)
                .map_err(|e| Error::FitFailed(format!("singular normal matrix: {e}")))?
        }
    };
    let mut cov = [[0.0; 5]; 5];
    for (i, &p) in free.iter().enumerate() {
        for (j, &q) in free.iter().enumerate() {
            cov[p][q] = inv[(i, j)] * chi2_reduced;
        }
    }
    let sd = |p: usize| cov[p][p].max(0.0).sqrt();
    // first-order propagation through g(θ) with gradient `grad`
    let prop = |grad: &[(usize, f64)]| {
        let mut v = 0.0;
        for &(p, gp) in grad {
            for &(q, gq) in grad {
                v += gp * gq * cov[p][q];
            }
        }
        v.max(0.0).sqrt()
    };

    let (pl, pp, dl) = (th[PL], th[PP], th[DL]);
    if !(pl > 0.0) {
        return Err(Error::FitFailed(format!("non-positive line power {pl}")));
    }
    let w = pp / pl;
    let sigma_w = prop(&[(PL, -pp / (pl * pl)), (PP, 1.0 / pl)]);
    let a_l = w * spec.delta_r / dl;
    let sigma_a = prop(&[
        (PL, -a_l / pl),
        (PP, spec.delta_r / (pl * dl)),
        (DL, -a_l / dl),
    ]);
    let ped_height = 2.0 * pp / (PI * dl);
    let sigma_ped_h = prop(&[(PP, 2.0 / (PI * dl)), (DL, -ped_height / dl)]);
    if opts.fixed_delta_l.is_none() && pp < 2.0 * sd(PP) {
        degenerate = true;
    }
    let upper = w.max(0.0) + 2.0 * sigma_w;
    let residual_rms = (spec
        .psd
        .iter()
        .zip(&model)
        .map(|(d, m)| (d - m) * (d - m))
        .sum::<f64>()
        / spec.psd.len() as f64)
        .sqrt();
    let report = |v: f64| if degenerate { 0.0 } else { v };
    Ok(PedestalFit {
        center: th[C],
        peak_height: pl / spec.enbw,
        pedestal_height: report(ped_height.max(0.0)),
        delta_l_hat: dl,
        baseline: th[B],
        a_l_hat: report(a_l.max(0.0)),
        weight_ratio_hat: report(w.max(0.0)),
        weight_ratio_upper: upper,
        line_power: pl,
        pedestal_power: pp,
        uncertainties: FitUncertainties {
            center: sd(C),
            peak_height: sd(PL) / spec.enbw,
            pedestal_height: sigma_ped_h,
            delta_l: sd(DL),
            baseline: sd(B),
            a_l: sigma_a,
            weight_ratio: sigma_w,
            line_power: sd(PL),
            pedestal_power: sd(PP),
        },
        residual_rms,
        chi2_reduced,
        iterations,
        degenerate,
        delta_l_fixed: opts.fixed_delta_l.is_some(),
        delta_r: spec.delta_r,
        enbw: spec.enbw,
    })
}

/// The fitted model evaluated on the spectrum's grid.
pub fn model_curve(spec: &Spectrum, fit: &PedestalFit) -> Vec<f64> {
    let shape = Lineshape::new(spec);
    spec.freq_offsets
        .iter()
        .map(|&f| {
            let d = f - fit.center;
            fit.baseline + fit.line_power * shape.line(d) + fit.pedestal_power * shape.pedestal(d, fit.delta_l_hat)
        })
        .collect()
}
