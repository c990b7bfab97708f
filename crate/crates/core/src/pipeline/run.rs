//! `predict`, `simulate` and `analyze`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::formats;
use crate::heterodyne::{BeatSynthesizer, HeterodyneParams, SampledSignal};
use crate::jump_stats::{detect_periods, make_histogram, summarize, JumpStatsResult, PeriodList};
use crate::photon::{low_pass, synthesize_counts, CountTrace, IntensityTrace};
use crate::rng::derive_seed;
use crate::spectral::{
    conditional_baseband_psd, downconvert, estimate_baseband_psd, fit_pedestal_with, model_curve, oracle_compare,
    render_analytic, BasebandSignal, ComparisonReport, DownconvertPlan, Downconverter, FitOptions, PedestalFit,
    Spectrum,
};
use crate::telegraph::{predict_pedestal, sample_trajectory, JumpTrajectory, SpectralPrediction, State, TelegraphParams};

use super::config::RunConfig;
use super::manifest::{Check, ComparisonSummary, RunManifest};

pub const TRAJECTORY_FILE: &str = "trajectory.txt";
pub const COUNTS_FILE: &str = "counts.csv";
pub const BASEBAND_FILE: &str = "baseband.bin";
pub const SIGNAL_FILE: &str = "signal.bin";
pub const SPECTRUM_FILE: &str = "spectrum.csv";
pub const MODEL_FILE: &str = "spectrum_model.csv";
pub const COMPARISON_FILE: &str = "comparison.csv";
pub const FIT_FILE: &str = "pedestal_fit.json";
pub const CONDITIONAL_SPECTRUM_FILE: &str = "conditional_spectrum.csv";
pub const CONDITIONAL_FIT_FILE: &str = "conditional_fit.json";
pub const INTENSITY_FILE: &str = "intensity.csv";
pub const PERIODS_FILE: &str = "periods.csv";
pub const DARK_HISTOGRAM_FILE: &str = "histogram_dark.csv";
pub const BRIGHT_HISTOGRAM_FILE: &str = "histogram_bright.csv";
pub const JUMP_STATS_FILE: &str = "jump_stats.json";
pub const PLOT_FILE: &str = "plot.gp";

pub const STAGES: [&str; 4] = ["telegraph", "photon", "beat", "bootstrap"];

/// Per-stage seeds derived from the master seed by stage name.
pub fn stage_seeds(master: u64) -> BTreeMap<String, u64> {
    STAGES
        .iter()
        .map(|s| (s.to_string(), derive_seed(master, s)))
        .collect()
}

fn seed(seeds: &BTreeMap<String, u64>, stage: &str) -> u64 {
    seeds[stage]
}

/// Resolution of the analysis spectrum the configuration will produce.
pub fn analysis_delta_r(cfg: &RunConfig, het: &HeterodyneParams) -> Result<f64> {
    let plan = cfg.welch.plan(het)?;
    let n = cfg.welch.segment_length;
    Ok(cfg.welch.window.fwhm_bins(n) * plan.output_rate() / n as f64)
}

#[derive(Clone, Debug)]
pub struct Prediction {
    pub params: TelegraphParams,
    pub prediction: SpectralPrediction,
    pub warnings: Vec<String>,
}

pub fn cmd_predict(cfg: &RunConfig) -> Result<Prediction> {
    let (params, mut warnings) = cfg.telegraph.params()?;
    let het = cfg.heterodyne.params(0)?;
    let prediction = predict_pedestal(&params, analysis_delta_r(cfg, &het)?)?;
    if prediction.resolution_warning {
        warnings.push(format!(
            "resolution {:.3} Hz is not small against the pedestal width {:.3} Hz; the height ratio is approximate",
            prediction.delta_r, prediction.delta_l
        ));
    }
    Ok(Prediction {
        params,
        prediction,
        warnings,
    })
}

pub struct Simulation {
    pub params: TelegraphParams,
    pub trajectory: JumpTrajectory,
    pub counts: CountTrace,
    pub baseband: BasebandSignal,
    pub signal: Option<SampledSignal>,
    pub heterodyne: HeterodyneParams,
    pub seeds: BTreeMap<String, u64>,
    pub warnings: Vec<String>,
}

/// Synthesizes the beat in chunks and down-converts it on the fly; the
/// full-rate record is kept only when asked for.
pub fn stream_beat(
    traj: &JumpTrajectory,
    het: &HeterodyneParams,
    plan: DownconvertPlan,
    keep_signal: bool,
) -> Result<(BasebandSignal, Option<SampledSignal>)> {
    let mut synth = BeatSynthesizer::new(traj, het)?;
    let mut dc = Downconverter::new(plan, het.nu_l)?;
    let mut full = if keep_signal {
        Some(Vec::with_capacity(synth.total_samples() as usize))
    } else {
        None
    };
    let mut buf = vec![0.0; 1 << 16];
    loop {
        let k = synth.fill(&mut buf);
        if k == 0 {
            break;
        }
        dc.push(&buf[..k]);
        if let Some(f) = full.as_mut() {
            f.extend_from_slice(&buf[..k]);
        }
    }
    let signal = match full {
        Some(s) => Some(SampledSignal::new(het.sample_rate, s, het.nu_l)?),
        None => None,
    };
    Ok((dc.finish()?, signal))
}

pub fn simulate(cfg: &RunConfig) -> Result<Simulation> {
    cfg.validate()?;
    let seeds = stage_seeds(cfg.run.seed);
    let (params, warnings) = cfg.telegraph.params()?;
    let duration = cfg.run.duration;
    let trajectory = if cfg.telegraph.no_jumps {
        JumpTrajectory::constant(duration, State::Bright)
    } else {
        sample_trajectory(&params, duration, seed(&seeds, "telegraph"), cfg.telegraph.initial_state)
    }
    .map_err(|e| e.in_stage("telegraph"))?;
    let counts = synthesize_counts(&trajectory, &cfg.detection, seed(&seeds, "photon"))
        .map_err(|e| e.in_stage("photon"))?;
    let heterodyne = cfg.heterodyne.params(seed(&seeds, "beat"))?;
    let plan = cfg.welch.plan(&heterodyne)?;
    let (baseband, signal) =
        stream_beat(&trajectory, &heterodyne, plan, cfg.run.write_signal).map_err(|e| e.in_stage("heterodyne"))?;
    Ok(Simulation {
        params,
        trajectory,
        counts,
        baseband,
        signal,
        heterodyne,
        seeds,
        warnings,
    })
}

fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| {
        Error::invalid(format!("cannot create output directory {}: {e}", dir.display()))
    })
}

/// Runs the simulation and writes trajectory, counts and beat records plus
/// the manifest into `out`.
pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<(RunManifest, Simulation)> {
    prepare_dir(out)?;
    let sim = simulate(cfg)?;
    let mut m = RunManifest::new(cfg, sim.seeds.clone());
    m.warnings = sim.warnings.clone();
    formats::write_trajectory(&out.join(TRAJECTORY_FILE), &sim.trajectory)?;
    m.record(out, "telegraph", TRAJECTORY_FILE)?;
    formats::write_counts(&out.join(COUNTS_FILE), &sim.counts)?;
    m.record(out, "photon", COUNTS_FILE)?;
    formats::write_baseband(&out.join(BASEBAND_FILE), &sim.baseband)?;
    m.record(out, "heterodyne", BASEBAND_FILE)?;
    if let Some(s) = &sim.signal {
        formats::write_signal(&out.join(SIGNAL_FILE), s)?;
        m.record(out, "heterodyne", SIGNAL_FILE)?;
    }
    if !cfg.telegraph.no_jumps {
        m.prediction = Some(predict_pedestal(&sim.params, analysis_delta_r(cfg, &sim.heterodyne)?)?);
    }
    m.write(out)?;
    Ok((m, sim))
}

pub struct Analysis {
    pub prediction: SpectralPrediction,
    pub spectrum: Spectrum,
    pub fit: PedestalFit,
    pub comparison: Option<ComparisonReport>,
    pub conditional: Option<(Spectrum, PedestalFit)>,
    pub intensity: IntensityTrace,
    pub periods: PeriodList,
    pub jump_stats: JumpStatsResult,
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
}

/// Spectral and dwell-time analysis of one record. The trajectory is only
/// needed for the bright-only spectrum.
pub fn analyze(
    cfg: &RunConfig,
    trajectory: Option<&JumpTrajectory>,
    counts: &CountTrace,
    baseband: &BasebandSignal,
) -> Result<Analysis> {
    let seeds = stage_seeds(cfg.run.seed);
    let (params, mut warnings) = cfg.telegraph.params()?;
    let het = cfg.heterodyne.params(0)?;
    let no_jumps = cfg.telegraph.no_jumps;

    let spectrum = estimate_baseband_psd(baseband, &cfg.welch.welch()).map_err(|e| e.in_stage("spectrum"))?;
    let prediction = predict_pedestal(&params, spectrum.delta_r)?;
    let opts = FitOptions {
        fixed_delta_l: no_jumps.then_some(prediction.delta_l),
        ..Default::default()
    };
    let fit = fit_pedestal_with(&spectrum, &opts).map_err(|e| e.in_stage("fit"))?;

    let mut checks = Vec::new();
    let mut comparison = None;
    let mut conditional = None;
    if no_jumps {
        checks.push(Check::at_most(
            "pedestal weight upper bound vs 20% of the jump-case weight",
            fit.weight_ratio_upper,
            0.2 * prediction.weight_ratio(),
        ));
    } else {
        checks.push(Check::relative("delta_L", fit.delta_l_hat, prediction.delta_l, 0.15));
        checks.push(Check::relative("A_L", fit.a_l_hat, prediction.a_l, 0.20));
        checks.push(Check::relative(
            "weight ratio",
            fit.weight_ratio_hat,
            prediction.weight_ratio(),
            0.20,
        ));
        let band = (
            2.0 * spectrum.delta_r,
            (5.0 * prediction.delta_l).min(spectrum.max_abs_offset()),
        );
        match oracle_compare(&spectrum, &prediction, het.carrier_power(), het.noise_density, band) {
            Ok(rep) => {
                checks.push(Check::at_most("oracle band RMS", rep.band_rms, rep.tolerance));
                comparison = Some(rep);
            }
            Err(e) => warnings.push(format!("oracle comparison skipped: {e}")),
        }
        if let Some(traj) = trajectory {
            let min_bright = cfg.welch.conditional_min_bright * params.tau_bright();
            let cond = conditional_baseband_psd(baseband, traj, &cfg.welch.conditional_welch(), min_bright)
                .and_then(|s| {
                    let f = fit_pedestal_with(
                        &s,
                        &FitOptions {
                            fixed_delta_l: Some(prediction.delta_l),
                            ..Default::default()
                        },
                    )?;
                    Ok((s, f))
                });
            match cond {
                Ok((s, f)) => {
                    checks.push(Check::at_most(
                        "bright-only pedestal weight vs a tenth of the full-record weight",
                        f.weight_ratio_upper,
                        fit.weight_ratio_hat / 10.0,
                    ));
                    conditional = Some((s, f));
                }
                Err(e) => warnings.push(format!("bright-only spectrum skipped: {e}")),
            }
        }
    }

    let intensity = low_pass(counts, cfg.threshold.filter_time_constant).map_err(|e| e.in_stage("intensity"))?;
    let periods = detect_periods(&intensity, &cfg.threshold).map_err(|e| e.in_stage("periods"))?;
    let jump_stats = summarize(&periods, &cfg.threshold, seed(&seeds, "bootstrap"));
    if !periods.jumps_detected {
        warnings.push("no switching detected in the intensity trace".into());
    }
    if let (false, Some(tau), Some(sigma)) = (no_jumps, jump_stats.tau_dark_hat, jump_stats.tau_dark_sigma) {
        checks.push(Check::absolute("tau_dark", tau, params.tau_dark(), 3.0 * sigma));
    }
    Ok(Analysis {
        prediction,
        spectrum,
        fit,
        comparison,
        conditional,
        intensity,
        periods,
        jump_stats,
        checks,
        warnings,
    })
}

fn write_model(path: &Path, spec: &Spectrum, fit: &PedestalFit, pred: Option<&[f64]>) -> Result<()> {
    let curve = model_curve(spec, fit);
    let mut text = String::from("# columns: offset, estimate, fitted model, analytic prediction\n");
    text.push_str("offset_Hz,psd,fit,prediction\n");
    for (i, f) in spec.freq_offsets.iter().enumerate() {
        let p = pred.map(|p| p[i]).unwrap_or(f64::NAN);
        writeln!(text, "{f:.9e},{:.9e},{:.9e},{p:.9e}", spec.psd[i], curve[i]).unwrap();
    }
    fs::write(path, text)?;
    Ok(())
}

fn write_comparison(path: &Path, rep: &ComparisonReport) -> Result<()> {
    let mut text = format!(
        "# band_lo_Hz={} band_hi_Hz={} band_rms={:.6e} tolerance={:.6e}\noffset_Hz,relative_deviation\n",
        rep.band.0, rep.band.1, rep.band_rms, rep.tolerance
    );
    for (f, d) in rep.freq_offsets.iter().zip(&rep.relative_deviation) {
        writeln!(text, "{f:.9e},{d:.9e}").unwrap();
    }
    fs::write(path, text)?;
    Ok(())
}

fn plot_script(has_conditional: bool, has_dark_hist: bool) -> String {
    let mut s = String::from(
        "set datafile separator ','\nset datafile commentschars '#'\nset key autotitle columnhead\n\n\
         set term pngcairo size 900,600\n\
         set output 'spectrum.png'\nset logscale y\nset xlabel 'offset (Hz)'\nset ylabel 'PSD'\n\
         plot 'spectrum_model.csv' using 1:2 with lines title 'estimate', \\\n     \
         '' using 1:3 with lines title 'fit', \\\n     '' using 1:4 with lines title 'prediction'\n",
    );
    if has_conditional {
        s.push_str(
            "\nset output 'conditional_spectrum.png'\n\
             plot 'conditional_spectrum.csv' using 1:2 with lines title 'bright periods only'\n",
        );
    }
    s.push_str(
        "\nunset logscale y\nset output 'intensity.png'\nset xlabel 'time (s)'\nset ylabel 'count rate (1/s)'\n\
         plot 'intensity.csv' using 1:2 with lines title 'filtered intensity'\n",
    );
    if has_dark_hist {
        s.push_str(
            "\nset logscale y\nset output 'histogram_dark.png'\nset xlabel 'dark period (s)'\nset ylabel 'count'\n\
             plot 'histogram_dark.csv' using (($1+$2)/2):3 with boxes title 'dark periods'\n",
        );
    }
    s
}

/// Reads a simulation directory, analyzes it and writes the analysis
/// outputs and an updated manifest into `out`. Without an explicit config
/// the one echoed in the input manifest is used.
pub fn cmd_analyze(cfg: Option<&RunConfig>, input: &Path, out: &Path) -> Result<(RunManifest, Analysis)> {
    let prior = if input.join(super::manifest::MANIFEST_FILE).exists() {
        Some(RunManifest::read(input)?)
    } else {
        None
    };
    let cfg = match (cfg, &prior) {
        (Some(c), _) => c.clone(),
        (None, Some(m)) => m.config.clone(),
        (None, None) => {
            return Err(Error::invalid(format!(
                "{} has no manifest; pass a config",
                input.display()
            )))
        }
    };
    let traj_path = input.join(TRAJECTORY_FILE);
    let trajectory = if traj_path.exists() {
        Some(formats::read_trajectory(&traj_path)?)
    } else {
        None
    };
    let counts = formats::read_counts(&input.join(COUNTS_FILE))?;
    let baseband = if input.join(BASEBAND_FILE).exists() {
        formats::read_baseband(&input.join(BASEBAND_FILE))?
    } else {
        let het = cfg.heterodyne.params(0)?;
        let signal = formats::read_signal(&input.join(SIGNAL_FILE), het.nu_l)?;
        downconvert(&signal, cfg.welch.plan(&het)?)?
    };
    let a = analyze(&cfg, trajectory.as_ref(), &counts, &baseband)?;

    prepare_dir(out)?;
    let same_dir = fs::canonicalize(input).ok() == fs::canonicalize(out).ok();
    let mut m = match prior {
        Some(m) if same_dir => m,
        _ => RunManifest::new(&cfg, stage_seeds(cfg.run.seed)),
    };
    let het = cfg.heterodyne.params(0)?;
    formats::write_spectrum(&out.join(SPECTRUM_FILE), &a.spectrum)?;
    m.record(out, "spectrum", SPECTRUM_FILE)?;
    let pred_curve = (!cfg.telegraph.no_jumps)
        .then(|| render_analytic(&a.spectrum, &a.prediction, het.carrier_power(), het.noise_density).psd);
    write_model(&out.join(MODEL_FILE), &a.spectrum, &a.fit, pred_curve.as_deref())?;
    m.record(out, "fit", MODEL_FILE)?;
    formats::write_json(&out.join(FIT_FILE), &a.fit)?;
    m.record(out, "fit", FIT_FILE)?;
    if let Some(rep) = &a.comparison {
        write_comparison(&out.join(COMPARISON_FILE), rep)?;
        m.record(out, "compare", COMPARISON_FILE)?;
    }
    if let Some((s, f)) = &a.conditional {
        formats::write_spectrum(&out.join(CONDITIONAL_SPECTRUM_FILE), s)?;
        m.record(out, "conditional", CONDITIONAL_SPECTRUM_FILE)?;
        formats::write_json(&out.join(CONDITIONAL_FIT_FILE), f)?;
        m.record(out, "conditional", CONDITIONAL_FIT_FILE)?;
    }
    formats::write_intensity(&out.join(INTENSITY_FILE), &a.intensity)?;
    m.record(out, "intensity", INTENSITY_FILE)?;
    formats::write_periods(&out.join(PERIODS_FILE), &a.periods)?;
    m.record(out, "periods", PERIODS_FILE)?;
    let t_min = cfg.threshold.min_duration;
    let bw = cfg.threshold.histogram_bin_width;
    let mut has_dark_hist = false;
    for (state, file) in [(State::Dark, DARK_HISTOGRAM_FILE), (State::Bright, BRIGHT_HISTOGRAM_FILE)] {
        if let Ok(h) = make_histogram(&a.periods, state, bw, t_min) {
            formats::write_histogram(&out.join(file), &h)?;
            m.record(out, "histogram", file)?;
            has_dark_hist |= state == State::Dark;
        }
    }
    formats::write_json(&out.join(JUMP_STATS_FILE), &a.jump_stats)?;
    m.record(out, "jump_stats", JUMP_STATS_FILE)?;
    fs::write(out.join(PLOT_FILE), plot_script(a.conditional.is_some(), has_dark_hist))?;
    m.record(out, "plot", PLOT_FILE)?;

    m.prediction = (!cfg.telegraph.no_jumps).then_some(a.prediction);
    m.pedestal_fit = Some(a.fit.clone());
    m.conditional_fit = a.conditional.as_ref().map(|(_, f)| f.clone());
    m.comparison = a.comparison.as_ref().map(|r| ComparisonSummary {
        band: r.band,
        band_rms: r.band_rms,
        n_bins: r.n_bins,
        tolerance: r.tolerance,
        within: r.within,
    });
    m.jump_stats = Some(a.jump_stats.clone());
    m.checks = a.checks.clone();
    for w in &a.warnings {
        if !m.warnings.contains(w) {
            m.warnings.push(w.clone());
        }
    }
    m.write(out)?;
    Ok((m, a))
}
