use std::f64::consts::PI;

use jumpspec::pipeline::verify::spectral_case;
use jumpspec::pipeline::{stream_beat, RunConfig};
use jumpspec::rng::rng_from_seed;
use jumpspec::spectral::{estimate_baseband_psd, fit_pedestal, BasebandSignal};
use jumpspec::{JumpTrajectory, Spectrum, State, WelchConfig};
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};

const FS: f64 = 262_144.0 / 368.0;

/// Complex baseband: a pure line, a Gaussian process with Lorentzian
/// spectrum (exact AR(1) sampling of an exponentially correlated field)
/// and white noise of two-sided density `n0`.
fn injected(seconds: f64, line: f64, offset: f64, pedestal: f64, fwhm: f64, n0: f64, seed: u64) -> BasebandSignal {
    let mut rng = rng_from_seed(seed);
    let mut gauss = || {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    };
    let n = (seconds * FS) as usize;
    let a = (-PI * fwhm / FS).exp();
    let drive = (pedestal * (1.0 - a * a)).sqrt();
    let mut x = gauss() * pedestal.sqrt();
    let amp = line.sqrt();
    let noise = (n0 * FS).sqrt();
    let samples = (0..n)
        .map(|k| {
            x = x * a + gauss() * drive;
            let l = Complex64::from_polar(amp, 2.0 * PI * offset * k as f64 / FS + 0.4);
            l + x + gauss() * noise
        })
        .collect();
    BasebandSignal {
        sample_rate: FS,
        samples,
        start_time: 0.0,
        center: 0.0,
        carrier_hint: 0.0,
        passband: 280.0,
        guard: 0.0,
    }
}

fn spectrum(bb: &BasebandSignal) -> Spectrum {
    estimate_baseband_psd(bb, &WelchConfig::default()).unwrap()
}

#[test]
fn height_ratio_recovered_from_injected_line_and_lorentzian() {
    // weights for (171, 21) ms; A_L in the Lorentzian-filter peak convention
    let p: f64 = 0.171 / 0.192;
    let (line, ped, fwhm) = (p * p, p * (1.0 - p), 17.02);
    let mut ratios = Vec::new();
    for seed in 1..=3 {
        let spec = spectrum(&injected(3000.0, line, 0.31, ped, fwhm, 1e-4, seed));
        let fit = fit_pedestal(&spec, None).unwrap();
        let expect = (2.0 * ped / (PI * fwhm)) / (2.0 * line / (PI * spec.delta_r));
        ratios.push(fit.a_l_hat / expect);
        assert!((fit.delta_l_hat / fwhm - 1.0).abs() < 0.02, "width {}", fit.delta_l_hat);
        assert!((fit.line_power / line - 1.0).abs() < 0.01);
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    assert!((mean - 1.0).abs() < 0.02, "A_L ratios {ratios:?}");
}

#[test]
fn width_estimate_stable_when_averages_double() {
    let p: f64 = 0.171 / 0.192;
    let bb = injected(2400.0, p * p, 0.0, p * (1.0 - p), 17.02, 1e-3, 9);
    let half = BasebandSignal {
        samples: bb.samples[..bb.samples.len() / 2].to_vec(),
        ..bb.clone()
    };
    let (s1, s2) = (spectrum(&half), spectrum(&bb));
    assert!(s2.n_averages >= 2 * s1.n_averages - 1);
    let (a, b) = (fit_pedestal(&s1, None).unwrap(), fit_pedestal(&s2, None).unwrap());
    assert!((a.delta_l_hat / b.delta_l_hat - 1.0).abs() < 0.02, "{} vs {}", a.delta_l_hat, b.delta_l_hat);
}

fn line_fwhm(spec: &Spectrum) -> f64 {
    let k = spec.peak_index();
    let half = 0.5 * spec.psd[k];
    let cross = |dir: i64| {
        let mut i = k as i64;
        while spec.psd[(i + dir) as usize] > half {
            i += dir;
        }
        let (a, b) = (spec.psd[i as usize], spec.psd[(i + dir) as usize]);
        (i as f64 + dir as f64 * (a - half) / (a - b)) * spec.bin_width()
    };
    cross(1) - cross(-1)
}

fn bright_spectrum(walk: f64) -> Spectrum {
    let cfg = RunConfig::default();
    let mut het = cfg.heterodyne.params(3).unwrap();
    het.phase_walk_rate = walk;
    let traj = JumpTrajectory::constant(60.0, State::Bright).unwrap();
    let (bb, _) = stream_beat(&traj, &het, cfg.welch.plan(&het).unwrap(), false).unwrap();
    estimate_baseband_psd(&bb, &cfg.welch.welch()).unwrap()
}

#[test]
fn unbroadened_line_has_resolution_width() {
    let spec = bright_spectrum(0.0);
    let w = line_fwhm(&spec);
    assert!((w - spec.delta_r).abs() < spec.bin_width(), "{w} vs {}", spec.delta_r);
}

#[test]
fn phase_walk_broadens_line_monotonically() {
    let widths: Vec<f64> = [0.0, 5.0, 20.0, 80.0].iter().map(|&d| line_fwhm(&bright_spectrum(d))).collect();
    assert!(widths.windows(2).all(|w| w[1] > w[0]), "{widths:?}");
    // diffusion rate D gives a Lorentzian of FWHM D/(2π) before the window
    assert!((widths[3] / (80.0 / (2.0 * PI)) - 1.0).abs() < 0.15, "{widths:?}");
}

#[test]
fn pedestal_narrows_as_dark_time_grows() {
    let w: Vec<f64> = [(0.103, 0.008), (0.171, 0.021), (0.160, 0.039)]
        .iter()
        .map(|&(tb, td)| spectral_case(tb, td, 120.0, 4).unwrap().1.fit.delta_l_hat)
        .collect();
    assert!(w[0] > w[1] && w[1] > w[2], "{w:?}");
}
