//! Windows, Kaiser FIR design and a streaming decimating FIR.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    #[default]
    Hann,
    Rectangular,
}

impl WindowKind {
    pub fn as_str(self) -> &'static str {
        match self {
            WindowKind::Hann => "hann",
            WindowKind::Rectangular => "rectangular",
        }
    }

    /// Periodic (DFT-even) window coefficients.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            WindowKind::Rectangular => vec![1.0; n],
            WindowKind::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
                .collect(),
        }
    }

    /// Fourier transform of the length-`n` window at normalized angular
    /// frequency `theta` (radians per sample).
    pub fn transform(self, n: usize, theta: f64) -> Complex64 {
        match self {
            WindowKind::Rectangular => dirichlet(n, theta),
            WindowKind::Hann => {
                let step = 2.0 * PI / n as f64;
                dirichlet(n, theta) * 0.5
                    - dirichlet(n, theta - step) * 0.25
                    - dirichlet(n, theta + step) * 0.25
            }
        }
    }

    /// Power response `|W(θ)|²/|W(0)|²`, peak-normalized.
    pub fn power_response(self, n: usize, theta: f64) -> f64 {
        let w0 = self.transform(n, 0.0).norm_sqr();
        self.transform(n, theta).norm_sqr() / w0
    }

    /// FWHM of the power response in DFT bins.
    pub fn fwhm_bins(self, n: usize) -> f64 {
        let bin = 2.0 * PI / n as f64;
        let (mut lo, mut hi) = (0.0, 2.0);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if self.power_response(n, mid * bin) > 0.5 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo + hi
    }

    /// Equivalent noise bandwidth in bins, `N Σw² / (Σw)²`.
    pub fn enbw_bins(self, n: usize) -> f64 {
        let w = self.coefficients(n);
        let s1: f64 = w.iter().sum();
        let s2: f64 = w.iter().map(|x| x * x).sum();
        n as f64 * s2 / (s1 * s1)
    }
}

impl std::str::FromStr for WindowKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "hann" => Ok(WindowKind::Hann),
            "rectangular" => Ok(WindowKind::Rectangular),
            other => Err(crate::Error::invalid(format!("unknown window `{other}`"))),
        }
    }
}

/// `Σ_{k<n} exp(−iθk)`.
pub fn dirichlet(n: usize, theta: f64) -> Complex64 {
    let nf = n as f64;
    let half = 0.5 * theta;
    let s = half.sin();
    let phase = Complex64::from_polar(1.0, -half * (nf - 1.0));
    if s.abs() < 1e-12 {
        // θ ≈ 2πm: every term is (−1)^{...}; evaluate the limit directly
        let m = (theta / (2.0 * PI)).round();
        let sign = if (m as i64).rem_euclid(2) == 0 || n % 2 == 1 {
            1.0
        } else {
            -1.0
        };
        return phase * (nf * sign);
    }
    phase * ((nf * half).sin() / s)
}

pub fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = 0.25 * x * x;
    for k in 1..500 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Kaiser β for a stopband attenuation of `atten_db`.
pub fn kaiser_beta(atten_db: f64) -> f64 {
    if atten_db > 50.0 {
        0.1102 * (atten_db - 8.7)
    } else if atten_db >= 21.0 {
        0.5842 * (atten_db - 21.0).powf(0.4) + 0.07886 * (atten_db - 21.0)
    } else {
        0.0
    }
}

/// Odd tap count meeting `atten_db` over a transition of `transition` Hz.
pub fn kaiser_length(atten_db: f64, transition: f64, sample_rate: f64) -> usize {
    let dw = 2.0 * PI * transition / sample_rate;
    let n = ((atten_db - 8.0) / (2.285 * dw)).ceil() as usize + 1;
    n | 1
}

/// Windowed-sinc low-pass with unity DC gain.
pub fn kaiser_lowpass(cutoff: f64, sample_rate: f64, n_taps: usize, beta: f64) -> Vec<f64> {
    let m = (n_taps - 1) as f64 / 2.0;
    let fc = cutoff / sample_rate;
    let i0b = bessel_i0(beta);
    let mut h: Vec<f64> = (0..n_taps)
        .map(|i| {
            let x = i as f64 - m;
            let sinc = if x == 0.0 {
                2.0 * fc
            } else {
                (2.0 * PI * fc * x).sin() / (PI * x)
            };
            let r = x / m.max(1.0);
            let w = bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / i0b;
            sinc * w
        })
        .collect();
    let sum: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= sum);
    h
}

/// Streaming decimating FIR with zero-phase (centered) alignment.
///
/// Output `j` is the filter centered on input index `first + j·factor`, and
/// only outputs whose full support lies inside the input are produced, so no
/// edge padding leaks into the result.
#[derive(Clone, Debug)]
pub struct FirDecimator {
    taps: Vec<f64>,
    factor: usize,
    half: usize,
    buf_re: Vec<f64>,
    buf_im: Vec<f64>,
    /// Absolute input index of `buf[0]`.
    buf_origin: usize,
    /// Absolute input index of the next output center.
    next_center: usize,
}

impl FirDecimator {
    pub fn new(taps: Vec<f64>, factor: usize) -> Self {
        assert!(taps.len() % 2 == 1, "FIR length must be odd");
        assert!(factor >= 1);
        let half = taps.len() / 2;
        let first = half.div_ceil(factor) * factor;
        Self {
            taps,
            factor,
            half,
            buf_re: Vec::new(),
            buf_im: Vec::new(),
            buf_origin: 0,
            next_center: first,
        }
    }

    /// Input index on which the first output is centered.
    pub fn first_center(&self) -> usize {
        self.half.div_ceil(self.factor) * self.factor
    }

    pub fn factor(&self) -> usize {
        self.factor
    }

    pub fn half_length(&self) -> usize {
        self.half
    }

    pub fn push(&mut self, input: &[Complex64], out: &mut Vec<Complex64>) {
        self.buf_re.extend(input.iter().map(|z| z.re));
        self.buf_im.extend(input.iter().map(|z| z.im));
        let end = self.buf_origin + self.buf_re.len();
        while self.next_center + self.half < end {
            let lo = self.next_center - self.half - self.buf_origin;
            let re = &self.buf_re[lo..lo + self.taps.len()];
            let im = &self.buf_im[lo..lo + self.taps.len()];
            let (mut ar, mut ai) = (0.0, 0.0);
            for ((h, r), i) in self.taps.iter().zip(re).zip(im) {
                ar += h * r;
                ai += h * i;
            }
            out.push(Complex64::new(ar, ai));
            self.next_center += self.factor;
        }
        let keep_from = self.next_center - self.half;
        if keep_from > self.buf_origin {
            let drop = (keep_from - self.buf_origin).min(self.buf_re.len());
            self.buf_re.drain(..drop);
            self.buf_im.drain(..drop);
            self.buf_origin += drop;
        }
    }
}
