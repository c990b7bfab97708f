//! On-disk formats for stage outputs.
//!
//! Text formats carry a single `#` header line of `key=value` pairs
//! followed by a column-name line and data rows. Parse errors name the file
//! and the 1-based line.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::dsp::WindowKind;
use crate::error::{Error, Result};
use crate::heterodyne::SampledSignal;
use crate::jump_stats::{DurationHistogram, Period, PeriodList};
use crate::photon::{CountTrace, IntensityTrace};
use crate::spectral::{BasebandSignal, Spectrum};
use crate::telegraph::{JumpTrajectory, State};

pub const SIGNAL_MAGIC: &[u8; 8] = b"JSPSIG01";
pub const BASEBAND_MAGIC: &[u8; 8] = b"JSPBB001";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

fn name(path: &Path) -> String {
    path.display().to_string()
}

fn float(path: &Path, line: usize, s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::parse(name(path), line, format!("not a number: {:?}", s.trim())))
}

/// Header pairs, column line check, and numbered data rows.
struct Table {
    header: Vec<(String, String)>,
    rows: Vec<(usize, Vec<String>)>,
}

impl Table {
    fn read(path: &Path, columns: &[&str]) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (n, first) = lines
            .next()
            .ok_or_else(|| Error::parse(name(path), 1, "empty file"))?;
        let Some(h) = first.strip_prefix('#') else {
            return Err(Error::parse(name(path), n, "expected a '#' header line"));
        };
        let mut header = Vec::new();
        for tok in h.split_whitespace() {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| Error::parse(name(path), n, format!("malformed header entry {tok:?}")))?;
            header.push((k.to_string(), v.to_string()));
        }
        let (n, cols) = lines
            .next()
            .ok_or_else(|| Error::parse(name(path), 2, "missing column line"))?;
        let got: Vec<&str> = cols.split(',').map(str::trim).collect();
        if got != columns {
            return Err(Error::parse(
                name(path),
                n,
                format!("expected columns {}, found {cols:?}", columns.join(",")),
            ));
        }
        let mut rows = Vec::new();
        for (n, l) in lines {
            if l.trim().is_empty() {
                continue;
            }
            let f: Vec<String> = l.split(',').map(|s| s.trim().to_string()).collect();
            if f.len() != columns.len() {
                return Err(Error::parse(
                    name(path),
                    n,
                    format!("expected {} fields, found {}", columns.len(), f.len()),
                ));
            }
            rows.push((n, f));
        }
        Ok(Self { header, rows })
    }

    fn get(&self, path: &Path, key: &str) -> Result<&str> {
        self.header
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::parse(name(path), 1, format!("header lacks {key}")))
    }

    fn get_f64(&self, path: &Path, key: &str) -> Result<f64> {
        float(path, 1, self.get(path, key)?)
    }
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path)?))
}

// ---- trajectory ----

pub fn write_trajectory(path: &Path, traj: &JumpTrajectory) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "{:.14e} {}", traj.duration(), traj.initial_state().as_str())?;
    for t in traj.switch_times() {
        writeln!(w, "{t:.14e}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectory(path: &Path) -> Result<JumpTrajectory> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (n, head) = lines
        .next()
        .ok_or_else(|| Error::parse(name(path), 1, "empty trajectory file"))?;
    let mut it = head.split_whitespace();
    let (Some(d), Some(s), None) = (it.next(), it.next(), it.next()) else {
        return Err(Error::parse(name(path), n, "expected `duration_s initial_state`"));
    };
    let duration = float(path, n, d)?;
    let state: State = s
        .parse()
        .map_err(|_| Error::parse(name(path), n, format!("unknown state {s:?}")))?;
    let mut times = Vec::new();
    for (n, l) in lines {
        if !l.trim().is_empty() {
            times.push(float(path, n, l)?);
        }
    }
    JumpTrajectory::new(duration, state, times)
        .map_err(|e| Error::parse(name(path), 1, e.to_string()))
}

// ---- count and intensity traces ----

pub fn write_counts(path: &Path, c: &CountTrace) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "# kind=counts bin_width_s={:e} origin_s={:e}", c.bin_width, c.origin_time)?;
    writeln!(w, "time_s,value")?;
    for (i, k) in c.counts.iter().enumerate() {
        writeln!(w, "{:.9e},{k}", c.origin_time + i as f64 * c.bin_width)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_counts(path: &Path) -> Result<CountTrace> {
    let t = Table::read(path, &["time_s", "value"])?;
    let bin_width = t.get_f64(path, "bin_width_s")?;
    let origin_time = t.get_f64(path, "origin_s")?;
    let counts = t
        .rows
        .iter()
        .map(|(n, f)| {
            f[1].parse::<u64>()
                .map_err(|_| Error::parse(name(path), *n, format!("not a count: {:?}", f[1])))
        })
        .collect::<Result<_>>()?;
    Ok(CountTrace {
        bin_width,
        counts,
        origin_time,
    })
}

pub fn write_intensity(path: &Path, tr: &IntensityTrace) -> Result<()> {
    let mut w = create(path)?;
    writeln!(
        w,
        "# kind=intensity sample_period_s={:e} origin_s={:e}",
        tr.sample_period, tr.origin_time
    )?;
    writeln!(w, "time_s,value")?;
    for (i, v) in tr.values.iter().enumerate() {
        writeln!(w, "{:.9e},{v:.9e}", tr.time(i))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_intensity(path: &Path) -> Result<IntensityTrace> {
    let t = Table::read(path, &["time_s", "value"])?;
    let sample_period = t.get_f64(path, "sample_period_s")?;
    let origin_time = t.get_f64(path, "origin_s")?;
    let values = t
        .rows
        .iter()
        .map(|(n, f)| float(path, *n, &f[1]))
        .collect::<Result<_>>()?;
    Ok(IntensityTrace {
        sample_period,
        values,
        origin_time,
    })
}

// ---- sampled signals ----

fn read_f64_le(b: &[u8]) -> f64 {
    f64::from_le_bytes(b.try_into().expect("8 bytes"))
}

pub fn write_signal(path: &Path, s: &SampledSignal) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(SIGNAL_MAGIC)?;
    w.write_all(&s.sample_rate.to_le_bytes())?;
    for x in &s.samples {
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_signal_csv(path: &Path, s: &SampledSignal) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "# kind=signal sample_rate_hz={:e}", s.sample_rate)?;
    writeln!(w, "time_s,value")?;
    for (i, x) in s.samples.iter().enumerate() {
        writeln!(w, "{:.12e},{x:.12e}", i as f64 / s.sample_rate)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads either the binary record or the CSV fallback; `carrier_hint` is
/// not stored in the file.
pub fn read_signal(path: &Path, carrier_hint: f64) -> Result<SampledSignal> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(SIGNAL_MAGIC) {
        if bytes.len() < 16 || (bytes.len() - 16) % 8 != 0 {
            return Err(Error::parse(name(path), 1, "truncated binary signal record"));
        }
        let rate = read_f64_le(&bytes[8..16]);
        let samples = bytes[16..].chunks_exact(8).map(read_f64_le).collect();
        return SampledSignal::new(rate, samples, carrier_hint);
    }
    let t = Table::read(path, &["time_s", "value"])?;
    let rate = t.get_f64(path, "sample_rate_hz")?;
    let samples = t
        .rows
        .iter()
        .map(|(n, f)| float(path, *n, &f[1]))
        .collect::<Result<_>>()?;
    SampledSignal::new(rate, samples, carrier_hint)
}

pub fn write_baseband(path: &Path, bb: &BasebandSignal) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(BASEBAND_MAGIC)?;
    for v in [
        bb.sample_rate,
        bb.start_time,
        bb.center,
        bb.carrier_hint,
        bb.passband,
        bb.guard,
    ] {
        w.write_all(&v.to_le_bytes())?;
    }
    for z in &bb.samples {
        w.write_all(&z.re.to_le_bytes())?;
        w.write_all(&z.im.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_baseband(path: &Path) -> Result<BasebandSignal> {
    let bytes = fs::read(path)?;
    const HEAD: usize = 8 + 6 * 8;
    if !bytes.starts_with(BASEBAND_MAGIC) {
        return Err(Error::parse(name(path), 1, "not a baseband record"));
    }
    if bytes.len() < HEAD || !(bytes.len() - HEAD).is_multiple_of(16) {
        return Err(Error::parse(name(path), 1, "truncated baseband record"));
    }
    let h: Vec<f64> = bytes[8..HEAD].chunks_exact(8).map(read_f64_le).collect();
    let samples = bytes[HEAD..]
        .chunks_exact(16)
        .map(|c| Complex64::new(read_f64_le(&c[..8]), read_f64_le(&c[8..])))
        .collect();
    Ok(BasebandSignal {
        sample_rate: h[0],
        start_time: h[1],
        center: h[2],
        carrier_hint: h[3],
        passband: h[4],
        guard: h[5],
        samples,
    })
}

// ---- spectra ----

pub fn write_spectrum(path: &Path, s: &Spectrum) -> Result<()> {
    let mut w = create(path)?;
    writeln!(
        w,
        "# delta_R={:.12e} enbw={:.12e} n_averages={} window={} segment_length={} sample_rate={:.12e}",
        s.delta_r,
        s.enbw,
        s.n_averages,
        s.window.as_str(),
        s.segment_length,
        s.sample_rate
    )?;
    writeln!(w, "offset_Hz,psd")?;
    for (f, p) in s.freq_offsets.iter().zip(&s.psd) {
        writeln!(w, "{f:.12e},{p:.12e}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_spectrum(path: &Path) -> Result<Spectrum> {
    let t = Table::read(path, &["offset_Hz", "psd"])?;
    let window: WindowKind = t
        .get(path, "window")?
        .parse()
        .map_err(|_| Error::parse(name(path), 1, "unknown window"))?;
    let int = |key: &str| -> Result<usize> {
        t.get(path, key)?
            .parse()
            .map_err(|_| Error::parse(name(path), 1, format!("{key} is not an integer")))
    };
    let mut freq_offsets = Vec::with_capacity(t.rows.len());
    let mut psd = Vec::with_capacity(t.rows.len());
    for (n, f) in &t.rows {
        freq_offsets.push(float(path, *n, &f[0])?);
        psd.push(float(path, *n, &f[1])?);
    }
    Ok(Spectrum {
        freq_offsets,
        psd,
        delta_r: t.get_f64(path, "delta_R")?,
        enbw: t.get_f64(path, "enbw")?,
        n_averages: int("n_averages")?,
        window,
        segment_length: int("segment_length")?,
        sample_rate: t.get_f64(path, "sample_rate")?,
    })
}

// ---- periods and histograms ----

pub fn write_periods(path: &Path, p: &PeriodList) -> Result<()> {
    let mut w = create(path)?;
    writeln!(
        w,
        "# trace_duration_s={:.12e} jumps_detected={} dark_level={:.9e} bright_level={:.9e}",
        p.trace_duration, p.jumps_detected, p.dark_level, p.bright_level
    )?;
    writeln!(w, "state,start_s,duration_s")?;
    for q in &p.periods {
        writeln!(w, "{},{:.12e},{:.12e}", q.state.as_str(), q.start, q.duration)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_periods(path: &Path) -> Result<PeriodList> {
    let t = Table::read(path, &["state", "start_s", "duration_s"])?;
    let periods = t
        .rows
        .iter()
        .map(|(n, f)| {
            Ok(Period {
                state: f[0]
                    .parse()
                    .map_err(|_| Error::parse(name(path), *n, format!("unknown state {:?}", f[0])))?,
                start: float(path, *n, &f[1])?,
                duration: float(path, *n, &f[2])?,
            })
        })
        .collect::<Result<_>>()?;
    let list = PeriodList {
        periods,
        trace_duration: t.get_f64(path, "trace_duration_s")?,
        jumps_detected: t.get(path, "jumps_detected")? == "true",
        dark_level: t.get_f64(path, "dark_level")?,
        bright_level: t.get_f64(path, "bright_level")?,
    };
    list.validate()
        .map_err(|e| Error::parse(name(path), 3, e.to_string()))?;
    Ok(list)
}

pub fn write_histogram(path: &Path, h: &DurationHistogram) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "# state={} t_min_s={:e}", h.state.as_str(), h.t_min)?;
    writeln!(w, "left_s,right_s,count")?;
    for (e, c) in h.bin_edges.windows(2).zip(&h.counts) {
        writeln!(w, "{:.9e},{:.9e},{c}", e[0], e[1])?;
    }
    w.flush()?;
    Ok(())
}

// ---- JSON ----

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::parse(name(path), e.line(), e.to_string()))
}
