use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use jumpspec::pipeline::verify::SUITES;
use jumpspec::pipeline::{cmd_analyze, cmd_predict, cmd_simulate, run_suite, RunConfig, RunManifest};
use jumpspec::Error;

/// Quantum-jump gated fluorescence: predict, simulate and analyze the
/// line + pedestal spectrum and the dwell-time statistics.
#[derive(Parser)]
#[command(name = "jumpspec", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form pedestal width and height ratio.
    Predict(Common),
    /// Simulate trajectory, photon counts and heterodyne beat.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Also write the full-rate beat record.
        #[arg(long)]
        write_signal: bool,
    },
    /// Analyze a simulation directory.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Directory with the simulation outputs (defaults to --out).
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Run an acceptance suite.
    Verify {
        /// fig4, oracle, no-jump, fig3, bright-only, rate-model, properties or all.
        suite: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Length of the spectral records, s.
        #[arg(long, default_value_t = 600.0)]
        duration: f64,
        /// Write verify_report.json here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in parameter set: fig3, fig4b, fig4c, fig4d or no-jump.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Machine-readable output on stdout.
    #[arg(long)]
    json: bool,
    /// Mean bright period, s.
    #[arg(long)]
    tau_bright: Option<f64>,
    /// Mean dark period, s.
    #[arg(long, conflicts_with = "repump_power")]
    tau_dark: Option<f64>,
    /// Repump power, mW; the dark period then follows the rate model.
    #[arg(long)]
    repump_power: Option<f64>,
    /// Record length, s.
    #[arg(long)]
    duration: Option<f64>,
}

enum Failure {
    Usage(String),
    Run(Error),
    Checks,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

/// Defaults, then preset or config file, then flags.
fn resolve(c: &Common, need_taus: bool) -> Result<RunConfig, Failure> {
    let mut cfg = match (&c.config, &c.preset) {
        (Some(p), _) => RunConfig::load(p)?,
        (None, Some(name)) => RunConfig::preset(name).map_err(|e| Failure::Usage(e.to_string()))?,
        (None, None) => RunConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.run.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.run.out = Some(o.clone());
    }
    if let Some(t) = c.tau_bright {
        cfg.telegraph.tau_bright = Some(t);
    }
    if let Some(t) = c.tau_dark {
        cfg.telegraph.tau_dark = Some(t);
        cfg.telegraph.repump_power_mw = None;
    }
    if let Some(p) = c.repump_power {
        cfg.telegraph.repump_power_mw = Some(p);
        cfg.telegraph.tau_dark = None;
    }
    if let Some(d) = c.duration {
        cfg.run.duration = d;
    }
    if need_taus {
        cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    }
    Ok(cfg)
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf, Failure> {
    cfg.run
        .out
        .clone()
        .ok_or_else(|| Failure::Usage("an output directory is required (--out or run.out)".into()))
}

fn print_json<T: serde::Serialize>(v: &T) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn print_manifest_summary(m: &RunManifest, dir: &Path) {
    println!("outputs in {}:", dir.display());
    for o in &m.outputs {
        println!("  {:<26} {:>12} bytes  sha256 {}", o.path, o.bytes, &o.sha256[..16]);
    }
    if let Some(f) = &m.pedestal_fit {
        println!("fit:");
        println!(
            "  delta_L_hat  = {:.4} ± {:.4} Hz{}",
            f.delta_l_hat,
            f.uncertainties.delta_l,
            if f.delta_l_fixed { " (held)" } else { "" }
        );
        println!("  A_L_hat      = {:.4e} ± {:.2e}", f.a_l_hat, f.uncertainties.a_l);
        println!(
            "  weight ratio = {:.4} ± {:.4} (upper {:.4})",
            f.weight_ratio_hat, f.uncertainties.weight_ratio, f.weight_ratio_upper
        );
        println!("  delta_R      = {:.4} Hz, ENBW {:.4} Hz", f.delta_r, f.enbw);
    }
    if let Some(j) = &m.jump_stats {
        if let (Some(t), Some(s)) = (j.tau_dark_hat, j.tau_dark_sigma) {
            println!("dark periods: tau = {:.2} ± {:.2} ms (n = {})", t * 1e3, s * 1e3, j.n_dark);
        }
        if let (Some(t), Some(s)) = (j.tau_bright_hat, j.tau_bright_sigma) {
            println!("bright periods: tau = {:.2} ± {:.2} ms (n = {})", t * 1e3, s * 1e3, j.n_bright);
        }
    }
    if !m.checks.is_empty() {
        println!("checks:");
        for c in &m.checks {
            println!(
                "  {:<62} {:>12.5e} vs {:>12.5e}  {}",
                c.name,
                c.measured,
                c.target,
                if c.passed { "PASS" } else { "FAIL" }
            );
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Predict(c) => {
            let cfg = resolve(&c, true)?;
            let p = cmd_predict(&cfg)?;
            for w in &p.warnings {
                eprintln!("warning: {w}");
            }
            if let Some(dir) = &cfg.run.out {
                std::fs::create_dir_all(dir).map_err(Error::from)?;
                jumpspec::formats::write_json(&dir.join("prediction.json"), &p.prediction)?;
            }
            if c.json {
                print_json(&p.prediction);
            } else {
                let s = &p.prediction;
                println!("tau_bright   = {:.4} s", p.params.tau_bright());
                println!("tau_dark     = {:.4} s", p.params.tau_dark());
                println!("delta_L      = {:.4} Hz", s.delta_l);
                println!("A_L          = {:.4e} (delta_R = {:.4} Hz)", s.a_l, s.delta_r);
                println!("duty cycle p = {:.4}", s.p);
                println!("line weight  = {:.4}", s.line_weight);
                println!("pedestal wt  = {:.4}", s.pedestal_weight);
                println!("weight ratio = {:.4}", s.weight_ratio());
            }
            Ok(())
        }
        Command::Simulate { common, write_signal } => {
            let mut cfg = resolve(&common, true)?;
            cfg.run.write_signal |= write_signal;
            let dir = out_dir(&cfg)?;
            let (m, _) = cmd_simulate(&cfg, &dir)?;
            for w in &m.warnings {
                eprintln!("warning: {w}");
            }
            if common.json {
                print_json(&m);
            } else {
                print_manifest_summary(&m, &dir);
            }
            Ok(())
        }
        Command::Analyze { common, input } => {
            let explicit = common.config.is_some()
                || common.preset.is_some()
                || common.tau_bright.is_some()
                || common.tau_dark.is_some()
                || common.repump_power.is_some();
            let cfg = resolve(&common, explicit)?;
            let dir = out_dir(&cfg)?;
            let input = input.unwrap_or_else(|| dir.clone());
            let (m, _) = cmd_analyze(explicit.then_some(&cfg), &input, &dir)?;
            for w in &m.warnings {
                eprintln!("warning: {w}");
            }
            if common.json {
                print_json(&m);
            } else {
                print_manifest_summary(&m, &dir);
            }
            if m.all_passed() {
                Ok(())
            } else {
                Err(Failure::Checks)
            }
        }
        Command::Verify {
            suite,
            seed,
            duration,
            out,
            json,
        } => {
            if !SUITES.contains(&suite.as_str()) {
                return Err(Failure::Usage(format!(
                    "unknown suite `{suite}` (expected one of {})",
                    SUITES.join(", ")
                )));
            }
            if !(duration > 0.0) {
                return Err(Failure::Usage("--duration must be > 0".into()));
            }
            let report = run_suite(&suite, seed, duration)?;
            if let Some(dir) = &out {
                std::fs::create_dir_all(dir).map_err(Error::from)?;
                jumpspec::formats::write_json(&dir.join("verify_report.json"), &report)?;
            }
            if json {
                print_json(&report);
            } else {
                print!("{}", report.table());
            }
            if report.passed {
                Ok(())
            } else {
                Err(Failure::Checks)
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Checks) => {
            eprintln!("one or more checks failed");
            ExitCode::from(3)
        }
    }
}
