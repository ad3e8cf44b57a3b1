use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rismec_core::control_plane::compute_timing;
use rismec_core::engine::{
    aggregate, run_to_dir, sweep, sweep_points, write_aggregate, write_summary, Simulator,
    SweepAxis,
};
use rismec_core::ra::{calibrate_v, CalibrationSearch};
use rismec_core::{ScenarioConfig, SimError};

#[derive(Parser)]
#[command(name = "rismec", version, about = "RIS-aided MEC slot simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// key = value config file; unset keys take the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. --set slot_ms=120. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Perfect CSI, no packet loss, no rate backoff.
    #[arg(long)]
    error_free: bool,
}

impl ConfigArgs {
    fn load(&self) -> Result<ScenarioConfig, SimError> {
        let mut cfg = match &self.config {
            Some(p) => ScenarioConfig::load_file(p)?,
            None => ScenarioConfig::load("")?,
        };
        for o in &self.overrides {
            let (k, v) = o.split_once('=').ok_or_else(|| SimError::Parse {
                line: 0,
                text: o.clone(),
                reason: "--set expects KEY=VALUE".into(),
            })?;
            cfg.set(k.trim(), v.trim())?;
        }
        if self.error_free {
            cfg = cfg.error_free();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one seed and write trace.csv and summary.csv.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Also write every channel realization to channels.csv.
        #[arg(long)]
        dump_channels: bool,
    },
    /// Run a grid of configurations over several seeds.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        /// tau, perr:TYPE (TYPE one of INI-U, INI-R, SET-U, SET-R) or ce.
        #[arg(long)]
        axis: SweepAxis,
        /// Comma list or start:step:end. Slot lengths in ms for tau.
        #[arg(long)]
        values: String,
        /// Rate backoff values crossed with the ce axis.
        #[arg(long)]
        mu: Option<String>,
        #[arg(long, default_value_t = 10)]
        seeds: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Largest V meeting the latency bound in error-free mode.
    Calibrate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value_t = 20)]
        seeds: usize,
        #[arg(long, default_value_t = 0.02)]
        rel_tol: f64,
    },
    /// Print the control overhead split of one slot.
    Timing {
        #[command(flatten)]
        config: ConfigArgs,
    },
}

fn parse_values(s: &str) -> Result<Vec<f64>, String> {
    let num = |t: &str| {
        t.trim()
            .parse::<f64>()
            .map_err(|e| format!("bad number `{t}`: {e}"))
    };
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [a, step, b] => {
            let (a, step, b) = (num(a)?, num(step)?, num(b)?);
            if step <= 0.0 || b < a {
                return Err(format!("empty range `{s}`"));
            }
            let n = ((b - a) / step + 1e-9).floor() as usize;
            Ok((0..=n).map(|i| a + step * i as f64).collect())
        }
        [_] => s.split(',').map(num).collect(),
        _ => Err(format!("expected a list or start:step:end, got `{s}`")),
    }
}

fn run(cfg: ScenarioConfig, seed: Option<u64>, out: &Path, dump: bool) -> Result<(), SimError> {
    let seed = seed.unwrap_or(cfg.seed);
    let sim = Simulator::new(cfg)?;
    let o = run_to_dir(&sim, seed, out, dump)?;
    let s = &o.summary;
    println!(
        "seed {seed}: mean energy {:.4e} J/slot, max latency {}, gated slots {}",
        s.mean_energy,
        s.max_final_latency
            .map_or("undefined".into(), |l| format!("{l:.4} s")),
        s.gated_slots
    );
    Ok(())
}

fn run_sweep(
    cfg: ScenarioConfig,
    axis: SweepAxis,
    values: &str,
    mu: Option<&str>,
    seeds: usize,
    out: &Path,
) -> Result<(), String> {
    let mut values = parse_values(values)?;
    if axis == SweepAxis::Tau {
        values.iter_mut().for_each(|v| *v *= 1e-3);
    }
    let mus = mu.map(parse_values).transpose()?.unwrap_or_default();
    let points = sweep_points(&cfg, axis, &values, &mus);
    let rows = sweep(&points, seeds);
    let agg = aggregate(&rows);

    let mut meta = Simulator::new(cfg.clone())
        .map(|s| s.metadata(cfg.seed))
        .unwrap_or_else(|_| cfg.metadata());
    meta.push(("axis".into(), axis.name()));
    meta.push(("seeds".into(), seeds.to_string()));
    std::fs::create_dir_all(out).map_err(|e| e.to_string())?;
    write_summary(&out.join("summary.csv"), &meta, &rows).map_err(|e| e.to_string())?;
    write_aggregate(&out.join("aggregate.csv"), &meta, &agg).map_err(|e| e.to_string())?;

    for r in &agg {
        match &r.error {
            Some(e) if r.runs == 0 => println!("{} = {}: failed ({e})", axis.name(), r.value),
            _ => println!(
                "{} = {} mu = {}: energy {:.4e} J, latency {}, violations {:.0}%",
                axis.name(),
                r.value,
                r.mu,
                r.mean_energy,
                r.max_final_latency
                    .map_or("undefined".into(), |l| format!("{l:.4} s")),
                r.violation_rate * 100.0
            ),
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result: Result<(), String> = match cli.command {
        Command::Run {
            config,
            seed,
            out,
            dump_channels,
        } => config
            .load()
            .and_then(|cfg| run(cfg, seed, &out, dump_channels))
            .map_err(|e| e.to_string()),
        Command::Sweep {
            config,
            axis,
            values,
            mu,
            seeds,
            out,
        } => config
            .load()
            .map_err(|e| e.to_string())
            .and_then(|cfg| run_sweep(cfg, axis, &values, mu.as_deref(), seeds, &out)),
        Command::Calibrate {
            config,
            seeds,
            rel_tol,
        } => config
            .load()
            .and_then(|cfg| {
                let search = CalibrationSearch {
                    seeds,
                    rel_tol,
                    ..CalibrationSearch::default()
                };
                let c = calibrate_v(&cfg, &search)?;
                for (v, l) in &c.probes {
                    println!("V = {v:.4e}: latency {l:.4} s");
                }
                println!(
                    "V = {:.6e} (latency {:.4} s, feasible {}, saturated {}, non-monotone pairs {})",
                    c.v,
                    c.latency,
                    c.feasible,
                    c.saturated,
                    c.monotonicity_violations.len()
                );
                Ok(())
            })
            .map_err(|e| e.to_string()),
        Command::Timing { config } => config
            .load()
            .and_then(|cfg| {
                let t = compute_timing(&cfg)?;
                for (name, v) in [
                    ("tau", t.tau),
                    ("tau_ini", t.tau_ini),
                    ("tau_ce", t.tau_ce),
                    ("tau_ra", t.tau_ra),
                    ("tau_set", t.tau_set),
                    ("tau_ctl", t.tau_ctl),
                    ("tau_pay", t.tau_pay),
                ] {
                    println!("{name:8} {:10.4} ms", v * 1e3);
                }
                Ok(())
            })
            .map_err(|e| e.to_string()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
