//! Command-line front end: reproducible experiment commands with CSV/JSON
//! output, optional SVG plots, and a manifest alongside every output set.

use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::Vector6;
use num_complex::Complex;

use mosvar::config::{resolve_config, ConfigOverlay};
use mosvar::device_model::{energy_levels, exchange_estimate, solve_gate_time};
use mosvar::error::{Error, Result};
use mosvar::experiment_stats::{child_rng, run_experiment, summarize_shifts, ExperimentConfig};
use mosvar::noise_processes::{
    calibrate_overhauser_sigma, fid_coherence_mc, sample_rtn, NoiseRealization, OverhauserSample,
};
use mosvar::output::{
    cdf_csv, devices_csv, histogram_csv, levels_csv, shifts_csv, summary_json,
    svg_histogram_with_cdf, svg_polylines, trap_count_histogram_csv, traces_csv, write_atomic,
    RunManifest,
};
use mosvar::trajectory_engine::state_trace;
use mosvar::trap_ensemble::build_trap_set;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Parser, Debug)]
#[command(name = "mosvar", version, about = "Monte Carlo simulator for trap- and \
nuclear-noise-limited fidelity of silicon MOS two-qubit gates")]
struct Cli {
    /// TOML config file (defaults < file < flags).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed for all random streams.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "mosvar_out")]
    out: PathBuf,
    /// Worker thread cap; default uses all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Disable all noise (traps and nuclear fields).
    #[arg(long, global = true)]
    no_noise: bool,
    /// Data file format.
    #[arg(long, global = true, value_enum, default_value = "csv")]
    format: Format,
    /// Also emit SVG plots.
    #[arg(long, global = true)]
    svg: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Trap-count and interdot-shift statistics over a device ensemble.
    SampleTraps {
        #[arg(long)]
        devices: Option<usize>,
    },
    /// Fidelity distribution over a device ensemble.
    Run {
        #[arg(long)]
        gate: Option<String>,
        #[arg(long)]
        devices: Option<usize>,
        #[arg(long)]
        trajectories: Option<usize>,
    },
    /// Time traces of the right qubit's |+> probability for sampled devices.
    Trace {
        /// Number of overlaid device samples.
        #[arg(long, default_value_t = 10)]
        samples: usize,
        #[arg(long, default_value_t = 1.0)]
        dt_ns: f64,
    },
    /// Energy levels versus detuning.
    Levels {
        #[arg(long, default_value_t = 9000.0)]
        eps_min: f64,
        #[arg(long, default_value_t = 9990.0)]
        eps_max: f64,
        #[arg(long, default_value_t = 200)]
        points: usize,
    },
    /// Entangling gate time and its analytic seed.
    GateTime {
        #[arg(long)]
        tc_uev: Option<f64>,
    },
    /// Quasi-static nuclear field width and its Monte Carlo verification.
    Calibrate {
        #[arg(long)]
        t2star_us: Option<f64>,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // help/version requests are success, anything else is a config error
            if e.use_stderr() {
                eprintln!("{e}");
                std::process::exit(1);
            }
            print!("{e}");
            std::process::exit(0);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            std::process::exit(1);
        }
    }
    if let Err(e) = dispatch(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn base_overlay(cli: &Cli) -> ConfigOverlay {
    ConfigOverlay {
        seed: cli.seed,
        ..Default::default()
    }
}

fn load(cli: &Cli, overlay: ConfigOverlay) -> Result<ExperimentConfig> {
    let merged = base_overlay(cli).merge(overlay);
    let mut cfg = resolve_config(cli.config.as_deref(), merged)?;
    if cli.no_noise {
        cfg.sampling.density_per_cm2 = 0.0;
        cfg.overhauser_enabled = false;
    }
    Ok(cfg)
}

fn ensure_out(cli: &Cli) -> Result<()> {
    std::fs::create_dir_all(&cli.out)?;
    Ok(())
}

fn emit(
    cli: &Cli,
    manifest: &mut RunManifest,
    name_csv: &str,
    csv: &str,
    name_json: &str,
    json: Option<&str>,
) -> Result<()> {
    match cli.format {
        Format::Csv => {
            write_atomic(&cli.out.join(name_csv), csv)?;
            manifest.outputs.push(name_csv.to_string());
        }
        Format::Json => {
            if let Some(body) = json {
                write_atomic(&cli.out.join(name_json), body)?;
                manifest.outputs.push(name_json.to_string());
            } else {
                write_atomic(&cli.out.join(name_csv), csv)?;
                manifest.outputs.push(name_csv.to_string());
            }
        }
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    let start = Instant::now();
    match &cli.cmd {
        Cmd::SampleTraps { devices } => {
            let cfg = load(
                cli,
                ConfigOverlay {
                    devices: *devices,
                    ..Default::default()
                },
            )?;
            let dist = summarize_shifts(&cfg)?;
            ensure_out(cli)?;
            let mut manifest = RunManifest::new("sample-traps", cfg.master_seed);
            let json = summary_json(&cfg, &dist)?;
            emit(
                cli,
                &mut manifest,
                "shifts.csv",
                &shifts_csv(&dist),
                "shifts.json",
                Some(&json),
            )?;
            if cli.format == Format::Csv {
                write_atomic(
                    &cli.out.join("trap_counts.csv"),
                    &trap_count_histogram_csv(&dist.trap_counts),
                )?;
                manifest.outputs.push("trap_counts.csv".into());
                write_atomic(&cli.out.join("shift_histogram.csv"), &histogram_csv(&dist.histogram))?;
                manifest.outputs.push("shift_histogram.csv".into());
                write_atomic(&cli.out.join("summary.json"), &json)?;
                manifest.outputs.push("summary.json".into());
            }
            if cli.svg {
                let svg = svg_histogram_with_cdf(
                    &dist.histogram,
                    &dist.cumulative,
                    "interdot shift distribution (ueV)",
                );
                write_atomic(&cli.out.join("shifts.svg"), &svg)?;
                manifest.outputs.push("shifts.svg".into());
            }
            let zero = dist.trap_counts.iter().filter(|&&c| c == 0).count();
            println!(
                "devices: {}  zero-trap fraction: {:.4}  mean shift: {:.4} ueV",
                cfg.n_devices,
                zero as f64 / cfg.n_devices as f64,
                dist.summary.mean
            );
            finish(cli, manifest, start)
        }
        Cmd::Run {
            gate,
            devices,
            trajectories,
        } => {
            let cfg = load(
                cli,
                ConfigOverlay {
                    gate: gate.clone(),
                    devices: *devices,
                    trajectories: *trajectories,
                    ..Default::default()
                },
            )?;
            let result = run_experiment(&cfg)?;
            ensure_out(cli)?;
            let mut manifest = RunManifest::new("run", cfg.master_seed);
            let json = summary_json(&cfg, &result)?;
            emit(
                cli,
                &mut manifest,
                "devices.csv",
                &devices_csv(&result),
                "run.json",
                Some(&json),
            )?;
            if cli.format == Format::Csv {
                write_atomic(&cli.out.join("fidelity_histogram.csv"), &histogram_csv(&result.histogram))?;
                manifest.outputs.push("fidelity_histogram.csv".into());
                write_atomic(&cli.out.join("fidelity_cdf.csv"), &cdf_csv(&result.cumulative))?;
                manifest.outputs.push("fidelity_cdf.csv".into());
                write_atomic(&cli.out.join("summary.json"), &json)?;
                manifest.outputs.push("summary.json".into());
            }
            if cli.svg {
                let svg = svg_histogram_with_cdf(
                    &result.histogram,
                    &result.cumulative,
                    "gate fidelity distribution",
                );
                write_atomic(&cli.out.join("fidelity.svg"), &svg)?;
                manifest.outputs.push("fidelity.svg".into());
            }
            println!(
                "gate: {:?}  mean fidelity: {:.6}  25th percentile: {:.6}",
                cfg.gate, result.summary.mean, result.summary.p25
            );
            finish(cli, manifest, start)
        }
        Cmd::Trace { samples, dt_ns } => {
            let cfg = load(cli, ConfigOverlay::default())?;
            if *samples == 0 {
                return Err(Error::InvalidConfig("need at least one trace sample".into()));
            }
            let schedule = cfg.schedule()?;
            let duration = schedule.total_two_qubit_time();
            let mut initial = Vector6::zeros();
            let a = Complex::new(1.0 / std::f64::consts::SQRT_2, 0.0);
            initial[2] = a; // left qubit |1>, right qubit |+>
            initial[3] = a;
            let mut traces = Vec::with_capacity(*samples);
            for i in 0..*samples {
                let real = if cli.no_noise {
                    None
                } else {
                    let mut trap_rng = child_rng(cfg.master_seed, i as u64, 0, "traps");
                    let traps = build_trap_set(&cfg.sampling, &cfg.geometry, &mut trap_rng)?;
                    let mut rng = child_rng(cfg.master_seed, i as u64, 0, "traj");
                    let rtn = sample_rtn(traps.traps.len(), cfg.tau_rtn_ns, duration, &mut rng)?;
                    let sigma = calibrate_overhauser_sigma(cfg.t2_star_ns, cfg.device.gr)?;
                    let overhauser = if cfg.overhauser_enabled {
                        mosvar::noise_processes::sample_overhauser(sigma, &mut rng)?
                    } else {
                        OverhauserSample::default()
                    };
                    Some(NoiseRealization {
                        rtn,
                        overhauser,
                        shifts_uev: traps.detuning_shifts,
                        baseline_uev: 0.0,
                    })
                };
                traces.push(state_trace(&schedule, &cfg.device, real.as_ref(), &initial, *dt_ns)?);
                if cli.no_noise {
                    break; // all noise-free traces are identical
                }
            }
            ensure_out(cli)?;
            let mut manifest = RunManifest::new("trace", cfg.master_seed);
            let csv = traces_csv(&traces)?;
            write_atomic(&cli.out.join("trace.csv"), &csv)?;
            manifest.outputs.push("trace.csv".into());
            if cli.svg {
                let series: Vec<Vec<[f64; 2]>> = traces
                    .iter()
                    .map(|t| t.iter().map(|p| [p.t_ns, p.p_plus]).collect())
                    .collect();
                let svg = svg_polylines(&series, "P(|+>) of the right qubit vs time (ns)");
                write_atomic(&cli.out.join("trace.svg"), &svg)?;
                manifest.outputs.push("trace.svg".into());
            }
            println!(
                "traces: {}  duration: {:.2} ns  final P(+) of first trace: {:.4}",
                traces.len(),
                duration,
                traces[0].last().map(|p| p.p_plus).unwrap_or(f64::NAN)
            );
            finish(cli, manifest, start)
        }
        Cmd::Levels {
            eps_min,
            eps_max,
            points,
        } => {
            let cfg = load(cli, ConfigOverlay::default())?;
            if *points == 0 || eps_max < eps_min {
                return Err(Error::InvalidConfig(format!(
                    "bad sweep: [{eps_min}, {eps_max}] with {points} points"
                )));
            }
            let mut rows = Vec::with_capacity(*points);
            for k in 0..*points {
                let eps = if *points == 1 {
                    *eps_min
                } else {
                    eps_min + (eps_max - eps_min) * k as f64 / (*points as f64 - 1.0)
                };
                rows.push((eps, energy_levels(&cfg.device, eps)?));
            }
            ensure_out(cli)?;
            let mut manifest = RunManifest::new("levels", cfg.master_seed);
            write_atomic(&cli.out.join("levels.csv"), &levels_csv(&rows))?;
            manifest.outputs.push("levels.csv".into());
            if cli.svg {
                let series: Vec<Vec<[f64; 2]>> = (0..6)
                    .map(|j| rows.iter().map(|(e, w)| [*e, w[j]]).collect())
                    .collect();
                let svg = svg_polylines(&series, "energy levels (ueV) vs detuning (ueV)");
                write_atomic(&cli.out.join("levels.svg"), &svg)?;
                manifest.outputs.push("levels.svg".into());
            }
            println!("levels: {} rows over [{}, {}] ueV", rows.len(), eps_min, eps_max);
            finish(cli, manifest, start)
        }
        Cmd::GateTime { tc_uev } => {
            let cfg = load(
                cli,
                ConfigOverlay {
                    tc_uev: *tc_uev,
                    ..Default::default()
                },
            )?;
            let t = solve_gate_time(&cfg.device)?;
            let j = exchange_estimate(&cfg.device, cfg.device.epsilon_on_uev)?;
            let seed = std::f64::consts::PI * mosvar::constants::HBAR_UEV_NS / j;
            println!("t_gate: {t:.4} ns  analytic seed pi*hbar/J: {seed:.4} ns  J: {j:.6} ueV");
            ensure_out(cli)?;
            let manifest = RunManifest::new("gate-time", cfg.master_seed);
            finish(cli, manifest, start)
        }
        Cmd::Calibrate { t2star_us } => {
            let cfg = load(
                cli,
                ConfigOverlay {
                    t2star_us: *t2star_us,
                    ..Default::default()
                },
            )?;
            let g = cfg.device.gr;
            let sigma = calibrate_overhauser_sigma(cfg.t2_star_ns, g)?;
            let mut rng = child_rng(cfg.master_seed, 0, 0, "calibrate");
            let coherence = fid_coherence_mc(sigma, g, cfg.t2_star_ns, 10_000, &mut rng)?;
            let residual = (coherence - (-1.0f64).exp()).abs();
            println!(
                "sigma_B: {sigma:.6e} T  coherence at T2*: {coherence:.4}  |residual vs 1/e|: {residual:.4}"
            );
            ensure_out(cli)?;
            let manifest = RunManifest::new("calibrate", cfg.master_seed);
            finish(cli, manifest, start)
        }
    }
}

fn finish(cli: &Cli, mut manifest: RunManifest, start: Instant) -> Result<()> {
    manifest.wall_time_s = start.elapsed().as_secs_f64();
    manifest.write(&cli.out)?;
    Ok(())
}
