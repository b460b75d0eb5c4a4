use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use fbtransfer_core::harness::{self, Format};
use fbtransfer_core::oracle::{fold_frequency, TrajectoryConfig};
use fbtransfer_core::phasespace::{default_grid, min_wigner};
use fbtransfer_core::{
    derive, estimate_psd, fidelity, gains_analytic, gains_numeric, gridio, noise, run_sweep,
    sample_variance, simulate_ensemble, transfer_wigner, validate, wigner_state, DerivedParams,
    GainHandling, StateSpec, SweepSpec, SystemConfig,
};
use num_complex::Complex64;
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "fbtransfer",
    version,
    about = "Feedback-based optical-to-mechanical state transfer"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// System configuration (JSON); the canonical parameters when omitted
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    #[arg(long, global = true, value_enum, default_value_t = OutFormat::Csv)]
    format: OutFormat,

    /// Random seed for the oracle; recorded in every report
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads
    #[arg(long, global = true, env = "FBTRANSFER_THREADS")]
    threads: Option<usize>,

    /// Convolve unscaled target states instead of gain-rescaled ones
    #[arg(long, global = true)]
    paper_literal: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Csv,
    Json,
}

impl From<OutFormat> for Format {
    fn from(f: OutFormat) -> Self {
        match f {
            OutFormat::Csv => Format::Csv,
            OutFormat::Json => Format::Json,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum State {
    Coherent,
    Fock1,
    Cat,
}

#[derive(Subcommand)]
enum Command {
    /// Check a configuration and print derived parameters
    Validate,
    /// Tables of φ, f, χ and the modeshape u around Ω
    Respond {
        #[arg(long, default_value_t = 401)]
        points: usize,
        /// Half-width of the window in units of Γ_eff
        #[arg(long, default_value_t = 50.0)]
        span: f64,
    },
    /// Transfer gains from quadrature and from the closed form
    Gains,
    /// Noise spectrum components around Ω
    Psd {
        #[arg(long, default_value_t = 401)]
        points: usize,
        /// Half-width of the window in units of Γ_eff
        #[arg(long, default_value_t = 50.0)]
        span: f64,
    },
    /// Variance budget and added-noise covariance
    Variance,
    /// Fidelity of one state through the channel
    Fidelity {
        #[arg(long, value_enum, default_value_t = State::Coherent)]
        state: State,
        /// Real part of α for coherent and cat states
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        alpha: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        alpha_im: f64,
        /// Also write the target and transferred Wigner grids
        #[arg(long)]
        export_wigner: bool,
    },
    /// Parameter sweep from a named recipe or a JSON sweep description
    Sweep {
        /// fig2, fig3a, fig3b or fig3b-inset
        #[arg(long, conflicts_with = "spec", required_unless_present = "spec")]
        recipe: Option<String>,
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Write transferred Wigner grids for every row
        #[arg(long)]
        export_wigner: bool,
    },
    /// Monte Carlo trajectories with their spectrum and sample moments
    Oracle {
        #[arg(long, default_value_t = 16)]
        trajectories: usize,
        /// Recorded time per trajectory in units of 1/Γ_eff
        #[arg(long, default_value_t = 1000.0)]
        length: f64,
        /// Trajectory configuration (JSON); overrides the two options above
        #[arg(long)]
        trajectory_config: Option<PathBuf>,
        /// Welch segment length in samples
        #[arg(long)]
        segment: Option<usize>,
        /// Skip writing the per-trajectory traces
        #[arg(long)]
        no_traces: bool,
    },
}

fn load_config(path: Option<&Path>) -> Result<SystemConfig> {
    match path {
        None => Ok(SystemConfig::canonical()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(SystemConfig::from_json(&text)
                .with_context(|| format!("parsing {}", p.display()))?)
        }
    }
}

fn write(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    log::info!("wrote {}", path.display());
    Ok(path)
}

fn write_records<T: Serialize>(cli: &Cli, stem: &str, rows: &[T]) -> Result<PathBuf> {
    match cli.format {
        OutFormat::Csv => write(
            &cli.out,
            &format!("{stem}.csv"),
            &harness::records_csv(rows)?,
        ),
        OutFormat::Json => write(
            &cli.out,
            &format!("{stem}.json"),
            &(serde_json::to_string_pretty(rows)? + "\n"),
        ),
    }
}

fn window(p: &DerivedParams, span: f64, points: usize) -> Vec<f64> {
    let half = span * p.gamma_eff();
    harness::linspace(p.omega_m - half, p.omega_m + half, points)
}

fn handling(cli: &Cli) -> GainHandling {
    if cli.paper_literal {
        GainHandling::Unscaled
    } else {
        GainHandling::Scaled
    }
}

#[derive(Serialize)]
struct GainsRow {
    g_x: f64,
    g_y: f64,
    overall: f64,
    squeeze: f64,
    g_x_analytic: f64,
    g_y_analytic: f64,
    cooperativity: f64,
    feedback_gain: f64,
    config_hash: String,
}

#[derive(Serialize)]
struct FidelityRow {
    state: String,
    alpha_re: f64,
    alpha_im: f64,
    fidelity: f64,
    fidelity_raw: f64,
    clipped: bool,
    min_w: f64,
    min_w_q: f64,
    min_w_p: f64,
    g_x: f64,
    g_y: f64,
    v11: f64,
    v12: f64,
    v22: f64,
    gain_handling: GainHandling,
    config_hash: String,
}

fn run(cli: &Cli) -> Result<u8> {
    let config = load_config(cli.config.as_deref())?;
    let diagnostics = validate(&config);
    for d in &diagnostics {
        eprintln!("{d}");
    }
    if diagnostics.iter().any(|d| d.is_error()) {
        bail!("invalid configuration");
    }
    let params = derive(&config)?;
    let hash = config.hash_hex();

    match &cli.command {
        Command::Validate => {
            println!("{}", serde_json::to_string_pretty(&params)?);
            println!("config_hash {hash}");
        }
        Command::Respond { points, span } => {
            let rows = harness::response_table(&params, &window(&params, *span, *points))?;
            match cli.format {
                OutFormat::Csv => write(&cli.out, "respond.csv", &harness::response_csv(&rows)?)?,
                OutFormat::Json => write(
                    &cli.out,
                    "respond.json",
                    &(serde_json::to_string_pretty(&rows)? + "\n"),
                )?,
            };
        }
        Command::Gains => {
            let g = gains_numeric(&params)?;
            let a = gains_analytic(&params);
            let row = GainsRow {
                g_x: g.g_x,
                g_y: g.g_y,
                overall: g.overall,
                squeeze: g.squeeze,
                g_x_analytic: a.g_x,
                g_y_analytic: a.g_y,
                cooperativity: params.cooperativity,
                feedback_gain: params.feedback_gain,
                config_hash: hash,
            };
            write_records(cli, "gains", &[row])?;
        }
        Command::Psd { points, span } => {
            let gains = gains_numeric(&params)?;
            let rows = harness::psd_table(&params, &gains, &window(&params, *span, *points))?;
            match cli.format {
                OutFormat::Csv => write(&cli.out, "psd.csv", &harness::psd_csv(&rows)?)?,
                OutFormat::Json => write(
                    &cli.out,
                    "psd.json",
                    &(serde_json::to_string_pretty(&rows)? + "\n"),
                )?,
            };
        }
        Command::Variance => {
            let gains = gains_numeric(&params)?;
            let v = noise::variance_numeric(&params, &gains)?;
            let cov = noise::noise_covariance(&v)?;
            match cli.format {
                OutFormat::Csv => {
                    write(&cli.out, "variance.csv", &harness::records_csv(&[v])?)?;
                    write(&cli.out, "covariance.csv", &harness::records_csv(&[cov])?)?;
                }
                OutFormat::Json => {
                    let doc = serde_json::json!({ "variances": v, "covariance": cov, "config_hash": hash });
                    write(
                        &cli.out,
                        "variance.json",
                        &(serde_json::to_string_pretty(&doc)? + "\n"),
                    )?;
                }
            }
        }
        Command::Fidelity {
            state,
            alpha,
            alpha_im,
            export_wigner,
        } => {
            let a = Complex64::new(*alpha, *alpha_im);
            let spec = match state {
                State::Coherent => StateSpec::coherent(a),
                State::Fock1 => StateSpec::fock1(),
                State::Cat => StateSpec::cat(a),
            };
            let gains = gains_numeric(&params)?;
            let cov = noise::noise_covariance(&noise::variance_numeric(&params, &gains)?)?;
            let grid = default_grid(&[spec]);
            let target = wigner_state(&spec, &grid)?;
            let out = transfer_wigner(&spec, &cov, &gains, &grid, handling(cli))?;
            let f = fidelity(&target, &out)?;
            let (w, q, p) = min_wigner(&out);
            let row = FidelityRow {
                state: spec.label().to_string(),
                alpha_re: spec.alpha.re,
                alpha_im: spec.alpha.im,
                fidelity: f.value,
                fidelity_raw: f.raw,
                clipped: f.clipped,
                min_w: w,
                min_w_q: q,
                min_w_p: p,
                g_x: gains.g_x,
                g_y: gains.g_y,
                v11: cov.v11,
                v12: cov.v12,
                v22: cov.v22,
                gain_handling: handling(cli),
                config_hash: hash,
            };
            write_records(cli, "fidelity", &[row])?;
            if *export_wigner {
                fs::create_dir_all(&cli.out)?;
                gridio::write_grid(&cli.out.join(format!("target_{}", spec.label())), &target)?;
                gridio::write_grid(&cli.out.join(format!("transferred_{}", spec.label())), &out)?;
            }
        }
        Command::Sweep {
            recipe,
            spec,
            export_wigner,
        } => {
            let (name, mut sweep) = match (recipe, spec) {
                (Some(r), _) => (
                    r.replace('-', "_"),
                    SweepSpec::recipe(r).with_context(|| format!("unknown recipe {r:?}"))?,
                ),
                (None, Some(path)) => {
                    let text = fs::read_to_string(path)
                        .with_context(|| format!("reading {}", path.display()))?;
                    let stem = path
                        .file_stem()
                        .and_then(|s| s.to_str())
                        .unwrap_or("sweep")
                        .to_string();
                    (
                        stem,
                        serde_json::from_str(&text)
                            .with_context(|| format!("parsing {}", path.display()))?,
                    )
                }
                (None, None) => bail!("need --recipe or --spec"),
            };
            sweep.export_wigner |= *export_wigner;
            if cli.paper_literal {
                sweep.gain_handling = GainHandling::Unscaled;
            }
            let report = run_sweep(&config, &sweep, cli.seed.unwrap_or(0), cli.threads)?;
            for path in harness::emit(&report, &cli.out, &name, cli.format.into())? {
                log::info!("wrote {}", path.display());
            }
            eprintln!("{}", harness::summary(&report));
            if report.failed_rows() > 0 {
                return Ok(2);
            }
        }
        Command::Oracle {
            trajectories,
            length,
            trajectory_config,
            segment,
            no_traces,
        } => {
            let mut traj = match trajectory_config {
                Some(path) => {
                    let text = fs::read_to_string(path)
                        .with_context(|| format!("reading {}", path.display()))?;
                    serde_json::from_str(&text)
                        .with_context(|| format!("parsing {}", path.display()))?
                }
                None => TrajectoryConfig::bandpass(&params, *length, *trajectories, 0),
            };
            if let Some(seed) = cli.seed {
                traj.seed = seed;
            }
            let traces = simulate_ensemble(&params, &traj, cli.threads)?;
            if !no_traces {
                let dir = cli.out.join("traces");
                fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
                for t in &traces {
                    gridio::write_trace(&dir.join(format!("trace_{:03}", t.index)), t)?;
                }
            }
            let dt = traj.sample_interval();
            let samples = traj.samples();
            let seg = segment.unwrap_or_else(|| {
                let want = (32.0 * PI / (params.gamma_eff() * dt)).ceil() as usize;
                want.min(samples / 4).max(8)
            });
            let psd = estimate_psd(&traces, seg)?;
            let gains = gains_numeric(&params)?;
            let reference = harness::psd_reference(&params, &gains, &psd)?;
            write(
                &cli.out,
                "oracle_psd.csv",
                &harness::psd_estimate_csv(&psd, Some(&reference))?,
            )?;
            let moments = sample_variance(&traces);
            let v = noise::variance_numeric(&params, &gains)?;
            let doc = serde_json::json!({
                "trajectory_config": traj,
                "resonance_image": fold_frequency(params.omega_m, dt),
                "segment_len": seg,
                "moments": moments,
                "expected": { "var_q": v.v_q_total, "var_p": v.v_p_total, "cov_qp": v.v_qp_total },
                "config_hash": hash,
            });
            write(
                &cli.out,
                "oracle_moments.json",
                &(serde_json::to_string_pretty(&doc)? + "\n"),
            )?;
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
