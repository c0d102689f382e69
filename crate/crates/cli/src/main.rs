//! `dsj` command line: synthesize spiral-joint cam profiles from a
//! stiffness schedule and verify the design by simulated experiments.
//!
//! All diagnostics go to stderr; on success stdout carries exactly one
//! line, the path of the written run manifest. Exit codes: 0 success,
//! 2 configuration error, 3 infeasible stiffness target, 4 numerical or
//! convergence failure, 5 I/O failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::{DVector, Vector2};

use dsj_core::error::{Error, ErrorCategory, Result};
use dsj_core::io::{self, Artifact};
use dsj_core::model::{self, ModelBundle, ScheduleTarget};
use dsj_core::sim::{self, DsjTorqueModel};
use dsj_core::synthesis::{self, SpiralProfile};
use dsj_core::{kinematics, stiffness};

#[derive(Parser)]
#[command(
    name = "dsj",
    version,
    about = "Differential spiral joint design and simulation pipeline"
)]
struct Cli {
    /// Path of the JSON configuration file
    #[arg(long, global = true, default_value = "config/default.json")]
    config: PathBuf,

    /// Output directory for result files and the run manifest
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Override a configuration value, e.g. --set schedule.alpha_end=0.9
    /// (repeatable; the dotted key must already exist)
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct AlphaList {
    /// Stiffness fractions of the schedule to evaluate
    #[arg(long, value_delimiter = ',', default_values_t = [0.2, 0.5, 0.8])]
    alphas: Vec<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve spiral radii for the configured schedule, generate grooves,
    /// check the small-slope assumptions, and export the profile
    Synth,
    /// Regress stiffness ellipses from the nonlinear torque model on a
    /// deviation circle
    Ellipse {
        #[command(flatten)]
        alphas: AlphaList,
        /// Deviation circle radius in degrees
        #[arg(long, default_value_t = 20.0)]
        radius_deg: f64,
        /// Number of samples on the deviation circle
        #[arg(long, default_value_t = 72)]
        samples: usize,
    },
    /// Compute compensatory grasp-force curves over a deviation grid
    Grasp {
        #[command(flatten)]
        alphas: AlphaList,
        /// Working joint angles in radians
        #[arg(long, value_delimiter = ',', default_values_t = [0.6, 0.9])]
        q0: Vec<f64>,
        /// Largest grasp-direction deviation in millimetres
        #[arg(long, default_value_t = 10.0)]
        dp_max_mm: f64,
        /// Number of deviation grid points including zero
        #[arg(long, default_value_t = 21)]
        dp_points: usize,
    },
    /// Simulate step responses under constant stiffness and report
    /// settling metrics
    Step {
        #[command(flatten)]
        alphas: AlphaList,
        /// Step command per joint in radians
        #[arg(long, value_delimiter = ',', default_values_t = [0.5, 0.3])]
        q_cmd: Vec<f64>,
        /// Integration time step in seconds
        #[arg(long, default_value_t = 2e-4)]
        dt: f64,
        /// Simulation horizon in seconds
        #[arg(long, default_value_t = 8.0)]
        horizon: f64,
    },
    /// Validate the configuration and the synthesis assumptions without
    /// writing any output
    Validate,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Some(manifest_path)) => {
            println!("{}", manifest_path.display());
            ExitCode::SUCCESS
        }
        Ok(None) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            let code = match err.category() {
                ErrorCategory::Config => 2,
                ErrorCategory::Infeasible => 3,
                ErrorCategory::Numerical => 4,
                ErrorCategory::Io => 5,
            };
            ExitCode::from(code)
        }
    }
}

/// Loads the configuration, applies `--set` overrides, and returns the
/// validated model together with the effective config text (the hashed
/// form recorded in the manifest).
fn load_model(cli: &Cli) -> Result<(ModelBundle, String)> {
    let text = io::read_text(&cli.config)?;
    let mut doc: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    for assignment in &cli.overrides {
        io::apply_override(&mut doc, assignment)?;
    }
    let effective =
        serde_json::to_string_pretty(&doc).map_err(|e| Error::Numerical(e.to_string()))?;
    let raw = io::parse_config(&effective)?;
    let bundle = model::validate_config(&raw)?;
    Ok((bundle, effective))
}

fn command_line() -> String {
    std::env::args().skip(1).collect::<Vec<_>>().join(" ")
}

/// Spiral angle at which the schedule reaches the stiffness fraction
/// `alpha`, by linear interpolation between schedule samples.
fn q_s_for_alpha(bundle: &ModelBundle, alpha: f64) -> Result<f64> {
    let samples = bundle.schedule.samples();
    let mut points = Vec::with_capacity(samples.len());
    for s in samples {
        match s.target {
            ScheduleTarget::Alpha(a) => points.push((s.q_s, a)),
            ScheduleTarget::Matrix(_) => {
                return Err(Error::Domain(
                    "alpha lookup needs an alpha-valued schedule".into(),
                ))
            }
        }
    }
    for w in points.windows(2) {
        let (q0, a0) = w[0];
        let (q1, a1) = w[1];
        let (lo, hi) = if a0 <= a1 { (a0, a1) } else { (a1, a0) };
        if alpha >= lo - 1e-12 && alpha <= hi + 1e-12 && a0 != a1 {
            return Ok(q0 + (alpha - a0) / (a1 - a0) * (q1 - q0));
        }
    }
    Err(Error::Domain(format!(
        "alpha {alpha} is outside the scheduled range"
    )))
}

fn solve_profile(bundle: &ModelBundle) -> Result<SpiralProfile> {
    synthesis::solve_spiral_radii(&bundle.schedule, &bundle.pulleys, &bundle.springs)
}

fn run(cli: &Cli) -> Result<Option<PathBuf>> {
    let (bundle, config_text) = load_model(cli)?;
    let command = command_line();

    let artifacts = match &cli.command {
        Command::Synth => {
            let profile = solve_profile(&bundle)?;
            let profile = synthesis::generate_groove(&profile, bundle.z_range)?;
            let report = synthesis::validate_assumptions(
                &profile,
                synthesis::DEFAULT_ASSUMPTION_THRESHOLD,
            )?;
            for w in &profile.warnings {
                eprintln!("warning: {w}");
            }
            eprintln!(
                "assumption check: slope_r {:.4}, slope_z {:.4}, arc gap {:.4} (threshold {}) -> {}",
                report.max_slope_ratio_r,
                report.max_slope_ratio_z,
                report.arc_length_rel_error,
                report.threshold,
                if report.pass() { "pass" } else { "FAIL" }
            );
            if !report.pass() {
                eprintln!("warning: profile violates the small-slope assumptions; the realized stiffness will deviate from the schedule");
            }
            vec![Artifact {
                name: "profile.csv".into(),
                contents: synthesis::profile_csv(&profile)?,
            }]
        }
        Command::Ellipse {
            alphas,
            radius_deg,
            samples,
        } => {
            let profile = solve_profile(&bundle)?;
            let radius = radius_deg.to_radians();
            let mut rows = Vec::new();
            for &alpha in &alphas.alphas {
                let q_s0 = q_s_for_alpha(&bundle, alpha)?;
                let model = DsjTorqueModel {
                    profile: &profile,
                    pulleys: &bundle.pulleys,
                    springs: &bundle.springs,
                    q_s0,
                };
                let result = sim::stiffness_ellipse(&model, radius, *samples)?;
                eprintln!(
                    "alpha {alpha}: axes ({:.6}, {:.6}) N*m/rad, orientation {:.4} rad",
                    result.semi_axes.0, result.semi_axes.1, result.orientation
                );
                rows.push((alpha, result));
            }
            vec![Artifact {
                name: "ellipse.csv".into(),
                contents: io::ellipse_csv(&rows),
            }]
        }
        Command::Grasp {
            alphas,
            q0,
            dp_max_mm,
            dp_points,
        } => {
            if q0.len() != 2 {
                return Err(Error::Validation {
                    field: "q0".into(),
                    message: format!("expected 2 joint angles, got {}", q0.len()),
                });
            }
            if *dp_points < 2 || *dp_max_mm <= 0.0 {
                return Err(Error::Validation {
                    field: "dp grid".into(),
                    message: format!(
                        "need at least 2 points over a positive range, got {dp_points} over {dp_max_mm} mm"
                    ),
                });
            }
            let profile = solve_profile(&bundle)?;
            let q0v = Vector2::new(q0[0], q0[1]);
            let direction = Vector2::new(bundle.grasp_direction[0], bundle.grasp_direction[1]);
            let grid: Vec<f64> = (0..*dp_points)
                .map(|i| i as f64 / (*dp_points as f64 - 1.0) * dp_max_mm * 1e-3)
                .collect();
            let mut runs = Vec::new();
            for &alpha in &alphas.alphas {
                let q_s0 = q_s_for_alpha(&bundle, alpha)?;
                let k = synthesis::passive_stiffness_at(
                    &profile,
                    q_s0,
                    &bundle.pulleys,
                    &bundle.springs,
                )?;
                let curve = kinematics::grasp_force_curve(
                    &k,
                    &bundle.finger,
                    &direction,
                    bundle.grasp_mode,
                    &q0v,
                    &grid,
                )?;
                eprintln!(
                    "alpha {alpha}: force at {:.1} mm deviation = {:.4} N",
                    dp_max_mm,
                    curve.last().map(|c| c.1).unwrap_or(0.0)
                );
                runs.push((alpha, curve));
            }
            vec![Artifact {
                name: "grasp.csv".into(),
                contents: io::grasp_csv(&runs),
            }]
        }
        Command::Step {
            alphas,
            q_cmd,
            dt,
            horizon,
        } => {
            if q_cmd.len() != 2 {
                return Err(Error::Validation {
                    field: "q_cmd".into(),
                    message: format!("expected 2 joint angles, got {}", q_cmd.len()),
                });
            }
            let profile = solve_profile(&bundle)?;
            let q_cmd_v = DVector::from_row_slice(q_cmd);
            let mut runs = Vec::new();
            for &alpha in &alphas.alphas {
                let q_s0 = q_s_for_alpha(&bundle, alpha)?;
                let k = synthesis::passive_stiffness_at(
                    &profile,
                    q_s0,
                    &bundle.pulleys,
                    &bundle.springs,
                )?;
                let series =
                    sim::simulate_step_response(&k, &bundle.dynamics, &q_cmd_v, *horizon, *dt)?;
                let metrics = sim::response_metrics(&series, &q_cmd_v)?;
                eprintln!(
                    "alpha {alpha}: settling {:.3} s, frequency {:.2} Hz, overshoot {:.1}%{}",
                    metrics.settling_time,
                    metrics.dominant_frequency,
                    metrics.overshoot * 100.0,
                    if metrics.settled { "" } else { " (unsettled)" }
                );
                runs.push((alpha, series));
            }
            vec![Artifact {
                name: "step.csv".into(),
                contents: io::step_csv(&runs)?,
            }]
        }
        Command::Validate => {
            let km = stiffness::k_max(&bundle.pulleys, &bundle.springs)?;
            let profile = solve_profile(&bundle)?;
            let profile = synthesis::generate_groove(&profile, bundle.z_range)?;
            let report = synthesis::validate_assumptions(
                &profile,
                synthesis::DEFAULT_ASSUMPTION_THRESHOLD,
            )?;
            eprintln!(
                "config ok: {} schedule samples, K_max trace {:.6} N*m/rad",
                bundle.grid_samples,
                km.trace()
            );
            eprintln!(
                "assumption check: slope_r {:.4}, slope_z {:.4}, arc gap {:.4} (threshold {}) -> {}",
                report.max_slope_ratio_r,
                report.max_slope_ratio_z,
                report.arc_length_rel_error,
                report.threshold,
                if report.pass() { "pass" } else { "FAIL" }
            );
            if !report.pass() {
                return Err(Error::Numerical(
                    "profile violates the small-slope synthesis assumptions".into(),
                ));
            }
            return Ok(None);
        }
    };

    io::write_results(&artifacts, &cli.out, &config_text, &command)?;
    Ok(Some(io::manifest_path(&cli.out)))
}
