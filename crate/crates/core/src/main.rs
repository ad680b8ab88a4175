use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use isoflow::config::ScenarioConfig;
use isoflow::convergence::{convergence_study, StudyOptions};
use isoflow::io::{run_to_files, write_json, OutputOptions};
use isoflow::scenarios::{
    calibrate_plane_amplitude, calibrate_sphere_extent, PLANE_TARGET_AREA, SPHERE_TARGET_AREA,
};
use isoflow::FlowError;

#[derive(Parser)]
#[command(name = "isoflow", version, about = "Mean curvature flow of spline surfaces with a fixed boundary")]
struct Cli {
    /// Worker threads for assembly and parallel levels (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write diagnostics, snapshots and a report.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the snapshot stride of the config file.
        #[arg(long)]
        snapshot_stride: Option<usize>,
        /// Write the matrices of the first step as MatrixMarket files.
        #[arg(long)]
        dump_matrices: bool,
    },
    /// Self-convergence study on nested meshes.
    Converge {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "4,8,16,32")]
        levels: Vec<usize>,
        #[arg(long, default_value_t = 0.05)]
        t_final: f64,
        /// Time step as a multiple of the element size.
        #[arg(long, default_value_t = 0.05)]
        dt_per_h: f64,
    },
    /// Re-derive the stored free parameter of a built-in scenario.
    Calibrate {
        #[arg(long, value_enum)]
        scenario: CalibrationTarget,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum CalibrationTarget {
    PerturbedPlane,
    SpherePatch,
}

fn run(cli: Cli) -> Result<ExitCode, FlowError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| FlowError::Config(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Solve {
            config,
            snapshot_stride,
            dump_matrices,
        } => {
            let mut cfg = ScenarioConfig::load(&config)?;
            if let Some(s) = snapshot_stride {
                cfg.snapshot_stride = s;
            }
            let surface = cfg.initial_surface()?;
            let report = run_to_files(surface.as_ref(), &cfg, OutputOptions { dump_matrices })?;
            println!(
                "{} steps to t = {}: area {:.10} -> {:.10}, max |S nu| {:.2e}, {:.1} s",
                report.steps,
                report.final_time,
                report.initial_area,
                report.final_area,
                report.max_constraint_residual,
                report.wallclock_s
            );
            println!("output in {}", cfg.output_dir.display());
            match report.failure {
                Some(msg) => {
                    eprintln!("run stopped early: {msg}");
                    Ok(ExitCode::FAILURE)
                }
                None => Ok(ExitCode::SUCCESS),
            }
        }
        Command::Converge {
            config,
            levels,
            t_final,
            dt_per_h,
        } => {
            let cfg = ScenarioConfig::load(&config)?;
            let opts = StudyOptions { t_final, dt_per_h };
            let report = convergence_study(&cfg, &levels, &opts)?;
            std::fs::create_dir_all(&cfg.output_dir).map_err(|e| FlowError::io(&cfg.output_dir, e))?;
            let path = cfg.output_dir.join("convergence.json");
            write_json(&path, &report)?;
            println!("{:>6} {:>12} {:>12} {:>12}", "N", "position", "curvature", "normal");
            for e in &report.errors {
                println!(
                    "{:>6} {:>12.4e} {:>12.4e} {:>12.4e}",
                    e.elements_per_side, e.position.h1, e.curvature.h1, e.normal.h1
                );
            }
            println!(
                "H1 slopes: position {:.3}, curvature {:.3}, normal {:.3}",
                report.position.h1_slope, report.curvature.h1_slope, report.normal.h1_slope
            );
            println!("report in {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Calibrate { scenario } => {
            match scenario {
                CalibrationTarget::PerturbedPlane => {
                    let a = calibrate_plane_amplitude(PLANE_TARGET_AREA)?;
                    println!("perturbation_amplitude = {a:?}");
                }
                CalibrationTarget::SpherePatch => {
                    let t = calibrate_sphere_extent(SPHERE_TARGET_AREA)?;
                    println!("patch_polar_extent = {t:?}");
                }
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
