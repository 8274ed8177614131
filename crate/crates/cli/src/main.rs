use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use shapeopt_cli::config::{ConfigError, ExperimentConfig};
use shapeopt_cli::experiment::RunError;
use shapeopt_cli::verify::{run_checks, VerifyOptions};
use shapeopt_cli::{gen_mesh, EXIT_CONFIG, EXIT_CONVERGED, EXIT_FAILURE};

#[derive(Parser)]
#[command(
    name = "shapeopt",
    version,
    about = "Stokes obstacle shape optimization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML). Defaults apply when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Use the fine built-in mesh (633 obstacle edges).
    #[arg(long)]
    paper_scale: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the augmented Lagrangian optimization.
    Run {
        #[command(flatten)]
        common: Common,
        /// Output directory (overrides `output`).
        #[arg(long, value_name = "DIR")]
        output: Option<PathBuf>,
        /// Snapshot cadence in accepted steps (overrides `snapshot_every`).
        #[arg(long, value_name = "N")]
        snapshots: Option<usize>,
    },
    /// Run both configured metrics in parallel and join their histories.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "DIR")]
        output: Option<PathBuf>,
        #[arg(long, value_name = "N")]
        snapshots: Option<usize>,
    },
    /// Write the channel-with-circle mesh in MSH 2.2 format.
    GenMesh {
        #[command(flatten)]
        common: Common,
        /// Target file.
        #[arg(long, value_name = "FILE", default_value = "channel.msh")]
        output: PathBuf,
        /// Obstacle radius.
        #[arg(long)]
        radius: Option<f64>,
        /// Number of equal arcs on the obstacle.
        #[arg(long, short = 'n')]
        segments: Option<usize>,
        /// Target edge length away from the obstacle.
        #[arg(long)]
        far_field_size: Option<f64>,
    },
    /// Run the oracle suite on the configured mesh.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Fault injection: flip the sign of the analytic shape derivatives.
        #[arg(long, hide = true)]
        flip_derivative_sign: bool,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig, ConfigError> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if common.paper_scale {
        config.use_paper_scale();
    }
    Ok(config)
}

fn apply_overrides(
    config: &mut ExperimentConfig,
    output: Option<PathBuf>,
    snapshots: Option<usize>,
) {
    if let Some(dir) = output {
        config.output = dir;
    }
    if let Some(n) = snapshots {
        config.snapshot_every = n;
    }
}

fn report(e: &RunError) -> u8 {
    eprintln!("error: {e}");
    match e {
        RunError::Config(_) => EXIT_CONFIG as u8,
        _ => EXIT_FAILURE as u8,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let common = match &cli.command {
        Command::Run { common, .. }
        | Command::Compare { common, .. }
        | Command::GenMesh { common, .. }
        | Command::Verify { common, .. } => common,
    };
    let mut config = match load(common) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    let code = match cli.command {
        Command::Run {
            output, snapshots, ..
        } => {
            apply_overrides(&mut config, output, snapshots);
            match shapeopt_cli::run(&config) {
                Ok(t) => {
                    println!("{:?}: results in {}", t, config.output.display());
                    t.exit_code() as u8
                }
                Err(e) => report(&e),
            }
        }
        Command::Compare {
            output, snapshots, ..
        } => {
            apply_overrides(&mut config, output, snapshots);
            match shapeopt_cli::compare(&config) {
                Ok(legs) => {
                    let mut code = EXIT_CONVERGED as u8;
                    for leg in &legs {
                        match &leg.result {
                            Ok(t) => {
                                println!("{}: {:?} after {} steps", leg.name, t, leg.records.len())
                            }
                            Err(e) => {
                                eprintln!("{}: error: {e}", leg.name);
                                code = EXIT_FAILURE as u8;
                            }
                        }
                    }
                    println!(
                        "joined history in {}",
                        config.output.join("compare.csv").display()
                    );
                    code
                }
                Err(e) => report(&e),
            }
        }
        Command::GenMesh {
            output,
            radius,
            segments,
            far_field_size,
            ..
        } => {
            let mut geometry = config.mesh.geometry.clone();
            if let Some(r) = radius {
                geometry.radius = r;
            }
            if let Some(n) = segments {
                geometry.obstacle_segments = n;
            }
            if let Some(h) = far_field_size {
                geometry.far_field_size = h;
            }
            match gen_mesh::gen_mesh(&geometry, &config.markers, &output) {
                Ok(mesh) => {
                    println!(
                        "{}: {} vertices, {} triangles, {} obstacle edges",
                        output.display(),
                        mesh.num_vertices(),
                        mesh.num_triangles(),
                        mesh.topology().obstacle_edges().len()
                    );
                    EXIT_CONVERGED as u8
                }
                Err(e @ gen_mesh::GenMeshError::Geometry(_)) => {
                    eprintln!("error: {e}");
                    EXIT_CONFIG as u8
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    EXIT_FAILURE as u8
                }
            }
        }
        Command::Verify {
            flip_derivative_sign,
            ..
        } => match config.build_mesh() {
            Ok(mesh) => {
                let checks = run_checks(
                    &config,
                    &mesh,
                    VerifyOptions {
                        flip_derivative_sign,
                    },
                );
                for c in &checks {
                    println!("{c}");
                }
                let failures = checks.iter().filter(|c| !c.passed).count();
                println!("{} checks, {failures} failed", checks.len());
                if failures == 0 {
                    EXIT_CONVERGED as u8
                } else {
                    EXIT_FAILURE as u8
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_CONFIG as u8
            }
        },
    };
    ExitCode::from(code)
}
