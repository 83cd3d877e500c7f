use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use log::info;
use miscible_core::mesh::{generate_disk_mesh, mesh_quality, save_mesh};
use miscible_core::study::{
    run_single, run_spatial_study, run_temporal_study, write_config_echo, Protocol, StudyConfig,
    StudyKind,
};
use miscible_core::Error;

/// Miscible displacement in porous media: P2 pressure, P1 concentration.
#[derive(Parser)]
#[command(name = "miscible", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Single simulation; writes final-time errors as JSON.
    Run(RunArgs),
    /// Mesh refinement study at a fixed time step.
    StudySpatial(StudyArgs),
    /// Time-step refinement study on a fixed mesh.
    StudyTemporal(StudyArgs),
    /// Writes a disk mesh as JSON.
    MeshGen(MeshArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Write VTK files of the fields.
    #[arg(long)]
    dump_fields: bool,
}

#[derive(Args)]
struct StudyArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Desk-scale fixed parameter (τ = 2^-12 or M = 128).
    #[arg(long, conflicts_with = "paper_exact")]
    fast: bool,
    /// Fine fixed parameter (τ = 2^-14 or M = 256).
    #[arg(long)]
    paper_exact: bool,
}

#[derive(Args)]
struct MeshArgs {
    /// Boundary node count; h = 1/M.
    #[arg(long, default_value_t = 16)]
    m: usize,
    #[arg(long, num_args = 2, value_names = ["X", "Y"], default_values_t = [0.5, 0.5])]
    center: Vec<f64>,
    #[arg(long, default_value_t = 0.5)]
    radius: f64,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load_config(common: &CommonArgs) -> Result<StudyConfig, Error> {
    let mut config = match &common.config {
        Some(path) => StudyConfig::load(path)?,
        None => StudyConfig::default(),
    };
    if let Some(out) = &common.out {
        config.output_dir = Some(out.clone());
    }
    Ok(config)
}

fn output_dir(config: &StudyConfig) -> PathBuf {
    config
        .output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("."))
}

fn cmd_run(args: RunArgs) -> anyhow::Result<()> {
    let mut config = load_config(&args.common)?.resolve(StudyKind::Single, None);
    config.dump_fields |= args.dump_fields;
    let dir = output_dir(&config);
    config.output_dir = Some(dir.clone());
    config.validate(StudyKind::Single)?;
    let result = run_single(&config)?;
    write_config_echo(&dir, &config)?;
    let json = serde_json::to_string_pretty(&result)?;
    fs::write(dir.join("report.json"), &json)
        .with_context(|| format!("writing {}", dir.display()))?;
    println!("{json}");
    Ok(())
}

fn cmd_study(args: StudyArgs, kind: StudyKind) -> anyhow::Result<()> {
    let protocol = if args.paper_exact {
        Some(Protocol::Full)
    } else if args.fast {
        Some(Protocol::Fast)
    } else {
        None
    };
    let config = load_config(&args.common)?.resolve(kind, protocol);
    config.validate(kind)?;
    info!(
        "{kind:?} study: M = {:?}, tau = {:?}",
        config.mesh_m, config.tau
    );
    let report = match kind {
        StudyKind::Temporal => run_temporal_study(&config)?,
        _ => run_spatial_study(&config)?,
    };
    let dir = output_dir(&config);
    report.write(&dir, &config)?;
    print!("{}", report.to_csv());
    Ok(())
}

fn cmd_mesh(args: MeshArgs) -> anyhow::Result<()> {
    let mesh = generate_disk_mesh([args.center[0], args.center[1]], args.radius, args.m)?;
    let q = mesh_quality(&mesh);
    info!(
        "{} vertices, {} triangles, min angle {:.1} deg",
        mesh.n_vertices(),
        mesh.n_triangles(),
        q.min_angle_deg
    );
    match args.out {
        Some(path) => write_mesh(&path, &mesh)?,
        None => println!("{}", miscible_core::mesh::mesh_to_json(&mesh)),
    }
    Ok(())
}

fn write_mesh(path: &Path, mesh: &miscible_core::mesh::Mesh) -> anyhow::Result<()> {
    save_mesh(mesh, path).with_context(|| format!("writing {}", path.display()))
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let Some(e) = err.downcast_ref::<Error>() else {
        return 1;
    };
    match e {
        Error::Config { .. } => 2,
        Error::SolverFailed { .. } | Error::StepFailed { .. } | Error::CoefficientBlowup { .. } => {
            3
        }
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::StudySpatial(a) => cmd_study(a, StudyKind::Spatial),
        Command::StudyTemporal(a) => cmd_study(a, StudyKind::Temporal),
        Command::MeshGen(a) => cmd_mesh(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            if let Some(Error::SolverFailed { step, .. } | Error::StepFailed { step, .. }) =
                err.downcast_ref::<Error>()
            {
                eprintln!("failed at step {step}");
            }
            ExitCode::from(exit_code(&err))
        }
    }
}
