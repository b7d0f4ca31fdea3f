use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use surfteach_core::classifier::{
    load_registry, read_gray_png, save_registry, toy_extract, ClassRegistry, ClassifyOptions, TOY_DIM,
};
use surfteach_core::geometry::{estimate_normals_integral, read_depth_png, CameraModel, OrganizedPointCloud};
use workbench::execute::Outcome;
use workbench::headless::{run_headless, PathScript};
use workbench::xyzn::write_xyzn;
use workbench::{load_scenario, service, WorkbenchError};

#[derive(Parser)]
#[command(name = "workbench", version, about = "Teach objects, draw paths on surfaces and execute them under hybrid force control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a command script headless and write the telemetry CSV.
    Run {
        scenario: PathBuf,
        /// TOML command script (teach, tasks).
        #[arg(long)]
        path: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
    },
    /// Estimate surface normals of a 16-bit millimeter depth PNG.
    Normals {
        depth: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 525.0)]
        fx: f64,
        #[arg(long, default_value_t = 525.0)]
        fy: f64,
        /// Principal point; the image centre by default.
        #[arg(long)]
        cx: Option<f64>,
        #[arg(long)]
        cy: Option<f64>,
        #[arg(long, default_value_t = 5)]
        half_window: usize,
    },
    /// Classify a grayscale PNG patch against a stored registry.
    Classify {
        #[arg(long)]
        registry: PathBuf,
        #[arg(long)]
        patch: PathBuf,
        #[arg(long, default_value_t = ClassifyOptions::default().ratio_threshold)]
        ratio: f64,
        #[arg(long, default_value_t = ClassifyOptions::default().absolute_threshold)]
        absolute: f64,
    },
    /// Add a class taught from PNG patches to a registry file, creating it if needed.
    Teach {
        #[arg(long)]
        registry: PathBuf,
        #[arg(long)]
        name: String,
        #[arg(required = true)]
        patches: Vec<PathBuf>,
    },
}

fn open(path: &PathBuf) -> Result<BufReader<File>, WorkbenchError> {
    File::open(path).map(BufReader::new).map_err(|e| WorkbenchError::InvalidInput(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<ExitCode, WorkbenchError> {
    match cli.command {
        Command::Run { scenario, path, out } => {
            let scenario = load_scenario(&scenario)?;
            let script = PathScript::load(&path)?;
            let report = run_headless(scenario, &script, BufWriter::new(File::create(&out)?))?;
            let mut ok = report.runs.len() == script.task.len();
            for (i, r) in report.runs.iter().enumerate() {
                ok &= r.outcome == Outcome::Completed;
                println!(
                    "task {i}: {:?} duration {:.3} s, tracked {:.3} m, mean f_n {:.3} N, tangential rms {:.3} mm, contact loss {} ticks",
                    r.outcome,
                    r.duration,
                    r.tracked_length,
                    r.mean_fn_meas,
                    r.tangential_rms * 1e3,
                    r.contact_loss_ticks
                );
            }
            println!("{} frames written to {}", report.frames.len(), out.display());
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Command::Serve { port, scenario, host } => {
            let scenario = load_scenario(&scenario)?;
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            rt.block_on(service::serve(SocketAddr::new(host, port), scenario))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Normals { depth, out, fx, fy, cx, cy, half_window } => {
            let depth = read_depth_png(open(&depth)?)?;
            let cx = cx.unwrap_or((depth.width as f64 - 1.0) / 2.0);
            let cy = cy.unwrap_or((depth.height as f64 - 1.0) / 2.0);
            let camera = CameraModel::new(fx, fy, cx, cy, nalgebra::Isometry3::identity())?;
            let cloud = OrganizedPointCloud::from_depth(&depth, &camera);
            let normals = estimate_normals_integral(&cloud, half_window)?;
            let rows = write_xyzn(&cloud, &normals, BufWriter::new(File::create(&out)?))?;
            println!("{rows} points written to {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Classify { registry, patch, ratio, absolute } => {
            let reg = load_registry(open(&registry)?)?;
            let feature = toy_extract(&read_gray_png(open(&patch)?)?);
            let opts = ClassifyOptions { ratio_threshold: ratio, absolute_threshold: absolute };
            let result = reg.classify_with(&feature, &opts)?;
            println!("{}", serde_json::to_string_pretty(&result).expect("serializable"));
            Ok(ExitCode::SUCCESS)
        }
        Command::Teach { registry, name, patches } => {
            let mut reg = if registry.exists() { load_registry(open(&registry)?)? } else { ClassRegistry::new(TOY_DIM)? };
            let mut session = reg.begin_teaching(&name, patches.len())?;
            for p in &patches {
                session.add_sample(&toy_extract(&read_gray_png(open(p)?)?))?;
            }
            let record = reg.finalize_class(session)?;
            save_registry(&reg, BufWriter::new(File::create(&registry)?))?;
            println!("class {:?} taught from {} patches; {} classes in {}", record.name, record.sample_count, reg.len(), registry.display());
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
