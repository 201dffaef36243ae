use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use relucone::{bundled_names, export_json, export_obj, export_svg, run_scenario, Error, Projection, ScenarioConfig};

#[derive(Parser)]
#[command(name = "relucone", version, about = "Preimages, nested cones and manifold traces for convolutional ReLU layers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Preimage of a target output through the network.
    Preimage(RunArgs),
    /// Nesting and contraction diagnostics per layer.
    Nesting(RunArgs),
    /// Preimages of several targets plus forward trajectories.
    Flow(RunArgs),
    /// Trace an output manifold back to the input space.
    Trace(RunArgs),
    /// Enumerate sign cells and the contraction table.
    Cells(RunArgs),
    /// Run a config whatever its task.
    Run(RunArgs),
    /// List the bundled scenarios.
    Scenarios {
        /// Print the JSON config of one scenario.
        #[arg(long)]
        show: Option<String>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Obj,
    Svg,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario config file (JSON).
    #[arg(long, conflicts_with = "scenario", required_unless_present = "scenario")]
    config: Option<PathBuf>,
    /// Name of a bundled scenario.
    #[arg(long)]
    scenario: Option<String>,
    /// Override the seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Output formats; may be repeated.
    #[arg(long = "format", value_enum, default_values_t = [Format::Json])]
    formats: Vec<Format>,
    /// SVG view: "identity" or two axes "i,j". Defaults to identity for
    /// d >= 3 and "0,1" otherwise.
    #[arg(long)]
    projection: Option<String>,
    /// Do not print the text report.
    #[arg(long, short)]
    quiet: bool,
}

enum Failure {
    Config(String),
    Core(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Io(_) => 1,
            Failure::Config(_) => 2,
            Failure::Core(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Core(m) | Failure::Io(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::UnsupportedProjection(_) => Failure::Config(e.to_string()),
            Error::Io(_) => Failure::Io(e.to_string()),
            _ => Failure::Core(e.to_string()),
        }
    }
}

fn load(args: &RunArgs) -> Result<ScenarioConfig, Failure> {
    let mut cfg = match (&args.config, &args.scenario) {
        (Some(path), _) => ScenarioConfig::from_path(path).map_err(|e| match e {
            Error::Io(io) => Failure::Config(format!("cannot read {}: {io}", path.display())),
            other => other.into(),
        })?,
        (None, Some(name)) => ScenarioConfig::bundled(name)?,
        (None, None) => return Err(Failure::Config("give --config or --scenario".into())),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn write_outputs(args: &RunArgs, cfg: &ScenarioConfig, export: &relucone::GeometryExport) -> Result<Vec<PathBuf>, Failure> {
    let projection: Projection = match &args.projection {
        Some(p) => p.parse()?,
        None if cfg.dimension >= 3 => Projection::Identity,
        None => Projection::Axes(0, 1),
    };
    if args.formats.contains(&Format::Obj) && cfg.dimension != 3 {
        return Err(Failure::Config(format!("OBJ output needs d = 3, scenario has d = {}", cfg.dimension)));
    }
    std::fs::create_dir_all(&args.out_dir).map_err(|e| Failure::Io(format!("{}: {e}", args.out_dir.display())))?;
    let path = |ext: &str| args.out_dir.join(format!("{}.{ext}", cfg.name));
    let mut written = Vec::new();
    for f in &args.formats {
        let p = match f {
            Format::Json => {
                let p = path("json");
                export_json(export, &p)?;
                p
            }
            Format::Obj => {
                let p = path("obj");
                export_obj(export, &p)?;
                p
            }
            Format::Svg => {
                let p = path("svg");
                export_svg(export, &p, projection)?;
                p
            }
        };
        written.push(p);
    }
    Ok(written)
}

fn run(args: &RunArgs, expected: Option<&str>) -> Result<(), Failure> {
    let cfg = load(args)?;
    if let Some(kind) = expected {
        if cfg.task.kind() != kind {
            return Err(Failure::Config(format!("scenario '{}' has task '{}', not '{kind}'", cfg.name, cfg.task.kind())));
        }
    }
    info!("running {} ({})", cfg.name, cfg.task.kind());
    let out = run_scenario(&cfg)?;
    if !args.quiet {
        print!("{}", out.report);
    }
    for p in write_outputs(args, &cfg, &out.export)? {
        if !args.quiet {
            println!("wrote {}", display(&p));
        }
    }
    Ok(())
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn list(show: Option<&str>) -> Result<(), Failure> {
    match show {
        Some(name) => {
            let cfg = ScenarioConfig::bundled(name)?;
            println!("{}", cfg.to_json()?);
        }
        None => {
            for name in bundled_names() {
                let cfg = ScenarioConfig::bundled(name)?;
                println!("{name:16} {:18} {}", cfg.task.kind(), cfg.description);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Preimage(a) => run(a, Some("preimage")),
        Command::Nesting(a) => run(a, Some("nesting")),
        Command::Flow(a) => run(a, Some("contraction-flow")),
        Command::Trace(a) => run(a, Some("manifold-trace")),
        Command::Cells(a) => run(a, Some("cells")),
        Command::Run(a) => run(a, None),
        Command::Scenarios { show } => list(show.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
