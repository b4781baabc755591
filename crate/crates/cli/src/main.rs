//! `trajfair`: movement-pattern fairness assessment pipeline.

mod bundle;
mod commands;
mod config;
mod pipeline;
mod plot;
mod serve;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Coordinates, RunConfig};
use trajfair::{Error, Result};

#[derive(Parser)]
#[command(name = "trajfair", version, about = "Spatial fairness assessment of movement patterns")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic movement data as stops.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Also write the raw sample trajectories.
        #[arg(long)]
        with_trajectories: bool,
    },
    /// Inject unfair hotspots into movement data and write labelled datasets.
    Inject {
        #[command(flatten)]
        common: Common,
        /// Number of datasets; more than one writes `dataset_NNN` subdirectories.
        #[arg(long, default_value_t = 1)]
        count: usize,
    },
    /// Detect stops in raw trajectories.
    Segment {
        #[command(flatten)]
        common: Common,
    },
    /// Run the full assessment on labelled movement data.
    Assess {
        #[command(flatten)]
        common: Common,
        /// Directory written by `inject`.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Assess single-location objects given as points.
    Reduce {
        #[command(flatten)]
        common: Common,
    },
    /// Measure power, sensitivity and PPV over a parameter sweep.
    Evaluate {
        #[command(flatten)]
        common: Common,
    },
    /// Render metric charts from an evaluation report.
    Plot {
        /// Evaluation report (`report.json`).
        #[arg(long)]
        report: PathBuf,
        /// Directory for the SVG files.
        #[arg(long)]
        output: PathBuf,
    },
    /// Write the explorer bundle of an assessment run.
    Export {
        /// Assessment run directory.
        #[arg(long)]
        run: PathBuf,
        /// Bundle path, `bundle.json` in the run directory by default.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Serve a bundle and the explorer assets over HTTP.
    Serve {
        #[arg(long)]
        bundle: PathBuf,
        /// Directory of static explorer assets.
        #[arg(long = "static")]
        assets: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = serve::DEFAULT_PORT)]
        port: u16,
    },
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    workers: Option<usize>,
    /// Input coordinates are longitude/latitude degrees.
    #[arg(long)]
    wgs84: bool,
    #[arg(long)]
    trajectories: Option<PathBuf>,
    #[arg(long)]
    stops: Option<PathBuf>,
    #[arg(long)]
    points: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    seed_polygons: Option<PathBuf>,
    /// Ground-truth objects CSV for reporting.
    #[arg(long)]
    ground_truth: Option<PathBuf>,
    /// Synthetic objects.
    #[arg(long)]
    objects: Option<u32>,
    /// Synthetic days.
    #[arg(long)]
    days: Option<u32>,
    /// Grid resolutions in meters, comma separated.
    #[arg(long, value_delimiter = ',')]
    resolutions: Option<Vec<f64>>,
    /// Shifted grids per resolution.
    #[arg(long)]
    shifts: Option<u32>,
    /// Cells retained per object.
    #[arg(long)]
    top_cells: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Monte Carlo simulations.
    #[arg(long)]
    n_sims: Option<u32>,
    #[arg(long)]
    magnitude: Option<f64>,
    #[arg(long)]
    hotspots: Option<usize>,
    #[arg(long)]
    objects_per_hotspot: Option<usize>,
    #[arg(long)]
    regions_per_hotspot: Option<usize>,
    /// Datasets per evaluated parameter value.
    #[arg(long)]
    datasets: Option<usize>,
    /// Evaluated injection parameter.
    #[arg(long)]
    parameter: Option<String>,
    /// Evaluated parameter values, comma separated.
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<f64>>,
}

impl Common {
    fn resolve(self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($field:expr, $value:expr) => {
                if let Some(v) = $value {
                    $field = v;
                }
            };
        }
        set!(cfg.output, self.output);
        set!(cfg.inputs.trajectories, self.trajectories.map(Some));
        set!(cfg.inputs.stops, self.stops.map(Some));
        set!(cfg.inputs.points, self.points.map(Some));
        set!(cfg.inputs.labels, self.labels.map(Some));
        set!(cfg.inputs.seed_polygons, self.seed_polygons.map(Some));
        set!(cfg.inputs.ground_truth, self.ground_truth.map(Some));
        set!(cfg.seed, self.seed.map(Some));
        set!(cfg.workers, self.workers.map(Some));
        set!(cfg.movement.objects, self.objects);
        set!(cfg.movement.days, self.days);
        set!(cfg.grids.resolutions, self.resolutions);
        set!(cfg.grids.shifts_per_resolution, self.shifts);
        set!(cfg.mapping.top_cells, self.top_cells);
        set!(cfg.scan.alpha, self.alpha);
        set!(cfg.scan.n_sims, self.n_sims);
        set!(cfg.injection.magnitude, self.magnitude);
        set!(cfg.injection.hotspots, self.hotspots);
        set!(cfg.injection.objects_per_hotspot, self.objects_per_hotspot);
        set!(cfg.injection.regions_per_hotspot, self.regions_per_hotspot);
        set!(cfg.evaluation.datasets, self.datasets);
        set!(cfg.evaluation.parameter, self.parameter);
        set!(cfg.evaluation.values, self.values);
        if self.wgs84 {
            cfg.coordinates = Coordinates::Wgs84;
        }
        if let Some(n) = cfg.workers {
            if n == 0 {
                return Err(Error::Config("workers must be at least 1".into()));
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| Error::Config(format!("workers: {e}")))?;
        }
        Ok(cfg)
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Generate {
            common,
            with_trajectories,
        } => commands::generate(common.resolve()?, with_trajectories),
        Command::Inject { common, count } => commands::inject(common.resolve()?, count),
        Command::Segment { common } => commands::segment(common.resolve()?),
        Command::Assess { common, dataset } => {
            let mut cfg = common.resolve()?;
            if let Some(dir) = dataset {
                commands::use_dataset(&mut cfg, &dir);
            }
            commands::assess(cfg)
        }
        Command::Reduce { common } => commands::reduce(common.resolve()?),
        Command::Evaluate { common } => commands::evaluate(common.resolve()?),
        Command::Plot { report, output } => {
            for path in commands::plot(&report, &output)? {
                println!("{}", path.display());
            }
            Ok(())
        }
        Command::Export { run, output } => {
            let out = output.unwrap_or_else(|| run.join(commands::BUNDLE));
            commands::export(&run, &out)
        }
        Command::Serve {
            bundle,
            assets,
            host,
            port,
        } => commands::serve(&bundle, assets.as_deref(), &host, port),
    }
}

fn exit_code(error: &Error) -> u8 {
    match error {
        Error::Config(_) => 2,
        Error::Parse { .. } | Error::InvalidInput(_) | Error::MissingStage(_) | Error::EmptyGeometry(_) => 3,
        Error::Io(e) if e.kind() == std::io::ErrorKind::NotFound => 3,
        _ => 4,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
