//! The `skycast` command line. Data goes to stdout as CSV or JSON lines,
//! diagnostics to stderr. Exit codes: 0 success, 1 usage, 2 data, 3 internal.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use serde::Serialize;
use skycast_core::cluster::{build_features, kmeans_fit, ClusterError};
use skycast_core::forecast::{forecast_at, ForecastError};
use skycast_core::ncgrid::{convert_to_csv, detect_format, parse_classic, Format, GridDataset, NcError};
use skycast_core::render::encode_ppm;
use skycast_core::router::{best_path, parse_geojson, RouteError, WeatherWeights};
use skycast_core::store::{load_latest, save_snapshot, StoreError};
use skycast_core::time::parse_date;
use skycast_core::{GeoPoint, StoreSnapshot};
use skycast_service::config::ApiConfig;
use skycast_service::grid::{forecast_field, GridError, GridRequest};
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "skycast", version, about = "Gridded weather ingestion, forecasting, clustering, routing and rendering")]
#[command(arg_required_else_help = true)]
struct Cli {
    /// Indent JSON output
    #[arg(long, global = true)]
    pretty: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, clap::Args)]
struct StoreArg {
    /// Snapshot directory
    #[arg(long, env = "SKYCAST_DATA_DIR", default_value = "data")]
    store: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert a NetCDF classic file to CSV ("-" writes to stdout)
    Convert {
        input: PathBuf,
        output: PathBuf,
        /// Variables to export, comma separated (default: all)
        #[arg(long, value_delimiter = ',')]
        vars: Vec<String>,
    },
    /// Ingest a NetCDF or CSV grid and publish a new snapshot
    Ingest {
        input: PathBuf,
        #[command(flatten)]
        store: StoreArg,
        /// Provenance tag (default: the file name)
        #[arg(long)]
        source: Option<String>,
    },
    /// Fit k-means over per-cell climate features and print the model
    Cluster {
        #[command(flatten)]
        store: StoreArg,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Write the model here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Forecast one variable at a point
    Forecast {
        #[command(flatten)]
        store: StoreArg,
        #[arg(long, allow_negative_numbers = true)]
        lat: f64,
        #[arg(long, allow_negative_numbers = true)]
        lon: f64,
        #[arg(long)]
        date: String,
        #[arg(long)]
        var: String,
    },
    /// Weather-aware route between two points ("LAT,LON")
    Route {
        #[command(flatten)]
        store: StoreArg,
        #[arg(long, allow_hyphen_values = true)]
        from: String,
        #[arg(long, allow_hyphen_values = true)]
        to: String,
        #[arg(long)]
        depart: String,
        /// GeoJSON road network
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
    },
    /// Render a forecast heatmap as PPM with a JSON sidecar
    Render {
        #[command(flatten)]
        store: StoreArg,
        #[arg(long)]
        var: String,
        #[arg(long)]
        date: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        lo: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        hi: Option<f64>,
        #[arg(long)]
        palette: Option<String>,
        #[arg(long, default_value_t = 1)]
        scale: usize,
    },
    /// Run the HTTP service
    Serve {
        /// JSON config; SKYCAST_LISTEN and SKYCAST_DATA_DIR override it
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{message}")]
    Data { code: &'static str, message: String },
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data { .. } => EXIT_DATA,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }

    fn code(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Data { code, .. } => code,
            CliError::Internal(_) => "internal",
        }
    }

    fn data(code: &'static str, message: impl ToString) -> Self {
        CliError::Data {
            code,
            message: message.to_string(),
        }
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::data("not_found", format!("{}: {e}", path.display())),
        _ => CliError::Internal(format!("{}: {e}", path.display())),
    }
}

impl From<NcError> for CliError {
    fn from(e: NcError) -> Self {
        CliError::data("bad_input", e)
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::EmptyStore => CliError::data("store_empty", e),
            StoreError::UnknownVariable(_) => CliError::data("unknown_variable", e),
            StoreError::Io(m) => CliError::Internal(m),
            other => CliError::data("bad_input", other),
        }
    }
}

impl From<ForecastError> for CliError {
    fn from(e: ForecastError) -> Self {
        match e {
            ForecastError::EmptyStore => CliError::data("store_empty", e),
            ForecastError::NoData(_) => CliError::data("no_data", e),
            ForecastError::Store(s) => s.into(),
            other => CliError::Internal(other.to_string()),
        }
    }
}

fn usage(message: impl Into<String>) -> CliError {
    CliError::Usage(message.into())
}

fn date_arg(s: &str) -> Result<NaiveDate, CliError> {
    parse_date(s).ok_or_else(|| usage(format!("{s:?} is not a date")))
}

fn point_arg(lat: f64, lon: f64) -> Result<GeoPoint, CliError> {
    if !(-180.0..=180.0).contains(&lon) {
        return Err(usage(format!("longitude {lon} is outside [-180, 180]")));
    }
    GeoPoint::new(lat, lon).map_err(|e| usage(e.to_string()))
}

fn pair_arg(s: &str) -> Result<GeoPoint, CliError> {
    let (lat, lon) = s
        .split_once(',')
        .ok_or_else(|| usage(format!("{s:?} is not LAT,LON")))?;
    let num = |v: &str| {
        v.trim()
            .parse::<f64>()
            .map_err(|_| usage(format!("{s:?} is not LAT,LON")))
    };
    point_arg(num(lat)?, num(lon)?)
}

/// Latest snapshot under `dir`; a missing directory is an empty store.
fn open_store(dir: &Path) -> Result<StoreSnapshot, CliError> {
    if !dir.exists() {
        return Ok(StoreSnapshot::empty());
    }
    Ok(load_latest(dir)?)
}

fn read_grid(path: &Path) -> Result<GridDataset, CliError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    match detect_format(&bytes) {
        Format::ClassicV1 | Format::ClassicV2 => Ok(parse_classic(&bytes)?),
        Format::Unsupported => {
            let text = std::str::from_utf8(&bytes).map_err(|_| CliError::from(NcError::UnsupportedFormat))?;
            if text.starts_with("time,") {
                Ok(GridDataset::from_csv(text)?)
            } else {
                Err(NcError::UnsupportedFormat.into())
            }
        }
    }
}

struct Output<'a> {
    out: &'a mut dyn Write,
    pretty: bool,
}

impl Output<'_> {
    fn json<T: Serialize>(&mut self, value: &T) -> Result<(), CliError> {
        let text = if self.pretty {
            serde_json::to_string_pretty(value)
        } else {
            serde_json::to_string(value)
        }
        .map_err(|e| CliError::Internal(e.to_string()))?;
        writeln!(self.out, "{text}").map_err(|e| CliError::Internal(e.to_string()))
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::Internal(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct IngestSummary<'a> {
    version: u64,
    path: String,
    source: &'a str,
    observations: usize,
    replaced: usize,
}

fn execute(cmd: Command, out: &mut Output) -> Result<(), CliError> {
    match cmd {
        Command::Convert { input, output, vars } => {
            let ds = read_grid(&input)?;
            let names: Vec<&str> = if vars.is_empty() {
                ds.field_order.iter().map(String::as_str).collect()
            } else {
                vars.iter().map(String::as_str).collect()
            };
            let csv = convert_to_csv(&ds, &names)?;
            if output.as_os_str() == "-" {
                out.out
                    .write_all(csv.as_bytes())
                    .map_err(|e| CliError::Internal(e.to_string()))
            } else {
                write_file(&output, csv.as_bytes())
            }
        }
        Command::Ingest { input, store, source } => {
            let ds = read_grid(&input)?;
            let source = source.unwrap_or_else(|| {
                input
                    .file_name()
                    .map_or_else(|| input.display().to_string(), |n| n.to_string_lossy().into_owned())
            });
            std::fs::create_dir_all(&store.store)
                .map_err(|e| CliError::Internal(format!("{}: {e}", store.store.display())))?;
            let next = open_store(&store.store)?.ingest(&ds, &source)?;
            let path = save_snapshot(&next, &store.store)?;
            let prov = next.provenance().last().expect("ingest records provenance");
            out.json(&IngestSummary {
                version: next.version(),
                path: path.display().to_string(),
                source: &source,
                observations: prov.observations,
                replaced: prov.replaced,
            })
        }
        Command::Cluster { store, k, seed, out: file } => {
            let snap = open_store(&store.store)?;
            if snap.is_empty() {
                return Err(StoreError::EmptyStore.into());
            }
            let fit = build_features(&snap).and_then(|fm| kmeans_fit(&fm, k, seed));
            let model = fit.map_err(|e| match e {
                ClusterError::NoQualifyingCells => CliError::data("no_data", e),
                ClusterError::KTooLarge { .. } => CliError::data("bad_k", e),
                other => CliError::Internal(other.to_string()),
            })?;
            let export = model.export();
            match file {
                Some(path) => {
                    let text = serde_json::to_vec_pretty(&export).map_err(|e| CliError::Internal(e.to_string()))?;
                    write_file(&path, &text)
                }
                None => out.json(&export),
            }
        }
        Command::Forecast {
            store,
            lat,
            lon,
            date,
            var,
        } => {
            let point = point_arg(lat, lon)?;
            let date = date_arg(&date)?;
            let snap = open_store(&store.store)?;
            out.json(&forecast_at(&snap, point, date, &var)?)
        }
        Command::Route {
            store,
            from,
            to,
            depart,
            graph,
            alpha,
            beta,
        } => {
            let (from, to, depart) = (pair_arg(&from)?, pair_arg(&to)?, date_arg(&depart)?);
            let mut weights = WeatherWeights::default();
            weights.alpha = alpha.unwrap_or(weights.alpha);
            weights.beta = beta.unwrap_or(weights.beta);
            weights.validate().map_err(|e| usage(e.to_string()))?;
            let text = std::fs::read_to_string(&graph).map_err(io_err(&graph))?;
            let g = parse_geojson(&text).map_err(|e| CliError::data("bad_input", e))?;
            let snap = open_store(&store.store)?;
            let result = best_path(&g, from, to, depart, Some(&snap), &weights).map_err(|e| match e {
                RouteError::NoRoute { .. } => CliError::data("no_route", e),
                RouteError::EmptyStore => CliError::data("store_empty", e),
                RouteError::EmptyGraph => CliError::data("bad_input", e),
                other => CliError::Internal(other.to_string()),
            })?;
            out.json(&result)
        }
        Command::Render {
            store,
            var,
            date,
            out: path,
            lo,
            hi,
            palette,
            scale,
        } => {
            if scale == 0 {
                return Err(usage("--scale must be at least 1"));
            }
            let req = GridRequest {
                variable: var,
                date: date_arg(&date)?,
                lo,
                hi,
                palette,
                scale,
            };
            let snap = open_store(&store.store)?;
            let grid = forecast_field(&snap, &req).map_err(|e| match e {
                GridError::Forecast(f) => f.into(),
                GridError::UnknownPalette(_) | GridError::Render(_) => usage(e.to_string()),
                e @ GridError::NoData { .. } => CliError::data("no_data", e),
            })?;
            let image = grid.raster(scale).map_err(|e| CliError::Internal(e.to_string()))?;
            write_file(&path, &encode_ppm(&image))?;
            let sidecar = grid.sidecar(req.date);
            let text = serde_json::to_vec_pretty(&sidecar).map_err(|e| CliError::Internal(e.to_string()))?;
            write_file(&sidecar_path(&path), &text)?;
            out.json(&sidecar)
        }
        Command::Serve { config } => {
            let mut cfg = match &config {
                Some(p) => ApiConfig::from_file(p).map_err(|e| CliError::data("bad_config", e))?,
                None => ApiConfig::default(),
            };
            cfg.apply_env(|k| std::env::var(k).ok());
            let _ = tracing_subscriber::fmt()
                .with_writer(std::io::stderr)
                .with_env_filter(
                    tracing_subscriber::EnvFilter::try_from_default_env()
                        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
                )
                .try_init();
            let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Internal(e.to_string()))?;
            rt.block_on(skycast_service::serve(cfg)).map_err(|e| match e {
                skycast_service::ServeError::Io(io) => CliError::Internal(io.to_string()),
                other => CliError::data("bad_config", other),
            })
        }
    }
}

/// `x.ppm` → `x.json`.
pub fn sidecar_path(raster: &Path) -> PathBuf {
    raster.with_extension("json")
}

#[derive(Serialize)]
struct ErrorLine<'a> {
    error: &'a str,
    message: String,
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(stderr, "{text}");
                    EXIT_USAGE
                }
            };
        }
    };
    let mut out = Output {
        out: stdout,
        pretty: cli.pretty,
    };
    match execute(cli.command, &mut out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let line = ErrorLine {
                error: e.code(),
                message: e.to_string(),
            };
            let _ = writeln!(stderr, "{}", serde_json::to_string(&line).unwrap_or_default());
            if let CliError::Usage(_) = e {
                let _ = writeln!(stderr, "Run `skycast --help` for usage.");
            }
            e.exit_code()
        }
    }
}
