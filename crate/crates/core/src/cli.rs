//! Command-line front end. [`run`] parses arguments, dispatches the subcommand
//! and maps errors to exit codes.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bench::{self, ExperimentConfig, LevelGridSpec, ReportFormat};
use crate::densities::{DensitySpec, Sample};
use crate::error::{Error, Result};
use crate::excess::{self, ExcessMassCurve, FunctionalOptions, Method, PipelineConfig};
use crate::fourier;
use crate::kde;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INPUT: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "excess-mass",
    version,
    about = "Excess-mass estimation from samples"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the excess mass of a sample file or a simulated sample.
    Estimate(EstimateArgs),
    /// Monte Carlo comparison of the functional estimator and the plug-in.
    Benchmark(BenchmarkArgs),
    /// Exact excess mass of a known density by quadrature.
    Oracle(OracleArgs),
    /// Dump the cosine coefficients of the excess-mass kernel.
    Coeffs(CoeffsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodChoice {
    Functional,
    Plugin,
    Both,
    Corrected,
    Wavelet,
}

impl MethodChoice {
    fn methods(self) -> Vec<Method> {
        match self {
            MethodChoice::Functional => vec![Method::FunctionalMean],
            MethodChoice::Plugin => vec![Method::Plugin],
            MethodChoice::Both => vec![Method::FunctionalMean, Method::Plugin],
            MethodChoice::Corrected => vec![Method::FunctionalCorrected],
            MethodChoice::Wavelet => vec![Method::Wavelet],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Headerless CSV sample, one point per row.
    #[arg(long, conflicts_with = "density")]
    pub data: Option<PathBuf>,
    /// Built-in density id or JSON spec path to simulate from.
    #[arg(long, required_unless_present = "data")]
    pub density: Option<String>,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Single level.
    #[arg(long, conflicts_with = "nu_grid")]
    pub nu: Option<f64>,
    /// Level grid `count:lo:hi`.
    #[arg(long, value_name = "COUNT:LO:HI")]
    pub nu_grid: Option<String>,
    #[arg(long, value_enum, default_value_t = MethodChoice::Functional)]
    pub method: MethodChoice,
    /// Fourier order or `auto`.
    #[arg(long, default_value = "auto")]
    pub order: String,
    /// Reference bandwidth (comma separated per axis) or `auto`.
    #[arg(long, default_value = "auto")]
    pub bandwidth: String,
    #[arg(long, default_value_t = kde::DEFAULT_REPLICATIONS)]
    pub bootstrap: usize,
    /// Quadrature points per axis.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Drop the zero-level anchor of the functional estimator.
    #[arg(long)]
    pub raw: bool,
    /// Report negative estimates as 0.
    #[arg(long)]
    pub clamp: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// JSON experiment config; flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated density ids.
    #[arg(long)]
    pub density: Option<String>,
    /// Comma-separated sample sizes.
    #[arg(long)]
    pub n: Option<String>,
    /// Monte Carlo replications.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_name = "COUNT:LO:HI")]
    pub nu_grid: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated methods (plugin, functional, corrected, wavelet).
    #[arg(long)]
    pub methods: Option<String>,
    #[arg(long)]
    pub order: Option<usize>,
    #[arg(long)]
    pub bootstrap: Option<usize>,
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub raw: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long)]
    pub density: String,
    #[arg(long, value_name = "COUNT:LO:HI", default_value = "100:0:1")]
    pub nu_grid: String,
    /// Quadrature points per axis.
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct CoeffsArgs {
    #[arg(long)]
    pub nu: f64,
    #[arg(long, default_value_t = 20)]
    pub order: usize,
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

/// Exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidParameter { .. } => EXIT_USAGE,
        Error::Io(_)
        | Error::Json(_)
        | Error::Csv(_)
        | Error::Malformed { .. }
        | Error::UnknownDensity(_)
        | Error::EmptySample
        | Error::DegenerateSample(_)
        | Error::DimensionMismatch { .. }
        | Error::OutOfDomain { .. } => EXIT_INPUT,
        Error::Overflow(_)
        | Error::NonFinite(_)
        | Error::InvalidBandwidth(_)
        | Error::GridMismatch => EXIT_NUMERIC,
    }
}

/// Runs the CLI with explicit arguments and output stream; returns the exit code.
pub fn run<I, T, W>(args: I, stdout: &mut W, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
    W: Write,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = write!(stderr, "{e}");
            return code;
        }
    };
    match dispatch(cli.command, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch<W: Write>(command: Command, stdout: &mut W) -> Result<()> {
    let (text, out) = match command {
        Command::Estimate(a) => {
            let out = a.out.clone();
            (estimate(&a)?, out)
        }
        Command::Benchmark(a) => {
            let out = a.out.clone();
            (benchmark(&a)?, out)
        }
        Command::Oracle(a) => {
            let out = a.out.clone();
            (oracle(&a)?, out)
        }
        Command::Coeffs(a) => {
            let out = a.out.clone();
            (coeffs(&a)?, out)
        }
    };
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => stdout.write_all(text.as_bytes())?,
    }
    Ok(())
}

/// Built-in id, else a path to a JSON spec.
pub fn resolve_density(id: &str) -> Result<DensitySpec> {
    match DensitySpec::builtin(id) {
        Ok(spec) => Ok(spec),
        Err(Error::UnknownDensity(_)) if Path::new(id).is_file() => {
            DensitySpec::from_json(&std::fs::read_to_string(id)?)
        }
        Err(e) => Err(e),
    }
}

/// Reads a headerless CSV sample; the dimension comes from the first row.
pub fn read_sample<R: Read>(reader: R) -> Result<Sample> {
    let mut dimension = None;
    let mut points = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let row = trimmed
            .split(',')
            .map(|f| {
                f.trim().parse::<f64>().map_err(|_| Error::Malformed {
                    line: i + 1,
                    reason: format!("`{}` is not a number", f.trim()),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(bad) = row.iter().find(|v| !v.is_finite()) {
            return Err(Error::Malformed {
                line: i + 1,
                reason: format!("non-finite value {bad}"),
            });
        }
        let d = *dimension.get_or_insert(row.len());
        if row.len() != d {
            return Err(Error::Malformed {
                line: i + 1,
                reason: format!("expected {d} columns, found {}", row.len()),
            });
        }
        points.extend(row);
    }
    match dimension {
        Some(d) => Sample::new(d, points),
        None => Err(Error::EmptySample),
    }
}

pub fn read_sample_file(path: &Path) -> Result<Sample> {
    read_sample(File::open(path)?)
}

/// Headerless CSV, one point per row.
pub fn write_sample<W: Write>(sample: &Sample, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    for p in sample.points() {
        w.write_record(p.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn parse_levels(nu: Option<f64>, grid: Option<&str>) -> Result<Vec<f64>> {
    match (nu, grid) {
        (Some(v), _) => Ok(vec![v]),
        (None, Some(g)) => LevelGridSpec::parse(g)?.levels(),
        (None, None) => LevelGridSpec::default().levels(),
    }
}

fn parse_auto_usize(name: &'static str, text: &str) -> Result<Option<usize>> {
    if text == "auto" {
        return Ok(None);
    }
    text.parse::<usize>()
        .ok()
        .filter(|&v| v >= 1)
        .map(Some)
        .ok_or_else(|| {
            Error::invalid(
                name,
                format!("expected a positive integer or `auto`, got `{text}`"),
            )
        })
}

fn parse_bandwidth(text: &str, dimension: usize) -> Result<Option<Vec<f64>>> {
    if text == "auto" {
        return Ok(None);
    }
    let values = text
        .split(',')
        .map(|f| f.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<f64>, _>>()
        .map_err(|_| {
            Error::invalid(
                "bandwidth",
                format!("expected numbers or `auto`, got `{text}`"),
            )
        })?;
    let values = match values.as_slice() {
        [h] => vec![*h; dimension],
        _ => values,
    };
    if values.len() != dimension || values.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
        return Err(Error::invalid(
            "bandwidth",
            format!("need {dimension} positive values, got `{text}`"),
        ));
    }
    Ok(Some(values))
}

fn estimate(a: &EstimateArgs) -> Result<String> {
    let levels = parse_levels(a.nu, a.nu_grid.as_deref())?;
    let (sample, support) = match (&a.data, &a.density) {
        (Some(path), _) => {
            let sample = read_sample_file(path)?;
            let h = match parse_bandwidth(&a.bandwidth, sample.dimension())? {
                Some(h) => h,
                None => kde::bandwidth_auto(&sample)?,
            };
            let b = excess::data_box(&sample, &h)?;
            (sample, b)
        }
        (None, Some(id)) => {
            let spec = resolve_density(id)?;
            (spec.sample(a.n, a.seed)?, spec.default_box())
        }
        (None, None) => return Err(Error::invalid("data", "give --data or --density")),
    };
    let config = PipelineConfig {
        order: parse_auto_usize("order", &a.order)?,
        bandwidth: parse_bandwidth(&a.bandwidth, sample.dimension())?,
        replications: a.bootstrap,
        grid_points: a.grid,
        functional: if a.raw {
            FunctionalOptions::raw()
        } else {
            FunctionalOptions::default()
        },
    };
    let out = excess::run_pipeline(
        &sample,
        &support,
        &levels,
        &a.method.methods(),
        &config,
        a.seed,
    )?;
    let curves: Vec<ExcessMassCurve> = if a.clamp {
        out.curves.iter().map(ExcessMassCurve::clamped).collect()
    } else {
        out.curves
    };
    render_curves(&curves, a.format)
}

fn render_curves(curves: &[ExcessMassCurve], format: Format) -> Result<String> {
    match format {
        Format::Csv => {
            let mut buf = Vec::new();
            excess::write_curves_csv(curves, &mut buf)?;
            Ok(String::from_utf8(buf).expect("csv output is utf-8"))
        }
        Format::Json => Ok(serde_json::to_string_pretty(curves)? + "\n"),
        Format::Table => {
            let mut s = format!("{:>10}", "nu");
            for c in curves {
                s += &format!(" {:>22}", c.method().name());
            }
            s.push('\n');
            if let Some(first) = curves.first() {
                for (i, nu) in first.levels().iter().enumerate() {
                    s += &format!("{nu:>10.4}");
                    for c in curves {
                        s += &format!(" {:>22.8}", c.values()[i]);
                    }
                    s.push('\n');
                }
            }
            Ok(s)
        }
    }
}

fn split_list(text: &str) -> Vec<String> {
    text.split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

fn benchmark(a: &BenchmarkArgs) -> Result<String> {
    let base: ExperimentConfig = match &a.config {
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
        None => ExperimentConfig::default(),
    };
    let densities = a
        .density
        .as_deref()
        .map(split_list)
        .unwrap_or_else(|| vec![base.density.clone()]);
    let sizes = match a.n.as_deref() {
        Some(text) => split_list(text)
            .iter()
            .map(|s| {
                s.parse::<usize>()
                    .map_err(|_| Error::invalid("n", format!("`{s}` is not a sample size")))
            })
            .collect::<Result<Vec<_>>>()?,
        None => vec![base.n],
    };
    let methods = match a.methods.as_deref() {
        Some(text) => split_list(text)
            .iter()
            .map(|m| Method::parse(m))
            .collect::<Result<Vec<_>>>()?,
        None => base.methods.clone(),
    };
    let mut reports = Vec::new();
    for density in &densities {
        for &n in &sizes {
            let mut cfg = base.clone();
            cfg.density = density.clone();
            cfg.n = n;
            cfg.methods = methods.clone();
            if let Some(k) = a.k {
                cfg.replications = k;
            }
            if let Some(g) = &a.nu_grid {
                cfg.levels = LevelGridSpec::parse(g)?;
            }
            if let Some(s) = a.seed {
                cfg.seed = s;
            }
            if a.order.is_some() {
                cfg.order = a.order;
            }
            if let Some(b) = a.bootstrap {
                cfg.bootstrap = b;
            }
            if a.grid.is_some() {
                cfg.grid_points = a.grid;
            }
            if a.raw {
                cfg.functional.anchor = false;
            }
            log::info!(
                "benchmark {} n={} K={}",
                cfg.density,
                cfg.n,
                cfg.replications
            );
            reports.push(bench::run_experiment(&cfg)?);
        }
    }
    let format = match a.format {
        Format::Table => ReportFormat::Table,
        Format::Csv => ReportFormat::Csv,
        Format::Json => ReportFormat::Json,
    };
    bench::format_report(&reports, format)
}

fn oracle(a: &OracleArgs) -> Result<String> {
    let spec = resolve_density(&a.density)?;
    let levels = LevelGridSpec::parse(&a.nu_grid)?.levels()?;
    let points = a.grid.unwrap_or(spec.default_oracle_points());
    let curve = spec.oracle_curve_with(&levels, points)?;
    render_curves(&[curve], a.format)
}

fn coeffs(a: &CoeffsArgs) -> Result<String> {
    let c = fourier::coefficients(a.nu, a.order, a.scale)?;
    match a.format {
        Format::Json => Ok(serde_json::to_string_pretty(&c)? + "\n"),
        Format::Csv | Format::Table => {
            let mut w = csv::WriterBuilder::new()
                .has_headers(false)
                .from_writer(Vec::new());
            for (k, v) in c.values().iter().enumerate() {
                w.write_record([k.to_string(), v.to_string()])?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
            Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
        }
    }
}

/// Convenience for the binary: real process arguments and streams.
pub fn main_with_env() -> i32 {
    // unlocked handles: worker threads log to stderr while this runs
    let mut stdout = io::stdout();
    let mut stderr = io::stderr();
    run(std::env::args_os(), &mut stdout, &mut stderr)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_str(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(
            std::iter::once("excess-mass").chain(args.iter().copied()),
            &mut out,
            &mut err,
        );
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn sample_reader() {
        let s = read_sample("1.5,2\n\n-3,4e-1\n".as_bytes()).unwrap();
        assert_eq!(s.dimension(), 2);
        assert_eq!(s.as_flat(), &[1.5, 2.0, -3.0, 0.4]);
        assert!(matches!(
            read_sample("1,2\n3\n".as_bytes()),
            Err(Error::Malformed { line: 2, .. })
        ));
        assert!(matches!(
            read_sample("1\nabc\n".as_bytes()),
            Err(Error::Malformed { line: 2, .. })
        ));
        assert!(matches!(
            read_sample("".as_bytes()),
            Err(Error::EmptySample)
        ));
        assert!(read_sample("nan\n".as_bytes()).is_err());
    }

    #[test]
    fn sample_round_trip() {
        let s = DensitySpec::builtin("C").unwrap().sample(50, 3).unwrap();
        let mut buf = Vec::new();
        write_sample(&s, &mut buf).unwrap();
        let back = read_sample(buf.as_slice()).unwrap();
        assert_eq!(back.as_flat(), s.as_flat());
    }

    #[test]
    fn coeffs_rows() {
        let (code, out, _) = run_str(&["coeffs", "--nu", "0.5", "--order", "3"]);
        assert_eq!(code, 0);
        assert!(out.starts_with("0,0.125\n"));
        let (_, zeros, _) = run_str(&["coeffs", "--nu", "1", "--scale", "1", "--order", "4"]);
        assert!(zeros.lines().all(|l| l.ends_with(",0")));
    }

    #[test]
    fn oracle_endpoints() {
        let (code, out, _) = run_str(&["oracle", "--density", "a", "--nu-grid", "2:0:1"]);
        assert_eq!(code, 0);
        let rows: Vec<Vec<f64>> = out
            .lines()
            .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
            .collect();
        assert!((rows[0][1] - 1.0).abs() < 1e-8);
        assert_eq!(rows[1][1], 0.0);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(run_str(&["frobnicate"]).0, EXIT_USAGE);
        assert_eq!(run_str(&["oracle", "--density", "zz"]).0, EXIT_INPUT);
        assert_eq!(
            run_str(&["oracle", "--density", "a", "--nu-grid", "3"]).0,
            EXIT_USAGE
        );
        assert_eq!(
            run_str(&["estimate", "--data", "/definitely/not/here.csv"]).0,
            EXIT_INPUT
        );
        assert_eq!(run_str(&["--help"]).0, EXIT_OK);
    }
}
