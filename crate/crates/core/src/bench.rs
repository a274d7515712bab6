//! Monte Carlo comparison of the functional estimators against the plug-in.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::densities::DensitySpec;
use crate::error::{Error, Result};
use crate::excess::{self, ExcessMassCurve, FunctionalOptions, Method, PipelineConfig};
use crate::rng::derive_seed;

/// `count:lo:hi` description of an equally spaced level grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelGridSpec {
    pub count: usize,
    pub lo: f64,
    pub hi: f64,
}

impl Default for LevelGridSpec {
    fn default() -> Self {
        Self {
            count: 100,
            lo: 0.0,
            hi: 1.0,
        }
    }
}

impl LevelGridSpec {
    pub fn levels(&self) -> Result<Vec<f64>> {
        excess::level_grid(self.count, self.lo, self.hi)
    }

    /// Parses `count:lo:hi`.
    pub fn parse(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.split(':').collect();
        let bad = || Error::invalid("nu_grid", format!("expected count:lo:hi, got `{text}`"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let spec = Self {
            count: parts[0].trim().parse().map_err(|_| bad())?,
            lo: parts[1].trim().parse().map_err(|_| bad())?,
            hi: parts[2].trim().parse().map_err(|_| bad())?,
        };
        spec.levels()?;
        Ok(spec)
    }
}

/// One benchmark configuration: a density, a sample size and the methods to compare.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Built-in id or path to a JSON density spec.
    pub density: String,
    pub n: usize,
    pub replications: usize,
    pub levels: LevelGridSpec,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub order: Option<usize>,
    pub bandwidth: Option<Vec<f64>>,
    pub bootstrap: usize,
    pub grid_points: Option<usize>,
    pub oracle_points: Option<usize>,
    pub functional: FunctionalOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            density: "a".to_string(),
            n: 1000,
            replications: 20,
            levels: LevelGridSpec::default(),
            seed: 1,
            methods: vec![Method::Plugin, Method::FunctionalMean],
            order: None,
            bandwidth: None,
            bootstrap: crate::kde::DEFAULT_REPLICATIONS,
            grid_points: None,
            oracle_points: None,
            functional: FunctionalOptions::default(),
        }
    }
}

impl ExperimentConfig {
    /// Every problem with the config, one message each.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.n < 3 {
            out.push(format!("n must be at least 3, got {}", self.n));
        }
        if self.replications == 0 {
            out.push("replications must be at least 1".to_string());
        }
        if self.levels.count < 2 {
            out.push(format!(
                "level grid needs at least 2 points, got {}",
                self.levels.count
            ));
        }
        if let Err(e) = self.levels.levels() {
            out.push(e.to_string());
        }
        if self.bootstrap < 2 {
            out.push(format!(
                "bootstrap needs at least 2 replications, got {}",
                self.bootstrap
            ));
        }
        if self.methods.contains(&Method::Oracle) {
            out.push("oracle is the reference, not a method to benchmark".to_string());
        }
        let mut seen = self.methods.clone();
        seen.sort_by_key(|m| m.name());
        seen.dedup();
        if seen.len() != self.methods.len() {
            out.push("methods are listed more than once".to_string());
        }
        if self.order == Some(0) {
            out.push("order must be at least 1".to_string());
        }
        if let Some(g) = self.grid_points {
            if g < 2 {
                out.push(format!("grid_points must be at least 2, got {g}"));
            }
        }
        if let Some(g) = self.oracle_points {
            if g < 64 {
                out.push(format!("oracle_points must be at least 64, got {g}"));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::invalid("config", problems.join("; ")))
        }
    }

    pub fn resolve_density(&self) -> Result<DensitySpec> {
        match DensitySpec::builtin(&self.density) {
            Ok(spec) => Ok(spec),
            Err(Error::UnknownDensity(_)) if Path::new(&self.density).is_file() => {
                DensitySpec::from_json(&std::fs::read_to_string(&self.density)?)
            }
            Err(e) => Err(e),
        }
    }

    fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            order: self.order,
            bandwidth: self.bandwidth.clone(),
            replications: self.bootstrap,
            grid_points: self.grid_points,
            functional: self.functional,
        }
    }
}

/// `E_2 = sum (diff^2) * d_nu` over the level grid and `E_inf = max |diff|`.
pub fn error_metrics(estimate: &ExcessMassCurve, oracle: &ExcessMassCurve) -> Result<(f64, f64)> {
    if estimate.levels() != oracle.levels() {
        return Err(Error::GridMismatch);
    }
    let levels = estimate.levels();
    let step = if levels.len() > 1 {
        (levels[levels.len() - 1] - levels[0]) / (levels.len() - 1) as f64
    } else {
        1.0
    };
    let mut sq = 0.0;
    let mut sup: f64 = 0.0;
    for (a, b) in estimate.values().iter().zip(oracle.values()) {
        let diff = a - b;
        sq += diff * diff;
        sup = sup.max(diff.abs());
    }
    Ok((sq * step, sup))
}

/// Errors of one method in one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub index: usize,
    pub seed: u64,
    pub method: Method,
    pub e2: f64,
    pub einf: f64,
}

/// A configuration with its density and oracle curve resolved once.
#[derive(Debug, Clone)]
pub struct Experiment {
    config: ExperimentConfig,
    spec: DensitySpec,
    levels: Vec<f64>,
    oracle: ExcessMassCurve,
}

impl Experiment {
    pub fn prepare(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let spec = config.resolve_density()?;
        let levels = config.levels.levels()?;
        let points = config.oracle_points.unwrap_or(spec.default_oracle_points());
        let oracle = spec.oracle_curve_with(&levels, points)?;
        Ok(Self {
            config,
            spec,
            levels,
            oracle,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn oracle(&self) -> &ExcessMassCurve {
        &self.oracle
    }

    /// Sample, fit and score replication `index`; deterministic in `(seed, index)`.
    pub fn run_replication(&self, index: usize) -> Result<Vec<ReplicationRecord>> {
        let seed = derive_seed(self.config.seed, index as u64);
        if self.config.methods.is_empty() {
            return Ok(Vec::new());
        }
        let sample = self.spec.sample(self.config.n, seed)?;
        let out = excess::run_pipeline(
            &sample,
            &self.spec.default_box(),
            &self.levels,
            &self.config.methods,
            &self.config.pipeline(),
            derive_seed(seed, u64::MAX),
        )?;
        out.curves
            .iter()
            .map(|c| {
                let (e2, einf) = error_metrics(c, &self.oracle)?;
                Ok(ReplicationRecord {
                    index,
                    seed,
                    method: c.method(),
                    e2,
                    einf,
                })
            })
            .collect()
    }

    pub fn run(&self) -> Result<BenchmarkReport> {
        let per_rep = (0..self.config.replications)
            .into_par_iter()
            .map(|i| self.run_replication(i))
            .collect::<Result<Vec<_>>>()?;
        let records: Vec<ReplicationRecord> = per_rep.into_iter().flatten().collect();
        Ok(BenchmarkReport::aggregate(self.config.clone(), records))
    }
}

pub fn run_replication(config: &ExperimentConfig, index: usize) -> Result<Vec<ReplicationRecord>> {
    Experiment::prepare(config.clone())?.run_replication(index)
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<BenchmarkReport> {
    Experiment::prepare(config.clone())?.run()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub mean_e2: f64,
    pub mean_einf: f64,
}

/// Plug-in against one functional method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub method: Method,
    /// `mean E_2 plug-in / mean E_2 functional`.
    pub ratio_e2: f64,
    pub ratio_einf: f64,
    /// Fraction of replications where the functional error is strictly smaller.
    pub win_e2: f64,
    pub win_einf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub config: ExperimentConfig,
    pub summaries: Vec<MethodSummary>,
    pub comparisons: Vec<Comparison>,
    pub records: Vec<ReplicationRecord>,
}

impl BenchmarkReport {
    /// Means per method and plug-in comparisons, folded in replication order.
    pub fn aggregate(config: ExperimentConfig, records: Vec<ReplicationRecord>) -> Self {
        let k = config.replications as f64;
        let summaries: Vec<MethodSummary> = config
            .methods
            .iter()
            .map(|&method| {
                let (s2, sinf) = records
                    .iter()
                    .filter(|r| r.method == method)
                    .fold((0.0, 0.0), |(a, b), r| (a + r.e2, b + r.einf));
                MethodSummary {
                    method,
                    mean_e2: s2 / k,
                    mean_einf: sinf / k,
                }
            })
            .collect();
        let plugin = summaries.iter().find(|s| s.method == Method::Plugin);
        let comparisons = match plugin {
            None => Vec::new(),
            Some(pi) => summaries
                .iter()
                .filter(|s| s.method.is_functional())
                .map(|f| {
                    let (mut w2, mut winf) = (0usize, 0usize);
                    for i in 0..config.replications {
                        let find = |m| records.iter().find(|r| r.index == i && r.method == m);
                        if let (Some(p), Some(q)) = (find(Method::Plugin), find(f.method)) {
                            w2 += usize::from(q.e2 < p.e2);
                            winf += usize::from(q.einf < p.einf);
                        }
                    }
                    Comparison {
                        method: f.method,
                        ratio_e2: pi.mean_e2 / f.mean_e2,
                        ratio_einf: pi.mean_einf / f.mean_einf,
                        win_e2: w2 as f64 / k,
                        win_einf: winf as f64 / k,
                    }
                })
                .collect(),
        };
        Self {
            config,
            summaries,
            comparisons,
            records,
        }
    }

    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }

    pub fn comparison(&self, method: Method) -> Option<&Comparison> {
        self.comparisons.iter().find(|c| c.method == method)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Table,
    Csv,
    Json,
}

impl ReportFormat {
    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "table" => Ok(Self::Table),
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(Error::invalid(
                "format",
                format!("unknown format `{other}`"),
            )),
        }
    }
}

const TABLE_HEADER: [&str; 10] = [
    "f", "n", "E2_PI", "E2_*", "ratio", "p2", "Einf_PI", "Einf_*", "ratio", "pinf",
];

/// One row per (report, functional method) with the plug-in in the reference columns.
pub fn format_report(reports: &[BenchmarkReport], format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => Ok(serde_json::to_string_pretty(reports)?),
        ReportFormat::Table => Ok(format_table(reports)),
        ReportFormat::Csv => format_csv(reports),
    }
}

fn rows(reports: &[BenchmarkReport]) -> Vec<[String; 11]> {
    let mut out = Vec::new();
    for r in reports {
        let Some(pi) = r.summary(Method::Plugin) else {
            continue;
        };
        for c in &r.comparisons {
            let f = r
                .summary(c.method)
                .expect("compared methods are summarised");
            out.push([
                r.config.density.clone(),
                r.config.n.to_string(),
                pi.mean_e2.to_string(),
                f.mean_e2.to_string(),
                c.ratio_e2.to_string(),
                c.win_e2.to_string(),
                pi.mean_einf.to_string(),
                f.mean_einf.to_string(),
                c.ratio_einf.to_string(),
                c.win_einf.to_string(),
                c.method.name().to_string(),
            ]);
        }
    }
    out
}

fn format_table(reports: &[BenchmarkReport]) -> String {
    let mut s = String::new();
    let widths = [4, 6, 10, 10, 7, 5, 9, 9, 7, 5];
    for (h, w) in TABLE_HEADER.iter().zip(widths) {
        let _ = write!(s, "{h:>w$} ");
    }
    s.pop();
    s.push('\n');
    for row in rows(reports) {
        let num = |i: usize| row[i].parse::<f64>().unwrap_or(f64::NAN);
        let _ = writeln!(
            s,
            "{:>4} {:>6} {:>10.5} {:>10.5} {:>7.2} {:>5.2} {:>9.4} {:>9.4} {:>7.2} {:>5.2}",
            row[0],
            row[1],
            num(2),
            num(3),
            num(4),
            num(5),
            num(6),
            num(7),
            num(8),
            num(9)
        );
    }
    s
}

fn format_csv(reports: &[BenchmarkReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "f",
        "n",
        "e2_plugin",
        "e2_functional",
        "ratio_e2",
        "p2",
        "einf_plugin",
        "einf_functional",
        "ratio_einf",
        "pinf",
        "method",
    ])?;
    for row in rows(reports) {
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::excess::CurveParameters;

    fn curve(values: Vec<f64>) -> ExcessMassCurve {
        let levels = excess::level_grid(values.len(), 0.0, 1.0).unwrap();
        ExcessMassCurve::new(levels, values, Method::Plugin, CurveParameters::default()).unwrap()
    }

    #[test]
    fn metrics_examples() {
        let a = curve(vec![0.3; 101]);
        assert_eq!(error_metrics(&a, &a).unwrap(), (0.0, 0.0));
        let b = curve(vec![0.3 + 0.1; 101]);
        let (e2, einf) = error_metrics(&b, &a).unwrap();
        // 101 points: the plain sum counts one extra cell
        assert!((e2 - 0.01 * 101.0 / 100.0).abs() < 1e-12);
        assert!((einf - 0.1).abs() < 1e-12);
        let half: Vec<f64> = (0..101).map(|i| if i < 50 { 0.4 } else { 0.3 }).collect();
        let (e2h, _) = error_metrics(&curve(half), &a).unwrap();
        assert!((e2h - 0.005).abs() <= 0.01 * 0.01 + 1e-12);
        let short = curve(vec![0.3; 10]);
        assert!(matches!(
            error_metrics(&short, &a),
            Err(Error::GridMismatch)
        ));
    }

    #[test]
    fn grid_spec_parsing() {
        let g = LevelGridSpec::parse("100:0:1").unwrap();
        assert_eq!((g.count, g.lo, g.hi), (100, 0.0, 1.0));
        assert!(LevelGridSpec::parse("100:0").is_err());
        assert!(LevelGridSpec::parse("x:0:1").is_err());
        assert!(LevelGridSpec::parse("5:1:0").is_err());
    }

    #[test]
    fn config_problems_are_enumerated() {
        let cfg = ExperimentConfig {
            n: 1,
            replications: 0,
            bootstrap: 1,
            methods: vec![Method::Oracle],
            ..Default::default()
        };
        assert_eq!(cfg.problems().len(), 4);
        assert!(ExperimentConfig::default().validate().is_ok());
        let unknown = ExperimentConfig {
            density: "nope".into(),
            ..Default::default()
        };
        assert!(matches!(
            unknown.resolve_density(),
            Err(Error::UnknownDensity(_))
        ));
    }

    fn record(index: usize, method: Method, e2: f64, einf: f64) -> ReplicationRecord {
        ReplicationRecord {
            index,
            seed: 0,
            method,
            e2,
            einf,
        }
    }

    #[test]
    fn aggregation_rules() {
        let cfg = ExperimentConfig {
            replications: 2,
            ..Default::default()
        };
        let wins = vec![
            record(0, Method::Plugin, 2.0, 2.0),
            record(0, Method::FunctionalMean, 1.0, 1.0),
            record(1, Method::Plugin, 4.0, 2.0),
            record(1, Method::FunctionalMean, 1.0, 1.0),
        ];
        let r = BenchmarkReport::aggregate(cfg.clone(), wins);
        let c = r.comparison(Method::FunctionalMean).unwrap();
        assert_eq!((c.win_e2, c.win_einf), (1.0, 1.0));
        assert_eq!(c.ratio_e2, 3.0);
        assert_eq!(r.summary(Method::Plugin).unwrap().mean_e2, 3.0);
        let ties = vec![
            record(0, Method::Plugin, 1.0, 1.0),
            record(0, Method::FunctionalMean, 1.0, 1.0),
            record(1, Method::Plugin, 1.0, 1.0),
            record(1, Method::FunctionalMean, 1.0, 1.0),
        ];
        let t = BenchmarkReport::aggregate(cfg, ties);
        assert_eq!(t.comparison(Method::FunctionalMean).unwrap().win_e2, 0.0);
    }

    #[test]
    fn plugin_only_has_no_ratios() {
        let cfg = ExperimentConfig {
            methods: vec![Method::Plugin],
            replications: 1,
            ..Default::default()
        };
        let r = BenchmarkReport::aggregate(cfg, vec![record(0, Method::Plugin, 1.0, 1.0)]);
        assert!(r.comparisons.is_empty());
    }

    #[test]
    fn formats() {
        let cfg = ExperimentConfig {
            methods: vec![],
            replications: 1,
            ..Default::default()
        };
        let empty = BenchmarkReport::aggregate(cfg, vec![]);
        let table = format_report(std::slice::from_ref(&empty), ReportFormat::Table).unwrap();
        assert_eq!(table.lines().count(), 1);
        assert_eq!(table.split_whitespace().count(), 10);
        let json = format_report(std::slice::from_ref(&empty), ReportFormat::Json).unwrap();
        let back: Vec<BenchmarkReport> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, vec![empty]);
        assert!(ReportFormat::parse("xml").is_err());
    }
}
