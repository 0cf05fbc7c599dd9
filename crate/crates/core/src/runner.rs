//! Experiment orchestration: runs every society of every selected strategy on
//! a worker pool, persists the per-generation logs and final consumption
//! cross-sections, and aggregates them into the summary report.
//!
//! Output layout under the output directory:
//!
//! ```text
//! <strategy>/generations.<csv|json>
//! <strategy>/final_consumption.<csv|json>
//! report.<csv|json>
//! meta.json
//! effective_config.toml
//! ```

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, OutputFormat};
use crate::error::{Error, Result};
use crate::evolution::{found_society, run_society, GenerationRecord, SocietyConfig};
use crate::metrics::{build_report, ExperimentReport, ReportMetadata, SocietySummary};
use crate::strategies::StrategyKind;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MORTALITY_NORMALIZATION: &str = "deaths per agent-generation";

const GENERATION_COLUMNS: [&str; 15] = [
    "society_index",
    "generation",
    "population",
    "births",
    "deaths",
    "total_labor",
    "total_output",
    "mean_consumption",
    "consumption_cv",
    "consumption_skewness",
    "min_utility",
    "mean_utility",
    "mean_fertility",
    "failed",
    "capped",
];

/// Everything one society produced.
#[derive(Debug, Clone, PartialEq)]
pub struct SocietyRun {
    pub society_index: u64,
    pub records: Vec<GenerationRecord>,
    /// Consumption of every agent in the last simulated generation.
    pub final_sample: Vec<f64>,
}

impl SocietyRun {
    pub fn final_generation(&self) -> u32 {
        self.records.last().map_or(0, |r| r.generation)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyRun {
    pub strategy: StrategyKind,
    /// Ordered by society index.
    pub societies: Vec<SocietyRun>,
}

/// Provenance written at the top of every output file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHeader {
    pub version: String,
    pub master_seed: u64,
    pub config_digest: String,
}

impl FileHeader {
    pub fn for_config(cfg: &ExperimentConfig) -> Self {
        Self { version: VERSION.to_string(), master_seed: cfg.master_seed, config_digest: cfg.digest() }
    }

    fn comment_lines(&self) -> String {
        format!(
            "# version = {}\n# master_seed = {}\n# config_digest = {}\n",
            self.version, self.master_seed, self.config_digest
        )
    }

    fn report_metadata(&self) -> ReportMetadata {
        ReportMetadata {
            master_seed: self.master_seed,
            config_digest: self.config_digest.clone(),
            version: self.version.clone(),
            mortality_normalization: MORTALITY_NORMALIZATION.to_string(),
        }
    }
}

/// Result of [`run_experiment`].
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub report: ExperimentReport,
    pub runs: Vec<StrategyRun>,
}

fn worker_count(cfg: &ExperimentConfig) -> usize {
    cfg.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn run_one(kind: StrategyKind, index: u64, society_cfg: &SocietyConfig, cfg: &ExperimentConfig) -> Result<SocietyRun> {
    let mut society = found_society(index, kind, society_cfg, cfg.master_seed)?;
    let records = run_society(&mut society, cfg.generations)?;
    Ok(SocietyRun { society_index: index, records, final_sample: society.last_consumptions().to_vec() })
}

/// Runs all societies of every executed strategy without touching the disk.
/// Output does not depend on the worker count.
pub fn simulate(cfg: &ExperimentConfig) -> Result<Vec<StrategyRun>> {
    cfg.validate()?;
    let society_cfg = cfg.society_config();
    let strategies = cfg.executed_strategies();
    let jobs: Vec<(StrategyKind, u64)> =
        strategies.iter().flat_map(|&k| (0..cfg.societies).map(move |i| (k, i))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count(cfg))
        .build()
        .map_err(|e| Error::State(format!("cannot start worker pool: {e}")))?;
    let results: Vec<SocietyRun> = pool.install(|| {
        jobs.par_iter().map(|&(kind, index)| run_one(kind, index, &society_cfg, cfg)).collect::<Result<Vec<_>>>()
    })?;
    let mut results = results.into_iter();
    Ok(strategies
        .into_iter()
        .map(|strategy| StrategyRun { strategy, societies: results.by_ref().take(cfg.societies as usize).collect() })
        .collect())
}

pub fn summarize(runs: &[StrategyRun]) -> Result<Vec<SocietySummary>> {
    runs.iter()
        .flat_map(|run| run.societies.iter().map(move |s| (run.strategy, s)))
        .map(|(strategy, s)| SocietySummary::from_records(s.society_index, strategy, &s.records, s.final_sample.clone()))
        .collect()
}

pub fn report_from_runs(runs: &[StrategyRun], header: &FileHeader) -> Result<ExperimentReport> {
    build_report(&summarize(runs)?, header.report_metadata())
}

/// Runs the experiment and writes logs, report, metadata and the effective
/// configuration under `cfg.output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let out = &cfg.output_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let runs = simulate(cfg)?;
    let header = FileHeader::for_config(cfg);
    for run in &runs {
        let dir = out.join(run.strategy.label());
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        write_generation_log(&dir, &header, run, cfg.format)?;
        write_samples(&dir, &header, run, cfg.format)?;
    }
    let report = report_from_runs(&runs, &header)?;
    write_report(out, &report, cfg.format)?;
    write_meta(out, cfg, &header)?;
    let toml = cfg.to_toml()?;
    write_file(&out.join("effective_config.toml"), &format!("{}{toml}", header.comment_lines()))?;
    Ok(ExperimentOutput { report, runs })
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn real(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt_real(x: Option<f64>) -> String {
    x.map(real).unwrap_or_default()
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format { path: path.to_path_buf(), reason: format!("{other:?}") },
    }
}

fn json_err(path: &Path, e: serde_json::Error) -> Error {
    if e.is_io() {
        Error::io(path, e.into())
    } else {
        Error::Format { path: path.to_path_buf(), reason: e.to_string() }
    }
}

/// One row of a generation log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LogRow {
    society_index: u64,
    generation: u32,
    population: u64,
    births: u64,
    deaths: u64,
    total_labor: f64,
    total_output: f64,
    mean_consumption: f64,
    consumption_cv: Option<f64>,
    consumption_skewness: Option<f64>,
    min_utility: f64,
    mean_utility: f64,
    mean_fertility: f64,
    failed: bool,
    capped: bool,
}

impl LogRow {
    fn new(society_index: u64, r: &GenerationRecord) -> Self {
        Self {
            society_index,
            generation: r.generation,
            population: r.population,
            births: r.births,
            deaths: r.deaths,
            total_labor: r.total_labor,
            total_output: r.total_output,
            mean_consumption: r.mean_consumption,
            consumption_cv: r.consumption_cv,
            consumption_skewness: r.consumption_skewness,
            min_utility: r.min_utility,
            mean_utility: r.mean_utility,
            mean_fertility: r.mean_fertility,
            failed: r.failed,
            capped: r.capped,
        }
    }

    fn record(&self) -> GenerationRecord {
        GenerationRecord {
            generation: self.generation,
            population: self.population,
            births: self.births,
            deaths: self.deaths,
            total_labor: self.total_labor,
            total_output: self.total_output,
            mean_consumption: self.mean_consumption,
            consumption_cv: self.consumption_cv,
            consumption_skewness: self.consumption_skewness,
            min_utility: self.min_utility,
            mean_utility: self.mean_utility,
            mean_fertility: self.mean_fertility,
            failed: self.failed,
            capped: self.capped,
        }
    }

    fn csv_fields(&self) -> [String; 15] {
        [
            self.society_index.to_string(),
            self.generation.to_string(),
            self.population.to_string(),
            self.births.to_string(),
            self.deaths.to_string(),
            real(self.total_labor),
            real(self.total_output),
            real(self.mean_consumption),
            opt_real(self.consumption_cv),
            opt_real(self.consumption_skewness),
            real(self.min_utility),
            real(self.mean_utility),
            real(self.mean_fertility),
            self.failed.to_string(),
            self.capped.to_string(),
        ]
    }
}

#[derive(Serialize, Deserialize)]
struct JsonLog<T> {
    metadata: FileHeader,
    strategy: StrategyKind,
    rows: Vec<T>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SampleRow {
    society_index: u64,
    generation: u32,
    consumption: Vec<f64>,
}

pub fn generation_log_path(dir: &Path, format: OutputFormat) -> PathBuf {
    dir.join(format!("generations.{}", format.extension()))
}

pub fn samples_path(dir: &Path, format: OutputFormat) -> PathBuf {
    dir.join(format!("final_consumption.{}", format.extension()))
}

fn write_csv<I>(path: &Path, header: &FileHeader, columns: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator,
    I::Item: IntoIterator,
    <I::Item as IntoIterator>::Item: AsRef<[u8]>,
{
    let mut out = create(path)?;
    out.write_all(header.comment_lines().as_bytes()).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(columns).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| json_err(path, e))?;
    out.write_all(b"\n").and_then(|_| out.flush()).map_err(|e| Error::io(path, e))
}

fn write_generation_log(dir: &Path, header: &FileHeader, run: &StrategyRun, format: OutputFormat) -> Result<()> {
    let rows =
        run.societies.iter().flat_map(|s| s.records.iter().map(move |r| LogRow::new(s.society_index, r)));
    let path = generation_log_path(dir, format);
    match format {
        OutputFormat::Csv => write_csv(&path, header, &GENERATION_COLUMNS, rows.map(|r| r.csv_fields())),
        OutputFormat::Json => {
            write_json(&path, &JsonLog { metadata: header.clone(), strategy: run.strategy, rows: rows.collect() })
        }
    }
}

fn write_samples(dir: &Path, header: &FileHeader, run: &StrategyRun, format: OutputFormat) -> Result<()> {
    let path = samples_path(dir, format);
    match format {
        OutputFormat::Csv => {
            let rows = run.societies.iter().flat_map(|s| {
                let generation = s.final_generation().to_string();
                s.final_sample.iter().map(move |&c| [s.society_index.to_string(), generation.clone(), real(c)])
            });
            write_csv(&path, header, &["society_index", "generation", "consumption"], rows)
        }
        OutputFormat::Json => {
            let rows = run
                .societies
                .iter()
                .map(|s| SampleRow {
                    society_index: s.society_index,
                    generation: s.final_generation(),
                    consumption: s.final_sample.clone(),
                })
                .collect();
            write_json(&path, &JsonLog { metadata: header.clone(), strategy: run.strategy, rows })
        }
    }
}

/// The five report rows as (label, per-strategy value).
fn report_rows(report: &ExperimentReport) -> [(&'static str, Vec<Option<f64>>); 5] {
    let col = |f: fn(&crate::metrics::StrategyRow) -> Option<f64>| report.rows.iter().map(f).collect::<Vec<_>>();
    [
        ("growth_pct", col(|r| r.growth)),
        ("recession_pct", col(|r| r.recession_frequency)),
        ("mortality_index_pct", col(|r| r.mortality_index)),
        ("cv_index_pct", col(|r| r.cv_index)),
        ("failed_pct", col(|r| Some(r.failed_pct))),
    ]
}

pub fn report_path(dir: &Path, format: OutputFormat) -> PathBuf {
    dir.join(format!("report.{}", format.extension()))
}

pub fn write_report(dir: &Path, report: &ExperimentReport, format: OutputFormat) -> Result<()> {
    let path = report_path(dir, format);
    match format {
        OutputFormat::Json => write_json(&path, report),
        OutputFormat::Csv => {
            let m = &report.metadata;
            let header = FileHeader {
                version: m.version.clone(),
                master_seed: m.master_seed,
                config_digest: m.config_digest.clone(),
            };
            let mut columns = vec!["metric"];
            columns.extend(report.rows.iter().map(|r| r.strategy.label()));
            let rows = report_rows(report).map(|(label, values)| {
                let mut row = vec![label.to_string()];
                row.extend(values.into_iter().map(|v| v.map(real).unwrap_or_else(|| "undefined".into())));
                row
            });
            write_csv(&path, &header, &columns, rows)
        }
    }
}

fn write_meta(dir: &Path, cfg: &ExperimentConfig, header: &FileHeader) -> Result<()> {
    let meta = serde_json::json!({
        "version": header.version,
        "master_seed": header.master_seed,
        "config_digest": header.config_digest,
        "generated_at": chrono::Utc::now().to_rfc3339(),
        "executed_strategies": cfg.executed_strategies(),
        "format": cfg.format,
        "mortality_normalization": MORTALITY_NORMALIZATION,
        "cv_aggregation": "per-generation CV of consumption, averaged over generations, then over non-failed societies",
        "recession_denominator": "recessions per 100 completed generations",
        "effective_config": cfg,
    });
    write_json(&dir.join("meta.json"), &meta)
}

/// Renders the report as an aligned plain-text table.
pub fn format_report(report: &ExperimentReport) -> String {
    let labels = ["Growth", "Recession", "Mortality", "CV", "Pct. Failed"];
    let mut s = format!("{:<12}", "");
    for row in &report.rows {
        let _ = write!(s, "{:>12}", format!("Strategy {}", row.strategy));
    }
    s.push('\n');
    for (label, (_, values)) in labels.iter().zip(report_rows(report)) {
        let _ = write!(s, "{label:<12}");
        for v in values {
            let cell = v.map_or_else(|| "undefined".to_string(), |v| format!("{v:.2}%"));
            let _ = write!(s, "{cell:>12}");
        }
        s.push('\n');
    }
    s
}

/// A run directory read back from disk.
#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub header: FileHeader,
    pub format: OutputFormat,
    pub runs: Vec<StrategyRun>,
}

fn detect_format(dir: &Path) -> Option<OutputFormat> {
    [OutputFormat::Csv, OutputFormat::Json].into_iter().find(|&f| generation_log_path(dir, f).is_file())
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_header(path: &Path, text: &str) -> Result<FileHeader> {
    let mut version = None;
    let mut seed = None;
    let mut digest = None;
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        let Some((key, value)) = line.trim_start_matches('#').split_once('=') else { continue };
        let value = value.trim().to_string();
        match key.trim() {
            "version" => version = Some(value),
            "master_seed" => seed = value.parse().ok(),
            "config_digest" => digest = Some(value),
            _ => {}
        }
    }
    match (version, seed, digest) {
        (Some(version), Some(master_seed), Some(config_digest)) => Ok(FileHeader { version, master_seed, config_digest }),
        _ => Err(Error::Format { path: path.to_path_buf(), reason: "missing metadata header".into() }),
    }
}

fn read_csv_rows<T: serde::de::DeserializeOwned>(path: &Path) -> Result<(FileHeader, Vec<T>)> {
    let text = read_to_string(path)?;
    let header = parse_header(path, &text)?;
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let rows = reader.deserialize().collect::<std::result::Result<Vec<T>, _>>().map_err(|e| csv_err(path, e))?;
    Ok((header, rows))
}

fn read_json_rows<T: serde::de::DeserializeOwned>(path: &Path) -> Result<(FileHeader, Vec<T>)> {
    let text = read_to_string(path)?;
    let log: JsonLog<T> = serde_json::from_str(&text).map_err(|e| json_err(path, e))?;
    Ok((log.metadata, log.rows))
}

#[derive(Deserialize)]
struct CsvSample {
    society_index: u64,
    generation: u32,
    consumption: f64,
}

/// Final consumption cross-section of each society, keyed by society index.
pub fn read_samples(dir: &Path, format: OutputFormat) -> Result<Vec<(u64, u32, Vec<f64>)>> {
    let path = samples_path(dir, format);
    let rows: Vec<SampleRow> = match format {
        OutputFormat::Json => read_json_rows(&path)?.1,
        OutputFormat::Csv => {
            let mut out: Vec<SampleRow> = Vec::new();
            for s in read_csv_rows::<CsvSample>(&path)?.1 {
                match out.last_mut() {
                    Some(last) if last.society_index == s.society_index => last.consumption.push(s.consumption),
                    _ => out.push(SampleRow {
                        society_index: s.society_index,
                        generation: s.generation,
                        consumption: vec![s.consumption],
                    }),
                }
            }
            out
        }
    };
    Ok(rows.into_iter().map(|r| (r.society_index, r.generation, r.consumption)).collect())
}

/// Reads every strategy subdirectory of a run directory.
pub fn load_run(dir: &Path) -> Result<LoadedRun> {
    if !dir.is_dir() {
        return Err(Error::io(dir, std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory")));
    }
    let mut header: Option<FileHeader> = None;
    let mut format = None;
    let mut runs = Vec::new();
    for strategy in StrategyKind::ALL {
        let sub = dir.join(strategy.label());
        let Some(fmt) = detect_format(&sub) else { continue };
        let path = generation_log_path(&sub, fmt);
        let (h, rows): (FileHeader, Vec<LogRow>) = match fmt {
            OutputFormat::Csv => read_csv_rows(&path)?,
            OutputFormat::Json => read_json_rows(&path)?,
        };
        if header.as_ref().is_some_and(|prev| *prev != h) {
            return Err(Error::Format { path, reason: "metadata header differs from other strategies".into() });
        }
        header = Some(h);
        format = Some(fmt);

        let mut societies: Vec<SocietyRun> = Vec::new();
        for row in rows {
            match societies.last_mut() {
                Some(s) if s.society_index == row.society_index => s.records.push(row.record()),
                _ => societies.push(SocietyRun {
                    society_index: row.society_index,
                    records: vec![row.record()],
                    final_sample: Vec::new(),
                }),
            }
        }
        for (index, _, sample) in read_samples(&sub, fmt)? {
            if let Some(s) = societies.iter_mut().find(|s| s.society_index == index) {
                s.final_sample = sample;
            }
        }
        runs.push(StrategyRun { strategy, societies });
    }
    match (header, format) {
        (Some(header), Some(format)) => Ok(LoadedRun { header, format, runs }),
        _ => Err(Error::Format { path: dir.to_path_buf(), reason: "no generation logs found".into() }),
    }
}

/// Recomputes the report of a finished run from its logs and rewrites
/// `report.*` in the run directory.
pub fn report_from_dir(dir: &Path) -> Result<ExperimentReport> {
    let loaded = load_run(dir)?;
    let report = report_from_runs(&loaded.runs, &loaded.header)?;
    write_report(dir, &report, loaded.format)?;
    Ok(report)
}

/// Which generation a histogram is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenerationChoice {
    Last,
    At(u32),
}

impl std::str::FromStr for GenerationChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "last" {
            return Ok(GenerationChoice::Last);
        }
        s.parse()
            .map(GenerationChoice::At)
            .map_err(|_| Error::Usage(format!("--generation expects `last` or a generation number, got `{s}`")))
    }
}

/// Draws the final-generation consumption of society `society` under two
/// strategies of a run directory as an SVG overlay at `out`. Returns the
/// skewness of each sample, `None` where undefined.
pub fn histogram_from_dir(
    dir: &Path,
    strategies: [StrategyKind; 2],
    generation: GenerationChoice,
    society: u64,
    out: &Path,
) -> Result<[Option<f64>; 2]> {
    let loaded = load_run(dir)?;
    let mut samples = Vec::new();
    for kind in strategies {
        let run = loaded
            .runs
            .iter()
            .find(|r| r.strategy == kind)
            .ok_or_else(|| Error::Usage(format!("run directory has no logs for Strategy {kind}")))?;
        let s = run
            .societies
            .iter()
            .find(|s| s.society_index == society)
            .ok_or_else(|| Error::Usage(format!("Strategy {kind} has no society {society}")))?;
        if let GenerationChoice::At(g) = generation {
            if g != s.final_generation() {
                return Err(Error::Usage(format!(
                    "only the final generation ({}) of Strategy {kind} society {society} is stored, not {g}",
                    s.final_generation()
                )));
            }
        }
        samples.push((kind, s.final_generation(), s.final_sample.clone()));
    }
    let labels: Vec<String> = samples.iter().map(|(k, g, _)| format!("Strategy {k}, generation {g}")).collect();
    let series = [
        crate::histogram::Series { label: &labels[0], values: &samples[0].2 },
        crate::histogram::Series { label: &labels[1], values: &samples[1].2 },
    ];
    let h = &loaded.header;
    let header = vec![
        format!("version = {}", h.version),
        format!("master_seed = {}", h.master_seed),
        format!("config_digest = {}", h.config_digest),
    ];
    let title = format!("Consumption of society {society}, Strategy {} vs Strategy {}", strategies[0], strategies[1]);
    crate::histogram::emit_histogram(&series, &title, &header, out)?;
    Ok([0, 1].map(|i| crate::metrics::skewness(&samples[i].2).ok()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(dir: &Path, format: OutputFormat) -> ExperimentConfig {
        ExperimentConfig {
            strategies: vec![StrategyKind::S0, StrategyKind::Sb],
            societies: 2,
            generations: 3,
            initial_population: 12,
            output_dir: dir.to_path_buf(),
            format,
            workers: Some(2),
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn real_formatting_round_trips() {
        for x in [0.1, 1.0 / 3.0, 2.5e-300, 123456.789, f64::MAX, 5e-324] {
            assert_eq!(real(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn logs_reload_to_the_same_report() {
        for format in [OutputFormat::Csv, OutputFormat::Json] {
            let dir = tempfile::tempdir().unwrap();
            let cfg = tiny(dir.path(), format);
            let out = run_experiment(&cfg).unwrap();
            let loaded = load_run(dir.path()).unwrap();
            assert_eq!(loaded.format, format);
            assert_eq!(loaded.runs, out.runs);
            assert_eq!(report_from_dir(dir.path()).unwrap(), out.report);
        }
    }

    #[test]
    fn baseline_is_always_run() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig { strategies: vec![StrategyKind::Sb], ..tiny(dir.path(), OutputFormat::Csv) };
        let out = run_experiment(&cfg).unwrap();
        let kinds: Vec<_> = out.runs.iter().map(|r| r.strategy).collect();
        assert_eq!(kinds, vec![StrategyKind::S0, StrategyKind::Sb]);
        assert_eq!(out.report.row(StrategyKind::S0).unwrap().mortality_index, Some(100.0));
    }

    #[test]
    fn every_file_starts_with_metadata() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny(dir.path(), OutputFormat::Csv);
        run_experiment(&cfg).unwrap();
        for path in [
            dir.path().join("0/generations.csv"),
            dir.path().join("b/final_consumption.csv"),
            dir.path().join("report.csv"),
            dir.path().join("effective_config.toml"),
        ] {
            let text = fs::read_to_string(&path).unwrap();
            let header = parse_header(&path, &text).unwrap();
            assert_eq!(header, FileHeader::for_config(&cfg));
        }
        let meta: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("meta.json")).unwrap()).unwrap();
        assert_eq!(meta["config_digest"], cfg.digest());
    }

    #[test]
    fn empty_directory_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_run(dir.path()), Err(Error::Format { .. })));
        assert!(matches!(load_run(&dir.path().join("missing")), Err(Error::Io { .. })));
    }
}
