//! Command-line interface: `test`, `diagnose` and `simulate`.
//!
//! Exit codes: 0 accept (or success), 3 reject, 1 error, 2 usage.

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Parser, Subcommand, ValueEnum};
use rand::RngCore;

use crate::error::{HdnormError, Result};
use crate::harness::{run_experiment, summarize, Experiment};
use crate::moments::DataMatrix;
use crate::montecarlo::{run_test, McSettings, Selection, TestReport};
use crate::normal;
use crate::radii::{radii, RadialSummary};
use crate::streams;

pub const EXIT_ACCEPT: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_REJECT: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "hdnorm",
    version,
    about = "High-dimensional test of multivariate normality based on radii"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Test a CSV data set (rows = observations) for multivariate normality.
    Test(TestArgs),
    /// Write radii, QQ and interpoint-distance data for plotting.
    Diagnose(DiagnoseArgs),
    /// Run a simulation experiment described by a JSON file.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Json,
    Csv,
}

#[derive(Debug, clap::Args)]
pub struct TestArgs {
    pub file: PathBuf,
    #[arg(long, default_value_t = 0.05, value_parser = parse_alpha)]
    pub alpha: f64,
    /// Monte-Carlo replications for the range-type null law.
    #[arg(long, default_value_t = 10_000)]
    pub mc: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Skip the first line of the input.
    #[arg(long)]
    pub header: bool,
    /// Report destination; printed to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Json)]
    pub format: OutputFormat,
    /// composite | range | iqr | quasi:<q> | squared
    #[arg(long, default_value = "composite", value_parser = parse_selection)]
    pub stats: Selection,
}

#[derive(Debug, clap::Args)]
pub struct DiagnoseArgs {
    pub file: PathBuf,
    /// Largest number of interpoint distances written; larger sets are
    /// reservoir-sampled.
    #[arg(long, default_value_t = 1_000_000)]
    pub max_pairs: usize,
    #[arg(long)]
    pub header: bool,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Seed for the reservoir sample of distances.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, clap::Args)]
pub struct SimulateArgs {
    pub spec: PathBuf,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

fn parse_alpha(s: &str) -> std::result::Result<f64, String> {
    let a: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if a > 0.0 && a < 1.0 {
        Ok(a)
    } else {
        Err(format!("alpha must lie in (0, 1), got {a}"))
    }
}

fn parse_selection(s: &str) -> std::result::Result<Selection, String> {
    Selection::from_str(s)
}

impl FromStr for Selection {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "composite" => Ok(Self::Composite),
            "range" => Ok(Self::Range),
            "iqr" => Ok(Self::Iqr),
            "squared" => Ok(Self::Squared),
            other => {
                let q = other
                    .strip_prefix("quasi:")
                    .ok_or_else(|| {
                        format!("unknown statistic '{other}'; expected composite, range, iqr, quasi:<q> or squared")
                    })?
                    .parse::<usize>()
                    .map_err(|_| format!("'{other}' needs a positive integer order, e.g. quasi:2"))?;
                if q == 0 {
                    return Err("quasi-range order must be at least 1".into());
                }
                Ok(Self::QuasiRange { q })
            }
        }
    }
}

/// Reads a comma-separated numeric matrix, one observation per line.
pub fn read_csv_matrix(path: &Path, header: bool) -> Result<DataMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| HdnormError::Io(format!("{}: {e}", path.display())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| HdnormError::Parse(e.to_string()))?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(j, cell)| {
                cell.parse::<f64>().map_err(|_| {
                    HdnormError::Parse(format!(
                        "data row {}, column {}: cannot parse '{cell}' as a number",
                        i + 1,
                        j + 1
                    ))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    DataMatrix::from_rows(&rows)
}

fn describe(err: &HdnormError) -> String {
    match err {
        HdnormError::NonFinite { row, col } => format!(
            "non-finite value at data row {}, column {}",
            row + 1,
            col + 1
        ),
        HdnormError::RaggedRows {
            row,
            expected,
            found,
        } => format!(
            "data row {} has {found} columns, expected {expected}",
            row + 1
        ),
        other => other.to_string(),
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_ACCEPT };
        }
    };
    let outcome = match &cli.command {
        Command::Test(a) => cmd_test(a),
        Command::Diagnose(a) => cmd_diagnose(a).map(|()| EXIT_ACCEPT),
        Command::Simulate(a) => cmd_simulate(a).map(|()| EXIT_ACCEPT),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            EXIT_ERROR
        }
    }
}

pub fn run() -> i32 {
    run_from(std::env::args_os())
}

fn summary_line(report: &TestReport) -> String {
    let verdict = if report.reject { "REJECT" } else { "ACCEPT" };
    let mut parts = vec![format!(
        "{verdict} normality at alpha={} (n={}, d={}, delta_hat={:.6})",
        report.settings.alpha, report.n, report.d, report.delta_hat
    )];
    let mut push = |name: &str, d: &Option<crate::montecarlo::Decision>| {
        if let Some(d) = d {
            parts.push(format!(
                "{name}={:.4} in [{:.4}, {:.4}]{}",
                d.statistic.value,
                d.lower,
                d.upper,
                if d.reject { " reject" } else { "" }
            ));
        }
    };
    push("range", &report.range);
    push("iqr", &report.iqr);
    push("quasi_range", &report.quasi_range);
    push("squared_range", &report.squared_range);
    push("squared_iqr", &report.squared_iqr);
    parts.join("; ")
}

fn report_csv(report: &TestReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| HdnormError::Io(e.to_string());
    w.write_record(["statistic", "value", "lower", "upper", "level", "reject"])
        .map_err(err)?;
    for (name, d) in [
        ("range", &report.range),
        ("iqr", &report.iqr),
        ("quasi_range", &report.quasi_range),
        ("squared_range", &report.squared_range),
        ("squared_iqr", &report.squared_iqr),
    ] {
        if let Some(d) = d {
            w.write_record([
                name.to_string(),
                format!("{:.16e}", d.statistic.value),
                format!("{:.16e}", d.lower),
                format!("{:.16e}", d.upper),
                format!("{}", d.level),
                d.reject.to_string(),
            ])
            .map_err(err)?;
        }
    }
    w.write_record([
        "overall".to_string(),
        String::new(),
        String::new(),
        String::new(),
        format!("{}", report.settings.alpha),
        report.reject.to_string(),
    ])
    .map_err(err)?;
    String::from_utf8(w.into_inner().map_err(|e| HdnormError::Io(e.to_string()))?)
        .map_err(|e| HdnormError::Io(e.to_string()))
}

fn cmd_test(args: &TestArgs) -> Result<i32> {
    let x = read_csv_matrix(&args.file, args.header)?;
    let settings = McSettings {
        replications: args.mc,
        seed: args.seed,
        alpha: args.alpha,
    };
    let report = run_test(&x, args.stats, &settings, None)?;
    let body = match args.format {
        OutputFormat::Json => {
            let mut s = serde_json::to_string_pretty(&report)
                .map_err(|e| HdnormError::Io(e.to_string()))?;
            s.push('\n');
            s
        }
        OutputFormat::Csv => report_csv(&report)?,
    };
    let line = summary_line(&report);
    match &args.out {
        Some(path) => {
            fs::write(path, body)?;
            println!("{line}");
        }
        None => {
            std::io::stdout().write_all(body.as_bytes())?;
            eprintln!("{line}");
        }
    }
    Ok(if report.reject { EXIT_REJECT } else { EXIT_ACCEPT })
}

fn write_csv(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| HdnormError::Io(e.to_string()))?;
    let err = |e: csv::Error| HdnormError::Io(e.to_string());
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(&row).map_err(err)?;
    }
    w.flush()?;
    Ok(())
}

fn f17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Hazen plotting positions `(i − 0.5)/n`, `i = 1..n`.
pub fn plotting_positions(n: usize) -> Vec<f64> {
    (1..=n).map(|i| (i as f64 - 0.5) / n as f64).collect()
}

/// Index pairs `(i, j)`, `i < j`, in lexicographic order: all of them when
/// there are at most `max_pairs`, otherwise a uniform reservoir sample.
pub fn select_pairs(n: usize, max_pairs: usize, seed: u64) -> Vec<(usize, usize)> {
    let all = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j)));
    let total = n * n.saturating_sub(1) / 2;
    if total <= max_pairs {
        return all.collect();
    }
    let mut rng = streams::stream(seed, 0);
    let mut reservoir: Vec<(usize, usize)> = Vec::with_capacity(max_pairs);
    for (seen, pair) in all.enumerate() {
        if seen < max_pairs {
            reservoir.push(pair);
        } else {
            let k = (rng.next_u64() % (seen as u64 + 1)) as usize;
            if k < max_pairs {
                reservoir[k] = pair;
            }
        }
    }
    reservoir.sort_unstable();
    reservoir
}

fn cmd_diagnose(args: &DiagnoseArgs) -> Result<()> {
    let x = read_csv_matrix(&args.file, args.header)?;
    fs::create_dir_all(&args.out_dir)?;
    let n = x.n();

    let mut sorted = radii(&x);
    sorted.sort_by(f64::total_cmp);
    write_csv(
        &args.out_dir.join("radii.csv"),
        &["rank", "radius"],
        sorted
            .iter()
            .enumerate()
            .map(|(i, r)| vec![(i + 1).to_string(), f17(*r)]),
    )?;

    match RadialSummary::new(&x) {
        Ok(summary) => {
            let mut v = summary.standardized.clone();
            v.sort_by(f64::total_cmp);
            let positions = plotting_positions(n);
            write_csv(
                &args.out_dir.join("qq.csv"),
                &["rank", "plotting_position", "normal_quantile", "standardized_radius"],
                positions.iter().zip(&v).enumerate().map(|(i, (p, vi))| {
                    vec![
                        (i + 1).to_string(),
                        f17(*p),
                        f17(normal::quantile(*p)),
                        f17(*vi),
                    ]
                }),
            )?;
        }
        Err(e) => eprintln!("warning: skipping qq.csv: {}", describe(&e)),
    }

    let values = x.values();
    let pairs = select_pairs(n, args.max_pairs, args.seed);
    write_csv(
        &args.out_dir.join("distances.csv"),
        &["i", "j", "distance"],
        pairs.iter().map(|&(i, j)| {
            let dist = (values.row(i) - values.row(j)).norm();
            vec![(i + 1).to_string(), (j + 1).to_string(), f17(dist)]
        }),
    )?;
    println!(
        "wrote radii.csv, qq.csv and distances.csv ({} pairs) to {}",
        pairs.len(),
        args.out_dir.display()
    );
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let text = fs::read_to_string(&args.spec)
        .map_err(|e| HdnormError::Io(format!("{}: {e}", args.spec.display())))?;
    let experiment = Experiment::from_json(&text)?;
    if experiment.scenarios().is_empty() {
        return Err(HdnormError::InvalidExperiment("empty grid".into()));
    }
    let results = run_experiment(&experiment)?;
    let summary = summarize(&results)?;
    fs::create_dir_all(&args.out)?;
    let csv_path = args.out.join(format!("{}.csv", experiment.name));
    let jsonl_path = args.out.join(format!("{}.jsonl", experiment.name));
    fs::write(&csv_path, &summary.csv)?;
    fs::write(&jsonl_path, &summary.jsonl)?;
    let failures: usize = results.iter().map(|c| c.failures).sum();
    println!(
        "{}: {} cells, {} failed replications; wrote {} and {}",
        experiment.name,
        results.len(),
        failures,
        csv_path.display(),
        jsonl_path.display()
    );
    Ok(())
}
