//! The `farey` command line.
//!
//! Each subcommand runs one pipeline of `farey-sections`, writes its data to
//! a CSV or JSON file and reports a one-line summary.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_rational::Ratio;
use num_traits::ToPrimitive;
use serde::Serialize;

use farey_sections::congruence::{from_residue_pairs, CosetSubset, ResiduePairSet};
use farey_sections::est::{
    detect_overlap_depth, est_convergence, est_limit_section_mc, EstReport, EstRow, SectionEstimate,
};
use farey_sections::farey::Rational;
use farey_sections::section::{mc_return_cdf, McConfig, SectionReport, DEFAULT_MAX_STEPS};
use farey_sections::stats::{
    equidistribution_report, fmt_float, h_spacings, summarize_gaps, uniform_grid, EmpiricalCdf, GapReport, Histogram,
    DEFAULT_SHARDS,
};
use farey_sections::subset::{stream_subset, Subinterval, SubsetQuery};
use farey_sections::Error;

pub const DEFAULT_SEED: u64 = 20_240_517;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Lib(#[from] Error),
    #[error("cannot read subset file {}: {source}", path.display())]
    SubsetFile { path: PathBuf, source: io::Error },
    #[error("invalid argument: {0}")]
    Usage(String),
    #[error("cannot write {}: {source}", path.display())]
    Output { path: PathBuf, source: io::Error },
}

impl CliError {
    /// 2 for invalid input, 3 for an exceeded truncation budget, 1 for I/O failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Lib(Error::TruncationBudget { .. } | Error::Truncated { .. }) => 3,
            CliError::Lib(_) | CliError::SubsetFile { .. } | CliError::Usage(_) => 2,
            CliError::Output { .. } => 1,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    fn ext(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "farey", version, about = "Gap statistics of Farey fractions in congruence classes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Options shared by every subcommand.
#[derive(Args, Clone, Debug)]
pub struct Common {
    /// Modulus m; `density` takes a comma-separated list.
    #[arg(long, value_delimiter = ',')]
    pub m: Vec<u32>,
    /// Residue pairs for (a, q): den≡r, num≢0, den-coprime, all, or m:n1,n2;n1,n2;...
    #[arg(long, default_value = "all")]
    pub subset: String,
    /// Coset subset file (`m=<m>` header, one `e11 e12 e21 e22` matrix per line).
    #[arg(long, conflicts_with = "subset")]
    pub matrices: Option<PathBuf>,
    /// Output file; defaults to farey-<command>.<csv|json>.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Args, Clone, Debug)]
pub struct Order {
    /// Farey order Q.
    #[arg(long = "Q", visible_alias = "q")]
    pub order: i64,
    /// Closed subinterval `lo,hi` of [0,1].
    #[arg(long, default_value = "0,1")]
    pub interval: String,
}

#[derive(Args, Clone, Debug)]
pub struct Monte {
    #[arg(long, env = "FAREY_SEED", default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_MAX_STEPS)]
    pub max_steps: u64,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Revised gap CDF of F_M(Q).
    Gaps {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        order: Order,
        /// Grid points on (0, 99th percentile].
        #[arg(long, default_value_t = 200)]
        points: usize,
    },
    /// Smallest gap against the predicted repulsion gap.
    Repulsion {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        order: Order,
    },
    /// Joint CDF of h consecutive revised gaps along the diagonal.
    Hspacing {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        order: Order,
        #[arg(long, default_value_t = 2)]
        h: usize,
        #[arg(long, default_value_t = 200)]
        points: usize,
    },
    /// Frequencies of bq - ap over consecutive fractions.
    Numerators {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        order: Order,
    },
    /// Counts of F_M(Q) in equal subintervals of [0,1].
    Equidist {
        #[command(flatten)]
        common: Common,
        #[arg(long = "Q", visible_alias = "q")]
        order: i64,
        #[arg(long, default_value_t = 10)]
        bins: usize,
    },
    /// Monte Carlo distribution of the section return time.
    SectionMc {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        mc: Monte,
        #[arg(long, default_value_t = 1_000_000)]
        samples: u64,
        #[arg(long, default_value_t = 200)]
        points: usize,
    },
    /// Erdős–Szüsz–Turán measures over a grid of n, with the section estimate of the limit.
    Est {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        mc: Monte,
        #[arg(long)]
        alpha: String,
        #[arg(long)]
        c: String,
        /// Increasing list of n.
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<i64>,
        #[arg(long, default_value = "0,1")]
        interval: String,
        /// Overlap depth for the section estimate; detected at the largest n when omitted.
        #[arg(long = "K")]
        k: Option<usize>,
        /// Section Monte Carlo samples; 0 skips the estimate.
        #[arg(long, default_value_t = 100_000)]
        samples: u64,
    },
    /// Revised gap density tables, one file per modulus.
    Density {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        order: Order,
        #[arg(long, default_value_t = Histogram::DEFAULT_BINS)]
        bins: usize,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Gaps { .. } => "gaps",
            Command::Repulsion { .. } => "repulsion",
            Command::Hspacing { .. } => "hspacing",
            Command::Numerators { .. } => "numerators",
            Command::Equidist { .. } => "equidist",
            Command::SectionMc { .. } => "section-mc",
            Command::Est { .. } => "est",
            Command::Density { .. } => "density",
        }
    }

    pub fn common(&self) -> &Common {
        match self {
            Command::Gaps { common, .. }
            | Command::Repulsion { common, .. }
            | Command::Hspacing { common, .. }
            | Command::Numerators { common, .. }
            | Command::Equidist { common, .. }
            | Command::SectionMc { common, .. }
            | Command::Est { common, .. }
            | Command::Density { common, .. } => common,
        }
    }
}

/// What a successful run produced.
#[derive(Debug)]
pub struct Outcome {
    pub summary: String,
    pub files: Vec<PathBuf>,
}

/// Parses `p/q`, an integer, or a finite decimal such as `0.05`.
pub fn parse_rational(s: &str) -> CliResult<Rational> {
    let t = s.trim();
    let bad = || CliError::Usage(format!("`{s}` is not a rational number"));
    if let Some((int, frac)) = t.split_once('.') {
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) || frac.len() > 18 {
            return Err(bad());
        }
        let neg = int.starts_with('-');
        let whole: i64 = if int.is_empty() || int == "-" { 0 } else { int.parse().map_err(|_| bad())? };
        let scale = 10i64.checked_pow(frac.len() as u32).ok_or_else(bad)?;
        let f: i64 = frac.parse().map_err(|_| bad())?;
        let num = whole.checked_mul(scale).and_then(|w| if neg { w.checked_sub(f) } else { w.checked_add(f) });
        return Ok(Rational::new(num.ok_or_else(bad)?, scale));
    }
    Ratio::from_str(t).map_err(|_| bad())
}

pub fn parse_interval(s: &str) -> CliResult<Subinterval> {
    let (lo, hi) = s
        .split_once(',')
        .ok_or_else(|| CliError::Usage(format!("interval `{s}` must be `lo,hi`")))?;
    Ok(Subinterval::new(parse_rational(lo)?, parse_rational(hi)?)?)
}

fn read_matrices(path: &Path) -> CliResult<CosetSubset> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::SubsetFile { path: path.into(), source })?;
    Ok(CosetSubset::parse_text(&text)?)
}

/// The coset subsets selected by `--m` with `--subset` or `--matrices`, with a label for reports.
fn resolve_subsets(common: &Common) -> CliResult<Vec<(CosetSubset, String)>> {
    if let Some(path) = &common.matrices {
        let cosets = read_matrices(path)?;
        if common.m.iter().any(|&m| m != cosets.modulus()) || common.m.len() > 1 {
            return Err(CliError::Usage(format!("--m must match the modulus {} of the matrix file", cosets.modulus())));
        }
        return Ok(vec![(cosets, format!("file:{}", path.display()))]);
    }
    let moduli = if common.m.is_empty() { vec![1] } else { common.m.clone() };
    moduli
        .iter()
        .map(|&m| {
            let cosets = from_residue_pairs(&ResiduePairSet::parse(&common.subset, m)?)?;
            Ok((cosets, common.subset.clone()))
        })
        .collect()
}

fn single_subset(common: &Common) -> CliResult<(CosetSubset, String)> {
    let mut subsets = resolve_subsets(common)?;
    if subsets.len() != 1 {
        return Err(CliError::Usage("this command takes a single modulus".into()));
    }
    Ok(subsets.remove(0))
}

fn check_order(order: i64) -> CliResult<()> {
    if order < 1 {
        return Err(CliError::Usage(format!("Q must be positive, got {order}")));
    }
    Ok(())
}

fn output_path(common: &Common, command: &str, format: Format, suffix: &str) -> PathBuf {
    match &common.output {
        Some(p) if suffix.is_empty() => p.clone(),
        Some(p) => {
            let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let name = match p.extension() {
                Some(ext) => format!("{stem}{suffix}.{}", ext.to_string_lossy()),
                None => format!("{stem}{suffix}"),
            };
            p.with_file_name(name)
        }
        None => PathBuf::from(format!("farey-{command}{suffix}.{}", format.ext())),
    }
}

fn write_file(path: &Path, body: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> CliResult<()> {
    let wrap = |source| CliError::Output { path: path.into(), source };
    let mut w = BufWriter::new(File::create(path).map_err(wrap)?);
    body(&mut w).map_err(wrap)?;
    w.flush().map_err(wrap)
}

/// Rounds every float in a JSON tree to 12 significant digits.
fn round_floats(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Number(n) if n.is_f64() => {
            if let Some(x) = n.as_f64().and_then(|x| fmt_float(x).parse().ok()).and_then(serde_json::Number::from_f64) {
                *n = x;
            }
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(round_floats),
        serde_json::Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut tree = serde_json::to_value(value).map_err(|e| CliError::Output { path: path.into(), source: e.into() })?;
    round_floats(&mut tree);
    write_file(path, |w| {
        serde_json::to_writer_pretty(&mut *w, &tree)?;
        writeln!(w)
    })
}

fn cdf_points(cdf: &EmpiricalCdf, grid: &[f64]) -> Vec<[f64; 2]> {
    grid.iter().map(|&c| [c, cdf.eval(c)]).collect()
}

fn cdf_grid(cdf: &EmpiricalCdf, points: usize) -> CliResult<Vec<f64>> {
    if points == 0 {
        return Err(CliError::Usage("--points must be at least 1".into()));
    }
    let hi = cdf.quantile(0.99);
    Ok(uniform_grid(if hi > 0.0 { hi } else { 1.0 }, points))
}

#[derive(Serialize)]
struct CdfReport<'a> {
    #[serde(rename = "Q")]
    order: i64,
    m: u32,
    subset: &'a str,
    #[serde(rename = "N")]
    n: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    h: Option<usize>,
    cdf: Vec<[f64; 2]>,
}

#[derive(Serialize)]
struct NumeratorRow {
    c3: i64,
    count: u64,
    frequency: f64,
    exact: String,
}

#[derive(Serialize)]
struct NumeratorReport<'a> {
    #[serde(rename = "Q")]
    order: i64,
    m: u32,
    subset: &'a str,
    #[serde(rename = "N")]
    n: u64,
    frequencies: Vec<NumeratorRow>,
}

#[derive(Serialize)]
struct EquidistReport<'a> {
    #[serde(rename = "Q")]
    order: i64,
    m: u32,
    subset: &'a str,
    bins: usize,
    counts: &'a [u64],
    deviation: f64,
}

#[derive(Serialize)]
struct DensityReport<'a> {
    #[serde(rename = "Q")]
    order: i64,
    m: u32,
    subset: &'a str,
    #[serde(rename = "N")]
    n: u64,
    bins: Vec<[f64; 3]>,
}

/// Runs one command, inside a pool of `--threads` workers when given.
pub fn run(command: &Command) -> CliResult<Outcome> {
    match command.common().threads {
        Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Usage(e.to_string()))?
            .install(|| dispatch(command)),
        None => dispatch(command),
    }
}

fn dispatch(command: &Command) -> CliResult<Outcome> {
    let name = command.name();
    match command {
        Command::Gaps { common, order, points } => {
            let (cosets, label) = single_subset(common)?;
            check_order(order.order)?;
            let query = SubsetQuery::new(order.order, parse_interval(&order.interval)?, &cosets);
            let summary = summarize_gaps(&query, DEFAULT_SHARDS)?;
            let cdf = summary.revised_cdf()?;
            let grid = cdf_grid(&cdf, *points)?;
            let format = common.format.unwrap_or(Format::Csv);
            let path = output_path(common, name, format, "");
            match format {
                Format::Csv => write_file(&path, |w| cdf.write_csv(w, &grid))?,
                Format::Json => {
                    let report = CdfReport { order: order.order, m: cosets.modulus(), subset: &label, n: summary.gaps(), h: None, cdf: cdf_points(&cdf, &grid) };
                    write_json(&path, &report)?
                }
            }
            let summary_line = format!(
                "gaps Q={} m={} subset={label} N={} min_revised_gap={} -> {}",
                order.order,
                cosets.modulus(),
                summary.gaps(),
                fmt_float(cdf.min()),
                path.display()
            );
            Ok(Outcome { summary: summary_line, files: vec![path] })
        }
        Command::Repulsion { common, order } => {
            let (cosets, label) = single_subset(common)?;
            check_order(order.order)?;
            let query = SubsetQuery::new(order.order, parse_interval(&order.interval)?, &cosets);
            let summary = summarize_gaps(&query, DEFAULT_SHARDS)?;
            let report = GapReport::new(&summary, order.order, &cosets, &label)?;
            let format = common.format.unwrap_or(Format::Json);
            let path = output_path(common, name, format, "");
            let opt = |x: Option<f64>| x.map(fmt_float).unwrap_or_default();
            match format {
                Format::Json => write_json(&path, &report)?,
                Format::Csv => write_file(&path, |w| {
                    writeln!(w, "Q,m,subset,N,min_gap,min_revised_gap,predicted_repulsion,predicted_revised,deviation")?;
                    writeln!(
                        w,
                        "{},{},{},{},{},{},{},{},{}",
                        report.order,
                        report.m,
                        report.subset,
                        report.n,
                        fmt_float(report.min_gap),
                        fmt_float(report.min_revised_gap),
                        opt(report.predicted_repulsion),
                        opt(report.predicted_revised),
                        opt(report.deviation)
                    )
                })?,
            }
            let predicted = report.predicted_repulsion.map(fmt_float).unwrap_or_else(|| "none".into());
            let summary_line = format!(
                "repulsion Q={} m={} subset={label} min_gap={} predicted={predicted} min_revised_gap={} -> {}",
                order.order,
                report.m,
                fmt_float(report.min_gap),
                fmt_float(report.min_revised_gap),
                path.display()
            );
            Ok(Outcome { summary: summary_line, files: vec![path] })
        }
        Command::Hspacing { common, order, h, points } => {
            let (cosets, label) = single_subset(common)?;
            check_order(order.order)?;
            if *h == 0 {
                return Err(CliError::Usage("--h must be at least 1".into()));
            }
            let query = SubsetQuery::new(order.order, parse_interval(&order.interval)?, &cosets);
            let fractions = stream_subset(&query)?.map(|s| s.current());
            // The box [0, c]^h contains a vector iff its largest coordinate is at most c.
            let maxima: Vec<f64> = h_spacings(fractions, *h, order.order).map(|v| v.into_iter().fold(0.0, f64::max)).collect();
            let cdf = EmpiricalCdf::new(maxima).map_err(|_| CliError::Lib(Error::Empty("h-spacing vectors")))?;
            let grid = cdf_grid(&cdf, *points)?;
            let format = common.format.unwrap_or(Format::Csv);
            let path = output_path(common, name, format, "");
            match format {
                Format::Csv => write_file(&path, |w| cdf.write_csv(w, &grid))?,
                Format::Json => {
                    let report = CdfReport { order: order.order, m: cosets.modulus(), subset: &label, n: cdf.len() as u64, h: Some(*h), cdf: cdf_points(&cdf, &grid) };
                    write_json(&path, &report)?
                }
            }
            let summary_line =
                format!("hspacing Q={} m={} subset={label} h={h} vectors={} -> {}", order.order, cosets.modulus(), cdf.len(), path.display());
            Ok(Outcome { summary: summary_line, files: vec![path] })
        }
        Command::Numerators { common, order } => {
            let (cosets, label) = single_subset(common)?;
            check_order(order.order)?;
            let query = SubsetQuery::new(order.order, parse_interval(&order.interval)?, &cosets);
            let hist = summarize_gaps(&query, DEFAULT_SHARDS)?.numerators;
            if hist.total() == 0 {
                return Err(Error::Empty("gap records").into());
            }
            let format = common.format.unwrap_or(Format::Csv);
            let path = output_path(common, name, format, "");
            match format {
                Format::Csv => write_file(&path, |w| hist.write_csv(w))?,
                Format::Json => {
                    let frequencies = hist
                        .counts()
                        .iter()
                        .map(|(&c3, &count)| {
                            let f = hist.frequency(c3);
                            NumeratorRow { c3, count, frequency: f.to_f64().unwrap_or(f64::NAN), exact: f.to_string() }
                        })
                        .collect();
                    let report = NumeratorReport { order: order.order, m: cosets.modulus(), subset: &label, n: hist.total(), frequencies };
                    write_json(&path, &report)?
                }
            }
            let summary_line = format!(
                "numerators Q={} m={} subset={label} N={} distinct={} -> {}",
                order.order,
                cosets.modulus(),
                hist.total(),
                hist.counts().len(),
                path.display()
            );
            Ok(Outcome { summary: summary_line, files: vec![path] })
        }
        Command::Equidist { common, order, bins } => {
            let (cosets, label) = single_subset(common)?;
            check_order(*order)?;
            let report = equidistribution_report(*order, &cosets, *bins)?;
            let format = common.format.unwrap_or(Format::Csv);
            let path = output_path(common, name, format, "");
            match format {
                Format::Csv => write_file(&path, |w| {
                    writeln!(w, "bin_lo,bin_hi,count")?;
                    for (i, c) in report.counts.iter().enumerate() {
                        writeln!(w, "{},{},{c}", Ratio::new(i as i64, *bins as i64), Ratio::new(i as i64 + 1, *bins as i64))?;
                    }
                    Ok(())
                })?,
                Format::Json => {
                    let out = EquidistReport { order: *order, m: cosets.modulus(), subset: &label, bins: *bins, counts: &report.counts, deviation: report.deviation };
                    write_json(&path, &out)?
                }
            }
            let summary_line = format!(
                "equidist Q={order} m={} subset={label} bins={bins} deviation={} -> {}",
                cosets.modulus(),
                fmt_float(report.deviation),
                path.display()
            );
            Ok(Outcome { summary: summary_line, files: vec![path] })
        }
        Command::SectionMc { common, mc, samples, points } => {
            let (cosets, label) = single_subset(common)?;
            let cfg = McConfig { samples: *samples, seed: mc.seed, max_steps: mc.max_steps };
            let run = mc_return_cdf(&cosets, &cfg)?;
            let grid = cdf_grid(&run.cdf, *points)?;
            let report = SectionReport::new(&cosets, &label, &run, &grid);
            let format = common.format.unwrap_or(Format::Csv);
            let path = output_path(common, name, format, "");
            match format {
                Format::Csv => write_file(&path, |w| run.cdf.write_csv(w, &grid))?,
                Format::Json => write_json(&path, &report)?,
            }
            let summary_line = format!(
                "section-mc m={} subset={label} samples={} truncated={} support_threshold={} -> {}",
                cosets.modulus(),
                run.samples,
                run.truncated,
                fmt_float(report.support_threshold),
                path.display()
            );
            Ok(Outcome { summary: summary_line, files: vec![path] })
        }
        Command::Est { common, mc, alpha, c, n, interval, k, samples } => {
            let (cosets, label) = single_subset(common)?;
            let (alpha_q, c_q) = (parse_rational(alpha)?, parse_rational(c)?);
            let interval = parse_interval(interval)?;
            let conv = est_convergence(alpha_q, c_q, &cosets, interval, n)?;
            let largest = n[n.len() - 1];
            let depth = match k {
                Some(k) => *k,
                None => detect_overlap_depth(alpha_q, c_q, &cosets, largest)?,
            };
            let section: Option<SectionEstimate> = if *samples > 0 {
                let cfg = McConfig { samples: *samples, seed: mc.seed, max_steps: mc.max_steps };
                let (a, cf) = (alpha_q.to_f64().unwrap_or(f64::NAN), c_q.to_f64().unwrap_or(f64::NAN));
                Some(est_limit_section_mc(a, cf, &cosets, depth, &cfg)?)
            } else {
                None
            };
            let format = common.format.unwrap_or(Format::Csv);
            let path = output_path(common, name, format, "");
            match format {
                Format::Csv => write_file(&path, |w| conv.write_csv(w))?,
                Format::Json => {
                    let report = EstReport {
                        alpha: alpha_q.to_string(),
                        c: c_q.to_string(),
                        m: cosets.modulus(),
                        subset: label.clone(),
                        interval: [interval.lo().to_string(), interval.hi().to_string()],
                        table: EstRow::table(&conv),
                        limit_estimate: conv.limit,
                        k_detected: depth,
                        section_mc_estimate: section.map(|s| s.estimate),
                        mc_stderr: section.map(|s| s.stderr),
                    };
                    write_json(&path, &report)?
                }
            }
            let mc_text = section
                .map(|s| format!(" section_mc={} stderr={}", fmt_float(s.estimate), fmt_float(s.stderr)))
                .unwrap_or_default();
            let summary_line = format!(
                "est alpha={alpha_q} c={c_q} m={} subset={label} limit={} K={depth}{mc_text} -> {}",
                cosets.modulus(),
                fmt_float(conv.limit),
                path.display()
            );
            Ok(Outcome { summary: summary_line, files: vec![path] })
        }
        Command::Density { common, order, bins } => {
            check_order(order.order)?;
            let interval = parse_interval(&order.interval)?;
            let subsets = resolve_subsets(common)?;
            let format = common.format.unwrap_or(Format::Csv);
            let mut files = vec![];
            let mut parts = vec![];
            for (cosets, label) in &subsets {
                let m = cosets.modulus();
                let summary = summarize_gaps(&SubsetQuery::new(order.order, interval, cosets), DEFAULT_SHARDS)?;
                let cdf = summary.revised_cdf()?;
                let mut hi = cdf.quantile(0.99);
                if hi <= 0.0 {
                    hi = 1.0;
                }
                let hist = Histogram::from_cdf(&cdf, *bins, 0.0, hi, farey_sections::stats::Normalization::Density)?;
                let path = output_path(common, name, format, &format!("-m{m}"));
                match format {
                    Format::Csv => write_file(&path, |w| hist.write_csv(w))?,
                    Format::Json => {
                        let rows = hist.edges().windows(2).zip(hist.heights()).map(|(e, d)| [e[0], e[1], d]).collect();
                        write_json(&path, &DensityReport { order: order.order, m, subset: label, n: summary.gaps(), bins: rows })?
                    }
                }
                parts.push(format!("m={m}:N={}", summary.gaps()));
                files.push(path);
            }
            let shown: Vec<String> = files.iter().map(|p| p.display().to_string()).collect();
            let summary_line = format!("density Q={} {} -> {}", order.order, parts.join(" "), shown.join(", "));
            Ok(Outcome { summary: summary_line, files })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rationals() {
        assert_eq!(parse_rational("0.05").unwrap(), Rational::new(1, 20));
        assert_eq!(parse_rational("1/2").unwrap(), Rational::new(1, 2));
        assert_eq!(parse_rational("2").unwrap(), Rational::from_integer(2));
        assert_eq!(parse_rational(".5").unwrap(), Rational::new(1, 2));
        assert_eq!(parse_rational("-1.25").unwrap(), Rational::new(-5, 4));
        for bad in ["", "x", "1.", "1/0", "1.2.3", "1e5"] {
            assert!(parse_rational(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn intervals() {
        let i = parse_interval("0, 1/2").unwrap();
        assert_eq!((i.lo(), i.hi()), (Rational::from_integer(0), Rational::new(1, 2)));
        assert!(parse_interval("1/2").is_err());
        assert!(parse_interval("0.7,0.2").is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Lib(Error::TruncationBudget { truncated: 5, samples: 10 }).exit_code(), 3);
        assert_eq!(CliError::Lib(Error::Validation("x".into())).exit_code(), 2);
        assert_eq!(CliError::Usage("x".into()).exit_code(), 2);
        let io = || io::Error::other("x");
        assert_eq!(CliError::SubsetFile { path: "a".into(), source: io() }.exit_code(), 2);
        assert_eq!(CliError::Output { path: "a".into(), source: io() }.exit_code(), 1);
    }

    #[test]
    fn json_floats_have_twelve_digits() {
        let mut v = serde_json::json!({"x": 0.11568701919968968, "n": 7, "xs": [1.0, 2.0 / 3.0]});
        round_floats(&mut v);
        assert_eq!(v.to_string(), r#"{"x":0.1156870192,"n":7,"xs":[1.0,0.666666666667]}"#);
    }

    #[test]
    fn suffixed_outputs() {
        let mut common = Common { m: vec![3], subset: "all".into(), matrices: None, output: None, format: None, threads: None };
        assert_eq!(output_path(&common, "density", Format::Csv, "-m3"), PathBuf::from("farey-density-m3.csv"));
        common.output = Some(PathBuf::from("out/dens.csv"));
        assert_eq!(output_path(&common, "density", Format::Csv, "-m11"), PathBuf::from("out/dens-m11.csv"));
        assert_eq!(output_path(&common, "gaps", Format::Csv, ""), PathBuf::from("out/dens.csv"));
    }
}
