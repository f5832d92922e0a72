use std::collections::HashMap;
use std::fmt::Write as _;

use chrono::NaiveDate;
use nhpg_core::series::{describe, format_float, read_csv_file, DatedSeries, DescriptiveStats};
use nhpg_core::stats::{battery, subseries_report, BatteryConfig, TestOutcome, BATTERY};
use nhpg_core::StatePath;

use crate::config::RunConfig;
use crate::fit::{load_price, transform};
use crate::{Artifacts, Failure};

pub const TESTS_CSV: &str = "tests.csv";
pub const DESCRIPTIVE_CSV: &str = "descriptive.csv";
pub const MARKDOWN: &str = "tests.md";

/// Statistics for one series or one state's subseries.
#[derive(Debug, Clone)]
pub struct Row {
    pub series: String,
    /// `all`, `state1` or `state2`.
    pub subset: String,
    pub n: usize,
    pub stats: Result<DescriptiveStats, String>,
    pub tests: Vec<TestOutcome>,
}

pub struct TestsOutput {
    pub artifacts: Artifacts,
    pub full: Vec<Row>,
    pub subseries: Vec<Row>,
    pub warnings: Vec<String>,
}

fn read_assignment(cfg: &RunConfig) -> Result<Option<HashMap<NaiveDate, u8>>, Failure> {
    let Some(path) = &cfg.tests.assignment else {
        return Ok(None);
    };
    if !path.is_file() {
        return Err(Failure::Ingest(format!("assignment file {} does not exist", path.display())));
    }
    let column = read_csv_file(path)
        .map_err(Failure::ingest)?
        .into_iter()
        .find(|c| c.name() == "assigned_state")
        .ok_or_else(|| Failure::Ingest(format!("{}: no assigned_state column", path.display())))?;
    let mut map = HashMap::new();
    for (d, v) in column.dates().iter().zip(column.values()) {
        let s = match *v {
            1.0 => 1,
            2.0 => 2,
            _ => return Err(Failure::Ingest(format!("{}: state {v} on {d} is not 1 or 2", path.display()))),
        };
        map.insert(*d, s);
    }
    Ok(Some(map))
}

fn full_row(series: &DatedSeries, config: &BatteryConfig) -> Row {
    Row {
        series: series.name().to_string(),
        subset: "all".into(),
        n: series.len(),
        stats: describe(series.values()).map_err(|e| e.to_string()),
        tests: battery(series.values(), config),
    }
}

fn subseries_rows(
    series: &DatedSeries,
    assignment: &HashMap<NaiveDate, u8>,
    config: &BatteryConfig,
    warnings: &mut Vec<String>,
) -> Result<Vec<Row>, Failure> {
    let matched = series.select(|i| assignment.contains_key(&series.dates()[i]));
    if matched.is_empty() {
        return Err(Failure::Ingest(format!("assignment shares no dates with the {} series", series.name())));
    }
    let labels = matched.dates().iter().map(|d| assignment[d]).collect();
    let path = StatePath::new(labels).map_err(Failure::ingest)?;
    let report = subseries_report(&matched, &path, config).map_err(Failure::numerical)?;
    for w in report.warnings {
        if !warnings.contains(&w) {
            warnings.push(w);
        }
    }
    Ok(report
        .blocks
        .into_iter()
        .map(|b| Row {
            series: series.name().to_string(),
            subset: format!("state{}", b.state),
            n: b.n,
            stats: b.stats,
            tests: b.tests,
        })
        .collect())
}

pub fn run(cfg: &RunConfig) -> Result<TestsOutput, Failure> {
    cfg.validate()?;
    cfg.check_inputs(false)?;
    let config = cfg.tests.battery();
    let assignment = read_assignment(cfg)?;
    let (start, end) = cfg.window()?;
    let price = load_price(cfg)?.window(start, end);
    let mut warnings = Vec::new();
    let mut full = Vec::new();
    let mut subseries = Vec::new();
    for t in cfg.tests.series() {
        let s = transform(&price, t)?;
        full.push(full_row(&s, &config));
        if let Some(a) = &assignment {
            subseries.extend(subseries_rows(&s, a, &config, &mut warnings)?);
        }
    }
    let rows: Vec<&Row> = full.iter().chain(&subseries).collect();
    let mut artifacts = Artifacts::default();
    artifacts.add(TESTS_CSV, tests_csv(&rows)?);
    artifacts.add(DESCRIPTIVE_CSV, descriptive_csv(&rows)?);
    artifacts.add(MARKDOWN, markdown(&full, &subseries, &warnings).into_bytes());
    Ok(TestsOutput {
        artifacts,
        full,
        subseries,
        warnings,
    })
}

fn tests_csv(rows: &[&Row]) -> Result<Vec<u8>, Failure> {
    let io = |e: csv::Error| Failure::Io(e.to_string());
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "series_name", "subset", "test", "statistic", "p_value", "bracketed", "lags", "reject_5pct", "note",
    ])
    .map_err(io)?;
    for row in rows {
        for t in &row.tests {
            let rec = match &t.result {
                Ok(r) => [
                    row.series.clone(),
                    row.subset.clone(),
                    t.test.to_string(),
                    format_float(r.statistic),
                    format_float(r.p_value),
                    r.bracket.map(|b| b.symbol().to_string()).unwrap_or_default(),
                    r.lags.map(|l| l.to_string()).unwrap_or_default(),
                    r.reject_5pct.to_string(),
                    r.detail.clone().unwrap_or_default(),
                ],
                Err(e) => [
                    row.series.clone(),
                    row.subset.clone(),
                    t.test.to_string(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    e.clone(),
                ],
            };
            w.write_record(&rec).map_err(io)?;
        }
    }
    w.into_inner().map_err(|e| Failure::Io(e.to_string()))
}

fn descriptive_csv(rows: &[&Row]) -> Result<Vec<u8>, Failure> {
    let io = |e: csv::Error| Failure::Io(e.to_string());
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["series_name", "subset", "n", "mean", "variance", "kurtosis", "skewness", "note"])
        .map_err(io)?;
    for row in rows {
        let mut rec = vec![row.series.clone(), row.subset.clone(), row.n.to_string()];
        match &row.stats {
            Ok(s) => {
                rec.extend([s.mean, s.variance, s.kurtosis, s.skewness].map(format_float));
                rec.push(String::new());
            }
            Err(e) => {
                rec.extend(std::iter::repeat_n(String::new(), 4));
                rec.push(e.clone());
            }
        }
        w.write_record(&rec).map_err(io)?;
    }
    w.into_inner().map_err(|e| Failure::Io(e.to_string()))
}

fn number(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e4).contains(&a) {
        format!("{v:.2e}")
    } else {
        format!("{v:.4}")
    }
}

fn table(out: &mut String, rows: &[Row]) {
    out.push_str("| Series | Subset | n | Mean | Variance | Kurtosis | Skewness |");
    for t in BATTERY {
        let _ = write!(out, " {t} |");
    }
    out.push('\n');
    out.push_str("|---|---|---:|---:|---:|---:|---:|");
    out.push_str(&"---:|".repeat(BATTERY.len()));
    out.push('\n');
    let mut previous = "";
    for row in rows {
        let name = if row.series == previous { "" } else { row.series.as_str() };
        previous = &row.series;
        let _ = write!(out, "| {name} | {} | {} |", row.subset, row.n);
        match &row.stats {
            Ok(s) => {
                for v in [s.mean, s.variance, s.kurtosis, s.skewness] {
                    let _ = write!(out, " {} |", number(v));
                }
            }
            Err(_) => out.push_str(" n/a | n/a | n/a | n/a |"),
        }
        for t in &row.tests {
            match &t.result {
                Ok(r) => {
                    let _ = write!(out, " {} |", r.p_value_display());
                }
                Err(_) => out.push_str(" n/a |"),
            }
        }
        out.push('\n');
    }
}

/// Descriptive statistics and test p-values, one line per series, then two
/// lines per series (state 1, state 2) for the subseries.
pub fn markdown(full: &[Row], subseries: &[Row], warnings: &[String]) -> String {
    let mut out = String::from("## Full series\n\n");
    table(&mut out, full);
    if !subseries.is_empty() {
        out.push_str("\n## Subseries by hidden state\n\n");
        table(&mut out, subseries);
    }
    if !warnings.is_empty() {
        out.push('\n');
        for w in warnings {
            let _ = writeln!(out, "- note: {w}");
        }
    }
    out
}
